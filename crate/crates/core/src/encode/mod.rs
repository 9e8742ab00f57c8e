//! Turning images and event recordings into spike tensors.

pub mod aer;
pub mod cache;
pub mod dog;
pub mod idx;
pub mod latency;

pub use aer::{load_aer_recording, AerConfig, AerEvent, SaccadePhase, SaccadeTable};
pub use dog::{dog_filter, make_dog_kernel, ContrastMap, DogKernel, GrayImage, Polarity};
pub use idx::{load_idx_images, LabeledImage};
pub use latency::{latency_encode, ImageEncoder, LatencyParams};
