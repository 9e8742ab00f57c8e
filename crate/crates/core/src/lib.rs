//! Spiking convolutional networks trained with unsupervised STDP.
//!
//! Images become latency-coded ON/OFF spike trains ([`encode`]), pass through
//! spiking convolution and pooling layers ([`layer`], [`network`]) and end up
//! as feature vectors for the classifier heads in [`heads`]. [`train`] holds
//! the training loops and experiments, [`recon`] maps learned kernels back
//! into input space.

mod codec;
pub mod encode;
pub mod error;
pub mod heads;
pub mod layer;
pub mod network;
pub mod recon;
pub mod rng;
pub mod spikes;
pub mod train;

pub use error::{Error, Result};
pub use spikes::{SpikeEvent, SpikeShape, SpikeTensor};
