//! Spiking convolution, inhibition, plasticity and pooling.

pub mod conv;
pub mod inhibition;
pub mod kernel;
pub mod pool;
pub mod potential;
pub mod stdp;

pub use conv::{ConvLayer, ConvOutput, TimedSpike, TrainStep};
pub use inhibition::{fire_and_inhibit, stdp_competition, FiredNeuron, InhibitionConfig, LayerState};
pub use kernel::{ConvKernel, WeightInit};
pub use pool::{count_spikes, global_max_potential, max_pool};
pub use potential::{conv_accumulate, PotentialTensor};
pub use stdp::{double_learning_rates, homeostasis_gate, stdp_update, HomeostasisGate};
