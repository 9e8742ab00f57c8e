//! Training loops, convergence monitors and the diagnostic experiments.

pub mod conv;
pub mod forget;
pub mod monitor;
pub mod noise;
pub mod rstdp;

pub use conv::{train_conv_layer, train_network, LayerPhase, LayerReport, TrainPlan};
pub use forget::{curve_csv, run_forgetting, AccuracyPoint, ForgetPlan, ForgetReport, REHEARSAL_FRACTIONS};
pub use monitor::{convergence_factor, saturation, weight_delta, MonitorSample, MonitorSeries, StopRule};
pub use noise::{run_noise_demo, EpochStats, NoiseDemoConfig, NoiseDemoRun};
pub use rstdp::{head_from_fcn, rstdp_accuracy, run_rstdp, RstdpRun, RstdpRunConfig};
