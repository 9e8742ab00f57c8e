//! Classifier heads over extracted features.

pub mod fcn;
pub mod features;
pub mod rstdp;

pub use fcn::{Cost, FcnHead, FcnParams};
pub use features::FeatureMatrix;
pub use rstdp::{draw_dropout_mask, shift_scale_init, HitMissTracker, Outcome, RatioMode, RstdpHead, RstdpRates, WarmStart};

/// Head checkpoints share the kernel container magic, followed by a type tag.
pub const HEAD_MAGIC: &[u8; 4] = b"SKRN";
pub const HEAD_VERSION: u32 = 1;

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
