//! Weight monitors and stopping rules for unsupervised training.

use crate::error::{Error, Result};
use crate::layer::ConvKernel;

pub const DEFAULT_MONITOR_STRIDE: usize = 150;
pub const CONVERGENCE_BAND: (f64, f64) = (0.01, 0.02);
pub const JUMP_FACTOR: f64 = 3.0;
pub const JUMP_TRAILING: usize = 10;

/// Mean of `prev - curr` over all weights (signed).
pub fn weight_delta(prev: &ConvKernel, curr: &ConvKernel) -> Result<f64> {
    if prev.shape() != curr.shape() {
        return Err(Error::shape(format!(
            "kernel shapes {:?} and {:?} differ",
            prev.shape(),
            curr.shape()
        )));
    }
    let n = prev.weights.len().max(1) as f64;
    Ok(prev.weights.iter().zip(&curr.weights).map(|(p, c)| p - c).sum::<f64>() / n)
}

/// Mean of `w (1 - w)` over all weights; 0 when every weight is saturated.
pub fn convergence_factor(kernel: &ConvKernel) -> f64 {
    let n = kernel.weights.len().max(1) as f64;
    kernel.weights.iter().map(|w| w * (1.0 - w)).sum::<f64>() / n
}

/// Share of weights outside `(0.1, 0.9)`.
pub fn saturation(kernel: &ConvKernel) -> f64 {
    let n = kernel.weights.len().max(1) as f64;
    kernel.weights.iter().filter(|&&w| w <= 0.1 || w >= 0.9).count() as f64 / n
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorSample {
    /// 1-based sample number.
    pub sample: usize,
    pub images: usize,
    pub weight_delta: f64,
    pub convergence_factor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorSeries {
    pub stride: usize,
    pub samples: Vec<MonitorSample>,
}

impl MonitorSeries {
    pub fn new(stride: usize) -> Self {
        MonitorSeries {
            stride,
            samples: Vec::new(),
        }
    }

    /// CSV with header `sample,images,weight_delta,convergence_factor`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,images,weight_delta,convergence_factor\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.sample, s.images, s.weight_delta, s.convergence_factor
            ));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Train on the planned number of images.
    FixedImages,
    /// Stop at the first sample whose convergence factor lies in `[low, high]`.
    ConvergenceBand { low: f64, high: f64 },
    /// Stop at the first sample whose `|weight_delta|` exceeds `factor` times
    /// the median `|weight_delta|` of the preceding `trailing` samples.
    WeightDeltaJump { factor: f64, trailing: usize },
}

impl StopRule {
    pub fn convergence_band() -> Self {
        StopRule::ConvergenceBand {
            low: CONVERGENCE_BAND.0,
            high: CONVERGENCE_BAND.1,
        }
    }

    pub fn weight_delta_jump() -> Self {
        StopRule::WeightDeltaJump {
            factor: JUMP_FACTOR,
            trailing: JUMP_TRAILING,
        }
    }

    /// Whether the latest sample of `series` triggers a stop.
    pub fn triggered(&self, series: &MonitorSeries) -> bool {
        let Some(last) = series.samples.last() else {
            return false;
        };
        match *self {
            StopRule::FixedImages => false,
            StopRule::ConvergenceBand { low, high } => (low..=high).contains(&last.convergence_factor),
            StopRule::WeightDeltaJump { factor, trailing } => {
                let n = series.samples.len();
                if trailing == 0 || n <= trailing {
                    return false;
                }
                let mut window: Vec<f64> = series.samples[n - 1 - trailing..n - 1]
                    .iter()
                    .map(|s| s.weight_delta.abs())
                    .collect();
                window.sort_by(f64::total_cmp);
                let mid = window.len() / 2;
                let median = if window.len() % 2 == 0 {
                    (window[mid - 1] + window[mid]) / 2.0
                } else {
                    window[mid]
                };
                last.weight_delta.abs() > factor * median
            }
        }
    }
}
