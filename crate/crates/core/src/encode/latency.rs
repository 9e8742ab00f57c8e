//! Rank-order latency coding of ON/OFF contrast maps.

use crate::encode::dog::{dog_filter, make_dog_kernel, ContrastMap, DogKernel, GrayImage};
use crate::error::{Error, Result};
use crate::spikes::{SpikeEvent, SpikeShape, SpikeTensor};

pub const DEFAULT_THRESHOLD: f64 = 50.0;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_SILENT_BINS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyParams {
    pub threshold: f64,
    pub n_bins: usize,
    pub silent_bins: usize,
}

impl Default for LatencyParams {
    fn default() -> Self {
        LatencyParams {
            threshold: DEFAULT_THRESHOLD,
            n_bins: DEFAULT_BINS,
            silent_bins: DEFAULT_SILENT_BINS,
        }
    }
}

impl LatencyParams {
    pub fn total_bins(&self) -> usize {
        self.n_bins + self.silent_bins
    }
}

/// Number of spikes placed in each of `n_bins` bins when `count` spikes are
/// split as evenly as possible; the first `count % n_bins` bins take one extra.
pub fn bin_sizes(count: usize, n_bins: usize) -> Vec<usize> {
    let base = count / n_bins;
    let extra = count % n_bins;
    (0..n_bins).map(|b| base + usize::from(b < extra)).collect()
}

/// Converts the two contrast maps into a two-channel spike tensor.
///
/// Every response strictly above `threshold` yields one spike with latency
/// `1 / response`. Spikes are ordered by latency (ties: row-major pixel, then
/// ON before OFF) and dealt into `n_bins` nearly equal-count bins, followed by
/// `silent_bins` empty bins.
pub fn latency_encode(on: &ContrastMap, off: &ContrastMap, params: &LatencyParams) -> Result<SpikeTensor> {
    if params.n_bins == 0 {
        return Err(Error::param("n_bins must be at least 1"));
    }
    if !params.threshold.is_finite() {
        return Err(Error::param("threshold must be finite"));
    }
    if (on.rows, on.cols) != (off.rows, off.cols) {
        return Err(Error::shape(format!(
            "ON map {}x{} vs OFF map {}x{}",
            on.rows, on.cols, off.rows, off.cols
        )));
    }
    let (rows, cols) = (on.rows, on.cols);

    struct Candidate {
        latency: f64,
        pixel: usize,
        channel: usize,
    }
    let mut candidates = Vec::new();
    for (channel, map) in [on, off].into_iter().enumerate() {
        for (pixel, &response) in map.values.iter().enumerate() {
            if response > params.threshold {
                // Only reachable with a non-positive threshold: such responses
                // carry no latency and take the last slots.
                let latency = if response > 0.0 { 1.0 / response } else { f64::INFINITY };
                candidates.push(Candidate {
                    latency,
                    pixel,
                    channel,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.latency
            .total_cmp(&b.latency)
            .then(a.pixel.cmp(&b.pixel))
            .then(a.channel.cmp(&b.channel))
    });

    let shape = SpikeShape::new(params.total_bins(), 2, rows, cols);
    let mut events = Vec::with_capacity(candidates.len());
    let mut next = 0;
    for (bin, size) in bin_sizes(candidates.len(), params.n_bins).into_iter().enumerate() {
        for cand in &candidates[next..next + size] {
            events.push(SpikeEvent::new(bin, cand.channel, cand.pixel / cols, cand.pixel % cols));
        }
        next += size;
    }
    events.sort_unstable();
    Ok(SpikeTensor::from_sorted(shape, events))
}

/// DoG filtering followed by latency coding, with the ON (1, 2) and OFF (2, 1)
/// kernels.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    pub on: DogKernel,
    pub off: DogKernel,
    pub params: LatencyParams,
}

impl ImageEncoder {
    pub fn new(params: LatencyParams) -> Self {
        ImageEncoder {
            on: make_dog_kernel(1.0, 2.0).expect("valid sigmas"),
            off: make_dog_kernel(2.0, 1.0).expect("valid sigmas"),
            params,
        }
    }

    pub fn encode(&self, image: &GrayImage) -> Result<SpikeTensor> {
        let on = dog_filter(image, &self.on)?;
        let off = dog_filter(image, &self.off)?;
        latency_encode(&on, &off, &self.params)
    }
}

impl Default for ImageEncoder {
    fn default() -> Self {
        Self::new(LatencyParams::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::dog::Polarity;

    fn map(rows: usize, cols: usize, values: Vec<f64>, polarity: Polarity) -> ContrastMap {
        ContrastMap {
            rows,
            cols,
            values,
            polarity,
        }
    }

    fn params(n_bins: usize) -> LatencyParams {
        LatencyParams {
            threshold: 50.0,
            n_bins,
            silent_bins: 2,
        }
    }

    #[test]
    fn three_responses_three_bins() {
        let on = map(1, 4, vec![60.0, 100.0, 10.0, 75.0], Polarity::On);
        let off = map(1, 4, vec![0.0; 4], Polarity::Off);
        let s = latency_encode(&on, &off, &params(3)).unwrap();
        assert_eq!(s.shape().bins, 5);
        assert_eq!(s.bin(0), &[SpikeEvent::new(0, 0, 0, 1)]);
        assert_eq!(s.bin(1), &[SpikeEvent::new(1, 0, 0, 3)]);
        assert_eq!(s.bin(2), &[SpikeEvent::new(2, 0, 0, 0)]);
        assert!(s.bin(3).is_empty() && s.bin(4).is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let on = map(1, 2, vec![50.0, 50.000001], Polarity::On);
        let off = map(1, 2, vec![50.0, 0.0], Polarity::Off);
        let s = latency_encode(&on, &off, &params(10)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events()[0], SpikeEvent::new(0, 0, 0, 1));
    }

    #[test]
    fn nothing_above_threshold_is_empty() {
        let on = map(2, 2, vec![1.0, 2.0, 3.0, 50.0], Polarity::On);
        let off = map(2, 2, vec![-1.0; 4], Polarity::Off);
        let s = latency_encode(&on, &off, &params(10)).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.shape().bins, 12);
    }

    #[test]
    fn remainder_goes_to_first_bins() {
        assert_eq!(bin_sizes(7, 3), vec![3, 2, 2]);
        assert_eq!(bin_sizes(2, 4), vec![1, 1, 0, 0]);
        assert_eq!(bin_sizes(0, 2), vec![0, 0]);
    }

    #[test]
    fn ties_break_row_major_then_on_first() {
        let on = map(2, 2, vec![60.0, 0.0, 60.0, 0.0], Polarity::On);
        let off = map(2, 2, vec![60.0, 60.0, 0.0, 0.0], Polarity::Off);
        // Order: (0,0) ON, (0,0) OFF, (0,1) OFF, (1,0) ON.
        let s = latency_encode(&on, &off, &params(4)).unwrap();
        let order: Vec<SpikeEvent> = (0..4).map(|t| s.bin(t)[0]).collect();
        assert_eq!(
            order,
            vec![
                SpikeEvent::new(0, 0, 0, 0),
                SpikeEvent::new(1, 1, 0, 0),
                SpikeEvent::new(2, 1, 0, 1),
                SpikeEvent::new(3, 0, 1, 0),
            ]
        );
    }

    #[test]
    fn zero_bins_rejected() {
        let on = map(1, 1, vec![0.0], Polarity::On);
        let off = map(1, 1, vec![0.0], Polarity::Off);
        assert!(latency_encode(&on, &off, &params(0)).is_err());
    }
}
