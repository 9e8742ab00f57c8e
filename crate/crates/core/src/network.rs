//! A stack of frozen convolution/pooling layers and feature extraction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heads::FeatureMatrix;
use crate::layer::{count_spikes, global_max_potential, max_pool, ConvLayer};
use crate::spikes::SpikeTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMode {
    /// Spike counts of every neuron in the last pooling layer.
    SpikeCount,
    /// Summed per-bin map maxima of the last convolution layer's potentials.
    GlobalMaxPotential,
}

/// Convolution layers, each followed by 2x2 max pooling.
#[derive(Clone, Debug, Default)]
pub struct Network {
    pub layers: Vec<ConvLayer>,
}

impl Network {
    pub fn new(layers: Vec<ConvLayer>) -> Self {
        Network { layers }
    }

    /// Pooled spikes after the first `depth` conv/pool stages.
    pub fn propagate(&self, input: &SpikeTensor, depth: usize) -> Result<SpikeTensor> {
        if depth > self.layers.len() {
            return Err(Error::param(format!("depth {depth} exceeds {} layers", self.layers.len())));
        }
        let mut x = input.clone();
        for layer in &self.layers[..depth] {
            let out = layer.forward(&x)?;
            x = max_pool(&out, layer.inhibition.pool_lateral_inhibition);
        }
        Ok(x)
    }

    /// Spikes emitted by each convolution layer for one image.
    pub fn conv_spike_counts(&self, input: &SpikeTensor) -> Result<Vec<usize>> {
        let mut counts = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let out = layer.forward(&x)?;
            counts.push(out.len());
            x = max_pool(&out, layer.inhibition.pool_lateral_inhibition);
        }
        Ok(counts)
    }

    /// Per-image [`Network::conv_spike_counts`] for every input, in parallel.
    pub fn spike_counts(&self, inputs: &[SpikeTensor]) -> Result<Vec<Vec<usize>>> {
        inputs.par_iter().map(|x| self.conv_spike_counts(x)).collect()
    }

    pub fn feature_len(&self, mode: FeatureMode, rows: usize, cols: usize, channels: usize) -> Result<usize> {
        match mode {
            FeatureMode::GlobalMaxPotential => self
                .layers
                .last()
                .map(|l| l.kernel.maps_out)
                .ok_or_else(|| Error::param("global max-potential pooling needs a convolution layer")),
            FeatureMode::SpikeCount => {
                let (mut r, mut c, mut ch) = (rows, cols, channels);
                for l in &self.layers {
                    let k = l.kernel.size;
                    if r < k || c < k {
                        return Err(Error::shape(format!("{r}x{c} maps too small for a {k}x{k} kernel")));
                    }
                    r = (r - k + 1) / 2;
                    c = (c - k + 1) / 2;
                    ch = l.kernel.maps_out;
                }
                Ok(ch * r * c)
            }
        }
    }

    pub fn features(&self, input: &SpikeTensor, mode: FeatureMode) -> Result<Vec<f64>> {
        match mode {
            FeatureMode::SpikeCount => Ok(count_spikes(&self.propagate(input, self.layers.len())?)),
            FeatureMode::GlobalMaxPotential => {
                let Some(last) = self.layers.last() else {
                    return Err(Error::param("global max-potential pooling needs a convolution layer"));
                };
                let x = self.propagate(input, self.layers.len() - 1)?;
                global_max_potential(&x, &last.kernel)
            }
        }
    }

    /// Features for every input, computed in parallel, rows in input order.
    pub fn extract_features(&self, inputs: &[SpikeTensor], labels: &[u8], mode: FeatureMode) -> Result<FeatureMatrix> {
        if inputs.len() != labels.len() {
            return Err(Error::shape(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        let Some(first) = inputs.first() else {
            // Without an input there is no geometry to size spike counts by.
            let cols = match mode {
                FeatureMode::GlobalMaxPotential => self.layers.last().map_or(0, |l| l.kernel.maps_out),
                FeatureMode::SpikeCount => 0,
            };
            return Ok(FeatureMatrix::empty(cols));
        };
        let s = first.shape();
        let cols = self.feature_len(mode, s.rows, s.cols, s.channels)?;
        let rows: Vec<Vec<f64>> = inputs.par_iter().map(|x| self.features(x, mode)).collect::<Result<_>>()?;
        FeatureMatrix::from_rows(cols, rows, labels.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{ConvKernel, InhibitionConfig, WeightInit};
    use crate::rng;
    use crate::spikes::{SpikeEvent, SpikeShape};

    fn net() -> Network {
        let mut r = rng::stream(1, rng::streams::INIT);
        let k = ConvKernel::random(30, 2, 5, WeightInit::default(), &mut r).unwrap();
        let cfg = InhibitionConfig {
            threshold: 3.0,
            ..InhibitionConfig::default()
        };
        Network::new(vec![ConvLayer::new(k, cfg)])
    }

    fn blob(offset: usize) -> SpikeTensor {
        let shape = SpikeShape::new(12, 2, 27, 27);
        let events = (0..6).flat_map(|i| (0..3).map(move |j| SpikeEvent::new(i % 10, i % 2, 8 + i + offset, 10 + j)));
        SpikeTensor::from_events(shape, events).unwrap()
    }

    #[test]
    fn spike_count_features_have_pooled_length() {
        let n = net();
        let m = n.extract_features(&[blob(0), blob(3), blob(0)], &[1, 2, 1], FeatureMode::SpikeCount).unwrap();
        assert_eq!(m.cols(), 3630);
        assert_eq!(m.rows(), 3);
        assert_eq!(m.row(0), m.row(2));
        assert!(m.row(0).iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn global_max_features_per_map() {
        let n = net();
        let m = n.extract_features(&[blob(0)], &[0], FeatureMode::GlobalMaxPotential).unwrap();
        assert_eq!(m.cols(), 30);
        assert!(m.row(0).iter().all(|&x| x > 0.0));
    }

    #[test]
    fn empty_dataset_gives_empty_matrix() {
        let m = net().extract_features(&[], &[], FeatureMode::SpikeCount).unwrap();
        assert_eq!(m.rows(), 0);
    }

    #[test]
    fn label_count_must_match() {
        assert!(net().extract_features(&[blob(0)], &[], FeatureMode::SpikeCount).is_err());
    }
}
