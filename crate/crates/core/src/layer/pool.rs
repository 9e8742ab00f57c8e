//! Max pooling over spikes, global max-potential pooling and spike counting.

use crate::error::{Error, Result};
use crate::layer::conv::ConvOutput;
use crate::layer::kernel::ConvKernel;
use crate::layer::potential::{conv_accumulate, PotentialTensor};
use crate::spikes::{SpikeEvent, SpikeShape, SpikeTensor};

pub const POOL_SIZE: usize = 2;

/// Pooled shape for `rows x cols` maps; odd trailing rows/columns are dropped.
pub fn pooled_dims(rows: usize, cols: usize) -> (usize, usize) {
    (rows / POOL_SIZE, cols / POOL_SIZE)
}

/// Non-overlapping 2x2 max pooling of a convolution layer's spikes.
///
/// Within each bin every block passes at most one spike, the one whose neuron
/// fired at the highest potential (row-major order on ties). With
/// `pool_lateral_inhibition`, each pooled location additionally passes at most
/// one spike per image across all maps: the first bin that has a candidate
/// there decides, highest potential first, lower map on ties.
pub fn max_pool(conv: &ConvOutput, pool_lateral_inhibition: bool) -> SpikeTensor {
    let (rows, cols) = pooled_dims(conv.rows, conv.cols);
    let shape = SpikeShape::new(conv.bins, conv.maps, rows, cols);
    let plane = rows * cols;
    // best[map * plane + loc] = (potential, source u, source v) within the bin.
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; conv.maps * plane];
    let mut location_taken = vec![false; plane];
    let mut events = Vec::new();
    let mut start = 0;
    for t in 0..conv.bins {
        let end = start + conv.spikes[start..].iter().take_while(|s| s.t == t).count();
        best.fill(None);
        for s in &conv.spikes[start..end] {
            let n = s.neuron;
            let (pu, pv) = (n.u / POOL_SIZE, n.v / POOL_SIZE);
            if pu >= rows || pv >= cols {
                continue;
            }
            let slot = &mut best[n.map * plane + pu * cols + pv];
            let better = match *slot {
                None => true,
                Some((p, u, v)) => n.potential > p || (n.potential == p && (n.u, n.v) < (u, v)),
            };
            if better {
                *slot = Some((n.potential, n.u, n.v));
            }
        }
        start = end;

        if pool_lateral_inhibition {
            for loc in 0..plane {
                if location_taken[loc] {
                    continue;
                }
                let mut winner: Option<(usize, f64)> = None;
                for map in 0..conv.maps {
                    if let Some((p, _, _)) = best[map * plane + loc] {
                        if winner.is_none_or(|(_, wp)| p > wp) {
                            winner = Some((map, p));
                        }
                    }
                }
                if let Some((map, _)) = winner {
                    location_taken[loc] = true;
                    events.push(SpikeEvent::new(t, map, loc / cols, loc % cols));
                }
            }
        } else {
            for (i, b) in best.iter().enumerate() {
                if b.is_some() {
                    let (map, loc) = (i / plane, i % plane);
                    events.push(SpikeEvent::new(t, map, loc / cols, loc % cols));
                }
            }
        }
    }
    events.sort_unstable();
    SpikeTensor::from_sorted(shape, events)
}

/// Per bin: fresh potentials, per-map spatial maximum; summed over bins.
pub fn global_max_potential(input: &SpikeTensor, kernel: &ConvKernel) -> Result<Vec<f64>> {
    let shape = input.shape();
    if shape.channels != kernel.maps_in {
        return Err(Error::shape(format!(
            "{} input channels for a kernel expecting {}",
            shape.channels, kernel.maps_in
        )));
    }
    let mut potentials = PotentialTensor::for_input(kernel, shape.rows, shape.cols)?;
    let mut features = vec![0.0; kernel.maps_out];
    for t in 0..shape.bins {
        let bin = input.bin(t);
        if bin.is_empty() {
            continue;
        }
        potentials.reset();
        conv_accumulate(bin, kernel, &mut potentials)?;
        for (map, f) in features.iter_mut().enumerate() {
            *f += potentials.map_values(map).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(features)
}

/// Spike count per neuron over all bins, flattened as `(c, u, v)`.
pub fn count_spikes(spikes: &SpikeTensor) -> Vec<f64> {
    let shape = spikes.shape();
    let mut counts = vec![0.0; shape.neurons()];
    for e in spikes.events() {
        counts[shape.neuron_index(e.c as usize, e.u as usize, e.v as usize)] += 1.0;
    }
    counts
}
