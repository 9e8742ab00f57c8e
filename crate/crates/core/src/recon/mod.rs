//! Input-space reconstruction of learned convolution kernels.
//!
//! First-layer kernels already live in input space and are copied out per
//! channel. A second-layer kernel is first spread back through the 2x2 pool
//! (slice entry `(i, j)` lands on `(2i, 2j)`) and every nonzero entry then
//! stamps the matching first-layer kernel, scaled by the entry, onto the
//! second-layer neuron's receptive field. Stamps are summed.

mod render;

pub use render::{feature_ppm, montage_ppm, pgm};

use crate::error::{Error, Result};
use crate::layer::pool::POOL_SIZE;
use crate::layer::ConvKernel;

/// ON and OFF planes of one reconstructed feature, row-major `size x size`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconFeature {
    pub source_map: usize,
    pub size: usize,
    pub on: Vec<f64>,
    pub off: Vec<f64>,
}

impl ReconFeature {
    fn zeros(source_map: usize, size: usize) -> Self {
        ReconFeature {
            source_map,
            size,
            on: vec![0.0; size * size],
            off: vec![0.0; size * size],
        }
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        if channel == 0 {
            &self.on
        } else {
            &self.off
        }
    }

    fn plane_mut(&mut self, channel: usize) -> &mut Vec<f64> {
        if channel == 0 {
            &mut self.on
        } else {
            &mut self.off
        }
    }

    /// Largest absolute value over both planes.
    pub fn max_abs(&self) -> f64 {
        self.on.iter().chain(&self.off).fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn require_on_off(kernel: &ConvKernel) -> Result<()> {
    if kernel.maps_in != 2 {
        return Err(Error::shape(format!(
            "first-layer kernel has {} input channels, expected ON and OFF",
            kernel.maps_in
        )));
    }
    Ok(())
}

/// One feature per map: the ON and OFF slices of the kernel.
pub fn reconstruct_l2(w_c1: &ConvKernel) -> Result<Vec<ReconFeature>> {
    require_on_off(w_c1)?;
    let k = w_c1.size;
    Ok((0..w_c1.maps_out)
        .map(|m| {
            let weights = w_c1.map_weights(m);
            ReconFeature {
                source_map: m,
                size: k,
                on: weights[..k * k].to_vec(),
                off: weights[k * k..].to_vec(),
            }
        })
        .collect())
}

/// Spreads an `n x n` slice onto a `2n x 2n` grid: `(i, j)` goes to
/// `(2i, 2j)`, everything else is zero.
pub fn upsample_pool_feature(slice: &[f64], n: usize) -> Result<Vec<f64>> {
    if slice.len() != n * n {
        return Err(Error::shape(format!("slice of {} values is not {n}x{n}", slice.len())));
    }
    let m = POOL_SIZE * n;
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            out[POOL_SIZE * i * m + POOL_SIZE * j] = slice[i * n + j];
        }
    }
    Ok(out)
}

/// Side of the reconstruction canvas for a second-layer kernel of size `k2`
/// over first-layer kernels of size `k1`.
pub fn canvas_size(k2: usize, k1: usize) -> usize {
    POOL_SIZE * k2 + k1 - 1
}

/// Adds `scale * stamp` (a `k x k` block) centered on `(cu, cv)` of a
/// `size x size` canvas; cells that fall outside are dropped.
fn add_stamp(canvas: &mut [f64], size: usize, stamp: &[f64], k: usize, cu: isize, cv: isize, scale: f64) {
    let half = (k / 2) as isize;
    for i in 0..k {
        let r = cu - half + i as isize;
        if r < 0 || r >= size as isize {
            continue;
        }
        for j in 0..k {
            let c = cv - half + j as isize;
            if c < 0 || c >= size as isize {
                continue;
            }
            canvas[r as usize * size + c as usize] += scale * stamp[i * k + j];
        }
    }
}

/// Reconstructs every map of `w_c2` in first-layer input space.
///
/// Upsampled position `(p, q)` is the second-layer neuron whose receptive
/// field covers canvas rows `p..p + k1` and columns `q..q + k1`, so its stamp
/// is centered on `(p + k1 / 2, q + k1 / 2)`.
pub fn reconstruct_l4(w_c2: &ConvKernel, w_c1: &ConvKernel) -> Result<Vec<ReconFeature>> {
    require_on_off(w_c1)?;
    if w_c2.maps_in != w_c1.maps_out {
        return Err(Error::shape(format!(
            "second-layer kernel reads {} maps but the first layer has {}",
            w_c2.maps_in, w_c1.maps_out
        )));
    }
    let (k1, k2) = (w_c1.size, w_c2.size);
    let size = canvas_size(k2, k1);
    let up = POOL_SIZE * k2;
    let offset = (k1 / 2) as isize;
    let mut features = Vec::with_capacity(w_c2.maps_out);
    for w in 0..w_c2.maps_out {
        let mut feature = ReconFeature::zeros(w, size);
        for z in 0..w_c2.maps_in {
            let slice_start = w_c2.index(w, z, 0, 0);
            let upsampled = upsample_pool_feature(&w_c2.weights[slice_start..slice_start + k2 * k2], k2)?;
            for channel in 0..2 {
                let start = w_c1.index(z, channel, 0, 0);
                let stamp = &w_c1.weights[start..start + k1 * k1];
                let canvas = feature.plane_mut(channel);
                for p in 0..up {
                    for q in 0..up {
                        let v = upsampled[p * up + q];
                        if v != 0.0 {
                            add_stamp(canvas, size, stamp, k1, p as isize + offset, q as isize + offset, v);
                        }
                    }
                }
            }
        }
        features.push(feature);
    }
    Ok(features)
}
