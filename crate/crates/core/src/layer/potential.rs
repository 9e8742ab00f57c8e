use crate::error::{Error, Result};
use crate::layer::kernel::ConvKernel;
use crate::spikes::SpikeEvent;

/// Membrane potentials of one convolution layer, indexed `(map, u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTensor {
    pub maps: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PotentialTensor {
    pub fn zeros(maps: usize, rows: usize, cols: usize) -> Self {
        PotentialTensor {
            maps,
            rows,
            cols,
            values: vec![0.0; maps * rows * cols],
        }
    }

    /// Potentials produced by valid-mode convolution of `in_rows x in_cols`
    /// inputs with `kernel`.
    pub fn for_input(kernel: &ConvKernel, in_rows: usize, in_cols: usize) -> Result<Self> {
        if in_rows < kernel.size || in_cols < kernel.size {
            return Err(Error::shape(format!(
                "{in_rows}x{in_cols} input smaller than {0}x{0} kernel",
                kernel.size
            )));
        }
        Ok(Self::zeros(
            kernel.maps_out,
            in_rows - kernel.size + 1,
            in_cols - kernel.size + 1,
        ))
    }

    #[inline]
    pub fn index(&self, map: usize, u: usize, v: usize) -> usize {
        (map * self.rows + u) * self.cols + v
    }

    #[inline]
    pub fn get(&self, map: usize, u: usize, v: usize) -> f64 {
        self.values[self.index(map, u, v)]
    }

    pub fn reset(&mut self) {
        self.values.fill(0.0);
    }

    pub fn map_values(&self, map: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.values[map * n..(map + 1) * n]
    }
}

/// Adds the valid-mode correlation of one bin's spikes with every output
/// map's kernel: `V(m, u, v) += sum_{c,i,j} s(c, u + i, v + j) W(m, c, i, j)`.
///
/// Works event by event, so the cost scales with the number of spikes.
pub fn conv_accumulate(spikes: &[SpikeEvent], kernel: &ConvKernel, potentials: &mut PotentialTensor) -> Result<()> {
    if potentials.maps != kernel.maps_out {
        return Err(Error::shape(format!(
            "{} potential maps for {} kernel maps",
            potentials.maps, kernel.maps_out
        )));
    }
    let k = kernel.size;
    let (rows, cols) = (potentials.rows, potentials.cols);
    let plane = rows * cols;
    let map_stride = kernel.map_len();
    for e in spikes {
        let (c, y, x) = (e.c as usize, e.u as usize, e.v as usize);
        if c >= kernel.maps_in || y >= rows + k - 1 || x >= cols + k - 1 {
            return Err(Error::shape(format!(
                "spike {e:?} outside {}x{}x{} input",
                kernel.maps_in,
                rows + k - 1,
                cols + k - 1
            )));
        }
        // Output (u, v) sees this input through tap (y - u, x - v).
        for i in 0..k {
            let Some(u) = y.checked_sub(i).filter(|&u| u < rows) else {
                continue;
            };
            for j in 0..k {
                let Some(v) = x.checked_sub(j).filter(|&v| v < cols) else {
                    continue;
                };
                let mut w = kernel.index(0, c, i, j);
                let mut p = u * cols + v;
                for _ in 0..kernel.maps_out {
                    potentials.values[p] += kernel.weights[w];
                    w += map_stride;
                    p += plane;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::layer::kernel::WeightInit;
    use proptest::prelude::*;

    /// Dense valid-mode correlation over a set of spikes.
    fn dense(spikes: &[SpikeEvent], kernel: &ConvKernel, in_rows: usize, in_cols: usize) -> PotentialTensor {
        let mut grid = vec![0.0; kernel.maps_in * in_rows * in_cols];
        for e in spikes {
            grid[(e.c as usize * in_rows + e.u as usize) * in_cols + e.v as usize] += 1.0;
        }
        let mut out = PotentialTensor::for_input(kernel, in_rows, in_cols).unwrap();
        for m in 0..kernel.maps_out {
            for u in 0..out.rows {
                for v in 0..out.cols {
                    let mut acc = 0.0;
                    for c in 0..kernel.maps_in {
                        for i in 0..kernel.size {
                            for j in 0..kernel.size {
                                acc += grid[(c * in_rows + u + i) * in_cols + v + j] * kernel.get(m, c, i, j);
                            }
                        }
                    }
                    let idx = out.index(m, u, v);
                    out.values[idx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn no_spikes_no_change() {
        let k = ConvKernel::filled(2, 2, 5, 0.7);
        let mut p = PotentialTensor::for_input(&k, 27, 27).unwrap();
        p.values[10] = 3.0;
        let before = p.clone();
        conv_accumulate(&[], &k, &mut p).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn vertical_line_matches_vertical_kernel() {
        let mut k = ConvKernel::filled(1, 1, 5, 0.0);
        for i in 0..5 {
            let idx = k.index(0, 0, i, 2);
            k.weights[idx] = 1.0;
        }
        // Vertical line at column 6, rows 4..9 of a 13x13 input.
        let spikes: Vec<SpikeEvent> = (4..9).map(|r| SpikeEvent::new(0, 0, r, 6)).collect();
        let mut p = PotentialTensor::for_input(&k, 13, 13).unwrap();
        conv_accumulate(&spikes, &k, &mut p).unwrap();
        // Output centred on (6, 6) has top-left (4, 4).
        assert_eq!(p.get(0, 4, 4), 5.0);
        assert_eq!(p.get(0, 3, 4), 4.0);
        assert_eq!(p.get(0, 4, 5), 0.0);
    }

    #[test]
    fn shape_errors() {
        let k = ConvKernel::filled(2, 2, 5, 0.5);
        let mut wrong = PotentialTensor::zeros(3, 23, 23);
        assert!(conv_accumulate(&[], &k, &mut wrong).is_err());
        let mut p = PotentialTensor::for_input(&k, 27, 27).unwrap();
        assert!(conv_accumulate(&[SpikeEvent::new(0, 2, 0, 0)], &k, &mut p).is_err());
        assert!(conv_accumulate(&[SpikeEvent::new(0, 0, 27, 0)], &k, &mut p).is_err());
        assert!(PotentialTensor::for_input(&k, 4, 27).is_err());
    }

    proptest! {
        #[test]
        fn matches_dense_and_is_additive_over_bins(
            raw in prop::collection::vec((0usize..3, 0usize..2, 0usize..12, 0usize..10), 0..60),
            seed in 0u64..1000,
        ) {
            let mut r = rng::stream(seed, "test");
            let k = ConvKernel::random(4, 2, 3, WeightInit { mean: 0.5, std_dev: 0.3 }, &mut r).unwrap();
            let mut spikes: Vec<SpikeEvent> = raw.iter().map(|&(t, c, u, v)| SpikeEvent::new(t, c, u, v)).collect();
            spikes.sort_unstable();
            spikes.dedup();

            let mut per_bin = PotentialTensor::for_input(&k, 12, 10).unwrap();
            for t in 0..3u16 {
                let bin: Vec<SpikeEvent> = spikes.iter().copied().filter(|e| e.t == t).collect();
                conv_accumulate(&bin, &k, &mut per_bin).unwrap();
            }
            let mut all = PotentialTensor::for_input(&k, 12, 10).unwrap();
            conv_accumulate(&spikes, &k, &mut all).unwrap();
            let oracle = dense(&spikes, &k, 12, 10);
            for ((a, b), c) in per_bin.values.iter().zip(&all.values).zip(&oracle.values) {
                prop_assert!((a - c).abs() < 1e-9);
                prop_assert!((b - c).abs() < 1e-9);
            }
        }
    }
}
