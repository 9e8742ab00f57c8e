//! Fully connected sigmoid classifier trained by mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{put_f64, put_f64s, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::heads::features::FeatureMatrix;
use crate::heads::{argmax, HEAD_MAGIC, HEAD_VERSION};

pub const FCN_TAG: &[u8; 4] = b"FCNH";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cost {
    CrossEntropy,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FcnParams {
    pub cost: Cost,
    pub eta0: f64,
    /// The learning rate at epoch `e` is `eta0 / eta_decay^e`.
    pub eta_decay: f64,
    pub lambda: f64,
    pub batch_size: usize,
}

impl Default for FcnParams {
    fn default() -> Self {
        FcnParams {
            cost: Cost::CrossEntropy,
            eta0: 0.1,
            eta_decay: 1.007,
            lambda: 0.1,
            batch_size: 10,
        }
    }
}

impl FcnParams {
    pub fn eta(&self, epoch: usize) -> f64 {
        self.eta0 / self.eta_decay.powi(epoch as i32)
    }
}

/// Input layer fully connected to sigmoid output neurons, one per class.
#[derive(Clone, Debug, PartialEq)]
pub struct FcnHead {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub params: FcnParams,
}

/// Gradients of the regularized cost with respect to weights and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl FcnHead {
    pub fn zeros(n_in: usize, n_out: usize, params: FcnParams) -> Self {
        FcnHead {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
            params,
        }
    }

    /// Weights drawn from `N(0, 1/sqrt(n_in))`, biases zero.
    pub fn random<R: Rng>(n_in: usize, n_out: usize, params: FcnParams, rng: &mut R) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::param("FCN head needs at least one input and one output"));
        }
        let normal = Normal::new(0.0, 1.0 / (n_in as f64).sqrt()).map_err(|e| Error::param(e.to_string()))?;
        let mut head = Self::zeros(n_in, n_out, params);
        for w in &mut head.weights {
            *w = normal.sample(rng);
        }
        Ok(head)
    }

    pub fn weight_row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n_in..(k + 1) * self.n_in]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_in {
            return Err(Error::shape(format!("{} features for a head expecting {}", x.len(), self.n_in)));
        }
        Ok(())
    }

    fn weighted_inputs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|k| self.biases[k] + self.weight_row(k).iter().zip(x).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    /// Output activations `sigmoid(W x + b)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.weighted_inputs(x).into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn accuracy(&self, data: &FeatureMatrix) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0;
        for i in 0..data.rows() {
            correct += usize::from(self.predict(data.row(i))? == data.label(i) as usize);
        }
        Ok(correct as f64 / data.rows() as f64)
    }

    fn target(&self, label: u8) -> Result<usize> {
        let y = label as usize;
        if y >= self.n_out {
            return Err(Error::param(format!("label {y} for a head with {} outputs", self.n_out)));
        }
        Ok(y)
    }

    /// Mean cost over `rows` plus the L2 term `lambda / (2 n_total) * sum w^2`.
    pub fn cost(&self, data: &FeatureMatrix, rows: &[usize], n_total: usize) -> Result<f64> {
        let mut total = 0.0;
        for &i in rows {
            let a = self.forward(data.row(i))?;
            let y = self.target(data.label(i))?;
            for (k, &ak) in a.iter().enumerate() {
                let yk = if k == y { 1.0 } else { 0.0 };
                total += match self.params.cost {
                    Cost::Quadratic => 0.5 * (ak - yk).powi(2),
                    Cost::CrossEntropy => -(yk * ak.ln() + (1.0 - yk) * (1.0 - ak).ln()),
                };
            }
        }
        let l2: f64 = self.weights.iter().map(|w| w * w).sum();
        Ok(total / rows.len() as f64 + self.params.lambda / (2.0 * n_total as f64) * l2)
    }

    /// Output error `delta = dC/dz` for one example.
    pub fn output_delta(&self, x: &[f64], label: u8) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let y = self.target(label)?;
        Ok(self
            .weighted_inputs(x)
            .into_iter()
            .enumerate()
            .map(|(k, z)| {
                let a = sigmoid(z);
                let yk = if k == y { 1.0 } else { 0.0 };
                match self.params.cost {
                    Cost::CrossEntropy => a - yk,
                    Cost::Quadratic => (a - yk) * a * (1.0 - a),
                }
            })
            .collect())
    }

    /// Gradient of [`FcnHead::cost`] over `rows`.
    pub fn gradients(&self, data: &FeatureMatrix, rows: &[usize], n_total: usize) -> Result<Gradients> {
        let mut g = Gradients {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.n_out],
        };
        for &i in rows {
            let x = data.row(i);
            let delta = self.output_delta(x, data.label(i))?;
            for (k, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[k] += d;
                for (gw, &xj) in g.weights[k * self.n_in..(k + 1) * self.n_in].iter_mut().zip(x) {
                    *gw += d * xj;
                }
            }
        }
        let m = rows.len() as f64;
        let decay = self.params.lambda / n_total as f64;
        for (gw, &w) in g.weights.iter_mut().zip(&self.weights) {
            *gw = *gw / m + decay * w;
        }
        for gb in &mut g.biases {
            *gb /= m;
        }
        Ok(g)
    }

    /// One shuffled pass of mini-batch gradient descent at the epoch's
    /// learning rate. Returns the training accuracy measured after the pass.
    pub fn train_epoch<R: Rng>(&mut self, data: &FeatureMatrix, epoch: usize, rng: &mut R) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if self.params.batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        let eta = self.params.eta(epoch);
        let mut order: Vec<usize> = (0..data.rows()).collect();
        order.shuffle(rng);
        for batch in order.chunks(self.params.batch_size) {
            self.step(data, batch, data.rows(), eta)?;
        }
        self.accuracy(data)
    }

    /// One gradient-descent step on the mini-batch `rows`.
    pub fn step(&mut self, data: &FeatureMatrix, rows: &[usize], n_total: usize, eta: f64) -> Result<()> {
        let g = self.gradients(data, rows, n_total)?;
        for (w, gw) in self.weights.iter_mut().zip(&g.weights) {
            *w -= eta * gw;
        }
        for (b, gb) in self.biases.iter_mut().zip(&g.biases) {
            *b -= eta * gb;
        }
        Ok(())
    }

    /// Checkpoint layout (little-endian): `"SKRN"`, version `u32`, `"FCNH"`,
    /// `n_in`, `n_out`, cost (0 cross-entropy, 1 quadratic), batch size as
    /// `u32`; `eta0`, `eta_decay`, `lambda` as `f64`; weights then biases.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HEAD_MAGIC);
        put_u32(&mut out, HEAD_VERSION);
        out.extend_from_slice(FCN_TAG);
        put_u32(&mut out, self.n_in as u32);
        put_u32(&mut out, self.n_out as u32);
        put_u32(&mut out, matches!(self.params.cost, Cost::Quadratic) as u32);
        put_u32(&mut out, self.params.batch_size as u32);
        put_f64(&mut out, self.params.eta0);
        put_f64(&mut out, self.params.eta_decay);
        put_f64(&mut out, self.params.lambda);
        put_f64s(&mut out, &self.weights);
        put_f64s(&mut out, &self.biases);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "FCN checkpoint");
        r.expect(HEAD_MAGIC)?;
        let version = r.u32()?;
        if version != HEAD_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        r.expect(FCN_TAG)?;
        let n_in = r.u32()? as usize;
        let n_out = r.u32()? as usize;
        let cost = match r.u32()? {
            0 => Cost::CrossEntropy,
            1 => Cost::Quadratic,
            c => return Err(r.error(format!("unknown cost {c}"))),
        };
        let batch_size = r.u32()? as usize;
        let params = FcnParams {
            cost,
            batch_size,
            eta0: r.f64()?,
            eta_decay: r.f64()?,
            lambda: r.f64()?,
        };
        let weights = r.f64s(n_in * n_out)?;
        let biases = r.f64s(n_out)?;
        r.finish()?;
        Ok(FcnHead {
            n_in,
            n_out,
            weights,
            biases,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_head_outputs_half() {
        let h = FcnHead::zeros(4, 3, FcnParams::default());
        assert_eq!(h.forward(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.5; 3]);
        assert_eq!(h.predict(&[0.0; 4]).unwrap(), 0);
        assert!(h.forward(&[1.0]).is_err());
    }

    #[test]
    fn aligned_one_hot_row_wins() {
        let mut h = FcnHead::zeros(3, 3, FcnParams::default());
        h.weights[2 * 3 + 1] = 1.0;
        assert_eq!(h.predict(&[0.0, 1.0, 0.0]).unwrap(), 2);
    }

    #[test]
    fn quadratic_delta_vanishes_at_target() {
        // A saturated sigmoid reaches exactly 1.0 and 0.0 in f64.
        let mut h = FcnHead::zeros(1, 2, FcnParams { cost: Cost::Quadratic, ..FcnParams::default() });
        h.biases = vec![-800.0, 800.0];
        assert_eq!(h.output_delta(&[0.0], 1).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let mut r = rng::stream(5, rng::streams::INIT);
        let rows: Vec<Vec<f64>> = (0..60).map(|i| {
            let c = i % 3;
            (0..3).map(|j| if j == c { 1.0 } else { 0.1 * ((i * 7 + j) % 5) as f64 }).collect()
        }).collect();
        let labels = (0..60).map(|i| (i % 3) as u8).collect();
        let data = FeatureMatrix::from_rows(3, rows, labels).unwrap();
        let params = FcnParams { eta0: 1.0, ..FcnParams::default() };
        let mut h = FcnHead::random(3, 3, params, &mut r).unwrap();
        let mut acc = 0.0;
        for e in 0..30 {
            acc = h.train_epoch(&data, e, &mut r).unwrap();
        }
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn eta_schedule() {
        let p = FcnParams::default();
        assert_eq!(p.eta(0), 0.1);
        assert!((p.eta(2) - 0.1 / 1.007f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut r = rng::stream(6, rng::streams::INIT);
        let h = FcnHead::random(7, 4, FcnParams { cost: Cost::Quadratic, ..FcnParams::default() }, &mut r).unwrap();
        let bytes = h.to_bytes();
        assert_eq!(&bytes[8..12], b"FCNH");
        let back = FcnHead::from_bytes(&bytes).unwrap();
        assert_eq!(back, h);
        assert!(FcnHead::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
