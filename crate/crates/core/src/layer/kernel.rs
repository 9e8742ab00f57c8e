use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const KERNEL_MAGIC: &[u8; 4] = b"SKRN";
pub const KERNEL_VERSION: u32 = 1;

pub const DEFAULT_A_PLUS: f64 = 0.004;
pub const DEFAULT_A_MINUS: f64 = 0.003;

/// Trainable convolution weights, shape `(maps_out, maps_in, size, size)`,
/// every weight in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    pub maps_out: usize,
    pub maps_in: usize,
    pub size: usize,
    pub weights: Vec<f64>,
    pub a_plus: f64,
    pub a_minus: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightInit {
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit {
            mean: 0.8,
            std_dev: 0.05,
        }
    }
}

const INIT_FLOOR: f64 = 1e-3;

impl ConvKernel {
    pub fn filled(maps_out: usize, maps_in: usize, size: usize, value: f64) -> Self {
        ConvKernel {
            maps_out,
            maps_in,
            size,
            weights: vec![value; maps_out * maps_in * size * size],
            a_plus: DEFAULT_A_PLUS,
            a_minus: DEFAULT_A_MINUS,
        }
    }

    /// Normal initialisation clamped into the open unit interval (weights at
    /// exactly 0 or 1 could never move under the multiplicative STDP rule).
    pub fn random<R: Rng>(maps_out: usize, maps_in: usize, size: usize, init: WeightInit, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(init.mean, init.std_dev)
            .map_err(|e| Error::param(format!("weight init {init:?}: {e}")))?;
        let mut k = Self::filled(maps_out, maps_in, size, 0.0);
        for w in &mut k.weights {
            *w = normal.sample(rng).clamp(INIT_FLOOR, 1.0 - INIT_FLOOR);
        }
        Ok(k)
    }

    pub fn map_len(&self) -> usize {
        self.maps_in * self.size * self.size
    }

    #[inline]
    pub fn index(&self, map: usize, channel: usize, i: usize, j: usize) -> usize {
        ((map * self.maps_in + channel) * self.size + i) * self.size + j
    }

    #[inline]
    pub fn get(&self, map: usize, channel: usize, i: usize, j: usize) -> f64 {
        self.weights[self.index(map, channel, i, j)]
    }

    pub fn map_weights(&self, map: usize) -> &[f64] {
        let n = self.map_len();
        &self.weights[map * n..(map + 1) * n]
    }

    pub fn map_weights_mut(&mut self, map: usize) -> &mut [f64] {
        let n = self.map_len();
        &mut self.weights[map * n..(map + 1) * n]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.maps_out, self.maps_in, self.size, self.size]
    }

    /// Checkpoint layout (little-endian): `"SKRN"`, version `u32`, shape as
    /// four `u32`, `a_plus` and `a_minus` as `f64`, then the weights as `f64`
    /// in row-major order.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(KERNEL_MAGIC)?;
        out.write_all(&KERNEL_VERSION.to_le_bytes())?;
        for d in self.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&self.a_plus.to_le_bytes())?;
        out.write_all(&self.a_minus.to_le_bytes())?;
        for w in &self.weights {
            out.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * self.weights.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const CTX: &str = "kernel checkpoint";
        if bytes.len() < 40 || &bytes[..4] != KERNEL_MAGIC {
            return Err(Error::parse(CTX, "missing SKRN header"));
        }
        let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let f64_at = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != KERNEL_VERSION as usize {
            return Err(Error::parse(CTX, format!("unsupported version {version}")));
        }
        let (maps_out, maps_in, rows, cols) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        if rows != cols {
            return Err(Error::parse(CTX, format!("non-square kernel {rows}x{cols}")));
        }
        let n = maps_out * maps_in * rows * cols;
        if bytes.len() != 40 + 8 * n {
            return Err(Error::parse(CTX, format!("expected {n} weights, file has {} bytes", bytes.len())));
        }
        let weights: Vec<f64> = (0..n).map(|i| f64_at(40 + 8 * i)).collect();
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::parse(CTX, "weight outside [0, 1]"));
        }
        Ok(ConvKernel {
            maps_out,
            maps_in,
            size: rows,
            weights,
            a_plus: f64_at(24),
            a_minus: f64_at(32),
        })
    }
}
