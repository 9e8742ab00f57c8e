//! Reward-modulated STDP output layer.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::{put_f64, put_f64s, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::heads::{argmax, HEAD_MAGIC, HEAD_VERSION};
use crate::layer::stdp::stdp_step;

pub const RSTDP_TAG: &[u8; 4] = b"RSTD";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RstdpRates {
    pub reward_plus: f64,
    pub reward_minus: f64,
    pub punish_plus: f64,
    pub punish_minus: f64,
}

impl Default for RstdpRates {
    fn default() -> Self {
        RstdpRates {
            reward_plus: 0.004,
            reward_minus: 0.003,
            punish_plus: 0.0005,
            punish_minus: 0.004,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioMode {
    /// Ratios recomputed once per `N` images from that batch's counts.
    Batch,
    /// Ratios recomputed after every image from the most recent `N` outcomes.
    PerImage,
}

/// How the per-image window behaves before it holds `N` real outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarmStart {
    /// The missing slots count at the initial ratios.
    Prefilled,
    /// Only the real outcomes seen so far count; the initial ratios apply
    /// until the first outcome.
    Observed,
}

/// Running hit and miss ratios that modulate the R-STDP updates.
#[derive(Clone, Debug, PartialEq)]
pub struct HitMissTracker {
    pub mode: RatioMode,
    pub warm_start: WarmStart,
    pub window: usize,
    init_miss: f64,
    miss_ratio: f64,
    batch_hits: usize,
    batch_misses: usize,
    recent: VecDeque<bool>,
    recent_misses: usize,
}

impl HitMissTracker {
    /// `init_miss` is the starting `N_miss / N`; `N_hit / N` starts at its
    /// complement.
    pub fn new(mode: RatioMode, window: usize, init_miss: f64) -> Result<Self> {
        if window == 0 {
            return Err(Error::param("hit/miss window must be positive"));
        }
        if !(0.0..=1.0).contains(&init_miss) {
            return Err(Error::param(format!("initial miss ratio {init_miss} outside [0, 1]")));
        }
        Ok(HitMissTracker {
            mode,
            warm_start: WarmStart::Prefilled,
            window,
            init_miss,
            miss_ratio: init_miss,
            batch_hits: 0,
            batch_misses: 0,
            recent: VecDeque::with_capacity(window),
            recent_misses: 0,
        })
    }

    pub fn with_warm_start(mut self, warm_start: WarmStart) -> Self {
        self.warm_start = warm_start;
        self
    }

    /// `N_miss / N`.
    pub fn miss_ratio(&self) -> f64 {
        self.miss_ratio
    }

    /// `N_hit / N`.
    pub fn hit_ratio(&self) -> f64 {
        1.0 - self.miss_ratio
    }

    pub fn record(&mut self, hit: bool) {
        match self.mode {
            RatioMode::Batch => {
                if hit {
                    self.batch_hits += 1;
                } else {
                    self.batch_misses += 1;
                }
                if self.batch_hits + self.batch_misses == self.window {
                    self.miss_ratio = self.batch_misses as f64 / self.window as f64;
                    self.batch_hits = 0;
                    self.batch_misses = 0;
                }
            }
            RatioMode::PerImage => {
                if self.recent.len() == self.window && !self.recent.pop_front().unwrap() {
                    self.recent_misses -= 1;
                }
                self.recent.push_back(hit);
                self.recent_misses += usize::from(!hit);
                let seen = self.recent.len();
                self.miss_ratio = match self.warm_start {
                    WarmStart::Prefilled => {
                        let virtual_slots = (self.window - seen) as f64;
                        (self.recent_misses as f64 + virtual_slots * self.init_miss) / self.window as f64
                    }
                    WarmStart::Observed => self.recent_misses as f64 / seen as f64,
                };
            }
        }
    }
}

/// Result of presenting one training image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Miss,
    /// Every output potential was zero: counted as a miss, no update.
    Silent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RstdpHead {
    pub n_in: usize,
    pub n_out: usize,
    pub neurons_per_class: usize,
    /// Row-major `n_out x n_in`, every weight in [0, 1].
    pub weights: Vec<f64>,
    pub rates: RstdpRates,
    pub p_drop: f64,
}

impl RstdpHead {
    pub fn new(n_in: usize, n_classes: usize, neurons_per_class: usize, weights: Vec<f64>) -> Result<Self> {
        let n_out = n_classes * neurons_per_class;
        if n_out == 0 || n_in == 0 {
            return Err(Error::param("R-STDP head needs inputs, classes and neurons per class"));
        }
        if weights.len() != n_in * n_out {
            return Err(Error::shape(format!("{} weights for a {n_out}x{n_in} head", weights.len())));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::param("R-STDP weights must lie in [0, 1]"));
        }
        Ok(RstdpHead {
            n_in,
            n_out,
            neurons_per_class,
            weights,
            rates: RstdpRates::default(),
            p_drop: 0.0,
        })
    }

    /// Weights drawn from `N(mean, std_dev)` and clamped to [0, 1].
    pub fn random<R: Rng>(
        n_in: usize,
        n_classes: usize,
        neurons_per_class: usize,
        mean: f64,
        std_dev: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(mean, std_dev).map_err(|e| Error::param(e.to_string()))?;
        let n = n_in * n_classes * neurons_per_class;
        let weights = (0..n).map(|_| normal.sample(rng).clamp(0.0, 1.0)).collect();
        Self::new(n_in, n_classes, neurons_per_class, weights)
    }

    pub fn n_classes(&self) -> usize {
        self.n_out / self.neurons_per_class
    }

    /// Neuron `k` votes for class `k / neurons_per_class`.
    pub fn class_of(&self, neuron: usize) -> usize {
        neuron / self.neurons_per_class
    }

    /// `V_k = sum_j w_kj count_j`, where `count_j` is presynaptic neuron `j`'s
    /// spike count over the whole image.
    pub fn potentials(&self, counts: &[f64]) -> Result<Vec<f64>> {
        if counts.len() != self.n_in {
            return Err(Error::shape(format!("{} inputs for a head expecting {}", counts.len(), self.n_in)));
        }
        Ok(self
            .weights
            .chunks_exact(self.n_in)
            .map(|row| row.iter().zip(counts).map(|(w, c)| w * c).sum())
            .collect())
    }

    /// Winning neuron, or `None` when every potential is zero.
    pub fn winner(&self, counts: &[f64]) -> Result<Option<usize>> {
        let v = self.potentials(counts)?;
        Ok(if v.iter().all(|&x| x == 0.0) { None } else { Some(argmax(&v)) })
    }

    pub fn predict(&self, counts: &[f64]) -> Result<Option<usize>> {
        Ok(self.winner(counts)?.map(|k| self.class_of(k)))
    }

    /// Rewards (`correct`) or punishes the incoming weights of `winner`,
    /// modulated by the tracker's current ratios.
    pub fn update(&mut self, winner: usize, correct: bool, counts: &[f64], tracker: &HitMissTracker) {
        let r = self.rates;
        let row = &mut self.weights[winner * self.n_in..(winner + 1) * self.n_in];
        let (spiked_rate, silent_rate, spiked_up) = if correct {
            let m = tracker.miss_ratio();
            (m * r.reward_plus, m * r.reward_minus, true)
        } else {
            let h = tracker.hit_ratio();
            (h * r.punish_plus, h * r.punish_minus, false)
        };
        for (w, &c) in row.iter_mut().zip(counts) {
            *w = if c > 0.0 {
                stdp_step(*w, spiked_rate, spiked_up)
            } else {
                stdp_step(*w, silent_rate, !spiked_up)
            };
        }
    }

    /// Classifies one image, updates the winner unless it is masked out, and
    /// records the outcome.
    pub fn train_image(
        &mut self,
        counts: &[f64],
        label: u8,
        tracker: &mut HitMissTracker,
        dropped: &[bool],
    ) -> Result<Outcome> {
        let Some(winner) = self.winner(counts)? else {
            tracker.record(false);
            return Ok(Outcome::Silent);
        };
        let correct = self.class_of(winner) == label as usize;
        if !dropped.get(winner).copied().unwrap_or(false) {
            self.update(winner, correct, counts, tracker);
        }
        tracker.record(correct);
        Ok(if correct { Outcome::Hit } else { Outcome::Miss })
    }

    /// Checkpoint layout (little-endian): `"SKRN"`, version `u32`, `"RSTD"`,
    /// `n_in`, `n_out`, neurons per class as `u32`; the four rates and
    /// `p_drop` as `f64`; then the weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(HEAD_MAGIC);
        put_u32(&mut out, HEAD_VERSION);
        out.extend_from_slice(RSTDP_TAG);
        put_u32(&mut out, self.n_in as u32);
        put_u32(&mut out, self.n_out as u32);
        put_u32(&mut out, self.neurons_per_class as u32);
        for x in [
            self.rates.reward_plus,
            self.rates.reward_minus,
            self.rates.punish_plus,
            self.rates.punish_minus,
            self.p_drop,
        ] {
            put_f64(&mut out, x);
        }
        put_f64s(&mut out, &self.weights);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "R-STDP checkpoint");
        r.expect(HEAD_MAGIC)?;
        let version = r.u32()?;
        if version != HEAD_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        r.expect(RSTDP_TAG)?;
        let n_in = r.u32()? as usize;
        let n_out = r.u32()? as usize;
        let npc = r.u32()? as usize;
        if npc == 0 || n_out % npc != 0 {
            return Err(r.error(format!("{n_out} outputs not divisible into classes of {npc}")));
        }
        let rates = RstdpRates {
            reward_plus: r.f64()?,
            reward_minus: r.f64()?,
            punish_plus: r.f64()?,
            punish_minus: r.f64()?,
        };
        let p_drop = r.f64()?;
        let weights = r.f64s(n_in * n_out)?;
        r.finish()?;
        let mut head = Self::new(n_in, n_out / npc, npc, weights)?;
        head.rates = rates;
        head.p_drop = p_drop;
        Ok(head)
    }
}

/// Marks exactly `round(p_drop * n_out)` distinct neurons as dropped.
pub fn draw_dropout_mask<R: Rng>(n_out: usize, p_drop: f64, rng: &mut R) -> Result<Vec<bool>> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::param(format!("dropout probability {p_drop} outside [0, 1)")));
    }
    let mut mask = vec![false; n_out];
    let k = (p_drop * n_out as f64).round() as usize;
    for i in sample(rng, n_out, k) {
        mask[i] = true;
    }
    Ok(mask)
}

/// Maps weights affinely onto [0, 1]: `(w - min) / (max - min)`.
pub fn shift_scale_init(weights: &[f64]) -> Result<Vec<f64>> {
    let min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if weights.is_empty() || !(max > min) || !min.is_finite() || !max.is_finite() {
        return Err(Error::Degenerate("cannot rescale a constant or empty weight matrix".into()));
    }
    let span = max - min;
    Ok(weights.iter().map(|w| ((w - min) / span).clamp(0.0, 1.0)).collect())
}
