//! Single-neuron STDP learning of a pattern hidden in noise.
//!
//! A fixed subset of afferents fires together for `pattern_len` bins at
//! random non-overlapping times while every afferent also fires at random
//! with probability `noise_rate` per bin. One output neuron integrates its
//! weighted input over a short box-car window and applies simplified STDP
//! each time it fires.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Geometric, Normal};

use crate::error::{Error, Result};
use crate::layer::stdp::{stdp_step, A_PLUS_CAP};
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDemoConfig {
    pub n_afferents: usize,
    /// Afferents taking part in the planted pattern.
    pub pattern_afferents: usize,
    pub pattern_len: usize,
    pub noise_rate: f64,
    pub threshold: f64,
    /// Bins of input summed into the membrane potential.
    pub window: usize,
    pub duration: usize,
    /// Chance per bin that a new insertion starts once the previous one ended.
    pub pattern_rate: f64,
    pub init_mean: f64,
    pub init_std: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    /// Rates double every `rate_period` bins until `a_plus` would pass the cap.
    pub rate_period: usize,
    /// Bins per reporting epoch.
    pub epoch_len: usize,
    pub seed: u64,
}

impl Default for NoiseDemoConfig {
    fn default() -> Self {
        Self {
            n_afferents: 100,
            pattern_afferents: 10,
            pattern_len: 5,
            noise_rate: 0.01,
            threshold: 4.5,
            window: 5,
            duration: 5000,
            pattern_rate: 0.05,
            init_mean: 0.5,
            init_std: 0.05,
            a_plus: 0.004,
            a_minus: 0.003,
            rate_period: 1000,
            epoch_len: 500,
            seed: 0,
        }
    }
}

impl NoiseDemoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_afferents == 0 || self.pattern_afferents > self.n_afferents {
            return Err(Error::param(format!(
                "{} pattern afferents out of {}",
                self.pattern_afferents, self.n_afferents
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::param(format!("noise rate {} outside [0, 1]", self.noise_rate)));
        }
        if !(self.pattern_rate > 0.0 && self.pattern_rate <= 1.0) {
            return Err(Error::param(format!("pattern rate {} outside (0, 1]", self.pattern_rate)));
        }
        if self.pattern_len == 0 || self.window == 0 || self.epoch_len == 0 {
            return Err(Error::param("pattern length, window and epoch length must be positive"));
        }
        if !self.threshold.is_finite() || !(self.init_std >= 0.0) {
            return Err(Error::param("threshold and weight spread must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Insertions lying wholly inside the epoch.
    pub insertions: usize,
    /// Insertions during which the output fired at least once.
    pub hits: usize,
    pub output_spikes: usize,
    /// Output spikes outside every insertion.
    pub false_alarms: usize,
}

impl EpochStats {
    pub fn hit_rate(&self) -> f64 {
        if self.insertions == 0 {
            0.0
        } else {
            self.hits as f64 / self.insertions as f64
        }
    }

    /// Share of output spikes that fell outside the pattern; 0 when silent.
    pub fn false_alarm_rate(&self) -> f64 {
        if self.output_spikes == 0 {
            0.0
        } else {
            self.false_alarms as f64 / self.output_spikes as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoiseDemoRun {
    pub config: NoiseDemoConfig,
    /// Whether each afferent belongs to the planted pattern.
    pub support: Vec<bool>,
    /// Start bins of the insertions.
    pub insertions: Vec<usize>,
    /// `(t, afferent, is_pattern)` for every input spike, time-ordered.
    pub raster: Vec<(usize, usize, bool)>,
    pub output_spikes: Vec<usize>,
    pub epochs: Vec<EpochStats>,
    pub weights: Vec<f64>,
}

impl NoiseDemoRun {
    /// Jaccard overlap between `{w > 0.5}` and the planted support.
    pub fn jaccard(&self) -> f64 {
        let (mut both, mut either) = (0usize, 0usize);
        for (&w, &s) in self.weights.iter().zip(&self.support) {
            let p = w > 0.5;
            both += usize::from(p && s);
            either += usize::from(p || s);
        }
        if either == 0 {
            1.0
        } else {
            both as f64 / either as f64
        }
    }

    /// First epoch meeting both rates, if any.
    pub fn first_selective_epoch(&self, min_hit: f64, max_false_alarm: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.insertions > 0 && e.hit_rate() >= min_hit && e.false_alarm_rate() <= max_false_alarm)
            .map(|e| e.epoch)
    }

    pub fn raster_csv(&self) -> String {
        let mut out = String::from("t,afferent,is_pattern\n");
        for &(t, a, p) in &self.raster {
            let _ = writeln!(out, "{t},{a},{}", u8::from(p));
        }
        out
    }

    pub fn output_csv(&self) -> String {
        let mut out = String::from("t\n");
        for t in &self.output_spikes {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn epochs_csv(&self) -> String {
        let mut out = String::from("epoch,insertions,hits,output_spikes,false_alarms,hit_rate,false_alarm_rate\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.epoch,
                e.insertions,
                e.hits,
                e.output_spikes,
                e.false_alarms,
                e.hit_rate(),
                e.false_alarm_rate()
            );
        }
        out
    }
}

pub fn run_noise_demo(cfg: &NoiseDemoConfig) -> Result<NoiseDemoRun> {
    cfg.validate()?;
    let n = cfg.n_afferents;
    let mut rng = rng::stream(cfg.seed, streams::DEMO);

    let init = Normal::new(cfg.init_mean, cfg.init_std).map_err(|e| Error::param(e.to_string()))?;
    let mut weights: Vec<f64> = (0..n).map(|_| init.sample(&mut rng).clamp(0.0, 1.0)).collect();

    let mut support = vec![false; n];
    for i in sample(&mut rng, n, cfg.pattern_afferents) {
        support[i] = true;
    }

    // Gaps are geometric on {1, 2, ...}.
    let gap = Geometric::new(cfg.pattern_rate).map_err(|e| Error::param(e.to_string()))?;
    let mut in_pattern = vec![false; cfg.duration];
    let mut insertions = Vec::new();
    let mut t = gap.sample(&mut rng) as usize + 1;
    while t + cfg.pattern_len <= cfg.duration {
        insertions.push(t);
        in_pattern[t..t + cfg.pattern_len].fill(true);
        t += cfg.pattern_len + gap.sample(&mut rng) as usize + 1;
    }

    let mut spikes = vec![false; cfg.duration * n];
    let mut raster = Vec::new();
    for t in 0..cfg.duration {
        let row = &mut spikes[t * n..(t + 1) * n];
        for (a, s) in row.iter_mut().enumerate() {
            let planted = in_pattern[t] && support[a];
            *s = planted || rng.random::<f64>() < cfg.noise_rate;
            if *s {
                raster.push((t, a, planted));
            }
        }
    }

    let (mut a_plus, mut a_minus) = (cfg.a_plus, cfg.a_minus);
    let mut reset = 0usize;
    let mut seen = vec![false; n];
    let mut output_spikes = Vec::new();
    for t in 0..cfg.duration {
        if cfg.rate_period > 0 && t > 0 && t % cfg.rate_period == 0 && a_plus * 2.0 <= A_PLUS_CAP {
            a_plus *= 2.0;
            a_minus *= 2.0;
        }
        let lo = reset.max((t + 1).saturating_sub(cfg.window));
        seen.fill(false);
        let mut v = 0.0;
        for s in lo..=t {
            for (a, &fired) in spikes[s * n..(s + 1) * n].iter().enumerate() {
                if fired {
                    v += weights[a];
                    seen[a] = true;
                }
            }
        }
        if v > cfg.threshold {
            output_spikes.push(t);
            for (w, &before) in weights.iter_mut().zip(&seen) {
                *w = stdp_step(*w, if before { a_plus } else { a_minus }, before);
            }
            reset = t + 1;
        }
    }

    let epochs = epoch_stats(cfg, &insertions, &in_pattern, &output_spikes);
    Ok(NoiseDemoRun {
        config: cfg.clone(),
        support,
        insertions,
        raster,
        output_spikes,
        epochs,
        weights,
    })
}

fn epoch_stats(cfg: &NoiseDemoConfig, insertions: &[usize], in_pattern: &[bool], outputs: &[usize]) -> Vec<EpochStats> {
    (0..cfg.duration / cfg.epoch_len)
        .map(|epoch| {
            let (lo, hi) = (epoch * cfg.epoch_len, (epoch + 1) * cfg.epoch_len);
            let mut stats = EpochStats {
                epoch,
                insertions: 0,
                hits: 0,
                output_spikes: 0,
                false_alarms: 0,
            };
            for &s in insertions.iter().filter(|&&s| s >= lo && s + cfg.pattern_len <= hi) {
                stats.insertions += 1;
                let end = s + cfg.pattern_len;
                if outputs.iter().any(|&o| o >= s && o < end) {
                    stats.hits += 1;
                }
            }
            for &o in outputs.iter().filter(|&&o| o >= lo && o < hi) {
                stats.output_spikes += 1;
                stats.false_alarms += usize::from(!in_pattern[o]);
            }
            stats
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertions_do_not_overlap() {
        let run = run_noise_demo(&NoiseDemoConfig::default()).unwrap();
        assert!(!run.insertions.is_empty());
        for pair in run.insertions.windows(2) {
            assert!(pair[1] >= pair[0] + 5);
        }
        let mean_gap = (run.insertions.last().unwrap() - run.insertions[0]) as f64 / (run.insertions.len() - 1) as f64;
        assert!((20.0..30.0).contains(&mean_gap), "{mean_gap}");
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = NoiseDemoConfig { duration: 1200, seed: 9, ..Default::default() };
        let a = run_noise_demo(&cfg).unwrap();
        let b = run_noise_demo(&cfg).unwrap();
        assert_eq!(a.raster_csv(), b.raster_csv());
        assert_eq!(a.output_csv(), b.output_csv());
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn silent_input_never_fires() {
        let cfg = NoiseDemoConfig { noise_rate: 0.0, pattern_afferents: 0, ..Default::default() };
        let run = run_noise_demo(&cfg).unwrap();
        assert!(run.raster.is_empty());
        assert!(run.output_spikes.is_empty());
        assert!(run.epochs.iter().all(|e| e.false_alarm_rate() == 0.0));
    }

    #[test]
    fn noiseless_pattern_is_always_hit() {
        let cfg = NoiseDemoConfig { noise_rate: 0.0, ..Default::default() };
        let run = run_noise_demo(&cfg).unwrap();
        for e in &run.epochs {
            assert_eq!(e.hits, e.insertions);
            assert_eq!(e.false_alarms, 0);
        }
    }

    #[test]
    fn raster_marks_planted_spikes() {
        let run = run_noise_demo(&NoiseDemoConfig { duration: 600, ..Default::default() }).unwrap();
        for &(t, a, p) in &run.raster {
            let inside = run.insertions.iter().any(|&s| t >= s && t < s + 5);
            assert_eq!(p, inside && run.support[a]);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let cfg = NoiseDemoConfig { noise_rate: 1.5, ..Default::default() };
        assert!(run_noise_demo(&cfg).is_err());
        let cfg = NoiseDemoConfig { pattern_afferents: 101, ..Default::default() };
        assert!(run_noise_demo(&cfg).is_err());
    }
}
