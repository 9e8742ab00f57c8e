//! R-STDP fine-tuning runs for studying how the hit/miss window affects a
//! head that starts from backprop-trained weights.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::heads::{draw_dropout_mask, shift_scale_init, FcnHead, FeatureMatrix, HitMissTracker, RatioMode, RstdpHead, RstdpRates, WarmStart};
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq)]
pub struct RstdpRunConfig {
    pub mode: RatioMode,
    pub warm_start: WarmStart,
    /// The window `N`.
    pub window: usize,
    /// Initial `N_miss / N`.
    pub init_miss: f64,
    pub epochs: usize,
    pub rates: RstdpRates,
    pub p_drop: f64,
    pub seed: u64,
}

impl Default for RstdpRunConfig {
    fn default() -> Self {
        Self {
            mode: RatioMode::Batch,
            warm_start: WarmStart::Prefilled,
            window: 100,
            init_miss: 0.1,
            epochs: 1,
            rates: RstdpRates::default(),
            p_drop: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RstdpRun {
    pub start_accuracy: f64,
    /// Validation accuracy after each epoch.
    pub accuracy: Vec<f64>,
    /// Miss ratio after each epoch.
    pub miss_ratio: Vec<f64>,
    pub head: RstdpHead,
}

impl RstdpRun {
    pub fn end_accuracy(&self) -> f64 {
        self.accuracy.last().copied().unwrap_or(self.start_accuracy)
    }
}

/// Share of rows whose winning neuron belongs to the row's class; silent
/// rows count as wrong.
pub fn rstdp_accuracy(head: &RstdpHead, data: &FeatureMatrix) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for i in 0..data.rows() {
        if head.predict(data.row(i))? == Some(usize::from(data.label(i))) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.rows() as f64)
}

/// An R-STDP head whose weights are the FCN's weights mapped into [0, 1].
/// Biases are dropped.
pub fn head_from_fcn(fcn: &FcnHead) -> Result<RstdpHead> {
    let weights: Vec<f64> = (0..fcn.n_out).flat_map(|k| fcn.weight_row(k).to_vec()).collect();
    RstdpHead::new(fcn.n_in, fcn.n_out, 1, shift_scale_init(&weights)?)
}

pub fn run_rstdp(mut head: RstdpHead, train: &FeatureMatrix, val: &FeatureMatrix, cfg: &RstdpRunConfig) -> Result<RstdpRun> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    head.rates = cfg.rates;
    head.p_drop = cfg.p_drop;
    let mut tracker = HitMissTracker::new(cfg.mode, cfg.window, cfg.init_miss)?.with_warm_start(cfg.warm_start);
    let mut order_rng = rng::stream(cfg.seed, streams::SHUFFLE);
    let mut drop_rng = rng::stream(cfg.seed, streams::DROPOUT);
    let n_out = head.n_out;
    let no_drop = vec![false; n_out];

    let start_accuracy = rstdp_accuracy(&head, val)?;
    let mut accuracy = Vec::with_capacity(cfg.epochs);
    let mut miss_ratio = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.rows()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for &i in &order {
            let mask = if cfg.p_drop > 0.0 { draw_dropout_mask(n_out, cfg.p_drop, &mut drop_rng)? } else { no_drop.clone() };
            head.train_image(train.row(i), train.label(i), &mut tracker, &mask)?;
        }
        accuracy.push(rstdp_accuracy(&head, val)?);
        miss_ratio.push(tracker.miss_ratio());
    }
    Ok(RstdpRun {
        start_accuracy,
        accuracy,
        miss_ratio,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::FcnParams;

    fn toy() -> FeatureMatrix {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let c = i % 3;
            let mut row = vec![0.0; 6];
            row[2 * c] = 2.0;
            row[2 * c + 1] = 1.0;
            rows.push(row);
            labels.push(c as u8);
        }
        FeatureMatrix::from_rows(6, rows, labels).unwrap()
    }

    fn trained_fcn(data: &FeatureMatrix) -> FcnHead {
        let params = FcnParams { eta0: 0.5, lambda: 0.0, ..FcnParams::default() };
        let mut fcn = FcnHead::random(6, 3, params, &mut rng::stream(1, streams::INIT)).unwrap();
        let mut r = rng::stream(1, streams::SHUFFLE);
        for e in 0..30 {
            fcn.train_epoch(data, e, &mut r).unwrap();
        }
        fcn
    }

    #[test]
    fn converted_head_keeps_fcn_predictions_on_separable_data() {
        let data = toy();
        let fcn = trained_fcn(&data);
        assert_eq!(fcn.accuracy(&data).unwrap(), 1.0);
        let head = head_from_fcn(&fcn).unwrap();
        assert!(head.weights.iter().all(|w| (0.0..=1.0).contains(w)));
        assert_eq!(rstdp_accuracy(&head, &data).unwrap(), 1.0);
    }

    #[test]
    fn perfect_head_with_zero_miss_ratio_is_frozen() {
        let data = toy();
        let head = head_from_fcn(&trained_fcn(&data)).unwrap();
        let cfg = RstdpRunConfig { init_miss: 0.0, epochs: 2, mode: RatioMode::PerImage, ..Default::default() };
        let run = run_rstdp(head.clone(), &data, &data, &cfg).unwrap();
        assert_eq!(run.head.weights, head.weights);
        assert_eq!(run.miss_ratio, vec![0.0, 0.0]);
    }

    #[test]
    fn batch_mode_keeps_initial_ratio_until_the_first_batch_closes() {
        let data = toy();
        let head = head_from_fcn(&trained_fcn(&data)).unwrap();
        let cfg = RstdpRunConfig { init_miss: 0.3, window: 1000, ..Default::default() };
        let run = run_rstdp(head, &data, &data, &cfg).unwrap();
        assert_eq!(run.miss_ratio, vec![0.3]);
    }

    #[test]
    fn silent_rows_count_as_wrong() {
        let head = RstdpHead::new(2, 2, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let data = FeatureMatrix::from_rows(2, vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0, 0]).unwrap();
        assert_eq!(rstdp_accuracy(&head, &data).unwrap(), 0.5);
    }
}
