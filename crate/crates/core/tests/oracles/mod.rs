//! Randomized invariant suites with brute-force oracles, shared by the
//! integration tests and the acceptance run.
#![allow(dead_code)]

use std::cell::Cell;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use spikeconv::heads::{Cost, FcnHead, FcnParams, FeatureMatrix, HitMissTracker, RatioMode, RstdpHead, RstdpRates};
use spikeconv::layer::stdp::homeostasis_penalty;
use spikeconv::layer::{double_learning_rates, stdp_update, ConvKernel, ConvLayer, InhibitionConfig, WeightInit};
use spikeconv::recon::{canvas_size, reconstruct_l4};
use spikeconv::rng;
use spikeconv::train::convergence_factor;
use spikeconv::{SpikeEvent, SpikeShape, SpikeTensor};

fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn run<S: Strategy>(
    mut runner: TestRunner,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

// --- inhibition ---------------------------------------------------------

pub const INPUT: usize = 27;
pub const BINS: usize = 12;

fn image_strategy() -> impl Strategy<Value = SpikeTensor> {
    prop::collection::vec((0..BINS, 0..2usize, 0..INPUT, 0..INPUT), 0..600).prop_map(|events| {
        let shape = SpikeShape::new(BINS, 2, INPUT, INPUT);
        SpikeTensor::from_events(shape, events.into_iter().map(|(t, c, u, v)| SpikeEvent::new(t, c, u, v))).unwrap()
    })
}

#[derive(Clone, Copy, Debug)]
pub struct InhibitionStats {
    pub images: u32,
    pub fired: usize,
    pub winners: usize,
}

/// Per-location and competition invariants of a 30-map 5x5 layer on random
/// images: at most one map fires per location per image, and competition
/// winners are pairwise more than `2r` apart (checked over all pairs), one
/// per map, and drawn from the fired neurons.
pub fn inhibition_suite(images: u32, radius: usize) -> Result<InhibitionStats, String> {
    let checked = Cell::new(0u32);
    let fired = Cell::new(0usize);
    let won = Cell::new(0usize);
    let strategy = (image_strategy(), any::<u64>(), 4.0..20.0f64, 0.5..0.95f64);
    run(runner(images, 4), strategy, |(image, seed, threshold, mean)| {
        let init = WeightInit { mean, std_dev: 0.05 };
        let kernel = ConvKernel::random(30, 2, 5, init, &mut rng::stream(seed, rng::streams::INIT)).unwrap();
        let cfg = InhibitionConfig {
            threshold,
            competition_radius: radius,
            ..InhibitionConfig::default()
        };
        let layer = ConvLayer::new(kernel, cfg);
        let out = layer.forward(&image).unwrap();
        let mut per_location = vec![0u32; out.rows * out.cols];
        for s in &out.spikes {
            per_location[s.neuron.u * out.cols + s.neuron.v] += 1;
        }
        prop_assert!(per_location.iter().all(|&n| n <= 1), "a location fired for more than one map");

        let winners = layer.competition_winners(&image).unwrap();
        for (i, a) in winners.iter().enumerate() {
            prop_assert!(
                out.spikes.iter().any(|s| s.t == a.t && s.neuron == a.neuron),
                "winner {a:?} never fired"
            );
            for b in &winners[i + 1..] {
                let (na, nb) = (a.neuron, b.neuron);
                prop_assert!(na.map != nb.map, "map {} won twice", na.map);
                let chebyshev = na.u.abs_diff(nb.u).max(na.v.abs_diff(nb.v));
                prop_assert!(chebyshev > 2 * radius, "winners {na:?} and {nb:?} share a window");
            }
        }
        checked.set(checked.get() + 1);
        fired.set(fired.get() + out.spikes.len());
        won.set(won.get() + winners.len());
        Ok(())
    })?;
    Ok(InhibitionStats {
        images: checked.get(),
        fired: fired.get(),
        winners: won.get(),
    })
}

// --- weight domain ------------------------------------------------------

#[derive(Clone, Debug)]
enum Update {
    Stdp { map: usize, presyn: u64 },
    Penalty { map: usize },
    /// Learning-rate doubling check at an image count.
    Schedule { images: usize },
    Rstdp { winner: usize, hit: bool, active: u64 },
}

const MAPS: usize = 4;
const TAPS: usize = 2 * 5 * 5;
const HEAD_IN: usize = 40;
const HEAD_OUT: usize = 6;

fn update_strategy() -> impl Strategy<Value = Update> {
    prop_oneof![
        4 => (0..MAPS, any::<u64>()).prop_map(|(map, presyn)| Update::Stdp { map, presyn }),
        2 => (0..MAPS).prop_map(|map| Update::Penalty { map }),
        1 => (1..20usize).prop_map(|k| Update::Schedule { images: k * 1000 }),
        4 => (0..HEAD_OUT, any::<bool>(), any::<u64>()).prop_map(|(winner, hit, active)| Update::Rstdp { winner, hit, active }),
    ]
}

fn weight_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![1 => Just(0.0), 1 => Just(1.0), 8 => 0.0..=1.0f64], n)
}

fn in_unit(w: &[f64]) -> bool {
    w.iter().all(|x| (0.0..=1.0).contains(x))
}

/// Applies random sequences of STDP, homeostasis, rate-schedule and R-STDP
/// updates, checking after every one that all weights stay in [0, 1] and the
/// convergence factor in [0, 0.25]. Returns the number of updates applied.
pub fn weight_domain_suite(sequences: u32, per_sequence: usize) -> Result<u64, String> {
    let applied = Cell::new(0u64);
    let strategy = (
        weight_strategy(MAPS * TAPS),
        weight_strategy(HEAD_IN * HEAD_OUT),
        0.0001..0.15f64,
        0.0001..0.15f64,
        0.0..=1.0f64,
        prop::collection::vec(update_strategy(), per_sequence),
    );
    run(runner(sequences, 5), strategy, |(conv_w, head_w, a_plus, a_minus, init_miss, updates)| {
        let mut kernel = ConvKernel::filled(MAPS, 2, 5, 0.0);
        kernel.weights = conv_w;
        kernel.a_plus = a_plus;
        kernel.a_minus = a_minus;
        let mut head = RstdpHead::new(HEAD_IN, HEAD_OUT, 1, head_w).unwrap();
        head.rates = RstdpRates::default();
        let mut tracker = HitMissTracker::new(RatioMode::PerImage, 50, init_miss).unwrap();
        for u in updates {
            match u {
                Update::Stdp { map, presyn } => {
                    let mask: Vec<bool> = (0..TAPS).map(|i| presyn >> (i % 64) & 1 == 1).collect();
                    stdp_update(&mut kernel, map, &mask);
                }
                Update::Penalty { map } => homeostasis_penalty(&mut kernel, map),
                Update::Schedule { images } => {
                    double_learning_rates(&mut kernel, images);
                }
                Update::Rstdp { winner, hit, active } => {
                    let counts: Vec<f64> = (0..HEAD_IN).map(|i| (active >> i & 1) as f64).collect();
                    head.update(winner, hit, &counts, &tracker);
                    tracker.record(hit);
                }
            }
            applied.set(applied.get() + 1);
            prop_assert!(in_unit(&kernel.weights), "convolution weight left [0, 1] after {u:?}");
            prop_assert!(in_unit(&head.weights), "R-STDP weight left [0, 1] after {u:?}");
            let cf = convergence_factor(&kernel);
            prop_assert!((0.0..=0.25).contains(&cf), "convergence factor {cf}");
        }
        Ok(())
    })?;
    Ok(applied.get())
}

// --- FCN gradients ------------------------------------------------------

#[derive(Clone, Debug)]
struct GradCase {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    lambda: f64,
    extra_total: usize,
}

fn grad_case() -> impl Strategy<Value = GradCase> {
    (2..8usize, 2..6usize, 1..8usize).prop_flat_map(|(n_in, n_out, n_rows)| {
        let signed = || prop_oneof![-1.0..-0.05f64, 0.05..1.0f64];
        (
            prop::collection::vec(-1.0..1.0f64, n_in * n_out),
            prop::collection::vec(-0.5..0.5f64, n_out),
            prop::collection::vec(prop::collection::vec(signed(), n_in), n_rows),
            prop::collection::vec(0..n_out as u8, n_rows),
            0.0..1.0f64,
            0..20usize,
        )
            .prop_map(move |(weights, biases, rows, labels, lambda, extra_total)| GradCase {
                n_in,
                n_out,
                weights,
                biases,
                rows,
                labels,
                lambda,
                extra_total,
            })
    })
}

/// Largest relative deviation between analytic gradients and central finite
/// differences of the cost, per cost function, over random small heads.
pub fn gradient_suite(heads: u32) -> Result<[(Cost, f64); 2], String> {
    let mut out = [(Cost::CrossEntropy, 0.0), (Cost::Quadratic, 0.0)];
    for (cost, worst) in &mut out {
        let max_err = Cell::new(0.0f64);
        run(runner(heads, 6), grad_case(), |case| {
            let params = FcnParams {
                cost: *cost,
                lambda: case.lambda,
                ..FcnParams::default()
            };
            let mut head = FcnHead::zeros(case.n_in, case.n_out, params);
            head.weights = case.weights.clone();
            head.biases = case.biases.clone();
            let data = FeatureMatrix::from_rows(case.n_in, case.rows.clone(), case.labels.clone()).unwrap();
            let rows: Vec<usize> = (0..data.rows()).collect();
            let n_total = rows.len() + case.extra_total;
            let analytic = head.gradients(&data, &rows, n_total).unwrap();
            let h = 1e-5;
            let numeric = |head: &FcnHead, bump: &dyn Fn(&mut FcnHead, f64)| {
                let (mut up, mut down) = (head.clone(), head.clone());
                bump(&mut up, h);
                bump(&mut down, -h);
                (up.cost(&data, &rows, n_total).unwrap() - down.cost(&data, &rows, n_total).unwrap()) / (2.0 * h)
            };
            let record = |a: f64, n: f64| {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                max_err.set(max_err.get().max(rel));
            };
            for i in 0..head.weights.len() {
                record(analytic.weights[i], numeric(&head, &|hd, d| hd.weights[i] += d));
            }
            for k in 0..head.n_out {
                record(analytic.biases[k], numeric(&head, &|hd, d| hd.biases[k] += d));
            }
            Ok(())
        })?;
        *worst = max_err.get();
    }
    Ok(out)
}

// --- reconstruction -----------------------------------------------------

/// Direct superposition over the receptive field: second-layer weight
/// `(n, m, i, j)` reaches first-layer output `(2i, 2j)`, whose kernel tap
/// `(c, r, s)` covers canvas cell `(2i + r, 2j + s)`.
pub fn brute_force_l4(w_c2: &ConvKernel, w_c1: &ConvKernel) -> Vec<[Vec<f64>; 2]> {
    let size = 2 * w_c2.size + w_c1.size - 1;
    let mut out = Vec::new();
    for n in 0..w_c2.maps_out {
        let mut planes = [vec![0.0; size * size], vec![0.0; size * size]];
        for m in 0..w_c2.maps_in {
            for i in 0..w_c2.size {
                for j in 0..w_c2.size {
                    let w2 = w_c2.get(n, m, i, j);
                    for (c, plane) in planes.iter_mut().enumerate() {
                        for r in 0..w_c1.size {
                            for s in 0..w_c1.size {
                                plane[(2 * i + r) * size + 2 * j + s] += w2 * w_c1.get(m, c, r, s);
                            }
                        }
                    }
                }
            }
        }
        out.push(planes);
    }
    out
}

fn kernel_strategy(maps_out: usize, maps_in: usize, size: usize, value: BoxedStrategy<f64>) -> impl Strategy<Value = ConvKernel> {
    prop::collection::vec(value, maps_out * maps_in * size * size).prop_map(move |w| {
        let mut k = ConvKernel::filled(maps_out, maps_in, size, 0.0);
        k.weights = w;
        k
    })
}

fn recon_pair(value: BoxedStrategy<f64>) -> impl Strategy<Value = (ConvKernel, ConvKernel, ConvKernel)> {
    (1..4usize, 1..5usize, prop_oneof![Just(3usize), Just(5)], prop_oneof![Just(3usize), Just(5)]).prop_flat_map(
        move |(n2, n1, k2, k1)| {
            (
                kernel_strategy(n2, n1, k2, value.clone()),
                kernel_strategy(n2, n1, k2, value.clone()),
                kernel_strategy(n1, 2, k1, value.clone()),
            )
        },
    )
}

/// Agreement of `reconstruct_l4` with [`brute_force_l4`] (largest absolute
/// difference) and exact additivity in the second-layer weights, checked on
/// dyadic weights so every sum is exact.
pub fn recon_suite(cases: u32) -> Result<f64, String> {
    let max_diff = Cell::new(0.0f64);
    run(runner(cases, 9), recon_pair((-1.0..1.0f64).boxed()), |(a, _, w_c1)| {
        let fast = reconstruct_l4(&a, &w_c1).unwrap();
        let slow = brute_force_l4(&a, &w_c1);
        prop_assert_eq!(fast.len(), slow.len());
        for (f, s) in fast.iter().zip(&slow) {
            prop_assert_eq!(f.size, canvas_size(a.size, w_c1.size));
            for (x, y) in f.on.iter().zip(&s[0]).chain(f.off.iter().zip(&s[1])) {
                max_diff.set(max_diff.get().max((x - y).abs()));
            }
        }
        Ok(())
    })?;
    let dyadic = (-64i32..=64).prop_map(|k| f64::from(k) / 32.0).boxed();
    run(runner(cases, 10), recon_pair(dyadic), |(a, b, w_c1)| {
        let mut sum = a.clone();
        for (s, w) in sum.weights.iter_mut().zip(&b.weights) {
            *s += w;
        }
        let ra = reconstruct_l4(&a, &w_c1).unwrap();
        let rb = reconstruct_l4(&b, &w_c1).unwrap();
        let rs = reconstruct_l4(&sum, &w_c1).unwrap();
        for ((x, y), z) in ra.iter().zip(&rb).zip(&rs) {
            for c in 0..2 {
                let added: Vec<f64> = x.plane(c).iter().zip(y.plane(c)).map(|(p, q)| p + q).collect();
                prop_assert_eq!(&added[..], z.plane(c), "reconstruction is not additive");
            }
        }
        Ok(())
    })?;
    Ok(max_diff.get())
}
