//! Sequential two-task training of a classifier head with optional rehearsal.
//!
//! Features come from a frozen convolutional front end, so only the head
//! learns in either phase. Phase 1 fits task A; phase 2 continues from that
//! head on task B plus a fraction of task A.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::heads::{FcnHead, FcnParams, FeatureMatrix};
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq)]
pub struct ForgetPlan {
    pub task_a: Vec<u8>,
    pub task_b: Vec<u8>,
    /// Training images taken per class, in dataset order; `None` keeps all.
    pub per_class: Option<usize>,
    /// Share of each task-A class replayed during phase 2.
    pub rehearsal_fraction: f64,
    pub epochs: usize,
    /// Images between probes in the incremental run; 0 disables it.
    pub probe_stride: usize,
    pub fcn: FcnParams,
    pub seed: u64,
}

impl Default for ForgetPlan {
    fn default() -> Self {
        Self {
            task_a: (0..5).collect(),
            task_b: (5..10).collect(),
            per_class: None,
            rehearsal_fraction: 0.0,
            epochs: 75,
            probe_stride: 250,
            fcn: FcnParams::default(),
            seed: 0,
        }
    }
}

/// Default rehearsal fractions for the forgetting sweep.
pub const REHEARSAL_FRACTIONS: [f64; 6] = [0.0, 0.10, 0.15, 0.25, 0.275, 0.30];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyPoint {
    /// Epoch within the phase, -1 before any training in it; image count for
    /// incremental probes.
    pub step: i64,
    pub task_a: f64,
    pub task_b: f64,
    pub combined: f64,
}

#[derive(Clone, Debug)]
pub struct ForgetReport {
    pub rehearsal_images: usize,
    pub phase1: Vec<AccuracyPoint>,
    pub phase2: Vec<AccuracyPoint>,
    /// Single pass over the phase-2 pool from the phase-1 head.
    pub incremental: Vec<AccuracyPoint>,
    pub head: FcnHead,
}

impl ForgetReport {
    /// Last phase-2 probe.
    pub fn final_point(&self) -> Option<AccuracyPoint> {
        self.phase2.last().copied()
    }
}

/// CSV with columns `epoch,task_a,task_b,combined`.
pub fn curve_csv(points: &[AccuracyPoint]) -> String {
    let mut out = String::from("epoch,task_a,task_b,combined\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.step, p.task_a, p.task_b, p.combined);
    }
    out
}

struct Probe {
    a: FeatureMatrix,
    b: FeatureMatrix,
    all: FeatureMatrix,
}

impl Probe {
    fn new(test: &FeatureMatrix, plan: &ForgetPlan) -> Self {
        let both: Vec<u8> = plan.task_a.iter().chain(&plan.task_b).copied().collect();
        Self {
            a: test.filter_classes(&plan.task_a),
            b: test.filter_classes(&plan.task_b),
            all: test.filter_classes(&both),
        }
    }

    fn measure(&self, head: &FcnHead, step: i64) -> Result<AccuracyPoint> {
        let acc = |m: &FeatureMatrix| if m.is_empty() { Ok(0.0) } else { head.accuracy(m) };
        Ok(AccuracyPoint {
            step,
            task_a: acc(&self.a)?,
            task_b: acc(&self.b)?,
            combined: acc(&self.all)?,
        })
    }
}

/// Row indices of `classes`, at most `per_class` per class, grouped by class.
fn class_rows(data: &FeatureMatrix, classes: &[u8], per_class: Option<usize>) -> Vec<Vec<usize>> {
    classes
        .iter()
        .map(|&c| {
            let rows = (0..data.rows()).filter(|&i| data.label(i) == c);
            match per_class {
                Some(n) => rows.take(n).collect(),
                None => rows.collect(),
            }
        })
        .collect()
}

pub fn run_forgetting(plan: &ForgetPlan, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<ForgetReport> {
    if !(0.0..=1.0).contains(&plan.rehearsal_fraction) {
        return Err(Error::param(format!(
            "rehearsal fraction {} exceeds the task-A pool",
            plan.rehearsal_fraction
        )));
    }
    if train.cols() != test.cols() {
        return Err(Error::shape(format!("train has {} columns, test {}", train.cols(), test.cols())));
    }
    let pool_a = class_rows(train, &plan.task_a, plan.per_class);
    let pool_b: Vec<usize> = class_rows(train, &plan.task_b, plan.per_class).concat();
    if pool_a.iter().all(Vec::is_empty) || pool_b.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut shuffle = rng::stream(plan.seed, streams::SHUFFLE);
    let mut rehearsal = Vec::new();
    for rows in &pool_a {
        let take = (plan.rehearsal_fraction * rows.len() as f64).round() as usize;
        let mut rows = rows.clone();
        rows.shuffle(&mut shuffle);
        rehearsal.extend_from_slice(&rows[..take]);
    }
    rehearsal.sort_unstable();

    let n_classes = plan.task_a.iter().chain(&plan.task_b).map(|&c| usize::from(c) + 1).max().unwrap_or(0);
    let probe = Probe::new(test, plan);
    let mut head = FcnHead::random(train.cols(), n_classes, plan.fcn.clone(), &mut rng::stream(plan.seed, streams::INIT))?;

    // Each phase draws its own shuffle stream so the rehearsal fraction does
    // not change phase-1 ordering.
    let phase_a = train.select(&pool_a.concat());
    let mut order_rng = rng::stream(plan.seed, "phase1");
    let mut phase1 = vec![probe.measure(&head, -1)?];
    for epoch in 0..plan.epochs {
        head.train_epoch(&phase_a, epoch, &mut order_rng)?;
        phase1.push(probe.measure(&head, epoch as i64)?);
    }

    let phase_b = train.select(&[pool_b, rehearsal.clone()].concat());
    let incremental = if plan.probe_stride > 0 {
        incremental_pass(&head, &phase_b, plan, &probe)?
    } else {
        Vec::new()
    };

    let mut order_rng = rng::stream(plan.seed, "phase2");
    let mut phase2 = vec![probe.measure(&head, -1)?];
    for epoch in 0..plan.epochs {
        head.train_epoch(&phase_b, epoch, &mut order_rng)?;
        phase2.push(probe.measure(&head, epoch as i64)?);
    }

    Ok(ForgetReport {
        rehearsal_images: rehearsal.len(),
        phase1,
        phase2,
        incremental,
        head,
    })
}

fn incremental_pass(start: &FcnHead, data: &FeatureMatrix, plan: &ForgetPlan, probe: &Probe) -> Result<Vec<AccuracyPoint>> {
    let mut head = start.clone();
    let mut order: Vec<usize> = (0..data.rows()).collect();
    order.shuffle(&mut rng::stream(plan.seed, "incremental"));
    let batch = plan.fcn.batch_size.max(1);
    let eta = plan.fcn.eta(0);
    let mut points = Vec::new();
    let mut seen = 0;
    let mut next_probe = plan.probe_stride;
    for chunk in order.chunks(batch) {
        head.step(data, chunk, data.rows(), eta)?;
        seen += chunk.len();
        if seen >= next_probe || seen == order.len() {
            points.push(probe.measure(&head, seen as i64)?);
            next_probe = (seen / plan.probe_stride + 1) * plan.probe_stride;
        }
    }
    Ok(points)
}
