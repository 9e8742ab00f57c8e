//! Layer-wise unsupervised STDP training.

use crate::error::{Error, Result};
use crate::layer::ConvLayer;
use crate::network::Network;
use crate::spikes::SpikeTensor;
use crate::train::monitor::{convergence_factor, weight_delta, MonitorSample, MonitorSeries, StopRule};

/// Training schedule for one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerPhase {
    pub layer: usize,
    /// Images to present; the dataset is cycled if it is shorter.
    pub images: usize,
    pub stop: StopRule,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    /// Phases run in order; each must target a later layer than the previous.
    pub phases: Vec<LayerPhase>,
    pub monitor_stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerReport {
    pub layer: usize,
    pub images: usize,
    pub stopped_early: bool,
    pub monitor: MonitorSeries,
    /// Mean output spikes per training image.
    pub spikes_per_image: f64,
    pub updates: usize,
    pub penalties: usize,
}

/// Trains one layer on inputs that already passed through the frozen layers
/// below it. `on_image` sees the layer after every image.
pub fn train_conv_layer<F>(
    layer: &mut ConvLayer,
    inputs: &[SpikeTensor],
    images: usize,
    stop: StopRule,
    monitor_stride: usize,
    mut on_image: F,
) -> Result<LayerReport>
where
    F: FnMut(usize, &ConvLayer),
{
    let mut report = LayerReport {
        layer: 0,
        images: 0,
        stopped_early: false,
        monitor: MonitorSeries::new(monitor_stride),
        spikes_per_image: 0.0,
        updates: 0,
        penalties: 0,
    };
    if images == 0 {
        return Ok(report);
    }
    let Some(first) = inputs.first() else {
        return Err(Error::EmptyDataset);
    };
    if monitor_stride == 0 {
        return Err(Error::param("monitor stride must be positive"));
    }
    let shape = first.shape();
    let mut state = layer.new_state(shape.rows, shape.cols)?;
    let mut snapshot = layer.kernel.clone();
    let mut spikes = 0usize;
    for (n, input) in inputs.iter().cycle().take(images).enumerate() {
        let step = layer.train_image(input, &mut state)?;
        spikes += step.spikes;
        report.updates += step.updates;
        report.penalties += step.penalties;
        report.images = n + 1;
        on_image(n + 1, layer);
        if (n + 1) % monitor_stride == 0 {
            let sample = MonitorSample {
                sample: report.monitor.samples.len() + 1,
                images: n + 1,
                weight_delta: weight_delta(&snapshot, &layer.kernel)?,
                convergence_factor: convergence_factor(&layer.kernel),
            };
            report.monitor.samples.push(sample);
            snapshot.clone_from(&layer.kernel);
            if stop.triggered(&report.monitor) {
                report.stopped_early = n + 1 < images;
                break;
            }
        }
    }
    report.spikes_per_image = spikes as f64 / report.images as f64;
    Ok(report)
}

/// Runs every phase of `plan`, propagating inputs through the already
/// trained (frozen) layers below the one being trained.
pub fn train_network(net: &mut Network, plan: &TrainPlan, inputs: &[SpikeTensor]) -> Result<Vec<LayerReport>> {
    let mut reports = Vec::new();
    let mut last: Option<usize> = None;
    for phase in &plan.phases {
        if phase.layer >= net.layers.len() {
            return Err(Error::param(format!("plan trains layer {} of {}", phase.layer, net.layers.len())));
        }
        if last.is_some_and(|l| phase.layer <= l) {
            return Err(Error::param("plan phases must train strictly later layers"));
        }
        last = Some(phase.layer);
        let propagated: Vec<SpikeTensor> = if phase.layer == 0 {
            inputs.to_vec()
        } else {
            use rayon::prelude::*;
            let frozen = Network::new(net.layers[..phase.layer].to_vec());
            inputs
                .par_iter()
                .take(phase.images.min(inputs.len()))
                .map(|x| frozen.propagate(x, phase.layer))
                .collect::<Result<_>>()?
        };
        let layer = &mut net.layers[phase.layer];
        let mut report = train_conv_layer(layer, &propagated, phase.images, phase.stop, plan.monitor_stride, |_, _| {})?;
        report.layer = phase.layer;
        reports.push(report);
    }
    Ok(reports)
}
