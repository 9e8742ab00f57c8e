//! A spiking convolution layer: inference with lateral inhibition and the
//! per-image STDP training step.

use crate::error::{Error, Result};
use crate::layer::inhibition::{fire_and_inhibit, stdp_competition, FiredNeuron, InhibitionConfig, LayerState};
use crate::layer::kernel::ConvKernel;
use crate::layer::potential::{conv_accumulate, PotentialTensor};
use crate::layer::stdp::{double_learning_rates, homeostasis_gate, homeostasis_penalty, stdp_update, HomeostasisGate};
use crate::spikes::SpikeTensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedSpike {
    pub t: usize,
    pub neuron: FiredNeuron,
}

/// Spikes emitted by one convolution layer for one image, in bin order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvOutput {
    pub bins: usize,
    pub maps: usize,
    pub rows: usize,
    pub cols: usize,
    pub spikes: Vec<TimedSpike>,
}

impl ConvOutput {
    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }
}

/// What happened during one training image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStep {
    pub spikes: usize,
    pub winners: Vec<TimedSpike>,
    pub updates: usize,
    pub penalties: usize,
    pub rates_doubled: bool,
}

#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kernel: ConvKernel,
    pub inhibition: InhibitionConfig,
}

impl ConvLayer {
    pub fn new(kernel: ConvKernel, inhibition: InhibitionConfig) -> Self {
        ConvLayer { kernel, inhibition }
    }

    fn check_input(&self, input: &SpikeTensor) -> Result<PotentialTensor> {
        let shape = input.shape();
        if shape.channels != self.kernel.maps_in {
            return Err(Error::shape(format!(
                "{} input channels for a kernel expecting {}",
                shape.channels, self.kernel.maps_in
            )));
        }
        PotentialTensor::for_input(&self.kernel, shape.rows, shape.cols)
    }

    /// Runs one image through the frozen layer. Lateral inhibition applies if
    /// configured; competition never does.
    pub fn forward(&self, input: &SpikeTensor) -> Result<ConvOutput> {
        let mut potentials = self.check_input(input)?;
        let mut state = LayerState::new(potentials.maps, potentials.rows, potentials.cols);
        state.begin_image();
        let bins = input.shape().bins;
        let mut spikes = Vec::new();
        for t in 0..bins {
            let bin = input.bin(t);
            if bin.is_empty() {
                continue;
            }
            conv_accumulate(bin, &self.kernel, &mut potentials)?;
            spikes.extend(
                fire_and_inhibit(&potentials, &mut state, &self.inhibition)
                    .into_iter()
                    .map(|neuron| TimedSpike { t, neuron }),
            );
        }
        Ok(ConvOutput {
            bins,
            maps: potentials.maps,
            rows: potentials.rows,
            cols: potentials.cols,
            spikes,
        })
    }

    /// Spikes that would survive lateral inhibition and STDP competition in
    /// a training pass, without touching the weights.
    pub fn competition_winners(&self, input: &SpikeTensor) -> Result<Vec<TimedSpike>> {
        let mut potentials = self.check_input(input)?;
        let mut state = LayerState::new(potentials.maps, potentials.rows, potentials.cols);
        state.begin_image();
        let mut winners = Vec::new();
        for t in 0..input.shape().bins {
            let bin = input.bin(t);
            if bin.is_empty() {
                continue;
            }
            conv_accumulate(bin, &self.kernel, &mut potentials)?;
            let fired = fire_and_inhibit(&potentials, &mut state, &self.inhibition);
            if !fired.is_empty() {
                winners.extend(
                    stdp_competition(&mut state, &fired, self.inhibition.competition_radius)
                        .into_iter()
                        .map(|neuron| TimedSpike { t, neuron }),
                );
            }
        }
        Ok(winners)
    }

    /// Fresh per-image state sized for inputs of `rows x cols`.
    pub fn new_state(&self, rows: usize, cols: usize) -> Result<LayerState> {
        let p = PotentialTensor::for_input(&self.kernel, rows, cols)?;
        Ok(LayerState::new(p.maps, p.rows, p.cols))
    }

    /// One unsupervised training image: accumulate, fire, compete, and apply
    /// homeostasis-gated STDP to the winners' maps as they win. Learning
    /// rates double at every 1000th image.
    pub fn train_image(&mut self, input: &SpikeTensor, state: &mut LayerState) -> Result<TrainStep> {
        let mut potentials = self.check_input(input)?;
        if (state.maps, state.rows, state.cols) != (potentials.maps, potentials.rows, potentials.cols) {
            return Err(Error::shape("layer state does not match the input geometry"));
        }
        let shape = input.shape();
        let first_bins = input.first_spike_bins();
        let k = self.kernel.size;
        let mut presyn = vec![false; self.kernel.map_len()];
        let mut step = TrainStep::default();

        state.begin_image();
        for t in 0..shape.bins {
            let bin = input.bin(t);
            if bin.is_empty() {
                continue;
            }
            conv_accumulate(bin, &self.kernel, &mut potentials)?;
            let fired = fire_and_inhibit(&potentials, state, &self.inhibition);
            step.spikes += fired.len();
            if !self.inhibition.competition || fired.is_empty() {
                continue;
            }
            for winner in stdp_competition(state, &fired, self.inhibition.competition_radius) {
                step.winners.push(TimedSpike { t, neuron: winner });
                match homeostasis_gate(state, winner.map) {
                    HomeostasisGate::Allow => {
                        let mut idx = 0;
                        for c in 0..shape.channels {
                            for i in 0..k {
                                for j in 0..k {
                                    let n = shape.neuron_index(c, winner.u + i, winner.v + j);
                                    presyn[idx] = first_bins[n].is_some_and(|b| b as usize <= t);
                                    idx += 1;
                                }
                            }
                        }
                        stdp_update(&mut self.kernel, winner.map, &presyn);
                        step.updates += 1;
                    }
                    HomeostasisGate::Penalize => {
                        homeostasis_penalty(&mut self.kernel, winner.map);
                        step.penalties += 1;
                    }
                }
            }
        }
        state.end_image();
        step.rates_doubled = double_learning_rates(&mut self.kernel, state.images_seen);
        Ok(step)
    }
}
