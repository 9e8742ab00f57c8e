//! Simplified multiplicative STDP, homeostasis and the learning-rate schedule.

use crate::layer::inhibition::{LayerState, HOMEOSTASIS_MAX_UPDATES};
use crate::layer::kernel::ConvKernel;

pub const RATE_DOUBLING_PERIOD: usize = 1000;
/// Doubling stops once `a_plus` would exceed this.
pub const A_PLUS_CAP: f64 = 0.15;

/// `w + a w (1 - w)` for potentiation, `w - a w (1 - w)` for depression.
///
/// For `0 <= a <= 1` the result stays in [0, 1]; the clamp only absorbs
/// rounding at the ends.
#[inline]
pub fn stdp_step(w: f64, rate: f64, potentiate: bool) -> f64 {
    let delta = rate * w * (1.0 - w);
    let next = if potentiate { w + delta } else { w - delta };
    next.clamp(0.0, 1.0)
}

/// Updates the kernel of `map`: weights whose presynaptic neuron fired at or
/// before the winner are potentiated, all others depressed.
///
/// `presyn_fired_before` is laid out like one map's kernel, `(maps_in, k, k)`.
pub fn stdp_update(kernel: &mut ConvKernel, map: usize, presyn_fired_before: &[bool]) {
    assert_eq!(presyn_fired_before.len(), kernel.map_len());
    let (a_plus, a_minus) = (kernel.a_plus, kernel.a_minus);
    for (w, &before) in kernel.map_weights_mut(map).iter_mut().zip(presyn_fired_before) {
        *w = stdp_step(*w, if before { a_plus } else { a_minus }, before);
    }
}

/// Depresses every weight of `map`.
pub fn homeostasis_penalty(kernel: &mut ConvKernel, map: usize) {
    let a_minus = kernel.a_minus;
    for w in kernel.map_weights_mut(map) {
        *w = stdp_step(*w, a_minus, false);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomeostasisGate {
    Allow,
    Penalize,
}

/// Counts an update attempt by `map`; the first two per homeostasis window
/// are allowed.
pub fn homeostasis_gate(state: &mut LayerState, map: usize) -> HomeostasisGate {
    state.homeo_counter[map] += 1;
    if state.homeo_counter[map] <= HOMEOSTASIS_MAX_UPDATES {
        HomeostasisGate::Allow
    } else {
        HomeostasisGate::Penalize
    }
}

/// Doubles both learning rates at every 1000-image mark until `a_plus` would
/// pass [`A_PLUS_CAP`]. Returns whether the rates changed.
pub fn double_learning_rates(kernel: &mut ConvKernel, images_seen: usize) -> bool {
    if images_seen == 0 || images_seen % RATE_DOUBLING_PERIOD != 0 {
        return false;
    }
    if kernel.a_plus * 2.0 > A_PLUS_CAP {
        return false;
    }
    kernel.a_plus *= 2.0;
    kernel.a_minus *= 2.0;
    true
}
