//! Threshold firing, lateral inhibition and STDP competition.

use crate::layer::potential::PotentialTensor;

/// A neuron that fired, with the membrane potential it fired at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiredNeuron {
    pub map: usize,
    pub u: usize,
    pub v: usize,
    pub potential: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InhibitionConfig {
    /// Firing threshold; a neuron fires when its potential is strictly above it.
    pub threshold: f64,
    /// Competition window half-width: an 11x11 window has radius 5.
    pub competition_radius: usize,
    pub lateral_inhibition: bool,
    /// Only meaningful while training.
    pub competition: bool,
    pub pool_lateral_inhibition: bool,
}

impl Default for InhibitionConfig {
    fn default() -> Self {
        InhibitionConfig {
            threshold: 15.0,
            competition_radius: 5,
            lateral_inhibition: true,
            competition: true,
            pool_lateral_inhibition: false,
        }
    }
}

pub const HOMEOSTASIS_WINDOW: usize = 5;
pub const HOMEOSTASIS_MAX_UPDATES: u32 = 2;

/// Per-image bookkeeping for one convolution layer.
#[derive(Clone, Debug)]
pub struct LayerState {
    pub maps: usize,
    pub rows: usize,
    pub cols: usize,
    /// Neuron `(map, u, v)` has fired during the current image.
    pub fired: Vec<bool>,
    /// Location `(u, v)` is owned by this map for the rest of the image.
    pub map_locked: Vec<Option<usize>>,
    /// Competition winners of the current image, in the order they won.
    pub competition_winners: Vec<FiredNeuron>,
    /// Map already won its single update for the current image.
    pub map_updated: Vec<bool>,
    /// Update attempts per map in the current homeostasis window.
    pub homeo_counter: Vec<u32>,
    pub images_seen: usize,
}

impl LayerState {
    pub fn new(maps: usize, rows: usize, cols: usize) -> Self {
        LayerState {
            maps,
            rows,
            cols,
            fired: vec![false; maps * rows * cols],
            map_locked: vec![None; rows * cols],
            competition_winners: Vec::new(),
            map_updated: vec![false; maps],
            homeo_counter: vec![0; maps],
            images_seen: 0,
        }
    }

    /// Clears per-image state. Homeostasis counters restart at the beginning
    /// of every tumbling window.
    pub fn begin_image(&mut self) {
        self.fired.fill(false);
        self.map_locked.fill(None);
        self.competition_winners.clear();
        self.map_updated.fill(false);
        if self.images_seen % HOMEOSTASIS_WINDOW == 0 {
            self.homeo_counter.fill(0);
        }
    }

    pub fn end_image(&mut self) {
        self.images_seen += 1;
    }

    #[inline]
    fn neuron(&self, map: usize, u: usize, v: usize) -> usize {
        (map * self.rows + u) * self.cols + v
    }

    pub fn has_fired(&self, map: usize, u: usize, v: usize) -> bool {
        self.fired[self.neuron(map, u, v)]
    }

    /// True when `(u, v)` shares some `(2r+1)^2` window with an earlier winner.
    fn suppressed(&self, u: usize, v: usize, radius: usize) -> bool {
        self.competition_winners
            .iter()
            .any(|w| w.u.abs_diff(u) <= 2 * radius && w.v.abs_diff(v) <= 2 * radius)
    }
}

/// Fires every eligible neuron above threshold for the current bin.
///
/// With lateral inhibition, at each location only the map with the highest
/// potential fires (lower map index on ties) and that map owns the location
/// until the end of the image. A neuron fires at most once per image.
pub fn fire_and_inhibit(potentials: &PotentialTensor, state: &mut LayerState, cfg: &InhibitionConfig) -> Vec<FiredNeuron> {
    debug_assert_eq!(
        (potentials.maps, potentials.rows, potentials.cols),
        (state.maps, state.rows, state.cols)
    );
    let mut out = Vec::new();
    for u in 0..state.rows {
        for v in 0..state.cols {
            let loc = u * state.cols + v;
            if cfg.lateral_inhibition {
                if state.map_locked[loc].is_some() {
                    continue;
                }
                let mut best: Option<(usize, f64)> = None;
                for map in 0..state.maps {
                    let p = potentials.get(map, u, v);
                    if p > cfg.threshold && !state.has_fired(map, u, v) && best.is_none_or(|(_, bp)| p > bp) {
                        best = Some((map, p));
                    }
                }
                if let Some((map, potential)) = best {
                    let n = state.neuron(map, u, v);
                    state.fired[n] = true;
                    state.map_locked[loc] = Some(map);
                    out.push(FiredNeuron { map, u, v, potential });
                }
            } else {
                for map in 0..state.maps {
                    let p = potentials.get(map, u, v);
                    let n = state.neuron(map, u, v);
                    if p > cfg.threshold && !state.fired[n] {
                        state.fired[n] = true;
                        out.push(FiredNeuron { map, u, v, potential: p });
                    }
                }
            }
        }
    }
    out
}

/// Picks the neurons allowed to update their map's kernel this bin.
///
/// Each map not yet updated this image proposes its highest-potential fired
/// neuron outside every earlier winner's window. Proposals are accepted
/// greedily by descending potential (ties: lower map, then row-major). An
/// accepted winner uses up its map's update and suppresses, across all maps
/// and for the rest of the image, every neuron that would share a
/// `(2r+1) x (2r+1)` window with it. Winners are therefore more than `2r`
/// apart in Chebyshev distance.
pub fn stdp_competition(state: &mut LayerState, fired: &[FiredNeuron], radius: usize) -> Vec<FiredNeuron> {
    let mut candidates: Vec<Option<FiredNeuron>> = vec![None; state.maps];
    for f in fired {
        if state.map_updated[f.map] || state.suppressed(f.u, f.v, radius) {
            continue;
        }
        let slot = &mut candidates[f.map];
        let better = match slot {
            None => true,
            Some(c) => f.potential > c.potential || (f.potential == c.potential && (f.u, f.v) < (c.u, c.v)),
        };
        if better {
            *slot = Some(*f);
        }
    }
    let mut candidates: Vec<FiredNeuron> = candidates.into_iter().flatten().collect();
    candidates.sort_by(|a, b| {
        b.potential
            .total_cmp(&a.potential)
            .then(a.map.cmp(&b.map))
            .then((a.u, a.v).cmp(&(b.u, b.v)))
    });

    let mut winners = Vec::new();
    for c in candidates {
        if state.suppressed(c.u, c.v, radius) {
            continue;
        }
        state.map_updated[c.map] = true;
        state.competition_winners.push(c);
        winners.push(c);
    }
    winners
}

#[cfg(test)]
mod tests {
    use super::*;

    fn potentials(maps: usize, rows: usize, cols: usize, set: &[(usize, usize, usize, f64)]) -> PotentialTensor {
        let mut p = PotentialTensor::zeros(maps, rows, cols);
        for &(m, u, v, x) in set {
            let i = p.index(m, u, v);
            p.values[i] = x;
        }
        p
    }

    fn cfg(lateral: bool) -> InhibitionConfig {
        InhibitionConfig {
            lateral_inhibition: lateral,
            ..InhibitionConfig::default()
        }
    }

    #[test]
    fn single_neuron_above_threshold_fires_once() {
        let p = potentials(1, 3, 3, &[(0, 1, 1, 16.0), (0, 0, 0, 15.0)]);
        let mut s = LayerState::new(1, 3, 3);
        s.begin_image();
        let f = fire_and_inhibit(&p, &mut s, &cfg(true));
        assert_eq!(f, vec![FiredNeuron { map: 0, u: 1, v: 1, potential: 16.0 }]);
        // Same potentials next bin: nothing new fires.
        assert!(fire_and_inhibit(&p, &mut s, &cfg(true)).is_empty());
    }

    #[test]
    fn highest_map_wins_location() {
        let p = potentials(2, 1, 1, &[(0, 0, 0, 15.7), (1, 0, 0, 16.2)]);
        let mut s = LayerState::new(2, 1, 1);
        s.begin_image();
        let f = fire_and_inhibit(&p, &mut s, &cfg(true));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].map, 1);
        // Map 0 grows larger later but the location is locked.
        let p2 = potentials(2, 1, 1, &[(0, 0, 0, 40.0), (1, 0, 0, 16.2)]);
        assert!(fire_and_inhibit(&p2, &mut s, &cfg(true)).is_empty());
    }

    #[test]
    fn tie_goes_to_lower_map() {
        let p = potentials(3, 1, 1, &[(1, 0, 0, 20.0), (2, 0, 0, 20.0)]);
        let mut s = LayerState::new(3, 1, 1);
        s.begin_image();
        assert_eq!(fire_and_inhibit(&p, &mut s, &cfg(true))[0].map, 1);
    }

    #[test]
    fn without_inhibition_all_fire() {
        let p = potentials(2, 1, 1, &[(0, 0, 0, 15.7), (1, 0, 0, 16.2)]);
        let mut s = LayerState::new(2, 1, 1);
        s.begin_image();
        assert_eq!(fire_and_inhibit(&p, &mut s, &cfg(false)).len(), 2);
    }

    fn fired(map: usize, u: usize, v: usize, potential: f64) -> FiredNeuron {
        FiredNeuron { map, u, v, potential }
    }

    #[test]
    fn single_candidate_wins() {
        let mut s = LayerState::new(4, 23, 23);
        s.begin_image();
        let w = stdp_competition(&mut s, &[fired(2, 4, 4, 17.0)], 5);
        assert_eq!(w, vec![fired(2, 4, 4, 17.0)]);
        assert!(s.map_updated[2]);
    }

    #[test]
    fn near_candidates_suppressed_far_ones_survive() {
        let mut s = LayerState::new(2, 23, 23);
        s.begin_image();
        // Eight pixels apart: inside one 11x11 window.
        let w = stdp_competition(&mut s, &[fired(0, 2, 2, 18.0), fired(1, 2, 10, 20.0)], 5);
        assert_eq!(w, vec![fired(1, 2, 10, 20.0)]);

        let mut s = LayerState::new(2, 23, 23);
        s.begin_image();
        let w = stdp_competition(&mut s, &[fired(0, 2, 0, 18.0), fired(1, 2, 12, 20.0)], 5);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn per_map_argmax_and_one_update_per_image() {
        let mut s = LayerState::new(1, 23, 23);
        s.begin_image();
        let w = stdp_competition(&mut s, &[fired(0, 0, 0, 16.0), fired(0, 20, 20, 19.0)], 5);
        assert_eq!(w, vec![fired(0, 20, 20, 19.0)]);
        // A later bin cannot update map 0 again.
        assert!(stdp_competition(&mut s, &[fired(0, 0, 0, 30.0)], 5).is_empty());
    }

    #[test]
    fn earlier_winner_suppresses_later_bins() {
        let mut s = LayerState::new(2, 23, 23);
        s.begin_image();
        stdp_competition(&mut s, &[fired(0, 10, 10, 16.0)], 5);
        assert!(stdp_competition(&mut s, &[fired(1, 14, 6, 40.0)], 5).is_empty());
        assert!(stdp_competition(&mut s, &[fired(1, 16, 16, 40.0)], 5).is_empty());
        assert_eq!(stdp_competition(&mut s, &[fired(1, 10, 21, 40.0)], 5).len(), 1);
    }

    #[test]
    fn homeostasis_counters_reset_per_window() {
        let mut s = LayerState::new(1, 1, 1);
        for image in 0..12 {
            s.begin_image();
            if image % 5 == 0 {
                assert_eq!(s.homeo_counter[0], 0);
            }
            s.homeo_counter[0] += 1;
            s.end_image();
        }
    }
}
