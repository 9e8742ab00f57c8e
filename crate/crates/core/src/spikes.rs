//! Binary spike events on a (bin, channel, row, col) lattice.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpikeEvent {
    pub t: u16,
    pub c: u16,
    pub u: u16,
    pub v: u16,
}

impl SpikeEvent {
    pub fn new(t: usize, c: usize, u: usize, v: usize) -> Self {
        SpikeEvent {
            t: t as u16,
            c: c as u16,
            u: u as u16,
            v: v as u16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpikeShape {
    pub bins: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl SpikeShape {
    pub fn new(bins: usize, channels: usize, rows: usize, cols: usize) -> Self {
        SpikeShape {
            bins,
            channels,
            rows,
            cols,
        }
    }

    /// Neurons per bin.
    pub fn neurons(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub fn neuron_index(&self, c: usize, u: usize, v: usize) -> usize {
        (c * self.rows + u) * self.cols + v
    }
}

/// A set of spike events, at most one per lattice point, kept sorted by
/// `(t, c, u, v)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTensor {
    shape: SpikeShape,
    events: Vec<SpikeEvent>,
    /// `bin_start[t]..bin_start[t + 1]` indexes the events of bin `t`.
    bin_start: Vec<usize>,
}

impl SpikeTensor {
    pub fn empty(shape: SpikeShape) -> Self {
        SpikeTensor {
            shape,
            events: Vec::new(),
            bin_start: vec![0; shape.bins + 1],
        }
    }

    /// Builds a tensor from arbitrary events. Duplicates collapse to one spike.
    pub fn from_events<I>(shape: SpikeShape, events: I) -> Result<Self>
    where
        I: IntoIterator<Item = SpikeEvent>,
    {
        let mut events: Vec<SpikeEvent> = events.into_iter().collect();
        for e in &events {
            if e.t as usize >= shape.bins
                || e.c as usize >= shape.channels
                || e.u as usize >= shape.rows
                || e.v as usize >= shape.cols
            {
                return Err(Error::shape(format!(
                    "event {e:?} outside lattice {}x{}x{}x{}",
                    shape.bins, shape.channels, shape.rows, shape.cols
                )));
            }
        }
        events.sort_unstable();
        events.dedup();
        Ok(Self::from_sorted(shape, events))
    }

    /// `events` must already be sorted, deduplicated and in range.
    pub(crate) fn from_sorted(shape: SpikeShape, events: Vec<SpikeEvent>) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0] < w[1]));
        let mut bin_start = vec![0; shape.bins + 1];
        for e in &events {
            bin_start[e.t as usize + 1] += 1;
        }
        for t in 0..shape.bins {
            bin_start[t + 1] += bin_start[t];
        }
        SpikeTensor {
            shape,
            events,
            bin_start,
        }
    }

    pub fn shape(&self) -> SpikeShape {
        self.shape
    }

    pub fn events(&self) -> &[SpikeEvent] {
        &self.events
    }

    pub fn bin(&self, t: usize) -> &[SpikeEvent] {
        &self.events[self.bin_start[t]..self.bin_start[t + 1]]
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn contains(&self, e: SpikeEvent) -> bool {
        (e.t as usize) < self.shape.bins && self.bin(e.t as usize).binary_search(&e).is_ok()
    }

    /// Spike count per channel.
    pub fn channel_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.shape.channels];
        for e in &self.events {
            counts[e.c as usize] += 1;
        }
        counts
    }

    /// Earliest spike bin for each neuron, flattened as `(c, u, v)`.
    pub fn first_spike_bins(&self) -> Vec<Option<u16>> {
        let mut first = vec![None; self.shape.neurons()];
        for e in &self.events {
            let slot = &mut first[self.shape.neuron_index(e.c as usize, e.u as usize, e.v as usize)];
            if slot.is_none() {
                *slot = Some(e.t);
            }
        }
        first
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_collapse_and_bins_index() {
        let shape = SpikeShape::new(3, 2, 2, 2);
        let t = SpikeTensor::from_events(
            shape,
            [
                SpikeEvent::new(2, 0, 1, 1),
                SpikeEvent::new(0, 1, 0, 0),
                SpikeEvent::new(2, 0, 1, 1),
            ],
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.bin(0).len(), 1);
        assert!(t.bin(1).is_empty());
        assert_eq!(t.bin(2), &[SpikeEvent::new(2, 0, 1, 1)]);
        assert!(t.contains(SpikeEvent::new(0, 1, 0, 0)));
        assert_eq!(t.channel_counts(), vec![1, 1]);
    }

    #[test]
    fn out_of_range_event_rejected() {
        let shape = SpikeShape::new(1, 1, 2, 2);
        assert!(SpikeTensor::from_events(shape, [SpikeEvent::new(0, 0, 2, 0)]).is_err());
    }
}
