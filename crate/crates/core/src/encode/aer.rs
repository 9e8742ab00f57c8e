//! Address-event recordings in the N-MNIST binary layout.
//!
//! Each event is 5 bytes, big-endian bit order:
//!
//! | bits  | field                          |
//! |-------|--------------------------------|
//! | 39-32 | x (column)                     |
//! | 31-24 | y (row)                        |
//! | 23    | polarity (1 = ON, 0 = OFF)     |
//! | 22-0  | timestamp in microseconds      |

use std::fs;
use std::path::Path;

use crate::encode::dog::Polarity;
use crate::encode::latency::bin_sizes;
use crate::error::{Error, Result};
use crate::spikes::{SpikeEvent, SpikeShape, SpikeTensor};

pub const EVENT_BYTES: usize = 5;
pub const NMNIST_SENSOR: usize = 34;
const TIMESTAMP_MASK: u32 = (1 << 23) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AerEvent {
    pub x: u8,
    pub y: u8,
    pub polarity: Polarity,
    pub timestamp: u32,
}

/// Decodes raw bytes; events are returned sorted by timestamp (stable).
pub fn parse_aer(bytes: &[u8]) -> Result<Vec<AerEvent>> {
    if bytes.len() % EVENT_BYTES != 0 {
        return Err(Error::parse(
            "AER recording",
            format!("length {} is not a multiple of {EVENT_BYTES}", bytes.len()),
        ));
    }
    let mut events: Vec<AerEvent> = bytes
        .chunks_exact(EVENT_BYTES)
        .map(|b| {
            let polarity = if b[2] & 0x80 != 0 { Polarity::On } else { Polarity::Off };
            let timestamp = (u32::from(b[2]) << 16 | u32::from(b[3]) << 8 | u32::from(b[4])) & TIMESTAMP_MASK;
            AerEvent {
                x: b[0],
                y: b[1],
                polarity,
                timestamp,
            }
        })
        .collect();
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

pub fn encode_aer(events: &[AerEvent]) -> Vec<u8> {
    let mut out = Vec::with_capacity(events.len() * EVENT_BYTES);
    for e in events {
        let ts = e.timestamp & TIMESTAMP_MASK;
        let pol = if e.polarity == Polarity::On { 0x80 } else { 0 };
        out.extend_from_slice(&[e.x, e.y, pol | (ts >> 16) as u8, (ts >> 8) as u8, ts as u8]);
    }
    out
}

/// Coordinate offset applied to events up to and including `until_us`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaccadePhase {
    pub until_us: u32,
    pub dx: i32,
    pub dy: i32,
}

/// Per-saccade-phase motion compensation. Events later than every phase use
/// the last phase's offset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SaccadeTable {
    pub phases: Vec<SaccadePhase>,
}

impl SaccadeTable {
    fn offset(&self, timestamp: u32) -> (i32, i32) {
        self.phases
            .iter()
            .find(|p| timestamp <= p.until_us)
            .or(self.phases.last())
            .map_or((0, 0), |p| (p.dx, p.dy))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AerConfig {
    pub n_bins: usize,
    pub silent_bins: usize,
    pub sensor_rows: usize,
    pub sensor_cols: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub saccade: Option<SaccadeTable>,
}

impl Default for AerConfig {
    fn default() -> Self {
        AerConfig {
            n_bins: 10,
            silent_bins: 2,
            sensor_rows: NMNIST_SENSOR,
            sensor_cols: NMNIST_SENSOR,
            out_rows: 27,
            out_cols: 27,
            saccade: None,
        }
    }
}

/// Bins a decoded recording into a spike tensor: events are split into
/// `n_bins` equal-count bins in timestamp order, optionally shifted by the
/// saccade table, centre-cropped to the output geometry and deduplicated.
pub fn events_to_spikes(events: &[AerEvent], cfg: &AerConfig) -> Result<SpikeTensor> {
    if cfg.n_bins == 0 {
        return Err(Error::param("n_bins must be at least 1"));
    }
    if cfg.out_rows > cfg.sensor_rows || cfg.out_cols > cfg.sensor_cols {
        return Err(Error::param("crop larger than sensor"));
    }
    if let Some(e) = events
        .iter()
        .find(|e| e.x as usize >= cfg.sensor_cols || e.y as usize >= cfg.sensor_rows)
    {
        return Err(Error::parse(
            "AER recording",
            format!(
                "event at ({}, {}) outside {}x{} sensor",
                e.x, e.y, cfg.sensor_cols, cfg.sensor_rows
            ),
        ));
    }
    let top = ((cfg.sensor_rows - cfg.out_rows) / 2) as i64;
    let left = ((cfg.sensor_cols - cfg.out_cols) / 2) as i64;
    let shape = SpikeShape::new(cfg.n_bins + cfg.silent_bins, 2, cfg.out_rows, cfg.out_cols);

    let mut spikes = Vec::with_capacity(events.len());
    let mut next = 0;
    for (bin, size) in bin_sizes(events.len(), cfg.n_bins).into_iter().enumerate() {
        for e in &events[next..next + size] {
            let (dx, dy) = cfg.saccade.as_ref().map_or((0, 0), |s| s.offset(e.timestamp));
            let u = i64::from(e.y) + i64::from(dy) - top;
            let v = i64::from(e.x) + i64::from(dx) - left;
            if (0..cfg.out_rows as i64).contains(&u) && (0..cfg.out_cols as i64).contains(&v) {
                spikes.push(SpikeEvent::new(bin, e.polarity.channel(), u as usize, v as usize));
            }
        }
        next += size;
    }
    SpikeTensor::from_events(shape, spikes)
}

pub fn load_aer_recording(path: &Path, cfg: &AerConfig) -> Result<SpikeTensor> {
    let events = parse_aer(&fs::read(path)?)?;
    events_to_spikes(&events, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: u8, y: u8, on: bool, timestamp: u32) -> AerEvent {
        AerEvent {
            x,
            y,
            polarity: if on { Polarity::On } else { Polarity::Off },
            timestamp,
        }
    }

    fn full_sensor() -> AerConfig {
        AerConfig {
            n_bins: 2,
            silent_bins: 0,
            out_rows: 34,
            out_cols: 34,
            ..AerConfig::default()
        }
    }

    #[test]
    fn byte_layout_round_trip() {
        let events = vec![ev(3, 30, true, 0x7f_ffff), ev(33, 0, false, 12)];
        let bytes = encode_aer(&events);
        assert_eq!(&bytes[..5], &[3, 30, 0xff, 0xff, 0xff]);
        let mut parsed = parse_aer(&bytes).unwrap();
        parsed.sort_by_key(|e| std::cmp::Reverse(e.timestamp));
        assert_eq!(parsed, events);
    }

    #[test]
    fn parse_sorts_by_timestamp() {
        let bytes = encode_aer(&[ev(1, 1, true, 50), ev(2, 2, true, 10), ev(3, 3, false, 30)]);
        let ts: Vec<u32> = parse_aer(&bytes).unwrap().iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![10, 30, 50]);
    }

    #[test]
    fn length_must_be_multiple_of_five() {
        assert!(parse_aer(&[0; 7]).is_err());
        assert!(parse_aer(&[]).unwrap().is_empty());
    }

    #[test]
    fn equal_count_split() {
        // 2n distinct events, two bins: n per bin.
        let events: Vec<AerEvent> = (0..8).map(|i| ev(i, i, true, u32::from(i) * 10)).collect();
        let s = events_to_spikes(&events, &full_sensor()).unwrap();
        assert_eq!(s.bin(0).len(), 4);
        assert_eq!(s.bin(1).len(), 4);
    }

    #[test]
    fn duplicates_in_one_bin_collapse() {
        let events: Vec<AerEvent> = (0..6).map(|i| ev(5, 5, false, i)).collect();
        let cfg = AerConfig {
            n_bins: 1,
            ..full_sensor()
        };
        let s = events_to_spikes(&events, &cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.events()[0], SpikeEvent::new(0, 1, 5, 5));
    }

    #[test]
    fn centre_crop_and_out_of_range() {
        let cfg = AerConfig {
            n_bins: 1,
            silent_bins: 2,
            ..AerConfig::default()
        };
        // (x=3, y=3) maps to (0, 0); (x=2, y=10) falls outside the crop.
        let s = events_to_spikes(&[ev(3, 3, true, 0), ev(2, 10, true, 1)], &cfg).unwrap();
        assert_eq!(s.shape(), SpikeShape::new(3, 2, 27, 27));
        assert_eq!(s.events(), &[SpikeEvent::new(0, 0, 0, 0)]);
        assert!(events_to_spikes(&[ev(34, 0, true, 0)], &cfg).is_err());
    }

    #[test]
    fn saccade_offsets_shift_coordinates() {
        let cfg = AerConfig {
            n_bins: 1,
            silent_bins: 0,
            saccade: Some(SaccadeTable {
                phases: vec![
                    SaccadePhase { until_us: 100, dx: 1, dy: 0 },
                    SaccadePhase { until_us: 200, dx: 0, dy: -2 },
                ],
            }),
            ..AerConfig::default()
        };
        let s = events_to_spikes(&[ev(10, 10, true, 50), ev(10, 10, true, 150), ev(10, 10, true, 999)], &cfg)
            .unwrap();
        let got: Vec<(u16, u16)> = s.events().iter().map(|e| (e.u, e.v)).collect();
        assert_eq!(got, vec![(5, 7), (7, 8)]);
    }
}
