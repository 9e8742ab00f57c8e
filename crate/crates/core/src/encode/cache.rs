//! Encoded-dataset cache.
//!
//! Little-endian layout:
//!
//! ```text
//! "SPKT" | version: u32 | T: u32 | C: u32 | H: u32 | W: u32 | count: u32
//! per image: LEB128 event count, then (t, c, u, v) as u8 quadruples
//! ```
//!
//! Labels are kept next to the cache in an IDX label file.

use std::io::Write;

use crate::error::{Error, Result};
use crate::spikes::{SpikeEvent, SpikeShape, SpikeTensor};

pub const CACHE_MAGIC: &[u8; 4] = b"SPKT";
pub const CACHE_VERSION: u32 = 1;

pub fn write_spike_cache<W: Write>(mut out: W, shape: SpikeShape, images: &[SpikeTensor]) -> Result<()> {
    let dims = [shape.bins, shape.channels, shape.rows, shape.cols];
    if dims.iter().any(|&d| d > 256) {
        return Err(Error::param(format!("cache coordinates must fit in u8, shape {dims:?}")));
    }
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    for d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    out.write_all(&(images.len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for img in images {
        if img.shape() != shape {
            return Err(Error::shape(format!("image shape {:?} != cache shape {shape:?}", img.shape())));
        }
        buf.clear();
        write_varint(&mut buf, img.len() as u64);
        for e in img.events() {
            buf.extend_from_slice(&[e.t as u8, e.c as u8, e.u as u8, e.v as u8]);
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_spike_cache(bytes: &[u8]) -> Result<(SpikeShape, Vec<SpikeTensor>)> {
    const CTX: &str = "spike cache";
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CACHE_MAGIC {
        return Err(Error::parse(CTX, "bad magic"));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::parse(CTX, format!("unsupported version {version}")));
    }
    let shape = SpikeShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let count = r.u32()? as usize;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let n = r.varint()? as usize;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::parse(CTX, "event count overflow"))?)?;
        let events = raw
            .chunks_exact(4)
            .map(|q| SpikeEvent::new(q[0].into(), q[1].into(), q[2].into(), q[3].into()));
        images.push(SpikeTensor::from_events(shape, events)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(CTX, "trailing bytes"));
    }
    Ok((shape, images))
}

fn write_varint(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::parse("spike cache", "truncated"))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varint(&mut self) -> Result<u64> {
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.take(1)?[0];
            value |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::parse("spike cache", "varint too long"))
    }
}
