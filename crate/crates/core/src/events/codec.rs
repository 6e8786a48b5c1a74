use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Event, EventStream};
use crate::{Error, Result};

/// Largest timestamp representable in the 23-bit field.
pub const MAX_TIMESTAMP: u64 = (1 << 23) - 1;

const RECORD: usize = 5;

/// Decodes 5-byte big-endian address-event records:
/// `x`, `y`, then polarity in the top bit followed by a 23-bit timestamp.
pub fn decode_bin(bytes: &[u8], width: u32, height: u32) -> Result<EventStream> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Malformed(format!(
            "{} bytes is not a whole number of {RECORD}-byte records",
            bytes.len()
        )));
    }
    let events = bytes
        .chunks_exact(RECORD)
        .map(|r| {
            let word = u32::from_be_bytes([r[2], r[3], r[4], 0]) >> 8;
            Event {
                x: r[0].into(),
                y: r[1].into(),
                p: word & 0x80_0000 != 0,
                t: u64::from(word & 0x7f_ffff),
            }
        })
        .collect();
    EventStream::new(events, width, height)
}

pub fn encode_bin(stream: &EventStream) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stream.len() * RECORD);
    for (index, e) in stream.events.iter().enumerate() {
        if e.t > MAX_TIMESTAMP {
            return Err(Error::Overflow { index, t: e.t });
        }
        let (Ok(x), Ok(y)) = (u8::try_from(e.x), u8::try_from(e.y)) else {
            return Err(Error::Malformed(format!(
                "event {index} at ({}, {}) does not fit 8-bit addresses",
                e.x, e.y
            )));
        };
        let word = (u32::from(e.p) << 23) | e.t as u32;
        let [_, b2, b3, b4] = word.to_be_bytes();
        out.extend_from_slice(&[x, y, b2, b3, b4]);
    }
    Ok(out)
}

pub fn read_bin_file(path: &Path, width: u32, height: u32) -> Result<EventStream> {
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_bin(&bytes, width, height)
}

pub fn write_bin_file(path: &Path, stream: &EventStream) -> Result<()> {
    let bytes = encode_bin(stream)?;
    fs::write(path, bytes).map_err(Error::at_path(path))
}

/// Reads `x,y,t,p` CSV with a header row.
pub fn read_csv<R: Read>(reader: R, width: u32, height: u32) -> Result<EventStream> {
    let mut rdr = csv::Reader::from_reader(reader);
    let events = rdr.deserialize().collect::<Result<Vec<Event>, _>>()?;
    EventStream::new(events, width, height)
}

pub fn write_csv<W: Write>(writer: W, stream: &EventStream) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for e in &stream.events {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}
