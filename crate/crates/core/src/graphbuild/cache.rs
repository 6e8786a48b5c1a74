//! Binary graph cache.
//!
//! ```text
//! "EVGR"  u32 version=1  u64 N  u64 E  u8 flags (bit0 = has attrs)
//! positions  N×3 f32
//! features   N   f32
//! edges      E×2 u32   (src, dst)
//! attrs      E×3 f32   (only if flagged)
//! width u32  height u32
//! ```
//! All values little-endian.

use std::fs;
use std::path::Path;

use super::EventGraph;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EVGR";
pub const VERSION: u32 = 1;

pub fn encode_graph(g: &EventGraph) -> Vec<u8> {
    let n = g.positions.len();
    let e = g.edges.len();
    let attrs = g.edge_attrs.as_ref();
    let mut out = Vec::with_capacity(33 + 16 * n + e * (8 + attrs.map_or(0, |_| 12)) + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(e as u64).to_le_bytes());
    out.push(u8::from(attrs.is_some()));
    for p in &g.positions {
        p.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    for f in &g.features {
        out.extend_from_slice(&f.to_le_bytes());
    }
    for ed in &g.edges {
        ed.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    if let Some(a) = attrs {
        for at in a {
            at.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
    }
    out.extend_from_slice(&g.width.to_le_bytes());
    out.extend_from_slice(&g.height.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("graph cache truncated".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s<const K: usize>(&mut self, count: usize) -> Result<Vec<[f32; K]>> {
        let bytes = self.take(count.checked_mul(4 * K).ok_or_else(overflow)?)?;
        Ok(bytes
            .chunks_exact(4 * K)
            .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap())))
            .collect())
    }
}

fn overflow() -> Error {
    Error::Format("graph cache header declares an impossible size".into())
}

pub fn decode_graph(bytes: &[u8]) -> Result<EventGraph> {
    let mut c = Cursor { buf: bytes };
    if c.take(4)? != MAGIC {
        return Err(Error::Format("not a graph cache (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported graph cache version {version}")));
    }
    let n = usize::try_from(c.u64()?).map_err(|_| overflow())?;
    let e = usize::try_from(c.u64()?).map_err(|_| overflow())?;
    let flags = c.take(1)?[0];
    if flags & !1 != 0 {
        return Err(Error::Format(format!("unknown graph cache flags {flags:#04x}")));
    }
    let positions = c.f32s::<3>(n)?;
    let features = c.f32s::<1>(n)?.into_iter().map(|[v]| v).collect();
    let raw_edges = c.take(e.checked_mul(8).ok_or_else(overflow)?)?;
    let edges = raw_edges
        .chunks_exact(8)
        .map(|ch| {
            [
                u32::from_le_bytes(ch[0..4].try_into().unwrap()),
                u32::from_le_bytes(ch[4..8].try_into().unwrap()),
            ]
        })
        .collect();
    let edge_attrs = if flags & 1 == 1 { Some(c.f32s::<3>(e)?) } else { None };
    let width = c.u32()?;
    let height = c.u32()?;
    if !c.buf.is_empty() {
        return Err(Error::Format("trailing bytes after graph cache".into()));
    }
    let g = EventGraph {
        positions,
        features,
        edges,
        edge_attrs,
        width,
        height,
    };
    if g.edges.iter().flatten().any(|&v| v as usize >= n) {
        return Err(Error::Format("edge index out of range in graph cache".into()));
    }
    Ok(g)
}

pub fn save_graph(g: &EventGraph, path: &Path) -> Result<()> {
    fs::write(path, encode_graph(g)).map_err(Error::at_path(path))
}

pub fn load_graph(path: &Path) -> Result<EventGraph> {
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    decode_graph(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EventGraph {
        EventGraph {
            positions: vec![[0.0, 1.0, 2.5], [3.0, 4.0, 100.0]],
            features: vec![1.0, -1.0],
            edges: vec![[1, 0], [0, 1]],
            edge_attrs: Some(vec![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]),
            width: 240,
            height: 180,
        }
    }

    #[test]
    fn round_trip_and_empty() {
        let g = sample();
        assert_eq!(decode_graph(&encode_graph(&g)).unwrap(), g);
        let empty = EventGraph::empty(10, 20);
        let bytes = encode_graph(&empty);
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 1 + 8);
        assert_eq!(decode_graph(&bytes).unwrap(), empty);
    }

    #[test]
    fn truncation_and_bad_header() {
        let bytes = encode_graph(&sample());
        for cut in [0, 3, 10, 30, bytes.len() - 1] {
            assert!(matches!(decode_graph(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_graph(&bad), Err(Error::Format(_))));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(decode_graph(&v2), Err(Error::Format(_))));
    }
}
