//! Byte-level footprint of a graph under a chosen storage width profile.
//!
//! Two profiles reproduce the published per-graph totals. `attr64` stores
//! edge indices and the three edge attributes as 8-byte values (40 B per
//! edge); `lean32` stores 4-byte indices and no attributes (8 B per edge).
//! Both keep 16 B per vertex (a 4-byte polarity plus three 4-byte position
//! components). Note that 4-byte indices with three 4-byte attributes give
//! only 20 B per edge; that profile is available as `attr32` but does not
//! reproduce the published totals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryProfile {
    pub vertex_feature_bytes: u64,
    pub position_component_bytes: u64,
    pub edge_index_bytes: u64,
    pub attr_component_bytes: u64,
    pub include_attrs: bool,
}

impl MemoryProfile {
    pub const fn attr64() -> Self {
        Self {
            vertex_feature_bytes: 4,
            position_component_bytes: 4,
            edge_index_bytes: 8,
            attr_component_bytes: 8,
            include_attrs: true,
        }
    }

    pub const fn lean32() -> Self {
        Self {
            vertex_feature_bytes: 4,
            position_component_bytes: 4,
            edge_index_bytes: 4,
            attr_component_bytes: 4,
            include_attrs: false,
        }
    }

    pub const fn attr32() -> Self {
        Self {
            include_attrs: true,
            ..Self::lean32()
        }
    }

    pub fn vertex_stride(&self) -> u64 {
        self.vertex_feature_bytes + 3 * self.position_component_bytes
    }

    pub fn edge_stride(&self) -> u64 {
        2 * self.edge_index_bytes + if self.include_attrs { 3 * self.attr_component_bytes } else { 0 }
    }

    fn validate(&self) -> Result<()> {
        if [
            self.vertex_feature_bytes,
            self.position_component_bytes,
            self.edge_index_bytes,
            self.attr_component_bytes,
        ]
        .contains(&0)
        {
            return Err(Error::config("memory profile widths must be at least 1 byte"));
        }
        Ok(())
    }
}

impl FromStr for MemoryProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attr64" => Ok(Self::attr64()),
            "lean32" => Ok(Self::lean32()),
            "attr32" => Ok(Self::attr32()),
            other => Err(Error::config(format!(
                "unknown memory profile `{other}` (expected attr64, lean32 or attr32)"
            ))),
        }
    }
}

impl fmt::Display for MemoryProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = if *self == Self::attr64() {
            "attr64"
        } else if *self == Self::lean32() {
            "lean32"
        } else if *self == Self::attr32() {
            "attr32"
        } else {
            "custom"
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSizeReport {
    pub n_vertices: u64,
    pub n_edges: u64,
    pub vertex_bytes: u64,
    pub edge_bytes: u64,
    pub total_bytes: u64,
    /// `total_bytes / 10⁶`
    pub total_mb: f64,
}

pub fn account_memory(n_vertices: u64, n_edges: u64, profile: &MemoryProfile) -> Result<GraphSizeReport> {
    profile.validate()?;
    let vertex_bytes = n_vertices * profile.vertex_stride();
    let edge_bytes = n_edges * profile.edge_stride();
    let total_bytes = vertex_bytes + edge_bytes;
    Ok(GraphSizeReport {
        n_vertices,
        n_edges,
        vertex_bytes,
        edge_bytes,
        total_bytes,
        total_mb: total_bytes as f64 / 1e6,
    })
}

/// Size of a dense `width × height × channels` frame of 1-byte pixels, in MB.
pub fn dense_frame_mb(width: u64, height: u64, channels: u64) -> f64 {
    (width * height * channels) as f64 / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_average_graph() {
        let a = account_memory(24_457, 381_563, &MemoryProfile::attr64()).unwrap();
        assert_eq!(a.vertex_bytes, 391_312);
        assert_eq!(a.edge_bytes, 15_262_520);
        assert_eq!(a.total_bytes, 15_653_832);
        let l = account_memory(24_457, 381_563, &MemoryProfile::lean32()).unwrap();
        assert_eq!(l.total_bytes, 3_443_816);
        assert!(a.total_mb / l.total_mb >= 4.5);
    }

    #[test]
    fn zero_and_bad_profile() {
        let z = account_memory(0, 0, &MemoryProfile::attr64()).unwrap();
        assert_eq!(z.total_bytes, 0);
        let bad = MemoryProfile {
            edge_index_bytes: 0,
            ..MemoryProfile::lean32()
        };
        assert!(account_memory(1, 1, &bad).is_err());
        assert!("fp16".parse::<MemoryProfile>().is_err());
        assert_eq!("lean32".parse::<MemoryProfile>().unwrap().to_string(), "lean32");
    }
}
