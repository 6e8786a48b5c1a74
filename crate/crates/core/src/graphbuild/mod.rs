//! Event streams to spatio-temporal radius graphs.
//!
//! Each event becomes a vertex at `(x, y, t̂)` carrying its signed polarity.
//! Vertices within `radius` of each other are linked by directed edges into
//! the destination, keeping at most `max_neighbors` per destination.

mod cache;
mod memory;
mod neighbors;

pub use cache::{decode_graph, encode_graph, load_graph, save_graph};
pub use memory::{account_memory, dense_frame_mb, GraphSizeReport, MemoryProfile};
pub use neighbors::{brute_force_neighbors, cap_in_degree, radius_neighbors, Edge};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::events::{densest_window_select, EventStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// Affine rescale of the window's timestamps onto `[0, 100]`.
    #[default]
    Norm100,
    /// Microseconds since the window's first event.
    RawMicroseconds,
}

impl FromStr for TimeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm100" => Ok(TimeMode::Norm100),
            "raw" | "raw_microseconds" => Ok(TimeMode::RawMicroseconds),
            other => Err(Error::config(format!("unknown time mode `{other}`"))),
        }
    }
}

impl fmt::Display for TimeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeMode::Norm100 => "norm100",
            TimeMode::RawMicroseconds => "raw_microseconds",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub radius: f64,
    pub max_neighbors: usize,
    pub max_events: usize,
    pub time_mode: TimeMode,
    pub with_edge_attrs: bool,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            radius: 5.0,
            max_neighbors: 32,
            max_events: 25_000,
            time_mode: TimeMode::Norm100,
            with_edge_attrs: false,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.max_neighbors == 0 || self.max_events == 0 {
            return Err(Error::config("max_neighbors and max_events must be at least 1"));
        }
        Ok(())
    }
}

/// A built graph. Positions, features and attributes are stored at 4-byte
/// precision, matching the cache format.
#[derive(Clone, Debug, PartialEq)]
pub struct EventGraph {
    pub positions: Vec<[f32; 3]>,
    /// Signed polarity, one value per vertex.
    pub features: Vec<f32>,
    pub edges: Vec<Edge>,
    pub edge_attrs: Option<Vec<[f32; 3]>>,
    pub width: u32,
    pub height: u32,
}

impl EventGraph {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            positions: Vec::new(),
            features: Vec::new(),
            edges: Vec::new(),
            edge_attrs: None,
            width,
            height,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn memory(&self, profile: &MemoryProfile) -> Result<GraphSizeReport> {
        account_memory(self.n_vertices() as u64, self.n_edges() as u64, profile)
    }

    /// Checks the structural invariants: indices in range, no self-loops or
    /// duplicate edges, in-degree at most `max_neighbors`, edge length at
    /// most `radius`, attributes within `[0, 1]`.
    pub fn validate(&self, radius: f64, max_neighbors: usize) -> Result<()> {
        let n = self.n_vertices();
        let bad = |m: String| Err(Error::Format(m));
        if self.features.len() != n {
            return bad(format!("{} features for {n} vertices", self.features.len()));
        }
        let mut seen = HashSet::with_capacity(self.edges.len());
        let mut in_degree = vec![0usize; n];
        let r2 = radius * radius;
        for (k, &[s, d]) in self.edges.iter().enumerate() {
            if s as usize >= n || d as usize >= n {
                return bad(format!("edge {k} ({s} -> {d}) out of range"));
            }
            if s == d {
                return bad(format!("edge {k} is a self-loop on {s}"));
            }
            if !seen.insert((s, d)) {
                return bad(format!("edge {k} ({s} -> {d}) is duplicated"));
            }
            in_degree[d as usize] += 1;
            if neighbors::dist2(&self.positions[s as usize], &self.positions[d as usize]) > r2 {
                return bad(format!("edge {k} ({s} -> {d}) is longer than {radius}"));
            }
        }
        if let Some(v) = in_degree.iter().position(|&c| c > max_neighbors) {
            return bad(format!("vertex {v} has in-degree {}", in_degree[v]));
        }
        if let Some(attrs) = &self.edge_attrs {
            if attrs.len() != self.edges.len() {
                return bad(format!("{} attributes for {} edges", attrs.len(), self.edges.len()));
            }
            if attrs.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("edge attribute outside [0, 1]".into());
            }
        }
        Ok(())
    }
}

pub fn normalize_time(timestamps: &[u64], mode: TimeMode) -> Result<Vec<f64>> {
    let (Some(&t_min), Some(&t_max)) = (timestamps.iter().min(), timestamps.iter().max()) else {
        return Err(Error::EmptyInput("normalize_time needs at least one timestamp"));
    };
    Ok(match mode {
        TimeMode::Norm100 if t_max == t_min => vec![0.0; timestamps.len()],
        TimeMode::Norm100 => {
            let scale = 100.0 / (t_max - t_min) as f64;
            timestamps.iter().map(|&t| (t - t_min) as f64 * scale).collect()
        }
        TimeMode::RawMicroseconds => timestamps.iter().map(|&t| (t - t_min) as f64).collect(),
    })
}

/// Cartesian pseudo-coordinates: for edge `j → i`, `(p_j − p_i) / 2m + ½`
/// where `m` is the largest absolute offset component over the graph.
pub fn compute_edge_attrs(graph: &EventGraph) -> Vec<[f32; 3]> {
    let deltas: Vec<[f64; 3]> = graph
        .edges
        .iter()
        .map(|&[s, d]| {
            let (a, b) = (&graph.positions[s as usize], &graph.positions[d as usize]);
            std::array::from_fn(|k| f64::from(a[k]) - f64::from(b[k]))
        })
        .collect();
    let m = deltas.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    deltas
        .iter()
        .map(|d| {
            std::array::from_fn(|k| {
                if m > 0.0 {
                    (d[k] / (2.0 * m) + 0.5) as f32
                } else {
                    0.5
                }
            })
        })
        .collect()
}

/// Diagnostics from [`build_graph_with_report`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub input_events: usize,
    pub selected_events: usize,
    /// The stream had no events; the graph is empty.
    pub empty_input: bool,
}

pub fn build_graph(stream: &EventStream, params: &GraphParams) -> Result<EventGraph> {
    Ok(build_graph_with_report(stream, params)?.0)
}

/// Densest window → positions `(x, y, t̂)` → capped radius edges →
/// optional Cartesian attributes.
pub fn build_graph_with_report(stream: &EventStream, params: &GraphParams) -> Result<(EventGraph, BuildReport)> {
    params.validate()?;
    let mut report = BuildReport {
        input_events: stream.len(),
        ..Default::default()
    };
    if stream.is_empty() {
        report.empty_input = true;
        let mut g = EventGraph::empty(stream.width, stream.height);
        if params.with_edge_attrs {
            g.edge_attrs = Some(Vec::new());
        }
        return Ok((g, report));
    }
    let window = densest_window_select(stream, params.max_events)?;
    report.selected_events = window.len();
    let ts: Vec<u64> = window.events.iter().map(|e| e.t).collect();
    let t_hat = normalize_time(&ts, params.time_mode)?;
    let positions: Vec<[f32; 3]> = window
        .events
        .iter()
        .zip(&t_hat)
        .map(|(e, &t)| [f32::from(e.x), f32::from(e.y), t as f32])
        .collect();
    let features = window.events.iter().map(|e| e.signed_polarity()).collect();
    let edges = radius_neighbors(&positions, params.radius, params.max_neighbors);
    let mut g = EventGraph {
        positions,
        features,
        edges,
        edge_attrs: None,
        width: stream.width,
        height: stream.height,
    };
    if params.with_edge_attrs {
        g.edge_attrs = Some(compute_edge_attrs(&g));
    }
    Ok((g, report))
}
