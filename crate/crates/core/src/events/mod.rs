//! Event streams: the binary/CSV codecs, densest-window selection, a DVS
//! simulator and a synthetic dataset generator.

mod codec;
mod dataset;
mod sim;
mod window;

pub use codec::{decode_bin, encode_bin, read_bin_file, read_csv, write_bin_file, write_csv, MAX_TIMESTAMP};
pub use dataset::{
    ingest_dir, load_manifest, load_sample, synth_dataset, write_manifest, ManifestEntry, SynthConfig,
    MANIFEST_FILE,
};
pub use sim::{simulate_dvs, SceneScript, ShapeKind, ShapeSpec};
pub use window::densest_window_select;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One address event. `p == true` encodes a positive log-intensity change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    pub t: u64,
    #[serde(with = "polarity_bit")]
    pub p: bool,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: bool) -> Self {
        Self { x, y, t, p }
    }

    /// Polarity as the signed feature value used by graphs.
    #[inline]
    pub fn signed_polarity(&self) -> f32 {
        if self.p {
            1.0
        } else {
            -1.0
        }
    }
}

mod polarity_bit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!("polarity must be 0 or 1, got {other}"))),
        }
    }
}

/// Axis-aligned box in pixels, center-size form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: 0.5 * (x0 + x1),
            cy: 0.5 * (y0 + y1),
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// `(x0, y0, x1, y1)`
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Intersection with `[0, width] × [0, height]`, or `None` if empty.
    pub fn clip(&self, width: f64, height: f64) -> Option<Self> {
        let (x0, y0, x1, y1) = self.corners();
        let (x0, y0) = (x0.max(0.0), y0.max(0.0));
        let (x1, y1) = (x1.min(width), y1.min(height));
        (x1 > x0 && y1 > y0).then(|| Self::from_corners(x0, y0, x1, y1))
    }

    /// Box expressed as fractions of the sensor extent.
    pub fn to_fractions(&self, width: u32, height: u32) -> [f64; 4] {
        let (w, h) = (width as f64, height as f64);
        [self.cx / w, self.cy / h, self.w / w, self.h / h]
    }

    pub fn from_fractions(f: [f64; 4], width: u32, height: u32) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self::new(f[0] * w, f[1] * h, f[2] * w, f[3] * h)
    }
}

/// Time-ordered events from a `width × height` sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u32,
    pub height: u32,
    pub label: Option<u32>,
    pub bbox: Option<BoundingBox>,
}

impl EventStream {
    /// Validates coordinates and stably sorts by timestamp.
    pub fn new(mut events: Vec<Event>, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config(format!("sensor size {width}x{height}")));
        }
        if let Some((index, e)) = events
            .iter()
            .enumerate()
            .find(|(_, e)| u32::from(e.x) >= width || u32::from(e.y) >= height)
        {
            return Err(Error::OutOfRange {
                index,
                x: e.x.into(),
                y: e.y.into(),
                width,
                height,
            });
        }
        if !events.windows(2).all(|w| w[0].t <= w[1].t) {
            events.sort_by_key(|e| e.t);
        }
        Ok(Self {
            events,
            width,
            height,
            label: None,
            bbox: None,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            events: Vec::new(),
            width,
            height,
            label: None,
            bbox: None,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `t_last − t_first`, 0 for fewer than two events.
    pub fn span(&self) -> u64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_sorts_stably_and_rejects_out_of_range() {
        let ev = vec![Event::new(1, 0, 5, true), Event::new(2, 0, 1, false), Event::new(3, 0, 5, false)];
        let s = EventStream::new(ev, 4, 1).unwrap();
        let xs: Vec<u16> = s.events.iter().map(|e| e.x).collect();
        assert_eq!(xs, [2, 1, 3]);
        let err = EventStream::new(vec![Event::new(0, 1, 0, true)], 4, 1).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { index: 0, y: 1, .. }));
    }

    #[test]
    fn bbox_clip_and_fractions() {
        let b = BoundingBox::new(2.0, 2.0, 6.0, 2.0);
        let c = b.clip(10.0, 10.0).unwrap();
        assert_eq!(c.corners(), (0.0, 1.0, 5.0, 3.0));
        assert!(BoundingBox::new(-5.0, 0.0, 2.0, 2.0).clip(10.0, 10.0).is_none());
        let f = c.to_fractions(10, 10);
        assert_eq!(BoundingBox::from_fractions(f, 10, 10), c);
    }
}
