//! Threshold-crossing DVS simulator over scripted moving shapes.
//!
//! Each pixel keeps a reference log intensity. At every sampling step the
//! scene is re-rendered; a pixel whose log intensity moved at least one
//! threshold away from its reference emits a single event with the sign of
//! the change, and the reference advances by the whole number of thresholds
//! crossed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BoundingBox, Event, EventStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Bar,
    Disk,
    Rectangle,
    Triangle,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Bar,
        ShapeKind::Disk,
        ShapeKind::Rectangle,
        ShapeKind::Triangle,
    ];
}

/// A rigid shape translating at constant velocity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    /// Characteristic size in pixels (bar height, disk diameter, rectangle
    /// and triangle width).
    pub size: f64,
    /// Pixels per millisecond.
    pub velocity: [f64; 2],
    /// Center at `t = 0`.
    pub start: [f64; 2],
    /// Intensity multiplier applied where the shape covers the sensor.
    pub contrast: f64,
    /// The shape is invisible before this time.
    #[serde(default)]
    pub onset_us: u64,
}

impl ShapeSpec {
    /// Width and height of the shape's footprint.
    pub fn extent(&self) -> (f64, f64) {
        let s = self.size;
        match self.kind {
            ShapeKind::Bar => ((s / 4.0).max(1.0), s),
            ShapeKind::Disk | ShapeKind::Triangle => (s, s),
            ShapeKind::Rectangle => (s, 0.6 * s),
        }
    }

    pub fn center_at(&self, t_us: u64) -> (f64, f64) {
        let ms = t_us as f64 / 1000.0;
        (
            self.start[0] + self.velocity[0] * ms,
            self.start[1] + self.velocity[1] * ms,
        )
    }

    /// Whether the point `(px, py)` lies inside the shape centred at `(cx, cy)`.
    fn contains(&self, cx: f64, cy: f64, px: f64, py: f64) -> bool {
        let (w, h) = self.extent();
        let (dx, dy) = (px - cx, py - cy);
        match self.kind {
            ShapeKind::Bar | ShapeKind::Rectangle => dx.abs() <= 0.5 * w && dy.abs() <= 0.5 * h,
            ShapeKind::Disk => dx * dx + dy * dy <= 0.25 * w * w,
            ShapeKind::Triangle => {
                // apex up, base at the bottom
                let depth = dy + 0.5 * h;
                (0.0..=h).contains(&depth) && dx.abs() <= 0.5 * w * depth / h
            }
        }
    }

    /// Whether the pixel `(x, y)` is covered at time `t_us`, sampled at the
    /// pixel center.
    pub fn covers(&self, x: u32, y: u32, t_us: u64) -> bool {
        if t_us < self.onset_us {
            return false;
        }
        let (cx, cy) = self.center_at(t_us);
        self.contains(cx, cy, x as f64 + 0.5, y as f64 + 0.5)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneScript {
    pub duration_us: u64,
    pub shapes: Vec<ShapeSpec>,
    /// Background intensity (linear, > 0).
    pub background: f64,
    /// Log-intensity contrast threshold `C`.
    pub threshold: f64,
    pub step_us: u64,
    /// Relative per-pixel threshold spread: each pixel's threshold is drawn
    /// once, uniformly in `C·[1 − m, 1 + m]`, from the simulation seed.
    #[serde(default)]
    pub threshold_mismatch: f64,
    #[serde(default)]
    pub label: Option<u32>,
}

impl SceneScript {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("scene script: {m}")));
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        if self.duration_us == 0 || self.step_us == 0 {
            return bad("duration and sampling step must be positive");
        }
        if !(self.background > 0.0) {
            return bad("background intensity must be positive");
        }
        if !(0.0..1.0).contains(&self.threshold_mismatch) {
            return bad("threshold mismatch must lie in [0, 1)");
        }
        for s in &self.shapes {
            if !(s.contrast > 0.0) || !(s.size > 0.0) {
                return bad("shape contrast and size must be positive");
            }
        }
        Ok(())
    }

    /// Log intensity of every pixel at `t_us`, row-major into `out`.
    pub fn render(&self, width: u32, height: u32, t_us: u64, out: &mut [f64]) {
        let base = self.background.ln();
        out.iter_mut().for_each(|v| *v = base);
        for shape in &self.shapes {
            if t_us < shape.onset_us {
                continue;
            }
            let (cx, cy) = shape.center_at(t_us);
            let (w, h) = shape.extent();
            let gain = shape.contrast.ln();
            let x0 = ((cx - 0.5 * w).floor() - 1.0).max(0.0) as u32;
            let y0 = ((cy - 0.5 * h).floor() - 1.0).max(0.0) as u32;
            let x1 = ((cx + 0.5 * w).ceil() + 1.0).clamp(0.0, width as f64) as u32;
            let y1 = ((cy + 0.5 * h).ceil() + 1.0).clamp(0.0, height as f64) as u32;
            for y in y0..y1 {
                for x in x0..x1 {
                    if shape.contains(cx, cy, x as f64 + 0.5, y as f64 + 0.5) {
                        out[(y * width + x) as usize] += gain;
                    }
                }
            }
        }
    }

    /// Box enclosing the first shape's footprint over the whole window
    /// (from its onset to the end), clipped to the sensor.
    pub fn bbox(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let shape = self.shapes.first()?;
        let onset = shape.onset_us.min(self.duration_us);
        let (ax, ay) = shape.center_at(onset);
        let (bx, by) = shape.center_at(self.duration_us);
        let (w, h) = shape.extent();
        BoundingBox::from_corners(
            ax.min(bx) - 0.5 * w,
            ay.min(by) - 0.5 * h,
            ax.max(bx) + 0.5 * w,
            ay.max(by) + 0.5 * h,
        )
        .clip(width as f64, height as f64)
    }
}

pub fn simulate_dvs(script: &SceneScript, width: u32, height: u32, seed: u64) -> Result<EventStream> {
    script.validate()?;
    if width == 0 || height == 0 || width > u16::MAX as u32 || height > u16::MAX as u32 {
        return Err(Error::config(format!("sensor size {width}x{height}")));
    }
    let n = (width * height) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thresholds: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            script.threshold * (1.0 + script.threshold_mismatch * u)
        })
        .collect();

    let mut reference = vec![0.0; n];
    script.render(width, height, 0, &mut reference);
    let mut current = vec![0.0; n];
    let mut events = Vec::new();
    let steps = script.duration_us / script.step_us;
    for k in 1..=steps {
        let t = k * script.step_us;
        script.render(width, height, t, &mut current);
        for (i, (&now, r)) in current.iter().zip(reference.iter_mut()).enumerate() {
            let delta = now - *r;
            let thr = thresholds[i];
            let crossings = (delta.abs() / thr + 1e-9).floor();
            if crossings >= 1.0 {
                *r += delta.signum() * crossings * thr;
                events.push(Event {
                    x: (i as u32 % width) as u16,
                    y: (i as u32 / width) as u16,
                    t,
                    p: delta > 0.0,
                });
            }
        }
    }
    let mut stream = EventStream::new(events, width, height)?;
    stream.label = script.label;
    stream.bbox = script.bbox(width, height);
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script(shapes: Vec<ShapeSpec>) -> SceneScript {
        SceneScript {
            duration_us: 20_000,
            shapes,
            background: 1.0,
            threshold: 0.2,
            step_us: 1000,
            threshold_mismatch: 0.0,
            label: Some(3),
        }
    }

    fn disk(velocity: [f64; 2]) -> ShapeSpec {
        ShapeSpec {
            kind: ShapeKind::Disk,
            size: 8.0,
            velocity,
            start: [16.0, 16.0],
            contrast: 2.0,
            onset_us: 0,
        }
    }

    #[test]
    fn static_scene_is_silent() {
        let s = simulate_dvs(&script(vec![disk([0.0, 0.0])]), 32, 32, 1).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.label, Some(3));
    }

    #[test]
    fn single_pixel_step_emits_one_event() {
        let c: f64 = 0.2;
        let spec = ShapeSpec {
            kind: ShapeKind::Rectangle,
            size: 1.0,
            velocity: [0.0, 0.0],
            start: [5.5, 2.5],
            contrast: (1.1 * c).exp(),
            onset_us: 5000,
        };
        let mut sc = script(vec![spec]);
        sc.threshold = c;
        let s = simulate_dvs(&sc, 8, 4, 0).unwrap();
        assert_eq!(s.events, [Event::new(5, 2, 5000, true)]);
    }

    #[test]
    fn moving_disk_emits_both_polarities() {
        let s = simulate_dvs(&script(vec![disk([0.5, 0.0])]), 32, 32, 0).unwrap();
        assert!(s.events.iter().any(|e| e.p));
        assert!(s.events.iter().any(|e| !e.p));
        let b = s.bbox.unwrap();
        assert!((b.cx - 21.0).abs() < 1e-12 && (b.cy - 16.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_script() {
        let mut sc = script(vec![]);
        sc.threshold = 0.0;
        assert!(simulate_dvs(&sc, 8, 8, 0).unwrap_err().is_config());
    }
}
