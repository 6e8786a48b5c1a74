//! Synthetic labelled datasets and the JSON manifest shared with real data.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_bin_file, simulate_dvs, write_bin_file, BoundingBox, EventStream, SceneScript, ShapeKind, ShapeSpec};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

/// One sample of a dataset; `path` is relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class_id: u32,
    pub bbox: Option<BoundingBox>,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: u32,
    pub samples_per_class: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub duration_us: u64,
    pub step_us: u64,
    /// Base object size as a fraction of `min(width, height)`.
    pub object_scale: f64,
    /// Speed range in pixels per millisecond.
    pub speed: [f64; 2],
    pub threshold: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            samples_per_class: 40,
            width: 64,
            height: 48,
            seed: 0,
            duration_us: 40_000,
            step_us: 1000,
            object_scale: 0.3,
            speed: [0.35, 0.6],
            threshold: 0.2,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("synthetic datasets need at least 2 classes"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class must be at least 1"));
        }
        if self.width == 0 || self.height == 0 || self.width > 256 || self.height > 256 {
            return Err(Error::config(format!(
                "sensor {}x{} must fit 8-bit addresses",
                self.width, self.height
            )));
        }
        if !(self.object_scale > 0.0) || !(self.speed[0] > 0.0 && self.speed[1] >= self.speed[0]) {
            return Err(Error::config("object_scale and speed range must be positive"));
        }
        Ok(())
    }

    /// Script for one sample of `class`. Each class has its own shape kind,
    /// size family and heading; samples jitter size, speed, heading,
    /// contrast and placement.
    pub fn class_script(&self, class: u32, rng: &mut impl Rng) -> SceneScript {
        let kind = ShapeKind::ALL[(class % 4) as usize];
        let family = (class / 4) as f64;
        let (w, h) = (self.width as f64, self.height as f64);
        let size = w.min(h) * self.object_scale * (1.0 + 0.35 * family) * rng.gen_range(0.85..1.15);
        let heading = TAU * class as f64 / self.classes as f64 + rng.gen_range(-0.25..0.25);
        let speed = rng.gen_range(self.speed[0]..=self.speed[1]);
        let velocity = [speed * heading.cos(), speed * heading.sin()];
        let mut shape = ShapeSpec {
            kind,
            size,
            velocity,
            start: [0.0, 0.0],
            contrast: rng.gen_range(1.8..3.0),
            onset_us: 0,
        };
        // place the trajectory midpoint so the whole path stays on the sensor
        let (ew, eh) = shape.extent();
        let ms = self.duration_us as f64 / 1000.0;
        let (tx, ty) = (velocity[0] * ms, velocity[1] * ms);
        let mx = pick(rng, 0.5 * (ew + tx.abs()), w - 0.5 * (ew + tx.abs()));
        let my = pick(rng, 0.5 * (eh + ty.abs()), h - 0.5 * (eh + ty.abs()));
        shape.start = [mx - 0.5 * tx, my - 0.5 * ty];
        SceneScript {
            duration_us: self.duration_us,
            shapes: vec![shape],
            background: 1.0,
            threshold: self.threshold,
            step_us: self.step_us,
            threshold_mismatch: 0.0,
            label: Some(class),
        }
    }

    /// Simulates every sample in memory, in manifest order.
    pub fn generate(&self) -> Result<Vec<EventStream>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity((self.classes * self.samples_per_class) as usize);
        for class in 0..self.classes {
            for _ in 0..self.samples_per_class {
                let script = self.class_script(class, &mut rng);
                let sim_seed = rng.gen();
                out.push(simulate_dvs(&script, self.width, self.height, sim_seed)?);
            }
        }
        Ok(out)
    }
}

fn pick(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        0.5 * (lo + hi)
    }
}

/// Writes one binary event file per sample plus `manifest.json`.
pub fn synth_dataset(config: &SynthConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let streams = config.generate()?;
    fs::create_dir_all(out_dir).map_err(Error::at_path(out_dir))?;
    let mut manifest = Vec::with_capacity(streams.len());
    for (i, s) in streams.iter().enumerate() {
        let name = format!("sample_{i:05}.bin");
        write_bin_file(&out_dir.join(&name), s)?;
        manifest.push(ManifestEntry {
            path: name,
            class_id: s.label.unwrap_or(0),
            bbox: s.bbox,
            width: s.width,
            height: s.height,
        });
    }
    write_manifest(out_dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(entries)?;
    fs::write(&path, json).map_err(Error::at_path(&path))?;
    Ok(path)
}

/// Reads `manifest.json` from `dir` (or the file itself if `dir` is one).
pub fn load_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = if dir.is_dir() { dir.join(MANIFEST_FILE) } else { dir.to_path_buf() };
    let bytes = fs::read(&path).map_err(Error::at_path(&path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

pub fn load_sample(root: &Path, entry: &ManifestEntry) -> Result<EventStream> {
    let mut s = read_bin_file(&root.join(&entry.path), entry.width, entry.height)?;
    s.label = Some(entry.class_id);
    s.bbox = entry.bbox;
    Ok(s)
}

/// Decodes every `.bin` file under `dir`. Files directly in `dir` get class
/// 0; files in subdirectories get the subdirectory's rank in sorted order.
pub fn ingest_dir(dir: &Path, width: u32, height: u32) -> Result<Vec<(ManifestEntry, EventStream)>> {
    let mut out = Vec::new();
    let mut subdirs = Vec::new();
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(Error::at_path(dir))? {
        let path = entry?.path();
        if path.is_dir() {
            subdirs.push(path);
        } else if path.extension().is_some_and(|e| e == "bin") {
            files.push(path);
        }
    }
    subdirs.sort();
    files.sort();
    let mut groups = vec![(0u32, files)];
    for (i, sub) in subdirs.iter().enumerate() {
        let mut fs_in: Vec<PathBuf> = fs::read_dir(sub)
            .map_err(Error::at_path(sub))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "bin"))
            .collect();
        fs_in.sort();
        groups.push((i as u32, fs_in));
    }
    for (class_id, files) in groups {
        for path in files {
            let mut stream = read_bin_file(&path, width, height)?;
            stream.label = Some(class_id);
            let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().into_owned();
            out.push((
                ManifestEntry {
                    path: rel,
                    class_id,
                    bbox: None,
                    width,
                    height,
                },
                stream,
            ));
        }
    }
    Ok(out)
}
