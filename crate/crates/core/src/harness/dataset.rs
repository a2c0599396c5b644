use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{list_images, mask_name, read_frame, read_mask, write_mask, write_rgb, frame_name};
use super::synthetic::{Background, Color, Shape, SyntheticSpec, Trajectory};
use crate::error::{Error, Result};
use crate::model::EmbeddingProviders;
use crate::numerics::Tensor;
use crate::trainstage::TrainingVideo;

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// One line of a dataset manifest. Directories are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub frames_dir: PathBuf,
    pub caption: String,
    pub mask_dir: PathBuf,
    pub length: usize,
}

impl ManifestRecord {
    /// Checks that both directories hold exactly `length` files.
    pub fn validate(&self, base: &Path) -> Result<()> {
        let frames = list_images(&base.join(&self.frames_dir), "frame_")?.len();
        let masks = list_images(&base.join(&self.mask_dir), "mask_")?.len();
        if frames != self.length || masks != self.length {
            return Err(Error::Data(format!(
                "{}: manifest length {} but {frames} frames and {masks} masks",
                self.id, self.length
            )));
        }
        Ok(())
    }
}

/// A decoded video with pixel masks.
#[derive(Clone, Debug)]
pub struct LoadedVideo {
    pub id: String,
    pub caption: String,
    pub frames: Vec<Tensor>,
    pub masks: Vec<Tensor>,
}

impl LoadedVideo {
    pub fn to_training(&self, providers: &EmbeddingProviders) -> Result<TrainingVideo> {
        TrainingVideo::from_frames(&self.id, &self.frames, &self.masks, &self.caption, providers)
    }
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::Data(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses and validates every record.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        rec.validate(base)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_video(base: &Path, rec: &ManifestRecord) -> Result<LoadedVideo> {
    rec.validate(base)?;
    let frames = list_images(&base.join(&rec.frames_dir), "frame_")?
        .iter()
        .map(|p| read_frame(p))
        .collect::<Result<Vec<_>>>()?;
    let masks = list_images(&base.join(&rec.mask_dir), "mask_")?
        .iter()
        .map(|p| read_mask(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadedVideo {
        id: rec.id.clone(),
        caption: rec.caption.clone(),
        frames,
        masks,
    })
}

pub fn load_manifest(path: &Path) -> Result<Vec<LoadedVideo>> {
    let base = path.parent().unwrap_or(Path::new("."));
    read_manifest(path)?.iter().map(|r| load_video(base, r)).collect()
}

/// Flat description of a synthetic dataset; video `i` cycles through the lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub count: usize,
    #[serde(default = "default_extent")]
    pub width: usize,
    #[serde(default = "default_extent")]
    pub height: usize,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_shapes")]
    pub shapes: Vec<Shape>,
    #[serde(default = "default_colors")]
    pub colors: Vec<Color>,
    #[serde(default = "default_trajectories")]
    pub trajectories: Vec<Trajectory>,
    #[serde(default = "default_background")]
    pub background: Background,
}

fn default_extent() -> usize {
    64
}
fn default_radius() -> f64 {
    8.0
}
fn default_speed() -> f64 {
    1.5
}
fn default_shapes() -> Vec<Shape> {
    vec![Shape::Disk, Shape::Square]
}
fn default_colors() -> Vec<Color> {
    vec![Color::Red, Color::Green, Color::Blue, Color::Yellow]
}
fn default_trajectories() -> Vec<Trajectory> {
    vec![Trajectory::Circular, Trajectory::LoopableSine, Trajectory::Linear]
}
fn default_background() -> Background {
    Background::Gradient
}

impl DatasetSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if spec.count == 0 || spec.shapes.is_empty() || spec.colors.is_empty() || spec.trajectories.is_empty() {
            return Err(Error::Config("count and the shape/colour/trajectory lists must be non-empty".into()));
        }
        for v in spec.videos() {
            v.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn videos(&self) -> Vec<SyntheticSpec> {
        (0..self.count)
            .map(|i| SyntheticSpec {
                width: self.width,
                height: self.height,
                length: self.length,
                shape: self.shapes[i % self.shapes.len()],
                radius: self.radius,
                color: self.colors[i % self.colors.len()],
                trajectory: self.trajectories[i % self.trajectories.len()],
                speed: self.speed,
                background: self.background,
                seed: self.seed.wrapping_add(i as u64),
            })
            .collect()
    }
}

pub fn video_id(i: usize) -> String {
    format!("vid{i:04}")
}

/// Renders one video into `out/<id>/{frames,masks}`.
pub fn gen_synthetic(spec: &SyntheticSpec, id: &str, out: &Path) -> Result<ManifestRecord> {
    let video = spec.render()?;
    let frames_dir = PathBuf::from(id).join("frames");
    let mask_dir = PathBuf::from(id).join("masks");
    for d in [&frames_dir, &mask_dir] {
        let full = out.join(d);
        std::fs::create_dir_all(&full).map_err(|e| Error::io(&full, e))?;
    }
    for (i, (f, m)) in video.frames.iter().zip(&video.masks).enumerate() {
        write_rgb(&out.join(&frames_dir).join(frame_name(i)), spec.width, spec.height, f)?;
        write_mask(&out.join(&mask_dir).join(mask_name(i)), spec.width, spec.height, m)?;
    }
    Ok(ManifestRecord {
        id: id.to_string(),
        frames_dir,
        caption: spec.caption(),
        mask_dir,
        length: spec.length,
    })
}

/// Renders every video (one thread each) and writes the manifest; returns its path.
pub fn gen_dataset(spec: &DatasetSpec, out: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let videos = spec.videos();
    let records = std::thread::scope(|scope| {
        let handles: Vec<_> = videos
            .iter()
            .enumerate()
            .map(|(i, v)| scope.spawn(move || gen_synthetic(v, &video_id(i), out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generator thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let path = out.join(MANIFEST_NAME);
    write_manifest(&path, &records)?;
    Ok(path)
}
