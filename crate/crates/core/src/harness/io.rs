use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

pub fn mask_name(i: usize) -> String {
    format!("mask_{i:04}.png")
}

fn image_err(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other}", path.display())),
    }
}

pub fn write_rgb(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let img = RgbImage::from_raw(width as u32, height as u32, rgb.to_vec())
        .ok_or_else(|| Error::Data(format!("{}: buffer does not match {width}×{height}", path.display())))?;
    img.save(path).map_err(|e| image_err(path, e))
}

/// Writes a 0/1 mask as a 0/255 grayscale raster.
pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[u8]) -> Result<()> {
    let px = mask.iter().map(|&m| if m > 0 { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(width as u32, height as u32, px)
        .ok_or_else(|| Error::Data(format!("{}: buffer does not match {width}×{height}", path.display())))?;
    img.save(path).map_err(|e| image_err(path, e))
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))
}

/// Reads an image as `[3×H×W]` in `[0, 1]`.
pub fn read_frame(path: &Path) -> Result<Tensor> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0; 3 * plane];
    for (p, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + p] = px.0[c] as f64 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Reads a mask as binary `[1×H×W]`; values ≥ 128 are foreground.
pub fn read_mask(path: &Path) -> Result<Tensor> {
    let img = open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| if p.0[0] >= 128 { 1.0 } else { 0.0 }).collect();
    Tensor::new(vec![1, h, w], data)
}

/// Quantises a `[3×H×W]` frame to 8-bit and writes it.
pub fn write_frame(path: &Path, frame: &Tensor) -> Result<()> {
    frame.expect_rank(3, "frame")?;
    let (h, w) = (frame.shape()[1], frame.shape()[2]);
    let plane = h * w;
    let mut rgb = Vec::with_capacity(3 * plane);
    for p in 0..plane {
        for c in 0..3 {
            rgb.push((frame.data()[c * plane + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    write_rgb(path, w, h, &rgb)
}

/// Writes `frames` as numbered files into `dir`, creating it if needed.
pub fn write_frames(dir: &Path, frames: &[Tensor]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(frame_name(i));
            write_frame(&p, f)?;
            Ok(p)
        })
        .collect()
}

/// Sorted `.png` files in `dir` whose names start with `prefix`.
pub fn list_images(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.starts_with(prefix) && name.ends_with(".png") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_frames(dir: &Path) -> Result<Vec<Tensor>> {
    list_images(dir, "frame_")?.iter().map(|p| read_frame(p)).collect()
}
