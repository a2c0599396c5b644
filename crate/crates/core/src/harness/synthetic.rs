use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    White,
}

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [220, 40, 40],
            Color::Green => [40, 200, 60],
            Color::Blue => [50, 70, 230],
            Color::Yellow => [235, 220, 50],
            Color::Cyan => [40, 210, 220],
            Color::Magenta => [210, 50, 200],
            Color::White => [245, 245, 245],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trajectory {
    /// Straight line at constant speed, reflecting off the borders.
    Linear,
    /// Full orbit with period `length − 1`.
    Circular,
    /// Figure-eight with period `length − 1`.
    LoopableSine,
}

impl Trajectory {
    pub fn is_loopable(self) -> bool {
        !matches!(self, Trajectory::Linear)
    }

    fn phrase(self) -> &'static str {
        match self {
            Trajectory::Linear => "in a straight line",
            Trajectory::Circular => "in a circle",
            Trajectory::LoopableSine => "in a figure eight",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Constant,
    /// Horizontal blend between two seeded colours.
    Gradient,
}

macro_rules! display_via_serde {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(s.as_str().ok_or(fmt::Error)?)
            }
        }
    )*};
}
display_via_serde!(Shape, Color, Trajectory, Background);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub length: usize,
    pub shape: Shape,
    /// Disk radius, or half the square's side.
    pub radius: f64,
    pub color: Color,
    pub trajectory: Trajectory,
    /// Path length per frame in pixels.
    pub speed: f64,
    pub background: Background,
    pub seed: u64,
}

/// Pixels of one video: `frames[i]` is row-major RGB, `masks[i]` row-major 0/1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedVideo {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<u8>>,
    pub masks: Vec<Vec<u8>>,
}

impl RenderedVideo {
    pub fn frame_tensor(&self, i: usize) -> Tensor {
        let plane = self.width * self.height;
        let mut data = vec![0.0; 3 * plane];
        for (p, px) in self.frames[i].chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = px[c] as f64 / 255.0;
            }
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("extents match")
    }

    pub fn mask_tensor(&self, i: usize) -> Tensor {
        let data = self.masks[i].iter().map(|&m| m as f64).collect();
        Tensor::new(vec![1, self.height, self.width], data).expect("extents match")
    }

    pub fn frame_tensors(&self) -> Vec<Tensor> {
        (0..self.frames.len()).map(|i| self.frame_tensor(i)).collect()
    }

    pub fn mask_tensors(&self) -> Vec<Tensor> {
        (0..self.masks.len()).map(|i| self.mask_tensor(i)).collect()
    }
}

/// Whether the pixel centred at `(px + ½, py + ½)` lies inside the object.
pub fn covers(shape: Shape, cx: f64, cy: f64, radius: f64, px: usize, py: usize) -> bool {
    let dx = px as f64 + 0.5 - cx;
    let dy = py as f64 + 0.5 - cy;
    match shape {
        Shape::Disk => dx * dx + dy * dy <= radius * radius,
        Shape::Square => dx.abs() <= radius && dy.abs() <= radius,
    }
}

/// Reflects `x` into `[lo, hi]`.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let m = (x - lo).rem_euclid(2.0 * span);
    lo + if m <= span { m } else { 2.0 * span - m }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !self.width.is_multiple_of(8) || !self.height.is_multiple_of(8) {
            return param_err(format!("extents {}×{} must be positive multiples of 8", self.width, self.height));
        }
        if self.length < 2 {
            return param_err(format!("length {} < 2", self.length));
        }
        let half = self.width.min(self.height) as f64 / 2.0;
        if !(self.radius > 0.0 && self.radius < half) {
            return param_err(format!("radius {} must lie in (0, {half})", self.radius));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return param_err(format!("speed {} must be finite and ≥ 0", self.speed));
        }
        Ok(())
    }

    pub fn caption(&self) -> String {
        format!("a {} {} moving {}", self.color, self.shape, self.trajectory.phrase())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Object centre for every frame.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        let mut rng = self.rng();
        let (w, h) = (self.width as f64, self.height as f64);
        let margin = self.radius + 1.0;
        let (cx, cy) = (w / 2.0, h / 2.0);
        let reach = (cx - margin).min(cy - margin).max(0.0);
        let period = (self.length - 1) as f64;
        let phase = rng.random::<f64>() * TAU;
        match self.trajectory {
            Trajectory::Linear => {
                let x0 = rng.random_range(margin..=w - margin);
                let y0 = rng.random_range(margin..=h - margin);
                let (s, c) = phase.sin_cos();
                (0..self.length)
                    .map(|i| {
                        let d = self.speed * i as f64;
                        (reflect(x0 + c * d, margin, w - margin), reflect(y0 + s * d, margin, h - margin))
                    })
                    .collect()
            }
            Trajectory::Circular => {
                let orbit = (self.speed * period / TAU).min(reach);
                (0..self.length)
                    .map(|i| {
                        let a = phase + TAU * ((i % (self.length - 1)) as f64) / period;
                        (cx + orbit * a.cos(), cy + orbit * a.sin())
                    })
                    .collect()
            }
            Trajectory::LoopableSine => {
                let amp = (self.speed * period / TAU).min(reach);
                (0..self.length)
                    .map(|i| {
                        let a = phase + TAU * ((i % (self.length - 1)) as f64) / period;
                        (cx + amp * a.sin(), cy + 0.5 * amp * (2.0 * a).sin())
                    })
                    .collect()
            }
        }
    }

    fn background_rows(&self) -> Vec<[u8; 3]> {
        let mut rng = self.rng();
        rng.set_stream(1);
        let pick = |rng: &mut ChaCha8Rng| -> [u8; 3] { [0; 3].map(|_| rng.random_range(20..=110)) };
        let left = pick(&mut rng);
        match self.background {
            Background::Constant => vec![left; self.width],
            Background::Gradient => {
                let right = pick(&mut rng);
                (0..self.width)
                    .map(|x| {
                        let t = x as f64 / (self.width - 1).max(1) as f64;
                        [0, 1, 2].map(|c| (left[c] as f64 * (1.0 - t) + right[c] as f64 * t).round() as u8)
                    })
                    .collect()
            }
        }
    }

    pub fn render(&self) -> Result<RenderedVideo> {
        self.validate()?;
        let bg = self.background_rows();
        let fg = self.color.rgb();
        let (w, h) = (self.width, self.height);
        let mut frames = Vec::with_capacity(self.length);
        let mut masks = Vec::with_capacity(self.length);
        for (cx, cy) in self.positions() {
            let mut frame = Vec::with_capacity(3 * w * h);
            let mut mask = Vec::with_capacity(w * h);
            for y in 0..h {
                for (x, bgx) in bg.iter().enumerate() {
                    let inside = covers(self.shape, cx, cy, self.radius, x, y);
                    frame.extend_from_slice(if inside { &fg } else { bgx });
                    mask.push(inside as u8);
                }
            }
            frames.push(frame);
            masks.push(mask);
        }
        Ok(RenderedVideo {
            width: w,
            height: h,
            frames,
            masks,
        })
    }
}
