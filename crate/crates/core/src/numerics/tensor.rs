use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, Result};

/// Neumaier-compensated sequential sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dense row-major array of 64-bit reals.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) {
            return dim_err(format!("shape {shape:?} has a zero extent"));
        }
        if expected != data.len() {
            return dim_err(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    /// Panics on shape/data mismatch; for shapes computed internally.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_same_shape(other, "zip_map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn sq_norm(&self) -> f64 {
        compensated_sum(self.data.iter().map(|v| v * v))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_same_shape(&self, other: &Tensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return dim_err(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        if self.shape.len() != rank {
            return dim_err(format!(
                "{what}: expected rank {rank}, got shape {:?}",
                self.shape
            ));
        }
        Ok(())
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let i = self.flat_index(index);
        self.data[i] = value;
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
                acc * d + i
            })
    }

    /// Sub-tensor at position `i` along the leading axis.
    pub fn outer(&self, i: usize) -> Tensor {
        let inner: usize = self.shape[1..].iter().product();
        let shape = if self.shape.len() == 1 {
            vec![1]
        } else {
            self.shape[1..].to_vec()
        };
        Tensor::from_parts(shape, self.data[i * inner..(i + 1) * inner].to_vec())
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor]) -> Result<Tensor> {
        let Some(first) = items.first() else {
            return dim_err("stack of zero tensors");
        };
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.expect_same_shape(t, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor::from_parts(shape, data))
    }

    /// Concatenates along axis 1 (channels) for tensors sharing every other extent.
    pub fn concat_channels(items: &[&Tensor]) -> Result<Tensor> {
        let Some(first) = items.first() else {
            return dim_err("concat of zero tensors");
        };
        if first.rank() < 2 {
            return dim_err("concat_channels needs rank >= 2");
        }
        let outer = first.shape[0];
        let tail: Vec<usize> = first.shape[2..].to_vec();
        let tail_len: usize = tail.iter().product();
        let mut channels = 0;
        for t in items {
            if t.rank() != first.rank() || t.shape[0] != outer || t.shape[2..] != tail[..] {
                return dim_err(format!(
                    "concat_channels: {:?} incompatible with {:?}",
                    t.shape, first.shape
                ));
            }
            channels += t.shape[1];
        }
        let mut data = Vec::with_capacity(outer * channels * tail_len);
        for o in 0..outer {
            for t in items {
                let block = t.shape[1] * tail_len;
                data.extend_from_slice(&t.data[o * block..(o + 1) * block]);
            }
        }
        let mut shape = vec![outer, channels];
        shape.extend(tail);
        Ok(Tensor::from_parts(shape, data))
    }

    /// Channel range `[start, end)` of a rank >= 2 tensor.
    pub fn channel_slice(&self, start: usize, end: usize) -> Result<Tensor> {
        if self.rank() < 2 || start >= end || end > self.shape[1] {
            return dim_err(format!(
                "channel_slice {start}..{end} of {:?}",
                self.shape
            ));
        }
        let outer = self.shape[0];
        let tail_len: usize = self.shape[2..].iter().product();
        let block = self.shape[1] * tail_len;
        let mut data = Vec::with_capacity(outer * (end - start) * tail_len);
        for o in 0..outer {
            let base = o * block;
            data.extend_from_slice(&self.data[base + start * tail_len..base + end * tail_len]);
        }
        let mut shape = self.shape.clone();
        shape[1] = end - start;
        Ok(Tensor::from_parts(shape, data))
    }
}
