use crate::error::{dim_err, Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Length of the learned temporal position table.
pub const TEMPORAL_SLOTS: usize = 36;

/// `x[..., d_in] · w[d_in×d_out]`.
pub(crate) fn linear(g: &mut Graph, x: Var, w: Var) -> Result<Var> {
    let xs = g.value(x).shape().to_vec();
    if xs.len() == 2 {
        return g.matmul(x, w);
    }
    let d_in = *xs.last().expect("non-empty shape");
    let rows = g.value(x).len() / d_in;
    let flat = g.reshape(x, &[rows, d_in])?;
    let y = g.matmul(flat, w)?;
    let mut out_shape = xs;
    *out_shape.last_mut().unwrap() = g.value(w).shape()[1];
    g.reshape(y, &out_shape)
}

/// `z + softmax((z·Wq)(ctx·Wk)ᵀ/√d)(ctx·Wv)·Wout` for `z[L×d]`; identity without context.
pub(crate) fn cross_attend_graph(g: &mut Graph, z: Var, ctx: Option<Var>, w: [Var; 4]) -> Result<Var> {
    let Some(ctx) = ctx else { return Ok(z) };
    let [wq, wk, wv, wo] = w;
    let q = g.matmul(z, wq)?;
    let k = g.matmul(ctx, wk)?;
    let v = g.matmul(ctx, wv)?;
    let a = g.attention(q, k, v)?;
    let o = g.matmul(a, wo)?;
    g.add(z, o)
}

/// Per-position self-attention across frames of `z[T×P×d]` with positions
/// added to queries and keys, plus a residual.
pub(crate) fn temporal_attend_graph(g: &mut Graph, z: Var, pos: Var, w: [Var; 4]) -> Result<Var> {
    let frames = g.value(z).shape()[0];
    if frames > TEMPORAL_SLOTS {
        return Err(Error::Capacity {
            frames,
            capacity: TEMPORAL_SLOTS,
        });
    }
    let [wq, wk, wv, wo] = w;
    let by_pos = g.permute(z, &[1, 0, 2])?;
    let p = g.head(pos, frames)?;
    let qk_in = g.add_trailing(by_pos, p)?;
    let q = linear(g, qk_in, wq)?;
    let k = linear(g, qk_in, wk)?;
    let v = linear(g, by_pos, wv)?;
    let a = g.attention(q, k, v)?;
    let o = linear(g, a, wo)?;
    let back = g.permute(o, &[1, 0, 2])?;
    g.add(z, back)
}

/// Spatial cross-attention weights: `q[d×d]`, `k[dc×d]`, `v[dc×d]`, `out[d×d]`.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    pub out: Tensor,
}

impl CrossAttention {
    pub fn attend(&self, z: &Tensor, ctx: Option<&Tensor>) -> Result<Tensor> {
        z.expect_rank(2, "cross-attention input")?;
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let cv = ctx.map(|c| g.constant(c.clone()));
        let w = [&self.q, &self.k, &self.v, &self.out].map(|t| g.constant(t.clone()));
        let out = cross_attend_graph(&mut g, zv, cv, w)?;
        Ok(g.value(out).clone())
    }
}

/// Temporal attention weights with a position table `[36×d]`.
#[derive(Clone, Debug)]
pub struct Temm {
    pub pos_embedding: Tensor,
    pub q_proj: Tensor,
    pub k_proj: Tensor,
    pub v_proj: Tensor,
    pub out_proj: Tensor,
}

impl Temm {
    pub fn attend(&self, z: &Tensor) -> Result<Tensor> {
        z.expect_rank(3, "temporal attention input")?;
        if self.pos_embedding.shape() != [TEMPORAL_SLOTS, z.shape()[2]] {
            return dim_err(format!(
                "position table {:?} does not match feature width {}",
                self.pos_embedding.shape(),
                z.shape()[2]
            ));
        }
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let pos = g.constant(self.pos_embedding.clone());
        let w = [&self.q_proj, &self.k_proj, &self.v_proj, &self.out_proj].map(|t| g.constant(t.clone()));
        let out = temporal_attend_graph(&mut g, zv, pos, w)?;
        Ok(g.value(out).clone())
    }
}

/// `[slots×d]` sinusoidal table: even columns sine, odd columns cosine.
pub fn sinusoidal_table(slots: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[slots, d]);
    for p in 0..slots {
        for i in 0..d {
            let freq = 10_000f64.powf(-((i / 2 * 2) as f64) / d as f64);
            let angle = p as f64 * freq;
            t.set(&[p, i], if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

/// Sinusoidal timestep features `[1×d]`: first half sine, second half cosine.
pub fn timestep_features(t: usize, d: usize) -> Tensor {
    let half = d / 2;
    let mut out = vec![0.0; d];
    for i in 0..half {
        let freq = 10_000f64.powf(-(i as f64) / half as f64);
        out[i] = (t as f64 * freq).sin();
        out[half + i] = (t as f64 * freq).cos();
    }
    Tensor::from_parts(vec![1, d], out)
}
