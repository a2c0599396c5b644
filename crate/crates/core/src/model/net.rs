use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionBundle, CONDITION_CHANNELS, LATENT_CHANNELS};
use crate::error::{dim_err, param_err, Error, Result};
use crate::numerics::{Graph, Tensor, Var};

use super::blocks::{
    cross_attend_graph, sinusoidal_table, temporal_attend_graph, timestep_features, CrossAttention, Temm,
    TEMPORAL_SLOTS,
};
use super::embed::Context;
use super::groups::{GroupSet, ParamGroup, ParamReport};
use super::routing::{ContextSource, RoutingConfig};

/// Seed of the fixed random weights standing in for a pretrained image model.
pub const PRETRAINED_SEED: u64 = 0x00C0_FFEE;
/// Standard deviation of the freshly added conv_in input channels.
pub const NEW_CHANNEL_STD: f64 = 1e-3;
pub const BLOCK_NAMES: [&str; 5] = ["down1", "down2", "middle", "up1", "up2"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub channels: usize,
    pub ctx_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            ctx_dim: 32,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 || !self.channels.is_multiple_of(2) {
            return param_err(format!("channel width must be even and ≥ 2, got {}", self.channels));
        }
        if self.ctx_dim == 0 {
            return param_err("context width must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Clone, Debug)]
struct ResIdx {
    conv1: [usize; 2],
    conv2: [usize; 2],
    temb: [usize; 2],
}

#[derive(Clone, Debug)]
struct BlockIdx {
    res: ResIdx,
    xattn: [usize; 4],
    temm_pos: usize,
    temm: [usize; 4],
}

#[derive(Clone, Debug)]
struct Layout {
    conv_in: [usize; 2],
    time: [usize; 2],
    blocks: Vec<BlockIdx>,
    conv_out: [usize; 2],
}

struct Builder<'r, R: Rng + ?Sized> {
    specs: Vec<ParamSpec>,
    values: Vec<Tensor>,
    rng: &'r mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn push(&mut self, name: String, group: ParamGroup, value: Tensor) -> usize {
        self.specs.push(ParamSpec {
            name,
            group,
            shape: value.shape().to_vec(),
        });
        self.values.push(value);
        self.values.len() - 1
    }

    fn randn(&mut self, name: String, group: ParamGroup, shape: &[usize], std: f64) -> usize {
        let t = Tensor::randn(shape, std, self.rng);
        self.push(name, group, t)
    }

    fn zeros(&mut self, name: String, group: ParamGroup, shape: &[usize]) -> usize {
        self.push(name, group, Tensor::zeros(shape))
    }
}

/// Copies the four pretrained input channels and appends five new ones drawn from `N(0, std²)`.
pub fn conv_in_extend<R: Rng + ?Sized>(pretrained4: &Tensor, std: f64, rng: &mut R) -> Result<Tensor> {
    let s = pretrained4.shape();
    if s.len() != 4 || s[1] != LATENT_CHANNELS || s[2] != 3 || s[3] != 3 {
        return dim_err(format!("expected [C×4×3×3] input kernel, got {s:?}"));
    }
    let c = s[0];
    let extra = CONDITION_CHANNELS - LATENT_CHANNELS;
    let fresh = Tensor::randn(&[c, extra, 3, 3], std, rng);
    let mut out = Vec::with_capacity(c * CONDITION_CHANNELS * 9);
    for o in 0..c {
        out.extend_from_slice(&pretrained4.data()[o * 36..(o + 1) * 36]);
        out.extend_from_slice(&fresh.data()[o * extra * 9..(o + 1) * extra * 9]);
    }
    Tensor::new(vec![c, CONDITION_CHANNELS, 3, 3], out)
}

/// Fixed input kernel `[C×4×3×3]` of the pretrained stand-in.
pub fn pretrained_conv_in(cfg: &NetConfig) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(PRETRAINED_SEED);
    Tensor::randn(&[cfg.channels, LATENT_CHANNELS, 3, 3], 1.0 / 6.0, &mut rng)
}

/// Small video UNet: two downsampling blocks, a middle block and two
/// upsampling blocks, each a residual conv unit followed by spatial
/// cross-attention and temporal attention.
#[derive(Clone, Debug)]
pub struct UNetLite {
    config: NetConfig,
    specs: Vec<ParamSpec>,
    values: Vec<Tensor>,
    layout: Layout,
}

impl UNetLite {
    /// Pretrained stand-in weights with conv_in extended to nine channels using `rng`.
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let conv_in = conv_in_extend(&pretrained_conv_in(&config), NEW_CHANNEL_STD, rng)?;
        let c = config.channels;
        let dc = config.ctx_dim;
        let mut prng = ChaCha8Rng::seed_from_u64(PRETRAINED_SEED ^ 0x5A5A);
        let mut b = Builder {
            specs: Vec::new(),
            values: Vec::new(),
            rng: &mut prng,
        };
        use ParamGroup::*;
        let conv_std = 1.0 / ((9 * c) as f64).sqrt();
        let lin_std = 1.0 / (c as f64).sqrt();
        let ctx_std = 1.0 / (dc as f64).sqrt();

        let conv_in = [
            b.push("conv_in.weight".into(), ConvIn, conv_in),
            b.zeros("conv_in.bias".into(), ConvIn, &[c]),
        ];
        let time = [
            b.randn("time.weight".into(), Backbone, &[c, c], lin_std),
            b.zeros("time.bias".into(), Backbone, &[c]),
        ];
        let mut blocks = Vec::new();
        for name in BLOCK_NAMES {
            let res = ResIdx {
                conv1: [
                    b.randn(format!("{name}.res.conv1.weight"), Backbone, &[c, c, 3, 3], conv_std),
                    b.zeros(format!("{name}.res.conv1.bias"), Backbone, &[c]),
                ],
                conv2: [
                    b.randn(format!("{name}.res.conv2.weight"), Backbone, &[c, c, 3, 3], 0.1 * conv_std),
                    b.zeros(format!("{name}.res.conv2.bias"), Backbone, &[c]),
                ],
                temb: [
                    b.randn(format!("{name}.res.temb.weight"), Backbone, &[c, c], lin_std),
                    b.zeros(format!("{name}.res.temb.bias"), Backbone, &[c]),
                ],
            };
            let xattn = [
                b.randn(format!("{name}.xattn.q"), CrossAttn, &[c, c], lin_std),
                b.randn(format!("{name}.xattn.k"), CrossAttn, &[dc, c], ctx_std),
                b.randn(format!("{name}.xattn.v"), CrossAttn, &[dc, c], ctx_std),
                b.randn(format!("{name}.xattn.out"), CrossAttn, &[c, c], 0.1 * lin_std),
            ];
            let temm_pos = b.push(format!("{name}.temm.pos"), TemmOther, sinusoidal_table(TEMPORAL_SLOTS, c));
            let temm = [
                b.randn(format!("{name}.temm.q"), TemmQ, &[c, c], lin_std),
                b.randn(format!("{name}.temm.k"), TemmK, &[c, c], lin_std),
                b.randn(format!("{name}.temm.v"), TemmV, &[c, c], lin_std),
                b.randn(format!("{name}.temm.out"), TemmOther, &[c, c], 0.1 * lin_std),
            ];
            blocks.push(BlockIdx {
                res,
                xattn,
                temm_pos,
                temm,
            });
        }
        let conv_out = [
            b.randn("conv_out.weight".into(), Backbone, &[LATENT_CHANNELS, c, 3, 3], conv_std),
            b.zeros("conv_out.bias".into(), Backbone, &[LATENT_CHANNELS]),
        ];
        let Builder { specs, values, .. } = b;
        Ok(Self {
            config,
            specs,
            values,
            layout: Layout {
                conv_in,
                time,
                blocks,
                conv_out,
            },
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Replaces every parameter; shapes must match the manifest.
    pub fn set_values(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.values.len() {
            return dim_err(format!("expected {} parameters, got {}", self.values.len(), values.len()));
        }
        for (spec, v) in self.specs.iter().zip(&values) {
            if v.shape() != spec.shape.as_slice() {
                return dim_err(format!("{}: expected {:?}, got {:?}", spec.name, spec.shape, v.shape()));
            }
        }
        self.values = values;
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.specs.iter().position(|s| s.name == name).map(|i| &self.values[i])
    }

    /// Copies of every parameter in `group`, in manifest order.
    pub fn group_values(&self, group: ParamGroup) -> Vec<Tensor> {
        self.specs
            .iter()
            .zip(&self.values)
            .filter(|(s, _)| s.group == group)
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn param_report(&self) -> ParamReport {
        let mut groups = ParamGroup::ALL.iter().map(|&g| (g, 0)).collect::<std::collections::BTreeMap<_, _>>();
        for s in &self.specs {
            *groups.get_mut(&s.group).unwrap() += s.numel();
        }
        let total = self.specs.iter().map(ParamSpec::numel).sum();
        ParamReport { groups, total }
    }

    pub fn cross_attention(&self, block: usize) -> CrossAttention {
        let [q, k, v, out] = self.layout.blocks[block].xattn.map(|i| self.values[i].clone());
        CrossAttention { q, k, v, out }
    }

    pub fn temm(&self, block: usize) -> Temm {
        let b = &self.layout.blocks[block];
        let [q_proj, k_proj, v_proj, out_proj] = b.temm.map(|i| self.values[i].clone());
        Temm {
            pos_embedding: self.values[b.temm_pos].clone(),
            q_proj,
            k_proj,
            v_proj,
            out_proj,
        }
    }

    /// Noise prediction `[frames×4×h×w]` for a bundle at timestep `t`.
    pub fn forward(&self, bundle: &ConditionBundle, t: usize, ctx: &Context, routing: &RoutingConfig) -> Result<Tensor> {
        let pass = self.forward_pass(&bundle.z_c, t, ctx, routing, &GroupSet::new(), false)?;
        Ok(pass.graph.value(pass.output).clone())
    }

    /// Records the forward computation. Parameters in `trainable` and, when
    /// `ctx_grad` is set, the context tokens are differentiable leaves.
    pub fn forward_pass(
        &self,
        z_c: &Tensor,
        t: usize,
        ctx: &Context,
        routing: &RoutingConfig,
        trainable: &GroupSet,
        ctx_grad: bool,
    ) -> Result<ForwardPass> {
        z_c.expect_rank(4, "condition input")?;
        let s = z_c.shape();
        if s[1] != CONDITION_CHANNELS {
            return dim_err(format!("expected {CONDITION_CHANNELS} input channels, got {s:?}"));
        }
        if !s[2].is_multiple_of(4) || !s[3].is_multiple_of(4) {
            return dim_err(format!("latent extents must be divisible by 4, got {s:?}"));
        }
        if s[0] > TEMPORAL_SLOTS {
            return Err(Error::Capacity {
                frames: s[0],
                capacity: TEMPORAL_SLOTS,
            });
        }
        let mut g = Graph::new();
        let params: Vec<Var> = self
            .specs
            .iter()
            .zip(&self.values)
            .map(|(s, v)| g.leaf(v.clone(), trainable.contains(&s.group)))
            .collect();
        let image_ctx = ctx.image.as_ref().map(|c| g.leaf(c.clone(), ctx_grad));
        let text_ctx = ctx.text.as_ref().map(|c| g.leaf(c.clone(), ctx_grad));
        let mut run = Run {
            g: &mut g,
            p: &params,
            image_ctx,
            text_ctx,
        };
        let output = run.unet(&self.layout, z_c, t, self.config.channels, routing)?;
        Ok(ForwardPass {
            graph: g,
            params,
            image_ctx,
            text_ctx,
            output,
        })
    }
}

/// A recorded forward evaluation, ready for [`Graph::backward`].
pub struct ForwardPass {
    pub graph: Graph,
    pub params: Vec<Var>,
    pub image_ctx: Option<Var>,
    pub text_ctx: Option<Var>,
    pub output: Var,
}

struct Run<'a> {
    g: &'a mut Graph,
    p: &'a [Var],
    image_ctx: Option<Var>,
    text_ctx: Option<Var>,
}

impl Run<'_> {
    fn unet(&mut self, l: &Layout, z_c: &Tensor, t: usize, c: usize, routing: &RoutingConfig) -> Result<Var> {
        let x = self.g.constant(z_c.clone());
        let mut h = self.conv(x, l.conv_in)?;
        let tf = self.g.constant(timestep_features(t, c));
        let temb = self.g.matmul(tf, self.p[l.time[0]])?;
        let temb = self.g.add_trailing(temb, self.p[l.time[1]])?;
        let temb = self.g.silu(temb);

        let mut skips = Vec::new();
        for b in &l.blocks[0..2] {
            h = self.block(b, h, temb, routing.down)?;
            skips.push(h);
            h = self.g.avg_pool2(h)?;
        }
        h = self.block(&l.blocks[2], h, temb, routing.middle)?;
        for b in &l.blocks[3..5] {
            h = self.g.upsample2(h)?;
            h = self.g.add(h, skips.pop().expect("one skip per level"))?;
            h = self.block(b, h, temb, routing.up)?;
        }
        let a = self.g.silu(h);
        self.conv(a, l.conv_out)
    }

    fn conv(&mut self, x: Var, w: [usize; 2]) -> Result<Var> {
        self.g.conv3x3(x, self.p[w[0]], self.p[w[1]])
    }

    fn block(&mut self, b: &BlockIdx, h: Var, temb: Var, source: ContextSource) -> Result<Var> {
        let h = self.resblock(&b.res, h, temb)?;
        let s = self.g.value(h).shape().to_vec();
        let (n, c, hh, ww) = (s[0], s[1], s[2], s[3]);
        let nhwc = self.g.permute(h, &[0, 2, 3, 1])?;
        let tokens = self.g.reshape(nhwc, &[n * hh * ww, c])?;
        let ctx = match source {
            ContextSource::None => None,
            ContextSource::Image => Some(self.image_ctx.ok_or_else(|| missing("image"))?),
            ContextSource::Text => Some(self.text_ctx.ok_or_else(|| missing("text"))?),
        };
        let tokens = cross_attend_graph(self.g, tokens, ctx, b.xattn.map(|i| self.p[i]))?;
        let by_frame = self.g.reshape(tokens, &[n, hh * ww, c])?;
        let by_frame = temporal_attend_graph(self.g, by_frame, self.p[b.temm_pos], b.temm.map(|i| self.p[i]))?;
        let nhwc = self.g.reshape(by_frame, &[n, hh, ww, c])?;
        self.g.permute(nhwc, &[0, 3, 1, 2])
    }

    fn resblock(&mut self, r: &ResIdx, h: Var, temb: Var) -> Result<Var> {
        let a = self.g.silu(h);
        let a = self.conv(a, r.conv1)?;
        let tp = self.g.matmul(temb, self.p[r.temb[0]])?;
        let tp = self.g.add_trailing(tp, self.p[r.temb[1]])?;
        let c = self.g.value(tp).len();
        let tp = self.g.reshape(tp, &[c])?;
        let a = self.g.add_channel(a, tp)?;
        let a = self.g.silu(a);
        let a = self.conv(a, r.conv2)?;
        self.g.add(h, a)
    }
}

fn missing(what: &str) -> Error {
    Error::Contract(format!("routing requires {what} context tokens but none were provided"))
}
