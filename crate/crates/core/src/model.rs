//! Three-scale gated enhancement network.
//!
//! ```text
//! x ─ input ─ down1 ─ refine ─ down2 ─ refine ─ down3 ─ refine (S/8)
//!               │(xa,xb)  │e1    │(xa,xb)  │e2               │
//!               │         │      └────┬────┴──── fuse_s4 ◄──┘
//!               │         └───────────┴──── fuse_s2 ◄─┘
//!                                                 └─ up ─ head ─ δ ─ y = clip(x + δ)
//! ```
//!
//! The forward pass is written once against [`Builder`]; the tape-backed
//! builder here gives float inference and training, while the quantization
//! module provides builders for fake-quant simulation and INT8 graph
//! emission.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Shape, Tensor};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub base_width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub leaky_slope: f32,
    pub residual_head: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_width: 32,
            in_channels: 3,
            out_channels: 3,
            leaky_slope: 0.2,
            residual_head: true,
        }
    }
}

impl ModelConfig {
    pub fn with_width(base_width: usize) -> Self {
        ModelConfig {
            base_width,
            ..Default::default()
        }
    }

    /// Widths at S/2, S/4 and S/8.
    pub fn stage_widths(&self) -> [usize; 3] {
        let c = self.base_width;
        [c, 2 * c, 4 * c]
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::Invalid("base_width must be at least 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Invalid("channel counts must be positive".into()));
        }
        if self.residual_head && self.in_channels != self.out_channels {
            return Err(Error::Invalid(
                "residual head needs equal input and output channels".into(),
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Invalid("leaky_slope must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Index into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<R: Real> {
    pub name: String,
    pub value: Tensor<R>,
}

/// Flat, ordered list of named parameter tensors.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<R: Real = f32> {
    params: Vec<Param<R>>,
}

impl<R: Real> ParamStore<R> {
    fn add(&mut self, name: String, value: Tensor<R>) -> ParamId {
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<R>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<R>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Layer descriptors
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormLayer {
    pub name: String,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
}

/// Dual-branch gated down-sampling block.
#[derive(Clone, Debug, PartialEq)]
pub struct GatedBlock {
    pub name: String,
    pub branch_a: ConvLayer,
    pub branch_b: ConvLayer,
}

/// Residual refinement block, channel-preserving.
#[derive(Clone, Debug, PartialEq)]
pub struct RefineBlock {
    pub name: String,
    pub conv1: ConvLayer,
    pub norm1: NormLayer,
    pub side: ConvLayer,
    pub conv2: ConvLayer,
    pub norm2: NormLayer,
    pub conv3: ConvLayer,
    pub shortcut: ConvLayer,
}

/// Decoder fusion: upsample, triple-stream concat, 1×1 reduction, refine.
#[derive(Clone, Debug, PartialEq)]
pub struct FuseBlock {
    pub name: String,
    pub up_conv: ConvLayer,
    pub reduce: ConvLayer,
    pub refine: RefineBlock,
}

/// Layer layout of a network; parameter values live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub down1: GatedBlock,
    pub down2: GatedBlock,
    pub down3: GatedBlock,
    pub enc_refine1: RefineBlock,
    pub enc_refine2: RefineBlock,
    pub bottleneck_refine: RefineBlock,
    pub fuse_s4: FuseBlock,
    pub fuse_s2: FuseBlock,
    pub head: ConvLayer,
}

struct LayoutBuilder<'a, R: Real> {
    store: ParamStore<R>,
    rng: &'a mut ChaCha8Rng,
}

impl<R: Real> LayoutBuilder<'_, R> {
    fn conv(&mut self, name: &str, in_ch: usize, out_ch: usize, k: usize, stride: usize) -> ConvLayer {
        let fan_in = (in_ch * k * k) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let w: Vec<R> = (0..out_ch * in_ch * k * k)
            .map(|_| R::of(self.rng.random_range(-bound..bound)))
            .collect();
        let weight = self.store.add(
            format!("{name}.weight"),
            Tensor::from_vec(Shape::new(out_ch, in_ch, k, k), w).expect("sized"),
        );
        let bias = self.store.add(
            format!("{name}.bias"),
            Tensor::channel_vector(vec![R::zero(); out_ch]),
        );
        ConvLayer {
            name: name.to_string(),
            weight,
            bias,
            in_ch,
            out_ch,
            kernel: k,
            stride,
            padding: k / 2,
        }
    }

    fn norm(&mut self, name: &str, channels: usize) -> NormLayer {
        let gamma = self.store.add(
            format!("{name}.gamma"),
            Tensor::channel_vector(vec![R::one(); channels]),
        );
        let beta = self.store.add(
            format!("{name}.beta"),
            Tensor::channel_vector(vec![R::zero(); channels]),
        );
        NormLayer {
            name: name.to_string(),
            gamma,
            beta,
            channels,
        }
    }

    fn gated(&mut self, name: &str, in_ch: usize, out_ch: usize) -> GatedBlock {
        GatedBlock {
            name: name.to_string(),
            branch_a: self.conv(&format!("{name}.branch_a"), in_ch, out_ch, 3, 2),
            branch_b: self.conv(&format!("{name}.branch_b"), in_ch, out_ch, 3, 2),
        }
    }

    fn refine(&mut self, name: &str, c: usize) -> RefineBlock {
        RefineBlock {
            name: name.to_string(),
            conv1: self.conv(&format!("{name}.conv1"), c, c, 3, 1),
            norm1: self.norm(&format!("{name}.norm1"), c),
            side: self.conv(&format!("{name}.side"), c, c, 1, 1),
            conv2: self.conv(&format!("{name}.conv2"), 2 * c, c, 3, 1),
            norm2: self.norm(&format!("{name}.norm2"), c),
            conv3: self.conv(&format!("{name}.conv3"), c, c, 3, 1),
            shortcut: self.conv(&format!("{name}.shortcut"), c, c, 1, 1),
        }
    }

    fn fuse(&mut self, name: &str, deep: usize, stage: usize) -> FuseBlock {
        FuseBlock {
            name: name.to_string(),
            up_conv: self.conv(&format!("{name}.up_conv"), deep, stage, 3, 1),
            reduce: self.conv(&format!("{name}.reduce"), 4 * stage, stage, 1, 1),
            refine: self.refine(&format!("{name}.refine"), stage),
        }
    }
}

impl Architecture {
    fn build<R: Real>(config: &ModelConfig, seed: u64) -> Result<(Architecture, ParamStore<R>)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = LayoutBuilder {
            store: ParamStore::default(),
            rng: &mut rng,
        };
        let [c1, c2, c3] = config.stage_widths();
        let down1 = b.gated("down1", config.in_channels, c1);
        let enc_refine1 = b.refine("enc_refine1", c1);
        let down2 = b.gated("down2", c1, c2);
        let enc_refine2 = b.refine("enc_refine2", c2);
        let down3 = b.gated("down3", c2, c3);
        let bottleneck_refine = b.refine("bottleneck_refine", c3);
        let fuse_s4 = b.fuse("fuse_s4", c3, c2);
        let fuse_s2 = b.fuse("fuse_s2", c2, c1);
        let head = b.conv("head", c1, config.out_channels, 3, 1);
        let arch = Architecture {
            config: config.clone(),
            down1,
            down2,
            down3,
            enc_refine1,
            enc_refine2,
            bottleneck_refine,
            fuse_s4,
            fuse_s2,
            head,
        };
        Ok((arch, b.store))
    }

    /// All conv layers in forward order.
    pub fn convs(&self) -> Vec<&ConvLayer> {
        fn refine(r: &RefineBlock) -> [&ConvLayer; 5] {
            [&r.conv1, &r.side, &r.conv2, &r.conv3, &r.shortcut]
        }
        let mut v = vec![&self.down1.branch_a, &self.down1.branch_b];
        v.extend(refine(&self.enc_refine1));
        v.extend([&self.down2.branch_a, &self.down2.branch_b]);
        v.extend(refine(&self.enc_refine2));
        v.extend([&self.down3.branch_a, &self.down3.branch_b]);
        v.extend(refine(&self.bottleneck_refine));
        for f in [&self.fuse_s4, &self.fuse_s2] {
            v.extend([&f.up_conv, &f.reduce]);
            v.extend(refine(&f.refine));
        }
        v.push(&self.head);
        v
    }

    /// Encoder, refinement, decoder fusion and residual head.
    pub fn forward<B: Builder>(&self, b: &mut B, x: B::Value) -> Result<B::Value> {
        let x = b.requant("input", x)?;
        let (a1, g1, b1) = self.down1.forward(b, x)?;
        let e1 = self.enc_refine1.forward(b, g1)?;
        let (a2, g2, b2) = self.down2.forward(b, e1)?;
        let e2 = self.enc_refine2.forward(b, g2)?;
        // the S/8 gated block's (xa, xb) skip has no decoder stage to feed
        let (_, g3, _) = self.down3.forward(b, e2)?;
        let e3 = self.bottleneck_refine.forward(b, g3)?;
        let d2 = self.fuse_s4.forward(b, e3, e2, (a2, b2))?;
        let d1 = self.fuse_s2.forward(b, d2, e1, (a1, b1))?;
        let up = b.upsample(d1)?;
        let delta = b.conv(&self.head, up)?;
        b.residual_output("output", x, delta, self.config.residual_head)
    }
}

impl GatedBlock {
    /// Returns `(xa, xg, xb)` at half resolution.
    pub fn forward<B: Builder>(
        &self,
        b: &mut B,
        x: B::Value,
    ) -> Result<(B::Value, B::Value, B::Value)> {
        if let Some(s) = b.shape_of(x) {
            if s.h % 2 != 0 || s.w % 2 != 0 {
                return shape_err(
                    "gated_down",
                    format!("{}: odd spatial size {}x{}, pad first", self.name, s.h, s.w),
                );
            }
        }
        let za = b.conv(&self.branch_a, x)?;
        let xa = b.tanh(&format!("{}.tanh_a", self.name), za)?;
        let zb = b.conv(&self.branch_b, x)?;
        let xb = b.tanh(&format!("{}.tanh_b", self.name), zb)?;
        let xg = b.gate(&format!("{}.gate", self.name), xa, xb)?;
        Ok((xa, xg, xb))
    }
}

impl RefineBlock {
    pub fn forward<B: Builder>(&self, b: &mut B, f: B::Value) -> Result<B::Value> {
        let c1 = b.conv(&self.conv1, f)?;
        let n1 = b.norm_lrelu(&self.norm1, c1)?;
        let side = b.conv(&self.side, f)?;
        let cat = b.concat(&format!("{}.concat", self.name), &[n1, side])?;
        let c2 = b.conv(&self.conv2, cat)?;
        let n2 = b.norm_lrelu(&self.norm2, c2)?;
        let n2 = b.requant(&format!("{}.norm2_out", self.name), n2)?;
        let c3 = b.conv(&self.conv3, n2)?;
        let sc = b.conv(&self.shortcut, f)?;
        b.add(&format!("{}.sum", self.name), c3, sc)
    }
}

impl FuseBlock {
    pub fn forward<B: Builder>(
        &self,
        b: &mut B,
        deep: B::Value,
        enc: B::Value,
        skip: (B::Value, B::Value),
    ) -> Result<B::Value> {
        if let (Some(d), Some(e), Some(sa), Some(sb)) = (
            b.shape_of(deep),
            b.shape_of(enc),
            b.shape_of(skip.0),
            b.shape_of(skip.1),
        ) {
            if (d.h * 2, d.w * 2) != (e.h, e.w) || (sa.h, sa.w) != (e.h, e.w) || sa != sb {
                return shape_err(
                    "fuse",
                    format!("{}: deep {d}, encoder {e}, skip {sa}/{sb}", self.name),
                );
            }
            let concat = self.up_conv.out_ch + e.c + sa.c + sb.c;
            if concat != self.reduce.in_ch {
                return shape_err(
                    "fuse",
                    format!(
                        "{}: concat width {concat} but reduce expects {}",
                        self.name, self.reduce.in_ch
                    ),
                );
            }
        }
        let up = b.upsample(deep)?;
        let up = b.conv(&self.up_conv, up)?;
        let cat = b.concat(&format!("{}.concat", self.name), &[up, enc, skip.0, skip.1])?;
        let reduced = b.conv(&self.reduce, cat)?;
        self.refine.forward(b, reduced)
    }
}

/// Execution backend for the network's forward pass. Names passed to the
/// point-taking methods identify activation quantization points.
pub trait Builder {
    type Value: Copy;

    fn shape_of(&self, _v: Self::Value) -> Option<Shape> {
        None
    }
    /// Convolution; its output is the quantization point named after the layer.
    fn conv(&mut self, layer: &ConvLayer, x: Self::Value) -> Result<Self::Value>;
    fn tanh(&mut self, point: &str, x: Self::Value) -> Result<Self::Value>;
    fn gate(&mut self, point: &str, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    /// Instance norm followed by LeakyReLU. Never a quantization point on
    /// its own; its consumer quantizes it.
    fn norm_lrelu(&mut self, norm: &NormLayer, x: Self::Value) -> Result<Self::Value>;
    fn concat(&mut self, point: &str, parts: &[Self::Value]) -> Result<Self::Value>;
    fn add(&mut self, point: &str, a: Self::Value, b: Self::Value) -> Result<Self::Value>;
    fn upsample(&mut self, x: Self::Value) -> Result<Self::Value>;
    /// A standalone activation quantization point.
    fn requant(&mut self, point: &str, x: Self::Value) -> Result<Self::Value>;
    /// `clip01(x + delta)`, or `clip01(delta)` without the residual.
    fn residual_output(
        &mut self,
        point: &str,
        x: Self::Value,
        delta: Self::Value,
        residual: bool,
    ) -> Result<Self::Value>;
}

/// Kind of an activation quantization point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    /// Range tracked by an observer.
    Observed,
    /// tanh output, fixed range [−1, 1].
    Tanh,
    /// Network output, fixed range [0, 1].
    Output,
}

/// Builder that only records quantization point names.
#[derive(Default)]
struct PointCollector {
    points: Vec<(String, PointKind)>,
}

impl Builder for PointCollector {
    type Value = ();

    fn conv(&mut self, layer: &ConvLayer, _: ()) -> Result<()> {
        self.points.push((layer.name.clone(), PointKind::Observed));
        Ok(())
    }
    fn tanh(&mut self, point: &str, _: ()) -> Result<()> {
        self.points.push((point.into(), PointKind::Tanh));
        Ok(())
    }
    fn gate(&mut self, point: &str, _: (), _: ()) -> Result<()> {
        self.points.push((point.into(), PointKind::Observed));
        Ok(())
    }
    fn norm_lrelu(&mut self, _: &NormLayer, _: ()) -> Result<()> {
        Ok(())
    }
    fn concat(&mut self, point: &str, _: &[()]) -> Result<()> {
        self.points.push((point.into(), PointKind::Observed));
        Ok(())
    }
    fn add(&mut self, point: &str, _: (), _: ()) -> Result<()> {
        self.points.push((point.into(), PointKind::Observed));
        Ok(())
    }
    fn upsample(&mut self, _: ()) -> Result<()> {
        Ok(())
    }
    fn requant(&mut self, point: &str, _: ()) -> Result<()> {
        self.points.push((point.into(), PointKind::Observed));
        Ok(())
    }
    fn residual_output(&mut self, point: &str, _: (), _: (), _: bool) -> Result<()> {
        self.points.push((point.into(), PointKind::Output));
        Ok(())
    }
}

impl Architecture {
    /// Every activation quantization point in forward order.
    pub fn quant_points(&self) -> Vec<(String, PointKind)> {
        let mut c = PointCollector::default();
        self.forward(&mut c, ()).expect("collector never fails");
        c.points
    }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Network<R: Real = f32> {
    pub arch: Architecture,
    pub params: ParamStore<R>,
}

/// Seeded fan-in-uniform initialization: conv weights ~ U(±1/sqrt(fan_in)),
/// biases 0, instance-norm gamma 1 and beta 0.
pub fn init_network<R: Real>(config: &ModelConfig, seed: u64) -> Result<Network<R>> {
    let (arch, params) = Architecture::build(config, seed)?;
    Ok(Network { arch, params })
}

/// Number of scalar parameters for a configuration.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    let (_, params) = Architecture::build::<f32>(config, 0)?;
    Ok(params.numel())
}

impl<R: Real> Network<R> {
    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn cast<S: Real>(&self) -> Network<S> {
        Network {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    /// Zeroes the head conv so that the residual network is the identity.
    pub fn zero_head(&mut self) {
        let (w, b) = (self.arch.head.weight, self.arch.head.bias);
        self.params.get_mut(w).data_mut().fill(R::zero());
        self.params.get_mut(b).data_mut().fill(R::zero());
    }

    /// Inference on inputs whose height and width are multiples of 8.
    pub fn forward(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        check_multiple_of_8(x.shape())?;
        let mut tape = Tape::new();
        let mut b = TapeBuilder::new(&mut tape, self, false);
        let xv = b.tape.constant(x.clone());
        let y = self.arch.forward(&mut b, xv)?;
        Ok(tape.value(y).clone())
    }

    /// Pads to a multiple of 8, runs the network and crops back.
    pub fn enhance(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let (padded, crop) = pad_to_multiple(x, 8)?;
        crop.apply(&self.forward(&padded)?)
    }
}

pub fn check_multiple_of_8(s: Shape) -> Result<()> {
    if !s.h.is_multiple_of(8) || !s.w.is_multiple_of(8) || s.h == 0 || s.w == 0 {
        return shape_err(
            "network_forward",
            format!(
                "height/width {}x{} must be non-zero multiples of 8; use pad_to_multiple",
                s.h, s.w
            ),
        );
    }
    Ok(())
}

/// Float builder recording onto a [`Tape`]. Parameters are registered as
/// trainable leaves when `track_grads` is set, otherwise as constants.
pub struct TapeBuilder<'a, R: Real> {
    pub tape: &'a mut Tape<R>,
    params: Vec<Var>,
    slope: R,
}

impl<'a, R: Real> TapeBuilder<'a, R> {
    pub fn new(tape: &'a mut Tape<R>, net: &Network<R>, track_grads: bool) -> Self {
        let params = net
            .params
            .iter()
            .map(|p| {
                if track_grads {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        TapeBuilder {
            tape,
            params,
            slope: R::of(net.config().leaky_slope as f64),
        }
    }

    pub fn param(&self, id: ParamId) -> Var {
        self.params[id.0]
    }

    /// Tape variables of every parameter, in store order.
    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }
}

impl<R: Real> Builder for TapeBuilder<'_, R> {
    type Value = Var;

    fn shape_of(&self, v: Var) -> Option<Shape> {
        Some(self.tape.shape(v))
    }

    fn conv(&mut self, layer: &ConvLayer, x: Var) -> Result<Var> {
        let (w, b) = (self.param(layer.weight), self.param(layer.bias));
        self.tape.conv2d(x, w, b, layer.stride, layer.padding)
    }

    fn tanh(&mut self, _: &str, x: Var) -> Result<Var> {
        self.tape.tanh(x)
    }

    fn gate(&mut self, _: &str, a: Var, b: Var) -> Result<Var> {
        self.tape.hadamard(a, b)
    }

    fn norm_lrelu(&mut self, norm: &NormLayer, x: Var) -> Result<Var> {
        let (g, b) = (self.param(norm.gamma), self.param(norm.beta));
        let n = self.tape.instance_norm(x, g, b, R::of(NORM_EPS))?;
        self.tape.leaky_relu(n, self.slope)
    }

    fn concat(&mut self, _: &str, parts: &[Var]) -> Result<Var> {
        self.tape.concat_channels(parts)
    }

    fn add(&mut self, _: &str, a: Var, b: Var) -> Result<Var> {
        self.tape.add(a, b)
    }

    fn upsample(&mut self, x: Var) -> Result<Var> {
        self.tape.upsample_nearest2x(x)
    }

    fn requant(&mut self, _: &str, x: Var) -> Result<Var> {
        Ok(x)
    }

    fn residual_output(&mut self, _: &str, x: Var, delta: Var, residual: bool) -> Result<Var> {
        let pre = if residual {
            self.tape.add(x, delta)?
        } else {
            delta
        };
        self.tape.clip01(pre)
    }
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

/// Original spatial size of a padded tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropRecord {
    pub height: usize,
    pub width: usize,
    pub pad_bottom: usize,
    pub pad_right: usize,
}

impl CropRecord {
    pub fn is_empty(&self) -> bool {
        self.pad_bottom == 0 && self.pad_right == 0
    }

    pub fn apply<R: Real>(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let s = x.shape();
        if s.h < self.height || s.w < self.width {
            return shape_err("crop", format!("{s} smaller than {}x{}", self.height, self.width));
        }
        if s.h == self.height && s.w == self.width {
            return Ok(x.clone());
        }
        let mut data = Vec::with_capacity(s.n * s.c * self.height * self.width);
        for plane in x.data().chunks(s.plane()) {
            for y in 0..self.height {
                data.extend_from_slice(&plane[y * s.w..y * s.w + self.width]);
            }
        }
        Tensor::from_vec(Shape::new(s.n, s.c, self.height, self.width), data)
    }
}

/// Mirror index without edge repetition.
fn reflect(i: usize, n: usize) -> usize {
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Reflect-pads bottom and right so height and width become multiples of `m`.
pub fn pad_to_multiple<R: Real>(x: &Tensor<R>, m: usize) -> Result<(Tensor<R>, CropRecord)> {
    if m == 0 {
        return Err(Error::Invalid("pad multiple must be at least 1".into()));
    }
    let s = x.shape();
    let ph = s.h.div_ceil(m) * m;
    let pw = s.w.div_ceil(m) * m;
    let crop = CropRecord {
        height: s.h,
        width: s.w,
        pad_bottom: ph - s.h,
        pad_right: pw - s.w,
    };
    if crop.is_empty() {
        return Ok((x.clone(), crop));
    }
    if s.h < 2 || s.w < 2 {
        return shape_err(
            "pad_to_multiple",
            format!("reflection needs at least 2 pixels per side, got {}x{}", s.h, s.w),
        );
    }
    let mut data = Vec::with_capacity(s.n * s.c * ph * pw);
    for plane in x.data().chunks(s.plane()) {
        for y in 0..ph {
            let row = &plane[reflect(y, s.h) * s.w..(reflect(y, s.h) + 1) * s.w];
            data.extend_from_slice(row);
            data.extend((s.w..pw).map(|xx| row[reflect(xx, s.w)]));
        }
    }
    Ok((Tensor::from_vec(Shape::new(s.n, s.c, ph, pw), data)?, crop))
}
