//! The INT8 execution graph: conversion from an instrumented network and
//! integer-only execution with float islands for instance norm + LeakyReLU.
//!
//! The graph is emitted by walking the shared architecture with an
//! [`Emitter`] builder, so its topology always matches the float and
//! fake-quant forward passes. It is fully determined by the model config,
//! the activation parameters, the quantized conv weights and the norm
//! affines; that is all a checkpoint stores.

use std::collections::BTreeMap;

use super::engine::{
    int8_add, int8_concat, int8_conv2d, int8_hadamard, int8_requantize, int8_upsample2x, TanhLut,
};
use super::params::{
    quantize, weight_channel_qparams, AddRequant, IntData, IntTensor, QuantParams,
    RequantMultiplier,
};
use super::qat::QatNetwork;
use crate::error::{Error, Result};
use crate::model::{
    check_multiple_of_8, init_network, pad_to_multiple, Architecture, Builder, ConvLayer,
    ModelConfig, NormLayer, NORM_EPS,
};
use crate::tensor::{self, Real, Shape, Tensor};

/// Quantized conv layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Int8Conv {
    pub name: String,
    /// Signed 8-bit, per-output-channel symmetric.
    pub weight: IntTensor,
    /// 32-bit, at scale `s_in · s_w[o]`.
    pub bias: Vec<i32>,
    pub stride: usize,
    pub padding: usize,
    pub in_qp: QuantParams,
    pub out_qp: QuantParams,
    pub requant: Vec<RequantMultiplier>,
}

/// Instance-norm affine executed in floating point.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatNorm {
    pub name: String,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

/// Graph node over value slots. A slot holds either 8-bit values with
/// their parameters or a float tensor (input image, float-island output).
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Quantize {
        input: usize,
        output: usize,
        qp: QuantParams,
    },
    Requantize {
        input: usize,
        output: usize,
        requant: RequantMultiplier,
        qp: QuantParams,
    },
    Conv {
        input: usize,
        output: usize,
        conv: usize,
    },
    Tanh {
        input: usize,
        output: usize,
        lut: TanhLut,
        qp: QuantParams,
    },
    Hadamard {
        a: usize,
        b: usize,
        output: usize,
        requant: RequantMultiplier,
        qp: QuantParams,
    },
    Add {
        a: usize,
        b: usize,
        output: usize,
        requant: AddRequant,
        qp: QuantParams,
    },
    Concat {
        parts: Vec<usize>,
        output: usize,
        qp: QuantParams,
    },
    NormLrelu {
        input: usize,
        output: usize,
        norm: usize,
    },
    Upsample {
        input: usize,
        output: usize,
    },
}

/// Integer-only inference graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Int8Graph {
    pub config: ModelConfig,
    /// Parameters of every activation quantization point.
    pub act_qparams: BTreeMap<String, QuantParams>,
    pub convs: Vec<Int8Conv>,
    pub norms: Vec<FloatNorm>,
    pub nodes: Vec<Node>,
    pub slots: usize,
    pub output: usize,
}

/// Quantized weight data of one conv, as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvData {
    pub weight: IntTensor,
    pub bias: Vec<i32>,
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

struct ConvSpec {
    layer: ConvLayer,
    in_qp: QuantParams,
    out_qp: QuantParams,
}

/// Builder that emits graph nodes. Slot 0 is the float input.
struct Emitter<'a> {
    act: &'a BTreeMap<String, QuantParams>,
    /// `Some(qp)` for 8-bit slots, `None` for float slots.
    slot_qp: Vec<Option<QuantParams>>,
    nodes: Vec<Node>,
    convs: Vec<ConvSpec>,
    norms: Vec<NormLayer>,
}

impl Emitter<'_> {
    fn qp(&self, point: &str) -> Result<QuantParams> {
        self.act
            .get(point)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("no parameters for quantization point `{point}`")))
    }

    fn slot(&mut self, qp: Option<QuantParams>) -> usize {
        self.slot_qp.push(qp);
        self.slot_qp.len() - 1
    }

    fn int_slot(&self, s: usize, what: &str) -> Result<QuantParams> {
        self.slot_qp[s]
            .ok_or_else(|| Error::Invalid(format!("{what}: operand is not quantized")))
    }

    /// Brings slot `s` onto `qp`, emitting a node only when needed.
    fn requant_into(&mut self, s: usize, qp: QuantParams) -> Result<usize> {
        match self.slot_qp[s] {
            Some(cur) if cur == qp => Ok(s),
            Some(cur) => {
                let out = self.slot(Some(qp));
                self.nodes.push(Node::Requantize {
                    input: s,
                    output: out,
                    requant: RequantMultiplier::from_real(cur.scale / qp.scale)?,
                    qp,
                });
                Ok(out)
            }
            None => {
                let out = self.slot(Some(qp));
                self.nodes.push(Node::Quantize {
                    input: s,
                    output: out,
                    qp,
                });
                Ok(out)
            }
        }
    }
}

impl Builder for Emitter<'_> {
    type Value = usize;

    fn conv(&mut self, layer: &ConvLayer, x: usize) -> Result<usize> {
        let in_qp = self.int_slot(x, &layer.name)?;
        let out_qp = self.qp(&layer.name)?;
        let output = self.slot(Some(out_qp));
        self.nodes.push(Node::Conv {
            input: x,
            output,
            conv: self.convs.len(),
        });
        self.convs.push(ConvSpec {
            layer: layer.clone(),
            in_qp,
            out_qp,
        });
        Ok(output)
    }

    fn tanh(&mut self, point: &str, x: usize) -> Result<usize> {
        let in_qp = self.int_slot(x, point)?;
        let qp = self.qp(point)?;
        let output = self.slot(Some(qp));
        self.nodes.push(Node::Tanh {
            input: x,
            output,
            lut: TanhLut::new(&in_qp, &qp)?,
            qp,
        });
        Ok(output)
    }

    fn gate(&mut self, point: &str, a: usize, b: usize) -> Result<usize> {
        let (qa, qb) = (self.int_slot(a, point)?, self.int_slot(b, point)?);
        let qp = self.qp(point)?;
        let output = self.slot(Some(qp));
        self.nodes.push(Node::Hadamard {
            a,
            b,
            output,
            requant: RequantMultiplier::from_real(qa.scale * qb.scale / qp.scale)?,
            qp,
        });
        Ok(output)
    }

    fn norm_lrelu(&mut self, norm: &NormLayer, x: usize) -> Result<usize> {
        self.int_slot(x, &norm.name)?;
        let output = self.slot(None);
        self.nodes.push(Node::NormLrelu {
            input: x,
            output,
            norm: self.norms.len(),
        });
        self.norms.push(norm.clone());
        Ok(output)
    }

    fn concat(&mut self, point: &str, parts: &[usize]) -> Result<usize> {
        let qp = self.qp(point)?;
        let parts = parts
            .iter()
            .map(|&p| self.requant_into(p, qp))
            .collect::<Result<Vec<_>>>()?;
        let output = self.slot(Some(qp));
        self.nodes.push(Node::Concat { parts, output, qp });
        Ok(output)
    }

    fn add(&mut self, point: &str, a: usize, b: usize) -> Result<usize> {
        let (qa, qb) = (self.int_slot(a, point)?, self.int_slot(b, point)?);
        let qp = self.qp(point)?;
        let output = self.slot(Some(qp));
        self.nodes.push(Node::Add {
            a,
            b,
            output,
            requant: AddRequant::new(qa.scale, qb.scale, qp.scale)?,
            qp,
        });
        Ok(output)
    }

    fn upsample(&mut self, x: usize) -> Result<usize> {
        let output = self.slot(self.slot_qp[x]);
        self.nodes.push(Node::Upsample { input: x, output });
        Ok(output)
    }

    fn requant(&mut self, point: &str, x: usize) -> Result<usize> {
        let qp = self.qp(point)?;
        self.requant_into(x, qp)
    }

    fn residual_output(&mut self, point: &str, x: usize, delta: usize, residual: bool) -> Result<usize> {
        if residual {
            // the [0, 1] output lattice clamps exactly like clip01
            self.add(point, x, delta)
        } else {
            self.requant(point, delta)
        }
    }
}

impl Int8Graph {
    /// Builds the graph from its stored ingredients. `conv_data` and
    /// `norm_data` are keyed by layer name.
    pub fn assemble(
        config: &ModelConfig,
        act_qparams: BTreeMap<String, QuantParams>,
        conv_data: &BTreeMap<String, ConvData>,
        norm_data: &BTreeMap<String, (Vec<f32>, Vec<f32>)>,
    ) -> Result<Self> {
        let arch = architecture(config)?;
        let (em, output) = emit(&arch, &act_qparams)?;
        let mut convs = Vec::with_capacity(em.convs.len());
        for spec in &em.convs {
            let d = conv_data
                .get(&spec.layer.name)
                .ok_or_else(|| Error::Invalid(format!("missing weights for `{}`", spec.layer.name)))?;
            convs.push(finish_conv(spec, d.clone())?);
        }
        let norms = em
            .norms
            .iter()
            .map(|n| {
                let (g, b) = norm_data
                    .get(&n.name)
                    .ok_or_else(|| Error::Invalid(format!("missing affine for `{}`", n.name)))?;
                if g.len() != n.channels || b.len() != n.channels {
                    return Err(Error::Invalid(format!("`{}` affine has wrong length", n.name)));
                }
                Ok(FloatNorm {
                    name: n.name.clone(),
                    gamma: g.clone(),
                    beta: b.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let slots = em.slot_qp.len();
        let nodes = em.nodes;
        Ok(Int8Graph {
            config: config.clone(),
            act_qparams,
            convs,
            norms,
            slots,
            nodes,
            output,
        })
    }

    /// Quantized weight data keyed by layer name.
    pub fn conv_data(&self) -> BTreeMap<String, ConvData> {
        self.convs
            .iter()
            .map(|c| {
                (
                    c.name.clone(),
                    ConvData {
                        weight: c.weight.clone(),
                        bias: c.bias.clone(),
                    },
                )
            })
            .collect()
    }

    /// Norm affines keyed by layer name.
    pub fn norm_data(&self) -> BTreeMap<String, (Vec<f32>, Vec<f32>)> {
        self.norms
            .iter()
            .map(|n| (n.name.clone(), (n.gamma.clone(), n.beta.clone())))
            .collect()
    }

    pub fn input_qparams(&self) -> QuantParams {
        self.act_qparams["input"]
    }

    pub fn output_qparams(&self) -> QuantParams {
        self.act_qparams["output"]
    }

    /// Bytes of quantized weight and bias payload.
    pub fn weight_bytes(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.weight.data.len() + 4 * c.bias.len())
            .sum()
    }

    /// Runs the graph and returns the 8-bit output. Height and width must
    /// be multiples of 8.
    pub fn run_quantized<R: Real>(&self, x: &Tensor<R>) -> Result<IntTensor> {
        check_multiple_of_8(x.shape())?;
        let mut slots: Vec<Option<Slot>> = vec![None; self.slots];
        slots[0] = Some(Slot::F(x.cast::<f64>()));
        let slope = self.config.leaky_slope as f64;
        for node in &self.nodes {
            let (out, v) = match node {
                Node::Quantize { input, output, qp } => {
                    let f = take_float(&slots, *input)?;
                    (*output, Slot::Q(quantize(f, &[*qp])?))
                }
                Node::Requantize {
                    input,
                    output,
                    requant,
                    qp,
                } => (*output, Slot::Q(int8_requantize(take_int(&slots, *input)?, *requant, qp)?)),
                Node::Conv {
                    input,
                    output,
                    conv,
                } => {
                    let c = &self.convs[*conv];
                    let y = int8_conv2d(
                        take_int(&slots, *input)?,
                        &c.weight,
                        &c.bias,
                        &c.requant,
                        &c.out_qp,
                        c.stride,
                        c.padding,
                    )?;
                    (*output, Slot::Q(y))
                }
                Node::Tanh {
                    input,
                    output,
                    lut,
                    qp,
                } => (*output, Slot::Q(lut.apply(take_int(&slots, *input)?, qp)?)),
                Node::Hadamard {
                    a,
                    b,
                    output,
                    requant,
                    qp,
                } => (
                    *output,
                    Slot::Q(int8_hadamard(take_int(&slots, *a)?, take_int(&slots, *b)?, *requant, qp)?),
                ),
                Node::Add {
                    a,
                    b,
                    output,
                    requant,
                    qp,
                } => (
                    *output,
                    Slot::Q(int8_add(take_int(&slots, *a)?, take_int(&slots, *b)?, requant, qp)?),
                ),
                Node::Concat { parts, output, qp } => {
                    let ps = parts
                        .iter()
                        .map(|&p| take_int(&slots, p))
                        .collect::<Result<Vec<_>>>()?;
                    (*output, Slot::Q(int8_concat(&ps, qp)?))
                }
                Node::NormLrelu {
                    input,
                    output,
                    norm,
                } => {
                    let n = &self.norms[*norm];
                    let q = take_int(&slots, *input)?;
                    (*output, Slot::F(float_island(q, n, slope)?))
                }
                Node::Upsample { input, output } => {
                    let v = match slots[*input].as_ref() {
                        Some(Slot::Q(q)) => Slot::Q(int8_upsample2x(q)?),
                        Some(Slot::F(f)) => Slot::F(tensor::upsample_nearest2x(f)),
                        None => return Err(Error::Invalid("graph slot read before write".into())),
                    };
                    (*output, v)
                }
            };
            slots[out] = Some(v);
        }
        match slots[self.output].take() {
            Some(Slot::Q(q)) => Ok(q),
            _ => Err(Error::Invalid("graph output is not quantized".into())),
        }
    }

    /// Runs the graph and dequantizes the output.
    pub fn forward<R: Real>(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let q = self.run_quantized(x)?;
        let qp = *q.qp();
        let data = (0..q.data.len())
            .map(|i| R::of(qp.dequantize(q.data.get(i))))
            .collect();
        Tensor::from_vec(q.shape, data)
    }

    /// Pads to a multiple of 8, runs and crops back.
    pub fn enhance<R: Real>(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let (padded, crop) = pad_to_multiple(x, 8)?;
        crop.apply(&self.forward(&padded)?)
    }
}

#[derive(Clone)]
enum Slot {
    Q(IntTensor),
    F(Tensor<f64>),
}

fn take_int(slots: &[Option<Slot>], i: usize) -> Result<&IntTensor> {
    match slots[i].as_ref() {
        Some(Slot::Q(q)) => Ok(q),
        _ => Err(Error::Invalid(format!("graph slot {i} is not an integer tensor"))),
    }
}

fn take_float(slots: &[Option<Slot>], i: usize) -> Result<&Tensor<f64>> {
    match slots[i].as_ref() {
        Some(Slot::F(f)) => Ok(f),
        _ => Err(Error::Invalid(format!("graph slot {i} is not a float tensor"))),
    }
}

/// Dequantize → instance norm → LeakyReLU, using the same kernels as the
/// float path.
fn float_island(q: &IntTensor, n: &FloatNorm, slope: f64) -> Result<Tensor<f64>> {
    let qp = *q.qp();
    let x = Tensor::from_vec(
        q.shape,
        (0..q.data.len()).map(|i| qp.dequantize(q.data.get(i))).collect(),
    )?;
    let gamma: Vec<f64> = n.gamma.iter().map(|&v| v as f64).collect();
    let beta: Vec<f64> = n.beta.iter().map(|&v| v as f64).collect();
    let (y, _) = tensor::instance_norm(&x, &gamma, &beta, NORM_EPS)?;
    Ok(tensor::leaky_relu(&y, slope))
}

fn architecture(config: &ModelConfig) -> Result<Architecture> {
    Ok(init_network::<f32>(config, 0)?.arch)
}

fn emit<'a>(
    arch: &Architecture,
    act: &'a BTreeMap<String, QuantParams>,
) -> Result<(Emitter<'a>, usize)> {
    let mut em = Emitter {
        act,
        slot_qp: vec![None],
        nodes: Vec::new(),
        convs: Vec::new(),
        norms: Vec::new(),
    };
    let output = arch.forward(&mut em, 0)?;
    Ok((em, output))
}

fn finish_conv(spec: &ConvSpec, d: ConvData) -> Result<Int8Conv> {
    let l = &spec.layer;
    let expect = Shape::new(l.out_ch, l.in_ch, l.kernel, l.kernel);
    if d.weight.shape != expect || d.bias.len() != l.out_ch || d.weight.qparams.len() != l.out_ch {
        return Err(Error::Invalid(format!(
            "`{}`: stored weights {} do not match the layer {expect}",
            l.name, d.weight.shape
        )));
    }
    if !matches!(d.weight.data, IntData::I8(_)) {
        return Err(Error::Invalid(format!("`{}`: weights must be signed 8-bit", l.name)));
    }
    let requant = d
        .weight
        .qparams
        .iter()
        .map(|w| RequantMultiplier::from_real(spec.in_qp.scale * w.scale / spec.out_qp.scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(Int8Conv {
        name: l.name.clone(),
        weight: d.weight,
        bias: d.bias,
        stride: l.stride,
        padding: l.padding,
        in_qp: spec.in_qp,
        out_qp: spec.out_qp,
        requant,
    })
}

/// Converts an instrumented network with initialized observers into an
/// [`Int8Graph`]. Weights are quantized per output channel exactly as the
/// fake-quant simulation does; biases go to 32 bits at `s_in · s_w`.
pub fn convert_int8<R: Real>(q: &QatNetwork<R>) -> Result<Int8Graph> {
    if q.state.refine != 1 {
        return Err(Error::Invalid("cannot convert a refined-lattice test network".into()));
    }
    let arch = &q.net.arch;
    q.state.check_complete(arch)?;
    let mut act = BTreeMap::new();
    for (p, _) in arch.quant_points() {
        act.insert(p.clone(), q.state.point_qparams(&p)?.expect("complete plan"));
    }
    let (em, _) = emit(arch, &act)?;
    let mut conv_data = BTreeMap::new();
    for spec in &em.convs {
        let w = q.net.params.get(spec.layer.weight);
        let b = q.net.params.get(spec.layer.bias);
        let w_qps = weight_channel_qparams(w);
        let weight = quantize(w, &w_qps)?;
        let bias = w_qps
            .iter()
            .zip(b.data())
            .map(|(wq, &bv)| QuantParams::bias_i32(spec.in_qp.scale * wq.scale).quantize(bv.as_f64()))
            .collect();
        conv_data.insert(spec.layer.name.clone(), ConvData { weight, bias });
    }
    let norm_data = em
        .norms
        .iter()
        .map(|n| {
            let g = q.net.params.get(n.gamma).data().iter().map(|v| v.as_f64() as f32).collect();
            let b = q.net.params.get(n.beta).data().iter().map(|v| v.as_f64() as f32).collect();
            (n.name.clone(), (g, b))
        })
        .collect();
    Int8Graph::assemble(&q.net.arch.config, act, &conv_data, &norm_data)
}
