//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! Every forward primitive appends one node holding its inputs and whatever
//! it needs for the adjoint. [`Tape::backward`] replays the adjoint rules in
//! reverse node order and accumulates into the `grad` buffer of every leaf
//! that requires a gradient. Running backward twice without
//! [`Tape::zero_grads`] adds the second pass on top of the first.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{self, ConvGeometry, NormStats, Real, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive kinds, used for diagnostics and for the adjoint fault hook.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Conv2d,
    Tanh,
    Hadamard,
    LeakyRelu,
    InstanceNorm,
    Upsample,
    Concat,
    Add,
    Clip01,
    Custom,
}

/// Adjoint rule for primitives defined outside this module (losses, fake
/// quantization). Returns one optional gradient per input, in input order.
pub trait Adjoint<R: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        upstream: &[R],
        inputs: &[&Tensor<R>],
        output: &Tensor<R>,
    ) -> Vec<Option<Vec<R>>>;
}

enum Op<R: Real> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geometry: ConvGeometry,
    },
    Tanh {
        input: Var,
    },
    Hadamard {
        a: Var,
        b: Var,
    },
    LeakyRelu {
        input: Var,
        slope: R,
    },
    InstanceNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<R>,
    },
    Upsample {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Clip01 {
        input: Var,
    },
    Custom {
        inputs: Vec<Var>,
        rule: Box<dyn Adjoint<R>>,
    },
}

impl<R: Real> Op<R> {
    fn primitive(&self) -> Option<Primitive> {
        Some(match self {
            Op::Leaf => return None,
            Op::Conv2d { .. } => Primitive::Conv2d,
            Op::Tanh { .. } => Primitive::Tanh,
            Op::Hadamard { .. } => Primitive::Hadamard,
            Op::LeakyRelu { .. } => Primitive::LeakyRelu,
            Op::InstanceNorm { .. } => Primitive::InstanceNorm,
            Op::Upsample { .. } => Primitive::Upsample,
            Op::Concat { .. } => Primitive::Concat,
            Op::Add { .. } => Primitive::Add,
            Op::Clip01 { .. } => Primitive::Clip01,
            Op::Custom { .. } => Primitive::Custom,
        })
    }
}

/// Operation tape. Values are stored in recording order, so every node's
/// inputs precede it.
pub struct Tape<R: Real = f32> {
    values: Vec<Tensor<R>>,
    ops: Vec<Op<R>>,
    requires_grad: Vec<bool>,
    frozen: bool,
    fault: Option<Primitive>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
            requires_grad: Vec::new(),
            frozen: false,
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Which side of its kink every LeakyReLU and clip input lies on, in
    /// recording order. Two evaluations with equal patterns lie on the same
    /// smooth piece of the recorded function.
    pub fn activation_pattern(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                Op::LeakyRelu { input, .. } => {
                    out.extend(self.value(*input).data().iter().map(|&v| (v > R::zero()) as i8));
                }
                Op::Clip01 { input } => out.extend(self.value(*input).data().iter().map(|&v| {
                    if v < R::zero() {
                        -1
                    } else if v > R::one() {
                        1
                    } else {
                        0
                    }
                })),
                _ => {}
            }
        }
        out
    }

    /// Test hook: scales the adjoint of one primitive kind by 1.5 so that
    /// gradient checking can prove it notices a wrong rule.
    #[doc(hidden)]
    pub fn inject_adjoint_fault(&mut self, primitive: Primitive) {
        self.fault = Some(primitive);
    }

    /// A constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor<R>) -> Var {
        self.push_unchecked(value, Op::Leaf, false)
    }

    /// A trainable leaf whose gradient is accumulated by `backward`.
    pub fn param(&mut self, value: Tensor<R>) -> Var {
        self.push_unchecked(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.values[v.0].shape()
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, v: Var) -> Option<&[R]> {
        self.values[v.0].grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    pub fn zero_grads(&mut self) {
        self.values.iter_mut().for_each(Tensor::zero_grad);
    }

    fn push_unchecked(&mut self, value: Tensor<R>, op: Op<R>, requires_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, inputs: &[Var]) -> Result<Var> {
        if self.frozen {
            return Err(Error::TapeFrozen);
        }
        let rg = inputs.iter().any(|v| self.requires_grad[v.0]);
        Ok(self.push_unchecked(value, op, rg))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        let geometry = ConvGeometry::new(x.shape(), w.shape(), stride, padding)?;
        if b.numel() != w.shape().n {
            return shape_err(
                "conv2d",
                format!("out-channels: bias {} vs kernels {}", b.numel(), w.shape().n),
            );
        }
        let out = tensor::conv2d_forward(&geometry, x.data(), w.data(), b.data());
        let out = Tensor::from_vec(geometry.output, out)?;
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            },
            &[input, weight, bias],
        )
    }

    pub fn tanh(&mut self, input: Var) -> Result<Var> {
        let out = tensor::tanh(self.value(input));
        self.push(out, Op::Tanh { input }, &[input])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::hadamard(self.value(a), self.value(b))?;
        self.push(out, Op::Hadamard { a, b }, &[a, b])
    }

    pub fn leaky_relu(&mut self, input: Var, slope: R) -> Result<Var> {
        let out = tensor::leaky_relu(self.value(input), slope);
        self.push(out, Op::LeakyRelu { input, slope }, &[input])
    }

    pub fn instance_norm(&mut self, input: Var, gamma: Var, beta: Var, eps: R) -> Result<Var> {
        let (out, stats) = tensor::instance_norm(
            self.value(input),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        )?;
        self.push(
            out,
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                stats,
            },
            &[input, gamma, beta],
        )
    }

    pub fn upsample_nearest2x(&mut self, input: Var) -> Result<Var> {
        let out = tensor::upsample_nearest2x(self.value(input));
        self.push(out, Op::Upsample { input }, &[input])
    }

    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor<R>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = tensor::concat_channels(&tensors)?;
        self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
            parts,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        self.push(out, Op::Add { a, b }, &[a, b])
    }

    pub fn clip01(&mut self, input: Var) -> Result<Var> {
        let out = tensor::clip01(self.value(input));
        self.push(out, Op::Clip01 { input }, &[input])
    }

    /// Records a primitive whose forward value was computed by the caller.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor<R>,
        rule: Box<dyn Adjoint<R>>,
    ) -> Result<Var> {
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                rule,
            },
            inputs,
        )
    }

    /// Reverse pass from a scalar `loss`. Afterwards the tape is frozen:
    /// further recording fails, but backward may run again (accumulating).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].numel() != 1 {
            return shape_err(
                "backward",
                format!("loss must be a scalar, got {}", self.values[loss.0].shape()),
            );
        }
        self.frozen = true;
        let mut adj: Vec<Option<Vec<R>>> = vec![None; self.values.len()];
        adj[loss.0] = Some(vec![R::one()]);

        for idx in (0..=loss.0).rev() {
            if !self.requires_grad[idx] {
                continue;
            }
            let Some(up) = adj[idx].take() else { continue };
            if let Op::Leaf = self.ops[idx] {
                self.values[idx].accumulate_grad(&up);
                continue;
            }
            let mut contributions = self.adjoint(idx, &up);
            if self.ops[idx].primitive() == self.fault {
                let k = R::of(1.5);
                for (_, g) in contributions.iter_mut() {
                    g.iter_mut().for_each(|v| *v *= k);
                }
            }
            for (v, g) in contributions {
                if !self.requires_grad[v.0] {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    fn adjoint(&self, idx: usize, up: &[R]) -> Vec<(Var, Vec<R>)> {
        let out = &self.values[idx];
        let mut res = Vec::new();
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geometry,
            } => {
                if self.wants(*input) {
                    let w = self.value(*weight).data();
                    res.push((*input, tensor::conv2d_backward_input(geometry, w, up)));
                }
                if self.wants(*weight) || self.wants(*bias) {
                    let x = self.value(*input).data();
                    let (gw, gb) = tensor::conv2d_backward_params(geometry, x, up);
                    res.push((*weight, gw));
                    res.push((*bias, gb));
                }
            }
            Op::Tanh { input } => {
                let g = up
                    .iter()
                    .zip(out.data())
                    .map(|(&g, &y)| g * (R::one() - y * y))
                    .collect();
                res.push((*input, g));
            }
            Op::Hadamard { a, b } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    res.push((*a, up.iter().zip(vb).map(|(&g, &y)| g * y).collect()));
                }
                if self.wants(*b) {
                    res.push((*b, up.iter().zip(va).map(|(&g, &x)| g * x).collect()));
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                let g = up
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| if x >= R::zero() { g } else { *slope * g })
                    .collect();
                res.push((*input, g));
            }
            Op::InstanceNorm {
                input,
                gamma,
                beta,
                stats,
            } => {
                let gm = self.value(*gamma).data();
                let (gx, gg, gb) =
                    tensor::instance_norm_backward(self.shape(*input), gm, stats, up);
                res.push((*input, gx));
                res.push((*gamma, gg));
                res.push((*beta, gb));
            }
            Op::Upsample { input } => {
                res.push((
                    *input,
                    tensor::upsample_nearest2x_backward(self.shape(*input), up),
                ));
            }
            Op::Concat { parts } => {
                let s = out.shape();
                let plane = s.plane();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).c;
                    if self.wants(p) {
                        let mut g = Vec::with_capacity(s.n * pc * plane);
                        for n in 0..s.n {
                            let base = (n * s.c + offset) * plane;
                            g.extend_from_slice(&up[base..base + pc * plane]);
                        }
                        res.push((p, g));
                    }
                    offset += pc;
                }
            }
            Op::Add { a, b } => {
                res.push((*a, up.to_vec()));
                res.push((*b, up.to_vec()));
            }
            Op::Clip01 { input } => {
                let x = self.value(*input).data();
                let g = up
                    .iter()
                    .zip(x)
                    .map(|(&g, &x)| {
                        if x >= R::zero() && x <= R::one() {
                            g
                        } else {
                            R::zero()
                        }
                    })
                    .collect();
                res.push((*input, g));
            }
            Op::Custom { inputs, rule } => {
                let ins: Vec<&Tensor<R>> = inputs.iter().map(|&v| self.value(v)).collect();
                for (v, g) in inputs.iter().zip(rule.backward(up, &ins, out)) {
                    if let Some(g) = g {
                        res.push((*v, g));
                    }
                }
            }
        }
        res
    }
}

/// Sum of all elements as a scalar, with a pass-through adjoint.
struct SumRule;

impl<R: Real> Adjoint<R> for SumRule {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, up: &[R], inputs: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        vec![Some(vec![up[0]; inputs[0].numel()])]
    }
}

/// Weighted sum of scalars.
struct WeightedSumRule<R> {
    weights: Vec<R>,
}

impl<R: Real> Adjoint<R> for WeightedSumRule<R> {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn backward(&self, up: &[R], _: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        self.weights.iter().map(|&w| Some(vec![w * up[0]])).collect()
    }
}

/// Dot product with a fixed probe tensor, used to turn a tensor output into
/// a scalar for gradient checks.
struct ProbeRule<R> {
    probe: Vec<R>,
}

impl<R: Real> Adjoint<R> for ProbeRule<R> {
    fn name(&self) -> &'static str {
        "probe"
    }

    fn backward(&self, up: &[R], _: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        vec![Some(self.probe.iter().map(|&p| p * up[0]).collect())]
    }
}

impl<R: Real> Tape<R> {
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let s: f64 = self.value(input).data().iter().map(|v| v.as_f64()).sum();
        self.custom(&[input], Tensor::scalar(R::of(s)), Box::new(SumRule))
    }

    /// `Σ weights[i] · terms[i]` over scalar terms.
    pub fn weighted_sum(&mut self, terms: &[(R, Var)]) -> Result<Var> {
        let mut total = 0.0f64;
        for &(w, v) in terms {
            if self.value(v).numel() != 1 {
                return shape_err("weighted_sum", "terms must be scalars");
            }
            total += w.as_f64() * self.value(v).item().as_f64();
        }
        let inputs: Vec<Var> = terms.iter().map(|t| t.1).collect();
        let weights = terms.iter().map(|t| t.0).collect();
        self.custom(
            &inputs,
            Tensor::scalar(R::of(total)),
            Box::new(WeightedSumRule { weights }),
        )
    }

    /// `Σ probe ⊙ input`.
    pub fn probe(&mut self, input: Var, probe: &Tensor<R>) -> Result<Var> {
        if probe.shape() != self.shape(input) {
            return shape_err("probe", format!("{} vs {}", probe.shape(), self.shape(input)));
        }
        let s: f64 = self
            .value(input)
            .data()
            .iter()
            .zip(probe.data())
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        self.custom(
            &[input],
            Tensor::scalar(R::of(s)),
            Box::new(ProbeRule {
                probe: probe.data().to_vec(),
            }),
        )
    }
}
