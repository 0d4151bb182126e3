//! QAT instrumentation: fake-quant nodes and observers attached to the
//! network's quantization points.
//!
//! The instrumented forward pass is the shared [`Architecture::forward`] run
//! through [`QatBuilder`], which wraps the float tape builder and inserts:
//!
//! - per-output-channel symmetric weight fake-quant on every conv, with the
//!   bias fake-quantized to 32 bits at `s_in · s_w` exactly as the integer
//!   engine stores it;
//! - unsigned affine activation fake-quant at every observed point, with a
//!   moving-average observer;
//! - fixed `[-1, 1]` parameters on tanh outputs and `[0, 1]` on the output.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::fake_quant::fake_quant;
use super::observer::{Observer, DEFAULT_MOMENTUM};
use super::params::{qparams_from_minmax, weight_channel_qparams, QuantParams};
use crate::error::{Error, Result};
use crate::model::{
    check_multiple_of_8, Architecture, Builder, ConvLayer, Network, NormLayer, PointKind,
    TapeBuilder,
};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Shape, Tensor};

/// Which quantization points to instrument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QatPlan {
    pub points: Vec<String>,
    pub quantize_weights: bool,
    pub momentum: f64,
}

impl QatPlan {
    /// Every activation point of the architecture, weights quantized,
    /// observer momentum 0.99.
    pub fn full(arch: &Architecture) -> Self {
        QatPlan {
            points: arch.quant_points().into_iter().map(|(n, _)| n).collect(),
            quantize_weights: true,
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

/// Behavior of the instrumented forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QatMode {
    /// Plain float forward; observers untouched.
    Float,
    /// Observers update, values pass through unquantized (PTQ calibration).
    Calibrate,
    /// Observers update and fake-quant is applied (QAT fine-tuning).
    Train,
    /// Fake-quant with frozen observers (simulation of the INT8 graph).
    Frozen,
}

impl QatMode {
    pub fn observes(self) -> bool {
        matches!(self, QatMode::Calibrate | QatMode::Train)
    }

    pub fn quantizes(self) -> bool {
        matches!(self, QatMode::Train | QatMode::Frozen)
    }
}

/// Observer and fixed-range state of every instrumented point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantState {
    pub plan: QatPlan,
    pub mode: QatMode,
    pub kinds: BTreeMap<String, PointKind>,
    pub observers: BTreeMap<String, Observer>,
    /// Test mode: lattices refined by this factor (1 = 8-bit).
    pub refine: i32,
}

impl QuantState {
    fn new(arch: &Architecture, plan: QatPlan) -> Result<Self> {
        let all: BTreeMap<String, PointKind> = arch.quant_points().into_iter().collect();
        let mut kinds = BTreeMap::new();
        let mut observers = BTreeMap::new();
        for p in &plan.points {
            let Some(&kind) = all.get(p) else {
                return Err(Error::UnknownPoint(p.clone()));
            };
            kinds.insert(p.clone(), kind);
            if kind == PointKind::Observed {
                observers.insert(p.clone(), Observer::new(plan.momentum));
            }
        }
        Ok(QuantState {
            plan,
            mode: QatMode::Train,
            kinds,
            observers,
            refine: 1,
        })
    }

    /// Parameters of an instrumented point, or `None` if the point is not
    /// part of the plan.
    pub fn point_qparams(&self, point: &str) -> Result<Option<QuantParams>> {
        let Some(kind) = self.kinds.get(point) else {
            return Ok(None);
        };
        let (lo, hi) = match kind {
            PointKind::Tanh => (-1.0, 1.0),
            PointKind::Output => (0.0, 1.0),
            PointKind::Observed => {
                let o = &self.observers[point];
                if !o.initialized {
                    return Err(Error::UninitializedObserver(point.to_string()));
                }
                (o.running_min, o.running_max)
            }
        };
        let qp = qparams_from_minmax(lo, hi, false, false);
        if self.refine > 1 {
            // rebuild over the same range so the finer lattice does not
            // inherit the 8-bit zero-point rounding
            let f = self.refine;
            let scale = qp.scale / f as f64;
            let zp = (-lo.min(0.0) / scale).round().clamp(0.0, 255.0 * f as f64) as i32;
            return Ok(Some(QuantParams {
                scale,
                zero_point: zp,
                qmin: 0,
                qmax: 255 * f,
            }));
        }
        Ok(Some(qp))
    }

    /// Weight parameters, honoring the refinement test mode.
    pub fn weight_qparams<R: Real>(&self, w: &Tensor<R>) -> Vec<QuantParams> {
        let qps = weight_channel_qparams(w);
        if self.refine > 1 {
            qps.into_iter().map(|q| q.refined(self.refine)).collect()
        } else {
            qps
        }
    }

    /// Whether every point of `arch` is instrumented and every observer
    /// has seen data.
    pub fn check_complete(&self, arch: &Architecture) -> Result<()> {
        if !self.plan.quantize_weights {
            return Err(Error::Invalid("plan does not quantize weights".into()));
        }
        for (p, _) in arch.quant_points() {
            if !self.kinds.contains_key(&p) {
                return Err(Error::Invalid(format!("quantization point `{p}` is not instrumented")));
            }
            self.point_qparams(&p)?;
        }
        Ok(())
    }
}

/// Network plus its quantization state.
#[derive(Clone, Debug, PartialEq)]
pub struct QatNetwork<R: Real = f32> {
    pub net: Network<R>,
    pub state: QuantState,
}

/// Instruments `net` according to `plan`. Points the architecture does not
/// have are rejected. The returned network starts in [`QatMode::Train`].
pub fn attach_fakequant<R: Real>(net: Network<R>, plan: QatPlan) -> Result<QatNetwork<R>> {
    let state = QuantState::new(&net.arch, plan)?;
    Ok(QatNetwork { net, state })
}

impl<R: Real> QatNetwork<R> {
    pub fn set_mode(&mut self, mode: QatMode) {
        self.state.mode = mode;
    }

    pub fn mode(&self) -> QatMode {
        self.state.mode
    }

    pub fn cast<S: Real>(&self) -> QatNetwork<S> {
        QatNetwork {
            net: self.net.cast(),
            state: self.state.clone(),
        }
    }

    /// Records the instrumented forward pass on `tape`. Returns the output
    /// and the tape variables of every parameter in store order.
    pub fn record(&mut self, tape: &mut Tape<R>, x: Var, track_grads: bool) -> Result<(Var, Vec<Var>)> {
        check_multiple_of_8(tape.shape(x))?;
        let mut b = QatBuilder {
            inner: TapeBuilder::new(tape, &self.net, track_grads),
            state: &mut self.state,
            lattice: HashMap::new(),
        };
        let y = self.net.arch.forward(&mut b, x)?;
        let vars = b.inner.param_vars().to_vec();
        Ok((y, vars))
    }

    /// Instrumented inference in the current mode.
    pub fn forward(&mut self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (y, _) = self.record(&mut tape, xv, false)?;
        Ok(tape.value(y).clone())
    }

    /// Calibration pass: observers update, outputs stay float. Restores
    /// the previous mode afterwards.
    pub fn calibrate(&mut self, x: &Tensor<R>) -> Result<()> {
        let prev = self.mode();
        self.set_mode(QatMode::Calibrate);
        let r = self.forward(x).map(|_| ());
        self.set_mode(prev);
        r
    }

    /// Output parameters of the instrumented network.
    pub fn output_qparams(&self) -> QuantParams {
        QuantParams::unit_output()
    }

    pub fn input_shape_ok(&self, s: Shape) -> Result<()> {
        check_multiple_of_8(s)
    }
}

/// Builder inserting fake-quant nodes around the float tape builder.
pub struct QatBuilder<'a, 'b, R: Real> {
    pub inner: TapeBuilder<'a, R>,
    state: &'b mut QuantState,
    /// Lattice parameters of values that sit on a quantization lattice.
    lattice: HashMap<Var, QuantParams>,
}

impl<R: Real> QatBuilder<'_, '_, R> {
    fn point(&mut self, name: &str, v: Var) -> Result<Var> {
        let mode = self.state.mode;
        if mode.observes() {
            if let Some(obs) = self.state.observers.get_mut(name) {
                obs.update(self.inner.tape.value(v));
            }
        }
        if !mode.quantizes() {
            return Ok(v);
        }
        let Some(qp) = self.state.point_qparams(name)? else {
            return Ok(v);
        };
        let y = fake_quant(self.inner.tape, v, &[qp])?;
        self.lattice.insert(y, qp);
        Ok(y)
    }
}

impl<R: Real> Builder for QatBuilder<'_, '_, R> {
    type Value = Var;

    fn shape_of(&self, v: Var) -> Option<Shape> {
        self.inner.shape_of(v)
    }

    fn conv(&mut self, layer: &ConvLayer, x: Var) -> Result<Var> {
        let y = if self.state.mode.quantizes() && self.state.plan.quantize_weights {
            let (w, b) = (self.inner.param(layer.weight), self.inner.param(layer.bias));
            let tape = &mut *self.inner.tape;
            let w_qps = self.state.weight_qparams(tape.value(w));
            let wq = fake_quant(tape, w, &w_qps)?;
            let bq = match self.lattice.get(&x) {
                Some(in_qp) => {
                    let b_qps: Vec<QuantParams> = w_qps
                        .iter()
                        .map(|q| QuantParams::bias_i32(in_qp.scale * q.scale))
                        .collect();
                    fake_quant(tape, b, &b_qps)?
                }
                // input not instrumented: the bias stays float
                None => b,
            };
            tape.conv2d(x, wq, bq, layer.stride, layer.padding)?
        } else {
            self.inner.conv(layer, x)?
        };
        self.point(&layer.name, y)
    }

    fn tanh(&mut self, point: &str, x: Var) -> Result<Var> {
        let y = self.inner.tanh(point, x)?;
        self.point(point, y)
    }

    fn gate(&mut self, point: &str, a: Var, b: Var) -> Result<Var> {
        let y = self.inner.gate(point, a, b)?;
        self.point(point, y)
    }

    fn norm_lrelu(&mut self, norm: &NormLayer, x: Var) -> Result<Var> {
        self.inner.norm_lrelu(norm, x)
    }

    fn concat(&mut self, point: &str, parts: &[Var]) -> Result<Var> {
        let y = self.inner.concat(point, parts)?;
        self.point(point, y)
    }

    fn add(&mut self, point: &str, a: Var, b: Var) -> Result<Var> {
        let y = self.inner.add(point, a, b)?;
        self.point(point, y)
    }

    fn upsample(&mut self, x: Var) -> Result<Var> {
        let y = self.inner.upsample(x)?;
        if let Some(&qp) = self.lattice.get(&x) {
            self.lattice.insert(y, qp);
        }
        Ok(y)
    }

    fn requant(&mut self, point: &str, x: Var) -> Result<Var> {
        self.point(point, x)
    }

    fn residual_output(&mut self, point: &str, x: Var, delta: Var, residual: bool) -> Result<Var> {
        let y = self.inner.residual_output(point, x, delta, residual)?;
        self.point(point, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_network, ModelConfig};
    use crate::quant::fake_quant::fake_quant_tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(shape: Shape, seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random()).collect()).unwrap()
    }

    fn qat(c: usize) -> QatNetwork<f32> {
        let net = init_network::<f32>(&ModelConfig::with_width(c), 3).unwrap();
        let plan = QatPlan::full(&net.arch);
        attach_fakequant(net, plan).unwrap()
    }

    #[test]
    fn unknown_points_are_rejected() {
        let net = init_network::<f32>(&ModelConfig::with_width(2), 3).unwrap();
        let mut plan = QatPlan::full(&net.arch);
        plan.points.push("down9.gate".into());
        assert!(matches!(attach_fakequant(net, plan), Err(Error::UnknownPoint(p)) if p == "down9.gate"));
    }

    #[test]
    fn float_mode_is_transparent() {
        let mut q = qat(4);
        let x = input(Shape::new(1, 3, 16, 16), 1);
        q.set_mode(QatMode::Float);
        assert_eq!(q.forward(&x).unwrap(), q.net.forward(&x).unwrap());
        assert!(q.state.observers.values().all(|o| !o.initialized));
    }

    #[test]
    fn calibration_observes_without_changing_outputs() {
        let mut q = qat(4);
        let x = input(Shape::new(2, 3, 16, 16), 2);
        q.set_mode(QatMode::Calibrate);
        assert_eq!(q.forward(&x).unwrap(), q.net.forward(&x).unwrap());
        assert!(q.state.observers.values().all(|o| o.initialized));
    }

    #[test]
    fn frozen_mode_requires_initialized_observers() {
        let mut q = qat(2);
        q.set_mode(QatMode::Frozen);
        let err = q.forward(&input(Shape::new(1, 3, 8, 8), 3)).unwrap_err();
        assert!(matches!(err, Error::UninitializedObserver(p) if p == "input"));
    }

    #[test]
    fn frozen_output_sits_on_output_lattice() {
        let mut q = qat(4);
        let x = input(Shape::new(1, 3, 16, 16), 4);
        q.calibrate(&x).unwrap();
        q.set_mode(QatMode::Frozen);
        let y = q.forward(&x).unwrap();
        let again = fake_quant_tensor(&y, &[QuantParams::unit_output()]).unwrap();
        assert_eq!(y, again);
    }

    #[test]
    fn refined_lattices_approach_float() {
        let mut q = qat(4);
        let x = input(Shape::new(1, 3, 16, 16), 5);
        q.calibrate(&x).unwrap();
        q.set_mode(QatMode::Frozen);
        let float = q.net.forward(&x).unwrap();
        let err = |y: &Tensor<f32>| -> f32 {
            y.data().iter().zip(float.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
        };
        let coarse = err(&q.forward(&x).unwrap());
        q.state.refine = 256;
        // the output lattice is refined too, so residual error is well under a step
        let fine = err(&q.forward(&x).unwrap());
        assert!(fine < coarse / 10.0, "coarse {coarse} fine {fine}");
        assert!(fine < 1e-3, "{fine}");
    }

    #[test]
    fn train_mode_gradients_reach_every_parameter() {
        let mut q = qat(2);
        // 16×16 keeps the S/8 planes larger than 1×1, where instance norm
        // is constant and blocks gradients by design
        let x = input(Shape::new(1, 3, 16, 16), 6);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let (y, params) = q.record(&mut tape, xv, true).unwrap();
        let probe = input(tape.shape(y), 7);
        let l = tape.probe(y, &probe).unwrap();
        tape.backward(l).unwrap();
        let nonzero = params
            .iter()
            .filter(|&&p| tape.grad(p).unwrap().iter().any(|g| *g != 0.0))
            .count();
        assert_eq!(nonzero, params.len());
    }
}
