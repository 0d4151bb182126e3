//! Full-precision training, QAT fine-tuning and evaluation.
//!
//! One optimizer step consumes `grad_accum_steps` micro-batches of
//! `batch_size` pairs: each micro-batch runs forward → total loss →
//! backward, gradients are averaged, clipped element-wise and applied
//! with Adam at the scheduled learning rate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImagePair;
use crate::error::{Error, Result};
use crate::losses::{psnr_from_rmse, total_loss, LossWeights, PsnrConfig};
use crate::metrics::{psnr, ssim};
use crate::model::{Network, ParamStore, TapeBuilder};
use crate::quant::graph::Int8Graph;
use crate::quant::qat::{attach_fakequant, QatMode, QatNetwork, QatPlan};
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Learning rate of the QAT fine-tuning stage.
pub const QAT_LR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub warmup_start_lr: f64,
    pub min_lr: f64,
    pub clip_range: (f64, f64),
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl TrainConfig {
    /// The full-scale protocol: 50 epochs, micro-batch 64 with two
    /// accumulation steps, 5 warmup epochs from 1e-5 to 1e-4, cosine to
    /// 1e-6, clipping to [-1, 1].
    pub fn full() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            grad_accum_steps: 2,
            base_lr: 1e-4,
            warmup_epochs: 5,
            warmup_start_lr: 1e-5,
            min_lr: 1e-6,
            clip_range: (-1.0, 1.0),
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Desk-scale overfit preset: 16 pairs in batches of 8 for 250 epochs,
    /// i.e. 500 optimizer steps. The learning rate is raised so the short
    /// run converges; warmup ratio and the 100× cosine floor are kept.
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 250,
            batch_size: 8,
            grad_accum_steps: 1,
            base_lr: 2e-3,
            warmup_epochs: 5,
            warmup_start_lr: 2e-4,
            min_lr: 2e-5,
            clip_range: (-1.0, 1.0),
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }

    /// Constant learning rate, no warmup or decay.
    pub fn constant(lr: f64, epochs: usize, batch_size: usize, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            grad_accum_steps: 1,
            base_lr: lr,
            warmup_epochs: 0,
            warmup_start_lr: lr,
            min_lr: lr,
            clip_range: (-1.0, 1.0),
            loss_weights: LossWeights::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("train config: {what}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.grad_accum_steps == 0 {
            return bad("grad_accum_steps must be at least 1");
        }
        if self.clip_range.0 >= self.clip_range.1 {
            return bad("clip_range must satisfy lo < hi");
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("warmup_start_lr", self.warmup_start_lr),
            ("min_lr", self.min_lr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be a non-negative number"));
            }
        }
        self.loss_weights.validate()
    }

    /// Optimizer steps per epoch for `n` training pairs.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size * self.grad_accum_steps).max(1)
    }
}

/// Linear warmup from `warmup_start_lr` to `base_lr`, then cosine decay to
/// `min_lr` at the last step.
pub fn lr_at(step: usize, steps_per_epoch: usize, cfg: &TrainConfig) -> f64 {
    let warm = cfg.warmup_epochs.min(cfg.epochs) * steps_per_epoch;
    let total = cfg.epochs * steps_per_epoch;
    if step < warm {
        return cfg.warmup_start_lr + (cfg.base_lr - cfg.warmup_start_lr) * step as f64 / warm as f64;
    }
    let span = total.saturating_sub(1).saturating_sub(warm);
    if span == 0 {
        return cfg.base_lr;
    }
    let t = ((step - warm) as f64 / span as f64).min(1.0);
    cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Element-wise clamp of every gradient value to `[lo, hi]`.
pub fn grad_clip<R: Real>(grads: &mut [R], lo: f64, hi: f64) {
    let (lo, hi) = (R::of(lo), R::of(hi));
    for g in grads {
        *g = g.max(lo).min(hi);
    }
}

/// Adam moments for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R: Real = f32> {
    pub m: Vec<Vec<R>>,
    pub v: Vec<Vec<R>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<R: Real> AdamState<R> {
    pub fn new(params: &ParamStore<R>) -> Self {
        let zeros: Vec<Vec<R>> = params.iter().map(|p| vec![R::zero(); p.value.numel()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step<R: Real>(
    params: &mut ParamStore<R>,
    grads: &[Vec<R>],
    state: &mut AdamState<R>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Invalid(format!(
            "adam: {} gradients and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != p.value.numel() {
            return Err(Error::Invalid(format!("adam: gradient size mismatch for {}", p.name)));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            let gj = g[j].as_f64();
            let mj = b1 * m[j].as_f64() + (1.0 - b1) * gj;
            let vj = b2 * v[j].as_f64() + (1.0 - b2) * gj * gj;
            m[j] = R::of(mj);
            v[j] = R::of(vj);
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + state.eps);
            *w = R::of(w.as_f64() - update);
        }
    }
    Ok(())
}

/// A model whose forward pass can be recorded for training.
pub trait Trainable<R: Real> {
    fn params(&self) -> &ParamStore<R>;
    fn params_mut(&mut self) -> &mut ParamStore<R>;
    /// Records the forward pass with trainable parameters; returns the
    /// output and the parameter variables in store order.
    fn record(&mut self, tape: &mut Tape<R>, x: Var) -> Result<(Var, Vec<Var>)>;
}

impl<R: Real> Trainable<R> for Network<R> {
    fn params(&self) -> &ParamStore<R> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<R> {
        &mut self.params
    }
    fn record(&mut self, tape: &mut Tape<R>, x: Var) -> Result<(Var, Vec<Var>)> {
        crate::model::check_multiple_of_8(tape.shape(x))?;
        let mut b = TapeBuilder::new(tape, self, true);
        let y = self.arch.forward(&mut b, x)?;
        Ok((y, b.param_vars().to_vec()))
    }
}

impl<R: Real> Trainable<R> for QatNetwork<R> {
    fn params(&self) -> &ParamStore<R> {
        &self.net.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<R> {
        &mut self.net.params
    }
    fn record(&mut self, tape: &mut Tape<R>, x: Var) -> Result<(Var, Vec<Var>)> {
        QatNetwork::record(self, tape, x, true)
    }
}

/// One optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub psnr_loss: f64,
    pub cosine_loss: f64,
    pub outlier_loss: f64,
    /// PSNR of the step's batch output, dB.
    pub psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// One JSON object per line, step records first.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.steps {
            s.push_str(&serde_json::to_string(r).expect("plain record"));
            s.push('\n');
        }
        for r in &self.epochs {
            s.push_str(&serde_json::to_string(r).expect("plain record"));
            s.push('\n');
        }
        s
    }
}

fn stack_batch(pairs: &[ImagePair], idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let low: Vec<&Tensor<f32>> = idx.iter().map(|&i| &pairs[i].low).collect();
    let high: Vec<&Tensor<f32>> = idx.iter().map(|&i| &pairs[i].high).collect();
    Ok((Tensor::stack(&low)?, Tensor::stack(&high)?))
}

/// Loss terms and averaged gradients of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepGradients {
    /// One buffer per parameter, in store order.
    pub grads: Vec<Vec<f32>>,
    pub loss: f64,
    pub psnr_loss: f64,
    pub cosine_loss: f64,
    pub outlier_loss: f64,
    /// PSNR of the model output over all pairs of the step, dB.
    pub psnr: f64,
}

/// Runs forward and backward over `micro` batches (indices into `data`)
/// and averages the gradients, weighting each micro-batch by its share of
/// the pairs. No clipping is applied.
pub fn accumulate_gradients<M: Trainable<f32>>(
    model: &mut M,
    data: &[ImagePair],
    micro: &[&[usize]],
    weights: &LossWeights,
    step: usize,
) -> Result<StepGradients> {
    let pcfg = PsnrConfig::default();
    let total: usize = micro.iter().map(|m| m.len()).sum();
    let mut acc = StepGradients {
        grads: model.params().iter().map(|p| vec![0.0; p.value.numel()]).collect(),
        loss: 0.0,
        psnr_loss: 0.0,
        cosine_loss: 0.0,
        outlier_loss: 0.0,
        psnr: 0.0,
    };
    let mut grads64: Vec<Vec<f64>> = acc.grads.iter().map(|g| vec![0.0; g.len()]).collect();
    let mut se = 0.0;
    for idx in micro {
        let w = idx.len() as f64 / total as f64;
        let (x, y) = stack_batch(data, idx)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let yv = tape.constant(y);
        let (out, params) = model.record(&mut tape, xv)?;
        let terms = total_loss(&mut tape, out, yv, weights, &pcfg)?;
        let loss = tape.value(terms.total).item() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite { step });
        }
        tape.backward(terms.total)?;
        for (a, &p) in grads64.iter_mut().zip(&params) {
            if let Some(g) = tape.grad(p) {
                for (av, &gv) in a.iter_mut().zip(g) {
                    *av += w * gv as f64;
                }
            }
        }
        acc.loss += w * loss;
        acc.psnr_loss += w * tape.value(terms.psnr).item() as f64;
        acc.cosine_loss += w * tape.value(terms.cosine).item() as f64;
        acc.outlier_loss += w * tape.value(terms.outlier).item() as f64;
        let r = crate::losses::rmse(tape.value(out), tape.value(yv))?;
        se += w * r * r;
    }
    for (g, g64) in acc.grads.iter_mut().zip(&grads64) {
        for (a, &b) in g.iter_mut().zip(g64) {
            *a = b as f32;
        }
    }
    if acc.grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite { step });
    }
    acc.psnr = psnr_from_rmse(se.sqrt(), &pcfg);
    Ok(acc)
}

/// Trains `model` on `data`. Every step is recorded; `on_step` sees each
/// record as it is produced (for streaming logs).
pub fn train<M: Trainable<f32>>(
    model: &mut M,
    data: &[ImagePair],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainHistory> {
    cfg.validate()?;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok(history);
    }
    if data.is_empty() {
        return Err(Error::Invalid("training data is empty".into()));
    }
    let spe = cfg.steps_per_epoch(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut e_loss, mut e_psnr) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size * cfg.grad_accum_steps) {
            let micro: Vec<&[usize]> = chunk.chunks(cfg.batch_size).collect();
            let mut sg = accumulate_gradients(model, data, &micro, &cfg.loss_weights, step)?;
            for g in &mut sg.grads {
                grad_clip(g, cfg.clip_range.0, cfg.clip_range.1);
            }
            let rec = StepRecord {
                step,
                epoch,
                lr: lr_at(step, spe, cfg),
                loss: sg.loss,
                psnr_loss: sg.psnr_loss,
                cosine_loss: sg.cosine_loss,
                outlier_loss: sg.outlier_loss,
                psnr: sg.psnr,
            };
            adam_step(model.params_mut(), &sg.grads, &mut adam, rec.lr)?;
            e_loss += rec.loss;
            e_psnr += rec.psnr;
            on_step(&rec);
            history.steps.push(rec);
            step += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            loss: e_loss / spe as f64,
            psnr: e_psnr / spe as f64,
        });
    }
    Ok(history)
}

/// QAT fine-tuning settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QatConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for QatConfig {
    fn default() -> Self {
        QatConfig {
            epochs: 100,
            batch_size: 8,
            lr: QAT_LR,
            seed: 0,
        }
    }
}

/// Attaches fake-quant to `net`, fine-tunes at a constant learning rate
/// with observers updating, and returns the instrumented network frozen.
pub fn qat_finetune(
    net: Network<f32>,
    data: &[ImagePair],
    qcfg: &QatConfig,
    on_step: impl FnMut(&StepRecord),
) -> Result<(QatNetwork<f32>, TrainHistory)> {
    let plan = QatPlan::full(&net.arch);
    let mut q = attach_fakequant(net, plan)?;
    q.set_mode(QatMode::Train);
    let cfg = TrainConfig::constant(qcfg.lr, qcfg.epochs, qcfg.batch_size, qcfg.seed);
    let history = train(&mut q, data, &cfg, on_step)?;
    if history.steps.is_empty() {
        // observers still need data before conversion
        calibrate(&mut q, data, qcfg.batch_size)?;
    }
    q.set_mode(QatMode::Frozen);
    Ok((q, history))
}

/// Post-training calibration: observers see every pair in batches, no
/// parameter changes. Leaves the network frozen.
pub fn calibrate(q: &mut QatNetwork<f32>, data: &[ImagePair], batch_size: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Invalid("calibration data is empty".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = stack_batch(data, chunk)?;
        q.calibrate(&x)?;
    }
    q.set_mode(QatMode::Frozen);
    Ok(())
}

/// Post-training quantization: attach observers and calibrate.
pub fn ptq_calibrate(net: Network<f32>, data: &[ImagePair], batch_size: usize) -> Result<QatNetwork<f32>> {
    let plan = QatPlan::full(&net.arch);
    let mut q = attach_fakequant(net, plan)?;
    calibrate(&mut q, data, batch_size)?;
    Ok(q)
}

/// FP32, PTQ-INT8 and QAT-INT8 scores of one base model on held-out pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QatPtqComparison {
    pub fp32: EvalResult,
    pub ptq_int8: EvalResult,
    pub qat_int8: EvalResult,
    pub qat_steps: usize,
}

/// Both INT8 pipelines from the same base model. PTQ calibrates on `tune`;
/// QAT fine-tunes on `tune` with `qcfg` and uses its trained observers.
pub fn compare_qat_ptq(
    net: &Network<f32>,
    tune: &[ImagePair],
    held_out: &[ImagePair],
    qcfg: &QatConfig,
    calibration_batch: usize,
) -> Result<QatPtqComparison> {
    let ptq = crate::quant::convert_int8(&ptq_calibrate(net.clone(), tune, calibration_batch)?)?;
    let (qat_net, history) = qat_finetune(net.clone(), tune, qcfg, |_| {})?;
    let qat = crate::quant::convert_int8(&qat_net)?;
    Ok(QatPtqComparison {
        fp32: eval_model(net, held_out)?,
        ptq_int8: eval_model(&ptq, held_out)?,
        qat_int8: eval_model(&qat, held_out)?,
        qat_steps: history.steps.len(),
    })
}

/// Anything that maps a degraded image to an enhanced one.
pub trait Enhancer {
    fn enhance(&self, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Enhancer for Network<f32> {
    fn enhance(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Network::enhance(self, x)
    }
}

impl Enhancer for Int8Graph {
    fn enhance(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Int8Graph::enhance(self, x)
    }
}

impl Enhancer for QatNetwork<f32> {
    /// Fake-quant simulation with frozen observers.
    fn enhance(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut q = self.clone();
        q.set_mode(QatMode::Frozen);
        let (padded, crop) = crate::model::pad_to_multiple(x, 8)?;
        crop.apply(&q.forward(&padded)?)
    }
}

/// Identity "model": the degraded input itself.
pub struct Identity;

impl Enhancer for Identity {
    fn enhance(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(x.clone())
    }
}

/// Mean PSNR (dB) and SSIM over pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub psnr: f64,
    pub ssim: f64,
    pub count: usize,
}

/// Order-independent sum: values are sorted before adding.
fn stable_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Enhances every `low` image and scores it against `high`.
pub fn eval_model(model: &impl Enhancer, data: &[ImagePair]) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Invalid("evaluation data is empty".into()));
    }
    let pcfg = PsnrConfig::default();
    let mut ps = Vec::with_capacity(data.len());
    let mut ss = Vec::with_capacity(data.len());
    for pair in data {
        let out = model.enhance(&pair.low)?;
        ps.push(psnr(&out, &pair.high, &pcfg)?);
        ss.push(ssim(&out, &pair.high, pcfg.max_value)?);
    }
    Ok(EvalResult {
        psnr: stable_mean(ps),
        ssim: stable_mean(ss),
        count: data.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SyntheticConfig};
    use crate::model::{init_network, ModelConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::full();
        let spe = 10;
        assert_abs_diff_eq!(lr_at(0, spe, &cfg), 1e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(lr_at(50, spe, &cfg), 1e-4, epsilon = 1e-18);
        assert_abs_diff_eq!(lr_at(499, spe, &cfg), 1e-6, epsilon = 1e-15);
        let mut prev = 0.0;
        for s in 0..=50 {
            let lr = lr_at(s, spe, &cfg);
            assert!(lr >= prev);
            prev = lr;
        }
        for s in 51..500 {
            let lr = lr_at(s, spe, &cfg);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn constant_schedule() {
        let cfg = TrainConfig::constant(1e-5, 3, 4, 0);
        for s in 0..12 {
            assert_eq!(lr_at(s, 4, &cfg), 1e-5);
        }
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![2.5f32, -3.0, 0.3, -1.0, 1.0];
        grad_clip(&mut g, -1.0, 1.0);
        assert_eq!(g, vec![1.0, -1.0, 0.3, -1.0, 1.0]);
        let before = g.clone();
        grad_clip(&mut g, -1.0, 1.0);
        assert_eq!(g, before);
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let net = init_network::<f32>(&ModelConfig::with_width(1), 0).unwrap();
        let mut params = net.params.clone();
        let mut st = AdamState::new(&params);
        let zeros: Vec<Vec<f32>> = params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        adam_step(&mut params, &zeros, &mut st, 1e-3).unwrap();
        assert_eq!(params, net.params);
        assert_eq!(st.step, 1);

        let mut params = net.params.clone();
        let mut st = AdamState::new(&params);
        let grads: Vec<Vec<f32>> = params
            .iter()
            .map(|p| (0..p.value.numel()).map(|i| if i % 2 == 0 { 0.3 } else { -2.0 }).collect())
            .collect();
        adam_step(&mut params, &grads, &mut st, 1e-3).unwrap();
        for (p, q) in params.iter().zip(net.params.iter()) {
            for (i, (a, b)) in p.value.data().iter().zip(q.value.data()).enumerate() {
                let expected = if i % 2 == 0 { -1e-3 } else { 1e-3 };
                assert_abs_diff_eq!((a - b) as f64, expected, epsilon = 2e-6);
            }
        }
    }

    fn tiny_data(n: usize) -> Vec<ImagePair> {
        synth_generate(&SyntheticConfig {
            count: n,
            size: 16,
            ..SyntheticConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_epochs_leave_network_unchanged() {
        let net = init_network::<f32>(&ModelConfig::with_width(2), 1).unwrap();
        let mut trained = net.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::desk()
        };
        let h = train(&mut trained, &tiny_data(2), &cfg, |_| {}).unwrap();
        assert!(h.steps.is_empty());
        assert_eq!(trained, net);
    }

    #[test]
    fn accumulation_matches_full_batch() {
        let data = tiny_data(4);
        let mut net = init_network::<f32>(&ModelConfig::with_width(2), 2).unwrap();
        let w = LossWeights::default();
        let all = [0usize, 1, 2, 3];
        let full = accumulate_gradients(&mut net, &data, &[&all], &w, 0).unwrap();
        let split = accumulate_gradients(&mut net, &data, &[&all[..2], &all[2..]], &w, 0).unwrap();
        let scale = full.grads.iter().flatten().fold(0f32, |m, g| m.max(g.abs())) as f64;
        let worst = full
            .grads
            .iter()
            .flatten()
            .zip(split.grads.iter().flatten())
            .fold(0f64, |m, (a, b)| m.max((a - b).abs() as f64));
        assert!(worst <= 1e-5 * scale, "{worst} vs scale {scale}");
        assert!((full.loss - split.loss).abs() <= 1e-6);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = tiny_data(2);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 2,
            ..TrainConfig::desk()
        };
        let mut a = init_network::<f32>(&ModelConfig::with_width(2), 3).unwrap();
        let mut b = a.clone();
        let ha = train(&mut a, &data, &cfg, |_| {}).unwrap();
        let hb = train(&mut b, &data, &cfg, |_| {}).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let first = ha.steps[0].loss;
        let last = ha.steps.last().unwrap().loss;
        assert!(last < first, "{first} -> {last}");
        assert_eq!(ha.to_jsonl().lines().count(), 60);
    }

    #[test]
    fn qat_with_zero_lr_only_moves_observers() {
        let data = tiny_data(2);
        let net = init_network::<f32>(&ModelConfig::with_width(2), 4).unwrap();
        let qcfg = QatConfig {
            epochs: 1,
            batch_size: 2,
            lr: 0.0,
            seed: 0,
        };
        let (q, h) = qat_finetune(net.clone(), &data, &qcfg, |_| {}).unwrap();
        assert_eq!(h.steps.len(), 1);
        assert_eq!(q.net, net);
        assert!(q.state.observers.values().all(|o| o.initialized));
        assert_eq!(q.mode(), QatMode::Frozen);
    }

    #[test]
    fn eval_identities() {
        let data = tiny_data(3);
        let targets: Vec<ImagePair> = data
            .iter()
            .map(|p| ImagePair {
                low: p.high.clone(),
                high: p.high.clone(),
            })
            .collect();
        let r = eval_model(&Identity, &targets).unwrap();
        assert_abs_diff_eq!(r.psnr, 160.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.ssim, 1.0, epsilon = 1e-6);
        let fwd = eval_model(&Identity, &data).unwrap();
        let rev: Vec<ImagePair> = data.iter().rev().cloned().collect();
        assert_eq!(fwd, eval_model(&Identity, &rev).unwrap());
        assert!(eval_model(&Identity, &[]).is_err());
    }
}
