//! Training objective: PSNR loss, cosine loss and outlier-aware loss, each
//! recorded on the tape with its own adjoint.
//!
//! Every term is evaluated per sample and averaged over the batch, so a loss
//! over a batch equals the mean of the losses over any even split of it.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tape::{Adjoint, Tape, Var};
use crate::tensor::{Real, Tensor};

/// PSNR loss baseline in dB.
pub const PSNR_BASELINE: f64 = 50.0;
/// PSNR loss normalizer.
pub const PSNR_SCALE: f64 = 100.0;
/// Guard added to the product of norms in the cosine loss.
pub const COSINE_EPS: f64 = 1e-12;
/// Guard added to the error standard deviation in the outlier weights.
pub const OUTLIER_EPS: f64 = 1e-8;

/// Mixture weights of the total loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 2.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma]
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
        {
            return Err(Error::Invalid(format!(
                "loss weights must be non-negative, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsnrConfig {
    pub max_value: f64,
    pub rmse_floor: f64,
}

impl Default for PsnrConfig {
    fn default() -> Self {
        PsnrConfig {
            max_value: 1.0,
            rmse_floor: 1e-8,
        }
    }
}

fn check_pair<R: Real>(op: &'static str, a: &Tensor<R>, b: &Tensor<R>) -> Result<()> {
    if a.shape() != b.shape() {
        return shape_err(op, format!("{} vs {}", a.shape(), b.shape()));
    }
    if a.numel() == 0 {
        return shape_err(op, "empty tensors");
    }
    Ok(())
}

fn rmse_slice<R: Real>(a: &[R], b: &[R]) -> f64 {
    let se: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    (se / a.len() as f64).sqrt()
}

/// Root mean squared error over all elements.
pub fn rmse<R: Real>(pred: &Tensor<R>, target: &Tensor<R>) -> Result<f64> {
    check_pair("rmse", pred, target)?;
    Ok(rmse_slice(pred.data(), target.data()))
}

pub fn psnr_from_rmse(rmse: f64, cfg: &PsnrConfig) -> f64 {
    20.0 * (cfg.max_value / rmse.max(cfg.rmse_floor)).log10()
}

/// Peak signal-to-noise ratio in dB over all elements.
pub fn psnr<R: Real>(pred: &Tensor<R>, target: &Tensor<R>, cfg: &PsnrConfig) -> Result<f64> {
    Ok(psnr_from_rmse(rmse(pred, target)?, cfg))
}

/// `(50 − PSNR) / 100`.
pub fn psnr_loss_from_psnr(psnr: f64) -> f64 {
    (PSNR_BASELINE - psnr) / PSNR_SCALE
}

fn per_sample<R: Real>(t: &Tensor<R>) -> impl Iterator<Item = &[R]> {
    let per = t.numel() / t.shape().n;
    t.data().chunks(per)
}

// ---------------------------------------------------------------------------
// PSNR loss
// ---------------------------------------------------------------------------

struct PsnrLossRule {
    cfg: PsnrConfig,
}

impl<R: Real> Adjoint<R> for PsnrLossRule {
    fn name(&self) -> &'static str {
        "psnr_loss"
    }

    fn backward(&self, up: &[R], inputs: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        let (p, t) = (inputs[0], inputs[1]);
        let n = p.shape().n as f64;
        let k = 20.0 / (PSNR_SCALE * std::f64::consts::LN_10);
        let mut g = Vec::with_capacity(p.numel());
        for (ps, ts) in per_sample(p).zip(per_sample(t)) {
            let r = rmse_slice(ps, ts);
            let m = ps.len() as f64;
            if r <= self.cfg.rmse_floor {
                g.extend(std::iter::repeat_n(R::zero(), ps.len()));
                continue;
            }
            let c = up[0].as_f64() * k / (m * r * r * n);
            g.extend(
                ps.iter()
                    .zip(ts)
                    .map(|(a, b)| R::of(c * (a.as_f64() - b.as_f64()))),
            );
        }
        vec![Some(g), None]
    }
}

/// Mean over the batch of `(50 − PSNR_i) / 100`. The gradient vanishes for
/// samples whose RMSE is at or below the floor.
pub fn psnr_loss<R: Real>(tape: &mut Tape<R>, pred: Var, target: Var, cfg: &PsnrConfig) -> Result<Var> {
    let (p, t) = (tape.value(pred), tape.value(target));
    check_pair("psnr_loss", p, t)?;
    let n = p.shape().n as f64;
    let v: f64 = per_sample(p)
        .zip(per_sample(t))
        .map(|(a, b)| psnr_loss_from_psnr(psnr_from_rmse(rmse_slice(a, b), cfg)))
        .sum::<f64>()
        / n;
    tape.custom(
        &[pred, target],
        Tensor::scalar(R::of(v)),
        Box::new(PsnrLossRule { cfg: *cfg }),
    )
}

// ---------------------------------------------------------------------------
// Cosine loss
// ---------------------------------------------------------------------------

struct CosineStats {
    dot: f64,
    np: f64,
    nt: f64,
}

fn cosine_stats<R: Real>(p: &[R], t: &[R]) -> CosineStats {
    let (mut dot, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(t) {
        let (a, b) = (a.as_f64(), b.as_f64());
        dot += a * b;
        pp += a * a;
        tt += b * b;
    }
    CosineStats {
        dot,
        np: pp.sqrt(),
        nt: tt.sqrt(),
    }
}

fn cosine_value(s: &CosineStats) -> f64 {
    1.0 - s.dot / (s.np * s.nt + COSINE_EPS)
}

/// `1 − p·t / (‖p‖‖t‖ + eps)` on one flattened sample.
pub fn cosine_distance<R: Real>(pred: &[R], target: &[R]) -> f64 {
    cosine_value(&cosine_stats(pred, target))
}

struct CosineLossRule;

impl<R: Real> Adjoint<R> for CosineLossRule {
    fn name(&self) -> &'static str {
        "cosine_loss"
    }

    fn backward(&self, up: &[R], inputs: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        let (p, t) = (inputs[0], inputs[1]);
        let n = p.shape().n as f64;
        let u = up[0].as_f64() / n;
        let mut g = Vec::with_capacity(p.numel());
        for (ps, ts) in per_sample(p).zip(per_sample(t)) {
            let s = cosine_stats(ps, ts);
            let d = s.np * s.nt + COSINE_EPS;
            let k = if s.np > 0.0 {
                s.dot * s.nt / (s.np * d * d)
            } else {
                0.0
            };
            g.extend(
                ps.iter()
                    .zip(ts)
                    .map(|(a, b)| R::of(u * (k * a.as_f64() - b.as_f64() / d))),
            );
        }
        vec![Some(g), None]
    }
}

/// Mean over the batch of the cosine distance between flattened samples.
pub fn cosine_loss<R: Real>(tape: &mut Tape<R>, pred: Var, target: Var) -> Result<Var> {
    let (p, t) = (tape.value(pred), tape.value(target));
    check_pair("cosine_loss", p, t)?;
    let n = p.shape().n as f64;
    let v: f64 = per_sample(p)
        .zip(per_sample(t))
        .map(|(a, b)| cosine_distance(a, b))
        .sum::<f64>()
        / n;
    tape.custom(&[pred, target], Tensor::scalar(R::of(v)), Box::new(CosineLossRule))
}

// ---------------------------------------------------------------------------
// Outlier-aware loss
// ---------------------------------------------------------------------------

/// Per-element weights `exp(−max(0, (e − μ)/(σ + 1e-8)))` for absolute
/// errors `e` with mean μ and standard deviation σ.
pub fn outlier_weights(errors: &[f64]) -> Vec<f64> {
    let m = errors.len() as f64;
    let mu = errors.iter().sum::<f64>() / m;
    let sigma = (errors.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / m).sqrt();
    errors
        .iter()
        .map(|e| (-((e - mu) / (sigma + OUTLIER_EPS)).max(0.0)).exp())
        .collect()
}

fn abs_errors<R: Real>(p: &[R], t: &[R]) -> Vec<f64> {
    p.iter()
        .zip(t)
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .collect()
}

/// `mean(w ⊙ e)` on one sample.
pub fn outlier_value<R: Real>(pred: &[R], target: &[R]) -> f64 {
    let e = abs_errors(pred, target);
    let w = outlier_weights(&e);
    e.iter().zip(&w).map(|(e, w)| e * w).sum::<f64>() / e.len() as f64
}

struct OutlierLossRule;

impl<R: Real> Adjoint<R> for OutlierLossRule {
    fn name(&self) -> &'static str {
        "outlier_loss"
    }

    fn backward(&self, up: &[R], inputs: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        let (p, t) = (inputs[0], inputs[1]);
        let n = p.shape().n as f64;
        let mut g = Vec::with_capacity(p.numel());
        for (ps, ts) in per_sample(p).zip(per_sample(t)) {
            // weights are stop-gradient constants
            let w = outlier_weights(&abs_errors(ps, ts));
            let c = up[0].as_f64() / (ps.len() as f64 * n);
            g.extend(ps.iter().zip(ts).zip(&w).map(|((a, b), w)| {
                let d = a.as_f64() - b.as_f64();
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                R::of(c * w * sign)
            }));
        }
        vec![Some(g), None]
    }
}

/// Mean over the batch of the outlier-down-weighted absolute error.
pub fn outlier_loss<R: Real>(tape: &mut Tape<R>, pred: Var, target: Var) -> Result<Var> {
    let (p, t) = (tape.value(pred), tape.value(target));
    check_pair("outlier_loss", p, t)?;
    let n = p.shape().n as f64;
    let v: f64 = per_sample(p)
        .zip(per_sample(t))
        .map(|(a, b)| outlier_value(a, b))
        .sum::<f64>()
        / n;
    tape.custom(&[pred, target], Tensor::scalar(R::of(v)), Box::new(OutlierLossRule))
}

// ---------------------------------------------------------------------------
// Total
// ---------------------------------------------------------------------------

/// Tape variables of the loss and its components.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub psnr: Var,
    pub cosine: Var,
    pub outlier: Var,
}

/// `α·L_psnr + β·L_cos + γ·L_out`.
pub fn total_loss<R: Real>(
    tape: &mut Tape<R>,
    pred: Var,
    target: Var,
    weights: &LossWeights,
    cfg: &PsnrConfig,
) -> Result<LossTerms> {
    let psnr = psnr_loss(tape, pred, target, cfg)?;
    let cosine = cosine_loss(tape, pred, target)?;
    let outlier = outlier_loss(tape, pred, target)?;
    let total = tape.weighted_sum(&[
        (R::of(weights.alpha), psnr),
        (R::of(weights.beta), cosine),
        (R::of(weights.gamma), outlier),
    ])?;
    Ok(LossTerms {
        total,
        psnr,
        cosine,
        outlier,
    })
}

/// Loss value without recording gradients.
pub fn total_loss_value<R: Real>(
    pred: &Tensor<R>,
    target: &Tensor<R>,
    weights: &LossWeights,
    cfg: &PsnrConfig,
) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(target.clone());
    let terms = total_loss(&mut tape, p, t, weights, cfg)?;
    Ok(tape.value(terms.total).item().as_f64())
}
