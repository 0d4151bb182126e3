//! Finite-difference verification of the network's tape gradients.
//!
//! Runs in f64 on a small random network. The scalar checked is
//! `Σ output ⊙ probe` for a fixed random probe, so every adjoint of the
//! forward pass is exercised without involving the loss module. Each
//! parameter tensor is one group; a seeded sample of its entries is
//! perturbed by ±h and the group error is
//! `‖fd − analytic‖₂ / max(‖fd‖₂, ‖analytic‖₂, GRAD_FLOOR)` over the sample.
//! The floor keeps groups whose true gradient is zero (a conv bias feeding
//! an instance norm) from dividing roundoff by roundoff.
//!
//! The network is piecewise smooth (LeakyReLU, output clip). When a ±h step
//! moves any activation across a kink, the central difference is no longer
//! a derivative estimate; such entries are detected by comparing activation
//! patterns, counted, and left out of the error. The error including them
//! is reported alongside.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{init_network, ModelConfig, Network, TapeBuilder};
use crate::tape::{Primitive, Tape};
use crate::tensor::{Shape, Tensor};

pub const MAX_WIDTH: usize = 8;
pub const MAX_SIZE: usize = 32;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
/// Gradient norms below this are treated as zero.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub width: usize,
    pub size: usize,
    pub step: f64,
    /// Entries sampled per parameter tensor (all entries if fewer).
    pub samples_per_group: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Corrupts one adjoint rule to demonstrate that the check notices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Primitive>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            width: 4,
            size: 16,
            step: 1e-3,
            samples_per_group: 16,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
            fault: None,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width > MAX_WIDTH {
            return Err(Error::Invalid(format!("gradcheck width {} outside 1..={MAX_WIDTH}", self.width)));
        }
        if self.size == 0 || self.size > MAX_SIZE || !self.size.is_multiple_of(8) {
            return Err(Error::Invalid(format!(
                "gradcheck size {} must be a multiple of 8 no larger than {MAX_SIZE}",
                self.size
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Invalid("gradcheck step must be positive".into()));
        }
        if self.samples_per_group == 0 {
            return Err(Error::Invalid("samples_per_group must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub name: String,
    /// Entries compared (smooth ones).
    pub checked: usize,
    /// Sampled entries whose ±h step crossed a kink.
    pub kink_crossings: usize,
    pub rel_error: f64,
    /// Error over all sampled entries, kink crossings included.
    pub rel_error_all: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupResult>,
    pub max_rel_error: f64,
    pub worst_group: String,
    pub max_rel_error_all: f64,
    pub sampled: usize,
    pub kink_crossings: usize,
    pub passed: bool,
    pub seconds: f64,
}

/// Probe loss and the activation pattern at the current parameters.
fn probe_loss(net: &Network<f64>, x: &Tensor<f64>, probe: &Tensor<f64>) -> Result<(f64, Vec<i8>)> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let mut b = TapeBuilder::new(&mut tape, net, false);
    let y = net.arch.forward(&mut b, xv)?;
    let loss = tape.value(y).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
    Ok((loss, tape.activation_pattern()))
}

fn norm_ratio(diff: f64, a: f64, b: f64) -> f64 {
    diff.sqrt() / a.sqrt().max(b.sqrt()).max(GRAD_FLOOR)
}

pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let t0 = Instant::now();
    let mut net = init_network::<f64>(&ModelConfig::with_width(cfg.width), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let s = Shape::new(1, 3, cfg.size, cfg.size);
    // inputs away from 0 and 1 keep the output clip mostly inactive
    let x = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random_range(0.2..0.8)).collect())?;
    let probe = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    let mut tape = Tape::new();
    if let Some(p) = cfg.fault {
        tape.inject_adjoint_fault(p);
    }
    let xv = tape.constant(x.clone());
    let (out, params) = {
        let mut b = TapeBuilder::new(&mut tape, &net, true);
        let y = net.arch.forward(&mut b, xv)?;
        (y, b.param_vars().to_vec())
    };
    let loss = tape.probe(out, &probe)?;
    let base_pattern = tape.activation_pattern();
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .zip(net.params.iter())
        .map(|(&v, p)| tape.grad(v).map_or(vec![0.0; p.value.numel()], |g| g.to_vec()))
        .collect();

    let mut groups = Vec::new();
    for (i, g_an) in analytic.iter().enumerate() {
        let (name, numel) = {
            let p = net.params.iter().nth(i).expect("index in range");
            (p.name.clone(), p.value.numel())
        };
        let picks = sample(&mut rng, numel, cfg.samples_per_group.min(numel)).into_vec();
        // [smooth, all] accumulators of (diff², fd², analytic²)
        let mut acc = [[0.0f64; 3]; 2];
        let mut crossings = 0;
        for &j in &picks {
            let orig = net.params.iter().nth(i).expect("index").value.data()[j];
            let set = |net: &mut Network<f64>, v: f64| {
                net.params.iter_mut().nth(i).expect("index").value.data_mut()[j] = v;
            };
            set(&mut net, orig + cfg.step);
            let (plus, pat_plus) = probe_loss(&net, &x, &probe)?;
            set(&mut net, orig - cfg.step);
            let (minus, pat_minus) = probe_loss(&net, &x, &probe)?;
            set(&mut net, orig);
            let fd = (plus - minus) / (2.0 * cfg.step);
            let terms = [(fd - g_an[j]).powi(2), fd * fd, g_an[j] * g_an[j]];
            let smooth = pat_plus == base_pattern && pat_minus == base_pattern;
            if smooth {
                (0..3).for_each(|k| acc[0][k] += terms[k]);
            } else {
                crossings += 1;
            }
            (0..3).for_each(|k| acc[1][k] += terms[k]);
        }
        groups.push(GroupResult {
            name,
            checked: picks.len() - crossings,
            kink_crossings: crossings,
            rel_error: norm_ratio(acc[0][0], acc[0][1], acc[0][2]),
            rel_error_all: norm_ratio(acc[1][0], acc[1][1], acc[1][2]),
        });
    }
    let worst = groups
        .iter()
        .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
        .expect("networks have parameters");
    Ok(GradcheckReport {
        max_rel_error: worst.rel_error,
        worst_group: worst.name.clone(),
        max_rel_error_all: groups.iter().map(|g| g.rel_error_all).fold(0.0, f64::max),
        sampled: groups.iter().map(|g| g.checked + g.kink_crossings).sum(),
        kink_crossings: groups.iter().map(|g| g.kink_crossings).sum(),
        passed: worst.rel_error < cfg.tolerance,
        groups: groups.clone(),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_network_passes() {
        let r = gradcheck(&GradcheckConfig {
            width: 2,
            size: 16,
            samples_per_group: 4,
            ..GradcheckConfig::default()
        })
        .unwrap();
        assert!(r.passed, "{} in {}", r.max_rel_error, r.worst_group);
        assert!(r.groups.iter().all(|g| g.checked + g.kink_crossings > 0));
        assert!(r.kink_crossings < r.sampled / 4, "{} of {}", r.kink_crossings, r.sampled);
    }

    #[test]
    fn corrupted_adjoint_fails() {
        let r = gradcheck(&GradcheckConfig {
            width: 2,
            size: 16,
            samples_per_group: 4,
            fault: Some(Primitive::Tanh),
            ..GradcheckConfig::default()
        })
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_error > 0.01);
    }

    #[test]
    fn guard_rails() {
        for (width, size) in [(9, 16), (4, 40), (4, 12), (0, 16)] {
            let cfg = GradcheckConfig {
                width,
                size,
                ..GradcheckConfig::default()
            };
            assert!(gradcheck(&cfg).is_err(), "{width} {size}");
        }
    }
}
