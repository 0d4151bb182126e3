//! Fake quantization on the tape with a straight-through estimator.
//!
//! Forward projects onto the lattice, `dequantize(quantize(x))`; backward
//! passes the upstream gradient where the pre-clamp integer lies inside
//! `[qmin, qmax]` and blocks it where the forward pass clamped.

use super::params::QuantParams;
use crate::error::{shape_err, Result};
use crate::tape::{Adjoint, Tape, Var};
use crate::tensor::{Real, Tensor};

fn channel_len<R: Real>(x: &Tensor<R>, qparams: &[QuantParams]) -> Result<usize> {
    let n = qparams.len();
    if n == 0 || !x.numel().is_multiple_of(n) {
        return shape_err(
            "fake_quant",
            format!("{} qparams do not divide {} elements", n, x.numel()),
        );
    }
    Ok(x.numel() / n)
}

/// Forward projection and the STE pass mask. `qparams` holds one entry, or
/// one per contiguous channel block (axis 0 of a kernel, or each bias entry).
pub fn fake_quant_forward<R: Real>(
    x: &Tensor<R>,
    qparams: &[QuantParams],
) -> Result<(Tensor<R>, Vec<bool>)> {
    let per = channel_len(x, qparams)?;
    let mut out = Vec::with_capacity(x.numel());
    let mut mask = Vec::with_capacity(x.numel());
    for (chunk, qp) in x.data().chunks(per).zip(qparams.iter().cycle()) {
        for &v in chunk {
            let v = v.as_f64();
            mask.push(qp.in_range(qp.unclamped(v)));
            out.push(R::of(qp.fake_quant(v)));
        }
    }
    Ok((Tensor::from_vec(x.shape(), out)?, mask))
}

/// Fake quantization of a plain tensor.
pub fn fake_quant_tensor<R: Real>(x: &Tensor<R>, qparams: &[QuantParams]) -> Result<Tensor<R>> {
    Ok(fake_quant_forward(x, qparams)?.0)
}

struct SteRule {
    mask: Vec<bool>,
}

impl<R: Real> Adjoint<R> for SteRule {
    fn name(&self) -> &'static str {
        "fake_quant"
    }

    fn backward(&self, up: &[R], _: &[&Tensor<R>], _: &Tensor<R>) -> Vec<Option<Vec<R>>> {
        vec![Some(
            up.iter()
                .zip(&self.mask)
                .map(|(&g, &m)| if m { g } else { R::zero() })
                .collect(),
        )]
    }
}

/// Records fake quantization of `x` on the tape.
pub fn fake_quant<R: Real>(tape: &mut Tape<R>, x: Var, qparams: &[QuantParams]) -> Result<Var> {
    let (out, mask) = fake_quant_forward(tape.value(x), qparams)?;
    tape.custom(&[x], out, Box::new(SteRule { mask }))
}
