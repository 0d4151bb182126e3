//! Integer-only kernels on unsigned 8-bit activations.
//!
//! Every kernel takes quantized operands, works in integer arithmetic and
//! requantizes through a [`RequantMultiplier`] (or [`AddRequant`]) onto the
//! output parameters.
//!
//! Accumulator bound for [`int8_conv2d`]: each tap contributes at most
//! `255 · 127` in magnitude, so `k` taps stay below `k · 32385`, which fits
//! in `i32` for `k < 66 000`. The largest layer here (3×3 over `2·4c`
//! channels at `c = 64`) has 4 608 taps. The bias is added with saturation.

use super::params::{AddRequant, IntData, IntTensor, QuantParams, RequantMultiplier};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{ConvGeometry, Shape};

/// Largest tap count for which the conv accumulator cannot overflow.
pub const MAX_CONV_TAPS: usize = (i32::MAX / (255 * 127)) as usize;

fn u8_operand<'a>(op: &'static str, t: &'a IntTensor) -> Result<(&'a [u8], &'a QuantParams)> {
    match (&t.data, t.qparams.as_slice()) {
        (IntData::U8(v), [qp]) => Ok((v, qp)),
        _ => Err(Error::Invalid(format!(
            "{op}: expected a per-tensor unsigned 8-bit operand"
        ))),
    }
}

#[inline]
fn clamp_to(qp: &QuantParams, v: i64) -> u8 {
    v.clamp(qp.qmin as i64, qp.qmax as i64) as u8
}

fn u8_tensor(shape: Shape, data: Vec<u8>, qp: QuantParams) -> IntTensor {
    IntTensor {
        shape,
        data: IntData::U8(data),
        qparams: vec![qp],
    }
}

/// `q_out = clamp(z_out + M·(Σ (q_in − z_in)·q_w + q_bias))` per output
/// channel, with zero padding in the real domain (taps outside the image
/// contribute nothing).
pub fn int8_conv2d(
    q_in: &IntTensor,
    q_w: &IntTensor,
    q_bias: &[i32],
    requant: &[RequantMultiplier],
    out_qp: &QuantParams,
    stride: usize,
    padding: usize,
) -> Result<IntTensor> {
    let (xin, in_qp) = u8_operand("int8_conv2d", q_in)?;
    let IntData::I8(w) = &q_w.data else {
        return Err(Error::Invalid("int8_conv2d: weights must be signed 8-bit".into()));
    };
    if q_w.qparams.iter().any(|q| q.zero_point != 0) {
        return Err(Error::Invalid("int8_conv2d: weights must be symmetric".into()));
    }
    let g = ConvGeometry::new(q_in.shape, q_w.shape, stride, padding)?;
    let co = g.kernel.n;
    if q_bias.len() != co || requant.len() != co {
        return shape_err(
            "int8_conv2d",
            format!(
                "out-channels: {co} kernels but {} biases and {} multipliers",
                q_bias.len(),
                requant.len()
            ),
        );
    }
    let taps = g.kernel.c * g.kernel.h * g.kernel.w;
    if taps > MAX_CONV_TAPS {
        return Err(Error::Invalid(format!(
            "int8_conv2d: {taps} taps exceed the 32-bit accumulator bound {MAX_CONV_TAPS}"
        )));
    }
    let z = in_qp.zero_point;
    let x: Vec<i32> = xin.iter().map(|&v| v as i32 - z).collect();
    let (ci, kh, kw) = (g.kernel.c, g.kernel.h, g.kernel.w);
    let (ih, iw, oh, ow, s) = (g.input.h, g.input.w, g.output.h, g.output.w, g.stride);
    let mut out = vec![0u8; g.output.numel()];
    let mut acc = vec![0i32; oh * ow];
    for n in 0..g.input.n {
        for oc in 0..co {
            acc.fill(0);
            for ic in 0..ci {
                let ib = (n * ci + ic) * ih * iw;
                let inp = &x[ib..ib + ih * iw];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = w[((oc * ci + ic) * kh + ky) * kw + kx] as i32;
                        if wv == 0 {
                            continue;
                        }
                        let cols = g.valid_cols(kx);
                        let off = cols.start * s + kx - g.padding;
                        for oy in 0..oh {
                            let Some(iy) = g.input_row(oy, ky) else { continue };
                            let row_in = &inp[iy * iw..(iy + 1) * iw];
                            let row_acc = &mut acc[oy * ow..(oy + 1) * ow];
                            for (j, a) in row_acc[cols.clone()].iter_mut().enumerate() {
                                *a += wv * row_in[off + j * s];
                            }
                        }
                    }
                }
            }
            let ob = (n * co + oc) * oh * ow;
            let rq = requant[oc];
            for (o, &a) in out[ob..ob + oh * ow].iter_mut().zip(&acc) {
                let a = a.saturating_add(q_bias[oc]);
                *o = clamp_to(out_qp, out_qp.zero_point as i64 + rq.apply(a as i64));
            }
        }
    }
    Ok(u8_tensor(g.output, out, *out_qp))
}

/// `q_y = clamp(z_y + M·(q_a − z_a)(q_b − z_b))` with `M = s_a·s_b / s_y`.
pub fn int8_hadamard(
    a: &IntTensor,
    b: &IntTensor,
    requant: RequantMultiplier,
    out_qp: &QuantParams,
) -> Result<IntTensor> {
    let (va, qa) = u8_operand("int8_hadamard", a)?;
    let (vb, qb) = u8_operand("int8_hadamard", b)?;
    if a.shape != b.shape {
        return shape_err("int8_hadamard", format!("{} vs {}", a.shape, b.shape));
    }
    let out = va
        .iter()
        .zip(vb)
        .map(|(&x, &y)| {
            let p = (x as i64 - qa.zero_point as i64) * (y as i64 - qb.zero_point as i64);
            clamp_to(out_qp, out_qp.zero_point as i64 + requant.apply(p))
        })
        .collect();
    Ok(u8_tensor(a.shape, out, *out_qp))
}

/// Operands rescaled onto the output scale with a shared exponent, summed
/// and rounded once.
pub fn int8_add(
    a: &IntTensor,
    b: &IntTensor,
    requant: &AddRequant,
    out_qp: &QuantParams,
) -> Result<IntTensor> {
    let (va, qa) = u8_operand("int8_add", a)?;
    let (vb, qb) = u8_operand("int8_add", b)?;
    if a.shape != b.shape {
        return shape_err("int8_add", format!("{} vs {}", a.shape, b.shape));
    }
    let out = va
        .iter()
        .zip(vb)
        .map(|(&x, &y)| {
            let s = requant.apply(
                x as i64 - qa.zero_point as i64,
                y as i64 - qb.zero_point as i64,
            );
            clamp_to(out_qp, out_qp.zero_point as i64 + s)
        })
        .collect();
    Ok(u8_tensor(a.shape, out, *out_qp))
}

/// Moves an 8-bit tensor onto other parameters: `z_o + M·(q − z_i)`.
pub fn int8_requantize(
    q: &IntTensor,
    requant: RequantMultiplier,
    out_qp: &QuantParams,
) -> Result<IntTensor> {
    let (v, qp) = u8_operand("int8_requantize", q)?;
    if qp == out_qp {
        return Ok(q.clone());
    }
    let out = v
        .iter()
        .map(|&x| {
            let d = x as i64 - qp.zero_point as i64;
            clamp_to(out_qp, out_qp.zero_point as i64 + requant.apply(d))
        })
        .collect();
    Ok(u8_tensor(q.shape, out, *out_qp))
}

/// 256-entry tanh table: entry `i = quantize(tanh(dequantize(i)))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TanhLut {
    pub table: Vec<u8>,
}

impl TanhLut {
    pub fn new(in_qp: &QuantParams, out_qp: &QuantParams) -> Result<Self> {
        if in_qp.qmin < 0 || in_qp.qmax > 255 || out_qp.qmin < 0 || out_qp.qmax > 255 {
            return Err(Error::Invalid("tanh table needs unsigned 8-bit parameters".into()));
        }
        let table = (0..256)
            .map(|i| out_qp.quantize(in_qp.dequantize(i).tanh()) as u8)
            .collect();
        Ok(TanhLut { table })
    }

    pub fn apply(&self, q: &IntTensor, out_qp: &QuantParams) -> Result<IntTensor> {
        let (v, _) = u8_operand("tanh_lut", q)?;
        let out = v.iter().map(|&x| self.table[x as usize]).collect();
        Ok(u8_tensor(q.shape, out, *out_qp))
    }
}

/// Builds the table for `(in_qp, out_qp)` and applies it.
pub fn tanh_lut(q_in: &IntTensor, in_qp: &QuantParams, out_qp: &QuantParams) -> Result<IntTensor> {
    TanhLut::new(in_qp, out_qp)?.apply(q_in, out_qp)
}

/// Nearest-neighbor 2× upsampling of integer values.
pub fn int8_upsample2x(q: &IntTensor) -> Result<IntTensor> {
    let (v, qp) = u8_operand("int8_upsample", q)?;
    let s = q.shape;
    let (ow, oh) = (s.w * 2, s.h * 2);
    let mut out = Vec::with_capacity(s.numel() * 4);
    for plane in v.chunks(s.plane().max(1)) {
        for y in 0..oh {
            let row = &plane[(y / 2) * s.w..(y / 2 + 1) * s.w];
            for x in 0..ow {
                out.push(row[x / 2]);
            }
        }
    }
    Ok(u8_tensor(Shape::new(s.n, s.c, oh, ow), out, *qp))
}

/// Channel concatenation of 8-bit tensors that already share parameters.
pub fn int8_concat(parts: &[&IntTensor], out_qp: &QuantParams) -> Result<IntTensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("int8_concat: no parts".into()))?
        .shape;
    let mut c = 0;
    for p in parts {
        let (_, qp) = u8_operand("int8_concat", p)?;
        if qp != out_qp {
            return Err(Error::Invalid("int8_concat: parts must be requantized first".into()));
        }
        if (p.shape.n, p.shape.h, p.shape.w) != (first.n, first.h, first.w) {
            return shape_err("int8_concat", format!("spatial {} vs {}", p.shape, first));
        }
        c += p.shape.c;
    }
    let plane = first.h * first.w;
    let mut out = Vec::with_capacity(first.n * c * plane);
    for n in 0..first.n {
        for p in parts {
            let v = p.u8_data().expect("checked above");
            let per = p.shape.c * plane;
            out.extend_from_slice(&v[n * per..(n + 1) * per]);
        }
    }
    Ok(u8_tensor(Shape::new(first.n, c, first.h, first.w), out, *out_qp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::params::{dequantize, qparams_from_minmax, quantize, weight_channel_qparams};
    use crate::tensor::{conv2d, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn u8_const(shape: Shape, v: u8, qp: QuantParams) -> IntTensor {
        u8_tensor(shape, vec![v; shape.numel()], qp)
    }

    #[test]
    fn zero_weights_give_output_zero_point() {
        let in_qp = QuantParams::affine_u8(0.02, 10);
        let out_qp = QuantParams::affine_u8(0.05, 77);
        let x = u8_const(Shape::new(1, 2, 5, 5), 200, in_qp);
        let w = IntTensor::new(
            Shape::new(3, 2, 3, 3),
            IntData::I8(vec![0; 54]),
            vec![QuantParams::symmetric_i8(0.01); 3],
        )
        .unwrap();
        let rq = vec![RequantMultiplier::from_real(0.02 * 0.01 / 0.05).unwrap(); 3];
        let y = int8_conv2d(&x, &w, &[0; 3], &rq, &out_qp, 1, 1).unwrap();
        assert!(y.u8_data().unwrap().iter().all(|&v| v == 77));
    }

    #[test]
    fn identity_1x1_conv() {
        let qp = QuantParams::affine_u8(0.5, 3);
        let x = IntTensor::new(
            Shape::new(1, 1, 2, 3),
            IntData::U8(vec![0, 3, 9, 100, 254, 255]),
            vec![qp],
        )
        .unwrap();
        let w = IntTensor::new(
            Shape::new(1, 1, 1, 1),
            IntData::I8(vec![1]),
            vec![QuantParams::symmetric_i8(1.0)],
        )
        .unwrap();
        let rq = [RequantMultiplier::from_real(0.5 * 1.0 / 0.5).unwrap()];
        let y = int8_conv2d(&x, &w, &[0], &rq, &qp, 1, 0).unwrap();
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn random_conv_matches_float_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = Shape::new(1, 2, 6, 6);
        let x = Tensor::<f64>::from_vec(xs, (0..xs.numel()).map(|_| rng.random_range(-1.0..2.0)).collect())
            .unwrap();
        let ws = Shape::new(3, 2, 3, 3);
        let w = Tensor::<f64>::from_vec(ws, (0..ws.numel()).map(|_| rng.random_range(-0.5..0.5)).collect())
            .unwrap();
        let b = Tensor::<f64>::channel_vector(vec![0.1, -0.2, 0.05]);
        let in_qp = qparams_from_minmax(-1.0, 2.0, false, false);
        let w_qps = weight_channel_qparams(&w);
        let qx = quantize(&x, &[in_qp]).unwrap();
        let qw = quantize(&w, &w_qps).unwrap();
        let qb: Vec<i32> = (0..3)
            .map(|o| QuantParams::bias_i32(in_qp.scale * w_qps[o].scale).quantize(b.data()[o]))
            .collect();
        // float oracle on the dequantized operands
        let xd = dequantize(&qx).cast::<f64>();
        let wd = dequantize(&qw).cast::<f64>();
        let yf = conv2d(&xd, &wd, &b, 1, 1).unwrap();
        let (lo, hi) = yf.data().iter().fold((0.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        let out_qp = qparams_from_minmax(lo, hi, false, false);
        let rq: Vec<RequantMultiplier> = w_qps
            .iter()
            .map(|q| RequantMultiplier::from_real(in_qp.scale * q.scale / out_qp.scale).unwrap())
            .collect();
        let y = int8_conv2d(&qx, &qw, &qb, &rq, &out_qp, 1, 1).unwrap();
        for (i, &v) in y.u8_data().unwrap().iter().enumerate() {
            let r = out_qp.quantize(yf.data()[i]);
            assert!((v as i32 - r).abs() <= 1, "elem {i}: {v} vs {r}");
        }
    }

    #[test]
    fn hadamard_zero_gate() {
        let qa = QuantParams::tanh_output();
        let out = QuantParams::affine_u8(0.01, 100);
        let s = Shape::new(1, 1, 2, 2);
        let a = u8_tensor(s, vec![0, 50, 200, 255], qa);
        let b = u8_const(s, qa.zero_point as u8, qa);
        let rq = RequantMultiplier::from_real(qa.scale * qa.scale / out.scale).unwrap();
        let y = int8_hadamard(&a, &b, rq, &out).unwrap();
        assert!(y.u8_data().unwrap().iter().all(|&v| v == 100));
    }

    #[test]
    fn add_of_quantized_zero_is_identity() {
        let qa = QuantParams::affine_u8(0.03, 20);
        let qb = QuantParams::affine_u8(0.07, 90);
        let s = Shape::new(1, 1, 1, 4);
        let a = u8_tensor(s, vec![0, 20, 130, 255], qa);
        let b = u8_const(s, 90, qb);
        let rq = AddRequant::new(qa.scale, qb.scale, qa.scale).unwrap();
        let y = int8_add(&a, &b, &rq, &qa).unwrap();
        assert_eq!(y.data, a.data);
    }

    #[test]
    fn tanh_lut_maps_zero_to_zero() {
        let in_qp = qparams_from_minmax(-3.0, 5.0, false, false);
        let out_qp = QuantParams::tanh_output();
        let lut = TanhLut::new(&in_qp, &out_qp).unwrap();
        assert_eq!(lut.table[in_qp.zero_point as usize] as i32, out_qp.quantize(0.0));
        assert_eq!(out_qp.quantize(0.0), out_qp.zero_point);
        // monotone
        assert!(lut.table.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn upsample_and_concat() {
        let qp = QuantParams::affine_u8(0.1, 0);
        let a = u8_tensor(Shape::new(1, 1, 1, 2), vec![1, 2], qp);
        let up = int8_upsample2x(&a).unwrap();
        assert_eq!(up.u8_data().unwrap(), &[1, 1, 2, 2, 1, 1, 2, 2]);
        let b = u8_tensor(Shape::new(1, 2, 2, 4), (0..16).collect(), qp);
        let c = int8_concat(&[&up, &b], &qp).unwrap();
        assert_eq!(c.shape, Shape::new(1, 3, 2, 4));
        assert_eq!(&c.u8_data().unwrap()[8..], &(0..16).collect::<Vec<u8>>()[..]);
    }
}
