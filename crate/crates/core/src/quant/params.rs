//! Quantization parameters, integer tensors and fixed-point multipliers.
//!
//! Rounding is half-away-from-zero everywhere (`f64::round` for reals, and
//! the same rule in [`RequantMultiplier::apply`]), so the float simulation
//! and the integer engine agree on every tie.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Smallest admissible scale; degenerate ranges collapse onto it.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Affine map `q = clamp(round(x / scale) + zero_point, qmin, qmax)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
}

impl QuantParams {
    /// Signed symmetric 8-bit, `[-127, 127]`, zero point 0.
    pub fn symmetric_i8(scale: f64) -> Self {
        QuantParams {
            scale: scale.max(SCALE_FLOOR),
            zero_point: 0,
            qmin: -127,
            qmax: 127,
        }
    }

    /// Unsigned affine 8-bit, `[0, 255]`.
    pub fn affine_u8(scale: f64, zero_point: i32) -> Self {
        QuantParams {
            scale: scale.max(SCALE_FLOOR),
            zero_point: zero_point.clamp(0, 255),
            qmin: 0,
            qmax: 255,
        }
    }

    /// 32-bit symmetric, used for conv biases at scale `s_in · s_w`.
    pub fn bias_i32(scale: f64) -> Self {
        QuantParams {
            scale: scale.max(SCALE_FLOOR * SCALE_FLOOR),
            zero_point: 0,
            qmin: -i32::MAX,
            qmax: i32::MAX,
        }
    }

    /// Fixed parameters for tanh outputs, range `[-1, 1]`.
    pub fn tanh_output() -> Self {
        qparams_from_minmax(-1.0, 1.0, false, false)
    }

    /// Fixed parameters for the network output, range `[0, 1]`.
    pub fn unit_output() -> Self {
        qparams_from_minmax(0.0, 1.0, false, false)
    }

    pub fn is_signed(&self) -> bool {
        self.qmin < 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Invalid(format!("scale must be positive, got {}", self.scale)));
        }
        if self.qmin > self.qmax || self.zero_point < self.qmin || self.zero_point > self.qmax {
            return Err(Error::Invalid(format!(
                "zero point {} outside [{}, {}]",
                self.zero_point, self.qmin, self.qmax
            )));
        }
        Ok(())
    }

    /// Finer lattice over the same range: scale divided by `factor`, integer
    /// bounds and zero point multiplied by it. Test mode for checking that
    /// the simulation approaches float as resolution grows.
    pub fn refined(&self, factor: i32) -> Self {
        QuantParams {
            scale: self.scale / factor as f64,
            zero_point: self.zero_point.saturating_mul(factor),
            qmin: self.qmin.saturating_mul(factor),
            qmax: self.qmax.saturating_mul(factor),
        }
    }

    /// `round(x / scale) + zero_point` before clamping, as a real.
    #[inline]
    pub fn unclamped(&self, x: f64) -> f64 {
        (x / self.scale).round() + self.zero_point as f64
    }

    #[inline]
    pub fn in_range(&self, q: f64) -> bool {
        q >= self.qmin as f64 && q <= self.qmax as f64
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> i32 {
        // clamping in f64 first keeps huge or infinite inputs from wrapping
        self.unclamped(x).clamp(self.qmin as f64, self.qmax as f64) as i32
    }

    #[inline]
    pub fn dequantize(&self, q: i32) -> f64 {
        (q as i64 - self.zero_point as i64) as f64 * self.scale
    }

    /// `dequantize(quantize(x))`.
    #[inline]
    pub fn fake_quant(&self, x: f64) -> f64 {
        self.dequantize(self.quantize(x))
    }

    /// Smallest and largest representable reals.
    pub fn range(&self) -> (f64, f64) {
        (self.dequantize(self.qmin), self.dequantize(self.qmax))
    }
}

/// Quantization parameters covering `[min, max]`, widened to include 0.
///
/// Symmetric: `scale = max(|min|, |max|) / qmax`, zero point 0. Affine:
/// `scale = (max − min) / (qmax − qmin)`, zero point `qmin + round(−min / scale)`.
/// Signed ranges are `[-127, 127]` when symmetric and `[-128, 127]` otherwise;
/// unsigned ranges are `[0, 255]`.
pub fn qparams_from_minmax(min: f64, max: f64, signed: bool, symmetric: bool) -> QuantParams {
    let (min, max) = if min <= max { (min, max) } else { (max, min) };
    let (min, max) = (min.min(0.0), max.max(0.0));
    let (qmin, qmax) = match (signed, symmetric) {
        (true, true) => (-127, 127),
        (true, false) => (-128, 127),
        (false, _) => (0, 255),
    };
    if symmetric {
        let scale = (min.abs().max(max.abs()) / qmax as f64).max(SCALE_FLOOR);
        QuantParams {
            scale,
            zero_point: 0,
            qmin,
            qmax,
        }
    } else {
        let scale = ((max - min) / (qmax - qmin) as f64).max(SCALE_FLOOR);
        let zp = (qmin as f64 + (-min / scale).round()).clamp(qmin as f64, qmax as f64) as i32;
        QuantParams {
            scale,
            zero_point: zp,
            qmin,
            qmax,
        }
    }
}

/// Per-output-channel symmetric 8-bit parameters for a conv kernel
/// (out-ch × in-ch × kh × kw): one scale per output channel from its
/// largest magnitude.
pub fn weight_channel_qparams<R: Real>(weight: &Tensor<R>) -> Vec<QuantParams> {
    let per = weight.numel() / weight.shape().n.max(1);
    weight
        .data()
        .chunks(per.max(1))
        .map(|ch| {
            let m = ch.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
            qparams_from_minmax(-m, m, true, true)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Integer tensors
// ---------------------------------------------------------------------------

/// Integer storage of an [`IntTensor`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntData {
    I8(Vec<i8>),
    U8(Vec<u8>),
    I32(Vec<i32>),
}

impl IntData {
    pub fn len(&self) -> usize {
        match self {
            IntData::I8(v) => v.len(),
            IntData::U8(v) => v.len(),
            IntData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> i32 {
        match self {
            IntData::I8(v) => v[i] as i32,
            IntData::U8(v) => v[i] as i32,
            IntData::I32(v) => v[i],
        }
    }

    pub fn to_i32(&self) -> Vec<i32> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }
}

/// Quantized tensor. `qparams` holds one entry (per-tensor) or one entry
/// per output channel along axis 0 (per-channel weights).
#[derive(Clone, Debug, PartialEq)]
pub struct IntTensor {
    pub shape: Shape,
    pub data: IntData,
    pub qparams: Vec<QuantParams>,
}

impl IntTensor {
    pub fn new(shape: Shape, data: IntData, qparams: Vec<QuantParams>) -> Result<Self> {
        if data.len() != shape.numel() {
            return shape_err(
                "int_tensor",
                format!("{} values for shape {shape}", data.len()),
            );
        }
        if qparams.len() != 1 && qparams.len() != shape.n {
            return shape_err(
                "int_tensor",
                format!("{} qparams for {} channels", qparams.len(), shape.n),
            );
        }
        let t = IntTensor {
            shape,
            data,
            qparams,
        };
        let per = t.per_channel_len();
        for i in 0..t.data.len() {
            let qp = &t.qparams[if t.qparams.len() == 1 { 0 } else { i / per }];
            let v = t.data.get(i);
            if v < qp.qmin || v > qp.qmax {
                return Err(Error::Invalid(format!(
                    "value {v} outside [{}, {}]",
                    qp.qmin, qp.qmax
                )));
            }
        }
        Ok(t)
    }

    fn per_channel_len(&self) -> usize {
        (self.shape.numel() / self.shape.n.max(1)).max(1)
    }

    /// Per-tensor parameters. Panics on a per-channel tensor.
    pub fn qp(&self) -> &QuantParams {
        assert_eq!(self.qparams.len(), 1, "per-channel tensor has no single qparams");
        &self.qparams[0]
    }

    pub fn channel_qp(&self, i: usize) -> &QuantParams {
        if self.qparams.len() == 1 {
            &self.qparams[0]
        } else {
            &self.qparams[i / self.per_channel_len()]
        }
    }

    pub fn u8_data(&self) -> Option<&[u8]> {
        match &self.data {
            IntData::U8(v) => Some(v),
            _ => None,
        }
    }
}

fn storage_for(qmin: i32, qmax: i32, values: Vec<i32>) -> IntData {
    if qmin >= 0 && qmax <= 255 {
        IntData::U8(values.into_iter().map(|v| v as u8).collect())
    } else if qmin >= -128 && qmax <= 127 {
        IntData::I8(values.into_iter().map(|v| v as i8).collect())
    } else {
        IntData::I32(values)
    }
}

/// Quantizes with per-tensor parameters (`qparams.len() == 1`) or per output
/// channel along axis 0. Storage width follows the integer range.
pub fn quantize<R: Real>(x: &Tensor<R>, qparams: &[QuantParams]) -> Result<IntTensor> {
    let s = x.shape();
    if qparams.len() != 1 && qparams.len() != s.n {
        return shape_err("quantize", format!("{} qparams for {} channels", qparams.len(), s.n));
    }
    let per = (s.numel() / s.n.max(1)).max(1);
    let values: Vec<i32> = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let qp = &qparams[if qparams.len() == 1 { 0 } else { i / per }];
            qp.quantize(v.as_f64())
        })
        .collect();
    let qmin = qparams.iter().map(|q| q.qmin).min().unwrap_or(0);
    let qmax = qparams.iter().map(|q| q.qmax).max().unwrap_or(0);
    Ok(IntTensor {
        shape: s,
        data: storage_for(qmin, qmax, values),
        qparams: qparams.to_vec(),
    })
}

/// `(q − zero_point) · scale` element-wise.
pub fn dequantize(q: &IntTensor) -> Tensor<f32> {
    let data = (0..q.data.len())
        .map(|i| q.channel_qp(i).dequantize(q.data.get(i)) as f32)
        .collect();
    Tensor::from_vec(q.shape, data).expect("shape checked at construction")
}

// ---------------------------------------------------------------------------
// Fixed-point requantization
// ---------------------------------------------------------------------------

/// Real multiplier `M ≈ m0 · 2^(−31 − shift)` with `m0 ∈ [2^30, 2^31)`.
///
/// `shift` is signed: multipliers ≥ 1 (an output scale finer than the
/// accumulator scale) have a negative shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequantMultiplier {
    pub m0: i32,
    pub shift: i32,
}

impl RequantMultiplier {
    pub fn from_real(m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Invalid(format!("requant multiplier must be positive, got {m}")));
        }
        // m = f · 2^e with f ∈ [0.5, 1)
        let mut e = m.log2().floor() as i32 + 1;
        let mut f = m / 2f64.powi(e);
        // log2 can be off by one ulp near powers of two
        while f >= 1.0 {
            f /= 2.0;
            e += 1;
        }
        while f < 0.5 {
            f *= 2.0;
            e -= 1;
        }
        let mut m0 = (f * (1u64 << 31) as f64).round() as i64;
        if m0 == 1i64 << 31 {
            m0 = 1 << 30;
            e += 1;
        }
        Ok(RequantMultiplier {
            m0: m0 as i32,
            shift: -e,
        })
    }

    pub fn to_real(&self) -> f64 {
        self.m0 as f64 * 2f64.powi(-31 - self.shift)
    }

    /// `round(acc · m0 · 2^(−31−shift))`, halves away from zero.
    #[inline]
    pub fn apply(&self, acc: i64) -> i64 {
        round_shift(acc as i128 * self.m0 as i128, 31 + self.shift)
    }
}

/// `round(v · 2^(−shift))` with halves away from zero; a non-positive shift
/// multiplies exactly.
#[inline]
pub fn round_shift(v: i128, shift: i32) -> i64 {
    if shift <= 0 {
        return (v << (-shift).min(64)) as i64;
    }
    if shift >= 127 {
        return 0;
    }
    let half = 1i128 << (shift - 1);
    let mag = (v.abs() + half) >> shift;
    (if v < 0 { -mag } else { mag }) as i64
}

/// Two-operand rescaling onto a shared output scale: each operand's integer
/// multiplier carries the same binary exponent so the sum is rounded once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddRequant {
    pub ma: i64,
    pub mb: i64,
    pub shift: i32,
}

impl AddRequant {
    /// Multipliers `s_a / s_out` and `s_b / s_out`.
    pub fn new(sa: f64, sb: f64, s_out: f64) -> Result<Self> {
        let (a, b) = (sa / s_out, sb / s_out);
        let big = RequantMultiplier::from_real(a.max(b))?;
        let shift = 31 + big.shift;
        let scale = 2f64.powi(shift);
        Ok(AddRequant {
            ma: (a * scale).round() as i64,
            mb: (b * scale).round() as i64,
            shift,
        })
    }

    #[inline]
    pub fn apply(&self, da: i64, db: i64) -> i64 {
        round_shift(da as i128 * self.ma as i128 + db as i128 * self.mb as i128, self.shift)
    }
}
