//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "QATIECKP"
//! version  u32
//! tables   u32      number of tables that follow
//! table    tag [u8; 4], payload length u64, payload
//! ```
//!
//! Tables:
//! - `CONF`: UTF-8 JSON config echo `{kind, model, meta}`.
//! - `TENS`: u32 count, then per tensor: name (u16 length + UTF-8),
//!   dtype tag u8 (0 f32, 1 i8, 2 u8, 3 i32), rank u8, dims u32 × rank,
//!   payload of `numel` little-endian values.
//! - `QPRM`: u32 count, then per entry: name, u32 k, then k × (scale f64,
//!   zero_point i32, qmin i32, qmax i32).
//! - `OBSV`: u32 count, then per observer: name, running_min f64,
//!   running_max f64, momentum f64, initialized u8.
//!
//! An FP32 checkpoint holds `CONF` + `TENS`; a QAT checkpoint adds `OBSV`;
//! an INT8 checkpoint holds `CONF` + `TENS` (i8 weights, i32 biases, f32
//! norm affines) + `QPRM` (per-channel weight scales and activation
//! parameters). Tables and entries are written in a fixed order, so
//! identical content always serializes to identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{init_network, ModelConfig, Network};
use crate::quant::graph::{ConvData, Int8Graph};
use crate::quant::observer::Observer;
use crate::quant::params::{IntData, IntTensor, QuantParams};
use crate::quant::qat::{attach_fakequant, QatMode, QatNetwork, QatPlan};
use crate::tensor::Shape;

pub const MAGIC: &[u8; 8] = b"QATIECKP";
pub const VERSION: u32 = 1;

const TAG_CONF: [u8; 4] = *b"CONF";
const TAG_TENS: [u8; 4] = *b"TENS";
const TAG_QPRM: [u8; 4] = *b"QPRM";
const TAG_OBSV: [u8; 4] = *b"OBSV";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated checkpoint while reading {0}")]
    Truncated(String),
    #[error("unknown dtype tag {tag} for tensor {name}")]
    UnknownDtype { tag: u8, name: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn malformed(e: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Malformed(e.to_string())
}

/// The stored model variants. `meta` is a free-form config echo (e.g. the
/// training configuration) that is round-tripped untouched.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Fp32 {
        net: Network<f32>,
        meta: serde_json::Value,
    },
    Qat {
        net: QatNetwork<f32>,
        meta: serde_json::Value,
    },
    Int8 {
        graph: Int8Graph,
        meta: serde_json::Value,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Fp32,
    Qat,
    Int8,
}

#[derive(Serialize, Deserialize)]
struct QatEcho {
    plan: QatPlan,
    mode: QatMode,
    refine: i32,
}

#[derive(Serialize, Deserialize)]
struct ConfigEcho {
    kind: CheckpointKind,
    model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qat: Option<QatEcho>,
    meta: serde_json::Value,
}

impl Checkpoint {
    pub fn kind(&self) -> CheckpointKind {
        match self {
            Checkpoint::Fp32 { .. } => CheckpointKind::Fp32,
            Checkpoint::Qat { .. } => CheckpointKind::Qat,
            Checkpoint::Int8 { .. } => CheckpointKind::Int8,
        }
    }

    pub fn model_config(&self) -> &ModelConfig {
        match self {
            Checkpoint::Fp32 { net, .. } => net.config(),
            Checkpoint::Qat { net, .. } => net.net.config(),
            Checkpoint::Int8 { graph, .. } => &graph.config,
        }
    }

    pub fn meta(&self) -> &serde_json::Value {
        match self {
            Checkpoint::Fp32 { meta, .. } | Checkpoint::Qat { meta, .. } | Checkpoint::Int8 { meta, .. } => meta,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tables: Vec<([u8; 4], Vec<u8>)> = Vec::new();
        let echo = ConfigEcho {
            kind: self.kind(),
            model: self.model_config().clone(),
            qat: match self {
                Checkpoint::Qat { net, .. } => Some(QatEcho {
                    plan: net.state.plan.clone(),
                    mode: net.mode(),
                    refine: net.state.refine,
                }),
                _ => None,
            },
            meta: self.meta().clone(),
        };
        let conf = serde_json::to_vec_pretty(&echo).expect("config echo is plain data");
        tables.push((TAG_CONF, conf));
        match self {
            Checkpoint::Fp32 { net, .. } => tables.push((TAG_TENS, float_params(net))),
            Checkpoint::Qat { net, .. } => {
                tables.push((TAG_TENS, float_params(&net.net)));
                let mut w = Writer::default();
                w.u32(net.state.observers.len() as u32);
                for (name, o) in &net.state.observers {
                    w.name(name);
                    w.f64(o.running_min);
                    w.f64(o.running_max);
                    w.f64(o.momentum);
                    w.bytes(&[o.initialized as u8]);
                }
                tables.push((TAG_OBSV, w.0));
            }
            Checkpoint::Int8 { graph, .. } => {
                let convs = graph.conv_data();
                let norms = graph.norm_data();
                let mut w = Writer::default();
                w.u32((2 * convs.len() + 2 * norms.len()) as u32);
                for (name, c) in &convs {
                    w.tensor_int(&format!("{name}.weight"), c.weight.shape, &c.weight.data);
                    w.tensor_int(
                        &format!("{name}.bias"),
                        Shape::new(c.bias.len(), 1, 1, 1),
                        &IntData::I32(c.bias.clone()),
                    );
                }
                for (name, (g, b)) in &norms {
                    w.tensor_f32(&format!("{name}.gamma"), &[g.len()], g);
                    w.tensor_f32(&format!("{name}.beta"), &[b.len()], b);
                }
                tables.push((TAG_TENS, w.0));

                let mut q = Writer::default();
                q.u32((convs.len() + graph.act_qparams.len()) as u32);
                for (name, c) in &convs {
                    q.qparams(&format!("{name}.weight"), &c.weight.qparams);
                }
                for (name, qp) in &graph.act_qparams {
                    q.qparams(name, std::slice::from_ref(qp));
                }
                tables.push((TAG_QPRM, q.0));
            }
        }
        let mut out = Writer::default();
        out.bytes(MAGIC);
        out.u32(VERSION);
        out.u32(tables.len() as u32);
        for (tag, payload) in tables {
            out.bytes(&tag);
            out.u64(payload.len() as u64);
            out.bytes(&payload);
        }
        out.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        r.take(MAGIC.len(), "magic")?;
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let count = r.u32("table count")?;
        let mut tables = BTreeMap::new();
        for _ in 0..count {
            let tag: [u8; 4] = r.take(4, "table tag")?.try_into().expect("4 bytes");
            let len = r.u64("table length")?;
            let len = usize::try_from(len).map_err(|_| CheckpointError::Truncated("table payload".into()))?;
            let payload = r.take(len, &format!("table {}", String::from_utf8_lossy(&tag)))?;
            if tables.insert(tag, payload).is_some() {
                return Err(malformed(format!("duplicate table {}", String::from_utf8_lossy(&tag))));
            }
        }
        if !r.is_empty() {
            return Err(malformed("trailing bytes after the last table"));
        }
        let table = |tag: [u8; 4]| {
            tables
                .get(&tag)
                .copied()
                .ok_or_else(|| malformed(format!("missing table {}", String::from_utf8_lossy(&tag))))
        };
        let echo: ConfigEcho = serde_json::from_slice(table(TAG_CONF)?).map_err(malformed)?;
        echo.model.validate().map_err(malformed)?;
        let tensors = read_tensors(table(TAG_TENS)?)?;
        match echo.kind {
            CheckpointKind::Fp32 => Ok(Checkpoint::Fp32 {
                net: network_from(&echo.model, tensors)?,
                meta: echo.meta,
            }),
            CheckpointKind::Qat => {
                let q = echo.qat.ok_or_else(|| malformed("QAT checkpoint without qat section"))?;
                let net = network_from(&echo.model, tensors)?;
                let mut net = attach_fakequant(net, q.plan).map_err(malformed)?;
                net.set_mode(q.mode);
                net.state.refine = q.refine;
                let mut r = Reader::new(table(TAG_OBSV)?);
                let n = r.u32("observer count")?;
                for _ in 0..n {
                    let name = r.name()?;
                    let o = Observer {
                        running_min: r.f64("observer")?,
                        running_max: r.f64("observer")?,
                        momentum: r.f64("observer")?,
                        initialized: r.take(1, "observer")?[0] != 0,
                    };
                    match net.state.observers.get_mut(&name) {
                        Some(slot) => *slot = o,
                        None => return Err(malformed(format!("observer for unknown point {name}"))),
                    }
                }
                r.finish("observer table")?;
                Ok(Checkpoint::Qat { net, meta: echo.meta })
            }
            CheckpointKind::Int8 => {
                let mut qp = read_qparams(table(TAG_QPRM)?)?;
                let mut tensors = tensors;
                let mut convs = BTreeMap::new();
                let mut norms = BTreeMap::new();
                let names: Vec<String> = tensors.keys().cloned().collect();
                for name in names {
                    if let Some(layer) = name.strip_suffix(".weight") {
                        let t = tensors.remove(&name).expect("listed");
                        let bias = match tensors.remove(&format!("{layer}.bias")) {
                            Some(Stored::Int(_, IntData::I32(b))) => b,
                            _ => return Err(malformed(format!("missing i32 bias for {layer}"))),
                        };
                        let qps = qp
                            .remove(&name)
                            .ok_or_else(|| malformed(format!("missing qparams for {name}")))?;
                        let Stored::Int(shape, data) = t else {
                            return Err(malformed(format!("{name} must be an integer tensor")));
                        };
                        let weight = IntTensor::new(shape, data, qps).map_err(malformed)?;
                        convs.insert(layer.to_string(), ConvData { weight, bias });
                    } else if let Some(layer) = name.strip_suffix(".gamma") {
                        let g = tensors.remove(&name).expect("listed");
                        let b = tensors.remove(&format!("{layer}.beta"));
                        match (g, b) {
                            (Stored::F32(_, g), Some(Stored::F32(_, b))) => {
                                norms.insert(layer.to_string(), (g, b));
                            }
                            _ => return Err(malformed(format!("bad norm affine for {layer}"))),
                        }
                    }
                }
                if let Some(extra) = tensors.keys().next() {
                    return Err(malformed(format!("unexpected tensor {extra}")));
                }
                let mut act = BTreeMap::new();
                for (name, v) in qp {
                    let [one] = <[QuantParams; 1]>::try_from(v)
                        .map_err(|_| malformed(format!("activation {name} needs exactly one qparam")))?;
                    act.insert(name, one);
                }
                let graph = Int8Graph::assemble(&echo.model, act, &convs, &norms).map_err(malformed)?;
                Ok(Checkpoint::Int8 { graph, meta: echo.meta })
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ck.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

fn float_params(net: &Network<f32>) -> Vec<u8> {
    let mut w = Writer::default();
    w.u32(net.params.len() as u32);
    for p in net.params.iter() {
        let s = p.value.shape();
        w.tensor_f32(&p.name, &[s.n, s.c, s.h, s.w], p.value.data());
    }
    w.0
}

fn network_from(config: &ModelConfig, mut tensors: BTreeMap<String, Stored>) -> Result<Network<f32>> {
    let mut net = init_network::<f32>(config, 0).map_err(malformed)?;
    for p in net.params.iter_mut() {
        match tensors.remove(&p.name) {
            Some(Stored::F32(dims, data)) => {
                let s = p.value.shape();
                if dims != [s.n, s.c, s.h, s.w] {
                    return Err(malformed(format!("{}: stored dims {dims:?}, model expects {s:?}", p.name)));
                }
                p.value.data_mut().copy_from_slice(&data);
            }
            Some(_) => return Err(malformed(format!("{} must be f32", p.name))),
            None => return Err(malformed(format!("missing parameter {}", p.name))),
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(malformed(format!("unexpected tensor {extra}")));
    }
    Ok(net)
}

#[derive(Debug)]
enum Stored {
    F32(Vec<usize>, Vec<f32>),
    Int(Shape, IntData),
}

const DT_F32: u8 = 0;
const DT_I8: u8 = 1;
const DT_U8: u8 = 2;
const DT_I32: u8 = 3;

fn read_tensors(bytes: &[u8]) -> Result<BTreeMap<String, Stored>> {
    let mut r = Reader::new(bytes);
    let n = r.u32("tensor count")?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let name = r.name()?;
        let tag = r.take(1, &name)?[0];
        let rank = r.take(1, &name)?[0] as usize;
        let dims: Vec<usize> = (0..rank)
            .map(|_| r.u32(&name).map(|d| d as usize))
            .collect::<Result<_>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| malformed(format!("{name}: dims overflow")))?;
        let width = match tag {
            DT_F32 | DT_I32 => 4,
            DT_I8 | DT_U8 => 1,
            _ => return Err(CheckpointError::UnknownDtype { tag, name }),
        };
        let len = numel
            .checked_mul(width)
            .ok_or_else(|| malformed(format!("{name}: payload overflow")))?;
        let raw = r.take(len, &name)?;
        let four = |c: &[u8]| -> [u8; 4] { c.try_into().expect("chunk of 4") };
        let stored = match tag {
            DT_F32 => Stored::F32(dims, raw.chunks_exact(4).map(|c| f32::from_le_bytes(four(c))).collect()),
            _ => {
                let [n, c, h, w] = <[usize; 4]>::try_from(dims.as_slice())
                    .map_err(|_| malformed(format!("{name}: integer tensors are rank 4")))?;
                let data = match tag {
                    DT_I8 => IntData::I8(raw.iter().map(|&b| b as i8).collect()),
                    DT_U8 => IntData::U8(raw.to_vec()),
                    _ => IntData::I32(raw.chunks_exact(4).map(|c| i32::from_le_bytes(four(c))).collect()),
                };
                Stored::Int(Shape::new(n, c, h, w), data)
            }
        };
        if out.insert(name.clone(), stored).is_some() {
            return Err(malformed(format!("duplicate tensor {name}")));
        }
    }
    r.finish("tensor table")?;
    Ok(out)
}

fn read_qparams(bytes: &[u8]) -> Result<BTreeMap<String, Vec<QuantParams>>> {
    let mut r = Reader::new(bytes);
    let n = r.u32("qparam count")?;
    let mut out = BTreeMap::new();
    for _ in 0..n {
        let name = r.name()?;
        let k = r.u32(&name)?;
        let mut v = Vec::new();
        for _ in 0..k {
            let qp = QuantParams {
                scale: r.f64(&name)?,
                zero_point: r.i32(&name)?,
                qmin: r.i32(&name)?,
                qmax: r.i32(&name)?,
            };
            qp.validate().map_err(|e| malformed(format!("{name}: {e}")))?;
            v.push(qp);
        }
        out.insert(name, v);
    }
    r.finish("qparam table")?;
    Ok(out)
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.bytes(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }
    fn name(&mut self, s: &str) {
        let len = u16::try_from(s.len()).expect("tensor names are short");
        self.bytes(&len.to_le_bytes());
        self.bytes(s.as_bytes());
    }
    fn header(&mut self, name: &str, tag: u8, dims: &[usize]) {
        self.name(name);
        self.bytes(&[tag, dims.len() as u8]);
        for &d in dims {
            self.u32(d as u32);
        }
    }
    fn tensor_f32(&mut self, name: &str, dims: &[usize], data: &[f32]) {
        self.header(name, DT_F32, dims);
        for v in data {
            self.bytes(&v.to_le_bytes());
        }
    }
    fn tensor_int(&mut self, name: &str, s: Shape, data: &IntData) {
        let dims = [s.n, s.c, s.h, s.w];
        match data {
            IntData::I8(d) => {
                self.header(name, DT_I8, &dims);
                self.0.extend(d.iter().map(|&v| v as u8));
            }
            IntData::U8(d) => {
                self.header(name, DT_U8, &dims);
                self.bytes(d);
            }
            IntData::I32(d) => {
                self.header(name, DT_I32, &dims);
                for v in d {
                    self.i32(*v);
                }
            }
        }
    }
    fn qparams(&mut self, name: &str, qps: &[QuantParams]) {
        self.name(name);
        self.u32(qps.len() as u32);
        for q in qps {
            self.f64(q.scale);
            self.i32(q.zero_point);
            self.i32(q.qmin);
            self.i32(q.qmax);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
    fn finish(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(malformed(format!("trailing bytes in {what}")))
        }
    }
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("exact length"))
    }
    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
    fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array(what)?))
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }
    fn name(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.array("name length")?) as usize;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec()).map_err(|_| malformed("tensor name is not UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::convert_int8;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn calibrated(c: usize, seed: u64) -> QatNetwork<f32> {
        let net = init_network::<f32>(&ModelConfig::with_width(c), seed).unwrap();
        let mut q = attach_fakequant(net.clone(), QatPlan::full(&net.arch)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Shape::new(1, 3, 16, 16);
        let x = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random()).collect()).unwrap();
        q.calibrate(&x).unwrap();
        q.set_mode(QatMode::Frozen);
        q
    }

    fn meta() -> serde_json::Value {
        serde_json::json!({"lr": 2e-3, "note": "round trip", "tiny": 1.2345678901234567e-7})
    }

    fn assert_round_trip(ck: &Checkpoint) {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        ck.save(&a).unwrap();
        let back = Checkpoint::load(&a).unwrap();
        assert_eq!(&back, ck);
        back.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn fp32_round_trip_is_byte_identical() {
        let net = init_network::<f32>(&ModelConfig::with_width(3), 4).unwrap();
        assert_round_trip(&Checkpoint::Fp32 { net, meta: meta() });
    }

    #[test]
    fn qat_round_trip_is_byte_identical() {
        assert_round_trip(&Checkpoint::Qat {
            net: calibrated(2, 5),
            meta: meta(),
        });
    }

    #[test]
    fn int8_round_trip_is_byte_identical() {
        let graph = convert_int8(&calibrated(3, 6)).unwrap();
        assert_round_trip(&Checkpoint::Int8 { graph, meta: meta() });
    }

    #[test]
    fn header_diagnostics() {
        let net = init_network::<f32>(&ModelConfig::with_width(1), 1).unwrap();
        let bytes = Checkpoint::Fp32 {
            net,
            meta: serde_json::Value::Null,
        }
        .to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::BadMagic)));

        let mut ver = bytes.clone();
        ver[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&ver),
            Err(CheckpointError::Version { found: 7, expected: 1 })
        ));

        for cut in [10, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(CheckpointError::Truncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn tampered_dtype_is_rejected() {
        let net = init_network::<f32>(&ModelConfig::with_width(1), 2).unwrap();
        let first = net.params.iter().next().unwrap().name.clone();
        let mut bytes = Checkpoint::Fp32 {
            net,
            meta: serde_json::Value::Null,
        }
        .to_bytes();
        // the dtype tag follows the first tensor name in the TENS table
        let needle = first.as_bytes();
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap()
            + needle.len();
        bytes[at] = 9;
        match Checkpoint::from_bytes(&bytes) {
            Err(CheckpointError::UnknownDtype { tag: 9, name }) => assert_eq!(name, first),
            other => panic!("{other:?}"),
        }
    }
}
