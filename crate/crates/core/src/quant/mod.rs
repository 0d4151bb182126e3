//! Quantization: parameters and observers, fake quantization with a
//! straight-through estimator, QAT instrumentation, and the integer-only
//! INT8 engine with its conversion path.

pub mod engine;
pub mod fake_quant;
pub mod graph;
pub mod observer;
pub mod params;
pub mod qat;

pub use fake_quant::{fake_quant, fake_quant_forward, fake_quant_tensor};
pub use observer::Observer;
pub use params::{
    dequantize, qparams_from_minmax, quantize, weight_channel_qparams, AddRequant, IntData,
    IntTensor, QuantParams, RequantMultiplier,
};
pub use qat::{attach_fakequant, QatMode, QatNetwork, QatPlan, QuantState};
pub use graph::{convert_int8, ConvData, Int8Graph};
