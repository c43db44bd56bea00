//! Comparison toolkit for 8-bit number formats.
//!
//! The crate brings together everything needed to compare minifloat and
//! integer grids at the tensor level:
//!
//! * [`codec`] — bit-exact encode/decode for FP8-E\[X\] and sign-magnitude
//!   integer formats, including subnormals and the reserved special value;
//! * [`quantizer`] — quantize–dequantize simulation with per-tensor or
//!   per-channel scales and min-max or MSE-search range estimation;
//! * [`distmse`] — expected quantization error over analytic distributions,
//!   scored as bits of accuracy, with a Lloyd-Max optimal baseline;
//! * [`gatecost`] — gate-count area/power proxy for multiply-accumulate
//!   units across formats and accumulator types;
//! * [`convert`] — minifloat-to-integer grid matching and tensor conversion
//!   error analysis.
//!
//! ```
//! use quant8_core::{calibrate, error_stats, quantize_dequantize};
//! use quant8_core::{QuantizerConfig, RangeMethod, Tensor};
//!
//! let weights = Tensor::from_vec(vec![0.02, -1.3, 0.7, 2.4, -0.05])?;
//! let cfg = QuantizerConfig::per_tensor("e4".parse()?, RangeMethod::MseSearch);
//! let cfg = calibrate(&weights, &cfg)?;
//! let restored = quantize_dequantize(&weights, &cfg)?;
//! let stats = error_stats(&weights, &restored)?;
//! assert!(stats.sqnr_db > 30.0);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod codec;
pub mod convert;
pub mod distmse;
pub mod gatecost;
pub mod quantizer;
pub mod tensor;

pub use codec::{Code8, CodecError, Format, FpFormat, IntFormat};
pub use convert::{match_grid, GridMatch};
pub use distmse::{BitsOfAccuracy, Codebook, Dist, MseRow};
pub use gatecost::{Accumulator, GateReport, MacSpec};
pub use quantizer::{
    best_format_report, calibrate, error_stats, quantize_dequantize, ErrorStats, Granularity,
    QuantizerConfig, RangeMethod,
};
pub use tensor::{Tensor, TensorError};
