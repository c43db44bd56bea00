//! Bit-exact codecs for 8-bit minifloat and sign-magnitude integer grids.
//!
//! A minifloat word is packed sign–exponent–mantissa, most significant bit
//! first. Stored exponent 0 marks a subnormal: the implicit mantissa bit is 0
//! and the effective exponent is `1 - bias`, which makes the region around
//! zero a uniform grid. The single bit pattern `1000_0000` (negative zero) is
//! reserved and decodes to NaN; encoding never produces it, so every format
//! has exactly 255 representable values. Overflow clips to the largest
//! magnitude instead of producing an infinity.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// The one reserved bit pattern (negative zero).
pub const RESERVED_CODE: u8 = 0x80;

/// Errors from format construction and encoding.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("exponent bits must be in 0..=7, got {0}")]
    ExponentBits(u32),
    #[error("integer width must be 4, 8 or 16, got {0}")]
    IntWidth(u32),
    #[error("cannot encode non-finite value")]
    NonFinite,
    #[error("unknown format '{0}' (expected e0..e7, int4, int8 or int16)")]
    UnknownFormat(String),
}

/// An 8-bit code word for a minifloat format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Code8(u8);

impl Code8 {
    /// The reserved special-value code.
    pub const RESERVED: Code8 = Code8(RESERVED_CODE);

    pub const fn from_bits(bits: u8) -> Self {
        Code8(bits)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub const fn is_reserved(self) -> bool {
        self.0 == RESERVED_CODE
    }
}

impl fmt::Display for Code8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:02x}", self.0)
    }
}

/// An 8-bit floating-point format: 1 sign bit, `E` exponent bits and `7 - E`
/// mantissa bits.
///
/// The default exponent bias is `2^(E-1)` for `E >= 1` and 0 for `E = 0`; a
/// different bias may be set to shift the representable range by powers of
/// two. Formats with 0 or 1 exponent bits degenerate to uniform grids and are
/// affinely identical to the 8-bit sign-magnitude integer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpFormat {
    exponent_bits: u32,
    bias: i32,
}

impl FpFormat {
    pub const E2: FpFormat = FpFormat {
        exponent_bits: 2,
        bias: 2,
    };
    pub const E3: FpFormat = FpFormat {
        exponent_bits: 3,
        bias: 4,
    };
    pub const E4: FpFormat = FpFormat {
        exponent_bits: 4,
        bias: 8,
    };
    pub const E5: FpFormat = FpFormat {
        exponent_bits: 5,
        bias: 16,
    };

    /// Format with the default bias `2^(E-1)` (0 for `E = 0`).
    pub fn new(exponent_bits: u32) -> Result<Self, CodecError> {
        if exponent_bits > 7 {
            return Err(CodecError::ExponentBits(exponent_bits));
        }
        let bias = if exponent_bits == 0 {
            0
        } else {
            1 << (exponent_bits - 1)
        };
        Ok(FpFormat {
            exponent_bits,
            bias,
        })
    }

    /// Format with an explicit exponent bias override.
    pub fn with_bias(exponent_bits: u32, bias: i32) -> Result<Self, CodecError> {
        if exponent_bits > 7 {
            return Err(CodecError::ExponentBits(exponent_bits));
        }
        Ok(FpFormat {
            exponent_bits,
            bias,
        })
    }

    pub const fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub const fn mantissa_bits(&self) -> u32 {
        7 - self.exponent_bits
    }

    pub const fn bias(&self) -> i32 {
        self.bias
    }

    /// Largest stored exponent (0 when there are no exponent bits).
    fn max_stored_exponent(&self) -> u32 {
        (1u32 << self.exponent_bits) - 1
    }

    /// Largest representable magnitude.
    pub fn max_value(&self) -> f64 {
        let m_max = (1u32 << self.mantissa_bits()) - 1;
        self.magnitude(self.max_stored_exponent(), m_max)
    }

    /// Magnitude of the (stored exponent, mantissa) pair.
    fn magnitude(&self, p: u32, m: u32) -> f64 {
        let mb = self.mantissa_bits();
        if p == 0 {
            // subnormal: implicit bit 0, effective exponent 1 - bias
            m as f64 * exp2i(1 - self.bias - mb as i32)
        } else {
            ((1u32 << mb) + m) as f64 * exp2i(p as i32 - self.bias - mb as i32)
        }
    }

    /// Decode a code word. The reserved pattern decodes to NaN; everything
    /// else is finite. Total over all 256 codes.
    pub fn decode(&self, code: Code8) -> f64 {
        if code.is_reserved() {
            return f64::NAN;
        }
        let bits = code.bits();
        let mb = self.mantissa_bits();
        let p = (bits as u32 >> mb) & self.max_stored_exponent();
        let m = bits as u32 & ((1 << mb) - 1);
        let mag = self.magnitude(p, m);
        if bits & 0x80 != 0 {
            -mag
        } else {
            mag
        }
    }

    /// Encode the nearest representable value, rounding ties to the even code
    /// word. Values beyond the range clip to the maximum magnitude; the
    /// reserved pattern is never produced.
    pub fn encode(&self, x: f64) -> Result<Code8, CodecError> {
        if !x.is_finite() {
            return Err(CodecError::NonFinite);
        }
        let neg = x < 0.0;
        let a = x.abs();
        if a == 0.0 {
            return Ok(Code8(0));
        }
        let mb = self.mantissa_bits();
        let m_width = 1u32 << mb;
        let (p, m) = if a >= self.max_value() {
            (self.max_stored_exponent(), m_width - 1)
        } else {
            let sub_step = exp2i(1 - self.bias - mb as i32);
            let first_normal = exp2i(1 - self.bias);
            if self.exponent_bits == 0 || a < first_normal {
                // uniform region around zero; division by a power of two is
                // exact, so half-way cases are detected exactly
                let m = round_ties_even(a / sub_step) as u32;
                if m >= m_width {
                    (1, 0)
                } else {
                    (0, m)
                }
            } else {
                let e = floor_log2(a).max(1 - self.bias);
                let frac = a / exp2i(e) - 1.0;
                let m = round_ties_even(frac * m_width as f64) as u32;
                if m >= m_width {
                    ((e + 1 + self.bias) as u32, 0)
                } else {
                    ((e + self.bias) as u32, m)
                }
            }
        };
        let bits = ((p << mb) | m) as u8;
        if bits == 0 {
            // a magnitude that rounds to zero keeps the positive-zero code so
            // the reserved pattern cannot appear
            return Ok(Code8(0));
        }
        Ok(Code8(if neg { bits | 0x80 } else { bits }))
    }

    /// All 255 representable values, strictly increasing.
    pub fn values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = (0..=255u8)
            .filter(|&b| b != RESERVED_CODE)
            .map(|b| self.decode(Code8(b)))
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    /// Representable values paired with their code words, sorted by value.
    pub fn value_table(&self) -> Vec<(f64, Code8)> {
        let mut out: Vec<(f64, Code8)> = (0..=255u8)
            .filter(|&b| b != RESERVED_CODE)
            .map(|b| (self.decode(Code8(b)), Code8(b)))
            .collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }
}

impl fmt::Display for FpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let default_bias = if self.exponent_bits == 0 {
            0
        } else {
            1 << (self.exponent_bits - 1)
        };
        if self.bias == default_bias {
            write!(f, "e{}", self.exponent_bits)
        } else {
            write!(f, "e{}b{}", self.exponent_bits, self.bias)
        }
    }
}

/// A symmetric sign-magnitude integer grid `-(2^(b-1)-1) ..= 2^(b-1)-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntFormat {
    bits: u32,
}

impl IntFormat {
    pub const INT4: IntFormat = IntFormat { bits: 4 };
    pub const INT8: IntFormat = IntFormat { bits: 8 };
    pub const INT16: IntFormat = IntFormat { bits: 16 };

    pub fn new(bits: u32) -> Result<Self, CodecError> {
        match bits {
            4 | 8 | 16 => Ok(IntFormat { bits }),
            other => Err(CodecError::IntWidth(other)),
        }
    }

    pub const fn bits(&self) -> u32 {
        self.bits
    }

    /// Largest representable magnitude.
    pub const fn max_value(&self) -> i32 {
        (1 << (self.bits - 1)) - 1
    }

    /// Number of grid points, `2^b - 1`.
    pub const fn level_count(&self) -> usize {
        (1 << self.bits) - 1
    }

    /// Nearest grid point with round-half-to-even; out-of-range clips.
    pub fn encode(&self, x: f64) -> Result<i32, CodecError> {
        if !x.is_finite() {
            return Err(CodecError::NonFinite);
        }
        let top = self.max_value() as f64;
        Ok(round_ties_even(x.clamp(-top, top)) as i32)
    }

    /// The whole grid as reals, strictly increasing.
    pub fn values(&self) -> Vec<f64> {
        let top = self.max_value();
        (-top..=top).map(|k| k as f64).collect()
    }
}

impl fmt::Display for IntFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "int{}", self.bits)
    }
}

/// Either kind of 8/16/4-bit grid, as used by quantizer configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Format {
    Fp(FpFormat),
    Int(IntFormat),
}

impl Format {
    pub fn max_value(&self) -> f64 {
        match self {
            Format::Fp(fp) => fp.max_value(),
            Format::Int(int) => int.max_value() as f64,
        }
    }

    /// All representable values, strictly increasing.
    pub fn values(&self) -> Vec<f64> {
        match self {
            Format::Fp(fp) => fp.values(),
            Format::Int(int) => int.values(),
        }
    }

    /// Number of representable values (255 for every 8-bit format).
    pub fn level_count(&self) -> usize {
        match self {
            Format::Fp(_) => 255,
            Format::Int(int) => int.level_count(),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Format::Fp(fp) => fp.fmt(f),
            Format::Int(int) => int.fmt(f),
        }
    }
}

impl FromStr for Format {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("int") {
            let bits: u32 = rest
                .parse()
                .map_err(|_| CodecError::UnknownFormat(s.clone()))?;
            return Ok(Format::Int(IntFormat::new(bits)?));
        }
        if let Some(rest) = s.strip_prefix('e') {
            let e: u32 = rest
                .parse()
                .map_err(|_| CodecError::UnknownFormat(s.clone()))?;
            return Ok(Format::Fp(FpFormat::new(e)?));
        }
        Err(CodecError::UnknownFormat(s))
    }
}

impl From<FpFormat> for Format {
    fn from(f: FpFormat) -> Self {
        Format::Fp(f)
    }
}

impl From<IntFormat> for Format {
    fn from(f: IntFormat) -> Self {
        Format::Int(f)
    }
}

/// 2^e as f64 for small integer e.
fn exp2i(e: i32) -> f64 {
    f64::powi(2.0, e)
}

fn round_ties_even(x: f64) -> f64 {
    x.round_ties_even()
}

/// Floor of log2 for finite positive x, exact via the f64 exponent field.
fn floor_log2(a: f64) -> i32 {
    debug_assert!(a > 0.0 && a.is_finite());
    let bits = a.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // f64 subnormal input; far below any representable grid point
        return -1075;
    }
    raw - 1023
}
