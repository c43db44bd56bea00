//! Grid matching between minifloat and integer formats, and conversion-error
//! analysis for tensors already living on a minifloat grid.
//!
//! The matcher searches integer-grid scales of the form `v / k` (a minifloat
//! value over a nonzero grid point); any scale that aligns the most values
//! exactly must align at least one pair exactly, so the search space is
//! finite and contains an optimum. Exactness is decided in integer
//! arithmetic on dyadic rationals, never in floating point. The reported
//! `exact_fraction` is the share of the minifloat range beyond the last
//! lossy value: the large-magnitude region converts without error, only the
//! smallest magnitudes lose precision.

use std::collections::HashSet;

use thiserror::Error;

use crate::codec::{Code8, Format, FpFormat, IntFormat};
use crate::quantizer::{
    calibrate, error_stats, project, quantize_dequantize, ErrorStats, QuantError, QuantizerConfig,
};
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum ConvertError {
    #[error("element {index} = {value} is not on the given minifloat grid")]
    OffGrid { index: usize, value: f64 },
    #[error("conversion target must be an integer format")]
    NotIntFormat,
    #[error("minifloat scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Result of matching an integer grid against a minifloat value set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMatch {
    /// Integer-grid scale maximizing the number of exactly represented
    /// minifloat values (ties broken by smaller worst-case error, then
    /// smaller scale).
    pub int_scale: f64,
    /// Share of the minifloat range `[-max, max]` outside the lossy region.
    pub exact_fraction: f64,
    /// Number of the 255 minifloat values represented exactly.
    pub exact_count: usize,
    /// Worst error among values that do not convert exactly (0 when all do).
    pub max_conversion_err: f64,
    /// The lossy region `[lossy_lo, lossy_hi]`; empty (0, 0) when exact.
    pub lossy_lo: f64,
    pub lossy_hi: f64,
}

/// A positive dyadic rational `odd · 2^exp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Dyadic {
    odd: i64,
    exp: i32,
}

impl Dyadic {
    fn new(mantissa: i64, exp: i32) -> Self {
        debug_assert!(mantissa > 0);
        let tz = mantissa.trailing_zeros() as i32;
        Dyadic {
            odd: mantissa >> tz,
            exp: exp + tz,
        }
    }

    fn as_f64(self) -> f64 {
        self.odd as f64 * f64::powi(2.0, self.exp)
    }
}

/// Positive values of a minifloat format as exact dyadic rationals.
fn positive_dyadics(fmt: FpFormat) -> Vec<Dyadic> {
    let mb = fmt.mantissa_bits() as i32;
    let mut out = Vec::new();
    for bits in 1..=0x7fu8 {
        let p = (bits as u32) >> fmt.mantissa_bits();
        let m = (bits as u32) & ((1 << fmt.mantissa_bits()) - 1);
        let (k, e) = if p == 0 {
            (m as i64, 1 - fmt.bias() - mb)
        } else {
            (
                ((1u32 << fmt.mantissa_bits()) + m) as i64,
                p as i32 - fmt.bias() - mb,
            )
        };
        out.push(Dyadic::new(k, e));
    }
    out
}

/// An integer-grid scale `odd_num · 2^exp / odd_den`, fully reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Scale {
    num: i64,
    den: i64,
    exp: i32,
}

impl Scale {
    fn from_pair(value: Dyadic, k: i64) -> Self {
        let g = gcd(value.odd, k);
        let (num, mut den) = (value.odd / g, k / g);
        let tz = den.trailing_zeros() as i32;
        den >>= tz;
        Scale {
            num,
            den,
            exp: value.exp - tz,
        }
    }

    fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64 * f64::powi(2.0, self.exp)
    }

    /// The exact integer grid index of `v`, if `v / scale` is an integer
    /// with magnitude at most `top`.
    fn exact_index(self, v: Dyadic, top: i64) -> Option<i64> {
        // v / s = (v.odd · den / num) · 2^(v.exp − exp)
        let num = v.odd.checked_mul(self.den)?;
        if num % self.num != 0 {
            return None;
        }
        let q = num / self.num;
        let shift = v.exp - self.exp;
        if shift >= 0 {
            if shift >= 63 || (q << shift) >> shift != q {
                return None;
            }
            let idx = q << shift;
            (idx <= top).then_some(idx)
        } else {
            let s = (-shift) as u32;
            if s >= 63 || q & ((1i64 << s) - 1) != 0 {
                return None;
            }
            let idx = q >> s;
            (idx <= top).then_some(idx)
        }
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Error of the nearest scaled integer grid point to `v` (f64; exactness is
/// never decided here).
fn nearest_err(v: f64, scale: f64, top: i64) -> f64 {
    let r = (v / scale).clamp(-(top as f64), top as f64);
    let lo = r.floor().clamp(-(top as f64), top as f64);
    let hi = r.ceil().clamp(-(top as f64), top as f64);
    (v - lo * scale).abs().min((v - hi * scale).abs())
}

/// Find the integer-grid scale that exactly represents as many minifloat
/// values as possible, and describe the residual lossy region.
pub fn match_grid(fp: FpFormat, int: IntFormat) -> GridMatch {
    let positives = positive_dyadics(fp);
    let top = int.max_value() as i64;

    let mut candidates: HashSet<Scale> = HashSet::new();
    for &v in &positives {
        for k in 1..=top {
            candidates.insert(Scale::from_pair(v, k));
        }
    }
    let mut ordered: Vec<Scale> = candidates.into_iter().collect();
    ordered.sort_by(|a, b| a.as_f64().partial_cmp(&b.as_f64()).unwrap());

    let mut best: Option<(usize, f64, Scale, f64)> = None; // (count, worst, scale, lossy)
    for s in ordered {
        let sf = s.as_f64();
        let mut count = 0usize;
        let mut worst = 0.0f64;
        let mut lossy = 0.0f64;
        for &v in &positives {
            if s.exact_index(v, top).is_some() {
                count += 1;
            } else {
                let vf = v.as_f64();
                worst = worst.max(nearest_err(vf, sf, top));
                lossy = lossy.max(vf);
            }
        }
        let better = match &best {
            None => true,
            Some((bc, bw, _, _)) => count > *bc || (count == *bc && worst < *bw),
        };
        if better {
            best = Some((count, worst, s, lossy));
        }
    }

    let (pos_count, worst, scale, lossy) = best.expect("candidate set is never empty");
    let vmax = fp.max_value();
    GridMatch {
        int_scale: scale.as_f64(),
        // zero and both signs of each exact positive convert exactly
        exact_count: 2 * pos_count + 1,
        exact_fraction: 1.0 - lossy / vmax,
        max_conversion_err: worst,
        lossy_lo: -lossy,
        lossy_hi: lossy,
    }
}

/// Requantize a tensor that already lies on a scaled minifloat grid onto an
/// integer grid, and report the conversion error.
///
/// If `int_cfg` carries scales they are used as-is (e.g. a matched scale
/// from [`match_grid`]); otherwise the integer grid is calibrated on the
/// input with the config's range method. Inputs farther from the minifloat
/// grid than a small tolerance are rejected.
pub fn convert_tensor(
    t: &Tensor,
    fp: FpFormat,
    fp_scale: f64,
    int_cfg: &QuantizerConfig,
) -> Result<(Tensor, ErrorStats), ConvertError> {
    if !(fp_scale.is_finite() && fp_scale > 0.0) {
        return Err(ConvertError::BadScale(fp_scale));
    }
    if !matches!(int_cfg.format, Format::Int(_)) {
        return Err(ConvertError::NotIntFormat);
    }
    let tol = fp_scale * fp.max_value() * 1e-6;
    for (i, &x) in t.data().iter().enumerate() {
        let x = x as f64;
        let on_grid = project(Format::Fp(fp), fp_scale, x);
        if (x - on_grid).abs() > tol {
            return Err(ConvertError::OffGrid { index: i, value: x });
        }
    }
    let cfg = if int_cfg.is_calibrated() {
        int_cfg.clone()
    } else {
        calibrate(t, int_cfg)?
    };
    let out = quantize_dequantize(t, &cfg)?;
    let stats = error_stats(t, &out)?;
    Ok((out, stats))
}

/// Convenience: all 255 values of a format together with their code words,
/// as (code, value) rows sorted by value. Used by value-table reports.
pub fn fp_value_rows(fmt: FpFormat) -> Vec<(Code8, f64)> {
    fmt.value_table().into_iter().map(|(v, c)| (c, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::RangeMethod;

    #[test]
    fn e4m3_matches_int8_on_the_even_grid() {
        let m = match_grid(FpFormat::E4, IntFormat::INT8);
        assert_eq!(m.int_scale, 2.0);
        assert_eq!(m.exact_count, 79);
        assert_eq!(m.exact_fraction, 1.0 - 15.0 / 240.0); // 0.9375
        assert_eq!(m.max_conversion_err, 1.0);
        assert_eq!((m.lossy_lo, m.lossy_hi), (-15.0, 15.0));
    }

    #[test]
    fn uniform_minifloats_match_int8_exactly() {
        for e in [0u32, 1] {
            let m = match_grid(FpFormat::new(e).unwrap(), IntFormat::INT8);
            assert_eq!(m.exact_fraction, 1.0, "e{e}");
            assert_eq!(m.exact_count, 255);
            assert_eq!(m.max_conversion_err, 0.0);
            assert_eq!((m.lossy_lo, m.lossy_hi), (0.0, 0.0));
        }
    }

    #[test]
    fn e5m2_grid_match_golden_values() {
        let m = match_grid(FpFormat::E5, IntFormat::INT8);
        assert_eq!(m.int_scale, 512.0);
        assert_eq!(m.exact_count, 47);
        assert_eq!(m.exact_fraction, 1.0 - 1792.0 / 57344.0); // 0.96875
        assert_eq!(m.max_conversion_err, 256.0);
    }

    /// Independent recount at the returned scale: plain f64 nearest-multiple
    /// checks over every (value, grid point) pair.
    #[test]
    fn exact_count_agrees_with_brute_force_oracle() {
        for fp in [FpFormat::E4, FpFormat::E5, FpFormat::E2] {
            let m = match_grid(fp, IntFormat::INT8);
            let top = IntFormat::INT8.max_value() as f64;
            let mut count = 0usize;
            let mut lossy = 0.0f64;
            for v in fp.values() {
                let k = (v / m.int_scale).round();
                if k.abs() <= top && k * m.int_scale == v {
                    count += 1;
                } else {
                    lossy = lossy.max(v.abs());
                }
            }
            assert_eq!(count, m.exact_count, "{fp}");
            assert_eq!(1.0 - lossy / fp.max_value(), m.exact_fraction, "{fp}");
        }
    }

    #[test]
    fn matched_scale_converts_the_top_region_exactly() {
        let fp_scale = 0.125f64;
        let m = match_grid(FpFormat::E4, IntFormat::INT8);
        // all representable magnitudes above the lossy region
        let vals: Vec<f32> = FpFormat::E4
            .values()
            .iter()
            .filter(|v| v.abs() > m.lossy_hi)
            .map(|v| (v * fp_scale) as f32)
            .collect();
        let t = Tensor::from_vec(vals).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax)
            .with_scales(vec![m.int_scale * fp_scale])
            .unwrap();
        let (_, stats) = convert_tensor(&t, FpFormat::E4, fp_scale, &cfg).unwrap();
        assert_eq!(stats.mse, 0.0);
        assert_eq!(stats.max_abs_err, 0.0);
    }

    #[test]
    fn zero_tensor_converts_exactly() {
        let t = Tensor::from_vec(vec![0.0; 8]).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
        let (_, stats) = convert_tensor(&t, FpFormat::E4, 1.0, &cfg).unwrap();
        assert_eq!(stats.mse, 0.0);
    }

    #[test]
    fn off_grid_input_is_rejected() {
        let t = Tensor::from_vec(vec![1.0, 2.0, 2.618]).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
        let err = convert_tensor(&t, FpFormat::E4, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, ConvertError::OffGrid { index: 2, .. }));
    }

    #[test]
    fn non_integer_target_is_rejected() {
        let t = Tensor::from_vec(vec![1.0]).unwrap();
        let cfg = QuantizerConfig::per_tensor(FpFormat::E2.into(), RangeMethod::MinMax);
        assert_eq!(
            convert_tensor(&t, FpFormat::E4, 1.0, &cfg).unwrap_err(),
            ConvertError::NotIntFormat
        );
    }

    #[test]
    fn mse_range_estimation_beats_minmax_on_fp8_tensors() {
        // quantize a seeded sample onto the e4 grid, then convert to int8
        use crate::distmse::Dist;
        for seed in 0..5u64 {
            let sample = Dist::Gaussian.sample(4096, seed);
            let fp_cfg = calibrate(
                &Tensor::from_vec(sample.iter().map(|&x| x as f32).collect()).unwrap(),
                &QuantizerConfig::per_tensor(FpFormat::E4.into(), RangeMethod::MinMax),
            )
            .unwrap();
            let t = quantize_dequantize(
                &Tensor::from_vec(sample.iter().map(|&x| x as f32).collect()).unwrap(),
                &fp_cfg,
            )
            .unwrap();
            let fp_scale = fp_cfg.scales().unwrap()[0];
            let mm = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
            let ms = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MseSearch);
            let (_, e_mm) = convert_tensor(&t, FpFormat::E4, fp_scale, &mm).unwrap();
            let (_, e_ms) = convert_tensor(&t, FpFormat::E4, fp_scale, &ms).unwrap();
            assert!(e_ms.mse <= e_mm.mse, "seed {seed}");
        }
    }
}
