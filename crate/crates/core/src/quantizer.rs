//! Quantize–dequantize simulation with flexible scaling.
//!
//! A quantizer is a format plus one positive scale per group (the whole
//! tensor, or one slice per channel). Calibration picks the scales either by
//! min-max (the largest magnitude maps to the top of the grid) or by a
//! mean-squared-error search over 111 candidate scales between 10% and 120%
//! of the min-max scale. The search evaluates exact nearest-value MSE on a
//! sorted copy of the data with prefix sums, so each candidate costs
//! `O(levels · log n)` rather than a full pass.

use std::cmp::Ordering;

use thiserror::Error;

use crate::codec::Format;
use crate::tensor::{Tensor, TensorError};

/// SQNR reported for an exact reconstruction, keeping reports finite.
pub const SQNR_CAP_DB: f64 = 200.0;

/// Candidate grid for the MSE scale search: `k/100 · s_minmax` for k in 10..=120.
const MSE_SEARCH_LO: u32 = 10;
const MSE_SEARCH_HI: u32 = 120;

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("tensor is empty")]
    EmptyTensor,
    #[error("config has no calibrated scales; run calibrate first")]
    Uncalibrated,
    #[error("expected {expected} scales for this tensor/granularity, got {got}")]
    ScaleCount { expected: usize, got: usize },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("tensors have different shapes: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Scaling granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    PerTensor,
    PerChannel { axis: usize },
}

/// How calibration chooses the scale of each group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeMethod {
    /// Largest magnitude maps to the largest representable value.
    MinMax,
    /// Scale minimizing quantization MSE over the candidate grid.
    MseSearch,
}

/// A format, a scaling granularity, a range-estimation method, and (after
/// calibration) one scale per group.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerConfig {
    pub format: Format,
    pub granularity: Granularity,
    pub range_method: RangeMethod,
    scales: Option<Vec<f64>>,
}

impl QuantizerConfig {
    pub fn new(format: Format, granularity: Granularity, range_method: RangeMethod) -> Self {
        QuantizerConfig {
            format,
            granularity,
            range_method,
            scales: None,
        }
    }

    pub fn per_tensor(format: Format, range_method: RangeMethod) -> Self {
        Self::new(format, Granularity::PerTensor, range_method)
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.scales.as_deref()
    }

    pub fn is_calibrated(&self) -> bool {
        self.scales.is_some()
    }

    /// Set scales directly, bypassing calibration (e.g. a matched conversion
    /// scale). Every scale must be positive and finite.
    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self, QuantError> {
        if let Some(&bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(QuantError::BadScale(bad));
        }
        self.scales = Some(scales);
        Ok(self)
    }
}

/// Elementwise error statistics between an original tensor and its quantized
/// reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mse: f64,
    pub rmse: f64,
    /// 10·log10(signal power / noise power), capped at [`SQNR_CAP_DB`].
    pub sqnr_db: f64,
    pub max_abs_err: f64,
    /// Fraction of elements whose magnitude exceeds the realized grid top.
    pub clipped_fraction: f64,
}

/// Sorted copy of a sample with prefix sums of x and x², for exact
/// nearest-value MSE evaluation against arbitrary grids.
pub(crate) struct SortedView {
    xs: Vec<f64>,
    pre1: Vec<f64>,
    pre2: Vec<f64>,
    abs_max: f64,
}

impl SortedView {
    pub(crate) fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let mut xs: Vec<f64> = values.into_iter().collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut pre1 = Vec::with_capacity(xs.len() + 1);
        let mut pre2 = Vec::with_capacity(xs.len() + 1);
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        pre1.push(0.0);
        pre2.push(0.0);
        for &x in &xs {
            s1 += x;
            s2 += x * x;
            pre1.push(s1);
            pre2.push(s2);
        }
        let abs_max = xs
            .first()
            .map(|lo| lo.abs().max(xs.last().unwrap().abs()))
            .unwrap_or(0.0);
        SortedView {
            xs,
            pre1,
            pre2,
            abs_max,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.xs.len()
    }

    pub(crate) fn abs_max(&self) -> f64 {
        self.abs_max
    }

    pub(crate) fn mean_abs(&self) -> f64 {
        if self.xs.is_empty() {
            return 0.0;
        }
        self.xs.iter().map(|x| x.abs()).sum::<f64>() / self.xs.len() as f64
    }

    pub(crate) fn sorted(&self) -> &[f64] {
        &self.xs
    }

    /// (count, sum x, sum x²) over the sorted slice [lo, hi).
    pub(crate) fn cell_sums(&self, lo: usize, hi: usize) -> (f64, f64, f64) {
        (
            (hi - lo) as f64,
            self.pre1[hi] - self.pre1[lo],
            self.pre2[hi] - self.pre2[lo],
        )
    }

    /// Sum of squared errors of nearest-value quantization onto `grid`
    /// (ascending); values beyond the ends clip to the extreme grid points.
    pub(crate) fn sse_on_grid(&self, grid: &[f64]) -> f64 {
        debug_assert!(grid.windows(2).all(|w| w[0] < w[1]));
        let n = self.xs.len();
        let mut total = 0.0;
        let mut lo = 0usize;
        for (i, &g) in grid.iter().enumerate() {
            let hi = if i + 1 < grid.len() {
                let thr = (g + grid[i + 1]) / 2.0;
                lo + self.xs[lo..].partition_point(|&x| x < thr)
            } else {
                n
            };
            let cnt = (hi - lo) as f64;
            let s1 = self.pre1[hi] - self.pre1[lo];
            let s2 = self.pre2[hi] - self.pre2[lo];
            total += s2 - 2.0 * g * s1 + g * g * cnt;
            lo = hi;
        }
        total
    }
}

/// Min-max scale for a group: the largest magnitude maps to the grid top.
/// All-zero groups calibrate to scale 1 so quantization is a no-op.
pub(crate) fn scale_minmax(abs_max: f64, format_top: f64) -> f64 {
    if abs_max > 0.0 {
        abs_max / format_top
    } else {
        1.0
    }
}

/// MSE-search scale: best of the candidate grid by exact sample MSE. The
/// min-max scale is candidate k = 100, so the search never does worse than
/// min-max on the calibration data. Returns (scale, sse).
pub(crate) fn scale_mse_search(
    view: &SortedView,
    canonical: &[f64],
    format_top: f64,
) -> (f64, f64) {
    let s_minmax = scale_minmax(view.abs_max(), format_top);
    let mut best: Option<(f64, f64)> = None;
    let mut grid = vec![0.0f64; canonical.len()];
    for k in MSE_SEARCH_LO..=MSE_SEARCH_HI {
        let s = s_minmax * k as f64 / 100.0;
        if !(s * format_top).is_finite() || (s * format_top) > f32::MAX as f64 {
            continue; // grid would not be storable as f32
        }
        for (g, &v) in grid.iter_mut().zip(canonical) {
            *g = v * s;
        }
        let sse = view.sse_on_grid(&grid);
        if best.is_none_or(|(_, b)| sse < b) {
            best = Some((s, sse));
        }
    }
    best.unwrap_or((s_minmax, 0.0))
}

fn group_views(t: &Tensor, granularity: Granularity) -> Result<Vec<SortedView>, QuantError> {
    match granularity {
        Granularity::PerTensor => Ok(vec![SortedView::new(t.data().iter().map(|&v| v as f64))]),
        Granularity::PerChannel { axis } => {
            let groups = t.channel_groups(axis)?;
            Ok(groups.into_iter().map(SortedView::new).collect())
        }
    }
}

/// Calibrate the scales of `cfg` on a tensor, returning a calibrated copy.
pub fn calibrate(t: &Tensor, cfg: &QuantizerConfig) -> Result<QuantizerConfig, QuantError> {
    if t.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    let canonical = cfg.format.values();
    let top = cfg.format.max_value();
    let views = group_views(t, cfg.granularity)?;
    let scales = views
        .iter()
        .map(|view| match cfg.range_method {
            RangeMethod::MinMax => scale_minmax(view.abs_max(), top),
            RangeMethod::MseSearch => {
                if view.abs_max() == 0.0 {
                    1.0
                } else {
                    scale_mse_search(view, &canonical, top).0
                }
            }
        })
        .collect();
    let mut out = cfg.clone();
    out.scales = Some(scales);
    Ok(out)
}

/// Project one value onto the scaled grid of `format`.
pub(crate) fn project(format: Format, scale: f64, x: f64) -> f64 {
    let xs = x / scale;
    match format {
        Format::Fp(fp) => {
            let code = fp.encode(xs).expect("finite by construction");
            scale * fp.decode(code)
        }
        Format::Int(int) => {
            let k = int.encode(xs).expect("finite by construction");
            scale * k as f64
        }
    }
}

/// Replace every element with its nearest scaled grid point. Requires a
/// calibrated config; shape and channel-axis metadata are preserved.
pub fn quantize_dequantize(t: &Tensor, cfg: &QuantizerConfig) -> Result<Tensor, QuantError> {
    let scales = cfg.scales.as_deref().ok_or(QuantError::Uncalibrated)?;
    let expected = match cfg.granularity {
        Granularity::PerTensor => 1,
        Granularity::PerChannel { axis } => {
            if axis >= t.shape().len() {
                return Err(QuantError::Tensor(TensorError::BadAxis {
                    axis,
                    rank: t.shape().len(),
                }));
            }
            t.shape()[axis]
        }
    };
    if scales.len() != expected {
        return Err(QuantError::ScaleCount {
            expected,
            got: scales.len(),
        });
    }
    let data = match cfg.granularity {
        Granularity::PerTensor => {
            let s = scales[0];
            t.data()
                .iter()
                .map(|&x| project(cfg.format, s, x as f64) as f32)
                .collect()
        }
        Granularity::PerChannel { axis } => t
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let s = scales[t.channel_of(i, axis)];
                project(cfg.format, s, x as f64) as f32
            })
            .collect(),
    };
    Ok(Tensor::from_parts(
        t.shape().to_vec(),
        data,
        t.channel_axis(),
    ))
}

/// Elementwise error statistics between an original and its reconstruction.
pub fn error_stats(original: &Tensor, quantized: &Tensor) -> Result<ErrorStats, QuantError> {
    if original.shape() != quantized.shape() {
        return Err(QuantError::ShapeMismatch(
            original.shape().to_vec(),
            quantized.shape().to_vec(),
        ));
    }
    if original.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    let n = original.len() as f64;
    let mut sse = 0.0f64;
    let mut signal = 0.0f64;
    let mut max_abs_err = 0.0f64;
    let mut grid_top = 0.0f64;
    for (&x, &q) in original.data().iter().zip(quantized.data()) {
        let (x, q) = (x as f64, q as f64);
        let e = x - q;
        sse += e * e;
        signal += x * x;
        max_abs_err = max_abs_err.max(e.abs());
        grid_top = grid_top.max(q.abs());
    }
    // an element counts as clipped when it lies beyond the largest magnitude
    // the quantizer actually produced (with headroom for f32 rounding)
    let clip_limit = grid_top * (1.0 + 1e-6);
    let clipped = original
        .data()
        .iter()
        .filter(|&&x| (x as f64).abs() > clip_limit)
        .count();
    let mse = sse / n;
    let sqnr_db = if sse == 0.0 {
        SQNR_CAP_DB
    } else if signal == 0.0 {
        -SQNR_CAP_DB
    } else {
        (10.0 * (signal / sse).log10()).min(SQNR_CAP_DB)
    };
    Ok(ErrorStats {
        mse,
        rmse: mse.sqrt(),
        sqnr_db,
        max_abs_err,
        clipped_fraction: clipped as f64 / n,
    })
}

/// Calibrate and evaluate every format on a tensor, ranked by ascending MSE.
/// All formats share the same granularity and range method.
pub fn best_format_report(
    t: &Tensor,
    formats: &[Format],
    granularity: Granularity,
    range_method: RangeMethod,
) -> Result<Vec<(Format, ErrorStats)>, QuantError> {
    let mut rows = Vec::with_capacity(formats.len());
    for &format in formats {
        let cfg = calibrate(t, &QuantizerConfig::new(format, granularity, range_method))?;
        let q = quantize_dequantize(t, &cfg)?;
        rows.push((format, error_stats(t, &q)?));
    }
    rows.sort_by(|a, b| a.1.mse.partial_cmp(&b.1.mse).unwrap_or(Ordering::Equal));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{FpFormat, IntFormat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) as f32
            })
            .collect()
    }

    #[test]
    fn minmax_scale_from_definition() {
        let t = Tensor::from_vec(vec![-2.0, 0.0, 2.0]).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
        let cal = calibrate(&t, &cfg).unwrap();
        assert_eq!(cal.scales().unwrap(), &[2.0 / 127.0]);
    }

    #[test]
    fn all_zero_group_calibrates_to_unit_scale() {
        let t = Tensor::from_vec(vec![0.0; 16]).unwrap();
        for method in [RangeMethod::MinMax, RangeMethod::MseSearch] {
            let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), method);
            let cal = calibrate(&t, &cfg).unwrap();
            assert_eq!(cal.scales().unwrap(), &[1.0]);
            let q = quantize_dequantize(&t, &cal).unwrap();
            assert_eq!(q.data(), t.data());
        }
    }

    #[test]
    fn empty_tensor_is_an_error() {
        let t = Tensor::from_vec(vec![]).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
        assert_eq!(calibrate(&t, &cfg), Err(QuantError::EmptyTensor));
    }

    #[test]
    fn uncalibrated_config_is_an_error() {
        let t = Tensor::from_vec(vec![1.0]).unwrap();
        let cfg = QuantizerConfig::per_tensor(IntFormat::INT8.into(), RangeMethod::MinMax);
        assert_eq!(quantize_dequantize(&t, &cfg), Err(QuantError::Uncalibrated));
    }

    #[test]
    fn mse_search_never_worse_than_minmax() {
        for seed in [1u64, 2, 3] {
            let t = Tensor::from_vec(gaussian(4096, seed)).unwrap();
            for format in [Format::Int(IntFormat::INT8), Format::Fp(FpFormat::E4)] {
                let mm = calibrate(
                    &t,
                    &QuantizerConfig::per_tensor(format, RangeMethod::MinMax),
                )
                .unwrap();
                let ms = calibrate(
                    &t,
                    &QuantizerConfig::per_tensor(format, RangeMethod::MseSearch),
                )
                .unwrap();
                let e_mm = error_stats(&t, &quantize_dequantize(&t, &mm).unwrap()).unwrap();
                let e_ms = error_stats(&t, &quantize_dequantize(&t, &ms).unwrap()).unwrap();
                assert!(e_ms.mse <= e_mm.mse, "seed {seed} {format}");
            }
        }
    }

    #[test]
    fn mse_search_clips_gaussian_tail_strictly() {
        // large seeded sample: the optimal INT8 clip is well inside min-max
        let t = Tensor::from_vec(gaussian(100_000, 9)).unwrap();
        let f = Format::Int(IntFormat::INT8);
        let mm = calibrate(&t, &QuantizerConfig::per_tensor(f, RangeMethod::MinMax)).unwrap();
        let ms = calibrate(&t, &QuantizerConfig::per_tensor(f, RangeMethod::MseSearch)).unwrap();
        assert!(ms.scales().unwrap()[0] < mm.scales().unwrap()[0]);
        let e_mm = error_stats(&t, &quantize_dequantize(&t, &mm).unwrap()).unwrap();
        let e_ms = error_stats(&t, &quantize_dequantize(&t, &ms).unwrap()).unwrap();
        assert!(e_ms.mse < e_mm.mse);
    }

    #[test]
    fn quantize_is_idempotent() {
        let t = Tensor::from_vec(gaussian(2048, 5)).unwrap();
        for format in [
            Format::Int(IntFormat::INT8),
            Format::Fp(FpFormat::E4),
            Format::Fp(FpFormat::E2),
        ] {
            let cfg = calibrate(
                &t,
                &QuantizerConfig::per_tensor(format, RangeMethod::MseSearch),
            )
            .unwrap();
            let q1 = quantize_dequantize(&t, &cfg).unwrap();
            let q2 = quantize_dequantize(&q1, &cfg).unwrap();
            assert_eq!(q1.data(), q2.data(), "{format}");
        }
    }

    #[test]
    fn on_grid_input_passes_through() {
        let fmt = Format::Fp(FpFormat::E4);
        let s = 0.25f64;
        let vals: Vec<f32> = [0.0, 1.0, 16.0, 240.0, -7.5]
            .iter()
            .map(|v| (v * s) as f32)
            .collect();
        let t = Tensor::from_vec(vals.clone()).unwrap();
        let cfg = QuantizerConfig::per_tensor(fmt, RangeMethod::MinMax)
            .with_scales(vec![s])
            .unwrap();
        let q = quantize_dequantize(&t, &cfg).unwrap();
        assert_eq!(q.data(), &vals[..]);
    }

    #[test]
    fn scaling_equivariance() {
        let t = Tensor::from_vec(gaussian(512, 12)).unwrap();
        let alpha = 3.5f64;
        let scaled = Tensor::from_vec(
            t.data()
                .iter()
                .map(|&x| (x as f64 * alpha) as f32)
                .collect(),
        )
        .unwrap();
        let fmt = Format::Int(IntFormat::INT8);
        let s = 0.01f64;
        let cfg1 = QuantizerConfig::per_tensor(fmt, RangeMethod::MinMax)
            .with_scales(vec![s])
            .unwrap();
        let cfg2 = QuantizerConfig::per_tensor(fmt, RangeMethod::MinMax)
            .with_scales(vec![alpha * s])
            .unwrap();
        let q1 = quantize_dequantize(&t, &cfg1).unwrap();
        let q2 = quantize_dequantize(&scaled, &cfg2).unwrap();
        for (&a, &b) in q1.data().iter().zip(q2.data()) {
            // f32 storage of x*alpha perturbs half-way cases, so allow 1 ulp-ish
            assert!((a as f64 * alpha - b as f64).abs() <= (b as f64).abs() * 1e-5 + 1e-6);
        }
    }

    #[test]
    fn error_stats_basics() {
        let a = Tensor::from_vec(vec![1.0, -1.0]).unwrap();
        let b = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        let e = error_stats(&a, &b).unwrap();
        assert_eq!(e.mse, 1.0);
        assert_eq!(e.max_abs_err, 1.0);
        let same = error_stats(&a, &a).unwrap();
        assert_eq!(same.mse, 0.0);
        assert_eq!(same.sqnr_db, SQNR_CAP_DB);
        let c = Tensor::from_vec(vec![0.0; 3]).unwrap();
        assert!(matches!(
            error_stats(&a, &c),
            Err(QuantError::ShapeMismatch(_, _))
        ));
    }

    #[test]
    fn minmax_leaves_nothing_clipped() {
        let t = Tensor::from_vec(gaussian(4096, 77)).unwrap();
        for format in [Format::Int(IntFormat::INT8), Format::Fp(FpFormat::E4)] {
            let cfg = calibrate(
                &t,
                &QuantizerConfig::per_tensor(format, RangeMethod::MinMax),
            )
            .unwrap();
            let q = quantize_dequantize(&t, &cfg).unwrap();
            let e = error_stats(&t, &q).unwrap();
            assert_eq!(e.clipped_fraction, 0.0, "{format}");
        }
    }

    #[test]
    fn per_channel_beats_per_tensor_on_heterogeneous_channels() {
        // eight channels with spread-out magnitudes
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (c, n) = (8usize, 2048usize);
        let mut data = vec![0f32; c * n];
        for ch in 0..c {
            let sigma = 0.05 + 0.45 * ch as f64;
            for i in 0..n {
                let z: f64 =
                    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
                data[ch * n + i] = (z * (sigma + 0.05)) as f32;
            }
        }
        let t = Tensor::new(vec![c, n], data).unwrap();
        for method in [RangeMethod::MinMax, RangeMethod::MseSearch] {
            let run = |format: Format, granularity: Granularity| {
                let cfg =
                    calibrate(&t, &QuantizerConfig::new(format, granularity, method)).unwrap();
                error_stats(&t, &quantize_dequantize(&t, &cfg).unwrap())
                    .unwrap()
                    .mse
            };
            let per_channel = Granularity::PerChannel { axis: 0 };
            // uniform grids: resolution scales with the group maximum, so
            // narrower channels get strictly finer grids
            let int8 = Format::Int(IntFormat::INT8);
            assert!(
                run(int8, per_channel) < run(int8, Granularity::PerTensor),
                "{method:?}"
            );
            // minifloat grids resolve magnitudes relative to the scale, so
            // per-channel scaling moves the error very little either way
            let e4 = Format::Fp(FpFormat::E4);
            assert!(
                run(e4, per_channel) <= run(e4, Granularity::PerTensor) * 1.05,
                "{method:?}"
            );
        }
    }

    #[test]
    fn per_channel_needs_valid_axis() {
        let t = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let cfg = QuantizerConfig::new(
            Format::Int(IntFormat::INT8),
            Granularity::PerChannel { axis: 1 },
            RangeMethod::MinMax,
        );
        assert!(matches!(
            calibrate(&t, &cfg),
            Err(QuantError::Tensor(TensorError::BadAxis { .. }))
        ));
    }

    #[test]
    fn ranking_orders_by_mse() {
        let t = Tensor::from_vec(gaussian(8192, 21)).unwrap();
        let formats: Vec<Format> = ["int8", "e2", "e3", "e4", "e5"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        let rows = best_format_report(&t, &formats, Granularity::PerTensor, RangeMethod::MseSearch)
            .unwrap();
        assert!(rows.windows(2).all(|w| w[0].1.mse <= w[1].1.mse));
        assert_eq!(rows.len(), 5);
    }

    #[test]
    fn sse_kernel_agrees_with_direct_projection() {
        let t = gaussian(1000, 33);
        let view = SortedView::new(t.iter().map(|&v| v as f64));
        let fmt = Format::Fp(FpFormat::E3);
        let s = scale_minmax(view.abs_max(), fmt.max_value());
        let grid: Vec<f64> = fmt.values().iter().map(|v| v * s).collect();
        let sse_kernel = view.sse_on_grid(&grid);
        let sse_direct: f64 = t
            .iter()
            .map(|&x| {
                let y = project(fmt, s, x as f64);
                (x as f64 - y) * (x as f64 - y)
            })
            .sum();
        assert!((sse_kernel - sse_direct).abs() <= 1e-9 * sse_direct.max(1.0));
    }
}
