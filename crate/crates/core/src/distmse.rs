//! Expected quantization error over analytic distributions, scored as "bits
//! of accuracy", plus the Lloyd-Max optimal-codebook baseline.
//!
//! The score is an inverted, normalized RMSE. A quantizer's RMSE is measured
//! against the span of the uniform distribution with the same mean absolute
//! deviation as the data (`4·E|x|`), widened by one mean grid step on each
//! end, so that an ideal `b`-bit uniform quantizer applied to a matched
//! uniform source scores exactly `b` bits. The normalization is shared by
//! every quantizer evaluated on the same sample, which makes scores
//! comparable across formats: more bits means lower error on that
//! distribution, full stop.
//!
//! Every cell of a sweep draws its sample from a generator seeded by
//! `(master seed, cell label)`, so results do not depend on evaluation order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal, StudentT};
use thiserror::Error;

use crate::codec::Format;
use crate::quantizer::{scale_mse_search, Granularity, QuantizerConfig, RangeMethod, SortedView};

pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_STUDENT_NU: f64 = 2.0;
pub const LLOYD_DEFAULT_LEVELS: usize = 255;
pub const LLOYD_DEFAULT_MAX_ITERS: usize = 500;
pub const LLOYD_DEFAULT_TOL: f64 = 1e-11;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("student-t needs nu > 1, got {0}")]
    BadNu(f64),
    #[error("sample count {got} too small, need at least {min}")]
    TooFewSamples { got: usize, min: usize },
    #[error("expected MSE is defined for per-tensor mse_search configs")]
    BadConfig,
    #[error("codebook needs at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("unknown distribution '{0}' (expected uniform, gaussian or student_t)")]
    UnknownDistribution(String),
}

/// A symmetric, unit-scale source distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    /// Uniform on [-1, 1].
    Uniform,
    /// Standard normal.
    Gaussian,
    /// Student-t with `nu` degrees of freedom (heavy tails for small `nu`).
    StudentT { nu: f64 },
}

impl Dist {
    pub fn student_t(nu: f64) -> Result<Self, DistError> {
        if nu > 1.0 {
            Ok(Dist::StudentT { nu })
        } else {
            Err(DistError::BadNu(nu))
        }
    }

    /// Draw `n` samples from a deterministic generator.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            Dist::Uniform => (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect(),
            Dist::Gaussian => (0..n)
                .map(|_| -> f64 { StandardNormal.sample(&mut rng) })
                .collect(),
            Dist::StudentT { nu } => {
                let t = StudentT::new(*nu).expect("validated nu");
                (0..n).map(|_| -> f64 { t.sample(&mut rng) }).collect()
            }
        }
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Uniform => write!(f, "uniform"),
            Dist::Gaussian => write!(f, "gaussian"),
            Dist::StudentT { .. } => write!(f, "student_t"),
        }
    }
}

impl FromStr for Dist {
    type Err = DistError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Dist::Uniform),
            "gaussian" | "normal" => Ok(Dist::Gaussian),
            "student_t" | "student-t" | "studentt" => Ok(Dist::StudentT {
                nu: DEFAULT_STUDENT_NU,
            }),
            other => Err(DistError::UnknownDistribution(other.to_string())),
        }
    }
}

/// RMSE and its bits-of-accuracy score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitsOfAccuracy {
    pub rmse: f64,
    pub bits: f64,
}

/// Score an RMSE against the matched-uniform span of the data.
///
/// `mean_abs` is the sample mean of |x| and `levels` the number of grid
/// points. Infinite for an exact reconstruction.
pub fn bits_score(rmse: f64, mean_abs: f64, levels: usize) -> f64 {
    if rmse == 0.0 {
        return f64::INFINITY;
    }
    let w = 4.0 * mean_abs * (levels as f64 + 1.0) / (levels as f64 - 1.0);
    (w / (rmse * 12f64.sqrt())).log2()
}

/// Monte-Carlo estimate of the expected quantization error of `cfg.format`
/// on `dist`, with the scale chosen per format by MSE search (each format is
/// shown at its own best). Deterministic for a fixed seed.
pub fn expected_mse(
    dist: Dist,
    cfg: &QuantizerConfig,
    n: usize,
    seed: u64,
) -> Result<BitsOfAccuracy, DistError> {
    if n < 100_000 {
        return Err(DistError::TooFewSamples {
            got: n,
            min: 100_000,
        });
    }
    if cfg.range_method != RangeMethod::MseSearch
        || cfg.granularity != Granularity::PerTensor
        || cfg.scales().is_some()
    {
        return Err(DistError::BadConfig);
    }
    let view = SortedView::new(dist.sample(n, seed));
    Ok(score_format_on_view(&view, cfg.format))
}

pub(crate) fn score_format_on_view(view: &SortedView, format: Format) -> BitsOfAccuracy {
    let canonical = format.values();
    let (_, sse) = scale_mse_search(view, &canonical, format.max_value());
    let rmse = (sse / view.len() as f64).sqrt();
    BitsOfAccuracy {
        rmse,
        bits: bits_score(rmse, view.mean_abs(), format.level_count()),
    }
}

/// An MSE-optimal scalar codebook fitted by Lloyd iterations.
#[derive(Debug, Clone)]
pub struct Codebook {
    /// Reconstruction levels, strictly increasing.
    pub levels: Vec<f64>,
    /// Mean squared error of the final codebook on the fitting sample.
    pub mse: f64,
    /// MSE after each iteration; non-increasing.
    pub mse_trace: Vec<f64>,
}

impl Codebook {
    /// Decision thresholds: midpoints of adjacent levels.
    pub fn thresholds(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| (w[0] + w[1]) / 2.0)
            .collect()
    }
}

/// Fit a Lloyd-Max codebook to a seeded sample of `dist`.
///
/// Levels start at a density-matched placement (point density proportional
/// to the cube root of the sample density, the asymptotically optimal
/// profile) and alternate centroid/threshold updates until the relative MSE
/// improvement drops below `tol` or `max_iters` is reached. A cell left
/// empty by a threshold update is re-seeded by splitting the cell with the
/// largest error mass: the empty level moves to the midpoint between that
/// cell's centroid and its largest sample.
pub fn lloyd_max(
    dist: Dist,
    levels: usize,
    n: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<Codebook, DistError> {
    if levels < 2 {
        return Err(DistError::TooFewLevels(levels));
    }
    if n < levels {
        return Err(DistError::TooFewSamples {
            got: n,
            min: levels,
        });
    }
    let sample = dist.sample(n, seed);
    Ok(lloyd_fit(&sample, levels, max_iters, tol))
}

/// Lloyd iterations on an explicit sample.
pub fn lloyd_fit(sample: &[f64], levels: usize, max_iters: usize, tol: f64) -> Codebook {
    let view = SortedView::new(sample.iter().copied());
    let xs = view.sorted();
    let n = xs.len();
    let mut lev = companding_init(xs, levels);
    enforce_increasing(&mut lev);

    let mut trace = Vec::new();
    let mut prev_mse = f64::INFINITY;
    loop {
        // partition by thresholds (midpoints), then per-cell sums
        let l = lev.len();
        let mut bounds = Vec::with_capacity(l + 1);
        bounds.push(0usize);
        let mut lo = 0usize;
        for i in 0..l - 1 {
            let thr = (lev[i] + lev[i + 1]) / 2.0;
            lo += xs[lo..].partition_point(|&x| x < thr);
            bounds.push(lo);
        }
        bounds.push(n);

        let mut sse_total = 0.0;
        let mut cell_sse = vec![0.0f64; l];
        for i in 0..l {
            let (cnt, s1, s2) = view.cell_sums(bounds[i], bounds[i + 1]);
            let sse = s2 - 2.0 * lev[i] * s1 + lev[i] * lev[i] * cnt;
            cell_sse[i] = sse;
            sse_total += sse;
        }
        let mse = sse_total / n as f64;
        trace.push(mse);
        let converged = prev_mse.is_finite()
            && prev_mse - mse >= 0.0
            && prev_mse - mse < tol * prev_mse.max(f64::MIN_POSITIVE);
        if converged || trace.len() >= max_iters {
            return Codebook {
                levels: lev,
                mse,
                mse_trace: trace,
            };
        }
        prev_mse = mse;

        // centroid update
        let mut next = lev.clone();
        let mut empties = Vec::new();
        for i in 0..l {
            let (cnt, s1, _) = view.cell_sums(bounds[i], bounds[i + 1]);
            if cnt > 0.0 {
                next[i] = s1 / cnt;
            } else {
                empties.push(i);
            }
        }
        if !empties.is_empty() {
            let mut donors: Vec<usize> = (0..l).collect();
            donors.sort_by(|&a, &b| cell_sse[b].partial_cmp(&cell_sse[a]).unwrap());
            for (j, &e) in empties.iter().enumerate() {
                let d = donors[j % donors.len()];
                let cell_max = if bounds[d + 1] > bounds[d] {
                    xs[bounds[d + 1] - 1]
                } else {
                    next[d]
                };
                next[e] = (next[d] + cell_max) / 2.0;
            }
        }
        next.sort_by(|a, b| a.partial_cmp(b).unwrap());
        enforce_increasing(&mut next);
        lev = next;
    }
}

/// Place levels so their density tracks the cube root of the sample density:
/// equal-probability bins contribute mass proportional to width^(2/3).
fn companding_init(xs: &[f64], levels: usize) -> Vec<f64> {
    let n = xs.len();
    let bins = 2048.min(n);
    let edge = |j: usize| xs[(j * n / bins).min(n - 1)];
    let mut mass = Vec::with_capacity(bins);
    let mut total = 0.0;
    for j in 0..bins {
        let w = (edge(j + 1) - edge(j)).max(0.0).powf(2.0 / 3.0);
        total += w;
        mass.push(total);
    }
    if total == 0.0 {
        // degenerate constant sample
        return (0..levels).map(|i| xs[0] + i as f64).collect();
    }
    let mut out = Vec::with_capacity(levels);
    let mut j = 0usize;
    for i in 0..levels {
        let target = (i as f64 + 0.5) / levels as f64 * total;
        while j + 1 < bins && mass[j] < target {
            j += 1;
        }
        let lo_mass = if j == 0 { 0.0 } else { mass[j - 1] };
        let w = mass[j] - lo_mass;
        let frac = if w > 0.0 { (target - lo_mass) / w } else { 0.5 };
        out.push(edge(j) + frac * (edge(j + 1) - edge(j)));
    }
    out
}

fn enforce_increasing(levels: &mut [f64]) {
    for i in 1..levels.len() {
        if levels[i] <= levels[i - 1] {
            levels[i] = levels[i - 1].next_up();
        }
    }
}

/// One row of a distribution × quantizer sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub distribution: String,
    pub quantizer: String,
    pub rmse: f64,
    pub bits: f64,
    pub n: usize,
    pub seed: u64,
}

/// Cross product of distributions and formats, each scored at its own
/// MSE-search optimum, plus a Lloyd-Max row per distribution. Every cell
/// seeds its own generator from the master seed and the cell label, so the
/// table is reproducible and order-independent.
pub fn sweep(
    dists: &[Dist],
    formats: &[Format],
    n: usize,
    seed: u64,
) -> Result<Vec<MseRow>, DistError> {
    if n < 100_000 {
        return Err(DistError::TooFewSamples {
            got: n,
            min: 100_000,
        });
    }
    let mut rows = Vec::new();
    for dist in dists {
        for format in formats {
            let label = format!("{dist}/{format}");
            let view = SortedView::new(dist.sample(n, cell_seed(seed, &label)));
            let score = score_format_on_view(&view, *format);
            rows.push(MseRow {
                distribution: dist.to_string(),
                quantizer: format.to_string(),
                rmse: score.rmse,
                bits: score.bits,
                n,
                seed,
            });
        }
        let label = format!("{dist}/lloyd_max");
        let sample = dist.sample(n, cell_seed(seed, &label));
        let cb = lloyd_fit(
            &sample,
            LLOYD_DEFAULT_LEVELS,
            LLOYD_DEFAULT_MAX_ITERS,
            LLOYD_DEFAULT_TOL,
        );
        let mean_abs = sample.iter().map(|x| x.abs()).sum::<f64>() / sample.len() as f64;
        let rmse = cb.mse.sqrt();
        rows.push(MseRow {
            distribution: dist.to_string(),
            quantizer: "lloyd_max".to_string(),
            rmse,
            bits: bits_score(rmse, mean_abs, LLOYD_DEFAULT_LEVELS),
            n,
            seed,
        });
    }
    Ok(rows)
}

/// Seed for one sweep cell, derived from the master seed and the cell label.
pub fn cell_seed(master: u64, label: &str) -> u64 {
    master ^ fnv1a(label)
}

fn fnv1a(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
