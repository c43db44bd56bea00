//! Command implementations behind the `quant8` binary. Each command writes
//! one CSV table with a fixed header; output is deterministic given the
//! flags and input bytes.

pub mod tensorfile;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use quant8_core::codec::{Format, FpFormat, IntFormat};
use quant8_core::convert::{convert_tensor, match_grid};
use quant8_core::distmse::{sweep, Dist};
use quant8_core::gatecost::report_grid;
use quant8_core::quantizer::{
    best_format_report, calibrate, quantize_dequantize, Granularity, QuantizerConfig, RangeMethod,
};
use quant8_core::tensor::Tensor;

use tensorfile::read_tensor;

/// Parse a comma-separated format list.
pub fn parse_formats(s: &str) -> Result<Vec<Format>> {
    s.split(',')
        .map(|p| {
            p.parse::<Format>()
                .with_context(|| format!("--formats entry '{p}'"))
        })
        .collect()
}

/// Parse a comma-separated distribution list; `nu` applies to student_t.
pub fn parse_dists(s: &str, nu: f64) -> Result<Vec<Dist>> {
    s.split(',')
        .map(|p| {
            let d = p
                .parse::<Dist>()
                .with_context(|| format!("--dists entry '{p}'"))?;
            Ok(match d {
                Dist::StudentT { .. } => Dist::student_t(nu).context("--nu")?,
                other => other,
            })
        })
        .collect()
}

/// Parse `per-tensor` or `per-channel=AXIS`.
pub fn parse_granularity(s: &str) -> Result<Granularity> {
    match s {
        "per-tensor" => Ok(Granularity::PerTensor),
        other => {
            if let Some(axis) = other.strip_prefix("per-channel=") {
                let axis = axis
                    .parse::<usize>()
                    .with_context(|| format!("--granularity axis '{axis}'"))?;
                Ok(Granularity::PerChannel { axis })
            } else {
                bail!("--granularity must be per-tensor or per-channel=AXIS, got '{other}'")
            }
        }
    }
}

/// Parse `minmax` or `mse`.
pub fn parse_range(s: &str) -> Result<RangeMethod> {
    match s {
        "minmax" => Ok(RangeMethod::MinMax),
        "mse" => Ok(RangeMethod::MseSearch),
        other => bail!("--range must be minmax or mse, got '{other}'"),
    }
}

fn hex_width(bits: u32) -> usize {
    (bits as usize).div_ceil(4)
}

/// Value table of one format: every code word and its real value.
pub fn cmd_formats(format: Format, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "code_hex,value")?;
    match format {
        Format::Fp(fp) => {
            for (v, c) in fp.value_table() {
                writeln!(out, "0x{:02x},{}", c.bits(), v)?;
            }
        }
        Format::Int(int) => {
            let w = hex_width(int.bits());
            for v in int.values() {
                let k = v as i64;
                // sign-magnitude code word: top bit sign, low bits magnitude
                let code = if k < 0 {
                    (1u64 << (int.bits() - 1)) | (-k as u64)
                } else {
                    k as u64
                };
                writeln!(out, "0x{:0w$x},{}", code, v, w = w)?;
            }
        }
    }
    Ok(())
}

/// Distribution × format sweep with a Lloyd-Max baseline row per
/// distribution.
pub fn cmd_mse_sweep(
    dists: &[Dist],
    formats: &[Format],
    samples: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<()> {
    let rows = sweep(dists, formats, samples, seed)?;
    writeln!(out, "distribution,format,rmse,bits,n,seed")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.9},{:.6},{},{}",
            r.distribution, r.quantizer, r.rmse, r.bits, r.n, r.seed
        )?;
    }
    Ok(())
}

/// Gate-count grid over formats and accumulators.
pub fn cmd_gates(out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "format,accumulator,multiply,align,accumulate,normalize_round,registers,total,ratio_vs_int8_fixed"
    )?;
    for cell in report_grid() {
        let r = cell.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{:.6}",
            cell.spec.input,
            cell.spec.accumulator,
            r.multiply,
            r.align,
            r.accumulate,
            r.normalize_round,
            r.registers,
            r.total,
            cell.ratio_vs_int8_fixed
        )?;
    }
    Ok(())
}

/// Per-tensor format ranking over tensor files.
pub fn cmd_tensor_report(
    files: &[PathBuf],
    formats: &[Format],
    granularity: Granularity,
    range_method: RangeMethod,
    out: &mut dyn Write,
) -> Result<()> {
    writeln!(
        out,
        "file,rank,format,mse,rmse,sqnr_db,max_abs_err,clipped_fraction"
    )?;
    for path in files {
        let tensor = read_tensor(path)?;
        let rows = best_format_report(&tensor, formats, granularity, range_method)
            .with_context(|| format!("ranking {}", path.display()))?;
        for (rank, (format, stats)) in rows.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{:.9e},{:.9e},{:.4},{:.9e},{:.6}",
                path.display(),
                rank + 1,
                format,
                stats.mse,
                stats.rmse,
                stats.sqnr_db,
                stats.max_abs_err,
                stats.clipped_fraction
            )?;
        }
    }
    Ok(())
}

/// Grid-conversion analysis. Without files: the value-set match between the
/// formats. With files: each tensor is projected onto the minifloat grid
/// (min-max, per-tensor) and requantized onto the integer grid calibrated
/// with `range_method`.
pub fn cmd_convert(
    fp: FpFormat,
    int: IntFormat,
    files: &[PathBuf],
    range_method: RangeMethod,
    out: &mut dyn Write,
) -> Result<()> {
    if files.is_empty() {
        writeln!(
            out,
            "fp_format,int_format,int_scale,exact_fraction,max_conversion_err,lossy_lo,lossy_hi"
        )?;
        let m = match_grid(fp, int);
        writeln!(
            out,
            "{},{},{},{:.6},{},{},{}",
            fp, int, m.int_scale, m.exact_fraction, m.max_conversion_err, m.lossy_lo, m.lossy_hi
        )?;
        return Ok(());
    }
    writeln!(
        out,
        "file,fp_format,int_format,range,mse,rmse,sqnr_db,max_abs_err"
    )?;
    for path in files {
        let tensor = read_tensor(path)?;
        let fp_cfg = calibrate(
            &tensor,
            &QuantizerConfig::per_tensor(Format::Fp(fp), RangeMethod::MinMax),
        )
        .with_context(|| format!("calibrating {} onto {}", path.display(), fp))?;
        let on_grid = quantize_dequantize(&tensor, &fp_cfg)?;
        let fp_scale = fp_cfg.scales().expect("calibrated")[0];
        let int_cfg = QuantizerConfig::per_tensor(Format::Int(int), range_method);
        let (_, stats) = convert_tensor(&on_grid, fp, fp_scale, &int_cfg)
            .with_context(|| format!("converting {}", path.display()))?;
        let range = match range_method {
            RangeMethod::MinMax => "minmax",
            RangeMethod::MseSearch => "mse",
        };
        writeln!(
            out,
            "{},{},{},{},{:.9e},{:.9e},{:.4},{:.9e}",
            path.display(),
            fp,
            int,
            range,
            stats.mse,
            stats.rmse,
            stats.sqnr_db,
            stats.max_abs_err
        )?;
    }
    Ok(())
}

/// Make a tensor from raw values; exposed for tests and tooling.
pub fn tensor_from_f64(values: &[f64]) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        values.iter().map(|&v| v as f32).collect(),
    )?)
}
