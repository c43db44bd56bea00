use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use quant8_cli::{
    cmd_convert, cmd_formats, cmd_gates, cmd_mse_sweep, cmd_tensor_report, parse_dists,
    parse_formats, parse_granularity, parse_range,
};
use quant8_core::codec::{Format, FpFormat, IntFormat};
use quant8_core::distmse::{DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_STUDENT_NU};

/// Compare 8-bit minifloat and integer formats: value tables, expected-MSE
/// sweeps, MAC gate costs, per-tensor format rankings, and grid conversion.
#[derive(Parser)]
#[command(name = "quant8", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the 255-value table of a format with code words in hex.
    Formats {
        /// Minifloat exponent width, e.g. e4.
        #[arg(long, value_name = "EX")]
        fp8: Option<String>,
        /// Integer width: 4, 8 or 16.
        #[arg(long, value_name = "BITS")]
        int: Option<u32>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Expected quantization error over analytic distributions, in bits of
    /// accuracy, with a Lloyd-Max baseline per distribution.
    MseSweep {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value = "int8,e2,e3,e4,e5")]
        formats: String,
        #[arg(long, default_value = "uniform,gaussian,student_t")]
        dists: String,
        /// Student-t degrees of freedom.
        #[arg(long, default_value_t = DEFAULT_STUDENT_NU)]
        nu: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Gate-count grid for MAC units: formats × accumulators.
    Gates {
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Rank formats by quantization MSE for each tensor file.
    TensorReport {
        /// QTNSR1 tensor files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "int8,e2,e3,e4,e5")]
        formats: String,
        /// per-tensor or per-channel=AXIS.
        #[arg(long, default_value = "per-tensor")]
        granularity: String,
        /// minmax or mse.
        #[arg(long, default_value = "mse")]
        range: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Minifloat-to-integer grid matching; with tensor files, per-file
    /// conversion error.
    Convert {
        /// Source minifloat format, e.g. e4.
        #[arg(long, value_name = "EX")]
        fp8: String,
        /// Target integer width.
        #[arg(long, value_name = "BITS", default_value_t = 8)]
        int: u32,
        files: Vec<PathBuf>,
        /// minmax or mse.
        #[arg(long, default_value = "mse")]
        range: String,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating --out {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_fp8(s: &str) -> Result<FpFormat> {
    match s
        .parse::<Format>()
        .with_context(|| format!("--fp8 '{s}'"))?
    {
        Format::Fp(fp) => Ok(fp),
        Format::Int(_) => bail!("--fp8 '{s}' is not a minifloat format"),
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Formats { fp8, int, out } => {
            let format = match (fp8, int) {
                (Some(e), None) => Format::Fp(parse_fp8(&e)?),
                (None, Some(bits)) => {
                    Format::Int(IntFormat::new(bits).with_context(|| format!("--int {bits}"))?)
                }
                _ => bail!("pass exactly one of --fp8 EX or --int BITS"),
            };
            cmd_formats(format, &mut writer(&out)?)
        }
        Command::MseSweep {
            seed,
            samples,
            formats,
            dists,
            nu,
            out,
        } => {
            let formats = parse_formats(&formats)?;
            let dists = parse_dists(&dists, nu)?;
            cmd_mse_sweep(&dists, &formats, samples, seed, &mut writer(&out)?)
        }
        Command::Gates { out } => cmd_gates(&mut writer(&out)?),
        Command::TensorReport {
            files,
            formats,
            granularity,
            range,
            out,
        } => {
            let formats = parse_formats(&formats)?;
            let granularity = parse_granularity(&granularity)?;
            let range = parse_range(&range)?;
            cmd_tensor_report(&files, &formats, granularity, range, &mut writer(&out)?)
        }
        Command::Convert {
            fp8,
            int,
            files,
            range,
            out,
        } => {
            let fp = parse_fp8(&fp8)?;
            let int = IntFormat::new(int).with_context(|| format!("--int {int}"))?;
            let range = parse_range(&range)?;
            cmd_convert(fp, int, &files, range, &mut writer(&out)?)
        }
    }
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
