use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ternlut_cli::commands::{self, AnalyzeOpts, BenchOpts, GemmOpts, QuantizeOpts, VerifyOpts};
use ternlut_cli::{CliError, CliResult};
use ternlut_core::pack::{DEFAULT_BK3, DEFAULT_BM};
use ternlut_core::{Kernel, Layout};

#[derive(Parser)]
#[command(
    name = "ternlut",
    version,
    about = "Ternary-weight LUT and MAD GEMM kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ternarize a raw float tensor and write it packed into a TNF file.
    Quantize(QuantizeArgs),
    /// Check every kernel for the stored tensors against the integer reference.
    Verify(VerifyArgs),
    /// Time the kernels and print CSV.
    Bench(BenchArgs),
    /// Print cost-model figures as CSV.
    Analyze(AnalyzeArgs),
    /// Multiply a stored tensor by raw float activations.
    Gemm(GemmArgs),
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// tl1, tl2, i2s, or raw for unpacked ternary values.
    #[arg(long, default_value = "tl2")]
    layout: String,
    #[arg(long, default_value_t = DEFAULT_BM)]
    bm: usize,
    #[arg(long, default_value_t = DEFAULT_BK3)]
    bk3: usize,
    #[arg(long, default_value = "weight")]
    name: String,
}

#[derive(Args)]
struct VerifyArgs {
    tnf: PathBuf,
    #[arg(long, default_value_t = 8)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Activation rows per trial.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Thread counts whose results must equal the single-threaded run.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    threads: Vec<usize>,
}

#[derive(Args)]
struct BenchArgs {
    tnf: PathBuf,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Kernel names, e.g. TL2_1,I2_S. Defaults to all five.
    #[arg(long, value_delimiter = ',')]
    kernels: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    c: u64,
    #[arg(long)]
    g: Option<u32>,
    #[arg(long)]
    mirror: bool,
    #[arg(long, default_value_t = 4096)]
    m: u64,
    #[arg(long, default_value_t = 1)]
    n: u64,
    #[arg(long, default_value_t = 3072)]
    k: u64,
    #[arg(long, default_value_t = 128)]
    register_bits: u32,
}

#[derive(Args)]
struct GemmArgs {
    tnf: PathBuf,
    /// Raw float activations, N x K.
    #[arg(long)]
    act: PathBuf,
    #[arg(long)]
    tensor: Option<String>,
    #[arg(long, conflicts_with = "lossy")]
    lossless: bool,
    #[arg(long)]
    lossy: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Quantize(a) => {
            let layout = match a.layout.to_ascii_lowercase().as_str() {
                "raw" => None,
                other => Some(other.parse::<Layout>()?),
            };
            let opts = QuantizeOpts {
                input: a.input,
                output: a.output,
                layout,
                bm: a.bm,
                bk3: a.bk3,
                name: a.name,
            };
            print!("{}", commands::quantize(&opts)?);
        }
        Command::Verify(a) => {
            let opts = VerifyOpts {
                tnf: a.tnf,
                trials: a.trials,
                seed: a.seed,
                n: a.n,
                threads: a.threads,
            };
            let report = commands::verify(&opts)?;
            print!("{}", report.text);
            if !report.passed {
                return Err(CliError::Verification("at least one kernel failed".into()));
            }
        }
        Command::Bench(a) => {
            let kernels = a
                .kernels
                .iter()
                .map(|s| {
                    Kernel::from_name(s)
                        .ok_or_else(|| CliError::Usage(format!("unknown kernel {s:?}")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let opts = BenchOpts {
                tnf: a.tnf,
                n: a.n,
                threads: a.threads,
                reps: a.reps,
                kernels,
                seed: a.seed,
            };
            let (csv, skipped) = commands::bench(&opts)?;
            for s in skipped {
                eprintln!("skipped {s}");
            }
            print!("{csv}");
        }
        Command::Analyze(a) => {
            let g = a.g.unwrap_or(if a.mirror { 3 } else { 2 });
            let opts = AnalyzeOpts {
                c: a.c,
                g,
                mirror: a.mirror,
                m: a.m,
                n: a.n,
                k: a.k,
                register_bits: a.register_bits,
            };
            print!("{}", commands::analyze(&opts)?);
        }
        Command::Gemm(a) => {
            let opts = GemmOpts {
                tnf: a.tnf,
                act: a.act,
                tensor: a.tensor,
                lossless: !a.lossy,
                threads: a.threads,
            };
            print!("{}", commands::gemm(&opts)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
