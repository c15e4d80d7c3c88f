//! Subcommand implementations. Each returns the text destined for stdout so
//! it can be exercised without spawning a process.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ternlut_core::analyzer::{self, Rational};
use ternlut_core::lut::{build_table, gemm_lut_threaded};
use ternlut_core::oracle::gemm_ternary_reference;
use ternlut_core::pack::pack;
use ternlut_core::{
    dequantize, quantize_activations_per_tensor, ternarize_absmean, BlockGeometry, FloatMatrix,
    Kernel, Layout, PackedWeights, QuantizedActivations, TernaryMatrix,
};

use crate::error::{CliError, CliResult};
use crate::raw;
use crate::tnf::{TensorData, TnfFile, TnfTensor};

pub fn read_tnf(path: &std::path::Path) -> CliResult<TnfFile> {
    TnfFile::from_bytes(&std::fs::read(path)?)
}

/// Seeded standard-normal `n x k` activations, quantized per tensor.
pub fn random_activations(
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
) -> CliResult<QuantizedActivations> {
    let data: Vec<f32> = (0..n * k).map(|_| StandardNormal.sample(rng)).collect();
    Ok(quantize_activations_per_tensor(&FloatMatrix::new(
        n, k, data,
    )?)?)
}

/// Packed weights for `kernel`, reusing the stored payload when its layout already fits.
fn weights_for(
    tensor: &TnfTensor,
    ternary: &TernaryMatrix,
    kernel: Kernel,
) -> CliResult<PackedWeights> {
    match &tensor.data {
        TensorData::Packed(p) if p.layout() == kernel.layout() => Ok(p.clone()),
        _ => Ok(pack(ternary, kernel.layout(), tensor.geometry())?),
    }
}

/// Kernels exercised for a tensor: those matching a packed layout, or all five for raw ternary.
fn kernels_for(tensor: &TnfTensor) -> Vec<Kernel> {
    match &tensor.data {
        TensorData::Packed(p) => Kernel::for_layout(p.layout()).collect(),
        TensorData::Raw { .. } => Kernel::ALL.to_vec(),
    }
}

// ---------------------------------------------------------------- quantize

#[derive(Debug, Clone)]
pub struct QuantizeOpts {
    pub input: PathBuf,
    pub output: PathBuf,
    /// `None` stores raw ternary values.
    pub layout: Option<Layout>,
    pub bm: usize,
    pub bk3: usize,
    pub name: String,
}

pub fn quantize(opts: &QuantizeOpts) -> CliResult<String> {
    let weights = raw::read(&opts.input)?;
    let geometry = BlockGeometry::new(opts.bm, opts.bk3)?;
    let ternary = ternarize_absmean(&weights)?;
    let (m, k) = (ternary.m(), ternary.k());
    let tensor = match opts.layout {
        Some(layout) => TnfTensor::packed(opts.name.clone(), pack(&ternary, layout, geometry)?),
        None => TnfTensor::raw(opts.name.clone(), ternary, geometry),
    };
    let payload = tensor.payload().len();
    let scale = tensor.weight_scale();
    let file = TnfFile {
        tensors: vec![tensor],
    };
    std::fs::write(&opts.output, file.to_bytes()?)?;
    let layout = opts.layout.map(Layout::name).unwrap_or("raw");
    Ok(format!(
        "tensor {} {m}x{k} layout={layout} beta={scale} payload_bytes={payload} bpw={:.4}\n",
        opts.name,
        payload as f64 * 8.0 / (m * k) as f64
    ))
}

// ---------------------------------------------------------------- verify

#[derive(Debug, Clone)]
pub struct VerifyOpts {
    pub tnf: PathBuf,
    pub trials: usize,
    pub seed: u64,
    pub n: usize,
    pub threads: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyReport {
    pub text: String,
    pub passed: bool,
}

#[derive(Default)]
struct KernelTally {
    max_abs_err: i64,
    max_bound: f64,
    bound_violations: usize,
    mismatched_threads: usize,
}

pub fn verify(opts: &VerifyOpts) -> CliResult<VerifyReport> {
    verify_file(&read_tnf(&opts.tnf)?, opts)
}

/// Report lines depend only on the file, seed, trial count and `n`; thread
/// counts change which runs are compared, never what is printed.
pub fn verify_file(file: &TnfFile, opts: &VerifyOpts) -> CliResult<VerifyReport> {
    if opts.trials == 0 || opts.n == 0 {
        return Err(CliError::Usage("--trials and --n must be positive".into()));
    }
    let mut text = format!(
        "verify seed={} trials={} n={}\n",
        opts.seed, opts.trials, opts.n
    );
    let mut passed = true;
    for tensor in &file.tensors {
        let ternary = tensor.ternary()?;
        let (m, k) = (ternary.m(), ternary.k());
        let mut runnable = Vec::new();
        for kernel in kernels_for(tensor) {
            match weights_for(tensor, &ternary, kernel) {
                Ok(p) => runnable.push((kernel, p, KernelTally::default())),
                Err(e) => writeln!(text, "{} {m}x{k} {kernel} SKIP ({e})", tensor.name).unwrap(),
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.trials {
            let act = random_activations(&mut rng, opts.n, k)?;
            let exact = gemm_ternary_reference(&ternary, &act)?;
            for (kernel, packed, tally) in &mut runnable {
                let (got, bounds) = match kernel {
                    Kernel::Lut(lk) if !lk.lossless() => {
                        let lut = build_table(*lk, &act, packed.geometry())?;
                        let bounds: Vec<f64> =
                            (0..act.n()).map(|j| lut.lossy_error_bound(j)).collect();
                        (gemm_lut_threaded(packed, &lut, false, 1)?, Some(bounds))
                    }
                    _ => (kernel.run(packed, &act, 1)?, None),
                };
                for (idx, (&g, &e)) in got.accum().iter().zip(exact.accum()).enumerate() {
                    let err = (g as i64 - e as i64).abs();
                    tally.max_abs_err = tally.max_abs_err.max(err);
                    let bound = bounds.as_ref().map_or(0.0, |b| b[idx % act.n()]);
                    tally.max_bound = tally.max_bound.max(bound);
                    if err as f64 > bound {
                        tally.bound_violations += 1;
                    }
                }
                for &t in &opts.threads {
                    if t > 1 && kernel.run(packed, &act, t)?.accum() != got.accum() {
                        tally.mismatched_threads += 1;
                    }
                }
            }
        }
        for (kernel, _, tally) in &runnable {
            let ok = tally.bound_violations == 0 && tally.mismatched_threads == 0;
            passed &= ok;
            let check = if kernel.lossless() {
                "exact".to_string()
            } else {
                format!("bound={:.3}", tally.max_bound)
            };
            writeln!(
                text,
                "{} {m}x{k} {kernel} max_abs_err={} {check} violations={} thread_mismatches={} {}",
                tensor.name,
                tally.max_abs_err,
                tally.bound_violations,
                tally.mismatched_threads,
                if ok { "PASS" } else { "FAIL" }
            )
            .unwrap();
        }
    }
    writeln!(text, "overall {}", if passed { "PASS" } else { "FAIL" }).unwrap();
    Ok(VerifyReport { text, passed })
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone)]
pub struct BenchOpts {
    pub tnf: PathBuf,
    pub n: usize,
    pub threads: Vec<usize>,
    pub reps: usize,
    /// Empty runs all five.
    pub kernels: Vec<Kernel>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub kernel: Kernel,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub threads: usize,
    pub reps: usize,
    pub ns: u128,
    pub gbps: f64,
    pub bpw: f64,
}

pub const BENCH_HEADER: &str = "kernel,m,n,k,threads,reps,ns,gbps,bpw";

impl BenchRecord {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3},{:.4}",
            self.kernel,
            self.m,
            self.n,
            self.k,
            self.threads,
            self.reps,
            self.ns,
            self.gbps,
            self.bpw
        )
    }
}

fn median(mut xs: Vec<u128>) -> u128 {
    xs.sort_unstable();
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2
    }
}

/// Times every (kernel, threads) pair; kernels the shape cannot be packed for are
/// reported on `skipped` and left out.
pub fn bench_records(
    file: &TnfFile,
    opts: &BenchOpts,
    skipped: &mut Vec<String>,
) -> CliResult<Vec<BenchRecord>> {
    if opts.reps == 0 || opts.n == 0 || opts.threads.contains(&0) {
        return Err(CliError::Usage(
            "--reps, --n and every thread count must be positive".into(),
        ));
    }
    let kernels = if opts.kernels.is_empty() {
        Kernel::ALL.to_vec()
    } else {
        opts.kernels.clone()
    };
    let mut records = Vec::new();
    for tensor in &file.tensors {
        let ternary = tensor.ternary()?;
        let (m, k) = (ternary.m(), ternary.k());
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let act = random_activations(&mut rng, opts.n, k)?;
        for &kernel in &kernels {
            let packed = match pack(&ternary, kernel.layout(), tensor.geometry()) {
                Ok(p) => p,
                Err(e) => {
                    skipped.push(format!("{} {kernel}: {e}", tensor.name));
                    continue;
                }
            };
            let bytes = packed.payload_len();
            for &threads in &opts.threads {
                kernel.run(&packed, &act, threads)?;
                let times = (0..opts.reps)
                    .map(|_| {
                        let start = Instant::now();
                        let out = kernel.run(&packed, &act, threads);
                        let ns = start.elapsed().as_nanos();
                        out.map(|_| ns)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let ns = median(times).max(1);
                records.push(BenchRecord {
                    kernel,
                    m,
                    n: opts.n,
                    k,
                    threads,
                    reps: opts.reps,
                    ns,
                    gbps: bytes as f64 / ns as f64,
                    bpw: bytes as f64 * 8.0 / (m * k) as f64,
                });
            }
        }
    }
    Ok(records)
}

pub fn bench(opts: &BenchOpts) -> CliResult<(String, Vec<String>)> {
    let mut skipped = Vec::new();
    let records = bench_records(&read_tnf(&opts.tnf)?, opts, &mut skipped)?;
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for r in &records {
        out.push_str(&r.csv());
        out.push('\n');
    }
    Ok((out, skipped))
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Clone)]
pub struct AnalyzeOpts {
    pub c: u64,
    pub g: u32,
    pub mirror: bool,
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub register_bits: u32,
}

/// Integers print bare, other ratios to three decimals with trailing zeros trimmed.
fn decimal(r: Rational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let s = format!("{:.3}", *r.numer() as f64 / *r.denom() as f64);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn exact(r: Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn analyze(opts: &AnalyzeOpts) -> CliResult<String> {
    let AnalyzeOpts {
        c,
        g,
        mirror,
        m,
        n,
        k,
        register_bits,
    } = *opts;
    if c < 2 {
        return Err(CliError::Usage(format!(
            "cardinality must be at least 2, got {c}"
        )));
    }
    let mad = analyzer::complexity_mad(m, n, k)?;
    let elut = analyzer::complexity_elut(m, n, k, c, g, mirror)?;
    let mut rows: Vec<(&str, Rational)> = vec![
        ("bpw_element", analyzer::bpw(c, g, mirror)?),
        (
            "bpw_bitwise",
            Rational::from_integer(analyzer::bpw_bitwise(c) as u128),
        ),
        (
            "g_max",
            Rational::from_integer(analyzer::max_group_size(c, register_bits, mirror)? as u128),
        ),
        (
            "table_entries",
            Rational::from_integer(analyzer::entry_count(c, g, mirror)?),
        ),
        ("mad_compute", Rational::from_integer(mad.compute)),
        ("mad_memory", Rational::from_integer(mad.memory)),
        ("mad_preprocess", Rational::from_integer(mad.preprocess)),
    ];
    rows.extend([
        ("elut_pre_compute", elut.pre_compute),
        ("elut_pre_memory", elut.pre_memory),
        ("elut_acc_compute", elut.acc_compute),
        ("elut_acc_memory", elut.acc_memory),
        ("elut_overall_compute", elut.overall_compute),
    ]);
    let mut out = String::from("metric,value,exact\n");
    for (name, r) in rows {
        writeln!(out, "{name},{},{}", decimal(r), exact(r)).unwrap();
    }
    let beats = analyzer::elut_beats_mad(c, g, m);
    writeln!(out, "elut_beats_mad,{beats},{beats}").unwrap();
    Ok(out)
}

// ---------------------------------------------------------------- gemm

#[derive(Debug, Clone)]
pub struct GemmOpts {
    pub tnf: PathBuf,
    pub act: PathBuf,
    pub tensor: Option<String>,
    pub lossless: bool,
    pub threads: usize,
}

/// The kernel a layout runs with the requested precision.
pub fn kernel_for(layout: Layout, lossless: bool) -> Kernel {
    Kernel::for_layout(layout)
        .find(|k| k.lossless() == lossless)
        .unwrap_or(Kernel::I2s)
}

pub fn gemm(opts: &GemmOpts) -> CliResult<String> {
    let file = read_tnf(&opts.tnf)?;
    let tensor = match &opts.tensor {
        Some(name) => file
            .tensors
            .iter()
            .find(|t| &t.name == name)
            .ok_or_else(|| CliError::Usage(format!("no tensor named {name:?}")))?,
        None => file
            .tensors
            .first()
            .ok_or_else(|| CliError::Usage("TNF file holds no tensors".into()))?,
    };
    let act = quantize_activations_per_tensor(&raw::read(&opts.act)?)?;
    let ternary = tensor.ternary()?;
    let layout = match &tensor.data {
        TensorData::Packed(p) => p.layout(),
        TensorData::Raw { .. } => Layout::Tl2,
    };
    let kernel = kernel_for(layout, opts.lossless);
    let packed = weights_for(tensor, &ternary, kernel)?;
    let out = dequantize(&kernel.run(&packed, &act, opts.threads.max(1))?);
    let mut text = String::new();
    for r in 0..out.rows() {
        let row: Vec<String> = out.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(text, "{}", row.join(" ")).unwrap();
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![5, 1, 3]), 3);
        assert_eq!(median(vec![4, 1, 3, 2]), 2);
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(decimal(Rational::new(5, 3)), "1.667");
        assert_eq!(decimal(Rational::new(5, 2)), "2.5");
        assert_eq!(decimal(Rational::from_integer(2)), "2");
        assert_eq!(exact(Rational::new(5, 3)), "5/3");
    }

    #[test]
    fn precision_picks_kernel() {
        assert_eq!(kernel_for(Layout::Tl2, true).name(), "TL2_1");
        assert_eq!(kernel_for(Layout::Tl1, false).name(), "TL1_0");
        assert_eq!(kernel_for(Layout::I2s, false), Kernel::I2s);
    }
}
