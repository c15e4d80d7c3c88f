use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ternlut_cli::commands::{self, VerifyOpts};
use ternlut_cli::raw;
use ternlut_cli::tnf::{TensorData, TnfFile, TnfTensor};
use ternlut_core::pack::pack;
use ternlut_core::{BlockGeometry, FloatMatrix, Layout, TernaryMatrix};

fn ternlut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ternlut"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_floats(dir: &Path, name: &str, m: usize, k: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..m * k).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let path = dir.join(name);
    raw::write(&path, &FloatMatrix::new(m, k, data).unwrap()).unwrap();
    path
}

fn quantize(dir: &Path, m: usize, k: usize, layout: &str) -> (PathBuf, Output) {
    let input = write_floats(dir, &format!("w{m}x{k}.bin"), m, k, 3);
    let out = dir.join(format!("w{m}x{k}_{layout}.tnf"));
    let o = ternlut(&[
        "quantize",
        "-i",
        input.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--layout",
        layout,
    ]);
    (out, o)
}

fn payload_len(path: &Path) -> usize {
    match &TnfFile::from_bytes(&std::fs::read(path).unwrap())
        .unwrap()
        .tensors[0]
        .data
    {
        TensorData::Packed(p) => p.payload_len(),
        TensorData::Raw { matrix, .. } => matrix.values().len(),
    }
}

#[test]
fn quantize_payload_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let (tl2, o) = quantize(dir.path(), 1, 192, "tl2");
    assert!(o.status.success());
    assert!(stdout(&o).contains("payload_bytes=40"));
    assert_eq!(payload_len(&tl2), 40);

    let (i2s, o) = quantize(dir.path(), 1, 128, "i2s");
    assert!(o.status.success());
    assert_eq!(payload_len(&i2s), 32);

    let (_, o) = quantize(dir.path(), 1, 130, "i2s");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn quantize_reports_scale_and_bpw() {
    let dir = tempfile::tempdir().unwrap();
    let (_, o) = quantize(dir.path(), 4, 256, "tl1");
    let text = stdout(&o);
    assert!(text.contains("beta="), "{text}");
    assert!(text.contains("bpw=2.0000"), "{text}");
}

#[test]
fn io_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out = dir.path().join("x.tnf");
    let o = ternlut(&[
        "quantize",
        "-i",
        missing.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let (_, o) = quantize(dir.path(), 1, 192, "tl9");
    assert_eq!(o.status.code(), Some(2));
    let o = ternlut(&["analyze", "--c", "3", "--g", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_every_layout() {
    let dir = tempfile::tempdir().unwrap();
    for (layout, kernels) in [("tl1", 2), ("tl2", 2), ("i2s", 1), ("raw", 5)] {
        let (tnf, _) = quantize(dir.path(), 32, 384, layout);
        let o = ternlut(&["verify", tnf.to_str().unwrap(), "--trials", "3"]);
        let text = stdout(&o);
        assert_eq!(o.status.code(), Some(0), "{text}");
        assert_eq!(text.matches(" PASS").count(), kernels + 1, "{text}");
        for line in text.lines().filter(|l| l.contains(" exact ")) {
            assert!(line.contains("max_abs_err=0"), "{line}");
        }
    }
}

#[test]
fn lossy_verify_has_bounded_nonzero_error() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 64, 384, "tl2");
    let text = stdout(&ternlut(&[
        "verify",
        tnf.to_str().unwrap(),
        "--trials",
        "4",
    ]));
    let line = text.lines().find(|l| l.contains("TL2_0")).unwrap();
    assert!(line.ends_with("PASS"), "{line}");
    assert!(!line.contains("max_abs_err=0 "), "{line}");
}

#[test]
fn corrupt_payload_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 1, 128, "i2s");
    let mut bytes = std::fs::read(&tnf).unwrap();
    let n = bytes.len();
    bytes[n - 1] = 0xFF;
    std::fs::write(&tnf, bytes).unwrap();
    let o = ternlut(&["verify", tnf.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt"));
}

#[test]
fn verify_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 64, 2560, "raw");
    let path = tnf.to_str().unwrap();
    let base = ternlut(&[
        "verify",
        path,
        "--seed",
        "7",
        "--trials",
        "2",
        "--threads",
        "1",
    ]);
    assert!(base.status.success());
    for threads in ["1", "2", "4", "8", "1,2,4,8"] {
        let o = ternlut(&[
            "verify",
            path,
            "--seed",
            "7",
            "--trials",
            "2",
            "--threads",
            threads,
        ]);
        assert_eq!(o.stdout, base.stdout, "threads {threads}");
    }
    let other = ternlut(&["verify", path, "--seed", "8", "--trials", "2"]);
    assert_ne!(other.stdout, base.stdout);
}

#[test]
fn bench_rows_per_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 32, 384, "raw");
    let o = ternlut(&[
        "bench",
        tnf.to_str().unwrap(),
        "--threads",
        "1,2,4",
        "--reps",
        "3",
    ]);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kernel,m,n,k,threads,reps,ns,gbps,bpw"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    for kernel in ["TL1_0", "TL1_1", "TL2_0", "TL2_1", "I2_S"] {
        let threads: Vec<&str> = rows
            .iter()
            .filter(|r| r[0] == kernel)
            .map(|r| r[4])
            .collect();
        assert_eq!(threads, ["1", "2", "4"]);
    }
    for r in &rows {
        assert_eq!(r[5], "3");
        let bpw: f64 = r[8].parse().unwrap();
        let expect = if r[0].starts_with("TL2") {
            5.0 / 3.0
        } else {
            2.0
        };
        assert!((bpw - expect).abs() < 1e-3, "{r:?}");
    }
}

#[test]
fn bench_skips_unpackable_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 16, 192, "raw");
    let o = ternlut(&["bench", tnf.to_str().unwrap(), "--reps", "1"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("I2_S"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("I2_S"));
}

#[test]
fn analyze_examples() {
    let row = |args: &[&str], metric: &str| -> String {
        let text = stdout(&ternlut(args));
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{metric},")).map(str::to_owned))
            .unwrap_or_else(|| panic!("{metric} missing in {text}"))
    };
    assert_eq!(
        row(
            &["analyze", "--c", "3", "--g", "3", "--mirror"],
            "bpw_element"
        ),
        "1.667,5/3"
    );
    assert_eq!(
        row(
            &["analyze", "--c", "3", "--mirror", "--register-bits", "128"],
            "g_max"
        ),
        "3,3"
    );
    assert_eq!(
        row(
            &["analyze", "--c", "5", "--g", "2", "--mirror"],
            "bpw_element"
        ),
        "2.5,5/2"
    );
    assert_eq!(row(&["analyze", "--c", "3", "--g", "2"], "g_max"), "2,2");
}

#[test]
fn gemm_prints_dequantized_output() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 8, 384, "tl2");
    let act = write_floats(dir.path(), "act.bin", 3, 384, 9);
    let exact = stdout(&ternlut(&[
        "gemm",
        tnf.to_str().unwrap(),
        "--act",
        act.to_str().unwrap(),
    ]));
    let lines: Vec<&str> = exact.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l.split(' ').count() == 3));
    let threaded = stdout(&ternlut(&[
        "gemm",
        tnf.to_str().unwrap(),
        "--act",
        act.to_str().unwrap(),
        "--threads",
        "4",
    ]));
    assert_eq!(threaded, exact);
    let lossy = ternlut(&[
        "gemm",
        tnf.to_str().unwrap(),
        "--act",
        act.to_str().unwrap(),
        "--lossy",
    ]);
    assert!(lossy.status.success());
    let short = write_floats(dir.path(), "short.bin", 3, 192, 9);
    let o = ternlut(&[
        "gemm",
        tnf.to_str().unwrap(),
        "--act",
        short.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn in_process_verify_matches_binary() {
    let dir = tempfile::tempdir().unwrap();
    let (tnf, _) = quantize(dir.path(), 16, 256, "tl1");
    let opts = VerifyOpts {
        tnf: tnf.clone(),
        trials: 2,
        seed: 5,
        n: 4,
        threads: vec![1, 2],
    };
    let report = commands::verify(&opts).unwrap();
    assert!(report.passed);
    let o = ternlut(&[
        "verify",
        tnf.to_str().unwrap(),
        "--trials",
        "2",
        "--seed",
        "5",
        "--threads",
        "1,2",
    ]);
    assert_eq!(stdout(&o), report.text);
}

fn ternary_strategy() -> impl Strategy<Value = (usize, usize, Vec<i8>)> {
    (
        1usize..6,
        prop::sample::select(vec![128usize, 192, 256, 384]),
    )
        .prop_flat_map(|(m, k)| (Just(m), Just(k), prop::collection::vec(-1i8..=1, m * k)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tnf_round_trip_keeps_payload_bytes(
        (m, k, values) in ternary_strategy(),
        layout in prop::sample::select(vec![Layout::Tl1, Layout::Tl2, Layout::I2s]),
        bm in prop::sample::select(vec![16usize, 32]),
        scale in 0.01f32..4.0,
    ) {
        prop_assume!(layout != Layout::I2s || k % 128 == 0);
        let t = TernaryMatrix::new(m, k, values, scale).unwrap();
        let g = BlockGeometry::with_bm(bm).unwrap();
        let packed = pack(&t, layout, g).unwrap();
        let file = TnfFile { tensors: vec![TnfTensor::packed("t", packed.clone()), TnfTensor::raw("r", t, g)] };
        let back = TnfFile::from_bytes(&file.to_bytes().unwrap()).unwrap();
        match &back.tensors[0].data {
            TensorData::Packed(p) => prop_assert_eq!(p.payload(), packed.payload()),
            TensorData::Raw { .. } => prop_assert!(false, "layout changed"),
        }
        prop_assert_eq!(back, file);
    }
}
