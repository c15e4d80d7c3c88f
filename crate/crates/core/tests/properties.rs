use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ternlut_core::elut::{gemm_bitwise_ref, gemm_elut, gemm_elut_threaded, ElutConfig};
use ternlut_core::lut::{build_table, gemm_lut, LutKernel};
use ternlut_core::oracle::{gemm_float_reference, gemm_int_reference, gemm_ternary_reference};
use ternlut_core::pack::{pack, unpack};
use ternlut_core::{
    dequantize, quantize_activations_per_tensor, ternarize_absmean, BlockGeometry, FloatMatrix, IntMatrix, Kernel,
    Layout, QuantizedActivations, TernaryMatrix,
};

fn shape() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..70, 1usize..6, prop::sample::select(vec![128usize, 256, 384, 640]))
}

fn instance() -> impl Strategy<Value = (TernaryMatrix, QuantizedActivations, BlockGeometry)> {
    (shape(), prop::sample::select(vec![16usize, 32]), prop::sample::select(vec![48usize, 96, 192])).prop_flat_map(
        |((m, n, k), bm, bk3)| {
            (
                prop::collection::vec(-1i8..=1, m * k),
                prop::collection::vec(-127i8..=127, n * k),
            )
                .prop_map(move |(w, a)| {
                    (
                        TernaryMatrix::new(m, k, w, 1.0).unwrap(),
                        QuantizedActivations::new(n, k, a, 1.0).unwrap(),
                        BlockGeometry::new(bm, bk3).unwrap(),
                    )
                })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_independent_of_thread_count((w, act, geometry) in instance()) {
        for kernel in Kernel::ALL {
            let packed = pack(&w, kernel.layout(), geometry).unwrap();
            let single = kernel.run(&packed, &act, 1).unwrap();
            for threads in [2, 4, 8] {
                prop_assert_eq!(kernel.run(&packed, &act, threads).unwrap().into_accum(), single.accum());
            }
        }
    }

    #[test]
    fn lossless_kernels_equal_reference((w, act, geometry) in instance()) {
        let exact = gemm_ternary_reference(&w, &act).unwrap();
        for kernel in Kernel::ALL.into_iter().filter(|k| k.lossless()) {
            let packed = pack(&w, kernel.layout(), geometry).unwrap();
            prop_assert_eq!(unpack(&packed).unwrap(), w.clone());
            prop_assert_eq!(kernel.run(&packed, &act, 3).unwrap().into_accum(), exact.accum());
        }
    }

    #[test]
    fn lossy_kernels_stay_within_bound((w, act, geometry) in instance()) {
        let exact = gemm_int_reference(&w.to_int_matrix(), &act).unwrap();
        for kernel in [LutKernel::Tl1_0, LutKernel::Tl2_0] {
            let packed = pack(&w, kernel.layout(), geometry).unwrap();
            let lut = build_table(kernel, &act, &geometry).unwrap();
            let got = gemm_lut(&packed, &lut, false).unwrap();
            for (i, (&l, &e)) in got.accum().iter().zip(exact.accum()).enumerate() {
                prop_assert!(((l - e).abs() as f64) <= lut.lossy_error_bound(i % act.n()));
            }
        }
    }

    #[test]
    fn elut_agrees_with_mad_and_bitwise(
        set in prop::sample::select(vec![vec![-1i8, 0, 1], vec![-2, -1, 1, 2], vec![-2, -1, 0, 1, 2], vec![0, 1]]),
        g in 1usize..=3,
        m in 1usize..20,
        n in 1usize..5,
        groups in 1usize..40,
        seed: u64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = g * groups;
        let w = IntMatrix::new(m, k, (0..m * k).map(|_| set[rng.random_range(0..set.len())]).collect()).unwrap();
        let act = QuantizedActivations::new(n, k, (0..n * k).map(|_| rng.random_range(-127i8..=127)).collect(), 1.0).unwrap();
        let mad = gemm_int_reference(&w, &act).unwrap();
        let bits = if set.contains(&-2) { 3 } else if set.contains(&-1) { 2 } else { 1 };
        prop_assert_eq!(gemm_bitwise_ref(&w, &act, bits).unwrap().into_accum(), mad.accum());
        let symmetric = set.iter().all(|v| set.contains(&-v));
        for mirror in [false, true] {
            if mirror && !symmetric {
                continue;
            }
            let cfg = ElutConfig::with_register_budget(&set, g, mirror, 128).unwrap();
            prop_assert_eq!(gemm_elut(&w, &act, &cfg).unwrap().into_accum(), mad.accum());
            prop_assert_eq!(gemm_elut_threaded(&w, &act, &cfg, 4).unwrap().into_accum(), mad.accum());
        }
    }
}

/// Float weights and activations through the whole pipeline land close to the
/// float product of the ternarized weights.
#[test]
fn float_pipeline_tracks_float_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (m, n, k) = (48, 3, 768);
    let normal = |rng: &mut ChaCha8Rng, len| (0..len).map(|_| StandardNormal.sample(rng)).collect::<Vec<f32>>();
    let wf = FloatMatrix::new(m, k, normal(&mut rng, m * k)).unwrap();
    let af = FloatMatrix::new(n, k, normal(&mut rng, n * k)).unwrap();
    let w = ternarize_absmean(&wf).unwrap();
    let act = quantize_activations_per_tensor(&af).unwrap();
    let dequant_w: Vec<f32> = w.values().iter().map(|&v| v as f32 * w.weight_scale()).collect();
    let reference = gemm_float_reference(&FloatMatrix::new(m, k, dequant_w).unwrap(), &af).unwrap();
    let ref_norm: f64 = reference.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    for kernel in Kernel::ALL {
        let packed = pack(&w, kernel.layout(), BlockGeometry::default()).unwrap();
        let out = dequantize(&kernel.run(&packed, &act, 2).unwrap());
        let err: f64 = out
            .data()
            .iter()
            .zip(reference.data())
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        // activation rounding dominates; lossy tables add about one percent
        assert!(err / ref_norm < 0.03, "{kernel}: relative error {}", err / ref_norm);
    }
}

#[test]
fn layouts_reject_what_they_cannot_hold() {
    let t = TernaryMatrix::new(2, 130, vec![0; 260], 1.0).unwrap();
    assert!(pack(&t, Layout::I2s, BlockGeometry::default()).is_err());
    assert!(pack(&t, Layout::Tl1, BlockGeometry::default()).is_ok());
    let odd = TernaryMatrix::new(1, 97, vec![1; 97], 1.0).unwrap();
    assert!(pack(&odd, Layout::Tl1, BlockGeometry::default()).is_err());
    assert!(pack(&odd, Layout::Tl2, BlockGeometry::default()).is_err());
}
