//! Naive reference GEMMs. Kept free of tables, blocking and packing so the
//! kernels are always checked against an independent code path.

use crate::error::{Error, Result};
use crate::tensor::{FloatMatrix, GemmResult, IntMatrix, QuantizedActivations, TernaryMatrix};

/// Exact `accum[m][n] = Σ_k w[m][k] * act[n][k]` with unit weight scale.
pub fn gemm_int_reference(w: &IntMatrix, act: &QuantizedActivations) -> Result<GemmResult> {
    if w.cols() != act.k() {
        return Err(Error::shape(format!(
            "weights K = {} vs activations K = {}",
            w.cols(),
            act.k()
        )));
    }
    let (m, n) = (w.rows(), act.n());
    let mut accum = vec![0i32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut sum = 0i32;
            for kk in 0..w.cols() {
                sum += w.row(i)[kk] as i32 * act.row(j)[kk] as i32;
            }
            accum[i * n + j] = sum;
        }
    }
    GemmResult::new(m, n, accum, 1.0 / act.act_scale())
}

/// [`gemm_int_reference`] carrying the ternary weight scale.
pub fn gemm_ternary_reference(t: &TernaryMatrix, act: &QuantizedActivations) -> Result<GemmResult> {
    let r = gemm_int_reference(&t.to_int_matrix(), act)?;
    GemmResult::new(
        r.m(),
        r.n(),
        r.into_accum(),
        t.weight_scale() / act.act_scale(),
    )
}

/// `out[m][n] = Σ_k w[m][k] * a[n][k]`, accumulated in f64.
pub fn gemm_float_reference(w: &FloatMatrix, a: &FloatMatrix) -> Result<FloatMatrix> {
    if w.cols() != a.cols() {
        return Err(Error::shape(format!(
            "weights K = {} vs activations K = {}",
            w.cols(),
            a.cols()
        )));
    }
    let mut out = Vec::with_capacity(w.rows() * a.rows());
    for i in 0..w.rows() {
        for j in 0..a.rows() {
            let sum: f64 = w
                .row(i)
                .iter()
                .zip(a.row(j))
                .map(|(&x, &y)| x as f64 * y as f64)
                .sum();
            out.push(sum as f32);
        }
    }
    FloatMatrix::new(w.rows(), a.rows(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn acts(n: usize, k: usize, data: Vec<i8>) -> QuantizedActivations {
        QuantizedActivations::new(n, k, data, 1.0).unwrap()
    }

    #[test]
    fn hand_checked_sum() {
        let w = IntMatrix::new(1, 4, vec![1, 0, -1, 1]).unwrap();
        let r = gemm_int_reference(&w, &acts(1, 4, vec![1, 2, 3, 4])).unwrap();
        assert_eq!(r.accum(), &[2]);
    }

    #[test]
    fn selection_and_negation() {
        let w = IntMatrix::new(3, 3, vec![1, 0, 0, 0, 0, 1, 0, 1, 0]).unwrap();
        let a = acts(2, 3, vec![5, -6, 7, 8, 9, -10]);
        let r = gemm_int_reference(&w, &a).unwrap();
        assert_eq!(r.accum(), &[5, 8, 7, -10, -6, 9]);
        let neg = gemm_int_reference(&w.negated(), &a).unwrap();
        let flipped: Vec<i32> = r.accum().iter().map(|v| -v).collect();
        assert_eq!(neg.accum(), &flipped[..]);
        assert!(gemm_int_reference(&w, &acts(1, 2, vec![1, 2])).is_err());
    }

    #[test]
    fn float_reference_basics() {
        let w = FloatMatrix::new(1, 1, vec![2.0]).unwrap();
        let a = FloatMatrix::new(1, 1, vec![3.0]).unwrap();
        assert_eq!(gemm_float_reference(&w, &a).unwrap().data(), &[6.0]);
        let z = gemm_float_reference(&FloatMatrix::zeros(3, 4), &FloatMatrix::zeros(2, 4)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn float_reference_matches_second_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f32> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = gemm_float_reference(
            &FloatMatrix::new(8, 8, w.clone()).unwrap(),
            &FloatMatrix::new(8, 8, a.clone()).unwrap(),
        )
        .unwrap();
        // column-major walk over the same products
        let mut expect = [0f64; 64];
        for kk in 0..8 {
            for i in 0..8 {
                for j in 0..8 {
                    expect[i * 8 + j] += w[i * 8 + kk] as f64 * a[j * 8 + kk] as f64;
                }
            }
        }
        for (g, e) in got.data().iter().zip(expect) {
            assert!((*g as f64 - e).abs() < 1e-6);
        }
    }
}
