//! Absmean ternary weights and per-tensor int8 activations.
//!
//! Both quantizers round half away from zero. Activations are clamped to
//! `[-127, 127]` so that every value has an int8 negation.

use crate::error::{Error, Result};
use crate::tensor::{FloatMatrix, QuantizedActivations, TernaryMatrix};

pub const ACT_MAX: i32 = 127;

/// `values = clamp(round(w / mean|w|), -1, 1)`, scale `mean|w|`.
pub fn ternarize_absmean(w: &FloatMatrix) -> Result<TernaryMatrix> {
    if w.data().is_empty() {
        return Err(Error::shape("cannot ternarize an empty matrix"));
    }
    let sum: f64 = w.data().iter().map(|v| v.abs() as f64).sum();
    let beta = sum / w.data().len() as f64;
    if beta == 0.0 {
        return Err(Error::AllZeroWeights);
    }
    let values = w
        .data()
        .iter()
        .map(|&v| (v as f64 / beta).round().clamp(-1.0, 1.0) as i8)
        .collect();
    TernaryMatrix::new(w.rows(), w.cols(), values, beta as f32)
}

/// `scale = 127 / max|a|` (1 for an all-zero tensor), `data = clamp(round(a * scale))`.
pub fn quantize_activations_per_tensor(a: &FloatMatrix) -> Result<QuantizedActivations> {
    if a.data().is_empty() {
        return Err(Error::shape("cannot quantize an empty activation matrix"));
    }
    let max_abs = a.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    let scale = if max_abs == 0.0 {
        1.0
    } else {
        ACT_MAX as f32 / max_abs
    };
    let data = a
        .data()
        .iter()
        .map(|&v| {
            (v as f64 * scale as f64)
                .round()
                .clamp(-(ACT_MAX as f64), ACT_MAX as f64) as i8
        })
        .collect();
    QuantizedActivations::new(a.rows(), a.cols(), data, scale)
}
