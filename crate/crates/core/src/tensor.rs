//! Dense row-major containers shared by every kernel.
//!
//! Weights are `m × k` (output rows by reduction length), activations are
//! `n × k`, and results are `m × n` int32 accumulators carrying the single
//! float scale that turns them back into real values.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FloatMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "float matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::shape(format!("non-finite value at index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }
}

/// Small-integer weight matrix (any value set that fits in `i8`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl IntMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "int matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn negated(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }
}

/// `m × k` matrix over {-1, 0, 1} with its absmean scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TernaryMatrix {
    m: usize,
    k: usize,
    values: Vec<i8>,
    weight_scale: f32,
}

impl TernaryMatrix {
    pub fn new(m: usize, k: usize, values: Vec<i8>, weight_scale: f32) -> Result<Self> {
        if values.len() != m * k {
            return Err(Error::shape(format!(
                "ternary matrix {m}x{k} needs {} values, got {}",
                m * k,
                values.len()
            )));
        }
        if let Some(&bad) = values.iter().find(|v| !(-1..=1).contains(*v)) {
            return Err(Error::InvalidTernary(bad as i32));
        }
        if !(weight_scale.is_finite() && weight_scale > 0.0) {
            return Err(Error::Config(format!(
                "weight scale must be positive, got {weight_scale}"
            )));
        }
        Ok(Self {
            m,
            k,
            values,
            weight_scale,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.values[r * self.k..(r + 1) * self.k]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.values[r * self.k + c]
    }

    pub fn weight_scale(&self) -> f32 {
        self.weight_scale
    }

    pub fn to_int_matrix(&self) -> IntMatrix {
        IntMatrix {
            rows: self.m,
            cols: self.k,
            data: self.values.clone(),
        }
    }
}

/// `n × k` int8 activations quantized with one per-tensor scale.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedActivations {
    n: usize,
    k: usize,
    data: Vec<i8>,
    act_scale: f32,
}

impl QuantizedActivations {
    pub fn new(n: usize, k: usize, data: Vec<i8>, act_scale: f32) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::shape(format!(
                "activations {n}x{k} need {} values, got {}",
                n * k,
                data.len()
            )));
        }
        if data.contains(&i8::MIN) {
            return Err(Error::shape("activation value -128 is outside [-127, 127]"));
        }
        if !(act_scale.is_finite() && act_scale > 0.0) {
            return Err(Error::Config(format!(
                "activation scale must be positive, got {act_scale}"
            )));
        }
        Ok(Self {
            n,
            k,
            data,
            act_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.data[r * self.k..(r + 1) * self.k]
    }

    pub fn act_scale(&self) -> f32 {
        self.act_scale
    }
}

/// `m × n` int32 accumulators; real output is `accum * dequant_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct GemmResult {
    m: usize,
    n: usize,
    accum: Vec<i32>,
    dequant_scale: f32,
}

impl GemmResult {
    pub fn new(m: usize, n: usize, accum: Vec<i32>, dequant_scale: f32) -> Result<Self> {
        if accum.len() != m * n {
            return Err(Error::shape(format!(
                "result {m}x{n} needs {} accumulators, got {}",
                m * n,
                accum.len()
            )));
        }
        Ok(Self {
            m,
            n,
            accum,
            dequant_scale,
        })
    }

    pub(crate) fn from_parts(m: usize, n: usize, accum: Vec<i32>, dequant_scale: f32) -> Self {
        debug_assert_eq!(accum.len(), m * n);
        Self {
            m,
            n,
            accum,
            dequant_scale,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn accum(&self) -> &[i32] {
        &self.accum
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.accum[row * self.n + col]
    }

    pub fn dequant_scale(&self) -> f32 {
        self.dequant_scale
    }

    pub fn into_accum(self) -> Vec<i32> {
        self.accum
    }
}

/// Combined scale for ternary weights against quantized activations.
pub fn combined_scale(weight_scale: f32, act_scale: f32) -> f32 {
    weight_scale / act_scale
}

pub fn dequantize(result: &GemmResult) -> FloatMatrix {
    let data = result
        .accum
        .iter()
        .map(|&a| a as f32 * result.dequant_scale)
        .collect();
    FloatMatrix {
        rows: result.m,
        cols: result.n,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dequantize_scalar() {
        let r = GemmResult::new(1, 1, vec![2], 0.5).unwrap();
        assert_eq!(dequantize(&r).data(), &[1.0]);
        let r = GemmResult::new(1, 1, vec![100], 0.03).unwrap();
        assert!((dequantize(&r).get(0, 0) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn dequantize_zeros() {
        let r = GemmResult::new(1, 2, vec![0, 0], 17.25).unwrap();
        assert_eq!(dequantize(&r).data(), &[0.0, 0.0]);
    }

    #[test]
    fn constructors_reject_bad_shapes() {
        assert!(matches!(
            FloatMatrix::new(2, 2, vec![0.0; 3]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            FloatMatrix::new(1, 1, vec![f32::NAN]),
            Err(Error::Shape(_))
        ));
        assert_eq!(
            TernaryMatrix::new(1, 2, vec![1, 2], 1.0),
            Err(Error::InvalidTernary(2))
        );
        assert!(TernaryMatrix::new(1, 1, vec![1], 0.0).is_err());
        assert!(QuantizedActivations::new(1, 1, vec![-128], 1.0).is_err());
        assert!(GemmResult::new(2, 2, vec![0; 3], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn dequantize_round_trips(
            m in 1usize..6,
            n in 1usize..6,
            seed in prop::collection::vec(-(1i32 << 24)..=(1i32 << 24), 36),
            scale_exp in -8i32..8,
        ) {
            // power-of-two scales keep the product exact in f32
            let scale = 2f32.powi(scale_exp);
            let accum: Vec<i32> = seed[..m * n].to_vec();
            let r = GemmResult::new(m, n, accum.clone(), scale).unwrap();
            let out = dequantize(&r);
            prop_assert_eq!((out.rows(), out.cols()), (m, n));
            let back: Vec<i32> = out.data().iter().map(|v| (v / scale) as i32).collect();
            prop_assert_eq!(back, accum);
        }
    }
}
