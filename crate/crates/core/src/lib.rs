//! Ternary-weight mixed-precision GEMM kernels.
//!
//! Weights in {-1, 0, 1} with one absmean scale are multiplied against int8
//! activations with one per-tensor scale. Five kernels are provided:
//!
//! | kernel | method | bits/weight | exact |
//! |--------|--------|-------------|-------|
//! | TL1_0  | LUT, pairs            | 2    | no  |
//! | TL1_1  | LUT, pairs            | 2    | yes |
//! | TL2_0  | LUT, mirrored triples | 5/3  | no  |
//! | TL2_1  | LUT, mirrored triples | 5/3  | yes |
//! | I2_S   | multiply-add          | 2    | yes |
//!
//! [`elut`] generalizes the LUT approach to other small value sets and
//! [`analyzer`] holds the matching cost model. [`oracle`] has the naive
//! references everything is tested against.

pub mod analyzer;
pub mod elut;
pub mod error;
pub mod kernel;
pub mod lut;
pub mod mad;
pub mod oracle;
pub mod pack;
mod parallel;
pub mod quantize;
pub mod tensor;

pub use error::{Error, Result};
pub use kernel::Kernel;
pub use lut::{LookupTable, LutKernel, LutMode};
pub use pack::{packed_size, BlockGeometry, Layout, PackedWeights};
pub use quantize::{quantize_activations_per_tensor, ternarize_absmean};
pub use tensor::{
    dequantize, FloatMatrix, GemmResult, IntMatrix, QuantizedActivations, TernaryMatrix,
};
