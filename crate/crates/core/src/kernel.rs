//! The five kernel variants behind one entry point.

use crate::error::Result;
use crate::lut::{run_lut_kernel, LutKernel};
use crate::mad::gemm_i2s_threaded;
use crate::pack::{Layout, PackedWeights};
use crate::tensor::{GemmResult, QuantizedActivations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Lut(LutKernel),
    I2s,
}

impl Kernel {
    pub const ALL: [Kernel; 5] = [
        Kernel::Lut(LutKernel::Tl1_0),
        Kernel::Lut(LutKernel::Tl1_1),
        Kernel::Lut(LutKernel::Tl2_0),
        Kernel::Lut(LutKernel::Tl2_1),
        Kernel::I2s,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Lut(k) => k.name(),
            Kernel::I2s => "I2_S",
        }
    }

    pub fn layout(self) -> Layout {
        match self {
            Kernel::Lut(k) => k.layout(),
            Kernel::I2s => Layout::I2s,
        }
    }

    pub fn lossless(self) -> bool {
        match self {
            Kernel::Lut(k) => k.lossless(),
            Kernel::I2s => true,
        }
    }

    /// Kernels that run on weights packed as `layout`.
    pub fn for_layout(layout: Layout) -> impl Iterator<Item = Kernel> {
        Self::ALL.into_iter().filter(move |k| k.layout() == layout)
    }

    pub fn from_name(name: &str) -> Option<Kernel> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
    }

    /// Full mpGEMM from quantized activations: table setup (LUT kernels) plus accumulation.
    pub fn run(
        self,
        packed: &PackedWeights,
        act: &QuantizedActivations,
        threads: usize,
    ) -> Result<GemmResult> {
        match self {
            Kernel::Lut(k) => run_lut_kernel(k, packed, act, threads),
            Kernel::I2s => gemm_i2s_threaded(packed, act, threads),
        }
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
