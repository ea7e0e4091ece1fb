//! Tomographic image reconstruction: classical Fourier-slice and filtered
//! back-projection pipelines, plus an exact statevector simulation of the
//! quantum MRI and CT reconstruction algorithms built on the same operators.

pub mod classical_recon;
pub mod error;
mod fileio;
pub mod grids;
pub mod interp;
pub mod qsim;
pub mod radon;
pub mod spectral;

pub use num_complex::Complex64;

pub use crate::error::{Error, Result};
pub use crate::grids::{disk_phantom, read_image, shepp_logan, write_image, ImageFormat, ImageGrid, PhantomSpec};
pub use crate::interp::{build_interp_matrix, InterpolationScheme, SchurBound, SparseInterpMatrix};
pub use crate::radon::{backproject, forward_radon, read_sinogram, write_sinogram, Sinogram};
pub use crate::spectral::{ComplexField, Direction, Norm};
pub use crate::classical_recon::{fbp_reconstruct, fourier_slice_reconstruct, ncc, psnr, rmse, ReconMethod, ReconReport};
pub use crate::qsim::{
    DilatedHamiltonian, EvolutionEngine, EvolutionReport, PipelineMode, PipelineOptions, RegisterLayout, RegisterState,
};
