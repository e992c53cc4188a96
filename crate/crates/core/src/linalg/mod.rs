//! Dense tensors, seeded sampling, random matrices and patch matricization.

mod eigen;
mod gemm;
mod patches;
mod projection;
mod rng;
mod tensor;

pub use eigen::symmetric_eigenvalues;
pub use gemm::{gemm, MatRef};
pub use patches::{col2im, im2col, Padding, PatchGeometry};
pub use projection::{gaussian_matrix, random_orthoprojector, ProjectionKind, ProjectionMatrix};
pub use rng::{derive_seed, SeededRng};
pub use tensor::{dot, norm, Tensor};
