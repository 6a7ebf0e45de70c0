//! Kernel-orthogonality regularization toolkit.
//!
//! Convolution kernels are reshaped into `o × d` matrices whose rows are the
//! filters. On top of that sit the regularizers (Frobenius, SRIP, strict and
//! relaxed disentangled norms) with analytic gradients, relaxation planning
//! for over- and less-determined layers, loss-share scheduling, and a small
//! trainer that exercises all of it on synthetic data.

pub mod error;
pub mod gradcheck;
pub mod measures;
pub mod relaxation;
pub mod rng;
pub mod scheduler;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use measures::{
    correlation_tril, evaluate, near_orth_report, regularizer_gradient, NearOrthReport,
    RegularizerResult, RegularizerSpec, Variant,
};
pub use relaxation::{PairMask, RelaxationPlanEntry};
pub use tensor::{reshape_kernel, KernelMatrix, KernelTensor};
