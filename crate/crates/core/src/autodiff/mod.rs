//! Dense tensors, layer kernels, and reverse-mode differentiation.
//!
//! The split is deliberate: [`ops`] holds pure forward/backward kernels with a
//! fixed, documented summation order (row-major, sequential), and [`graph`]
//! records kernel applications on a tape so a scalar loss can be differentiated
//! with respect to every reachable parameter.

pub mod graph;
pub mod ops;
pub mod tensor;
