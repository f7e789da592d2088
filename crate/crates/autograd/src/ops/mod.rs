//! Differentiable primitives, implemented as methods on [`Var`](crate::Var).

mod conv;
mod pointwise;
mod reduce;
mod shape;
mod spatial;

pub use shape::softmax;
pub use spatial::INSTANCE_NORM_EPS;
