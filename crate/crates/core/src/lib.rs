// Guards like `!(x > 0.0)` also reject NaN, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod coordinates;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod ftl;
pub mod kernels;
pub mod quad;
pub mod reference;
pub mod scheme;
pub mod velocity;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
pub use kernels::{eulerian_weights, lagrangian_weights, Kernel, WeightRow};
pub use scheme::{BoundaryMode, LagrangianGrid, PairScheme, PairState, RunOptions, Trajectory};
pub use velocity::VelocityModel;
