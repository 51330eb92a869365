//! Analysis of discrete-time dynamical systems `x(n+1) = T(x(n))`.
//!
//! The crate is `no_std` (it needs `alloc`) and is organised bottom-up:
//!
//! * [`expr`]: the small expression language used to write map components
//!   and Lyapunov functions.
//! * [`dynsys`]: systems, motions, order reduction of scalar recurrences,
//!   fixed points, periods and distances to sets.
//! * [`cellset`]: grid cell covers of compact regions, outer images under the
//!   map, invariance tests and the invariant-part / limit-set iterations.
//! * [`limitset`]: limit sets of single points estimated from motion tails.
//! * [`lasalle`]: descent audits of a Lyapunov function and convergence
//!   verdicts toward `M ∩ V⁻¹(c)`.
//!
//! All norms are ℓ∞. Every routine is deterministic: the same inputs give
//! bitwise identical outputs.

#![no_std]
// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod cellset;
pub mod dynsys;
mod error;
pub mod expr;
pub mod lasalle;
pub mod limitset;

pub use cellset::{CellSet, GridSpec, ImageConfig, Padding};
pub use dynsys::{Bounds, HigherOrderSpec, Point, SystemSpec, Trajectory};
pub use error::{Error, Result};
pub use expr::{Environment, Expr, ParseError};
