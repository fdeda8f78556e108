//! Numerical laboratory for the parabolic-elliptic chemotaxis system
//!
//! ```text
//! u_t = u_xx - chi (u v_x)_x + u (a - b u),    0 = v_xx - v + u
//! ```
//!
//! on the real line: wave-speed constants, sub- and super-solution
//! envelopes, traveling-wave construction by iterating the frozen
//! moving-frame flow, and spreading-speed measurements in the lab frame.

pub mod constants;
pub mod dynamics;
pub mod elliptic;
pub mod envelopes;
pub mod error;
pub mod grid;
pub mod quadrature;
pub mod spreading;
pub mod tridiag;
pub mod wave;

pub use error::{Error, Result};

/// Version string embedded in every output artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
