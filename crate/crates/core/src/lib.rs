//! Profile-driven automated mixed precision.
//!
//! A single-precision program written in the [`nir`] IR is executed under
//! an instrumented floating-point kernel ([`fpkernel`]); the per-instruction
//! fault statistics gathered by [`profiler`] are binned by [`classify`]
//! against a threshold vector, and [`rewrite`] promotes the selected
//! instructions to double precision. [`sweep`] explores whole grids of
//! threshold vectors and groups them by result and by instruction change
//! set; [`bench`] provides the LU and Gauss-Legendre case studies.

pub mod bench;
pub mod classify;
pub mod fpkernel;
pub mod interp;
pub mod nir;
pub mod profiler;
pub mod rewrite;
pub mod sweep;
