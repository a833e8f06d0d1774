//! Frequency-addressed control of spin qubits sharing one microwave line.
//!
//! A DC current through the on-chip wire sets up a field gradient that gives
//! every NV centre its own ESR frequency; the AC drive on the same wire then
//! addresses spins by frequency. This crate covers the pieces needed to design
//! and check such a register:
//!
//! - [`physics`]: constants, dipole geometry and Zeeman algebra
//! - [`field`]: wire fields, address maps and geometry calibration
//! - [`dynamics`]: exact two-level propagation and measurement simulators
//! - [`optimizer`]: gradient synthesis of selective pulses
//!
//! Grid-style workloads run on rayon when the `parallel` feature (default) is
//! on and sequentially otherwise, with identical results.

pub mod dynamics;
pub mod error;
pub mod field;
pub mod optimizer;
pub mod par;
pub mod physics;

pub use error::{Error, Result};
