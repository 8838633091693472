//! Link-level model of an indoor MIMO optical wireless backhaul built from
//! single-mode VCSEL arrays and photodetector (PD) arrays.
//!
//! The crate is organised bottom-up:
//!
//! - [`beam`]: TEM00 Gaussian beam propagation.
//! - [`geometry`]: rotation conventions and the generalized misalignment
//!   kernel that maps a point on a tilted, displaced PD into the beam frame.
//! - [`quadrature`]: disk integration (adaptive polar Gauss-Legendre and a
//!   Monte-Carlo cross-check).
//! - [`channel`]: SISO/MIMO DC gains, erf closed forms and array layouts.
//! - [`linkbudget`]: noise, SINR, SVD, bits per symbol and aggregate rate.
//! - [`oracle`]: Monte-Carlo ray sampling used to verify the channel gains.
//!
//! All quantities are SI (metres, watts, hertz, radians).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod linkbudget;
pub mod oracle;
pub mod quadrature;

pub use error::{Error, Result};
