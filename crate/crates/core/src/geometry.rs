//! Rotation conventions and the generalized misalignment kernel.
//!
//! The reference frame `x'y'z'` has the receiver (PD) plane at `z' = 0` and
//! the transmitter waist at `z' = L`. Orientations are two-angle Euler
//! rotations: first about `y'` (azimuth), then about `x''` (elevation).
//!
//! For a point on the PD, the kernel returns the axial distance `z` from the
//! beam waist to the *principal disk* (the disk perpendicular to the beam
//! axis whose rim passes through the point) and the squared radius `rho^2`
//! of that disk. Those two numbers feed the Gaussian intensity profile.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rotation axis of the two-angle convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// `R_y'(beta)`, the azimuth rotation.
    Y,
    /// `R_x''(alpha)`, the elevation rotation.
    X,
}

/// Radial displacement and orientation errors of a link.
///
/// `phi_*` belong to the transmitter, `psi_*` to the receiver. Angles are
/// radians, displacements metres. The all-zero state is perfect alignment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MisalignmentState {
    pub x_de: f64,
    pub y_de: f64,
    pub phi_a: f64,
    pub phi_e: f64,
    pub psi_a: f64,
    pub psi_e: f64,
}

impl MisalignmentState {
    pub fn displacement(x_de: f64, y_de: f64) -> Self {
        Self {
            x_de,
            y_de,
            ..Self::default()
        }
    }

    pub fn tx_tilt(phi_a: f64, phi_e: f64) -> Self {
        Self {
            phi_a,
            phi_e,
            ..Self::default()
        }
    }

    pub fn rx_tilt(psi_a: f64, psi_e: f64) -> Self {
        Self {
            psi_a,
            psi_e,
            ..Self::default()
        }
    }

    pub fn has_angles(&self) -> bool {
        self.phi_a != 0.0 || self.phi_e != 0.0 || self.psi_a != 0.0 || self.psi_e != 0.0
    }

    /// True when any angle leaves the open interval `(-pi/2, pi/2)` where the
    /// link geometry is meaningful. Such states are still evaluated.
    pub fn has_extreme_angles(&self) -> bool {
        [self.phi_a, self.phi_e, self.psi_a, self.psi_e]
            .iter()
            .any(|a| a.abs() >= FRAC_PI_2)
    }
}

pub fn rotation_matrix(axis: Axis, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        Axis::Y => Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::X => Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
    }
}

/// Maps a point given in the PD's local `x''y''` plane to the reference frame,
/// i.e. `R_y'(-psi_a) R_x''(-psi_e) [x, y, 0]^T` in expanded form.
pub fn rx_point_to_ref(x: f64, y: f64, psi_a: f64, psi_e: f64) -> Vec3 {
    let (sa, ca) = psi_a.sin_cos();
    let (se, ce) = psi_e.sin_cos();
    Vec3::new(x * ca + y * sa * se, y * ce, x * sa - y * ca * se)
}

/// Unit normal of the transmitter (waist) plane.
pub fn tx_normal(phi_a: f64, phi_e: f64) -> Vec3 {
    let (sa, ca) = phi_a.sin_cos();
    let (se, ce) = phi_e.sin_cos();
    Vec3::new(-ce * sa, -se, ce * ca)
}

/// Unit normal of the PD surface.
pub fn rx_normal(psi_a: f64, psi_e: f64) -> Vec3 {
    let (sa, ca) = psi_a.sin_cos();
    let (se, ce) = psi_e.sin_cos();
    Vec3::new(-ce * sa, se, ce * ca)
}

/// `n_t . n_r`, the Lambert projection factor of the link.
pub fn alignment_cosine(state: &MisalignmentState) -> f64 {
    let (sea, cea) = state.phi_e.sin_cos();
    let (spe, cpe) = state.psi_e.sin_cos();
    cea * cpe * (state.phi_a - state.psi_a).cos() - sea * spe
}

/// Beam-frame coordinates of one point on the PD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmPointFrame {
    /// Axial distance from the waist to the principal disk.
    pub z_axial: f64,
    /// Squared principal-disk radius, clamped at zero.
    pub rho_sq: f64,
    /// `n_t . n_r`.
    pub cos_theta: f64,
}

impl GmmPointFrame {
    /// Points at or behind the waist receive no power in the forward-only model.
    pub fn is_behind_waist(&self) -> bool {
        self.z_axial <= 0.0
    }
}

/// Precomputed trigonometry for repeated kernel evaluation at a fixed
/// link distance and misalignment state.
#[derive(Debug, Clone, Copy)]
pub struct GmmKernel {
    distance: f64,
    x_de: f64,
    y_de: f64,
    // PD local -> reference: u = ux*x + uy*y, v = vy*y, w = wx*x + wy*y
    ux: f64,
    uy: f64,
    vy: f64,
    wx: f64,
    wy: f64,
    normal: Vec3,
    cos_theta: f64,
}

impl GmmKernel {
    pub fn new(distance: f64, state: &MisalignmentState) -> Self {
        let (sa, ca) = state.psi_a.sin_cos();
        let (se, ce) = state.psi_e.sin_cos();
        Self {
            distance,
            x_de: state.x_de,
            y_de: state.y_de,
            ux: ca,
            uy: sa * se,
            vy: ce,
            wx: sa,
            wy: -ca * se,
            normal: tx_normal(state.phi_a, state.phi_e),
            cos_theta: alignment_cosine(state),
        }
    }

    pub fn cos_theta(&self) -> f64 {
        self.cos_theta
    }

    /// Principal-disk construction for the PD point `(x, y)`.
    #[inline]
    pub fn frame(&self, x: f64, y: f64) -> GmmPointFrame {
        let u = self.ux * x + self.uy * y - self.x_de;
        let v = self.vy * y - self.y_de;
        let w = self.wx * x + self.wy * y;
        let n = &self.normal;
        let ell = -n.x * u - n.y * v - n.z * w;
        let z = self.distance * n.z + ell;
        let lw = self.distance - w;
        let d_sq = lw * lw + u * u + v * v;
        GmmPointFrame {
            z_axial: z,
            rho_sq: (d_sq - z * z).max(0.0),
            cos_theta: self.cos_theta,
        }
    }
}

/// Stepwise principal-disk construction for a single point. Use
/// [`GmmKernel`] when evaluating many points of one link.
pub fn gmm_point_frame(x: f64, y: f64, distance: f64, state: &MisalignmentState) -> GmmPointFrame {
    GmmKernel::new(distance, state).frame(x, y)
}

/// Expanded closed forms of the axial distance and squared principal-disk
/// radius, written out term by term. Returns `(z, rho_sq)` without clamping.
///
/// This is an algebraically independent route to [`gmm_point_frame`] and is
/// kept for cross-checking.
pub fn gmm_closed_form(x: f64, y: f64, distance: f64, s: &MisalignmentState) -> (f64, f64) {
    let (spa, cpa) = s.phi_a.sin_cos();
    let (spe, cpe) = s.phi_e.sin_cos();
    let (ssa, csa) = s.psi_a.sin_cos();
    let (sse, cse) = s.psi_e.sin_cos();
    let dphi = s.phi_a - s.psi_a;
    let z = distance * cpe * cpa
        + x * cpe * dphi.sin()
        + y * (sse * cpe * dphi.cos() + cse * spe)
        - s.x_de * cpe * spa
        - s.y_de * spe;
    let rho_sq = (distance - x * ssa + y * csa * sse).powi(2)
        + (x * csa + y * ssa * sse - s.x_de).powi(2)
        + (y * cse - s.y_de).powi(2)
        - z * z;
    (z, rho_sq)
}

/// Centre of element `index` (1-based, row-major) of a `k x k` square lattice
/// with pitch `pitch`, origin at the array centre, `y` pointing up.
pub fn array_element_xy(index: usize, k: usize, pitch: f64) -> Result<(f64, f64)> {
    if k == 0 || !(pitch > 0.0) {
        return domain(format!("need k >= 1 and pitch > 0, got k={k}, pitch={pitch}"));
    }
    if index == 0 || index > k * k {
        return domain(format!("element index {index} outside 1..={}", k * k));
    }
    let m = index.div_ceil(k);
    let n = index - (m - 1) * k;
    let half = (k as f64 - 1.0) / 2.0;
    Ok((
        (-half + n as f64 - 1.0) * pitch,
        (half - m as f64 + 1.0) * pitch,
    ))
}

/// Position of a transmitter element after the array is rotated by
/// `(phi_a, phi_e)` and shifted to `(x_de, y_de, L)`. The elevation enters
/// with a positive sign here, unlike [`rx_element_pose`].
pub fn tx_element_pose(x_j: f64, y_j: f64, state: &MisalignmentState, distance: f64) -> Vec3 {
    rotation_matrix(Axis::Y, -state.phi_a) * rotation_matrix(Axis::X, state.phi_e) * Vec3::new(x_j, y_j, 0.0)
        + Vec3::new(state.x_de, state.y_de, distance)
}

/// Position of a receiver element after the array is rotated by `(psi_a, psi_e)`.
pub fn rx_element_pose(x_i: f64, y_i: f64, state: &MisalignmentState) -> Vec3 {
    rotation_matrix(Axis::Y, -state.psi_a) * rotation_matrix(Axis::X, -state.psi_e) * Vec3::new(x_i, y_i, 0.0)
}
