//! Paraxial TEM00 Gaussian beam propagation.
//!
//! A beam is described by its wavelength and its (effective) waist radius
//! `w0`. Everything else, such as the Rayleigh range, spot radius, wavefront
//! curvature and far-field divergence, derives from those two numbers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative tolerance used to check a stored Rayleigh range against the
/// value implied by wavelength and waist.
const RAYLEIGH_CONSISTENCY: f64 = 1e-12;

/// Gaussian source parameters. The Rayleigh range is cached at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeamParams")]
pub struct BeamParams {
    wavelength: f64,
    waist_radius: f64,
    rayleigh_range: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeamParams {
    wavelength: f64,
    waist_radius: f64,
    #[serde(default)]
    rayleigh_range: Option<f64>,
}

impl TryFrom<RawBeamParams> for BeamParams {
    type Error = Error;

    fn try_from(raw: RawBeamParams) -> Result<Self> {
        let beam = BeamParams::new(raw.wavelength, raw.waist_radius)?;
        if let Some(z_r) = raw.rayleigh_range {
            let rel = (z_r - beam.rayleigh_range).abs() / beam.rayleigh_range;
            if !(rel <= RAYLEIGH_CONSISTENCY) {
                return domain(format!(
                    "stored rayleigh_range {z_r:e} m is inconsistent with \
                     wavelength and waist (expected {:e} m)",
                    beam.rayleigh_range
                ));
            }
        }
        Ok(beam)
    }
}

impl BeamParams {
    pub fn new(wavelength: f64, waist_radius: f64) -> Result<Self> {
        let rayleigh_range = rayleigh_range(waist_radius, wavelength)?;
        Ok(Self {
            wavelength,
            waist_radius,
            rayleigh_range,
        })
    }

    /// Builds the beam whose spot radius at `distance` equals `spot_radius`.
    ///
    /// Two waists satisfy the condition; the smaller one (far-field regime,
    /// `distance > z_R`) is returned, matching a lens-widened VCSEL output.
    pub fn with_spot_radius_at(wavelength: f64, distance: f64, spot_radius: f64) -> Result<Self> {
        if !(wavelength > 0.0 && distance > 0.0 && spot_radius > 0.0) {
            return domain("wavelength, distance and spot radius must be positive");
        }
        // w0^4 - w^2 w0^2 + (lambda L / pi)^2 = 0
        let c = (wavelength * distance / PI).powi(2);
        let w2 = spot_radius * spot_radius;
        let disc = w2 * w2 - 4.0 * c;
        if disc < 0.0 {
            return domain(format!(
                "no Gaussian beam reaches a spot radius of {spot_radius:e} m at {distance} m"
            ));
        }
        // Smaller root written as 2c / (w^2 + sqrt(disc)) to avoid cancellation.
        let w0_sq = 2.0 * c / (w2 + disc.sqrt());
        Self::new(wavelength, w0_sq.sqrt())
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn waist_radius(&self) -> f64 {
        self.waist_radius
    }

    pub fn rayleigh_range(&self) -> f64 {
        self.rayleigh_range
    }

    /// Squared spot radius `w(z)^2`, without argument checks.
    #[inline]
    pub fn spot_radius_sq(&self, z: f64) -> f64 {
        let t = z / self.rayleigh_range;
        self.waist_radius * self.waist_radius * (1.0 + t * t)
    }

    /// Spot radius `w(z)`. See [`beam_radius`].
    pub fn spot_radius(&self, z: f64) -> Result<f64> {
        beam_radius(z, self)
    }
}

/// Rayleigh range `pi w0^2 / lambda`.
pub fn rayleigh_range(waist_radius: f64, wavelength: f64) -> Result<f64> {
    if !(waist_radius > 0.0 && waist_radius.is_finite()) {
        return domain(format!("waist radius must be positive, got {waist_radius}"));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return domain(format!("wavelength must be positive, got {wavelength}"));
    }
    Ok(PI * waist_radius * waist_radius / wavelength)
}

/// Spot radius at the `1/e^2` intensity contour, `w0 sqrt(1 + (z/z_R)^2)`.
pub fn beam_radius(z: f64, beam: &BeamParams) -> Result<f64> {
    if !(z >= 0.0) {
        return domain(format!("axial distance must be non-negative, got {z}"));
    }
    Ok(beam.spot_radius_sq(z).sqrt())
}

/// Wavefront radius of curvature `z (1 + (z_R/z)^2)`.
pub fn curvature_radius(z: f64, beam: &BeamParams) -> Result<f64> {
    if !(z > 0.0) {
        return domain(format!(
            "curvature radius is infinite at the waist; need z > 0, got {z}"
        ));
    }
    let t = beam.rayleigh_range / z;
    Ok(z * (1.0 + t * t))
}

/// Far-field divergence half-angle `lambda / (pi w0)`, in radians.
pub fn divergence_half_angle(beam: &BeamParams) -> f64 {
    beam.wavelength / (PI * beam.waist_radius)
}

/// Irradiance at squared radial distance `rho_sq` from the beam axis and
/// axial distance `z` from the waist, for transmitted power `p_t`.
pub fn intensity(rho_sq: f64, z: f64, p_t: f64, beam: &BeamParams) -> f64 {
    let w2 = beam.spot_radius_sq(z);
    2.0 * p_t / (PI * w2) * (-2.0 * rho_sq / w2).exp()
}
