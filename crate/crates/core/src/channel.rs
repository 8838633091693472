//! DC channel gains of single links and of VCSEL/PD array pairs.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{intensity, BeamParams};
use crate::error::{domain, Error, Result};
use crate::geometry::{
    array_element_xy, rx_element_pose, tx_element_pose, GmmKernel, MisalignmentState,
};
use crate::quadrature::{integrate_disk, QuadratureSpec};

/// Circular photodetector aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPd", into = "RawPd")]
pub struct PdGeometry {
    radius: f64,
    equivalent_square_side: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPd {
    radius: f64,
}

impl TryFrom<RawPd> for PdGeometry {
    type Error = Error;
    fn try_from(raw: RawPd) -> Result<Self> {
        Self::new(raw.radius)
    }
}

impl From<PdGeometry> for RawPd {
    fn from(pd: PdGeometry) -> Self {
        RawPd { radius: pd.radius }
    }
}

impl PdGeometry {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return domain(format!("PD radius must be positive, got {radius}"));
        }
        Ok(Self {
            radius,
            equivalent_square_side: PI.sqrt() * radius,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Side `a_PD = sqrt(pi) r_PD` of the square with the same area.
    pub fn equivalent_square_side(&self) -> f64 {
        self.equivalent_square_side
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }
}

/// Array arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// `K x K` square lattice.
    Square(usize),
    /// 5x5 lattice, 25 PDs.
    #[serde(rename = "config_i")]
    ConfigI,
    /// Config I plus a 4x4 interstitial lattice at the cell corners, 41 PDs.
    #[serde(rename = "config_ii")]
    ConfigII,
    /// 9x9 lattice at half pitch over the Config I aperture, 81 PDs.
    #[serde(rename = "config_iii")]
    ConfigIII,
}

impl LayoutKind {
    /// Lattice size `K` that fixes pitch and aperture.
    pub fn base_k(&self) -> usize {
        match self {
            LayoutKind::Square(k) => *k,
            _ => 5,
        }
    }
}

/// Element centres of a transmitter or receiver array in its local plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    pub kind: LayoutKind,
    pub elements: Vec<(f64, f64)>,
    /// Present for receiver arrays.
    pub pd: Option<PdGeometry>,
    /// Centre-to-centre distance of the base lattice.
    pub pitch: f64,
    /// Side length of the square aperture.
    pub side: f64,
}

impl ArrayLayout {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `N * A_PD / W^2`, or `None` for a transmitter array.
    pub fn fill_factor(&self) -> Option<f64> {
        self.pd
            .map(|pd| self.elements.len() as f64 * pd.area() / (self.side * self.side))
    }
}

fn square_lattice(k: usize, pitch: f64) -> Result<Vec<(f64, f64)>> {
    (1..=k * k).map(|i| array_element_xy(i, k, pitch)).collect()
}

/// Receiver array of `kind` with PD radius `r_pd` and edge spacing `delta`,
/// so that the base pitch is `2 r_pd + delta`.
pub fn build_layout(kind: LayoutKind, r_pd: f64, delta: f64) -> Result<ArrayLayout> {
    let pd = PdGeometry::new(r_pd)?;
    if !(delta >= 0.0 && delta.is_finite()) {
        return domain(format!("PD spacing must be non-negative, got {delta}"));
    }
    let k = kind.base_k();
    if k == 0 {
        return domain("square array needs K >= 1");
    }
    let pitch = 2.0 * r_pd + delta;
    let elements = match kind {
        LayoutKind::Square(_) | LayoutKind::ConfigI => square_lattice(k, pitch)?,
        LayoutKind::ConfigII => {
            let mut e = square_lattice(k, pitch)?;
            e.extend(square_lattice(k - 1, pitch)?);
            e
        }
        LayoutKind::ConfigIII => square_lattice(2 * k - 1, pitch / 2.0)?,
    };
    Ok(ArrayLayout {
        kind,
        elements,
        pd: Some(pd),
        pitch,
        side: k as f64 * pitch,
    })
}

/// `K x K` VCSEL array with the given pitch.
pub fn build_tx_layout(k: usize, pitch: f64) -> Result<ArrayLayout> {
    if k == 0 {
        return domain("square array needs K >= 1");
    }
    Ok(ArrayLayout {
        kind: LayoutKind::Square(k),
        elements: square_lattice(k, pitch)?,
        pd: None,
        pitch,
        side: k as f64 * pitch,
    })
}

/// How channel gains are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMethod {
    /// Numerical integration of the misalignment kernel over the PD.
    ExactGmm,
    /// Product-of-erf displacement formula.
    ApproxDisplacement,
    /// Product-of-erf transmitter tilt formula.
    ApproxTxTilt,
    /// `1 - exp(-2 r^2 / w^2)`; valid for a single aligned link only.
    AlignedClosedForm,
}

/// `N_r x N_t` matrix of DC gains; entry `(i, j)` links VCSEL `j` to PD `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub gains: DMatrix<f64>,
    pub method: GainMethod,
}

impl ChannelMatrix {
    pub fn new(gains: DMatrix<f64>, method: GainMethod) -> Self {
        Self { gains, method }
    }

    pub fn n_rx(&self) -> usize {
        self.gains.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.gains.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.gains.row(i).iter().copied().collect()
    }

    /// CSV with header `j=1,...,j=N_t` and one row per PD, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.n_tx()).map(|j| format!("j={j}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for i in 0..self.n_rx() {
            for j in 0..self.n_tx() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.11e}", self.gains[(i, j)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, method: GainMethod) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Contract("empty CSV".into()))?;
        let n_tx = header.split(',').count();
        let mut values = Vec::new();
        let mut n_rx = 0;
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n_tx {
                return Err(Error::Contract(format!(
                    "row {} has {} columns, expected {n_tx}",
                    row + 1,
                    cells.len()
                )));
            }
            for c in cells {
                values.push(c.trim().parse::<f64>().map_err(|e| {
                    Error::Contract(format!("row {}: cannot parse {c:?}: {e}", row + 1))
                })?);
            }
            n_rx += 1;
        }
        Ok(Self::new(DMatrix::from_row_slice(n_rx, n_tx, &values), method))
    }
}

/// DC gain of a perfectly aligned link, `1 - exp(-2 r_PD^2 / w(L)^2)`.
pub fn gain_aligned(beam: &BeamParams, distance: f64, pd: &PdGeometry) -> f64 {
    -(-2.0 * pd.radius * pd.radius / beam.spot_radius_sq(distance)).exp_m1()
}

/// DC gain under an arbitrary misalignment, integrating the received
/// irradiance times the alignment cosine over the PD.
pub fn gain_gmm(
    beam: &BeamParams,
    distance: f64,
    pd: &PdGeometry,
    state: &MisalignmentState,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let kernel = GmmKernel::new(distance, state);
    let cos_theta = kernel.cos_theta();
    if cos_theta <= 0.0 {
        return Ok(0.0);
    }
    integrate_disk(
        |x, y| {
            let f = kernel.frame(x, y);
            if f.is_behind_waist() {
                0.0
            } else {
                intensity(f.rho_sq, f.z_axial, 1.0, beam) * cos_theta
            }
        },
        pd.radius,
        spec,
    )
}

fn erf_pair(centre: f64, offset: f64, scale: f64) -> f64 {
    libm::erf((centre + 2.0 * offset) / scale) + libm::erf((centre - 2.0 * offset) / scale)
}

/// Square-PD erf approximation of a link whose beam centre is offset by
/// `(x_off, y_off)` from the PD centre in the PD plane.
pub fn gain_approx_displacement(
    beam: &BeamParams,
    distance: f64,
    pd: &PdGeometry,
    x_off: f64,
    y_off: f64,
) -> f64 {
    let a = pd.equivalent_square_side;
    let scale = SQRT_2 * beam.spot_radius_sq(distance).sqrt();
    0.25 * erf_pair(a, x_off, scale) * erf_pair(a, y_off, scale)
}

/// Square-PD erf approximation of the link from VCSEL `(x_j, y_j)` to PD
/// `(x_i, y_i)` when the transmitter array is tilted by `(phi_a, phi_e)`.
#[allow(clippy::too_many_arguments)]
pub fn gain_approx_tx_tilt(
    beam: &BeamParams,
    distance: f64,
    pd: &PdGeometry,
    x_i: f64,
    y_i: f64,
    x_j: f64,
    y_j: f64,
    phi_a: f64,
    phi_e: f64,
) -> f64 {
    let (sa, ca) = phi_a.sin_cos();
    let (se, ce) = phi_e.sin_cos();
    let a = pd.equivalent_square_side;
    let scale = SQRT_2 * beam.spot_radius_sq(distance * ce * ca).sqrt();
    let tx = x_i * ca - x_j - distance * sa;
    let ty = y_i * ce - y_j - distance * se * ca;
    0.25 * erf_pair(a * ca, tx, scale) * erf_pair(a * ce, ty, scale)
}

/// Channel matrix between a transmitter and a receiver array.
///
/// With [`GainMethod::ExactGmm`] each pair is reduced to a single link using
/// the rotated element positions: the link distance becomes `z_j - z_i` and
/// the displacement `(x_j - x_i, y_j - y_i)`, with the angles unchanged. The
/// erf methods use the nominal lattice positions; the displacement formula
/// ignores all angles and the tilt formula ignores receiver angles.
pub fn mimo_matrix(
    beam: &BeamParams,
    distance: f64,
    tx: &ArrayLayout,
    rx: &ArrayLayout,
    state: &MisalignmentState,
    method: GainMethod,
    spec: &QuadratureSpec,
) -> Result<ChannelMatrix> {
    let pd = rx
        .pd
        .ok_or_else(|| Error::Contract("receiver layout has no PD geometry".into()))?;
    if !(distance > 0.0) {
        return domain(format!("link distance must be positive, got {distance}"));
    }
    match method {
        GainMethod::AlignedClosedForm => {
            return Err(Error::Contract(
                "the aligned closed form describes a single link; choose an array method".into(),
            ))
        }
        GainMethod::ApproxDisplacement if state.has_angles() => {
            log::warn!("displacement approximation ignores the orientation angles")
        }
        GainMethod::ApproxTxTilt if state.psi_a != 0.0 || state.psi_e != 0.0 => {
            log::warn!("transmitter tilt approximation ignores the receiver angles")
        }
        _ => {}
    }
    let (n_rx, n_tx) = (rx.len(), tx.len());
    let tx_poses: Vec<_> = tx
        .elements
        .iter()
        .map(|&(x, y)| tx_element_pose(x, y, state, distance))
        .collect();
    let rx_poses: Vec<_> = rx
        .elements
        .iter()
        .map(|&(x, y)| rx_element_pose(x, y, state))
        .collect();

    let entry = |k: usize| -> Result<f64> {
        let (i, j) = (k / n_tx, k % n_tx);
        let (xi, yi) = rx.elements[i];
        let (xj, yj) = tx.elements[j];
        match method {
            GainMethod::ExactGmm => {
                let (t, r) = (tx_poses[j], rx_poses[i]);
                let l = t.z - r.z;
                if l <= 0.0 {
                    log::warn!(
                        "VCSEL {} lies at or behind PD {} (L' = {l:e} m); gain set to 0",
                        j + 1,
                        i + 1
                    );
                    return Ok(0.0);
                }
                let pair = MisalignmentState {
                    x_de: t.x - r.x,
                    y_de: t.y - r.y,
                    ..*state
                };
                gain_gmm(beam, l, &pd, &pair, spec).map_err(|e| Error::Entry {
                    i: i + 1,
                    j: j + 1,
                    source: Box::new(e),
                })
            }
            GainMethod::ApproxDisplacement => Ok(gain_approx_displacement(
                beam,
                distance,
                &pd,
                xi - xj - state.x_de,
                yi - yj - state.y_de,
            )),
            GainMethod::ApproxTxTilt => Ok(gain_approx_tx_tilt(
                beam,
                distance,
                &pd,
                xi,
                yi,
                xj + state.x_de,
                yj + state.y_de,
                state.phi_a,
                state.phi_e,
            )),
            GainMethod::AlignedClosedForm => unreachable!(),
        }
    };
    let values: Vec<f64> = (0..n_rx * n_tx)
        .into_par_iter()
        .map(entry)
        .collect::<Result<_>>()?;
    Ok(ChannelMatrix::new(
        DMatrix::from_row_slice(n_rx, n_tx, &values),
        method,
    ))
}
