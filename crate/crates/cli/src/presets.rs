//! Built-in experiments on the reference system: 5x5 VCSEL array at 2 m,
//! 850 nm, 3 mm PDs spaced 6 mm apart, default link parameters.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use owc_core::beam::BeamParams;
use owc_core::channel::{
    build_layout, build_tx_layout, gain_approx_displacement, gain_approx_tx_tilt, gain_gmm,
    mimo_matrix, GainMethod, LayoutKind, PdGeometry,
};
use owc_core::geometry::MisalignmentState;
use owc_core::linkbudget::{aggregate_rate, nmse, noise_variance, to_db, LinkParams, RateMode};
use owc_core::oracle::{ray_gain_mc, RayBundleSpec};
use owc_core::quadrature::QuadratureSpec;
use rayon::prelude::*;

use crate::run::write;

pub const WAVELENGTH: f64 = 850e-9;
pub const DISTANCE: f64 = 2.0;
pub const PD_RADIUS: f64 = 3e-3;
pub const PD_SPACING: f64 = 6e-3;

pub const PRESETS: [&str; 7] = [
    "rate-vs-waist",
    "sinr-map",
    "gmm-verify",
    "rate-vs-displacement",
    "rate-vs-tx-tilt",
    "rate-vs-rx-tilt",
    "nmse-table",
];

pub fn beam(w0: f64) -> Result<BeamParams> {
    Ok(BeamParams::new(WAVELENGTH, w0)?)
}

pub fn pd() -> PdGeometry {
    PdGeometry::new(PD_RADIUS).expect("reference PD radius is positive")
}

/// Aggregate rate of the reference link with receiver `rx_kind`; the
/// transmitter is `K x K` for a square receiver and 5x5 otherwise.
pub fn aggregate(
    w0: f64,
    rx_kind: LayoutKind,
    state: &MisalignmentState,
    method: GainMethod,
    mode: RateMode,
) -> Result<f64> {
    let rx = build_layout(rx_kind, PD_RADIUS, PD_SPACING)?;
    let tx = build_tx_layout(rx_kind.base_k(), rx.pitch)?;
    let h = mimo_matrix(&beam(w0)?, DISTANCE, &tx, &rx, state, method, &QuadratureSpec::default())?;
    Ok(aggregate_rate(&h, &LinkParams::default(), mode)?.aggregate)
}

pub fn run_preset(name: &str, out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let files: Vec<(String, String)> = match name {
        "rate-vs-waist" => vec![("rate_vs_waist.csv".into(), rate_vs_waist_csv()?)],
        "sinr-map" => [50, 100]
            .into_iter()
            .map(|um| Ok((format!("sinr_map_w0_{um}um.csv"), sinr_map_csv(um as f64 * 1e-6)?)))
            .collect::<Result<_>>()?,
        "gmm-verify" => vec![("gmm_verify.csv".into(), gmm_verify_csv(seed, 100_000)?)],
        "rate-vs-displacement" => [Direction::Horizontal, Direction::Diagonal]
            .into_iter()
            .map(|d| {
                Ok((
                    format!("rate_vs_displacement_{}.csv", d.name()),
                    rate_vs_displacement_csv(d)?,
                ))
            })
            .collect::<Result<_>>()?,
        "rate-vs-tx-tilt" => [false, true]
            .into_iter()
            .map(|both| {
                let tag = if both { "phi_e_eq_phi_a" } else { "phi_e_0" };
                Ok((format!("rate_vs_tx_tilt_{tag}.csv"), rate_vs_tx_tilt_csv(both)?))
            })
            .collect::<Result<_>>()?,
        "rate-vs-rx-tilt" => [false, true]
            .into_iter()
            .map(|both| {
                let tag = if both { "psi_e_eq_psi_a" } else { "psi_e_0" };
                Ok((format!("rate_vs_rx_tilt_{tag}.csv"), rate_vs_rx_tilt_csv(both)?))
            })
            .collect::<Result<_>>()?,
        "nmse-table" => vec![("nmse_table.csv".into(), nmse_table_csv()?)],
        other => bail!("unknown preset `{other}`; available: {}", PRESETS.join(", ")),
    };
    let mut paths = Vec::new();
    for (file, body) in files {
        write(out_dir, &file, &body)?;
        paths.push(out_dir.join(file));
    }
    Ok(paths)
}

fn grid(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|k| start + (stop - start) * k as f64 / (steps - 1) as f64)
        .collect()
}

fn push_row(out: &mut String, lead: f64, values: &[f64]) {
    let _ = write!(out, "{lead:.11e}");
    for v in values {
        let _ = write!(out, ",{v:.11e}");
    }
    out.push('\n');
}

// rate-vs-waist

pub const WAIST_SIZES: [usize; 4] = [2, 3, 4, 5];

/// Aligned Direct and Svd rates of a `K x K` system.
pub fn aligned_rates(k: usize, w0: f64) -> Result<(f64, f64)> {
    let rx = build_layout(LayoutKind::Square(k), PD_RADIUS, PD_SPACING)?;
    let tx = build_tx_layout(k, rx.pitch)?;
    let h = mimo_matrix(
        &beam(w0)?,
        DISTANCE,
        &tx,
        &rx,
        &MisalignmentState::default(),
        GainMethod::ExactGmm,
        &QuadratureSpec::default(),
    )?;
    let p = LinkParams::default();
    Ok((
        aggregate_rate(&h, &p, RateMode::Direct)?.aggregate,
        aggregate_rate(&h, &p, RateMode::Svd)?.aggregate,
    ))
}

fn rate_vs_waist_csv() -> Result<String> {
    let waists: Vec<f64> = (10..=100).map(|um| um as f64 * 1e-6).collect();
    let rows: Vec<Vec<f64>> = waists
        .par_iter()
        .map(|&w0| {
            let mut row = Vec::new();
            for k in WAIST_SIZES {
                let (d, s) = aligned_rates(k, w0)?;
                row.extend([d, s]);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut out = String::from("w0_um");
    for k in WAIST_SIZES {
        let n = k * k;
        let _ = write!(out, ",direct_{n}x{n}_bps,svd_{n}x{n}_bps");
    }
    out.push('\n');
    for (w0, row) in waists.iter().zip(&rows) {
        push_row(&mut out, w0 * 1e6, row);
    }
    Ok(out)
}

// sinr-map

/// SINR (linear) at `(x, y)` on the receiver plane of the aligned 5x5
/// system, for a virtual PD centred there. The VCSEL whose lattice cell
/// contains the point is the signal; all others interfere.
pub fn sinr_at(beam: &BeamParams, x: f64, y: f64) -> Result<f64> {
    let k = 5;
    let rx = build_layout(LayoutKind::Square(k), PD_RADIUS, PD_SPACING)?;
    let tx = build_tx_layout(k, rx.pitch)?;
    let half = rx.side / 2.0;
    let cell = |c: f64| (((c + half) / rx.pitch).floor().max(0.0) as usize).min(k - 1);
    let signal_idx = cell(-y) * k + cell(x);
    let spec = QuadratureSpec::default();
    let gains: Vec<f64> = tx
        .elements
        .iter()
        .map(|&(xj, yj)| {
            let s = MisalignmentState::displacement(xj - x, yj - y);
            gain_gmm(beam, DISTANCE, &pd(), &s, &spec)
        })
        .collect::<owc_core::Result<_>>()?;
    let p = LinkParams::default();
    let scale = p.responsivity.powi(2) * p.p_t * p.p_t / 9.0;
    let signal = scale * gains[signal_idx].powi(2);
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != signal_idx)
        .map(|(_, g)| scale * g * g)
        .sum();
    Ok(signal / (interference + noise_variance(&gains, &p)))
}

/// SINR map on a 1 mm grid over the array aperture: `(x, y, sinr)`.
pub fn sinr_map(w0: f64) -> Result<Vec<(f64, f64, f64)>> {
    let b = beam(w0)?;
    let coords: Vec<f64> = (-30..=30).map(|mm| mm as f64 * 1e-3).collect();
    let points: Vec<(f64, f64)> = coords
        .iter()
        .rev()
        .flat_map(|&y| coords.iter().map(move |&x| (x, y)))
        .collect();
    points
        .par_iter()
        .map(|&(x, y)| Ok((x, y, sinr_at(&b, x, y)?)))
        .collect()
}

fn sinr_map_csv(w0: f64) -> Result<String> {
    let mut out = String::from("x_mm,y_mm,sinr_db\n");
    for (x, y, s) in sinr_map(w0)? {
        let _ = writeln!(out, "{:.0},{:.0},{:.11e}", x * 1e3, y * 1e3, to_db(s));
    }
    Ok(out)
}

// gmm-verify

/// One point of a single-link gain comparison.
#[derive(Debug, Clone)]
pub struct VerifyRow {
    pub family: char,
    pub w0: f64,
    pub swept: &'static str,
    pub value: f64,
    pub gmm: f64,
    pub mc: f64,
    pub mc_std_error: f64,
}

/// The six single-link scenario families: pure displacement, transmitter
/// azimuth, receiver azimuth, and each of these combined with the other errors.
pub fn verify_states() -> Vec<(char, &'static str, f64, MisalignmentState)> {
    let deg = f64::to_radians;
    let mut out = Vec::new();
    for v in grid(0.0, 10.0, 21) {
        out.push(('a', "x_de_mm", v, MisalignmentState::displacement(v * 1e-3, 0.0)));
    }
    for v in grid(0.0, 0.3, 21) {
        out.push(('b', "phi_a_deg", v, MisalignmentState::tx_tilt(deg(v), 0.0)));
    }
    for v in grid(0.0, 80.0, 21) {
        out.push(('c', "psi_a_deg", v, MisalignmentState::rx_tilt(deg(v), 0.0)));
    }
    for v in grid(0.0, 10.0, 21) {
        let s = MisalignmentState {
            x_de: -v * 1e-3,
            phi_a: deg(0.1),
            psi_a: deg(10.0),
            ..Default::default()
        };
        out.push(('d', "r_de_mm", v, s));
    }
    for v in grid(-0.2, 0.3, 21) {
        let s = MisalignmentState {
            x_de: -2e-3,
            phi_a: deg(v),
            psi_a: deg(10.0),
            ..Default::default()
        };
        out.push(('e', "phi_a_deg", v, s));
    }
    for v in grid(0.0, 80.0, 21) {
        let s = MisalignmentState {
            x_de: -2e-3,
            phi_a: deg(0.1),
            psi_a: deg(v),
            ..Default::default()
        };
        out.push(('f', "psi_a_deg", v, s));
    }
    out
}

pub fn gmm_verify(seed: u64, rays: usize) -> Result<Vec<VerifyRow>> {
    let states = verify_states();
    let jobs: Vec<(f64, usize)> = [50e-6, 100e-6]
        .into_iter()
        .flat_map(|w0| (0..states.len()).map(move |k| (w0, k)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(n, &(w0, k))| {
            let (family, swept, value, state) = states[k];
            let b = beam(w0)?;
            let gmm = gain_gmm(&b, DISTANCE, &pd(), &state, &QuadratureSpec::default())?;
            let spec = RayBundleSpec::new(rays, seed.wrapping_add(n as u64));
            let mc = ray_gain_mc(&b, DISTANCE, &pd(), &state, &spec)?;
            Ok(VerifyRow {
                family,
                w0,
                swept,
                value,
                gmm,
                mc: mc.estimate,
                mc_std_error: mc.std_error,
            })
        })
        .collect()
}

fn gmm_verify_csv(seed: u64, rays: usize) -> Result<String> {
    let mut out = String::from("family,w0_um,swept,value,gmm_gain,mc_gain,mc_std_error\n");
    for r in gmm_verify(seed, rays)? {
        let _ = writeln!(
            out,
            "{},{:.0},{},{:.11e},{:.11e},{:.11e},{:.11e}",
            r.family,
            r.w0 * 1e6,
            r.swept,
            r.value,
            r.gmm,
            r.mc,
            r.mc_std_error
        );
    }
    Ok(out)
}

// misalignment sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Horizontal,
    Diagonal,
}

impl Direction {
    pub fn name(&self) -> &'static str {
        match self {
            Direction::Horizontal => "horizontal",
            Direction::Diagonal => "diagonal",
        }
    }

    pub fn state(&self, r_de: f64) -> MisalignmentState {
        match self {
            Direction::Horizontal => MisalignmentState::displacement(r_de, 0.0),
            Direction::Diagonal => {
                MisalignmentState::displacement(r_de * FRAC_1_SQRT_2, r_de * FRAC_1_SQRT_2)
            }
        }
    }
}

const CONFIGS: [LayoutKind; 3] = [LayoutKind::ConfigI, LayoutKind::ConfigII, LayoutKind::ConfigIII];
const MISALIGNMENT_W0: f64 = 100e-6;

/// Direct (exact and `approx`), then Svd for Configs I, II, III.
fn misalignment_row(state: &MisalignmentState, approx: Option<GainMethod>) -> Result<Vec<f64>> {
    let mut row = vec![aggregate(MISALIGNMENT_W0, LayoutKind::ConfigI, state, GainMethod::ExactGmm, RateMode::Direct)?];
    if let Some(m) = approx {
        row.push(aggregate(MISALIGNMENT_W0, LayoutKind::ConfigI, state, m, RateMode::Direct)?);
    }
    for kind in CONFIGS {
        row.push(aggregate(MISALIGNMENT_W0, kind, state, GainMethod::ExactGmm, RateMode::Svd)?);
    }
    Ok(row)
}

fn sweep_table(
    header: &str,
    values: &[f64],
    state: impl Fn(f64) -> MisalignmentState + Sync,
    approx: Option<GainMethod>,
) -> Result<String> {
    let rows: Vec<Vec<f64>> = values
        .par_iter()
        .map(|&v| misalignment_row(&state(v), approx))
        .collect::<Result<_>>()?;
    let mut out = format!("{header},direct_exact_bps");
    if approx.is_some() {
        out.push_str(",direct_approx_bps");
    }
    out.push_str(",svd_config_i_bps,svd_config_ii_bps,svd_config_iii_bps\n");
    for (v, row) in values.iter().zip(&rows) {
        push_row(&mut out, *v, row);
    }
    Ok(out)
}

fn rate_vs_displacement_csv(dir: Direction) -> Result<String> {
    sweep_table(
        "r_de_mm",
        &grid(0.0, 60.0, 121),
        |mm| dir.state(mm * 1e-3),
        Some(GainMethod::ApproxDisplacement),
    )
}

/// Transmitter tilt by `phi_a`, with `phi_e = phi_a` when `both`.
pub fn tx_tilt_state(phi_a_deg: f64, both: bool) -> MisalignmentState {
    let a = phi_a_deg.to_radians();
    MisalignmentState::tx_tilt(a, if both { a } else { 0.0 })
}

/// Receiver tilt by `psi_a`, with `psi_e = psi_a` when `both`.
pub fn rx_tilt_state(psi_a_deg: f64, both: bool) -> MisalignmentState {
    let a = psi_a_deg.to_radians();
    MisalignmentState::rx_tilt(a, if both { a } else { 0.0 })
}

fn rate_vs_tx_tilt_csv(both: bool) -> Result<String> {
    sweep_table(
        "phi_a_deg",
        &grid(0.0, 2.0, 101),
        |d| tx_tilt_state(d, both),
        Some(GainMethod::ApproxTxTilt),
    )
}

fn rate_vs_rx_tilt_csv(both: bool) -> Result<String> {
    sweep_table("psi_a_deg", &grid(0.0, 89.0, 90), |d| rx_tilt_state(d, both), None)
}

// nmse-table

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    Displacement,
    TxTilt,
}

impl ApproxKind {
    pub fn name(&self) -> &'static str {
        match self {
            ApproxKind::Displacement => "displacement",
            ApproxKind::TxTilt => "tx_tilt",
        }
    }
}

/// NMSE between exact and erf-approximated single-link gains when the spot
/// radius at the receiver is `ratio` times the PD radius.
///
/// Displacement: `r_DE / r_PD` from 0 to 10 in steps of 0.05. Transmitter
/// tilt: `phi_a` from 0 to 1 degree in steps of 0.01 degree, `phi_e = 0`.
pub fn approximation_nmse(kind: ApproxKind, ratio: f64) -> Result<f64> {
    let b = BeamParams::with_spot_radius_at(WAVELENGTH, DISTANCE, ratio * PD_RADIUS)?;
    let p = pd();
    let spec = QuadratureSpec::default();
    let states: Vec<MisalignmentState> = match kind {
        ApproxKind::Displacement => (0..=200)
            .map(|k| MisalignmentState::displacement(k as f64 * 0.05 * PD_RADIUS, 0.0))
            .collect(),
        ApproxKind::TxTilt => (0..=100)
            .map(|k| MisalignmentState::tx_tilt((k as f64 * 0.01).to_radians(), 0.0))
            .collect(),
    };
    let pairs: Vec<(f64, f64)> = states
        .par_iter()
        .map(|s| {
            let exact = gain_gmm(&b, DISTANCE, &p, s, &spec)?;
            let approx = match kind {
                ApproxKind::Displacement => gain_approx_displacement(&b, DISTANCE, &p, s.x_de, s.y_de),
                ApproxKind::TxTilt => {
                    gain_approx_tx_tilt(&b, DISTANCE, &p, 0.0, 0.0, 0.0, 0.0, s.phi_a, s.phi_e)
                }
            };
            Ok((exact, approx))
        })
        .collect::<Result<_>>()?;
    let (exact, approx): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(nmse(&exact, &approx)?)
}

pub fn nmse_table() -> Result<Vec<(ApproxKind, u32, f64)>> {
    let mut rows = Vec::new();
    for kind in [ApproxKind::Displacement, ApproxKind::TxTilt] {
        for ratio in 1..=5 {
            rows.push((kind, ratio, approximation_nmse(kind, ratio as f64)?));
        }
    }
    Ok(rows)
}

fn nmse_table_csv() -> Result<String> {
    let mut out = String::from("error_type,w_over_r_pd,nmse\n");
    for (kind, ratio, v) in nmse_table()? {
        let _ = writeln!(out, "{},{ratio},{v:.11e}", kind.name());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinr_map_cell_assignment() {
        let b = beam(100e-6).unwrap();
        // On a PD centre the matching VCSEL dominates.
        let on = sinr_at(&b, 0.0, 0.0).unwrap();
        let between = sinr_at(&b, 6e-3, 0.0).unwrap();
        assert!(to_db(on) > 20.0);
        assert!(between < on);
    }

    #[test]
    fn unknown_preset_lists_names() {
        let dir = std::env::temp_dir().join("owcsim-unknown-preset");
        let err = run_preset("nope", &dir, 0).unwrap_err().to_string();
        assert!(err.contains("rate-vs-waist") && err.contains("nmse-table"));
    }

    #[test]
    fn verify_families_cover_six_scenarios() {
        let s = verify_states();
        let mut fams: Vec<char> = s.iter().map(|r| r.0).collect();
        fams.dedup();
        assert_eq!(fams, vec!['a', 'b', 'c', 'd', 'e', 'f']);
    }
}
