//! Electrical link budget of a MIMO DCO-OFDM link.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{domain, Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602177e-19;

/// Largest SINR (30 dB) for which the bits-per-symbol bound is stated.
const BITS_BOUND_MAX_SINR: f64 = 1000.0;

/// Transceiver and noise parameters. Linear units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParams {
    /// Optical power per VCSEL, W.
    pub p_t: f64,
    /// Modulation bandwidth, Hz.
    pub bandwidth: f64,
    /// PD responsivity, A/W.
    pub responsivity: f64,
    /// Relative intensity noise, 1/Hz.
    pub rin: f64,
    /// Load resistance, ohm.
    pub load_resistance: f64,
    /// Amplifier noise figure (linear).
    pub noise_figure: f64,
    /// Receiver temperature, K.
    pub temperature: f64,
    pub target_ber: f64,
    pub n_fft: usize,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            p_t: 1e-3,
            bandwidth: 20e9,
            responsivity: 0.4,
            rin: 10f64.powf(-15.5),
            load_resistance: 50.0,
            noise_figure: 10f64.powf(0.5),
            temperature: 290.0,
            target_ber: 1e-3,
            n_fft: 64,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_t", self.p_t),
            ("bandwidth", self.bandwidth),
            ("responsivity", self.responsivity),
            ("rin", self.rin),
            ("load_resistance", self.load_resistance),
            ("noise_figure", self.noise_figure),
            ("temperature", self.temperature),
            ("target_ber", self.target_ber),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.target_ber > 1e-2 {
            return domain(format!("target_ber must not exceed 1e-2, got {}", self.target_ber));
        }
        if self.n_fft < 64 || !self.n_fft.is_power_of_two() {
            return domain(format!("n_fft must be a power of two >= 64, got {}", self.n_fft));
        }
        Ok(())
    }

    /// Fraction `(N_FFT - 2) / N_FFT` of subcarriers carrying data.
    pub fn subcarrier_efficiency(&self) -> f64 {
        (self.n_fft as f64 - 2.0) / self.n_fft as f64
    }
}

/// Electrical signal power under a DC bias of three standard deviations.
pub fn electrical_signal_power(p_t: f64) -> f64 {
    p_t * p_t / 9.0
}

/// Thermal, shot and RIN noise variance (A^2) of the PD whose channel row
/// is `row_gains`.
pub fn noise_variance(row_gains: &[f64], params: &LinkParams) -> f64 {
    let b = params.bandwidth;
    let thermal = 4.0 * BOLTZMANN * params.temperature / params.load_resistance * b * params.noise_figure;
    let currents = row_gains.iter().map(|h| params.responsivity * h * params.p_t);
    let dc: f64 = currents.clone().sum();
    let dc_sq: f64 = currents.map(|c| c * c).sum();
    thermal + 2.0 * ELEMENTARY_CHARGE * dc * b + params.rin * dc_sq * b
}

/// SINR of PD `i` (0-based) without precoding; all other VCSELs interfere.
pub fn sinr_direct(h: &ChannelMatrix, i: usize, params: &LinkParams) -> Result<f64> {
    if h.n_rx() != h.n_tx() {
        return Err(Error::Contract(format!(
            "direct detection needs a square channel, got {}x{}",
            h.n_rx(),
            h.n_tx()
        )));
    }
    if i >= h.n_rx() {
        return domain(format!("link index {i} out of range"));
    }
    let row = h.row(i);
    let scale = params.responsivity.powi(2) * electrical_signal_power(params.p_t);
    let signal = scale * row[i] * row[i];
    let interference: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, g)| scale * g * g)
        .sum();
    Ok(signal / (interference + noise_variance(&row, params)))
}

/// Thin singular value decomposition `H = U diag(s) V^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `N_r x N_t`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    /// `N_t x N_t`, orthogonal.
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.singular_values));
        &self.u * s * self.v.transpose()
    }
}

/// One-sided Jacobi SVD of a tall (or square) matrix.
pub fn svd_thin(h: &DMatrix<f64>) -> Result<Svd> {
    let (m, n) = h.shape();
    if m < n {
        return domain(format!("thin SVD needs rows >= columns, got {m}x{n}"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return domain("matrix has non-finite entries");
    }
    let scale = if h.amax() > 0.0 { h.amax() } else { 1.0 };
    let mut a = h / scale;
    let floor = (f64::EPSILON * a.norm()).powi(2);
    let mut v = DMatrix::<f64>::identity(n, n);
    const MAX_SWEEPS: usize = 80;
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if alpha.min(beta) <= floor || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return domain("Jacobi SVD did not converge");
    }

    let norms: Vec<f64> = (0..n).map(|k| a.column(k).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let s_max = norms.iter().cloned().fold(0.0, f64::max);
    let negligible = s_max * (m.max(n) as f64) * f64::EPSILON;

    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut v_sorted = DMatrix::<f64>::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &src) in order.iter().enumerate() {
        singular_values.push(norms[src] * scale);
        v_sorted.set_column(k, &v.column(src));
        if norms[src] > negligible && norms[src] > 0.0 {
            u.set_column(k, &(a.column(src) / norms[src]));
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd {
        u,
        singular_values,
        v: v_sorted,
    })
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..a.nrows() {
        let (x, y) = (a[(r, p)], a[(r, q)]);
        a[(r, p)] = c * x - s * y;
        a[(r, q)] = s * x + c * y;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut DMatrix<f64>, missing: &[usize]) {
    let m = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|k| !missing.contains(k)).collect();
    let mut basis = 0;
    for &k in missing {
        while basis < m {
            let mut e = nalgebra::DVector::<f64>::zeros(m);
            e[basis] = 1.0;
            basis += 1;
            // Two Gram-Schmidt passes for numerical orthogonality.
            for _ in 0..2 {
                for &f in &filled {
                    let proj = u.column(f).dot(&e);
                    e -= u.column(f) * proj;
                }
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u.set_column(k, &(e / norm));
                filled.push(k);
                break;
            }
        }
    }
}

/// SNR of an SVD eigenmode with gain `singular_value` and branch noise
/// variance `sigma_sq`.
pub fn sinr_svd(singular_value: f64, sigma_sq: f64, params: &LinkParams) -> f64 {
    params.responsivity.powi(2) * singular_value * singular_value * electrical_signal_power(params.p_t)
        / sigma_sq
}

/// SINR gap `-ln(5 BER) / 1.5` of adaptive QAM.
pub fn snr_gap(target_ber: f64) -> Result<f64> {
    if !(target_ber > 0.0 && target_ber <= 1e-2) {
        return domain(format!("target BER must lie in (0, 1e-2], got {target_ber}"));
    }
    Ok(-(5.0 * target_ber).ln() / 1.5)
}

/// Bits per QAM symbol `log2(1 + gamma / Gamma)`.
pub fn bits_per_symbol(gamma: f64, target_ber: f64) -> Result<f64> {
    let gap = snr_gap(target_ber)?;
    if gamma > BITS_BOUND_MAX_SINR {
        log::warn!(
            "SINR {:.1} dB is above the 30 dB range of the bits-per-symbol bound",
            to_db(gamma)
        );
    }
    Ok((1.0 + gamma.max(0.0) / gap).log2())
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Detection mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// One PD per VCSEL, other VCSELs interfere.
    Direct,
    /// SVD precoding and combining; interference-free eigenmodes.
    Svd,
}

/// Per-link and aggregate rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub mode: RateMode,
    pub per_link_sinr: Vec<f64>,
    pub per_link_bits: Vec<f64>,
    pub per_link_rate: Vec<f64>,
    pub aggregate: f64,
}

impl RateReport {
    /// CSV with columns `link_index,sinr_db,bits_per_symbol,rate_bps` and an
    /// `aggregate` footer row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("link_index,sinr_db,bits_per_symbol,rate_bps\n");
        for (k, ((g, b), r)) in self
            .per_link_sinr
            .iter()
            .zip(&self.per_link_bits)
            .zip(&self.per_link_rate)
            .enumerate()
        {
            let _ = writeln!(out, "{},{:.11e},{:.11e},{:.11e}", k + 1, to_db(*g), b, r);
        }
        let _ = writeln!(out, "aggregate,,,{:.11e}", self.aggregate);
        out
    }
}

/// Rates of all `N_t` streams and their sum.
///
/// In [`RateMode::Svd`] stream `i` uses the `i`-th largest singular value and
/// the noise variance of PD `i`.
pub fn aggregate_rate(h: &ChannelMatrix, params: &LinkParams, mode: RateMode) -> Result<RateReport> {
    params.validate()?;
    let n_t = h.n_tx();
    let per_link_sinr: Vec<f64> = match mode {
        RateMode::Direct => (0..n_t)
            .map(|i| sinr_direct(h, i, params))
            .collect::<Result<_>>()?,
        RateMode::Svd => {
            let svd = svd_thin(&h.gains)?;
            svd.singular_values
                .iter()
                .enumerate()
                .map(|(i, &s)| sinr_svd(s, noise_variance(&h.row(i), params), params))
                .collect()
        }
    };
    let per_link_bits: Vec<f64> = per_link_sinr
        .iter()
        .map(|&g| bits_per_symbol(g, params.target_ber))
        .collect::<Result<_>>()?;
    let xi_b = params.subcarrier_efficiency() * params.bandwidth;
    let per_link_rate: Vec<f64> = per_link_bits.iter().map(|b| xi_b * b).collect();
    let aggregate = per_link_rate.iter().sum();
    Ok(RateReport {
        mode,
        per_link_sinr,
        per_link_bits,
        per_link_rate,
        aggregate,
    })
}

/// Largest eye-safe optical power for a point source: `MPE * A_pupil / eta`.
pub fn eye_safe_power_limit(mpe: f64, pupil_diameter: f64, eta: f64) -> Result<f64> {
    if !(mpe >= 0.0) || !(pupil_diameter > 0.0) || !(eta > 0.0 && eta <= 1.0) {
        return domain(format!(
            "need MPE >= 0, pupil diameter > 0 and 0 < eta <= 1, got {mpe}, {pupil_diameter}, {eta}"
        ));
    }
    Ok(mpe * PI * pupil_diameter * pupil_diameter / 4.0 / eta)
}

/// Normalised mean squared error `sum (e - a)^2 / sum e^2`.
pub fn nmse(exact: &[f64], approx: &[f64]) -> Result<f64> {
    if exact.is_empty() || exact.len() != approx.len() {
        return domain(format!(
            "need equal non-empty lengths, got {} and {}",
            exact.len(),
            approx.len()
        ));
    }
    let den: f64 = exact.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return domain("exact vector has zero norm");
    }
    let num: f64 = exact.iter().zip(approx).map(|(e, a)| (e - a).powi(2)).sum();
    Ok(num / den)
}
