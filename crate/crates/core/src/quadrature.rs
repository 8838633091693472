//! Integration of smooth functions over a disk.
//!
//! [`integrate_disk`] is a globally adaptive tensor Gauss-Legendre rule on
//! annular-sector panels in polar coordinates. Each panel is integrated with
//! a 5x5 and a 10x10 rule; their difference is the panel error estimate. The
//! panel with the largest estimate is split into four until the summed error
//! meets the tolerance. [`integrate_disk_mc`] is a plain Monte-Carlo
//! estimator with uniform sampling, used as an independent cross-check.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

const LOW_ORDER: usize = 5;
const HIGH_ORDER: usize = 10;
const INITIAL_SECTORS: usize = 4;

/// Minimum sample count accepted by [`integrate_disk_mc`].
pub const MIN_MC_SAMPLES: usize = 1000;

/// Tolerances of the adaptive disk rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_subdivisions: 10_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol >= 0.0) {
            return domain(format!(
                "need rel_tol > 0 and abs_tol >= 0, got {} and {}",
                self.rel_tol, self.abs_tol
            ));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = -x;
        nodes[n - 1 - k] = x;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

struct Rules {
    low: (Vec<f64>, Vec<f64>),
    high: (Vec<f64>, Vec<f64>),
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| Rules {
        low: gauss_legendre(LOW_ORDER),
        high: gauss_legendre(HIGH_ORDER),
    })
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    r0: f64,
    r1: f64,
    t0: f64,
    t1: f64,
    value: f64,
    error: f64,
    id: usize,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn tensor_rule<F: Fn(f64, f64) -> f64>(
    f: &F,
    rule: &(Vec<f64>, Vec<f64>),
    r0: f64,
    r1: f64,
    t0: f64,
    t1: f64,
) -> f64 {
    let (nodes, weights) = rule;
    let (rc, rh) = (0.5 * (r0 + r1), 0.5 * (r1 - r0));
    let (tc, th) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
    let mut sum = 0.0;
    for (&ta, &wa) in nodes.iter().zip(weights) {
        let (s, c) = (tc + th * ta).sin_cos();
        let mut inner = 0.0;
        for (&ra, &wr) in nodes.iter().zip(weights) {
            let r = rc + rh * ra;
            inner += wr * r * f(r * c, r * s);
        }
        sum += wa * inner;
    }
    sum * rh * th
}

fn make_panel<F: Fn(f64, f64) -> f64>(f: &F, r0: f64, r1: f64, t0: f64, t1: f64, id: usize) -> Panel {
    let rules = rules();
    let high = tensor_rule(f, &rules.high, r0, r1, t0, t1);
    let low = tensor_rule(f, &rules.low, r0, r1, t0, t1);
    Panel {
        r0,
        r1,
        t0,
        t1,
        value: high,
        error: (high - low).abs(),
        id,
    }
}

/// Integral of `f(x, y)` over the disk `x^2 + y^2 <= radius^2`.
///
/// The result is bit-identical for identical inputs.
pub fn integrate_disk<F: Fn(f64, f64) -> f64>(f: F, radius: f64, spec: &QuadratureSpec) -> Result<f64> {
    spec.validate()?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return domain(format!("disk radius must be finite and non-negative, got {radius}"));
    }
    if radius == 0.0 {
        return Ok(0.0);
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 0;
    let dt = TAU / INITIAL_SECTORS as f64;
    for k in 0..INITIAL_SECTORS {
        heap.push(make_panel(&f, 0.0, radius, k as f64 * dt, (k + 1) as f64 * dt, next_id));
        next_id += 1;
    }

    let mut subdivisions = 0;
    loop {
        let (value, error) = totals(&heap);
        if !value.is_finite() {
            return domain("integrand is not finite on the disk");
        }
        if error <= spec.abs_tol.max(spec.rel_tol * value.abs()) {
            return Ok(value);
        }
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::Convergence {
                estimate: value,
                error_bound: error,
                subdivisions,
            });
        }
        let p = heap.pop().expect("panel heap is never empty");
        let rm = 0.5 * (p.r0 + p.r1);
        let tm = 0.5 * (p.t0 + p.t1);
        for (r0, r1) in [(p.r0, rm), (rm, p.r1)] {
            for (t0, t1) in [(p.t0, tm), (tm, p.t1)] {
                heap.push(make_panel(&f, r0, r1, t0, t1, next_id));
                next_id += 1;
            }
        }
        subdivisions += 1;
    }
}

fn totals(heap: &BinaryHeap<Panel>) -> (f64, f64) {
    // Heap iteration order depends only on the push sequence, so the sum is
    // reproducible; sorting by id keeps it independent of heap internals.
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_unstable_by_key(|p| p.id);
    panels
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl McEstimate {
    /// True when `value` lies within `k` standard errors of the estimate.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.std_error
    }
}

/// Uniform Monte-Carlo integral of `f` over the disk of `radius`.
pub fn integrate_disk_mc<F: Fn(f64, f64) -> f64>(
    f: F,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < MIN_MC_SAMPLES {
        return domain(format!("need at least {MIN_MC_SAMPLES} samples, got {samples}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = PI * radius * radius;
    // Welford's running mean and variance.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for n in 1..=samples {
        let r = radius * rng.gen::<f64>().sqrt();
        let (s, c) = (TAU * rng.gen::<f64>()).sin_cos();
        let v = f(r * c, r * s);
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    let n = samples as f64;
    let var = m2 / (n - 1.0);
    Ok(McEstimate {
        estimate: area * mean,
        std_error: area * (var / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn gaussian(w: f64) -> impl Fn(f64, f64) -> f64 {
        move |x: f64, y: f64| 2.0 / (PI * w * w) * (-2.0 * (x * x + y * y) / (w * w)).exp()
    }

    #[test]
    fn legendre_rules_integrate_polynomials() {
        let (x, w) = gauss_legendre(10);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert_relative_eq!(m18, 2.0 / 19.0, max_relative = 1e-13);
        let (x, _) = gauss_legendre(5);
        assert_eq!(x[2], 0.0);
        assert_relative_eq!(x[4], 0.906_179_845_938_664, epsilon = 1e-15);
    }

    #[test]
    fn unit_disk_area() {
        let v = integrate_disk(|_, _| 1.0, 1.0, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(v, PI, max_relative = 1e-9);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let spec = QuadratureSpec::default();
        let v = integrate_disk(|x, _| x, 1.0, &spec).unwrap();
        assert!(v.abs() <= spec.abs_tol, "{v}");
    }

    #[test]
    fn centred_gaussian_matches_closed_form() {
        let (r, w) = (3e-3, 5.4122e-3);
        let v = integrate_disk(gaussian(w), r, &QuadratureSpec::default()).unwrap();
        let exact = 1.0 - (-2.0 * r * r / (w * w)).exp();
        assert_relative_eq!(v, exact, max_relative = 1e-9);
    }

    #[test]
    fn narrow_gaussian_forces_refinement() {
        let (r, w) = (3e-3, 1e-4);
        let v = integrate_disk(gaussian(w), r, &QuadratureSpec::default()).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn exhausted_subdivisions_report_estimate() {
        let spec = QuadratureSpec {
            max_subdivisions: 1,
            ..Default::default()
        };
        match integrate_disk(gaussian(1e-5), 3e-3, &spec) {
            Err(Error::Convergence { subdivisions, error_bound, .. }) => {
                assert_eq!(subdivisions, 1);
                assert!(error_bound > 0.0);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn deterministic() {
        let f = |x: f64, y: f64| (3.0 * x).cos() * (-y * y).exp() + x * y;
        let spec = QuadratureSpec::default();
        let a = integrate_disk(f, 1.3, &spec).unwrap();
        let b = integrate_disk(f, 1.3, &spec).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_bad_inputs() {
        let spec = QuadratureSpec::default();
        assert!(integrate_disk(|_, _| 1.0, -1.0, &spec).is_err());
        let bad = QuadratureSpec { rel_tol: 0.0, ..spec };
        assert!(integrate_disk(|_, _| 1.0, 1.0, &bad).is_err());
        assert_eq!(integrate_disk(|_, _| 1.0, 0.0, &spec).unwrap(), 0.0);
    }

    #[test]
    fn mc_constant_integrand_is_exact() {
        let e = integrate_disk_mc(|_, _| 1.0, 2.0, 1000, 7).unwrap();
        assert_eq!(e.estimate, 4.0 * PI);
        assert_eq!(e.std_error, 0.0);
        assert!(integrate_disk_mc(|_, _| 1.0, 2.0, 999, 7).is_err());
    }

    #[test]
    fn mc_agrees_with_adaptive_rule() {
        let (r, w) = (3e-3, 4e-3);
        let exact = integrate_disk(gaussian(w), r, &QuadratureSpec::default()).unwrap();
        let mc = integrate_disk_mc(gaussian(w), r, 200_000, 11).unwrap();
        assert!(mc.agrees_with(exact, 3.0), "{mc:?} vs {exact}");
    }

    #[test]
    fn mc_is_reproducible_per_seed() {
        let f = gaussian(2e-3);
        let a = integrate_disk_mc(&f, 3e-3, 5000, 42).unwrap();
        let b = integrate_disk_mc(&f, 3e-3, 5000, 42).unwrap();
        let c = integrate_disk_mc(&f, 3e-3, 5000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn mc_error_scales_as_inverse_sqrt() {
        let f = gaussian(2e-3);
        let a = integrate_disk_mc(&f, 3e-3, 50_000, 5).unwrap();
        let b = integrate_disk_mc(&f, 3e-3, 200_000, 5).unwrap();
        let ratio = b.std_error / a.std_error;
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn linearity(a in -3.0..3.0f64, b in -3.0..3.0f64, k in 0.5..4.0f64) {
            let spec = QuadratureSpec::default();
            let f = move |x: f64, y: f64| (-(x * x + 2.0 * y * y) * k).exp();
            let g = move |x: f64, y: f64| (k * x).cos() + y * y;
            let fi = integrate_disk(f, 1.0, &spec).unwrap();
            let gi = integrate_disk(g, 1.0, &spec).unwrap();
            let hi = integrate_disk(|x, y| a * f(x, y) + b * g(x, y), 1.0, &spec).unwrap();
            let expect = a * fi + b * gi;
            let scale = (a * fi).abs() + (b * gi).abs();
            prop_assert!((hi - expect).abs() <= 10.0 * spec.rel_tol * scale + spec.abs_tol);
        }

        #[test]
        fn scaling(s in 0.1..10.0f64, k in 0.5..4.0f64) {
            let spec = QuadratureSpec::default();
            let f = move |x: f64, y: f64| (-(x - 0.2).powi(2) * k - y * y).exp();
            let base = integrate_disk(f, 1.0, &spec).unwrap();
            let scaled = integrate_disk(|x, y| f(x / s, y / s), s, &spec).unwrap();
            prop_assert!((scaled - s * s * base).abs() <= 10.0 * spec.rel_tol * s * s * base);
        }
    }
}
