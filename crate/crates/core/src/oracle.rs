//! Monte-Carlo ray sampling of a misaligned link.
//!
//! The link is rebuilt from rotation matrices and explicit ray-plane
//! intersections, without the closed-form kernel in [`crate::geometry`], so
//! it serves as an independent check of [`crate::channel::gain_gmm`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{divergence_half_angle, BeamParams};
use crate::channel::PdGeometry;
use crate::error::{domain, Result};
use crate::geometry::{rotation_matrix, Axis, Mat3, MisalignmentState, Vec3};
use crate::quadrature::McEstimate;

pub const MIN_RAYS: usize = 10_000;
const CHUNK: usize = 1 << 15;

/// How rays are launched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaySampling {
    /// Point source with Gaussian angular spread; valid for `L >> z_R`.
    FarField,
    /// Rays parallel to the beam axis from a Gaussian transverse offset,
    /// weighted by the exact irradiance. Valid at any distance.
    #[default]
    Transverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayBundleSpec {
    pub ray_count: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling: RaySampling,
}

impl RayBundleSpec {
    pub fn new(ray_count: usize, seed: u64) -> Self {
        Self {
            ray_count,
            seed,
            sampling: RaySampling::Transverse,
        }
    }
}

struct Scene {
    origin: Vec3,
    tx_rot: Mat3,
    axis: Vec3,
    normal: Vec3,
    radius_sq: f64,
}

impl Scene {
    fn new(distance: f64, pd: &PdGeometry, s: &MisalignmentState) -> Self {
        let tx_rot = rotation_matrix(Axis::Y, -s.phi_a) * rotation_matrix(Axis::X, s.phi_e);
        let rx_rot = rotation_matrix(Axis::Y, -s.psi_a) * rotation_matrix(Axis::X, -s.psi_e);
        Self {
            origin: Vec3::new(s.x_de, s.y_de, distance),
            tx_rot,
            axis: tx_rot * Vec3::new(0.0, 0.0, -1.0),
            normal: rx_rot * Vec3::new(0.0, 0.0, 1.0),
            radius_sq: pd.radius() * pd.radius(),
        }
    }

    /// Distance along `dir` from `start` to the PD plane and whether the
    /// intersection lies on the PD disk.
    fn hit(&self, start: &Vec3, dir: &Vec3) -> Option<(f64, bool)> {
        let denom = self.normal.dot(dir);
        if denom >= 0.0 {
            return None;
        }
        let t = -self.normal.dot(start) / denom;
        let p = start + dir * t;
        Some((t, p.norm_squared() <= self.radius_sq))
    }
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0.0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n / n,
            m2: self.m2 + o.m2 + d * d * self.n * o.n / n,
        }
    }
}

/// Fraction of transmitted power that lands on the PD, estimated with rays.
pub fn ray_gain_mc(
    beam: &BeamParams,
    distance: f64,
    pd: &PdGeometry,
    state: &MisalignmentState,
    spec: &RayBundleSpec,
) -> Result<McEstimate> {
    if spec.ray_count < MIN_RAYS {
        return domain(format!("need at least {MIN_RAYS} rays, got {}", spec.ray_count));
    }
    let scene = Scene::new(distance, pd, state);
    if spec.sampling == RaySampling::FarField && distance < 10.0 * beam.rayleigh_range() {
        log::warn!(
            "far-field ray sampling at {distance} m is inaccurate for a Rayleigh range of {} m",
            beam.rayleigh_range()
        );
    }

    // Importance proposal in the transmitter's transverse plane. A spot
    // narrower than the PD is sampled from its own profile; a wider spot is
    // sampled around the PD's projection with a PD-sized spread.
    let w_ref_sq = match scene.hit(&scene.origin, &scene.axis) {
        Some((t, _)) if t > 0.0 => beam.spot_radius_sq(t),
        _ => beam.spot_radius_sq(distance),
    };
    let (centre, sigma_pos) = if 0.5 * w_ref_sq.sqrt() > pd.radius() {
        let local = scene.tx_rot.transpose() * (-scene.origin);
        ((local.x, local.y), pd.radius())
    } else {
        ((0.0, 0.0), 0.5 * w_ref_sq.sqrt())
    };
    let sigma_ang = 0.5 * divergence_half_angle(beam);

    let chunks = spec.ray_count.div_ceil(CHUNK);
    let moments = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let n = CHUNK.min(spec.ray_count - c * CHUNK);
            let mut m = Moments::default();
            for _ in 0..n {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let v = match spec.sampling {
                    RaySampling::Transverse => {
                        let local = Vec3::new(centre.0 + sigma_pos * a, centre.1 + sigma_pos * b, 0.0);
                        let offset = scene.tx_rot * local;
                        let start = scene.origin + offset;
                        match scene.hit(&start, &scene.axis) {
                            Some((t, true)) if t > 0.0 => {
                                // irradiance / proposal density
                                let w_sq = beam.spot_radius_sq(t);
                                let rho_sq = local.norm_squared();
                                4.0 * sigma_pos * sigma_pos / w_sq
                                    * (0.5 * (a * a + b * b) - 2.0 * rho_sq / w_sq).exp()
                            }
                            _ => 0.0,
                        }
                    }
                    RaySampling::FarField => {
                        let local = Vec3::new((sigma_ang * a).tan(), (sigma_ang * b).tan(), -1.0);
                        let dir = scene.tx_rot * local.normalize();
                        match scene.hit(&scene.origin, &dir) {
                            Some((t, true)) if t > 0.0 => 1.0,
                            _ => 0.0,
                        }
                    }
                };
                m.push(v);
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge);

    let n = moments.n;
    Ok(McEstimate {
        estimate: moments.mean,
        std_error: (moments.m2 / (n - 1.0) / n).sqrt(),
    })
}
