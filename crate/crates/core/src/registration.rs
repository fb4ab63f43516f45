//! Surface features and robust SE(2) registration.
//!
//! Each selected point is summarized by its neighborhood centroid, the minor
//! eigenvector of the neighborhood covariance (the surface normal) and a
//! planarity score. Two feature sets are aligned by minimizing
//!
//! ```text
//! f(T) = Σ α · log(1 + ‖p_b − (R p_a + τ)‖²)
//! ```
//!
//! over nearest-neighbour correspondences with Levenberg-damped, iteratively
//! reweighted Gauss-Newton. The weight of a pair in the normal equations is
//! `α / (1 + ε²)`, the derivative of the Cauchy term.

use std::collections::HashMap;

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureCloud;
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceFeature {
    pub p: [f64; 2],
    /// Unit normal, oriented toward the sensor origin.
    pub eta: [f64; 2],
    /// `1 − λ_min / λ_max` of the neighborhood covariance.
    pub planarity: f64,
    pub neighbor_count: usize,
}

impl SurfaceFeature {
    pub fn transformed(&self, pose: &Pose2) -> SurfaceFeature {
        SurfaceFeature {
            p: pose.apply(self.p),
            eta: pose.rotate(self.eta),
            ..*self
        }
    }
}

/// Uniform bucket grid for fixed-radius queries.
pub(crate) struct SpatialGrid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialGrid {
    pub(crate) fn new(points: impl Iterator<Item = [f64; 2]>, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.enumerate() {
            buckets.entry(Self::key(cell, p)).or_default().push(i);
        }
        SpatialGrid { cell, buckets }
    }

    fn key(cell: f64, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    /// Indices in the cells overlapping a disc of radius `cell` around `p`.
    pub(crate) fn candidates(&self, p: [f64; 2]) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = Self::key(self.cell, p);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                self.buckets
                    .get(&(kx + dx, ky + dy))
                    .into_iter()
                    .flat_map(|v| v.iter().copied())
            })
        })
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Surface features for every point with at least `min_neighbors` points
/// (itself included) within `radius`.
pub fn build_surfaces(
    cloud: &FeatureCloud,
    radius: f64,
    min_neighbors: usize,
) -> Result<Vec<SurfaceFeature>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "surface radius must be positive, got {radius}"
        )));
    }
    if min_neighbors < 2 {
        return Err(Error::InvalidParameter(format!(
            "min_neighbors must be at least 2, got {min_neighbors}"
        )));
    }
    let pts: Vec<[f64; 2]> = cloud.points.points.iter().map(|p| p.xy()).collect();
    let grid = SpatialGrid::new(pts.iter().copied(), radius);
    let r2 = radius * radius;
    let mut out = Vec::new();
    for &p in &pts {
        let neigh: Vec<[f64; 2]> = grid
            .candidates(p)
            .map(|j| pts[j])
            .filter(|&q| dist2(p, q) <= r2)
            .collect();
        if neigh.len() < min_neighbors {
            continue;
        }
        let n = neigh.len() as f64;
        let cx = neigh.iter().map(|q| q[0]).sum::<f64>() / n;
        let cy = neigh.iter().map(|q| q[1]).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for q in &neigh {
            let dx = q[0] - cx;
            let dy = q[1] - cy;
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let cov = Matrix2::new(sxx / n, sxy / n, sxy / n, syy / n);
        let eig = SymmetricEigen::new(cov);
        let (imin, imax) = if eig.eigenvalues[0] <= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let lmin = eig.eigenvalues[imin].max(0.0);
        let lmax = eig.eigenvalues[imax].max(0.0);
        let planarity = if lmax > 0.0 {
            (1.0 - lmin / lmax).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let v = eig.eigenvectors.column(imin);
        let norm = v[0].hypot(v[1]);
        let mut eta = [v[0] / norm, v[1] / norm];
        if eta[0] * cx + eta[1] * cy > 0.0 {
            eta = [-eta[0], -eta[1]];
        }
        out.push(SurfaceFeature {
            p: [cx, cy],
            eta,
            planarity,
            neighbor_count: neigh.len(),
        });
    }
    Ok(out)
}

/// `‖p_b − (R p_a + τ)‖²`.
pub fn residual(a: &SurfaceFeature, b: &SurfaceFeature, pose: &Pose2) -> f64 {
    dist2(b.p, pose.apply(a.p))
}

/// `max(0, η_a·η_b) · min(planarity_a, planarity_b)`.
pub fn similarity_weight(a: &SurfaceFeature, b: &SurfaceFeature) -> f64 {
    let dot = a.eta[0] * b.eta[0] + a.eta[1] * b.eta[1];
    dot.max(0.0) * a.planarity.min(b.planarity)
}

/// Source/destination index pair.
pub type Correspondence = (usize, usize);

fn check_correspondences(
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    corr: &[Correspondence],
) -> Result<()> {
    if let Some(&(a, b)) = corr.iter().find(|&&(a, b)| a >= srcs.len() || b >= dsts.len()) {
        return Err(Error::InvalidParameter(format!(
            "correspondence ({a}, {b}) out of range for {} sources and {} targets",
            srcs.len(),
            dsts.len()
        )));
    }
    Ok(())
}

/// Cauchy-weighted objective `Σ α · log(1 + ε²)` over the given pairs.
pub fn objective(
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    corr: &[Correspondence],
    pose: &Pose2,
) -> Result<f64> {
    check_correspondences(srcs, dsts, corr)?;
    Ok(corr
        .iter()
        .map(|&(a, b)| {
            let (sa, sb) = (&srcs[a], &dsts[b]);
            similarity_weight(sa, sb) * residual(sa, sb, pose).ln_1p()
        })
        .sum())
}

/// Analytic gradient of [`objective`] with respect to `(x, y, θ)`.
pub fn objective_gradient(
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    corr: &[Correspondence],
    pose: &Pose2,
) -> Result<[f64; 3]> {
    check_correspondences(srcs, dsts, corr)?;
    let mut g = Vector3::zeros();
    for &(a, b) in corr {
        let (sa, sb) = (&srcs[a], &dsts[b]);
        let alpha = similarity_weight(sa, sb);
        let (r, j) = residual_and_jacobian(sa, sb, pose);
        let w = alpha / (1.0 + r.norm_squared());
        g += 2.0 * w * j.transpose() * r;
    }
    Ok([g[0], g[1], g[2]])
}

fn residual_and_jacobian(
    a: &SurfaceFeature,
    b: &SurfaceFeature,
    pose: &Pose2,
) -> (nalgebra::Vector2<f64>, nalgebra::Matrix2x3<f64>) {
    let (s, c) = pose.theta.sin_cos();
    let [px, py] = a.p;
    let r = nalgebra::Vector2::new(
        c * px - s * py + pose.x - b.p[0],
        s * px + c * py + pose.y - b.p[1],
    );
    let j = nalgebra::Matrix2x3::new(1.0, 0.0, -s * px - c * py, 0.0, 1.0, c * px - s * py);
    (r, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistrationParams {
    /// Nearest neighbours farther than this (meters) are not paired.
    pub max_correspondence_distance: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the norm of the `(x, y, θ)` update.
    pub tolerance: f64,
    pub lambda_init: f64,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        RegistrationParams {
            // three pixels at 2.71 m/px
            max_correspondence_distance: 8.13,
            max_iterations: 50,
            tolerance: 1e-6,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps source coordinates into the destination frame.
    pub pose: Pose2,
    pub final_cost: f64,
    pub iterations: usize,
    pub inlier_fraction: f64,
    pub converged: bool,
    /// Final IRLS weight of every source feature; 0 when unpaired.
    pub weights: Vec<f64>,
    /// Objective before and after each accepted step, on that step's pairs.
    pub cost_trace: Vec<(f64, f64)>,
}

/// Nearest destination of each transformed source within `gate`; the lowest
/// index wins ties.
pub fn associate(
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    pose: &Pose2,
    gate: f64,
) -> Vec<Correspondence> {
    let grid = SpatialGrid::new(dsts.iter().map(|d| d.p), gate);
    associate_with(&grid, srcs, dsts, pose, gate)
}

fn associate_with(
    grid: &SpatialGrid,
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    pose: &Pose2,
    gate: f64,
) -> Vec<Correspondence> {
    let gate2 = gate * gate;
    srcs.iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let q = pose.apply(s.p);
            grid.candidates(q)
                .map(|j| (dist2(q, dsts[j].p), j))
                .filter(|&(d, _)| d <= gate2)
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(_, j)| (i, j))
        })
        .collect()
}

fn pair_weights(
    srcs: &[SurfaceFeature],
    dsts: &[SurfaceFeature],
    corr: &[Correspondence],
    pose: &Pose2,
) -> Vec<f64> {
    let mut w = vec![0.0; srcs.len()];
    for &(a, b) in corr {
        w[a] = similarity_weight(&srcs[a], &dsts[b]) / (1.0 + residual(&srcs[a], &dsts[b], pose));
    }
    w
}

/// Robust alignment of `src` onto `dst` starting from `initial`.
pub fn register(
    src: &[SurfaceFeature],
    dst: &[SurfaceFeature],
    initial: Pose2,
    params: &RegistrationParams,
) -> Result<RegistrationResult> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(params.max_correspondence_distance > 0.0) {
        return Err(Error::InvalidParameter(
            "max_correspondence_distance must be positive".into(),
        ));
    }
    let gate = params.max_correspondence_distance;
    let grid = SpatialGrid::new(dst.iter().map(|d| d.p), gate);
    let mut pose = initial;
    let mut lambda = params.lambda_init;
    let mut converged = false;
    let mut iterations = 0;
    let mut trace = Vec::new();

    while iterations < params.max_iterations {
        let corr = associate_with(&grid, src, dst, &pose, gate);
        if corr.is_empty() {
            if iterations == 0 {
                return Err(Error::NoCorrespondences);
            }
            break;
        }
        iterations += 1;
        let cost = objective(src, dst, &corr, &pose)?;

        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        for &(a, b) in &corr {
            let alpha = similarity_weight(&src[a], &dst[b]);
            if alpha == 0.0 {
                continue;
            }
            let (r, j) = residual_and_jacobian(&src[a], &dst[b], &pose);
            let w = alpha / (1.0 + r.norm_squared());
            h += w * j.transpose() * j;
            g += w * j.transpose() * r;
        }

        let mut step = None;
        for _ in 0..12 {
            let damped = h + Matrix3::identity() * lambda;
            let Some(delta) = damped.lu().solve(&(-g)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = Pose2::new(
                pose.theta + delta[2],
                pose.x + delta[0],
                pose.y + delta[1],
            );
            let new_cost = objective(src, dst, &corr, &candidate)?;
            if new_cost <= cost {
                lambda = (lambda / 10.0).max(1e-12);
                step = Some((candidate, delta.norm(), new_cost));
                break;
            }
            lambda *= 10.0;
        }

        match step {
            Some((candidate, norm, new_cost)) => {
                log::debug!(
                    "iter {iterations}: pairs {} cost {cost:.6} -> {new_cost:.6} |dx| {norm:.3e} lambda {lambda:.1e}",
                    corr.len()
                );
                trace.push((cost, new_cost));
                pose = candidate;
                if norm < params.tolerance {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent direction left at this damping: stationary
                converged = true;
                break;
            }
        }
    }

    let corr = associate_with(&grid, src, dst, &pose, gate);
    let final_cost = objective(src, dst, &corr, &pose)?;
    Ok(RegistrationResult {
        pose,
        final_cost,
        iterations,
        inlier_fraction: corr.len() as f64 / src.len() as f64,
        converged,
        weights: pair_weights(src, dst, &corr, &pose),
        cost_trace: trace,
    })
}
