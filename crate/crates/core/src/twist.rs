//! Twist `t(x, x0, u) = adj grad u(x) (u(x) - u(x0)) . (x - x0)/|x - x0|`,
//! the penalty functional built from its negative part, and the angular
//! profile of circle images used to test star-shapedness.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ext::compensated_sum;
use crate::field::{adjugate, centroid_value, element_gradient, interpolate, DeformationField};
use crate::mesh::{Domain, Mesh};
use crate::{fmt_sci, Vec2};

/// Twist on element `e`, sampled at the centroid with `u(x)` the centroid
/// interpolant. `None` when the centroid coincides with `x0`.
pub fn element_twist(mesh: &Mesh, nodal: &[Vec2], a: Vec2, x0: Vec2, e: usize) -> Option<f64> {
    let c = mesh.centroids[e];
    let offset = c - x0;
    let dist = offset.norm();
    if dist <= 1e-14 * (1.0 + x0.norm()) {
        return None;
    }
    let adj = adjugate(&element_gradient(mesh, nodal, e));
    let uc = centroid_value(mesh, nodal, e);
    Some((adj * (uc - a)).dot(&offset) / dist)
}

/// `1e-8 * median |t|`, the zero threshold for sign decisions.
pub fn sign_tolerance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.total_cmp(b));
    1e-8 * abs[abs.len() / 2]
}

/// `g(s) = max(-s, 0)`.
pub fn negative_part(s: f64) -> f64 {
    if s < 0.0 {
        -s
    } else {
        0.0
    }
}

/// Per-element twist relative to `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistField {
    pub x0: Vec2,
    pub values: Vec<Option<f64>>,
    /// Elements whose centroid coincides with `x0`.
    pub skipped: Vec<usize>,
}

pub fn twist_field(mesh: &Mesh, u: &DeformationField, x0: Vec2) -> Result<TwistField> {
    let a = interpolate(mesh, u, x0)?;
    let values: Vec<Option<f64>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| element_twist(mesh, &u.nodal, a, x0, e))
        .collect();
    let skipped = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_none())
        .map(|(e, _)| e)
        .collect();
    Ok(TwistField { x0, values, skipped })
}

/// Twist restricted to `B(x0, r')` with its violation measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TwistReport {
    pub x0: Vec2,
    pub r_prime: f64,
    /// `(element, twist)` for elements with centroid in the ball.
    pub values: Vec<(usize, f64)>,
    pub min_twist: f64,
    pub tol: f64,
    /// `sum |T| g(t)` with twists above `-tol` treated as zero.
    pub violation: f64,
}

impl TwistReport {
    pub fn is_nonnegative(&self) -> bool {
        self.min_twist >= -self.tol
    }
}

pub fn twist_report(mesh: &Mesh, u: &DeformationField, x0: Vec2, r_prime: f64) -> Result<TwistReport> {
    let a = interpolate(mesh, u, x0)?;
    Ok(twist_report_with(mesh, u, a, x0, r_prime))
}

fn twist_report_with(mesh: &Mesh, u: &DeformationField, a: Vec2, x0: Vec2, r_prime: f64) -> TwistReport {
    let values: Vec<(usize, f64)> = (0..mesh.num_triangles())
        .filter(|&e| (mesh.centroids[e] - x0).norm() < r_prime)
        .filter_map(|e| element_twist(mesh, &u.nodal, a, x0, e).map(|t| (e, t)))
        .collect();
    let ts: Vec<f64> = values.iter().map(|v| v.1).collect();
    let tol = sign_tolerance(&ts);
    let min_twist = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let violation = compensated_sum(values.iter().map(|&(e, t)| {
        if t >= -tol {
            0.0
        } else {
            mesh.areas[e] * negative_part(t)
        }
    }));
    TwistReport {
        x0,
        r_prime,
        values,
        min_twist,
        tol,
        violation,
    }
}

/// Region of centers `Omega'` for the penalty functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CenterRegion {
    Ball { center: Vec2, radius: f64 },
    /// Axis-aligned square `center +- half`.
    Square { center: Vec2, half: f64 },
}

impl CenterRegion {
    pub fn contains_strictly(&self, p: Vec2) -> bool {
        match self {
            CenterRegion::Ball { center, radius } => (p - center).norm() < *radius,
            CenterRegion::Square { center, half } => {
                (p.x - center.x).abs() < *half && (p.y - center.y).abs() < *half
            }
        }
    }

    /// Lower bound on `dist(region, boundary)`.
    pub fn dist_to_boundary(&self, domain: &Domain) -> f64 {
        match (self, domain) {
            (CenterRegion::Ball { center, radius }, _) => domain.dist_to_boundary(*center) - radius,
            (CenterRegion::Square { center, half }, Domain::Square) => {
                1.0 - (center.x.abs() + half).max(center.y.abs() + half)
            }
            (CenterRegion::Square { center, half }, Domain::Disc { radius }) => {
                radius - (center.norm() + half * std::f64::consts::SQRT_2)
            }
        }
    }
}

/// Value of the penalty functional and its per-center breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyResult {
    pub region: CenterRegion,
    pub r_prime: f64,
    pub value: f64,
    /// `(x0, inner integral)` per center, in vertex order.
    pub per_center: Vec<(Vec2, f64)>,
    /// Smallest twist over every sampled ball.
    pub min_twist: f64,
    /// Whether each center passed its sign test.
    pub center_ok: Vec<bool>,
}

impl PenaltyResult {
    pub fn violating_centers(&self) -> impl Iterator<Item = &(Vec2, f64)> {
        self.per_center.iter().filter(|c| c.1 > 0.0)
    }
}

pub fn penalty(mesh: &Mesh, u: &DeformationField, region: CenterRegion, r_prime: f64) -> Result<PenaltyResult> {
    if !(r_prime > 0.0) {
        return Err(Error::InvalidParams(format!("need r' > 0, got {r_prime}")));
    }
    let gap = region.dist_to_boundary(&mesh.domain);
    if r_prime >= gap {
        return Err(Error::InvalidParams(format!(
            "r' = {r_prime} must be below dist(region, boundary) = {gap}"
        )));
    }
    let lumped = mesh.lumped_areas();
    let centers: Vec<usize> = (0..mesh.num_vertices())
        .filter(|&v| {
            let p = mesh.vertices[v];
            region.contains_strictly(p) && mesh.domain.dist_to_boundary(p) > r_prime
        })
        .collect();
    let reports: Vec<TwistReport> = centers
        .par_iter()
        .map(|&v| {
            let x0 = mesh.vertices[v];
            twist_report_with(mesh, u, u.nodal[v], x0, r_prime)
        })
        .collect();
    let value = compensated_sum(
        centers
            .iter()
            .zip(&reports)
            .map(|(&v, rep)| lumped[v] * rep.violation),
    );
    Ok(PenaltyResult {
        region,
        r_prime,
        value,
        per_center: reports.iter().map(|r| (r.x0, r.violation)).collect(),
        min_twist: reports.iter().map(|r| r.min_twist).fold(f64::INFINITY, f64::min),
        center_ok: reports.iter().map(|r| r.is_nonnegative()).collect(),
    })
}

/// Sampled image of the circle `S(x0, R)` seen from `u(x0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarShapeProfile {
    pub x0: Vec2,
    pub radius: f64,
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    /// Continuous (unwrapped) polar angle of `u(x0 + R e(theta)) - u(x0)`.
    pub sigma: Vec<f64>,
    pub winding: f64,
    /// `min_k (sigma_{k+1} - sigma_k)`, closing step included.
    pub margin: f64,
    pub min_rho: f64,
}

impl StarShapeProfile {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("radius".into(), fmt_sci(self.radius)),
            ("winding".into(), fmt_sci(self.winding)),
            ("margin".into(), fmt_sci(self.margin)),
            ("min_rho".into(), fmt_sci(self.min_rho)),
        ]
    }
}

/// Wrap an angle difference into `(-pi, pi]`.
fn wrap(d: f64) -> f64 {
    let mut w = d % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Unwrap the angles of a closed sampled curve. Returns the cumulative
/// angles (one per sample) and the closing increment.
pub fn unwrap_closed(points: &[Vec2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = points.len();
    let raw: Vec<f64> = points.iter().map(|w| w.y.atan2(w.x)).collect();
    let mut sigma = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    sigma.push(raw[0]);
    for k in 0..n {
        let next = raw[(k + 1) % n];
        let jump = wrap(next - raw[k]);
        if jump.abs() >= PI * (1.0 - 1e-12) {
            return Err(Error::UnwrapAmbiguous { index: k, jump });
        }
        steps.push(jump);
        if k + 1 < n {
            sigma.push(sigma[k] + jump);
        }
    }
    Ok((sigma, steps))
}

pub fn star_profile(mesh: &Mesh, u: &DeformationField, x0: Vec2, radius: f64, n_theta: usize) -> Result<StarShapeProfile> {
    if n_theta < 64 {
        return Err(Error::InvalidParams(format!("need n_theta >= 64, got {n_theta}")));
    }
    if !(radius > 0.0) || mesh.domain.dist_to_boundary(x0) < radius {
        return Err(Error::InvalidParams(format!(
            "circle of radius {radius} around ({}, {}) leaves the domain",
            x0.x, x0.y
        )));
    }
    let a = interpolate(mesh, u, x0)?;
    let theta: Vec<f64> = (0..n_theta).map(|k| 2.0 * PI * k as f64 / n_theta as f64).collect();
    let w = theta
        .iter()
        .map(|t| interpolate(mesh, u, x0 + Vec2::new(t.cos(), t.sin()) * radius).map(|p| p - a))
        .collect::<Result<Vec<Vec2>>>()?;
    let rho: Vec<f64> = w.iter().map(|p| p.norm()).collect();
    let max_rho = rho.iter().copied().fold(0.0f64, f64::max);
    let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_rho > 1e-9 * max_rho) {
        return Err(Error::OriginOnCurve { min_rho });
    }
    let (sigma, steps) = unwrap_closed(&w)?;
    let total: f64 = steps.iter().sum();
    let margin = steps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StarShapeProfile {
        x0,
        radius,
        theta,
        rho,
        sigma,
        winding: total / (2.0 * PI),
        margin,
        min_rho,
    })
}

/// One radius of the equivalence probe.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusRow {
    pub radius: f64,
    pub shell_min_twist: f64,
    pub twist_ok: bool,
    /// `None` when the profile is undefined (curve through the center or an
    /// ambiguous unwrap); that counts as a failed star test.
    pub star_margin: Option<f64>,
    pub star_ok: bool,
}

/// Agreement between the twist sign test and the star-shape test over a
/// ladder of radii. `table[i][j]`: `i = twist test failed`, `j = star test failed`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub x0: Vec2,
    pub rows: Vec<RadiusRow>,
    pub table: [[usize; 2]; 2],
}

impl EquivalenceReport {
    pub fn disagreements(&self) -> usize {
        self.table[0][1] + self.table[1][0]
    }

    pub fn disagreement_rate(&self) -> f64 {
        self.disagreements() as f64 / self.rows.len().max(1) as f64
    }

    pub fn all_positive(&self) -> bool {
        self.table[0][0] == self.rows.len()
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("radii".into(), self.rows.len().to_string()),
            ("both_pass".into(), self.table[0][0].to_string()),
            ("twist_pass_star_fail".into(), self.table[0][1].to_string()),
            ("twist_fail_star_pass".into(), self.table[1][0].to_string()),
            ("both_fail".into(), self.table[1][1].to_string()),
            ("disagreement_rate".into(), fmt_sci(self.disagreement_rate())),
        ]
    }
}

/// Radii `R_j = r' (j + 1/2) / count`. The shell around `R_j` holds the
/// elements whose centroid distance lies within `h_max / 2` of `R_j`.
pub fn equivalence_probe(
    mesh: &Mesh,
    u: &DeformationField,
    x0: Vec2,
    r_prime: f64,
    radii_count: usize,
    n_theta: usize,
) -> Result<EquivalenceReport> {
    if radii_count == 0 {
        return Err(Error::InvalidParams("need at least one radius".into()));
    }
    let a = interpolate(mesh, u, x0)?;
    let half_width = mesh.h_max / 2.0;
    let twists: Vec<(f64, Option<f64>)> = (0..mesh.num_triangles())
        .map(|e| {
            let d = (mesh.centroids[e] - x0).norm();
            (d, if d < r_prime + half_width { element_twist(mesh, &u.nodal, a, x0, e) } else { None })
        })
        .collect();
    let radii: Vec<f64> = (0..radii_count)
        .map(|j| r_prime * (j as f64 + 0.5) / radii_count as f64)
        .collect();
    let rows = radii
        .par_iter()
        .map(|&radius| {
            let shell: Vec<f64> = twists
                .iter()
                .filter(|(d, _)| (d - radius).abs() <= half_width)
                .filter_map(|(_, t)| *t)
                .collect();
            let tol = sign_tolerance(&shell);
            let shell_min_twist = shell.iter().copied().fold(f64::INFINITY, f64::min);
            let star_margin = match star_profile(mesh, u, x0, radius, n_theta) {
                Ok(p) => Some(p.margin),
                Err(Error::OriginOnCurve { .. }) | Err(Error::UnwrapAmbiguous { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(RadiusRow {
                radius,
                shell_min_twist,
                twist_ok: shell_min_twist >= -tol,
                star_ok: star_margin.is_some_and(|m| m >= 0.0),
                star_margin,
            })
        })
        .collect::<Result<Vec<RadiusRow>>>()?;
    let mut table = [[0usize; 2]; 2];
    for row in &rows {
        table[usize::from(!row.twist_ok)][usize::from(!row.star_ok)] += 1;
    }
    Ok(EquivalenceReport { x0, rows, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;
    use crate::Mat2;

    #[test]
    fn identity_twist_is_distance() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::identity(&m);
        let x0 = Vec2::new(0.1, 0.2);
        let tf = twist_field(&m, &u, x0).unwrap();
        for (e, t) in tf.values.iter().enumerate() {
            let d = (m.centroids[e] - x0).norm();
            assert!((t.unwrap() - d).abs() < 1e-14);
        }
    }

    #[test]
    fn skipped_when_centroid_is_center() {
        let m = make_mesh(Domain::Square, 4).unwrap();
        let u = DeformationField::identity(&m);
        let tf = twist_field(&m, &u, m.centroids[5]).unwrap();
        assert_eq!(tf.skipped, vec![5]);
    }

    #[test]
    fn identity_star_profile() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let u = DeformationField::identity(&m);
        let p = star_profile(&m, &u, Vec2::zeros(), 0.5, 64).unwrap();
        assert!((p.winding - 1.0).abs() < 1e-12);
        // the P1 interpolant of the identity is exact
        assert!((p.margin - 2.0 * PI / 64.0).abs() < 1e-12);
        assert!(matches!(star_profile(&m, &u, Vec2::zeros(), 0.5, 32), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn ellipse_is_star_shaped() {
        let m = make_mesh(Domain::Square, 32).unwrap();
        let a = Mat2::new(2.0, 0.0, 0.0, 0.5);
        let u = DeformationField::from_fn(&m, |x| a * x);
        let p = star_profile(&m, &u, Vec2::new(0.05, 0.0), 0.4, 128).unwrap();
        assert!((p.winding - 1.0).abs() < 1e-9);
        assert!(p.margin > 0.0);
    }

    #[test]
    fn collapsed_circle_is_rejected() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::from_fn(&m, |_| Vec2::new(1.0, 2.0));
        assert!(matches!(
            star_profile(&m, &u, Vec2::zeros(), 0.5, 64),
            Err(Error::OriginOnCurve { .. })
        ));
    }

    #[test]
    fn unwrap_detects_half_turns() {
        let pts = vec![Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::new(1.0, 1e-3)];
        assert!(matches!(unwrap_closed(&pts), Err(Error::UnwrapAmbiguous { index: 0, .. })));
    }

    #[test]
    fn penalty_rejects_large_radius() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::identity(&m);
        let region = CenterRegion::Ball { center: Vec2::zeros(), radius: 0.5 };
        assert!(matches!(penalty(&m, &u, region, 0.6), Err(Error::InvalidParams(_))));
        assert_eq!(penalty(&m, &u, region, 0.3).unwrap().value, 0.0);
    }
}
