//! The stored energy `E(u) = sum_T |T| (lambda |grad u|^2 + h(det grad u))`,
//! its nodal gradient, and the radial outer variations `u + eps eta^2 (u - a)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ext::{compensated_sum, Extended};
use crate::field::{cofactor, element_gradient, interpolate, DeformationField};
use crate::law::Law;
use crate::mesh::Mesh;
use crate::twist::element_twist;
use crate::{fmt_sci, Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub lambda: f64,
    pub law: Law,
}

impl EnergyConfig {
    pub fn new(lambda: f64, law: impl Into<Law>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda must be positive, got {lambda}")));
        }
        Ok(EnergyConfig {
            lambda,
            law: law.into(),
        })
    }

    /// `W(F) = lambda |F|^2 + h(det F)`.
    pub fn density(&self, f: &Mat2) -> Extended {
        match self.law.eval(f.determinant()) {
            Extended::Finite(h) => Extended::Finite(self.lambda * f.norm_squared() + h),
            Extended::Infinite => Extended::Infinite,
        }
    }

    /// `dW/dF = 2 lambda F + h'(det F) cof F`.
    pub fn stress(&self, f: &Mat2) -> Result<Mat2> {
        let hp = self.law.eval_prime(f.determinant())?;
        Ok(f * (2.0 * self.lambda) + cofactor(f) * hp)
    }
}

fn element_densities(mesh: &Mesh, nodal: &[Vec2], cfg: &EnergyConfig) -> Vec<Extended> {
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| match cfg.density(&element_gradient(mesh, nodal, e)) {
            Extended::Finite(w) => Extended::Finite(w * mesh.areas[e]),
            Extended::Infinite => Extended::Infinite,
        })
        .collect()
}

pub fn energy(mesh: &Mesh, u: &DeformationField, cfg: &EnergyConfig) -> Extended {
    let parts = element_densities(mesh, &u.nodal, cfg);
    if parts.iter().any(|p| !p.is_finite()) {
        return Extended::Infinite;
    }
    Extended::Finite(compensated_sum(parts.into_iter().filter_map(Extended::finite)))
}

/// `E(v) - E(u)` summed element by element, which avoids cancellation when
/// the two fields differ on a small patch.
pub fn energy_difference(
    mesh: &Mesh,
    u: &DeformationField,
    v: &DeformationField,
    cfg: &EnergyConfig,
) -> Extended {
    let diffs: Vec<Extended> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let fu = element_gradient(mesh, &u.nodal, e);
            let fv = element_gradient(mesh, &v.nodal, e);
            if fu == fv {
                return Extended::Finite(0.0);
            }
            match (cfg.density(&fv), cfg.density(&fu)) {
                (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite((a - b) * mesh.areas[e]),
                _ => Extended::Infinite,
            }
        })
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Extended::Infinite;
    }
    Extended::Finite(compensated_sum(diffs.into_iter().filter_map(Extended::finite)))
}

/// Nodal gradient of the discrete energy, zeroed on Dirichlet nodes.
pub fn energy_gradient(mesh: &Mesh, u: &DeformationField, cfg: &EnergyConfig) -> Result<Vec<Vec2>> {
    let forces: Vec<Result<[Vec2; 3]>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let f = element_gradient(mesh, &u.nodal, e);
            let det = f.determinant();
            if det <= 0.0 {
                return Err(Error::InfeasibleState { element: e, det });
            }
            let p = cfg.stress(&f)? * mesh.areas[e];
            let g = &mesh.shape_grads[e];
            Ok([p * g[0], p * g[1], p * g[2]])
        })
        .collect();
    let mut out = vec![Vec2::zeros(); mesh.num_vertices()];
    for (tri, f) in mesh.triangles.iter().zip(forces) {
        let f = f?;
        for k in 0..3 {
            out[tri[k]] += f[k];
        }
    }
    for (g, &fixed) in out.iter_mut().zip(&mesh.dirichlet) {
        if fixed {
            *g = Vec2::zeros();
        }
    }
    Ok(out)
}

/// Radial cutoff profile: `1` on `[0, r]`, `0` beyond `2r`, with a cubic
/// smoothstep ramp in between (`f' <= 0`, `|f'| <= 1.5 / r`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub r: f64,
}

/// Constant `c` in `|f'| <= c / r` for [`Cutoff`].
pub const CUTOFF_SLOPE: f64 = 1.5;

impl Cutoff {
    pub fn value(&self, radius: f64) -> f64 {
        if radius <= self.r {
            1.0
        } else if radius >= 2.0 * self.r {
            0.0
        } else {
            let t = (radius - self.r) / self.r;
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    pub fn slope(&self, radius: f64) -> f64 {
        if radius <= self.r || radius >= 2.0 * self.r {
            0.0
        } else {
            let t = (radius - self.r) / self.r;
            -6.0 * t * (1.0 - t) / self.r
        }
    }
}

/// Center, inner radius and signed amplitude of an outer variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationSpec {
    pub x0: Vec2,
    pub r: f64,
    pub eps: f64,
}

impl VariationSpec {
    pub fn cutoff(&self) -> Cutoff {
        Cutoff { r: self.r }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite() && self.eps.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "variation needs r > 0 and finite eps, got r = {}, eps = {}",
                self.r, self.eps
            )));
        }
        let dist = mesh.domain.dist_to_boundary(self.x0);
        if 2.0 * self.r >= dist {
            return Err(Error::InvalidParams(format!(
                "support 2r = {} must stay inside the domain (distance {dist})",
                2.0 * self.r
            )));
        }
        Ok(())
    }

    /// Nodal cutoff values `eta = f(|x - x0|)`.
    pub fn nodal_eta(&self, mesh: &Mesh) -> Vec<f64> {
        let c = self.cutoff();
        mesh.vertices.iter().map(|x| c.value((x - self.x0).norm())).collect()
    }
}

/// `u^eps = u + eps eta^2 (u - a)` with `a = u(x0)` by interpolation.
pub fn build_variation(mesh: &Mesh, u: &DeformationField, spec: &VariationSpec) -> Result<DeformationField> {
    spec.validate(mesh)?;
    let a = interpolate(mesh, u, spec.x0)?;
    let eta = spec.nodal_eta(mesh);
    Ok(DeformationField {
        nodal: u
            .nodal
            .iter()
            .zip(&eta)
            .map(|(ui, e)| ui + (ui - a) * (spec.eps * e * e))
            .collect(),
    })
}

/// Minimum twist over elements whose centroid lies in `B(x0, radius)`, and
/// the scale-aware tolerance used for its sign test.
fn min_twist_in_ball(mesh: &Mesh, u: &DeformationField, x0: Vec2, radius: f64) -> Result<(f64, f64)> {
    let a = interpolate(mesh, u, x0)?;
    let values: Vec<f64> = (0..mesh.num_triangles())
        .filter(|&e| (mesh.centroids[e] - x0).norm() < radius)
        .filter_map(|e| element_twist(mesh, &u.nodal, a, x0, e))
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min, crate::twist::sign_tolerance(&values)))
}

/// Per-element comparison of `det grad u^eps` against the closed form
/// `(1 + eps eta^2)^2 det + 2 eps f'(R) eta (1 + eps eta^2) t` and the
/// lower bound `det grad u^eps >= det grad u / 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationBoundsReport {
    /// Elements whose nodes all lie on the plateau or all in the far field.
    pub exact_elements: usize,
    pub max_identity_residual: f64,
    /// Same residual over ramp elements (discretization error, not asserted).
    pub max_ramp_residual: f64,
    pub min_lower_margin: f64,
    pub min_lower_margin_element: usize,
    /// `max(det grad u^eps - det grad u)`; positive values are expected on
    /// the ramp where the twist term dominates.
    pub max_upper_excess: f64,
    pub scale: f64,
}

impl VariationBoundsReport {
    pub fn key_values(&self) -> Vec<(String, String)> {
        vec![
            ("exact_elements".into(), self.exact_elements.to_string()),
            ("max_identity_residual".into(), fmt_sci(self.max_identity_residual)),
            ("max_ramp_residual".into(), fmt_sci(self.max_ramp_residual)),
            ("min_det_margin".into(), fmt_sci(self.min_lower_margin)),
            ("max_upper_excess".into(), fmt_sci(self.max_upper_excess)),
            ("det_scale".into(), fmt_sci(self.scale)),
        ]
    }
}

pub fn check_variation_bounds(
    mesh: &Mesh,
    u: &DeformationField,
    spec: &VariationSpec,
) -> Result<VariationBoundsReport> {
    spec.validate(mesh)?;
    if !(spec.eps > -0.5 && spec.eps <= 0.0) {
        return Err(Error::InvalidParams(format!("need -1/2 < eps <= 0, got {}", spec.eps)));
    }
    let (min_t, tol) = min_twist_in_ball(mesh, u, spec.x0, 2.0 * spec.r)?;
    if min_t < -tol {
        return Err(Error::InvalidParams(format!(
            "twist is negative on B(x0, 2r): min {min_t:e}"
        )));
    }
    let a = interpolate(mesh, u, spec.x0)?;
    let ue = build_variation(mesh, u, spec)?;
    let eta = spec.nodal_eta(mesh);
    let cutoff = spec.cutoff();
    let eps = spec.eps;

    let rows: Vec<(f64, f64, f64, bool)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let tri = mesh.triangles[e];
            let d = element_gradient(mesh, &u.nodal, e).determinant();
            let de = element_gradient(mesh, &ue.nodal, e).determinant();
            let etas = tri.map(|k| eta[k]);
            let plateau = etas.iter().all(|&v| v == 1.0);
            let far = etas.iter().all(|&v| v == 0.0);
            let eta_bar = (etas[0] + etas[1] + etas[2]) / 3.0;
            let radius = (mesh.centroids[e] - spec.x0).norm();
            let t = element_twist(mesh, &u.nodal, a, spec.x0, e).unwrap_or(0.0);
            let s = 1.0 + eps * eta_bar * eta_bar;
            let predicted = s * s * d + 2.0 * eps * cutoff.slope(radius) * eta_bar * s * t;
            (d, de, (de - predicted).abs(), plateau || far)
        })
        .collect();

    let scale = rows.iter().map(|r| r.0.abs()).fold(0.0f64, f64::max);
    let mut report = VariationBoundsReport {
        exact_elements: 0,
        max_identity_residual: 0.0,
        max_ramp_residual: 0.0,
        min_lower_margin: f64::INFINITY,
        min_lower_margin_element: 0,
        max_upper_excess: f64::NEG_INFINITY,
        scale,
    };
    for (e, &(d, de, residual, exact)) in rows.iter().enumerate() {
        if exact {
            report.exact_elements += 1;
            report.max_identity_residual = report.max_identity_residual.max(residual);
        } else {
            report.max_ramp_residual = report.max_ramp_residual.max(residual);
        }
        let margin = de - d / 4.0;
        if margin < report.min_lower_margin {
            report.min_lower_margin = margin;
            report.min_lower_margin_element = e;
        }
        report.max_upper_excess = report.max_upper_excess.max(de - d);
    }
    if report.min_lower_margin < -1e-9 * scale {
        return Err(Error::BoundViolated {
            element: report.min_lower_margin_element,
            margin: report.min_lower_margin,
        });
    }
    Ok(report)
}

/// Both sides of the variational inequality satisfied by local minimizers
/// with nonnegative twist, plus one-sided difference quotients
/// `(E(u^eps) - E(u)) / eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalProbe {
    pub lhs: f64,
    pub rhs: f64,
    pub slopes: Vec<(f64, f64)>,
    pub min_twist: f64,
}

impl VariationalProbe {
    pub fn max_slope(&self) -> f64 {
        self.slopes.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn slopes_within(&self, tol: f64) -> bool {
        self.slopes.iter().all(|s| s.1 <= tol)
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("lhs".to_string(), fmt_sci(self.lhs)),
            ("rhs".to_string(), fmt_sci(self.rhs)),
            ("min_twist".to_string(), fmt_sci(self.min_twist)),
        ];
        for (eps, slope) in &self.slopes {
            out.push((format!("slope_eps_{eps:e}"), fmt_sci(*slope)));
        }
        out
    }
}

pub fn variational_inequality_probe(
    mesh: &Mesh,
    u: &DeformationField,
    spec: &VariationSpec,
    cfg: &EnergyConfig,
    eps_ladder: &[f64],
) -> Result<VariationalProbe> {
    spec.validate(mesh)?;
    let a = interpolate(mesh, u, spec.x0)?;
    let eta = spec.nodal_eta(mesh);
    let cutoff = spec.cutoff();
    let v: Vec<Vec2> = u.nodal.iter().zip(&eta).map(|(ui, e)| (ui - a) * (e * e)).collect();

    let terms: Vec<(f64, f64)> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let tri = mesh.triangles[e];
            let etas = tri.map(|k| eta[k]);
            if etas.iter().all(|&x| x == 0.0) {
                return (0.0, 0.0);
            }
            let area = mesh.areas[e];
            let f = element_gradient(mesh, &u.nodal, e);
            let gv = element_gradient(mesh, &v, e);
            let lhs = cfg.lambda * f.component_mul(&gv).sum() * area;
            let d = f.determinant();
            let hp = cfg.law.eval_prime(d).unwrap_or(f64::NAN);
            let eta_bar = (etas[0] + etas[1] + etas[2]) / 3.0;
            let eta2_bar = etas.iter().map(|x| x * x).sum::<f64>() / 3.0;
            let rhs = if d < 1.0 {
                eta2_bar * hp.abs() * d
            } else {
                let radius = (mesh.centroids[e] - spec.x0).norm();
                let t = element_twist(mesh, &u.nodal, a, spec.x0, e).unwrap_or(0.0);
                eta_bar * t * hp * cutoff.slope(radius).abs()
            };
            (lhs, rhs * area)
        })
        .collect();
    let lhs = compensated_sum(terms.iter().map(|t| t.0));
    let rhs = compensated_sum(terms.iter().map(|t| t.1));

    let mut slopes = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let ue = build_variation(mesh, u, &VariationSpec { eps, ..*spec })?;
        let slope = match energy_difference(mesh, u, &ue, cfg) {
            Extended::Finite(d) => d / eps,
            // leaving the admissible set cannot lower the energy
            Extended::Infinite => f64::NEG_INFINITY,
        };
        slopes.push((eps, slope));
    }
    let (min_twist, _) = min_twist_in_ball(mesh, u, spec.x0, 2.0 * spec.r)?;
    Ok(VariationalProbe {
        lhs,
        rhs,
        slopes,
        min_twist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::PaperLaw;
    use crate::mesh::{make_mesh, Domain};

    fn cfg() -> EnergyConfig {
        EnergyConfig::new(1.0, PaperLaw::preset()).unwrap()
    }

    #[test]
    fn identity_energy() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::identity(&m);
        let e = energy(&m, &u, &cfg()).finite().unwrap();
        assert!((e - (2.0 + PaperLaw::preset().theta1) * 4.0).abs() < 1e-12);
    }

    #[test]
    fn stretch_energy() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::from_fn(&m, |x| Vec2::new(2.0 * x.x, 0.5 * x.y));
        let e = energy(&m, &u, &cfg()).finite().unwrap();
        assert!((e - (4.25 + PaperLaw::preset().theta1) * 4.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_element_is_infinite() {
        let m = make_mesh(Domain::Square, 4).unwrap();
        let mut u = DeformationField::identity(&m);
        let center = m.vertex_at(2, 2);
        u.nodal[center] = Vec2::new(0.9, 0.9);
        assert_eq!(energy(&m, &u, &cfg()), Extended::Infinite);
        assert!(matches!(energy_gradient(&m, &u, &cfg()), Err(Error::InfeasibleState { .. })));
    }

    #[test]
    fn cutoff_profile() {
        let c = Cutoff { r: 0.2 };
        assert_eq!(c.value(0.1), 1.0);
        assert_eq!(c.value(0.5), 0.0);
        let mut max_slope = 0.0f64;
        for i in 0..=1000 {
            let r = 0.2 + 0.2 * i as f64 / 1000.0;
            assert!(c.slope(r) <= 0.0);
            max_slope = max_slope.max(c.slope(r).abs());
            let fd = (c.value(r + 1e-7) - c.value(r - 1e-7)) / 2e-7;
            assert!((fd - c.slope(r)).abs() < 1e-5);
        }
        assert!((max_slope - CUTOFF_SLOPE / c.r).abs() < 1e-9);
    }

    #[test]
    fn variation_trivial_cases() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let u = DeformationField::identity(&m);
        let spec = VariationSpec { x0: Vec2::new(0.1, -0.05), r: 0.2, eps: 0.0 };
        assert_eq!(build_variation(&m, &u, &spec).unwrap(), u);
        let spec = VariationSpec { eps: -0.3, ..spec };
        let ue = build_variation(&m, &u, &spec).unwrap();
        for (x, y) in m.vertices.iter().zip(&ue.nodal) {
            let r = (x - spec.x0).norm();
            if r >= 0.4 {
                assert_eq!(x, y);
            } else if r <= 0.2 {
                let expect = x + (x - spec.x0) * spec.eps;
                assert!((y - expect).norm() < 1e-15);
            }
        }
        let bad = VariationSpec { r: 0.6, ..spec };
        assert!(matches!(build_variation(&m, &u, &bad), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn probe_reports_violation_without_error() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let u = DeformationField::from_fn(&m, |x| {
            Vec2::new(x.x + 0.05 * (3.0 * x.y).sin(), x.y + 0.05 * (2.0 * x.x).cos())
        });
        let spec = VariationSpec { x0: Vec2::zeros(), r: 0.2, eps: -0.01 };
        let probe = variational_inequality_probe(&m, &u, &spec, &cfg(), &[-1e-2, -1e-3]).unwrap();
        assert_eq!(probe.slopes.len(), 2);
        assert!(probe.lhs.is_finite() && probe.rhs.is_finite());
    }
}
