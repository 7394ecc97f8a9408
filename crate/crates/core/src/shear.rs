//! Shear maps `u_sigma(x) = x + sigma(x) e2` on `Q = [-1, 1]^2`, for which
//! `det grad u_sigma = 1 + sigma_,2`, together with the one-sided excess
//! fields `xi_+-` and their variations.

use rayon::prelude::*;

use crate::energy::{VariationSpec, CUTOFF_SLOPE};
use crate::error::{Error, Result};
use crate::ext::{compensated_sum, Extended};
use crate::field::{interpolate_scalar, scalar_gradient};
use crate::law::Law;
use crate::mesh::{Domain, Mesh};
use crate::regularity::{density_growth, scalar_dirichlet_density, DecayProfile};
use crate::solver::{descend, Problem, SolveSettings, TraceRow};
use crate::{fmt_sci, Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearConfig {
    pub lambda: f64,
    pub law: Law,
    /// Lipschitz bound `M` in the `x1` direction enforced by the penalty.
    pub m_bound: f64,
    pub penalty_weight: f64,
    /// Replace the Lipschitz penalty by a Holder-quotient penalty on
    /// horizontal grid edges. Off by default.
    pub holder_experiment: bool,
    pub holder_exponent: f64,
}

impl ShearConfig {
    pub fn new(lambda: f64, law: impl Into<Law>, m_bound: f64) -> Result<Self> {
        if !(lambda > 0.0 && m_bound >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "shear config needs lambda > 0 and M >= 0, got {lambda}, {m_bound}"
            )));
        }
        Ok(ShearConfig {
            lambda,
            law: law.into(),
            m_bound,
            penalty_weight: 1e3,
            holder_experiment: false,
            holder_exponent: 0.5,
        })
    }

    /// `lambda (2 + 2 s2 + |grad s|^2) + h(1 + s2)`.
    pub fn density(&self, g: Vec2) -> Extended {
        match self.law.eval(1.0 + g.y) {
            Extended::Finite(h) => Extended::Finite(self.lambda * (2.0 + 2.0 * g.y + g.norm_squared()) + h),
            Extended::Infinite => Extended::Infinite,
        }
    }
}

/// `I + e2 (x) grad sigma`.
pub fn shear_jacobian(g: Vec2) -> Mat2 {
    Mat2::new(1.0, 0.0, g.x, 1.0 + g.y)
}

pub fn shear_dets(mesh: &Mesh, sigma: &[f64]) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|e| 1.0 + scalar_gradient(mesh, sigma, e).y)
        .collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Shear energy without the Lipschitz penalty.
pub fn shear_energy(mesh: &Mesh, sigma: &[f64], cfg: &ShearConfig) -> Extended {
    let parts: Vec<Extended> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| match cfg.density(scalar_gradient(mesh, sigma, e)) {
            Extended::Finite(w) => Extended::Finite(w * mesh.areas[e]),
            Extended::Infinite => Extended::Infinite,
        })
        .collect();
    if parts.iter().any(|p| !p.is_finite()) {
        return Extended::Infinite;
    }
    Extended::Finite(compensated_sum(parts.into_iter().filter_map(Extended::finite)))
}

/// `E(tau) - E(sigma)` summed element by element.
pub fn shear_energy_difference(mesh: &Mesh, sigma: &[f64], tau: &[f64], cfg: &ShearConfig) -> Extended {
    let parts: Vec<Extended> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let a = scalar_gradient(mesh, sigma, e);
            let b = scalar_gradient(mesh, tau, e);
            if a == b {
                return Extended::Finite(0.0);
            }
            match (cfg.density(b), cfg.density(a)) {
                (Extended::Finite(x), Extended::Finite(y)) => Extended::Finite((x - y) * mesh.areas[e]),
                _ => Extended::Infinite,
            }
        })
        .collect();
    if parts.iter().any(|p| !p.is_finite()) {
        return Extended::Infinite;
    }
    Extended::Finite(compensated_sum(parts.into_iter().filter_map(Extended::finite)))
}

/// Horizontal grid edges `(left, right)` of the square mesh.
fn horizontal_edges(mesh: &Mesh) -> impl Iterator<Item = (usize, usize)> + '_ {
    (0..=mesh.n).flat_map(move |j| (0..mesh.n).map(move |i| (mesh.vertex_at(i, j), mesh.vertex_at(i + 1, j))))
}

/// Penalty value and its gradient.
fn penalty_parts(mesh: &Mesh, sigma: &[f64], cfg: &ShearConfig) -> (f64, Vec<f64>) {
    let w = cfg.penalty_weight;
    let m = cfg.m_bound;
    let mut grad = vec![0.0; sigma.len()];
    let mut terms = Vec::new();
    if cfg.holder_experiment {
        let h = mesh.spacing;
        let scale = h.powf(-cfg.holder_exponent);
        for (a, b) in horizontal_edges(mesh) {
            let q = (sigma[b] - sigma[a]) * scale;
            let excess = q.abs() - m;
            if excess > 0.0 {
                terms.push(w * h * h * excess * excess);
                let d = 2.0 * w * h * h * excess * q.signum() * scale;
                grad[b] += d;
                grad[a] -= d;
            }
        }
    } else {
        for e in 0..mesh.num_triangles() {
            let g = scalar_gradient(mesh, sigma, e);
            let excess = g.x.abs() - m;
            if excess > 0.0 {
                let area = mesh.areas[e];
                terms.push(w * area * excess * excess);
                let d = 2.0 * w * area * excess * g.x.signum();
                for k in 0..3 {
                    grad[mesh.triangles[e][k]] += d * mesh.shape_grads[e][k].x;
                }
            }
        }
    }
    (compensated_sum(terms), grad)
}

pub fn lipschitz_penalty(mesh: &Mesh, sigma: &[f64], cfg: &ShearConfig) -> f64 {
    penalty_parts(mesh, sigma, cfg).0
}

/// Gradient of energy plus penalty, zeroed on Dirichlet nodes.
pub fn shear_gradient(mesh: &Mesh, sigma: &[f64], cfg: &ShearConfig) -> Result<Vec<f64>> {
    let forces: Vec<Result<[f64; 3]>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let g = scalar_gradient(mesh, sigma, e);
            let det = 1.0 + g.y;
            if det <= 0.0 {
                return Err(Error::InfeasibleState { element: e, det });
            }
            let hp = cfg.law.eval_prime(det)?;
            let flux = Vec2::new(2.0 * cfg.lambda * g.x, 2.0 * cfg.lambda * (1.0 + g.y) + hp) * mesh.areas[e];
            let sg = &mesh.shape_grads[e];
            Ok([flux.dot(&sg[0]), flux.dot(&sg[1]), flux.dot(&sg[2])])
        })
        .collect();
    let (_, mut out) = penalty_parts(mesh, sigma, cfg);
    for (tri, f) in mesh.triangles.iter().zip(forces) {
        let f = f?;
        for k in 0..3 {
            out[tri[k]] += f[k];
        }
    }
    for (g, &fixed) in out.iter_mut().zip(&mesh.dirichlet) {
        if fixed {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Boundary profiles `phi_+-(x1)` with `phi_+ >= phi_-`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfilePreset {
    Constant { plus: f64, minus: f64 },
    /// `phi_+ = 0.3 sin(pi x1) + 0.5`, `phi_- = -0.5`.
    Oscillatory,
    /// `phi_+ = |x1|`, `phi_- = -|x1|`.
    Abs,
}

impl ProfilePreset {
    pub fn plus(&self, x1: f64) -> f64 {
        match self {
            ProfilePreset::Constant { plus, .. } => *plus,
            ProfilePreset::Oscillatory => 0.3 * (std::f64::consts::PI * x1).sin() + 0.5,
            ProfilePreset::Abs => x1.abs(),
        }
    }

    pub fn minus(&self, x1: f64) -> f64 {
        match self {
            ProfilePreset::Constant { minus, .. } => *minus,
            ProfilePreset::Oscillatory => -0.5,
            ProfilePreset::Abs => -x1.abs(),
        }
    }
}

fn require_square(mesh: &Mesh) -> Result<()> {
    if mesh.domain != Domain::Square {
        return Err(Error::InvalidParams("shear maps live on the square mesh".into()));
    }
    Ok(())
}

/// `sigma0 = (1 + x2)/2 phi_+(x1) + (1 - x2)/2 phi_-(x1)` at every node.
pub fn boundary_from_profiles(
    mesh: &Mesh,
    phi_plus: impl Fn(f64) -> f64,
    phi_minus: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    require_square(mesh)?;
    for i in 0..=mesh.n {
        let x1 = mesh.vertices[mesh.vertex_at(i, 0)].x;
        if phi_plus(x1) < phi_minus(x1) {
            return Err(Error::ProfileOrderViolated { x1 });
        }
    }
    Ok(mesh
        .vertices
        .iter()
        .map(|x| 0.5 * (1.0 + x.y) * phi_plus(x.x) + 0.5 * (1.0 - x.y) * phi_minus(x.x))
        .collect())
}

/// Largest `|sigma(i+1, j) - sigma(i, j)| / dx1` over horizontal neighbours.
pub fn measured_lipschitz(mesh: &Mesh, sigma: &[f64]) -> f64 {
    horizontal_edges(mesh)
        .map(|(a, b)| (sigma[b] - sigma[a]).abs() / (mesh.vertices[b].x - mesh.vertices[a].x))
        .fold(0.0, f64::max)
}

pub struct ShearProblem<'a> {
    pub mesh: &'a Mesh,
    pub cfg: &'a ShearConfig,
}

impl Problem for ShearProblem<'_> {
    fn energy(&self, x: &[f64]) -> Extended {
        match shear_energy(self.mesh, x, self.cfg) {
            Extended::Finite(e) => Extended::Finite(e + lipschitz_penalty(self.mesh, x, self.cfg)),
            Extended::Infinite => Extended::Infinite,
        }
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        shear_gradient(self.mesh, x, self.cfg)
    }

    fn min_det(&self, x: &[f64]) -> f64 {
        min_of(&shear_dets(self.mesh, x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearSolution {
    pub sigma: Vec<f64>,
    /// Energy without the penalty.
    pub energy: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    pub measured_m: f64,
    pub min_det: f64,
}

impl ShearSolution {
    /// Discrete (lipshear) check against the configured bound.
    pub fn lipschitz_ok(&self, m_bound: f64, slack: f64) -> bool {
        self.measured_m <= m_bound * (1.0 + slack)
    }
}

/// Minimize from `sigma0`; Dirichlet nodes keep their `sigma0` values.
pub fn minimize_shear(mesh: &Mesh, sigma0: &[f64], cfg: &ShearConfig, settings: &SolveSettings) -> Result<ShearSolution> {
    require_square(mesh)?;
    let dets = shear_dets(mesh, sigma0);
    if let Some((element, &det)) = dets.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::InfeasibleStart { element, det });
    }
    let out = descend(&ShearProblem { mesh, cfg }, sigma0.to_vec(), settings)?;
    let energy = shear_energy(mesh, &out.x, cfg).finite().unwrap_or(f64::INFINITY);
    Ok(ShearSolution {
        penalty: lipschitz_penalty(mesh, &out.x, cfg),
        measured_m: measured_lipschitz(mesh, &out.x),
        min_det: min_of(&shear_dets(mesh, &out.x)),
        energy,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
        sigma: out.x,
    })
}

/// `xi_+ = (sigma - sigma(x0) - C R)_+` and `xi_- = (sigma(x0) - sigma - C R)_+`
/// at the nodes, with `C = 1 + M`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiFields {
    pub x0: Vec2,
    pub c: f64,
    pub sigma_x0: f64,
    pub xi_plus: Vec<f64>,
    pub xi_minus: Vec<f64>,
    /// Elements where the respective field is not identically zero.
    pub chi_plus: Vec<bool>,
    pub chi_minus: Vec<bool>,
    /// Support elements lying on the wrong side of `x0` beyond the slack.
    pub violations_plus: Vec<usize>,
    pub violations_minus: Vec<usize>,
}

impl XiFields {
    pub fn support_violations(&self) -> usize {
        self.violations_plus.len() + self.violations_minus.len()
    }

    pub fn csv_rows(&self, mesh: &Mesh) -> Vec<String> {
        mesh.vertices
            .iter()
            .zip(self.xi_plus.iter().zip(&self.xi_minus))
            .map(|(x, (p, m))| format!("{},{},{},{}", fmt_sci(x.x), fmt_sci(x.y), fmt_sci(*p), fmt_sci(*m)))
            .collect()
    }
}

/// Support slack: centroids sit at most `2h/3` below or above a node.
pub fn support_slack(mesh: &Mesh) -> f64 {
    2.0 * mesh.spacing / 3.0
}

pub fn xi_fields(mesh: &Mesh, sigma: &[f64], x0: Vec2, m: f64) -> Result<XiFields> {
    require_square(mesh)?;
    let c = 1.0 + m;
    let s0 = interpolate_scalar(mesh, sigma, x0)?;
    let (xi_plus, xi_minus): (Vec<f64>, Vec<f64>) = mesh
        .vertices
        .iter()
        .zip(sigma)
        .map(|(x, s)| {
            let cr = c * (x - x0).norm();
            ((s - s0 - cr).max(0.0), (s0 - s - cr).max(0.0))
        })
        .unzip();
    let support = |xi: &[f64]| -> Vec<bool> { mesh.triangles.iter().map(|t| t.iter().any(|&v| xi[v] > 0.0)).collect() };
    let chi_plus = support(&xi_plus);
    let chi_minus = support(&xi_minus);
    let slack = support_slack(mesh);
    let violations = |chi: &[bool], below: bool| -> Vec<usize> {
        (0..mesh.num_triangles())
            .filter(|&e| {
                let dy = mesh.centroids[e].y - x0.y;
                chi[e] && if below { dy < -slack } else { dy > slack }
            })
            .collect()
    };
    Ok(XiFields {
        x0,
        c,
        sigma_x0: s0,
        violations_plus: violations(&chi_plus, true),
        violations_minus: violations(&chi_minus, false),
        xi_plus,
        xi_minus,
        chi_plus,
        chi_minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }

    /// `+1` for the plus variation, `-1` for the minus variation.
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Nodal direction `w` with `sigma^{eps,+-} = sigma + eps w`:
/// `w = eta^2 xi_+` or `w = -eta^2 xi_-`.
fn variation_direction(mesh: &Mesh, xi: &XiFields, spec: &VariationSpec, sign: Sign) -> Vec<f64> {
    let eta = spec.nodal_eta(mesh);
    let field = match sign {
        Sign::Plus => &xi.xi_plus,
        Sign::Minus => &xi.xi_minus,
    };
    eta.iter().zip(field).map(|(e, x)| sign.factor() * e * e * x).collect()
}

pub fn build_shear_variation(mesh: &Mesh, sigma: &[f64], xi: &XiFields, spec: &VariationSpec, sign: Sign) -> Result<Vec<f64>> {
    spec.validate(mesh)?;
    let w = variation_direction(mesh, xi, spec, sign);
    Ok(sigma.iter().zip(&w).map(|(s, d)| s + spec.eps * d).collect())
}

/// Determinant bounds `det/2 <= det^eps <= det + C'|eps|` with
/// `C' = 1 + C + 2 (c / r) |sigma - sigma(x0) -+ C R|_inf` over `B(x0, 2r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearBoundsReport {
    pub sign: Sign,
    pub eps: f64,
    pub c_prime: f64,
    pub min_lower_margin: f64,
    pub min_upper_margin: f64,
    pub worst_element: usize,
    /// `max |det^eps - det - eps d2 w|`.
    pub max_expansion_residual: f64,
}

impl ShearBoundsReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.min_lower_margin >= -tol && self.min_upper_margin >= -tol
    }

    pub fn ensure(&self, tol: f64) -> Result<()> {
        if self.holds(tol) {
            Ok(())
        } else {
            Err(Error::BoundViolated {
                element: self.worst_element,
                margin: self.min_lower_margin.min(self.min_upper_margin),
            })
        }
    }
}

pub fn check_shear_bounds(mesh: &Mesh, sigma: &[f64], xi: &XiFields, spec: &VariationSpec, sign: Sign) -> Result<ShearBoundsReport> {
    if !(spec.eps > -0.5 && spec.eps <= 0.0) {
        return Err(Error::InvalidParams(format!("need -1/2 < eps <= 0, got {}", spec.eps)));
    }
    let varied = build_shear_variation(mesh, sigma, xi, spec, sign)?;
    let w = variation_direction(mesh, xi, spec, sign);
    let sup = mesh
        .vertices
        .iter()
        .zip(sigma)
        .filter(|(x, _)| (*x - spec.x0).norm() <= 2.0 * spec.r)
        .map(|(x, s)| (s - xi.sigma_x0 - sign.factor() * xi.c * (x - spec.x0).norm()).abs())
        .fold(0.0, f64::max);
    let c_prime = 1.0 + xi.c + 2.0 * CUTOFF_SLOPE / spec.r * sup;
    let before = shear_dets(mesh, sigma);
    let after = shear_dets(mesh, &varied);
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let mut worst = 0;
    let mut residual = 0.0f64;
    for e in 0..mesh.num_triangles() {
        let lo = after[e] - before[e] / 2.0;
        let hi = before[e] + c_prime * spec.eps.abs() - after[e];
        if lo.min(hi) < lower.min(upper) {
            worst = e;
        }
        lower = lower.min(lo);
        upper = upper.min(hi);
        let expansion = before[e] + spec.eps * scalar_gradient(mesh, &w, e).y;
        residual = residual.max((after[e] - expansion).abs());
    }
    Ok(ShearBoundsReport {
        sign,
        eps: spec.eps,
        c_prime,
        min_lower_margin: lower,
        min_upper_margin: upper,
        worst_element: worst,
        max_expansion_residual: residual,
    })
}

/// Both sides of the shear variational inequality for one sign and the
/// one-sided slopes `(E(sigma^eps) - E(sigma)) / eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearProbe {
    pub sign: Sign,
    /// `lambda sum |T| (d2 w + grad sigma . grad w)` with `w` the signed
    /// variation direction; half the first variation of the quadratic part.
    pub lhs: f64,
    /// `sum_{det > 1} |T| |h'(det)|/2 (|grad eta^2| xi + C eta^2) chi`.
    pub rhs: f64,
    pub slopes: Vec<(f64, f64)>,
}

impl ShearProbe {
    pub fn max_slope(&self) -> f64 {
        self.slopes.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn key_values(&self) -> Vec<(String, String)> {
        let p = self.sign.label();
        let mut kv = vec![(format!("lhs_{p}"), fmt_sci(self.lhs)), (format!("rhs_{p}"), fmt_sci(self.rhs))];
        for (eps, s) in &self.slopes {
            kv.push((format!("slope_{p}_eps_{eps:e}"), fmt_sci(*s)));
        }
        kv
    }
}

pub fn shear_inequality_probe(
    mesh: &Mesh,
    sigma: &[f64],
    x0: Vec2,
    m: f64,
    r: f64,
    eps_ladder: &[f64],
    cfg: &ShearConfig,
) -> Result<[ShearProbe; 2]> {
    let xi = xi_fields(mesh, sigma, x0, m)?;
    let base = VariationSpec { x0, r, eps: 0.0 };
    base.validate(mesh)?;
    let eta = base.nodal_eta(mesh);
    let eta2: Vec<f64> = eta.iter().map(|e| e * e).collect();
    let probe = |sign: Sign| -> Result<ShearProbe> {
        let w = variation_direction(mesh, &xi, &base, sign);
        let (field, chi) = match sign {
            Sign::Plus => (&xi.xi_plus, &xi.chi_plus),
            Sign::Minus => (&xi.xi_minus, &xi.chi_minus),
        };
        let mut lhs = Vec::new();
        let mut rhs = Vec::new();
        #[allow(clippy::needless_range_loop)]
        for e in 0..mesh.num_triangles() {
            let area = mesh.areas[e];
            let gs = scalar_gradient(mesh, sigma, e);
            let gw = scalar_gradient(mesh, &w, e);
            lhs.push(cfg.lambda * area * (gw.y + gs.dot(&gw)));
            let det = 1.0 + gs.y;
            if chi[e] && det > 1.0 {
                let tri = mesh.triangles[e];
                let avg = |v: &[f64]| (v[tri[0]] + v[tri[1]] + v[tri[2]]) / 3.0;
                let hp = cfg.law.eval_prime(det)?;
                let g_eta2 = scalar_gradient(mesh, &eta2, e).norm();
                rhs.push(area * hp.abs() / 2.0 * (g_eta2 * avg(field) + xi.c * avg(&eta2)));
            }
        }
        let slopes = eps_ladder
            .iter()
            .map(|&eps| {
                let varied: Vec<f64> = sigma.iter().zip(&w).map(|(s, d)| s + eps * d).collect();
                let de = shear_energy_difference(mesh, sigma, &varied, cfg);
                (eps, de.finite().map_or(f64::INFINITY, |d| d / eps))
            })
            .collect();
        Ok(ShearProbe {
            sign,
            lhs: compensated_sum(lhs),
            rhs: compensated_sum(rhs),
            slopes,
        })
    };
    Ok([probe(Sign::Plus)?, probe(Sign::Minus)?])
}

/// Decay of `|grad xi_+-|^2` around one center and the sampled Holder
/// quotient `|sigma(x) - sigma(x0)| / R^gamma` with `gamma` the Morrey
/// exponent `min(1, alpha_+/2, alpha_-/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiHolderReport {
    pub x0: Vec2,
    pub plus: DecayProfile,
    pub minus: DecayProfile,
    pub gamma: f64,
    pub holder_constant: f64,
}

impl XiHolderReport {
    pub fn alpha_positive(&self) -> bool {
        self.plus.alpha > 0.0 && self.minus.alpha > 0.0
    }
}

pub fn xi_holder_diagnostics(mesh: &Mesh, sigma: &[f64], centers: &[Vec2], m: f64, r_max: f64) -> Result<Vec<XiHolderReport>> {
    centers
        .iter()
        .map(|&x0| {
            let xi = xi_fields(mesh, sigma, x0, m)?;
            let plus = density_growth(mesh, &scalar_dirichlet_density(mesh, &xi.xi_plus), x0, r_max, 0.0)?;
            let minus = density_growth(mesh, &scalar_dirichlet_density(mesh, &xi.xi_minus), x0, r_max, 0.0)?;
            let gamma = 1.0f64.min(plus.alpha / 2.0).min(minus.alpha / 2.0);
            let holder_constant = mesh
                .vertices
                .iter()
                .zip(sigma)
                .filter_map(|(x, s)| {
                    let big_r = (x - x0).norm();
                    (big_r > 0.0 && big_r < r_max).then(|| (s - xi.sigma_x0).abs() / big_r.powf(gamma))
                })
                .fold(0.0, f64::max);
            Ok(XiHolderReport {
                x0,
                plus,
                minus,
                gamma,
                holder_constant,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::build_general_law;
    use crate::mesh::make_mesh;

    fn cfg() -> ShearConfig {
        ShearConfig::new(1.0, build_general_law(1.0, 0.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn quadratic_expansion_matches_frobenius() {
        for g in [Vec2::new(0.3, -0.2), Vec2::new(-1.5, 2.0), Vec2::new(1e-3, 7.0)] {
            let f = shear_jacobian(g);
            let lhs = f.norm_squared();
            let rhs = 2.0 + 2.0 * g.y + g.norm_squared();
            assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs);
            assert!((f.determinant() - (1.0 + g.y)).abs() <= 1e-14 * (1.0 + g.y.abs()));
        }
    }

    #[test]
    fn zero_field_energy() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let c = cfg();
        let e = shear_energy(&m, &vec![0.0; m.num_vertices()], &c).finite().unwrap();
        let h1 = c.law.eval(1.0).finite().unwrap();
        assert!((e - (2.0 + h1) * 4.0).abs() < 1e-12);
    }

    #[test]
    fn half_slope_energy() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let c = cfg();
        let sigma: Vec<f64> = m.vertices.iter().map(|x| x.y / 2.0).collect();
        let e = shear_energy(&m, &sigma, &c).finite().unwrap();
        let h = c.law.eval(1.5).finite().unwrap();
        assert!((e - (3.25 + h) * 4.0).abs() < 1e-12);
        let folded: Vec<f64> = m.vertices.iter().map(|x| -x.y).collect();
        assert_eq!(shear_energy(&m, &folded, &c), Extended::Infinite);
    }

    #[test]
    fn profiles() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let s = boundary_from_profiles(&m, |_| 1.0, |_| 0.0).unwrap();
        assert!(shear_dets(&m, &s).iter().all(|d| (d - 1.5).abs() < 1e-14));
        let s = boundary_from_profiles(&m, |x| x.abs(), |x| -x.abs()).unwrap();
        assert!(shear_dets(&m, &s).iter().all(|&d| d >= 1.0 - 1e-14));
        assert!(matches!(
            boundary_from_profiles(&m, |_| 0.0, |x| x),
            Err(Error::ProfileOrderViolated { .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = make_mesh(Domain::Square, 6).unwrap();
        let mut c = cfg();
        c.m_bound = 0.1;
        let sigma: Vec<f64> = m.vertices.iter().map(|x| 0.3 * (2.0 * x.x).sin() + 0.2 * x.y * x.x).collect();
        let p = ShearProblem { mesh: &m, cfg: &c };
        let g = p.gradient(&sigma).unwrap();
        let v = m.vertex_at(3, 2);
        let t = 1e-6;
        let mut a = sigma.clone();
        let mut b = sigma.clone();
        a[v] += t;
        b[v] -= t;
        let fd = (p.energy(&a).finite().unwrap() - p.energy(&b).finite().unwrap()) / (2.0 * t);
        assert!((fd - g[v]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", g[v]);
    }

    #[test]
    fn xi_vanish_for_small_slopes() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let zero = vec![0.0; m.num_vertices()];
        let xi = xi_fields(&m, &zero, Vec2::zeros(), 0.0).unwrap();
        assert!(xi.xi_plus.iter().chain(&xi.xi_minus).all(|&v| v == 0.0));
        let lin: Vec<f64> = m.vertices.iter().map(|x| x.y).collect();
        let xi = xi_fields(&m, &lin, Vec2::zeros(), 0.0).unwrap();
        assert!(xi.xi_plus.iter().chain(&xi.xi_minus).all(|&v| v == 0.0));
    }

    #[test]
    fn steep_field_localizes_above() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let s: Vec<f64> = m.vertices.iter().map(|x| 3.0 * x.y).collect();
        let xi = xi_fields(&m, &s, Vec2::zeros(), 0.0).unwrap();
        for (x, &p) in m.vertices.iter().zip(&xi.xi_plus) {
            assert_eq!(p > 0.0, 3.0 * x.y > x.norm());
        }
        assert_eq!(xi.support_violations(), 0);
    }

    #[test]
    fn vertical_translation_invariance() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        let c = cfg();
        let s: Vec<f64> = m.vertices.iter().map(|x| 0.4 * x.y + 0.1 * (3.0 * x.x).sin()).collect();
        let t: Vec<f64> = s.iter().map(|v| v + 0.75).collect();
        assert_eq!(shear_energy(&m, &s, &c), shear_energy(&m, &t, &c));
        let a = xi_fields(&m, &s, Vec2::zeros(), 0.3).unwrap();
        let b = xi_fields(&m, &t, Vec2::zeros(), 0.3).unwrap();
        assert_eq!(a.chi_plus, b.chi_plus);
        assert_eq!(a.chi_minus, b.chi_minus);
    }
}
