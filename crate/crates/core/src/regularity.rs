//! Dirichlet-growth profiles and exponent fits, hole-filling ratios, the
//! dyadic growth-lemma oracle, and the annulus Poincare check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ext::compensated_sum;
use crate::field::{element_gradient, interpolate, scalar_gradient, DeformationField};
use crate::mesh::Mesh;
use crate::{fmt_sci, Vec2};

/// `phi(x0, r_k)` on the radius ladder `r_k = r_max 2^(-k - shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayProfile {
    pub x0: Vec2,
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    /// Least-squares slope of `log phi` against `log r`; `+inf` when `phi`
    /// vanishes at the smallest radius.
    pub alpha: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

impl DecayProfile {
    pub fn is_vanishing(&self) -> bool {
        self.alpha == f64::INFINITY
    }

    pub fn is_monotone(&self) -> bool {
        // radii are decreasing
        self.phi.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.radii
            .iter()
            .zip(&self.phi)
            .map(|(r, p)| format!("{},{}", fmt_sci(*r), fmt_sci(*p)))
            .collect()
    }
}

/// Smallest admissible radius, in units of `h_max`.
pub const RADIUS_FLOOR: f64 = 4.0;

fn ball_integral(mesh: &Mesh, density: &[f64], x0: Vec2, r: f64) -> f64 {
    compensated_sum(
        (0..mesh.num_triangles())
            .filter(|&e| (mesh.centroids[e] - x0).norm() < r)
            .map(|e| mesh.areas[e] * density[e]),
    )
}

/// Least-squares slope and rms residual of `y` against `x`.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

/// Decay profile of an element-wise energy density.
pub fn density_growth(mesh: &Mesh, density: &[f64], x0: Vec2, r_max: f64, shift: f64) -> Result<DecayProfile> {
    if mesh.domain.dist_to_boundary(x0) < r_max {
        return Err(Error::InvalidParams(format!("ball of radius {r_max} leaves the domain")));
    }
    let floor = RADIUS_FLOOR * mesh.h_max;
    let radii: Vec<f64> = (0..)
        .map(|k| r_max * 2f64.powf(-(k as f64) - shift))
        .take_while(|&r| r >= floor)
        .collect();
    if radii.len() < 3 {
        return Err(Error::TooFewRadii { available: radii.len() });
    }
    let phi: Vec<f64> = radii.par_iter().map(|&r| ball_integral(mesh, density, x0, r)).collect();
    let (alpha, residual) = if *phi.last().unwrap() <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = phi.iter().map(|p| p.ln()).collect();
        log_log_fit(&lx, &ly)
    };
    Ok(DecayProfile {
        x0,
        radii,
        phi,
        alpha,
        residual,
    })
}

/// `|grad u|^2` per element.
pub fn dirichlet_density(mesh: &Mesh, u: &DeformationField) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|e| element_gradient(mesh, &u.nodal, e).norm_squared())
        .collect()
}

/// `|grad v|^2` per element for a scalar nodal field.
pub fn scalar_dirichlet_density(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    (0..mesh.num_triangles())
        .map(|e| scalar_gradient(mesh, v, e).norm_squared())
        .collect()
}

pub fn dirichlet_growth(mesh: &Mesh, u: &DeformationField, x0: Vec2, r_max: f64) -> Result<DecayProfile> {
    density_growth(mesh, &dirichlet_density(mesh, u), x0, r_max, 0.0)
}

/// Hole-filling data on `B(x0, r)` and the annulus `B(x0, 2r) \ B(x0, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaccioppoliReport {
    pub x0: Vec2,
    pub r: f64,
    pub d_in: f64,
    pub d_ann: f64,
    /// Smallest `C'` with `D_in <= C' r^2 + C' D_ann`.
    pub c_prime: f64,
}

pub fn caccioppoli_ratio(mesh: &Mesh, u: &DeformationField, x0: Vec2, r: f64) -> Result<CaccioppoliReport> {
    if !(r > 0.0) || mesh.domain.dist_to_boundary(x0) < 2.0 * r {
        return Err(Error::InvalidParams(format!("B(x0, 2r) with r = {r} leaves the domain")));
    }
    let density = dirichlet_density(mesh, u);
    let d_in = ball_integral(mesh, &density, x0, r);
    let d_ann = ball_integral(mesh, &density, x0, 2.0 * r) - d_in;
    Ok(CaccioppoliReport {
        x0,
        r,
        d_in,
        d_ann,
        c_prime: d_in / (r * r + d_ann),
    })
}

/// Synthetic `phi` on the dyadic grid `r_k = r1 2^-k`, `k = 0..=levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthLemmaCase {
    pub c: f64,
    pub mu: f64,
    pub p: f64,
    pub r1: f64,
    pub phi: Vec<f64>,
}

impl GrowthLemmaCase {
    pub fn radius(&self, k: usize) -> f64 {
        self.r1 * 2f64.powi(-(k as i32))
    }

    /// `phi(r) = c r^p + mu phi(2r)` from `phi(r1) = phi_r1`.
    pub fn recursion(mu: f64, p: f64, c: f64, r1: f64, phi_r1: f64, levels: usize) -> Self {
        let mut phi = vec![phi_r1];
        for k in 1..=levels {
            let r = r1 * 2f64.powi(-(k as i32));
            phi.push(c * r.powf(p) + mu * phi[k - 1]);
        }
        GrowthLemmaCase { c, mu, p, r1, phi }
    }

    /// `phi(r) = r^p` with the smallest admissible `c = max(0, 1 - mu 2^p)`.
    pub fn power(mu: f64, p: f64, r1: f64, levels: usize) -> Self {
        let phi = (0..=levels).map(|k| (r1 * 2f64.powi(-(k as i32))).powf(p)).collect();
        GrowthLemmaCase {
            c: (1.0 - mu * 2f64.powf(p)).max(0.0),
            mu,
            p,
            r1,
            phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthLemmaReport {
    /// `log2(1 / mu)`.
    pub alpha_prime: f64,
    pub c_tilde: f64,
    /// `bound(r_k) - phi(r_k)` for `k >= 1`.
    pub slack: Vec<f64>,
    /// Decay exponent fitted on the second half of the levels.
    pub decay_exponent: f64,
}

impl GrowthLemmaReport {
    pub fn min_slack(&self) -> f64 {
        self.slack.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `min{p/2, alpha'/2}`.
    pub fn guaranteed_exponent(&self, p: f64) -> f64 {
        (p / 2.0).min(self.alpha_prime / 2.0)
    }
}

/// Checks the hypotheses on the grid and the explicit bound
/// `phi(r) <= c~ max{r^(p/2), r^(a'/2)} + 2^a' (r/r1)^a' phi(r1)` with
/// `c~ = c [(2 r1)^(p/2) + (r1/2)^p r1^(-a'/2)] / (1 - mu)`.
pub fn growth_lemma_check(case: &GrowthLemmaCase) -> Result<GrowthLemmaReport> {
    let GrowthLemmaCase { c, mu, p, r1, ref phi } = *case;
    if !(mu > 0.0 && mu < 1.0 && p >= 1.0 && r1 > 0.0 && c >= 0.0 && phi.len() >= 4) {
        return Err(Error::InvalidParams(format!(
            "growth lemma needs 0 < mu < 1, p >= 1, r1 > 0, c >= 0 and 4 levels (mu={mu}, p={p}, r1={r1}, c={c})"
        )));
    }
    for k in 1..phi.len() {
        let r = case.radius(k);
        let excess = phi[k] - (c * r.powf(p) + mu * phi[k - 1]);
        if excess > 1e-12 * phi[k - 1].abs() || phi[k] > phi[k - 1] || !(phi[k] > 0.0) {
            return Err(Error::HypothesisViolated { r, slack: -excess });
        }
    }
    let alpha_prime = (1.0 / mu).log2();
    let c_tilde = c * ((2.0 * r1).powf(p / 2.0) + (r1 / 2.0).powf(p) * r1.powf(-alpha_prime / 2.0)) / (1.0 - mu);
    let slack = (1..phi.len())
        .map(|k| {
            let r = case.radius(k);
            let bound = c_tilde * r.powf(p / 2.0).max(r.powf(alpha_prime / 2.0))
                + 2f64.powf(alpha_prime) * (r / r1).powf(alpha_prime) * phi[0];
            bound - phi[k]
        })
        .collect();
    let tail: Vec<usize> = (phi.len() / 2..phi.len()).collect();
    let lx: Vec<f64> = tail.iter().map(|&k| case.radius(k).ln()).collect();
    let ly: Vec<f64> = tail.iter().map(|&k| phi[k].ln()).collect();
    Ok(GrowthLemmaReport {
        alpha_prime,
        c_tilde,
        slack,
        decay_exponent: log_log_fit(&lx, &ly).0,
    })
}

/// Annulus Poincare comparison around `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareReport {
    pub x0: Vec2,
    pub r: f64,
    /// `int_A |u - u(x0)|^2` over `A = B(x0, 2r) \ B(x0, r)`.
    pub lhs: f64,
    /// `(7 r^2 / 3) int_A |grad u|^2`.
    pub rhs: f64,
    /// `(7 r^3 / 3) int_{B(x0, 2r)} |grad u|^2 / |w - x0|`, which also
    /// accounts for the gradient inside `B(x0, r)`.
    pub rhs_weighted_ball: f64,
}

impl PoincareReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs * (1.0 + slack)
    }

    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

/// Exact integral of `|w|^2` for the linear `w` with vertex values `v`:
/// `area/3` times the sum over edge midpoints.
fn quadratic_integral(area: f64, v: [Vec2; 3]) -> f64 {
    let m = [(v[0] + v[1]) / 2.0, (v[1] + v[2]) / 2.0, (v[2] + v[0]) / 2.0];
    area / 3.0 * m.iter().map(|w| w.norm_squared()).sum::<f64>()
}

pub fn poincare_annulus_check(mesh: &Mesh, u: &DeformationField, x0: Vec2, r: f64) -> Result<PoincareReport> {
    if !(r > 0.0) || mesh.domain.dist_to_boundary(x0) < 2.0 * r {
        return Err(Error::InvalidParams(format!("B(x0, 2r) with r = {r} leaves the domain")));
    }
    let a = interpolate(mesh, u, x0)?;
    let mut lhs = Vec::new();
    let mut grad = Vec::new();
    let mut weighted = Vec::new();
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let d = (mesh.centroids[e] - x0).norm();
        if d >= 2.0 * r {
            continue;
        }
        let g2 = element_gradient(mesh, &u.nodal, e).norm_squared() * mesh.areas[e];
        weighted.push(g2 / d);
        if d >= r {
            lhs.push(quadratic_integral(mesh.areas[e], tri.map(|v| u.nodal[v] - a)));
            grad.push(g2);
        }
    }
    Ok(PoincareReport {
        x0,
        r,
        lhs: compensated_sum(lhs),
        rhs: 7.0 * r * r / 3.0 * compensated_sum(grad),
        rhs_weighted_ball: 7.0 * r.powi(3) / 3.0 * compensated_sum(weighted),
    })
}

/// Random smooth P1 field: i.i.d. standard normal nodal values, followed
/// by `passes` Jacobi sweeps averaging each node with its grid neighbours.
pub fn random_smooth_field(mesh: &Mesh, seed: u64, passes: usize) -> DeformationField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Vec2> = (0..mesh.num_vertices())
        .map(|_| Vec2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    let n = mesh.n;
    for _ in 0..passes {
        let prev = v.clone();
        for j in 0..=n {
            for i in 0..=n {
                let mut sum = prev[mesh.vertex_at(i, j)];
                let mut count = 1.0;
                for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if (0..=n as i64).contains(&ii) && (0..=n as i64).contains(&jj) {
                        sum += prev[mesh.vertex_at(ii as usize, jj as usize)];
                        count += 1.0;
                    }
                }
                v[mesh.vertex_at(i, j)] = sum / count;
            }
        }
    }
    DeformationField { nodal: v }
}

/// Pinned parameters of the random Poincare corpus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub n: usize,
    pub fields: usize,
    pub passes: usize,
    pub r: f64,
    pub slack: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n: 64,
            fields: 50,
            passes: 32,
            r: 0.25,
            slack: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub spec: CorpusSpec,
    pub reports: Vec<PoincareReport>,
}

impl CorpusReport {
    pub fn violations(&self) -> usize {
        self.reports.iter().filter(|r| !r.holds(self.spec.slack)).count()
    }

    /// Violations of the ball-weighted form.
    pub fn weighted_violations(&self) -> usize {
        self.reports
            .iter()
            .filter(|r| r.lhs > r.rhs_weighted_ball * (1.0 + self.spec.slack))
            .count()
    }

    pub fn max_ratio(&self) -> f64 {
        self.reports.iter().map(|r| r.ratio()).fold(0.0, f64::max)
    }
}

/// Field `k` uses seed `seed + k`; the centre is the origin of the square.
pub fn poincare_corpus(spec: CorpusSpec, seed: u64) -> Result<CorpusReport> {
    let mesh = crate::mesh::make_mesh(crate::mesh::Domain::Square, spec.n)?;
    let reports = (0..spec.fields as u64)
        .into_par_iter()
        .map(|k| {
            let u = random_smooth_field(&mesh, seed.wrapping_add(k), spec.passes);
            poincare_annulus_check(&mesh, &u, Vec2::zeros(), spec.r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusReport { spec, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_mesh, Domain};
    use std::f64::consts::PI;

    #[test]
    fn identity_growth_is_quadratic() {
        let m = make_mesh(Domain::Square, 64).unwrap();
        let u = DeformationField::identity(&m);
        let p = dirichlet_growth(&m, &u, Vec2::zeros(), 0.8).unwrap();
        assert!(p.is_monotone());
        assert!((p.alpha - 2.0).abs() < 0.1, "alpha {}", p.alpha);
    }

    #[test]
    fn too_few_radii() {
        let m = make_mesh(Domain::Square, 8).unwrap();
        let u = DeformationField::identity(&m);
        assert!(matches!(
            dirichlet_growth(&m, &u, Vec2::zeros(), 0.9),
            Err(Error::TooFewRadii { .. })
        ));
    }

    #[test]
    fn constant_field_vanishes() {
        let m = make_mesh(Domain::Square, 64).unwrap();
        let u = DeformationField::from_fn(&m, |_| Vec2::new(1.0, 2.0));
        assert!(dirichlet_growth(&m, &u, Vec2::zeros(), 0.8).unwrap().is_vanishing());
        let p = poincare_annulus_check(&m, &u, Vec2::zeros(), 0.3).unwrap();
        assert_eq!((p.lhs, p.rhs), (0.0, 0.0));
        assert!(p.holds(0.0));
    }

    #[test]
    fn identity_caccioppoli_area_ratio() {
        let m = make_mesh(Domain::Square, 128).unwrap();
        let u = DeformationField::identity(&m);
        let c = caccioppoli_ratio(&m, &u, Vec2::zeros(), 0.2).unwrap();
        assert!((c.d_in / c.d_ann - 1.0 / 3.0).abs() < 0.05 / 3.0);
        assert_eq!(c.c_prime, c.d_in / (0.04 + c.d_ann));
    }

    #[test]
    fn identity_poincare_closed_form() {
        let m = make_mesh(Domain::Square, 128).unwrap();
        let u = DeformationField::identity(&m);
        let r = 0.3f64;
        let p = poincare_annulus_check(&m, &u, Vec2::zeros(), r).unwrap();
        assert!((p.lhs / (7.5 * PI * r.powi(4)) - 1.0).abs() < 0.05);
        assert!((p.rhs / (14.0 * PI * r.powi(4)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn growth_lemma_alpha_prime() {
        let case = GrowthLemmaCase::recursion(0.5, 1.0, 0.5, 1.0, 1.0, 40);
        let rep = growth_lemma_check(&case).unwrap();
        assert_eq!(rep.alpha_prime, 1.0);
        assert!(rep.min_slack() >= 0.0);
    }

    #[test]
    fn growth_lemma_rejects_violations() {
        let mut case = GrowthLemmaCase::power(0.2, 1.0, 1.0, 10);
        case.c = 0.0;
        assert!(matches!(growth_lemma_check(&case), Err(Error::HypothesisViolated { .. })));
    }

    #[test]
    fn smoothing_is_deterministic() {
        let m = make_mesh(Domain::Square, 16).unwrap();
        assert_eq!(random_smooth_field(&m, 3, 4), random_smooth_field(&m, 3, 4));
        assert_ne!(random_smooth_field(&m, 3, 4), random_smooth_field(&m, 4, 4));
    }
}
