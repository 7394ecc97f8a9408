//! Projected gradient descent with Barzilai-Borwein steps, monotone Armijo
//! backtracking and a positivity guard on every element determinant.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{energy, energy_difference, energy_gradient, EnergyConfig};
use crate::error::{Error, Result};
use crate::ext::{compensated_sum, Extended};
use crate::field::{element_dets, scalar_gradient, DeformationField};
use crate::mesh::Mesh;
use crate::{fmt_sci, Mat2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub max_iters: usize,
    /// Threshold on the max-norm of the projected gradient.
    pub grad_tol: f64,
    pub armijo: f64,
    /// Backtracking factor for the Armijo test.
    pub shrink: f64,
    pub initial_step: f64,
    /// Contraction factor applied while a trial step loses positivity.
    pub kappa: f64,
    /// Steps below this raise `LineSearchStalled`.
    pub min_step: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            max_iters: 20_000,
            grad_tol: 1e-10,
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            kappa: 0.5,
            min_step: 1e-20,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grad_tol > 0.0
            && self.kappa > 0.0
            && self.kappa < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.initial_step > 0.0
            && self.min_step > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("invalid solver settings {self:?}")))
        }
    }
}

/// Smooth objective on a flat coordinate vector whose fixed coordinates
/// carry a zero gradient.
pub trait Problem: Sync {
    fn energy(&self, x: &[f64]) -> Extended;
    /// Gradient with fixed coordinates zeroed; errors on infeasible `x`.
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    /// Smallest element determinant; `x` is feasible iff this is positive.
    fn min_det(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub min_det: f64,
}

pub const TRACE_HEADER: &str = "iter,energy,grad_norm,step,min_det";

impl TraceRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iter,
            fmt_sci(self.energy),
            fmt_sci(self.grad_norm),
            fmt_sci(self.step),
            fmt_sci(self.min_det)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `false` when the iteration cap was hit.
    pub converged: bool,
    /// Row 0 is the starting point.
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub step: f64,
    pub energy: f64,
    /// Number of contractions forced by the positivity guard.
    pub guard_contractions: usize,
    pub armijo_contractions: usize,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Trial steps start at `t0`. The guard contracts by `kappa` until every
/// determinant is positive, then Armijo backtracking contracts by `shrink`.
pub fn line_search<P: Problem + ?Sized>(
    problem: &P,
    x: &[f64],
    e0: f64,
    grad: &[f64],
    dir: &[f64],
    t0: f64,
    settings: &SolveSettings,
) -> Result<LineSearchResult> {
    let slope = dot(grad, dir);
    if max_norm(dir) == 0.0 {
        return Ok(LineSearchResult {
            step: 0.0,
            energy: e0,
            guard_contractions: 0,
            armijo_contractions: 0,
        });
    }
    let mut t = t0;
    let mut guard_contractions = 0;
    let mut armijo_contractions = 0;
    loop {
        if t < settings.min_step {
            return Err(Error::LineSearchStalled { iter: 0, step: t });
        }
        let trial = axpy(x, t, dir);
        if problem.min_det(&trial) <= 0.0 {
            t *= settings.kappa;
            guard_contractions += 1;
            continue;
        }
        match problem.energy(&trial) {
            Extended::Finite(e) if e <= e0 + settings.armijo * t * slope => {
                return Ok(LineSearchResult {
                    step: t,
                    energy: e,
                    guard_contractions,
                    armijo_contractions,
                });
            }
            Extended::Finite(_) => {
                t *= settings.shrink;
                armijo_contractions += 1;
            }
            Extended::Infinite => {
                t *= settings.kappa;
                guard_contractions += 1;
            }
        }
    }
}

/// Steepest descent from a feasible `x0`.
pub fn descend<P: Problem + ?Sized>(problem: &P, x0: Vec<f64>, settings: &SolveSettings) -> Result<SolveOutcome> {
    settings.validate()?;
    let mut x = x0;
    let mut e = match problem.energy(&x) {
        Extended::Finite(e) => e,
        Extended::Infinite => {
            return Err(Error::InfeasibleStart {
                element: 0,
                det: problem.min_det(&x),
            })
        }
    };
    let mut g = problem.gradient(&x)?;
    let mut gn = max_norm(&g);
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: e,
        grad_norm: gn,
        step: 0.0,
        min_det: problem.min_det(&x),
    }];
    let mut step = settings.initial_step;
    let mut iterations = 0;
    while gn > settings.grad_tol && iterations < settings.max_iters {
        iterations += 1;
        let dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let ls = line_search(problem, &x, e, &g, &dir, step, settings).map_err(|err| match err {
            Error::LineSearchStalled { step, .. } => Error::LineSearchStalled { iter: iterations, step },
            other => other,
        })?;
        let x_new = axpy(&x, ls.step, &dir);
        let g_new = problem.gradient(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { (dot(&s, &s) / sy).min(1e8) } else { ls.step * 2.0 };
        x = x_new;
        g = g_new;
        e = ls.energy;
        gn = max_norm(&g);
        trace.push(TraceRow {
            iter: iterations,
            energy: e,
            grad_norm: gn,
            step: ls.step,
            min_det: problem.min_det(&x),
        });
        if ls.step == 0.0 {
            break;
        }
    }
    Ok(SolveOutcome {
        x,
        energy: e,
        grad_norm: gn,
        iterations,
        converged: gn <= settings.grad_tol,
        trace,
    })
}

/// Dirichlet data `u0`, given as a map on the whole domain.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData {
    Identity,
    /// `x -> A x + b`.
    Affine { a: Mat2, b: Vec2 },
    /// `x -> x (a0 + a1 |x|)`.
    Radial { a0: f64, a1: f64 },
    /// Nodal values, one per vertex.
    Table(Vec<Vec2>),
}

impl BoundaryData {
    /// Radial squeeze `x (0.5 + 0.5 |x|)`; the identity on the unit circle.
    pub const RADIAL_SQUEEZE: BoundaryData = BoundaryData::Radial { a0: 0.5, a1: 0.5 };

    pub fn nodal(&self, mesh: &Mesh) -> Result<Vec<Vec2>> {
        match self {
            BoundaryData::Identity => Ok(mesh.vertices.clone()),
            BoundaryData::Affine { a, b } => Ok(mesh.vertices.iter().map(|x| a * x + b).collect()),
            BoundaryData::Radial { a0, a1 } => Ok(mesh.vertices.iter().map(|x| x * (a0 + a1 * x.norm())).collect()),
            BoundaryData::Table(t) if t.len() == mesh.num_vertices() => Ok(t.clone()),
            BoundaryData::Table(t) => Err(Error::InvalidParams(format!(
                "boundary table has {} entries for {} vertices",
                t.len(),
                mesh.num_vertices()
            ))),
        }
    }

    /// Overwrite the Dirichlet nodes of `u`.
    pub fn impose(&self, mesh: &Mesh, u: &mut DeformationField) -> Result<()> {
        let values = self.nodal(mesh)?;
        for ((slot, value), &fixed) in u.nodal.iter_mut().zip(values).zip(&mesh.dirichlet) {
            if fixed {
                *slot = value;
            }
        }
        Ok(())
    }
}

/// Starting field for [`minimize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    /// Discrete harmonic extension, repaired toward the identity if needed.
    #[default]
    Harmonic,
    /// The boundary map evaluated at every node.
    BoundaryMap,
}

/// Matrix-free P1 Laplacian applied to a scalar nodal field.
fn stiffness_apply(mesh: &Mesh, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let g = scalar_gradient(mesh, v, e) * mesh.areas[e];
        for k in 0..3 {
            out[tri[k]] += g.dot(&mesh.shape_grads[e][k]);
        }
    }
    out
}

/// Interior values of the discrete harmonic extension of one component.
fn harmonic_component(mesh: &Mesh, boundary: &[f64]) -> Vec<f64> {
    let free: Vec<bool> = mesh.dirichlet.iter().map(|d| !d).collect();
    let mut x: Vec<f64> = boundary.iter().zip(&free).map(|(b, &f)| if f { 0.0 } else { *b }).collect();
    let mask = |v: &mut Vec<f64>| {
        for (a, &f) in v.iter_mut().zip(&free) {
            if !f {
                *a = 0.0;
            }
        }
    };
    let mut r: Vec<f64> = stiffness_apply(mesh, &x).iter().map(|a| -a).collect();
    mask(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-28 * (1.0 + rr);
    for _ in 0..10 * mesh.num_vertices() {
        if rr <= tol {
            break;
        }
        let mut ap = stiffness_apply(mesh, &p);
        mask(&mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

pub fn harmonic_extension(mesh: &Mesh, boundary: &BoundaryData) -> Result<DeformationField> {
    let values = boundary.nodal(mesh)?;
    let bx: Vec<f64> = values.iter().map(|v| v.x).collect();
    let by: Vec<f64> = values.iter().map(|v| v.y).collect();
    let (ux, uy) = rayon::join(|| harmonic_component(mesh, &bx), || harmonic_component(mesh, &by));
    Ok(DeformationField {
        nodal: ux.into_iter().zip(uy).map(|(a, b)| Vec2::new(a, b)).collect(),
    })
}

fn first_nonpositive(mesh: &Mesh, u: &DeformationField) -> Option<(usize, f64)> {
    element_dets(mesh, &u.nodal)
        .into_iter()
        .enumerate()
        .find(|(_, d)| !(*d > 0.0))
}

/// Initial field: harmonic extension (or the boundary map), with interior
/// nodes blended toward the identity until every determinant is positive.
pub fn initial_field(mesh: &Mesh, boundary: &BoundaryData, kind: InitKind) -> Result<DeformationField> {
    let base = match kind {
        InitKind::Harmonic => harmonic_extension(mesh, boundary)?,
        InitKind::BoundaryMap => DeformationField { nodal: boundary.nodal(mesh)? },
    };
    let mut worst = match first_nonpositive(mesh, &base) {
        None => return Ok(base),
        Some(w) => w,
    };
    for k in 1..=8 {
        let s = k as f64 / 8.0;
        let mut u = base.clone();
        for v in 0..mesh.num_vertices() {
            if !mesh.dirichlet[v] {
                u.nodal[v] = base.nodal[v] * (1.0 - s) + mesh.vertices[v] * s;
            }
        }
        match first_nonpositive(mesh, &u) {
            None => return Ok(u),
            Some(w) => worst = w,
        }
    }
    Err(Error::InfeasibleStart {
        element: worst.0,
        det: worst.1,
    })
}

/// The elastic energy over the free nodes of a mesh.
pub struct ElasticProblem<'a> {
    pub mesh: &'a Mesh,
    pub cfg: &'a EnergyConfig,
}

impl Problem for ElasticProblem<'_> {
    fn energy(&self, x: &[f64]) -> Extended {
        energy(self.mesh, &DeformationField::from_flat(x), self.cfg)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = energy_gradient(self.mesh, &DeformationField::from_flat(x), self.cfg)?;
        Ok(DeformationField { nodal: g }.as_flat())
    }

    fn min_det(&self, x: &[f64]) -> f64 {
        let u = DeformationField::from_flat(x);
        element_dets(self.mesh, &u.nodal).into_iter().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimizer {
    pub field: DeformationField,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl Minimizer {
    pub fn min_det(&self, mesh: &Mesh) -> f64 {
        element_dets(mesh, &self.field.nodal).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Whether energies along the trace never increase.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].energy <= w[0].energy)
    }

    pub fn all_feasible(&self) -> bool {
        self.trace.iter().all(|r| r.min_det > 0.0)
    }
}

/// Minimize the elastic energy from `u_init` with the Dirichlet nodes reset
/// to `boundary`.
pub fn minimize(
    mesh: &Mesh,
    u_init: &DeformationField,
    boundary: &BoundaryData,
    cfg: &EnergyConfig,
    settings: &SolveSettings,
) -> Result<Minimizer> {
    let mut u = u_init.clone();
    boundary.impose(mesh, &mut u)?;
    if let Some((element, det)) = first_nonpositive(mesh, &u) {
        return Err(Error::InfeasibleStart { element, det });
    }
    let problem = ElasticProblem { mesh, cfg };
    let out = descend(&problem, u.as_flat(), settings)?;
    Ok(Minimizer {
        field: DeformationField::from_flat(&out.x),
        energy: out.energy,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        trace: out.trace,
    })
}

/// Sampled strong-local-minimality witness: the worst value of
/// `(E(v) - E(u)) / |E(u)|` over random feasible perturbations with
/// `|v - u|_inf <= gamma` and matching Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimalityWitness {
    pub samples: usize,
    pub feasible_samples: usize,
    pub worst_relative_change: f64,
}

impl MinimalityWitness {
    pub fn holds(&self, tol: f64) -> bool {
        self.worst_relative_change >= -tol
    }
}

pub fn minimality_witness(
    mesh: &Mesh,
    u: &DeformationField,
    cfg: &EnergyConfig,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<MinimalityWitness> {
    let e0 = energy(mesh, u, cfg)
        .finite()
        .ok_or_else(|| Error::InvalidParams("witness needs a field of finite energy".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut feasible = 0;
    for _ in 0..samples {
        let mut v = u.clone();
        for (k, p) in v.nodal.iter_mut().enumerate() {
            if !mesh.dirichlet[k] {
                *p += Vec2::new(rng.random_range(-gamma..=gamma), rng.random_range(-gamma..=gamma));
            }
        }
        if let Extended::Finite(d) = energy_difference(mesh, u, &v, cfg) {
            feasible += 1;
            worst = worst.min(d / e0.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(MinimalityWitness {
        samples,
        feasible_samples: feasible,
        worst_relative_change: worst,
    })
}
