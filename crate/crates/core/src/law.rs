//! Singular stored-energy laws `h(det F)`.
//!
//! Two families are provided. [`PaperLaw`] has a logarithmic singularity at
//! `s -> 0+`, a convex connector on `[c1, c2]` and linear growth beyond `c2`.
//! [`GeneralLaw`] is the closed-form family `a(s-1)^2 + b(1/s + s - 2)` used
//! by the shear submodel, which tolerates quadratic growth at infinity.

use crate::error::{Error, Result};
use crate::ext::Extended;

/// Parameters of the logarithmic law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperLawParams {
    pub c1: f64,
    pub c2: f64,
    pub l: f64,
    pub m: f64,
    pub theta1: f64,
}

impl PaperLawParams {
    /// Shipped preset. The connector densities are strictly positive for it.
    pub const PRESET: PaperLawParams = PaperLawParams {
        c1: 0.5,
        c2: 2.0,
        l: 1.0,
        m: -1.3,
        theta1: 0.2,
    };
}

/// Logarithmic law with affine connector densities `psi1`, `psi2`.
///
/// On `[c1, 1]` the connector is
/// `theta(s) = 1 - ln c1 - s/c1 + int_{c1}^s (s - s') psi1(s') ds'` and on
/// `[1, c2]` it is `theta(s) = theta1 + int_1^s (s - s') psi2(s') ds'`. Both
/// integrals are evaluated as closed-form cubics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperLaw {
    pub c1: f64,
    pub c2: f64,
    pub l: f64,
    pub m: f64,
    pub theta1: f64,
    /// `psi1(s) = psi1[0] + psi1[1] * s` on `[c1, 1]`.
    pub psi1: [f64; 2],
    /// `psi2(s) = psi2[0] + psi2[1] * s` on `[1, c2]`.
    pub psi2: [f64; 2],
}

/// Solve `int_lo^hi (a + b s) ds = m0`, `int_lo^hi s (a + b s) ds = m1`.
fn solve_affine_moments(lo: f64, hi: f64, m0: f64, m1: f64) -> [f64; 2] {
    let k0 = hi - lo;
    let k1 = (hi * hi - lo * lo) / 2.0;
    let k2 = (hi.powi(3) - lo.powi(3)) / 3.0;
    // [k0 k1; k1 k2] [a; b] = [m0; m1]
    let det = k0 * k2 - k1 * k1;
    let a = (m0 * k2 - k1 * m1) / det;
    let b = (k0 * m1 - k1 * m0) / det;
    [a, b]
}

fn affine_positive(coeffs: [f64; 2], lo: f64, hi: f64) -> bool {
    let at_lo = coeffs[0] + coeffs[1] * lo;
    let at_hi = coeffs[0] + coeffs[1] * hi;
    at_lo >= 0.0 && at_hi >= 0.0 && at_lo + at_hi > 0.0
}

/// `int_lo^s (s - s') (a + b s') ds'`.
fn double_integral(coeffs: [f64; 2], lo: f64, s: f64) -> f64 {
    let [a, b] = coeffs;
    a * (s - lo).powi(2) / 2.0 + b * (s * (s * s - lo * lo) / 2.0 - (s.powi(3) - lo.powi(3)) / 3.0)
}

/// `int_lo^s (a + b s') ds'`.
fn single_integral(coeffs: [f64; 2], lo: f64, s: f64) -> f64 {
    let [a, b] = coeffs;
    a * (s - lo) + b * (s * s - lo * lo) / 2.0
}

/// Build the logarithmic law, solving the two moment systems for affine
/// connector densities.
pub fn build_paper_law(c1: f64, c2: f64, l: f64, m: f64, theta1: f64) -> Result<PaperLaw> {
    let all_finite = [c1, c2, l, m, theta1].iter().all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::InvalidParams("law parameters must be finite".into()));
    }
    if !(0.0 < c1 && c1 < 1.0 && 1.0 < c2) {
        return Err(Error::InvalidParams(format!(
            "need 0 < c1 < 1 < c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    if l <= 0.0 {
        return Err(Error::InvalidParams(format!("need l > 0, got {l}")));
    }
    if l * c2 + m <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "need l*c2 + m > 0, got {}",
            l * c2 + m
        )));
    }
    if theta1 <= m + l {
        return Err(Error::InvalidParams(format!(
            "need theta1 > m + l, got theta1 = {theta1}, m + l = {}",
            m + l
        )));
    }

    let psi1 = solve_affine_moments(c1, 1.0, 1.0 / c1, 1.0 - theta1 - c1.ln());
    let psi2 = solve_affine_moments(1.0, c2, l, theta1 - m);
    if !affine_positive(psi1, c1, 1.0) {
        return Err(Error::InfeasibleLaw(format!(
            "psi1 = {} + {} s is not positive on [{c1}, 1]",
            psi1[0], psi1[1]
        )));
    }
    if !affine_positive(psi2, 1.0, c2) {
        return Err(Error::InfeasibleLaw(format!(
            "psi2 = {} + {} s is not positive on [1, {c2}]",
            psi2[0], psi2[1]
        )));
    }
    Ok(PaperLaw {
        c1,
        c2,
        l,
        m,
        theta1,
        psi1,
        psi2,
    })
}

impl PaperLaw {
    pub fn preset() -> PaperLaw {
        let p = PaperLawParams::PRESET;
        build_paper_law(p.c1, p.c2, p.l, p.m, p.theta1).expect("shipped preset is feasible")
    }

    /// Left connector formula, valid on `[c1, 1]`.
    pub fn theta_left(&self, s: f64) -> f64 {
        1.0 - self.c1.ln() - s / self.c1 + double_integral(self.psi1, self.c1, s)
    }

    pub fn theta_left_prime(&self, s: f64) -> f64 {
        -1.0 / self.c1 + single_integral(self.psi1, self.c1, s)
    }

    /// Right connector formula, valid on `[1, c2]`.
    pub fn theta_right(&self, s: f64) -> f64 {
        self.theta1 + double_integral(self.psi2, 1.0, s)
    }

    pub fn theta_right_prime(&self, s: f64) -> f64 {
        single_integral(self.psi2, 1.0, s)
    }

    pub fn eval(&self, s: f64) -> Extended {
        if s <= 0.0 {
            Extended::Infinite
        } else if s < self.c1 {
            Extended::Finite(-s.ln())
        } else if s <= 1.0 {
            Extended::Finite(self.theta_left(s))
        } else if s <= self.c2 {
            Extended::Finite(self.theta_right(s))
        } else {
            Extended::Finite(self.l * s + self.m)
        }
    }

    pub fn eval_prime(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s.is_nan() {
            Err(Error::DomainError(s))
        } else if s < self.c1 {
            Ok(-1.0 / s)
        } else if s <= 1.0 {
            Ok(self.theta_left_prime(s))
        } else if s <= self.c2 {
            Ok(self.theta_right_prime(s))
        } else {
            Ok(self.l)
        }
    }

    /// One-sided second derivative (taken from the branch containing `s`).
    pub fn eval_second(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s.is_nan() {
            Err(Error::DomainError(s))
        } else if s < self.c1 {
            Ok(1.0 / (s * s))
        } else if s <= 1.0 {
            Ok(self.psi1[0] + self.psi1[1] * s)
        } else if s <= self.c2 {
            Ok(self.psi2[0] + self.psi2[1] * s)
        } else {
            Ok(0.0)
        }
    }

    /// Branch joints and moment residuals, recomputed through independent
    /// routes (Gauss-Legendre quadrature for the moments, raw branch
    /// formulas on both sides of each joint).
    pub fn invariant_report(&self) -> PaperLawReport {
        let (c1, c2) = (self.c1, self.c2);
        let psi1 = |s: f64| self.psi1[0] + self.psi1[1] * s;
        let psi2 = |s: f64| self.psi2[0] + self.psi2[1] * s;
        let moments = [
            gauss_legendre(c1, 1.0, psi1) - 1.0 / c1,
            gauss_legendre(c1, 1.0, |s| s * psi1(s)) - (1.0 - self.theta1 - c1.ln()),
            gauss_legendre(1.0, c2, psi2) - self.l,
            gauss_legendre(1.0, c2, |s| s * psi2(s)) - (self.theta1 - self.m),
        ];
        let value_gaps = [
            (self.theta_left(c1) - (-c1.ln())).abs(),
            (self.theta_left(1.0) - self.theta_right(1.0)).abs(),
            (self.theta_right(c2) - (self.l * c2 + self.m)).abs(),
        ];
        let slope_gaps = [
            (self.theta_left_prime(c1) - (-1.0 / c1)).abs(),
            (self.theta_left_prime(1.0) - self.theta_right_prime(1.0)).abs(),
            (self.theta_right_prime(c2) - self.l).abs(),
        ];
        PaperLawReport {
            moment_residuals: moments,
            value_gaps,
            slope_gaps,
            h_prime_at_one: self.theta_left_prime(1.0),
            h_at_one: self.theta_left(1.0),
        }
    }
}

/// Result of [`PaperLaw::invariant_report`]. Joints are ordered `c1, 1, c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PaperLawReport {
    pub moment_residuals: [f64; 4],
    pub value_gaps: [f64; 3],
    pub slope_gaps: [f64; 3],
    pub h_prime_at_one: f64,
    pub h_at_one: f64,
}

impl PaperLawReport {
    pub fn max_moment_residual(&self) -> f64 {
        self.moment_residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()))
    }

    pub fn max_joint_gap(&self) -> f64 {
        self.value_gaps
            .iter()
            .chain(self.slope_gaps.iter())
            .fold(0.0f64, |a, g| a.max(*g))
    }
}

/// 5-point Gauss-Legendre rule, exact for polynomials up to degree 9.
fn gauss_legendre(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    const NODES: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let half = (hi - lo) / 2.0;
    let mid = (hi + lo) / 2.0;
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// The canonical shear-compatible law `a(s-1)^2 + b(1/s + s - 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralLaw {
    pub a: f64,
    pub b: f64,
    /// Growth constants with `h'(s) <= 2 q1 s + q2` for `s > 1`.
    pub q1: f64,
    pub q2: f64,
    /// Doubling constants with `h(s/2) <= k h(s)` on `(0, s0)`.
    pub k: f64,
    pub s0: f64,
}

/// Doubling bound targeted when locating `s0`.
pub const DOUBLING_TARGET: f64 = 2.5;

/// Sampled supremum of `h(s/2)/h(s)` on a log grid of `(1e-8, s0)`.
pub fn sampled_doubling_constant(law: &GeneralLaw, s0: f64, samples: usize) -> f64 {
    let (lo, hi) = (1e-8f64.ln(), s0.ln());
    (0..samples)
        .map(|i| (lo + (hi - lo) * (i as f64 + 0.5) / samples as f64).exp())
        .map(|s| law.value(s / 2.0) / law.value(s))
        .fold(0.0f64, f64::max)
}

pub fn build_general_law(q1: f64, q2_target: f64) -> Result<GeneralLaw> {
    if !(q1 > 0.0 && q1.is_finite()) || !q2_target.is_finite() {
        return Err(Error::InvalidParams(format!(
            "need finite q1 > 0 and finite q2, got q1 = {q1}, q2 = {q2_target}"
        )));
    }
    let a = q1;
    let b = q2_target + 2.0 * q1;
    if b <= 0.0 {
        return Err(Error::InvalidParams(format!(
            "growth bound unattainable: b = q2 + 2 q1 = {b} must be positive"
        )));
    }
    let mut law = GeneralLaw {
        a,
        b,
        q1,
        q2: b - 2.0 * a,
        k: f64::NAN,
        s0: 0.5,
    };
    let mut s0 = 0.5;
    loop {
        let k = sampled_doubling_constant(&law, s0, 4000);
        if k <= DOUBLING_TARGET {
            law.k = k;
            law.s0 = s0;
            return Ok(law);
        }
        s0 /= 2.0;
        if s0 < 1e-6 {
            return Err(Error::InvalidParams("no doubling interval found".into()));
        }
    }
}

impl GeneralLaw {
    fn value(&self, s: f64) -> f64 {
        self.a * (s - 1.0).powi(2) + self.b * (1.0 / s + s - 2.0)
    }

    pub fn eval(&self, s: f64) -> Extended {
        if s <= 0.0 {
            Extended::Infinite
        } else {
            Extended::Finite(self.value(s))
        }
    }

    pub fn eval_prime(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s.is_nan() {
            return Err(Error::DomainError(s));
        }
        Ok(2.0 * self.a * (s - 1.0) + self.b * (1.0 - 1.0 / (s * s)))
    }

    pub fn eval_second(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s.is_nan() {
            return Err(Error::DomainError(s));
        }
        Ok(2.0 * self.a + 2.0 * self.b / (s * s * s))
    }
}

/// Either law family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Paper(PaperLaw),
    General(GeneralLaw),
}

impl Law {
    pub fn eval(&self, s: f64) -> Extended {
        match self {
            Law::Paper(p) => p.eval(s),
            Law::General(g) => g.eval(s),
        }
    }

    pub fn eval_prime(&self, s: f64) -> Result<f64> {
        match self {
            Law::Paper(p) => p.eval_prime(s),
            Law::General(g) => g.eval_prime(s),
        }
    }

    pub fn eval_second(&self, s: f64) -> Result<f64> {
        match self {
            Law::Paper(p) => p.eval_second(s),
            Law::General(g) => g.eval_second(s),
        }
    }

    /// Value at the minimum `s = 1`.
    pub fn min_value(&self) -> f64 {
        self.eval(1.0).finite().unwrap_or(f64::NAN)
    }

    /// Rows `(s, h, h')` over `count` log-spaced points in `[lo, hi]`.
    pub fn table(&self, lo: f64, hi: f64, count: usize) -> Vec<(f64, f64, f64)> {
        let (a, b) = (lo.ln(), hi.ln());
        (0..count)
            .map(|i| {
                let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
                let s = (a + (b - a) * t).exp();
                let h = self.eval(s).finite().unwrap_or(f64::INFINITY);
                let hp = self.eval_prime(s).unwrap_or(f64::NAN);
                (s, h, hp)
            })
            .collect()
    }
}

impl From<PaperLaw> for Law {
    fn from(p: PaperLaw) -> Law {
        Law::Paper(p)
    }
}

impl From<GeneralLaw> for Law {
    fn from(g: GeneralLaw) -> Law {
        Law::General(g)
    }
}
