use std::f64::consts::PI;

use twistlab::energy::{energy, EnergyConfig};
use twistlab::field::DeformationField;
use twistlab::law::PaperLaw;
use twistlab::mesh::{make_mesh, Domain};
use twistlab::solver::{initial_field, minimality_witness, minimize, BoundaryData, InitKind, SolveSettings};
use twistlab::{Mat2, Vec2};

/// Radial Euler-Lagrange equation for `u = r(R) e_R`:
/// `r'' (2 l R + h'' r^2 / R) = 2 l (r / R - r') - h'' r (r'^2 / R - r r' / R^2)`.
fn radial_rhs(law: &PaperLaw, lambda: f64, big_r: f64, r: f64, rp: f64) -> f64 {
    let d = r * rp / big_r;
    let h2 = law.eval_second(d).unwrap();
    (2.0 * lambda * (r / big_r - rp) - h2 * r * (rp * rp / big_r - r * rp / (big_r * big_r)))
        / (2.0 * lambda * big_r + h2 * r * r / big_r)
}

/// Shoot from `R0` with `r = s R0`, `r' = s`; returns `r(1)` and the energy.
fn shoot(law: &PaperLaw, lambda: f64, s: f64) -> (f64, f64) {
    let steps = 20_000;
    let r0 = 1e-6;
    let dr = (1.0 - r0) / steps as f64;
    let density = |big_r: f64, r: f64, rp: f64| {
        let w = lambda * (rp * rp + r * r / (big_r * big_r)) + law.eval(r * rp / big_r).finite().unwrap();
        2.0 * PI * w * big_r
    };
    let (mut big_r, mut y) = (r0, [s * r0, s]);
    let mut e = 0.0;
    let f = |big_r: f64, y: [f64; 2]| [y[1], radial_rhs(law, lambda, big_r, y[0], y[1])];
    for _ in 0..steps {
        let k1 = f(big_r, y);
        let k2 = f(big_r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
        let k3 = f(big_r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
        let k4 = f(big_r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
        let next = [
            y[0] + dr / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dr / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        // trapezoid in R for the energy
        e += 0.5 * dr * (density(big_r, y[0], y[1]) + density(big_r + dr, next[0], next[1]));
        big_r += dr;
        y = next;
    }
    (y[0], e)
}

/// Bisection on the initial slope so that `r(1) = 1`.
fn radial_oracle(law: &PaperLaw, lambda: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.5, 1.5);
    assert!(shoot(law, lambda, lo).0 < 1.0 && shoot(law, lambda, hi).0 > 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(law, lambda, mid).0 < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, shoot(law, lambda, s).1)
}

#[test]
fn radial_squeeze_matches_shooting_oracle() {
    let law = PaperLaw::preset();
    let cfg = EnergyConfig::new(1.0, law).unwrap();
    let (slope, e_ode) = radial_oracle(&law, 1.0);
    assert!((slope - 1.0).abs() < 1e-6, "shooting slope {slope}");

    let mesh = make_mesh(Domain::Disc { radius: 1.0 }, 128).unwrap();
    let boundary = BoundaryData::RADIAL_SQUEEZE;
    let init = initial_field(&mesh, &boundary, InitKind::BoundaryMap).unwrap();
    let e_init = energy(&mesh, &init, &cfg).finite().unwrap();
    let settings = SolveSettings { grad_tol: 1e-9, ..SolveSettings::default() };
    let out = minimize(&mesh, &init, &boundary, &cfg, &settings).unwrap();
    println!("iterations {} grad {:e} energy {} ode {}", out.iterations, out.grad_norm, out.energy, e_ode);
    assert!(out.all_feasible());
    assert!(out.is_monotone());
    assert!(out.min_det(&mesh) > 0.0);
    assert!(out.energy < e_init - 1e-3);
    assert!((out.energy - e_ode).abs() <= 0.01 * e_ode.abs());
}

#[test]
fn affine_boundary_is_critical() {
    let cfg = EnergyConfig::new(1.0, PaperLaw::preset()).unwrap();
    let mesh = make_mesh(Domain::Square, 16).unwrap();
    let a = Mat2::new(1.3, 0.2, -0.1, 0.8);
    let b = Vec2::new(0.3, -0.2);
    let boundary = BoundaryData::Affine { a, b };
    let init = DeformationField::from_fn(&mesh, |x| a * x + b);
    let out = minimize(&mesh, &init, &boundary, &cfg, &SolveSettings::default()).unwrap();
    assert!(out.iterations <= 2);
    for (x, y) in mesh.vertices.iter().zip(&out.field.nodal) {
        assert!((a * x + b - y).norm() < 1e-12);
    }
}

#[test]
fn identity_passes_minimality_witness() {
    let cfg = EnergyConfig::new(1.0, PaperLaw::preset()).unwrap();
    let mesh = make_mesh(Domain::Square, 16).unwrap();
    let u = DeformationField::identity(&mesh);
    let w = minimality_witness(&mesh, &u, &cfg, 1e-3, 64, 7).unwrap();
    assert_eq!(w.feasible_samples, 64);
    assert!(w.holds(1e-8));
}
