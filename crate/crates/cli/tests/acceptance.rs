//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistlab::energy::{check_variation_bounds, variational_inequality_probe, EnergyConfig, VariationSpec};
use twistlab::field::DeformationField;
use twistlab::law::{build_general_law, PaperLaw};
use twistlab::mesh::{make_mesh, Domain, Mesh};
use twistlab::regularity::{
    density_growth, dirichlet_density, growth_lemma_check, poincare_annulus_check, poincare_corpus, CorpusSpec,
    GrowthLemmaCase,
};
use twistlab::shear::{
    boundary_from_profiles, check_shear_bounds, minimize_shear, shear_gradient, shear_jacobian, xi_fields,
    xi_holder_diagnostics, ProfilePreset, ShearConfig, Sign,
};
use twistlab::solver::{initial_field, minimize, BoundaryData, InitKind, Minimizer, SolveSettings};
use twistlab::twist::{equivalence_probe, twist_field};
use twistlab::{Mat2, Vec2};

type Outcome = (bool, String);

struct Suite {
    failed: Vec<usize>,
}

impl Suite {
    fn run(&mut self, id: usize, title: &str, budget_s: f64, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let (ok, detail) = f();
        let secs = start.elapsed().as_secs_f64();
        let over = if secs > budget_s { " OVER BUDGET" } else { "" };
        println!(
            "{} criterion {id:>2} {title}: {detail} [{secs:.2} s, budget {budget_s} s{over}]",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failed.push(id);
        }
    }
}

fn grid3(spacing: f64) -> Vec<Vec2> {
    let mut out = Vec::new();
    for j in -1..=1 {
        for i in -1..=1 {
            out.push(Vec2::new(i as f64 * spacing, j as f64 * spacing));
        }
    }
    out
}

fn law_construction() -> Outcome {
    let law = PaperLaw::preset();
    let rep = law.invariant_report();
    let h = |s: f64| law.eval(s).finite().unwrap_or(f64::INFINITY);
    let exact = law.eval_prime(law.c1).unwrap() == -1.0 / law.c1 && law.eval_prime(1.0).unwrap() == 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (lo, hi) = (1e-6f64.ln(), 1e3f64.ln());
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let mut s = [0.0; 3].map(|_: f64| rng.random_range(lo..hi).exp());
        s.sort_by(f64::total_cmp);
        let w = (s[2] - s[1]) / (s[2] - s[0]);
        let chord = w * h(s[0]) + (1.0 - w) * h(s[2]);
        worst = worst.max((h(s[1]) - chord) / chord.abs().max(1.0));
    }
    let joints = rep.max_joint_gap();
    (
        joints <= 1e-10 && exact && worst <= 1e-9,
        format!("joint gap {joints:.2e} <= 1e-10, h'(c1) = -1/c1 and h'(1) = 0 exact: {exact}, worst chord excess {worst:.2e} <= 1e-9 over 1e4 triples"),
    )
}

fn twist_algebra() -> Outcome {
    let mesh = make_mesh(Domain::Square, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = loop {
            let a = Mat2::from_fn(|_, _| rng.random_range(-2.0..2.0));
            if (0.1..10.0).contains(&a.determinant()) {
                break (a, Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        };
        let x0 = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let tf = twist_field(&mesh, &DeformationField::from_fn(&mesh, |x| a * x + b), x0).unwrap();
        let scale = a.determinant() * 2.0 * 2f64.sqrt();
        for (e, t) in tf.values.iter().enumerate() {
            let exact = a.determinant() * (mesh.centroids[e] - x0).norm();
            worst = worst.max((t.unwrap() - exact).abs() / scale);
        }
    }
    let bend = |x: Vec2| Vec2::new(x.x + 0.1 * x.y * x.y, x.y + 0.2 * x.x);
    let x0 = Vec2::new(0.125, -0.25);
    let base = twist_field(&mesh, &DeformationField::from_fn(&mesh, bend), x0).unwrap().values;
    let (s, c) = 0.7f64.sin_cos();
    let q = Mat2::new(c, -s, s, c);
    let rot = twist_field(&mesh, &DeformationField::from_fn(&mesh, |x| q * bend(x)), x0).unwrap().values;
    let shift = twist_field(&mesh, &DeformationField::from_fn(&mesh, |x| bend(x) + Vec2::new(3.0, -1.0)), x0)
        .unwrap()
        .values;
    let scaled = twist_field(&mesh, &DeformationField::from_fn(&mesh, |x| bend(x) * 2.0), x0).unwrap().values;
    let mut inv: f64 = 0.0;
    let mut scaling_exact = true;
    for e in 0..base.len() {
        let t = base[e].unwrap();
        inv = inv.max((rot[e].unwrap() - t).abs().max((shift[e].unwrap() - t).abs()) / (1.0 + t.abs()));
        scaling_exact &= scaled[e].unwrap() == 4.0 * t;
    }
    (
        worst <= 1e-10 && inv <= 1e-12 && scaling_exact,
        format!("affine error {worst:.2e} <= 1e-10*scale, rotation/translation {inv:.2e} <= 1e-12, t(2u) = 4t(u) bitwise: {scaling_exact}"),
    )
}

fn star_equivalence() -> Outcome {
    let x0 = Vec2::zeros();
    let folded = |x: Vec2| Vec2::new(x.x, x.y * (1.0 - 1.5 * (-8.0 * x.norm_squared()).exp()));
    let a = Mat2::new(1.5, 0.4, -0.2, 0.8);
    let mut ok = true;
    let mut rates = Vec::new();
    for (n, n_theta) in [(64, 64), (128, 64), (128, 256)] {
        let mesh = make_mesh(Domain::Square, n).unwrap();
        for u in [DeformationField::identity(&mesh), DeformationField::from_fn(&mesh, |x| a * x)] {
            ok &= equivalence_probe(&mesh, &u, x0, 0.5, 16, n_theta).unwrap().all_positive();
        }
        let rep = equivalence_probe(&mesh, &DeformationField::from_fn(&mesh, folded), x0, 0.5, 16, n_theta).unwrap();
        ok &= rep.rows.iter().any(|r| !r.twist_ok) && rep.rows.iter().any(|r| !r.star_ok);
        rates.push(rep.disagreement_rate());
    }
    let monotone = rates.windows(2).all(|w| w[1] <= w[0]);
    (
        ok && monotone,
        format!("identity/affine all positive and folded map flagged by both: {ok}, folded disagreement (64,64)->(128,64)->(128,256) = {rates:?} non-increasing"),
    )
}

fn variation_bounds() -> Outcome {
    let mesh = make_mesh(Domain::Square, 64).unwrap();
    let (mut resid, mut margin): (f64, f64) = (0.0, f64::INFINITY);
    for a in [Mat2::identity(), Mat2::new(1.5, 0.4, -0.2, 0.8), Mat2::new(0.4, -1.0, 0.7, 0.6)] {
        let u = DeformationField::from_fn(&mesh, |x| a * x);
        for eps in [-0.4, -0.1, -0.01] {
            let rep = check_variation_bounds(&mesh, &u, &VariationSpec { x0: Vec2::new(0.1, -0.05), r: 0.25, eps }).unwrap();
            resid = resid.max(rep.max_identity_residual);
            margin = margin.min(rep.min_lower_margin / rep.scale);
        }
    }
    (
        resid <= 1e-9 && margin >= -1e-9,
        format!("plateau/far-field identity residual {resid:.2e} <= 1e-9, min lower margin / scale {margin:.3e} >= -1e-9"),
    )
}

/// Radial Euler-Lagrange shooting for `u = r(R) e_R` on the unit disc.
fn shoot(law: &PaperLaw, lambda: f64, s: f64) -> (f64, f64) {
    let rhs = |big_r: f64, r: f64, rp: f64| {
        let h2 = law.eval_second(r * rp / big_r).unwrap();
        (2.0 * lambda * (r / big_r - rp) - h2 * r * (rp * rp / big_r - r * rp / (big_r * big_r)))
            / (2.0 * lambda * big_r + h2 * r * r / big_r)
    };
    let density = |big_r: f64, r: f64, rp: f64| {
        2.0 * PI * big_r * (lambda * (rp * rp + r * r / (big_r * big_r)) + law.eval(r * rp / big_r).finite().unwrap())
    };
    let steps = 20_000;
    let r0 = 1e-6;
    let dr = (1.0 - r0) / steps as f64;
    let f = |big_r: f64, y: [f64; 2]| [y[1], rhs(big_r, y[0], y[1])];
    let (mut big_r, mut y, mut e) = (r0, [s * r0, s], 0.0);
    for _ in 0..steps {
        let k1 = f(big_r, y);
        let k2 = f(big_r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
        let k3 = f(big_r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
        let k4 = f(big_r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
        let next = [
            y[0] + dr / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + dr / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        e += 0.5 * dr * (density(big_r, y[0], y[1]) + density(big_r + dr, next[0], next[1]));
        big_r += dr;
        y = next;
    }
    (y[0], e)
}

fn radial_oracle(law: &PaperLaw, lambda: f64) -> f64 {
    let (mut lo, mut hi) = (0.5, 1.5);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(law, lambda, mid).0 < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    shoot(law, lambda, 0.5 * (lo + hi)).1
}

fn minimizer_sanity(squeeze: &mut Option<(Mesh, Minimizer)>) -> Outcome {
    let law = PaperLaw::preset();
    let cfg = EnergyConfig::new(1.0, law).unwrap();
    let square = make_mesh(Domain::Square, 32).unwrap();
    let id = DeformationField::identity(&square);
    let out = minimize(&square, &id, &BoundaryData::Identity, &cfg, &SolveSettings::default()).unwrap();
    let id_ok = out.iterations <= 2 && out.grad_norm <= 1e-10 && out.field == id;

    let mesh = make_mesh(Domain::Disc { radius: 1.0 }, 128).unwrap();
    let boundary = BoundaryData::RADIAL_SQUEEZE;
    let init = initial_field(&mesh, &boundary, InitKind::BoundaryMap).unwrap();
    let settings = SolveSettings { grad_tol: 1e-9, ..SolveSettings::default() };
    let sol = minimize(&mesh, &init, &boundary, &cfg, &settings).unwrap();
    let e_ode = radial_oracle(&law, 1.0);
    let rel = (sol.energy - e_ode).abs() / e_ode;
    let min_det = sol.min_det(&mesh);
    let ok = id_ok && sol.all_feasible() && sol.is_monotone() && min_det > 0.0 && rel <= 0.01;
    let detail = format!(
        "identity: {} iters, grad {:.1e} <= 1e-10; squeeze n=128: {} iters, feasible {}, monotone {}, min det {min_det:.3}, energy {:.6} vs ODE {e_ode:.6} (rel {rel:.1e} <= 1e-2)",
        out.iterations,
        out.grad_norm,
        sol.iterations,
        sol.all_feasible(),
        sol.is_monotone(),
        sol.energy
    );
    *squeeze = Some((mesh, sol));
    (ok, detail)
}

fn inequality_probe(squeeze: &Option<(Mesh, Minimizer)>) -> Outcome {
    let Some((mesh, sol)) = squeeze else {
        return (false, "no converged minimizer".into());
    };
    let cfg = EnergyConfig::new(1.0, PaperLaw::preset()).unwrap();
    let ladder = [-1e-2, -1e-3, -1e-4];
    let (mut worst, mut used, mut min_twist): (f64, usize, f64) = (0.0, 0, f64::INFINITY);
    for x0 in grid3(0.25) {
        let spec = VariationSpec { x0, r: 0.15, eps: ladder[0] };
        let p = variational_inequality_probe(mesh, &sol.field, &spec, &cfg, &ladder).unwrap();
        min_twist = min_twist.min(p.min_twist);
        if p.min_twist >= 0.0 {
            used += 1;
            worst = worst.max(p.max_slope());
        }
    }
    (
        used == 9 && worst <= 1e-5,
        format!("{used}/9 centers with nonnegative twist (min {min_twist:.3e}), max one-sided slope {worst:.2e} <= 1e-5"),
    )
}

fn growth_lemma() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (mu, p) in [(0.5, 1.0), (0.75, 2.0), (0.9, 2.0)] {
        let rep = growth_lemma_check(&GrowthLemmaCase::recursion(mu, p, 1.0 - mu, 1.0, 1.0, 40)).unwrap();
        let alpha = (1.0f64 / mu).log2();
        let need = rep.guaranteed_exponent(p) - 0.05;
        ok &= (rep.alpha_prime - alpha).abs() <= 1e-12 && rep.min_slack() >= 0.0 && rep.decay_exponent >= need;
        parts.push(format!(
            "(mu {mu}, p {p}): alpha' {:.4}, min slack {:.2e}, decay {:.4} >= {need:.4}",
            rep.alpha_prime,
            rep.min_slack(),
            rep.decay_exponent
        ));
    }
    (ok, parts.join("; "))
}

fn poincare() -> Outcome {
    let spec = CorpusSpec::default();
    let mesh = make_mesh(Domain::Square, spec.n).unwrap();
    let id = poincare_annulus_check(&mesh, &DeformationField::identity(&mesh), Vec2::zeros(), spec.r).unwrap();
    let closed = 7.5 * PI * spec.r.powi(4);
    let rel = (id.lhs / closed - 1.0).abs();
    let corpus = poincare_corpus(spec, 0).unwrap();
    (
        rel <= 0.05 && id.holds(0.0) && corpus.violations() == 0,
        format!(
            "identity L/(7.5 pi r^4) - 1 = {rel:.2e} <= 5e-2, L <= R*: {}; corpus {} fields, {} violations beyond 10% slack (max L/R* {:.3})",
            id.holds(0.0),
            spec.fields,
            corpus.violations(),
            corpus.max_ratio()
        ),
    )
}

fn holder_fit() -> Outcome {
    let beta = 0.5;
    let mesh = make_mesh(Domain::Square, 256).unwrap();
    let power = DeformationField::from_fn(&mesh, |x| {
        let r = x.norm();
        if r == 0.0 { x } else { x * r.powf(beta - 1.0) }
    });
    let fit = |u: &DeformationField| {
        let d = dirichlet_density(&mesh, u);
        let a = density_growth(&mesh, &d, Vec2::zeros(), 0.8, 0.0).unwrap().alpha;
        let b = density_growth(&mesh, &d, Vec2::zeros(), 0.8, 0.5).unwrap().alpha;
        (a, b)
    };
    let (pa, pb) = fit(&power);
    let (ia, ib) = fit(&DeformationField::identity(&mesh));
    let ok = (pa - 1.0).abs() <= 0.1
        && (1.9..=2.1).contains(&ia)
        && (pa - pb).abs() <= 0.05
        && (ia - ib).abs() <= 0.05;
    (
        ok,
        format!("power map alpha {pa:.4} (shifted {pb:.4}) within 10% of 1; identity alpha {ia:.4} (shifted {ib:.4}) in [1.9, 2.1]"),
    )
}

fn shear_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut ident: f64 = 0.0;
    for _ in 0..10_000 {
        let g = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let lhs = shear_jacobian(g).norm_squared();
        ident = ident.max((lhs - (2.0 + 2.0 * g.y + g.norm_squared())).abs() / lhs.max(1.0));
    }
    let cfg = |m| ShearConfig::new(1.0, build_general_law(1.0, 0.0).unwrap(), m).unwrap();

    let small = make_mesh(Domain::Square, 32).unwrap();
    let p = ProfilePreset::Constant { plus: 0.6, minus: -0.2 };
    let affine = boundary_from_profiles(&small, |x| p.plus(x), |x| p.minus(x)).unwrap();
    let crit = shear_gradient(&small, &affine, &cfg(0.5)).unwrap().iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mesh = make_mesh(Domain::Square, 128).unwrap();
    let p = ProfilePreset::Oscillatory;
    let s0 = boundary_from_profiles(&mesh, |x| p.plus(x), |x| p.minus(x)).unwrap();
    let settings = SolveSettings { grad_tol: 1e-9, ..SolveSettings::default() };
    let sol = minimize_shear(&mesh, &s0, &cfg(1.0), &settings).unwrap();
    let m = sol.measured_m;
    let centers = grid3(0.25);
    let (mut support, mut margin): (usize, f64) = (0, f64::INFINITY);
    for &x0 in &centers {
        let xi = xi_fields(&mesh, &sol.sigma, x0, m).unwrap();
        support += xi.support_violations();
        for eps in [-0.4, -0.1, -0.01] {
            for sign in [Sign::Plus, Sign::Minus] {
                let rep = check_shear_bounds(&mesh, &sol.sigma, &xi, &VariationSpec { x0, r: 0.15, eps }, sign).unwrap();
                margin = margin.min(rep.min_lower_margin.min(rep.min_upper_margin));
            }
        }
    }
    let holder = xi_holder_diagnostics(&mesh, &sol.sigma, &centers, m, 0.6).unwrap();
    let positive = holder.iter().filter(|r| r.alpha_positive()).count();
    let vanishing = holder.iter().filter(|r| r.plus.is_vanishing() && r.minus.is_vanishing()).count();
    (
        ident <= 1e-15 && crit <= 1e-8 && support == 0 && margin >= 0.0 && positive == centers.len(),
        format!(
            "identity error {ident:.1e}, affine gradient {crit:.1e} <= 1e-8, measured M {m:.4}, support violations {support}, min det margin {margin:.3e} >= 0, alpha > 0 at {positive}/9 centers ({vanishing} with vanishing excess)"
        ),
    )
}

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let root: PathBuf = std::env::temp_dir().join(format!("twistlab-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&root).unwrap();
    let runs = [
        ("build-law", ""),
        ("verify", ""),
        ("minimize", "n = 16\nwitness.samples = 8\n"),
        ("twist-report", "n = 32\nfield = folded\nstar.radii = 0.1,0.3\n"),
        ("star-check", "n = 32\nfield = folded\n"),
        ("holder-fit", "n = 64\nholder.r_max = 0.8\npoincare.fields = 3\n"),
        ("shear", "n = 32\nshear.centers = 0,0\nholder.r_max = 0.8\n"),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (cmd, text) in runs {
        let cfg = root.join(format!("{cmd}.cfg"));
        std::fs::write(&cfg, text).unwrap();
        let mut outputs = Vec::new();
        for k in 0..2 {
            let out = root.join(format!("{cmd}-{k}"));
            let status = Command::new(env!("CARGO_BIN_EXE_twistlab"))
                .arg(cmd)
                .arg("--config")
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--seed", "7"])
                .output()
                .unwrap()
                .status;
            if status.code() == Some(2) {
                differing.push(format!("{cmd} errored"));
            }
            outputs.push(files_in(&out));
        }
        files += outputs[0].len();
        if outputs[0] != outputs[1] || outputs[0].is_empty() {
            differing.push(cmd.to_string());
        }
    }
    let _ = std::fs::remove_dir_all(&root);
    (
        differing.is_empty(),
        format!("7 commands run twice with seed 7, {files} files compared, differing: {differing:?}"),
    )
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    let mut squeeze = None;
    suite.run(1, "law construction", 1.0, law_construction);
    suite.run(2, "twist algebra", 5.0, twist_algebra);
    suite.run(3, "star-shape equivalence", 30.0, star_equivalence);
    suite.run(4, "variation bounds", 5.0, variation_bounds);
    suite.run(5, "minimizer sanity", 120.0, || minimizer_sanity(&mut squeeze));
    suite.run(6, "variational-inequality probe", 60.0, || inequality_probe(&squeeze));
    suite.run(7, "growth lemma oracle", 1.0, growth_lemma);
    suite.run(8, "annulus Poincare", 30.0, poincare);
    suite.run(9, "Holder fit", 60.0, holder_fit);
    suite.run(10, "shear suite", 120.0, shear_suite);
    suite.run(11, "determinism", 60.0, determinism);
    if suite.failed.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failed criteria {:?}", suite.failed);
        std::process::exit(1);
    }
}
