//! The seven subcommands. Each reads its keys from the [`RunConfig`],
//! writes CSV artifacts, and records values and checks on the [`Output`].

use std::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twistlab::energy::{
    check_variation_bounds, energy, variational_inequality_probe, EnergyConfig, VariationSpec,
};
use twistlab::field::{adjugate, element_dets, DeformationField};
use twistlab::law::{build_general_law, build_paper_law, sampled_doubling_constant, Law, PaperLawParams};
use twistlab::mesh::{make_mesh, make_mesh_with, DirichletSet, Domain, Mesh};
use twistlab::regularity::{
    caccioppoli_ratio, density_growth, dirichlet_density, growth_lemma_check, poincare_annulus_check,
    poincare_corpus, CorpusSpec, GrowthLemmaCase,
};
use twistlab::shear::{
    boundary_from_profiles, check_shear_bounds, minimize_shear, shear_energy, shear_inequality_probe,
    shear_jacobian, xi_fields, xi_holder_diagnostics, ProfilePreset, ShearConfig, Sign,
};
use twistlab::solver::{
    initial_field, minimality_witness, minimize, BoundaryData, InitKind, Minimizer, SolveSettings, TRACE_HEADER,
};
use twistlab::twist::{equivalence_probe, penalty, star_profile, twist_field, CenterRegion};
use twistlab::{fmt_sci, Extended, Mat2, Vec2};

use crate::config::RunConfig;
use crate::output::Output;
use crate::CliError;

fn point(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn mesh_from(cfg: &RunConfig) -> Result<Mesh, CliError> {
    let n = cfg.get("n", 64usize)?;
    let domain = match cfg.string("domain", "square").as_str() {
        "square" => Domain::Square,
        "disc" => Domain::Disc {
            radius: cfg.get("disc_radius", 1.0)?,
        },
        other => return Err(CliError::Config(format!("unknown domain {other}"))),
    };
    Ok(make_mesh(domain, n)?)
}

fn law_from(cfg: &RunConfig) -> Result<Law, CliError> {
    match cfg.string("law", "paper").as_str() {
        "paper" => {
            let p = PaperLawParams::PRESET;
            Ok(build_paper_law(
                cfg.get("law.c1", p.c1)?,
                cfg.get("law.c2", p.c2)?,
                cfg.get("law.l", p.l)?,
                cfg.get("law.m", p.m)?,
                cfg.get("law.theta1", p.theta1)?,
            )?
            .into())
        }
        "general" => Ok(build_general_law(cfg.get("law.q1", 1.0)?, cfg.get("law.q2", 0.0)?)?.into()),
        other => Err(CliError::Config(format!("unknown law {other}"))),
    }
}

fn energy_config(cfg: &RunConfig) -> Result<EnergyConfig, CliError> {
    Ok(EnergyConfig::new(cfg.get("lambda", 1.0)?, law_from(cfg)?)?)
}

fn affine_from(cfg: &RunConfig) -> Result<(Mat2, Vec2), CliError> {
    Ok((
        Mat2::new(
            cfg.get("affine.a11", 1.0)?,
            cfg.get("affine.a12", 0.0)?,
            cfg.get("affine.a21", 0.0)?,
            cfg.get("affine.a22", 1.0)?,
        ),
        Vec2::new(cfg.get("affine.b1", 0.0)?, cfg.get("affine.b2", 0.0)?),
    ))
}

fn boundary_from(cfg: &RunConfig) -> Result<BoundaryData, CliError> {
    match cfg.string("boundary", "identity").as_str() {
        "identity" => Ok(BoundaryData::Identity),
        "affine" => {
            let (a, b) = affine_from(cfg)?;
            Ok(BoundaryData::Affine { a, b })
        }
        "radial" => Ok(BoundaryData::Radial {
            a0: cfg.get("radial.a0", 0.5)?,
            a1: cfg.get("radial.a1", 0.5)?,
        }),
        "squeeze" => Ok(BoundaryData::RADIAL_SQUEEZE),
        other => Err(CliError::Config(format!("unknown boundary {other}"))),
    }
}

fn settings_from(cfg: &RunConfig) -> Result<SolveSettings, CliError> {
    let d = SolveSettings::default();
    let s = SolveSettings {
        max_iters: cfg.get("solver.max_iters", d.max_iters)?,
        grad_tol: cfg.get("solver.grad_tol", d.grad_tol)?,
        armijo: cfg.get("solver.armijo", d.armijo)?,
        shrink: cfg.get("solver.shrink", d.shrink)?,
        initial_step: cfg.get("solver.initial_step", d.initial_step)?,
        kappa: cfg.get("solver.kappa", d.kappa)?,
        min_step: cfg.get("solver.min_step", d.min_step)?,
    };
    s.validate()?;
    Ok(s)
}

/// Run the elastic solve described by the config.
fn solve(cfg: &RunConfig, mesh: &Mesh, ecfg: &EnergyConfig) -> Result<(Minimizer, f64), CliError> {
    let boundary = boundary_from(cfg)?;
    let default_init = if boundary == BoundaryData::RADIAL_SQUEEZE { "boundary_map" } else { "harmonic" };
    let kind = match cfg.string("init", default_init).as_str() {
        "harmonic" => InitKind::Harmonic,
        "boundary_map" => InitKind::BoundaryMap,
        other => return Err(CliError::Config(format!("unknown init {other}"))),
    };
    let init = initial_field(mesh, &boundary, kind)?;
    let e0 = energy(mesh, &init, ecfg).finite().unwrap_or(f64::INFINITY);
    let out = minimize(mesh, &init, &boundary, ecfg, &settings_from(cfg)?)?;
    Ok((out, e0))
}

/// Field analysed by the twist and regularity commands.
fn analysis_field(cfg: &RunConfig, mesh: &Mesh) -> Result<DeformationField, CliError> {
    match cfg.string("field", "identity").as_str() {
        "identity" => Ok(DeformationField::identity(mesh)),
        "affine" => {
            let (a, b) = affine_from(cfg)?;
            Ok(DeformationField::from_fn(mesh, |x| a * x + b))
        }
        "folded" => {
            let amp = cfg.get("folded.amplitude", 1.5)?;
            Ok(DeformationField::from_fn(mesh, |x| {
                Vec2::new(x.x, x.y * (1.0 - amp * (-8.0 * x.norm_squared()).exp()))
            }))
        }
        "power" => {
            let beta = cfg.get("power.beta", 0.5)?;
            Ok(DeformationField::from_fn(mesh, |x| {
                let r = x.norm();
                if r == 0.0 {
                    x
                } else {
                    x * r.powf(beta - 1.0)
                }
            }))
        }
        "minimizer" => Ok(solve(cfg, mesh, &energy_config(cfg)?)?.0.field),
        other => Err(CliError::Config(format!("unknown field {other}"))),
    }
}

fn field_rows<'a>(mesh: &'a Mesh, u: &'a DeformationField) -> impl Iterator<Item = String> + 'a {
    mesh.vertices
        .iter()
        .zip(&u.nodal)
        .map(|(x, v)| format!("{},{},{},{}", fmt_sci(x.x), fmt_sci(x.y), fmt_sci(v.x), fmt_sci(v.y)))
}

pub fn build_law(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let law = law_from(cfg)?;
    let lo = cfg.get("table.lo", 0.05)?;
    let hi = cfg.get("table.hi", 4.0)?;
    let count = cfg.get("table.count", 400usize)?;
    out.csv(
        "law_table.csv",
        "s,h,h_prime",
        law.table(lo, hi, count)
            .into_iter()
            .map(|(s, h, hp)| format!("{},{},{}", fmt_sci(s), fmt_sci(h), fmt_sci(hp))),
    )?;
    let h = |s: f64| law.eval(s).finite().unwrap_or(f64::INFINITY);
    let samples = cfg.get("convexity.samples", 10_000usize)?;
    let lo_s: f64 = cfg.get("convexity.lo", 1e-6)?;
    let hi_s: f64 = cfg.get("convexity.hi", 1e3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("seed", 0u64)?);
    let mut worst_chord = f64::NEG_INFINITY;
    for _ in 0..samples {
        let mut s = [0.0; 3];
        for v in &mut s {
            *v = rng.random_range(lo_s.ln()..hi_s.ln()).exp();
        }
        s.sort_by(f64::total_cmp);
        let w = (s[2] - s[1]) / (s[2] - s[0]);
        let chord = w * h(s[0]) + (1.0 - w) * h(s[2]);
        worst_chord = worst_chord.max((h(s[1]) - chord) / chord.abs().max(1.0));
    }
    out.number("convexity_worst_relative_excess", worst_chord);
    out.check("convexity_chord", worst_chord <= 1e-9, format!("{samples} samples"));
    let hp1 = law.eval_prime(1.0)?;
    out.number("h_prime_at_one", hp1);
    out.check("h_prime_at_one_zero", hp1 == 0.0, "");
    match law {
        Law::Paper(p) => {
            let rep = p.invariant_report();
            for (k, name) in ["c1", "one", "c2"].iter().enumerate() {
                out.number(format!("value_gap_{name}"), rep.value_gaps[k]);
                out.number(format!("slope_gap_{name}"), rep.slope_gaps[k]);
            }
            out.number("max_moment_residual", rep.max_moment_residual());
            out.number("h_at_one", rep.h_at_one);
            out.value("psi1", format!("{},{}", fmt_sci(p.psi1[0]), fmt_sci(p.psi1[1])));
            out.value("psi2", format!("{},{}", fmt_sci(p.psi2[0]), fmt_sci(p.psi2[1])));
            out.check("joints_c1", rep.max_joint_gap() <= 1e-10, fmt_sci(rep.max_joint_gap()));
            out.check("moments", rep.max_moment_residual() <= 1e-10, fmt_sci(rep.max_moment_residual()));
            out.check("h_prime_at_c1", p.eval_prime(p.c1)? == -1.0 / p.c1, "");
        }
        Law::General(g) => {
            out.number("a", g.a);
            out.number("b", g.b);
            out.number("q1", g.q1);
            out.number("q2", g.q2);
            out.number("k", g.k);
            out.number("s0", g.s0);
            let k = sampled_doubling_constant(&g, g.s0, 2000);
            out.check("doubling", k <= g.k + 1e-12, fmt_sci(k));
            let growth_ok = (1..400).all(|i| {
                let s = 1.0 + 0.025 * i as f64;
                g.eval_prime(s).is_ok_and(|d| d <= 2.0 * g.q1 * s + g.q2 + 1e-12)
            });
            out.check("growth", growth_ok, "");
        }
    }
    Ok(())
}

pub fn run_minimize(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mesh = mesh_from(cfg)?;
    let ecfg = energy_config(cfg)?;
    let (sol, e0) = solve(cfg, &mesh, &ecfg)?;
    out.csv("trace.csv", TRACE_HEADER, sol.trace.iter().map(|r| r.csv()))?;
    out.csv("field.csv", "x,y,u1,u2", field_rows(&mesh, &sol.field))?;
    out.number("initial_energy", e0);
    out.number("energy", sol.energy);
    out.value("iterations", sol.iterations.to_string());
    out.number("grad_norm", sol.grad_norm);
    out.value("converged", sol.converged.to_string());
    out.number("min_det", sol.min_det(&mesh));
    if let (BoundaryData::Identity, Law::Paper(p)) = (boundary_from(cfg)?, ecfg.law) {
        out.number("energy_identity_closed_form", (2.0 * ecfg.lambda + p.theta1) * mesh.domain.area());
    }
    out.check("converged", sol.converged, fmt_sci(sol.grad_norm));
    out.check("feasible_iterates", sol.all_feasible(), "");
    out.check("monotone_energy", sol.is_monotone(), "");
    out.check("energy_not_above_start", sol.energy <= e0, "");
    let samples = cfg.get("witness.samples", 64usize)?;
    if samples > 0 {
        let w = minimality_witness(
            &mesh,
            &sol.field,
            &ecfg,
            cfg.get("witness.gamma", 1e-3)?,
            samples,
            cfg.get("seed", 0u64)?,
        )?;
        out.number("witness_worst_relative_change", w.worst_relative_change);
        out.value("witness_feasible_samples", w.feasible_samples.to_string());
        out.check("minimality_witness", w.holds(1e-8), "");
    }
    if cfg.flag("probe", false)? {
        let centers = cfg.points("probe.centers", &lattice(cfg.get("probe.spacing", 0.25)?))?;
        let r = cfg.get("probe.r", 0.15)?;
        let ladder = cfg.list("eps_ladder", &[-1e-2, -1e-3, -1e-4])?;
        let tol = cfg.get("probe.slope_tol", 1e-5)?;
        let mut rows = Vec::new();
        let mut ok = true;
        for c in centers {
            let spec = VariationSpec { x0: point(c), r, eps: ladder[0] };
            let p = variational_inequality_probe(&mesh, &sol.field, &spec, &ecfg, &ladder)?;
            ok &= p.slopes_within(tol);
            rows.push(format!(
                "{},{},{},{},{},{}",
                fmt_sci(c[0]),
                fmt_sci(c[1]),
                fmt_sci(p.lhs),
                fmt_sci(p.rhs),
                fmt_sci(p.max_slope()),
                fmt_sci(p.min_twist)
            ));
        }
        out.csv("probe.csv", "x0x,x0y,lhs,rhs,max_slope,min_twist", rows)?;
        out.check("probe_slopes", ok, format!("tol {tol:e}"));
    }
    Ok(())
}

/// 3 x 3 lattice of centers with the given spacing around the origin.
fn lattice(spacing: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for j in -1..=1 {
        for i in -1..=1 {
            out.push([i as f64 * spacing, j as f64 * spacing]);
        }
    }
    out
}

pub fn twist_report(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mesh = mesh_from(cfg)?;
    let u = analysis_field(cfg, &mesh)?;
    let center = point(cfg.points("region.center", &[[0.0, 0.0]])?[0]);
    let region = match cfg.string("region", "ball").as_str() {
        "ball" => CenterRegion::Ball {
            center,
            radius: cfg.get("region.radius", 0.3)?,
        },
        "square" => CenterRegion::Square {
            center,
            half: cfg.get("region.half", 0.25)?,
        },
        other => return Err(CliError::Config(format!("unknown region {other}"))),
    };
    let r_prime = cfg.get("r_prime", 0.3)?;
    let f = penalty(&mesh, &u, region, r_prime)?;
    out.csv(
        "penalty.csv",
        "x0x,x0y,violation",
        f.per_center
            .iter()
            .map(|(x, v)| format!("{},{},{}", fmt_sci(x.x), fmt_sci(x.y), fmt_sci(*v))),
    )?;
    out.number("penalty", f.value);
    out.number("min_twist", f.min_twist);
    out.value("centers", f.per_center.len().to_string());
    out.value("violating_centers", f.violating_centers().count().to_string());
    out.check("penalty_nonnegative", f.value >= 0.0, "");
    let all_ok = f.center_ok.iter().all(|&b| b);
    out.check("g_consistency", (f.value == 0.0) == all_ok, "");
    match cfg.string("expect.penalty", "any").as_str() {
        "zero" => out.check("expect_penalty_zero", f.value == 0.0, fmt_sci(f.value)),
        "positive" => out.check("expect_penalty_positive", f.value > 0.0, fmt_sci(f.value)),
        _ => {}
    }
    let x0 = point(cfg.points("star.x0", &[[0.0, 0.0]])?[0]);
    let tf = twist_field(&mesh, &u, x0)?;
    out.value("twist_skipped_elements", tf.skipped.len().to_string());
    let n_theta = cfg.get("n_theta", 256usize)?;
    let expect_winding = cfg.flag("expect.winding_one", false)?;
    for (k, radius) in cfg.list("star.radii", &[0.25, 0.5])?.into_iter().enumerate() {
        match star_profile(&mesh, &u, x0, radius, n_theta) {
            Ok(p) => {
                out.csv(
                    &format!("star_{k}.csv"),
                    "theta,rho,sigma",
                    (0..p.theta.len()).map(|i| format!("{},{},{}", fmt_sci(p.theta[i]), fmt_sci(p.rho[i]), fmt_sci(p.sigma[i]))),
                )?;
                out.values(&format!("star_{k}."), p.key_values());
                if expect_winding {
                    out.check(format!("winding_one_{k}"), (p.winding - 1.0).abs() <= 1e-6, fmt_sci(p.winding));
                }
            }
            Err(e) => {
                out.value(format!("star_{k}.error"), e.to_string());
                if expect_winding {
                    out.check(format!("winding_one_{k}"), false, e.to_string());
                }
            }
        }
    }
    Ok(())
}

pub fn star_check(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mesh = mesh_from(cfg)?;
    let u = analysis_field(cfg, &mesh)?;
    let x0 = point(cfg.points("star.x0", &[[0.0, 0.0]])?[0]);
    let rep = equivalence_probe(
        &mesh,
        &u,
        x0,
        cfg.get("r_prime", 0.5)?,
        cfg.get("radii_count", 16usize)?,
        cfg.get("n_theta", 256usize)?,
    )?;
    out.csv(
        "equivalence.csv",
        "radius,shell_min_twist,twist_ok,star_margin,star_ok",
        rep.rows.iter().map(|r| {
            format!(
                "{},{},{},{},{}",
                fmt_sci(r.radius),
                fmt_sci(r.shell_min_twist),
                r.twist_ok,
                r.star_margin.map_or("undefined".to_string(), fmt_sci),
                r.star_ok
            )
        }),
    )?;
    out.values("", rep.key_values());
    if cfg.flag("expect.all_positive", false)? {
        out.check("all_positive", rep.all_positive(), "");
    }
    if cfg.flag("expect.both_flag", false)? {
        let t = rep.rows.iter().any(|r| !r.twist_ok);
        let s = rep.rows.iter().any(|r| !r.star_ok);
        out.check("both_flag", t && s, "");
    }
    let cap = cfg.get("expect.max_disagreement", 1.0)?;
    out.check("disagreement_rate", rep.disagreement_rate() <= cap, fmt_sci(rep.disagreement_rate()));
    Ok(())
}

pub fn holder_fit(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mesh = mesh_from(cfg)?;
    let u = analysis_field(cfg, &mesh)?;
    let density = dirichlet_density(&mesh, &u);
    let centers = cfg.points("holder.centers", &[[0.0, 0.0]])?;
    let r_max = cfg.get("holder.r_max", 0.8)?;
    let alpha_min = cfg.get("expect.alpha_min", f64::NEG_INFINITY)?;
    let alpha_max = cfg.get("expect.alpha_max", f64::INFINITY)?;
    let mut rows = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        let x0 = point(*c);
        let (p, q) = match (
            density_growth(&mesh, &density, x0, r_max, 0.0),
            density_growth(&mesh, &density, x0, r_max, 0.5),
        ) {
            (Ok(p), Ok(q)) => (p, q),
            (Err(e), _) | (_, Err(e)) => {
                out.check(format!("fit_{k}"), false, e.to_string());
                continue;
            }
        };
        out.csv(&format!("decay_{k}.csv"), "r,phi", p.csv_rows())?;
        rows.push(format!("{},{},{},{}", fmt_sci(x0.x), fmt_sci(x0.y), fmt_sci(p.alpha), fmt_sci(p.residual)));
        out.number(format!("alpha_{k}"), p.alpha);
        out.number(format!("alpha_shifted_{k}"), q.alpha);
        out.check(format!("monotone_{k}"), p.is_monotone() && q.is_monotone(), "");
        let stable = p.is_vanishing() && q.is_vanishing() || (p.alpha - q.alpha).abs() <= 0.05;
        out.check(format!("shift_stable_{k}"), stable, fmt_sci((p.alpha - q.alpha).abs()));
        if alpha_min.is_finite() || alpha_max.is_finite() {
            out.check(format!("alpha_range_{k}"), p.alpha >= alpha_min && p.alpha <= alpha_max, fmt_sci(p.alpha));
        }
    }
    out.csv("holder.csv", "x0x,x0y,alpha,residual", rows)?;

    let cap = cfg.get("caccioppoli.cap", f64::INFINITY)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for c in cfg.points("caccioppoli.centers", &centers)? {
        for r in cfg.list("caccioppoli.r", &[0.1, 0.2])? {
            let rep = caccioppoli_ratio(&mesh, &u, point(c), r)?;
            worst = worst.max(rep.c_prime);
            rows.push(format!(
                "{},{},{},{},{},{}",
                fmt_sci(c[0]),
                fmt_sci(c[1]),
                fmt_sci(r),
                fmt_sci(rep.d_in),
                fmt_sci(rep.d_ann),
                fmt_sci(rep.c_prime)
            ));
        }
    }
    out.csv("caccioppoli.csv", "x0x,x0y,r,d_in,d_ann,c_prime", rows)?;
    out.number("caccioppoli_max_c_prime", worst);
    if cap.is_finite() {
        out.check("caccioppoli_bounded", worst <= cap, fmt_sci(worst));
    }

    let d = CorpusSpec::default();
    let spec = CorpusSpec {
        n: cfg.get("poincare.n", d.n)?,
        fields: cfg.get("poincare.fields", d.fields)?,
        passes: cfg.get("poincare.passes", d.passes)?,
        r: cfg.get("poincare.r", d.r)?,
        slack: cfg.get("poincare.slack", d.slack)?,
    };
    if spec.fields > 0 {
        let corpus = poincare_corpus(spec, cfg.get("seed", 0u64)?)?;
        out.csv(
            "poincare.csv",
            "field,lhs,rhs,rhs_weighted_ball",
            corpus
                .reports
                .iter()
                .enumerate()
                .map(|(k, r)| format!("{k},{},{},{}", fmt_sci(r.lhs), fmt_sci(r.rhs), fmt_sci(r.rhs_weighted_ball))),
        )?;
        out.value("poincare_violations", corpus.violations().to_string());
        out.value("poincare_weighted_violations", corpus.weighted_violations().to_string());
        out.number("poincare_max_ratio", corpus.max_ratio());
        out.check("poincare_corpus", corpus.violations() == 0, format!("{} fields", spec.fields));
        let m = make_mesh(Domain::Square, spec.n)?;
        let id = poincare_annulus_check(&m, &DeformationField::identity(&m), Vec2::zeros(), spec.r)?;
        let closed = 7.5 * PI * spec.r.powi(4);
        out.number("poincare_identity_lhs", id.lhs);
        out.number("poincare_identity_closed_form", closed);
        out.check("poincare_identity", (id.lhs / closed - 1.0).abs() <= 0.05 && id.holds(0.0), "");
    }
    Ok(())
}

pub fn shear(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let n = cfg.get("n", 128usize)?;
    let dirichlet = match cfg.string("shear.dirichlet", "full").as_str() {
        "full" => DirichletSet::Full,
        "top_bottom" => DirichletSet::TopBottom,
        other => return Err(CliError::Config(format!("unknown shear.dirichlet {other}"))),
    };
    let mesh = make_mesh_with(Domain::Square, n, dirichlet)?;
    let preset = match cfg.string("shear.preset", "oscillatory").as_str() {
        "oscillatory" => ProfilePreset::Oscillatory,
        "abs" => ProfilePreset::Abs,
        "constant" => ProfilePreset::Constant {
            plus: cfg.get("shear.plus", 0.5)?,
            minus: cfg.get("shear.minus", -0.5)?,
        },
        other => return Err(CliError::Config(format!("unknown shear.preset {other}"))),
    };
    let mut scfg = ShearConfig::new(
        cfg.get("lambda", 1.0)?,
        build_general_law(cfg.get("law.q1", 1.0)?, cfg.get("law.q2", 0.0)?)?,
        cfg.get("shear.m", 1.0)?,
    )?;
    scfg.penalty_weight = cfg.get("shear.penalty", scfg.penalty_weight)?;
    scfg.holder_experiment = cfg.flag("shear.holder_experiment", false)?;
    scfg.holder_exponent = cfg.get("shear.holder_exponent", scfg.holder_exponent)?;
    let sigma0 = boundary_from_profiles(&mesh, |x| preset.plus(x), |x| preset.minus(x))?;
    let e0 = shear_energy(&mesh, &sigma0, &scfg).finite().unwrap_or(f64::INFINITY);
    let settings = SolveSettings {
        grad_tol: cfg.get("solver.grad_tol", 1e-9)?,
        ..settings_from(cfg)?
    };
    let sol = minimize_shear(&mesh, &sigma0, &scfg, &settings)?;
    out.csv("trace.csv", TRACE_HEADER, sol.trace.iter().map(|r| r.csv()))?;
    out.csv(
        "sigma.csv",
        "x,y,sigma",
        mesh.vertices
            .iter()
            .zip(&sol.sigma)
            .map(|(x, s)| format!("{},{},{}", fmt_sci(x.x), fmt_sci(x.y), fmt_sci(*s))),
    )?;
    out.number("initial_energy", e0);
    out.number("energy", sol.energy);
    out.number("penalty", sol.penalty);
    out.value("iterations", sol.iterations.to_string());
    out.number("grad_norm", sol.grad_norm);
    out.number("min_det", sol.min_det);
    out.number("measured_m", sol.measured_m);
    out.check("converged", sol.converged, fmt_sci(sol.grad_norm));
    out.check("min_det_positive", sol.min_det > 0.0, fmt_sci(sol.min_det));
    out.check("energy_not_above_start", sol.energy <= e0, "");
    out.check(
        "lipschitz",
        sol.lipschitz_ok(scfg.m_bound, cfg.get("shear.lipschitz_slack", 0.05)?),
        fmt_sci(sol.measured_m),
    );

    let m = sol.measured_m;
    let centers = cfg.points("shear.centers", &lattice(0.25))?;
    let r = cfg.get("shear.r", 0.15)?;
    let ladder = cfg.list("eps_ladder", &[-1e-2, -1e-3, -1e-4])?;
    let bound_ladder = cfg.list("bounds_eps", &[-0.4, -0.1, -0.01])?;
    let slope_tol = cfg.get("shear.slope_tol", 1e-5)?;
    let mut support = 0;
    let mut bounds_ok = true;
    let mut slopes_ok = true;
    let mut bound_rows = Vec::new();
    let mut probe_rows = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        let x0 = point(*c);
        let xi = xi_fields(&mesh, &sol.sigma, x0, m)?;
        support += xi.support_violations();
        out.csv(&format!("xi_{k}.csv"), "x,y,xi_plus,xi_minus", xi.csv_rows(&mesh))?;
        for &eps in &bound_ladder {
            for sign in [Sign::Plus, Sign::Minus] {
                let rep = check_shear_bounds(&mesh, &sol.sigma, &xi, &VariationSpec { x0, r, eps }, sign)?;
                bounds_ok &= rep.holds(0.0);
                bound_rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    fmt_sci(x0.x),
                    fmt_sci(x0.y),
                    sign.label(),
                    fmt_sci(eps),
                    fmt_sci(rep.c_prime),
                    fmt_sci(rep.min_lower_margin),
                    fmt_sci(rep.min_upper_margin)
                ));
            }
        }
        for p in shear_inequality_probe(&mesh, &sol.sigma, x0, m, r, &ladder, &scfg)? {
            slopes_ok &= p.max_slope() <= slope_tol;
            probe_rows.push(format!(
                "{},{},{},{},{},{}",
                fmt_sci(x0.x),
                fmt_sci(x0.y),
                p.sign.label(),
                fmt_sci(p.lhs),
                fmt_sci(p.rhs),
                fmt_sci(p.max_slope())
            ));
        }
    }
    out.csv("shear_bounds.csv", "x0x,x0y,sign,eps,c_prime,lower_margin,upper_margin", bound_rows)?;
    out.csv("shear_probe.csv", "x0x,x0y,sign,lhs,rhs,max_slope", probe_rows)?;
    out.value("support_violations", support.to_string());
    out.check("support_one_sided", support == 0, "");
    out.check("det_bounds", bounds_ok, "");
    out.check("probe_slopes", slopes_ok, format!("tol {slope_tol:e}"));

    let reports = xi_holder_diagnostics(&mesh, &sol.sigma, &centers.iter().map(|c| point(*c)).collect::<Vec<_>>(), m, cfg.get("holder.r_max", 0.6)?)?;
    out.csv(
        "xi_holder.csv",
        "x0x,x0y,alpha_plus,alpha_minus,gamma,holder_constant",
        reports.iter().map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt_sci(r.x0.x),
                fmt_sci(r.x0.y),
                fmt_sci(r.plus.alpha),
                fmt_sci(r.minus.alpha),
                fmt_sci(r.gamma),
                fmt_sci(r.holder_constant)
            )
        }),
    )?;
    let vanishing = reports.iter().filter(|r| r.plus.is_vanishing() && r.minus.is_vanishing()).count();
    out.value("xi_vanishing_centers", vanishing.to_string());
    out.check("xi_alpha_positive", reports.iter().all(|r| r.alpha_positive()), "");
    Ok(())
}

pub fn verify(cfg: &RunConfig, out: &mut Output) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut record = |out: &mut Output, name: &str, value: f64, tol: f64, ok: bool| {
        rows.push(format!("{name},{},{},{}", fmt_sci(value), fmt_sci(tol), if ok { "pass" } else { "fail" }));
        out.check(name, ok, fmt_sci(value));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.get("seed", 0u64)?);

    let law = twistlab::law::PaperLaw::preset();
    let rep = law.invariant_report();
    record(out, "law_joints", rep.max_joint_gap(), 1e-10, rep.max_joint_gap() <= 1e-10);
    record(out, "law_h_prime_one", rep.h_prime_at_one, 0.0, rep.h_prime_at_one == 0.0);

    let mut adj_err: f64 = 0.0;
    for _ in 0..1000 {
        let a = Mat2::from_fn(|_, _| rng.random_range(-3.0..3.0));
        let e = adjugate(&a) * a - Mat2::identity() * a.determinant();
        adj_err = adj_err.max(e.abs().max() / (1.0 + a.norm_squared()));
    }
    record(out, "adjugate_identity", adj_err, 1e-14, adj_err <= 1e-14);

    let mesh = make_mesh(Domain::Square, cfg.get("n", 32usize)?)?;
    let mut twist_err: f64 = 0.0;
    for _ in 0..100 {
        let (a, b) = loop {
            let a = Mat2::from_fn(|_, _| rng.random_range(-2.0..2.0));
            if (0.1..10.0).contains(&a.determinant()) {
                break (a, Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            }
        };
        let u = DeformationField::from_fn(&mesh, |x| a * x + b);
        let x0 = Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        let tf = twist_field(&mesh, &u, x0)?;
        let scale = a.determinant() * 2.0 * 2f64.sqrt();
        for (e, t) in tf.values.iter().enumerate() {
            if let Some(t) = t {
                let exact = a.determinant() * (mesh.centroids[e] - x0).norm();
                twist_err = twist_err.max((t - exact).abs() / scale);
            }
        }
    }
    record(out, "affine_twist", twist_err, 1e-10, twist_err <= 1e-10);

    let mut bound_margin = f64::INFINITY;
    let mut identity_residual: f64 = 0.0;
    for a in [Mat2::identity(), Mat2::new(1.5, 0.4, -0.2, 0.8)] {
        let u = DeformationField::from_fn(&mesh, |x| a * x);
        for eps in [-0.4, -0.1, -0.01] {
            let spec = VariationSpec { x0: Vec2::new(0.1, -0.05), r: 0.25, eps };
            let rep = check_variation_bounds(&mesh, &u, &spec)?;
            bound_margin = bound_margin.min(rep.min_lower_margin / rep.scale);
            identity_residual = identity_residual.max(rep.max_identity_residual);
        }
    }
    record(out, "variation_identity", identity_residual, 1e-9, identity_residual <= 1e-9);
    record(out, "variation_lower_bound", bound_margin, -1e-9, bound_margin >= -1e-9);

    for (mu, p) in [(0.5, 1.0), (0.75, 2.0), (0.9, 2.0)] {
        let g = growth_lemma_check(&GrowthLemmaCase::recursion(mu, p, 1.0 - mu, 1.0, 1.0, 40))?;
        let tag = format!("growth_mu{mu}_p{p}");
        record(out, &format!("{tag}_slack"), g.min_slack(), 0.0, g.min_slack() >= 0.0);
        let need = g.guaranteed_exponent(p) - 0.05;
        record(out, &format!("{tag}_decay"), g.decay_exponent, need, g.decay_exponent >= need);
        let pw = growth_lemma_check(&GrowthLemmaCase::power(mu, p, 1.0, 40))?;
        record(out, &format!("{tag}_power_slack"), pw.min_slack(), 0.0, pw.min_slack() >= 0.0);
    }

    let mut shear_err: f64 = 0.0;
    for _ in 0..1000 {
        let g = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-0.9..3.0));
        let lhs = shear_jacobian(g).norm_squared();
        shear_err = shear_err.max((lhs - (2.0 + 2.0 * g.y + g.norm_squared())).abs() / lhs);
    }
    record(out, "shear_quadratic_identity", shear_err, 1e-15, shear_err <= 1e-15);

    let id = DeformationField::identity(&mesh);
    let e = energy(&mesh, &id, &EnergyConfig::new(1.0, law)?);
    let expect = (2.0 + law.theta1) * 4.0;
    let err = match e {
        Extended::Finite(v) => (v - expect).abs(),
        Extended::Infinite => f64::INFINITY,
    };
    record(out, "identity_energy", err, 1e-12, err <= 1e-12);
    let dets = element_dets(&mesh, &id.nodal);
    record(out, "identity_dets", dets.iter().map(|d| (d - 1.0).abs()).fold(0.0, f64::max), 1e-14, dets.iter().all(|d| (d - 1.0).abs() <= 1e-14));

    out.csv("verify.csv", "check,value,tolerance,status", rows)?;
    Ok(())
}
