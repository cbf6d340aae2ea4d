use std::fmt::Write as _;

use poisson_core::bounds::bound_report;
use poisson_core::gig1::{
    bound_curves, build_certificate, default_curve_grid, mc_validate, spot_check, BoundCurves,
    Gig1Model, NormalIncrement, QuadratureConfig,
};
use poisson_core::potential::{truncated_potential, verify_thm3};
use poisson_core::split_exact::{poisson_residual, solve_exact, Regeneration};
use poisson_core::split_mc::{cycle_stream, estimate_from_start, estimate_pif, FiniteSampler, McConfig};
use serde::{Deserialize, Serialize};

use crate::report::{Inputs, Report};
use crate::spec::{ChainSpec, StateRef};

pub const POISSON_TOL: f64 = 1e-9;
pub const NU_TOL: f64 = 1e-10;
pub const SLACK_TOL: f64 = 1e-10;
pub const CLASS_TOL: f64 = 1e-8;
pub const MARGINAL_HORIZON: usize = 200;

fn spec_inputs(spec: &ChainSpec) -> Inputs {
    Inputs {
        spec: Some(spec.clone()),
        ..Inputs::default()
    }
}

fn min_slack(upper: &[f64], values: &[f64]) -> f64 {
    upper
        .iter()
        .zip(values)
        .map(|(u, v)| u - v)
        .fold(f64::INFINITY, f64::min)
}

pub fn verify(spec: &ChainSpec) -> Report {
    let mut r = Report::new("verify", spec_inputs(spec));
    let outcome = (|| {
        let chain = spec.chain()?;
        let bundle = match spec.bundle(&chain) {
            Ok(b) => b,
            Err(e) => {
                r.check("certificates", false, e.to_string());
                return Err(e);
            }
        };
        r.result("b1", &bundle.b1())?;
        r.result("b2", &bundle.b2())?;
        r.result("lambda", &bundle.lambda())?;
        r.result("lag", &bundle.lag())?;
        r.result("phi", bundle.phi())?;
        r.result("small_set", bundle.small_set())?;
        r.result("drift1_residual", &bundle.drift1.residual(&chain))?;
        r.result("drift2_residual", &bundle.drift2.residual(&chain))?;
        r.result("minorization_slack", &bundle.small.slack(&chain))?;
        r.check("certificates", true, "drift and minorization verified".into());
        if spec.has_potential_functions() {
            let pot = spec.potential(&chain, &bundle)?.expect("v3 and v4 present");
            r.result("b3", &pot.b3())?;
            r.result("b4", &pot.b4())?;
            r.check("potential certificates", true, "drift for v3, v4 verified".into());
        }
        let cyc = chain.cyclic_decomposition()?;
        r.result("period", &cyc.period)?;
        Ok(())
    })();
    r.finish(outcome)
}

pub fn solve(spec: &ChainSpec) -> Report {
    let mut r = Report::new("solve", spec_inputs(spec));
    let outcome = (|| {
        let chain = spec.chain()?;
        let bundle = spec.bundle(&chain)?;
        let pot = spec.potential(&chain, &bundle)?;
        let period = chain.cyclic_decomposition()?.period;
        let exact = solve_exact(&chain, &bundle)?;
        let bounds = bound_report(&bundle, pot.as_ref().map(|p| (p, period)));
        let mut h = bundle.f().values().to_vec();
        let mut marginal_max = h.clone();
        for _ in 0..MARGINAL_HORIZON {
            h = chain.apply(&h);
            marginal_max.iter_mut().zip(&h).for_each(|(m, v)| *m = m.max(*v));
        }

        r.result("exact", &exact)?;
        r.result("bounds", &bounds)?;
        r.result("period", &period)?;
        r.result("marginal_max", &marginal_max)?;

        r.check(
            "poisson_residual",
            exact.poisson_residual <= POISSON_TOL,
            format!("{:e} <= {POISSON_TOL:e}", exact.poisson_residual),
        );
        let nu_gap = exact.nu.l1_distance(&exact.pi);
        r.check("occupation_equals_stationary", nu_gap <= NU_TOL, format!("{nu_gap:e} <= {NU_TOL:e}"));
        let cycle = min_slack(&bounds.cycle_f_bound, &exact.cycle_f.per_state)
            .min(min_slack(&bounds.cycle_length_bound, &exact.cycle_length.per_state))
            .min(bounds.delta1 - exact.cycle_f.at_phi)
            .min(bounds.delta2 - exact.cycle_length.at_phi);
        r.check("cycle_bounds", cycle >= -SLACK_TOL, format!("min slack {cycle:e}"));
        let g = exact.g_star.values();
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let lower: Vec<f64> = bounds.thm2.lower.iter().map(|v| -v).collect();
        let abs: Vec<f64> = g.iter().map(|v| v.abs()).collect();
        let envelope = min_slack(&bounds.thm2.upper, g)
            .min(min_slack(&lower, &neg))
            .min(min_slack(&bounds.thm2.abs, &abs));
        r.check("solution_envelope", envelope >= -SLACK_TOL, format!("min slack {envelope:e}"));
        let marginal = min_slack(&bounds.prop3, &marginal_max);
        r.check(
            "marginal_bound",
            marginal >= -SLACK_TOL,
            format!("min slack over n <= {MARGINAL_HORIZON}: {marginal:e}"),
        );
        if bundle.lag() == 1 {
            r.check(
                "phi_normalization",
                exact.phi_g_star.abs() <= SLACK_TOL,
                format!("|phi g*| = {:e}", exact.phi_g_star.abs()),
            );
        }
        Ok(())
    })();
    r.finish(outcome)
}

pub fn potential(spec: &ChainSpec, tol: f64, max_blocks: usize) -> Report {
    let mut inputs = spec_inputs(spec);
    inputs.tol = Some(tol);
    inputs.max_blocks = Some(max_blocks);
    let mut r = Report::new("potential", inputs);
    let outcome = (|| {
        let chain = spec.chain()?;
        let bundle = spec.bundle(&chain)?;
        let cyc = chain.cyclic_decomposition()?;
        let exact = solve_exact(&chain, &bundle)?;
        let result = truncated_potential(&chain, bundle.f(), cyc.period, tol, max_blocks)?
            .with_gap(&exact.g_star);
        let gap = result.gap.clone().unwrap_or_default();
        let spread = cyc
            .classes
            .iter()
            .map(|class| {
                let (lo, hi) = class.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(gap[x]), hi.max(gap[x]))
                });
                hi - lo
            })
            .fold(0.0, f64::max);
        let residual = poisson_residual(&chain, &result.g_tilde, &exact.f_centered);

        r.result("potential", &result)?;
        r.result("g_star", &exact.g_star)?;
        r.result("classes", &cyc.classes)?;
        r.result("gap_class_spread", &spread)?;
        r.result("poisson_residual", &residual)?;

        r.check(
            "converged",
            result.residual <= tol,
            format!("{} blocks, block residual {:e}", result.blocks, result.residual),
        );
        r.check("gap_constant_per_class", spread <= CLASS_TOL, format!("spread {spread:e}"));
        if cyc.period == 1 {
            r.check(
                "solves_poisson",
                residual <= CLASS_TOL,
                format!("{residual:e} <= {CLASS_TOL:e}"),
            );
        }
        if let Some(pot) = spec.potential(&chain, &bundle)? {
            let check = verify_thm3(&bundle, &pot, &exact.g_star, &result);
            match check {
                Ok(c) => {
                    r.result("gap_bounds", &c)?;
                    r.check("gap_bounds", true, format!("|gap| <= {}", c.bounds.abs));
                }
                Err(e) => r.check("gap_bounds", false, e.to_string()),
            }
        }
        Ok(())
    })();
    r.finish(outcome)
}

pub fn simulate(spec: &ChainSpec, x0: &str, cfg: &McConfig) -> Report {
    let mut inputs = spec_inputs(spec);
    inputs.x0 = Some(x0.into());
    inputs.cycles = Some(cfg.cycles);
    inputs.seed = Some(cfg.seed);
    inputs.workers = Some(cfg.workers);
    let mut r = Report::new("simulate", inputs);
    let outcome = (|| {
        let chain = spec.chain()?;
        let bundle = spec.bundle(&chain)?;
        let start = spec.resolve(&StateRef::Label(x0.into()))?;
        let regen = Regeneration::new(&chain, &bundle.small)?;
        let sc = FiniteSampler::from_regeneration(&regen, bundle.f())?;
        let exact = solve_exact(&chain, &bundle)?;
        let est = estimate_from_start(&sc, start, exact.pi_f, cfg)?;
        let pif = estimate_pif(&sc, cfg)?;

        r.result("start", &start)?;
        r.result("g_star", &est.g_star)?;
        r.result("cycle_length", &est.cycle_length)?;
        r.result("pi_f", &pif)?;
        r.result("exact_g_star", &exact.g_star[start])?;
        r.result("exact_cycle_length", &exact.cycle_length.per_state[start])?;
        r.result("exact_pi_f", &exact.pi_f)?;

        for (name, e, target) in [
            ("g_star_within_3se", est.g_star, exact.g_star[start]),
            ("cycle_length_within_3se", est.cycle_length, exact.cycle_length.per_state[start]),
            ("pi_f_within_3se", pif, exact.pi_f),
        ] {
            r.check(
                name,
                e.within(target, 3.0),
                format!("{} ± {} vs {}", e.point, e.std_error, target),
            );
        }
        Ok(())
    })();
    r.finish(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gig1Params {
    pub mean: f64,
    pub sd: f64,
    pub kappa: f64,
    pub step: f64,
    pub x0: Option<f64>,
    pub curve_points: usize,
    /// Curves run out to where `c1 x^2` is this multiple of `b1 / lambda`.
    pub curve_margin: f64,
}

impl Default for Gig1Params {
    fn default() -> Self {
        Self {
            mean: -0.5,
            sd: 1.0,
            kappa: 1.1,
            step: QuadratureConfig::default().step,
            x0: None,
            curve_points: 60,
            curve_margin: 100.0,
        }
    }
}

/// The certificate without its sampling table.
#[derive(Debug, Clone, PartialEq, Serialize)]
struct CertificateSummary {
    kappa: f64,
    c1: f64,
    x0: f64,
    atom: f64,
    lambda: f64,
    b1: f64,
    b2: f64,
    phi_v1: f64,
    inf_v1: f64,
    horizon: f64,
    step: f64,
}

pub const GIG1_X_LIST: [f64; 5] = [0.0, 1.0, 2.0, 5.0, 10.0];

/// Runs the GI/G/1 pipeline; Monte Carlo only when `cfg.cycles > 0`.
pub fn gig1(params: &Gig1Params, cfg: &McConfig) -> (Report, Option<BoundCurves>) {
    let inputs = Inputs {
        gig1: Some(params.clone()),
        cycles: Some(cfg.cycles),
        seed: Some(cfg.seed),
        workers: Some(cfg.workers),
        ..Inputs::default()
    };
    let mut r = Report::new("gig1", inputs);
    let mut curves = None;
    let outcome = (|| {
        let mut model = Gig1Model::new(NormalIncrement::new(params.mean, params.sd)?, params.kappa)
            .with_step(params.step);
        model.x0 = params.x0;
        let cert = build_certificate(&model)?;
        r.result(
            "certificate",
            &CertificateSummary {
                kappa: cert.kappa,
                c1: cert.c1,
                x0: cert.x0,
                atom: cert.atom,
                lambda: cert.lambda,
                b1: cert.b1,
                b2: cert.b2,
                phi_v1: cert.phi_v1,
                inf_v1: cert.inf_v1,
                horizon: cert.horizon,
                step: cert.step,
            },
        )?;
        let spot = spot_check(&model, &cert, 100, &mut cycle_stream(cfg.seed, u64::MAX - 1));
        r.check(
            "drift_spot_check",
            spot.passed(),
            format!("worst excess {:e}, tolerance {:e}", spot.worst, spot.tolerance),
        );
        let c = bound_curves(&cert, &default_curve_grid(&cert, params.curve_points, params.curve_margin));
        r.result("comparison", &c.comparison)?;
        r.check(
            "ours_tighter_asymptotically",
            c.comparison.ours_coeff < c.comparison.hl_coeff,
            format!("{} < {}", c.comparison.ours_coeff, c.comparison.hl_coeff),
        );
        if cfg.cycles > 0 {
            let v = mc_validate(&model, &cert, &GIG1_X_LIST, cfg)?;
            r.result("monte_carlo", &v)?;
            r.check(
                "estimates_inside_bounds",
                v.passed(),
                format!("{} of {} starts inside", v.points.iter().filter(|p| p.inside).count(), v.points.len()),
            );
        }
        curves = Some(c);
        Ok(())
    })();
    (r.finish(outcome), curves)
}

/// Whitespace-separated columns with a `#` header.
pub fn curve_table(curves: &BoundCurves) -> String {
    let mut out = String::from("# x ours_upper ours_lower ours_abs hl ours_ratio hl_over_ours\n");
    for p in &curves.points {
        let _ = writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            p.x, p.ours_upper, p.ours_lower, p.ours_abs, p.hl, p.ours_ratio, p.hl_over_ours
        );
    }
    out
}
