//! A GI/G/1 instance with a regeneration probability large enough to
//! simulate: `Z ~ Normal(-1, 1)`, `kappa = 2`.

use poisson_core::gig1::{
    bound_curves, build_certificate, long_run_mean, mc_validate, Gig1Model, NormalIncrement,
};
use poisson_core::split_mc::McConfig;

fn model() -> Gig1Model<NormalIncrement> {
    Gig1Model::new(NormalIncrement::new(-1.0, 1.0).unwrap(), 2.0)
}

#[test]
fn estimates_lie_inside_bounds() {
    let m = model();
    let cert = build_certificate(&m).unwrap();
    assert!(cert.lambda > 0.05, "{cert:?}");
    let v = mc_validate(&m, &cert, &[0.0, 1.0, 2.0, 5.0, 10.0], &McConfig::new(20_000, 4)).unwrap();
    assert!(v.passed(), "{v:?}");
    let oracle = long_run_mean(&m, 4_000_000, 40, 9);
    let se = (v.pi_f.std_error.powi(2) + oracle.std_error.powi(2)).sqrt();
    assert!(
        (v.pi_f.point - oracle.point).abs() <= 3.0 * se,
        "ratio {:?} vs long run {:?}",
        v.pi_f,
        oracle
    );
}

#[test]
fn hl_coefficient_dominates() {
    let cert = build_certificate(&model()).unwrap();
    let c = bound_curves(&cert, &[1.0, 10.0, 100.0]);
    assert!(c.comparison.ours_coeff < c.comparison.hl_coeff);
    assert!(c.points.iter().all(|p| p.hl_over_ours > 0.0));
}
