//! Truncated potential `g~(x) = lim_n sum_{i < n p} E_x f_c(X_i)` on finite
//! chains, and the check of its distance to `g*`.
//!
//! Partial sums are accumulated in blocks of `p` steps. Single-step partial
//! sums oscillate on periodic chains, so convergence is tested on the block
//! increments.

use serde::Serialize;

use crate::bounds::{thm3_gap, CertificateConstants, GapBounds};
use crate::chain::{FiniteChain, StateFunction};
use crate::drift::{CertificateBundle, PotentialCertificate};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_BLOCKS: usize = 1_000_000;

/// Slack allowed when comparing an exact gap against its bounds.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialResult {
    pub g_tilde: StateFunction,
    pub period: usize,
    /// Number of `p`-step blocks summed.
    pub blocks: usize,
    /// Sup norm of the last block increment.
    pub residual: f64,
    /// `g~ - g*`, once a canonical solution is attached.
    pub gap: Option<Vec<f64>>,
}

impl PotentialResult {
    pub fn with_gap(mut self, g_star: &[f64]) -> Self {
        self.gap = Some(
            self.g_tilde
                .iter()
                .zip(g_star)
                .map(|(a, b)| a - b)
                .collect(),
        );
        self
    }
}

pub fn truncated_potential(
    chain: &FiniteChain,
    f: &[f64],
    period: usize,
    tol: f64,
    max_blocks: usize,
) -> Result<PotentialResult> {
    if period == 0 {
        return Err(Error::InvalidParameter("period must be at least 1".into()));
    }
    let pi = chain.stationary()?;
    let pi_f = pi.expect(f);
    let n = chain.n();
    let mut term: Vec<f64> = f.iter().map(|v| v - pi_f).collect();
    let mut sum = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for blocks in 1..=max_blocks {
        let mut block = vec![0.0; n];
        for _ in 0..period {
            block.iter_mut().zip(&term).for_each(|(b, t)| *b += t);
            term = chain.apply(&term);
        }
        sum.iter_mut().zip(&block).for_each(|(s, b)| *s += b);
        residual = block.iter().fold(0.0, |acc, b| acc.max(b.abs()));
        if residual <= tol {
            return Ok(PotentialResult {
                g_tilde: StateFunction::new(sum)?,
                period,
                blocks,
                residual,
                gap: None,
            });
        }
    }
    Err(Error::NoConvergence {
        max_blocks,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thm3Check {
    pub bounds: GapBounds,
    pub gap: Vec<f64>,
    /// `gap - lower`, per state.
    pub slack_lower: Vec<f64>,
    /// `upper - gap`, per state.
    pub slack_upper: Vec<f64>,
    /// `abs - |gap|`, per state.
    pub slack_abs: Vec<f64>,
}

/// Checks `lower <= g~ - g* <= upper` and the absolute form per state.
pub fn verify_thm3(
    bundle: &CertificateBundle,
    potential: &PotentialCertificate,
    g_star: &[f64],
    result: &PotentialResult,
) -> Result<Thm3Check> {
    let c = CertificateConstants::from_bundle(bundle);
    let bounds = thm3_gap(&c, potential.b3(), potential.b4(), result.period);
    let gap: Vec<f64> = result
        .g_tilde
        .iter()
        .zip(g_star)
        .map(|(a, b)| a - b)
        .collect();
    for (state, &g) in gap.iter().enumerate() {
        if g < bounds.lower - GAP_TOL || g > bounds.upper + GAP_TOL || g.abs() > bounds.abs + GAP_TOL
        {
            return Err(Error::BoundViolation {
                state,
                gap: g,
                lower: bounds.lower,
                upper: bounds.upper,
            });
        }
    }
    Ok(Thm3Check {
        slack_lower: gap.iter().map(|g| g - bounds.lower).collect(),
        slack_upper: gap.iter().map(|g| bounds.upper - g).collect(),
        slack_abs: gap.iter().map(|g| bounds.abs - g.abs()).collect(),
        bounds,
        gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StateSet;
    use crate::drift::{verify_bundle, verify_potential};
    use crate::split_exact::canonical_solution;

    fn running() -> FiniteChain {
        FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap()
    }

    fn brute_force(chain: &FiniteChain, f: &[f64], terms: usize) -> Vec<f64> {
        let pi_f = chain.stationary().unwrap().expect(f);
        let mut term: Vec<f64> = f.iter().map(|v| v - pi_f).collect();
        let mut sum = vec![0.0; f.len()];
        for _ in 0..terms {
            sum.iter_mut().zip(&term).for_each(|(s, t)| *s += t);
            term = chain.apply(&term);
        }
        sum
    }

    #[test]
    fn running_example_potential() {
        let r = truncated_potential(&running(), &[1.0, 0.0], 1, DEFAULT_TOL, DEFAULT_MAX_BLOCKS)
            .unwrap();
        assert!((r.g_tilde[0] - 8.0 / 9.0).abs() < 1e-10);
        assert!((r.g_tilde[1] + 4.0 / 9.0).abs() < 1e-10);
        let brute = brute_force(&running(), &[1.0, 0.0], 200);
        assert!((brute[0] - 8.0 / 9.0).abs() < 1e-14);
        assert!(r.residual <= DEFAULT_TOL);
    }

    #[test]
    fn constant_charge_has_zero_potential() {
        let r = truncated_potential(&running(), &[2.0, 2.0], 1, DEFAULT_TOL, 10).unwrap();
        assert!(r.g_tilde.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(r.blocks, 1);
    }

    #[test]
    fn periodic_block_sums() {
        let flip = FiniteChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = truncated_potential(&flip, &[1.0, 0.0], 2, DEFAULT_TOL, 10).unwrap();
        assert_eq!(r.g_tilde.values(), &[0.0, 0.0]);

        let star = FiniteChain::new(vec![
            vec![0.0, 0.5, 0.5],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let f = [0.0, 1.0, 0.0];
        let r = truncated_potential(&star, &f, 2, DEFAULT_TOL, 10).unwrap();
        let brute = brute_force(&star, &f, 2 * 5);
        for (a, b) in r.g_tilde.iter().zip(&brute) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.g_tilde[1] - 0.5).abs() < 1e-15);
        assert!((r.g_tilde[2] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn periodic_potential_misses_poisson_by_class_limit() {
        // (P - I) g~ = P^{np} f_c - f_c, and P^{np} f_c tends to a
        // per-class constant that is nonzero unless each class has mean pi f.
        let star = FiniteChain::new(vec![
            vec![0.0, 0.5, 0.5],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let f = [0.0, 1.0, 0.0];
        let r = truncated_potential(&star, &f, 2, DEFAULT_TOL, 10).unwrap();
        let fc: Vec<f64> = f.iter().map(|v| v - 0.25).collect();
        let mut limit = fc.clone();
        for _ in 0..20 {
            limit = star.apply(&limit);
        }
        let pg = star.apply(&r.g_tilde);
        for x in 0..3 {
            let lhs = pg[x] - r.g_tilde[x] + fc[x];
            assert!((lhs - limit[x]).abs() < 1e-15);
        }
        assert!((limit[0] + 0.25).abs() < 1e-15 && (limit[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reports_non_convergence() {
        let flip = FiniteChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        // Wrong period: single steps oscillate forever.
        assert!(matches!(
            truncated_potential(&flip, &[1.0, 0.0], 1, DEFAULT_TOL, 50),
            Err(Error::NoConvergence { max_blocks: 50, .. })
        ));
    }

    #[test]
    fn running_example_thm3() {
        let p = running();
        let sf = |v: &[f64]| StateFunction::nonnegative(v.to_vec()).unwrap();
        let b = verify_bundle(
            &p,
            &sf(&[1.0, 0.0]),
            &sf(&[1.0, 4.0]),
            &sf(&[1.0, 5.0]),
            &StateSet::new(2, &[0]).unwrap(),
            1,
            None,
        )
        .unwrap();
        let pot = verify_potential(&p, &b, &sf(&[1.0, 17.0]), &sf(&[1.0, 21.0])).unwrap();
        let g = canonical_solution(&p, &b, b.f()).unwrap();
        let r = truncated_potential(&p, b.f(), 1, DEFAULT_TOL, DEFAULT_MAX_BLOCKS)
            .unwrap()
            .with_gap(&g);
        for gap in r.gap.as_ref().unwrap() {
            assert!((gap - 2.0 / 9.0).abs() < 1e-9);
        }
        let check = verify_thm3(&b, &pot, &g, &r).unwrap();
        assert_eq!(check.bounds.abs, 35.0);
        assert!(check.slack_abs.iter().all(|s| *s > 34.0));

        let constant = StateFunction::constant(2, 1.0);
        let r0 = truncated_potential(&p, &constant, 1, DEFAULT_TOL, 10).unwrap();
        let g0 = canonical_solution(&p, &b, &constant).unwrap();
        let c0 = verify_thm3(&b, &pot, &g0, &r0).unwrap();
        assert!(c0.gap.iter().all(|g| g.abs() < 1e-14));
    }

    #[test]
    fn flagged_gap_outside_bounds() {
        let p = running();
        let sf = |v: &[f64]| StateFunction::nonnegative(v.to_vec()).unwrap();
        let b = verify_bundle(
            &p,
            &sf(&[1.0, 0.0]),
            &sf(&[1.0, 4.0]),
            &sf(&[1.0, 5.0]),
            &StateSet::new(2, &[0]).unwrap(),
            1,
            None,
        )
        .unwrap();
        let pot = verify_potential(&p, &b, &sf(&[1.0, 17.0]), &sf(&[1.0, 21.0])).unwrap();
        let r = truncated_potential(&p, b.f(), 1, DEFAULT_TOL, DEFAULT_MAX_BLOCKS).unwrap();
        let far = vec![-100.0, -100.0];
        assert!(matches!(
            verify_thm3(&b, &pot, &far, &r),
            Err(Error::BoundViolation { .. })
        ));
    }
}
