//! Closed-form bounds computed from certificate constants.
//!
//! Everything here is arithmetic on `(b1, b2, m, lambda)`, the Lyapunov
//! functions, and a few scalars (`phi v_i`, `inf v_i`). Finite chains supply
//! those exactly; the GI/G/1 example supplies them by quadrature.

use serde::Serialize;

use crate::drift::{CertificateBundle, PotentialCertificate};

/// The scalar constants of a drift-plus-minorization certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateConstants {
    pub b1: f64,
    pub b2: f64,
    pub lag: usize,
    pub lambda: f64,
}

impl CertificateConstants {
    pub fn from_bundle(bundle: &CertificateBundle) -> Self {
        Self {
            b1: bundle.b1(),
            b2: bundle.b2(),
            lag: bundle.lag(),
            lambda: bundle.lambda(),
        }
    }

    /// `b1 m / lambda`.
    pub fn block1(&self) -> f64 {
        self.b1 * self.lag as f64 / self.lambda
    }

    /// `b2 m / lambda`.
    pub fn block2(&self) -> f64 {
        self.b2 * self.lag as f64 / self.lambda
    }
}

/// `min{ inf v + 2 b m / lambda, phi v + b m / lambda }`.
pub fn delta(b: f64, lag: usize, lambda: f64, inf_v: f64, phi_v: f64) -> f64 {
    let block = b * lag as f64 / lambda;
    (inf_v + 2.0 * block).min(phi_v + block)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deltas {
    pub delta1: f64,
    pub delta2: f64,
}

pub fn delta_bounds(
    c: &CertificateConstants,
    inf_v1: f64,
    phi_v1: f64,
    inf_v2: f64,
    phi_v2: f64,
) -> Deltas {
    Deltas {
        delta1: delta(c.b1, c.lag, c.lambda, inf_v1, phi_v1),
        delta2: delta(c.b2, c.lag, c.lambda, inf_v2, phi_v2),
    }
}

/// Two-sided and absolute envelopes for `g*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionEnvelope {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub abs: Vec<f64>,
}

/// `upper = v1 + b1 m / lambda`, `lower = -b1 (v2 + b2 m / lambda)`.
pub fn thm2_bounds(c: &CertificateConstants, v1: &[f64], v2: &[f64]) -> SolutionEnvelope {
    let upper: Vec<f64> = v1.iter().map(|v| v + c.block1()).collect();
    let lower: Vec<f64> = v2.iter().map(|v| -c.b1 * (v + c.block2())).collect();
    let abs = upper
        .iter()
        .zip(&lower)
        .map(|(u, l)| u.max(-l))
        .collect();
    SolutionEnvelope { upper, lower, abs }
}

/// Uniform-in-`n` bound on `E_x f(X_n)`: `v1 + b1 m / lambda + delta1`.
pub fn prop3_bound(c: &CertificateConstants, v1: &[f64], delta1: f64) -> Vec<f64> {
    v1.iter().map(|v| v + c.block1() + delta1).collect()
}

/// Bounds on `g~ - g*` for a chain of period `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
    pub abs: f64,
}

pub fn thm3_gap(c: &CertificateConstants, b3: f64, b4: f64, period: usize) -> GapBounds {
    let p = period as f64;
    let upper = c.b1 * (p * b4 + c.block2());
    let below = p * b3 + c.block1();
    GapBounds {
        lower: -below,
        upper,
        abs: upper.max(below),
    }
}

/// Asymptotic coefficients (multiplying `kappa x^2 / (2 |E Z|)`) of the
/// competing `m = 1` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HlComparison {
    /// `a = 1 + max{0, b1 / lambda - phi v1}`.
    pub a: f64,
    /// `a (1 + b1)`.
    pub hl_coeff: f64,
    /// `max{1, b1}`.
    pub ours_coeff: f64,
}

pub fn hl_comparison(b1: f64, lambda: f64, phi_v1: f64) -> HlComparison {
    let a = 1.0 + (b1 / lambda - phi_v1).max(0.0);
    HlComparison {
        a,
        hl_coeff: a * (1.0 + b1),
        ours_coeff: b1.max(1.0),
    }
}

/// Every bound available for a finite-chain bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub constants: CertificateConstants,
    pub phi_v1: f64,
    pub phi_v2: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// `v1 + b1 m / lambda`: bounds `E_x sum_{j<tau} f(X_j)`.
    pub cycle_f_bound: Vec<f64>,
    /// `v2 + b2 m / lambda`: bounds `E_x tau`.
    pub cycle_length_bound: Vec<f64>,
    pub thm2: SolutionEnvelope,
    pub prop3: Vec<f64>,
    pub thm3: Option<GapBounds>,
    /// Present when `m = 1`.
    pub hl: Option<HlComparison>,
}

pub fn bound_report(
    bundle: &CertificateBundle,
    potential: Option<(&PotentialCertificate, usize)>,
) -> BoundReport {
    let c = CertificateConstants::from_bundle(bundle);
    let (v1, v2) = (bundle.v1(), bundle.v2());
    let phi_v1 = bundle.phi().expect(v1);
    let phi_v2 = bundle.phi().expect(v2);
    let d = delta_bounds(&c, v1.min(), phi_v1, v2.min(), phi_v2);
    BoundReport {
        constants: c,
        phi_v1,
        phi_v2,
        delta1: d.delta1,
        delta2: d.delta2,
        cycle_f_bound: v1.iter().map(|v| v + c.block1()).collect(),
        cycle_length_bound: v2.iter().map(|v| v + c.block2()).collect(),
        thm2: thm2_bounds(&c, v1, v2),
        prop3: prop3_bound(&c, v1, d.delta1),
        thm3: potential.map(|(pot, p)| thm3_gap(&c, pot.b3(), pot.b4(), p)),
        hl: (c.lag == 1).then(|| hl_comparison(c.b1, c.lambda, phi_v1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn running() -> CertificateConstants {
        CertificateConstants {
            b1: 2.5,
            b2: 3.0,
            lag: 1,
            lambda: 1.0,
        }
    }

    #[test]
    fn delta_examples() {
        let d = delta_bounds(&running(), 1.0, 2.5, 1.0, 3.0);
        assert_eq!(d.delta1, 5.0);
        assert_eq!(d.delta2, 6.0);
        assert_eq!(delta(1.0, 1, 1.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn thm2_examples() {
        let e = thm2_bounds(&running(), &[1.0, 4.0], &[1.0, 5.0]);
        assert_eq!(e.upper, vec![3.5, 6.5]);
        assert_eq!(e.lower, vec![-10.0, -20.0]);
        assert_eq!(e.abs, vec![10.0, 20.0]);
        assert!(e.lower[0] <= 2.0 / 3.0 && 2.0 / 3.0 <= e.upper[0]);
        assert!(e.lower[1] <= -2.0 / 3.0 && -2.0 / 3.0 <= e.upper[1]);

        let c = CertificateConstants {
            b1: 2.0,
            b2: 3.0,
            lag: 2,
            lambda: 0.5,
        };
        let e = thm2_bounds(&c, &[0.0], &[0.0]);
        assert_eq!(e.upper, vec![8.0]);
        assert_eq!(e.lower, vec![-24.0]);
    }

    #[test]
    fn prop3_examples() {
        assert_eq!(prop3_bound(&running(), &[1.0, 4.0], 5.0), vec![8.5, 11.5]);
        assert_eq!(prop3_bound(&running(), &[0.0], 5.0), vec![7.5]);
    }

    #[test]
    fn thm3_examples() {
        let g = thm3_gap(&running(), 9.0, 11.0, 1);
        assert_eq!(g.abs, 35.0);
        assert_eq!(g.lower, -11.5);
        assert_eq!(g.upper, 35.0);
        assert!(2.0 / 9.0 <= g.abs);
        let g2 = thm3_gap(&running(), 9.0, 11.0, 2);
        assert_eq!(g2.lower, -(18.0 + 2.5));
        assert_eq!(g2.upper, 2.5 * (22.0 + 3.0));
    }

    #[test]
    fn hl_examples() {
        let h = hl_comparison(2.0, 0.5, 1.0);
        assert_eq!((h.a, h.hl_coeff, h.ours_coeff), (4.0, 12.0, 2.0));
        let h = hl_comparison(0.5, 1.0, 2.0);
        assert_eq!(h.a, 1.0);
        assert_eq!(h.hl_coeff, 1.5);
        assert!(h.hl_coeff > h.ours_coeff);
    }

    proptest! {
        #[test]
        fn delta_is_monotone(
            b in 1e-3f64..10.0,
            db in 0.0f64..5.0,
            lag in 1usize..5,
            lambda in 0.05f64..1.0,
            shrink in 0.1f64..1.0,
            inf_v in 0.0f64..5.0,
            extra in 0.0f64..20.0,
        ) {
            let phi_v = inf_v + extra;
            let base = delta(b, lag, lambda, inf_v, phi_v);
            prop_assert!(delta(b + db, lag, lambda, inf_v, phi_v) >= base);
            prop_assert!(delta(b, lag + 1, lambda, inf_v, phi_v) >= base);
            prop_assert!(delta(b, lag, lambda * shrink, inf_v, phi_v) >= base);
        }

        #[test]
        fn ours_never_exceeds_hl(b1 in 1e-6f64..100.0, lambda in 1e-6f64..1.0, phi_v1 in 0.0f64..100.0) {
            let h = hl_comparison(b1, lambda, phi_v1);
            prop_assert!(h.a >= 1.0);
            prop_assert!(h.ours_coeff <= h.hl_coeff);
        }
    }
}
