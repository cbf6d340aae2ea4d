//! Drift and minorization certificates on finite chains.
//!
//! A drift certificate records `(P v)(x) <= v(x) - f(x) + b 1_C(x)` with the
//! smallest feasible `b`. A small-set certificate records
//! `P^m(x, .) >= lambda phi(.)` for `x` in `C`; [`minorize`] builds the one
//! with the largest `lambda` for a given `(C, m)`.

use serde::Serialize;

use crate::chain::{Distribution, FiniteChain, StateFunction, StateSet};
use crate::error::{Error, Result};

/// Absolute tolerance for drift and minorization inequalities.
pub const DRIFT_TOL: f64 = 1e-12;

/// Floor applied to a drift constant whose minimal value is not positive.
pub const MIN_DRIFT_CONSTANT: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    pub v: StateFunction,
    pub f: StateFunction,
    pub b: f64,
    pub small_set: StateSet,
}

impl DriftCertificate {
    /// `(P v)(x) - v(x) + f(x) - b 1_C(x)`; non-positive up to tolerance.
    pub fn residual(&self, chain: &FiniteChain) -> Vec<f64> {
        let pv = chain.apply(&self.v);
        (0..chain.n())
            .map(|x| {
                let s = if self.small_set.contains(x) { self.b } else { 0.0 };
                pv[x] - self.v[x] + self.f[x] - s
            })
            .collect()
    }
}

fn check_len(chain: &FiniteChain, h: &[f64]) -> Result<()> {
    if h.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            found: h.len(),
        });
    }
    Ok(())
}

fn check_nonnegative(h: &StateFunction) -> Result<()> {
    match h.iter().position(|&v| v < 0.0) {
        Some(state) => Err(Error::NegativityViolation {
            state,
            value: h[state],
        }),
        None => Ok(()),
    }
}

/// Minimal `b` such that `(P v) <= v - f + b 1_C`, provided the inequality
/// already holds off `C`.
pub fn verify_drift(
    chain: &FiniteChain,
    v: &StateFunction,
    f: &StateFunction,
    small_set: &StateSet,
) -> Result<DriftCertificate> {
    check_len(chain, v)?;
    check_len(chain, f)?;
    check_nonnegative(v)?;
    check_nonnegative(f)?;
    if small_set.is_empty() {
        return Err(Error::EmptySmallSet);
    }
    let pv = chain.apply(v);
    let mut violations = Vec::new();
    let mut b = f64::NEG_INFINITY;
    for x in 0..chain.n() {
        let excess = pv[x] - v[x] + f[x];
        if small_set.contains(x) {
            b = b.max(excess);
        } else if excess > DRIFT_TOL {
            violations.push(x);
        }
    }
    if !violations.is_empty() {
        return Err(Error::DriftViolation { states: violations });
    }
    Ok(DriftCertificate {
        v: v.clone(),
        f: f.clone(),
        b: if b > 0.0 { b } else { MIN_DRIFT_CONSTANT },
        small_set: small_set.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallSetCertificate {
    pub small_set: StateSet,
    pub lag: usize,
    pub lambda: f64,
    pub phi: Distribution,
}

impl SmallSetCertificate {
    /// `min_{x in C} P^m(x, y) - lambda phi(y)`, per `y`.
    pub fn slack(&self, chain: &FiniteChain) -> Vec<f64> {
        let pm = chain.kernel_power(self.lag);
        (0..chain.n())
            .map(|y| {
                let row_min = self
                    .small_set
                    .members()
                    .iter()
                    .map(|&x| pm[(x, y)])
                    .fold(f64::INFINITY, f64::min);
                row_min - self.lambda * self.phi[y]
            })
            .collect()
    }
}

/// Maximal minorization of `C` at lag `m`: `lambda phi(y) = min_{x in C} P^m(x, y)`.
pub fn minorize(chain: &FiniteChain, small_set: &StateSet, lag: usize) -> Result<SmallSetCertificate> {
    if small_set.is_empty() {
        return Err(Error::EmptySmallSet);
    }
    if lag == 0 {
        return Err(Error::InvalidParameter("lag m must be at least 1".into()));
    }
    let pm = chain.kernel_power(lag);
    let floor: Vec<f64> = (0..chain.n())
        .map(|y| {
            small_set
                .members()
                .iter()
                .map(|&x| pm[(x, y)])
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    let lambda: f64 = floor.iter().sum();
    if !(lambda > 0.0) {
        return Err(Error::EmptyMinorization { lag });
    }
    let phi = Distribution::from_weights(floor)?;
    Ok(SmallSetCertificate {
        small_set: small_set.clone(),
        lag,
        lambda: lambda.min(1.0),
        phi,
    })
}

/// Checks a user-supplied `(lambda, phi)` for `(C, m)`.
pub fn check_minorization(
    chain: &FiniteChain,
    small_set: &StateSet,
    lag: usize,
    lambda: f64,
    phi: &Distribution,
) -> Result<SmallSetCertificate> {
    if small_set.is_empty() {
        return Err(Error::EmptySmallSet);
    }
    if lag == 0 {
        return Err(Error::InvalidParameter("lag m must be at least 1".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in (0, 1], got {lambda}"
        )));
    }
    check_len(chain, phi)?;
    let pm = chain.kernel_power(lag);
    for &x in small_set.members() {
        for y in 0..chain.n() {
            let excess = lambda * phi[y] - pm[(x, y)];
            if excess > DRIFT_TOL {
                return Err(Error::MinorizationViolation {
                    state: x,
                    target: y,
                    excess,
                });
            }
        }
    }
    Ok(SmallSetCertificate {
        small_set: small_set.clone(),
        lag,
        lambda,
        phi: phi.clone(),
    })
}

/// The full drift-plus-minorization certificate for a charge `f`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateBundle {
    /// Drift for `f` with Lyapunov function `v1`.
    pub drift1: DriftCertificate,
    /// Drift for the constant charge `e = 1` with Lyapunov function `v2`.
    pub drift2: DriftCertificate,
    pub small: SmallSetCertificate,
}

impl CertificateBundle {
    pub fn new(
        drift1: DriftCertificate,
        drift2: DriftCertificate,
        small: SmallSetCertificate,
    ) -> Result<Self> {
        if drift1.small_set != small.small_set || drift2.small_set != small.small_set {
            return Err(Error::SmallSetMismatch);
        }
        if drift2.f.iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidParameter(
                "second drift certificate must use the constant charge 1".into(),
            ));
        }
        Ok(Self {
            drift1,
            drift2,
            small,
        })
    }

    pub fn f(&self) -> &StateFunction {
        &self.drift1.f
    }
    pub fn v1(&self) -> &StateFunction {
        &self.drift1.v
    }
    pub fn v2(&self) -> &StateFunction {
        &self.drift2.v
    }
    pub fn b1(&self) -> f64 {
        self.drift1.b
    }
    pub fn b2(&self) -> f64 {
        self.drift2.b
    }
    pub fn lambda(&self) -> f64 {
        self.small.lambda
    }
    pub fn lag(&self) -> usize {
        self.small.lag
    }
    pub fn phi(&self) -> &Distribution {
        &self.small.phi
    }
    pub fn small_set(&self) -> &StateSet {
        &self.small.small_set
    }
}

/// Builds and checks the bundle. Without `(lambda, phi)` the maximal
/// minorization from [`minorize`] is used.
pub fn verify_bundle(
    chain: &FiniteChain,
    f: &StateFunction,
    v1: &StateFunction,
    v2: &StateFunction,
    small_set: &StateSet,
    lag: usize,
    minorization: Option<(f64, &Distribution)>,
) -> Result<CertificateBundle> {
    let drift1 = verify_drift(chain, v1, f, small_set)?;
    let e = StateFunction::constant(chain.n(), 1.0);
    let drift2 = verify_drift(chain, v2, &e, small_set)?;
    let small = match minorization {
        Some((lambda, phi)) => check_minorization(chain, small_set, lag, lambda, phi)?,
        None => minorize(chain, small_set, lag)?,
    };
    CertificateBundle::new(drift1, drift2, small)
}

/// Drift certificates whose charges are `v1` and `v2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialCertificate {
    pub drift3: DriftCertificate,
    pub drift4: DriftCertificate,
}

impl PotentialCertificate {
    pub fn b3(&self) -> f64 {
        self.drift3.b
    }
    pub fn b4(&self) -> f64 {
        self.drift4.b
    }
}

pub fn verify_potential(
    chain: &FiniteChain,
    bundle: &CertificateBundle,
    v3: &StateFunction,
    v4: &StateFunction,
) -> Result<PotentialCertificate> {
    let c = bundle.small_set();
    let drift3 = verify_drift(chain, v3, bundle.v1(), c)?;
    let drift4 = verify_drift(chain, v4, bundle.v2(), c)?;
    Ok(PotentialCertificate { drift3, drift4 })
}
