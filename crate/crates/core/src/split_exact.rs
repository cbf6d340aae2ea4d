//! Exact regeneration-cycle expectations on finite chains.
//!
//! The split chain is never built as an enlarged state space. A cycle from
//! `x` is decomposed into one layer:
//!
//! 1. run `P` until the first entrance to `C` (distribution `H(x, .)`,
//!    accumulated charge `u_h(x)`);
//! 2. at `w` in `C`, flip a `lambda`-coin; the endpoint `X_m` is drawn from
//!    `phi` on success and from the residual kernel `Q(w, .)` otherwise,
//!    and the intermediate path follows the endpoint-conditioned law;
//! 3. on failure the chain restarts from the endpoint.
//!
//! With `G_h(x) = E_x sum_{j < tau} h(X_j)` this gives the linear system
//!
//! ```text
//! G_h(x) = u_h(x) + sum_w H(x, w) K_h(w)
//! K_h(w) = h(w) + lambda * bridge_phi(w)
//!        + (1 - lambda) * sum_y Q(w, y) [bridge(w, y) + G_h(y)]
//! ```
//!
//! whose matrix `I - (1 - lambda) H Q` is charge independent and factorized
//! once per certificate. Visits to `C` strictly inside a bridge segment are
//! not regeneration opportunities; the block structure above encodes that.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{Distribution, FiniteChain, StateFunction, StateSet};
use crate::drift::{CertificateBundle, SmallSetCertificate};
use crate::error::{Error, Result};
use crate::linalg::Factorized;

/// Tolerance on the residual kernel's non-negativity.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// `lambda` this close to one is treated as exactly one (no residual kernel).
const UNIT_LAMBDA_TOL: f64 = 1e-12;

/// Rows `Q(x, .)` for `x` in `C`, in the order of `C`'s members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualKernel {
    pub small_set: StateSet,
    /// Empty when `lambda = 1`.
    pub rows: Vec<Vec<f64>>,
}

impl ResidualKernel {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, x: usize) -> Option<&[f64]> {
        let k = self.small_set.position(x)?;
        self.rows.get(k).map(Vec::as_slice)
    }
}

pub fn residual_kernel(chain: &FiniteChain, small: &SmallSetCertificate) -> Result<ResidualKernel> {
    residual_from_power(&chain.kernel_power(small.lag), small)
}

fn residual_from_power(pm: &DMatrix<f64>, small: &SmallSetCertificate) -> Result<ResidualKernel> {
    let lambda = small.lambda;
    if lambda >= 1.0 - UNIT_LAMBDA_TOL {
        for &x in small.small_set.members() {
            for y in 0..pm.ncols() {
                let diff = pm[(x, y)] - small.phi[y];
                if diff.abs() > RESIDUAL_TOL {
                    return Err(Error::NegativeResidual {
                        state: x,
                        target: y,
                        value: -diff.abs(),
                    });
                }
            }
        }
        return Ok(ResidualKernel {
            small_set: small.small_set.clone(),
            rows: Vec::new(),
        });
    }
    let mut rows = Vec::with_capacity(small.small_set.len());
    for &x in small.small_set.members() {
        let mut row = Vec::with_capacity(pm.ncols());
        for y in 0..pm.ncols() {
            let q = (pm[(x, y)] - lambda * small.phi[y]) / (1.0 - lambda);
            if q < -RESIDUAL_TOL {
                return Err(Error::NegativeResidual {
                    state: x,
                    target: y,
                    value: q,
                });
            }
            row.push(q.max(0.0));
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|q| *q /= sum);
        rows.push(row);
    }
    Ok(ResidualKernel {
        small_set: small.small_set.clone(),
        rows,
    })
}

/// `bridge(x, y) = sum_{j=1}^{m-1} E[h(X_j) | X_0 = x, X_m = y]` for `x` in `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgeTable {
    pub lag: usize,
    pub small_set: StateSet,
    /// `values[k][y]` for the `k`-th member of `C`; `None` where `P^m(x, y) = 0`.
    pub values: Vec<Vec<Option<f64>>>,
}

impl BridgeTable {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let k = self.small_set.position(x)?;
        self.values[k][y]
    }
}

/// Builds the bridge table from `powers = [P^0, .., P^m]`.
pub fn bridge_table(powers: &[DMatrix<f64>], small_set: &StateSet, h: &[f64]) -> BridgeTable {
    let lag = powers.len() - 1;
    let pm = &powers[lag];
    let n = pm.ncols();
    let values = small_set
        .members()
        .iter()
        .map(|&x| {
            let mut acc = vec![0.0; n];
            for j in 1..lag {
                // (P^j(x, .) * h) P^{m-j}
                let weighted: Vec<f64> = (0..n).map(|z| powers[j][(x, z)] * h[z]).collect();
                let tail = &powers[lag - j];
                for (y, a) in acc.iter_mut().enumerate() {
                    *a += (0..n).map(|z| weighted[z] * tail[(z, y)]).sum::<f64>();
                }
            }
            (0..n)
                .map(|y| {
                    let p = pm[(x, y)];
                    (p > 0.0).then(|| acc[y] / p)
                })
                .collect()
        })
        .collect();
    BridgeTable {
        lag,
        small_set: small_set.clone(),
        values,
    }
}

/// First-entrance structure of `C`.
#[derive(Debug, Clone)]
pub struct Hitting {
    small_set: StateSet,
    /// `H(x, k) = P_x(X_{T_1} = members[k])`.
    distribution: DMatrix<f64>,
    outside: Vec<usize>,
    solver: Option<Factorized>,
}

impl Hitting {
    pub fn new(chain: &FiniteChain, small_set: &StateSet) -> Result<Self> {
        if small_set.is_empty() {
            return Err(Error::EmptySmallSet);
        }
        let n = chain.n();
        let reach = chain.can_reach(small_set);
        if let Some(state) = reach.iter().position(|r| !r) {
            return Err(Error::Unreachable { state });
        }
        let outside: Vec<usize> = (0..n).filter(|&x| !small_set.contains(x)).collect();
        let c = small_set.len();
        let mut distribution = DMatrix::zeros(n, c);
        for (k, &w) in small_set.members().iter().enumerate() {
            distribution[(w, k)] = 1.0;
        }
        if outside.is_empty() {
            return Ok(Self {
                small_set: small_set.clone(),
                distribution,
                outside,
                solver: None,
            });
        }
        let t = outside.len();
        let mut a = DMatrix::identity(t, t);
        for (i, &x) in outside.iter().enumerate() {
            for (j, &y) in outside.iter().enumerate() {
                a[(i, j)] -= chain.prob(x, y);
            }
        }
        let solver = Factorized::new(a)?;
        let mut rhs = DMatrix::zeros(t, c);
        for (i, &x) in outside.iter().enumerate() {
            for (k, &w) in small_set.members().iter().enumerate() {
                rhs[(i, k)] = chain.prob(x, w);
            }
        }
        let sol = solver.solve_matrix(&rhs)?;
        for (i, &x) in outside.iter().enumerate() {
            for k in 0..c {
                distribution[(x, k)] = sol[(i, k)];
            }
        }
        Ok(Self {
            small_set: small_set.clone(),
            distribution,
            outside,
            solver: Some(solver),
        })
    }

    pub fn small_set(&self) -> &StateSet {
        &self.small_set
    }

    /// `|S| x |C|` first-entrance distribution.
    pub fn distribution(&self) -> &DMatrix<f64> {
        &self.distribution
    }

    /// `u_h(x) = E_x sum_{j < T_1} h(X_j)`; zero on `C`.
    pub fn pre_hit_sum(&self, h: &[f64]) -> Result<StateFunction> {
        let n = self.distribution.nrows();
        let mut u = vec![0.0; n];
        if let Some(solver) = &self.solver {
            let rhs: Vec<f64> = self.outside.iter().map(|&x| h[x]).collect();
            let sol = solver.solve(&rhs)?;
            for (i, &x) in self.outside.iter().enumerate() {
                u[x] = sol[i];
            }
        }
        StateFunction::new(u)
    }
}

/// First-entrance distribution and pre-entrance sums for each charge.
pub fn hitting(
    chain: &FiniteChain,
    small_set: &StateSet,
    charges: &[&StateFunction],
) -> Result<(DMatrix<f64>, Vec<StateFunction>)> {
    let hit = Hitting::new(chain, small_set)?;
    let sums = charges
        .iter()
        .map(|h| hit.pre_hit_sum(h))
        .collect::<Result<Vec<_>>>()?;
    Ok((hit.distribution.clone(), sums))
}

/// `E_x sum_{j < tau} h(X_j)` per state, and its `phi`-average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleValues {
    pub per_state: StateFunction,
    pub at_phi: f64,
}

/// Factorized one-layer regeneration system for a fixed small-set certificate.
#[derive(Debug, Clone)]
pub struct Regeneration {
    chain: FiniteChain,
    small: SmallSetCertificate,
    powers: Vec<DMatrix<f64>>,
    residual: ResidualKernel,
    hitting: Hitting,
    system: Option<Factorized>,
}

impl Regeneration {
    pub fn new(chain: &FiniteChain, small: &SmallSetCertificate) -> Result<Self> {
        if small.phi.len() != chain.n() {
            return Err(Error::DimensionMismatch {
                expected: chain.n(),
                found: small.phi.len(),
            });
        }
        let powers = chain.kernel_powers(small.lag);
        let pm = &powers[small.lag];
        let residual = residual_from_power(pm, small)?;
        for &w in small.small_set.members() {
            for y in 0..chain.n() {
                let q = residual.row(w).map_or(0.0, |r| r[y]);
                if (small.phi[y] > 0.0 || q > 0.0) && pm[(w, y)] <= 0.0 {
                    return Err(Error::BridgeInconsistency {
                        state: w,
                        target: y,
                    });
                }
            }
        }
        let hitting = Hitting::new(chain, &small.small_set)?;
        let system = if residual.is_empty() {
            None
        } else {
            let n = chain.n();
            let scale = 1.0 - small.lambda;
            let h = &hitting.distribution;
            let mut m = DMatrix::identity(n, n);
            for x in 0..n {
                for (k, row) in residual.rows.iter().enumerate() {
                    let hx = h[(x, k)];
                    if hx == 0.0 {
                        continue;
                    }
                    for y in 0..n {
                        m[(x, y)] -= scale * hx * row[y];
                    }
                }
            }
            Some(Factorized::new(m)?)
        };
        Ok(Self {
            chain: chain.clone(),
            small: small.clone(),
            powers,
            residual,
            hitting,
            system,
        })
    }

    pub fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    pub fn small(&self) -> &SmallSetCertificate {
        &self.small
    }

    pub fn powers(&self) -> &[DMatrix<f64>] {
        &self.powers
    }

    pub fn residual(&self) -> &ResidualKernel {
        &self.residual
    }

    pub fn hitting(&self) -> &Hitting {
        &self.hitting
    }

    pub fn bridge_table(&self, h: &[f64]) -> BridgeTable {
        bridge_table(&self.powers, &self.small.small_set, h)
    }

    /// Cycle expectations for an arbitrary real charge.
    pub fn cycle_values(&self, h: &[f64]) -> Result<CycleValues> {
        if h.len() != self.chain.n() {
            return Err(Error::DimensionMismatch {
                expected: self.chain.n(),
                found: h.len(),
            });
        }
        let bridge = self.bridge_table(h);
        let lambda = self.small.lambda;
        let phi = &self.small.phi;
        let block: Vec<f64> = self
            .small
            .small_set
            .members()
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let b = &bridge.values[k];
                let through = |weights: &[f64]| -> f64 {
                    weights
                        .iter()
                        .zip(b)
                        .filter_map(|(p, v)| v.map(|v| p * v))
                        .sum()
                };
                let mut total = h[w] + lambda * through(phi);
                if let Some(q) = self.residual.rows.get(k) {
                    total += (1.0 - lambda) * through(q);
                }
                total
            })
            .collect();
        self.solve_layer(h, &block)
    }

    /// `E_x tau`: charge one, each block contributing exactly `m`.
    pub fn expected_cycle_length(&self) -> Result<CycleValues> {
        let ones = vec![1.0; self.chain.n()];
        let block = vec![self.small.lag as f64; self.small.small_set.len()];
        self.solve_layer(&ones, &block)
    }

    fn solve_layer(&self, h: &[f64], block: &[f64]) -> Result<CycleValues> {
        let u = self.hitting.pre_hit_sum(h)?;
        let hd = &self.hitting.distribution;
        let n = self.chain.n();
        let rhs: Vec<f64> = (0..n)
            .map(|x| u[x] + (0..block.len()).map(|k| hd[(x, k)] * block[k]).sum::<f64>())
            .collect();
        let g = match &self.system {
            Some(system) => system.solve(&rhs)?,
            None => rhs,
        };
        let at_phi = self.small.phi.expect(&g);
        Ok(CycleValues {
            per_state: StateFunction::new(g)?,
            at_phi,
        })
    }

    /// `nu(y) = E_phi sum_{j < tau} 1(X_j = y) / E_phi tau`.
    pub fn occupation_measure(&self) -> Result<Distribution> {
        let n = self.chain.n();
        let visits = (0..n)
            .map(|y| {
                self.cycle_values(&StateFunction::indicator(n, y))
                    .map(|c| c.at_phi.max(0.0))
            })
            .collect::<Result<Vec<_>>>()?;
        Distribution::from_weights(visits)
    }
}

pub fn cycle_values(
    chain: &FiniteChain,
    bundle: &CertificateBundle,
    h: &[f64],
) -> Result<CycleValues> {
    Regeneration::new(chain, &bundle.small)?.cycle_values(h)
}

/// `g*(x) = E_x sum_{j < tau} f_c(X_j)` with `f_c = f - pi f`.
pub fn canonical_solution(
    chain: &FiniteChain,
    bundle: &CertificateBundle,
    f: &StateFunction,
) -> Result<StateFunction> {
    let pi = chain.stationary()?;
    let fc = f.shifted(pi.expect(f));
    Ok(Regeneration::new(chain, &bundle.small)?
        .cycle_values(&fc)?
        .per_state)
}

pub fn occupation_measure(chain: &FiniteChain, bundle: &CertificateBundle) -> Result<Distribution> {
    Regeneration::new(chain, &bundle.small)?.occupation_measure()
}

/// `E_x f(X_n)` by `n` kernel-vector products.
pub fn exact_marginal(chain: &FiniteChain, x: usize, f: &[f64], n: usize) -> f64 {
    let mut h = f.to_vec();
    for _ in 0..n {
        h = chain.apply(&h);
    }
    h[x]
}

/// `max_x |((P - I) g)(x) + f_c(x)|`.
pub fn poisson_residual(chain: &FiniteChain, g: &[f64], fc: &[f64]) -> f64 {
    chain
        .apply(g)
        .iter()
        .zip(g)
        .zip(fc)
        .map(|((pg, g), f)| (pg - g + f).abs())
        .fold(0.0, f64::max)
}

/// Everything the exact route produces for one bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSolution {
    pub pi: Distribution,
    pub pi_f: f64,
    pub f_centered: StateFunction,
    pub g_star: StateFunction,
    /// Cycle sums of the uncentered charge `f`.
    pub cycle_f: CycleValues,
    pub cycle_length: CycleValues,
    pub nu: Distribution,
    pub poisson_residual: f64,
    /// `phi g*`; zero when `m = 1`, reported as a diagnostic otherwise.
    pub phi_g_star: f64,
}

pub fn solve_exact(chain: &FiniteChain, bundle: &CertificateBundle) -> Result<ExactSolution> {
    let regen = Regeneration::new(chain, &bundle.small)?;
    let pi = chain.stationary()?;
    let f = bundle.f();
    let pi_f = pi.expect(f);
    let f_centered = f.shifted(pi_f);
    let g = regen.cycle_values(&f_centered)?;
    let cycle_f = regen.cycle_values(f)?;
    let cycle_length = regen.expected_cycle_length()?;
    let nu = regen.occupation_measure()?;
    let poisson_residual = poisson_residual(chain, &g.per_state, &f_centered);
    Ok(ExactSolution {
        pi,
        pi_f,
        phi_g_star: g.at_phi,
        g_star: g.per_state,
        f_centered,
        cycle_f,
        cycle_length,
        nu,
        poisson_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{minorize, verify_bundle};

    fn running() -> FiniteChain {
        FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap()
    }

    fn running_bundle() -> CertificateBundle {
        let sf = |v: &[f64]| StateFunction::nonnegative(v.to_vec()).unwrap();
        verify_bundle(
            &running(),
            &sf(&[1.0, 0.0]),
            &sf(&[1.0, 4.0]),
            &sf(&[1.0, 5.0]),
            &StateSet::new(2, &[0]).unwrap(),
            1,
            None,
        )
        .unwrap()
    }

    #[test]
    fn residual_examples() {
        let p = running();
        let b = running_bundle();
        assert!(residual_kernel(&p, &b.small).unwrap().is_empty());

        let both = StateSet::new(2, &[0, 1]).unwrap();
        let s = minorize(&p, &both, 1).unwrap();
        let q = residual_kernel(&p, &s).unwrap();
        assert!((q.row(0).unwrap()[0] - 1.0).abs() < 1e-14);
        assert!(q.row(0).unwrap()[1].abs() < 1e-14);
        assert!(q.row(1).unwrap()[0].abs() < 1e-14);
        assert!((q.row(1).unwrap()[1] - 1.0).abs() < 1e-14);

        let mut over = s.clone();
        over.lambda = 0.9;
        assert!(matches!(
            residual_kernel(&p, &over),
            Err(Error::NegativeResidual { .. })
        ));
    }

    #[test]
    fn hitting_examples() {
        let p = running();
        let c = StateSet::new(2, &[0]).unwrap();
        let f = StateFunction::nonnegative(vec![1.0, 0.0]).unwrap();
        let e = StateFunction::constant(2, 1.0);
        let (h, u) = hitting(&p, &c, &[&f, &e]).unwrap();
        assert_eq!(h[(0, 0)], 1.0);
        assert!((h[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(u[0].values(), &[0.0, 0.0]);
        assert_eq!(u[1][0], 0.0);
        assert!((u[1][1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn hitting_detects_unreachable() {
        let p = FiniteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let c = StateSet::new(2, &[0]).unwrap();
        assert!(matches!(
            Hitting::new(&p, &c),
            Err(Error::Unreachable { state: 1 })
        ));
    }

    #[test]
    fn cycle_value_examples() {
        let p = running();
        let b = running_bundle();
        let g = cycle_values(&p, &b, &[2.0 / 3.0, -1.0 / 3.0]).unwrap();
        assert!((g.per_state[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((g.per_state[1] + 2.0 / 3.0).abs() < 1e-14);

        let regen = Regeneration::new(&p, &b.small).unwrap();
        let tau = regen.expected_cycle_length().unwrap();
        assert!((tau.per_state[0] - 1.0).abs() < 1e-14);
        assert!((tau.per_state[1] - 5.0).abs() < 1e-14);

        let zero = regen.cycle_values(&[0.0, 0.0]).unwrap();
        assert_eq!(zero.per_state.values(), &[0.0, 0.0]);
    }

    #[test]
    fn canonical_examples() {
        let p = running();
        let b = running_bundle();
        let g = canonical_solution(&p, &b, b.f()).unwrap();
        assert!((g[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((g[1] + 2.0 / 3.0).abs() < 1e-14);
        assert!(b.phi().expect(&g).abs() < 1e-14);

        let constant = StateFunction::constant(2, 3.0);
        let g = canonical_solution(&p, &b, &constant).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn occupation_examples() {
        let nu = occupation_measure(&running(), &running_bundle()).unwrap();
        assert!((nu[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((nu[1] - 2.0 / 3.0).abs() < 1e-14);

        let one = FiniteChain::new(vec![vec![1.0]]).unwrap();
        let c = StateSet::new(1, &[0]).unwrap();
        let s = minorize(&one, &c, 1).unwrap();
        let nu = Regeneration::new(&one, &s).unwrap().occupation_measure().unwrap();
        assert_eq!(nu.mass(), &[1.0]);

        let three = FiniteChain::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let s = minorize(&three, &StateSet::new(3, &[0]).unwrap(), 3).unwrap();
        let nu = Regeneration::new(&three, &s).unwrap().occupation_measure().unwrap();
        for y in 0..3 {
            assert!((nu[y] - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn marginal_examples() {
        let p = running();
        assert_eq!(exact_marginal(&p, 1, &[1.0, 0.0], 0), 0.0);
        assert_eq!(exact_marginal(&p, 0, &[1.0, 0.0], 0), 1.0);
        assert!((exact_marginal(&p, 1, &[1.0, 0.0], 1) - 0.25).abs() < 1e-15);
        assert!((exact_marginal(&p, 1, &[1.0, 0.0], 2) - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn bridge_vanishes_for_unit_lag() {
        let p = running();
        let powers = p.kernel_powers(1);
        let t = bridge_table(&powers, &StateSet::new(2, &[0]).unwrap(), &[5.0, 7.0]);
        assert_eq!(t.get(0, 0), Some(0.0));
        assert_eq!(t.get(0, 1), Some(0.0));
    }

    #[test]
    fn bridge_matches_path_enumeration() {
        // Brute force over all paths of length m from x to y.
        let p = FiniteChain::new(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.0, 0.4, 0.6],
            vec![0.7, 0.0, 0.3],
        ])
        .unwrap();
        let h = [1.5, -2.0, 0.25];
        let m = 3;
        let powers = p.kernel_powers(m);
        let c = StateSet::new(3, &[0, 2]).unwrap();
        let table = bridge_table(&powers, &c, &h);
        for &x in c.members() {
            for y in 0..3 {
                let mut num = 0.0;
                let mut den = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        let w = p.prob(x, a) * p.prob(a, b) * p.prob(b, y);
                        num += w * (h[a] + h[b]);
                        den += w;
                    }
                }
                let got = table.get(x, y).unwrap();
                assert!((got - num / den).abs() < 1e-13, "{x}->{y}");
            }
        }
    }

    #[test]
    fn exact_solution_on_running_example() {
        let s = solve_exact(&running(), &running_bundle()).unwrap();
        assert!((s.pi_f - 1.0 / 3.0).abs() < 1e-15);
        assert!(s.poisson_residual < 1e-14);
        assert!(s.phi_g_star.abs() < 1e-14);
        assert!(s.nu.l1_distance(&s.pi) < 1e-14);
        assert!((s.cycle_f.per_state[1] - 1.0).abs() < 1e-14);
        assert!((s.cycle_length.at_phi - 3.0).abs() < 1e-14);
    }
}
