//! Finite Markov chains: validated kernels, state functions, distributions,
//! stationarity, kernel powers, and the cyclic structure of the recurrent class.
//!
//! Kernels are dense. Every structural question (recurrence, reachability,
//! period) is answered on the transition digraph, which has an edge `x -> y`
//! exactly when `P(x, y) > 0`.

use std::collections::VecDeque;
use std::ops::Deref;

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Factorized;

/// Absolute tolerance on row sums and distribution masses.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Row-stochastic transition kernel on `{0, .., n-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    kernel: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

/// Validates a square kernel. Rows within [`ROW_SUM_TOL`] of one are
/// renormalized, anything further off is rejected.
pub fn validate_chain(rows: &[Vec<f64>]) -> Result<FiniteChain> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::NotSquare { rows: 0, cols: 0 });
    }
    let mut kernel = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite { index: i * n + j });
            }
            if p < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: p,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        let deficit = 1.0 - sum;
        if deficit.abs() > ROW_SUM_TOL {
            return Err(Error::RowSumViolation {
                row: i,
                sum,
                deficit,
            });
        }
        for (j, &p) in row.iter().enumerate() {
            kernel[(i, j)] = p / sum;
        }
    }
    Ok(FiniteChain {
        kernel,
        labels: None,
    })
}

impl FiniteChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_chain(&rows)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.kernel[(x, y)]
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        self.kernel.row(x).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|x| self.row(x)).collect()
    }

    /// `(P h)(x) = sum_y P(x, y) h(y)`.
    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(h.len(), n);
        (0..n)
            .map(|x| (0..n).map(|y| self.kernel[(x, y)] * h[y]).sum())
            .collect()
    }

    /// `(mu P)(y) = sum_x mu(x) P(x, y)`.
    pub fn push_forward(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(mu.len(), n);
        (0..n)
            .map(|y| (0..n).map(|x| mu[x] * self.kernel[(x, y)]).sum())
            .collect()
    }

    /// `P^m`, with `P^0 = I`.
    pub fn kernel_power(&self, m: usize) -> DMatrix<f64> {
        kernel_power(self, m)
    }

    /// `[P^0, P^1, .., P^m]`.
    pub fn kernel_powers(&self, m: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(m + 1);
        out.push(DMatrix::identity(self.n(), self.n()));
        for j in 1..=m {
            let next = &out[j - 1] * &self.kernel;
            out.push(next);
        }
        out
    }

    fn digraph(&self) -> DiGraph<(), ()> {
        let n = self.n();
        let mut g = DiGraph::with_capacity(n, n * n);
        let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
        for x in 0..n {
            for y in 0..n {
                if self.kernel[(x, y)] > 0.0 {
                    g.add_edge(nodes[x], nodes[y], ());
                }
            }
        }
        g
    }

    /// Closed communicating classes, each sorted ascending.
    pub fn recurrent_classes(&self) -> Vec<Vec<usize>> {
        let g = self.digraph();
        let n = self.n();
        let mut class_of = vec![usize::MAX; n];
        let sccs = tarjan_scc(&g);
        for (k, scc) in sccs.iter().enumerate() {
            for node in scc {
                class_of[node.index()] = k;
            }
        }
        let mut classes = Vec::new();
        for (k, scc) in sccs.iter().enumerate() {
            let closed = scc.iter().all(|node| {
                let x = node.index();
                (0..n).all(|y| self.kernel[(x, y)] == 0.0 || class_of[y] == k)
            });
            if closed {
                let mut members: Vec<usize> = scc.iter().map(|v| v.index()).collect();
                members.sort_unstable();
                classes.push(members);
            }
        }
        classes.sort();
        classes
    }

    fn unique_recurrent_class(&self) -> Result<Vec<usize>> {
        let mut classes = self.recurrent_classes();
        if classes.len() != 1 {
            return Err(Error::MultipleRecurrentClasses {
                count: classes.len(),
            });
        }
        Ok(classes.pop().unwrap_or_default())
    }

    /// States from which `targets` is reachable (in zero or more steps).
    pub fn can_reach(&self, targets: &StateSet) -> Vec<bool> {
        let n = self.n();
        let mut reach = targets.mask().to_vec();
        let mut queue: VecDeque<usize> = targets.members().iter().copied().collect();
        while let Some(y) = queue.pop_front() {
            for x in 0..n {
                if !reach[x] && self.kernel[(x, y)] > 0.0 {
                    reach[x] = true;
                    queue.push_back(x);
                }
            }
        }
        reach
    }

    pub fn stationary(&self) -> Result<Distribution> {
        stationary(self)
    }

    pub fn cyclic_decomposition(&self) -> Result<CyclicDecomposition> {
        cyclic_decomposition(self)
    }
}

/// `P^m` by repeated squaring.
pub fn kernel_power(chain: &FiniteChain, m: usize) -> DMatrix<f64> {
    let n = chain.n();
    let mut result = DMatrix::identity(n, n);
    let mut base = chain.kernel.clone();
    let mut e = m;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Unique stationary distribution by a dense solve of `(P^T - I) pi = 0`
/// with one equation replaced by `sum pi = 1`.
pub fn stationary(chain: &FiniteChain) -> Result<Distribution> {
    chain.unique_recurrent_class()?;
    let n = chain.n();
    let mut a = chain.kernel.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let pi = Factorized::new(a)?.solve(&rhs)?;
    // Transient states carry exactly zero mass; clear round-off of either sign.
    let cleaned: Vec<f64> = pi.into_iter().map(|p| if p < 0.0 { 0.0 } else { p }).collect();
    Distribution::from_weights(cleaned)
}

/// Period and cyclic classes of the recurrent class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CyclicDecomposition {
    pub period: usize,
    /// `classes[i]` is `D_i`; one step maps `D_i` into `D_{(i+1) mod p}`.
    pub classes: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
}

impl CyclicDecomposition {
    /// Index of the cyclic class containing `x`, if `x` is recurrent.
    pub fn class_of(&self, x: usize) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&x))
    }
}

/// Period from BFS levels: `p = gcd` over in-class edges `u -> v` of
/// `level(u) + 1 - level(v)`. Classes are the level residues mod `p`.
pub fn cyclic_decomposition(chain: &FiniteChain) -> Result<CyclicDecomposition> {
    let class = chain.unique_recurrent_class()?;
    let n = chain.n();
    let mut in_class = vec![false; n];
    for &x in &class {
        in_class[x] = true;
    }
    let root = class[0];
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut period = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !in_class[v] || chain.kernel[(u, v)] <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    // A single-state class without a self-loop cannot occur: closed classes
    // always contain a cycle, so `period >= 1` here.
    let period = period.max(1);
    let mut classes = vec![Vec::new(); period];
    for &x in &class {
        classes[level[x] % period].push(x);
    }
    let transient = (0..n).filter(|&x| !in_class[x]).collect();
    Ok(CyclicDecomposition {
        period,
        classes,
        transient,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A real function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: Vec<f64>,
    nonnegative: bool,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            values,
            nonnegative: false,
        })
    }

    /// Like [`StateFunction::new`], additionally asserting every entry is `>= 0`.
    pub fn nonnegative(values: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(values)?;
        if let Some(state) = f.values.iter().position(|&v| v < 0.0) {
            return Err(Error::NegativityViolation {
                state,
                value: f.values[state],
            });
        }
        f.nonnegative = true;
        Ok(f)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            values: vec![c; n],
            nonnegative: c >= 0.0,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn indicator(n: usize, x: usize) -> Self {
        let mut values = vec![0.0; n];
        values[x] = 1.0;
        Self {
            values,
            nonnegative: true,
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// `f - c`, e.g. the centered charge `f - pi f`.
    pub fn shifted(&self, c: f64) -> StateFunction {
        StateFunction {
            values: self.values.iter().map(|v| v - c).collect(),
            nonnegative: false,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for StateFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A probability vector on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    mass: Vec<f64>,
}

impl Distribution {
    /// Validates `mass`. Sums within [`ROW_SUM_TOL`] of one are renormalized.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDistribution {
                reason: "empty".into(),
            });
        }
        if let Some(index) = mass.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(i) = mass.iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidDistribution {
                reason: format!("negative mass {} at state {i}", mass[i]),
            });
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidDistribution {
                reason: format!("total mass {sum}"),
            });
        }
        Ok(Self {
            mass: mass.into_iter().map(|v| v / sum).collect(),
        })
    }

    /// Normalizes non-negative weights with positive total.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidDistribution {
                reason: format!("weights must be non-negative with positive sum (sum {sum})"),
            });
        }
        Ok(Self {
            mass: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    pub fn point(n: usize, x: usize) -> Self {
        let mut mass = vec![0.0; n];
        mass[x] = 1.0;
        Self { mass }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// `mu h`.
    pub fn expect(&self, h: &[f64]) -> f64 {
        self.mass.iter().zip(h).map(|(p, v)| p * v).sum()
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

impl Deref for Distribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.mass
    }
}

/// A subset of states, kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSet {
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl Serialize for StateFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.values)
    }
}

impl Serialize for Distribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.mass)
    }
}

impl Serialize for StateSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(&self.members)
    }
}

impl StateSet {
    pub fn new(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &x in members {
            if x >= n {
                return Err(Error::StateOutOfRange { state: x, n });
            }
            mask[x] = true;
        }
        let members = (0..n).filter(|&x| mask[x]).collect();
        Ok(Self { members, mask })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, x: usize) -> bool {
        self.mask.get(x).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Position of `x` within `members`, if present.
    pub fn position(&self, x: usize) -> Option<usize> {
        self.members.binary_search(&x).ok()
    }

    pub fn indicator(&self) -> StateFunction {
        StateFunction {
            values: self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            nonnegative: true,
        }
    }
}
