//! Regenerative Monte Carlo on sampler-defined chains.
//!
//! A cycle runs the chain until it enters `C`, flips a `lambda`-coin, draws
//! the lag-`m` endpoint from `phi` (success) or the residual kernel
//! (failure), fills in the `m - 1` intermediate states with the bridge
//! sampler, and repeats from the endpoint until the first success. The
//! charge is accumulated over indices `0..tau`; the endpoint `X_tau` is
//! excluded and returned separately.
//!
//! Randomness is keyed by `(master_seed, cycle_index)`: cycle `i` always
//! consumes ChaCha stream `i` of the master seed, so results do not depend
//! on the worker count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{FiniteChain, StateFunction};
use crate::drift::SmallSetCertificate;
use crate::error::{Error, Result};
use crate::split_exact::Regeneration;

pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

/// A Markov chain given by samplers, with the split-chain ingredients.
pub trait SamplerChain: Sync {
    type State: Clone + Send + Sync;

    /// One draw from `P(x, .)`.
    fn step(&self, x: &Self::State, rng: &mut dyn RngCore) -> Self::State;
    fn charge(&self, x: &Self::State) -> f64;
    fn in_small_set(&self, x: &Self::State) -> bool;
    fn lag(&self) -> usize;
    fn lambda(&self) -> f64;
    fn sample_phi(&self, rng: &mut dyn RngCore) -> Self::State;
    /// One draw from the residual kernel `Q(x, .)`, `x` in `C`.
    fn sample_residual(&self, x: &Self::State, rng: &mut dyn RngCore) -> Self::State;
    /// `X_1, .., X_{m-1}` given `X_0 = x`, `X_m = y`. `None` when unsupported.
    fn sample_bridge(
        &self,
        _x: &Self::State,
        _y: &Self::State,
        _rng: &mut dyn RngCore,
    ) -> Option<Vec<Self::State>> {
        None
    }
}

/// The RNG stream for cycle `index` under `master_seed`.
pub fn cycle_stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleSample<S> {
    /// `sum_{j < tau} f(X_j)`.
    pub sum_f: f64,
    /// `tau`.
    pub length: u64,
    pub start: S,
    /// `X_tau`, distributed as `phi`.
    pub end: S,
    /// Stream index the cycle consumed.
    pub stream: u64,
}

pub fn simulate_cycle<C: SamplerChain>(
    sc: &C,
    x0: C::State,
    rng: &mut dyn RngCore,
    max_steps: u64,
) -> Result<CycleSample<C::State>> {
    let lag = sc.lag();
    let lambda = sc.lambda();
    let mut x = x0.clone();
    let mut sum_f = 0.0;
    let mut length: u64 = 0;
    loop {
        while !sc.in_small_set(&x) {
            sum_f += sc.charge(&x);
            length += 1;
            if length > max_steps {
                return Err(Error::MaxStepsExceeded { limit: max_steps });
            }
            x = sc.step(&x, rng);
        }
        let regenerate = lambda >= 1.0 || rng.random::<f64>() < lambda;
        let y = if regenerate {
            sc.sample_phi(rng)
        } else {
            sc.sample_residual(&x, rng)
        };
        sum_f += sc.charge(&x);
        if lag > 1 {
            let path = sc
                .sample_bridge(&x, &y, rng)
                .ok_or(Error::MissingBridgeSampler { lag })?;
            if path.len() != lag - 1 {
                return Err(Error::InvalidParameter(format!(
                    "bridge sampler returned {} states, expected {}",
                    path.len(),
                    lag - 1
                )));
            }
            sum_f += path.iter().map(|z| sc.charge(z)).sum::<f64>();
        }
        length += lag as u64;
        x = y;
        if regenerate {
            return Ok(CycleSample {
                sum_f,
                length,
                start: x0,
                end: x,
                stream: 0,
            });
        }
        if length > max_steps {
            return Err(Error::MaxStepsExceeded { limit: max_steps });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub cycles: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the global pool.
    pub workers: usize,
    pub max_steps: u64,
}

impl McConfig {
    pub fn new(cycles: usize, seed: u64) -> Self {
        Self {
            cycles,
            seed,
            workers: 0,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Where each cycle starts.
#[derive(Debug, Clone)]
pub enum CycleStart<S> {
    At(S),
    /// Drawn from `phi` on the cycle's own stream.
    Phi,
}

/// Runs `cfg.cycles` independent cycles; output is in stream order.
pub fn run_cycles<C: SamplerChain>(
    sc: &C,
    start: &CycleStart<C::State>,
    cfg: &McConfig,
) -> Result<Vec<CycleSample<C::State>>> {
    if cfg.cycles == 0 {
        return Err(Error::InvalidParameter("cycle count must be positive".into()));
    }
    let job = || {
        (0..cfg.cycles as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = cycle_stream(cfg.seed, i);
                let x0 = match start {
                    CycleStart::At(x) => x.clone(),
                    CycleStart::Phi => sc.sample_phi(&mut rng),
                };
                simulate_cycle(sc, x0, &mut rng, cfg.max_steps).map(|mut c| {
                    c.stream = i;
                    c
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    if cfg.workers == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::WorkerPool(e.to_string()))?
            .install(job)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub point: f64,
    pub std_error: f64,
    pub n_cycles: usize,
    pub seed: u64,
}

impl McEstimate {
    /// `|point - target| <= k * std_error`, plus summation round-off for
    /// degenerate (zero-variance) estimates.
    pub fn within(&self, target: f64, k: f64) -> bool {
        let roundoff = 1e-12 * target.abs().max(1.0);
        (self.point - target).abs() <= k * self.std_error + roundoff
    }
}

/// Sample mean and standard error, summed in input order.
pub fn mean_estimate(values: &[f64], seed: u64) -> McEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        point: mean,
        std_error,
        n_cycles: n,
        seed,
    }
}

/// `sum Y / sum L` with a delta-method standard error.
pub fn ratio_estimate(numer: &[f64], denom: &[f64], seed: u64) -> McEstimate {
    let n = numer.len();
    let sum_y: f64 = numer.iter().sum();
    let sum_l: f64 = denom.iter().sum();
    let ratio = sum_y / sum_l;
    let std_error = if n > 1 {
        let mean_l = sum_l / n as f64;
        let var = numer
            .iter()
            .zip(denom)
            .map(|(y, l)| (y - ratio * l).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        (var / n as f64).sqrt() / mean_l
    } else {
        0.0
    };
    McEstimate {
        point: ratio,
        std_error,
        n_cycles: n,
        seed,
    }
}

/// Estimates of `g*(x0)` and `E_{x0} tau` from one batch of cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StartEstimates {
    pub g_star: McEstimate,
    pub cycle_length: McEstimate,
}

pub fn estimate_from_start<C: SamplerChain>(
    sc: &C,
    x0: C::State,
    pi_f: f64,
    cfg: &McConfig,
) -> Result<StartEstimates> {
    let cycles = run_cycles(sc, &CycleStart::At(x0), cfg)?;
    let centered: Vec<f64> = cycles
        .iter()
        .map(|c| c.sum_f - pi_f * c.length as f64)
        .collect();
    let lengths: Vec<f64> = cycles.iter().map(|c| c.length as f64).collect();
    Ok(StartEstimates {
        g_star: mean_estimate(&centered, cfg.seed),
        cycle_length: mean_estimate(&lengths, cfg.seed),
    })
}

/// Mean of `sum_f - pi_f * tau` over cycles started at `x0`.
pub fn estimate_gstar<C: SamplerChain>(
    sc: &C,
    x0: C::State,
    pi_f: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    estimate_from_start(sc, x0, pi_f, cfg).map(|e| e.g_star)
}

pub fn estimate_cycle_length<C: SamplerChain>(
    sc: &C,
    x0: C::State,
    cfg: &McConfig,
) -> Result<McEstimate> {
    estimate_from_start(sc, x0, 0.0, cfg).map(|e| e.cycle_length)
}

/// Ratio estimator of `pi f` from cycles started at `phi`.
pub fn estimate_pif<C: SamplerChain>(sc: &C, cfg: &McConfig) -> Result<McEstimate> {
    let cycles = run_cycles(sc, &CycleStart::Phi, cfg)?;
    let sums: Vec<f64> = cycles.iter().map(|c| c.sum_f).collect();
    let lengths: Vec<f64> = cycles.iter().map(|c| c.length as f64).collect();
    Ok(ratio_estimate(&sums, &lengths, cfg.seed))
}

/// Inverse-CDF sampler over a finite support.
#[derive(Debug, Clone)]
struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
        Self {
            cumulative,
            last_positive,
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.last_positive)
    }
}

/// Exact split-chain samplers for a finite chain.
#[derive(Debug, Clone)]
pub struct FiniteSampler {
    chain: FiniteChain,
    rows: Vec<Categorical>,
    charge: Vec<f64>,
    in_small_set: Vec<bool>,
    lag: usize,
    lambda: f64,
    phi: Categorical,
    residual: Vec<Option<Categorical>>,
    /// `P^0 .. P^m`, for endpoint-conditioned bridges.
    powers: Vec<nalgebra::DMatrix<f64>>,
}

impl FiniteSampler {
    pub fn new(chain: &FiniteChain, small: &SmallSetCertificate, charge: &StateFunction) -> Result<Self> {
        Self::from_regeneration(&Regeneration::new(chain, small)?, charge)
    }

    pub fn from_regeneration(regen: &Regeneration, charge: &StateFunction) -> Result<Self> {
        let chain = regen.chain();
        if charge.len() != chain.n() {
            return Err(Error::DimensionMismatch {
                expected: chain.n(),
                found: charge.len(),
            });
        }
        let small = regen.small();
        let residual = (0..chain.n())
            .map(|x| regen.residual().row(x).map(Categorical::new))
            .collect();
        Ok(Self {
            chain: chain.clone(),
            rows: (0..chain.n()).map(|x| Categorical::new(&chain.row(x))).collect(),
            charge: charge.values().to_vec(),
            in_small_set: small.small_set.mask().to_vec(),
            lag: small.lag,
            lambda: small.lambda,
            phi: Categorical::new(&small.phi),
            residual,
            powers: regen.powers().to_vec(),
        })
    }
}

impl SamplerChain for FiniteSampler {
    type State = usize;

    fn step(&self, x: &usize, rng: &mut dyn RngCore) -> usize {
        self.rows[*x].sample(rng)
    }

    fn charge(&self, x: &usize) -> f64 {
        self.charge[*x]
    }

    fn in_small_set(&self, x: &usize) -> bool {
        self.in_small_set[*x]
    }

    fn lag(&self) -> usize {
        self.lag
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn sample_phi(&self, rng: &mut dyn RngCore) -> usize {
        self.phi.sample(rng)
    }

    fn sample_residual(&self, x: &usize, rng: &mut dyn RngCore) -> usize {
        match &self.residual[*x] {
            Some(q) => q.sample(rng),
            // lambda = 1: the residual kernel is never used.
            None => self.phi.sample(rng),
        }
    }

    /// Sequential conditionals: `X_j ~ P(X_{j-1}, z) P^{m-j}(z, y)`.
    fn sample_bridge(&self, x: &usize, y: &usize, rng: &mut dyn RngCore) -> Option<Vec<usize>> {
        let n = self.chain.n();
        let mut path = Vec::with_capacity(self.lag.saturating_sub(1));
        let mut a = *x;
        for j in 1..self.lag {
            let tail = &self.powers[self.lag - j];
            let weights: Vec<f64> = (0..n).map(|z| self.chain.prob(a, z) * tail[(z, *y)]).collect();
            a = Categorical::new(&weights).sample(rng);
            path.push(a);
        }
        Some(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::StateSet;
    use crate::drift::minorize;

    fn running_sampler() -> FiniteSampler {
        let p = FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let s = minorize(&p, &StateSet::new(2, &[0]).unwrap(), 1).unwrap();
        FiniteSampler::new(&p, &s, &StateFunction::nonnegative(vec![1.0, 0.0]).unwrap()).unwrap()
    }

    #[test]
    fn cycles_from_small_set_have_unit_length() {
        let sc = running_sampler();
        let mut rng = cycle_stream(7, 0);
        for _ in 0..100 {
            let c = simulate_cycle(&sc, 0, &mut rng, DEFAULT_MAX_STEPS).unwrap();
            assert_eq!(c.length, 1);
            assert_eq!(c.sum_f, 1.0);
        }
    }

    #[test]
    fn zero_charge_gives_zero_sums() {
        let p = FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let s = minorize(&p, &StateSet::new(2, &[0]).unwrap(), 1).unwrap();
        let sc = FiniteSampler::new(&p, &s, &StateFunction::zeros(2)).unwrap();
        let cycles = run_cycles(&sc, &CycleStart::At(1), &McConfig::new(500, 3)).unwrap();
        assert!(cycles.iter().all(|c| c.sum_f == 0.0));
    }

    #[test]
    fn constant_charge_gives_zero_gstar_exactly() {
        let p = FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let s = minorize(&p, &StateSet::new(2, &[0]).unwrap(), 1).unwrap();
        let sc = FiniteSampler::new(&p, &s, &StateFunction::constant(2, 2.0)).unwrap();
        let e = estimate_gstar(&sc, 1, 2.0, &McConfig::new(1000, 11)).unwrap();
        assert_eq!(e.point, 0.0);
        assert_eq!(e.std_error, 0.0);
        let r = estimate_pif(&sc, &McConfig::new(1000, 11)).unwrap();
        assert_eq!(r.point, 2.0);
    }

    #[test]
    fn unit_charge_ratio_is_exactly_one() {
        let p = FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let s = minorize(&p, &StateSet::new(2, &[0, 1]).unwrap(), 1).unwrap();
        let sc = FiniteSampler::new(&p, &s, &StateFunction::constant(2, 1.0)).unwrap();
        let r = estimate_pif(&sc, &McConfig::new(2000, 5)).unwrap();
        assert_eq!(r.point, 1.0);
        assert_eq!(r.std_error, 0.0);
    }

    struct NoBridge;

    impl SamplerChain for NoBridge {
        type State = u8;
        fn step(&self, _x: &u8, _rng: &mut dyn RngCore) -> u8 {
            0
        }
        fn charge(&self, _x: &u8) -> f64 {
            0.0
        }
        fn in_small_set(&self, _x: &u8) -> bool {
            true
        }
        fn lag(&self) -> usize {
            2
        }
        fn lambda(&self) -> f64 {
            1.0
        }
        fn sample_phi(&self, _rng: &mut dyn RngCore) -> u8 {
            0
        }
        fn sample_residual(&self, _x: &u8, _rng: &mut dyn RngCore) -> u8 {
            0
        }
    }

    #[test]
    fn lag_two_needs_bridge() {
        let mut rng = cycle_stream(1, 0);
        assert_eq!(
            simulate_cycle(&NoBridge, 0, &mut rng, 10),
            Err(Error::MissingBridgeSampler { lag: 2 })
        );
    }

    struct NeverReturns;

    impl SamplerChain for NeverReturns {
        type State = u8;
        fn step(&self, _x: &u8, _rng: &mut dyn RngCore) -> u8 {
            1
        }
        fn charge(&self, _x: &u8) -> f64 {
            1.0
        }
        fn in_small_set(&self, x: &u8) -> bool {
            *x == 0
        }
        fn lag(&self) -> usize {
            1
        }
        fn lambda(&self) -> f64 {
            1.0
        }
        fn sample_phi(&self, _rng: &mut dyn RngCore) -> u8 {
            0
        }
        fn sample_residual(&self, _x: &u8, _rng: &mut dyn RngCore) -> u8 {
            0
        }
    }

    #[test]
    fn step_guard_aborts() {
        let mut rng = cycle_stream(1, 0);
        assert_eq!(
            simulate_cycle(&NeverReturns, 1, &mut rng, 1000),
            Err(Error::MaxStepsExceeded { limit: 1000 })
        );
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = cycle_stream(42, 0).random();
        let b: u64 = cycle_stream(42, 1).random();
        let a2: u64 = cycle_stream(42, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sc = running_sampler();
        let one = estimate_from_start(&sc, 1, 1.0 / 3.0, &McConfig::new(5000, 9).with_workers(1)).unwrap();
        let four = estimate_from_start(&sc, 1, 1.0 / 3.0, &McConfig::new(5000, 9).with_workers(4)).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.g_star.point.to_bits(), four.g_star.point.to_bits());
    }

    #[test]
    fn ratio_estimate_matches_hand_computation() {
        let e = ratio_estimate(&[1.0, 3.0], &[2.0, 2.0], 0);
        assert_eq!(e.point, 1.0);
        // residuals (-1, 1), var 2, se sqrt(2/2)/2
        assert!((e.std_error - 0.5).abs() < 1e-15);
    }
}
