//! The GI/G/1 waiting-time chain `W' = [W + Z]^+`.
//!
//! With `f(x) = x` and `v1 = v2 = c1 x^2 v 1`, `c1 = kappa / (2 |E Z|)`, the
//! drift inequality holds outside `C = [0, x0]` for large enough `x0`. The
//! minorization on `C` is one step with
//! `phi(dy) ∝ F(-x0) delta_0(dy) + inf_{0 <= x <= x0} h(y - x) dy`.
//!
//! All integrals are composite Simpson on a uniform step with kinks placed
//! on breakpoints.

use rand::{Rng, RngCore};
use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::bounds::{hl_comparison, HlComparison};
use crate::error::{Error, Result};
use crate::split_mc::{
    estimate_from_start, estimate_pif, mean_estimate, McConfig, McEstimate, SamplerChain,
};

/// Law of the increment `Z`: a continuous, positive density.
pub trait IncrementDensity: Sync {
    fn pdf(&self, z: f64) -> f64;
    fn cdf(&self, z: f64) -> f64;
    fn mean(&self) -> f64;
    fn second_moment(&self) -> f64;
    /// An interval carrying all but a negligible amount of mass.
    fn support(&self) -> (f64, f64);
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    /// Unimodal densities attain `inf_{0<=x<=x0} h(y - x)` at an endpoint.
    fn is_unimodal(&self) -> bool {
        false
    }
}

impl<D: IncrementDensity + ?Sized> IncrementDensity for &D {
    fn pdf(&self, z: f64) -> f64 {
        (**self).pdf(z)
    }
    fn cdf(&self, z: f64) -> f64 {
        (**self).cdf(z)
    }
    fn mean(&self) -> f64 {
        (**self).mean()
    }
    fn second_moment(&self) -> f64 {
        (**self).second_moment()
    }
    fn support(&self) -> (f64, f64) {
        (**self).support()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        (**self).sample(rng)
    }
    fn is_unimodal(&self) -> bool {
        (**self).is_unimodal()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormalIncrement {
    mean: f64,
    sd: f64,
    law: statrs::distribution::Normal,
    sampler: rand_distr::Normal<f64>,
}

impl NormalIncrement {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("invalid normal increment ({mean}, {sd})"));
        if !mean.is_finite() || !(sd > 0.0 && sd.is_finite()) {
            return Err(bad());
        }
        Ok(Self {
            mean,
            sd,
            law: statrs::distribution::Normal::new(mean, sd).map_err(|_| bad())?,
            sampler: rand_distr::Normal::new(mean, sd).map_err(|_| bad())?,
        })
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }
}

impl IncrementDensity for NormalIncrement {
    fn pdf(&self, z: f64) -> f64 {
        self.law.pdf(z)
    }

    fn cdf(&self, z: f64) -> f64 {
        self.law.cdf(z)
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn second_moment(&self) -> f64 {
        self.mean * self.mean + self.sd * self.sd
    }

    fn support(&self) -> (f64, f64) {
        (self.mean - 10.0 * self.sd, self.mean + 10.0 * self.sd)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        rng.sample(self.sampler)
    }

    fn is_unimodal(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureConfig {
    /// Grid step for both the `x` grid and the integration rule.
    pub step: f64,
    /// Largest verification horizon `find_x0` will accept.
    pub max_horizon: f64,
    /// Allowed deficit of `∫ h` over the truncated support.
    pub mass_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_horizon: 1.0e4,
            mass_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gig1Model<D> {
    pub increment: D,
    pub kappa: f64,
    /// Small-set endpoint. `None` runs the feasibility search.
    pub x0: Option<f64>,
    pub quadrature: QuadratureConfig,
}

impl<D: IncrementDensity> Gig1Model<D> {
    pub fn new(increment: D, kappa: f64) -> Self {
        Self {
            increment,
            kappa,
            x0: None,
            quadrature: QuadratureConfig::default(),
        }
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.quadrature.step = step;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) {
            return Err(Error::InvalidParameter(format!("kappa must exceed 1, got {}", self.kappa)));
        }
        if !(self.increment.mean() < 0.0) {
            return Err(Error::InvalidParameter("increment mean must be negative".into()));
        }
        if !(self.quadrature.step > 0.0) {
            return Err(Error::InvalidParameter("quadrature step must be positive".into()));
        }
        if let Some(x0) = self.x0 {
            if !(x0 > 0.0 && x0.is_finite()) {
                return Err(Error::InvalidParameter(format!("x0 must be positive, got {x0}")));
            }
        }
        let (lo, hi) = self.increment.support();
        let mass = simpson(|z| self.increment.pdf(z), lo, hi, self.quadrature.step);
        let deficit = (1.0 - mass).abs();
        if deficit > self.quadrature.mass_tol {
            return Err(Error::QuadratureFailure { deficit });
        }
        Ok(())
    }

    /// `kappa / (2 |E Z|)`.
    pub fn c1(&self) -> f64 {
        self.kappa / (2.0 * self.increment.mean().abs())
    }

    pub fn v1(&self, x: f64) -> f64 {
        (self.c1() * x * x).max(1.0)
    }

    /// `(P v1)(x) = F(a) + ∫_a c1 (x + z)^2 h(z) dz`, `a = 1/sqrt(c1) - x`.
    pub fn pv1(&self, x: f64) -> f64 {
        let c1 = self.c1();
        let (lo, hi) = self.increment.support();
        let a = 1.0 / c1.sqrt() - x;
        let flat = self.increment.cdf(a);
        if a >= hi {
            return flat;
        }
        let start = a.max(lo);
        flat + simpson(
            |z| c1 * (x + z) * (x + z) * self.increment.pdf(z),
            start,
            hi,
            self.quadrature.step,
        )
    }

    /// `(P v1)(x) - v1(x) + max(x, 1)`; must be `<= 0` off `C`.
    pub fn drift_excess(&self, x: f64) -> f64 {
        self.pv1(x) - self.v1(x) + x.max(1.0)
    }

    /// Beyond this point the drift inequality holds analytically:
    /// `v1((x+z)^+) <= c1 (x+z)^2 + 1` gives an excess of at most
    /// `(1 - kappa) x + c1 E Z^2 + 1`.
    pub fn tail_horizon(&self) -> f64 {
        let c1 = self.c1();
        let analytic = (c1 * self.increment.second_moment() + 1.0) / (self.kappa - 1.0);
        analytic.max(1.0 / c1.sqrt()).max(1.0)
    }

    /// `inf_{0 <= x <= x0} h(y - x)` over the `x` grid.
    pub fn psi(&self, y: f64, x0: f64) -> f64 {
        if self.increment.is_unimodal() {
            return self.increment.pdf(y).min(self.increment.pdf(y - x0));
        }
        uniform_grid(0.0, x0, self.quadrature.step)
            .iter()
            .map(|x| self.increment.pdf(y - x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// `lo = x_0 < .. < x_k = hi` with spacing at most `step`.
fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let k = (((hi - lo) / step).ceil() as usize).max(1);
    let h = (hi - lo) / k as f64;
    (0..=k).map(|i| if i == k { hi } else { lo + i as f64 * h }).collect()
}

/// Composite Simpson with an even number of panels of width at most `step`.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut k = (((hi - lo) / step).ceil() as usize).max(2);
    if k % 2 == 1 {
        k += 1;
    }
    let h = (hi - lo) / k as f64;
    let mut sum = f(lo) + f(hi);
    for i in 1..k {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

/// Drift excess on the verification grid `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftScan {
    pub grid: Vec<f64>,
    pub excess: Vec<f64>,
    pub horizon: f64,
}

fn drift_scan<D: IncrementDensity>(model: &Gig1Model<D>) -> Result<DriftScan> {
    let horizon = model.tail_horizon();
    if horizon > model.quadrature.max_horizon {
        return Err(Error::SearchExhausted { horizon });
    }
    let mut grid = uniform_grid(0.0, horizon, model.quadrature.step);
    // The kink of v1 is a candidate maximiser of the excess.
    let kink = 1.0 / model.c1().sqrt();
    if let Err(i) = grid.binary_search_by(|g| g.total_cmp(&kink)) {
        grid.insert(i, kink);
    }
    let excess = grid.iter().map(|&x| model.drift_excess(x)).collect();
    Ok(DriftScan {
        grid,
        excess,
        horizon,
    })
}

fn x0_from_scan(scan: &DriftScan) -> Result<f64> {
    match scan.excess.iter().rposition(|&r| r > 0.0) {
        None => Ok(scan.grid[1]),
        Some(k) if k + 1 < scan.grid.len() => Ok(scan.grid[k + 1]),
        Some(_) => Err(Error::SearchExhausted {
            horizon: scan.horizon,
        }),
    }
}

/// Smallest grid point past the last drift violation on `[0, horizon]`.
pub fn find_x0<D: IncrementDensity>(model: &Gig1Model<D>) -> Result<f64> {
    model.validate()?;
    x0_from_scan(&drift_scan(model)?)
}

/// Sampling table for `phi`: atom at 0 plus a piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiTable {
    pub atom: f64,
    pub edges: Vec<f64>,
    /// Cumulative mass at each edge, starting at `atom`.
    pub cumulative: Vec<f64>,
}

impl PhiTable {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let total = self.cumulative[self.cumulative.len() - 1];
        let u = rng.random::<f64>() * total;
        if u < self.atom {
            return 0.0;
        }
        let i = self
            .cumulative
            .partition_point(|&c| c <= u)
            .clamp(1, self.edges.len() - 1);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.edges[i - 1] + t * (self.edges[i] - self.edges[i - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gig1Certificate {
    pub kappa: f64,
    pub c1: f64,
    pub x0: f64,
    /// `F(-x0)`, unnormalized.
    pub atom: f64,
    pub lambda: f64,
    pub b1: f64,
    /// Equals `b1`: `max(f, 1)` enters the drift constant.
    pub b2: f64,
    pub phi_v1: f64,
    /// `inf v1 = 1`.
    pub inf_v1: f64,
    pub horizon: f64,
    pub step: f64,
    pub phi_table: PhiTable,
}

impl Gig1Certificate {
    pub fn v1(&self, x: f64) -> f64 {
        (self.c1 * x * x).max(1.0)
    }

    /// `phi({0})`.
    pub fn phi_atom(&self) -> f64 {
        self.atom / self.lambda
    }
}

pub fn build_certificate<D: IncrementDensity>(model: &Gig1Model<D>) -> Result<Gig1Certificate> {
    model.validate()?;
    let scan = drift_scan(model)?;
    let x0 = match model.x0 {
        Some(x0) => {
            if let Some((x, _)) = scan
                .grid
                .iter()
                .zip(&scan.excess)
                .find(|(&x, &r)| x > x0 && r > 0.0)
            {
                return Err(Error::InfeasibleX0 { x: *x, x0 });
            }
            x0
        }
        None => x0_from_scan(&scan)?,
    };
    build_with_x0(model, x0, &scan)
}

fn build_with_x0<D: IncrementDensity>(
    model: &Gig1Model<D>,
    x0: f64,
    scan: &DriftScan,
) -> Result<Gig1Certificate> {
    let step = model.quadrature.step;
    let c1 = model.c1();
    let (_, hi) = model.increment.support();

    let mut b1 = scan
        .grid
        .iter()
        .zip(&scan.excess)
        .filter(|(&x, _)| x <= x0)
        .map(|(_, &r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    b1 = b1.max(model.drift_excess(x0));
    let b1 = if b1 > 0.0 { b1 } else { crate::drift::MIN_DRIFT_CONSTANT };

    let atom = model.increment.cdf(-x0);
    let y_max = x0 + hi;
    let psi = |y: f64| model.psi(y, x0);
    let kink = 1.0 / c1.sqrt();
    let density_mass = simpson(psi, 0.0, y_max, step);
    let lambda = atom + density_mass;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "minorization constant {lambda} outside (0, 1)"
        )));
    }
    let v1 = |y: f64| (c1 * y * y).max(1.0);
    let split = kink.min(y_max);
    let phi_v1 = (atom
        + simpson(|y| psi(y) * v1(y), 0.0, split, step)
        + simpson(|y| psi(y) * v1(y), split, y_max, step))
        / lambda;

    let edges = uniform_grid(0.0, y_max, step);
    let mut cumulative = Vec::with_capacity(edges.len());
    let mut acc = atom;
    let mut prev = psi(0.0);
    cumulative.push(acc);
    for w in edges.windows(2) {
        let next = psi(w[1]);
        acc += 0.5 * (prev + next) * (w[1] - w[0]);
        cumulative.push(acc);
        prev = next;
    }

    Ok(Gig1Certificate {
        kappa: model.kappa,
        c1,
        x0,
        atom,
        lambda,
        b1,
        b2: b1,
        phi_v1,
        inf_v1: 1.0,
        horizon: scan.horizon,
        step,
        phi_table: PhiTable {
            atom,
            edges,
            cumulative,
        },
    })
}

/// Certificate at a fixed `x0` with a different grid step.
pub fn certificate_at<D: IncrementDensity>(model: &Gig1Model<D>, x0: f64) -> Result<Gig1Certificate> {
    let fixed = Gig1Model {
        increment: &model.increment,
        kappa: model.kappa,
        x0: Some(x0),
        quadrature: model.quadrature,
    };
    fixed.validate()?;
    let scan = drift_scan(&fixed)?;
    build_with_x0(&fixed, x0, &scan)
}

/// Largest violation of `(P v1)(x) <= v1(x) - max(x, 1) + b1 1_C(x)` over
/// `samples` uniform points in `[0, horizon]`; nonpositive means valid.
pub fn spot_check<D: IncrementDensity>(
    model: &Gig1Model<D>,
    cert: &Gig1Certificate,
    samples: usize,
    rng: &mut dyn RngCore,
) -> SpotCheck {
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let x = rng.random::<f64>() * cert.horizon;
            let allowance = if x <= cert.x0 { cert.b1 } else { 0.0 };
            (x, model.drift_excess(x) - allowance)
        })
        .collect();
    let worst = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    SpotCheck {
        points,
        worst,
        tolerance: spot_tolerance(cert),
    }
}

/// Grid-to-continuum slack: the excess has curvature of order `c1`.
pub fn spot_tolerance(cert: &Gig1Certificate) -> f64 {
    cert.c1 * cert.step * cert.step + 1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotCheck {
    /// `(x, excess - allowance)`.
    pub points: Vec<(f64, f64)>,
    pub worst: f64,
    pub tolerance: f64,
}

impl SpotCheck {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub ours_upper: f64,
    pub ours_lower: f64,
    pub ours_abs: f64,
    pub hl: f64,
    /// `ours_abs / (c1 x^2)`.
    pub ours_ratio: f64,
    /// `hl / ours_abs`.
    pub hl_over_ours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurves {
    pub comparison: HlComparison,
    pub points: Vec<CurvePoint>,
}

pub fn bound_curves(cert: &Gig1Certificate, x_grid: &[f64]) -> BoundCurves {
    let comparison = hl_comparison(cert.b1, cert.lambda, cert.phi_v1);
    let block = cert.b1 / cert.lambda;
    let points = x_grid
        .iter()
        .map(|&x| {
            let v = cert.v1(x);
            let ours_upper = v + block;
            let ours_lower = -cert.b1 * (v + block);
            let ours_abs = ours_upper.max(-ours_lower);
            let quad = cert.c1 * x * x;
            let hl = comparison.hl_coeff * quad;
            CurvePoint {
                x,
                ours_upper,
                ours_lower,
                ours_abs,
                hl,
                ours_ratio: ours_abs / quad,
                hl_over_ours: hl / ours_abs,
            }
        })
        .collect();
    BoundCurves { comparison, points }
}

/// Log-spaced grid from `x_min` out to where `c1 x^2` is `margin` times
/// the constant part `b1 / lambda`.
pub fn default_curve_grid(cert: &Gig1Certificate, points: usize, margin: f64) -> Vec<f64> {
    let x_min = 0.1_f64;
    let x_max = (margin * cert.b1 / cert.lambda / cert.c1).sqrt().max(10.0 * x_min);
    let ratio = (x_max / x_min).ln() / (points.max(2) - 1) as f64;
    (0..points.max(2))
        .map(|i| x_min * (ratio * i as f64).exp())
        .collect()
}

/// The waiting-time chain with its split-chain samplers.
pub struct Gig1Sampler<'a, D> {
    model: &'a Gig1Model<D>,
    cert: &'a Gig1Certificate,
}

impl<'a, D: IncrementDensity> Gig1Sampler<'a, D> {
    pub fn new(model: &'a Gig1Model<D>, cert: &'a Gig1Certificate) -> Self {
        Self { model, cert }
    }
}

impl<D: IncrementDensity> SamplerChain for Gig1Sampler<'_, D> {
    type State = f64;

    fn step(&self, x: &f64, rng: &mut dyn RngCore) -> f64 {
        (x + self.model.increment.sample(rng)).max(0.0)
    }

    fn charge(&self, x: &f64) -> f64 {
        *x
    }

    fn in_small_set(&self, x: &f64) -> bool {
        *x <= self.cert.x0
    }

    fn lag(&self) -> usize {
        1
    }

    fn lambda(&self) -> f64 {
        self.cert.lambda
    }

    fn sample_phi(&self, rng: &mut dyn RngCore) -> f64 {
        self.cert.phi_table.sample(rng)
    }

    /// Propose from `P(x, .)`, keep with probability `1 - lambda phi / P(x, .)`.
    fn sample_residual(&self, x: &f64, rng: &mut dyn RngCore) -> f64 {
        let inc = &self.model.increment;
        loop {
            let z = inc.sample(rng);
            let y = x + z;
            let keep = if y <= 0.0 {
                1.0 - self.cert.atom / inc.cdf(-x)
            } else {
                1.0 - self.model.psi(y, self.cert.x0) / inc.pdf(z)
            };
            if rng.random::<f64>() < keep {
                return y.max(0.0);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McPoint {
    pub x: f64,
    pub estimate: McEstimate,
    pub lower: f64,
    pub upper: f64,
    /// Inside `[lower, upper]` widened by three standard errors.
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McValidation {
    pub pi_f: McEstimate,
    pub points: Vec<McPoint>,
}

impl McValidation {
    pub fn passed(&self) -> bool {
        self.points.iter().all(|p| p.inside)
    }
}

/// Estimates `pi f` from cycles started at `phi`, then `g*(x)` per start.
pub fn mc_validate<D: IncrementDensity>(
    model: &Gig1Model<D>,
    cert: &Gig1Certificate,
    x_list: &[f64],
    cfg: &McConfig,
) -> Result<McValidation> {
    let sc = Gig1Sampler::new(model, cert);
    let pi_f = estimate_pif(&sc, cfg)?;
    let block = cert.b1 / cert.lambda;
    let points = x_list
        .iter()
        .map(|&x| {
            let e = estimate_from_start(&sc, x, pi_f.point, cfg)?.g_star;
            let upper = cert.v1(x) + block;
            let lower = -cert.b1 * (cert.v1(x) + block);
            let slack = 3.0 * e.std_error;
            Ok(McPoint {
                x,
                estimate: e,
                lower,
                upper,
                inside: e.point >= lower - slack && e.point <= upper + slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McValidation { pi_f, points })
}

/// Batch-means estimate of the long-run average of `W_n` from `W_0 = 0`.
pub fn long_run_mean<D: IncrementDensity>(
    model: &Gig1Model<D>,
    steps: usize,
    batches: usize,
    seed: u64,
) -> McEstimate {
    let mut rng = crate::split_mc::cycle_stream(seed, u64::MAX);
    let burn = steps / 10;
    let mut w = 0.0;
    for _ in 0..burn {
        w = (w + model.increment.sample(&mut rng)).max(0.0);
    }
    let per = (steps / batches.max(1)).max(1);
    let means: Vec<f64> = (0..batches.max(1))
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..per {
                w = (w + model.increment.sample(&mut rng)).max(0.0);
                s += w;
            }
            s / per as f64
        })
        .collect();
    mean_estimate(&means, seed)
}
