#![allow(dead_code)]

use poisson_core::drift::{minorize, verify_bundle, verify_potential};
use poisson_core::split_exact::Hitting;
use poisson_core::{CertificateBundle, FiniteChain, PotentialCertificate, StateFunction, StateSet};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INSTANCE_SEED: u64 = 20_240_917;

pub struct Instance {
    pub name: String,
    pub chain: FiniteChain,
    pub period: usize,
    pub bundle: CertificateBundle,
    pub potential: PotentialCertificate,
}

pub fn running_chain() -> FiniteChain {
    FiniteChain::new(vec![vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap()
}

pub fn running_instance() -> Instance {
    let chain = running_chain();
    let sf = |v: &[f64]| StateFunction::nonnegative(v.to_vec()).unwrap();
    let c = StateSet::new(2, &[0]).unwrap();
    let bundle =
        verify_bundle(&chain, &sf(&[1.0, 0.0]), &sf(&[1.0, 4.0]), &sf(&[1.0, 5.0]), &c, 1, None)
            .unwrap();
    let potential = verify_potential(&chain, &bundle, &sf(&[1.0, 17.0]), &sf(&[1.0, 21.0])).unwrap();
    Instance {
        name: "running".into(),
        chain,
        period: 1,
        bundle,
        potential,
    }
}

fn normalize(rows: &mut [Vec<f64>]) {
    for row in rows.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
}

/// Irreducible with a self-loop at 0.
fn aperiodic_kernel(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    for (x, row) in rows.iter_mut().enumerate() {
        for (y, p) in row.iter_mut().enumerate() {
            if rng.random_bool(density) {
                *p = rng.random_range(0.0..1.0);
            }
            if y == (x + 1) % n {
                *p += rng.random_range(0.5..1.0);
            }
        }
    }
    rows[0][0] += rng.random_range(0.1..1.0);
    normalize(&mut rows);
    rows
}

/// State `x` lives in class `x mod p`; every class feeds all of the next.
fn periodic_kernel(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0; n]; n];
    for (x, row) in rows.iter_mut().enumerate() {
        for (y, q) in row.iter_mut().enumerate() {
            if y % p == (x + 1) % p {
                *q = rng.random_range(0.1..1.0);
            }
        }
    }
    normalize(&mut rows);
    rows
}

/// Lyapunov functions from pre-entrance sums: `u_h` is zero on `C` and
/// satisfies `P u_h = u_h - h` off `C`.
fn certify(chain: FiniteChain, c: StateSet, lag: usize, f: Vec<f64>, name: String) -> Option<Instance> {
    let small = minorize(&chain, &c, lag).ok()?;
    if small.lambda < 1e-3 {
        return None;
    }
    let n = chain.n();
    let hit = Hitting::new(&chain, &c).ok()?;
    let shifted = |h: &[f64], d: f64| StateFunction::new(h.iter().map(|v| v + d).collect()).unwrap();
    let f = StateFunction::nonnegative(f).unwrap();
    let v1 = hit.pre_hit_sum(&shifted(&f, 0.1)).ok()?;
    let v2 = hit.pre_hit_sum(&StateFunction::constant(n, 1.1)).ok()?;
    let bundle = verify_bundle(&chain, &f, &v1, &v2, &c, lag, None).ok()?;
    let v3 = hit.pre_hit_sum(&shifted(&v1, 0.1)).ok()?;
    let v4 = hit.pre_hit_sum(&shifted(&v2, 0.1)).ok()?;
    let potential = verify_potential(&chain, &bundle, &v3, &v4).ok()?;
    let period = chain.cyclic_decomposition().ok()?.period;
    Some(Instance {
        name,
        chain,
        period,
        bundle,
        potential,
    })
}

fn random_charge(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..5.0)).collect()
}

/// `aperiodic` irreducible chains with lags cycling through 1, 2, 3, then
/// `periodic` chains with period 2 or 3.
pub fn instances(aperiodic: usize, periodic: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(INSTANCE_SEED);
    let mut out = Vec::new();
    while out.len() < aperiodic {
        let lag = 1 + out.len() % 3;
        let n = rng.random_range(2..=20);
        let density = rng.random_range(0.2..0.7);
        let chain = FiniteChain::new(aperiodic_kernel(&mut rng, n, density)).unwrap();
        let size = rng.random_range(1..=n.min(3));
        let members = sample(&mut rng, n, size).into_vec();
        let c = StateSet::new(n, &members).unwrap();
        let f = random_charge(&mut rng, n);
        let name = format!("aperiodic-{}-n{}-m{}", out.len(), n, lag);
        out.extend(certify(chain, c, lag, f, name));
    }
    let mut k = 0;
    while k < periodic {
        let p = 2 + k % 2;
        let lag = 1 + (k / 2) % 3;
        let n = rng.random_range(p..=20);
        let chain = FiniteChain::new(periodic_kernel(&mut rng, n, p)).unwrap();
        let class0: Vec<usize> = (0..n).filter(|x| x % p == 0).collect();
        let size = rng.random_range(1..=class0.len().min(3));
        let members: Vec<usize> = sample(&mut rng, class0.len(), size)
            .into_iter()
            .map(|i| class0[i])
            .collect();
        let c = StateSet::new(n, &members).unwrap();
        let f = random_charge(&mut rng, n);
        let name = format!("periodic-{}-p{}-n{}-m{}", k, p, n, lag);
        if let Some(inst) = certify(chain, c, lag, f, name) {
            assert_eq!(inst.period, p);
            out.push(inst);
            k += 1;
        }
    }
    out
}
