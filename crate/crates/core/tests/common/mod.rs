//! Brute-force reference implementations used as test oracles. Everything
//! here loops over explicit agent pairs and never goes through the
//! estimator's per-type sufficient statistics.

#![allow(dead_code)]

use netform_core::model::{logistic, BeliefMatrix, Network, TypeSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Regressor vector of the ordered pair `(i, j)` with an explicit sum over
/// third parties `k`.
pub fn pair_regressor(q: &BeliefMatrix, types: &[usize], ts: &TypeSpace, i: usize, j: usize) -> Vec<f64> {
    let n = types.len();
    let (s, t) = (types[i], types[j]);
    let mut z = ts.w(s, t).to_vec();
    z.push(q[(t, s)]);
    let third: f64 = (0..n).filter(|&k| k != i && k != j).map(|k| q[(t, types[k])]).sum();
    z.push(third / (n - 2) as f64);
    z
}

pub struct Instance {
    pub types: Vec<usize>,
    pub network: Network,
    pub q: BeliefMatrix,
    pub ts: TypeSpace,
    /// `z[i][j]`, empty on the diagonal.
    pub z: Vec<Vec<Vec<f64>>>,
}

impl Instance {
    pub fn new(types: Vec<usize>, network: Network, q: BeliefMatrix, ts: TypeSpace) -> Self {
        let n = types.len();
        let z = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Vec::new() } else { pair_regressor(&q, &types, &ts, i, j) })
                    .collect()
            })
            .collect();
        Self {
            types,
            network,
            q,
            ts,
            z,
        }
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn index(&self, beta: &[f64], a: f64, i: usize, j: usize) -> f64 {
        self.z[i][j].iter().zip(beta).map(|(z, b)| z * b).sum::<f64>() + a
    }

    /// Pair-averaged Bernoulli log-likelihood, written out term by term.
    pub fn loglik(&self, beta: &[f64], a: &[f64]) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let p = logistic(self.index(beta, a[i], i, j));
                total += if self.network.get(i, j) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        total / (n * (n - 1)) as f64
    }

    /// Agent `i`'s fixed effect maximizing its own likelihood slice, by
    /// safeguarded Newton on the first-order condition. `None` when the
    /// out-degree is 0 or `n - 1`.
    pub fn agent_newton(&self, beta: &[f64], i: usize) -> Option<f64> {
        let n = self.n();
        let deg = self.network.out_degree(i);
        if deg == 0 || deg == n - 1 {
            return None;
        }
        let foc = |a: f64| -> (f64, f64) {
            let mut g = 0.0;
            let mut h = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                let p = logistic(self.index(beta, a, i, j));
                g += f64::from(u8::from(self.network.get(i, j))) - p;
                h += p * (1.0 - p);
            }
            (g, h)
        };
        // bracket then Newton inside it
        let (mut lo, mut hi) = (-60.0, 60.0);
        let mut a = 0.0;
        for _ in 0..200 {
            let (g, h) = foc(a);
            if g > 0.0 {
                lo = a;
            } else {
                hi = a;
            }
            let mut next = a + g / h;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - a).abs() < 1e-15 {
                return Some(next);
            }
            a = next;
        }
        Some(a)
    }

    /// Profile log-likelihood with every interior agent at its own maximizer
    /// and degenerate agents at the given bounds.
    pub fn profile(&self, beta: &[f64], bounds: (f64, f64)) -> (f64, Vec<f64>) {
        let n = self.n();
        let a: Vec<f64> = (0..n)
            .map(|i| {
                self.agent_newton(beta, i).map(|v| v.clamp(bounds.0, bounds.1)).unwrap_or_else(|| {
                    if self.network.out_degree(i) == 0 {
                        bounds.0
                    } else {
                        bounds.1
                    }
                })
            })
            .collect();
        (self.loglik(beta, &a), a)
    }

    /// Gradient and Hessian of the joint log-likelihood in `(beta, A)`
    /// (unnormalized), from pairwise loops.
    pub fn joint_derivatives(&self, beta: &[f64], a: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n();
        let d = beta.len();
        let k = d + n;
        let mut g = vec![0.0; k];
        let mut h = vec![vec![0.0; k]; k];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let z = &self.z[i][j];
                let p = logistic(self.index(beta, a[i], i, j));
                let r = f64::from(u8::from(self.network.get(i, j))) - p;
                let w = p * (1.0 - p);
                let mut x = z.clone();
                x.resize(k, 0.0);
                x[d + i] = 1.0;
                for u in 0..k {
                    g[u] += r * x[u];
                    if x[u] == 0.0 {
                        continue;
                    }
                    for v in 0..k {
                        h[u][v] -= w * x[u] * x[v];
                    }
                }
            }
        }
        (g, h)
    }
}

/// A random network with agent-specific link propensities.
pub fn random_instance(seed: u64, n: usize, ts: &TypeSpace) -> Instance {
    let mut r = rng(seed);
    let n_types = ts.len();
    let types: Vec<usize> = loop {
        let t: Vec<usize> = (0..n).map(|_| r.random_range(0..n_types)).collect();
        let mut counts = vec![0usize; n_types];
        t.iter().for_each(|&x| counts[x] += 1);
        if counts.iter().all(|&c| c >= 2) {
            break t;
        }
    };
    let propensity: Vec<f64> = (0..n).map(|_| r.random_range(0.2..0.7)).collect();
    let mut g = Network::empty(n);
    for i in 0..n {
        for j in 0..n {
            let bump = if types[i] == types[j] { 0.15 } else { -0.1 };
            if i != j && r.random::<f64>() < (propensity[i] + bump).clamp(0.02, 0.98) {
                g.set(i, j, true);
            }
        }
    }
    let (q, _) = netform_core::estimate::first_step(&g, &types, n_types).expect("all cells populated");
    Instance::new(types, g, q, ts.clone())
}

pub fn three_type_space() -> TypeSpace {
    TypeSpace::abs_diff(vec![-1.0, 0.0, 1.0], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])
}

/// Root of `f` on `[lo, hi]` by bisection, assuming a sign change.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
