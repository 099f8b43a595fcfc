//! Plug-in sandwich variance for `beta_hat`.
//!
//! `I0` is the information matrix with the fixed effects profiled out and
//! `Omega` the variance of the first-step error propagated through the
//! score. Standard errors are `sqrt([I0^-1 Omega I0^-1]_kk / n)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{RegressorSet, RANK_TOLERANCE};
use crate::model::{logistic, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub i0_hat: Vec<Vec<f64>>,
    pub omega_hat: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub method: String,
}

pub const ANALYTIC_PLUGIN: &str = "analytic-plugin";
pub const MC_EMPIRICAL: &str = "mc-empirical";

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn check_dims(beta: &[f64], a: &[f64], regressors: &RegressorSet) -> Result<()> {
    if beta.len() != regressors.dim() || a.len() != regressors.n() {
        return Err(Error::InvalidInput(format!(
            "beta ({}) / fixed effects ({}) do not match regressors (d = {}, n = {})",
            beta.len(),
            a.len(),
            regressors.dim(),
            regressors.n()
        )));
    }
    Ok(())
}

/// Sample analogue of `I0`:
/// `-(n(n-1))^-1 sum_i sum_j w_ij Z Z' + (n(n-1))^-1 sum_i h_i h_i' / sum_j w_ij`
/// with `w = Q(1-Q)` and `h_i = sum_j w_ij Z_ij`.
pub fn info_matrix(beta: &[f64], a: &[f64], regressors: &RegressorSet) -> Result<DMatrix<f64>> {
    check_dims(beta, a, regressors)?;
    let d = regressors.dim();
    let nt = regressors.n_types();
    let u = regressors.index_table(beta);
    let mut m = DMatrix::<f64>::zeros(d, d);
    let mut h = vec![0.0; d];
    for (i, &ai) in a.iter().enumerate() {
        let s = regressors.types()[i];
        h.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for t in 0..nt {
            let c = regressors.trials(i, t) as f64;
            if c == 0.0 {
                continue;
            }
            let p = logistic(u[s * nt + t] + ai);
            let w = c * p * (1.0 - p);
            let z = regressors.z(s, t);
            for r in 0..d {
                h[r] += w * z[r];
                for k in r..d {
                    m[(r, k)] -= w * z[r] * z[k];
                }
            }
            total += w;
        }
        if !(total > 0.0) {
            return Err(Error::SingularAgentBlock { agent: i, variance: total });
        }
        for r in 0..d {
            for k in r..d {
                m[(r, k)] += h[r] * h[k] / total;
            }
        }
    }
    let n = regressors.n() as f64;
    let norm = n * (n - 1.0);
    for r in 0..d {
        for k in r..d {
            m[(r, k)] /= norm;
            m[(k, r)] = m[(r, k)];
        }
    }
    Ok(m)
}

/// Realized counterpart of `Z_ij`: the observed reciprocal link and the
/// observed out-degree of `j` net of the link to `i`.
pub fn zeta(regressors: &RegressorSet, network: &Network, i: usize, j: usize) -> Vec<f64> {
    let n = regressors.n();
    let mut z = regressors.z_ij(i, j).to_vec();
    let d = z.len();
    let back = f64::from(u8::from(network.get(j, i)));
    z[d - 2] = back;
    z[d - 1] = (network.out_degree(j) as f64 - back) / (n - 2) as f64;
    z
}

/// Per-agent first-step influence terms
/// `V_i = n^-1 sum_{j != i} M_ij (zeta_ij - Z_ij)` with
/// `M_ij = h_i w_ij beta' + w_ij Z_ij beta' + Q_ij I`.
pub fn influence_terms(beta: &[f64], a: &[f64], regressors: &RegressorSet, network: &Network) -> Result<Vec<Vec<f64>>> {
    check_dims(beta, a, regressors)?;
    if network.n() != regressors.n() {
        return Err(Error::InvalidInput("network and regressors disagree on n".into()));
    }
    let n = regressors.n();
    let d = regressors.dim();
    let nt = regressors.n_types();
    let u = regressors.index_table(beta);
    let types = regressors.types();
    let mut out = Vec::with_capacity(n);
    for (i, &ai) in a.iter().enumerate() {
        let s = types[i];
        let probs: Vec<f64> = (0..nt).map(|t| logistic(u[s * nt + t] + ai)).collect();

        let mut h = vec![0.0; d];
        let mut total = 0.0;
        for t in 0..nt {
            let c = regressors.trials(i, t) as f64;
            let w = c * probs[t] * (1.0 - probs[t]);
            for (hr, z) in h.iter_mut().zip(regressors.z(s, t)) {
                *hr += w * z;
            }
            total += w;
        }
        if total > 0.0 {
            h.iter_mut().for_each(|v| *v /= total);
        }

        let mut v = vec![0.0; d];
        for j in (0..n).filter(|&j| j != i) {
            let t = types[j];
            let q = probs[t];
            let w = q * (1.0 - q);
            let z = regressors.z(s, t);
            let zeta = zeta(regressors, network, i, j);
            let delta: Vec<f64> = zeta.iter().zip(z).map(|(a, b)| a - b).collect();
            let bd: f64 = beta.iter().zip(&delta).map(|(b, x)| b * x).sum();
            for r in 0..d {
                v[r] += (h[r] + z[r]) * w * bd + q * delta[r];
            }
        }
        v.iter_mut().for_each(|x| *x /= n as f64);
        out.push(v);
    }
    Ok(out)
}

/// `n^-1 sum_i V_i V_i'`.
pub fn omega_hat(beta: &[f64], a: &[f64], regressors: &RegressorSet, network: &Network) -> Result<DMatrix<f64>> {
    Ok(gram(&influence_terms(beta, a, regressors, network)?, regressors.dim()))
}

fn gram(terms: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(d, d);
    for v in terms {
        for r in 0..d {
            for k in r..d {
                m[(r, k)] += v[r] * v[k];
            }
        }
    }
    let n = terms.len().max(1) as f64;
    for r in 0..d {
        for k in r..d {
            m[(r, k)] /= n;
            m[(k, r)] = m[(r, k)];
        }
    }
    m
}

/// `se_k = sqrt([I0^-1 Omega I0^-1]_kk / n)`.
pub fn std_errors(i0_hat: &DMatrix<f64>, omega_hat: &DMatrix<f64>, n: usize) -> Result<Vec<f64>> {
    let d = i0_hat.nrows();
    if i0_hat.ncols() != d || omega_hat.shape() != (d, d) || n == 0 {
        return Err(Error::InvalidInput("std_errors: dimension mismatch".into()));
    }
    if i0_hat.iter().chain(omega_hat.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("variance inputs".into()));
    }
    let sym = (i0_hat + i0_hat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |m, l| m.min(l.abs()));
    if !(scale > 0.0) || smallest <= RANK_TOLERANCE * scale {
        return Err(Error::SingularMatrix(format!(
            "information matrix eigenvalues range over [{smallest:.3e}, {scale:.3e}] in magnitude"
        )));
    }
    let inv = eig.eigenvectors.clone()
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let sandwich = &inv * omega_hat * &inv;
    Ok((0..d).map(|k| (sandwich[(k, k)].max(0.0) / n as f64).sqrt()).collect())
}

/// Full plug-in report at an estimate.
pub fn analytic_variance(beta: &[f64], a: &[f64], regressors: &RegressorSet, network: &Network) -> Result<VarianceReport> {
    let i0 = info_matrix(beta, a, regressors)?;
    let omega = omega_hat(beta, a, regressors, network)?;
    let se = std_errors(&i0, &omega, regressors.n())?;
    Ok(VarianceReport {
        i0_hat: to_rows(&i0),
        omega_hat: to_rows(&omega),
        se,
        method: ANALYTIC_PLUGIN.to_string(),
    })
}
