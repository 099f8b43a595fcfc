//! Gauss–Hermite discretization of normal laws.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::WeightedNode;

/// Nodes and probability weights of the `n_nodes`-point Gauss–Hermite rule
/// for `N(mean, variance)`. A zero variance yields a single point mass.
///
/// Built with Golub–Welsch on the probabilists' Hermite Jacobi matrix, so the
/// rule integrates polynomials up to degree `2 n_nodes - 1` exactly.
pub fn discretize_normal(mean: f64, variance: f64, n_nodes: usize) -> Result<Vec<WeightedNode>> {
    if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
        return Err(Error::InvalidInput(format!(
            "normal law needs finite mean and variance >= 0, got N({mean}, {variance})"
        )));
    }
    if n_nodes == 0 {
        return Err(Error::InvalidInput("n_nodes must be at least 1".into()));
    }
    if variance == 0.0 || n_nodes == 1 {
        return Ok(vec![WeightedNode { node: mean, weight: 1.0 }]);
    }

    let jacobi = DMatrix::from_fn(n_nodes, n_nodes, |r, c| {
        if r + 1 == c {
            (c as f64).sqrt()
        } else if c + 1 == r {
            (r as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n_nodes)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Symmetrize: the exact rule is symmetric about 0, eigen-solver noise is not.
    let n = rule.len();
    for k in 0..n / 2 {
        let x = 0.5 * (rule[n - 1 - k].0 - rule[k].0);
        let w = 0.5 * (rule[n - 1 - k].1 + rule[k].1);
        rule[k] = (-x, w);
        rule[n - 1 - k] = (x, w);
    }
    if n % 2 == 1 {
        rule[n / 2].0 = 0.0;
    }

    let total: f64 = rule.iter().map(|r| r.1).sum();
    let sd = variance.sqrt();
    Ok(rule
        .into_iter()
        .map(|(x, w)| WeightedNode {
            node: mean + sd * x,
            weight: w / total,
        })
        .collect())
}
