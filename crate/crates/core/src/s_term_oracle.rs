//! Best `s`-term estimators from samples: exhaustive support search, a
//! greedy comparator, and tail quantities of coefficient-defined functions.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::COMBINATORIAL_LIMIT;
use crate::sparse_coding::SparseCode;
use crate::stats::binomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub code: SparseCode,
    /// `|y - D w|_(2,m) = sqrt(mean of squared residuals)`.
    pub empirical_residual: f64,
    /// Selected columns, ascending.
    pub support: Vec<usize>,
    pub p: f64,
}

/// Residual norm, support, coefficients and residual of a candidate fit.
type Candidate = (f64, Vec<usize>, DVector<f64>, DVector<f64>);

fn empirical_norm(r: &DVector<f64>) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    (r.norm_squared() / r.len() as f64).sqrt()
}

/// Minimum-norm least squares on the columns `support` of `d`.
fn least_squares(d: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> (DVector<f64>, DVector<f64>) {
    if support.is_empty() {
        return (DVector::zeros(0), y.clone());
    }
    let sub = d.select_columns(support);
    let svd = sub.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * f64::EPSILON * d.nrows().max(support.len()) as f64;
    let coef = svd.solve(y, tol).unwrap_or_else(|_| DVector::zeros(support.len()));
    let residual = y - sub * &coef;
    (coef, residual)
}

fn assemble(n: usize, s: usize, support: Vec<usize>, coef: &DVector<f64>, residual: &DVector<f64>) -> OracleResult {
    let mut w = vec![0.0; n];
    for (k, &i) in support.iter().enumerate() {
        w[i] = coef[k];
    }
    OracleResult { code: SparseCode::new(w, s), empirical_residual: empirical_norm(residual), support, p: 2.0 }
}

fn check_inputs(d: &DMatrix<f64>, y: &[f64], s: usize, p: f64) -> Result<()> {
    if p != 2.0 {
        return Err(Error::Unsupported(format!("only p = 2 is implemented, got {p}")));
    }
    if y.len() != d.nrows() {
        return Err(Error::DimensionMismatch { expected: d.nrows(), got: y.len() });
    }
    if s > d.ncols() {
        return Err(Error::Sparsity { s, reason: format!("exceeds the number of columns {}", d.ncols()) });
    }
    Ok(())
}

/// Globally best `s`-column least-squares fit of `y` over all supports.
///
/// Rank-deficient subproblems use the minimum-norm solution. A support only
/// replaces the incumbent when its residual is smaller beyond round-off, so
/// ties resolve to the lexicographically lowest support.
pub fn best_s_term_exhaustive(d: &DMatrix<f64>, y: &[f64], s: usize, p: f64) -> Result<OracleResult> {
    check_inputs(d, y, s, p)?;
    let n = d.ncols();
    let count = binomial(n, s);
    if count > COMBINATORIAL_LIMIT {
        return Err(Error::TooLarge { count, limit: COMBINATORIAL_LIMIT, hint: "use omp instead".into() });
    }
    let y = DVector::from_column_slice(y);
    let mut best: Option<Candidate> = None;
    for support in (0..n).combinations(s) {
        let (coef, residual) = least_squares(d, &y, &support);
        let r = empirical_norm(&residual);
        let better = match &best {
            None => true,
            Some((b, ..)) => r < b - 1e-13 * (1.0 + b),
        };
        if better {
            best = Some((r, support, coef, residual));
        }
    }
    let (_, support, coef, residual) = best.expect("at least one support");
    Ok(assemble(n, s, support, &coef, &residual))
}

/// Orthogonal matching pursuit: pick the column with the largest normalized
/// correlation with the residual (lowest index on ties), refit, repeat.
pub fn omp(d: &DMatrix<f64>, y: &[f64], s: usize) -> Result<OracleResult> {
    check_inputs(d, y, s, 2.0)?;
    if s > d.nrows() {
        return Err(Error::Sparsity { s, reason: format!("exceeds the number of samples {}", d.nrows()) });
    }
    let n = d.ncols();
    let norms: Vec<f64> = d.column_iter().map(|c| c.norm()).collect();
    let y = DVector::from_column_slice(y);
    let mut chosen: Vec<usize> = Vec::with_capacity(s);
    let mut coef = DVector::zeros(0);
    let mut residual = y.clone();
    for _ in 0..s {
        let corr = d.tr_mul(&residual);
        let mut pick = None;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            if chosen.contains(&i) || norms[i] == 0.0 {
                continue;
            }
            let c = corr[i].abs() / norms[i];
            if c > best {
                best = c;
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        chosen.push(i);
        chosen.sort_unstable();
        (coef, residual) = least_squares(d, &y, &chosen);
    }
    Ok(assemble(n, s, chosen, &coef, &residual))
}

/// Indices of the `s` largest `|c_i|`, ties to the lowest index, ascending.
pub fn top_s_support(coeffs: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..coeffs.len()).collect();
    order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(s).collect();
    top.sort_unstable();
    top
}

/// `coeffs` with the top `s` entries zeroed.
pub fn tail_coefficients(coeffs: &[f64], s: usize) -> Vec<f64> {
    let mut tail = coeffs.to_vec();
    for i in top_s_support(coeffs, s) {
        tail[i] = 0.0;
    }
    tail
}

/// Sum of `|c_i|` outside the `s` largest. Bounds the best `s`-term error in
/// the sup norm whenever every element has sup norm at most 1.
pub fn sigma_s_tail_bound(coeffs: &[f64], s: usize) -> f64 {
    tail_coefficients(coeffs, s).iter().map(|c| c.abs()).sum()
}

/// Exact best `s`-term error in `L2(nu)` for an orthogonal dictionary:
/// `sqrt(gamma * sum of squared tail coefficients)`.
pub fn sigma_s_l2_orthogonal(coeffs: &[f64], s: usize, gamma: f64) -> f64 {
    (gamma * tail_coefficients(coeffs, s).iter().map(|c| c * c).sum::<f64>()).sqrt()
}

/// Norm of the dropped tail under the mixture of `nu` and the empirical
/// measure of the samples whose dictionary values form the rows of `d`:
/// `sqrt(gamma |tail|^2 / 2 + mean_t (D tail)_t^2 / 2)`. An upper bound on the
/// best `s`-term error in that mixture norm.
pub fn sigma_s_mixture(d: &DMatrix<f64>, gamma: f64, coeffs: &[f64], s: usize) -> Result<f64> {
    if coeffs.len() != d.ncols() {
        return Err(Error::DimensionMismatch { expected: d.ncols(), got: coeffs.len() });
    }
    let tail = DVector::from_vec(tail_coefficients(coeffs, s));
    let exact = gamma * tail.norm_squared();
    let sampled = (d * &tail).norm_squared() / d.nrows() as f64;
    Ok((0.5 * exact + 0.5 * sampled).sqrt())
}

/// `s^(-alpha - 1/2) + dist`.
pub fn sigma_bound_a1alpha(alpha: f64, s: usize, dist: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::Sparsity { s, reason: "bound needs s >= 1".into() });
    }
    Ok((s as f64).powf(-alpha - 0.5) + dist)
}

/// Constant of the sampled best `s`-term estimator bound,
/// `2^(1/p) (1 + 2 k) + 2^(1/p) C1^(-1/p) (2 + 2 k)` with `k = (1 + 1/C1)^(1/p)`.
pub fn estimator_bound_constant(p: f64, c1: f64) -> Result<f64> {
    if !(c1 > 0.0 && c1 <= 1.0) {
        return Err(Error::InvalidArgument(format!("C1 must lie in (0, 1], got {c1}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let q = 1.0 / p;
    let k = (1.0 + 1.0 / c1).powf(q);
    let two = 2f64.powf(q);
    Ok(two * (1.0 + 2.0 * k) + two * c1.powf(-q) * (2.0 + 2.0 * k))
}
