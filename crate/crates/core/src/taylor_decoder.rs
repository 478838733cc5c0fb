//! Localized Taylor approximation on the sparse coordinate set
//! `A_s = { x in [-1/2, 1/2]^d : at most s nonzero coordinates }`.
//!
//! A trapezoidal partition of unity `h_m`, `m in {0..N}^d`, localizes Taylor
//! polynomials of order `r` around the cell centers `x_m = -1/2 + m/N`. Only
//! cells whose bump does not vanish identically on `A_s` are kept.

use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::sampling::COMBINATORIAL_LIMIT;
use crate::stats::binomial;

/// One-dimensional trapezoid centered at `-1/2 + m/N`: 1 within `1/(3N)` of
/// the center, linear down to 0 at distance `2/(3N)`.
pub fn bump(x: f64, m: usize, n: usize) -> f64 {
    let nf = n as f64;
    let r = (x - center(m, n)).abs();
    if r <= 1.0 / (3.0 * nf) {
        1.0
    } else if r < 2.0 / (3.0 * nf) {
        2.0 - 3.0 * nf * r
    } else {
        0.0
    }
}

pub fn center(m: usize, n: usize) -> f64 {
    -0.5 + m as f64 / n as f64
}

/// Cells `m` with `bump(x, m, N) > 0`, ascending (at most two).
fn live_cells(x: f64, n: usize) -> Vec<(usize, f64)> {
    let guess = ((x + 0.5) * n as f64).round() as i64;
    (guess - 1..=guess + 1)
        .filter(|&m| 0 <= m && m <= n as i64)
        .filter_map(|m| {
            let v = bump(x, m as usize, n);
            (v > 0.0).then_some((m as usize, v))
        })
        .collect()
}

/// Nonzero `h_m(x) = prod_i bump(x_i, m_i, N)` with their cells.
fn live_products(x: &[f64], n: usize) -> Vec<(Vec<u32>, f64)> {
    let per_axis: Vec<Vec<(usize, f64)>> = x.iter().map(|&t| live_cells(t, n)).collect();
    per_axis
        .iter()
        .map(|c| c.iter())
        .multi_cartesian_product()
        .map(|combo| {
            let cell = combo.iter().map(|(m, _)| *m as u32).collect();
            let h = combo.iter().map(|(_, v)| *v).product();
            (cell, h)
        })
        .collect()
}

fn points_1d(resolution: usize) -> Vec<f64> {
    if resolution <= 1 {
        return vec![0.0];
    }
    (0..resolution).map(|j| -0.5 + j as f64 / (resolution - 1) as f64).collect()
}

/// Maximum of `|sum_m h_m(x) - 1|` over a tensor grid of `[-1/2, 1/2]^d`
/// with `grid_resolution` points per axis, endpoints included.
pub fn partition_check(n: usize, d: usize, grid_resolution: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("partition needs N >= 1".into()));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let axis = points_1d(grid_resolution);
    let worst = (0..d)
        .map(|_| axis.iter().copied())
        .multi_cartesian_product()
        .par_bridge()
        .map(|x| {
            let total: f64 = live_products(&x, n).iter().map(|(_, h)| h).sum();
            (total - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// `2^d (N+1)^s C(d, s)`.
pub fn active_cell_bound(d: usize, n: usize, s: usize) -> f64 {
    2f64.powi(d as i32) * ((n + 1) as f64).powi(s as i32) * binomial(d, s)
}

/// Cells whose bump does not vanish identically on `A_s`, sorted, together
/// with the counting bound.
pub fn active_cells(d: usize, n: usize, s: usize) -> Result<(Vec<Vec<u32>>, f64)> {
    if s == 0 || s > d {
        return Err(Error::Sparsity { s, reason: format!("need 1 <= s <= d = {d}") });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("partition needs N >= 1".into()));
    }
    let bound = active_cell_bound(d, n, s);
    let enumerated = ((n + 1) as f64).powi(s as i32) * binomial(d, s);
    if enumerated > COMBINATORIAL_LIMIT {
        return Err(Error::TooLarge { count: enumerated, limit: COMBINATORIAL_LIMIT, hint: "reduce N or s".into() });
    }
    // cells whose bump is positive somewhere on the hyperplane x_i = 0
    let zero_cells: Vec<u32> = (0..=n).filter(|&m| bump(0.0, m, n) > 0.0).map(|m| m as u32).collect();
    let all: Vec<u32> = (0..=n as u32).collect();
    let mut set = std::collections::BTreeSet::new();
    for gamma in (0..d).combinations(s) {
        let choices: Vec<&Vec<u32>> = (0..d).map(|i| if gamma.contains(&i) { &all } else { &zero_cells }).collect();
        for cell in choices.iter().map(|c| c.iter().copied()).multi_cartesian_product() {
            set.insert(cell);
        }
    }
    Ok((set.into_iter().collect(), bound))
}

/// A function on `[-1/2, 1/2]^d` with optional partial derivatives.
pub trait TaylorTarget: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `d^n f(x)` for a multi-index `n`; `None` when unavailable.
    fn derivative(&self, _x: &[f64], _n: &[u32]) -> Option<f64> {
        None
    }
}

/// Value-only target wrapping a closure.
pub struct FnTarget<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> TaylorTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// All multi-indices in `N_0^d` with `|n|_1 <= r`, graded then lexicographic.
pub fn multi_indices(d: usize, r: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=r {
        for n in (0..d).map(|_| 0..=total).multi_cartesian_product() {
            if n.iter().sum::<u32>() == total {
                out.push(n);
            }
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `f_N(x) = sum_(m in Lambda) h_m(x) P_m(x)`.
#[derive(Debug, Clone, Serialize)]
pub struct TaylorApproximant {
    pub d: usize,
    pub n_cells: usize,
    pub s: usize,
    pub r: u32,
    pub beta: f64,
    /// Active cells, sorted.
    pub cells: Vec<Vec<u32>>,
    /// Per multi-index `n` (see `multi_indices`), `d^n f(x_m) / n!` for each cell.
    pub indices: Vec<Vec<u32>>,
    pub coefficients: Vec<Vec<f64>>,
    #[serde(skip)]
    lookup: HashMap<Vec<u32>, usize>,
}

impl TaylorApproximant {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (cell, h) in live_products(x, self.n_cells) {
            let Some(&k) = self.lookup.get(&cell) else { continue };
            let xm: Vec<f64> = cell.iter().map(|&m| center(m as usize, self.n_cells)).collect();
            let p: f64 = self
                .indices
                .iter()
                .zip(&self.coefficients[k])
                .map(|(n, a)| {
                    a * n.iter().zip(x.iter().zip(&xm)).map(|(&e, (xi, ci))| (xi - ci).powi(e as i32)).product::<f64>()
                })
                .sum();
            total += h * p;
        }
        total
    }
}

/// Builds the localized Taylor approximant of order `r` on the active cells.
pub fn localized_taylor<T: TaylorTarget + ?Sized>(
    f: &T,
    r: u32,
    beta: f64,
    n: usize,
    s: usize,
) -> Result<TaylorApproximant> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1], got {beta}")));
    }
    let d = f.dim();
    let (cells, _) = active_cells(d, n, s)?;
    let indices = multi_indices(d, r);
    let coefficients: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|cell| {
            let xm: Vec<f64> = cell.iter().map(|&m| center(m as usize, n)).collect();
            indices
                .iter()
                .map(|ni| {
                    let raw = if ni.iter().all(|&e| e == 0) {
                        Some(f.value(&xm))
                    } else {
                        f.derivative(&xm, ni)
                    };
                    raw.map(|v| v / ni.iter().map(|&e| factorial(e)).product::<f64>())
                        .ok_or_else(|| Error::Contract(format!("order {r} needs the derivative {ni:?}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let lookup = cells.iter().cloned().enumerate().map(|(k, c)| (c, k)).collect();
    Ok(TaylorApproximant { d, n_cells: n, s, r, beta, cells, indices, coefficients, lookup })
}

/// `2^d d^r / r! (d/N)^(r + beta)`.
pub fn taylor_error_bound(d: usize, r: u32, beta: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    let df = d as f64;
    Ok(2f64.powi(d as i32) * df.powi(r as i32) / factorial(r) * (df / n as f64).powf(r as f64 + beta))
}

/// Grid parameter and product tolerance reaching accuracy `eps` with the
/// network construction: `N = ceil((r! eps / (2^(d+1) d^(2r+beta)))^(-1/(r+beta)))`
/// and `delta = eps / (2^(d+1) d^r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorBudget {
    pub n_cells: usize,
    pub delta: f64,
    pub active_cells_bound: f64,
    /// `2^d (N+1)^s C(d,s) d^r |ln delta|`, the parameter count up to a constant.
    pub parameter_proxy: f64,
}

pub fn budget_for_tolerance(d: usize, s: usize, r: u32, beta: f64, eps: f64) -> Result<TaylorBudget> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {eps}")));
    }
    let df = d as f64;
    let order = r as f64 + beta;
    let base = factorial(r) * eps / (2f64.powi(d as i32 + 1) * df.powf(2.0 * r as f64 + beta));
    let n_cells = base.powf(-1.0 / order).ceil().max(1.0) as usize;
    let delta = eps / (2f64.powi(d as i32 + 1) * df.powi(r as i32));
    let active_cells_bound = active_cell_bound(d, n_cells, s);
    let parameter_proxy = active_cells_bound * df.powi(r as i32) * delta.ln().abs();
    Ok(TaylorBudget { n_cells, delta, active_cells_bound, parameter_proxy })
}

/// `g(z) = f(2B z)` on `[-1/2, 1/2]^d` for `f` on `[-B, B]^d`.
pub struct Rescaled<'a, T: ?Sized> {
    inner: &'a T,
    scale: f64,
}

impl<T: TaylorTarget + ?Sized> TaylorTarget for Rescaled<'_, T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let x: Vec<f64> = z.iter().map(|v| v * self.scale).collect();
        self.inner.value(&x)
    }

    fn derivative(&self, z: &[f64], n: &[u32]) -> Option<f64> {
        let x: Vec<f64> = z.iter().map(|v| v * self.scale).collect();
        let order: u32 = n.iter().sum();
        self.inner.derivative(&x, n).map(|v| v * self.scale.powi(order as i32))
    }
}

/// Rescales to the unit cube; the Hölder norm grows by at most `1 + (2B)^beta`.
pub fn rescale_holder<T: TaylorTarget + ?Sized>(f: &T, b: f64, beta: f64) -> Result<(Rescaled<'_, T>, f64)> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("B must be positive, got {b}")));
    }
    Ok((Rescaled { inner: f, scale: 2.0 * b }, 1.0 + (2.0 * b).powf(beta)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ridge {
    Sin,
    Tanh,
    /// `min(|t|, 1)`
    ClippedAbs,
}

impl Ridge {
    fn apply(self, t: f64) -> f64 {
        match self {
            Ridge::Sin => t.sin(),
            Ridge::Tanh => t.tanh(),
            Ridge::ClippedAbs => t.abs().min(1.0),
        }
    }
}

/// `f(x) = sum_k a_k psi_k(<v_k, x> + b_k)` with unit `v_k`, `sum |a_k| <= 1`
/// and 1-Lipschitz ridges bounded by 1: sup norm and Euclidean Lipschitz
/// constant are both at most 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomLipschitz {
    pub d: usize,
    pub weights: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub ridges: Vec<Ridge>,
}

impl RandomLipschitz {
    pub fn sample(d: usize, terms: usize, seed: u64) -> Result<Self> {
        if d == 0 || terms == 0 {
            return Err(Error::InvalidArgument("need d >= 1 and at least one term".into()));
        }
        let mut rng = rng_from_seed(seed);
        let mut weights: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mass: f64 = weights.iter().map(|w| w.abs()).sum();
        let target = 0.5 + 0.5 * rng.random::<f64>();
        weights.iter_mut().for_each(|w| *w *= target / mass);
        let directions = (0..terms)
            .map(|_| loop {
                let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    break v.into_iter().map(|t| t / norm).collect();
                }
            })
            .collect();
        let offsets = (0..terms).map(|_| rng.random::<f64>() - 0.5).collect();
        let ridges = (0..terms)
            .map(|_| match rng.random_range(0..3) {
                0 => Ridge::Sin,
                1 => Ridge::Tanh,
                _ => Ridge::ClippedAbs,
            })
            .collect();
        Ok(Self { d, weights, directions, offsets, ridges })
    }
}

impl TaylorTarget for RandomLipschitz {
    fn dim(&self) -> usize {
        self.d
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.directions)
            .zip(self.offsets.iter().zip(&self.ridges))
            .map(|((a, v), (b, psi))| a * psi.apply(v.iter().zip(x).map(|(vi, xi)| vi * xi).sum::<f64>() + b))
            .sum()
    }
}

/// Points of `A_s`: for each `s`-subset of axes, a tensor grid with
/// `resolution` points per active axis and zeros elsewhere.
pub fn sparse_grid(d: usize, s: usize, resolution: usize) -> Vec<Vec<f64>> {
    let axis = points_1d(resolution);
    let mut out = Vec::new();
    for gamma in (0..d).combinations(s) {
        for vals in gamma.iter().map(|_| axis.iter().copied()).multi_cartesian_product() {
            let mut x = vec![0.0; d];
            for (&i, v) in gamma.iter().zip(vals) {
                x[i] = v;
            }
            out.push(x);
        }
    }
    out
}

/// `max |f - f_N|` over [`sparse_grid`] points.
pub fn sup_error_on_sparse_grid<T: TaylorTarget + ?Sized>(f: &T, approx: &TaylorApproximant, resolution: usize) -> f64 {
    sparse_grid(approx.d, approx.s, resolution)
        .par_iter()
        .map(|x| (f.value(x) - approx.eval(x)).abs())
        .reduce(|| 0.0, f64::max)
}
