//! Random sample sets, sample-size formulas and Monte Carlo checks of
//! universal norm discretization.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::coherence::{evaluate, DesignMatrix};
use crate::dictionary::{Dictionary, Domain};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::stats::binomial;

/// Discretization constants under which the sampling lemma holds.
pub const LEMMA8_C1: f64 = 0.25;
pub const LEMMA8_C2: f64 = 2.25;

/// Limit on enumerated supports or subsets.
pub const COMBINATORIAL_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    seed: u64,
}

impl SampleSet {
    pub fn from_points(points: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a sample set needs at least one point".into()));
        }
        Ok(Self { points, seed })
    }

    /// The full uniform periodic tensor grid with `per_axis` nodes per axis.
    pub fn uniform_grid(domain: &Domain, per_axis: usize) -> Self {
        Self { points: domain.tensor_grid(per_axis), seed: 0 }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// `m` i.i.d. points from the uniform measure on `domain`.
pub fn draw_samples(domain: &Domain, m: usize, seed: u64) -> Result<SampleSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let p = domain.period();
    let points = (0..m).map(|_| (0..domain.dim).map(|_| rng.random::<f64>() * p).collect()).collect();
    Ok(SampleSet { points, seed })
}

/// `ln(2 N^2 / eps)` after validating its arguments.
pub fn lemma8_log(gamma: f64, n: usize, eps: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("N must be at least 2, got {n}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    Ok((2.0 * (n as f64).powi(2) / eps).ln())
}

/// Smallest integer `m > 64 / (3 gamma) ln(2 N^2 / eps)`.
pub fn min_samples_lemma8(gamma: f64, n: usize, eps: f64) -> Result<usize> {
    let bound = 64.0 / (3.0 * gamma) * lemma8_log(gamma, n, eps)?;
    Ok(bound.floor() as usize + 1)
}

fn check_log_log(s: usize, n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("N must be at least 3 for ln ln N, got {n}")));
    }
    if s == 0 || s > n / 2 {
        return Err(Error::Sparsity { s, reason: format!("need 1 <= s <= N/2 = {}", n / 2) });
    }
    Ok(())
}

/// `s ln N ln^2(4s) (ln 4s + ln ln N)` with the unspecified constant set to 1.
pub fn sample_bound_lemma6(s: usize, n: usize) -> Result<f64> {
    sample_bound_lemma7(1.0, s, n)
}

/// `R s ln N ln^2(4Rs) (ln 4Rs + ln ln N)` with the unspecified constant set to 1.
pub fn sample_bound_lemma7(r: f64, s: usize, n: usize) -> Result<f64> {
    check_log_log(s, n)?;
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("Riesz constant must be >= 1, got {r}")));
    }
    let ln_n = (n as f64).ln();
    let l4 = (4.0 * r * s as f64).ln();
    Ok(r * s as f64 * ln_n * l4 * l4 * (l4 + ln_n.ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub s: usize,
    pub p: f64,
    pub trials: usize,
    /// Smallest observed `(empirical p-norm)^p / |f|^p`.
    pub worst_lower: f64,
    /// Largest observed ratio.
    pub worst_upper: f64,
    pub c1: f64,
    pub c2: f64,
    pub pass: bool,
}

fn check_p(p: f64) -> Result<()> {
    if p != 2.0 {
        return Err(Error::Unsupported(format!("only p = 2 is implemented, got {p}")));
    }
    Ok(())
}

/// Probes random `2s`-sparse combinations (uniform supports, standard normal
/// coefficients) and compares their sampled squared norm with the exact one.
pub fn check_universal_discretization<D: Dictionary + ?Sized>(
    dict: &D,
    samples: &SampleSet,
    s: usize,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<DiscretizationReport> {
    let entries = evaluate(dict, samples)?;
    discretization_probe(&entries, dict.gamma(), s, p, trials, &mut rng_from_seed(seed))
}

/// Matrix form of [`check_universal_discretization`].
pub fn discretization_probe(
    entries: &DMatrix<f64>,
    gamma: f64,
    s: usize,
    p: f64,
    trials: usize,
    rng: &mut Rng,
) -> Result<DiscretizationReport> {
    check_p(p)?;
    let n = entries.ncols();
    if s == 0 || 2 * s > n {
        return Err(Error::Sparsity { s, reason: format!("need 1 <= s <= N/2 = {}", n / 2) });
    }
    let m = entries.nrows() as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut values = vec![0.0; entries.nrows()];
    for _ in 0..trials {
        let support = index::sample(rng, n, 2 * s);
        values.iter_mut().for_each(|v| *v = 0.0);
        let mut norm2 = 0.0;
        for i in support.iter() {
            let c: f64 = rng.sample(StandardNormal);
            norm2 += c * c;
            for (v, d) in values.iter_mut().zip(entries.column(i).iter()) {
                *v += c * d;
            }
        }
        let ratio = values.iter().map(|v| v * v).sum::<f64>() / m / (gamma * norm2);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(DiscretizationReport {
        s,
        p,
        trials,
        worst_lower: lo,
        worst_upper: hi,
        c1: LEMMA8_C1,
        c2: LEMMA8_C2,
        pass: trials > 0 && LEMMA8_C1 <= lo && hi <= LEMMA8_C2,
    })
}

/// Extreme eigenvalues of `G_S / (gamma m)` over every `2s`-column
/// submatrix Gram `G_S`. These are the exact worst-case discretization
/// ratios over all `2s`-sparse combinations.
pub fn exhaustive_discretization_extremes(entries: &DMatrix<f64>, gamma: f64, s: usize) -> Result<(f64, f64)> {
    let n = entries.ncols();
    if s == 0 || 2 * s > n {
        return Err(Error::Sparsity { s, reason: format!("need 1 <= s <= N/2 = {}", n / 2) });
    }
    let count = binomial(n, 2 * s);
    if count > COMBINATORIAL_LIMIT {
        return Err(Error::TooLarge { count, limit: COMBINATORIAL_LIMIT, hint: "use random probes".into() });
    }
    let scale = 1.0 / (gamma * entries.nrows() as f64);
    let gram = entries.tr_mul(entries) * scale;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for subset in (0..n).combinations(2 * s) {
        let sub = DMatrix::from_fn(2 * s, 2 * s, |a, b| gram[(subset[a], subset[b])]);
        let eig = sub.symmetric_eigenvalues();
        lo = lo.min(eig.min());
        hi = hi.max(eig.max());
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnEnergyReport {
    pub energies: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

/// Column energies `sum_t u_i(xi_t)^2` against the band `[gamma m / 2, 3 gamma m / 2]`.
pub fn column_energy_check(design: &DesignMatrix) -> Result<ColumnEnergyReport> {
    let gamma = design
        .gamma()
        .ok_or_else(|| Error::Contract("column energy band needs a dictionary-built design".into()))?;
    let gm = gamma * design.m() as f64;
    let energies = design.column_energies();
    let (lower, upper) = (0.5 * gm, 1.5 * gm);
    let pass = energies.iter().all(|&e| lower <= e && e <= upper);
    Ok(ColumnEnergyReport { energies, lower, upper, pass })
}

/// Norm under `nu_xi = nu/2 + (1/2m) sum_j delta_{xi_j}`, given
/// `exact_norm_p = |f|^p` in `L_p(nu)`.
pub fn mixture_norm<F: Fn(&[f64]) -> f64>(f: F, samples: &SampleSet, p: f64, exact_norm_p: f64) -> f64 {
    let empirical = samples.points().iter().map(|x| f(x).abs().powf(p)).sum::<f64>() / samples.m() as f64;
    (0.5 * exact_norm_p + 0.5 * empirical).powf(1.0 / p)
}
