//! Sampled design matrices, mutual coherence and the coherence sandwich.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::sampling::{lemma8_log, SampleSet};

/// The sampled matrix `D[t, i] = u_i(xi_t)` with its column normalizer.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    normalizer: DVector<f64>,
    normalized: DMatrix<f64>,
    mu: f64,
    c_a: f64,
    gamma: Option<f64>,
}

impl DesignMatrix {
    /// Samples every dictionary element at every point.
    pub fn from_dictionary<D: Dictionary + ?Sized>(dict: &D, samples: &SampleSet) -> Result<Self> {
        let entries = evaluate(dict, samples)?;
        Self::assemble(entries, Some(dict.gamma()), |index| Error::DegenerateSampling { index })
    }

    /// Wraps an arbitrary matrix; no dictionary, so no orthogonality constant.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        Self::assemble(entries, None, |index| Error::ZeroColumn { index })
    }

    fn assemble(entries: DMatrix<f64>, gamma: Option<f64>, zero: impl Fn(usize) -> Error) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        let energies: Vec<f64> = entries.column_iter().map(|c| c.norm_squared()).collect();
        // energies at round-off level of the largest one count as zero
        let floor = 1e-26 * energies.iter().cloned().fold(0.0, f64::max);
        let mut normalizer = DVector::zeros(entries.ncols());
        for (i, &energy) in energies.iter().enumerate() {
            if energy <= floor || energy == 0.0 {
                return Err(zero(i));
            }
            normalizer[i] = 1.0 / energy.sqrt();
        }
        let mut normalized = entries.clone();
        for (i, mut col) in normalized.column_iter_mut().enumerate() {
            col *= normalizer[i];
        }
        let mu = coherence_of_unit_columns(&normalized);
        let c_a = normalized.amax();
        Ok(Self { entries, normalizer, normalized, mu, c_a, gamma })
    }

    /// Raw samples `D`.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Diagonal of `L`, `L_ii = 1 / sqrt(sum_t u_i(xi_t)^2)`.
    pub fn normalizer(&self) -> &DVector<f64> {
        &self.normalizer
    }

    /// `A = D L`, unit columns.
    pub fn normalized(&self) -> &DMatrix<f64> {
        &self.normalized
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest absolute entry of `A`.
    pub fn c_a(&self) -> f64 {
        self.c_a
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// Number of samples.
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of dictionary elements.
    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    /// `sum_t u_i(xi_t)^2` per column.
    pub fn column_energies(&self) -> Vec<f64> {
        self.entries.column_iter().map(|c| c.norm_squared()).collect()
    }

    /// `c0 = max_i L_ii`.
    pub fn c0(&self) -> f64 {
        self.normalizer.max()
    }

    pub fn sbar(&self) -> f64 {
        sbar(self.mu)
    }

    /// Row-major CSV of the raw matrix, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.entries.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the dictionary on the sample set into an `m x N` matrix.
pub fn evaluate<D: Dictionary + ?Sized>(dict: &D, samples: &SampleSet) -> Result<DMatrix<f64>> {
    let n = dict.len();
    let m = samples.m();
    let dim = dict.domain().dim;
    let mut entries = DMatrix::zeros(m, n);
    let mut row = vec![0.0; n];
    for (t, x) in samples.points().iter().enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        dict.eval_all(x, &mut row);
        for (i, v) in row.iter().enumerate() {
            entries[(t, i)] = *v;
        }
    }
    Ok(entries)
}

fn coherence_of_unit_columns(a: &DMatrix<f64>) -> f64 {
    let gram = a.tr_mul(a);
    let n = gram.ncols();
    let mut mu: f64 = 0.0;
    for j in 0..n {
        for i in 0..j {
            mu = mu.max(gram[(i, j)].abs());
        }
    }
    mu.min(1.0)
}

/// `max_{i != j} |<a_i, a_j>| / (|a_i| |a_j|)`.
pub fn mutual_coherence(matrix: &DMatrix<f64>) -> Result<f64> {
    let mut a = matrix.clone();
    for (i, mut col) in a.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn { index: i });
        }
        col /= norm;
    }
    Ok(coherence_of_unit_columns(&a))
}

/// `(1 + 1/mu) / 2`; infinite at `mu = 0`, where callers cap sparsity at `N/2`.
pub fn sbar(mu: f64) -> f64 {
    if mu <= 0.0 {
        f64::INFINITY
    } else {
        0.5 * (1.0 + 1.0 / mu)
    }
}

/// Largest integer `s` with `s < sbar(mu)`, capped at `floor(N/2)`.
pub fn max_admissible_sparsity(mu: f64, n: usize) -> usize {
    let cap = n / 2;
    let sb = sbar(mu);
    if !sb.is_finite() {
        return cap;
    }
    let mut s = sb.floor() as usize;
    if s as f64 >= sb {
        s = s.saturating_sub(1);
    }
    s.min(cap)
}

/// `floor((1 + sqrt(3 gamma m / ln(2N^2/eps)) / 16) / 2)`, capped at `floor(N/2)`.
pub fn select_sparsity_lemma8(gamma: f64, m: usize, n: usize, eps: f64) -> Result<usize> {
    let l = lemma8_log(gamma, n, eps)?;
    let v = 0.5 * (1.0 + (3.0 * gamma * m as f64 / l).sqrt() / 16.0);
    Ok((v.floor() as usize).min(n / 2))
}

/// `8 sqrt(ln(2N^2/eps) / (3 gamma m))`.
pub fn coherence_bound_lemma8(gamma: f64, m: usize, n: usize, eps: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be positive".into()));
    }
    let l = lemma8_log(gamma, n, eps)?;
    Ok(8.0 * (l / (3.0 * gamma * m as f64)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RipCheck {
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

pub const RIP_TOL: f64 = 1e-9;

/// Checks `(1 - (s-1) mu) |x|^2 <= |Ax|^2 <= (1 + (s-1) mu) |x|^2` for a
/// column-normalized `A`, with `s = |x|_0` and `mu` measured from `A`.
pub fn rip_sandwich_check(a: &DMatrix<f64>, x: &[f64]) -> Result<RipCheck> {
    if x.len() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), got: x.len() });
    }
    for (i, col) in a.column_iter().enumerate() {
        let norm = col.norm();
        if (norm - 1.0).abs() > RIP_TOL {
            return Err(Error::NotNormalized { index: i, norm });
        }
    }
    let mu = coherence_of_unit_columns(a);
    rip_sandwich_with_mu(a, x, mu)
}

/// As [`rip_sandwich_check`] with a precomputed coherence.
pub fn rip_sandwich_with_mu(a: &DMatrix<f64>, x: &[f64], mu: f64) -> Result<RipCheck> {
    let s = x.iter().filter(|v| **v != 0.0).count();
    let xn2: f64 = x.iter().map(|v| v * v).sum();
    if s == 0 {
        return Err(Error::Sparsity { s, reason: "vector must be nonzero".into() });
    }
    let ax = a * DVector::from_column_slice(x);
    let ratio = ax.norm_squared() / xn2;
    let spread = (s as f64 - 1.0) * mu;
    let lower = 1.0 - spread;
    let upper = 1.0 + spread;
    Ok(RipCheck {
        ratio,
        lower,
        upper,
        lower_ok: ratio >= lower - RIP_TOL,
        upper_ok: ratio <= upper + RIP_TOL,
    })
}
