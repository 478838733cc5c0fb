//! The thresholded encoder and its worst-case threshold schedule.
//!
//! The iteration runs on the column-normalized system `A = D L`:
//!
//! ```text
//! x0 = 0,  x(k+1) = T_theta_k( x(k) + A^T (y - A x(k)) )
//! ```
//!
//! with `theta_k = mu B_k + C_A delta`, `B_0 = s B` and
//! `B_(k+1) = rho B_k + 2 s C_A delta`, `rho = (2s - 1) mu`. Whenever the
//! target `x*` is `s`-sparse with `|x*|_inf <= B` and `|y - A x*|_1 <= delta`,
//! every iterate stays inside the support of `x*` and `|x(k) - x*|_1 <= B_k`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::coherence::{sbar, DesignMatrix};
use crate::dictionary::{eval_all, l2_norm_in_span, Dictionary};
use crate::error::{Error, Result};

/// `sign(v_i) (|v_i| - alpha)_+`.
pub fn soft_threshold(v: &[f64], alpha: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    soft_threshold_in_place(&mut out, alpha);
    out
}

pub fn soft_threshold_in_place(v: &mut [f64], alpha: f64) {
    for x in v {
        let shrunk = x.abs() - alpha;
        *x = if shrunk > 0.0 { shrunk.copysign(*x) } else { 0.0 };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSchedule {
    pub mu: f64,
    pub s: usize,
    pub b: f64,
    pub delta: f64,
    pub c_a: f64,
    /// `(2s - 1) mu`.
    pub rho: f64,
    /// `B_0 ..= B_J`.
    pub bounds: Vec<f64>,
    /// `theta_0 ..= theta_J`.
    pub thresholds: Vec<f64>,
    pub contractive: bool,
}

impl ThresholdSchedule {
    pub fn depth(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Limit `2 s C_A delta / (1 - rho)` of `B_k`; infinite when not contractive.
    pub fn fixed_point(&self) -> f64 {
        if self.contractive {
            2.0 * self.s as f64 * self.c_a * self.delta / (1.0 - self.rho)
        } else {
            f64::INFINITY
        }
    }
}

pub fn make_schedule(mu: f64, s: usize, b: f64, delta: f64, c_a: f64, j: usize) -> Result<ThresholdSchedule> {
    if s == 0 {
        return Err(Error::Sparsity { s, reason: "schedule needs s >= 1".into() });
    }
    for (name, v) in [("mu", mu), ("B", b), ("delta", delta), ("C_A", c_a)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    let sf = s as f64;
    let rho = (2.0 * sf - 1.0) * mu;
    let mut bounds = Vec::with_capacity(j + 1);
    let mut bk = sf * b;
    for _ in 0..=j {
        bounds.push(bk);
        bk = rho * bk + 2.0 * sf * c_a * delta;
    }
    let thresholds = bounds.iter().map(|bk| mu * bk + c_a * delta).collect();
    Ok(ThresholdSchedule { mu, s, b, delta, c_a, rho, bounds, thresholds, contractive: rho < 1.0 })
}

/// `s B rho^J + delta 2s sum_(i=0..=J) rho^i`.
pub fn encoder_error_bound(mu: f64, s: usize, b: f64, delta: f64, j: usize) -> Result<f64> {
    let rho = (2.0 * s as f64 - 1.0) * mu;
    if !(rho < 1.0) {
        return Err(Error::NonContractive { rho });
    }
    Ok(s as f64 * b * rho.powi(j as i32) + delta * geometric_factor(s, rho, j))
}

/// `2s sum_(i=0..=J) rho^i`.
pub fn geometric_factor(s: usize, rho: f64, j: usize) -> f64 {
    let sum: f64 = (0..=j).map(|i| rho.powi(i as i32)).sum();
    2.0 * s as f64 * sum
}

/// Schedule bound on `|L^-1 w*|_inf` from a class sup-norm bound:
/// every column energy is at most `m`, so the normalized coefficients are
/// bounded by `6 B m`.
pub fn default_schedule_bound(class_bound: f64, m: usize) -> f64 {
    6.0 * class_bound * m as f64
}

/// A coefficient vector with explicit support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub w: Vec<f64>,
    pub support: Vec<usize>,
    pub s: usize,
}

impl SparseCode {
    pub fn new(w: Vec<f64>, s: usize) -> Self {
        let support = w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        Self { w, support, s }
    }

    pub fn zeros(n: usize, s: usize) -> Self {
        Self::new(vec![0.0; n], s)
    }

    pub fn nnz(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOptions {
    pub s: usize,
    /// Bound on `|L^-1 w*|_inf`, the target in normalized coordinates.
    pub b: f64,
    /// Bound on the `l1` norm of the residual `y - A x*`.
    pub delta: f64,
    pub iterations: usize,
    /// Run even when the schedule is not contractive; bounds are then void.
    pub force: bool,
    /// Known target in original coordinates, enabling the error trace.
    pub oracle: Option<Vec<f64>>,
}

impl EncodeOptions {
    pub fn new(s: usize, b: f64, delta: f64, iterations: usize) -> Self {
        Self { s, b, delta, iterations, force: false, oracle: None }
    }

    pub fn with_oracle(mut self, w_star: Vec<f64>) -> Self {
        self.oracle = Some(w_star);
        self
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub theta: f64,
    pub bound: f64,
    pub support_size: usize,
    /// `|x(k) - L^-1 w*|_1` when the target is known.
    pub l1_error: Option<f64>,
    pub support_contained: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    /// `L x(J)`, original coordinates.
    pub code: SparseCode,
    /// `x(J)`, normalized coordinates.
    pub normalized: Vec<f64>,
    pub schedule: ThresholdSchedule,
    /// Rows for `k = 0 ..= J`.
    pub trace: Vec<TraceRow>,
}

/// Runs `J` iterations of the thresholded encoder on `design`.
pub fn encode(design: &DesignMatrix, y: &[f64], opts: &EncodeOptions) -> Result<EncodeOutput> {
    let a = design.normalized();
    let (m, n) = (a.nrows(), a.ncols());
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sample values".into()));
    }
    let mu = design.mu();
    let sb = sbar(mu);
    if !((opts.s as f64) < sb) && !opts.force {
        return Err(Error::Inadmissible { s: opts.s, sbar: sb, mu });
    }
    let schedule = make_schedule(mu, opts.s, opts.b, opts.delta, design.c_a(), opts.iterations)?;
    if !schedule.contractive && !opts.force {
        return Err(Error::NonContractive { rho: schedule.rho });
    }
    let l = design.normalizer();
    let target: Option<Vec<f64>> = match &opts.oracle {
        Some(w) if w.len() != n => return Err(Error::DimensionMismatch { expected: n, got: w.len() }),
        Some(w) => Some(w.iter().zip(l.iter()).map(|(wi, li)| wi / li).collect()),
        None => None,
    };
    let y = DVector::from_column_slice(y);
    let mut x = DVector::<f64>::zeros(n);
    let mut trace = Vec::with_capacity(opts.iterations + 1);
    let row = |k: usize, x: &DVector<f64>| {
        let support_size = x.iter().filter(|v| **v != 0.0).count();
        let (l1_error, support_contained) = match &target {
            Some(t) => {
                let err = x.iter().zip(t).map(|(a, b)| (a - b).abs()).sum();
                let inside = x.iter().zip(t).all(|(a, b)| *a == 0.0 || *b != 0.0);
                (Some(err), Some(inside))
            }
            None => (None, None),
        };
        TraceRow { k, theta: schedule.thresholds[k], bound: schedule.bounds[k], support_size, l1_error, support_contained }
    };
    trace.push(row(0, &x));
    // Off-support entries of z can meet the threshold with equality, so the
    // threshold absorbs the rounding error of z = x + A^T r.
    let unit = (m as f64 + 2.0) * f64::EPSILON;
    for k in 0..opts.iterations {
        let residual = &y - a * &x;
        let mut z = &x + a.tr_mul(&residual);
        let guard = unit * (x.amax() + design.c_a() * residual.lp_norm(1));
        soft_threshold_in_place(z.as_mut_slice(), schedule.thresholds[k] + guard);
        x = z;
        trace.push(row(k + 1, &x));
    }
    let w: Vec<f64> = x.iter().zip(l.iter()).map(|(xi, li)| xi * li).collect();
    Ok(EncodeOutput { code: SparseCode::new(w, opts.s), normalized: x.as_slice().to_vec(), schedule, trace })
}

/// `f_s = sum_(i in supp) w_i u_i`.
pub struct Reconstruction<'a, D: Dictionary + ?Sized> {
    dict: &'a D,
    code: &'a SparseCode,
}

pub fn reconstruct<'a, D: Dictionary + ?Sized>(dict: &'a D, code: &'a SparseCode) -> Result<Reconstruction<'a, D>> {
    if code.w.len() != dict.len() {
        return Err(Error::DimensionMismatch { expected: dict.len(), got: code.w.len() });
    }
    Ok(Reconstruction { dict, code })
}

impl<D: Dictionary + ?Sized> Reconstruction<'_, D> {
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.code.support.len() * 4 < self.code.w.len() {
            self.code.support.iter().map(|&i| self.code.w[i] * self.dict.eval(i, x)).sum()
        } else {
            eval_all(self.dict, x).iter().zip(&self.code.w).map(|(u, w)| u * w).sum()
        }
    }

    /// Exact `|f - f_s|` in `L2(nu)` for `f = sum_i coeffs_i u_i`.
    pub fn l2_error_in_span(&self, coeffs: &[f64]) -> Result<f64> {
        if coeffs.len() != self.code.w.len() {
            return Err(Error::DimensionMismatch { expected: self.code.w.len(), got: coeffs.len() });
        }
        let diff: Vec<f64> = coeffs.iter().zip(&self.code.w).map(|(c, w)| c - w).collect();
        Ok(l2_norm_in_span(self.dict, &diff))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_trig_dictionary, Domain};
    use crate::sampling::SampleSet;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[1.2, -0.3, 0.5], 0.5), vec![0.7, 0.0, 0.0]);
        assert_abs_diff_eq!(soft_threshold(&[1.2], 0.5)[0], 0.7, epsilon = 1e-15);
        let v = [3.0, -2.0, 0.0, 1e-9];
        assert_eq!(soft_threshold(&v, 0.0), v.to_vec());
        assert_eq!(soft_threshold(&[-2.0], 0.5), vec![-1.5]);
    }

    #[test]
    fn schedule_examples() {
        let sch = make_schedule(0.0, 2, 1.0, 0.0, 1.0, 3).unwrap();
        assert_eq!(sch.thresholds[0], 0.0);
        assert_eq!(sch.bounds[1], 0.0);
        let sch = make_schedule(0.1, 3, 1.0, 0.0, 1.0, 10).unwrap();
        assert_abs_diff_eq!(sch.rho, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sch.bounds[10], 3.0 / 1024.0, epsilon = 1e-15);
        assert!(sch.thresholds.windows(2).all(|w| w[1] <= w[0]));
        let sch = make_schedule(0.1, 3, 1.0, 0.01, 0.5, 200).unwrap();
        let fp = sch.fixed_point();
        assert!(sch.bounds.windows(2).all(|w| w[1] <= w[0] && w[1] >= fp - 1e-15));
        assert_abs_diff_eq!(*sch.bounds.last().unwrap(), fp, epsilon = 1e-12);
        let flagged = make_schedule(0.5, 2, 1.0, 0.0, 1.0, 2).unwrap();
        assert!(!flagged.contractive);
    }

    #[test]
    fn encoder_bound_examples() {
        assert_abs_diff_eq!(encoder_error_bound(0.1, 3, 1.0, 0.0, 10).unwrap(), 0.0029296875, epsilon = 1e-15);
        let far = encoder_error_bound(0.1, 3, 1.0, 0.01, 2000).unwrap();
        assert_abs_diff_eq!(far, 0.01 * 6.0 / 0.5, epsilon = 1e-12);
        assert!(matches!(encoder_error_bound(0.5, 2, 1.0, 0.0, 1), Err(Error::NonContractive { .. })));
    }

    fn full_grid_design(k: u32) -> (crate::dictionary::TrigDictionary, DesignMatrix) {
        let dict = build_trig_dictionary(Domain::unit_cube(1).unwrap(), k).unwrap();
        let grid = SampleSet::uniform_grid(dict.domain(), dict.len());
        let dm = DesignMatrix::from_dictionary(&dict, &grid).unwrap();
        (dict, dm)
    }

    #[test]
    fn orthonormal_one_step_recovery() {
        let (dict, dm) = full_grid_design(3);
        let mut w = vec![0.0; dict.len()];
        w[1] = 0.8;
        w[4] = -0.3;
        let y: Vec<f64> = (dm.entries() * DVector::from_column_slice(&w)).as_slice().to_vec();
        let b = w.iter().zip(dm.normalizer().iter()).map(|(a, l)| (a / l).abs()).fold(0.0, f64::max);
        let out = encode(&dm, &y, &EncodeOptions::new(2, b, 0.0, 1).with_oracle(w.clone())).unwrap();
        for (a, b) in out.code.w.iter().zip(&w) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert!(out.trace[1].l1_error.unwrap() <= 1e-9);
    }

    #[test]
    fn zero_input_gives_zero_code() {
        let (_, dm) = full_grid_design(2);
        let out = encode(&dm, &vec![0.0; dm.m()], &EncodeOptions::new(1, 1.0, 0.0, 5)).unwrap();
        assert_eq!(out.code.nnz(), 0);
    }

    #[test]
    fn inadmissible_sparsity_refused() {
        let dm = DesignMatrix::from_matrix(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0])).unwrap();
        let err = encode(&dm, &[1.0, 1.0], &EncodeOptions::new(2, 1.0, 0.0, 3)).unwrap_err();
        assert!(matches!(err, Error::Inadmissible { .. }));
        assert!(encode(&dm, &[1.0, 1.0], &EncodeOptions::new(2, 1.0, 0.0, 3).forced()).is_ok());
        assert!(matches!(
            encode(&dm, &[f64::NAN, 1.0], &EncodeOptions::new(1, 1.0, 0.0, 3)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn scale_equivariance_power_of_two() {
        let dm = DesignMatrix::from_matrix(DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 0.2, 0.0, 0.1, 0.0, 1.0, 0.3, 0.0, 0.1, 0.0, 1.0, 1.0],
        ))
        .unwrap();
        let y = [0.7, -0.2, 0.4];
        let a = encode(&dm, &y, &EncodeOptions::new(1, 1.0, 0.1, 6)).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let b = encode(&dm, &y2, &EncodeOptions::new(1, 2.0, 0.2, 6)).unwrap();
        for (u, v) in a.code.w.iter().zip(&b.code.w) {
            assert_eq!(2.0 * u, *v);
        }
    }

    #[test]
    fn reconstruction_errors() {
        let (dict, _) = full_grid_design(2);
        let c = vec![0.5, 0.0, -0.25, 0.0, 0.1];
        let zero = SparseCode::zeros(5, 2);
        let rz = reconstruct(&dict, &zero).unwrap();
        assert_eq!(rz.eval(&[0.3]), 0.0);
        let exact = SparseCode::new(c.clone(), 3);
        assert_eq!(reconstruct(&dict, &exact).unwrap().l2_error_in_span(&c).unwrap(), 0.0);
        let top = SparseCode::new(vec![0.5, 0.0, -0.25, 0.0, 0.0], 2);
        assert_abs_diff_eq!(
            reconstruct(&dict, &top).unwrap().l2_error_in_span(&c).unwrap(),
            (0.5f64 * 0.01).sqrt(),
            epsilon = 1e-15
        );
    }
}
