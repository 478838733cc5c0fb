//! Hölder functionals, the encode, reconstruct and evaluate pipeline, and
//! the explicit constants of its error bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{select_sparsity_lemma8, DesignMatrix};
use crate::dictionary::{eval_all, l2_norm_in_span, sample_a1_alpha, sample_mixed_smoothness, Dictionary, SyntheticFunction, TrigDictionary};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, trial_rng};
use crate::s_term_oracle::{best_s_term_exhaustive, estimator_bound_constant, sigma_s_mixture, sigma_s_tail_bound};
use crate::sampling::{discretization_probe, draw_samples, exhaustive_discretization_extremes, SampleSet, COMBINATORIAL_LIMIT, LEMMA8_C1, LEMMA8_C2};
use crate::sparse_coding::{default_schedule_bound, encode, geometric_factor, EncodeOptions, SparseCode};
use crate::stats::{binomial, ls_slope, mean, std_dev};
use crate::taylor_decoder::{localized_taylor, rescale_holder, taylor_error_bound, TaylorTarget};

/// A scalar map `h` with a certified Hölder bound `|h(a) - h(b)| <= C |a - b|^beta`.
#[derive(Clone)]
pub struct ScalarMap {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    beta: f64,
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarMap").field("name", &self.name).field("beta", &self.beta).finish()
    }
}

impl ScalarMap {
    /// Wraps `f` after checking the certificate: `beta` in `(0, 1]`, `constant <= 1`.
    pub fn certified<F>(name: &str, f: F, beta: f64, constant: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Contract(format!("Hölder exponent of {name} must lie in (0, 1], got {beta}")));
        }
        if !(constant <= 1.0) {
            return Err(Error::Contract(format!("Hölder constant of {name} must be at most 1, got {constant}")));
        }
        Ok(Self { name: name.into(), f: Arc::new(f), beta })
    }

    pub fn abs() -> Self {
        Self { name: "abs".into(), f: Arc::new(f64::abs), beta: 1.0 }
    }

    pub fn sin() -> Self {
        Self { name: "sin".into(), f: Arc::new(f64::sin), beta: 1.0 }
    }

    /// `|t|^beta`, `beta`-Hölder with constant 1.
    pub fn pow_abs(beta: f64) -> Result<Self> {
        Self::certified("pow_abs", move |t: f64| t.abs().powf(beta), beta, 1.0)
    }

    pub fn apply(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone)]
pub enum FunctionalKind {
    /// `|f|` in `L2(nu)`.
    L2Norm,
    /// `<f, g>` in `L2(nu)`, `g = sum_i g_i u_i`.
    InnerProduct { g: Vec<f64> },
    /// `h(<f, g>)`.
    ScalarCompose { h: ScalarMap, g: Vec<f64> },
}

/// A functional `P` with `|P(f) - P(g)| <= |f - g|^beta` in `L2(nu)`.
#[derive(Debug, Clone)]
pub struct Functional {
    kind: FunctionalKind,
    beta: f64,
    gamma: f64,
}

/// Validates parameters against `dict` and fixes the Hölder exponent.
/// Inner products need `|g|_(L2) <= 1` so the Lipschitz constant stays at most 1.
pub fn make_functional<D: Dictionary + ?Sized>(kind: FunctionalKind, dict: &D) -> Result<Functional> {
    let gamma = dict.gamma();
    let check_g = |g: &[f64]| -> Result<()> {
        if g.len() != dict.len() {
            return Err(Error::DimensionMismatch { expected: dict.len(), got: g.len() });
        }
        let norm = l2_norm_in_span(dict, g);
        if norm > 1.0 + 1e-12 {
            return Err(Error::Contract(format!("|g| = {norm} exceeds 1")));
        }
        Ok(())
    };
    let beta = match &kind {
        FunctionalKind::L2Norm => 1.0,
        FunctionalKind::InnerProduct { g } => {
            check_g(g)?;
            1.0
        }
        FunctionalKind::ScalarCompose { h, g } => {
            check_g(g)?;
            h.beta()
        }
    };
    Ok(Functional { kind, beta, gamma })
}

impl Functional {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> &FunctionalKind {
        &self.kind
    }

    /// `P(sum_i w_i u_i)` computed exactly from coefficients.
    pub fn eval_coeffs(&self, w: &[f64]) -> f64 {
        let inner = |g: &[f64]| self.gamma * w.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        match &self.kind {
            FunctionalKind::L2Norm => (self.gamma * w.iter().map(|v| v * v).sum::<f64>()).sqrt(),
            FunctionalKind::InnerProduct { g } => inner(g),
            FunctionalKind::ScalarCompose { h, g } => h.apply(inner(g)),
        }
    }

    /// `P(f)` by uniform tensor-grid quadrature with `per_axis` nodes per axis.
    pub fn eval_function<D, F>(&self, dict: &D, f: F, per_axis: usize) -> f64
    where
        D: Dictionary + ?Sized,
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let grid = dict.domain().tensor_grid(per_axis);
        let count = grid.len() as f64;
        let g_at = |g: &[f64], x: &[f64]| eval_all(dict, x).iter().zip(g).map(|(u, c)| u * c).sum::<f64>();
        // parallel map, ordered sequential sum: results stay bitwise reproducible
        let average = |h: &(dyn Fn(&[f64]) -> f64 + Sync)| {
            let terms: Vec<f64> = grid.par_iter().map(|x| h(x)).collect();
            terms.iter().sum::<f64>() / count
        };
        match &self.kind {
            FunctionalKind::L2Norm => average(&|x| f(x).powi(2)).sqrt(),
            FunctionalKind::InnerProduct { g } => average(&|x| f(x) * g_at(g, x)),
            FunctionalKind::ScalarCompose { h, g } => h.apply(average(&|x| f(x) * g_at(g, x))),
        }
    }
}

/// Quadrature resolution used for in-span functions: `2N` nodes per axis.
pub fn quadrature_resolution<D: Dictionary + ?Sized>(dict: &D) -> usize {
    2 * dict.len()
}

/// `(c1_tilde, c2_tilde)`, the factors relating the modulus of `P_hat` on
/// `s`-sparse vectors to that of `P`.
pub fn modulus_constants(design: &DesignMatrix, s: usize, p: f64, c1: f64, c2: f64) -> Result<(f64, f64)> {
    let m = design.m() as f64;
    let spread = (2.0 * s as f64 - 1.0) * design.mu();
    if !(spread < 1.0) {
        return Err(Error::NonContractive { rho: spread });
    }
    let l_norm = design.c0();
    let l_inv_norm = design.normalizer().iter().map(|v| 1.0 / v).fold(0.0, f64::max);
    let q = 1.0 / p;
    let c1_tilde = c1.powf(-q) * m.powf(-q) * l_inv_norm * m.powf(q - 0.5).max(1.0) * (1.0 + spread).sqrt();
    let c2_tilde = (1.0 - spread).sqrt() / (m.powf(q) * c2.powf(q) * l_norm * m.powf(0.5 - q).max(1.0));
    Ok((c1_tilde, c2_tilde))
}

/// Constants of the encoder and decoder error bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub p: f64,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub j: usize,
    /// Class sup-norm bound.
    pub b: f64,
    pub mu: f64,
    pub rho: f64,
    /// `max_i L_ii`.
    pub c0: f64,
    /// `2s sum_(i=0..=J) rho^i`.
    pub c_geom: f64,
    /// `max(1, m^(1/p - 1/2))`.
    pub c_mp: f64,
    /// Best `s`-term estimator constant.
    pub c3: f64,
    pub c4: f64,
    /// Decay rate `-ln rho`.
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    /// `C4 + C6 B + 6 B m |L|_inf`.
    pub b_bar: f64,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
    pub beta: f64,
    /// `|P(0)| + (N B_bar)^beta`, an upper bound on the sup of `|P_hat|` over the cube.
    pub c_p_bound: f64,
    pub c9: f64,
}

impl TheoreticalConstants {
    /// `C7 e^(-C5 J) + C8 sigma`.
    pub fn composite_bound(&self, sigma: f64) -> f64 {
        self.c7 * (-self.c5 * self.j as f64).exp() + self.c8 * sigma
    }
}

/// Evaluates every constant for a design, sparsity, depth and functional.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_constants(
    p: f64,
    b: f64,
    s: usize,
    design: &DesignMatrix,
    j: usize,
    c1: f64,
    c2: f64,
    beta: f64,
    p_at_zero: f64,
) -> Result<TheoreticalConstants> {
    let m = design.m();
    let n = design.n();
    let mf = m as f64;
    let nf = n as f64;
    let mu = design.mu();
    let rho = (2.0 * s as f64 - 1.0) * mu;
    if !(rho < 1.0) {
        return Err(Error::NonContractive { rho });
    }
    let q = 1.0 / p;
    let c0 = design.c0();
    let c_geom = geometric_factor(s, rho, j);
    let c_mp = mf.powf(q - 0.5).max(1.0);
    let c3 = estimator_bound_constant(p, c1)?;
    let sf = s as f64;
    let c4 = 6.0 * c0 * b * mf * sf * nf.powf(1.0 - q);
    let c5 = -rho.ln();
    let c6 = c0 * c_geom * 2f64.powf(q) * mf * nf.powf(1.0 - q);
    let c7 = 12.0 * c1.powf(-q) * c_mp * mf.powf(1.0 - q) * b * sf;
    let c8 = 2f64.powf(1.0 + q) * c_geom * c1.powf(-q) * c_mp * mf.powf(1.0 - q) + c3;
    let b_bar = c4 + c6 * b + 6.0 * b * mf * c0;
    let (c1_tilde, c2_tilde) = modulus_constants(design, s, p, c1, c2)?;
    let c_p_bound = p_at_zero.abs() + (nf * b_bar).powf(beta);
    let c9 = (c1_tilde.powf(beta) + c_p_bound) * (1.0 + 2f64.powf(beta) * b_bar.powf(beta));
    Ok(TheoreticalConstants {
        p,
        m,
        n,
        s,
        j,
        b,
        mu,
        rho,
        c0,
        c_geom,
        c_mp,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        b_bar,
        c1_tilde,
        c2_tilde,
        beta,
        c_p_bound,
        c9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoder {
    /// `P_hat` of the code, exactly.
    ExactComposition,
    /// Localized Taylor surrogate of `P_hat(2 B_bar z)` on the unit cube.
    LocalizedTaylor { n_cells: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub s: usize,
    pub iterations: usize,
    /// Residual bound; defaults to `2^(1/p) m sigma_hat_s` with the tail surrogate.
    pub delta: Option<f64>,
    /// Bound on the normalized target; defaults to `6 B m`.
    pub schedule_bound: Option<f64>,
    pub decoder: Decoder,
}

/// Verification of the one-sided discretization for `2s`-sparse
/// combinations on the sample set: exact eigenvalue extremes when the
/// support count is small, random probes otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationStatus {
    pub exhaustive: bool,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

const PROBE_COUNT: usize = 200;
const EXHAUSTIVE_LIMIT: f64 = 1e5;

pub fn discretization_status(design: &DesignMatrix, s: usize, seed: u64) -> Result<DiscretizationStatus> {
    let gamma = design
        .gamma()
        .ok_or_else(|| Error::Contract("discretization needs a dictionary-built design".into()))?;
    let n = design.n();
    if 2 * s > n {
        return Err(Error::Sparsity { s, reason: format!("need 2s <= N = {n}") });
    }
    let exhaustive = binomial(n, 2 * s) <= EXHAUSTIVE_LIMIT;
    let (lower, upper) = if exhaustive {
        exhaustive_discretization_extremes(design.entries(), gamma, s)?
    } else {
        let rep = discretization_probe(design.entries(), gamma, s, 2.0, PROBE_COUNT, &mut trial_rng(seed, 0xd15c, 0))?;
        (rep.worst_lower, rep.worst_upper)
    };
    Ok(DiscretizationStatus { exhaustive, lower, upper, pass: LEMMA8_C1 <= lower && upper <= LEMMA8_C2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderReport {
    pub n_cells: usize,
    /// `1 + (2 B_bar)^beta`.
    pub rescale_inflation: f64,
    /// `2^N (N/n_cells)^beta`, for unit Hölder norm.
    pub taylor_bound: f64,
    /// `C9 * taylor_bound`.
    pub scaled_bound: f64,
    /// `|P(f_s) - f_N(code / (2 B_bar))|`.
    pub decoder_error: f64,
    pub active_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Samples `f(xi_t)`.
    pub samples: Vec<f64>,
    pub code: SparseCode,
    pub s: usize,
    pub iterations: usize,
    pub delta: f64,
    pub schedule_bound: f64,
    /// Exact `|f - f_s|` in `L2(nu)`.
    pub l2_error: f64,
    pub p_f: f64,
    /// Decoder output.
    pub p_hat: f64,
    /// `P(f_s)` by quadrature, to cross-check the coefficient formula.
    pub p_fs_quadrature: f64,
    pub abs_error: f64,
    /// Worst-case `l1` error of the normalized iterate after `J` steps.
    pub encoder_bound: f64,
    /// `|f - f_s|^beta`.
    pub holder_bound: f64,
    /// Tail surrogate of the sup-norm best `s`-term error.
    pub sigma_hat: f64,
    pub constants: TheoreticalConstants,
    /// `C7 e^(-C5 J) + C8 sigma_hat`.
    pub composite_bound: f64,
    pub discretization: DiscretizationStatus,
    /// Hypotheses of the composite bound hold: contraction and discretization.
    pub valid: bool,
    pub decoder: Option<DecoderReport>,
}

struct HatTarget<'a> {
    functional: &'a Functional,
    n: usize,
}

impl TaylorTarget for HatTarget<'_> {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.functional.eval_coeffs(x)
    }
}

/// Encode, reconstruct and evaluate `P` on one synthetic function.
pub fn evaluate_pipeline<D: Dictionary + ?Sized>(
    functional: &Functional,
    f: &SyntheticFunction,
    dict: &D,
    samples: &SampleSet,
    cfg: &PipelineConfig,
) -> Result<PipelineReport> {
    let design = DesignMatrix::from_dictionary(dict, samples)?;
    let m = design.m();
    let n = design.n();
    if f.coeffs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: f.coeffs.len() });
    }
    let y: Vec<f64> = (design.entries() * DVector::from_column_slice(&f.coeffs)).as_slice().to_vec();
    let sigma_hat = sigma_s_tail_bound(&f.coeffs, cfg.s);
    let delta = cfg.delta.unwrap_or(2f64.sqrt() * m as f64 * sigma_hat);
    let schedule_bound = cfg.schedule_bound.unwrap_or_else(|| default_schedule_bound(f.sup_bound, m));
    let out = encode(&design, &y, &EncodeOptions::new(cfg.s, schedule_bound, delta, cfg.iterations))?;
    let code = out.code;
    let beta = functional.beta();
    let zero = vec![0.0; n];
    let p_zero = functional.eval_coeffs(&zero);
    let constants = theoretical_constants(2.0, f.sup_bound, cfg.s, &design, cfg.iterations, LEMMA8_C1, LEMMA8_C2, beta, p_zero)?;
    let diff: Vec<f64> = f.coeffs.iter().zip(&code.w).map(|(a, b)| a - b).collect();
    let l2_error = l2_norm_in_span(dict, &diff);
    let p_f = functional.eval_coeffs(&f.coeffs);
    let p_fs = functional.eval_coeffs(&code.w);
    let per_axis = quadrature_resolution(dict);
    let p_fs_quadrature = functional.eval_function(
        dict,
        |x: &[f64]| code.support.iter().map(|&i| code.w[i] * dict.eval(i, x)).sum(),
        per_axis,
    );
    let discretization = discretization_status(&design, cfg.s, samples.seed())?;
    let (p_hat, decoder) = match cfg.decoder {
        Decoder::ExactComposition => (p_fs, None),
        Decoder::LocalizedTaylor { n_cells } => {
            let target = HatTarget { functional, n };
            let (scaled, inflation) = rescale_holder(&target, constants.b_bar, beta)?;
            let approx = localized_taylor(&scaled, 0, beta, n_cells, cfg.s.max(1))?;
            let z: Vec<f64> = code.w.iter().map(|v| v / (2.0 * constants.b_bar)).collect();
            let value = approx.eval(&z);
            let taylor_bound = taylor_error_bound(n, 0, beta, n_cells)?;
            let report = DecoderReport {
                n_cells,
                rescale_inflation: inflation,
                taylor_bound,
                scaled_bound: constants.c9 * taylor_bound,
                decoder_error: (p_fs - value).abs(),
                active_cells: approx.len(),
            };
            (value, Some(report))
        }
    };
    Ok(PipelineReport {
        samples: y,
        s: cfg.s,
        iterations: cfg.iterations,
        delta,
        schedule_bound,
        l2_error,
        p_f,
        p_hat,
        p_fs_quadrature,
        abs_error: (p_f - p_hat).abs(),
        encoder_bound: out.schedule.bounds[cfg.iterations],
        holder_bound: l2_error.powf(beta),
        sigma_hat,
        composite_bound: constants.composite_bound(sigma_hat),
        valid: discretization.pass,
        discretization,
        constants,
        code,
        decoder,
    })
}

/// Coefficient class of a rate experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ClassSpec {
    A1Alpha { alpha: f64 },
    MixedSmooth { a: f64, b: f64, max_level: u32 },
}

impl ClassSpec {
    pub fn sample(&self, dict: &TrigDictionary, seed: u64) -> Result<SyntheticFunction> {
        match *self {
            ClassSpec::A1Alpha { alpha } => sample_a1_alpha(dict, alpha, seed),
            ClassSpec::MixedSmooth { a, b, max_level } => sample_mixed_smoothness(dict, a, b, max_level, seed),
        }
    }

    /// Decay exponent of the best `2s`-term error predicted for the class.
    fn predicted_slope(&self) -> f64 {
        match *self {
            ClassSpec::A1Alpha { alpha } => -(alpha + 0.5),
            ClassSpec::MixedSmooth { a, .. } => -a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateAxis {
    /// Mixture-norm best `2s`-term tail vs `s`.
    Sparsity,
    /// Noiseless encoder `l1` error vs `J`.
    Iterations,
    /// Mutual coherence vs `m`.
    Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub param: f64,
    pub mean_error: f64,
    pub std_error: f64,
    pub bound: f64,
    /// Whether the row enters the slope fit.
    pub slope_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub axis: RateAxis,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln mean_error` against `ln param`
    /// (against `param` itself for the iteration axis).
    pub slope: f64,
    /// Slope the theory predicts.
    pub reference_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweep {
    pub axis: RateAxis,
    pub values: Vec<usize>,
    /// Sample count for the sparsity and iteration axes.
    pub m: usize,
    /// Sparsity for the iteration axis.
    pub s: usize,
}

/// Runs a sweep along one axis, `trials` independent draws per value.
pub fn rate_experiment(
    class: &ClassSpec,
    dict: &TrigDictionary,
    sweep: &RateSweep,
    trials: usize,
    seed: u64,
) -> Result<RateTable> {
    if trials == 0 || sweep.values.is_empty() {
        return Err(Error::InvalidArgument("rate sweeps need trials >= 1 and a nonempty sweep".into()));
    }
    match sweep.axis {
        RateAxis::Sparsity => sparsity_rates(class, dict, sweep, trials, seed),
        RateAxis::Iterations => iteration_rates(dict, sweep, trials, seed),
        RateAxis::Samples => sample_rates(dict, sweep, trials, seed),
    }
}

fn sparsity_rates(class: &ClassSpec, dict: &TrigDictionary, sweep: &RateSweep, trials: usize, seed: u64) -> Result<RateTable> {
    let n = dict.len();
    if let Some(&s) = sweep.values.iter().find(|&&s| s == 0 || 2 * s > n) {
        return Err(Error::Sparsity { s, reason: format!("need 1 <= 2s <= N = {n}") });
    }
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = class.sample(dict, derive_seed(seed, 1, t as u64))?;
            let samples = draw_samples(dict.domain(), sweep.m, derive_seed(seed, 2, t as u64))?;
            let entries = crate::coherence::evaluate(dict, &samples)?;
            sweep.values.iter().map(|&s| sigma_s_mixture(&entries, dict.gamma(), &f.coeffs, 2 * s)).collect()
        })
        .collect::<Result<_>>()?;
    let predicted = class.predicted_slope();
    let rows: Vec<RateRow> = sweep
        .values
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let errs: Vec<f64> = per_trial.iter().map(|r| r[k]).collect();
            RateRow {
                param: s as f64,
                mean_error: mean(&errs),
                std_error: std_dev(&errs),
                bound: (s as f64).powf(predicted),
                slope_window: mean(&errs) > 0.0,
            }
        })
        .collect();
    let slope = fit_log_log(&rows);
    Ok(RateTable { axis: RateAxis::Sparsity, rows, slope, reference_slope: predicted })
}

fn fit_log_log(rows: &[RateRow]) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.slope_window).map(|r| (r.param.ln(), r.mean_error.ln())).unzip();
    ls_slope(&x, &y).unwrap_or(f64::NAN)
}

/// Noiseless encoder runs on exactly `s`-sparse in-span targets with the
/// oracle bound on the normalized coefficients.
fn iteration_rates(dict: &TrigDictionary, sweep: &RateSweep, trials: usize, seed: u64) -> Result<RateTable> {
    let n = dict.len();
    let j_max = *sweep.values.iter().max().expect("nonempty");
    let runs: Vec<(Vec<f64>, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, 3, t as u64);
            let samples = draw_samples(dict.domain(), sweep.m, rng.random())?;
            let design = DesignMatrix::from_dictionary(dict, &samples)?;
            let support = index::sample(&mut rng, n, sweep.s.min(n));
            let mut w = vec![0.0; n];
            for i in support.iter() {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                w[i] = sign * (0.5 + 0.5 * rng.random::<f64>());
            }
            let y: Vec<f64> = (design.entries() * DVector::from_column_slice(&w)).as_slice().to_vec();
            let b = w.iter().zip(design.normalizer().iter()).map(|(a, l)| (a / l).abs()).fold(0.0, f64::max);
            let out = encode(&design, &y, &EncodeOptions::new(sweep.s, b, 0.0, j_max).with_oracle(w))?;
            let errs = out.trace.iter().map(|r| r.l1_error.unwrap_or(f64::NAN)).collect();
            Ok((errs, out.schedule.rho))
        })
        .collect::<Result<_>>()?;
    let reference_slope = mean(&runs.iter().map(|(_, rho)| rho.ln()).collect::<Vec<_>>());
    let rows: Vec<RateRow> = sweep
        .values
        .iter()
        .map(|&j| {
            let logs: Vec<f64> = runs.iter().map(|(e, _)| e[j].max(f64::MIN_POSITIVE).ln()).collect();
            let errs: Vec<f64> = runs.iter().map(|(e, _)| e[j]).collect();
            let bound = mean(&runs.iter().map(|(e, rho)| e[0] * rho.powi(j as i32)).collect::<Vec<_>>());
            RateRow {
                param: j as f64,
                mean_error: mean(&errs),
                std_error: std_dev(&errs),
                bound,
                // pre-plateau: every trial still above round-off
                slope_window: logs.iter().all(|l| *l > (1e-12f64).ln()),
            }
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .zip(&sweep.values)
        .filter(|(r, _)| r.slope_window)
        .map(|(_, &j)| (j as f64, mean(&runs.iter().map(|(e, _)| e[j].ln()).collect::<Vec<_>>())))
        .unzip();
    let slope = ls_slope(&x, &y).unwrap_or(f64::NAN);
    Ok(RateTable { axis: RateAxis::Iterations, rows, slope, reference_slope })
}

fn sample_rates(dict: &TrigDictionary, sweep: &RateSweep, trials: usize, seed: u64) -> Result<RateTable> {
    let rows: Vec<RateRow> = sweep
        .values
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let mus: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let samples = draw_samples(dict.domain(), m, derive_seed(seed, 4 + k as u64, t as u64))?;
                    Ok(DesignMatrix::from_dictionary(dict, &samples)?.mu())
                })
                .collect::<Result<_>>()?;
            let bound = crate::coherence::coherence_bound_lemma8(dict.gamma(), m, dict.len(), 0.1)?;
            Ok(RateRow { param: m as f64, mean_error: mean(&mus), std_error: std_dev(&mus), bound, slope_window: true })
        })
        .collect::<Result<_>>()?;
    let slope = fit_log_log(&rows);
    Ok(RateTable { axis: RateAxis::Samples, rows, slope, reference_slope: -0.5 })
}

/// Sparsity for sample-size-driven runs: the sampling-lemma choice, at least 1.
pub fn lemma8_sparsity_at_least_one(gamma: f64, m: usize, n: usize, eps: f64) -> Result<usize> {
    Ok(select_sparsity_lemma8(gamma, m, n, eps)?.max(1))
}

/// Exact best `s`-term estimate from samples and its sampled residual, for
/// callers checking the estimator bounds.
pub fn sampled_best_s_term(design: &DesignMatrix, y: &[f64], s: usize) -> Result<(Vec<f64>, f64)> {
    if binomial(design.n(), s) > COMBINATORIAL_LIMIT {
        return Err(Error::TooLarge { count: binomial(design.n(), s), limit: COMBINATORIAL_LIMIT, hint: "use omp".into() });
    }
    let r = best_s_term_exhaustive(design.entries(), y, s, 2.0)?;
    Ok((r.code.w, r.empirical_residual))
}
