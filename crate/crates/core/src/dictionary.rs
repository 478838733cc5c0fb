//! Dictionaries of bounded, mutually orthogonal functions and synthetic
//! members of the coefficient-decay and mixed-smoothness classes.
//!
//! Every dictionary here satisfies two standing conditions:
//! `sup |u_i| <= 1` on the domain, and `<u_i, u_j> = gamma * delta_ij` in
//! `L2(domain, uniform probability measure)`. Indices are 0-based in code;
//! the weight `i^alpha` of the decay class uses the 1-based position `i + 1`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// `[0, 1]^d`
    UnitCube,
    /// `[0, 2pi]^d`
    Torus,
}

/// A domain carrying the uniform probability measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub dim: usize,
    pub kind: DomainKind,
}

impl Domain {
    pub fn new(dim: usize, kind: DomainKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("domain dimension must be >= 1".into()));
        }
        Ok(Self { dim, kind })
    }

    pub fn unit_cube(dim: usize) -> Result<Self> {
        Self::new(dim, DomainKind::UnitCube)
    }

    pub fn torus(dim: usize) -> Result<Self> {
        Self::new(dim, DomainKind::Torus)
    }

    /// Side length of the domain along every axis.
    pub fn period(&self) -> f64 {
        match self.kind {
            DomainKind::UnitCube => 1.0,
            DomainKind::Torus => 2.0 * PI,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let p = self.period();
        x.len() == self.dim && x.iter().all(|&t| (0.0..=p).contains(&t))
    }

    /// Points of the uniform periodic tensor grid with `per_axis` nodes per
    /// axis, `t_j = j * period / per_axis`, in row-major order.
    pub fn tensor_grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let h = self.period() / per_axis as f64;
        let total = per_axis.pow(self.dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim];
        for _ in 0..total {
            points.push(idx.iter().map(|&j| j as f64 * h).collect());
            for axis in (0..self.dim).rev() {
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
        points
    }

    /// Uniform-grid estimate of `∫ f dν`.
    pub fn grid_mean<F: Fn(&[f64]) -> f64>(&self, per_axis: usize, f: F) -> f64 {
        let grid = self.tensor_grid(per_axis);
        let n = grid.len() as f64;
        grid.iter().map(|x| f(x)).sum::<f64>() / n
    }
}

/// An evaluable finite family `{u_i}` on a domain.
pub trait Dictionary: Send + Sync {
    fn domain(&self) -> &Domain;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Orthogonality constant: `<u_i, u_i> = gamma`.
    fn gamma(&self) -> f64;

    /// Riesz constant `R = 1 / gamma`.
    fn riesz_constant(&self) -> f64 {
        1.0 / self.gamma()
    }

    fn eval(&self, index: usize, x: &[f64]) -> f64;

    /// Evaluates every element at `x` into `out`.
    fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.eval(i, x);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Factor {
    Const,
    Cos,
    Sin,
}

/// One tensor-product element: per-axis frequency and factor type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrigElement {
    pub freq: Vec<u32>,
    pub factors: Vec<Factor>,
}

impl TrigElement {
    pub fn total_freq(&self) -> u32 {
        self.freq.iter().sum()
    }

    /// Mixed dyadic level: sum over axes of the bit length of `k_i`, so that
    /// `floor(2^(n-1)) <= k < 2^n` has level `n`.
    pub fn mixed_level(&self) -> u32 {
        self.freq.iter().map(|&k| u32::BITS - k.leading_zeros()).sum()
    }
}

/// Serializable description of a trigonometric dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    pub kind: DomainKind,
    pub d: usize,
    pub max_freq: u32,
}

impl DictionarySpec {
    pub fn build(&self) -> Result<TrigDictionary> {
        build_trig_dictionary(Domain::new(self.d, self.kind)?, self.max_freq)
    }
}

/// Real tensor-product trigonometric system, normalized so every element
/// has sup-norm at most 1 and `gamma = 2^-d`.
#[derive(Debug, Clone)]
pub struct TrigDictionary {
    domain: Domain,
    max_freq: u32,
    elements: Vec<TrigElement>,
}

/// Builds the `(2 max_freq + 1)^d` element trigonometric dictionary.
///
/// Per axis the factors are `1/sqrt(2)`, `cos(w k t)` and `sin(w k t)` with
/// `w = 2pi` on the unit cube and `w = 1` on the torus. Elements are ordered
/// by total frequency, then lexicographic frequency vector, then factor
/// types with cosine before sine.
pub fn build_trig_dictionary(domain: Domain, max_freq: u32) -> Result<TrigDictionary> {
    let per_axis = 2 * max_freq as usize + 1;
    let n = per_axis
        .checked_pow(domain.dim as u32)
        .ok_or_else(|| Error::InvalidDictionary("dictionary size overflows".into()))?;
    if n < 2 {
        return Err(Error::InvalidDictionary(format!(
            "dictionary needs at least 2 elements, max_freq = {max_freq} gives {n}"
        )));
    }
    let d = domain.dim;
    let mut elements = Vec::with_capacity(n);
    let base = max_freq as usize + 1;
    for code in 0..base.pow(d as u32) {
        let mut rest = code;
        let mut freq = vec![0u32; d];
        for axis in (0..d).rev() {
            freq[axis] = (rest % base) as u32;
            rest /= base;
        }
        let nonzero: Vec<usize> = (0..d).filter(|&a| freq[a] > 0).collect();
        for mask in 0..(1u32 << nonzero.len()) {
            let mut factors = vec![Factor::Const; d];
            for (bit, &axis) in nonzero.iter().enumerate() {
                // highest bit ~ first nonzero axis, so the mask order is lexicographic
                let shift = nonzero.len() - 1 - bit;
                factors[axis] = if (mask >> shift) & 1 == 0 { Factor::Cos } else { Factor::Sin };
            }
            elements.push(TrigElement { freq: freq.clone(), factors });
        }
    }
    // stable: within a total frequency, enumeration order is already lexicographic
    elements.sort_by(|a, b| {
        a.total_freq()
            .cmp(&b.total_freq())
            .then_with(|| a.freq.cmp(&b.freq))
            .then_with(|| a.factors.cmp(&b.factors))
    });
    debug_assert_eq!(elements.len(), n);
    Ok(TrigDictionary { domain, max_freq, elements })
}

impl TrigDictionary {
    pub fn max_freq(&self) -> u32 {
        self.max_freq
    }

    pub fn elements(&self) -> &[TrigElement] {
        &self.elements
    }

    pub fn spec(&self) -> DictionarySpec {
        DictionarySpec { kind: self.domain.kind, d: self.domain.dim, max_freq: self.max_freq }
    }

    fn angular(&self) -> f64 {
        match self.domain.kind {
            DomainKind::UnitCube => 2.0 * PI,
            DomainKind::Torus => 1.0,
        }
    }

    fn factor(&self, f: Factor, k: u32, t: f64) -> f64 {
        match f {
            Factor::Const => FRAC_1_SQRT_2,
            Factor::Cos => (self.angular() * k as f64 * t).cos(),
            Factor::Sin => (self.angular() * k as f64 * t).sin(),
        }
    }
}

impl Dictionary for TrigDictionary {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn len(&self) -> usize {
        self.elements.len()
    }

    fn gamma(&self) -> f64 {
        0.5f64.powi(self.domain.dim as i32)
    }

    fn eval(&self, index: usize, x: &[f64]) -> f64 {
        let e = &self.elements[index];
        e.freq
            .iter()
            .zip(&e.factors)
            .zip(x)
            .map(|((&k, &f), &t)| self.factor(f, k, t))
            .product()
    }

    fn eval_all(&self, x: &[f64], out: &mut [f64]) {
        let kmax = self.max_freq as usize;
        let w = self.angular();
        // table[axis][k] = (cos, sin)
        let table: Vec<Vec<(f64, f64)>> = x
            .iter()
            .map(|&t| (0..=kmax).map(|k| (w * k as f64 * t).cos()).zip((0..=kmax).map(|k| (w * k as f64 * t).sin())).collect())
            .collect();
        for (o, e) in out.iter_mut().zip(&self.elements) {
            let mut v = 1.0;
            for (axis, (&k, &f)) in e.freq.iter().zip(&e.factors).enumerate() {
                v *= match f {
                    Factor::Const => FRAC_1_SQRT_2,
                    Factor::Cos => table[axis][k as usize].0,
                    Factor::Sin => table[axis][k as usize].1,
                };
            }
            *o = v;
        }
    }
}

/// Evaluates every element of `dict` at `x` into a fresh vector.
pub fn eval_all<D: Dictionary + ?Sized>(dict: &D, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dict.len()];
    dict.eval_all(x, &mut out);
    out
}

/// `sum_i coeffs_i u_i(x)`.
pub fn synthesize<D: Dictionary + ?Sized>(dict: &D, coeffs: &[f64], x: &[f64]) -> Result<f64> {
    if coeffs.len() != dict.len() {
        return Err(Error::DimensionMismatch { expected: dict.len(), got: coeffs.len() });
    }
    if x.len() != dict.domain().dim {
        return Err(Error::DimensionMismatch { expected: dict.domain().dim, got: x.len() });
    }
    let vals = eval_all(dict, x);
    Ok(coeffs.iter().zip(&vals).map(|(c, u)| c * u).sum())
}

/// Exact `L2(ν)` norm of an in-span function under orthogonality: `sqrt(gamma) ||w||_2`.
pub fn l2_norm_in_span<D: Dictionary + ?Sized>(dict: &D, coeffs: &[f64]) -> f64 {
    (dict.gamma() * coeffs.iter().map(|c| c * c).sum::<f64>()).sqrt()
}

/// Maximum deviation `|<u_i, u_j> - gamma delta_ij|` over all pairs, by
/// uniform tensor-grid quadrature with `grid_resolution` nodes per axis.
pub fn gram_check<D: Dictionary + ?Sized>(dict: &D, grid_resolution: usize) -> Result<f64> {
    let n = dict.len();
    if grid_resolution < 2 * n {
        return Err(Error::InvalidArgument(format!(
            "grid resolution {grid_resolution} is below 2N = {}",
            2 * n
        )));
    }
    let grid = dict.domain().tensor_grid(grid_resolution);
    let mut gram = vec![0.0; n * n];
    let mut vals = vec![0.0; n];
    for x in &grid {
        dict.eval_all(x, &mut vals);
        for i in 0..n {
            let vi = vals[i];
            for j in i..n {
                gram[i * n + j] += vi * vals[j];
            }
        }
    }
    let count = grid.len() as f64;
    let gamma = dict.gamma();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let target = if i == j { gamma } else { 0.0 };
            worst = worst.max((gram[i * n + j] / count - target).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class_tag", content = "params")]
pub enum ClassTag {
    /// `sum_i |c_i| i^alpha <= 1`
    A1Alpha { alpha: f64 },
    /// Dyadic mixed-block Wiener-norm decay. `rescale` is the global factor
    /// applied after per-block masses were set, so unscaled masses are
    /// `mass / rescale`.
    MixedSmooth { a: f64, b: f64, max_level: u32, rescale: f64 },
    Custom,
}

/// A coefficient-defined function `f = sum_i c_i u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFunction {
    #[serde(flatten)]
    pub class_tag: ClassTag,
    pub coeffs: Vec<f64>,
    /// `sum_i |c_i|`, a valid sup-norm bound since `sup |u_i| <= 1`.
    pub sup_bound: f64,
}

impl SyntheticFunction {
    pub fn custom(coeffs: Vec<f64>) -> Self {
        let sup_bound = coeffs.iter().map(|c| c.abs()).sum();
        Self { class_tag: ClassTag::Custom, coeffs, sup_bound }
    }

    pub fn eval<D: Dictionary + ?Sized>(&self, dict: &D, x: &[f64]) -> Result<f64> {
        synthesize(dict, &self.coeffs, x)
    }
}

/// `sum_i |c_i| i^alpha` with 1-based `i`.
pub fn a1_alpha_norm(coeffs: &[f64], alpha: f64) -> f64 {
    coeffs.iter().enumerate().map(|(i, c)| c.abs() * ((i + 1) as f64).powf(alpha)).sum()
}

/// Rescales `coeffs` so that `sum_i |c_i| i^alpha = 1`.
pub fn normalize_a1_alpha(coeffs: &mut [f64], alpha: f64) -> Result<()> {
    let norm = a1_alpha_norm(coeffs, alpha);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("cannot normalize a zero or non-finite coefficient vector".into()));
    }
    coeffs.iter_mut().for_each(|c| *c /= norm);
    Ok(())
}

/// Random member of the unit ball of the decay class, normalized onto its
/// boundary. Magnitudes are `U(0,1] * i^(-alpha-1)` with uniform signs.
pub fn sample_a1_alpha<D: Dictionary + ?Sized>(dict: &D, alpha: f64, seed: u64) -> Result<SyntheticFunction> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut coeffs: Vec<f64> = (0..dict.len())
        .map(|i| {
            let mag = (1.0 - rng.random::<f64>()) * ((i + 1) as f64).powf(-alpha - 1.0);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    normalize_a1_alpha(&mut coeffs, alpha)?;
    let sup_bound = coeffs.iter().map(|c| c.abs()).sum();
    Ok(SyntheticFunction { class_tag: ClassTag::A1Alpha { alpha }, coeffs, sup_bound })
}

/// All `n in N_0^d` with `|n|_1 = level`, in lexicographic order.
pub fn dyadic_level_vectors(d: usize, level: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == d {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=remaining {
            prefix.push(v);
            rec(d, remaining - v, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if d > 0 {
        rec(d, level, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// Class bound on the block mass at mixed level `j`: `2^(-a j) jbar^((d-1) b)`.
pub fn mixed_block_bound(a: f64, b: f64, d: usize, level: u32) -> f64 {
    let jbar = level.max(1) as f64;
    2f64.powf(-a * level as f64) * jbar.powf((d as f64 - 1.0) * b)
}

/// `sum |c_i|` over each mixed level `0..=max_level`.
pub fn mixed_block_masses(dict: &TrigDictionary, coeffs: &[f64], max_level: u32) -> Vec<f64> {
    let mut masses = vec![0.0; max_level as usize + 1];
    for (e, c) in dict.elements().iter().zip(coeffs) {
        let j = e.mixed_level();
        if j <= max_level {
            masses[j as usize] += c.abs();
        }
    }
    masses
}

/// Random member of the mixed-smoothness class on a trigonometric dictionary.
///
/// Each mixed level `j <= max_level` receives random signs and magnitudes
/// whose absolute sum equals the class bound exactly; the whole vector is
/// then divided by its `l1` mass if that exceeds 1, and the factor is kept in
/// the class tag.
pub fn sample_mixed_smoothness(
    dict: &TrigDictionary,
    a: f64,
    b: f64,
    max_level: u32,
    seed: u64,
) -> Result<SyntheticFunction> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("a must be positive, got {a}")));
    }
    let needed = (1u64 << max_level) - 1;
    if needed > dict.max_freq() as u64 {
        return Err(Error::Range(format!(
            "max_level {max_level} needs frequencies up to {needed}, dictionary has {}",
            dict.max_freq()
        )));
    }
    let d = dict.domain().dim;
    let mut rng = rng_from_seed(seed);
    let mut coeffs = vec![0.0; dict.len()];
    for level in 0..=max_level {
        let members: Vec<usize> = dict
            .elements()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.mixed_level() == level)
            .map(|(i, _)| i)
            .collect();
        let raw: Vec<f64> = members.iter().map(|_| 1.0 - rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let target = mixed_block_bound(a, b, d, level);
        for (&i, r) in members.iter().zip(&raw) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            coeffs[i] = sign * target * r / total;
        }
    }
    let mass: f64 = coeffs.iter().map(|c| c.abs()).sum();
    let rescale = if mass > 1.0 { 1.0 / mass } else { 1.0 };
    if rescale != 1.0 {
        coeffs.iter_mut().for_each(|c| *c *= rescale);
    }
    let sup_bound = coeffs.iter().map(|c| c.abs()).sum();
    Ok(SyntheticFunction { class_tag: ClassTag::MixedSmooth { a, b, max_level, rescale }, coeffs, sup_bound })
}
