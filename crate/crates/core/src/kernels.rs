//! Stationary kernels and finite feature maps.
//!
//! Two feature maps are provided:
//!
//! * [`mercer_truncate`] gives the leading eigenpairs of the squared
//!   exponential kernel with respect to a Gaussian base measure centred on
//!   the domain midpoint, with standard deviation a quarter of each box side
//!   (so the box spans +/- 2 sd). The one-dimensional expansion is the
//!   classical Hermite-function one; in `d > 1` the eigenpairs are tensor
//!   products, ranked by eigenvalue.
//! * [`rff_sample`] draws random Fourier features in cosine/sine pairs, so the
//!   reconstructed kernel at zero lag is exactly the kernel variance.
//!
//! For a map `k(x, x') ~ sum_j lambda_j phi_j(x) phi_j(x')` a prior sample
//! is `sum_j sqrt(lambda_j) w_j phi_j(x)`. Random Fourier maps carry unit
//! weights and fold the amplitude into `phi_j`.

use std::collections::{BinaryHeap, HashSet};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::seeding;

/// Points per axis used to locate `sup |phi_j|` on the domain.
pub const SUP_GRID_POINTS: usize = 10_000;

/// Cramér's bound: `|H_n(z)| exp(-z^2/2) <= K sqrt(2^n n!)`.
const CRAMER_K: f64 = 1.086_435;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaternNu {
    ThreeHalves,
    FiveHalves,
}

impl MaternNu {
    pub fn value(self) -> f64 {
        match self {
            MaternNu::ThreeHalves => 1.5,
            MaternNu::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    SquaredExponential,
    Matern(MaternNu),
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::SquaredExponential => write!(f, "se"),
            KernelFamily::Matern(MaternNu::ThreeHalves) => write!(f, "matern32"),
            KernelFamily::Matern(MaternNu::FiveHalves) => write!(f, "matern52"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared_exponential" => Ok(KernelFamily::SquaredExponential),
            "matern32" | "matern1.5" => Ok(KernelFamily::Matern(MaternNu::ThreeHalves)),
            "matern52" | "matern2.5" => Ok(KernelFamily::Matern(MaternNu::FiveHalves)),
            other => Err(Error::InvalidConfig(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A stationary kernel with per-dimension lengthscales.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    variance: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::InvalidInput("kernel needs at least one dimension".into()));
        }
        if lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput("lengthscales must be positive and finite".into()));
        }
        // Bounded kernel values: k(x, x') <= 1.
        if !(variance > 0.0 && variance <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "kernel variance must lie in (0, 1], got {variance}"
            )));
        }
        Ok(Self { family, lengthscales, variance })
    }

    pub fn se(lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscales, variance)
    }

    pub fn matern(nu: MaternNu, lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern(nu), lengthscales, variance)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Kernel value without dimension checks. Callers guarantee lengths match.
    #[inline]
    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let u = (a - b) / l;
                u * u
            })
            .sum();
        match self.family {
            KernelFamily::SquaredExponential => self.variance * (-0.5 * r2).exp(),
            KernelFamily::Matern(MaternNu::ThreeHalves) => {
                let s = (3.0 * r2).sqrt();
                self.variance * (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern(MaternNu::FiveHalves) => {
                let s = (5.0 * r2).sqrt();
                self.variance * (1.0 + s + 5.0 * r2 / 3.0) * (-s).exp()
            }
        }
    }

    /// Plain-text `key = value` lines.
    pub fn to_config(&self) -> String {
        let ls: Vec<String> = self.lengthscales.iter().map(|l| l.to_string()).collect();
        format!(
            "kernel = {}\nlengthscale = {}\nkernel_variance = {}\n",
            self.family,
            ls.join(","),
            self.variance
        )
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim(spec.dim(), x.len())?;
    check_dim(spec.dim(), y.len())?;
    Ok(spec.value(x, y))
}

/// An axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidInput("domain has no dimensions".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && u > l)) {
            return Err(Error::InvalidInput("degenerate domain: need lower < upper on every axis".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v >= l && v <= u)
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, l), u)| v.clamp(*l, *u))
            .collect()
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((t, l), h)| l + t * (h - l))
            .collect()
    }
}

/// One axis of the SE Hermite expansion.
///
/// With `k(x, x') = exp(-eps^2 (x - x')^2)` and base density
/// `a / sqrt(pi) exp(-a^2 x^2)`, let `b = (1 + (2 eps / a)^2)^{1/4}` and
/// `d2 = a^2 (b^2 - 1) / 2`. Then
/// `lambda_n = sqrt(a^2 / (a^2 + d2 + eps^2)) q^n` with
/// `q = eps^2 / (a^2 + d2 + eps^2)`, and
/// `phi_n(x) = sqrt(b) exp(-d2 x^2) H_n(a b x) / sqrt(2^n n!)`.
#[derive(Debug, Clone)]
struct HermiteAxis {
    center: f64,
    alpha: f64,
    beta: f64,
    delta2: f64,
    lead: f64,
    ratio: f64,
    half_width: f64,
}

impl HermiteAxis {
    fn new(lengthscale: f64, lower: f64, upper: f64) -> Self {
        let center = 0.5 * (lower + upper);
        let sd = 0.25 * (upper - lower);
        let eps2 = 1.0 / (2.0 * lengthscale * lengthscale);
        let alpha = 1.0 / (std::f64::consts::SQRT_2 * sd);
        let a2 = alpha * alpha;
        let beta = (1.0 + 4.0 * eps2 / a2).powf(0.25);
        let delta2 = 0.5 * a2 * (beta * beta - 1.0);
        let denom = a2 + delta2 + eps2;
        Self {
            center,
            alpha,
            beta,
            delta2,
            lead: (a2 / denom).sqrt(),
            ratio: eps2 / denom,
            half_width: 0.5 * (upper - lower),
        }
    }

    fn eigenvalue(&self, n: usize) -> f64 {
        self.lead * self.ratio.powi(n as i32)
    }

    /// `phi_0 .. phi_max_order` at `x`, via the normalised Hermite recurrence.
    fn eval_into(&self, x: f64, max_order: usize, out: &mut Vec<f64>) {
        out.clear();
        let s = x - self.center;
        let z = self.alpha * self.beta * s;
        let envelope = self.beta.sqrt() * (-self.delta2 * s * s).exp();
        let mut prev = 0.0;
        let mut cur = 1.0;
        out.push(envelope * cur);
        for n in 0..max_order {
            let nf = n as f64;
            let next = z * (2.0 / (nf + 1.0)).sqrt() * cur - (nf / (nf + 1.0)).sqrt() * prev;
            prev = cur;
            cur = next;
            out.push(envelope * cur);
        }
    }

    /// Uniform bound on `phi_n^2` over the box, from Cramér's inequality.
    fn sup_sq_envelope(&self) -> f64 {
        // phi_n = sqrt(b) [g_n(z) e^{-z^2/2}] e^{a^2 s^2 / 2}, |s| <= half_width.
        let a2s2 = (self.alpha * self.half_width).powi(2);
        self.beta * CRAMER_K * CRAMER_K * a2s2.exp()
    }
}

/// How the spectral tail beyond the last stored eigenpair is bounded.
#[derive(Debug, Clone, PartialEq)]
pub enum TailEnvelope {
    /// Terms `lambda_j phi_bar_j^2` decay at least geometrically with this ratio.
    Geometric { ratio: f64 },
    /// `sum_j lambda_j = total` and every `phi_j^2 <= sup_sq` on the domain.
    EigenSum { total: f64, sup_sq: f64 },
}

/// Eigenvalues, sup bounds and a decay envelope: everything `tail_mass` needs.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    sup_bounds: Vec<f64>,
    envelope: TailEnvelope,
}

impl Spectrum {
    pub fn from_parts(eigenvalues: Vec<f64>, sup_bounds: Vec<f64>, envelope: TailEnvelope) -> Result<Self> {
        check_dim(eigenvalues.len(), sup_bounds.len())?;
        if eigenvalues.iter().any(|l| !(*l >= 0.0)) || sup_bounds.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidInput("eigenvalues and sup bounds must be non-negative".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("eigenvalues must be non-increasing".into()));
        }
        if let TailEnvelope::Geometric { ratio } = envelope {
            if !(0.0..1.0).contains(&ratio) {
                return Err(Error::InvalidInput("geometric tail ratio must lie in [0, 1)".into()));
            }
        }
        Ok(Self { eigenvalues, sup_bounds, envelope })
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sup_bounds(&self) -> &[f64] {
        &self.sup_bounds
    }

    /// Analytic bound on `sum_{j > cap} lambda_j phi_bar_j^2`.
    pub fn remainder(&self, cap: usize) -> f64 {
        match self.envelope {
            TailEnvelope::Geometric { ratio } => {
                if cap == 0 {
                    return f64::INFINITY;
                }
                let last = self.eigenvalues[cap - 1] * self.sup_bounds[cap - 1].powi(2);
                last * ratio / (1.0 - ratio)
            }
            TailEnvelope::EigenSum { total, sup_sq } => {
                let head: f64 = self.eigenvalues[..cap].iter().sum();
                (total - head).max(0.0) * sup_sq
            }
        }
    }

    /// `sum_{m < j <= cap} lambda_j phi_bar_j^2` plus the remainder beyond `cap`.
    pub fn tail_mass(&self, m: usize, cap: usize) -> Result<f64> {
        if cap > self.len() {
            return Err(Error::InvalidInput(format!(
                "cap {cap} exceeds the {} stored eigenpairs",
                self.len()
            )));
        }
        if m > cap {
            return Err(Error::InvalidInput(format!("M = {m} exceeds cap = {cap}")));
        }
        let explicit: f64 = (m..cap)
            .map(|j| self.eigenvalues[j] * self.sup_bounds[j].powi(2))
            .sum();
        Ok(explicit + self.remainder(cap))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    MercerTruncated,
    RandomFourier,
}

#[derive(Debug, Clone)]
struct MercerFeatures {
    axes: Vec<HermiteAxis>,
    /// Per-feature multi-index into the axis expansions.
    indices: Vec<Vec<usize>>,
    max_order: Vec<usize>,
    spectrum: Spectrum,
}

#[derive(Debug, Clone)]
struct FourierFeatures {
    /// One frequency per cosine/sine pair.
    frequencies: Vec<Vec<f64>>,
    amplitude: f64,
    seed: u64,
}

#[derive(Debug, Clone)]
enum Repr {
    Mercer(MercerFeatures),
    Fourier(FourierFeatures),
}

/// A finite feature expansion of a kernel. Cheap to clone.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    kernel: KernelSpec,
    repr: Arc<Repr>,
    weights: Arc<Vec<f64>>,
}

impl FeatureMap {
    pub fn kind(&self) -> FeatureKind {
        match *self.repr {
            Repr::Mercer(_) => FeatureKind::MercerTruncated,
            Repr::Fourier(_) => FeatureKind::RandomFourier,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Per-feature weights: Mercer eigenvalues, or ones for random features.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mercer eigenvalues; `None` for random features.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        match &*self.repr {
            Repr::Mercer(m) => Some(m.spectrum.eigenvalues()),
            Repr::Fourier(_) => None,
        }
    }

    pub fn sup_bounds(&self) -> Vec<f64> {
        match &*self.repr {
            Repr::Mercer(m) => m.spectrum.sup_bounds().to_vec(),
            Repr::Fourier(f) => vec![f.amplitude; self.len()],
        }
    }

    pub fn spectrum(&self) -> Result<&Spectrum> {
        match &*self.repr {
            Repr::Mercer(m) => Ok(&m.spectrum),
            Repr::Fourier(_) => Err(Error::Unsupported(
                "random Fourier features have no eigenvalue tail".into(),
            )),
        }
    }

    /// Seed the random features were drawn with.
    pub fn seed(&self) -> Option<u64> {
        match &*self.repr {
            Repr::Fourier(f) => Some(f.seed),
            Repr::Mercer(_) => None,
        }
    }

    /// Frequencies of a random Fourier map (one per cosine/sine pair).
    pub fn frequencies(&self) -> Option<&[Vec<f64>]> {
        match &*self.repr {
            Repr::Fourier(f) => Some(&f.frequencies),
            Repr::Mercer(_) => None,
        }
    }

    /// All features `phi_1(x) .. phi_M(x)`.
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.kernel.dim(), x.len())?;
        let mut out = Vec::with_capacity(self.len());
        self.features_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`features`](Self::features) writing into `out`.
    pub fn features_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match &*self.repr {
            Repr::Mercer(m) => {
                let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(m.axes.len());
                for (i, axis) in m.axes.iter().enumerate() {
                    let mut buf = Vec::with_capacity(m.max_order[i] + 1);
                    axis.eval_into(x[i], m.max_order[i], &mut buf);
                    per_axis.push(buf);
                }
                for idx in &m.indices {
                    out.push(idx.iter().enumerate().map(|(i, &n)| per_axis[i][n]).product());
                }
            }
            Repr::Fourier(f) => {
                for w in &f.frequencies {
                    let arg: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                    out.push(f.amplitude * arg.cos());
                    out.push(f.amplitude * arg.sin());
                }
            }
        }
    }

    /// Single feature `phi_j(x)`.
    pub fn feature(&self, j: usize, x: &[f64]) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::InvalidInput(format!("feature index {j} out of range")));
        }
        Ok(self.features(x)?[j])
    }

    /// `sum_j lambda_j phi_j(x) phi_j(y)` over the first `count` features.
    pub fn reconstruct(&self, x: &[f64], y: &[f64], count: usize) -> Result<f64> {
        let fx = self.features(x)?;
        let fy = self.features(y)?;
        Ok(fx
            .iter()
            .zip(&fy)
            .zip(self.weights.iter())
            .take(count)
            .map(|((a, b), l)| l * a * b)
            .sum())
    }
}

#[derive(PartialEq)]
struct Candidate {
    value: f64,
    index: Vec<usize>,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Larger eigenvalue first, then lexicographically smaller index.
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn axis_sup(axis: &HermiteAxis, lower: f64, upper: f64, max_order: usize) -> Vec<f64> {
    let mut sups = vec![0.0f64; max_order + 1];
    let mut buf = Vec::with_capacity(max_order + 1);
    let step = (upper - lower) / (SUP_GRID_POINTS - 1) as f64;
    for i in 0..SUP_GRID_POINTS {
        axis.eval_into(lower + step * i as f64, max_order, &mut buf);
        for (s, v) in sups.iter_mut().zip(&buf) {
            *s = s.max(v.abs());
        }
    }
    sups
}

/// Leading `count` Mercer eigenpairs of an SE kernel on `domain`.
pub fn mercer_truncate(spec: &KernelSpec, count: usize, domain: &BoxDomain) -> Result<FeatureMap> {
    if spec.family() != KernelFamily::SquaredExponential {
        return Err(Error::UnsupportedDecomposition(format!(
            "no analytic eigen-expansion for the {} kernel; use random Fourier features",
            spec.family()
        )));
    }
    check_dim(spec.dim(), domain.dim())?;
    if count == 0 {
        return Err(Error::InvalidInput("feature count must be positive".into()));
    }
    let d = spec.dim();
    let axes: Vec<HermiteAxis> = (0..d)
        .map(|i| HermiteAxis::new(spec.lengthscales()[i], domain.lower[i], domain.upper[i]))
        .collect();
    let scale = spec.variance();
    let value_of = |idx: &[usize]| -> f64 {
        scale * idx.iter().enumerate().map(|(i, &n)| axes[i].eigenvalue(n)).product::<f64>()
    };

    // Best-first enumeration of multi-indices by eigenvalue.
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let origin = vec![0usize; d];
    heap.push(Candidate { value: value_of(&origin), index: origin.clone() });
    seen.insert(origin);
    let mut indices = Vec::with_capacity(count);
    let mut eigenvalues = Vec::with_capacity(count);
    while indices.len() < count {
        let Candidate { value, index } = heap.pop().expect("enumeration is infinite");
        for i in 0..d {
            let mut next = index.clone();
            next[i] += 1;
            if seen.insert(next.clone()) {
                heap.push(Candidate { value: value_of(&next), index: next });
            }
        }
        eigenvalues.push(value);
        indices.push(index);
    }

    let max_order: Vec<usize> = (0..d)
        .map(|i| indices.iter().map(|idx| idx[i]).max().unwrap_or(0))
        .collect();
    let axis_sups: Vec<Vec<f64>> = axes
        .iter()
        .enumerate()
        .map(|(i, a)| axis_sup(a, domain.lower[i], domain.upper[i], max_order[i]))
        .collect();
    let sup_bounds: Vec<f64> = indices
        .iter()
        .map(|idx| idx.iter().enumerate().map(|(i, &n)| axis_sups[i][n]).product())
        .collect();
    let sup_sq: f64 = axes.iter().map(HermiteAxis::sup_sq_envelope).product();
    let spectrum = Spectrum::from_parts(
        eigenvalues.clone(),
        sup_bounds,
        // Eigenvalues of a unit-trace probability-measure operator sum to the variance.
        TailEnvelope::EigenSum { total: scale, sup_sq },
    )?;
    Ok(FeatureMap {
        kernel: spec.clone(),
        repr: Arc::new(Repr::Mercer(MercerFeatures { axes, indices, max_order, spectrum })),
        weights: Arc::new(eigenvalues),
    })
}

/// `count` random Fourier features (`count / 2` cosine/sine pairs).
pub fn rff_sample(spec: &KernelSpec, count: usize, seed: u64) -> Result<FeatureMap> {
    if count == 0 || count % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "random Fourier feature count must be a positive even number, got {count}"
        )));
    }
    let pairs = count / 2;
    let mut rng = seeding::rng(seed);
    let chi = match spec.family() {
        KernelFamily::SquaredExponential => None,
        KernelFamily::Matern(nu) => Some(
            ChiSquared::new(2.0 * nu.value()).expect("positive degrees of freedom"),
        ),
    };
    let frequencies: Vec<Vec<f64>> = (0..pairs)
        .map(|_| {
            // Matérn spectral density is a multivariate Student-t with 2 nu dof.
            let scale = match (&chi, spec.family()) {
                (Some(chi), KernelFamily::Matern(nu)) => {
                    let g: f64 = chi.sample(&mut rng);
                    (2.0 * nu.value() / g).sqrt()
                }
                _ => 1.0,
            };
            spec.lengthscales()
                .iter()
                .map(|l| {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * z / l
                })
                .collect()
        })
        .collect();
    Ok(FeatureMap {
        kernel: spec.clone(),
        repr: Arc::new(Repr::Fourier(FourierFeatures {
            frequencies,
            amplitude: (spec.variance() / pairs as f64).sqrt(),
            seed,
        })),
        weights: Arc::new(vec![1.0; count]),
    })
}

/// Tail mass `sum_{j > m} lambda_j phi_bar_j^2`: explicit up to `cap`, analytic beyond.
pub fn tail_mass(fm: &FeatureMap, m: usize, cap: usize) -> Result<f64> {
    fm.spectrum()?.tail_mass(m, cap)
}
