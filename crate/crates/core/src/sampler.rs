//! Decoupled posterior sampling with exploration scaling.
//!
//! A sample is a scaled prior draw from a finite feature map plus a finite
//! update through the inducing variables:
//!
//! ```text
//! f(x) = alpha sum_j sqrt(lambda_j) w_j phi_j(x) + sum_i v_i k_u(x)_i
//! v    = K_uu^{-1} (alpha (u - m) + m - alpha P w)
//! ```
//!
//! where `u ~ N(m, S)`, `w ~ N(0, I)` and `P w` is the prior draw's value of
//! the inducing variables: `P_ij = sqrt(lambda_j) phi_j(z_i)` for inducing
//! points, `P_ij = sqrt(lambda_i) [i == j]` for inducing features. The mean
//! is the SVGP mean for every `alpha`; the covariance scales with `alpha^2`.
//!
//! Internally everything is whitened by `L = chol(K_uu)`: the update is
//! `a(x)^T v_w` with `a(x) = L^{-1} k_u(x)` and
//! `v_w = alpha S_w^{1/2} xi + m_w - alpha L^{-1} P w`, `xi ~ N(0, I)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::kernels::{BoxDomain, FeatureKind, FeatureMap};
use crate::linalg;
use crate::seeding;
use crate::svgp::{InducingSet, SvgpModel};

/// Prepared state for drawing many samples from one model.
#[derive(Debug, Clone)]
pub struct DecoupledSampler<'a> {
    model: &'a SvgpModel,
    features: &'a FeatureMap,
    sqrt_weights: Vec<f64>,
    /// `S_w^{1/2}`.
    s_root: DMatrix<f64>,
    /// `L^{-1} P`.
    projection: DMatrix<f64>,
}

impl<'a> DecoupledSampler<'a> {
    pub fn new(model: &'a SvgpModel, features: &'a FeatureMap) -> Result<Self> {
        check_dim(model.kernel().dim(), features.kernel().dim())?;
        let m = model.num_inducing();
        let big_m = features.len();
        let sqrt_weights: Vec<f64> = features.weights().iter().map(|l| l.sqrt()).collect();
        let projection = match model.inducing() {
            InducingSet::Points(z) => {
                let mut p = DMatrix::zeros(m, big_m);
                let mut buf = Vec::with_capacity(big_m);
                for (i, zi) in z.iter().enumerate() {
                    features.features_into(zi, &mut buf);
                    for j in 0..big_m {
                        p[(i, j)] = sqrt_weights[j] * buf[j];
                    }
                }
                p
            }
            InducingSet::Features { map, count } => {
                if features.kind() != FeatureKind::MercerTruncated
                    || *count > big_m
                    || features.weights()[..*count] != map.weights()[..*count]
                {
                    return Err(Error::InvalidInput(
                        "inducing features must be the leading eigenpairs of the prior feature map".into(),
                    ));
                }
                let mut p = DMatrix::zeros(m, big_m);
                for i in 0..m {
                    p[(i, i)] = sqrt_weights[i];
                }
                p
            }
        };
        let projection = model
            .kuu_factor()
            .solve_lower_triangular(&projection)
            .expect("cholesky factor has a positive diagonal");
        Ok(Self { model, features, sqrt_weights, s_root: linalg::psd_sqrt(model.white_cov()), projection })
    }

    pub fn model(&self) -> &SvgpModel {
        self.model
    }

    pub fn features(&self) -> &FeatureMap {
        self.features
    }

    /// Whitened update coefficients `v_w` for given draws `u` and `w`.
    pub fn update_coefficients(&self, u: &DVector<f64>, w: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
        check_dim(self.model.num_inducing(), u.len())?;
        check_dim(self.features.len(), w.len())?;
        let u_w = linalg::solve_lower_vec(self.model.kuu_chol(), u);
        let m_w = self.model.white_mean();
        Ok((u_w - m_w) * alpha + m_w - &self.projection * w * alpha)
    }

    pub fn draw_with(&self, alpha: f64, rng: &mut ChaCha8Rng) -> Result<SampleFunction<'a>> {
        check_alpha(alpha)?;
        let big_m = self.features.len();
        let m = self.model.num_inducing();
        let w = DVector::from_iterator(big_m, (0..big_m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let xi = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let update = (&self.s_root * xi - &self.projection * &w) * alpha + self.model.white_mean();
        Ok(SampleFunction {
            model: self.model,
            features: self.features,
            prior_weights: w.iter().copied().collect(),
            update,
            alpha,
            scaled: self.sqrt_weights.iter().zip(w.iter()).map(|(s, w)| alpha * s * w).collect(),
        })
    }

    pub fn draw(&self, alpha: f64, seed: u64) -> Result<SampleFunction<'a>> {
        self.draw_with(alpha, &mut seeding::rng(seed))
    }

    /// `Lambda^{1/2} phi(x) - P^T K_uu^{-1} k_u(x)`: the prior-feature part left
    /// after the update cancels the prior's inducing values. Also returns `a(x)`.
    fn residual_features(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let phi = self.features.features(x).expect("dimension checked by caller");
        let a = self.model.whiten(x);
        let g = DVector::from_iterator(phi.len(), phi.iter().zip(&self.sqrt_weights).map(|(p, s)| s * p))
            - self.projection.transpose() * &a;
        (g, a)
    }

    /// Analytic covariance of the sample between `x` and `y`.
    pub fn covariance(&self, alpha: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.model.kernel().dim(), x.len())?;
        check_dim(self.model.kernel().dim(), y.len())?;
        let (gx, px) = self.residual_features(x);
        let (gy, py) = self.residual_features(y);
        Ok(alpha * alpha * (gx.dot(&gy) + px.dot(&(self.model.white_cov() * py))))
    }

    /// Analytic mean of the sample: `E[u] = m`, `E[w] = 0`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.model.kernel().dim(), x.len())?;
        Ok(self.model.whiten(x).dot(self.model.white_mean()))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::InvalidConfig(format!("exploration scale alpha must be >= 1, got {alpha}")));
    }
    Ok(())
}

/// One approximate posterior sample. Evaluation is a pure function of `x`.
#[derive(Debug, Clone)]
pub struct SampleFunction<'a> {
    model: &'a SvgpModel,
    features: &'a FeatureMap,
    prior_weights: Vec<f64>,
    update: DVector<f64>,
    alpha: f64,
    /// `alpha sqrt(lambda_j) w_j`.
    scaled: Vec<f64>,
}

impl<'a> SampleFunction<'a> {
    /// A sample with explicit weights, bypassing the random draw.
    pub fn from_parts(
        model: &'a SvgpModel,
        features: &'a FeatureMap,
        prior_weights: Vec<f64>,
        update: Vec<f64>,
        alpha: f64,
    ) -> Result<Self> {
        check_dim(features.len(), prior_weights.len())?;
        check_dim(model.num_inducing(), update.len())?;
        let scaled = features
            .weights()
            .iter()
            .zip(&prior_weights)
            .map(|(l, w)| alpha * l.sqrt() * w)
            .collect();
        Ok(Self { model, features, prior_weights, update: DVector::from_vec(update), alpha, scaled })
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.prior_weights
    }

    pub fn update_coeffs(&self) -> &DVector<f64> {
        &self.update
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.model.kernel().dim(), x.len())?;
        let phi = self.features.features(x)?;
        let prior: f64 = phi.iter().zip(&self.scaled).map(|(p, s)| p * s).sum();
        let update = self.model.whiten(x).dot(&self.update);
        Ok(prior + update)
    }

    /// Values on a precomputed grid.
    pub fn eval_grid(&self, cache: &GridCache) -> Vec<f64> {
        let scaled = DVector::from_column_slice(&self.scaled);
        let vals = &cache.features * scaled + &cache.cross * &self.update;
        vals.iter().copied().collect()
    }
}

pub fn draw_sample<'a>(model: &'a SvgpModel, features: &'a FeatureMap, alpha: f64, seed: u64) -> Result<SampleFunction<'a>> {
    check_alpha(alpha)?;
    DecoupledSampler::new(model, features)?.draw(alpha, seed)
}

pub fn eval_sample(sample: &SampleFunction<'_>, x: &[f64]) -> Result<f64> {
    sample.eval(x)
}

/// A finite set of candidate points for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub points: Vec<Vec<f64>>,
    pub t: usize,
    /// `false` when the uniform grid exceeded the cap and a Halton window was used.
    pub uniform: bool,
}

impl Discretization {
    pub fn from_points(points: Vec<Vec<f64>>, t: usize) -> Self {
        Self { points, t, uniform: false }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().all(|p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points with indices `start .. start + count`.
pub fn halton(dim: usize, start: u64, count: usize) -> Vec<Vec<f64>> {
    let primes = first_primes(dim);
    (0..count as u64)
        .map(|k| primes.iter().map(|&p| radical_inverse(start + k, p)).collect())
        .collect()
}

/// Per-axis point counts of the uniform grid at step `t`, `None` on overflow.
pub fn uniform_grid_counts(domain: &BoxDomain, t: usize, lipschitz: f64) -> Vec<usize> {
    let d = domain.dim() as f64;
    let spacing = 2.0 / (lipschitz * (t * t) as f64 * d.sqrt());
    domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(l, u)| {
            let n = ((u - l) / spacing - 1e-12).ceil().max(1.0);
            if n > 1e15 { usize::MAX } else { n as usize + 1 }
        })
        .collect()
}

/// Uniform grid with per-axis spacing at most `2 / (L t^2 sqrt(d))`; past
/// `cap` points a Halton window of `cap` points is used instead, advancing
/// by `cap` indices each step.
pub fn build_grid(domain: &BoxDomain, t: usize, lipschitz: f64, cap: Option<usize>) -> Result<Discretization> {
    if t == 0 {
        return Err(Error::InvalidInput("step index starts at 1".into()));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidInput("Lipschitz estimate must be positive".into()));
    }
    if cap == Some(0) {
        return Err(Error::EmptyGrid);
    }
    let counts = uniform_grid_counts(domain, t, lipschitz);
    let total = counts.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
    let fits = match (total, cap) {
        (None, _) => false,
        (Some(n), Some(c)) => n <= c,
        (Some(_), None) => true,
    };
    if !fits {
        let cap = cap.ok_or_else(|| Error::InvalidInput("uniform grid overflows; set a cap".into()))?;
        let start = 1 + (t as u64 - 1) * cap as u64;
        let points = halton(domain.dim(), start, cap)
            .into_iter()
            .map(|u| domain.from_unit(&u))
            .collect();
        return Ok(Discretization { points, t, uniform: false });
    }
    let total = total.expect("checked above");
    let d = domain.dim();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        points.push(
            (0..d)
                .map(|i| {
                    let (l, u) = (domain.lower[i], domain.upper[i]);
                    if counts[i] == 1 { 0.5 * (l + u) } else { l + (u - l) * idx[i] as f64 / (counts[i] - 1) as f64 }
                })
                .collect(),
        );
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < counts[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    Ok(Discretization { points, t, uniform: true })
}

/// Feature matrix and whitened inducing-cross matrix `(L^{-1} K_uN)^T` of a
/// grid, shared by all draws of a step.
#[derive(Debug, Clone)]
pub struct GridCache {
    pub features: DMatrix<f64>,
    pub cross: DMatrix<f64>,
}

impl GridCache {
    pub fn new(model: &SvgpModel, features: &FeatureMap, grid: &Discretization) -> Result<Self> {
        let n = grid.len();
        let big_m = features.len();
        for p in &grid.points {
            check_dim(model.kernel().dim(), p.len())?;
        }
        let rows: Vec<Vec<f64>> = grid
            .points
            .par_iter()
            .map(|p| {
                let mut buf = Vec::with_capacity(big_m);
                features.features_into(p, &mut buf);
                buf
            })
            .collect();
        let phi = DMatrix::from_fn(n, big_m, |i, j| rows[i][j]);
        let cross = model.whiten_all(&grid.points).transpose();
        Ok(Self { features: phi, cross })
    }
}

/// One selected point of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub grid_index: usize,
    pub point: Vec<f64>,
    pub sample_value: f64,
}

/// `B` independent samples, each maximised over the grid (lowest index on ties).
/// Draw `b` uses seed `draw_seed(step_seed, b)`.
pub fn select_batch(
    model: &SvgpModel,
    features: &FeatureMap,
    grid: &Discretization,
    batch: usize,
    alpha: f64,
    step_seed: u64,
) -> Result<Vec<Selection>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if batch == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    check_alpha(alpha)?;
    let sampler = DecoupledSampler::new(model, features)?;
    let cache = GridCache::new(model, features, grid)?;
    select_batch_cached(&sampler, &cache, grid, batch, alpha, step_seed)
}

pub fn select_batch_cached(
    sampler: &DecoupledSampler<'_>,
    cache: &GridCache,
    grid: &Discretization,
    batch: usize,
    alpha: f64,
    step_seed: u64,
) -> Result<Vec<Selection>> {
    (0..batch)
        .into_par_iter()
        .map(|b| {
            let sample = sampler.draw(alpha, seeding::draw_seed(step_seed, b))?;
            let values = sample.eval_grid(cache);
            let i = linalg::argmax(&values).ok_or(Error::EmptyGrid)?;
            Ok(Selection { grid_index: i, point: grid.points[i].clone(), sample_value: values[i] })
        })
        .collect()
}
