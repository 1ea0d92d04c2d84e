//! Sparse variational GP posteriors.
//!
//! Both inducing-variable families share one representation. For inducing
//! points `u_i = f(z_i)`, so `K_uu = K_ZZ` and `k_u(x) = [k(z_i, x)]`. For
//! inducing features `u_j = <f, phi_j>` under the base measure, so
//! `K_uu = diag(lambda_1..lambda_m)` and `k_u(x) = [lambda_j phi_j(x)]`.
//! With `q(u) = N(m, S)` the posterior is
//!
//! ```text
//! mu(x)     = k_u(x)^T K_uu^{-1} m
//! k(x, x')  = k(x, x') + k_u(x)^T K_uu^{-1} (S - K_uu) K_uu^{-1} k_u(x')
//! ```
//!
//! For a Gaussian likelihood the ELBO maximiser is available in closed form
//! (`Sigma = K_uu + K_uX K_Xu / tau`, `m = K_uu Sigma^{-1} K_uX y / tau`,
//! `S = K_uu Sigma^{-1} K_uu`); it is computed through `L = chol(K_uu)` and
//! `A = L^{-1} K_uX` so that `m = L B^{-1} A y / tau`, `S = L B^{-1} L^T` with
//! `B = I + A A^T / tau`.
//!
//! Predictions use the whitened parameters `m_w = L^{-1} m` and
//! `S_w = L^{-1} S L^{-T}` with `a(x) = L^{-1} k_u(x)`, so that
//! `mu(x) = a^T m_w` and the correction is `a(x)^T (S_w - I) a(x')`. This
//! never forms `K_uu^{-1}` and stays accurate when `K_uu` is ill-conditioned.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;

use crate::error::{check_dim, Error, Result};
use crate::exact_gp::{self, Dataset};
use crate::kernels::{self, BoxDomain, FeatureKind, FeatureMap, KernelSpec};
use crate::linalg;
use crate::seeding;

/// Greedy selection stops once the largest residual variance drops below this.
pub const GREEDY_RESIDUAL_FLOOR: f64 = 1e-12;

/// Iteration cap for Lloyd's algorithm.
pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Debug, Clone)]
pub enum InducingSet {
    Points(Vec<Vec<f64>>),
    Features { map: FeatureMap, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Points,
    Features,
}

impl InducingSet {
    pub fn features(map: FeatureMap, count: usize) -> Result<Self> {
        if map.kind() != FeatureKind::MercerTruncated {
            return Err(Error::Unsupported(
                "inducing features need a Mercer eigen-expansion".into(),
            ));
        }
        if count > map.len() {
            return Err(Error::InvalidInput(format!(
                "{count} inducing features requested from a map with {} eigenpairs",
                map.len()
            )));
        }
        Ok(InducingSet::Features { map, count })
    }

    pub fn kind(&self) -> VariantKind {
        match self {
            InducingSet::Points(_) => VariantKind::Points,
            InducingSet::Features { .. } => VariantKind::Features,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            InducingSet::Points(z) => z.len(),
            InducingSet::Features { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `K_uu`.
    pub fn kuu(&self, spec: &KernelSpec) -> DMatrix<f64> {
        match self {
            InducingSet::Points(z) => exact_gp::gram(spec, z, z),
            InducingSet::Features { map, count } => {
                DMatrix::from_diagonal(&DVector::from_column_slice(&map.weights()[..*count]))
            }
        }
    }

    /// `k_u(x)`, the covariance between the inducing variables and `f(x)`.
    pub fn cross(&self, spec: &KernelSpec, x: &[f64]) -> DVector<f64> {
        match self {
            InducingSet::Points(z) => {
                DVector::from_iterator(z.len(), z.iter().map(|zi| spec.value(zi, x)))
            }
            InducingSet::Features { map, count } => {
                let mut buf = Vec::with_capacity(map.len());
                map.features_into(x, &mut buf);
                DVector::from_iterator(
                    *count,
                    buf.iter().zip(map.weights()).take(*count).map(|(p, l)| l * p),
                )
            }
        }
    }

    /// `K_uX` with one column per point.
    pub fn cross_matrix(&self, spec: &KernelSpec, points: &[Vec<f64>]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len(), points.len());
        for (j, p) in points.iter().enumerate() {
            out.set_column(j, &self.cross(spec, p));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SvgpModel {
    kernel: KernelSpec,
    noise: f64,
    inducing: InducingSet,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    kuu_chol: Cholesky<f64, Dyn>,
    /// Lower factor `L` of `K_uu`.
    kuu_l: DMatrix<f64>,
    /// `L^{-1} m`.
    white_mean: DVector<f64>,
    /// `L^{-1} S L^{-T}`.
    white_cov: DMatrix<f64>,
}

impl SvgpModel {
    /// A model with explicit variational parameters.
    pub fn new(
        kernel: KernelSpec,
        noise: f64,
        inducing: InducingSet,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    ) -> Result<Self> {
        if !(noise > 0.0) {
            return Err(Error::InvalidInput("noise variance must be positive".into()));
        }
        let m = inducing.len();
        check_dim(m, mean.len())?;
        check_dim(m, cov.nrows())?;
        check_dim(m, cov.ncols())?;
        if let InducingSet::Points(z) = &inducing {
            for zi in z {
                check_dim(kernel.dim(), zi.len())?;
            }
        }
        if (&cov - cov.transpose()).amax() > 1e-10 * (1.0 + cov.amax()) {
            return Err(Error::InvalidInput("variational covariance is not symmetric".into()));
        }
        let kuu_chol = linalg::cholesky(inducing.kuu(&kernel))?;
        let kuu_l = kuu_chol.l();
        let white_mean = linalg::solve_lower_vec(&kuu_chol, &mean);
        let half = linalg::solve_lower(&kuu_chol, &cov);
        let white_cov = linalg::solve_lower(&kuu_chol, &half.transpose());
        let white_cov = (&white_cov + white_cov.transpose()) * 0.5;
        Ok(Self { kernel, noise, inducing, mean, cov, kuu_chol, kuu_l, white_mean, white_cov })
    }

    /// A model from whitened parameters `(L^{-1} m, L^{-1} S L^{-T})`.
    fn from_whitened(
        kernel: KernelSpec,
        noise: f64,
        inducing: InducingSet,
        kuu_chol: Cholesky<f64, Dyn>,
        white_mean: DVector<f64>,
        white_cov: DMatrix<f64>,
    ) -> Self {
        let kuu_l = kuu_chol.l();
        let white_cov = (&white_cov + white_cov.transpose()) * 0.5;
        let mean = &kuu_l * &white_mean;
        let cov = &kuu_l * &white_cov * kuu_l.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Self { kernel, noise, inducing, mean, cov, kuu_chol, kuu_l, white_mean, white_cov }
    }

    /// Both parameterisations given explicitly, as stored in a snapshot.
    fn from_stored(
        kernel: KernelSpec,
        noise: f64,
        inducing: InducingSet,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        white_mean: DVector<f64>,
        white_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let m = inducing.len();
        for (r, c) in [(mean.len(), 1), (cov.nrows(), cov.ncols()), (white_mean.len(), 1), (white_cov.nrows(), white_cov.ncols())] {
            check_dim(m, r)?;
            if c != 1 {
                check_dim(m, c)?;
            }
        }
        let kuu_chol = linalg::cholesky(inducing.kuu(&kernel))?;
        let kuu_l = kuu_chol.l();
        Ok(Self { kernel, noise, inducing, mean, cov, kuu_chol, kuu_l, white_mean, white_cov })
    }

    /// `q(u) = p(u)`: zero mean and `S = K_uu`.
    pub fn prior(kernel: KernelSpec, noise: f64, inducing: InducingSet) -> Result<Self> {
        let m = inducing.len();
        let kuu = inducing.kuu(&kernel);
        Self::new(kernel, noise, inducing, DVector::zeros(m), kuu)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn inducing(&self) -> &InducingSet {
        &self.inducing
    }

    pub fn variant(&self) -> VariantKind {
        self.inducing.kind()
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.len()
    }

    /// Variational mean `m`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Variational covariance `S`.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn kuu_chol(&self) -> &Cholesky<f64, Dyn> {
        &self.kuu_chol
    }

    /// Lower Cholesky factor `L` of `K_uu`.
    pub fn kuu_factor(&self) -> &DMatrix<f64> {
        &self.kuu_l
    }

    /// `L^{-1} m`.
    pub fn white_mean(&self) -> &DVector<f64> {
        &self.white_mean
    }

    /// `L^{-1} S L^{-T}`.
    pub fn white_cov(&self) -> &DMatrix<f64> {
        &self.white_cov
    }

    /// `a(x) = L^{-1} k_u(x)`.
    pub fn whiten(&self, x: &[f64]) -> DVector<f64> {
        self.kuu_l
            .solve_lower_triangular(&self.inducing.cross(&self.kernel, x))
            .expect("cholesky factor has a positive diagonal")
    }

    /// `L^{-1} K_uP` with one column per point.
    pub fn whiten_all(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        self.kuu_l
            .solve_lower_triangular(&self.inducing.cross_matrix(&self.kernel, points))
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn with_variational(&self, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(self.kernel.clone(), self.noise, self.inducing.clone(), mean, cov)
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim(), x.len())?;
        Ok(self.whiten(x).dot(&self.white_mean))
    }

    /// Mean at `x` and covariance between `x` and `y`.
    pub fn predict(&self, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.kernel.dim(), x.len())?;
        check_dim(self.kernel.dim(), y.len())?;
        let ax = self.whiten(x);
        let ay = if x == y { ax.clone() } else { self.whiten(y) };
        let mean = ax.dot(&self.white_mean);
        let cov = self.kernel.value(x, y) - ax.dot(&ay) + ax.dot(&(&self.white_cov * &ay));
        if x == y && cov < 0.0 {
            if cov > -1e-10 {
                return Ok((mean, 0.0));
            }
            return Err(Error::NumericalDegeneracy(format!("SVGP variance {cov:e} is negative")));
        }
        Ok((mean, cov))
    }

    /// Mean and variance at `x`.
    pub fn predict_var(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.predict(x, x)
    }

    /// Joint mean and covariance at `points`.
    pub fn joint(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for p in points {
            check_dim(self.kernel.dim(), p.len())?;
        }
        let a = self.whiten_all(points);
        let mean = a.transpose() * &self.white_mean;
        let cov = exact_gp::gram(&self.kernel, points, points) - a.transpose() * &a
            + a.transpose() * &self.white_cov * &a;
        Ok((mean, cov))
    }

    /// `1 + ||K_uu^{-1}||_inf`, the largest absolute row sum of the inverse.
    pub fn inverse_norm_constant(&self) -> f64 {
        let m = self.num_inducing();
        let inv = self.kuu_chol.solve(&DMatrix::identity(m, m));
        1.0 + linalg::max_abs_row_sum(&inv)
    }

    /// Plain-text snapshot: kernel config, inducing set, `m` and `S`.
    ///
    /// Floats use the shortest round-trip representation, so a snapshot
    /// reloads to a bit-identical model.
    pub fn to_snapshot(&self, domain: Option<&BoxDomain>) -> Result<String> {
        let mut out = String::from("# svgp snapshot v1\n");
        out.push_str(&self.kernel.to_config());
        let _ = writeln!(out, "noise = {}", self.noise);
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.inducing {
            InducingSet::Points(z) => {
                out.push_str("variant = points\n");
                let rows: Vec<String> = z.iter().map(|r| join(r)).collect();
                let _ = writeln!(out, "z = {}", rows.join(";"));
            }
            InducingSet::Features { map, count } => {
                let domain = domain.ok_or_else(|| {
                    Error::InvalidInput("feature snapshots need the expansion domain".into())
                })?;
                out.push_str("variant = features\n");
                let _ = writeln!(out, "feature_count = {}", map.len());
                let _ = writeln!(out, "m = {count}");
                let _ = writeln!(out, "domain_lower = {}", join(&domain.lower));
                let _ = writeln!(out, "domain_upper = {}", join(&domain.upper));
            }
        }
        let _ = writeln!(out, "m_vec = {}", join(self.mean.as_slice()));
        let rows: Vec<String> = self.cov.row_iter().map(|r| join(&r.iter().copied().collect::<Vec<_>>())).collect();
        let _ = writeln!(out, "s_mat = {}", rows.join(";"));
        let _ = writeln!(out, "white_mean = {}", join(self.white_mean.as_slice()));
        let rows: Vec<String> =
            self.white_cov.row_iter().map(|r| join(&r.iter().copied().collect::<Vec<_>>())).collect();
        let _ = writeln!(out, "white_cov = {}", rows.join(";"));
        Ok(out)
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let kv = crate::config::parse_kv(text)?;
        let get = |k: &str| -> Result<&str> {
            kv.get(k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::InvalidInput(format!("snapshot is missing `{k}`")))
        };
        let floats = |s: &str| -> Result<Vec<f64>> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad number `{v}`"))))
                .collect()
        };
        let rows = |s: &str| -> Result<Vec<Vec<f64>>> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(';').map(floats).collect()
        };
        let family = get("kernel")?.parse()?;
        let kernel = KernelSpec::new(family, floats(get("lengthscale")?)?, get("kernel_variance")?.parse().map_err(|_| Error::InvalidInput("bad kernel_variance".into()))?)?;
        let noise: f64 = get("noise")?.parse().map_err(|_| Error::InvalidInput("bad noise".into()))?;
        let inducing = match get("variant")? {
            "points" => InducingSet::Points(rows(get("z")?)?),
            "features" => {
                let domain = BoxDomain::new(floats(get("domain_lower")?)?, floats(get("domain_upper")?)?)?;
                let total: usize = get("feature_count")?.parse().map_err(|_| Error::InvalidInput("bad feature_count".into()))?;
                let count: usize = get("m")?.parse().map_err(|_| Error::InvalidInput("bad m".into()))?;
                InducingSet::features(kernels::mercer_truncate(&kernel, total, &domain)?, count)?
            }
            other => return Err(Error::InvalidInput(format!("unknown variant `{other}`"))),
        };
        let square = |key: &str| -> Result<DMatrix<f64>> {
            let r = rows(get(key)?)?;
            let m = r.len();
            let flat: Vec<f64> = r.into_iter().flatten().collect();
            check_dim(m * m, flat.len())?;
            Ok(DMatrix::from_row_slice(m, m, &flat))
        };
        let mean = DVector::from_vec(floats(get("m_vec")?)?);
        let cov = square("s_mat")?;
        if !kv.contains_key("white_mean") {
            return Self::new(kernel, noise, inducing, mean, cov);
        }
        let white_mean = DVector::from_vec(floats(get("white_mean")?)?);
        let white_cov = square("white_cov")?;
        Self::from_stored(kernel, noise, inducing, mean, cov, white_mean, white_cov)
    }
}

/// Closed-form ELBO maximiser for a Gaussian likelihood.
pub fn fit_svgp_closed_form(
    data: &Dataset,
    inducing: InducingSet,
    spec: &KernelSpec,
    noise: f64,
) -> Result<SvgpModel> {
    if !(noise > 0.0) {
        return Err(Error::InvalidInput("noise variance must be positive".into()));
    }
    if !data.is_empty() {
        check_dim(spec.dim(), data.dim())?;
    }
    let m = inducing.len();
    let kuu = inducing.kuu(spec);
    let chol = linalg::cholesky(kuu)?;
    let kux = inducing.cross_matrix(spec, data.inputs());
    let a = linalg::solve_lower(&chol, &kux);
    let b = DMatrix::identity(m, m) + &a * a.transpose() / noise;
    let b_chol = linalg::cholesky(b)?;
    let y = DVector::from_column_slice(data.outputs());
    let white_mean = b_chol.solve(&(&a * y)) / noise;
    let white_cov = b_chol.solve(&DMatrix::identity(m, m));
    Ok(SvgpModel::from_whitened(spec.clone(), noise, inducing, chol, white_mean, white_cov))
}

/// `A = L^{-1} K_uX` and the diagonal of `K_XX - Q_XX`.
fn nystrom_parts(data: &Dataset, model: &SvgpModel) -> (DMatrix<f64>, Vec<f64>) {
    let kux = model.inducing.cross_matrix(&model.kernel, data.inputs());
    let a = linalg::solve_lower(&model.kuu_chol, &kux);
    let resid = data
        .inputs()
        .iter()
        .enumerate()
        .map(|(i, x)| model.kernel.value(x, x) - a.column(i).norm_squared())
        .collect();
    (a, resid)
}

/// Nyström trace residual `theta = Tr(K_XX - K_Xu K_uu^{-1} K_uX)`.
pub fn trace_residual(data: &Dataset, model: &SvgpModel) -> f64 {
    nystrom_parts(data, model).1.iter().sum()
}

/// Evidence lower bound at the model's `(m, S)`:
/// expected log-likelihood minus `KL(q(u) || p(u))`.
pub fn elbo(data: &Dataset, model: &SvgpModel) -> Result<f64> {
    let n = data.len();
    let mdim = model.num_inducing();
    let tau = model.noise;
    let (a, resid) = nystrom_parts(data, model);
    let means = a.transpose() * &model.white_mean;
    let mut expected = 0.0;
    for i in 0..n {
        let ai = a.column(i);
        let var = resid[i] + ai.dot(&(&model.white_cov * ai));
        let r = data.outputs()[i] - means[i];
        expected += -0.5 * (2.0 * std::f64::consts::PI * tau).ln() - (r * r + var) / (2.0 * tau);
    }
    if mdim == 0 {
        return Ok(expected);
    }
    // KL(N(m, S) || N(0, K_uu)) in whitened coordinates.
    let s_chol = linalg::cholesky(model.white_cov.clone())?;
    let kl = 0.5
        * (model.white_cov.trace() + model.white_mean.norm_squared() - mdim as f64 - linalg::log_det(&s_chol));
    Ok(expected - kl)
}

/// The collapsed bound
/// `log N(y | 0, Q + tau I) - theta / (2 tau)`, computed via Woodbury in `O(n m^2)`.
pub fn collapsed_elbo(data: &Dataset, inducing: &InducingSet, spec: &KernelSpec, noise: f64) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let model = SvgpModel::prior(spec.clone(), noise, inducing.clone())?;
    let (a, resid) = nystrom_parts(data, &model);
    let m = inducing.len();
    let b = DMatrix::identity(m, m) + &a * a.transpose() / noise;
    let b_chol = linalg::cholesky(b)?;
    let y = DVector::from_column_slice(data.outputs());
    let ay = &a * &y;
    let quad = (y.dot(&y) - ay.dot(&b_chol.solve(&ay)) / noise) / noise;
    let log_det = n as f64 * noise.ln() + linalg::log_det(&b_chol);
    let theta: f64 = resid.iter().sum();
    Ok(-0.5 * quad - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln() - theta / (2.0 * noise))
}

/// `KL(q || p)` between the SVGP and exact posteriors of the function values
/// at the training inputs followed by `extra`.
pub fn kl_to_exact(data: &Dataset, model: &SvgpModel, extra: &[Vec<f64>]) -> Result<f64> {
    let mut points = data.inputs().to_vec();
    points.extend(extra.iter().cloned());
    if points.is_empty() {
        return Ok(0.0);
    }
    let exact = exact_gp::fit_exact(data, &model.kernel, model.noise)?;
    let (mu_p, cov_p) = exact.joint(&points)?;
    let (mu_q, cov_q) = model.joint(&points)?;
    gaussian_kl(&mu_q, &cov_q, &mu_p, &cov_p)
}

/// `KL(N(m0, S0) || N(m1, S1))`.
pub fn gaussian_kl(m0: &DVector<f64>, s0: &DMatrix<f64>, m1: &DVector<f64>, s1: &DMatrix<f64>) -> Result<f64> {
    let n = m0.len();
    let c0 = linalg::cholesky((s0 + s0.transpose()) * 0.5)?;
    let c1 = linalg::cholesky((s1 + s1.transpose()) * 0.5)?;
    let diff = m1 - m0;
    let trace = c1.solve(s0).trace();
    let quad = diff.dot(&c1.solve(&diff));
    let kl = 0.5 * (trace + quad - n as f64 + linalg::log_det(&c1) - linalg::log_det(&c0));
    if kl < -1e-8 * (1.0 + n as f64) {
        return Err(Error::NumericalDegeneracy(format!("Gaussian KL came out negative ({kl:e}); covariances too ill-conditioned")));
    }
    Ok(kl.max(0.0))
}

/// Greedy residual-variance (pivoted Cholesky) order over `inputs`.
///
/// Picks `argmax_i` of the Nyström residual, lowest index on ties, and stops
/// early if every remaining residual is below `floor`.
pub fn greedy_order(inputs: &[Vec<f64>], spec: &KernelSpec, m: usize, floor: f64) -> Vec<usize> {
    let n = inputs.len();
    let mut resid: Vec<f64> = inputs.iter().map(|x| spec.value(x, x)).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    // Rows of the partial Cholesky factor, one per chosen pivot.
    let mut factor: Vec<Vec<f64>> = Vec::with_capacity(m);
    while chosen.len() < m {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if !(resid[i] > resid[b]) => {}
                _ => best = Some(i),
            }
        }
        let Some(p) = best else { break };
        if resid[p] < floor {
            break;
        }
        let pivot = resid[p].sqrt();
        let row: Vec<f64> = (0..n)
            .map(|i| {
                let dot: f64 = factor.iter().map(|r| r[i] * r[p]).sum();
                (spec.value(&inputs[i], &inputs[p]) - dot) / pivot
            })
            .collect();
        for i in 0..n {
            resid[i] -= row[i] * row[i];
        }
        taken[p] = true;
        chosen.push(p);
        factor.push(row);
    }
    chosen
}

/// Up to `m` inducing inputs chosen by greedy variance reduction.
pub fn select_inducing_greedy(data: &Dataset, spec: &KernelSpec, m: usize) -> Result<Vec<Vec<f64>>> {
    if m > data.len() {
        return Err(Error::InvalidInput(format!(
            "cannot select {m} inducing points from {} observations",
            data.len()
        )));
    }
    let order = greedy_order(data.inputs(), spec, m, GREEDY_RESIDUAL_FLOOR);
    Ok(order.into_iter().map(|i| data.inputs()[i].clone()).collect())
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after the initial assignment and after each iteration.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, z) in centroids.iter().enumerate() {
        let d = sq_dist(x, z);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn sse(points: &[Vec<f64>], assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assign).map(|(x, &c)| sq_dist(x, &centroids[c])).sum()
}

/// Lloyd's algorithm from `m` distinct observed points chosen by `seed`.
pub fn kmeans(points: &[Vec<f64>], m: usize, seed: u64) -> Result<KMeansFit> {
    let mut seen = HashSet::new();
    let distinct: Vec<usize> = (0..points.len())
        .filter(|&i| seen.insert(points[i].iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        .collect();
    if m == 0 || m > distinct.len() {
        return Err(Error::InvalidInput(format!(
            "k-means needs 1 <= m <= {} distinct points, got m = {m}",
            distinct.len()
        )));
    }
    let mut order = distinct;
    order.shuffle(&mut seeding::rng(seeding::mix(seed, seeding::INDUCING_TAG)));
    let mut centroids: Vec<Vec<f64>> = order[..m].iter().map(|&i| points[i].clone()).collect();
    let dim = points[0].len();

    let mut assign: Vec<usize> = points.iter().map(|x| nearest(x, &centroids)).collect();
    let mut history = vec![sse(points, &assign, &centroids)];
    let mut iterations = 0;
    loop {
        // Re-seed empty clusters with the point farthest from its centroid.
        let mut sizes = vec![0usize; m];
        for &c in &assign {
            sizes[c] += 1;
        }
        for c in 0..m {
            if sizes[c] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for (i, x) in points.iter().enumerate() {
                if sizes[assign[i]] <= 1 {
                    continue;
                }
                let d = sq_dist(x, &centroids[assign[i]]);
                if far.is_none_or(|(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                sizes[assign[i]] -= 1;
                assign[i] = c;
                sizes[c] = 1;
                centroids[c] = points[i].clone();
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> =
                points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(x, _)| x).collect();
            if members.is_empty() {
                continue;
            }
            *centroid = (0..dim)
                .map(|k| members.iter().map(|x| x[k]).sum::<f64>() / members.len() as f64)
                .collect();
        }
        iterations += 1;
        history.push(sse(points, &assign, &centroids));
        let next: Vec<usize> = points.iter().map(|x| nearest(x, &centroids)).collect();
        if next == assign || iterations >= KMEANS_MAX_ITER {
            break;
        }
        assign = next;
    }
    Ok(KMeansFit { centroids, sse_history: history, iterations })
}

pub fn select_inducing_kmeans(data: &Dataset, m: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    Ok(kmeans(data.inputs(), m, seed)?.centroids)
}

/// Approximation-quality parameters of the decoupled sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxQuality {
    pub a_under: f64,
    pub a_over: f64,
    pub c: f64,
    pub eps: f64,
    pub kappa: f64,
}

impl ApproxQuality {
    /// Exact posterior: no slack anywhere.
    pub fn exact() -> Self {
        Self { a_under: 1.0, a_over: 1.0, c: 0.0, eps: 0.0, kappa: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PropositionInputs {
    /// Steps of data the model was fitted on.
    pub t: usize,
    pub batch: usize,
    pub num_inducing: usize,
    pub num_features: usize,
    pub noise: f64,
    pub delta: f64,
    pub eps0: f64,
    /// Tail mass after `num_inducing` eigenpairs.
    pub tail_inducing: f64,
    /// Tail mass after `num_features` eigenpairs.
    pub tail_features: f64,
    pub c1: f64,
    pub variant: VariantKind,
}

/// KL-scale `kappa` and the resulting `(c, a_under, a_over, eps)`.
pub fn proposition_constants(p: &PropositionInputs) -> Result<ApproxQuality> {
    if !(p.noise > 0.0) || !(p.delta > 0.0 && p.delta < 1.0) {
        return Err(Error::InvalidInput("need tau > 0 and delta in (0, 1)".into()));
    }
    if p.tail_inducing < 0.0 || p.tail_features < 0.0 || p.eps0 < 0.0 || p.c1 < 0.0 {
        return Err(Error::InvalidInput("tail masses, eps0 and C1 must be non-negative".into()));
    }
    let tb = (p.t * p.batch) as f64;
    let kappa = match p.variant {
        VariantKind::Features => 2.0 * tb * p.tail_inducing / p.noise,
        VariantKind::Points => {
            2.0 * tb * (p.num_inducing as f64 + 1.0) * p.tail_inducing / (p.noise * p.delta)
                + 4.0 * tb * p.eps0 / (p.noise * p.delta)
        }
    };
    let root = (3.0 * kappa).sqrt();
    if !(root < 1.0) {
        return Err(Error::ExplorationInfeasible { kappa });
    }
    Ok(ApproxQuality {
        a_under: 1.0 / (1.0 - root).sqrt(),
        a_over: (1.0 + root).sqrt(),
        c: kappa.sqrt(),
        eps: (p.c1 * p.num_inducing as f64 * p.tail_features).sqrt(),
        kappa,
    })
}
