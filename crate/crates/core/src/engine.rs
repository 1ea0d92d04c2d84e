//! The batch Thompson-sampling loop and its theory-side calculators.

use std::io::{BufRead, Write};

use num_rational::Ratio;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::benchmarks::{Benchmark, NoiseModel};
use crate::config::{AlphaMode, GammaSource, InducingRule, MSchedule, RunConfig};
use crate::error::{check_dim, Error, Result};
use crate::exact_gp::{self, Dataset};
use crate::kernels::{self, FeatureKind, FeatureMap, KernelFamily, KernelSpec};
use crate::linalg;
use crate::sampler::{self, DecoupledSampler, GridCache};
use crate::seeding;
use crate::svgp::{self, ApproxQuality, InducingSet, PropositionInputs, SvgpModel, VariantKind};

const FEATURE_TAG: u64 = 0x6665_6174_7572_6573;

/// One evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub t: usize,
    pub b: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub f_true: f64,
    /// Exact posterior standard deviation at `x` given all earlier steps.
    pub sigma_prev: f64,
}

/// Per-step schedule and diagnostics. Fields that do not apply are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub alpha: f64,
    pub b_t: f64,
    pub beta: f64,
    pub n_grid: usize,
    pub m: usize,
    pub big_m: usize,
    pub gamma: f64,
    pub kappa: f64,
    pub a_under: f64,
    pub a_over: f64,
    pub c: f64,
    pub eps: f64,
    pub c1: f64,
    pub simple_regret: f64,
}

impl StepRecord {
    /// A step of a baseline with no model.
    pub fn baseline(t: usize, simple_regret: f64) -> Self {
        Self {
            t,
            alpha: f64::NAN,
            b_t: f64::NAN,
            beta: f64::NAN,
            n_grid: 0,
            m: 0,
            big_m: 0,
            gamma: f64::NAN,
            kappa: f64::NAN,
            a_under: f64::NAN,
            a_over: f64::NAN,
            c: f64::NAN,
            eps: f64::NAN,
            c1: f64::NAN,
            simple_regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_seed: u64,
    pub dim: usize,
    pub batch: usize,
    pub f_star: f64,
    pub records: Vec<RunRecord>,
    pub steps: Vec<StepRecord>,
}

const STEP_HEADER: &str =
    "t,alpha_t,b_t,beta_t,N_t,m_t,M,gamma_t,kappa_t,a_under,a_over,c_t,eps_t,C1,simple_regret";

impl RunLog {
    pub fn new(run_seed: u64, dim: usize, batch: usize, f_star: f64) -> Self {
        Self { run_seed, dim, batch, f_star, records: Vec::new(), steps: Vec::new() }
    }

    pub fn push_record(&mut self, r: RunRecord) {
        self.records.push(r);
    }

    pub fn steps_completed(&self) -> usize {
        self.steps.len()
    }

    /// Running strict regret after each record.
    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.records
            .iter()
            .map(|r| {
                acc += self.f_star - r.f_true;
                acc
            })
            .collect()
    }

    /// Cumulative regret at the end of each step.
    pub fn cumulative_by_step(&self) -> Vec<f64> {
        let cum = self.cumulative_regret();
        self.steps
            .iter()
            .map(|s| {
                let last = self.records.iter().rposition(|r| r.t == s.t);
                last.map_or(0.0, |i| cum[i])
            })
            .collect()
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let mut data = Dataset::new(self.dim, self.batch)?;
        for chunk in self.records.chunks(self.batch) {
            data.push_batch(chunk.iter().map(|r| r.x.clone()).collect(), chunk.iter().map(|r| r.y).collect())?;
        }
        Ok(data)
    }

    /// `run_seed,t,b,x_1..x_d,y,f_true,alpha_t,beta_t,N_t,m_t,cum_regret,simple_regret`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let xs: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        writeln!(w, "run_seed,t,b,{},y,f_true,alpha_t,beta_t,N_t,m_t,cum_regret,simple_regret", xs.join(","))?;
        let cum = self.cumulative_regret();
        for (r, c) in self.records.iter().zip(cum) {
            let s = self
                .steps
                .iter()
                .find(|s| s.t == r.t)
                .ok_or_else(|| Error::InvalidInput(format!("no step record for t = {}", r.t)))?;
            let xs: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.run_seed,
                r.t,
                r.b,
                xs.join(","),
                r.y,
                r.f_true,
                s.alpha,
                s.beta,
                s.n_grid,
                s.m,
                c,
                s.simple_regret
            )?;
        }
        Ok(())
    }

    pub fn write_steps_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{STEP_HEADER}")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.t, s.alpha, s.b_t, s.beta, s.n_grid, s.m, s.big_m, s.gamma, s.kappa, s.a_under, s.a_over, s.c,
                s.eps, s.c1, s.simple_regret
            )?;
        }
        Ok(())
    }

    /// Per-step records back from [`RunLog::write_steps_csv`].
    pub fn read_steps_csv<R: BufRead>(r: R) -> Result<Vec<StepRecord>> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty step CSV".into()))??;
        if header.trim() != STEP_HEADER {
            return Err(Error::InvalidInput(format!("unexpected step CSV header `{header}`")));
        }
        let mut out = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::InvalidInput(format!("step CSV line {}: malformed", i + 2));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 15 {
                return Err(bad());
            }
            let fl = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let us = |k: usize| f[k].parse::<usize>().map_err(|_| bad());
            out.push(StepRecord {
                t: us(0)?,
                alpha: fl(1)?,
                b_t: fl(2)?,
                beta: fl(3)?,
                n_grid: us(4)?,
                m: us(5)?,
                big_m: us(6)?,
                gamma: fl(7)?,
                kappa: fl(8)?,
                a_under: fl(9)?,
                a_over: fl(10)?,
                c: fl(11)?,
                eps: fl(12)?,
                c1: fl(13)?,
                simple_regret: fl(14)?,
            });
        }
        Ok(out)
    }

    /// Rebuild a log from its two CSV files. Posterior standard deviations are
    /// not stored and come back as NaN.
    pub fn read_csv<R1: BufRead, R2: BufRead>(run: R1, steps: R2) -> Result<Self> {
        let mut lines = run.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidInput("empty run CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let dim = cols.iter().filter(|c| c.starts_with("x_")).count();
        let expected = 11 + dim;
        if cols.len() != expected || cols[0] != "run_seed" || cols[expected - 2] != "cum_regret" {
            return Err(Error::InvalidInput(format!("unexpected run CSV header `{header}`")));
        }
        let mut run_seed = 0;
        let mut f_star = f64::NAN;
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::InvalidInput(format!("run CSV line {}: malformed", i + 2));
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != expected {
                return Err(bad());
            }
            let fl = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            run_seed = f[0].parse().map_err(|_| bad())?;
            let x = (0..dim).map(|k| fl(3 + k)).collect::<Result<Vec<_>>>()?;
            let f_true = fl(4 + dim)?;
            if records.is_empty() {
                f_star = fl(expected - 2)? + f_true;
            }
            records.push(RunRecord {
                t: f[1].parse().map_err(|_| bad())?,
                b: f[2].parse().map_err(|_| bad())?,
                x,
                y: fl(3 + dim)?,
                f_true,
                sigma_prev: f64::NAN,
            });
        }
        let batch = records.iter().map(|r| r.b).max().unwrap_or(1);
        let steps = Self::read_steps_csv(steps)?;
        Ok(Self { run_seed, dim, batch, f_star, records, steps })
    }
}

/// `sum (f_star - f(x_{t,b}))` over all logged evaluations.
pub fn strict_regret(log: &RunLog, f_star: f64) -> f64 {
    log.records.iter().map(|r| f_star - r.f_true).sum()
}

/// Theory inputs of the exploration schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub rkhs_norm: f64,
    pub noise_r: f64,
}

/// `(alpha_t, b_t, beta_t)` with `alpha_t = 2 a_under (B + R sqrt(2 (gamma + 1 + log t^2)) + c)`,
/// `b_t = sqrt(2 log(N_t t^2))` and `beta_t = alpha_t (b_t + 1/2)`.
///
/// `t` and `n_grid` are real so that the formulas can be probed off the integers.
pub fn schedule_alpha(t: f64, n_grid: f64, gamma: f64, quality: &ApproxQuality, theory: &TheoryInputs) -> Result<(f64, f64, f64)> {
    if !(t >= 1.0) || !(n_grid >= 1.0) {
        return Err(Error::InvalidInput("need t >= 1 and N_t >= 1".into()));
    }
    if gamma < 0.0 || quality.c < 0.0 || quality.a_under < 1.0 || theory.rkhs_norm < 0.0 || theory.noise_r < 0.0 {
        return Err(Error::InvalidInput("schedule inputs out of range".into()));
    }
    let log_t2 = 2.0 * t.ln();
    let radius = quality.a_under
        * (theory.rkhs_norm + theory.noise_r * (2.0 * (gamma + 1.0 + log_t2)).sqrt() + quality.c);
    let alpha = 2.0 * radius;
    let b_t = (2.0 * (n_grid.ln() + log_t2)).max(0.0).sqrt();
    Ok((alpha, b_t, alpha * (b_t + 0.5)))
}

/// Inputs of the cumulative-regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub horizon: f64,
    pub batch: f64,
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub a_over: f64,
    pub eps: f64,
    pub rkhs_norm: f64,
}

/// `30 a_over beta B sqrt(2 T gamma / log(1 + 1/tau)) + (31 beta + alpha) eps T B + 15 B norm + 2 B`.
pub fn theorem1_bound(p: &BoundInputs) -> Result<f64> {
    let fields = [p.horizon, p.batch, p.gamma, p.beta, p.alpha, p.a_over, p.eps, p.rkhs_norm];
    if !(p.tau > 0.0) || fields.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("bound inputs must be finite and non-negative with tau > 0".into()));
    }
    let (t, b) = (p.horizon, p.batch);
    let lead = 30.0 * p.a_over * p.beta * b * (2.0 * t * p.gamma / (1.0 + 1.0 / p.tau).ln()).sqrt();
    Ok(lead + (31.0 * p.beta + p.alpha) * p.eps * t * b + 15.0 * b * p.rkhs_norm + 2.0 * b)
}

/// Growth exponents of `(m_T, M)`. SE schedules are polylogarithmic and have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Table1Exponents {
    pub m: Ratio<u64>,
    pub big_m: Ratio<u64>,
}

/// Exponents for a Matérn kernel given `2 nu` as an integer.
pub fn table1_exponents(twice_nu: u64, d: u64, variant: VariantKind) -> Result<Table1Exponents> {
    if d == 0 || twice_nu == 0 {
        return Err(Error::InvalidInput("need d >= 1 and nu > 0".into()));
    }
    match variant {
        VariantKind::Points => {
            if twice_nu <= d {
                return Err(Error::ScheduleUndefined(format!(
                    "inducing points need nu > d/2, got nu = {}/2 with d = {d}",
                    twice_nu
                )));
            }
            Ok(Table1Exponents {
                m: Ratio::new(2 * d, twice_nu - d),
                big_m: Ratio::new((twice_nu + d) * d, (twice_nu - d) * twice_nu),
            })
        }
        VariantKind::Features => Ok(Table1Exponents {
            m: Ratio::new(d, twice_nu),
            big_m: Ratio::new((twice_nu + d) * d, twice_nu * twice_nu),
        }),
    }
}

/// Ceiling tolerant of round-off just above an integer.
fn ceil_tol(v: f64) -> usize {
    let r = v.round();
    let c = if (v - r).abs() < 1e-9 { r } else { v.ceil() };
    c.max(1.0) as usize
}

/// `(m_T, M)` with unit constants: `T^e` for Matérn, `(log T)^d` for SE.
pub fn table1_schedule(family: KernelFamily, d: usize, horizon: f64, variant: VariantKind) -> Result<(usize, usize)> {
    if !(horizon >= 1.0) {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    match family {
        KernelFamily::SquaredExponential => {
            let v = ceil_tol(horizon.ln().powi(d as i32));
            Ok((v, v))
        }
        KernelFamily::Matern(nu) => {
            let twice = (2.0 * nu.value()).round() as u64;
            let e = table1_exponents(twice, d as u64, variant)?;
            let pow = |r: Ratio<u64>| ceil_tol(horizon.powf(*r.numer() as f64 / *r.denom() as f64));
            Ok((pow(e.m), pow(e.big_m)))
        }
    }
}

/// Index of the largest model mean over `points`, lowest index on ties.
pub fn believed_best(model: &SvgpModel, points: &[Vec<f64>]) -> Result<usize> {
    let means = points.iter().map(|p| model.predict_mean(p)).collect::<Result<Vec<_>>>()?;
    linalg::argmax(&means).ok_or(Error::EmptyGrid)
}

/// `1 - Phi(c)`.
pub fn normal_tail(c: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").sf(c)
}

/// Lower and upper Gaussian tail bounds used in the anti-concentration step:
/// `exp(-c^2) / (4 c sqrt(pi)) <= 1 - Phi(c) <= exp(-c^2 / 2) / 2`.
pub fn anti_concentration_bounds(c: f64) -> (f64, f64) {
    ((-c * c).exp() / (4.0 * c * std::f64::consts::PI.sqrt()), 0.5 * (-c * c / 2.0).exp())
}

/// Summary of the batch standard-deviation inequality on one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSigmaCheck {
    pub sigma_sum: f64,
    pub gamma: f64,
    pub bound: f64,
}

impl BatchSigmaCheck {
    pub fn holds(&self) -> bool {
        self.sigma_sum <= self.bound * (1.0 + 1e-9)
    }
}

/// `sum_{t,b} sigma_{t-1}(x_{t,b}) <= B sqrt(2 T gamma / log(1 + 1/tau))`, with
/// `gamma` the information gain of the per-batch largest-sigma subsequence.
pub fn batch_sigma_check(log: &RunLog, kernel: &KernelSpec, tau: f64) -> Result<BatchSigmaCheck> {
    let mut sigma_sum = 0.0;
    let mut leaders = Vec::new();
    for chunk in log.records.chunks(log.batch) {
        if chunk.iter().any(|r| !r.sigma_prev.is_finite()) {
            return Err(Error::InvalidInput("run log lacks posterior standard deviations".into()));
        }
        sigma_sum += chunk.iter().map(|r| r.sigma_prev).sum::<f64>();
        let sig: Vec<f64> = chunk.iter().map(|r| r.sigma_prev).collect();
        let i = linalg::argmax(&sig).ok_or(Error::EmptyGrid)?;
        leaders.push(chunk[i].x.clone());
    }
    let gamma = exact_gp::information_gain_of(&leaders, kernel, tau)?;
    let t = leaders.len() as f64;
    let bound = log.batch as f64 * (2.0 * t * gamma / (1.0 + 1.0 / tau).ln()).sqrt();
    Ok(BatchSigmaCheck { sigma_sum, gamma, bound })
}

/// Everything a run needs besides the seed.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub config: RunConfig,
    pub objective: Benchmark,
    pub kernel: KernelSpec,
    pub noise: NoiseModel,
    pub tau: f64,
}

impl RunSetup {
    pub fn new(config: RunConfig, objective: Benchmark) -> Result<Self> {
        config.validate()?;
        let d = objective.dim();
        let ls = match &config.lengthscale {
            None => objective.lengthscale.clone(),
            Some(l) if l.len() == 1 => vec![l[0]; d],
            Some(l) => {
                check_dim(d, l.len())?;
                l.clone()
            }
        };
        let kernel = KernelSpec::new(config.kernel, ls, config.kernel_variance)?;
        let noise = NoiseModel::new(config.noise_variance.unwrap_or(objective.noise_variance))?;
        let tau = config.tau.unwrap_or(if noise.variance > 0.0 { noise.variance } else { 0.01 });
        Ok(Self { config, objective, kernel, noise, tau })
    }

    pub fn from_config(config: RunConfig) -> Result<Self> {
        let objective = crate::benchmarks::by_name(&config.objective)?;
        Self::new(config, objective)
    }

    fn m_at(&self, t: usize) -> Result<usize> {
        let c = &self.config;
        match c.m {
            MSchedule::Fixed(m) => Ok(m),
            MSchedule::Table1 => Ok(table1_schedule(c.kernel, self.kernel.dim(), t as f64, c.variant)?.0),
        }
    }

    fn feature_kind(&self) -> FeatureKind {
        self.config.features.unwrap_or(
            if self.config.kernel == KernelFamily::SquaredExponential && self.kernel.dim() <= 2 {
                FeatureKind::MercerTruncated
            } else {
                FeatureKind::RandomFourier
            },
        )
    }

    /// Number of prior features.
    pub fn big_m(&self) -> Result<usize> {
        let c = &self.config;
        let horizon = c.horizon;
        let m_max = (1..=horizon).map(|t| self.m_at(t)).collect::<Result<Vec<_>>>()?.into_iter().max().unwrap_or(1);
        let kind = self.feature_kind();
        let mut big_m = match (c.big_m, c.m) {
            (Some(v), _) => v,
            (None, MSchedule::Table1) => table1_schedule(c.kernel, self.kernel.dim(), horizon as f64, c.variant)?.1,
            (None, MSchedule::Fixed(_)) => match kind {
                FeatureKind::MercerTruncated => (2 * m_max).max(64),
                FeatureKind::RandomFourier => 1000,
            },
        };
        if c.variant == VariantKind::Features {
            if c.big_m.is_some_and(|v| v < m_max) {
                return Err(Error::InvalidConfig(format!("M = {big_m} is below the largest m = {m_max}")));
            }
            big_m = big_m.max(m_max);
        }
        if kind == FeatureKind::RandomFourier && big_m % 2 == 1 {
            big_m += 1;
        }
        Ok(big_m)
    }

    pub fn prior_features(&self, run_seed: u64) -> Result<FeatureMap> {
        let big_m = self.big_m()?;
        match self.feature_kind() {
            FeatureKind::MercerTruncated => kernels::mercer_truncate(&self.kernel, big_m, &self.objective.domain),
            FeatureKind::RandomFourier => kernels::rff_sample(&self.kernel, big_m, seeding::mix(run_seed, FEATURE_TAG)),
        }
    }

    /// The model used to choose step `t`, fitted on all data so far.
    fn fit_for_step(&self, data: &Dataset, prior: &FeatureMap, t: usize, run_seed: u64) -> Result<SvgpModel> {
        let c = &self.config;
        let m = self.m_at(t.min(c.horizon))?;
        let inducing = match c.variant {
            VariantKind::Features => InducingSet::features(prior.clone(), m)?,
            VariantKind::Points => {
                let n = data.len();
                let z = match c.inducing {
                    InducingRule::Greedy => svgp::select_inducing_greedy(data, &self.kernel, m.min(n))?,
                    InducingRule::KMeans => {
                        let distinct = distinct_count(data.inputs());
                        let seed = seeding::mix(run_seed ^ seeding::INDUCING_TAG, t as u64);
                        if distinct == 0 { Vec::new() } else { svgp::select_inducing_kmeans(data, m.min(distinct), seed)? }
                    }
                };
                InducingSet::Points(z)
            }
        };
        svgp::fit_svgp_closed_form(data, inducing, &self.kernel, self.tau)
    }
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

/// Approximation constants for the model of step `t` (fitted on `t - 1` steps).
fn quality_for(setup: &RunSetup, model: &SvgpModel, prior: &FeatureMap, t: usize, c1: f64) -> Result<ApproxQuality> {
    let c = &setup.config;
    let big_m = prior.len();
    let m = model.num_inducing();
    let spectrum_m = m.min(big_m);
    let tail_inducing = kernels::tail_mass(prior, spectrum_m, big_m)?;
    let tail_features = kernels::tail_mass(prior, big_m, big_m)?;
    let horizon = c.horizon as f64;
    let eps0 = c.eps0.unwrap_or(if horizon > 1.0 { 1.0 / (horizon * horizon * horizon.ln()) } else { 0.0 });
    svgp::proposition_constants(&PropositionInputs {
        t: t - 1,
        batch: c.batch,
        num_inducing: m,
        num_features: big_m,
        noise: setup.tau,
        delta: c.delta,
        eps0,
        tail_inducing,
        tail_features,
        c1,
        variant: model.variant(),
    })
}

/// Run the batch loop for one seed.
pub fn run_sgp_ts(setup: &RunSetup, run_seed: u64) -> Result<RunLog> {
    let c = &setup.config;
    let bench = &setup.objective;
    let d = bench.dim();
    check_dim(setup.kernel.dim(), d)?;
    let prior = setup.prior_features(run_seed)?;
    let theory = TheoryInputs { rkhs_norm: c.rkhs_norm, noise_r: c.noise_r };
    let mut log = RunLog::new(run_seed, d, c.batch, bench.f_star);
    let mut data = Dataset::new(d, c.batch)?;
    let mut model = setup.fit_for_step(&data, &prior, 1, run_seed)?;
    let mut c1_running: f64 = 0.0;

    for t in 1..=c.horizon {
        let abort = |log: &RunLog, e: Error| Error::RunAborted { step: t, source: Box::new(e), partial: Box::new(log.clone()) };
        let grid = sampler::build_grid(&bench.domain, t, c.lipschitz, c.grid_cap).map_err(|e| abort(&log, e))?;
        let n_grid = grid.len();

        let gamma = match c.gamma_source {
            GammaSource::Realized => exact_gp::information_gain(&data, &setup.kernel, setup.tau),
            GammaSource::Envelope => exact_gp::gamma_bound(c.kernel, (data.len() as f64).max(2.0), d),
        }
        .map_err(|e| abort(&log, e))?;
        c1_running = c1_running.max(model.inverse_norm_constant());
        let quality = match c.alpha {
            AlphaMode::Theoretical => Some(quality_for(setup, &model, &prior, t, c1_running).map_err(|e| abort(&log, e))?),
            AlphaMode::Fixed(_) => quality_for(setup, &model, &prior, t, c1_running).ok(),
        };
        let (alpha, b_t, beta) = match c.alpha {
            AlphaMode::Theoretical => {
                let q = quality.expect("computed above");
                schedule_alpha(t as f64, n_grid as f64, gamma, &q, &theory).map_err(|e| abort(&log, e))?
            }
            AlphaMode::Fixed(a) => {
                let b_t = (2.0 * ((n_grid as f64).ln() + 2.0 * (t as f64).ln())).max(0.0).sqrt();
                (a, b_t, a * (b_t + 0.5))
            }
        };

        let ds = DecoupledSampler::new(&model, &prior).map_err(|e| abort(&log, e))?;
        let cache = GridCache::new(&model, &prior, &grid).map_err(|e| abort(&log, e))?;
        let picks = sampler::select_batch_cached(&ds, &cache, &grid, c.batch, alpha, seeding::step_seed(run_seed, t))
            .map_err(|e| abort(&log, e))?;

        let exact = exact_gp::fit_exact(&data, &setup.kernel, setup.tau).map_err(|e| abort(&log, e))?;
        let mut xs = Vec::with_capacity(c.batch);
        let mut ys = Vec::with_capacity(c.batch);
        for (i, pick) in picks.into_iter().enumerate() {
            let b = i + 1;
            let (_, var) = exact.predict(&pick.point).map_err(|e| abort(&log, e))?;
            let f_true = bench.value(&pick.point);
            let y = f_true + setup.noise.draw(run_seed, t, b);
            log.push_record(RunRecord { t, b, x: pick.point.clone(), y, f_true, sigma_prev: var.sqrt() });
            xs.push(pick.point);
            ys.push(y);
        }
        data.push_batch(xs, ys).map_err(|e| abort(&log, e))?;

        let m_t = model.num_inducing();
        model = setup.fit_for_step(&data, &prior, t + 1, run_seed).map_err(|e| abort(&log, e))?;
        let mut candidates = grid.points;
        candidates.extend(data.inputs().iter().cloned());
        let best = believed_best(&model, &candidates).map_err(|e| abort(&log, e))?;
        let simple_regret = bench.f_star - bench.value(&candidates[best]);
        let q = quality.unwrap_or(ApproxQuality { a_under: f64::NAN, a_over: f64::NAN, c: f64::NAN, eps: f64::NAN, kappa: f64::NAN });
        log.steps.push(StepRecord {
            t,
            alpha,
            b_t,
            beta,
            n_grid,
            m: m_t,
            big_m: prior.len(),
            gamma,
            kappa: q.kappa,
            a_under: q.a_under,
            a_over: q.a_over,
            c: q.c,
            eps: q.eps,
            c1: c1_running,
            simple_regret,
        });
        log::debug!("seed {run_seed} step {t}: alpha {alpha:.3} simple regret {simple_regret:.4}");
    }
    Ok(log)
}

/// Bound rows `(t, cumulative regret, bound at horizon t)` from a completed run.
///
/// At each `t` the bound uses `beta_t`, `alpha_t`, the running maxima of
/// `a_over` and `eps`, and the information gain of all data through step `t`.
/// Once a step lacks approximation constants the bound is `+inf` from there on.
pub fn bound_rows(
    steps: &[StepRecord],
    cumulative: &[(usize, f64)],
    data: &Dataset,
    kernel: &KernelSpec,
    tau: f64,
    rkhs_norm: f64,
) -> Result<Vec<(usize, f64, f64)>> {
    check_dim(steps.len(), cumulative.len())?;
    let mut a_over: f64 = 1.0;
    let mut eps: f64 = 0.0;
    let mut rows = Vec::with_capacity(steps.len());
    for (s, (t, cum)) in steps.iter().zip(cumulative) {
        if s.t != *t {
            return Err(Error::InvalidInput("step and run logs disagree".into()));
        }
        if !(s.a_over.is_finite() && s.eps.is_finite() && s.alpha.is_finite()) {
            a_over = f64::INFINITY;
        }
        if a_over.is_infinite() {
            rows.push((*t, *cum, f64::INFINITY));
            continue;
        }
        a_over = a_over.max(s.a_over);
        eps = eps.max(s.eps);
        let gamma = exact_gp::information_gain(&data.prefix(*t), kernel, tau)?;
        let bound = theorem1_bound(&BoundInputs {
            horizon: *t as f64,
            batch: data.batch_size() as f64,
            tau,
            gamma,
            beta: s.beta,
            alpha: s.alpha,
            a_over,
            eps,
            rkhs_norm,
        })?;
        rows.push((*t, *cum, bound));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quality(a: f64, c: f64) -> ApproxQuality {
        ApproxQuality { a_under: a, a_over: 1.0, c, eps: 0.0, kappa: 0.0 }
    }

    #[test]
    fn schedule_examples() {
        let th = TheoryInputs { rkhs_norm: 1.0, noise_r: 1.0 };
        let (alpha, b, beta) = schedule_alpha(1.0, 1.0, 0.0, &quality(1.0, 0.0), &th).unwrap();
        assert_eq!(b, 0.0);
        assert_eq!(beta, alpha / 2.0);
        let (_, b, _) = schedule_alpha(1.0, 2f64.exp(), 0.0, &quality(1.0, 0.0), &th).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
        let (alpha, _, _) = schedule_alpha(0.5f64.exp(), 1.0, 0.0, &quality(1.0, 0.0), &th).unwrap();
        assert!((alpha - 6.0).abs() < 1e-12);
    }

    #[test]
    fn bound_example() {
        let p = BoundInputs {
            horizon: 2.0,
            batch: 1.0,
            tau: 1.0,
            gamma: 1.0,
            beta: 1.0,
            alpha: 123.0,
            a_over: 1.0,
            eps: 0.0,
            rkhs_norm: 1.0,
        };
        let v = theorem1_bound(&p).unwrap();
        assert!((v - (30.0 * (4.0 / 2f64.ln()).sqrt() + 17.0)).abs() < 1e-12);
        assert!((v - 89.07).abs() < 0.01);
    }

    #[test]
    fn table1_examples() {
        assert_eq!(table1_schedule(KernelFamily::SquaredExponential, 1, 3f64.exp(), VariantKind::Points).unwrap(), (3, 3));
        let m52 = KernelFamily::Matern(kernels::MaternNu::FiveHalves);
        assert_eq!(table1_schedule(m52, 1, 1024.0, VariantKind::Features).unwrap(), (4, 6));
        assert!(matches!(table1_exponents(1, 1, VariantKind::Points), Err(Error::ScheduleUndefined(_))));
    }

    #[test]
    fn ceil_tolerance() {
        assert_eq!(ceil_tol(3.0000000000004), 3);
        assert_eq!(ceil_tol(3.01), 4);
        assert_eq!(ceil_tol(0.2), 1);
    }
}
