//! Self-check suites: each compares a library computation against a
//! brute-force oracle on random instances and reports pass or fail.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{MSchedule, RunConfig};
use crate::engine::{self, RunSetup};
use crate::error::Result;
use crate::exact_gp::{self, Dataset};
use crate::kernels::{self, BoxDomain, KernelSpec};
use crate::sampler::DecoupledSampler;
use crate::seeding;
use crate::svgp::{self, InducingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

impl std::str::FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quick" => Ok(Level::Quick),
            "full" => Ok(Level::Full),
            _ => Err(format!("level must be quick or full, got `{s}`")),
        }
    }
}

/// Deliberate defects for checking that the suites catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Predictive variances floored at 0.05 before use.
    SigmaClamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub level: Level,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn variance_under(fault: Option<Fault>, v: f64) -> f64 {
    match fault {
        Some(Fault::SigmaClamp) => v.max(0.05),
        None => v,
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

fn dense_kernel(spec: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| spec.value(&a[i], &b[j]))
}

/// Dense LU solve of `(K + tau I) x = rhs`.
fn lu_solve(k: &DMatrix<f64>, tau: f64, rhs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    (k + DMatrix::identity(n, n) * tau).lu().solve(rhs).expect("regularised Gram is invertible")
}

fn suite_exact_oracle(opts: &VerifyOptions) -> Result<(bool, String)> {
    let trials = if opts.level == Level::Full { 100 } else { 20 };
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let mut rng = seeding::rng(seeding::mix(0xE0, trial));
        let d = 1 + (trial as usize) % 3;
        let n = 1 + rng.random_range(0..30usize);
        let tau = 10f64.powf(rng.random_range(-3.0..0.0));
        let spec = KernelSpec::se(vec![rng.random_range(0.1..1.0); d], rng.random_range(0.3..1.0))?;
        let x = random_points(&mut rng, n, d);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probes = random_points(&mut rng, 10, d);
        let post = exact_gp::fit_exact(&Dataset::from_rows(x.clone(), y.clone())?, &spec, tau)?;
        let k = dense_kernel(&spec, &x, &x);
        let ks = dense_kernel(&spec, &x, &probes);
        let sol = lu_solve(&k, tau, &ks);
        let yv = DMatrix::from_column_slice(n, 1, &y);
        let weights = lu_solve(&k, tau, &yv);
        for (j, p) in probes.iter().enumerate() {
            let mean = (ks.column(j).transpose() * &weights)[(0, 0)];
            let var = spec.value(p, p) - ks.column(j).dot(&sol.column(j));
            let (m, v) = post.predict(p)?;
            worst = worst.max((m - mean).abs()).max((variance_under(opts.fault, v) - var).abs());
        }
    }
    Ok((worst <= 1e-8, format!("{trials} instances, max abs error {worst:.2e}")))
}

fn suite_svgp_collapse(opts: &VerifyOptions) -> Result<(bool, String)> {
    let trials = if opts.level == Level::Full { 20 } else { 5 };
    let (mut worst, mut worst_elbo, mut worst_theta): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for trial in 0..trials {
        let mut rng = seeding::rng(seeding::mix(0xC0, trial));
        let n = 4 + rng.random_range(0..8usize);
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + rng.random_range(0.2..0.8)) / n as f64]).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let spec = KernelSpec::se(vec![0.3], 1.0)?;
        let tau = 0.1;
        let data = Dataset::from_rows(x.clone(), y)?;
        let exact = exact_gp::fit_exact(&data, &spec, tau)?;
        let model = svgp::fit_svgp_closed_form(&data, InducingSet::Points(x), &spec, tau)?;
        for i in 0..=20 {
            let p = [i as f64 / 20.0];
            let (m0, v0) = exact.predict(&p)?;
            let (m1, v1) = model.predict_var(&p)?;
            worst = worst.max((m0 - m1).abs()).max((v0 - variance_under(opts.fault, v1)).abs());
        }
        let k = dense_kernel(&spec, data.inputs(), data.inputs());
        let yv = DVector::from_column_slice(data.outputs());
        let kt = &k + DMatrix::identity(n, n) * tau;
        let logml = -0.5 * yv.dot(&kt.clone().lu().solve(&yv).expect("invertible"))
            - 0.5 * kt.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        worst_elbo = worst_elbo.max((svgp::elbo(&data, &model)? - logml).abs());
        worst_theta = worst_theta.max(svgp::trace_residual(&data, &model).abs());
    }
    let ok = worst <= 1e-6 && worst_elbo <= 1e-6 && worst_theta <= 1e-8;
    Ok((ok, format!("moments {worst:.1e}, ELBO {worst_elbo:.1e}, theta {worst_theta:.1e}")))
}

fn suite_elbo(opts: &VerifyOptions) -> Result<(bool, String)> {
    let trials = if opts.level == Level::Full { 20 } else { 5 };
    let mut fails = 0;
    for trial in 0..trials {
        let mut rng = seeding::rng(seeding::mix(0xEB, trial));
        let n = 15;
        let x = random_points(&mut rng, n, 1);
        let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let spec = KernelSpec::se(vec![0.2], 1.0)?;
        let tau = 0.05;
        let data = Dataset::from_rows(x, y.clone())?;
        let z = svgp::select_inducing_greedy(&data, &spec, 5)?;
        let model = svgp::fit_svgp_closed_form(&data, InducingSet::Points(z), &spec, tau)?;
        let at_opt = svgp::elbo(&data, &model)?;
        for _ in 0..20 {
            let m = model.mean() + DVector::from_fn(model.num_inducing(), |_, _| 0.05 * rng.random_range(-1.0..1.0));
            if svgp::elbo(&data, &model.with_variational(m, model.cov().clone())?)? > at_opt + 1e-10 {
                fails += 1;
            }
        }
        let k = dense_kernel(&spec, data.inputs(), data.inputs()) + DMatrix::identity(n, n) * tau;
        let yv = DVector::from_vec(y);
        let logml = -0.5 * yv.dot(&k.clone().lu().solve(&yv).expect("invertible"))
            - 0.5 * k.determinant().ln()
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let theta = svgp::trace_residual(&data, &model);
        let gap = logml - at_opt;
        let slack = theta / (2.0 * tau) * (1.0 + yv.norm_squared() / tau);
        if gap < -1e-9 || gap > slack + 1e-9 {
            fails += 1;
        }
    }
    Ok((fails == 0, format!("{trials} instances, {fails} violations")))
}

fn suite_moments(opts: &VerifyOptions) -> Result<(bool, String)> {
    let (draws, big_m) = if opts.level == Level::Full { (20_000, 4000) } else { (2_000, 1000) };
    let n = 8;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let y: Vec<f64> = x.iter().map(|p| (5.0 * p[0]).cos()).collect();
    let spec = KernelSpec::se(vec![0.25], 1.0)?;
    let tau = 0.1;
    let data = Dataset::from_rows(x.clone(), y)?;
    let exact = exact_gp::fit_exact(&data, &spec, tau)?;
    let model = svgp::fit_svgp_closed_form(&data, InducingSet::Points(x), &spec, tau)?;
    let fm = kernels::rff_sample(&spec, big_m, 17)?;
    let sampler = DecoupledSampler::new(&model, &fm)?;
    let probes = [[0.05], [0.3], [0.5], [0.71], [0.97]];
    let mut ok = true;
    let mut worst_z: f64 = 0.0;
    let mut ratios = Vec::new();
    let moments = |alpha: f64, tag: u64| -> Result<Vec<(f64, f64)>> {
        let mut acc = vec![(0.0, 0.0); probes.len()];
        for s in 0..draws {
            let f = sampler.draw(alpha, seeding::mix(tag, s as u64))?;
            for (a, p) in acc.iter_mut().zip(&probes) {
                let v = f.eval(p)?;
                a.0 += v;
                a.1 += v * v;
            }
        }
        let k = draws as f64;
        Ok(acc.into_iter().map(|(s, s2)| (s / k, (s2 - s * s / k) / (k - 1.0))).collect())
    };
    let one = moments(1.0, 0xA1)?;
    let two = moments(2.0, 0xA2)?;
    for (i, p) in probes.iter().enumerate() {
        let (mu, var) = exact.predict(p)?;
        let var = variance_under(opts.fault, var);
        let slack = (sampler.covariance(1.0, p, p)? - var).abs();
        let (em, ev) = one[i];
        let z = (em - mu).abs() / (ev / draws as f64).sqrt();
        worst_z = worst_z.max(z);
        ok &= z <= 4.0 && ev >= 0.9 * var - slack && ev <= 1.1 * var + slack;
        let r = two[i].1 / one[i].1;
        ratios.push(r);
        ok &= (3.6..=4.4).contains(&r);
    }
    Ok((ok, format!("{draws} draws, M = {big_m}, max mean z {worst_z:.2}, alpha=2 ratios {ratios:.2?}")))
}

/// Feature-variant instance with `kappa = 2 n delta_m / tau < 0.1`.
///
/// The short lengthscale keeps both posterior covariances at the inputs well
/// conditioned, so their Gaussian KL can be evaluated directly.
pub struct FeatureInstance {
    pub data: Dataset,
    pub spec: KernelSpec,
    pub tau: f64,
    pub prior: kernels::FeatureMap,
    pub m: usize,
    pub tail: f64,
}

pub fn feature_instance(seed: u64, n: usize) -> Result<FeatureInstance> {
    let mut rng = seeding::rng(seed);
    let spec = KernelSpec::se(vec![0.05], 1.0)?;
    let tau = 0.1;
    let domain = BoxDomain::cube(1, 0.0, 1.0)?;
    let big_m = 200;
    let prior = kernels::mercer_truncate(&spec, big_m, &domain)?;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64 + rng.random_range(0.1..0.9)) / n as f64]).collect();
    let y: Vec<f64> = x.iter().map(|p| (7.0 * p[0]).sin() * 0.8 + 0.3 * rng.random_range(-1.0..1.0)).collect();
    let mut m = 1;
    while 2.0 * n as f64 * kernels::tail_mass(&prior, m, big_m)? / tau >= 0.1 {
        if m == big_m {
            return Err(crate::Error::NumericalDegeneracy("feature budget too small for kappa < 0.1".into()));
        }
        m += 1;
    }
    let tail = kernels::tail_mass(&prior, m, big_m)?;
    Ok(FeatureInstance { data: Dataset::from_rows(x, y)?, spec, tau, prior, m, tail })
}

fn suite_kl(opts: &VerifyOptions) -> Result<(bool, String)> {
    let trials = if opts.level == Level::Full { 10 } else { 3 };
    let mut worst_ratio: f64 = 0.0;
    for trial in 0..trials {
        let inst = feature_instance(seeding::mix(0x4B, trial), 20)?;
        let model = svgp::fit_svgp_closed_form(
            &inst.data,
            InducingSet::features(inst.prior.clone(), inst.m)?,
            &inst.spec,
            inst.tau,
        )?;
        let kl = svgp::kl_to_exact(&inst.data, &model, &[])?;
        let theta = svgp::trace_residual(&inst.data, &model);
        worst_ratio = worst_ratio.max(kl / (theta / inst.tau));
    }
    Ok((worst_ratio < 1.0, format!("{trials} instances, max KL / (theta/tau) = {worst_ratio:.2e}")))
}

fn suite_batch_sigma(opts: &VerifyOptions) -> Result<(bool, String)> {
    let runs = if opts.level == Level::Full { 10 } else { 3 };
    let mut violations = 0;
    for seed in 0..runs {
        let mut cfg = RunConfig::new("bumps1d");
        cfg.horizon = 6;
        cfg.batch = 4;
        cfg.m = MSchedule::Fixed(10);
        let setup = RunSetup::from_config(cfg)?;
        let log = engine::run_sgp_ts(&setup, seed)?;
        if !engine::batch_sigma_check(&log, &setup.kernel, setup.tau)?.holds() {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{runs} runs, {violations} violations")))
}

fn suite_anti_concentration(_: &VerifyOptions) -> Result<(bool, String)> {
    let mut fails = 0;
    for i in 0..100 {
        let c = 0.5 + 4.5 * i as f64 / 99.0;
        let tail = engine::normal_tail(c);
        let (lo, hi) = engine::anti_concentration_bounds(c);
        if !(lo <= tail && tail <= hi) {
            fails += 1;
        }
    }
    Ok((fails == 0, format!("100 points in [0.5, 5], {fails} violations")))
}

type Suite = fn(&VerifyOptions) -> Result<(bool, String)>;

const SUITES: [(&str, Suite); 7] = [
    ("exact-oracle", suite_exact_oracle),
    ("svgp-collapse", suite_svgp_collapse),
    ("elbo", suite_elbo),
    ("sample-moments", suite_moments),
    ("kl-certificate", suite_kl),
    ("batch-sigma", suite_batch_sigma),
    ("anti-concentration", suite_anti_concentration),
];

pub fn run_all(opts: &VerifyOptions) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|(name, suite)| {
            let start = Instant::now();
            let (passed, detail) = match suite(opts) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            SuiteResult { name, passed, detail, elapsed: start.elapsed() }
        })
        .collect()
}

pub fn format_table(results: &[SuiteResult]) -> String {
    let mut s = String::new();
    for r in results {
        let _ = writeln!(
            s,
            "{:<20} {:<4} {:>8.2}s  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.elapsed.as_secs_f64(),
            r.detail
        );
    }
    s
}
