//! Benchmark objectives, observation noise and baseline search.
//!
//! The engine maximises. Classical minimisation benchmarks are negated here,
//! and their optimum values with them.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::engine::{RunLog, RunRecord};
use crate::error::{check_dim, Error, Result};
use crate::kernels::BoxDomain;
use crate::seeding;

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Where a stored optimum value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimumSource {
    Analytic,
    /// Dense random probing followed by multi-start local refinement.
    Oracle,
}

#[derive(Clone)]
pub struct Benchmark {
    pub name: String,
    pub domain: BoxDomain,
    evaluator: Evaluator,
    pub f_star: f64,
    pub f_star_source: OptimumSource,
    pub noise_variance: f64,
    /// Suggested surrogate lengthscale per axis.
    pub lengthscale: Vec<f64>,
    /// RKHS norm under the SE kernel with `lengthscale`, when known.
    pub rkhs_norm: Option<f64>,
}

impl fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("f_star", &self.f_star)
            .field("noise_variance", &self.noise_variance)
            .finish_non_exhaustive()
    }
}

impl Benchmark {
    pub fn new(
        name: &str,
        domain: BoxDomain,
        evaluator: Evaluator,
        f_star: f64,
        f_star_source: OptimumSource,
        noise_variance: f64,
        lengthscale: Vec<f64>,
    ) -> Result<Self> {
        check_dim(domain.dim(), lengthscale.len())?;
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidInput("noise variance must be non-negative".into()));
        }
        Ok(Self {
            name: name.to_string(),
            domain,
            evaluator,
            f_star,
            f_star_source,
            noise_variance,
            lengthscale,
            rkhs_norm: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Unchecked evaluation.
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.evaluator)(x)
    }

    /// Out-of-domain points are clamped with a warning.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if self.domain.contains(x) {
            return Ok(self.value(x));
        }
        log::warn!("{}: clamping out-of-domain point {x:?}", self.name);
        Ok(self.value(&self.domain.clamp(x)))
    }

    pub fn eval_strict(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if !self.domain.contains(x) {
            return Err(Error::InvalidInput(format!("{}: point {x:?} is outside the domain", self.name)));
        }
        Ok(self.value(x))
    }
}

const SHEKEL_BETA: [f64; 10] = [1.0, 2.0, 2.0, 4.0, 4.0, 6.0, 3.0, 7.0, 5.0, 5.0];
/// Rows are coordinates, columns are the ten centres.
const SHEKEL_A: [[f64; 10]; 4] = [
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
    [4.0, 1.0, 8.0, 6.0, 3.0, 2.0, 5.0, 8.0, 6.0, 7.0],
    [4.0, 1.0, 8.0, 6.0, 7.0, 9.0, 3.0, 1.0, 2.0, 3.6],
];

/// Shekel in its classical minimisation form, `beta` exactly as listed.
pub fn shekel4_min(x: &[f64]) -> f64 {
    -(0..10)
        .map(|i| {
            let d2: f64 = (0..4).map(|j| (x[j] - SHEKEL_A[j][i]).powi(2)).sum();
            1.0 / (d2 + SHEKEL_BETA[i])
        })
        .sum::<f64>()
}

pub fn shekel4(x: &[f64]) -> f64 {
    -shekel4_min(x)
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
    [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
    [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
    [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
];

pub fn hartmann6_min(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let e: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - 1e-4 * HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-e).exp()
        })
        .sum::<f64>()
}

pub fn hartmann6(x: &[f64]) -> f64 {
    -hartmann6_min(x)
}

/// Ackley with `1/d` averaging in both terms.
pub fn ackley_min(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / d;
    let cs = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).cos()).sum::<f64>() / d;
    // Grouped so that the origin evaluates to exactly zero.
    (20.0 - 20.0 * (-0.2 * sq.sqrt()).exp()) + (std::f64::consts::E - cs.exp())
}

pub fn ackley(x: &[f64]) -> f64 {
    -ackley_min(x)
}

/// `sum_i a_i exp(-|x - c_i|^2 / (2 l^2))`: an element of the SE RKHS with
/// lengthscale `l`.
#[derive(Debug, Clone)]
pub struct BumpSum {
    pub centres: Vec<Vec<f64>>,
    pub amplitudes: Vec<f64>,
    pub lengthscale: f64,
}

impl BumpSum {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.centres
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let d2: f64 = c.iter().zip(x).map(|(c, x)| (c - x).powi(2)).sum();
                a * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
            })
            .sum()
    }

    /// `sqrt(a^T K a)` with the unit-variance SE kernel.
    pub fn rkhs_norm(&self) -> f64 {
        let mut s = 0.0;
        for (ci, ai) in self.centres.iter().zip(&self.amplitudes) {
            for (cj, aj) in self.centres.iter().zip(&self.amplitudes) {
                let d2: f64 = ci.iter().zip(cj).map(|(a, b)| (a - b).powi(2)).sum();
                s += ai * aj * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp();
            }
        }
        s.sqrt()
    }
}

pub fn bumps1d_def() -> BumpSum {
    BumpSum {
        centres: vec![vec![0.1], vec![0.3], vec![0.5], vec![0.78], vec![0.93]],
        amplitudes: vec![0.6, 0.75, 0.5, 1.0, 0.7],
        lengthscale: 0.05,
    }
}

pub fn bumps2d_def() -> BumpSum {
    BumpSum {
        centres: vec![vec![0.2, 0.2], vec![0.75, 0.3], vec![0.3, 0.8], vec![0.7, 0.75], vec![0.5, 0.5]],
        amplitudes: vec![0.6, 0.8, 0.7, 1.0, 0.5],
        lengthscale: 0.12,
    }
}

/// Stored optima, maximisation convention. Re-derivable with [`certify`].
pub const SHEKEL4_F_STAR: f64 = 1.4025031303086926;
pub const HARTMANN6_F_STAR: f64 = 3.3223680114155147;
pub const BUMPS1D_F_STAR: f64 = 1.0080669473263828;
pub const BUMPS2D_F_STAR: f64 = 1.0184574895776501;

pub const NAMES: [&str; 6] = ["shekel4", "hartmann6", "ackley5", "bumps1d", "bumps2d", "flat"];

fn bump_benchmark(name: &str, def: BumpSum, domain: BoxDomain, f_star: f64, noise: f64) -> Result<Benchmark> {
    let d = domain.dim();
    let norm = def.rkhs_norm();
    let ls = vec![def.lengthscale; d];
    let f: Evaluator = Arc::new(move |x| def.value(x));
    let mut b = Benchmark::new(name, domain, f, f_star, OptimumSource::Oracle, noise, ls)?;
    b.rkhs_norm = Some(norm);
    Ok(b)
}

/// Registry lookup.
pub fn by_name(name: &str) -> Result<Benchmark> {
    match name {
        "shekel4" => Benchmark::new(
            name,
            BoxDomain::cube(4, 0.0, 10.0)?,
            Arc::new(shekel4),
            SHEKEL4_F_STAR,
            OptimumSource::Oracle,
            0.1,
            vec![1.0; 4],
        ),
        "hartmann6" => Benchmark::new(
            name,
            BoxDomain::cube(6, 0.0, 1.0)?,
            Arc::new(hartmann6),
            HARTMANN6_F_STAR,
            OptimumSource::Oracle,
            0.5,
            vec![0.5; 6],
        ),
        "ackley5" => Benchmark::new(
            name,
            BoxDomain::cube(5, -2.0, 1.0)?,
            Arc::new(ackley),
            0.0,
            OptimumSource::Analytic,
            0.5,
            vec![0.5; 5],
        ),
        "bumps1d" => bump_benchmark(name, bumps1d_def(), BoxDomain::cube(1, 0.0, 1.0)?, BUMPS1D_F_STAR, 0.1),
        "bumps2d" => bump_benchmark(name, bumps2d_def(), BoxDomain::cube(2, 0.0, 1.0)?, BUMPS2D_F_STAR, 0.1),
        "flat" => Benchmark::new(
            name,
            BoxDomain::cube(1, 0.0, 1.0)?,
            Arc::new(|_| 0.0),
            0.0,
            OptimumSource::Analytic,
            0.0,
            vec![0.2],
        ),
        _ => Err(Error::InvalidInput(format!("unknown objective `{name}`; known: {}", NAMES.join(", ")))),
    }
}

/// Zero-mean Gaussian observation noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::InvalidInput("noise variance must be non-negative".into()));
        }
        Ok(Self { variance })
    }

    pub fn sample(&self, seed: u64) -> f64 {
        if self.variance == 0.0 {
            return 0.0;
        }
        let z: f64 = seeding::rng(seed).sample(StandardNormal);
        self.variance.sqrt() * z
    }

    /// Noise on observation `(t, b)` of run `run_seed`.
    pub fn draw(&self, run_seed: u64, t: usize, b: usize) -> f64 {
        self.sample(seeding::noise_seed(run_seed, t, b))
    }
}

const RANDOM_SEARCH_TAG: u64 = 0x7261_6E64_6F6D_7372;

/// Uniform i.i.d. evaluations logged one per step. The recommendation after
/// each step is the point with the largest noisy observation so far.
pub fn random_search(bench: &Benchmark, noise: NoiseModel, budget: usize, seed: u64) -> Result<RunLog> {
    if budget == 0 {
        return Err(Error::InvalidInput("budget must be at least 1".into()));
    }
    let mut rng = seeding::rng(seed ^ RANDOM_SEARCH_TAG);
    let mut log = RunLog::new(seed, bench.dim(), 1, bench.f_star);
    let (mut best_y, mut best_f) = (f64::NEG_INFINITY, 0.0);
    for t in 1..=budget {
        let u: Vec<f64> = (0..bench.dim()).map(|_| rng.random::<f64>()).collect();
        let x = bench.domain.from_unit(&u);
        let f = bench.value(&x);
        let y = f + noise.draw(seed, t, 1);
        if y > best_y {
            best_y = y;
            best_f = f;
        }
        log.push_record(RunRecord { t, b: 1, x, y, f_true: f, sigma_prev: f64::NAN });
        log.steps.push(crate::engine::StepRecord::baseline(t, bench.f_star - best_f));
    }
    Ok(log)
}

/// Minimise `f` from `start` by Nelder-Mead inside `domain` (points are clamped).
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], domain: &BoxDomain, step: f64, max_evals: usize) -> (Vec<f64>, f64) {
    let d = start.len();
    let eval = |x: &[f64]| f(&domain.clamp(x));
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let x0 = domain.clamp(start);
    simplex.push((x0.clone(), eval(&x0)));
    for i in 0..d {
        let mut x = x0.clone();
        let width = domain.upper[i] - domain.lower[i];
        x[i] += if x[i] + step * width <= domain.upper[i] { step * width } else { -step * width };
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut evals = d + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[d].1 - simplex[0].1).abs() < 1e-14 {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|p| p.0[j]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let xc = if fr < simplex[d].1 { along(-0.5) } else { along(0.5) };
            let fc = eval(&xc);
            evals += 1;
            if fc < fr.min(simplex[d].1) {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    p.0 = (0..d).map(|j| best[j] + 0.5 * (p.0[j] - best[j])).collect();
                    p.1 = eval(&p.0);
                }
                evals += d;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    (domain.clamp(&x), v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub best_probe: f64,
    pub best_refined: f64,
    pub argmax: Vec<f64>,
    pub stored: f64,
    /// The stored optimum dominates every probe and refinement (up to `1e-9`).
    pub dominates: bool,
}

/// Random probing plus multi-start Nelder-Mead from the best probes and from
/// fresh random starts.
pub fn certify(bench: &Benchmark, probes: usize, restarts: usize, seed: u64) -> Result<Certificate> {
    if probes == 0 {
        return Err(Error::InvalidInput("need at least one probe".into()));
    }
    let d = bench.dim();
    let mut rng = seeding::rng(seed);
    let pts: Vec<Vec<f64>> = (0..probes)
        .map(|_| bench.domain.from_unit(&(0..d).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
        .collect();
    let mut vals: Vec<(usize, f64)> = pts.par_iter().map(|p| bench.value(p)).enumerate().collect();
    vals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let best_probe = vals[0].1;
    let neg = |x: &[f64]| -bench.value(x);
    let starts: Vec<Vec<f64>> = (0..restarts)
        .map(|i| if i < restarts / 2 { pts[vals[i.min(vals.len() - 1)].0].clone() } else { pts[(i * 7919) % probes].clone() })
        .collect();
    let refined: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|s| {
            let (x, v) = nelder_mead(&neg, s, &bench.domain, 0.05, 4000);
            let (x2, v2) = nelder_mead(&neg, &x, &bench.domain, 0.001, 4000);
            if v2 < v { (x2, -v2) } else { (x, -v) }
        })
        .collect();
    let (mut argmax, mut best_refined) = (pts[vals[0].0].clone(), best_probe);
    for (x, v) in refined {
        if v > best_refined {
            best_refined = v;
            argmax = x;
        }
    }
    Ok(Certificate {
        best_probe,
        best_refined,
        argmax,
        stored: bench.f_star,
        dominates: bench.f_star + 1e-9 >= best_refined.max(best_probe),
    })
}
