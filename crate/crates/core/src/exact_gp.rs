//! Exact GP posterior, information gain and the concentration radius.
//!
//! The exact posterior is the reference every approximation is checked
//! against, so it is kept plain: one Cholesky factor of `K + tau I`,
//! refit from scratch whenever data changes.

use std::io::{BufRead, Write};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::linalg;

/// Round-off allowance for predictive variances.
pub const VARIANCE_CLAMP: f64 = 1e-12;

/// Batched observations. Row `(s - 1) B + (b - 1)` holds `x_{s,b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    batch_size: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, batch_size: usize) -> Result<Self> {
        if dim == 0 || batch_size == 0 {
            return Err(Error::InvalidInput("dimension and batch size must be positive".into()));
        }
        Ok(Self { dim, batch_size, inputs: Vec::new(), outputs: Vec::new() })
    }

    /// Sequential data: batch size one, one step per row.
    pub fn from_rows(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        let dim = inputs.first().map_or(1, Vec::len);
        let mut data = Self::new(dim, 1)?;
        check_dim(inputs.len(), outputs.len())?;
        for (x, y) in inputs.into_iter().zip(outputs) {
            data.push_batch(vec![x], vec![y])?;
        }
        Ok(data)
    }

    pub fn push_batch(&mut self, inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<()> {
        check_dim(self.batch_size, inputs.len())?;
        check_dim(self.batch_size, outputs.len())?;
        for x in &inputs {
            check_dim(self.dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite input location".into()));
            }
        }
        if outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.inputs.extend(inputs);
        self.outputs.extend(outputs);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.inputs.len() / self.batch_size
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    /// First `steps` batches.
    pub fn prefix(&self, steps: usize) -> Dataset {
        let n = (steps * self.batch_size).min(self.len());
        Dataset {
            dim: self.dim,
            batch_size: self.batch_size,
            inputs: self.inputs[..n].to_vec(),
            outputs: self.outputs[..n].to_vec(),
        }
    }

    /// CSV with header `s,b,x_1..x_d,y`; `s` and `b` are 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let xs: Vec<String> = (1..=self.dim).map(|i| format!("x_{i}")).collect();
        writeln!(w, "s,b,{},y", xs.join(","))?;
        for (i, (x, y)) in self.inputs.iter().zip(&self.outputs).enumerate() {
            let s = i / self.batch_size + 1;
            let b = i % self.batch_size + 1;
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{s},{b},{},{y}", xs.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty dataset CSV".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.len() < 4 || cols[0] != "s" || cols[1] != "b" || cols[cols.len() - 1] != "y" {
            return Err(Error::InvalidInput(format!("unexpected dataset header `{header}`")));
        }
        let dim = cols.len() - 3;
        let mut rows: Vec<(usize, usize, Vec<f64>, f64)> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |what: &str| {
                Error::InvalidInput(format!("dataset CSV line {}: bad {what}", lineno + 2))
            };
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != dim + 3 {
                return Err(parse_err("field count"));
            }
            let s: usize = fields[0].parse().map_err(|_| parse_err("step index"))?;
            let b: usize = fields[1].parse().map_err(|_| parse_err("batch index"))?;
            let x = fields[2..2 + dim]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| parse_err("coordinate")))
                .collect::<Result<Vec<_>>>()?;
            let y: f64 = fields[dim + 2].parse().map_err(|_| parse_err("observation"))?;
            rows.push((s, b, x, y));
        }
        let batch_size = rows.iter().map(|r| r.1).max().unwrap_or(1);
        let mut data = Dataset::new(dim, batch_size)?;
        for (i, chunk) in rows.chunks(batch_size).enumerate() {
            if chunk.len() != batch_size
                || chunk.iter().enumerate().any(|(j, r)| r.0 != i + 1 || r.1 != j + 1)
            {
                return Err(Error::InvalidInput(format!("dataset CSV batch {} is malformed", i + 1)));
            }
            data.push_batch(
                chunk.iter().map(|r| r.2.clone()).collect(),
                chunk.iter().map(|r| r.3).collect(),
            )?;
        }
        Ok(data)
    }
}

/// Gram matrix `[k(a_i, b_j)]`.
pub fn gram(spec: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| spec.value(&a[i], &b[j]))
}

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    kernel: KernelSpec,
    noise: f64,
    inputs: Vec<Vec<f64>>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

pub fn fit_exact(data: &Dataset, spec: &KernelSpec, noise: f64) -> Result<ExactPosterior> {
    if !(noise > 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!("noise variance must be positive, got {noise}")));
    }
    if !data.is_empty() {
        check_dim(spec.dim(), data.dim())?;
    }
    let n = data.len();
    let k = gram(spec, data.inputs(), data.inputs()) + DMatrix::identity(n, n) * noise;
    let chol = linalg::cholesky(k)?;
    let y = DVector::from_column_slice(data.outputs());
    let weights = chol.solve(&y);
    Ok(ExactPosterior {
        kernel: spec.clone(),
        noise,
        inputs: data.inputs().to_vec(),
        chol,
        weights,
    })
}

impl ExactPosterior {
    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.value(xi, x)))
    }

    /// Posterior mean and variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.kernel.dim(), x.len())?;
        let kx = self.cross(x);
        let mean = kx.dot(&self.weights);
        let v = linalg::solve_lower_vec(&self.chol, &kx);
        let var = clamp_variance(self.kernel.value(x, x) - v.dot(&v))?;
        Ok((mean, var))
    }

    /// Posterior covariance between two points.
    pub fn covariance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim(), x.len())?;
        check_dim(self.kernel.dim(), y.len())?;
        let vx = linalg::solve_lower_vec(&self.chol, &self.cross(x));
        let vy = linalg::solve_lower_vec(&self.chol, &self.cross(y));
        Ok(self.kernel.value(x, y) - vx.dot(&vy))
    }

    /// Joint mean vector and covariance matrix at `points`.
    pub fn joint(&self, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        for p in points {
            check_dim(self.kernel.dim(), p.len())?;
        }
        let kxp = gram(&self.kernel, &self.inputs, points);
        let mean = kxp.transpose() * &self.weights;
        let v = linalg::solve_lower(&self.chol, &kxp);
        let cov = gram(&self.kernel, points, points) - v.transpose() * v;
        Ok((mean, cov))
    }
}

/// Clamp tiny negative variances from round-off; reject larger ones.
pub fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NumericalDegeneracy(format!("predictive variance {v:e} is negative")))
    }
}

/// `1/2 log det(I + K / tau)` for the observed inputs.
pub fn information_gain(data: &Dataset, spec: &KernelSpec, noise: f64) -> Result<f64> {
    information_gain_of(data.inputs(), spec, noise)
}

pub fn information_gain_of(inputs: &[Vec<f64>], spec: &KernelSpec, noise: f64) -> Result<f64> {
    if !(noise > 0.0) {
        return Err(Error::InvalidInput("noise variance must be positive".into()));
    }
    let n = inputs.len();
    if n == 0 {
        return Ok(0.0);
    }
    let m = DMatrix::identity(n, n) + gram(spec, inputs, inputs) / noise;
    let chol = linalg::cholesky(m)?;
    Ok(0.5 * linalg::log_det(&chol))
}

/// Asymptotic envelope of the maximal information gain with unit constant:
/// `log(s)^(d+1)` for SE, `s^(d / (2 nu + d)) log s` for Matérn.
pub fn gamma_bound(family: KernelFamily, s: f64, d: usize) -> Result<f64> {
    if !(s >= 2.0) {
        return Err(Error::InvalidInput(format!("gamma envelope needs s >= 2, got {s}")));
    }
    let d = d as f64;
    Ok(match family {
        KernelFamily::SquaredExponential => s.ln().powf(d + 1.0),
        KernelFamily::Matern(nu) => s.powf(d / (2.0 * nu.value() + d)) * s.ln(),
    })
}

/// Confidence radius of the approximate posterior:
/// `a_under (B + R sqrt(2 (gamma + 1 + log(1/delta))) + c)`.
pub fn concentration_radius(
    rkhs_norm: f64,
    noise_scale: f64,
    gamma: f64,
    delta: f64,
    a_under: f64,
    c: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if rkhs_norm < 0.0 || noise_scale < 0.0 || gamma < 0.0 || c < 0.0 || a_under < 1.0 {
        return Err(Error::InvalidInput(
            "need B, R, gamma, c >= 0 and a_under >= 1".into(),
        ));
    }
    let inner = 2.0 * (gamma + 1.0 + (1.0 / delta).ln());
    Ok(a_under * (rkhs_norm + noise_scale * inner.sqrt() + c))
}
