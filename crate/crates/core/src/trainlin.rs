//! Multinomial logistic-regression probes and bootstrap resampling.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UTDM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 strength on the weights; the bias is not regularized.
    pub lambda: f64,
    pub max_iter: u32,
    /// Stop once the gradient's Euclidean norm falls below this.
    pub tol: f64,
    /// Recorded with the model; training itself uses no randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lambda: 1e-4, max_iter: 500, tol: 1e-6, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Precondition(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.max_iter == 0 {
            return Err(Error::Precondition("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Precondition(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: TrainConfig,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub iterations: u32,
    pub converged: bool,
}

/// Softmax classifier over `dim` features. Parameters are held as f32,
/// exactly as written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `classes x dim`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
    pub meta: TrainMeta,
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearModel {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
            meta: TrainMeta {
                config: TrainConfig::default(),
                train_accuracy: 0.0,
                final_loss: f64::NAN,
                iterations: 0,
                converged: false,
            },
        }
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        Ok((0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] as f64 + row.iter().zip(x).map(|(w, v)| *w as f64 * *v as f64).sum::<f64>()
            })
            .collect())
    }

    pub fn predict_proba(&self, x: &[f32]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f32]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let c = &self.meta.config;
        let mut out = Vec::with_capacity(64 + 4 * self.weights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&c.lambda.to_le_bytes());
        out.extend_from_slice(&c.max_iter.to_le_bytes());
        out.extend_from_slice(&c.tol.to_le_bytes());
        out.extend_from_slice(&self.meta.train_accuracy.to_le_bytes());
        out.extend_from_slice(&self.meta.final_loss.to_le_bytes());
        out.extend_from_slice(&self.meta.iterations.to_le_bytes());
        out.push(self.meta.converged as u8);
        for x in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Format { path: path.display().to_string(), message: m.to_owned() };
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated model file"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let f64_at = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let classes = u32_at(take(4)?) as usize;
        let dim = u32_at(take(4)?) as usize;
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let lambda = f64_at(take(8)?);
        let max_iter = u32_at(take(4)?);
        let tol = f64_at(take(8)?);
        let train_accuracy = f64_at(take(8)?);
        let final_loss = f64_at(take(8)?);
        let iterations = u32_at(take(4)?);
        let converged = take(1)?[0] != 0;
        let params: Vec<f32> = take(4 * (classes * dim + classes))?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if take(1).is_ok() {
            return Err(bad("trailing bytes"));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        let (weights, bias) = params.split_at(classes * dim);
        Ok(LinearModel {
            classes,
            dim,
            weights: weights.to_vec(),
            bias: bias.to_vec(),
            meta: TrainMeta {
                config: TrainConfig { lambda, max_iter, tol, seed },
                train_accuracy,
                final_loss,
                iterations,
                converged,
            },
        })
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Index of the maximum; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `n` indices drawn uniformly from `0..n` with replacement, from a ChaCha8
/// stream seeded with `seed`.
pub fn bootstrap_sample(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Precondition("cannot bootstrap an empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_range(0..n)).collect())
}

/// Regularized mean cross-entropy over a fixed training set.
///
/// Parameters are packed as `[W row-major (classes x dim), b (classes)]`.
pub struct Objective<'a> {
    x: &'a [Vec<f32>],
    y: &'a [usize],
    classes: usize,
    dim: usize,
    lambda: f64,
}

impl<'a> Objective<'a> {
    pub fn new(x: &'a [Vec<f32>], y: &'a [usize], classes: usize, lambda: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::DegenerateInput("no training samples".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DegenerateInput(format!("{} feature rows but {} labels", x.len(), y.len())));
        }
        if classes < 2 {
            return Err(Error::DegenerateInput(format!("need at least 2 classes, got {classes}")));
        }
        let dim = x[0].len();
        for (i, row) in x.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateInput(format!("non-finite feature in row {i}")));
            }
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= classes) {
            return Err(Error::DegenerateInput(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Objective { x, y, classes, dim, lambda })
    }

    pub fn len(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn logits(&self, theta: &[f64], row: &[f32], out: &mut [f64]) {
        let (w, b) = theta.split_at(self.classes * self.dim);
        for c in 0..self.classes {
            let wc = &w[c * self.dim..(c + 1) * self.dim];
            out[c] = b[c] + wc.iter().zip(row).map(|(a, v)| a * *v as f64).sum::<f64>();
        }
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.loss_grad(theta).0
    }

    pub fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (k, d) = (self.classes, self.dim);
        let n = self.x.len() as f64;
        let mut grad = vec![0.0; self.len()];
        let mut z = vec![0.0; k];
        let mut loss = 0.0;
        for (row, &label) in self.x.iter().zip(self.y) {
            self.logits(theta, row, &mut z);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - z[label];
            for c in 0..k {
                let r = (z[c] - lse).exp() - if c == label { 1.0 } else { 0.0 };
                let g = &mut grad[c * d..(c + 1) * d];
                for (gi, v) in g.iter_mut().zip(row) {
                    *gi += r * *v as f64;
                }
                grad[k * d + c] += r;
            }
        }
        loss /= n;
        for g in grad.iter_mut() {
            *g /= n;
        }
        let w = &theta[..k * d];
        loss += 0.5 * self.lambda * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad[..k * d].iter_mut().zip(w) {
            *g += self.lambda * v;
        }
        (loss, grad)
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub iterations: u32,
    pub converged: bool,
    /// Loss after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    vdot(a, a).sqrt()
}

/// Limited-memory BFGS with Armijo backtracking. Only steps that do not
/// increase the loss are accepted.
pub fn lbfgs(obj: &Objective<'_>, theta0: Vec<f64>, max_iter: u32, tol: f64) -> Minimum {
    let mut theta = theta0;
    let (mut f, mut g) = obj.loss_grad(&theta);
    let mut history = vec![f];
    let mut mem: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    let mut iterations = 0;
    let mut converged = norm(&g) < tol;

    while !converged && iterations < max_iter {
        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * vdot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match mem.last() {
            Some((s, y, _)) => vdot(s, y) / vdot(y, y),
            None => 1.0 / norm(&g).max(1.0),
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * vdot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = vdot(&g, &dir);
        if slope.is_nan() || slope >= 0.0 {
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -vdot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            let (ft, gt) = obj.loss_grad(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * step * slope && ft <= f {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fn_, gn)) = accepted else { break };
        iterations += 1;
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = vdot(&s, &y);
        if sy > 1e-12 {
            if mem.len() == MEMORY {
                mem.remove(0);
            }
            mem.push((s, y, 1.0 / sy));
        }
        theta = next;
        f = fn_;
        g = gn;
        history.push(f);
        converged = norm(&g) < tol;
    }
    Minimum { theta, loss: f, iterations, converged, history }
}

/// Fits a softmax classifier on rows `x` with labels `y` in `0..classes`.
pub fn train_softmax(x: &[Vec<f32>], y: &[usize], classes: usize, cfg: &TrainConfig) -> Result<LinearModel> {
    Ok(train_softmax_traced(x, y, classes, cfg)?.0)
}

/// As [`train_softmax`], also returning the per-step loss history.
pub fn train_softmax_traced(
    x: &[Vec<f32>],
    y: &[usize],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    cfg.validate()?;
    let obj = Objective::new(x, y, classes, cfg.lambda)?;
    let min = lbfgs(&obj, vec![0.0; obj.len()], cfg.max_iter, cfg.tol);
    if !min.loss.is_finite() || min.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainFailure("optimizer produced non-finite parameters".into()));
    }
    let dim = obj.dim;
    let (w, b) = min.theta.split_at(classes * dim);
    let mut model = LinearModel {
        classes,
        dim,
        weights: w.iter().map(|v| *v as f32).collect(),
        bias: b.iter().map(|v| *v as f32).collect(),
        meta: TrainMeta {
            config: *cfg,
            train_accuracy: 0.0,
            final_loss: min.loss,
            iterations: min.iterations,
            converged: min.converged,
        },
    };
    let mut correct = 0usize;
    for (row, &label) in x.iter().zip(y) {
        correct += (model.predict(row)? == label) as usize;
    }
    model.meta.train_accuracy = correct as f64 / x.len() as f64;
    Ok((model, min.history))
}
