//! Bias-free 2-layer ReLU networks `x ↦ V relu(U x)` trained by minibatch SGD
//! on softmax cross-entropy.
//!
//! The training objective averages the loss within each domain first and then
//! across domains, so it has the same form as the empirical domain-averaged
//! risk. Initial first-layer weights `U⁰` are kept for the
//! distance-from-initialisation capacity measure.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Sample};
use crate::error::{validation, Error, Result};
use crate::linalg::Matrix;
use crate::linear::argmax_lowest;
use crate::rng::{derive_seed, rng_from_seed, Rng as StdRng};

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp2 {
    u: Matrix,
    u0: Arc<Matrix>,
    v: Matrix,
}

/// `U` and `V` entries uniform on `±1/√fan_in` (variance `1/(3·fan_in)`);
/// `U⁰` is a copy of `U`.
pub fn init_mlp(d: usize, h: usize, k: usize, seed: u64) -> Result<Mlp2> {
    if d == 0 || h == 0 || k == 0 {
        return Err(validation(format!("MLP dims must be positive, got d={d} h={h} k={k}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "mlp/init"));
    let mut uniform = |rows: usize, cols: usize| {
        let a = 1.0 / (cols as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-a..a)).collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    };
    let u = uniform(h, d);
    let v = uniform(k, h);
    Ok(Mlp2 {
        u0: Arc::new(u.clone()),
        u,
        v,
    })
}

impl Mlp2 {
    pub fn from_parts(u: Matrix, u0: Matrix, v: Matrix) -> Result<Self> {
        if u.shape() != u0.shape() || v.cols() != u.rows() {
            return Err(Error::Shape(format!(
                "inconsistent shapes U {:?}, U0 {:?}, V {:?}",
                u.shape(),
                u0.shape(),
                v.shape()
            )));
        }
        Ok(Mlp2 { u, u0: Arc::new(u0), v })
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn u0(&self) -> &Matrix {
        &self.u0
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn input_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn hidden(&self) -> usize {
        self.u.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.v.rows()
    }

    /// Mutable access to the trainable weights (`U`, `V`); `U⁰` stays fixed.
    pub fn params_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.u, &mut self.v)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let hidden: Vec<f64> = self.u.matvec(x).into_iter().map(|a| a.max(0.0)).collect();
        self.v.matvec(&hidden)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax_lowest(&self.scores(x))
    }

    pub fn accuracy<'a>(&self, data: impl IntoIterator<Item = &'a Sample>) -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for s in data {
            n += 1;
            hit += usize::from(self.predict(&s.features) == s.label);
        }
        if n == 0 {
            0.0
        } else {
            hit as f64 / n as f64
        }
    }

    /// Domain-averaged mean cross-entropy over an environment.
    pub fn env_loss(&self, env: &Environment) -> f64 {
        let total: f64 = env
            .domains()
            .iter()
            .map(|d| d.samples.iter().map(|s| cross_entropy(&self.scores(&s.features), s.label)).sum::<f64>() / d.len() as f64)
            .sum();
        total / env.n_domains() as f64
    }
}

fn log_sum_exp(s: &[f64]) -> f64 {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn cross_entropy(scores: &[f64], label: usize) -> f64 {
    log_sum_exp(scores) - scores[label]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltyPlugin {
    Erm,
    /// `lambda × population variance` of the per-domain risks.
    Vrex { lambda: f64 },
    /// Inter-domain mixup with `λ ~ Beta(alpha, alpha)`.
    Mixup { alpha: f64 },
}

impl PenaltyPlugin {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyPlugin::Erm => Ok(()),
            PenaltyPlugin::Vrex { lambda } if lambda >= 0.0 && lambda.is_finite() => Ok(()),
            PenaltyPlugin::Mixup { alpha } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            other => Err(validation(format!("invalid penalty plugin {other:?}"))),
        }
    }
}

pub fn vrex_penalty(per_domain_risks: &[f64], lambda: f64) -> Result<f64> {
    if per_domain_risks.is_empty() {
        return Err(validation("no domain risks"));
    }
    if !(lambda >= 0.0) {
        return Err(validation(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n = per_domain_risks.len() as f64;
    let mean = per_domain_risks.iter().sum::<f64>() / n;
    let var = per_domain_risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(lambda * var)
}

/// Convex combinations of paired samples; the target of row `i` is
/// `lambdas[i]` on `labels_a[i]` and `1 − lambdas[i]` on `labels_b[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub features: Vec<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub labels_a: Vec<usize>,
    pub labels_b: Vec<usize>,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    fn plain(samples: &[&Sample]) -> MixedBatch {
        MixedBatch {
            features: samples.iter().map(|s| s.features.clone()).collect(),
            lambdas: vec![1.0; samples.len()],
            labels_a: samples.iter().map(|s| s.label).collect(),
            labels_b: samples.iter().map(|s| s.label).collect(),
        }
    }
}

pub fn mixup_with_lambdas(batch_a: &[Sample], batch_b: &[Sample], lambdas: &[f64]) -> Result<MixedBatch> {
    if batch_a.len() != batch_b.len() || lambdas.len() != batch_a.len() {
        return Err(validation(format!(
            "mixup size mismatch: {} vs {} samples, {} lambdas",
            batch_a.len(),
            batch_b.len(),
            lambdas.len()
        )));
    }
    let mut features = Vec::with_capacity(batch_a.len());
    for (a, b) in batch_a.iter().zip(batch_b) {
        if a.features.len() != b.features.len() {
            return Err(validation("mixup feature dimension mismatch"));
        }
    }
    for ((a, b), &lam) in batch_a.iter().zip(batch_b).zip(lambdas) {
        features.push(a.features.iter().zip(&b.features).map(|(x, y)| lam * x + (1.0 - lam) * y).collect());
    }
    Ok(MixedBatch {
        features,
        lambdas: lambdas.to_vec(),
        labels_a: batch_a.iter().map(|s| s.label).collect(),
        labels_b: batch_b.iter().map(|s| s.label).collect(),
    })
}

fn beta_lambdas(rng: &mut StdRng, alpha: f64, n: usize) -> Result<Vec<f64>> {
    let beta = Beta::new(alpha, alpha).map_err(|e| validation(format!("Beta({alpha}, {alpha}): {e}")))?;
    Ok((0..n).map(|_| beta.sample(rng)).collect())
}

/// Mixes paired samples with per-pair `λ ~ Beta(alpha, alpha)`.
pub fn mixup_batch(batch_a: &[Sample], batch_b: &[Sample], alpha: f64, seed: u64) -> Result<MixedBatch> {
    if !(alpha > 0.0) {
        return Err(validation(format!("alpha must be positive, got {alpha}")));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "mixup"));
    let lambdas = beta_lambdas(&mut rng, alpha, batch_a.len())?;
    mixup_with_lambdas(batch_a, batch_b, &lambdas)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub u: Matrix,
    pub v: Matrix,
}

/// Per-domain mean (mixed) cross-entropy and its gradient.
fn domain_risk_and_grad(mlp: &Mlp2, batch: &MixedBatch) -> (f64, Gradients) {
    let (h, d, k) = (mlp.hidden(), mlp.input_dim(), mlp.num_classes());
    let mut gu = Matrix::zeros(h, d);
    let mut gv = Matrix::zeros(k, h);
    let mut risk = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (i, x) in batch.features.iter().enumerate() {
        let pre = mlp.u.matvec(x);
        let hid: Vec<f64> = pre.iter().map(|a| a.max(0.0)).collect();
        let s = mlp.v.matvec(&hid);
        let lse = log_sum_exp(&s);
        let (lam, ya, yb) = (batch.lambdas[i], batch.labels_a[i], batch.labels_b[i]);
        risk += lam * (lse - s[ya]) + (1.0 - lam) * (lse - s[yb]);

        let mut ds: Vec<f64> = s.iter().map(|v| (v - lse).exp()).collect();
        ds[ya] -= lam;
        ds[yb] -= 1.0 - lam;
        for (c, &g) in ds.iter().enumerate() {
            if g != 0.0 {
                crate::linalg::axpy(scale * g, &hid, gv.row_mut(c));
            }
        }
        let dh = mlp.v.t_matvec(&ds);
        for (j, (&g, &a)) in dh.iter().zip(&pre).enumerate() {
            if a > 0.0 && g != 0.0 {
                crate::linalg::axpy(scale * g, x, gu.row_mut(j));
            }
        }
    }
    (risk * scale, Gradients { u: gu, v: gv })
}

/// Objective value `mean_j r_j + penalty(r)` with its gradient. For mixup the
/// batches are already mixed and the penalty term is zero.
pub fn objective_and_gradient(mlp: &Mlp2, batches: &[MixedBatch], plugin: &PenaltyPlugin) -> (f64, Vec<f64>, Gradients) {
    let n = batches.len() as f64;
    let parts: Vec<(f64, Gradients)> = batches.iter().map(|b| domain_risk_and_grad(mlp, b)).collect();
    let risks: Vec<f64> = parts.iter().map(|p| p.0).collect();
    let mean = risks.iter().sum::<f64>() / n;
    let (penalty, weights): (f64, Vec<f64>) = match *plugin {
        PenaltyPlugin::Vrex { lambda } => {
            let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
            (lambda * var, risks.iter().map(|r| 1.0 / n + lambda * 2.0 * (r - mean) / n).collect())
        }
        _ => (0.0, vec![1.0 / n; batches.len()]),
    };
    let mut grad = Gradients {
        u: Matrix::zeros(mlp.hidden(), mlp.input_dim()),
        v: Matrix::zeros(mlp.num_classes(), mlp.hidden()),
    };
    for ((_, g), w) in parts.iter().zip(&weights) {
        grad.u.add_scaled(*w, &g.u);
        grad.v.add_scaled(*w, &g.v);
    }
    (mean + penalty, risks, grad)
}

pub fn objective(mlp: &Mlp2, batches: &[MixedBatch], plugin: &PenaltyPlugin) -> f64 {
    objective_and_gradient(mlp, batches, plugin).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_steps() -> usize {
    3000
}
fn default_every() -> usize {
    300
}
fn default_lr() -> f64 {
    1e-2
}
fn default_batch() -> usize {
    64
}
fn default_hidden() -> usize {
    256
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            steps: default_steps(),
            checkpoint_every: default_every(),
            learning_rate: default_lr(),
            batch_size: default_batch(),
            hidden: default_hidden(),
            seed: 0,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_every == 0 {
            return Err(validation("checkpoint_every must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(validation("learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(validation("batch_size and hidden must be positive"));
        }
        Ok(())
    }
}

/// Weights frozen at a training step. `u0` is shared with the network it came
/// from.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCheckpoint {
    pub step: usize,
    pub u: Matrix,
    pub v: Matrix,
    pub u0: Arc<Matrix>,
    /// Domain-averaged cross-entropy on the full training environment.
    pub train_loss: f64,
    pub train_accuracy: f64,
}

impl MlpCheckpoint {
    fn capture(step: usize, mlp: &Mlp2, env: &Environment) -> Self {
        MlpCheckpoint {
            step,
            u: mlp.u.clone(),
            v: mlp.v.clone(),
            u0: Arc::clone(&mlp.u0),
            train_loss: mlp.env_loss(env),
            train_accuracy: mlp.accuracy(env.pooled()),
        }
    }

    pub fn model(&self) -> Mlp2 {
        Mlp2 {
            u: self.u.clone(),
            u0: Arc::clone(&self.u0),
            v: self.v.clone(),
        }
    }

    /// `step S`, `dims d h K`, then `U`, `U⁰` and `V` in matrix dump form.
    pub fn to_text(&self) -> String {
        format!(
            "step {}\ndims {} {} {}\n{}{}{}",
            self.step,
            self.u.cols(),
            self.u.rows(),
            self.v.rows(),
            self.u.to_text(),
            self.u0.to_text(),
            self.v.to_text()
        )
    }

    /// Parses [`MlpCheckpoint::to_text`] output. Train metrics are not stored
    /// and come back as NaN.
    pub fn from_text(text: &str) -> Result<MlpCheckpoint> {
        let mut lines = text.lines();
        let header = |line: Option<&str>, key: &str, n: usize, lineno: usize| -> Result<Vec<usize>> {
            let line = line.ok_or_else(|| Error::Parse { line: lineno, msg: format!("missing {key} line") })?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(key) {
                return Err(Error::Parse { line: lineno, msg: format!("expected {key:?} line, got {line:?}") });
            }
            let vals = toks
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
            if vals.len() != n {
                return Err(Error::Parse { line: lineno, msg: format!("{key} needs {n} integers") });
            }
            Ok(vals)
        };
        let step = header(lines.next(), "step", 1, 1)?[0];
        let dims = header(lines.next(), "dims", 3, 2)?;
        let mut offset = 2;
        let u = Matrix::parse_lines(&mut lines, &mut offset)?;
        let u0 = Matrix::parse_lines(&mut lines, &mut offset)?;
        let v = Matrix::parse_lines(&mut lines, &mut offset)?;
        if u.shape() != (dims[1], dims[0]) || u0.shape() != u.shape() || v.shape() != (dims[2], dims[1]) {
            return Err(Error::Format(format!("checkpoint matrices do not match dims {dims:?}")));
        }
        Ok(MlpCheckpoint {
            step,
            u,
            v,
            u0: Arc::new(u0),
            train_loss: f64::NAN,
            train_accuracy: f64::NAN,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoints: Vec<MlpCheckpoint>,
    /// Objective of the minibatch used at each step, evaluated before the update.
    pub objective_trace: Vec<f64>,
}

fn draw_batch<'a>(samples: &'a [Sample], size: usize, rng: &mut StdRng) -> Vec<&'a Sample> {
    if size >= samples.len() {
        samples.iter().collect()
    } else {
        rand::seq::index::sample(rng, samples.len(), size)
            .into_iter()
            .map(|i| &samples[i])
            .collect()
    }
}

/// Trains from a fresh initialisation seeded by `schedule.seed`. Checkpoints
/// are taken at step 0, every `checkpoint_every` steps and after the final step.
pub fn train_mlp(env: &Environment, schedule: &TrainSchedule, plugin: &PenaltyPlugin) -> Result<TrainRun> {
    let mlp = init_mlp(env.feature_dim(), schedule.hidden, env.num_classes(), schedule.seed)?;
    train_mlp_from(mlp, env, schedule, plugin)
}

/// Like [`train_mlp`] but starting from the given network.
pub fn train_mlp_from(
    mut mlp: Mlp2,
    env: &Environment,
    schedule: &TrainSchedule,
    plugin: &PenaltyPlugin,
) -> Result<TrainRun> {
    schedule.validate()?;
    plugin.validate()?;
    if mlp.input_dim() != env.feature_dim() || mlp.num_classes() != env.num_classes() {
        return Err(Error::Shape(format!(
            "network ({} inputs, {} classes) does not match environment ({}, {})",
            mlp.input_dim(),
            mlp.num_classes(),
            env.feature_dim(),
            env.num_classes()
        )));
    }
    let mut rng = rng_from_seed(derive_seed(schedule.seed, "mlp/batches"));
    let mut checkpoints = vec![MlpCheckpoint::capture(0, &mlp, env)];
    let mut trace = Vec::with_capacity(schedule.steps);
    let n = env.n_domains();

    for step in 1..=schedule.steps {
        let raw: Vec<Vec<&Sample>> = env
            .domains()
            .iter()
            .map(|d| draw_batch(&d.samples, schedule.batch_size, &mut rng))
            .collect();
        let batches: Vec<MixedBatch> = match *plugin {
            PenaltyPlugin::Mixup { alpha } => (0..n)
                .map(|j| {
                    let a = &raw[j];
                    let mut b: Vec<&Sample> = raw[(j + 1) % n].clone();
                    if n == 1 {
                        use rand::seq::SliceRandom;
                        b.shuffle(&mut rng);
                    }
                    let len = a.len().min(b.len());
                    let a: Vec<Sample> = a[..len].iter().map(|s| (*s).clone()).collect();
                    let b: Vec<Sample> = b[..len].iter().map(|s| (*s).clone()).collect();
                    let lambdas = beta_lambdas(&mut rng, alpha, len)?;
                    mixup_with_lambdas(&a, &b, &lambdas)
                })
                .collect::<Result<_>>()?,
            _ => raw.iter().map(|b| MixedBatch::plain(b)).collect(),
        };
        let (obj, risks, grad) = objective_and_gradient(&mlp, &batches, plugin);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite objective {obj} at step {step} (learning rate {}, plugin {plugin:?}, domain risks {risks:?})",
                schedule.learning_rate
            )));
        }
        trace.push(obj);
        mlp.u.add_scaled(-schedule.learning_rate, &grad.u);
        mlp.v.add_scaled(-schedule.learning_rate, &grad.v);
        if step % schedule.checkpoint_every == 0 || step == schedule.steps {
            checkpoints.push(MlpCheckpoint::capture(step, &mlp, env));
        }
    }
    Ok(TrainRun {
        checkpoints,
        objective_trace: trace,
    })
}

/// Plain mean cross-entropy of a dataset, computed sample by sample.
pub fn mean_cross_entropy(mlp: &Mlp2, data: &[Sample]) -> f64 {
    data.iter().map(|s| cross_entropy(&mlp.scores(&s.features), s.label)).sum::<f64>() / data.len() as f64
}
