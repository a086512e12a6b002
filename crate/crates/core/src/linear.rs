//! One-vs-rest L2-regularised linear classifiers.
//!
//! Each class row `w_k` minimises `‖w_k‖² + (C/m) Σᵢ ℓ(y_ik ⟨w_k, x̃ᵢ⟩)` with
//! `y_ik = ±1` and `x̃ᵢ` the features with a constant 1 appended (so the
//! offset is part of `w_k` and is regularised like every other weight).
//! Hinge loss is solved by dual coordinate descent, logistic loss by damped
//! Newton iterations.

use std::borrow::Borrow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::environment::Sample;
use crate::error::{validation, Error, Result};
use crate::linalg::{axpy, cholesky_solve, dot, norm, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_c", rename = "C", alias = "c")]
    pub c: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    /// Append a constant 1 feature. Only disabled in tests of the bare
    /// objective.
    #[serde(default = "default_true")]
    pub bias_feature: bool,
}

fn default_loss() -> LossKind {
    LossKind::Hinge
}
fn default_c() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            loss: default_loss(),
            c: default_c(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            seed: 0,
            bias_feature: true,
        }
    }
}

impl SvmConfig {
    pub fn with_c(&self, c: f64) -> SvmConfig {
        SvmConfig { c, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(validation(format!("C must be positive and finite, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(validation(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(validation("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolverReport {
    /// Largest iteration count over the class subproblems.
    pub iterations: usize,
    /// Sum over classes of the primal objective at the returned weights.
    pub final_objective: f64,
    pub converged: bool,
    /// Per class: the solver objective after each iteration (the dual
    /// objective `½‖w‖² − Σα` for hinge, the primal for logistic).
    pub objective_trace: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    weights: Matrix,
    bias_feature: bool,
    trained_c: f64,
    report: SolverReport,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub ramp_risk: f64,
    pub mean_margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightNorms {
    pub per_class: Vec<f64>,
    pub max_norm: f64,
}

/// `clamp(1 − t, 0, 1)`: 1-Lipschitz and `[0, 1]`-valued.
pub fn ramp(margin: f64) -> f64 {
    (1.0 - margin).clamp(0.0, 1.0)
}

fn augmented(features: &[f64], bias: bool) -> Vec<f64> {
    let mut x = features.to_vec();
    if bias {
        x.push(1.0);
    }
    x
}

impl LinearModel {
    /// Wraps a weight matrix (one row per class). With `bias_feature` the last
    /// column multiplies the constant feature.
    pub fn from_weights(weights: Matrix, bias_feature: bool, trained_c: f64) -> Result<Self> {
        if !weights.is_finite() {
            return Err(validation("weights must be finite"));
        }
        if weights.rows() < 2 || (bias_feature && weights.cols() < 1) {
            return Err(Error::Shape(format!("weight matrix {:?} too small", weights.shape())));
        }
        Ok(LinearModel {
            weights,
            bias_feature,
            trained_c,
            report: SolverReport::default(),
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    /// Dimension of raw inputs (without the constant feature).
    pub fn input_dim(&self) -> usize {
        self.weights.cols() - usize::from(self.bias_feature)
    }

    pub fn bias_feature(&self) -> bool {
        self.bias_feature
    }

    pub fn trained_c(&self) -> f64 {
        self.trained_c
    }

    pub fn report(&self) -> &SolverReport {
        &self.report
    }

    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        if self.bias_feature {
            let p = features.len();
            self.weights
                .row_iter()
                .map(|w| dot(&w[..p], features) + w[p])
                .collect()
        } else {
            self.weights.matvec(features)
        }
    }

    /// Argmax of the class scores; ties go to the lowest class index.
    pub fn predict(&self, features: &[f64]) -> usize {
        argmax_lowest(&self.scores(features))
    }

    /// `score_true − max_{k≠true} score_k`.
    pub fn margin(&self, sample: &Sample) -> f64 {
        let s = self.scores(&sample.features);
        let other = s
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != sample.label)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        s[sample.label] - other
    }

    /// `K p` header then one row per class, 17 significant digits.
    pub fn to_text(&self) -> String {
        self.weights.to_text()
    }

    pub fn from_text(text: &str, bias_feature: bool) -> Result<Self> {
        LinearModel::from_weights(Matrix::from_text(text)?, bias_feature, f64::NAN)
    }
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

fn check_samples<S: Borrow<Sample>>(data: &[S], num_classes: Option<usize>) -> Result<usize> {
    let first = data
        .first()
        .ok_or_else(|| validation("dataset is empty"))?
        .borrow();
    let d = first.features.len();
    for (i, s) in data.iter().enumerate() {
        let s = s.borrow();
        if s.features.len() != d {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, expected {d}",
                s.features.len()
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(validation(format!("sample {i} has a non-finite feature")));
        }
        if let Some(k) = num_classes {
            if s.label >= k {
                return Err(validation(format!("sample {i} label {} outside [0, {k})", s.label)));
            }
        }
    }
    Ok(d)
}

/// Trains one scorer per class. `num_classes` must be at least 2 and every
/// class must occur in `data`.
pub fn train_linear<S: Borrow<Sample>>(
    data: &[S],
    num_classes: usize,
    config: &SvmConfig,
) -> Result<LinearModel> {
    config.validate()?;
    if num_classes < 2 {
        return Err(validation("need at least 2 classes"));
    }
    let d = check_samples(data, Some(num_classes))?;
    let mut present = vec![false; num_classes];
    for s in data {
        present[s.borrow().label] = true;
    }
    if let Some(k) = present.iter().position(|p| !p) {
        return Err(Error::Training(format!("class {k} has no training samples")));
    }

    let p = d + usize::from(config.bias_feature);
    let xs: Vec<Vec<f64>> = data
        .iter()
        .map(|s| augmented(&s.borrow().features, config.bias_feature))
        .collect();
    let labels: Vec<usize> = data.iter().map(|s| s.borrow().label).collect();

    let mut weights = Matrix::zeros(num_classes, p);
    let mut report = SolverReport {
        converged: true,
        ..Default::default()
    };
    for k in 0..num_classes {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let seed = derive_seed(config.seed, &format!("linear/class/{k}"));
        let fit = match config.loss {
            LossKind::Hinge => hinge_dual_cd(&xs, &y, config, seed),
            LossKind::Logistic => logistic_newton(&xs, &y, config)?,
        };
        weights.row_mut(k).copy_from_slice(&fit.w);
        report.iterations = report.iterations.max(fit.iterations);
        report.final_objective += fit.primal_objective;
        report.converged &= fit.converged;
        report.objective_trace.push(fit.trace);
    }
    if !weights.is_finite() {
        return Err(Error::Numerical("solver produced non-finite weights".into()));
    }
    Ok(LinearModel {
        weights,
        bias_feature: config.bias_feature,
        trained_c: config.c,
        report,
    })
}

struct BinaryFit {
    w: Vec<f64>,
    iterations: usize,
    primal_objective: f64,
    converged: bool,
    trace: Vec<f64>,
}

/// `‖w‖² + (C/m) Σ ℓ(yᵢ⟨w, xᵢ⟩)`
fn primal_objective(xs: &[Vec<f64>], y: &[f64], w: &[f64], c: f64, loss: LossKind) -> f64 {
    let m = xs.len() as f64;
    let total: f64 = xs
        .iter()
        .zip(y)
        .map(|(x, &yi)| {
            let z = yi * dot(w, x);
            match loss {
                LossKind::Hinge => (1.0 - z).max(0.0),
                LossKind::Logistic => softplus(-z),
            }
        })
        .sum();
    dot(w, w) + c / m * total
}

/// Dual coordinate descent for `½‖w‖² + U Σ max(0, 1 − yᵢ⟨w, xᵢ⟩)` with
/// `U = C / (2m)`, which has the same minimiser as the stated objective.
/// Stops when the projected-gradient spread of an epoch drops below `tol`.
fn hinge_dual_cd(xs: &[Vec<f64>], y: &[f64], config: &SvmConfig, seed: u64) -> BinaryFit {
    let m = xs.len();
    let p = xs[0].len();
    let upper = config.c / (2.0 * m as f64);
    let qd: Vec<f64> = xs.iter().map(|x| dot(x, x)).collect();
    let mut alpha = vec![0.0; m];
    let mut w = vec![0.0; p];
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = rng_from_seed(seed);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            if qd[i] <= 0.0 {
                continue;
            }
            let g = y[i] * dot(&w, &xs[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, upper);
                let delta = alpha[i] - old;
                if delta != 0.0 {
                    axpy(delta * y[i], &xs[i], &mut w);
                }
            }
        }
        trace.push(0.5 * dot(&w, &w) - alpha.iter().sum::<f64>());
        if pg_max - pg_min < config.tol || pg_max == f64::NEG_INFINITY {
            converged = true;
            break;
        }
    }
    let primal_objective = primal_objective(xs, y, &w, config.c, LossKind::Hinge);
    BinaryFit {
        w,
        iterations,
        primal_objective,
        converged,
        trace,
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Newton's method with Armijo backtracking on the primal logistic
/// objective. Each accepted step strictly decreases the objective.
fn logistic_newton(xs: &[Vec<f64>], y: &[f64], config: &SvmConfig) -> Result<BinaryFit> {
    let m = xs.len() as f64;
    let p = xs[0].len();
    let scale = config.c / m;
    let mut w = vec![0.0; p];
    let mut f = primal_objective(xs, y, &w, config.c, LossKind::Logistic);
    let mut trace = vec![];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut grad: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let mut hess = Matrix::identity(p);
        hess.scale(2.0);
        for (x, &yi) in xs.iter().zip(y) {
            let z = yi * dot(&w, x);
            axpy(-scale * yi * sigmoid(-z), x, &mut grad);
            let curv = scale * sigmoid(z) * sigmoid(-z);
            for a in 0..p {
                let ca = curv * x[a];
                if ca == 0.0 {
                    continue;
                }
                for b in 0..p {
                    hess[(a, b)] += ca * x[b];
                }
            }
        }
        if norm(&grad) < config.tol {
            converged = true;
            trace.push(f);
            break;
        }
        let dir = cholesky_solve(&hess, &grad)
            .ok_or_else(|| Error::Numerical("logistic Hessian is not positive definite".into()))?;
        let slope = dot(&grad, &dir);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - t * b).collect();
            let fc = primal_objective(xs, y, &cand, config.c, LossKind::Logistic);
            if fc <= f - 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            // no decrease available at machine precision
            converged = true;
            trace.push(f);
            break;
        };
        let change = f - fc;
        w = cand;
        f = fc;
        trace.push(f);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(BinaryFit {
        w,
        iterations,
        primal_objective: f,
        converged,
        trace,
    })
}

/// Accuracy (argmax, ties to the lowest index), mean ramp loss of the
/// multiclass margin, and mean margin.
pub fn evaluate<S: Borrow<Sample>>(model: &LinearModel, data: &[S]) -> Result<Metrics> {
    let d = check_samples(data, Some(model.num_classes()))?;
    if d != model.input_dim() {
        return Err(Error::Shape(format!(
            "model expects {} features, data has {d}",
            model.input_dim()
        )));
    }
    let mut correct = 0usize;
    let mut ramp_sum = 0.0;
    let mut margin_sum = 0.0;
    for s in data {
        let s = s.borrow();
        let scores = model.scores(&s.features);
        if argmax_lowest(&scores) == s.label {
            correct += 1;
        }
        let margin = model.margin(s);
        ramp_sum += ramp(margin);
        margin_sum += margin;
    }
    let n = data.len() as f64;
    Ok(Metrics {
        accuracy: correct as f64 / n,
        ramp_risk: ramp_sum / n,
        mean_margin: margin_sum / n,
    })
}

/// Euclidean norm of every class row (constant-feature weight included).
pub fn weight_norm(model: &LinearModel) -> WeightNorms {
    let per_class: Vec<f64> = model.weights.row_iter().map(norm).collect();
    let max_norm = per_class.iter().copied().fold(0.0, f64::max);
    WeightNorms { per_class, max_norm }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn s(x: &[f64], y: usize) -> Sample {
        Sample::new(x.to_vec(), y)
    }

    fn random_data(seed: u64, m: usize, d: usize, k: usize) -> Vec<Sample> {
        let mut rng = rng_from_seed(seed);
        (0..m)
            .map(|i| {
                let y = i % k;
                let x = (0..d).map(|j| rng.random::<f64>() * 2.0 - 1.0 + if j == y { 0.7 } else { 0.0 }).collect();
                Sample::new(x, y)
            })
            .collect()
    }

    #[test]
    fn separable_points_large_c() {
        let data = vec![s(&[1.0], 0), s(&[-1.0], 1), s(&[1.2], 0), s(&[-0.8], 1)];
        let cfg = SvmConfig { c: 1e4, ..Default::default() };
        let model = train_linear(&data, 2, &cfg).unwrap();
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
        assert!(model.report().converged);
    }

    #[test]
    fn tiny_c_collapses_weights() {
        let data = random_data(1, 40, 3, 2);
        let cfg = SvmConfig { c: 1e-10, ..Default::default() };
        let model = train_linear(&data, 2, &cfg).unwrap();
        assert!(weight_norm(&model).max_norm < 1e-4);
        for x in &data {
            let sc = model.scores(&x.features);
            assert!((sc[0] - sc[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_model_ties_go_to_class_zero() {
        let model = LinearModel::from_weights(Matrix::zeros(3, 3), true, 1.0).unwrap();
        let data = vec![s(&[1.0, 2.0], 0), s(&[3.0, -1.0], 2), s(&[0.0, 0.0], 1), s(&[5.0, 5.0], 0)];
        assert_eq!(model.predict(&[4.0, 4.0]), 0);
        let m = evaluate(&model, &data).unwrap();
        assert_eq!(m.ramp_risk, 1.0);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.mean_margin, 0.0);
    }

    #[test]
    fn ramp_definition() {
        assert_eq!(ramp(2.0), 0.0);
        assert_eq!(ramp(0.0), 1.0);
        assert_eq!(ramp(0.5), 0.5);
        assert_eq!(ramp(-3.0), 1.0);
        let grid: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.01).collect();
        for w in grid.windows(2) {
            let (a, b) = (ramp(w[0]), ramp(w[1]));
            assert!((0.0..=1.0).contains(&a));
            assert!((a - b).abs() <= (w[0] - w[1]).abs() + 1e-15);
        }
    }

    // 8 fixed 1-D points; the objective w² + (C/m) Σ hinge(y x w) is convex in
    // a scalar, so a dense grid locates the minimiser to within the step.
    const GRID_X: [f64; 8] = [-2.0, -1.3, -0.4, 0.3, -0.2, 0.8, 1.5, 2.4];
    const GRID_Y: [usize; 8] = [1, 1, 0, 1, 0, 0, 0, 0];

    fn grid_minimiser(loss: LossKind, k: usize, c: f64) -> f64 {
        let obj = |w: f64| {
            let total: f64 = GRID_X
                .iter()
                .zip(GRID_Y)
                .map(|(&x, l)| {
                    let yk = if l == k { 1.0 } else { -1.0 };
                    let z = yk * x * w;
                    match loss {
                        LossKind::Hinge => (1.0 - z).max(0.0),
                        LossKind::Logistic => (1.0 + (-z).exp()).ln(),
                    }
                })
                .sum();
            w * w + c / 8.0 * total
        };
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let w = -10.0 + i as f64 * 1e-4;
            let v = obj(w);
            if v < best.0 {
                best = (v, w);
            }
        }
        best.1
    }

    #[test]
    fn hinge_matches_grid_search() {
        let data: Vec<Sample> = GRID_X.iter().zip(GRID_Y).map(|(&x, y)| s(&[x], y)).collect();
        let cfg = SvmConfig {
            c: 2.0,
            tol: 1e-10,
            max_iter: 100_000,
            bias_feature: false,
            ..Default::default()
        };
        let model = train_linear(&data, 2, &cfg).unwrap();
        for k in 0..2 {
            let want = grid_minimiser(LossKind::Hinge, k, 2.0);
            let got = model.weights()[(k, 0)];
            assert!((got - want).abs() < 1e-3, "class {k}: {got} vs {want}");
        }
    }

    #[test]
    fn logistic_matches_grid_search() {
        let data: Vec<Sample> = GRID_X.iter().zip(GRID_Y).map(|(&x, y)| s(&[x], y)).collect();
        let cfg = SvmConfig {
            loss: LossKind::Logistic,
            c: 2.0,
            tol: 1e-12,
            bias_feature: false,
            ..Default::default()
        };
        let model = train_linear(&data, 2, &cfg).unwrap();
        for k in 0..2 {
            let want = grid_minimiser(LossKind::Logistic, k, 2.0);
            assert!((model.weights()[(k, 0)] - want).abs() < 1e-3);
        }
    }

    #[test]
    fn solver_objective_never_increases() {
        for loss in [LossKind::Hinge, LossKind::Logistic] {
            let data = random_data(3, 120, 5, 3);
            let cfg = SvmConfig { loss, c: 64.0, tol: 1e-8, ..Default::default() };
            let model = train_linear(&data, 3, &cfg).unwrap();
            for trace in &model.report().objective_trace {
                assert!(!trace.is_empty());
                for w in trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{loss:?}: {} -> {}", w[0], w[1]);
                }
            }
        }
    }

    #[test]
    fn norms_grow_with_c() {
        for seed in 0..4 {
            let data = random_data(seed, 80, 4, 2);
            let mut prev: Option<Vec<f64>> = None;
            for log2c in -6..=8 {
                let cfg = SvmConfig { c: 2f64.powi(log2c), tol: 1e-9, max_iter: 20_000, ..Default::default() };
                let norms = weight_norm(&train_linear(&data, 2, &cfg).unwrap()).per_class;
                if let Some(p) = &prev {
                    for (a, b) in p.iter().zip(&norms) {
                        assert!(*a <= b + 1e-6, "seed {seed} log2c {log2c}: {a} > {b}");
                    }
                }
                prev = Some(norms);
            }
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let data = random_data(9, 60, 4, 3);
        let cfg = SvmConfig { c: 8.0, seed: 17, ..Default::default() };
        let a = train_linear(&data, 3, &cfg).unwrap();
        let b = train_linear(&data, 3, &cfg).unwrap();
        assert_eq!(a.weights().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.weights().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn training_errors() {
        let data = vec![s(&[1.0], 0), s(&[2.0], 0)];
        assert!(matches!(train_linear(&data, 2, &SvmConfig::default()), Err(Error::Training(_))));
        let data = vec![s(&[f64::NAN], 0), s(&[2.0], 1)];
        assert!(matches!(train_linear(&data, 2, &SvmConfig::default()), Err(Error::Validation(_))));
        let empty: Vec<Sample> = vec![];
        assert!(train_linear(&empty, 2, &SvmConfig::default()).is_err());
        let data = vec![s(&[1.0], 0), s(&[2.0], 1)];
        assert!(train_linear(&data, 2, &SvmConfig { c: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn evaluate_matches_naive_loop() {
        let data = random_data(4, 50, 3, 3);
        let model = train_linear(&data, 3, &SvmConfig { c: 4.0, ..Default::default() }).unwrap();
        let w = model.weights();
        let mut ramp_total = 0.0;
        for x in &data {
            let mut sc = [0.0; 3];
            for (k, score) in sc.iter_mut().enumerate() {
                *score = w[(k, 3)];
                for j in 0..3 {
                    *score += w[(k, j)] * x.features[j];
                }
            }
            let mut other = f64::NEG_INFINITY;
            for (k, v) in sc.iter().enumerate() {
                if k != x.label && *v > other {
                    other = *v;
                }
            }
            let margin = sc[x.label] - other;
            ramp_total += if margin >= 1.0 { 0.0 } else if margin <= 0.0 { 1.0 } else { 1.0 - margin };
        }
        let got = evaluate(&model, &data).unwrap().ramp_risk;
        assert!((got - ramp_total / 50.0).abs() < 1e-12);
        assert!(evaluate(&model, &[s(&[1.0], 0)]).is_err());
    }

    #[test]
    fn weight_norm_examples() {
        let zero = LinearModel::from_weights(Matrix::zeros(2, 3), true, 1.0).unwrap();
        assert_eq!(weight_norm(&zero).per_class, vec![0.0, 0.0]);
        let w = Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        let n = weight_norm(&LinearModel::from_weights(w, false, 1.0).unwrap());
        assert_eq!(n.per_class, vec![5.0, 1.0]);
        assert_eq!(n.max_norm, 5.0);

        let mut rng = rng_from_seed(2);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let model = LinearModel::from_weights(Matrix::from_rows(&rows).unwrap(), true, 1.0).unwrap();
        for (r, got) in rows.iter().zip(weight_norm(&model).per_class) {
            let mut sq = 0.0;
            for v in r {
                sq += v * v;
            }
            assert!((sq.sqrt() - got).abs() < 1e-12);
        }
    }

    #[test]
    fn text_dump_round_trips() {
        let data = random_data(5, 30, 2, 2);
        let model = train_linear(&data, 2, &SvmConfig { c: 3.0, ..Default::default() }).unwrap();
        let text = model.to_text();
        assert!(text.starts_with("2 3\n"));
        let back = LinearModel::from_text(&text, true).unwrap();
        assert_eq!(back.weights(), model.weights());
    }
}
