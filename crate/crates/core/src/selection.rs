//! Model selection over a grid of `C` values and held-out-domain evaluation.
//!
//! Two validation criteria are provided. Domain-wise CV leaves out one whole
//! source domain per fold and so scores models on unseen domains;
//! instance-wise CV validates on held-out samples of the same source domains
//! it trains on, which overestimates accuracy on new domains.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{split_environment, Environment, Sample};
use crate::error::{Error, Result};
use crate::linear::{evaluate, train_linear, Metrics, SvmConfig};
use crate::rng::{derive_seed, rng_from_seed};

/// Grid of `log₂ C` values, sorted and unique.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CGrid {
    log2_values: Vec<i32>,
}

impl Default for CGrid {
    fn default() -> Self {
        CGrid {
            log2_values: (-10..=10).collect(),
        }
    }
}

impl CGrid {
    pub fn new(log2_values: Vec<i32>) -> Result<Self> {
        if log2_values.is_empty() {
            return Err(Error::Validation("C grid is empty".into()));
        }
        if log2_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("C grid must be sorted and unique".into()));
        }
        Ok(CGrid { log2_values })
    }

    pub fn range(lo: i32, hi: i32) -> Result<Self> {
        CGrid::new((lo..=hi).collect())
    }

    pub fn log2_values(&self) -> &[i32] {
        &self.log2_values
    }

    pub fn len(&self) -> usize {
        self.log2_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log2_values.is_empty()
    }

    pub fn c(&self, i: usize) -> f64 {
        2f64.powi(self.log2_values[i])
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.c(i)).collect()
    }
}

/// Index of the largest score; ties go to the smallest `C` (lowest index).
pub fn argmax_smallest_c(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    DomainWise,
    InstanceWise,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::DomainWise => "domain_wise",
            Criterion::InstanceWise => "instance_wise",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub criterion: Criterion,
    pub chosen_c: f64,
    pub chosen_log2: i32,
    /// Natural logarithm of the chosen `C`.
    pub ln_c_selected: f64,
    /// `(C, mean validation accuracy)` in grid order.
    pub per_c_scores: Vec<(f64, f64)>,
    /// Accuracy on the target domain after refitting, when evaluated.
    pub final_heldout_accuracy: Option<f64>,
}

/// Settings shared by the evaluation protocols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    #[serde(default = "default_train_frac")]
    pub train_frac: f64,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    /// Refit on all source training data at the chosen `C`; otherwise the CV
    /// fold models at that `C` are averaged on the target.
    #[serde(default = "default_refit")]
    pub refit: bool,
}

fn default_train_frac() -> f64 {
    0.8
}
fn default_k_folds() -> usize {
    5
}
fn default_refit() -> bool {
    true
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_frac: default_train_frac(),
            k_folds: default_k_folds(),
            refit: default_refit(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub domain: usize,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub train: Vec<SampleRef>,
    pub validation: Vec<SampleRef>,
}

fn resolve<'a>(env: &'a Environment, refs: &[SampleRef]) -> Vec<&'a Sample> {
    refs.iter()
        .map(|r| &env.domains()[r.domain].samples[r.index])
        .collect()
}

fn all_refs(env: &Environment, domain: usize) -> impl Iterator<Item = SampleRef> + '_ {
    (0..env.domains()[domain].len()).map(move |index| SampleRef { domain, index })
}

/// One fold per source domain: validate on it, train on all the others.
pub fn domain_wise_folds(env: &Environment) -> Result<Vec<Fold>> {
    if env.n_domains() < 2 {
        return Err(Error::Selection(format!(
            "domain-wise CV needs at least 2 source domains, got {}",
            env.n_domains()
        )));
    }
    Ok((0..env.n_domains())
        .map(|v| Fold {
            train: (0..env.n_domains())
                .filter(|&j| j != v)
                .flat_map(|j| all_refs(env, j))
                .collect(),
            validation: all_refs(env, v).collect(),
        })
        .collect())
}

/// `k` folds, stratified by label within every domain, so each validation
/// fold holds samples of all source domains.
pub fn instance_wise_folds(env: &Environment, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Selection(format!("k_folds must be at least 2, got {k}")));
    }
    let mut assignment: Vec<Vec<usize>> = env.domains().iter().map(|d| vec![0; d.len()]).collect();
    for (j, dom) in env.domains().iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &format!("folds/{j}")));
        // continue the round-robin across labels so fold sizes stay balanced
        let mut next = 0;
        for idx in dom.indices_by_label().values() {
            let mut idx = idx.clone();
            idx.shuffle(&mut rng);
            for i in idx {
                assignment[j][i] = next % k;
                next += 1;
            }
        }
    }
    let folds: Vec<Fold> = (0..k)
        .map(|f| {
            let mut fold = Fold { train: vec![], validation: vec![] };
            for (j, dom_assign) in assignment.iter().enumerate() {
                for (index, &a) in dom_assign.iter().enumerate() {
                    let r = SampleRef { domain: j, index };
                    if a == f {
                        fold.validation.push(r);
                    } else {
                        fold.train.push(r);
                    }
                }
            }
            fold
        })
        .collect();
    for (f, fold) in folds.iter().enumerate() {
        if fold.validation.is_empty() {
            return Err(Error::Selection(format!("fold {f} has no validation samples")));
        }
    }
    Ok(folds)
}

fn check_fold_classes(env: &Environment, folds: &[Fold]) -> Result<()> {
    for (f, fold) in folds.iter().enumerate() {
        let mut present = vec![false; env.num_classes()];
        for s in resolve(env, &fold.train) {
            present[s.label] = true;
        }
        if let Some(k) = present.iter().position(|p| !p) {
            return Err(Error::Selection(format!("fold {f}: class {k} missing from training data")));
        }
    }
    Ok(())
}

/// Accuracy of every `(C, fold)` cell, indexed `[c][fold]`.
fn cv_accuracies(env: &Environment, folds: &[Fold], grid: &CGrid, config: &SvmConfig) -> Result<Vec<Vec<f64>>> {
    check_fold_classes(env, folds)?;
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|c| (0..folds.len()).map(move |f| (c, f)))
        .collect();
    let acc: Vec<f64> = cells
        .par_iter()
        .map(|&(c, f)| {
            let fold = &folds[f];
            let model = train_linear(&resolve(env, &fold.train), env.num_classes(), &config.with_c(grid.c(c)))?;
            Ok(evaluate(&model, &resolve(env, &fold.validation))?.accuracy)
        })
        .collect::<Result<_>>()?;
    Ok(acc.chunks(folds.len()).map(<[f64]>::to_vec).collect())
}

fn select(criterion: Criterion, grid: &CGrid, per_fold: &[Vec<f64>]) -> SelectionResult {
    let scores: Vec<f64> = per_fold
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .collect();
    let best = argmax_smallest_c(&scores);
    SelectionResult {
        criterion,
        chosen_c: grid.c(best),
        chosen_log2: grid.log2_values()[best],
        ln_c_selected: grid.c(best).ln(),
        per_c_scores: grid.values().into_iter().zip(scores).collect(),
        final_heldout_accuracy: None,
    }
}

fn solver_config(config: &SvmConfig, seed: u64) -> SvmConfig {
    SvmConfig {
        seed: derive_seed(seed, "solver"),
        ..config.clone()
    }
}

/// Leave-one-source-domain-out cross-validation.
pub fn domain_wise_cv(env_train: &Environment, grid: &CGrid, config: &SvmConfig, seed: u64) -> Result<SelectionResult> {
    let folds = domain_wise_folds(env_train)?;
    let acc = cv_accuracies(env_train, &folds, grid, &solver_config(config, seed))?;
    Ok(select(Criterion::DomainWise, grid, &acc))
}

/// k-fold cross-validation over samples of the source domains.
pub fn instance_wise_cv(
    env_train: &Environment,
    grid: &CGrid,
    k_folds: usize,
    config: &SvmConfig,
    seed: u64,
) -> Result<SelectionResult> {
    let folds = instance_wise_folds(env_train, k_folds, seed)?;
    let acc = cv_accuracies(env_train, &folds, grid, &solver_config(config, seed))?;
    Ok(select(Criterion::InstanceWise, grid, &acc))
}

/// Trains on the train splits of all domains except `heldout`, evaluates on
/// the test split of `heldout`.
fn heldout_metrics(train: &Environment, test: &Environment, heldout: usize, c: f64, config: &SvmConfig) -> Result<Metrics> {
    let sources: Vec<&Sample> = train
        .domains()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != heldout)
        .flat_map(|(_, d)| d.samples.iter())
        .collect();
    let model = train_linear(&sources, train.num_classes(), &config.with_c(c))?;
    evaluate(&model, &test.domains()[heldout].samples)
}

/// Splits `env` with `seed`, trains on the other domains' train splits at `C`
/// and reports metrics on the held-out domain's test split.
pub fn evaluate_heldout(
    env: &Environment,
    heldout_domain_id: &str,
    c: f64,
    config: &SvmConfig,
    train_frac: f64,
    seed: u64,
) -> Result<Metrics> {
    let heldout = env
        .domain_index(heldout_domain_id)
        .ok_or_else(|| Error::Validation(format!("unknown domain id {heldout_domain_id:?}")))?;
    if env.n_domains() < 2 {
        return Err(Error::Selection("held-out evaluation needs at least 2 domains".into()));
    }
    let (train, test) = split_environment(env, train_frac, seed)?;
    heldout_metrics(&train, &test, heldout, c, &solver_config(config, seed))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedCurves {
    pub seed: u64,
    pub iid: Vec<f64>,
    pub dg: Vec<f64>,
    pub worst: Vec<f64>,
    pub argmax_iid: i32,
    pub argmax_dg: i32,
    pub argmax_worst: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCurves {
    pub log2_c: Vec<i32>,
    pub iid_mean: Vec<f64>,
    pub iid_std: Vec<f64>,
    pub dg_mean: Vec<f64>,
    pub dg_std: Vec<f64>,
    pub worst_mean: Vec<f64>,
    pub worst_std: Vec<f64>,
    pub argmax_iid: i32,
    pub argmax_dg: i32,
    pub argmax_worst: i32,
    pub per_seed: Vec<SeedCurves>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Accuracy curves over the grid: seen-domain (train on all domains' train
/// splits, test on all test splits), held-out-domain mean, and held-out-domain
/// minimum. Mean and sample standard deviation are taken over seeds.
pub fn c_sweep(env: &Environment, grid: &CGrid, seeds: &[u64], config: &SvmConfig, train_frac: f64) -> Result<SweepCurves> {
    if env.n_domains() < 2 {
        return Err(Error::Selection("C sweep needs at least 2 domains".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Validation("no seeds".into()));
    }
    let n = env.n_domains();
    let splits: Vec<(Environment, Environment)> = seeds
        .iter()
        .map(|&s| split_environment(env, train_frac, s))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..grid.len()).map(move |c| (s, c)))
        .collect();
    // (iid, dg mean, dg min) per cell
    let results: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|&(s, c)| {
            let (train, test) = &splits[s];
            let cfg = solver_config(config, seeds[s]);
            let model = train_linear(&train.pooled(), env.num_classes(), &cfg.with_c(grid.c(c)))?;
            let iid = evaluate(&model, &test.pooled())?.accuracy;
            let held: Vec<f64> = (0..n)
                .map(|h| heldout_metrics(train, test, h, grid.c(c), &cfg).map(|m| m.accuracy))
                .collect::<Result<_>>()?;
            let dg = held.iter().sum::<f64>() / n as f64;
            let worst = held.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((iid, dg, worst))
        })
        .collect::<Result<_>>()?;

    let per_seed: Vec<SeedCurves> = seeds
        .iter()
        .enumerate()
        .map(|(s, &seed)| {
            let row = &results[s * grid.len()..(s + 1) * grid.len()];
            let iid: Vec<f64> = row.iter().map(|r| r.0).collect();
            let dg: Vec<f64> = row.iter().map(|r| r.1).collect();
            let worst: Vec<f64> = row.iter().map(|r| r.2).collect();
            SeedCurves {
                seed,
                argmax_iid: grid.log2_values()[argmax_smallest_c(&iid)],
                argmax_dg: grid.log2_values()[argmax_smallest_c(&dg)],
                argmax_worst: grid.log2_values()[argmax_smallest_c(&worst)],
                iid,
                dg,
                worst,
            }
        })
        .collect();

    let column = |f: &dyn Fn(&SeedCurves) -> &Vec<f64>, c: usize| -> (f64, f64) {
        mean_std(&per_seed.iter().map(|s| f(s)[c]).collect::<Vec<_>>())
    };
    let (mut iid_mean, mut iid_std, mut dg_mean, mut dg_std, mut worst_mean, mut worst_std) =
        (vec![], vec![], vec![], vec![], vec![], vec![]);
    for c in 0..grid.len() {
        let (m, s) = column(&|x| &x.iid, c);
        iid_mean.push(m);
        iid_std.push(s);
        let (m, s) = column(&|x| &x.dg, c);
        dg_mean.push(m);
        dg_std.push(s);
        let (m, s) = column(&|x| &x.worst, c);
        worst_mean.push(m);
        worst_std.push(s);
    }
    let lv = grid.log2_values();
    Ok(SweepCurves {
        log2_c: lv.to_vec(),
        argmax_iid: lv[argmax_smallest_c(&iid_mean)],
        argmax_dg: lv[argmax_smallest_c(&dg_mean)],
        argmax_worst: lv[argmax_smallest_c(&worst_mean)],
        iid_mean,
        iid_std,
        dg_mean,
        dg_std,
        worst_mean,
        worst_std,
        per_seed,
    })
}

/// One (seed, target domain, criterion) outcome of the selection comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub seed: u64,
    pub heldout: String,
    pub criterion: Criterion,
    pub chosen_log2: i32,
    pub chosen_c: f64,
    pub ln_c: f64,
    pub accuracy: f64,
    pub ramp_risk: f64,
}

/// For every seed and every target domain: select `C` on the remaining source
/// domains' train splits with both criteria, then measure accuracy on the
/// target's test split.
pub fn select_compare(
    env: &Environment,
    grid: &CGrid,
    config: &SvmConfig,
    protocol: &Protocol,
    seeds: &[u64],
) -> Result<Vec<CompareRow>> {
    if env.n_domains() < 3 {
        return Err(Error::Selection(format!(
            "selection comparison needs at least 3 domains (2 sources per target), got {}",
            env.n_domains()
        )));
    }
    let jobs: Vec<(u64, usize)> = seeds
        .iter()
        .flat_map(|&s| (0..env.n_domains()).map(move |t| (s, t)))
        .collect();
    let rows: Vec<Vec<CompareRow>> = jobs
        .par_iter()
        .map(|&(seed, target)| {
            let (train, test) = split_environment(env, protocol.train_frac, seed)?;
            let sources = train.without(target)?;
            let target_test = &test.domains()[target];
            let cfg = solver_config(config, seed);
            let mut out = Vec::with_capacity(2);
            for criterion in [Criterion::DomainWise, Criterion::InstanceWise] {
                let folds = match criterion {
                    Criterion::DomainWise => domain_wise_folds(&sources)?,
                    Criterion::InstanceWise => instance_wise_folds(&sources, protocol.k_folds, seed)?,
                };
                let acc = cv_accuracies(&sources, &folds, grid, &cfg)?;
                let mut sel = select(criterion, grid, &acc);
                let metrics = if protocol.refit {
                    let model = train_linear(&sources.pooled(), env.num_classes(), &cfg.with_c(sel.chosen_c))?;
                    evaluate(&model, &target_test.samples)?
                } else {
                    let per_fold: Vec<Metrics> = folds
                        .iter()
                        .map(|f| {
                            let m = train_linear(&resolve(&sources, &f.train), env.num_classes(), &cfg.with_c(sel.chosen_c))?;
                            evaluate(&m, &target_test.samples)
                        })
                        .collect::<Result<_>>()?;
                    let k = per_fold.len() as f64;
                    Metrics {
                        accuracy: per_fold.iter().map(|m| m.accuracy).sum::<f64>() / k,
                        ramp_risk: per_fold.iter().map(|m| m.ramp_risk).sum::<f64>() / k,
                        mean_margin: per_fold.iter().map(|m| m.mean_margin).sum::<f64>() / k,
                    }
                };
                sel.final_heldout_accuracy = Some(metrics.accuracy);
                out.push(CompareRow {
                    seed,
                    heldout: target_test.id.clone(),
                    criterion,
                    chosen_log2: sel.chosen_log2,
                    chosen_c: sel.chosen_c,
                    ln_c: sel.ln_c_selected,
                    accuracy: metrics.accuracy,
                    ramp_risk: metrics.ramp_risk,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{synth_environment, SynthSpec};

    fn env(shift: f64, seed: u64) -> Environment {
        synth_environment(&SynthSpec {
            covariate_shift_scale: shift,
            label_noise: 0.05,
            seed,
            ..SynthSpec::new(4, 60, 5, 2)
        })
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert_eq!(CGrid::default().len(), 21);
        assert_eq!(CGrid::default().c(0), 2f64.powi(-10));
        assert!(CGrid::new(vec![]).is_err());
        assert!(CGrid::new(vec![1, 1]).is_err());
        assert!(CGrid::new(vec![2, 1]).is_err());
    }

    #[test]
    fn ties_go_to_smallest_c() {
        assert_eq!(argmax_smallest_c(&[0.5, 0.7, 0.7, 0.6]), 1);
        assert_eq!(argmax_smallest_c(&[0.9, 0.9, 0.9]), 0);
        let grid = CGrid::new(vec![-1, 0, 1]).unwrap();
        let sel = select(Criterion::DomainWise, &grid, &[vec![0.8, 0.6], vec![0.7, 0.7], vec![0.6, 0.8]]);
        assert_eq!(sel.chosen_log2, -1);
    }

    #[test]
    fn single_value_grid() {
        let e = env(1.0, 1);
        let grid = CGrid::new(vec![3]).unwrap();
        let cfg = SvmConfig::default();
        let dw = domain_wise_cv(&e, &grid, &cfg, 0).unwrap();
        let iw = instance_wise_cv(&e, &grid, 5, &cfg, 0).unwrap();
        assert_eq!(dw.chosen_c, 8.0);
        assert_eq!(iw.chosen_c, dw.chosen_c);
        assert!((dw.ln_c_selected - 8f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn domain_wise_folds_never_train_on_validation_domain() {
        let e = env(1.0, 2);
        for fold in domain_wise_folds(&e).unwrap() {
            let val_domain = fold.validation[0].domain;
            assert!(fold.validation.iter().all(|r| r.domain == val_domain));
            assert!(fold.train.iter().all(|r| r.domain != val_domain));
            assert_eq!(fold.train.len() + fold.validation.len(), e.total_samples());
        }
        let one = e.subset(&[0]).unwrap();
        assert!(matches!(domain_wise_cv(&one, &CGrid::default(), &SvmConfig::default(), 0), Err(Error::Selection(_))));
    }

    #[test]
    fn instance_folds_partition_every_domain() {
        let e = env(1.0, 3);
        let folds = instance_wise_folds(&e, 5, 9).unwrap();
        let mut seen: Vec<SampleRef> = folds.iter().flat_map(|f| f.validation.clone()).collect();
        seen.sort();
        let mut all: Vec<SampleRef> = (0..e.n_domains()).flat_map(|j| all_refs(&e, j)).collect();
        all.sort();
        assert_eq!(seen, all);
        for f in &folds {
            // validation folds draw from every source domain
            for j in 0..e.n_domains() {
                assert!(f.validation.iter().any(|r| r.domain == j));
            }
            let mut t = f.train.clone();
            t.retain(|r| f.validation.contains(r));
            assert!(t.is_empty());
        }
        assert!(instance_wise_folds(&e, 1, 0).is_err());
    }

    #[test]
    fn heldout_matches_manual_pipeline() {
        let e = env(2.0, 4);
        let cfg = SvmConfig::default();
        let m = evaluate_heldout(&e, "d2", 4.0, &cfg, 0.8, 11).unwrap();
        let again = evaluate_heldout(&e, "d2", 4.0, &cfg, 0.8, 11).unwrap();
        assert_eq!(m, again);

        let (train, test) = split_environment(&e, 0.8, 11).unwrap();
        let mut pooled: Vec<Sample> = Vec::new();
        for id in ["d0", "d1", "d3"] {
            pooled.extend(train.domain(id).unwrap().samples.iter().cloned());
        }
        let model = train_linear(&pooled, 2, &SvmConfig { c: 4.0, seed: derive_seed(11, "solver"), ..cfg }).unwrap();
        let manual = evaluate(&model, &test.domain("d2").unwrap().samples).unwrap();
        assert_eq!(m, manual);
        assert!(evaluate_heldout(&e, "nope", 1.0, &SvmConfig::default(), 0.8, 0).is_err());
    }

    #[test]
    fn sweep_shapes_and_consistency() {
        let e = env(2.0, 5);
        let grid = CGrid::new(vec![-2, 0, 2]).unwrap();
        let cfg = SvmConfig::default();
        let curves = c_sweep(&e, &grid, &[1, 2], &cfg, 0.8).unwrap();
        assert_eq!(curves.iid_mean.len(), 3);
        assert_eq!(curves.per_seed.len(), 2);
        for s in &curves.per_seed {
            for c in 0..3 {
                assert!(s.worst[c] <= s.dg[c] + 1e-15);
                let held: Vec<f64> = e
                    .domains()
                    .iter()
                    .map(|d| evaluate_heldout(&e, &d.id, grid.c(c), &cfg, 0.8, s.seed).unwrap().accuracy)
                    .collect();
                assert!((s.dg[c] - held.iter().sum::<f64>() / 4.0).abs() < 1e-15);
            }
        }
        let one = c_sweep(&e, &CGrid::new(vec![1]).unwrap(), &[3], &cfg, 0.8).unwrap();
        assert_eq!(one.dg_mean.len(), 1);
        assert_eq!(one.dg_std, vec![0.0]);
        assert_eq!(one.argmax_dg, 1);
    }

    #[test]
    fn compare_rows_cover_targets_and_criteria() {
        let e = env(2.0, 6);
        let grid = CGrid::new(vec![-3, 0, 3]).unwrap();
        let rows = select_compare(&e, &grid, &SvmConfig::default(), &Protocol::default(), &[1]).unwrap();
        assert_eq!(rows.len(), 8);
        let no_refit = Protocol { refit: false, ..Protocol::default() };
        let rows2 = select_compare(&e, &grid, &SvmConfig::default(), &no_refit, &[1]).unwrap();
        for (a, b) in rows.iter().zip(&rows2) {
            assert_eq!(a.chosen_log2, b.chosen_log2);
        }
        assert!(select_compare(&e.subset(&[0, 1]).unwrap(), &grid, &SvmConfig::default(), &Protocol::default(), &[1]).is_err());
    }
}
