//! Experiment configuration, task orchestration and CSV/manifest output.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! [run]
//! task = "c_sweep"        # c_sweep | select_compare | mlp_checkpoint_study | bound_report
//! seed = 0                # root seed; every component derives its own
//! n_seeds = 5             # repetitions (splits, solver orders, inits)
//! out_dir = "out"         # relative to the config file; falls back to $DG_SELECT_OUT
//!
//! [data.synth]            # exactly one of data.synth, data.csv, data.mnist
//! n_domains = 4
//! m_per_domain = 500
//! d = 20
//! k = 2
//! shift_scale = 3.0
//! label_noise = 0.1
//!
//! [grid]
//! min = -10
//! max = 10                # or: values = [-4, 0, 4]
//!
//! [solver]
//! loss = "hinge"
//! tol = 1e-4
//! max_iter = 1000
//!
//! [protocol]
//! train_frac = 0.8
//! k_folds = 5
//! refit = true
//! ```
//!
//! `data.csv` takes `path = "features.csv"`; `data.mnist` takes `images`,
//! `labels`, `angles` and `per_domain`. The `[mlp]` table configures
//! `mlp_checkpoint_study` and `[bounds]` configures `bound_report`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{excess_risk_bound, theorem1_bound, worst_case_bound, BoundInputs};
use crate::complexity::{domain_level_rad, linear_rad_closed_form, neyshabur_complexity};
use crate::environment::{
    load_feature_csv, load_idx, read_table, rotate_domain, split_environment, synth_environment, Domain, Environment, SynthSpec,
};
use crate::error::{Error, Result};
use crate::fmt::g17;
use crate::linear::{evaluate, train_linear, weight_norm, LossKind, SvmConfig};
use crate::mlp::{mean_cross_entropy, train_mlp, PenaltyPlugin, TrainSchedule};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selection::{c_sweep, select_compare, CGrid, CompareRow, Criterion, Protocol};

/// Environment variable naming the output directory when neither the config
/// nor the command line gives one.
pub const OUT_DIR_ENV: &str = "DG_SELECT_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CSweep,
    SelectCompare,
    MlpCheckpointStudy,
    BoundReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthData {
    pub n_domains: usize,
    pub m_per_domain: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub shift_scale: f64,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default = "default_separation")]
    pub class_separation: f64,
}

fn default_separation() -> f64 {
    2.0
}

impl SynthData {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            n_domains: self.n_domains,
            m_per_domain: self.m_per_domain,
            d: self.d,
            num_classes: self.k,
            covariate_shift_scale: self.shift_scale,
            label_noise: self.label_noise,
            class_separation: self.class_separation,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub path: PathBuf,
}

/// Rotated copies of an IDX image set, one domain per angle. Each domain
/// receives its own `per_domain` images, drawn without replacement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistData {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default = "default_angles")]
    pub angles: Vec<f64>,
    pub per_domain: usize,
}

fn default_angles() -> Vec<f64> {
    vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0]
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synth(SynthData),
    Csv(CsvData),
    Mnist(MnistData),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_loss")]
    pub loss: LossKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_true")]
    pub bias_feature: bool,
}

fn default_loss() -> LossKind {
    LossKind::Hinge
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

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            loss: default_loss(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            bias_feature: true,
        }
    }
}

impl SolverSection {
    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            loss: self.loss,
            tol: self.tol,
            max_iter: self.max_iter,
            bias_feature: self.bias_feature,
            ..SvmConfig::default()
        }
    }
}

/// Settings of `mlp_checkpoint_study`: train on every domain but `heldout`,
/// track complexity and held-out accuracy over checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSection {
    #[serde(default)]
    pub heldout: Option<String>,
    #[serde(default = "default_erm")]
    pub penalty: PenaltyPlugin,
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
}

fn default_erm() -> PenaltyPlugin {
    PenaltyPlugin::Erm
}
fn default_steps() -> usize {
    TrainSchedule::default().steps
}
fn default_every() -> usize {
    TrainSchedule::default().checkpoint_every
}
fn default_lr() -> f64 {
    TrainSchedule::default().learning_rate
}
fn default_batch() -> usize {
    TrainSchedule::default().batch_size
}
fn default_hidden() -> usize {
    TrainSchedule::default().hidden
}

impl Default for MlpSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        MlpSection {
            heldout: None,
            penalty: PenaltyPlugin::Erm,
            steps: s.steps,
            checkpoint_every: s.checkpoint_every,
            learning_rate: s.learning_rate,
            batch_size: s.batch_size,
            hidden: s.hidden,
        }
    }
}

impl MlpSection {
    pub fn schedule(&self, seed: u64) -> TrainSchedule {
        TrainSchedule {
            steps: self.steps,
            checkpoint_every: self.checkpoint_every,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            hidden: self.hidden,
            seed,
        }
    }
}

/// Settings of `bound_report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    #[serde(default)]
    pub heldout: Option<String>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
}

fn default_delta() -> f64 {
    0.025
}
fn default_kappa() -> f64 {
    0.1
}
fn default_draws() -> usize {
    1000
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            heldout: None,
            delta: default_delta(),
            kappa: default_kappa(),
            n_draws: default_draws(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub n_seeds: usize,
    pub out_dir: Option<PathBuf>,
    pub data: DataSource,
    pub grid: CGrid,
    pub solver: SolverSection,
    pub protocol: Protocol,
    pub mlp: MlpSection,
    pub bounds: BoundSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    task: Task,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_n_seeds")]
    n_seeds: usize,
    #[serde(default)]
    out_dir: Option<PathBuf>,
}

fn default_n_seeds() -> usize {
    5
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawData {
    synth: Option<SynthData>,
    csv: Option<CsvData>,
    mnist: Option<MnistData>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    min: Option<i32>,
    max: Option<i32>,
    values: Option<Vec<i32>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: RawRun,
    data: RawData,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    protocol: Protocol,
    #[serde(default)]
    mlp: MlpSection,
    #[serde(default)]
    bounds: BoundSection,
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses a config. Relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        let data = match (raw.data.synth, raw.data.csv, raw.data.mnist) {
            (Some(s), None, None) => DataSource::Synth(s),
            (None, Some(mut c), None) => {
                c.path = base_dir.join(c.path);
                DataSource::Csv(c)
            }
            (None, None, Some(mut m)) => {
                m.images = base_dir.join(m.images);
                m.labels = base_dir.join(m.labels);
                DataSource::Mnist(m)
            }
            _ => return Err(config_err("data", "exactly one of data.synth, data.csv, data.mnist is required")),
        };
        let grid = match (raw.grid.values, raw.grid.min, raw.grid.max) {
            (Some(v), None, None) => CGrid::new(v).map_err(|e| config_err("grid.values", e))?,
            (None, lo, hi) => {
                let (lo, hi) = (lo.unwrap_or(-10), hi.unwrap_or(10));
                CGrid::range(lo, hi).map_err(|_| config_err("grid", format!("empty range {lo}..{hi}")))?
            }
            _ => return Err(config_err("grid", "give either values or min/max, not both")),
        };
        let config = ExperimentConfig {
            task: raw.run.task,
            seed: raw.run.seed,
            n_seeds: raw.run.n_seeds,
            out_dir: raw.run.out_dir.map(|p| base_dir.join(p)),
            data,
            grid,
            solver: raw.solver,
            protocol: raw.protocol,
            mlp: raw.mlp,
            bounds: raw.bounds,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(config_err("run.n_seeds", "must be at least 1"));
        }
        if let DataSource::Synth(s) = &self.data {
            s.spec(0).validate().map_err(|e| config_err("data.synth", e))?;
        }
        if let DataSource::Mnist(m) = &self.data {
            if m.angles.is_empty() || m.per_domain == 0 {
                return Err(config_err("data.mnist", "angles and per_domain must be nonempty"));
            }
        }
        self.solver.svm_config().validate().map_err(|e| config_err("solver", e))?;
        let p = &self.protocol;
        if !(p.train_frac > 0.0 && p.train_frac < 1.0) {
            return Err(config_err("protocol.train_frac", "must lie in (0, 1)"));
        }
        if p.k_folds < 2 {
            return Err(config_err("protocol.k_folds", "must be at least 2"));
        }
        self.mlp.schedule(0).validate().map_err(|e| config_err("mlp", e))?;
        self.mlp.penalty.validate().map_err(|e| config_err("mlp.penalty", e))?;
        let b = &self.bounds;
        if !(b.delta > 0.0 && b.delta < 0.5) {
            return Err(config_err("bounds.delta", "must lie in (0, 0.5)"));
        }
        if !(b.kappa > 0.0 && b.kappa < 1.0) {
            return Err(config_err("bounds.kappa", "must lie in (0, 1)"));
        }
        if b.n_draws == 0 {
            return Err(config_err("bounds.n_draws", "must be at least 1"));
        }
        Ok(())
    }

    /// Per-repetition seeds, derived from the root seed.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds)
            .map(|i| derive_seed(self.seed, &format!("repeat/{i}")))
            .collect()
    }

    pub fn load_environment(&self) -> Result<Environment> {
        match &self.data {
            DataSource::Synth(s) => synth_environment(&s.spec(derive_seed(self.seed, "synth"))),
            DataSource::Csv(c) => load_feature_csv(&c.path).map_err(|e| e.context(format!("loading {}", c.path.display()))),
            DataSource::Mnist(m) => rotated_mnist(m, derive_seed(self.seed, "mnist")),
        }
    }
}

/// Builds one rotated domain per angle from disjoint random subsets of the
/// images.
pub fn rotated_mnist(spec: &MnistData, seed: u64) -> Result<Environment> {
    let base = load_idx(&spec.images, &spec.labels)?;
    let need = spec.per_domain * spec.angles.len();
    if need > base.len() {
        return Err(Error::Validation(format!(
            "{} angles × {} images need {need} images, file has {}",
            spec.angles.len(),
            spec.per_domain,
            base.len()
        )));
    }
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let domains = spec
        .angles
        .iter()
        .enumerate()
        .map(|(a, &angle)| {
            let mut idx = order[a * spec.per_domain..(a + 1) * spec.per_domain].to_vec();
            idx.sort_unstable();
            let chunk = Domain::new(format!("rot{angle}"), idx.iter().map(|&i| base.samples[i].clone()).collect())?;
            rotate_domain(&chunk, angle)
        })
        .collect::<Result<Vec<_>>>()?;
    Environment::from_domains(domains)
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Int(i64),
    UInt(u64),
    Real(f64),
    Bool(bool),
    Text(String),
}

impl Field {
    fn render(&self) -> Result<String> {
        Ok(match self {
            Field::Int(v) => v.to_string(),
            Field::UInt(v) => v.to_string(),
            Field::Real(v) => g17(*v),
            Field::Bool(v) => v.to_string(),
            Field::Text(s) => {
                if s.contains([',', '"', '\n', '\r']) {
                    return Err(Error::Format(format!("text field {s:?} contains a CSV delimiter")));
                }
                s.clone()
            }
        })
    }
}

/// A row type with a fixed column order.
pub trait Record {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<Field>;
}

pub fn csv_string<R: Record>(records: &[R]) -> Result<String> {
    let mut out = R::header().join(",");
    out.push('\n');
    for r in records {
        let fields = r.fields();
        debug_assert_eq!(fields.len(), R::header().len());
        let cells = fields.iter().map(Field::render).collect::<Result<Vec<_>>>()?;
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Writes header plus rows: `.` decimals, 17 significant digits, LF endings.
pub fn emit_csv<R: Record>(records: &[R], path: impl AsRef<Path>) -> Result<()> {
    let text = csv_string(records)?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// A CSV file read back as strings.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self> {
        let (header, records) = read_table(text)?;
        let mut rows = Vec::with_capacity(records.len());
        for (line, r) in records {
            if r.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", header.len(), r.len()),
                });
            }
            rows.push(r.iter().map(str::to_string).collect());
        }
        Ok(CsvTable { header, rows })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        CsvTable::parse(&fs::read_to_string(path)?)
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Column `name` parsed as reals.
    pub fn reals(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .column(name)
            .ok_or_else(|| Error::Format(format!("missing column {name:?}")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[c].parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 2,
                    msg: format!("column {name}: {:?} is not a number", r[c]),
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub c: f64,
    pub log2_c: i32,
    pub iid_mean: f64,
    pub iid_std: f64,
    pub dg_mean: f64,
    pub dg_std: f64,
    pub worst_mean: f64,
    pub worst_std: f64,
}

impl Record for SweepRecord {
    fn header() -> &'static [&'static str] {
        &["C", "log2C", "iid_mean", "iid_std", "dg_mean", "dg_std", "worst_mean", "worst_std"]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Real(self.c),
            Field::Int(self.log2_c as i64),
            Field::Real(self.iid_mean),
            Field::Real(self.iid_std),
            Field::Real(self.dg_mean),
            Field::Real(self.dg_std),
            Field::Real(self.worst_mean),
            Field::Real(self.worst_std),
        ]
    }
}

/// Per-seed curve locations of the sweep maxima.
#[derive(Clone, Debug, PartialEq)]
pub struct ArgmaxRecord {
    pub seed: u64,
    pub argmax_iid: i32,
    pub argmax_dg: i32,
    pub argmax_worst: i32,
}

impl Record for ArgmaxRecord {
    fn header() -> &'static [&'static str] {
        &["seed", "argmax_iid_log2C", "argmax_dg_log2C", "argmax_worst_log2C"]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::UInt(self.seed),
            Field::Int(self.argmax_iid as i64),
            Field::Int(self.argmax_dg as i64),
            Field::Int(self.argmax_worst as i64),
        ]
    }
}

impl Record for CompareRow {
    fn header() -> &'static [&'static str] {
        &["seed", "heldout", "criterion", "C", "log2C", "lnC", "accuracy", "ramp_risk"]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::UInt(self.seed),
            Field::Text(self.heldout.clone()),
            Field::Text(self.criterion.name().into()),
            Field::Real(self.chosen_c),
            Field::Int(self.chosen_log2 as i64),
            Field::Real(self.ln_c),
            Field::Real(self.accuracy),
            Field::Real(self.ramp_risk),
        ]
    }
}

/// Per target domain (and a final `mean` row): accuracy and selected `C` of
/// each criterion, averaged over seeds. With one seed `C` is the selected
/// value itself; otherwise it is `exp` of the mean `ln C`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionSummary {
    pub heldout: String,
    pub domain_wise_accuracy: f64,
    pub domain_wise_c: f64,
    pub domain_wise_ln_c: f64,
    pub instance_wise_accuracy: f64,
    pub instance_wise_c: f64,
    pub instance_wise_ln_c: f64,
}

impl Record for SelectionSummary {
    fn header() -> &'static [&'static str] {
        &[
            "heldout",
            "domain_wise_accuracy",
            "domain_wise_C",
            "domain_wise_lnC",
            "instance_wise_accuracy",
            "instance_wise_C",
            "instance_wise_lnC",
        ]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::Text(self.heldout.clone()),
            Field::Real(self.domain_wise_accuracy),
            Field::Real(self.domain_wise_c),
            Field::Real(self.domain_wise_ln_c),
            Field::Real(self.instance_wise_accuracy),
            Field::Real(self.instance_wise_c),
            Field::Real(self.instance_wise_ln_c),
        ]
    }
}

/// Summarises comparison rows by target domain, in first-appearance order.
pub fn summarise_selection(rows: &[CompareRow]) -> Vec<SelectionSummary> {
    // (dw acc, dw lnC, iw acc, iw lnC, count)
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, [f64; 5]> = BTreeMap::new();
    for r in rows {
        if !acc.contains_key(&r.heldout) {
            order.push(r.heldout.clone());
        }
        let e = acc.entry(r.heldout.clone()).or_insert([0.0; 5]);
        match r.criterion {
            Criterion::DomainWise => {
                e[0] += r.accuracy;
                e[1] += r.ln_c;
                e[4] += 1.0;
            }
            Criterion::InstanceWise => {
                e[2] += r.accuracy;
                e[3] += r.ln_c;
            }
        }
    }
    let mut out: Vec<SelectionSummary> = order
        .iter()
        .map(|id| {
            let e = acc[id];
            let n = e[4];
            SelectionSummary {
                heldout: id.clone(),
                domain_wise_accuracy: e[0] / n,
                domain_wise_c: (e[1] / n).exp(),
                domain_wise_ln_c: e[1] / n,
                instance_wise_accuracy: e[2] / n,
                instance_wise_c: (e[3] / n).exp(),
                instance_wise_ln_c: e[3] / n,
            }
        })
        .collect();
    if !out.is_empty() {
        let k = out.len() as f64;
        let mean = |f: &dyn Fn(&SelectionSummary) -> f64| out.iter().map(f).sum::<f64>() / k;
        let row = SelectionSummary {
            heldout: "mean".into(),
            domain_wise_accuracy: mean(&|s| s.domain_wise_accuracy),
            domain_wise_c: mean(&|s| s.domain_wise_ln_c).exp(),
            domain_wise_ln_c: mean(&|s| s.domain_wise_ln_c),
            instance_wise_accuracy: mean(&|s| s.instance_wise_accuracy),
            instance_wise_c: mean(&|s| s.instance_wise_ln_c).exp(),
            instance_wise_ln_c: mean(&|s| s.instance_wise_ln_c),
        };
        out.push(row);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub seed: u64,
    pub step: usize,
    pub complexity: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub heldout_loss: f64,
    pub heldout_accuracy: f64,
}

impl Record for CheckpointRecord {
    fn header() -> &'static [&'static str] {
        &["seed", "step", "complexity", "train_loss", "train_accuracy", "heldout_loss", "heldout_accuracy"]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::UInt(self.seed),
            Field::UInt(self.step as u64),
            Field::Real(self.complexity),
            Field::Real(self.train_loss),
            Field::Real(self.train_accuracy),
            Field::Real(self.heldout_loss),
            Field::Real(self.heldout_accuracy),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRecord {
    pub seed: u64,
    pub c: f64,
    pub log2_c: i32,
    pub weight_norm: f64,
    pub empirical_risk: f64,
    pub rad_mn: f64,
    pub rad_n: f64,
    pub average_bound: f64,
    pub average_confidence: f64,
    pub worst_case_bound: f64,
    pub worst_case_confidence: f64,
    pub heldout_risk: f64,
    pub vacuous: bool,
}

impl Record for BoundRecord {
    fn header() -> &'static [&'static str] {
        &[
            "seed",
            "C",
            "log2C",
            "weight_norm",
            "empirical_risk",
            "rad_mn",
            "rad_n",
            "average_bound",
            "average_confidence",
            "worst_case_bound",
            "worst_case_confidence",
            "heldout_risk",
            "vacuous",
        ]
    }
    fn fields(&self) -> Vec<Field> {
        vec![
            Field::UInt(self.seed),
            Field::Real(self.c),
            Field::Int(self.log2_c as i64),
            Field::Real(self.weight_norm),
            Field::Real(self.empirical_risk),
            Field::Real(self.rad_mn),
            Field::Real(self.rad_n),
            Field::Real(self.average_bound),
            Field::Real(self.average_confidence),
            Field::Real(self.worst_case_bound),
            Field::Real(self.worst_case_confidence),
            Field::Real(self.heldout_risk),
            Field::Bool(self.vacuous),
        ]
    }
}

/// One evaluated row of a bound-input table.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundEvalRecord {
    pub inputs: BoundInputs,
    pub kappa: f64,
    pub average_bound: f64,
    pub average_confidence: f64,
    pub excess_risk_bound: f64,
    pub worst_case_bound: f64,
    pub worst_case_confidence: f64,
    pub vacuous: bool,
}

impl Record for BoundEvalRecord {
    fn header() -> &'static [&'static str] {
        &[
            "empirical_risk",
            "rad_mn",
            "rad_n",
            "m",
            "n",
            "delta",
            "kappa",
            "average_bound",
            "average_confidence",
            "excess_risk_bound",
            "worst_case_bound",
            "worst_case_confidence",
            "vacuous",
        ]
    }
    fn fields(&self) -> Vec<Field> {
        let i = &self.inputs;
        vec![
            Field::Real(i.empirical_risk),
            Field::Real(i.rad_mn),
            Field::Real(i.rad_n),
            Field::UInt(i.m as u64),
            Field::UInt(i.n as u64),
            Field::Real(i.delta),
            Field::Real(self.kappa),
            Field::Real(self.average_bound),
            Field::Real(self.average_confidence),
            Field::Real(self.excess_risk_bound),
            Field::Real(self.worst_case_bound),
            Field::Real(self.worst_case_confidence),
            Field::Bool(self.vacuous),
        ]
    }
}

/// Evaluates every row of a table with columns
/// `empirical_risk,rad_mn,rad_n,m,n,delta` and an optional `kappa`
/// (default 0.1).
pub fn evaluate_bound_table(table: &CsvTable) -> Result<Vec<BoundEvalRecord>> {
    let risk = table.reals("empirical_risk")?;
    let rad_mn = table.reals("rad_mn")?;
    let rad_n = table.reals("rad_n")?;
    let m = table.reals("m")?;
    let n = table.reals("n")?;
    let delta = table.reals("delta")?;
    let kappa = match table.column("kappa") {
        Some(_) => table.reals("kappa")?,
        None => vec![default_kappa(); table.rows.len()],
    };
    let count = |v: f64, line: usize, name: &str| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
            Ok(v as usize)
        } else {
            Err(Error::Parse { line, msg: format!("{name} must be a nonnegative integer, got {v}") })
        }
    };
    (0..table.rows.len())
        .map(|i| {
            let line = i + 2;
            let inputs = BoundInputs {
                empirical_risk: risk[i],
                rad_mn: rad_mn[i],
                rad_n: rad_n[i],
                m: count(m[i], line, "m")?,
                n: count(n[i], line, "n")?,
                delta: delta[i],
            };
            let row = || -> Result<BoundEvalRecord> {
                let avg = theorem1_bound(&inputs)?;
                let excess = excess_risk_bound(inputs.rad_mn, inputs.rad_n, inputs.m, inputs.n, inputs.delta)?;
                let worst = worst_case_bound(&avg, kappa[i])?;
                Ok(BoundEvalRecord {
                    inputs: inputs.clone(),
                    kappa: kappa[i],
                    average_bound: avg.value,
                    average_confidence: avg.confidence,
                    excess_risk_bound: excess.value,
                    worst_case_bound: worst.value,
                    worst_case_confidence: worst.confidence,
                    vacuous: avg.vacuous,
                })
            };
            row().map_err(|e| e.context(format!("row at line {line}")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: Task,
    pub config: String,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects written files in order; each is hashed as soon as it is written.
struct Outputs {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Outputs {
    fn csv<R: Record>(&mut self, name: &str, records: &[R]) -> Result<()> {
        let path = self.dir.join(name);
        emit_csv(records, &path).map_err(|e| e.context(format!("writing {}", path.display())))?;
        let bytes = fs::read(&path)?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }
}

fn heldout_index(env: &Environment, id: &Option<String>, field: &str) -> Result<usize> {
    match id {
        None => Ok(env.n_domains() - 1),
        Some(id) => env
            .domain_index(id)
            .ok_or_else(|| config_err(field, format!("unknown domain id {id:?}"))),
    }
}

/// Runs the configured task, writes its CSVs and then `manifest.json`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    fs::create_dir_all(out_dir).map_err(|e| Error::Config(format!("output directory {}: {e}", out_dir.display())))?;
    let env = config.load_environment()?;
    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        artifacts: Vec::new(),
    };
    let task_name = format!("{:?}", config.task);
    run_task(config, &env, &mut out).map_err(|e| e.context(format!("task {task_name}")))?;

    let manifest = RunManifest {
        task: config.task,
        config: format!("{config:?}"),
        artifacts: out.artifacts,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

/// Reads a config file and runs it. The output directory is `out_override`,
/// else the config's `out_dir`, else `$DG_SELECT_OUT`.
pub fn run_config_file(path: impl AsRef<Path>, out_override: Option<&Path>) -> Result<RunManifest> {
    let config = ExperimentConfig::load(path)?;
    let out = resolve_out_dir(out_override, config.out_dir.as_deref())?;
    run_experiment(&config, &out)
}

pub fn resolve_out_dir(cli: Option<&Path>, config: Option<&Path>) -> Result<PathBuf> {
    if let Some(p) = cli.or(config) {
        return Ok(p.to_path_buf());
    }
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config(format!("no output directory: set run.out_dir, --out or {OUT_DIR_ENV}")))
}

/// Checks every manifest entry against the file on disk.
pub fn verify_manifest(out_dir: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(out_dir.join(MANIFEST_FILE))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    for a in &manifest.artifacts {
        let bytes = fs::read(out_dir.join(&a.file))?;
        if sha256_hex(&bytes) != a.sha256 {
            return Err(Error::Format(format!("{} does not match its digest", a.file)));
        }
    }
    Ok(manifest)
}

fn run_task(config: &ExperimentConfig, env: &Environment, out: &mut Outputs) -> Result<()> {
    let seeds = config.seeds();
    let svm = config.solver.svm_config();
    match config.task {
        Task::CSweep => {
            let curves = c_sweep(env, &config.grid, &seeds, &svm, config.protocol.train_frac)?;
            let records: Vec<SweepRecord> = (0..curves.log2_c.len())
                .map(|i| SweepRecord {
                    c: config.grid.c(i),
                    log2_c: curves.log2_c[i],
                    iid_mean: curves.iid_mean[i],
                    iid_std: curves.iid_std[i],
                    dg_mean: curves.dg_mean[i],
                    dg_std: curves.dg_std[i],
                    worst_mean: curves.worst_mean[i],
                    worst_std: curves.worst_std[i],
                })
                .collect();
            out.csv("sweep.csv", &records)?;
            let argmax: Vec<ArgmaxRecord> = curves
                .per_seed
                .iter()
                .map(|s| ArgmaxRecord {
                    seed: s.seed,
                    argmax_iid: s.argmax_iid,
                    argmax_dg: s.argmax_dg,
                    argmax_worst: s.argmax_worst,
                })
                .collect();
            out.csv("sweep_argmax.csv", &argmax)
        }
        Task::SelectCompare => {
            let rows = select_compare(env, &config.grid, &svm, &config.protocol, &seeds)?;
            out.csv("selection.csv", &rows)?;
            out.csv("selection_summary.csv", &summarise_selection(&rows))
        }
        Task::MlpCheckpointStudy => {
            let records = mlp_study(config, env, &seeds)?;
            out.csv("checkpoints.csv", &records)
        }
        Task::BoundReport => {
            let records = bound_study(config, env, &seeds, &svm)?;
            out.csv("bounds.csv", &records)
        }
    }
}

fn mlp_study(config: &ExperimentConfig, env: &Environment, seeds: &[u64]) -> Result<Vec<CheckpointRecord>> {
    if env.n_domains() < 2 {
        return Err(Error::Selection("checkpoint study needs at least 2 domains".into()));
    }
    let h = heldout_index(env, &config.mlp.heldout, "mlp.heldout")?;
    let per_seed: Vec<Vec<CheckpointRecord>> = seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = split_environment(env, config.protocol.train_frac, seed)?;
            let sources = train.without(h)?;
            let target = &test.domains()[h].samples;
            let schedule = config.mlp.schedule(derive_seed(seed, "mlp"));
            let run = train_mlp(&sources, &schedule, &config.mlp.penalty)?;
            run.checkpoints
                .iter()
                .map(|ck| {
                    let model = ck.model();
                    Ok(CheckpointRecord {
                        seed,
                        step: ck.step,
                        complexity: neyshabur_complexity(ck)?,
                        train_loss: ck.train_loss,
                        train_accuracy: ck.train_accuracy,
                        heldout_loss: mean_cross_entropy(&model, target),
                        heldout_accuracy: model.accuracy(target),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

fn bound_study(config: &ExperimentConfig, env: &Environment, seeds: &[u64], svm: &SvmConfig) -> Result<Vec<BoundRecord>> {
    if env.n_domains() < 2 {
        return Err(Error::Selection("bound report needs at least 2 domains".into()));
    }
    let h = heldout_index(env, &config.bounds.heldout, "bounds.heldout")?;
    let b = &config.bounds;
    let splits: Vec<(Environment, Environment)> = seeds
        .iter()
        .map(|&s| split_environment(env, config.protocol.train_frac, s))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..config.grid.len()).map(move |c| (s, c)))
        .collect();
    cells
        .par_iter()
        .map(|&(s, ci)| {
            let seed = seeds[s];
            let (train, test) = &splits[s];
            let sources = train.without(h)?;
            let cfg = SvmConfig {
                seed: derive_seed(seed, "solver"),
                ..svm.with_c(config.grid.c(ci))
            };
            let model = train_linear(&sources.pooled(), env.num_classes(), &cfg)?;
            let norm = weight_norm(&model).max_norm;
            let per_domain: Vec<f64> = sources
                .domains()
                .iter()
                .map(|d| evaluate(&model, &d.samples).map(|m| m.ramp_risk))
                .collect::<Result<_>>()?;
            let empirical_risk = per_domain.iter().sum::<f64>() / per_domain.len() as f64;
            let xs: Vec<Vec<f64>> = sources
                .pooled()
                .iter()
                .map(|x| {
                    let mut f = x.features.clone();
                    if cfg.bias_feature {
                        f.push(1.0);
                    }
                    f
                })
                .collect();
            let (rad_mn, rad_n) = if norm > 0.0 {
                (
                    linear_rad_closed_form(&xs, norm)?,
                    domain_level_rad(&sources, norm, b.n_draws, derive_seed(seed, "bounds/rad_n"), cfg.bias_feature)?.mean,
                )
            } else {
                (0.0, 0.0)
            };
            let m = sources.domains().iter().map(Domain::len).min().unwrap_or(0);
            let avg = theorem1_bound(&BoundInputs {
                empirical_risk,
                rad_mn,
                rad_n,
                m,
                n: sources.n_domains(),
                delta: b.delta,
            })?;
            let worst = worst_case_bound(&avg, b.kappa)?;
            let heldout_risk = evaluate(&model, &test.domains()[h].samples)?.ramp_risk;
            Ok(BoundRecord {
                seed,
                c: config.grid.c(ci),
                log2_c: config.grid.log2_values()[ci],
                weight_norm: norm,
                empirical_risk,
                rad_mn,
                rad_n,
                average_bound: avg.value,
                average_confidence: avg.confidence,
                worst_case_bound: worst.value,
                worst_case_confidence: worst.confidence,
                heldout_risk,
                vacuous: avg.vacuous,
            })
        })
        .collect()
}
