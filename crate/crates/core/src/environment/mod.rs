//! Multi-domain datasets.
//!
//! An [`Environment`] is a finite set of source domains, each an i.i.d. sample
//! from one distribution drawn from an unknown distribution over domains. All
//! domains share the feature dimension and the label space.

mod csv;
mod idx;
mod rotate;
mod synth;

pub use self::csv::{emit_feature_csv, feature_csv_string, load_feature_csv, parse_feature_csv};
pub(crate) use self::csv::read_table;
pub use self::idx::{load_idx, parse_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use self::rotate::{rotate_domain, rotate_image};
pub use self::synth::{synth_environment, SynthGenerator, SynthSpec};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{validation, Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Sample { features, label }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub id: String,
    pub samples: Vec<Sample>,
}

impl Domain {
    /// Builds a domain, checking it is nonempty with finite, equal-length
    /// feature vectors.
    pub fn new(id: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let id = id.into();
        let Some(first) = samples.first() else {
            return Err(validation(format!("domain {id:?} has no samples")));
        };
        let d = first.features.len();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != d {
                return Err(validation(format!(
                    "domain {id:?}: sample {i} has {} features, expected {d}",
                    s.features.len()
                )));
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(validation(format!(
                    "domain {id:?}: sample {i} feature {j} is not finite"
                )));
            }
        }
        Ok(Domain { id, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    /// Sample indices grouped by label, ascending within each group.
    pub fn indices_by_label(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            map.entry(s.label).or_default().push(i);
        }
        map
    }

    fn select(&self, indices: &[usize]) -> Domain {
        Domain {
            id: self.id.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    domains: Vec<Domain>,
    num_classes: usize,
    feature_dim: usize,
}

impl Environment {
    pub fn new(domains: Vec<Domain>, num_classes: usize) -> Result<Self> {
        let Some(first) = domains.first() else {
            return Err(validation("an environment needs at least one domain"));
        };
        if num_classes == 0 {
            return Err(validation("num_classes must be positive"));
        }
        let feature_dim = first.feature_dim();
        let mut seen = std::collections::HashSet::new();
        for dom in &domains {
            if dom.is_empty() {
                return Err(validation(format!("domain {:?} has no samples", dom.id)));
            }
            if !seen.insert(dom.id.as_str()) {
                return Err(validation(format!("duplicate domain id {:?}", dom.id)));
            }
            if dom.feature_dim() != feature_dim {
                return Err(validation(format!(
                    "domain {:?} has feature dimension {}, expected {feature_dim}",
                    dom.id,
                    dom.feature_dim()
                )));
            }
            if let Some(s) = dom.samples.iter().find(|s| s.label >= num_classes) {
                return Err(validation(format!(
                    "domain {:?}: label {} outside [0, {num_classes})",
                    dom.id, s.label
                )));
            }
        }
        Ok(Environment {
            domains,
            num_classes,
            feature_dim,
        })
    }

    /// Infers the number of classes as `max label + 1`.
    pub fn from_domains(domains: Vec<Domain>) -> Result<Self> {
        let k = domains
            .iter()
            .flat_map(|d| d.samples.iter().map(|s| s.label))
            .max()
            .map_or(0, |m| m + 1);
        Environment::new(domains, k)
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn domain(&self, id: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn domain_index(&self, id: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.id == id)
    }

    pub fn n_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_samples(&self) -> usize {
        self.domains.iter().map(Domain::len).sum()
    }

    /// Common per-domain sample count, if all domains have the same size.
    pub fn uniform_m(&self) -> Option<usize> {
        let m = self.domains[0].len();
        self.domains.iter().all(|d| d.len() == m).then_some(m)
    }

    /// All samples of all domains, in domain order.
    pub fn pooled(&self) -> Vec<&Sample> {
        self.domains.iter().flat_map(|d| d.samples.iter()).collect()
    }

    /// A new environment made of the listed domains (by index), keeping `K`.
    pub fn subset(&self, indices: &[usize]) -> Result<Environment> {
        let domains = indices
            .iter()
            .map(|&i| {
                self.domains
                    .get(i)
                    .cloned()
                    .ok_or_else(|| validation(format!("domain index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Environment::new(domains, self.num_classes)
    }

    /// All domains except the one at `index`.
    pub fn without(&self, index: usize) -> Result<Environment> {
        let keep: Vec<usize> = (0..self.n_domains()).filter(|&i| i != index).collect();
        self.subset(&keep)
    }
}

/// Splits each domain into train and test parts, stratified by label.
///
/// The train size of a domain is `round(train_frac * m_j)`, apportioned over
/// labels by largest remainder; every label keeps at least one sample on each
/// side. Sample order within each part follows the original order.
pub fn split_environment(
    env: &Environment,
    train_frac: f64,
    seed: u64,
) -> Result<(Environment, Environment)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(validation(format!("train_frac {train_frac} not in (0, 1)")));
    }
    let mut train = Vec::with_capacity(env.n_domains());
    let mut test = Vec::with_capacity(env.n_domains());
    for (j, dom) in env.domains().iter().enumerate() {
        let groups = dom.indices_by_label();
        if let Some((label, idx)) = groups.iter().find(|(_, v)| v.len() < 2) {
            return Err(Error::Split(format!(
                "domain {:?}: class {label} has {} sample(s), need at least 2",
                dom.id,
                idx.len()
            )));
        }
        let counts: Vec<usize> = groups.values().map(Vec::len).collect();
        let target = (train_frac * dom.len() as f64).round() as usize;
        let quotas = apportion(&counts, target);

        let mut rng = rng_from_seed(derive_seed(seed, &format!("split/{j}")));
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (group, quota) in groups.values().zip(quotas) {
            let mut shuffled = group.clone();
            shuffled.shuffle(&mut rng);
            train_idx.extend_from_slice(&shuffled[..quota]);
            test_idx.extend_from_slice(&shuffled[quota..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        train.push(dom.select(&train_idx));
        test.push(dom.select(&test_idx));
    }
    Ok((
        Environment::new(train, env.num_classes())?,
        Environment::new(test, env.num_classes())?,
    ))
}

/// Largest-remainder apportionment of `total` over groups of sizes `counts`,
/// clamped so each group keeps at least one member on either side.
fn apportion(counts: &[usize], total: usize) -> Vec<usize> {
    let m: usize = counts.iter().sum();
    let exact: Vec<f64> = counts
        .iter()
        .map(|&c| total as f64 * c as f64 / m as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // stable sort keeps lower label first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &g in order.iter().take(total.saturating_sub(assigned)) {
        quotas[g] += 1;
    }
    quotas
        .iter()
        .zip(counts)
        .map(|(&q, &c)| q.clamp(1, c - 1))
        .collect()
}

/// Truncates every domain to the smallest domain size by seeded uniform
/// subsampling without replacement. Kept samples stay in original order.
pub fn equalize_m(env: &Environment, seed: u64) -> Environment {
    let m = env.domains().iter().map(Domain::len).min().unwrap_or(0);
    let domains = env
        .domains()
        .iter()
        .enumerate()
        .map(|(j, dom)| {
            if dom.len() == m {
                return dom.clone();
            }
            let mut rng = rng_from_seed(derive_seed(seed, &format!("equalize/{j}")));
            let mut idx = rand::seq::index::sample(&mut rng, dom.len(), m).into_vec();
            idx.sort_unstable();
            dom.select(&idx)
        })
        .collect();
    Environment {
        domains,
        num_classes: env.num_classes,
        feature_dim: env.feature_dim,
    }
}
