use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Domain, Environment, Sample};
use crate::error::{validation, Result};
use crate::linalg::norm;
use crate::rng::{derive_seed, rng_from_seed};

/// Parameters of the synthetic Gaussian multi-domain generator.
///
/// Class `c` in domain `j` is drawn from `N(anchor_c + offset_{j,c}, I)`,
/// where `anchor_c` is shared by all domains and `offset_{j,c}` is a uniformly
/// random direction scaled to `covariate_shift_scale`. Labels are then flipped
/// to a uniformly chosen other class with probability `label_noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_domains: usize,
    pub m_per_domain: usize,
    pub d: usize,
    #[serde(rename = "k")]
    pub num_classes: usize,
    #[serde(rename = "shift_scale")]
    pub covariate_shift_scale: f64,
    #[serde(default)]
    pub label_noise: f64,
    /// Norm of each class anchor.
    #[serde(default = "default_class_separation")]
    pub class_separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_class_separation() -> f64 {
    2.0
}

impl SynthSpec {
    pub fn new(n_domains: usize, m_per_domain: usize, d: usize, num_classes: usize) -> Self {
        SynthSpec {
            n_domains,
            m_per_domain,
            d,
            num_classes,
            covariate_shift_scale: 0.0,
            label_noise: 0.0,
            class_separation: default_class_separation(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_domains == 0 {
            return Err(validation("n_domains must be at least 1"));
        }
        if self.d == 0 {
            return Err(validation("d must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(validation("k must be at least 2"));
        }
        if self.m_per_domain < 2 * self.num_classes {
            return Err(validation(format!(
                "m_per_domain {} must be at least 2k = {}",
                self.m_per_domain,
                2 * self.num_classes
            )));
        }
        if !(self.covariate_shift_scale >= 0.0 && self.covariate_shift_scale.is_finite()) {
            return Err(validation("shift_scale must be finite and nonnegative"));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(validation("label_noise must lie in [0, 0.5)"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(validation("class_separation must be finite and nonnegative"));
        }
        Ok(())
    }
}

fn random_direction<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return g.into_iter().map(|x| scale * x / n).collect();
        }
    }
}

/// The generator behind [`synth_environment`]. Domain `j` is fully determined
/// by `(spec.seed, j)`, so indices beyond `n_domains` give fresh domains from
/// the same environment.
#[derive(Clone, Debug)]
pub struct SynthGenerator {
    spec: SynthSpec,
    anchors: Vec<Vec<f64>>,
}

impl SynthGenerator {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(derive_seed(spec.seed, "synth/anchors"));
        let anchors = (0..spec.num_classes)
            .map(|_| random_direction(&mut rng, spec.d, spec.class_separation))
            .collect();
        Ok(SynthGenerator { spec, anchors })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn class_anchors(&self) -> &[Vec<f64>] {
        &self.anchors
    }

    /// Per-class offsets of domain `j`.
    pub fn domain_offsets(&self, j: usize) -> Vec<Vec<f64>> {
        let mut rng = rng_from_seed(derive_seed(self.spec.seed, &format!("synth/offset/{j}")));
        (0..self.spec.num_classes)
            .map(|_| random_direction(&mut rng, self.spec.d, self.spec.covariate_shift_scale))
            .collect()
    }

    /// Class means of domain `j`.
    pub fn domain_means(&self, j: usize) -> Vec<Vec<f64>> {
        self.domain_offsets(j)
            .into_iter()
            .zip(&self.anchors)
            .map(|(o, a)| o.iter().zip(a).map(|(x, y)| x + y).collect())
            .collect()
    }

    /// Draws `m` samples of domain `j`. Classes are balanced (round-robin).
    pub fn sample_domain(&self, j: usize, m: usize) -> Domain {
        self.sample_domain_with_stream(j, m, "samples")
    }

    /// Like [`SynthGenerator::sample_domain`] but from an independent sample
    /// stream of the same domain, e.g. for a large evaluation set.
    pub fn sample_domain_with_stream(&self, j: usize, m: usize, stream: &str) -> Domain {
        let k = self.spec.num_classes;
        let means = self.domain_means(j);
        let mut rng = rng_from_seed(derive_seed(self.spec.seed, &format!("synth/{stream}/{j}")));
        let samples = (0..m)
            .map(|i| {
                let c = i % k;
                let features = means[c]
                    .iter()
                    .map(|mu| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mu + z
                    })
                    .collect::<Vec<f64>>();
                let label = if self.spec.label_noise > 0.0 && rng.random::<f64>() < self.spec.label_noise {
                    let other = rng.random_range(0..k - 1);
                    if other >= c {
                        other + 1
                    } else {
                        other
                    }
                } else {
                    c
                };
                Sample::new(features, label)
            })
            .collect();
        Domain {
            id: format!("d{j}"),
            samples,
        }
    }

    pub fn environment(&self) -> Environment {
        let domains = (0..self.spec.n_domains)
            .map(|j| self.sample_domain(j, self.spec.m_per_domain))
            .collect();
        Environment::new(domains, self.spec.num_classes).expect("generator output is consistent")
    }
}

/// Draws an environment of `spec.n_domains` domains with `m_per_domain`
/// samples each. Deterministic given `spec.seed`.
pub fn synth_environment(spec: &SynthSpec) -> Result<Environment> {
    Ok(SynthGenerator::new(spec.clone())?.environment())
}
