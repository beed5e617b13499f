//! Cluster sampling schemes, within-cluster sampling and inclusion
//! probabilities.

mod conditional_poisson;
mod inclusion;
mod srs;
mod sunter;
mod within;

pub use conditional_poisson::ConditionalPoisson;
pub(crate) use conditional_poisson::{for_each_combination, mask_indices};
pub use inclusion::{hajek_approx, joint_inclusion, InclusionProbs, PiMethod, DEFAULT_MC_REPLICATES};
pub use srs::draw_srs;
pub use sunter::SunterPlan;
pub use within::{draw_within, WithinGroup, WithinPlan};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Population;

/// Largest ℓ for which the exact scheme enumerates its subset distribution.
pub const MAX_EXACT_CLUSTERS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Simple random sampling of clusters.
    Srs,
    /// List-sequential PPS without replacement.
    PpsworSunter,
    /// Maximum-entropy PPS without replacement (ℓ ≤ 20).
    PpsworExact,
}

impl Scheme {
    pub fn is_pps(self) -> bool {
        !matches!(self, Scheme::Srs)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Srs => "srs",
            Scheme::PpsworSunter => "ppswor_sunter",
            Scheme::PpsworExact => "ppswor_exact",
        }
    }

    /// Accepts `ppswor_exact` and `ppswor-exact` spellings.
    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().replace('-', "_");
        [Scheme::Srs, Scheme::PpsworSunter, Scheme::PpsworExact]
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::validation(format!("unknown scheme '{s}'")))
    }
}

/// Within-cluster sample size rule, fixed ex ante for every cluster.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinSize {
    /// s_c = n_c.
    #[default]
    Census,
    /// s_c = s_u for every cluster.
    Constant(usize),
    /// s_c = ceil(p * n_c).
    Proportion(f64),
    /// One size per cluster, in cluster order.
    Explicit(Vec<usize>),
}

impl WithinSize {
    /// Sample size for a group of `size` units; `index` selects the
    /// explicit entry.
    pub fn size_for(&self, size: usize, index: usize) -> Result<usize> {
        let k = match self {
            WithinSize::Census => size,
            WithinSize::Constant(k) => *k,
            WithinSize::Proportion(p) => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(Error::validation(format!("within proportion {p} outside (0, 1]")));
                }
                ((p * size as f64).ceil() as usize).clamp(1, size)
            }
            WithinSize::Explicit(v) => *v.get(index).ok_or_else(|| {
                Error::validation(format!("explicit within sizes list has no entry {}", index + 1))
            })?,
        };
        if k == 0 || k > size {
            return Err(Error::validation(format!(
                "within sample size {k} outside 1..={size}"
            )));
        }
        Ok(k)
    }
}

/// Full design: scheme, s, #T_1, within sizes, stratification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub scheme: Scheme,
    /// Clusters sampled (per stratum when stratified).
    pub s: usize,
    /// #T_1 (per stratum when stratified).
    pub treated: usize,
    #[serde(default)]
    pub within: WithinSize,
    /// Per-unit-stratum sizes s_v; switches on unit-stratified sampling.
    #[serde(default)]
    pub unit_within: Option<WithinSize>,
    #[serde(default)]
    pub stratified: bool,
}

impl DesignSpec {
    pub fn new(scheme: Scheme, s: usize, treated: usize) -> Self {
        DesignSpec {
            scheme,
            s,
            treated,
            within: WithinSize::Census,
            unit_within: None,
            stratified: false,
        }
    }

    pub fn with_within(mut self, within: WithinSize) -> Self {
        self.within = within;
        self
    }

    pub fn with_unit_within(mut self, unit_within: WithinSize) -> Self {
        self.unit_within = Some(unit_within);
        self
    }

    pub fn stratified(mut self) -> Self {
        self.stratified = true;
        self
    }

    /// Cluster index groups sampled independently: the strata, or one
    /// group holding every cluster.
    pub fn groups(&self, pop: &Population) -> Result<Vec<Vec<usize>>> {
        if self.stratified {
            Ok(pop.strata()?.into_iter().map(|(_, g)| g).collect())
        } else {
            Ok(vec![(0..pop.len()).collect()])
        }
    }

    pub fn validate(&self, pop: &Population) -> Result<()> {
        for group in self.groups(pop)? {
            let sub_sizes: Vec<usize> = group.iter().map(|&c| pop.cluster(c).size()).collect();
            if self.s == 0 || self.s > group.len() {
                return Err(Error::validation(format!(
                    "s = {} outside 1..={} (clusters available)",
                    self.s,
                    group.len()
                )));
            }
            if self.treated == 0 || self.treated >= self.s {
                return Err(Error::validation(format!(
                    "#T_1 = {} must lie in 1..={} so that both arms are nonempty",
                    self.treated,
                    self.s.saturating_sub(1)
                )));
            }
            if self.scheme.is_pps() {
                check_pps(&sub_sizes, self.s).map_err(|bad| {
                    let c = group[bad];
                    Error::validation(format!(
                        "cluster '{}' has n_c = {} > n/s = {}/{}",
                        pop.cluster(c).id,
                        sub_sizes[bad],
                        sub_sizes.iter().sum::<usize>(),
                        self.s
                    ))
                })?;
            }
            if self.scheme == Scheme::PpsworExact && group.len() > MAX_EXACT_CLUSTERS {
                return Err(Error::validation(format!(
                    "exact PPS scheme supports at most {MAX_EXACT_CLUSTERS} clusters per stratum, got {}",
                    group.len()
                )));
            }
        }
        WithinPlan::new(pop, &self.within, self.unit_within.as_ref())?;
        Ok(())
    }
}

/// Index of the first cluster violating `n_c * s <= n`.
pub fn check_pps(sizes: &[usize], s: usize) -> std::result::Result<(), usize> {
    let n: usize = sizes.iter().sum();
    match sizes.iter().position(|&nc| nc * s > n) {
        Some(c) => Err(c),
        None => Ok(()),
    }
}

/// π_c = n_c s / n.
pub fn first_order_pps(pop: &Population, s: usize) -> Result<Vec<f64>> {
    let sizes = pop.sizes();
    check_pps(&sizes, s).map_err(|c| {
        Error::validation(format!(
            "cluster '{}' has n_c = {} > n/s = {}/{s}",
            pop.cluster(c).id,
            sizes[c],
            pop.n()
        ))
    })?;
    Ok(pps_probabilities(&sizes, s))
}

pub(crate) fn pps_probabilities(sizes: &[usize], s: usize) -> Vec<f64> {
    let n: usize = sizes.iter().sum();
    sizes.iter().map(|&nc| (nc * s) as f64 / n as f64).collect()
}

/// Realized cluster sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSample {
    /// Sampled cluster indices, ascending.
    pub indices: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A cluster sampler prepared for one set of cluster sizes.
#[derive(Clone, Debug)]
pub enum ClusterSampler {
    Srs { ell: usize, s: usize },
    Sunter(SunterPlan),
    Exact(Box<ConditionalPoisson>),
}

impl ClusterSampler {
    pub fn new(sizes: &[usize], s: usize, scheme: Scheme) -> Result<Self> {
        if s == 0 || s > sizes.len() {
            return Err(Error::validation(format!("s = {s} outside 1..={}", sizes.len())));
        }
        Ok(match scheme {
            Scheme::Srs => ClusterSampler::Srs { ell: sizes.len(), s },
            Scheme::PpsworSunter => ClusterSampler::Sunter(SunterPlan::new(sizes, s)?),
            Scheme::PpsworExact => ClusterSampler::Exact(Box::new(ConditionalPoisson::new(sizes, s)?)),
        })
    }

    pub fn len(&self) -> usize {
        match self {
            ClusterSampler::Srs { ell, .. } => *ell,
            ClusterSampler::Sunter(p) => p.len(),
            ClusterSampler::Exact(cp) => cp.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted local indices of one draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match self {
            ClusterSampler::Srs { ell, s } => draw_srs(*ell, *s, rng),
            ClusterSampler::Sunter(p) => p.draw(rng),
            ClusterSampler::Exact(cp) => cp.draw(rng),
        }
    }
}

/// Samplers for every independently sampled group of a design.
#[derive(Clone, Debug)]
pub struct DesignPlan {
    pub spec: DesignSpec,
    /// Global cluster indices of each group.
    pub groups: Vec<Vec<usize>>,
    pub samplers: Vec<ClusterSampler>,
    pub within: WithinPlan,
}

impl DesignPlan {
    pub fn new(pop: &Population, spec: &DesignSpec) -> Result<Self> {
        spec.validate(pop)?;
        let groups = spec.groups(pop)?;
        let samplers = groups
            .iter()
            .map(|g| {
                let sizes: Vec<usize> = g.iter().map(|&c| pop.cluster(c).size()).collect();
                ClusterSampler::new(&sizes, spec.s, spec.scheme)
            })
            .collect::<Result<Vec<_>>>()?;
        let within = WithinPlan::new(pop, &spec.within, spec.unit_within.as_ref())?;
        Ok(DesignPlan { spec: spec.clone(), groups, samplers, within })
    }

    /// One cluster sample per group, as ascending global indices.
    pub fn draw_clusters<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .zip(&self.samplers)
            .map(|(g, sampler)| sampler.draw(rng).into_iter().map(|i| g[i]).collect())
            .collect()
    }
}
