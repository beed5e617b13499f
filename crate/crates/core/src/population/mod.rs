//! Finite-population potential-outcomes model.

mod frame;
mod synthetic;

pub use frame::{read_frame, read_frame_path, write_frame, write_frame_path};
pub use synthetic::{Baseline, Effect, SizeDist, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment arm `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treated,
    Control,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treated, Arm::Control];

    pub fn index(self) -> usize {
        match self {
            Arm::Treated => 1,
            Arm::Control => 0,
        }
    }
}

/// Potential outcome pair of one unit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub y1: f64,
    pub y0: f64,
}

impl Unit {
    pub fn new(y1: f64, y0: f64) -> Self {
        Unit { y1, y0 }
    }

    pub fn outcome(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.y1,
            Arm::Control => self.y0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub stratum: Option<String>,
    pub units: Vec<Unit>,
    /// Per-unit stratum labels, parallel to `units`.
    pub unit_strata: Option<Vec<String>>,
}

impl Cluster {
    pub fn new(id: impl Into<String>, units: Vec<Unit>) -> Self {
        Cluster {
            id: id.into(),
            stratum: None,
            units,
            unit_strata: None,
        }
    }

    pub fn with_stratum(mut self, stratum: impl Into<String>) -> Self {
        self.stratum = Some(stratum.into());
        self
    }

    pub fn with_unit_strata(mut self, labels: Vec<String>) -> Self {
        self.unit_strata = Some(labels);
        self
    }

    pub fn size(&self) -> usize {
        self.units.len()
    }

    /// Unit index groups, one per unit stratum in first-appearance order.
    /// A cluster without unit strata is a single group.
    pub fn unit_groups(&self) -> Vec<Vec<usize>> {
        match &self.unit_strata {
            None => vec![(0..self.units.len()).collect()],
            Some(labels) => group_by_label(labels.iter().map(String::as_str)),
        }
    }

    pub fn mean(&self, arm: Arm) -> f64 {
        mean(self.units.iter().map(|u| u.outcome(arm)))
    }

    /// Within-cluster variance with divisor `n_c - 1`; 0 for singletons.
    pub fn within_variance(&self, arm: Arm) -> f64 {
        sample_variance(self.units.iter().map(|u| u.outcome(arm)))
    }
}

/// Within-cluster variances σ²_ct and the between-cluster variance σ²_t,bet.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceComponents {
    pub within: Vec<f64>,
    pub between: f64,
}

/// Immutable finite population of clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Cluster>", into = "Vec<Cluster>")]
pub struct Population {
    clusters: Vec<Cluster>,
    n: usize,
}

impl TryFrom<Vec<Cluster>> for Population {
    type Error = Error;
    fn try_from(clusters: Vec<Cluster>) -> Result<Self> {
        Population::new(clusters)
    }
}

impl From<Population> for Vec<Cluster> {
    fn from(p: Population) -> Self {
        p.clusters
    }
}

impl Population {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        if clusters.len() < 2 {
            return Err(Error::validation(format!(
                "population needs at least 2 clusters, got {}",
                clusters.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &clusters {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::validation(format!("duplicate cluster id '{}'", c.id)));
            }
            if c.units.is_empty() {
                return Err(Error::validation(format!("cluster '{}' has no units", c.id)));
            }
            if let Some(u) = c.units.iter().find(|u| !u.y1.is_finite() || !u.y0.is_finite()) {
                return Err(Error::validation(format!(
                    "cluster '{}' has a non-finite outcome ({}, {})",
                    c.id, u.y1, u.y0
                )));
            }
            if let Some(labels) = &c.unit_strata {
                if labels.len() != c.units.len() {
                    return Err(Error::validation(format!(
                        "cluster '{}': {} unit-stratum labels for {} units",
                        c.id,
                        labels.len(),
                        c.units.len()
                    )));
                }
            }
        }
        let n = clusters.iter().map(Cluster::size).sum();
        Ok(Population { clusters, n })
    }

    /// Build from nested outcome lists, with ids `"1"`, `"2"`, ...
    pub fn from_outcomes(clusters: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        Population::new(
            clusters
                .into_iter()
                .enumerate()
                .map(|(i, units)| {
                    Cluster::new(
                        (i + 1).to_string(),
                        units.into_iter().map(|(a, b)| Unit::new(a, b)).collect(),
                    )
                })
                .collect(),
        )
    }

    /// Number of clusters ℓ.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Total number of units n.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster(&self, c: usize) -> &Cluster {
        &self.clusters[c]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(Cluster::size).collect()
    }

    /// Population mean μ_t.
    pub fn mean(&self, arm: Arm) -> f64 {
        self.clusters
            .iter()
            .flat_map(|c| c.units.iter())
            .map(|u| u.outcome(arm))
            .sum::<f64>()
            / self.n as f64
    }

    /// Cluster means μ_ct, in cluster order.
    pub fn cluster_means(&self, arm: Arm) -> Vec<f64> {
        self.clusters.iter().map(|c| c.mean(arm)).collect()
    }

    /// PATE δ.
    pub fn pate(&self) -> f64 {
        self.clusters
            .iter()
            .flat_map(|c| c.units.iter())
            .map(|u| u.y1 - u.y0)
            .sum::<f64>()
            / self.n as f64
    }

    pub fn variance_components(&self, arm: Arm) -> VarianceComponents {
        let mu = self.mean(arm);
        let n = self.n as f64;
        let within = self.clusters.iter().map(|c| c.within_variance(arm)).collect();
        let between = self
            .clusters
            .iter()
            .map(|c| c.size() as f64 / n * (c.mean(arm) - mu).powi(2))
            .sum();
        VarianceComponents { within, between }
    }

    /// Adds `a` to every potential outcome.
    pub fn shift(&self, a: f64) -> Population {
        let mut out = self.clone();
        for c in &mut out.clusters {
            for u in &mut c.units {
                u.y1 += a;
                u.y0 += a;
            }
        }
        out
    }

    pub fn has_strata(&self) -> bool {
        self.clusters.iter().any(|c| c.stratum.is_some())
    }

    pub fn has_unit_strata(&self) -> bool {
        self.clusters.iter().any(|c| c.unit_strata.is_some())
    }

    /// Cluster strata in first-appearance order as (label, cluster indices).
    /// Every cluster must carry a label.
    pub fn strata(&self) -> Result<Vec<(String, Vec<usize>)>> {
        if let Some(c) = self.clusters.iter().find(|c| c.stratum.is_none()) {
            return Err(Error::validation(format!(
                "cluster '{}' has no stratum label but a stratified design was requested",
                c.id
            )));
        }
        let labels: Vec<&str> = self
            .clusters
            .iter()
            .map(|c| c.stratum.as_deref().unwrap_or_default())
            .collect();
        let groups = group_by_label(labels.iter().copied());
        Ok(groups
            .into_iter()
            .map(|g| (labels[g[0]].to_string(), g))
            .collect())
    }

    /// The clusters at `indices`, in that order.
    pub fn subpopulation(&self, indices: &[usize]) -> Result<Population> {
        Population::new(indices.iter().map(|&c| self.clusters[c].clone()).collect())
    }
}

fn group_by_label<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, l) in labels.enumerate() {
        match order.iter().position(|o| *o == l) {
            Some(g) => groups[g].push(i),
            None => {
                order.push(l);
                groups.push(vec![i]);
            }
        }
    }
    groups
}

pub(crate) fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, k) = xs.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    s / k as f64
}

/// Sample variance with divisor `k - 1`, 0 when `k < 2`.
pub(crate) fn sample_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let k = xs.clone().count();
    if k < 2 {
        return 0.0;
    }
    let m = mean(xs.clone());
    xs.map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64
}
