use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Cluster, Population, Unit};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeDist {
    Uniform { min: usize, max: usize },
    Explicit(Vec<usize>),
}

/// Cluster baseline mean `intercept + slope * n_c`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Constant(f64),
    /// Cluster effect `intercept + slope * n_c`.
    SizeCorrelated { intercept: f64, slope: f64 },
}

impl Effect {
    fn at(&self, size: usize) -> f64 {
        match *self {
            Effect::Constant(v) => v,
            Effect::SizeCorrelated { intercept, slope } => intercept + slope * size as f64,
        }
    }
}

/// Parametric generator standing in for an observed cluster frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// ℓ; may be omitted with explicit sizes.
    #[serde(default)]
    pub clusters: Option<usize>,
    pub sizes: SizeDist,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default)]
    pub cluster_noise: f64,
    #[serde(default)]
    pub unit_noise: f64,
    pub effect: Effect,
    /// Unit-level noise on the treatment effect.
    #[serde(default)]
    pub effect_noise: f64,
    /// Reject size draws that violate `n_c * s <= n` for this s.
    #[serde(default)]
    pub target_s: Option<usize>,
    /// Split clusters into this many strata of consecutive size rank.
    #[serde(default)]
    pub strata: Option<usize>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Population> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let sizes = self.draw_sizes(&mut rng)?;
        let n: usize = sizes.iter().sum();
        if let Some(s) = self.target_s {
            if s == 0 || s > sizes.len() {
                return Err(Error::validation(format!(
                    "target s = {s} outside 1..={}",
                    sizes.len()
                )));
            }
            if let Some((c, &nc)) = sizes.iter().enumerate().find(|(_, &nc)| nc * s > n) {
                return Err(Error::validation(format!(
                    "infeasible sizes: cluster {} has n_c = {nc} > n/s = {n}/{s}",
                    c + 1
                )));
            }
        }

        let stratum_of = self.stratum_labels(&sizes)?;
        let mut clusters = Vec::with_capacity(sizes.len());
        for (c, &nc) in sizes.iter().enumerate() {
            let base = self.baseline.intercept
                + self.baseline.slope * nc as f64
                + self.cluster_noise * rng.sample::<f64, _>(StandardNormal);
            let tau = self.effect.at(nc);
            let units = (0..nc)
                .map(|_| {
                    let y0 = base + self.unit_noise * rng.sample::<f64, _>(StandardNormal);
                    let y1 = y0 + tau + self.effect_noise * rng.sample::<f64, _>(StandardNormal);
                    Unit { y1, y0 }
                })
                .collect();
            let mut cluster = Cluster::new(format!("c{}", c + 1), units);
            if let Some(labels) = &stratum_of {
                cluster.stratum = Some(labels[c].clone());
            }
            clusters.push(cluster);
        }
        Population::new(clusters)
    }

    fn draw_sizes(&self, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        match &self.sizes {
            SizeDist::Uniform { min, max } => {
                let ell = self
                    .clusters
                    .ok_or_else(|| Error::validation("uniform sizes need 'clusters'"))?;
                if *min == 0 || min > max {
                    return Err(Error::validation(format!("invalid size range {min}..={max}")));
                }
                Ok((0..ell).map(|_| rng.random_range(*min..=*max)).collect())
            }
            SizeDist::Explicit(v) => {
                if let Some(ell) = self.clusters {
                    if ell != v.len() {
                        return Err(Error::validation(format!(
                            "clusters = {ell} but {} explicit sizes",
                            v.len()
                        )));
                    }
                }
                if v.contains(&0) {
                    return Err(Error::validation("cluster sizes must be positive"));
                }
                Ok(v.clone())
            }
        }
    }

    fn stratum_labels(&self, sizes: &[usize]) -> Result<Option<Vec<String>>> {
        let Some(k) = self.strata else { return Ok(None) };
        if k == 0 || k > sizes.len() {
            return Err(Error::validation(format!("cannot form {k} strata from {} clusters", sizes.len())));
        }
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by_key(|&c| (sizes[c], c));
        let mut labels = vec![String::new(); sizes.len()];
        for (rank, &c) in order.iter().enumerate() {
            labels[c] = format!("u{}", rank * k / sizes.len() + 1);
        }
        Ok(Some(labels))
    }
}
