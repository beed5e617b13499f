use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WithinSize;
use crate::error::{Error, Result};
use crate::population::Population;

/// Units of one sampling group inside a cluster and how many to draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WithinGroup {
    pub units: Vec<usize>,
    pub take: usize,
}

/// Within-cluster sample sizes for all ℓ clusters, fixed before any
/// cluster is drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct WithinPlan {
    /// One entry per cluster; a single group unless unit-stratified.
    pub groups: Vec<Vec<WithinGroup>>,
    pub unit_stratified: bool,
}

impl WithinPlan {
    pub fn new(pop: &Population, within: &WithinSize, unit_within: Option<&WithinSize>) -> Result<Self> {
        let mut groups = Vec::with_capacity(pop.len());
        for (c, cluster) in pop.clusters().iter().enumerate() {
            let context = |e: Error| Error::validation(format!("cluster '{}': {e}", cluster.id));
            let g = match unit_within {
                None => vec![WithinGroup {
                    units: (0..cluster.size()).collect(),
                    take: within.size_for(cluster.size(), c).map_err(context)?,
                }],
                Some(WithinSize::Explicit(_)) => {
                    return Err(Error::validation(
                        "unit-stratum sizes must be census, constant or proportion",
                    ))
                }
                Some(rule) => cluster
                    .unit_groups()
                    .into_iter()
                    .map(|units| {
                        let take = rule.size_for(units.len(), c).map_err(context)?;
                        Ok(WithinGroup { units, take })
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            groups.push(g);
        }
        Ok(WithinPlan { groups, unit_stratified: unit_within.is_some() })
    }

    /// s_c for cluster `c`.
    pub fn sample_size(&self, c: usize) -> usize {
        self.groups[c].iter().map(|g| g.take).sum()
    }

    pub fn is_census(&self, c: usize) -> bool {
        self.groups[c].iter().all(|g| g.take == g.units.len())
    }
}

/// Independent SRS within each group of each sampled cluster. Returns the
/// ascending unit indices per cluster, parallel to `clusters`.
pub fn draw_within<R: Rng + ?Sized>(plan: &WithinPlan, clusters: &[usize], rng: &mut R) -> Vec<Vec<usize>> {
    clusters
        .iter()
        .map(|&c| {
            let mut units = Vec::with_capacity(plan.sample_size(c));
            for g in &plan.groups[c] {
                if g.take == g.units.len() {
                    units.extend_from_slice(&g.units);
                } else {
                    units.extend(
                        rand::seq::index::sample(rng, g.units.len(), g.take)
                            .into_iter()
                            .map(|i| g.units[i]),
                    );
                }
            }
            units.sort_unstable();
            units
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{Cluster, Unit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pop() -> Population {
        let u = |k: usize| vec![Unit::new(1.0, 0.0); k];
        Population::new(vec![
            Cluster::new("a", u(4)).with_unit_strata(vec!["x".into(), "y".into(), "x".into(), "y".into()]),
            Cluster::new("b", u(5)),
        ])
        .unwrap()
    }

    #[test]
    fn census_takes_everything() {
        let p = pop();
        let plan = WithinPlan::new(&p, &WithinSize::Census, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(draw_within(&plan, &[0, 1], &mut rng), vec![vec![0, 1, 2, 3], vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn unit_strata_census_takes_everything() {
        let p = pop();
        let plan = WithinPlan::new(&p, &WithinSize::Census, Some(&WithinSize::Census)).unwrap();
        assert_eq!(plan.groups[0].len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(draw_within(&plan, &[0], &mut rng), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn unit_strata_draw_one_per_stratum() {
        let p = pop();
        let plan = WithinPlan::new(&p, &WithinSize::Census, Some(&WithinSize::Constant(1))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = &draw_within(&plan, &[0], &mut rng)[0];
            assert_eq!(d.len(), 2);
            assert_eq!(d.iter().filter(|&&k| k % 2 == 0).count(), 1);
        }
    }

    #[test]
    fn oversize_rejected() {
        assert!(WithinPlan::new(&pop(), &WithinSize::Constant(5), None).is_err());
    }

    #[test]
    fn unit_inclusion_moments() {
        let p = pop();
        let plan = WithinPlan::new(&p, &WithinSize::Constant(2), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 200_000;
        let mut single = [0usize; 5];
        let mut pair = 0usize;
        for _ in 0..draws {
            let d = &draw_within(&plan, &[1], &mut rng)[0];
            for &k in d {
                single[k] += 1;
            }
            if d.contains(&0) && d.contains(&1) {
                pair += 1;
            }
        }
        let p1 = 2.0 / 5.0;
        let se1 = (p1 * (1.0 - p1) / draws as f64).sqrt();
        for h in single {
            assert!((h as f64 / draws as f64 - p1).abs() < 4.0 * se1);
        }
        let p2 = 2.0 * 1.0 / (5.0 * 4.0);
        let se2 = (p2 * (1.0 - p2) / draws as f64).sqrt();
        assert!((pair as f64 / draws as f64 - p2).abs() < 4.0 * se2);
    }
}
