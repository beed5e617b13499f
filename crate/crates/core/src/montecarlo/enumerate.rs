use serde::Serialize;

use super::Experiment;
use crate::design::{for_each_combination, mask_indices, ClusterSampler, DesignPlan, DesignSpec, InclusionProbs, WithinPlan};
use crate::error::{Error, Result};
use crate::estimators::{ClusterObservation, EstimatorKind, Realization};
use crate::population::{Arm, Population};

/// Largest number of joint outcomes `enumerate` will visit.
pub const MAX_OUTCOMES: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k as u128).fold(1u128, |acc, i| acc.saturating_mul(n as u128 - i) / (i + 1))
}

fn cartesian(lens: &[usize], mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    if lens.contains(&0) {
        return Ok(());
    }
    let mut idx = vec![0; lens.len()];
    loop {
        f(&idx)?;
        let mut k = lens.len();
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < lens[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Positive-probability cluster samples of each group, as global indices.
fn group_supports(plan: &DesignPlan) -> Result<Vec<Vec<(Vec<usize>, f64)>>> {
    plan.groups
        .iter()
        .zip(&plan.samplers)
        .map(|(g, sampler)| {
            let mut out = Vec::new();
            match sampler {
                ClusterSampler::Srs { ell, s } => {
                    if binomial(*ell, *s) > MAX_OUTCOMES {
                        return Err(too_many());
                    }
                    let p = 1.0 / binomial(*ell, *s) as f64;
                    for_each_combination(*ell, *s, |idx| out.push((idx.iter().map(|&i| g[i]).collect(), p)));
                }
                ClusterSampler::Exact(cp) => {
                    for (mask, p) in cp.support() {
                        if p > 0.0 {
                            out.push((mask_indices(mask).into_iter().map(|i| g[i]).collect(), p));
                        }
                    }
                }
                ClusterSampler::Sunter(_) => {
                    return Err(Error::validation(
                        "the sequential PPS sampler has no closed-form design; enumerate with srs or ppswor-exact",
                    ))
                }
            }
            Ok(out)
        })
        .collect()
}

fn too_many() -> Error {
    Error::validation(format!("enumeration would exceed {MAX_OUTCOMES} outcomes"))
}

fn within_count(plan: &WithinPlan, c: usize) -> u128 {
    plan.groups[c]
        .iter()
        .fold(1u128, |acc, g| acc.saturating_mul(binomial(g.units.len(), g.take)))
}

/// Every possible within-cluster sample of cluster `c`, each ascending.
fn unit_sets(plan: &WithinPlan, c: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
    for g in &plan.groups[c] {
        let mut choices = Vec::new();
        for_each_combination(g.units.len(), g.take, |idx| {
            choices.push(idx.iter().map(|&i| g.units[i]).collect::<Vec<usize>>())
        });
        sets = sets
            .iter()
            .flat_map(|prefix| {
                choices.iter().map(move |ch| {
                    let mut v = prefix.clone();
                    v.extend_from_slice(ch);
                    v
                })
            })
            .collect();
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// Number of (sample, assignment, unit sample) outcomes of the design.
pub fn outcome_count(pop: &Population, spec: &DesignSpec) -> Result<u128> {
    let plan = DesignPlan::new(pop, spec)?;
    count(&plan, &group_supports(&plan)?)
}

fn count(plan: &DesignPlan, supports: &[Vec<(Vec<usize>, f64)>]) -> Result<u128> {
    let labelings = binomial(plan.spec.s, plan.spec.treated);
    let mut total = 1u128;
    for support in supports {
        let mut group = 0u128;
        for (sample, _) in support {
            let w = sample
                .iter()
                .fold(labelings, |acc, &c| acc.saturating_mul(within_count(&plan.within, c)));
            group = group.saturating_add(w);
        }
        total = total.saturating_mul(group);
    }
    Ok(total)
}

/// Visits every outcome of the design with its probability. Returns the
/// number of outcomes.
pub fn enumerate<F>(pop: &Population, spec: &DesignSpec, mut visit: F) -> Result<u128>
where
    F: FnMut(&Realization, f64) -> Result<()>,
{
    let plan = DesignPlan::new(pop, spec)?;
    let supports = group_supports(&plan)?;
    let total = count(&plan, &supports)?;
    if total > MAX_OUTCOMES {
        return Err(too_many());
    }
    let mut units_cache: Vec<Option<Vec<Vec<usize>>>> = vec![None; pop.len()];
    let mut labelings = Vec::new();
    for_each_combination(spec.s, spec.treated, |idx| labelings.push(idx.to_vec()));
    let p_label = 1.0 / labelings.len() as f64;
    let unit_stratified = plan.within.unit_stratified;

    let support_lens: Vec<usize> = supports.iter().map(Vec::len).collect();
    let mut visited = 0u128;
    cartesian(&support_lens, |pick| {
        let mut p_sample = 1.0;
        let mut arms: Vec<(usize, Vec<usize>)> = Vec::new();
        for (g, &i) in pick.iter().enumerate() {
            let (sample, p) = &supports[g][i];
            p_sample *= p;
            arms.push((g, sample.clone()));
        }
        let label_lens = vec![labelings.len(); arms.len()];
        cartesian(&label_lens, |lab| {
            let p_assign = p_label.powi(lab.len() as i32);
            let mut sampled: Vec<(usize, Arm)> = Vec::new();
            for ((_, sample), &l) in arms.iter().zip(lab) {
                for (k, &c) in sample.iter().enumerate() {
                    let arm = if labelings[l].contains(&k) { Arm::Treated } else { Arm::Control };
                    sampled.push((c, arm));
                }
            }
            sampled.sort_unstable_by_key(|x| x.0);
            for &(c, _) in &sampled {
                if units_cache[c].is_none() {
                    units_cache[c] = Some(unit_sets(&plan.within, c));
                }
            }
            let options: Vec<&Vec<Vec<usize>>> =
                sampled.iter().map(|&(c, _)| units_cache[c].as_ref().expect("filled")).collect();
            let lens: Vec<usize> = options.iter().map(|o| o.len()).collect();
            let p_units: f64 = lens.iter().map(|&l| 1.0 / l as f64).product();
            cartesian(&lens, |u| {
                let clusters = sampled
                    .iter()
                    .zip(u)
                    .zip(&options)
                    .map(|((&(c, arm), &j), opts)| {
                        let units = opts[j].clone();
                        let cl = pop.cluster(c);
                        let observed = units.iter().map(|&k| cl.units[k].outcome(arm)).collect();
                        ClusterObservation { cluster: c, arm, units, observed }
                    })
                    .collect();
                let r = Realization { clusters, unit_stratified, seed: None };
                visited += 1;
                visit(&r, p_sample * p_assign * p_units)
            })
        })
    })?;
    Ok(visited)
}

/// Exact moments of one estimator over the design distribution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnumeratedMoments {
    pub estimator: EstimatorKind,
    pub mean: f64,
    pub variance: f64,
    pub bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnumerationReport {
    pub outcomes: u64,
    pub total_probability: f64,
    pub pate: f64,
    pub estimators: Vec<EnumeratedMoments>,
    /// E[V̂_C], E[SYG_1], E[SYG_0]; present when inclusion probabilities
    /// were supplied.
    pub mean_var_hat: Option<f64>,
    pub mean_syg_treated: Option<f64>,
    pub mean_syg_control: Option<f64>,
}

impl EnumerationReport {
    pub fn moments(&self, e: EstimatorKind) -> Option<&EnumeratedMoments> {
        self.estimators.iter().find(|m| m.estimator == e)
    }
}

/// Exact mean and variance of every estimator, plus E of the variance
/// estimator when `pis` is given (one set per stratum).
pub fn enumerate_report(
    pop: &Population,
    spec: &DesignSpec,
    estimators: &[EstimatorKind],
    theta: f64,
    pis: Option<Vec<InclusionProbs>>,
) -> Result<EnumerationReport> {
    let mut ex = Experiment::new(pop, spec, estimators.to_vec(), theta)?;
    if let Some(p) = pis {
        ex = ex.with_inclusion(p)?;
    }
    let mut probs = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); estimators.len()];
    let mut var = [0.0; 3];
    let mut has_var = false;
    let outcomes = enumerate(pop, spec, |r, p| {
        let (est, v) = ex.evaluate(r)?;
        probs.push(p);
        for (vals, e) in values.iter_mut().zip(&est) {
            vals.push(e.delta_hat);
        }
        if let Some(v) = v {
            has_var = true;
            var[0] += p * v.var_hat;
            var[1] += p * v.syg_treated;
            var[2] += p * v.syg_control;
        }
        Ok(())
    })?;
    let total_probability: f64 = probs.iter().sum();
    let pate = pop.pate();
    let moments = estimators
        .iter()
        .zip(&values)
        .map(|(&estimator, vals)| {
            let mean: f64 = vals.iter().zip(&probs).map(|(x, p)| x * p).sum();
            let variance = vals.iter().zip(&probs).map(|(x, p)| p * (x - mean).powi(2)).sum();
            EnumeratedMoments { estimator, mean, variance, bias: mean - pate }
        })
        .collect();
    let opt = |x: f64| has_var.then_some(x);
    Ok(EnumerationReport {
        outcomes: outcomes as u64,
        total_probability,
        pate,
        estimators: moments,
        mean_var_hat: opt(var[0]),
        mean_syg_treated: opt(var[1]),
        mean_syg_control: opt(var[2]),
    })
}
