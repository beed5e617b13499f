use serde::{Deserialize, Serialize};

use crate::design::InclusionProbs;
use crate::error::{Error, Result};
use crate::estimators::{plain_mean, split_by_stratum, stratified_mean, ClusterObservation, Realization};
use crate::population::{sample_variance, Arm, Population};

/// Conservative variance estimate for the HT-PPS δ̂.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceEstimate {
    /// Raw V̂; may be negative.
    pub var_hat: f64,
    /// sqrt(max(V̂, 0)).
    pub se: f64,
    pub negative: bool,
    pub syg_treated: f64,
    pub syg_control: f64,
    pub cov_bound: f64,
    pub pi_source: String,
}

impl VarianceEstimate {
    pub(crate) fn new(syg_treated: f64, syg_control: f64, cov_bound: f64, pi_source: &str) -> Self {
        let var_hat = syg_treated + syg_control - 2.0 * cov_bound;
        VarianceEstimate {
            var_hat,
            se: var_hat.max(0.0).sqrt(),
            negative: var_hat < 0.0,
            syg_treated,
            syg_control,
            cov_bound,
            pi_source: pi_source.to_string(),
        }
    }
}

/// Row of the variance CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub estimator: String,
    pub var_hat: f64,
    pub se: f64,
    pub negative_flag: bool,
    pub pi_source: String,
    pub replicate: Option<usize>,
}

impl VarianceRow {
    pub fn new(estimator: &str, v: &VarianceEstimate, replicate: Option<usize>) -> Self {
        VarianceRow {
            estimator: estimator.to_string(),
            var_hat: v.var_hat,
            se: v.se,
            negative_flag: v.negative,
            pi_source: v.pi_source.clone(),
            replicate,
        }
    }
}

/// Sampled cluster reduced to what the variance estimators need.
struct Sampled {
    /// Index into the inclusion-probability matrix.
    local: usize,
    size: f64,
    mean: f64,
    within: f64,
}

/// Unbiased estimate of Var(μ̂_ct | cluster sampled):
/// Σ_g (n_g/n_c)² (1 − s_g/n_g) σ̂²_g / s_g over the sampling groups.
pub fn within_variance_estimate(pop: &Population, o: &ClusterObservation, unit_stratified: bool) -> Result<f64> {
    let cl = pop.cluster(o.cluster);
    let nc = cl.size();
    let groups: Vec<Vec<usize>> = match (&cl.unit_strata, unit_stratified) {
        (Some(_), true) => cl.unit_groups(),
        _ => vec![(0..nc).collect()],
    };
    let mut acc = 0.0;
    for g in groups {
        let ys: Vec<f64> = o
            .units
            .iter()
            .zip(&o.observed)
            .filter(|(k, _)| g.binary_search(k).is_ok())
            .map(|(_, &y)| y)
            .collect();
        let (ng, sg) = (g.len(), ys.len());
        if sg == ng {
            continue;
        }
        if sg < 2 {
            return Err(Error::validation(format!(
                "cluster '{}': {sg} sampled unit(s) out of {ng}; within-cluster variance is not estimable",
                cl.id
            )));
        }
        let (ngf, sgf) = (ng as f64, sg as f64);
        acc += (ngf / nc as f64).powi(2) * (1.0 - sgf / ngf) * sample_variance(ys.iter().copied()) / sgf;
    }
    Ok(acc)
}

fn sampled(
    pop: &Population,
    r: &Realization,
    arm: Arm,
    local: impl Fn(usize) -> usize,
) -> Result<Vec<Sampled>> {
    r.arm(arm)
        .map(|o| {
            let mean = if r.unit_stratified { stratified_mean(pop, o)? } else { plain_mean(o) };
            Ok(Sampled {
                local: local(o.cluster),
                size: pop.cluster(o.cluster).size() as f64,
                mean,
                within: within_variance_estimate(pop, o, r.unit_stratified)?,
            })
        })
        .collect()
}

fn joint(pi: &InclusionProbs, a: usize, b: usize) -> Result<f64> {
    let p = pi.second[a][b];
    if p > 0.0 {
        Ok(p)
    } else {
        Err(Error::numeric(format!("π_cc' = {p} for sampled pair ({a}, {b})")))
    }
}

fn syg(arm: &[Sampled], n: f64, pi: &InclusionProbs) -> Result<f64> {
    let m = arm.len();
    if m < 2 {
        return Err(Error::validation(format!(
            "the SYG estimator needs #T_t >= 2, got {m}"
        )));
    }
    let s = pi.s as f64;
    let mf = m as f64;
    let mut acc = 0.0;
    for (i, a) in arm.iter().enumerate() {
        for b in &arm[i + 1..] {
            let w = s * (s - 1.0) * a.size * b.size / (joint(pi, a.local, b.local)? * mf * (mf - 1.0) * n * n)
                - 1.0 / (mf * mf);
            acc += w * (a.mean - b.mean).powi(2);
        }
    }
    for a in arm {
        acc += a.size / n / mf * a.within;
    }
    Ok(acc)
}

fn cov_bound(t1: &[Sampled], t0: &[Sampled], n: f64, pi: &InclusionProbs) -> Result<f64> {
    let (m1, m0) = (t1.len() as f64, t0.len() as f64);
    if t1.is_empty() || t0.is_empty() {
        return Err(Error::validation("the covariance bound needs both arms nonempty"));
    }
    let s = pi.s as f64;
    let mut acc = 0.0;
    for a in t1 {
        for b in t0 {
            let w = 1.0 - a.size * b.size * s * (s - 1.0) / (n * n * joint(pi, a.local, b.local)?);
            acc += w * a.mean * b.mean / (m1 * m0);
        }
    }
    for (arm, m) in [(t1, m1), (t0, m0)] {
        for a in arm {
            acc += 0.5 * a.size / n / m * (a.within - a.mean * a.mean);
        }
    }
    Ok(acc)
}

/// SYG estimate of Var(μ̂_t,HT,PPS).
pub fn syg_var_estimate(pop: &Population, r: &Realization, pi: &InclusionProbs, arm: Arm) -> Result<f64> {
    pi.validate(pop.len())?;
    syg(&sampled(pop, r, arm, |c| c)?, pop.n() as f64, pi)
}

/// Estimate whose expectation bounds Cov(μ̂_1, μ̂_0) from below.
pub fn covariance_bound_estimate(pop: &Population, r: &Realization, pi: &InclusionProbs) -> Result<f64> {
    pi.validate(pop.len())?;
    let t1 = sampled(pop, r, Arm::Treated, |c| c)?;
    let t0 = sampled(pop, r, Arm::Control, |c| c)?;
    cov_bound(&t1, &t0, pop.n() as f64, pi)
}

/// V̂_C = SYG_1 + SYG_0 − 2 · covariance bound.
pub fn conservative_var_estimate(pop: &Population, r: &Realization, pi: &InclusionProbs) -> Result<VarianceEstimate> {
    pi.validate(pop.len())?;
    let n = pop.n() as f64;
    let t1 = sampled(pop, r, Arm::Treated, |c| c)?;
    let t0 = sampled(pop, r, Arm::Control, |c| c)?;
    Ok(VarianceEstimate::new(
        syg(&t1, n, pi)?,
        syg(&t0, n, pi)?,
        cov_bound(&t1, &t0, n, pi)?,
        pi.source(),
    ))
}

/// Σ_u (n_u/n)² V̂_C,u with stratum-local inclusion probabilities.
pub fn stratified_var_estimate(pop: &Population, r: &Realization, pis: &[InclusionProbs]) -> Result<VarianceEstimate> {
    let parts = split_by_stratum(pop, r)?;
    if parts.len() != pis.len() {
        return Err(Error::validation(format!(
            "{} strata but {} inclusion-probability sets",
            parts.len(),
            pis.len()
        )));
    }
    let n = pop.n() as f64;
    let (mut s1, mut s0, mut cb) = (0.0, 0.0, 0.0);
    for ((group, part), pi) in parts.iter().zip(pis) {
        pi.validate(group.len())?;
        let local = |c: usize| group.binary_search(&c).expect("cluster belongs to its stratum");
        let nu: f64 = group.iter().map(|&c| pop.cluster(c).size() as f64).sum();
        let t1 = sampled(pop, part, Arm::Treated, local)?;
        let t0 = sampled(pop, part, Arm::Control, local)?;
        let w = (nu / n).powi(2);
        s1 += w * syg(&t1, nu, pi)?;
        s0 += w * syg(&t0, nu, pi)?;
        cb += w * cov_bound(&t1, &t0, nu, pi)?;
    }
    Ok(VarianceEstimate::new(s1, s0, cb, pis.first().map_or("exact", |p| p.source())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{joint_inclusion, PiMethod, Scheme};

    fn obs(cluster: usize, arm: Arm, observed: &[f64]) -> ClusterObservation {
        ClusterObservation { cluster, arm, units: (0..observed.len()).collect(), observed: observed.to_vec() }
    }

    fn pop6() -> Population {
        Population::from_outcomes(
            [2usize, 3, 1, 2, 3, 2].iter().map(|&k| vec![(1.0, 1.0); k]).collect(),
        )
        .unwrap()
    }

    fn pi6() -> InclusionProbs {
        joint_inclusion(&pop6().sizes(), 4, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap()
    }

    #[test]
    fn equal_means_under_census_give_zero_syg() {
        let p = pop6();
        let r = Realization {
            clusters: vec![
                obs(0, Arm::Treated, &[2.0, 2.0]),
                obs(1, Arm::Treated, &[2.0, 2.0, 2.0]),
                obs(3, Arm::Control, &[1.0, 1.0]),
                obs(4, Arm::Control, &[1.0, 1.0, 1.0]),
            ],
            unit_stratified: false,
            seed: None,
        };
        assert_eq!(syg_var_estimate(&p, &r, &pi6(), Arm::Treated).unwrap(), 0.0);
    }

    #[test]
    fn single_cluster_arm_is_rejected() {
        let p = pop6();
        let r = Realization {
            clusters: vec![
                obs(0, Arm::Treated, &[2.0, 2.0]),
                obs(1, Arm::Control, &[2.0, 2.0, 2.0]),
                obs(3, Arm::Control, &[1.0, 1.0]),
                obs(4, Arm::Control, &[1.0, 1.0, 1.0]),
            ],
            unit_stratified: false,
            seed: None,
        };
        assert!(syg_var_estimate(&p, &r, &pi6(), Arm::Treated).is_err());
    }

    #[test]
    fn single_sampled_unit_in_larger_cluster_is_rejected() {
        let p = pop6();
        let o = ClusterObservation { cluster: 1, arm: Arm::Treated, units: vec![0], observed: vec![1.0] };
        assert!(within_variance_estimate(&p, &o, false).is_err());
        let single = obs(2, Arm::Treated, &[1.0]);
        assert_eq!(within_variance_estimate(&p, &single, false).unwrap(), 0.0);
    }

    #[test]
    fn zero_means_leave_only_plug_in_terms() {
        let p = pop6();
        let pi = pi6();
        let r = Realization {
            clusters: vec![
                ClusterObservation { cluster: 1, arm: Arm::Treated, units: vec![0, 1], observed: vec![-1.0, 1.0] },
                obs(2, Arm::Treated, &[0.0]),
                ClusterObservation { cluster: 4, arm: Arm::Control, units: vec![0, 2], observed: vec![2.0, -2.0] },
                obs(5, Arm::Control, &[0.0, 0.0]),
            ],
            unit_stratified: false,
            seed: None,
        };
        let n = 13.0;
        // σ̂² = 2 and 8 in the two sampled-down clusters of size 3, s_c = 2.
        let v1 = (1.0 - 2.0 / 3.0) * 2.0 / 2.0;
        let v0 = (1.0 - 2.0 / 3.0) * 8.0 / 2.0;
        let want = 0.5 * (3.0 / n / 2.0 * v1) + 0.5 * (3.0 / n / 2.0 * v0);
        let got = covariance_bound_estimate(&p, &r, &pi).unwrap();
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    #[test]
    fn hand_expansion_two_plus_two() {
        let p = pop6();
        let pi = pi6();
        let r = Realization {
            clusters: vec![
                obs(0, Arm::Treated, &[3.0, 3.0]),
                obs(1, Arm::Control, &[1.0, 1.0, 1.0]),
                obs(3, Arm::Treated, &[5.0, 5.0]),
                obs(4, Arm::Control, &[2.0, 2.0, 2.0]),
            ],
            unit_stratified: false,
            seed: None,
        };
        let (n, s) = (13.0, 4.0);
        let size = [2.0, 3.0, 1.0, 2.0, 3.0, 2.0];
        let p2 = |a: usize, b: usize| pi.second[a][b];
        let syg1 = (s * (s - 1.0) * size[0] * size[3] / (p2(0, 3) * 2.0 * n * n) - 0.25) * 4.0;
        let syg0 = (s * (s - 1.0) * size[1] * size[4] / (p2(1, 4) * 2.0 * n * n) - 0.25) * 1.0;
        let mut cross = 0.0;
        for (a, ma) in [(0usize, 3.0), (3, 5.0)] {
            for (b, mb) in [(1usize, 1.0), (4, 2.0)] {
                cross += (1.0 - size[a] * size[b] * s * (s - 1.0) / (n * n * p2(a, b))) * ma * mb / 4.0;
            }
        }
        let sq = 0.5 * (size[0] / n / 2.0 * 9.0 + size[3] / n / 2.0 * 25.0)
            + 0.5 * (size[1] / n / 2.0 * 1.0 + size[4] / n / 2.0 * 4.0);
        let cb = cross - sq;
        let v = conservative_var_estimate(&p, &r, &pi).unwrap();
        assert!((v.syg_treated - syg1).abs() < 1e-12);
        assert!((v.syg_control - syg0).abs() < 1e-12);
        assert!((v.cov_bound - cb).abs() < 1e-12);
        assert!((v.var_hat - (syg1 + syg0 - 2.0 * cb)).abs() < 1e-12);
        assert_eq!(v.pi_source, "exact");
    }

    #[test]
    fn negative_estimate_is_flagged_not_clamped() {
        let v = VarianceEstimate::new(0.1, 0.1, 1.0, "exact");
        assert!(v.negative);
        assert!(v.var_hat < 0.0);
        assert_eq!(v.se, 0.0);
    }
}
