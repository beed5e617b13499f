use serde::Serialize;

use crate::design::{InclusionProbs, WithinPlan};
use crate::error::{Error, Result};
use crate::population::{sample_variance, Arm, Population};

/// Exact (or, for DIM, linearised) design variance of an estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoreticalVariance {
    pub estimator: String,
    pub var_delta: f64,
    pub var_mu1: f64,
    pub var_mu0: f64,
    pub cov: f64,
    /// Named additive pieces of `var_delta`.
    pub components: Vec<(String, f64)>,
    pub approximate: bool,
}

impl TheoreticalVariance {
    fn from_parts(estimator: &str, var_mu1: f64, var_mu0: f64, cov: f64) -> Self {
        TheoreticalVariance {
            estimator: estimator.to_string(),
            var_delta: var_mu1 + var_mu0 - 2.0 * cov,
            var_mu1,
            var_mu0,
            cov,
            components: Vec::new(),
            approximate: false,
        }
    }

    pub fn var_mu(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.var_mu1,
            Arm::Control => self.var_mu0,
        }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Var(μ̂_ct | cluster sampled) = Σ_g (n_g/n_c)² (1 − s_g/n_g) σ²_g / s_g
/// over the plan's sampling groups in cluster `c`.
pub fn within_mean_variance(pop: &Population, plan: &WithinPlan, c: usize, arm: Arm) -> f64 {
    let cl = pop.cluster(c);
    let nc = cl.size() as f64;
    plan.groups[c]
        .iter()
        .map(|g| {
            let ng = g.units.len() as f64;
            let sg = g.take as f64;
            if g.take == g.units.len() {
                return 0.0;
            }
            let var = sample_variance(g.units.iter().map(|&k| cl.units[k].outcome(arm)));
            (ng / nc).powi(2) * (1.0 - sg / ng) * var / sg
        })
        .sum()
}

fn arm_counts(s: usize, treated: usize) -> Result<(f64, f64)> {
    if treated == 0 || treated >= s {
        return Err(Error::validation(format!("#T_1 = {treated} leaves an empty arm with s = {s}")));
    }
    Ok((treated as f64, (s - treated) as f64))
}

fn check_pi(pop: &Population, pi: &InclusionProbs) -> Result<()> {
    pi.validate(pop.len())?;
    if pi.s < 2 {
        return Err(Error::validation("variance formulas need s >= 2"));
    }
    Ok(())
}

/// Exact Var(δ̂_HT,PPS) under a PPS design with inclusion probabilities
/// `pi`, written term by term:
///
/// Var(μ̂_t) = σ²_t,bet / #T_t
///          + (1 − 1/#T_t)(Σ_{c≠c'} π_cc'/(s(s−1)) μ_ct μ_c't − μ_t²)
///          + (1/#T_t) Σ_c (n_c/n) Var(μ̂_ct)
///
/// Cov(μ̂_1, μ̂_0) = Σ_{c≠c'} π_cc'/(s(s−1)) μ_c1 μ_c'0 − μ_1 μ_0.
pub fn true_var_ht_pps(
    pop: &Population,
    plan: &WithinPlan,
    pi: &InclusionProbs,
    treated: usize,
) -> Result<TheoreticalVariance> {
    check_pi(pop, pi)?;
    let s = pi.s;
    let (m1, m0) = arm_counts(s, treated)?;
    let ss1 = (s * (s - 1)) as f64;
    let n = pop.n() as f64;
    let ell = pop.len();
    let sizes = pop.sizes();

    let mut var = [0.0; 2];
    let mut between = 0.0;
    let mut cross = 0.0;
    let mut within = 0.0;
    for arm in Arm::BOTH {
        let m = if arm == Arm::Treated { m1 } else { m0 };
        let mu_c = pop.cluster_means(arm);
        let mu = pop.mean(arm);
        let sigma_bet = pop.variance_components(arm).between;
        let mut pair = 0.0;
        for a in 0..ell {
            for b in 0..ell {
                if a != b {
                    pair += pi.second[a][b] / ss1 * mu_c[a] * mu_c[b];
                }
            }
        }
        let w: f64 = (0..ell)
            .map(|c| sizes[c] as f64 / n * within_mean_variance(pop, plan, c, arm))
            .sum();
        let b_t = sigma_bet / m;
        let x_t = (1.0 - 1.0 / m) * (pair - mu * mu);
        let w_t = w / m;
        var[arm.index()] = b_t + x_t + w_t;
        between += b_t;
        cross += x_t;
        within += w_t;
    }

    let mu1 = pop.cluster_means(Arm::Treated);
    let mu0 = pop.cluster_means(Arm::Control);
    let mut cov = -pop.mean(Arm::Treated) * pop.mean(Arm::Control);
    for a in 0..ell {
        for b in 0..ell {
            if a != b {
                cov += pi.second[a][b] / ss1 * mu1[a] * mu0[b];
            }
        }
    }

    let mut tv = TheoreticalVariance::from_parts("ht-pps", var[1], var[0], cov);
    tv.components = vec![
        ("between".into(), between),
        ("cross".into(), cross),
        ("within".into(), within),
        ("covariance".into(), -2.0 * cov),
    ];
    Ok(tv)
}

/// Variance and covariance of μ̂_t = Σ_c (S_c T_ct / #T_t) z_ct for any
/// fixed-size design, where E(z_ct) = `a[t][c]` and the within-cluster
/// variance of z_ct is `v[t][c]`. Arrays are indexed by `Arm::index`.
/// Returns (Var μ̂_1, Var μ̂_0, Cov).
pub fn linear_variance(
    pi: &InclusionProbs,
    treated: usize,
    a: &[Vec<f64>; 2],
    v: &[Vec<f64>; 2],
) -> Result<(f64, f64, f64)> {
    let s = pi.s;
    let (m1, m0) = arm_counts(s, treated)?;
    let sf = s as f64;
    let ss1 = (s * (s - 1)) as f64;
    let ell = pi.len();
    let mean = |t: usize| (0..ell).map(|c| pi.first[c] * a[t][c] / sf).sum::<f64>();

    let var_of = |t: usize, m: f64| {
        let mut acc = 0.0;
        for c in 0..ell {
            acc += pi.first[c] / (sf * m) * (a[t][c] * a[t][c] + v[t][c]);
            for d in 0..ell {
                if d != c {
                    acc += pi.second[c][d] * (m - 1.0) / (m * ss1) * a[t][c] * a[t][d];
                }
            }
        }
        acc - mean(t).powi(2)
    };
    let mut cov = -mean(1) * mean(0);
    for c in 0..ell {
        for d in 0..ell {
            if d != c {
                cov += pi.second[c][d] / ss1 * a[1][c] * a[0][d];
            }
        }
    }
    Ok((var_of(1, m1), var_of(0, m0), cov))
}

fn srs_pi(ell: usize, s: usize) -> InclusionProbs {
    let p1 = s as f64 / ell as f64;
    let p2 = (s * (s - 1)) as f64 / (ell * (ell - 1)) as f64;
    InclusionProbs {
        method: crate::design::PiMethod::ExactEnum,
        s,
        first: vec![p1; ell],
        second: (0..ell)
            .map(|a| (0..ell).map(|b| if a == b { p1 } else { p2 }).collect())
            .collect(),
        mc_se: None,
    }
}

fn plain_within(plan: &WithinPlan) -> Result<()> {
    if plan.unit_stratified {
        return Err(Error::validation(
            "SRS-family variance formulas assume unstratified within-cluster sampling",
        ));
    }
    Ok(())
}

fn srs_terms(pop: &Population, plan: &WithinPlan, theta: f64) -> ([Vec<f64>; 2], [Vec<f64>; 2]) {
    let ell = pop.len() as f64;
    let n = pop.n() as f64;
    let mut a: [Vec<f64>; 2] = Default::default();
    let mut v: [Vec<f64>; 2] = Default::default();
    for arm in Arm::BOTH {
        for (c, cl) in pop.clusters().iter().enumerate() {
            let nc = cl.size() as f64;
            let k = ell * nc / n;
            a[arm.index()].push(k * (cl.mean(arm) - theta / nc * (nc - n / ell)));
            v[arm.index()].push(k * k * within_mean_variance(pop, plan, c, arm));
        }
    }
    (a, v)
}

fn srs_variance(
    name: &str,
    pop: &Population,
    plan: &WithinPlan,
    s: usize,
    treated: usize,
    theta: f64,
) -> Result<TheoreticalVariance> {
    plain_within(plan)?;
    if s < 2 || s > pop.len() {
        return Err(Error::validation(format!("s = {s} outside 2..={}", pop.len())));
    }
    let (a, v) = srs_terms(pop, plan, theta);
    let (v1, v0, cov) = linear_variance(&srs_pi(pop.len(), s), treated, &a, &v)?;
    Ok(TheoreticalVariance::from_parts(name, v1, v0, cov))
}

/// Exact Var(δ̂_HT,SRS) under SRS of clusters.
pub fn true_var_ht_srs(pop: &Population, plan: &WithinPlan, s: usize, treated: usize) -> Result<TheoreticalVariance> {
    srs_variance("ht-srs", pop, plan, s, treated, 0.0)
}

/// Exact Var(δ̂_DR) for a fixed θ under SRS: the HT-SRS form applied to
/// the transformed means μ_ct − (θ/n_c)(n_c − n/ℓ).
pub fn true_var_dr(
    pop: &Population,
    plan: &WithinPlan,
    s: usize,
    treated: usize,
    theta: f64,
) -> Result<TheoreticalVariance> {
    srs_variance("dr", pop, plan, s, treated, theta)
}

/// First-order Taylor approximation of Var(δ̂_DIM) under SRS. With
/// τ*_ct = s_c μ_ct and μ*_t = Σ τ*_ct / Σ s_c, μ̂_t is linearised as
/// μ*_t + Σ_c (S_c T_ct / #T_t)(ℓ/Σ s_c)(τ̂_ct − μ*_t s_c).
pub fn approx_var_dim(pop: &Population, plan: &WithinPlan, s: usize, treated: usize) -> Result<TheoreticalVariance> {
    plain_within(plan)?;
    if s < 2 || s > pop.len() {
        return Err(Error::validation(format!("s = {s} outside 2..={}", pop.len())));
    }
    let ell = pop.len();
    let sc: Vec<f64> = (0..ell).map(|c| plan.sample_size(c) as f64).collect();
    let total_s: f64 = sc.iter().sum();
    let k = ell as f64 / total_s;
    let mut a: [Vec<f64>; 2] = Default::default();
    let mut v: [Vec<f64>; 2] = Default::default();
    for arm in Arm::BOTH {
        let tau: Vec<f64> = (0..ell).map(|c| sc[c] * pop.cluster(c).mean(arm)).collect();
        let mu_star = tau.iter().sum::<f64>() / total_s;
        for c in 0..ell {
            a[arm.index()].push(k * (tau[c] - mu_star * sc[c]));
            // Var(τ̂_ct) = s_c² Var(μ̂_ct).
            v[arm.index()].push(k * k * sc[c] * sc[c] * within_mean_variance(pop, plan, c, arm));
        }
    }
    let (v1, v0, cov) = linear_variance(&srs_pi(ell, s), treated, &a, &v)?;
    let mut tv = TheoreticalVariance::from_parts("dim", v1, v0, cov);
    tv.approximate = true;
    Ok(tv)
}

/// Var(δ̂_CS) = Σ_u (n_u/n)² Var(δ̂_u), strata sampled and randomised
/// independently. `pis` holds one set of inclusion probabilities per
/// stratum (stratum-local indices, stratum order of [`Population::strata`]).
pub fn stratified_true_var(
    pop: &Population,
    plan: &WithinPlan,
    pis: &[InclusionProbs],
    treated: usize,
) -> Result<TheoreticalVariance> {
    let strata = pop.strata()?;
    if strata.len() != pis.len() {
        return Err(Error::validation(format!(
            "{} strata but {} inclusion-probability sets",
            strata.len(),
            pis.len()
        )));
    }
    let n = pop.n() as f64;
    let mut out = TheoreticalVariance::from_parts("cs-ht-pps", 0.0, 0.0, 0.0);
    for ((label, group), pi) in strata.iter().zip(pis) {
        let sub = pop.subpopulation(group)?;
        let sub_plan = WithinPlan {
            groups: group.iter().map(|&c| plan.groups[c].clone()).collect(),
            unit_stratified: plan.unit_stratified,
        };
        let w = (sub.n() as f64 / n).powi(2);
        let tv = true_var_ht_pps(&sub, &sub_plan, pi, treated)?;
        out.var_mu1 += w * tv.var_mu1;
        out.var_mu0 += w * tv.var_mu0;
        out.cov += w * tv.cov;
        out.components.push((format!("stratum:{label}"), w * tv.var_delta));
    }
    out.var_delta = out.var_mu1 + out.var_mu0 - 2.0 * out.cov;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{joint_inclusion, PiMethod, Scheme, WithinSize};

    fn small() -> Population {
        Population::from_outcomes(vec![
            vec![(5.0, 1.0)],
            vec![(5.0, 1.0), (7.0, 3.0)],
            vec![(2.0, 2.0), (3.0, 2.5), (1.0, 2.0)],
            vec![(4.0, 0.0), (6.0, 2.0)],
        ])
        .unwrap()
    }

    fn census(p: &Population) -> WithinPlan {
        WithinPlan::new(p, &WithinSize::Census, None).unwrap()
    }

    #[test]
    fn equal_means_and_no_within_variance_give_zero() {
        let p = Population::from_outcomes(vec![vec![(3.0, 3.0); 2], vec![(3.0, 3.0); 1], vec![(3.0, 3.0); 3]]).unwrap();
        let pi = joint_inclusion(&p.sizes(), 2, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap();
        let tv = true_var_ht_pps(&p, &census(&p), &pi, 1).unwrap();
        assert!(tv.var_delta.abs() < 1e-14);
    }

    #[test]
    fn census_kills_within_term() {
        let p = small();
        let pi = joint_inclusion(&p.sizes(), 2, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap();
        let tv = true_var_ht_pps(&p, &census(&p), &pi, 1).unwrap();
        assert_eq!(tv.component("within"), Some(0.0));
        let sampled = WithinPlan::new(&p, &WithinSize::Constant(1), None).unwrap();
        let tv2 = true_var_ht_pps(&p, &sampled, &pi, 1).unwrap();
        assert!(tv2.component("within").unwrap() > 0.0);
    }

    #[test]
    fn decomposition_holds() {
        let p = small();
        let pi = joint_inclusion(&p.sizes(), 2, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap();
        let tv = true_var_ht_pps(&p, &census(&p), &pi, 1).unwrap();
        assert!((tv.var_delta - (tv.var_mu1 + tv.var_mu0 - 2.0 * tv.cov)).abs() < 1e-12);
        let parts: f64 = tv.components.iter().map(|(_, v)| v).sum();
        assert!((parts - tv.var_delta).abs() < 1e-12);
    }

    #[test]
    fn literal_form_matches_linear_route() {
        let p = Population::from_outcomes(vec![
            vec![(5.0, 1.0), (2.0, 0.5)],
            vec![(5.0, 1.0), (7.0, 3.0), (1.0, 1.0)],
            vec![(2.0, 2.0)],
            vec![(4.0, 0.0), (6.0, 2.0)],
            vec![(3.0, 2.5), (1.0, 2.0), (8.0, 4.0)],
            vec![(0.0, 1.0), (2.0, 2.0)],
        ])
        .unwrap();
        let plan = WithinPlan::new(&p, &WithinSize::Proportion(0.5), None).unwrap();
        let pi = joint_inclusion(&p.sizes(), 4, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap();
        let tv = true_var_ht_pps(&p, &plan, &pi, 2).unwrap();
        let mut a: [Vec<f64>; 2] = Default::default();
        let mut v: [Vec<f64>; 2] = Default::default();
        for arm in Arm::BOTH {
            a[arm.index()] = p.cluster_means(arm);
            v[arm.index()] = (0..p.len()).map(|c| within_mean_variance(&p, &plan, c, arm)).collect();
        }
        let (v1, v0, cov) = linear_variance(&pi, 2, &a, &v).unwrap();
        assert!((v1 - tv.var_mu1).abs() < 1e-12);
        assert!((v0 - tv.var_mu0).abs() < 1e-12);
        assert!((cov - tv.cov).abs() < 1e-12);
    }

    #[test]
    fn dr_with_zero_theta_is_ht_srs() {
        let p = small();
        let plan = census(&p);
        let a = true_var_dr(&p, &plan, 2, 1, 0.0).unwrap();
        let b = true_var_ht_srs(&p, &plan, 2, 1).unwrap();
        assert_eq!(a.var_delta, b.var_delta);
    }

    #[test]
    fn one_stratum_equals_unstratified() {
        let p = Population::new(
            small().clusters().iter().cloned().map(|c| c.with_stratum("only")).collect(),
        )
        .unwrap();
        let pi = joint_inclusion(&p.sizes(), 2, Scheme::PpsworExact, &PiMethod::ExactEnum, 1).unwrap();
        let a = stratified_true_var(&p, &census(&p), std::slice::from_ref(&pi), 1).unwrap();
        let b = true_var_ht_pps(&p, &census(&p), &pi, 1).unwrap();
        assert!((a.var_delta - b.var_delta).abs() < 1e-15);
    }

    #[test]
    fn single_unit_stratum_matches_plain_within_term() {
        let base = small();
        let labelled = Population::new(
            base.clusters()
                .iter()
                .cloned()
                .map(|c| {
                    let k = c.size();
                    c.with_unit_strata(vec!["v".into(); k])
                })
                .collect(),
        )
        .unwrap();
        let plain = WithinPlan::new(&base, &WithinSize::Constant(1), None).unwrap();
        let strat = WithinPlan::new(&labelled, &WithinSize::Census, Some(&WithinSize::Constant(1))).unwrap();
        for c in 0..base.len() {
            for arm in Arm::BOTH {
                assert_eq!(
                    within_mean_variance(&base, &plain, c, arm),
                    within_mean_variance(&labelled, &strat, c, arm)
                );
            }
        }
    }
}
