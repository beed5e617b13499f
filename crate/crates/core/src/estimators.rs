//! Point estimators of μ_t and δ from one realized experiment.

use serde::{Deserialize, Serialize};

use crate::assignment::TreatmentAssignment;
use crate::error::{Error, Result};
use crate::population::{Arm, Population};

/// One sampled cluster as observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterObservation {
    pub cluster: usize,
    pub arm: Arm,
    /// Sampled unit indices, ascending.
    pub units: Vec<usize>,
    /// Y_kc for each sampled unit, parallel to `units`.
    pub observed: Vec<f64>,
}

impl ClusterObservation {
    pub fn total(&self) -> f64 {
        self.observed.iter().sum()
    }

    pub fn sample_size(&self) -> usize {
        self.units.len()
    }
}

/// A realized experiment: sample, assignment, unit samples and responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    /// Sampled clusters, ascending by cluster index.
    pub clusters: Vec<ClusterObservation>,
    /// Within-cluster samples were drawn per unit stratum.
    #[serde(default)]
    pub unit_stratified: bool,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Realization {
    /// Observes the potential outcome of each sampled unit under its
    /// cluster's arm. `unit_samples` is parallel to `sample`.
    pub fn observe(
        pop: &Population,
        sample: &[usize],
        assignment: &TreatmentAssignment,
        unit_samples: &[Vec<usize>],
        unit_stratified: bool,
        seed: Option<u64>,
    ) -> Result<Self> {
        if sample.len() != unit_samples.len() {
            return Err(Error::validation("one unit sample is needed per sampled cluster"));
        }
        let mut clusters = Vec::with_capacity(sample.len());
        for (&c, units) in sample.iter().zip(unit_samples) {
            let arm = assignment
                .arm_of(c)
                .ok_or_else(|| Error::validation(format!("sampled cluster {c} has no arm")))?;
            let cl = pop.cluster(c);
            let observed = units.iter().map(|&k| cl.units[k].outcome(arm)).collect();
            clusters.push(ClusterObservation { cluster: c, arm, units: units.clone(), observed });
        }
        clusters.sort_by_key(|o| o.cluster);
        let r = Realization { clusters, unit_stratified, seed };
        r.check_structure(pop)?;
        Ok(r)
    }

    fn check_structure(&self, pop: &Population) -> Result<()> {
        for w in self.clusters.windows(2) {
            if w[0].cluster >= w[1].cluster {
                return Err(Error::validation("realization clusters must be distinct and ascending"));
            }
        }
        for o in &self.clusters {
            if o.cluster >= pop.len() {
                return Err(Error::validation(format!("cluster index {} out of range", o.cluster)));
            }
            let nc = pop.cluster(o.cluster).size();
            if o.units.is_empty() || o.units.len() != o.observed.len() {
                return Err(Error::validation(format!(
                    "cluster {}: units and observed values do not match",
                    o.cluster
                )));
            }
            if o.units.windows(2).any(|w| w[0] >= w[1]) || o.units.iter().any(|&k| k >= nc) {
                return Err(Error::validation(format!(
                    "cluster {}: unit indices must be distinct, ascending and below n_c",
                    o.cluster
                )));
            }
        }
        Ok(())
    }

    /// Structural checks plus the observation rule Y_kc = y_kc,t(c).
    pub fn validate(&self, pop: &Population) -> Result<()> {
        self.check_structure(pop)?;
        for o in &self.clusters {
            let cl = pop.cluster(o.cluster);
            for (&k, &y) in o.units.iter().zip(&o.observed) {
                if cl.units[k].outcome(o.arm) != y {
                    return Err(Error::validation(format!(
                        "cluster {} unit {k}: observed {y} is not the potential outcome for its arm",
                        o.cluster
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn arm(&self, arm: Arm) -> impl Iterator<Item = &ClusterObservation> {
        self.clusters.iter().filter(move |o| o.arm == arm)
    }

    /// #T_t.
    pub fn count(&self, arm: Arm) -> usize {
        self.arm(arm).count()
    }

    /// #N_t, population units in the arm-t sampled clusters.
    pub fn units_in_arm(&self, pop: &Population, arm: Arm) -> usize {
        self.arm(arm).map(|o| pop.cluster(o.cluster).size()).sum()
    }

    /// Same design outcome with every response shifted by `a`.
    pub fn shifted(&self, a: f64) -> Realization {
        let mut r = self.clone();
        for o in &mut r.clusters {
            for y in &mut o.observed {
                *y += a;
            }
        }
        r
    }

    fn require_arms(&self) -> Result<(usize, usize)> {
        let (m1, m0) = (self.count(Arm::Treated), self.count(Arm::Control));
        if m1 == 0 || m0 == 0 {
            return Err(Error::validation(format!(
                "empty arm: #T_1 = {m1}, #T_0 = {m0}"
            )));
        }
        Ok((m1, m0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
pub enum EstimatorKind {
    #[serde(rename = "ht-pps")]
    #[value(name = "ht-pps")]
    HtPps,
    #[serde(rename = "ht-srs")]
    #[value(name = "ht-srs")]
    HtSrs,
    #[serde(rename = "dim")]
    #[value(name = "dim")]
    Dim,
    /// Des Raj with a fixed θ.
    #[serde(rename = "dr")]
    #[value(name = "dr")]
    DesRaj,
    /// Des Raj with θ̂ fitted on the sample.
    #[serde(rename = "dr-est")]
    #[value(name = "dr-est")]
    DesRajEstTheta,
    #[serde(rename = "hajek")]
    #[value(name = "hajek")]
    Hajek,
    #[serde(rename = "cs-ht-pps")]
    #[value(name = "cs-ht-pps")]
    CsHtPps,
    #[serde(rename = "us-ht-pps")]
    #[value(name = "us-ht-pps")]
    UsHtPps,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::HtPps,
        EstimatorKind::HtSrs,
        EstimatorKind::Dim,
        EstimatorKind::DesRaj,
        EstimatorKind::DesRajEstTheta,
        EstimatorKind::Hajek,
        EstimatorKind::CsHtPps,
        EstimatorKind::UsHtPps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::HtPps => "ht-pps",
            EstimatorKind::HtSrs => "ht-srs",
            EstimatorKind::Dim => "dim",
            EstimatorKind::DesRaj => "dr",
            EstimatorKind::DesRajEstTheta => "dr-est",
            EstimatorKind::Hajek => "hajek",
            EstimatorKind::CsHtPps => "cs-ht-pps",
            EstimatorKind::UsHtPps => "us-ht-pps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown estimator '{s}'")))
    }

    /// Estimators built for PPS cluster samples.
    pub fn is_pps_family(self) -> bool {
        matches!(self, EstimatorKind::HtPps | EstimatorKind::CsHtPps | EstimatorKind::UsHtPps)
    }

    /// `theta` is used by the fixed-θ Des Raj estimator only.
    pub fn estimate(self, pop: &Population, r: &Realization, theta: f64) -> Result<Estimate> {
        match self {
            EstimatorKind::HtPps => ht_pps(pop, r),
            EstimatorKind::HtSrs => ht_srs(pop, r),
            EstimatorKind::Dim => dim(pop, r),
            EstimatorKind::DesRaj => des_raj(pop, r, theta),
            EstimatorKind::DesRajEstTheta => des_raj_estimated_theta(pop, r),
            EstimatorKind::Hajek => hajek(pop, r),
            EstimatorKind::CsHtPps => cs_ht_pps(pop, r),
            EstimatorKind::UsHtPps => us_ht_pps(pop, r),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub estimator: EstimatorKind,
    pub delta_hat: f64,
    pub mu1_hat: f64,
    pub mu0_hat: f64,
    /// (cluster, μ̂_ct) for each sampled cluster.
    pub cluster_means: Vec<(usize, f64)>,
    pub theta: Option<f64>,
    /// θ̂ fell back to 0 because all sampled sizes were equal.
    pub theta_degenerate: bool,
    /// n_u / n per stratum, for the cluster-stratified estimator.
    pub stratum_weights: Option<Vec<f64>>,
}

impl Estimate {
    fn new(estimator: EstimatorKind, mu1_hat: f64, mu0_hat: f64, cluster_means: Vec<(usize, f64)>) -> Self {
        Estimate {
            estimator,
            delta_hat: mu1_hat - mu0_hat,
            mu1_hat,
            mu0_hat,
            cluster_means,
            theta: None,
            theta_degenerate: false,
            stratum_weights: None,
        }
    }
}

/// Plain sample mean Σ_k Y_kc / s_c.
pub fn plain_mean(o: &ClusterObservation) -> f64 {
    o.total() / o.sample_size() as f64
}

/// Σ_v (n_v/n_c) · (mean of the sampled units of stratum v).
pub fn stratified_mean(pop: &Population, o: &ClusterObservation) -> Result<f64> {
    let cl = pop.cluster(o.cluster);
    let Some(labels) = &cl.unit_strata else {
        return Ok(plain_mean(o));
    };
    let nc = cl.size() as f64;
    let mut acc = 0.0;
    for group in cl.unit_groups() {
        let label = &labels[group[0]];
        let ys: Vec<f64> = o
            .units
            .iter()
            .zip(&o.observed)
            .filter(|(&k, _)| &labels[k] == label)
            .map(|(_, &y)| y)
            .collect();
        if ys.is_empty() {
            return Err(Error::validation(format!(
                "cluster '{}': unit stratum '{label}' has no sampled units",
                cl.id
            )));
        }
        acc += group.len() as f64 / nc * ys.iter().sum::<f64>() / ys.len() as f64;
    }
    Ok(acc)
}

/// μ̂_ct for sampled cluster `c`: the stratum-weighted mean when the
/// realization was unit-stratified, the plain mean otherwise.
pub fn cluster_sample_mean(pop: &Population, r: &Realization, c: usize) -> Result<f64> {
    let o = r
        .clusters
        .iter()
        .find(|o| o.cluster == c)
        .ok_or_else(|| Error::validation(format!("cluster {c} is not in the sample")))?;
    if r.unit_stratified {
        stratified_mean(pop, o)
    } else {
        Ok(plain_mean(o))
    }
}

fn plain_means(r: &Realization) -> Vec<(usize, f64)> {
    r.clusters.iter().map(|o| (o.cluster, plain_mean(o))).collect()
}

/// Σ_c w_c · total_c over arm-t clusters. HT-PPS and DIM both go through
/// here so that equal weights give bit-identical results.
fn weighted_totals(r: &Realization, arm: Arm, weight: impl Fn(&ClusterObservation) -> f64) -> f64 {
    r.arm(arm).map(|o| weight(o) * o.total()).sum()
}

/// μ̂_t = Σ_c (S_c T_ct / #T_t) μ̂_ct.
pub fn ht_pps(_pop: &Population, r: &Realization) -> Result<Estimate> {
    let (m1, m0) = r.require_arms()?;
    let mu = |arm, m: usize| weighted_totals(r, arm, |o| 1.0 / (m * o.sample_size()) as f64);
    Ok(Estimate::new(EstimatorKind::HtPps, mu(Arm::Treated, m1), mu(Arm::Control, m0), plain_means(r)))
}

/// μ̂_t = Σ arm-t responses / Σ arm-t s_c.
pub fn dim(_pop: &Population, r: &Realization) -> Result<Estimate> {
    r.require_arms()?;
    let mu = |arm| {
        let units: usize = r.arm(arm).map(ClusterObservation::sample_size).sum();
        weighted_totals(r, arm, |_| 1.0 / units as f64)
    };
    Ok(Estimate::new(EstimatorKind::Dim, mu(Arm::Treated), mu(Arm::Control), plain_means(r)))
}

fn srs_weighted(pop: &Population, r: &Realization, arm: Arm, theta: f64) -> f64 {
    let ell = pop.len() as f64;
    let n = pop.n() as f64;
    let m = r.count(arm) as f64;
    r.arm(arm)
        .map(|o| {
            let nc = pop.cluster(o.cluster).size() as f64;
            ell / m * (nc / n) * (plain_mean(o) - theta / nc * (nc - n / ell))
        })
        .sum()
}

/// μ̂_t = ℓ Σ_c (S_c T_ct / #T_t)(n_c/n) μ̂_ct.
pub fn ht_srs(pop: &Population, r: &Realization) -> Result<Estimate> {
    r.require_arms()?;
    Ok(Estimate::new(
        EstimatorKind::HtSrs,
        srs_weighted(pop, r, Arm::Treated, 0.0),
        srs_weighted(pop, r, Arm::Control, 0.0),
        plain_means(r),
    ))
}

/// Change of the HT-SRS δ̂ per unit shift of the responses:
/// (ℓ/n)(#N_1/#T_1 − #N_0/#T_0).
pub fn ht_srs_shift_coefficient(pop: &Population, r: &Realization) -> f64 {
    let ell = pop.len() as f64;
    let n = pop.n() as f64;
    let per = |arm| r.units_in_arm(pop, arm) as f64 / r.count(arm) as f64;
    ell / n * (per(Arm::Treated) - per(Arm::Control))
}

/// Des Raj with a caller-supplied θ.
pub fn des_raj(pop: &Population, r: &Realization, theta: f64) -> Result<Estimate> {
    r.require_arms()?;
    let mut e = Estimate::new(
        EstimatorKind::DesRaj,
        srs_weighted(pop, r, Arm::Treated, theta),
        srs_weighted(pop, r, Arm::Control, theta),
        plain_means(r),
    );
    e.theta = Some(theta);
    Ok(e)
}

/// Pooled, arm-centred least-squares slope of n_c μ̂_ct on n_c. Returns
/// `(0, true)` when every arm has constant sampled sizes.
pub fn theta_hat(pop: &Population, r: &Realization) -> Result<(f64, bool)> {
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for arm in Arm::BOTH {
        let pts: Vec<(f64, f64)> = r
            .arm(arm)
            .map(|o| {
                let nc = pop.cluster(o.cluster).size() as f64;
                (nc, nc * plain_mean(o))
            })
            .collect();
        if pts.len() < 2 {
            return Err(Error::validation(format!(
                "fitting θ needs at least 2 sampled clusters per arm, arm {} has {}",
                arm.index(),
                pts.len()
            )));
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        for (x, y) in pts {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    if sxx == 0.0 {
        Ok((0.0, true))
    } else {
        Ok((sxy / sxx, false))
    }
}

/// Population analogue of [`theta_hat`] over all ℓ clusters.
pub fn population_theta(pop: &Population) -> f64 {
    let sizes: Vec<f64> = pop.sizes().iter().map(|&n| n as f64).collect();
    let mx = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for arm in Arm::BOTH {
        let totals: Vec<f64> = pop.cluster_means(arm).iter().zip(&sizes).map(|(m, n)| m * n).collect();
        let my = totals.iter().sum::<f64>() / totals.len() as f64;
        for (x, y) in sizes.iter().zip(&totals) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Des Raj with θ̂ from [`theta_hat`].
pub fn des_raj_estimated_theta(pop: &Population, r: &Realization) -> Result<Estimate> {
    r.require_arms()?;
    let (theta, degenerate) = theta_hat(pop, r)?;
    let mut e = des_raj(pop, r, theta)?;
    e.estimator = EstimatorKind::DesRajEstTheta;
    e.theta_degenerate = degenerate;
    Ok(e)
}

/// μ̂_t = Σ_c S_c T_ct n_c μ̂_ct / Σ_c S_c T_ct n_c.
pub fn hajek(pop: &Population, r: &Realization) -> Result<Estimate> {
    r.require_arms()?;
    let mu = |arm| {
        let (num, den) = r.arm(arm).fold((0.0, 0.0), |(a, b), o| {
            let nc = pop.cluster(o.cluster).size() as f64;
            (a + nc * plain_mean(o), b + nc)
        });
        num / den
    };
    Ok(Estimate::new(EstimatorKind::Hajek, mu(Arm::Treated), mu(Arm::Control), plain_means(r)))
}

/// HT-PPS over stratum-weighted within-cluster means.
pub fn us_ht_pps(pop: &Population, r: &Realization) -> Result<Estimate> {
    let (m1, m0) = r.require_arms()?;
    let means = r
        .clusters
        .iter()
        .map(|o| Ok((o.cluster, stratified_mean(pop, o)?)))
        .collect::<Result<Vec<_>>>()?;
    let mu = |arm, m: usize| {
        r.clusters
            .iter()
            .zip(&means)
            .filter(|(o, _)| o.arm == arm)
            .map(|(_, &(_, x))| x / m as f64)
            .sum::<f64>()
    };
    Ok(Estimate::new(EstimatorKind::UsHtPps, mu(Arm::Treated, m1), mu(Arm::Control, m0), means))
}

/// Splits a realization by cluster stratum. Each part keeps global
/// cluster indices.
pub fn split_by_stratum(pop: &Population, r: &Realization) -> Result<Vec<(Vec<usize>, Realization)>> {
    pop.strata()?
        .into_iter()
        .map(|(label, group)| {
            let clusters: Vec<ClusterObservation> = r
                .clusters
                .iter()
                .filter(|o| group.binary_search(&o.cluster).is_ok())
                .cloned()
                .collect();
            if clusters.is_empty() {
                return Err(Error::validation(format!("stratum '{label}' has no sampled clusters")));
            }
            Ok((group, Realization { clusters, unit_stratified: r.unit_stratified, seed: r.seed }))
        })
        .collect()
}

/// δ̂ = Σ_u (n_u/n) δ̂_u with per-stratum HT-PPS.
pub fn cs_ht_pps(pop: &Population, r: &Realization) -> Result<Estimate> {
    r.require_arms()?;
    let n = pop.n() as f64;
    let mut mu1 = 0.0;
    let mut mu0 = 0.0;
    let mut weights = Vec::new();
    for (group, part) in split_by_stratum(pop, r)? {
        let nu: usize = group.iter().map(|&c| pop.cluster(c).size()).sum();
        let w = nu as f64 / n;
        let e = if r.unit_stratified { us_ht_pps(pop, &part)? } else { ht_pps(pop, &part)? };
        mu1 += w * e.mu1_hat;
        mu0 += w * e.mu0_hat;
        weights.push(w);
    }
    let mut e = Estimate::new(EstimatorKind::CsHtPps, mu1, mu0, plain_means(r));
    e.stratum_weights = Some(weights);
    Ok(e)
}

/// Row of the estimates CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub delta_hat: f64,
    pub mu1_hat: f64,
    pub mu0_hat: f64,
    pub theta: Option<f64>,
    pub replicate: Option<usize>,
    pub seed: Option<u64>,
}

impl EstimateRow {
    pub fn new(e: &Estimate, replicate: Option<usize>, seed: Option<u64>) -> Self {
        EstimateRow {
            estimator: e.estimator.name().to_string(),
            delta_hat: e.delta_hat,
            mu1_hat: e.mu1_hat,
            mu0_hat: e.mu0_hat,
            theta: e.theta,
            replicate,
            seed,
        }
    }
}
