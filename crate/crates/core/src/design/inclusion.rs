use serde::{Deserialize, Serialize};

use super::{pps_probabilities, ClusterSampler, Scheme};
use crate::error::{Error, Result};
use crate::par;

/// Default Monte Carlo draws for π̂.
pub const DEFAULT_MC_REPLICATES: usize = 100_000;
const MIN_MC_REPLICATES: usize = 1000;
const MC_CHUNK: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PiMethod {
    ExactEnum,
    MonteCarlo { replicates: usize, seed: u64 },
    HajekApprox,
}

impl PiMethod {
    /// Short label written into variance reports.
    pub fn source(&self) -> &'static str {
        match self {
            PiMethod::ExactEnum => "exact",
            PiMethod::MonteCarlo { .. } => "monte_carlo",
            PiMethod::HajekApprox => "approx",
        }
    }
}

/// π_c and π_cc' for one design; `second[c][c] = first[c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionProbs {
    pub method: PiMethod,
    pub s: usize,
    pub first: Vec<f64>,
    pub second: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_se: Option<Vec<Vec<f64>>>,
}

impl InclusionProbs {
    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn source(&self) -> &'static str {
        self.method.source()
    }

    /// Checks shape and symmetry; used on documents read from disk.
    pub fn validate(&self, ell: usize) -> Result<()> {
        if self.first.len() != ell || self.second.len() != ell || self.second.iter().any(|r| r.len() != ell) {
            return Err(Error::validation(format!(
                "inclusion probabilities are for {} clusters, population has {ell}",
                self.first.len()
            )));
        }
        for a in 0..ell {
            for b in 0..ell {
                if (self.second[a][b] - self.second[b][a]).abs() > 1e-12 {
                    return Err(Error::validation("second-order matrix is not symmetric"));
                }
            }
        }
        Ok(())
    }

    /// Pairs c < c' where π_cc' < n_c n_c' s² / n².
    pub fn lower_bound_violations(&self, sizes: &[usize]) -> Vec<(usize, usize)> {
        let n: usize = sizes.iter().sum();
        let s2 = (self.s * self.s) as f64;
        let mut out = Vec::new();
        for a in 0..sizes.len() {
            for b in a + 1..sizes.len() {
                let bound = (sizes[a] * sizes[b]) as f64 * s2 / (n * n) as f64;
                if self.second[a][b] < bound - 1e-12 {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

pub fn joint_inclusion(
    sizes: &[usize],
    s: usize,
    scheme: Scheme,
    method: &PiMethod,
    workers: usize,
) -> Result<InclusionProbs> {
    let ell = sizes.len();
    let sampler = ClusterSampler::new(sizes, s, scheme)?;
    match method {
        PiMethod::ExactEnum => {
            let second = match &sampler {
                ClusterSampler::Srs { .. } => {
                    let p1 = s as f64 / ell as f64;
                    let p2 = if ell > 1 {
                        (s * (s - 1)) as f64 / (ell * (ell - 1)) as f64
                    } else {
                        0.0
                    };
                    (0..ell)
                        .map(|a| (0..ell).map(|b| if a == b { p1 } else { p2 }).collect())
                        .collect()
                }
                ClusterSampler::Exact(cp) => cp.joint(),
                ClusterSampler::Sunter(_) => {
                    return Err(Error::validation(
                        "exact enumeration is available for the srs and ppswor-exact schemes only",
                    ))
                }
            };
            Ok(from_matrix(method.clone(), s, second, None))
        }
        PiMethod::MonteCarlo { replicates, seed } => {
            if *replicates < MIN_MC_REPLICATES {
                return Err(Error::validation(format!(
                    "Monte Carlo inclusion needs at least {MIN_MC_REPLICATES} draws, got {replicates}"
                )));
            }
            let r = *replicates;
            let chunks = r.div_ceil(MC_CHUNK);
            let counts = par::map_indices(chunks, workers, |k| {
                let mut rng = par::substream(*seed, k as u64);
                let mut m = vec![0u32; ell * ell];
                for _ in k * MC_CHUNK..((k + 1) * MC_CHUNK).min(r) {
                    let d = sampler.draw(&mut rng);
                    for &a in &d {
                        for &b in &d {
                            m[a * ell + b] += 1;
                        }
                    }
                }
                m
            });
            let mut total = vec![0u64; ell * ell];
            for m in counts {
                for (t, c) in total.iter_mut().zip(m) {
                    *t += c as u64;
                }
            }
            let rf = r as f64;
            let second: Vec<Vec<f64>> = (0..ell)
                .map(|a| (0..ell).map(|b| total[a * ell + b] as f64 / rf).collect())
                .collect();
            let se = second
                .iter()
                .map(|row| row.iter().map(|p| (p * (1.0 - p) / rf).sqrt()).collect())
                .collect();
            Ok(from_matrix(method.clone(), s, second, Some(se)))
        }
        PiMethod::HajekApprox => {
            if s < 2 {
                return Err(Error::validation("the Hajek approximation needs s >= 2"));
            }
            let first = match &sampler {
                ClusterSampler::Srs { .. } => vec![s as f64 / ell as f64; ell],
                ClusterSampler::Sunter(plan) => plan.marginals(),
                ClusterSampler::Exact(_) => pps_probabilities(sizes, s),
            };
            Ok(hajek_approx(&first, s))
        }
    }
}

/// π_cc' ≈ π_c π_c' (1 − (1−π_c)(1−π_c') / d), d = Σ π_k (1−π_k).
pub fn hajek_approx(first: &[f64], s: usize) -> InclusionProbs {
    let d: f64 = first.iter().map(|p| p * (1.0 - p)).sum();
    let ell = first.len();
    let second = (0..ell)
        .map(|a| {
            (0..ell)
                .map(|b| {
                    if a == b {
                        first[a]
                    } else if d > 0.0 {
                        first[a] * first[b] * (1.0 - (1.0 - first[a]) * (1.0 - first[b]) / d)
                    } else {
                        first[a] * first[b]
                    }
                })
                .collect()
        })
        .collect();
    InclusionProbs {
        method: PiMethod::HajekApprox,
        s,
        first: first.to_vec(),
        second,
        mc_se: None,
    }
}

fn from_matrix(method: PiMethod, s: usize, second: Vec<Vec<f64>>, mc_se: Option<Vec<Vec<f64>>>) -> InclusionProbs {
    let first = (0..second.len()).map(|c| second[c][c]).collect();
    InclusionProbs { method, s, first, second, mc_se }
}
