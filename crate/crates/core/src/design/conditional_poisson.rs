use rand::Rng;

use super::{check_pps, pps_probabilities, MAX_EXACT_CLUSTERS};
use crate::error::{Error, Result};

const TOLERANCE: f64 = 1e-12;
const POLISH: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

/// Maximum-entropy (conditional Poisson) fixed-size design with marginals
/// n_c s / n, held as its full subset distribution.
///
/// `P(A)` is proportional to the product of working weights over `A`.
/// Clusters with `n_c s = n` are certainty selections and sit in every
/// subset.
#[derive(Clone, Debug)]
pub struct ConditionalPoisson {
    ell: usize,
    s: usize,
    subsets: Vec<u32>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
    iterations: usize,
}

impl ConditionalPoisson {
    pub fn new(sizes: &[usize], s: usize) -> Result<Self> {
        let ell = sizes.len();
        if ell > MAX_EXACT_CLUSTERS {
            return Err(Error::validation(format!(
                "exact PPS scheme supports at most {MAX_EXACT_CLUSTERS} clusters, got {ell}"
            )));
        }
        if s == 0 || s > ell {
            return Err(Error::validation(format!("s = {s} outside 1..={ell}")));
        }
        if let Err(c) = check_pps(sizes, s) {
            return Err(Error::validation(format!(
                "cluster {} has n_c = {} > n/s",
                c + 1,
                sizes[c]
            )));
        }
        let n: usize = sizes.iter().sum();
        let target = pps_probabilities(sizes, s);
        let certain: Vec<usize> = (0..ell).filter(|&c| sizes[c] * s == n).collect();
        let free: Vec<usize> = (0..ell).filter(|&c| sizes[c] * s != n).collect();
        let k = s - certain.len();
        let free_target: Vec<f64> = free.iter().map(|&c| target[c]).collect();

        let (weights, iterations) = calibrate(&free_target, k)?;

        let base: u32 = certain.iter().map(|&c| 1u32 << c).sum();
        let mut subsets = Vec::new();
        let mut probs = Vec::new();
        for_each_combination(free.len(), k, |local| {
            let mut mask = base;
            let mut w = 1.0;
            for &i in local {
                mask |= 1 << free[i];
                w *= weights[i];
            }
            subsets.push(mask);
            probs.push(w);
        });
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(ConditionalPoisson { ell, s, subsets, probs, cumulative, iterations })
    }

    pub fn len(&self) -> usize {
        self.ell
    }

    pub fn is_empty(&self) -> bool {
        self.ell == 0
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Every subset (bitmask over cluster indices) with its probability.
    pub fn support(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.subsets.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let last = *self.cumulative.last().expect("non-empty support");
        let u = rng.random::<f64>() * last;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.subsets.len() - 1);
        mask_indices(self.subsets[i])
    }

    /// First- and second-order inclusion probabilities by summation over
    /// the support.
    pub fn joint(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.ell]; self.ell];
        for (mask, p) in self.support() {
            let idx = mask_indices(mask);
            for &a in &idx {
                for &b in &idx {
                    m[a][b] += p;
                }
            }
        }
        m
    }
}

pub(crate) fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Elementary symmetric polynomials e_0..=e_k of `w`, skipping `skip`.
fn elementary(w: &[f64], k: usize, skip: Option<usize>) -> Vec<f64> {
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (i, &x) in w.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        for j in (1..=k).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

fn inclusion(w: &[f64], k: usize) -> Vec<f64> {
    let ek = elementary(w, k, None)[k];
    (0..w.len())
        .map(|c| w[c] * elementary(w, k - 1, Some(c))[k - 1] / ek)
        .collect()
}

/// Working weights whose conditional-Poisson marginals match `target`.
///
/// Iterates towards `POLISH` and settles for the best weights seen if they
/// are within `TOLERANCE` once progress stops.
fn calibrate(target: &[f64], k: usize) -> Result<(Vec<f64>, usize)> {
    let m = target.len();
    if k == 0 || k == m {
        return Ok((vec![1.0; m], 0));
    }
    let mut lambda: Vec<f64> = target.iter().map(|&p| (p / (1.0 - p)).ln()).collect();
    let mut step = 1.0;
    let mut prev_err = f64::INFINITY;
    let mut best = (f64::INFINITY, Vec::new(), 0);
    for iter in 0..MAX_ITER {
        let w: Vec<f64> = lambda.iter().map(|l| l.exp()).collect();
        let pi = inclusion(&w, k);
        let err = pi.iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if !err.is_finite() {
            return Err(Error::numeric("conditional Poisson calibration diverged"));
        }
        if err < best.0 {
            best = (err, w, iter);
        }
        if err < POLISH || (best.0 < TOLERANCE && (step < 1e-3 || iter > best.2 + 20)) {
            break;
        }
        if err > prev_err {
            step *= 0.5;
        }
        prev_err = err;
        for c in 0..m {
            lambda[c] += step * (target[c].ln() - pi[c].ln());
        }
        let mean = lambda.iter().sum::<f64>() / m as f64;
        for l in &mut lambda {
            *l -= mean;
        }
    }
    if best.0 < TOLERANCE {
        return Ok((best.1, best.2));
    }
    Err(Error::numeric(format!(
        "conditional Poisson calibration did not reach {TOLERANCE} within {MAX_ITER} iterations"
    )))
}

/// Calls `f` with every k-subset of `0..m` in lexicographic order.
pub(crate) fn for_each_combination(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + m - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
