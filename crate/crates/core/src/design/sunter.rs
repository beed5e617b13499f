use rand::Rng;

use crate::error::{Error, Result};

/// Sunter's list-sequential PPS without replacement.
///
/// Clusters are visited in decreasing size (ties by index). Unit `k` is
/// taken with probability `need_k * x_k / Z_k`, where `Z_k` is the size
/// remaining in the list. From the first position where `s * x_k > Z_k`
/// onwards the sizes are replaced by their mean, which turns the rest of
/// the list into a draw-by-draw SRS. Inclusion probabilities are therefore
/// exactly `n_c s / n` in the head and equalised in the tail.
#[derive(Clone, Debug)]
pub struct SunterPlan {
    s: usize,
    /// Cluster indices in visiting order.
    order: Vec<usize>,
    /// Head sizes in visiting order.
    head: Vec<usize>,
    /// Suffix sums of the (modified) sizes at each head position.
    remaining: Vec<usize>,
    total: usize,
    sizes: Vec<usize>,
}

impl SunterPlan {
    pub fn new(sizes: &[usize], s: usize) -> Result<Self> {
        let ell = sizes.len();
        if s == 0 || s > ell {
            return Err(Error::validation(format!("s = {s} outside 1..={ell}")));
        }
        if let Err(c) = super::check_pps(sizes, s) {
            return Err(Error::validation(format!(
                "cluster {} has n_c = {} > n/s",
                c + 1,
                sizes[c]
            )));
        }
        let mut order: Vec<usize> = (0..ell).collect();
        order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
        let sorted: Vec<usize> = order.iter().map(|&c| sizes[c]).collect();
        let mut suffix = vec![0usize; ell + 1];
        for k in (0..ell).rev() {
            suffix[k] = suffix[k + 1] + sorted[k];
        }
        let tail_start = (0..ell).find(|&k| s * sorted[k] > suffix[k]).unwrap_or(ell);
        Ok(SunterPlan {
            s,
            head: sorted[..tail_start].to_vec(),
            remaining: suffix[..tail_start].to_vec(),
            order,
            total: suffix[0],
            sizes: sizes.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Position in visiting order where the equalised tail begins.
    pub fn tail_start(&self) -> usize {
        self.head.len()
    }

    /// True when every tail cluster has the same size, so the marginals
    /// equal n_c s / n for all clusters.
    pub fn is_exact(&self) -> bool {
        let tail = &self.order[self.tail_start()..];
        tail.windows(2).all(|w| self.sizes[w[0]] == self.sizes[w[1]])
    }

    /// Analytic inclusion probabilities of the scheme, in cluster order.
    pub fn marginals(&self) -> Vec<f64> {
        let n = self.total as f64;
        let s = self.s as f64;
        let mut pi = vec![0.0; self.len()];
        for (k, &c) in self.order.iter().enumerate() {
            pi[c] = if k < self.tail_start() {
                s * self.sizes[c] as f64 / n
            } else {
                let tail = &self.order[self.tail_start()..];
                let tail_total: usize = tail.iter().map(|&t| self.sizes[t]).sum();
                s * tail_total as f64 / (tail.len() as f64 * n)
            };
        }
        pi
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let ell = self.len();
        let mut need = self.s;
        let mut out = Vec::with_capacity(self.s);
        for k in 0..ell {
            if need == 0 {
                break;
            }
            let left = ell - k;
            let take = if need >= left {
                true
            } else if k < self.tail_start() {
                let u: f64 = rng.random();
                (u * self.remaining[k] as f64) < (need * self.head[k]) as f64
            } else {
                rng.random_range(0..left) < need
            };
            if take {
                out.push(self.order[k]);
                need -= 1;
            }
        }
        out.sort_unstable();
        out
    }
}
