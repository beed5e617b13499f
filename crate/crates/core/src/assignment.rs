//! Complete randomisation of treatment over sampled clusters.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::Arm;

/// Arm labels for the sampled clusters; both lists ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl TreatmentAssignment {
    pub fn arm_of(&self, c: usize) -> Option<Arm> {
        if self.treated.binary_search(&c).is_ok() {
            Some(Arm::Treated)
        } else if self.control.binary_search(&c).is_ok() {
            Some(Arm::Control)
        } else {
            None
        }
    }

    /// #T_t.
    pub fn count(&self, arm: Arm) -> usize {
        match arm {
            Arm::Treated => self.treated.len(),
            Arm::Control => self.control.len(),
        }
    }

    fn merge(parts: Vec<TreatmentAssignment>) -> Self {
        let mut treated: Vec<usize> = parts.iter().flat_map(|p| p.treated.iter().copied()).collect();
        let mut control: Vec<usize> = parts.iter().flat_map(|p| p.control.iter().copied()).collect();
        treated.sort_unstable();
        control.sort_unstable();
        TreatmentAssignment { treated, control }
    }
}

/// Uniform over the C(s, #T_1) labelings of `sample`.
pub fn assign_completely_random<R: Rng + ?Sized>(
    sample: &[usize],
    treated: usize,
    rng: &mut R,
) -> Result<TreatmentAssignment> {
    if treated == 0 || treated >= sample.len() {
        return Err(Error::validation(format!(
            "#T_1 = {treated} leaves an empty arm among {} sampled clusters",
            sample.len()
        )));
    }
    let mut order = sample.to_vec();
    order.shuffle(rng);
    let mut t = order[..treated].to_vec();
    let mut c = order[treated..].to_vec();
    t.sort_unstable();
    c.sort_unstable();
    Ok(TreatmentAssignment { treated: t, control: c })
}

/// Independent complete randomisation inside each stratum's sample.
pub fn assign_stratified<R: Rng + ?Sized>(
    samples: &[Vec<usize>],
    treated: usize,
    rng: &mut R,
) -> Result<TreatmentAssignment> {
    let mut parts = Vec::with_capacity(samples.len());
    for (u, sample) in samples.iter().enumerate() {
        if sample.len() < 2 {
            return Err(Error::validation(format!(
                "stratum {} has {} sampled clusters; at least 2 are needed",
                u + 1,
                sample.len()
            )));
        }
        parts.push(assign_completely_random(sample, treated, rng)?);
    }
    Ok(TreatmentAssignment::merge(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn within(f: f64, p: f64, draws: usize) -> bool {
        (f - p).abs() < 4.0 * (p * (1.0 - p) / draws as f64).sqrt()
    }

    #[test]
    fn two_labelings_equally_likely() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| assign_completely_random(&[3, 7], 1, &mut rng).unwrap().treated == vec![3])
            .count();
        assert!(within(hits as f64 / draws as f64, 0.5, draws));
    }

    #[test]
    fn first_and_second_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sample = [0, 1, 2, 3, 4, 5];
        let draws = 100_000;
        let (mut one, mut both) = (0, 0);
        for _ in 0..draws {
            let a = assign_completely_random(&sample, 2, &mut rng).unwrap();
            assert_eq!(a.count(Arm::Treated), 2);
            assert_eq!(a.count(Arm::Control), 4);
            let t0 = a.arm_of(0) == Some(Arm::Treated);
            let t1 = a.arm_of(1) == Some(Arm::Treated);
            one += t0 as usize;
            both += (t0 && t1) as usize;
        }
        assert!(within(one as f64 / draws as f64, 2.0 / 6.0, draws));
        assert!(within(both as f64 / draws as f64, 2.0 / 30.0, draws));
    }

    #[test]
    fn empty_arm_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(assign_completely_random(&[1, 2], 0, &mut rng).is_err());
        assert!(assign_completely_random(&[1, 2], 2, &mut rng).is_err());
    }

    #[test]
    fn single_stratum_matches_complete_randomisation() {
        let a = assign_stratified(&[vec![0, 2, 4, 6]], 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = assign_completely_random(&[0, 2, 4, 6], 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn strata_are_independent_with_exact_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let draws = 100_000;
        let (mut x, mut y, mut xy) = (0.0, 0.0, 0.0);
        for _ in 0..draws {
            let a = assign_stratified(&samples, 1, &mut rng).unwrap();
            assert_eq!(a.treated.iter().filter(|&&c| c < 3).count(), 1);
            assert_eq!(a.treated.iter().filter(|&&c| c >= 3).count(), 1);
            let u = (a.arm_of(0) == Some(Arm::Treated)) as u8 as f64;
            let v = (a.arm_of(3) == Some(Arm::Treated)) as u8 as f64;
            x += u;
            y += v;
            xy += u * v;
        }
        let r = draws as f64;
        let cov = xy / r - (x / r) * (y / r);
        let var = (x / r) * (1.0 - x / r);
        let corr = cov / var;
        assert!(corr.abs() < 4.0 / r.sqrt(), "corr {corr}");
    }

    #[test]
    fn tiny_stratum_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(assign_stratified(&[vec![0, 1], vec![2]], 1, &mut rng).is_err());
    }
}
