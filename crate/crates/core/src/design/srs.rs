use rand::Rng;

/// Uniform s-subset of `0..ell`, ascending.
pub fn draw_srs<R: Rng + ?Sized>(ell: usize, s: usize, rng: &mut R) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, ell, s).into_vec();
    v.sort_unstable();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(draw_srs(5, 5, &mut rng), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn marginal_and_subset_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 200_000;
        let mut hits = [0usize; 5];
        let mut subsets = std::collections::HashMap::new();
        for _ in 0..draws {
            let d = draw_srs(5, 2, &mut rng);
            for &c in &d {
                hits[c] += 1;
            }
            *subsets.entry(d).or_insert(0usize) += 1;
        }
        let se = (0.4f64 * 0.6 / draws as f64).sqrt();
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.4).abs() < 4.0 * se);
        }
        assert_eq!(subsets.len(), 10);
        let se = (0.1f64 * 0.9 / draws as f64).sqrt();
        for (_, k) in subsets {
            assert!((k as f64 / draws as f64 - 0.1).abs() < 4.0 * se);
        }
    }
}
