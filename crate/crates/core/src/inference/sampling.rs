use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::{stream_rng, Stream};

/// Latin hypercube: each dimension is split into `n` equal strata and every
/// stratum holds exactly one sample.
pub fn latin_hypercube(n: usize, bounds: &[[f64; 2]], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, Stream::Lhs, 0);
    let d = bounds.len();
    let mut out = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for (k, [lo, hi]) in bounds.iter().enumerate() {
        perm.shuffle(&mut rng);
        for i in 0..n {
            let u = (perm[i] as f64 + rng.gen::<f64>()) / n as f64;
            out[i][k] = lo + u * (hi - lo);
        }
    }
    out
}

pub fn uniform_in_box(rng: &mut ChaCha8Rng, bounds: &[[f64; 2]]) -> Vec<f64> {
    bounds.iter().map(|[lo, hi]| lo + rng.gen::<f64>() * (hi - lo)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_per_stratum() {
        let b = vec![[0.0, 1.0], [-5.0, 5.0], [2.0, 4.0]];
        let s = latin_hypercube(10, &b, 7);
        for (k, [lo, hi]) in b.iter().enumerate() {
            let mut strata: Vec<usize> = s.iter().map(|x| ((x[k] - lo) / (hi - lo) * 10.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let b = vec![[0.0, 1.0]; 4];
        assert_eq!(latin_hypercube(20, &b, 3), latin_hypercube(20, &b, 3));
        assert_ne!(latin_hypercube(20, &b, 3), latin_hypercube(20, &b, 4));
    }
}
