use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sinkdiv::measures::{CostMatrix, DiscreteMeasure};

/// Random discrete instance on the unit square with positive random weights.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    i_count: usize,
    j_count: usize,
) -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
    let points = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    };
    let weights =
        |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> { (0..n).map(|_| 0.2 + rng.random::<f64>()).collect() };
    let mu = DiscreteMeasure::new(points(rng, i_count), Some(weights(rng, i_count))).unwrap();
    let nu = DiscreteMeasure::new(points(rng, j_count), Some(weights(rng, j_count))).unwrap();
    (mu, nu)
}

/// Exhaustive minimum of the unregularized transport cost over all
/// assignments for uniform n-vs-n instances (a permutation is optimal there),
/// independent of every solver under test.
pub fn permutation_oracle(cost: &CostMatrix<f64>) -> f64 {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "oracle needs a square instance");
    fn recurse(cost: &CostMatrix<f64>, used: &mut [bool], row: usize, acc: f64, best: &mut f64) {
        let n = used.len();
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                recurse(cost, used, row + 1, acc + cost.at(row, j), best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    recurse(cost, &mut vec![false; n], 0, 0.0, &mut best);
    best / n as f64
}
