//! Seeded k-means++ with a fixed number of Lloyd iterations, used to place
//! the initial scene prototypes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by `iters` Lloyd iterations. Clusters that go
/// empty keep their previous center. Deterministic for a given RNG state.
pub fn kmeans(points: &[Vec<f64>], k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    assert!(k >= 1 && k <= points.len(), "need 1 <= k <= #points");
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())].clone());
    let mut best_sq: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in best_sq.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (b, p) in best_sq.iter_mut().zip(points) {
            *b = b.min(sq_dist(p, centers.last().unwrap()));
        }
    }

    let dim = points[0].len();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let mut best = 0;
            let mut best_d = sq_dist(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = sq_dist(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            counts[best] += 1;
            for (s, v) in sums[best].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (slot, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *slot = s * inv;
                }
            }
        }
    }
    centers
}
