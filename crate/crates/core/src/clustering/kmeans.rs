//! Lloyd's k-means with k-means++ seeding and seeded restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::euclidean;
use crate::error::{input_err, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const TOLERANCE: f64 = 1e-8;
pub const DEFAULT_RESTARTS: usize = 10;

/// Result of one or more Lloyd runs.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub sse: f64,
    pub iterations: usize,
    /// SSE after every assignment step of the returned run.
    pub sse_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(centers: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Number of pairwise-distinct points (exact equality).
pub fn distinct_count(data: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for x in data {
        if !seen.iter().any(|s| *s == x) {
            seen.push(x);
        }
    }
    seen.len()
}

pub fn sse(data: &[Vec<f64>], centers: &[Vec<f64>]) -> f64 {
    data.iter().map(|x| nearest(centers, x).1).sum()
}

fn validate(data: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(input_err("k-means needs K >= 1"));
    }
    if data.len() < k {
        return Err(input_err(format!("k-means with K={k} on {} points", data.len())));
    }
    let dim = data[0].len();
    if data.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
        return Err(input_err("k-means data must be finite and of equal dimension"));
    }
    Ok(dim)
}

/// Draws an index with probability proportional to `weights`; uniform when all are zero.
fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.gen_range(0..weights.len());
    }
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// k-means++: first center uniform, then proportional to squared distance.
fn seed_centers(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.gen_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let c = data[sample_weighted(&d2, rng)].clone();
        for (d, x) in d2.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// Single Lloyd run from the given initial centers.
pub fn lloyd(data: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> Result<KMeansFit> {
    let k = centers.len();
    let dim = validate(data, k)?;
    let mut assignments = vec![0; data.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut total = 0.0;
        let mut dists = vec![0.0; data.len()];
        for (i, x) in data.iter().enumerate() {
            let (c, d) = nearest(&centers, x);
            assignments[i] = c;
            dists[i] = d;
            total += d;
        }
        trace.push(total);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, a) in data.iter().zip(&assignments) {
            counts[*a] += 1;
            sums[*a].iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        let mut movement: f64 = 0.0;
        let mut taken = vec![false; data.len()];
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect()
            } else {
                // Reseed to the point farthest from its current center.
                let far = (0..data.len())
                    .filter(|i| !taken[*i])
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(b.cmp(a)))
                    .unwrap_or(0);
                taken[far] = true;
                dists[far] = 0.0;
                data[far].clone()
            };
            movement = movement.max(euclidean(&new, &centers[c]));
            centers[c] = new;
        }
        if movement < TOLERANCE {
            // Centers are a fixed point; the final assignment matches the last trace entry.
            break;
        }
    }
    let sse = *trace.last().unwrap();
    Ok(KMeansFit {
        centers,
        assignments,
        sse,
        iterations,
        sse_trace: trace,
    })
}

/// Best-of-`restarts` k-means by SSE; ties keep the earliest restart.
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeansFit> {
    validate(data, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..restarts.max(1) {
        let init = seed_centers(data, k, &mut rng);
        let fit = lloyd(data, init)?;
        if best.as_ref().map_or(true, |b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    Ok(best.unwrap())
}
