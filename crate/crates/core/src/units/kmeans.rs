use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sq_dist, Codebook};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub batch_size: usize,
    /// Defaults to `10 * k` when unset.
    pub iterations: Option<usize>,
    /// k-means++ seedings tried; the one with the lowest potential is kept.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 100,
            batch_size: 1024,
            iterations: None,
            n_init: 10,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(10 * self.k)
    }

    /// Frames drawn for k-means++ seeding.
    fn init_sample(&self, n: usize) -> usize {
        n.min((3 * self.batch_size).max(10 * self.k))
    }
}

fn check_inputs(frames: &[f32], dim: usize, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if dim == 0 || frames.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not form rows of {dim}", frames.len())));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature values".into()));
    }
    let n = frames.len() / dim;
    let distinct: HashSet<Vec<u32>> = frames
        .chunks(dim)
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    if distinct.len() < k {
        return Err(Error::Data(format!(
            "only {} distinct frames for k = {k}",
            distinct.len()
        )));
    }
    Ok(n)
}

/// Greedy k-means++ seeding on a random sample of the frames. Returns f64 centroids.
fn seed_centroids(frames: &[f32], dim: usize, cfg: &KMeansConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = frames.len() / dim;
    let row = |i: usize| &frames[i * dim..(i + 1) * dim];
    let s = cfg.init_sample(n);
    let sample: Vec<usize> = if s == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, s).into_vec()
    };

    let trials = 2 + (cfg.k as f64).ln() as usize;
    let mut chosen: Vec<usize> = vec![sample[rng.random_range(0..s)]];
    let mut d2: Vec<f64> = sample.iter().map(|&i| sq_dist(row(i), row(chosen[0]))).collect();
    while chosen.len() < cfg.k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            // greedy variant: keep the candidate that lowers the potential most
            let mut best: Option<(f64, usize)> = None;
            for _ in 0..trials {
                let mut u = rng.random::<f64>() * total;
                let mut pick = s - 1;
                for (j, &d) in d2.iter().enumerate() {
                    if u < d {
                        pick = j;
                        break;
                    }
                    u -= d;
                }
                let cand = row(sample[pick]);
                let pot: f64 = sample
                    .iter()
                    .zip(&d2)
                    .map(|(&i, &d)| d.min(sq_dist(row(i), cand)))
                    .sum();
                if best.is_none_or(|(p, _)| pot < p) {
                    best = Some((pot, sample[pick]));
                }
            }
            best.expect("at least one trial").1
        } else {
            // sample exhausted; take any frame not yet used as a centroid
            let start = rng.random_range(0..n);
            (0..n)
                .map(|o| (start + o) % n)
                .find(|&i| chosen.iter().all(|&c| sq_dist(row(i), row(c)) > 0.0))
                .expect("enough distinct frames were checked up front")
        };
        chosen.push(next);
        for (j, &i) in sample.iter().enumerate() {
            d2[j] = d2[j].min(sq_dist(row(i), row(next)));
        }
    }
    chosen
        .iter()
        .flat_map(|&i| row(i).iter().map(|&v| v as f64))
        .collect()
}

fn to_codebook(centroids: &[f64], counts: Vec<u64>, dim: usize, cfg: &KMeansConfig) -> Result<Codebook> {
    Codebook::new(
        centroids.iter().map(|&v| v as f32).collect(),
        counts,
        cfg.k,
        dim,
        cfg.seed,
    )
}

/// Random stream for candidate `c`; candidate 0 is the plain seed.
fn candidate_rng(seed: u64, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(c as u64);
    rng
}

/// The k-means++ codebook of the first candidate [`fit_minibatch_kmeans`] tries.
pub fn kmeans_plus_plus(frames: &[f32], dim: usize, cfg: &KMeansConfig) -> Result<Codebook> {
    check_inputs(frames, dim, cfg.k)?;
    let mut rng = candidate_rng(cfg.seed, 0);
    let c = seed_centroids(frames, dim, cfg, &mut rng);
    to_codebook(&c, vec![0; cfg.k], dim, cfg)
}

fn nearest_f64(centroids: &[f64], dim: usize, x: &[f32]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.chunks(dim).enumerate() {
        let d: f64 = x
            .iter()
            .zip(cen)
            .map(|(&a, &b)| (a as f64 - b) * (a as f64 - b))
            .sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Sculley update: each assigned frame pulls its centroid with rate 1/count.
pub(crate) fn minibatch_update(
    centroids: &mut [f64],
    counts: &mut [u64],
    dim: usize,
    batch: &[&[f32]],
    assign: &[usize],
) {
    for (x, &c) in batch.iter().zip(assign) {
        counts[c] += 1;
        let eta = 1.0 / counts[c] as f64;
        for (m, &v) in centroids[c * dim..(c + 1) * dim].iter_mut().zip(x.iter()) {
            *m += eta * (v as f64 - *m);
        }
    }
}

/// Mini-batch iterations each candidate seeding runs before the best is kept.
const PROBE_ITERATIONS: usize = 100;

struct Candidate {
    centroids: Vec<f64>,
    counts: Vec<u64>,
    rng: ChaCha8Rng,
}

impl Candidate {
    fn step(&mut self, frames: &[f32], dim: usize, batch_size: usize) {
        let n = frames.len() / dim;
        let row = |i: usize| &frames[i * dim..(i + 1) * dim];
        let idx: Vec<usize> = (0..batch_size).map(|_| self.rng.random_range(0..n)).collect();
        let batch: Vec<&[f32]> = idx.iter().map(|&i| row(i)).collect();
        let centroids = &self.centroids;
        let assign: Vec<usize> = batch.par_iter().map(|x| nearest_f64(centroids, dim, x)).collect();
        minibatch_update(&mut self.centroids, &mut self.counts, dim, &batch, &assign);
        for c in 0..self.counts.len() {
            if self.counts[c] == 0 {
                let x = batch[self.rng.random_range(0..batch.len())];
                for (m, &v) in self.centroids[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                    *m = v as f64;
                }
            }
        }
    }

    fn score(&self, frames: &[f32], dim: usize, rows: &[usize]) -> f64 {
        rows.par_iter()
            .map(|&i| {
                let x = &frames[i * dim..(i + 1) * dim];
                let c = nearest_f64(&self.centroids, dim, x);
                x.iter()
                    .zip(&self.centroids[c * dim..(c + 1) * dim])
                    .map(|(&a, &b)| (a as f64 - b) * (a as f64 - b))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Mini-batch k-means over row-major `frames` of width `dim`.
///
/// Each of `n_init` k-means++ seedings runs a short probe; the candidate
/// with the lowest inertia on a frame sample runs the remaining iterations.
pub fn fit_minibatch_kmeans(frames: &[f32], dim: usize, cfg: &KMeansConfig) -> Result<Codebook> {
    let n = check_inputs(frames, dim, cfg.k)?;
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be at least 1".into()));
    }
    if cfg.n_init == 0 {
        return Err(Error::InvalidInput("n_init must be at least 1".into()));
    }
    let total = cfg.iterations();
    let probe = total.min(PROBE_ITERATIONS);
    let s = cfg.init_sample(n);
    let held_out: Vec<usize> = if s == n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(&mut candidate_rng(cfg.seed, cfg.n_init), n, s).into_vec()
    };

    let mut best: Option<(f64, Candidate)> = None;
    for c in 0..cfg.n_init {
        let mut rng = candidate_rng(cfg.seed, c);
        let centroids = seed_centroids(frames, dim, cfg, &mut rng);
        let mut cand = Candidate { centroids, counts: vec![0; cfg.k], rng };
        for _ in 0..probe {
            cand.step(frames, dim, cfg.batch_size);
        }
        let score = if cfg.n_init == 1 { 0.0 } else { cand.score(frames, dim, &held_out) };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, cand));
        }
    }
    let (_, mut fit) = best.expect("at least one candidate");
    for _ in probe..total {
        fit.step(frames, dim, cfg.batch_size);
    }
    log::debug!("k-means finished: k={} n={n} iterations={total} candidates={}", cfg.k, cfg.n_init);
    to_codebook(&fit.centroids, fit.counts, dim, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::inertia;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(means: &[(f32, f32)], per: usize, sd: f32, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nrm = Normal::new(0.0f32, sd).unwrap();
        let mut out = Vec::new();
        for &(mx, my) in means {
            for _ in 0..per {
                out.push(mx + nrm.sample(&mut rng));
                out.push(my + nrm.sample(&mut rng));
            }
        }
        out
    }

    /// Full-batch Lloyd iterations to convergence from a given start.
    fn lloyd(frames: &[f32], dim: usize, start: &Codebook) -> Codebook {
        let mut c: Vec<f64> = start.centroids().iter().map(|&v| v as f64).collect();
        let k = start.k();
        let mut prev: Option<Vec<usize>> = None;
        for _ in 0..1000 {
            let a: Vec<usize> = frames.chunks(dim).map(|x| nearest_f64(&c, dim, x)).collect();
            if prev.as_ref() == Some(&a) {
                break;
            }
            let mut sum = vec![0.0; k * dim];
            let mut cnt = vec![0usize; k];
            for (x, &j) in frames.chunks(dim).zip(&a) {
                cnt[j] += 1;
                for d in 0..dim {
                    sum[j * dim + d] += x[d] as f64;
                }
            }
            for j in 0..k {
                if cnt[j] > 0 {
                    for d in 0..dim {
                        c[j * dim + d] = sum[j * dim + d] / cnt[j] as f64;
                    }
                }
            }
            prev = Some(a);
        }
        Codebook::new(c.iter().map(|&v| v as f32).collect(), vec![0; k], k, dim, 0).unwrap()
    }

    #[test]
    fn single_cluster_is_sample_mean() {
        let frames = blobs(&[(3.0, -1.0)], 500, 0.5, 1);
        let cfg = KMeansConfig { k: 1, batch_size: 64, iterations: Some(200), seed: 3, ..KMeansConfig::default() };
        let cb = fit_minibatch_kmeans(&frames, 2, &cfg).unwrap();
        assert_eq!(cb.counts()[0], 64 * 200);
        let mean_x = frames.chunks(2).map(|r| r[0] as f64).sum::<f64>() / 500.0;
        assert!((cb.centroid(0)[0] as f64 - mean_x).abs() < 0.05);
    }

    #[test]
    fn two_blobs_recovered() {
        let frames = blobs(&[(-4.0, 0.0), (4.0, 2.0)], 300, 0.3, 5);
        let cfg = KMeansConfig { k: 2, batch_size: 128, iterations: Some(50), seed: 9, ..KMeansConfig::default() };
        let cb = fit_minibatch_kmeans(&frames, 2, &cfg).unwrap();
        let mut cs: Vec<&[f32]> = (0..2).map(|i| cb.centroid(i)).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (c, (mx, my)) in cs.iter().zip([(-4.0f32, 0.0f32), (4.0, 2.0)]) {
            let emp: Vec<f32> = frames.chunks(2).filter(|r| (r[0] > 0.0) == (mx > 0.0)).flatten().copied().collect();
            let ex = emp.chunks(2).map(|r| r[0]).sum::<f32>() / 300.0;
            let ey = emp.chunks(2).map(|r| r[1]).sum::<f32>() / 300.0;
            assert!((c[0] - ex).abs() < 0.1 && (c[1] - ey).abs() < 0.1, "{c:?} vs ({ex}, {ey}) near ({mx}, {my})");
        }
    }

    #[test]
    fn close_to_lloyd_inertia() {
        let frames = blobs(&[(0.0, 0.0), (5.0, 5.0), (-5.0, 4.0), (4.0, -5.0)], 250, 1.0, 11);
        for seed in 0..3 {
            let cfg = KMeansConfig { k: 4, batch_size: 256, iterations: None, seed, ..KMeansConfig::default() };
            let mb = fit_minibatch_kmeans(&frames, 2, &cfg).unwrap();
            let oracle = lloyd(&frames, 2, &kmeans_plus_plus(&frames, 2, &cfg).unwrap());
            let (a, b) = (inertia(&mb, &frames, 2).unwrap(), inertia(&oracle, &frames, 2).unwrap());
            assert!(a <= 1.10 * b, "seed {seed}: {a} vs {b}");
        }
    }

    #[test]
    fn final_inertia_not_worse_than_seeding() {
        let frames = blobs(&[(0.0, 0.0), (3.0, 3.0), (-3.0, 2.0)], 200, 1.2, 2);
        let cfg = KMeansConfig { k: 6, batch_size: 100, iterations: None, seed: 4, ..KMeansConfig::default() };
        let init = kmeans_plus_plus(&frames, 2, &cfg).unwrap();
        let fin = fit_minibatch_kmeans(&frames, 2, &cfg).unwrap();
        assert!(inertia(&fin, &frames, 2).unwrap() <= inertia(&init, &frames, 2).unwrap());
    }

    #[test]
    fn deterministic_under_seed() {
        let frames = blobs(&[(0.0, 0.0), (3.0, 3.0)], 100, 1.0, 8);
        let cfg = KMeansConfig { k: 3, batch_size: 32, iterations: Some(20), seed: 1, ..KMeansConfig::default() };
        assert_eq!(
            fit_minibatch_kmeans(&frames, 2, &cfg).unwrap(),
            fit_minibatch_kmeans(&frames, 2, &cfg).unwrap()
        );
    }

    #[test]
    fn errors() {
        let cfg = |k| KMeansConfig { k, batch_size: 4, iterations: Some(1), seed: 0, ..KMeansConfig::default() };
        assert!(fit_minibatch_kmeans(&[1.0, 2.0], 2, &cfg(0)).is_err());
        let dup = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        assert!(fit_minibatch_kmeans(&dup, 2, &cfg(3)).is_err());
        assert!(fit_minibatch_kmeans(&dup, 2, &cfg(2)).is_ok());
        assert!(fit_minibatch_kmeans(&dup, 4, &cfg(1)).is_err());
    }

    #[test]
    fn heavy_duplicates_still_seed_distinct_centroids() {
        let mut frames = vec![0.0f32; 2 * 5000];
        frames.extend_from_slice(&[1.0, 1.0, 2.0, 2.0]);
        let cfg = KMeansConfig { k: 3, batch_size: 8, iterations: Some(2), seed: 0, ..KMeansConfig::default() };
        let cb = kmeans_plus_plus(&frames, 2, &cfg).unwrap();
        assert_eq!(inertia(&cb, &frames, 2).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn update_moves_toward_batch_mean(
            c0 in proptest::collection::vec(-5.0f64..5.0, 2),
            count in 0u64..50,
            pts in proptest::collection::vec(-5.0f32..5.0, 2..20),
        ) {
            let pts = &pts[..pts.len() / 2 * 2];
            let batch: Vec<&[f32]> = pts.chunks(2).collect();
            let m = batch.len() as f64;
            let mean = [
                batch.iter().map(|x| x[0] as f64).sum::<f64>() / m,
                batch.iter().map(|x| x[1] as f64).sum::<f64>() / m,
            ];
            let before = (c0[0] - mean[0]).hypot(c0[1] - mean[1]);
            let mut c = c0.clone();
            let mut counts = [count];
            minibatch_update(&mut c, &mut counts, 2, &batch, &vec![0; batch.len()]);
            let after = (c[0] - mean[0]).hypot(c[1] - mean[1]);
            prop_assert!(after <= before + 1e-9);
        }
    }
}
