//! K-means clustering (Lloyd's algorithm with k-means++ or random init)
//! and silhouette scoring, both over embedding matrices.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::embedding::EmbeddingMatrix;

/// Centroid initialization strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KmeansInit {
    /// D²-weighted seeding (k-means++), the default.
    KmeansPlusPlus,
    /// K distinct points chosen uniformly at random.
    Random,
}

/// Parameters for one k-means fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    /// Number of clusters, `1 ≤ k ≤ n`.
    pub k: usize,
    /// Centroid initialization strategy.
    pub init: KmeansInit,
    /// RNG seed; the only source of randomness.
    pub seed: u64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid movement.
    pub tol: f64,
}

impl KmeansParams {
    /// Parameters with the default init (k-means++), iteration cap (300),
    /// and tolerance (1e-6).
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansParams {
            k,
            init: KmeansInit::KmeansPlusPlus,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

/// A fitted k-means model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterModel {
    /// Number of clusters.
    pub k: usize,
    /// Vector dimension.
    pub dim: usize,
    /// Row-major `k × dim` centroid matrix.
    pub centroids: Vec<f64>,
    /// Per-point cluster index, nearest final centroid (ties to the lowest
    /// centroid index).
    pub assignments: Vec<usize>,
    /// Completed assign/update rounds.
    pub iterations: usize,
    /// Whether the centroid movement fell below `tol` before `max_iter`.
    pub converged: bool,
    /// Sum of squared distances from each point to its final centroid.
    pub inertia: f64,
    /// Seed the model was fitted with.
    pub seed: u64,
}

impl ClusterModel {
    /// The `c`-th centroid as a slice.
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Per-point silhouette scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SilhouetteReport {
    /// `s(i)` per point, each in `[-1, 1]`.
    pub per_point: Vec<f64>,
    /// Arithmetic mean of the per-point scores.
    pub mean: f64,
}

/// Errors arising from clustering or silhouette scoring.
#[derive(Debug, thiserror::Error)]
pub enum ClusteringError {
    #[error("k must satisfy 1 <= k <= n, got k={k} with n={n}")]
    InvalidK { k: usize, n: usize },
    #[error("points have dimension {actual}, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("expected {expected} labels, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("silhouette needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("silhouette needs at least 2 distinct clusters")]
    SingleCluster,
    #[error("max_iter must be at least 1")]
    ZeroMaxIter,
    #[error("tol must be nonnegative and finite, got {0}")]
    InvalidTol(f64),
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Index of the centroid nearest to `point`, ties to the lowest index.
fn nearest_centroid(point: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d2 = squared_distance(point, centroid);
        if d2 < best.1 {
            best = (c, d2);
        }
    }
    best
}

fn init_centroids(points: &EmbeddingMatrix, params: &KmeansParams) -> Vec<f64> {
    let n = points.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(params.k);
    match params.init {
        KmeansInit::Random => {
            let sample = rand::seq::index::sample(&mut rng, n, params.k);
            chosen.extend(sample.iter());
        }
        KmeansInit::KmeansPlusPlus => {
            chosen.push(rng.gen_range(0..n));
            let mut d2: Vec<f64> = (0..n)
                .map(|i| squared_distance(points.row(i), points.row(chosen[0])))
                .collect();
            while chosen.len() < params.k {
                let total: f64 = d2.iter().sum();
                let next = if total > 0.0 {
                    // Draw proportionally to squared distance from the
                    // nearest chosen centroid.
                    let mut u = rng.gen_range(0.0..total);
                    let mut pick = n - 1;
                    for (i, &w) in d2.iter().enumerate() {
                        if u < w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    pick
                } else {
                    // All remaining mass is zero (duplicate points); fall
                    // back to a uniform draw.
                    rng.gen_range(0..n)
                };
                chosen.push(next);
                for (i, nearest) in d2.iter_mut().enumerate() {
                    let d = squared_distance(points.row(i), points.row(next));
                    if d < *nearest {
                        *nearest = d;
                    }
                }
            }
        }
    }
    let mut centroids = Vec::with_capacity(params.k * points.dim);
    for &idx in &chosen {
        centroids.extend_from_slice(points.row(idx));
    }
    centroids
}

/// Fits k-means to `points` with Lloyd's algorithm.
///
/// Empty clusters are repaired each round by reassigning the point farthest
/// from its own centroid (one point per empty cluster, never emptying
/// another cluster). After convergence or the iteration cap, a final
/// assignment pass makes `assignments` consistent with the final centroids.
pub fn kmeans_fit(
    points: &EmbeddingMatrix,
    params: &KmeansParams,
) -> Result<ClusterModel, ClusteringError> {
    let n = points.n_rows();
    if params.k == 0 || params.k > n {
        return Err(ClusteringError::InvalidK { k: params.k, n });
    }
    if params.max_iter == 0 {
        return Err(ClusteringError::ZeroMaxIter);
    }
    if !(params.tol >= 0.0 && params.tol.is_finite()) {
        return Err(ClusteringError::InvalidTol(params.tol));
    }
    let dim = points.dim;
    let mut centroids = init_centroids(points, params);
    let mut assignments = vec![0usize; n];
    let mut iterations = 0usize;
    let mut converged = false;
    let mut previous_sse = f64::INFINITY;

    while iterations < params.max_iter {
        // Assignment step.
        for (i, assignment) in assignments.iter_mut().enumerate() {
            *assignment = nearest_centroid(points.row(i), &centroids, dim).0;
        }

        // Empty-cluster repair: move in the point farthest from its own
        // centroid, one point per empty cluster.
        let mut sizes = vec![0usize; params.k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        let mut repaired = false;
        for empty in 0..params.k {
            if sizes[empty] > 0 {
                continue;
            }
            let mut farthest: Option<(usize, f64)> = None;
            for i in 0..n {
                if sizes[assignments[i]] < 2 {
                    continue; // would empty another cluster
                }
                let d2 = squared_distance(
                    points.row(i),
                    centroids_row(&centroids, dim, assignments[i]),
                );
                let better = match farthest {
                    None => true,
                    Some((_, best)) => d2 > best,
                };
                if better {
                    farthest = Some((i, d2));
                }
            }
            if let Some((i, _)) = farthest {
                sizes[assignments[i]] -= 1;
                assignments[i] = empty;
                sizes[empty] = 1;
                repaired = true;
            }
        }

        // Update step: centroids become the means of their members.
        let mut sums = vec![0.0f64; params.k * dim];
        let mut counts = vec![0usize; params.k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        let mut movement: f64 = 0.0;
        for (c, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue; // unrepairable (k == n etc.); keep the old centroid
            }
            let inv = 1.0 / count as f64;
            let start = c * dim;
            let mut shift2 = 0.0;
            for j in 0..dim {
                let new = sums[start + j] * inv;
                let d = new - centroids[start + j];
                shift2 += d * d;
                centroids[start + j] = new;
            }
            movement = movement.max(shift2.sqrt());
        }
        iterations += 1;

        if cfg!(debug_assertions) && !repaired {
            let sse: f64 = (0..n)
                .map(|i| {
                    squared_distance(
                        points.row(i),
                        centroids_row(&centroids, dim, assignments[i]),
                    )
                })
                .sum();
            debug_assert!(
                sse <= previous_sse * (1.0 + 1e-9) + 1e-12,
                "SSE increased on a repair-free round: {previous_sse} -> {sse}"
            );
            previous_sse = sse;
        }

        if movement < params.tol {
            converged = true;
            break;
        }
    }

    // Final assignment pass against the final centroids.
    let mut inertia = 0.0;
    for (i, assignment) in assignments.iter_mut().enumerate() {
        let (c, d2) = nearest_centroid(points.row(i), &centroids, dim);
        *assignment = c;
        inertia += d2;
    }

    Ok(ClusterModel {
        k: params.k,
        dim,
        centroids,
        assignments,
        iterations,
        converged,
        inertia,
        seed: params.seed,
    })
}

fn centroids_row(centroids: &[f64], dim: usize, c: usize) -> &[f64] {
    &centroids[c * dim..(c + 1) * dim]
}

/// Runs [`kmeans_fit`] with seeds `seed, seed+1, …, seed+restarts-1` and
/// returns the model with the lowest inertia (ties to the lowest seed).
pub fn kmeans_best_of(
    points: &EmbeddingMatrix,
    params: &KmeansParams,
    restarts: usize,
) -> Result<ClusterModel, ClusteringError> {
    if restarts == 0 {
        return Err(ClusteringError::ZeroMaxIter);
    }
    let mut best: Option<ClusterModel> = None;
    for offset in 0..restarts {
        let run = kmeans_fit(
            points,
            &KmeansParams {
                seed: params.seed + offset as u64,
                ..*params
            },
        )?;
        let better = match &best {
            None => true,
            Some(current) => run.inertia < current.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Assigns each row of `points` to its nearest centroid of `model`.
pub fn assign(
    model: &ClusterModel,
    points: &EmbeddingMatrix,
) -> Result<Vec<usize>, ClusteringError> {
    if points.dim != model.dim {
        return Err(ClusteringError::DimensionMismatch {
            expected: model.dim,
            actual: points.dim,
        });
    }
    Ok((0..points.n_rows())
        .map(|i| nearest_centroid(points.row(i), &model.centroids, model.dim).0)
        .collect())
}

/// Computes per-point silhouette scores for a labeled point set.
///
/// `s(i) = (b(i) − a(i)) / max(a(i), b(i))` with `a(i)` the mean distance to
/// the other members of i's cluster and `b(i)` the smallest mean distance to
/// any other cluster. Singleton clusters score 0, as does a `0/0` ratio.
pub fn silhouette(
    points: &EmbeddingMatrix,
    labels: &[usize],
) -> Result<SilhouetteReport, ClusteringError> {
    let n = points.n_rows();
    if labels.len() != n {
        return Err(ClusteringError::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if n < 2 {
        return Err(ClusteringError::TooFewPoints(n));
    }
    let mut cluster_sizes: std::collections::BTreeMap<usize, usize> =
        std::collections::BTreeMap::new();
    for &label in labels {
        *cluster_sizes.entry(label).or_insert(0) += 1;
    }
    if cluster_sizes.len() < 2 {
        return Err(ClusteringError::SingleCluster);
    }

    let mut per_point = Vec::with_capacity(n);
    for i in 0..n {
        if cluster_sizes[&labels[i]] == 1 {
            per_point.push(0.0);
            continue;
        }
        // Sum of distances from i to each cluster.
        let mut sums: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for (j, &label) in labels.iter().enumerate() {
            if i == j {
                continue;
            }
            *sums.entry(label).or_insert(0.0) += distance(points.row(i), points.row(j));
        }
        let own = labels[i];
        let a = sums.get(&own).copied().unwrap_or(0.0) / (cluster_sizes[&own] - 1) as f64;
        let b = sums
            .iter()
            .filter(|&(&label, _)| label != own)
            .map(|(&label, &sum)| sum / cluster_sizes[&label] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        per_point.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    let mean = per_point.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteReport { per_point, mean })
}
