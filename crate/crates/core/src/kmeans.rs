//! Filter dictionaries learned by k-means on whitened patches.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patch::{PatchMatrix, ZcaTransform};
use crate::rng::SeededRng;

/// Points per parallel work unit. Fixed so results do not depend on the
/// thread count.
const CHUNK: usize = 1024;

pub const DEFAULT_MAX_ITERS: usize = 100;

/// Learned filters (one per column) together with the whitening transform
/// they were trained in.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub filters: Array2<f64>,
    pub patch_side: usize,
    pub depth: usize,
    pub whitening: ZcaTransform,
    pub layer_index: usize,
}

impl FilterBank {
    pub fn new(
        filters: Array2<f64>,
        patch_side: usize,
        depth: usize,
        whitening: ZcaTransform,
        layer_index: usize,
    ) -> Result<Self> {
        let d = patch_side * patch_side * depth;
        if filters.nrows() != d || whitening.dim() != d {
            return Err(Error::Dim(format!(
                "filters have {} rows and whitening {} dims, expected {d}",
                filters.nrows(),
                whitening.dim()
            )));
        }
        if filters.ncols() == 0 {
            return Err(Error::Dim("filter bank is empty".into()));
        }
        if filters.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("filter bank holds non-finite values".into()));
        }
        Ok(Self {
            filters,
            patch_side,
            depth,
            whitening,
            layer_index,
        })
    }

    pub fn k(&self) -> usize {
        self.filters.ncols()
    }

    pub fn dim(&self) -> usize {
        self.filters.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Centroids as columns, `dim x k`.
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// SSE measured after each assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

/// Lloyd's algorithm from a k-means++ start. Stops after `max_iters`
/// assignment steps or when assignments stop changing. A cluster left
/// empty by an update is moved onto the point farthest from its centroid.
pub fn kmeans(
    patches: &PatchMatrix,
    k: usize,
    max_iters: usize,
    rng: &mut SeededRng,
) -> Result<KMeansResult> {
    let n = patches.n_patches();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    // rows are points from here on
    let points = patches.data().t().as_standard_layout().into_owned();
    let mut centers = plus_plus_init(points.view(), k, rng);

    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    for iter in 0..max_iters {
        iterations = iter + 1;
        let next = assign(points.view(), centers.view());
        history.push(assigned_sse(points.view(), centers.view(), &next));
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
        centers = update(points.view(), &assignments, k);
    }
    Ok(KMeansResult {
        centroids: centers.reversed_axes().as_standard_layout().into_owned(),
        assignments,
        sse_history: history,
        iterations,
    })
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding; rows of the result are centroids.
fn plus_plus_init(points: ArrayView2<'_, f64>, k: usize, rng: &mut SeededRng) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.below(n);
    centers.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = points
        .axis_iter(Axis(0))
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the last increment
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng.below(n)
        };
        centers.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.axis_iter(Axis(0)).enumerate() {
            let d = sq_dist(p, points.row(pick));
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    centers
}

/// Nearest centroid per point, lowest index on ties.
fn assign(points: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> Vec<usize> {
    let center_norms: Array1<f64> = centers.rows().into_iter().map(|c| c.dot(&c)).collect();
    let n = points.nrows();
    let chunks: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let parts: Vec<Vec<usize>> = chunks
        .par_iter()
        .map(|&start| {
            let block = points.slice(s![start..(start + CHUNK).min(n), ..]);
            // |x - c|^2 = |x|^2 - 2 x.c + |c|^2; |x|^2 is constant per row
            let cross = block.dot(&centers.t());
            cross
                .rows()
                .into_iter()
                .map(|row| {
                    let mut best = 0;
                    let mut best_d = f64::INFINITY;
                    for (j, (&xc, &cn)) in row.iter().zip(center_norms.iter()).enumerate() {
                        let d = cn - 2.0 * xc;
                        if d < best_d {
                            best_d = d;
                            best = j;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

fn assigned_sse(points: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    let n = points.nrows();
    let chunks: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partial: Vec<f64> = chunks
        .par_iter()
        .map(|&start| {
            (start..(start + CHUNK).min(n))
                .map(|i| sq_dist(points.row(i), centers.row(labels[i])))
                .sum()
        })
        .collect();
    partial.iter().sum()
}

fn update(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let dim = points.ncols();
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0usize; k];
    for (p, &l) in points.axis_iter(Axis(0)).zip(labels) {
        let mut row = sums.row_mut(l);
        row += &p;
        counts[l] += 1;
    }
    for (mut row, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
    if !empty.is_empty() {
        let mut dist: Vec<f64> = points
            .axis_iter(Axis(0))
            .zip(labels)
            .map(|(p, &l)| sq_dist(p, sums.row(l)))
            .collect();
        for c in empty {
            let far = dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) })
                .0;
            sums.row_mut(c).assign(&points.row(far));
            dist[far] = 0.0;
        }
    }
    sums
}

/// Sum of squared distances from each patch to its nearest centroid
/// (`centroids` holds one centroid per column).
pub fn sse(patches: &PatchMatrix, centroids: &Array2<f64>) -> Result<f64> {
    if centroids.nrows() != patches.dim() {
        return Err(Error::Dim(format!(
            "centroids have dimension {}, patches {}",
            centroids.nrows(),
            patches.dim()
        )));
    }
    if centroids.ncols() == 0 {
        return Err(Error::Dim("no centroids".into()));
    }
    let data = patches.data();
    let n = data.ncols();
    let chunks: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partial: Vec<f64> = chunks
        .par_iter()
        .map(|&start| {
            (start..(start + CHUNK).min(n))
                .map(|i| {
                    centroids
                        .axis_iter(Axis(1))
                        .map(|c| sq_dist(data.column(i), c))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum()
        })
        .collect();
    Ok(partial.iter().sum())
}

/// SSE against a bank's filters.
pub fn bank_sse(patches: &PatchMatrix, bank: &FilterBank) -> Result<f64> {
    sse(patches, &bank.filters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(cols: &[Vec<f64>]) -> PatchMatrix {
        let d = cols[0].len();
        let data = Array2::from_shape_fn((d, cols.len()), |(r, c)| cols[c][r]);
        PatchMatrix::new(data, 1, d).unwrap()
    }

    fn blobs(seed: u64, per: usize) -> PatchMatrix {
        let mut rng = SeededRng::new(seed);
        let centers = [(0.0, 0.0), (6.0, 1.0), (2.0, 7.0)];
        let mut cols = Vec::new();
        for &(x, y) in &centers {
            for _ in 0..per {
                cols.push(vec![x + rng.normal(), y + rng.normal()]);
            }
        }
        matrix(&cols)
    }

    /// Oracle: nearest-centroid scan written directly over columns.
    fn brute_sse(p: &PatchMatrix, c: &Array2<f64>) -> f64 {
        let mut total = 0.0;
        for i in 0..p.n_patches() {
            let mut best = f64::INFINITY;
            for j in 0..c.ncols() {
                let mut d = 0.0;
                for r in 0..p.dim() {
                    let diff = p.data()[[r, i]] - c[[r, j]];
                    d += diff * diff;
                }
                best = best.min(d);
            }
            total += best;
        }
        total
    }

    #[test]
    fn two_point_masses() {
        let pm = matrix(&[vec![0.0], vec![0.0], vec![10.0], vec![10.0]]);
        let r = kmeans(&pm, 2, 10, &mut SeededRng::new(1)).unwrap();
        let mut c: Vec<f64> = r.centroids.iter().copied().collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 10.0]);
    }

    #[test]
    fn k_equals_n_recovers_points() {
        let cols: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let pm = matrix(&cols);
        let r = kmeans(&pm, 6, 20, &mut SeededRng::new(2)).unwrap();
        assert_eq!(sse(&pm, &r.centroids).unwrap(), 0.0);
    }

    #[test]
    fn too_many_clusters() {
        let pm = matrix(&[vec![0.0], vec![1.0]]);
        assert!(matches!(
            kmeans(&pm, 3, 10, &mut SeededRng::new(0)),
            Err(Error::InvalidK { k: 3, n: 2 })
        ));
    }

    #[test]
    fn sse_examples() {
        let pm = matrix(&[vec![-1.0], vec![1.0]]);
        assert_eq!(sse(&pm, &Array2::zeros((1, 1))).unwrap(), 2.0);
        let same = Array2::from_shape_vec((1, 2), vec![-1.0, 1.0]).unwrap();
        assert_eq!(sse(&pm, &same).unwrap(), 0.0);
        assert!(matches!(sse(&pm, &Array2::zeros((2, 1))), Err(Error::Dim(_))));
    }

    #[test]
    fn sse_matches_scan() {
        let mut rng = SeededRng::new(11);
        let pm = PatchMatrix::new(Array2::from_shape_fn((5, 300), |_| rng.normal()), 1, 5).unwrap();
        let c = Array2::from_shape_fn((5, 7), |_| rng.normal());
        let a = sse(&pm, &c).unwrap();
        assert!((a - brute_sse(&pm, &c)).abs() <= 1e-10 * a);
    }

    #[test]
    fn blobs_near_best_of_restarts() {
        let pm = blobs(3, 100);
        let r = kmeans(&pm, 3, 50, &mut SeededRng::new(100)).unwrap();
        let got = sse(&pm, &r.centroids).unwrap();
        let best = (0..20)
            .map(|s| {
                let c = kmeans(&pm, 3, 200, &mut SeededRng::new(1000 + s)).unwrap().centroids;
                brute_sse(&pm, &c)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(got <= best * 1.01, "{got} vs {best}");
    }

    #[test]
    fn deterministic_and_distinct() {
        let pm = blobs(8, 40);
        let a = kmeans(&pm, 5, 30, &mut SeededRng::new(5)).unwrap();
        let b = kmeans(&pm, 5, 30, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.centroids, b.centroids);
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(a.centroids.column(i), a.centroids.column(j));
            }
        }
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // duplicated points force k-means++ to fall back to uniform picks
        let cols = vec![vec![1.0], vec![1.0], vec![1.0], vec![5.0]];
        let pm = matrix(&cols);
        let r = kmeans(&pm, 2, 10, &mut SeededRng::new(0)).unwrap();
        assert_eq!(sse(&pm, &r.centroids).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sse_never_increases(seed in any::<u64>(), k in 1usize..8) {
            let mut rng = SeededRng::new(seed);
            let pm = PatchMatrix::new(Array2::from_shape_fn((3, 120), |_| rng.normal()), 1, 3).unwrap();
            let r = kmeans(&pm, k, 40, &mut rng).unwrap();
            for w in r.sse_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-9));
            }
        }
    }
}
