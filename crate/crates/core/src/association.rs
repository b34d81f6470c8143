//! Balanced k-means association of GUs to UAVs.
//!
//! The assignment step of ordinary k-means is replaced by a minimum-cost
//! perfect matching between GUs and pre-sized cluster slots, so every cluster
//! ends up with `floor(M/K)` or `ceil(M/K)` members. The matching is solved
//! with the Hungarian method on an `M x M` matrix, which makes one iteration
//! `O(M^3)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Association, Point2};

/// Convergence threshold on the largest centroid coordinate change, m.
pub const CENTROID_TOL: f64 = 1e-9;

/// Square matrix of finite assignment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare {
                    row: i,
                    len: row.len(),
                    n,
                });
            }
            for (j, &c) in row.iter().enumerate() {
                if !c.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
                data.push(c);
            }
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }

    /// Squared distance from each GU (row) to the centroid owning each slot (column).
    pub fn squared_distances(gu_pos: &[Point2], centroids: &[Point2], layout: &SlotLayout) -> Self {
        let n = gu_pos.len();
        debug_assert_eq!(layout.slot_owner.len(), n);
        let mut data = Vec::with_capacity(n * n);
        for o in gu_pos {
            for &c in &layout.slot_owner {
                data.push(sq_dist(*o, centroids[c]));
            }
        }
        Self { n, data }
    }
}

/// Optimal matching of rows to columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `col_of_row[i]` is the column matched to row `i`.
    pub col_of_row: Vec<usize>,
    pub total: f64,
}

/// Minimum-cost perfect matching (Hungarian method with row potentials, `O(n^3)`).
///
/// Rows are inserted in ascending order. When several columns tie for the
/// smallest reduced cost, an unmatched column wins, then the lowest index,
/// so results are reproducible and an all-zero matrix yields the identity.
pub fn hungarian(cost: &CostMatrix) -> Matching {
    let n = cost.n;
    if n == 0 {
        return Matching {
            col_of_row: Vec::new(),
            total: 0.0,
        };
    }
    // 1-based indexing with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                let better = minv[j] < delta
                    || (minv[j] == delta && row_of_col[j] == 0 && row_of_col[j1] != 0);
                if j1 == 0 || better {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    let total = col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| cost.get(i, j))
        .sum();
    Matching { col_of_row, total }
}

/// Mapping from matching slot to cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLayout {
    pub slot_owner: Vec<usize>,
}

impl SlotLayout {
    pub fn cluster_sizes(&self, n_clusters: usize) -> Vec<usize> {
        let mut sizes = vec![0; n_clusters];
        for &c in &self.slot_owner {
            sizes[c] += 1;
        }
        sizes
    }
}

/// `M mod K` clusters own `ceil(M/K)` slots and the rest `floor(M/K)`; larger
/// clusters take the lower indices.
pub fn make_slot_layout(n_gus: usize, n_clusters: usize) -> Result<SlotLayout> {
    if n_clusters == 0 || n_gus < n_clusters {
        return Err(Error::Config(format!(
            "slot layout needs M >= K >= 1, got M={n_gus} K={n_clusters}"
        )));
    }
    let base = n_gus / n_clusters;
    let extra = n_gus % n_clusters;
    let slot_owner = (0..n_clusters)
        .flat_map(|c| std::iter::repeat_n(c, base + usize::from(c < extra)))
        .collect();
    Ok(SlotLayout { slot_owner })
}

/// Arithmetic mean of each cluster's members.
pub fn centroid_update(gu_pos: &[Point2], assoc: &Association) -> Result<Vec<Point2>> {
    let k = assoc.n_uavs();
    let mut sum = vec![[0.0; 2]; k];
    let mut count = vec![0usize; k];
    for (o, &c) in gu_pos.iter().zip(assoc.assign()) {
        sum[c][0] += o[0];
        sum[c][1] += o[1];
        count[c] += 1;
    }
    sum.iter()
        .zip(&count)
        .enumerate()
        .map(|(c, (s, &n))| {
            if n == 0 {
                Err(Error::EmptyCluster(c))
            } else {
                Ok([s[0] / n as f64, s[1] / n as f64])
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkmcResult {
    pub association: Association,
    pub centroids: Vec<Point2>,
    pub converged: bool,
    pub iterations: usize,
    /// Matching cost of every iteration, m^2.
    pub cost_trace: Vec<f64>,
}

/// Balanced k-means, starting from `initial_centroids`.
pub fn bkmc(gu_pos: &[Point2], initial_centroids: &[Point2], max_iters: usize) -> Result<BkmcResult> {
    let k = initial_centroids.len();
    let layout = make_slot_layout(gu_pos.len(), k)?;
    let mut centroids = initial_centroids.to_vec();
    let mut cost_trace = Vec::new();
    let mut association = None;
    let mut converged = false;

    for _ in 0..max_iters.max(1) {
        let cost = CostMatrix::squared_distances(gu_pos, &centroids, &layout);
        let matching = hungarian(&cost);
        cost_trace.push(matching.total);
        let assign = matching
            .col_of_row
            .iter()
            .map(|&slot| layout.slot_owner[slot])
            .collect();
        let assoc = Association::new(assign, k)?;
        let next = centroid_update(gu_pos, &assoc)?;
        let shift = centroids
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max);
        centroids = next;
        association = Some(assoc);
        if shift < CENTROID_TOL {
            converged = true;
            break;
        }
    }

    Ok(BkmcResult {
        association: association.expect("at least one iteration runs"),
        centroids,
        converged,
        iterations: cost_trace.len(),
        cost_trace,
    })
}

#[inline]
fn sq_dist(a: Point2, b: Point2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(v: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn brute_force_min(c: &CostMatrix) -> f64 {
        fn rec(c: &CostMatrix, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == c.size() {
                *best = best.min(acc);
                return;
            }
            for j in 0..c.size() {
                if !used[j] {
                    used[j] = true;
                    rec(c, row + 1, used, acc + c.get(row, j), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(c, 0, &mut vec![false; c.size()], 0.0, &mut best);
        best
    }

    #[test]
    fn hungarian_examples() {
        let m = hungarian(&rows(&[&[1.0, 2.0], &[2.0, 1.0]]));
        assert_eq!(m.col_of_row, vec![0, 1]);
        assert_eq!(m.total, 2.0);

        let m = hungarian(&rows(&[&[0.0, 0.0], &[0.0, 0.0]]));
        assert_eq!(m.col_of_row, vec![0, 1]);
        assert_eq!(m.total, 0.0);

        let m = hungarian(&rows(&[&[4.0, 1.0, 3.0], &[2.0, 0.0, 5.0], &[3.0, 2.0, 2.0]]));
        assert_eq!(m.col_of_row, vec![1, 0, 2]);
        assert_eq!(m.total, 5.0);
    }

    #[test]
    fn hungarian_rejects_bad_input() {
        assert!(matches!(
            CostMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]),
            Err(Error::NotSquare { .. })
        ));
        assert!(matches!(
            CostMatrix::from_rows(&[vec![1.0, f64::NAN], vec![1.0, 0.0]]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn hungarian_matches_brute_force_up_to_seven() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=7 {
            for _ in 0..20 {
                let r: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| rng.random_range(0..20) as f64).collect())
                    .collect();
                let c = CostMatrix::from_rows(&r).unwrap();
                let m = hungarian(&c);
                let mut seen = m.col_of_row.clone();
                seen.sort();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                assert_eq!(m.total, brute_force_min(&c));
            }
        }
    }

    #[test]
    fn slot_layout_examples() {
        let l = make_slot_layout(36, 3).unwrap();
        assert_eq!(l.cluster_sizes(3), vec![12, 12, 12]);
        let l = make_slot_layout(4, 4).unwrap();
        assert_eq!(l.cluster_sizes(4), vec![1, 1, 1, 1]);
        let l = make_slot_layout(7, 3).unwrap();
        assert_eq!(l.cluster_sizes(3), vec![3, 2, 2]);
        assert_eq!(l.slot_owner, vec![0, 0, 0, 1, 1, 2, 2]);
        assert!(make_slot_layout(2, 3).is_err());
        assert!(make_slot_layout(2, 0).is_err());
    }

    #[test]
    fn centroid_examples() {
        let a = Association::new(vec![0], 1).unwrap();
        assert_eq!(centroid_update(&[[3.0, 4.0]], &a).unwrap(), vec![[3.0, 4.0]]);
        let a = Association::new(vec![0, 0], 1).unwrap();
        assert_eq!(centroid_update(&[[0.0, 0.0], [2.0, 2.0]], &a).unwrap(), vec![[1.0, 1.0]]);
        let a = Association::new(vec![0, 0, 0], 1).unwrap();
        assert_eq!(
            centroid_update(&[[0.0, 0.0], [0.0, 4.0], [6.0, 2.0]], &a).unwrap(),
            vec![[2.0, 2.0]]
        );
        let a = Association::new(vec![0, 0], 2).unwrap();
        assert!(matches!(
            centroid_update(&[[0.0, 0.0], [1.0, 1.0]], &a),
            Err(Error::EmptyCluster(1))
        ));
    }

    #[test]
    fn bkmc_fixed_point() {
        let gus = [[1.0, 1.0], [50.0, 2.0], [10.0, 80.0], [90.0, 90.0]];
        let r = bkmc(&gus, &gus, 100).unwrap();
        assert_eq!(r.association.assign(), &[0, 1, 2, 3]);
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.centroids, gus.to_vec());
    }

    #[test]
    fn bkmc_square_corners() {
        let gus = [[0.0, 0.0], [0.0, 10.0], [100.0, 0.0], [100.0, 10.0]];
        let init = [[0.0, 5.0], [100.0, 5.0]];
        let r = bkmc(&gus, &init, 100).unwrap();
        assert_eq!(r.association.assign(), &[0, 0, 1, 1]);
        assert_eq!(r.centroids, init.to_vec());
        assert!(r.converged);

        // Brute force over the three balanced 2+2 partitions.
        let parts = [[0, 0, 1, 1], [0, 1, 0, 1], [0, 1, 1, 0]];
        let sse = |p: &[usize; 4]| {
            let a = Association::new(p.to_vec(), 2).unwrap();
            let c = centroid_update(&gus, &a).unwrap();
            gus.iter().zip(p).map(|(o, &k)| sq_dist(*o, c[k])).sum::<f64>()
        };
        let best = parts.iter().min_by(|a, b| sse(a).total_cmp(&sse(b))).unwrap();
        assert_eq!(best, &[0, 0, 1, 1]);
    }

    #[test]
    fn bkmc_balanced_and_monotone_on_random_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let m = rng.random_range(3..40);
            let k = rng.random_range(1..=m.min(6));
            let gus: Vec<Point2> = (0..m)
                .map(|_| [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)])
                .collect();
            let init: Vec<Point2> = (0..k)
                .map(|_| [rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)])
                .collect();
            let r = bkmc(&gus, &init, 100).unwrap();
            assert!(r.association.is_balanced(), "trial {trial}");
            for w in r.cost_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "trial {trial}: {:?}", r.cost_trace);
            }
            let again = bkmc(&gus, &init, 100).unwrap();
            assert_eq!(r, again);
        }
    }

    #[test]
    fn bkmc_reports_non_convergence() {
        let gus = [[0.0, 0.0], [0.0, 10.0], [100.0, 0.0], [100.0, 10.0], [50.0, 50.0], [20.0, 70.0]];
        let r = bkmc(&gus, &[[0.0, 0.0], [1.0, 0.0]], 1).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.association.is_balanced());
    }
}
