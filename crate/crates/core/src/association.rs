//! Cost matrices over embeddings, minimum-cost bipartite matching and similarity gating.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssociationError {
    #[error("embedding {index} has norm {norm}, expected 1")]
    NonUnitNorm { index: usize, norm: f64 },
    #[error("cost ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },
    #[error("embedding widths differ")]
    WidthMismatch,
    #[error("ragged cost matrix")]
    Ragged,
}

const UNIT_NORM_TOL: f64 = 1e-6;

/// Dense row-major `rows × cols` matrix of association costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssociationError> {
        if data.len() != rows * cols {
            return Err(AssociationError::Ragged);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssociationError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AssociationError::Ragged);
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `lambda * a + (1 - lambda) * b`.
    pub fn blend(a: &CostMatrix, b: &CostMatrix, lambda: f64) -> Result<Self, AssociationError> {
        if a.rows != b.rows || a.cols != b.cols {
            return Err(AssociationError::Ragged);
        }
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        Ok(Self {
            rows: a.rows,
            cols: a.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub track: usize,
    pub det: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// Sorted by track index.
    pub matches: Vec<Match>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self) -> f64 {
        self.matches.iter().map(|m| m.cost).sum()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.matches.iter().map(|m| (m.track, m.det)).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Euclidean distances between unit-norm tracklet and detection embeddings.
pub fn build_cost_matrix(tracks: &[Vec<f64>], dets: &[Vec<f64>]) -> Result<CostMatrix, AssociationError> {
    let width = tracks.first().or(dets.first()).map_or(0, Vec::len);
    for (index, v) in tracks.iter().chain(dets).enumerate() {
        if v.len() != width {
            return Err(AssociationError::WidthMismatch);
        }
        let n = norm(v);
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(AssociationError::NonUnitNorm { index, norm: n });
        }
    }
    let mut data = Vec::with_capacity(tracks.len() * dets.len());
    for t in tracks {
        for d in dets {
            let sq: f64 = t.iter().zip(d).map(|(a, b)| (a - b) * (a - b)).sum();
            data.push(libm::sqrt(sq).min(2.0));
        }
    }
    CostMatrix::new(tracks.len(), dets.len(), data)
}

/// Minimum total cost matching of size `min(rows, cols)`.
pub fn hungarian(cost: &CostMatrix) -> Result<Assignment, AssociationError> {
    let (m, n) = (cost.rows, cost.cols);
    for r in 0..m {
        for c in 0..n {
            if !cost.get(r, c).is_finite() {
                return Err(AssociationError::NonFiniteCost { row: r, col: c });
            }
        }
    }
    if m == 0 || n == 0 {
        return Ok(Assignment {
            matches: Vec::new(),
            unmatched_tracks: (0..m).collect(),
            unmatched_dets: (0..n).collect(),
        });
    }
    let size = m.max(n);
    let max_abs = cost.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let sentinel = 2.0 * max_abs.max(1.0) * size as f64;
    let at = |r: usize, c: usize| if r < m && c < n { cost.get(r, c) } else { sentinel };

    let col_of_row = solve_square(size, at);

    let mut matches = Vec::new();
    let mut unmatched_tracks = Vec::new();
    let mut det_used = vec![false; n];
    for (r, &c) in col_of_row.iter().enumerate().take(m) {
        if c < n {
            det_used[c] = true;
            matches.push(Match {
                track: r,
                det: c,
                cost: cost.get(r, c),
            });
        } else {
            unmatched_tracks.push(r);
        }
    }
    let unmatched_dets = (0..n).filter(|&c| !det_used[c]).collect();
    Ok(Assignment {
        matches,
        unmatched_tracks,
        unmatched_dets,
    })
}

// Shortest augmenting path with potentials on a square matrix. Rows are added in
// index order and columns scanned left to right with strict improvement, so ties
// resolve toward the lowest indices.
fn solve_square(size: usize, at: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    let inf = f64::INFINITY;
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut row_of_col = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for i in 1..=size {
        row_of_col[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=size {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=size {
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
    let mut col_of_row = vec![0; size];
    for j in 1..=size {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    col_of_row
}

/// Cosine similarity of two unit vectors at Euclidean distance `d`.
pub fn distance_to_similarity(d: f64) -> f64 {
    1.0 - d * d / 2.0
}

/// Demotes matches whose similarity falls below `threshold`.
pub fn gate_assignment(a: &Assignment, threshold: f64) -> Assignment {
    let mut out = Assignment::default();
    let mut unmatched_tracks = a.unmatched_tracks.clone();
    let mut unmatched_dets = a.unmatched_dets.clone();
    for m in &a.matches {
        if distance_to_similarity(m.cost) < threshold {
            unmatched_tracks.push(m.track);
            unmatched_dets.push(m.det);
        } else {
            out.matches.push(*m);
        }
    }
    unmatched_tracks.sort_unstable();
    unmatched_dets.sort_unstable();
    out.unmatched_tracks = unmatched_tracks;
    out.unmatched_dets = unmatched_dets;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Exhaustive minimum over all injective maps from the smaller side.
    fn brute_force(cost: &CostMatrix) -> f64 {
        fn rec(cost: &CostMatrix, transpose: bool, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let (m, n) = if transpose {
                (cost.cols(), cost.rows())
            } else {
                (cost.rows(), cost.cols())
            };
            if row == m {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    let v = if transpose { cost.get(c, row) } else { cost.get(row, c) };
                    rec(cost, transpose, row + 1, used, acc + v, best);
                    used[c] = false;
                }
            }
        }
        let transpose = cost.rows() > cost.cols();
        let n = cost.rows().max(cost.cols());
        let mut best = f64::INFINITY;
        rec(cost, transpose, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    fn random_cost(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CostMatrix {
        let data = (0..m * n).map(|_| rng.random_range(0.0..2.0)).collect();
        CostMatrix::new(m, n, data).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let c = vec![-1.0, 0.0];
        let m = build_cost_matrix(&[a.clone()], &[a, b, c]).unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert!((m.get(0, 1) - libm::sqrt(2.0)).abs() < 1e-15);
        assert_eq!(m.get(0, 2), 2.0);
    }

    #[test]
    fn rejects_non_unit() {
        let err = build_cost_matrix(&[vec![2.0, 0.0]], &[vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, AssociationError::NonUnitNorm { index: 0, .. }));
    }

    #[test]
    fn two_by_two() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs(), [(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(), 2.0);
    }

    #[test]
    fn single_row_takes_argmin() {
        let c = CostMatrix::from_rows(&[vec![0.7, 0.2, 0.9, 0.4]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs(), [(0, 1)]);
        assert_eq!(a.unmatched_dets, [0, 2, 3]);
    }

    #[test]
    fn rectangular_tall() {
        let c = CostMatrix::from_rows(&[vec![0.5], vec![0.1], vec![0.3]]).unwrap();
        let a = hungarian(&c).unwrap();
        assert_eq!(a.pairs(), [(1, 0)]);
        assert_eq!(a.unmatched_tracks, [0, 2]);
    }

    #[test]
    fn empty_sides() {
        let c = CostMatrix::new(0, 3, vec![]).unwrap();
        let a = hungarian(&c).unwrap();
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_dets, [0, 1, 2]);
    }

    #[test]
    fn ties_prefer_low_indices() {
        let c = CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(hungarian(&c).unwrap().pairs(), [(0, 0), (1, 1)]);
    }

    #[test]
    fn non_finite_rejected() {
        let c = CostMatrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert_eq!(hungarian(&c), Err(AssociationError::NonFiniteCost { row: 0, col: 1 }));
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut mismatches = 0;
        for _ in 0..1000 {
            let m = rng.random_range(1..=7);
            let n = rng.random_range(1..=7);
            let c = random_cost(&mut rng, m, n);
            let a = hungarian(&c).unwrap();
            assert_eq!(a.matches.len(), m.min(n));
            if (a.total_cost() - brute_force(&c)).abs() > 1e-9 {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn gate_examples() {
        let d_for = |s: f64| libm::sqrt(2.0 - 2.0 * s);
        let a = Assignment {
            matches: vec![
                Match {
                    track: 0,
                    det: 1,
                    cost: d_for(0.3),
                },
                Match {
                    track: 1,
                    det: 0,
                    cost: d_for(0.05),
                },
            ],
            unmatched_tracks: vec![],
            unmatched_dets: vec![2],
        };
        let g = gate_assignment(&a, 0.1);
        assert_eq!(g.pairs(), [(0, 1)]);
        assert_eq!(g.unmatched_tracks, [1]);
        assert_eq!(g.unmatched_dets, [0, 2]);

        let exact = Assignment {
            matches: vec![
                Match {
                    track: 0,
                    det: 0,
                    cost: 0.0,
                },
                Match {
                    track: 1,
                    det: 1,
                    cost: 1e-3,
                },
            ],
            ..Default::default()
        };
        assert_eq!(gate_assignment(&exact, 1.0).pairs(), [(0, 0)]);
    }

    proptest! {
        #[test]
        fn gating_is_idempotent(costs in proptest::collection::vec(0.0f64..2.0, 1..8), th in 0.0f64..1.0) {
            let matches = costs.iter().enumerate().map(|(i, &c)| Match { track: i, det: i, cost: c }).collect();
            let a = Assignment { matches, ..Default::default() };
            let once = gate_assignment(&a, th);
            prop_assert_eq!(gate_assignment(&once, th), once);
        }

        #[test]
        fn scaling_preserves_matching(seed in 0u64..1000, k in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.random_range(1..=6);
            let n = rng.random_range(1..=6);
            let c = random_cost(&mut rng, m, n);
            let a = hungarian(&c).unwrap();
            let b = hungarian(&c.map(|v| v * k)).unwrap();
            // random continuous costs have a unique optimum almost surely
            prop_assert_eq!(a.pairs(), b.pairs());
        }

        #[test]
        fn cost_matches_cosine(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut unit = || {
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = norm(&v);
                v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
            };
            let (a, b) = (unit(), unit());
            let c = build_cost_matrix(&[a.clone()], &[b.clone()]).unwrap().get(0, 0);
            let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            prop_assert!((0.0..=2.0).contains(&c));
            prop_assert!((c - libm::sqrt((2.0 - 2.0 * cos).max(0.0))).abs() < 1e-9);
        }
    }
}
