//! Rectangular minimum-cost assignment (Hungarian method with potentials).
//!
//! The solver is generic over the cost type so that lexicographic costs can
//! encode gating and deterministic tie-breaking without magic constants.

use std::cmp::Ordering;
use std::ops::{Add, Sub};

pub trait AssignCost: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> {
    fn zero() -> Self;
    fn infinity() -> Self;
}

impl AssignCost for f64 {
    fn zero() -> Self {
        0.0
    }
    fn infinity() -> Self {
        f64::INFINITY
    }
}

/// Lexicographically ordered cost vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lex<const N: usize>(pub [f64; N]);

impl<const N: usize> Add for Lex<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Lex(std::array::from_fn(|i| self.0[i] + rhs.0[i]))
    }
}

impl<const N: usize> Sub for Lex<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Lex(std::array::from_fn(|i| self.0[i] - rhs.0[i]))
    }
}

impl<const N: usize> PartialOrd for Lex<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        for i in 0..N {
            match self.0[i].partial_cmp(&other.0[i])? {
                Ordering::Equal => continue,
                ord => return Some(ord),
            }
        }
        Some(Ordering::Equal)
    }
}

impl<const N: usize> AssignCost for Lex<N> {
    fn zero() -> Self {
        Lex([0.0; N])
    }
    fn infinity() -> Self {
        Lex([f64::INFINITY; N])
    }
}

/// Solves `min Σ cost[i][σ(i)]` over injective assignments of the smaller side.
///
/// Returns, for every row, the column it is assigned to. When there are more
/// rows than columns some rows stay unassigned.
pub fn hungarian<T: AssignCost>(cost: &[Vec<T>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    debug_assert!(cost.iter().all(|r| r.len() == cols));
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows > cols {
        let transposed: Vec<Vec<T>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let by_col = hungarian(&transposed);
        let mut out = vec![None; rows];
        for (j, i) in by_col.into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return out;
    }

    // 1-based potentials; column 0 is a virtual source.
    let (n, m) = (rows, cols);
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![T::infinity(); m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = T::infinity();
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != 0, "cost matrix contains NaN");
            if j1 == 0 {
                break;
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Assignment over a partially admissible matrix: `None` entries may never be
/// matched. Maximises the number of admissible matches first, then minimises
/// their total cost. Returns `(row, col)` pairs sorted by row.
pub fn solve_gated(cost: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let lex: Vec<Vec<Lex<2>>> = cost
        .iter()
        .map(|row| row.iter().map(|c| c.map_or(Lex([1.0, 0.0]), |c| Lex([0.0, c]))).collect())
        .collect();
    hungarian(&lex)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| j.filter(|&j| cost[i][j].is_some()).map(|j| (i, j)))
        .collect()
}
