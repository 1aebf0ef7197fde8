//! Adjacency patterns and the extended-neighbourhood plan that drives the
//! banded BQP solver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Boolean `p × p` pattern. The diagonal is ignored by every consumer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    p: usize,
    data: Vec<bool>,
}

impl Adjacency {
    pub fn empty(p: usize) -> Self {
        Self {
            p,
            data: vec![false; p * p],
        }
    }

    /// Off-diagonal entries whose magnitude exceeds `tol`.
    pub fn from_pattern(m: &Matrix, tol: f64) -> Self {
        let p = m.rows();
        let mut a = Self::empty(p);
        for i in 0..p {
            for j in 0..p {
                if i != j && libm::fabs(m[(i, j)]) > tol {
                    a.data[i * p + j] = true;
                }
            }
        }
        a
    }

    /// From a row-major boolean grid; the diagonal is cleared.
    pub fn from_grid(p: usize, grid: Vec<bool>) -> Result<Self> {
        if grid.len() != p * p {
            return Err(Error::invalid("adjacency grid has the wrong size"));
        }
        let mut a = Self { p, data: grid };
        for i in 0..p {
            a.data[i * p + i] = false;
        }
        Ok(a)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        i != j && self.data[i * self.p + j]
    }

    /// Sets the edge `{i, j}` in both directions.
    pub fn connect(&mut self, i: usize, j: usize) {
        if i != j {
            self.data[i * self.p + j] = true;
            self.data[j * self.p + i] = true;
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.p).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Smallest `r` with no edge between variables more than `r` apart.
    pub fn bandwidth(&self) -> usize {
        let mut r = 0;
        for i in 0..self.p {
            for j in 0..i {
                if self.get(i, j) || self.get(j, i) {
                    r = r.max(i - j);
                }
            }
        }
        r
    }

    /// Sorted neighbours of `d` (excluding `d`).
    pub fn neighbors(&self, d: usize) -> Vec<usize> {
        (0..self.p).filter(|&i| self.get(d, i)).collect()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.p).map(|i| (0..i).filter(|&j| self.get(i, j)).count()).sum()
    }
}

/// `w_ij = 1` iff `0 < |i - j| ≤ r`.
pub fn banded_adjacency(p: usize, r: usize) -> Result<Adjacency> {
    if p == 0 {
        return Err(Error::invalid("p must be positive"));
    }
    if r > p - 1 {
        return Err(Error::invalid(format!("bandwidth {r} exceeds p - 1 = {}", p - 1)));
    }
    let mut a = Adjacency::empty(p);
    for i in 0..p {
        for j in i.saturating_sub(r)..i {
            a.connect(i, j);
        }
    }
    Ok(a)
}

/// Four-neighbour square lattice on `m × m` nodes, node `(u, v)` (1-based)
/// being variable `(u - 1) m + v`.
pub fn lattice_adjacency(m: usize) -> Result<Adjacency> {
    if m == 0 {
        return Err(Error::invalid("lattice side must be positive"));
    }
    let mut a = Adjacency::empty(m * m);
    for u in 0..m {
        for v in 0..m {
            let i = u * m + v;
            if v + 1 < m {
                a.connect(i, i + 1);
            }
            if u + 1 < m {
                a.connect(i, i + m);
            }
        }
    }
    Ok(a)
}

/// Neighbour sets, potential lower neighbours and extended neighbours of
/// every variable (all 0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodPlan {
    p: usize,
    bandwidth: usize,
    neighbors: Vec<Vec<usize>>,
    extended: Vec<Vec<usize>>,
    max_width: usize,
}

impl NeighborhoodPlan {
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// `N_d`.
    pub fn neighbors(&self, d: usize) -> &[usize] {
        &self.neighbors[d]
    }

    /// `P_d`: the `r` variables just below `d`.
    pub fn lower(&self, d: usize) -> core::ops::Range<usize> {
        d.saturating_sub(self.bandwidth)..d
    }

    /// `M_d`, sorted ascending.
    #[inline]
    pub fn extended(&self, d: usize) -> &[usize] {
        &self.extended[d]
    }

    /// `max_d |M_d|`.
    pub fn max_width(&self) -> usize {
        self.max_width
    }

    /// Plan with every variable isolated.
    pub fn independent(p: usize) -> Self {
        Self {
            p,
            bandwidth: 0,
            neighbors: vec![Vec::new(); p],
            extended: vec![Vec::new(); p],
            max_width: 0,
        }
    }
}

/// Computes `M_d = P_d ∩ (N_d ∪ ... ∪ N_{min(p, d + r)})` for every `d`.
pub fn build_plan(pattern: &Adjacency) -> Result<NeighborhoodPlan> {
    if !pattern.is_symmetric() {
        return Err(Error::invalid("adjacency pattern must be symmetric"));
    }
    let p = pattern.p();
    let r = pattern.bandwidth();
    let neighbors: Vec<Vec<usize>> = (0..p).map(|d| pattern.neighbors(d)).collect();
    let mut extended = Vec::with_capacity(p);
    for d in 0..p {
        let upper = (d + r).min(p - 1);
        let m_d: Vec<usize> = (d.saturating_sub(r)..d)
            .filter(|&i| (d..=upper).any(|k| pattern.get(k, i)))
            .collect();
        extended.push(m_d);
    }
    let max_width = extended.iter().map(Vec::len).max().unwrap_or(0);
    Ok(NeighborhoodPlan {
        p,
        bandwidth: r,
        neighbors,
        extended,
        max_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn one_based(plan: &NeighborhoodPlan) -> Vec<Vec<usize>> {
        (0..plan.p())
            .map(|d| plan.extended(d).iter().map(|i| i + 1).collect())
            .collect()
    }

    #[test]
    fn banded_examples() {
        let a = banded_adjacency(3, 1).unwrap();
        assert!(a.get(0, 1) && a.get(1, 2) && a.get(1, 0));
        assert!(!a.get(0, 2) && !a.get(2, 0));
        assert_eq!(banded_adjacency(4, 0).unwrap().edge_count(), 0);
        let full = banded_adjacency(5, 4).unwrap();
        assert_eq!(full.edge_count(), 10);
        assert!(banded_adjacency(4, 4).is_err());
    }

    #[test]
    fn lattice_examples() {
        assert_eq!(lattice_adjacency(1).unwrap().edge_count(), 0);
        let l2 = lattice_adjacency(2).unwrap();
        // node 1 touches 2 and 3 but not 4
        assert!(l2.get(0, 1) && l2.get(0, 2) && !l2.get(0, 3));
        let l3 = lattice_adjacency(3).unwrap();
        assert_eq!(l3.neighbors(4), vec![1, 3, 5, 7]);
        assert!(lattice_adjacency(0).is_err());
    }

    #[test]
    fn lattice_matches_coordinate_enumeration() {
        for m in 1..6 {
            let a = lattice_adjacency(m).unwrap();
            for i in 0..m * m {
                for j in 0..m * m {
                    let (ui, vi) = (i / m, i % m);
                    let (uj, vj) = (j / m, j % m);
                    let expect = (ui == uj && vi.abs_diff(vj) == 1) || (vi == vj && ui.abs_diff(uj) == 1);
                    assert_eq!(a.get(i, j), expect);
                }
            }
        }
    }

    #[test]
    fn full_band_plan_is_lower_window() {
        for (p, r) in [(6, 1), (8, 2), (9, 4), (5, 4)] {
            let plan = build_plan(&banded_adjacency(p, r).unwrap()).unwrap();
            for d in 0..p {
                let expect: Vec<usize> = (d.saturating_sub(r)..d).collect();
                assert_eq!(plan.extended(d), expect.as_slice());
            }
            assert_eq!(plan.max_width(), r.min(p - 1));
        }
    }

    // The caption of the 4-banded 8-variable example lists every M_d but not
    // the full pattern. The edge set below was reconstructed from those sets:
    // M_8 = {7} forces 8 ~ 7 only; M_7 = {4,5,6} forces 4,5,6 ~ 7 and 3 !~ 7;
    // M_6 = {2,4,5} forces 2 ~ 6 and 3 !~ 6; M_5 = {2,4} forces 1,3 !~ 5;
    // M_4 = {2,3} forces 3 ~ 4 and 1 !~ 4; M_3 = {2} forces 1 !~ 3; M_2 = {1}
    // forces 1 ~ 2. Edges 2-3, 4-5 and 5-6 are unconstrained and included.
    fn irregular_pattern() -> Adjacency {
        let mut a = Adjacency::empty(8);
        for (i, j) in [(1, 2), (2, 3), (2, 6), (3, 4), (4, 5), (4, 7), (5, 6), (5, 7), (6, 7), (7, 8)] {
            a.connect(i - 1, j - 1);
        }
        a
    }

    #[test]
    fn irregular_extended_neighbourhoods() {
        let a = irregular_pattern();
        assert_eq!(a.bandwidth(), 4);
        let plan = build_plan(&a).unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![],
            vec![1],
            vec![2],
            vec![2, 3],
            vec![2, 4],
            vec![2, 4, 5],
            vec![4, 5, 6],
            vec![7],
        ];
        assert_eq!(one_based(&plan), expect);
    }

    #[test]
    fn diagonal_only_plan_is_empty() {
        let plan = build_plan(&Adjacency::empty(5)).unwrap();
        assert!((0..5).all(|d| plan.extended(d).is_empty()));
        assert_eq!(plan.max_width(), 0);
    }

    #[test]
    fn asymmetric_pattern_rejected() {
        let mut grid = vec![false; 9];
        grid[1] = true;
        let a = Adjacency::from_grid(3, grid).unwrap();
        assert!(build_plan(&a).is_err());
    }

    // Set-based oracle: P_d ∩ ⋃ N_i computed with explicit sets.
    fn oracle(a: &Adjacency) -> Vec<Vec<usize>> {
        let p = a.p();
        let r = a.bandwidth();
        (0..p)
            .map(|d| {
                let lower: BTreeSet<usize> = (d.saturating_sub(r)..d).collect();
                let mut union = BTreeSet::new();
                for i in d..=(d + r).min(p - 1) {
                    union.extend(a.neighbors(i));
                }
                lower.intersection(&union).copied().collect()
            })
            .collect()
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pattern() -> impl Strategy<Value = Adjacency> {
            (1usize..12).prop_flat_map(|p| {
                proptest::collection::vec(any::<bool>(), p * p).prop_map(move |bits| {
                    let mut a = Adjacency::empty(p);
                    for i in 0..p {
                        for j in 0..i {
                            if bits[i * p + j] {
                                a.connect(i, j);
                            }
                        }
                    }
                    a
                })
            })
        }

        proptest! {
            #[test]
            fn plan_matches_set_oracle(a in pattern()) {
                let plan = build_plan(&a).unwrap();
                let expect = oracle(&a);
                let r = a.bandwidth();
                for d in 0..a.p() {
                    prop_assert_eq!(plan.extended(d), expect[d].as_slice());
                    prop_assert!(plan.extended(d).len() <= r.min(d));
                    for &i in plan.extended(d) {
                        prop_assert!((d..=(d + r).min(a.p() - 1)).any(|k| a.get(k, i)));
                    }
                }
                prop_assert!(plan.max_width() <= r);
                prop_assert_eq!(build_plan(&a).unwrap(), plan);
            }
        }
    }
}
