//! Exact dynamic programming for binary quadratic programs
//! `max_u uᵀAu + uᵀb + c` over `u ∈ {0,1}^p` with a banded symmetric `A`.
//!
//! Variables are visited in order. The nodes kept after visiting variable `d`
//! are keyed by the on/off state of `d` and of its extended neighbours `M_d`,
//! the only earlier variables that still interact with `d` or anything after
//! it. Before growing the children of `d + 1` the nodes are collapsed onto
//! their state over `M_{d+1}`, keeping the best prefix for each state. Each
//! level therefore holds at most `2^{|M_d| + 1}` nodes and the whole solve
//! costs `O(Σ_d 2^{|M_d|})`.
//!
//! Ties between prefixes of equal value go to the lexicographically smaller
//! prefix (`u_1 = 0` before `u_1 = 1`), which makes the returned argmax the
//! lexicographically smallest optimal `u`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::graph::NeighborhoodPlan;
use crate::linalg::BandMatrix;

/// Widest extended neighbourhood the solver accepts (`2^(w+1)` nodes per level).
pub const MAX_EXTENDED_WIDTH: usize = 24;
/// Largest dimension accepted by [`brute_force_bqp`].
pub const MAX_BRUTE_FORCE_DIM: usize = 25;

/// `uᵀAu + uᵀb + c` with symmetric banded `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct BqpInstance {
    pub a: BandMatrix,
    pub b: Vec<f64>,
    pub c: f64,
}

impl BqpInstance {
    pub fn new(a: BandMatrix, b: Vec<f64>, c: f64) -> Result<Self> {
        if a.dim() != b.len() {
            return Err(Error::invalid(format!(
                "A is {0}x{0} but b has length {1}",
                a.dim(),
                b.len()
            )));
        }
        Ok(Self { a, b, c })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Objective at `u`.
    pub fn objective(&self, u: &[bool]) -> f64 {
        let r = self.a.bandwidth();
        let mut total = self.c;
        for d in 0..self.dim() {
            if !u[d] {
                continue;
            }
            total += self.b[d] + self.a.get(d, d);
            for i in d.saturating_sub(r)..d {
                if u[i] {
                    total += 2.0 * self.a.get(d, i);
                }
            }
        }
        total
    }
}

/// Maximiser and maximum of a BQP.
#[derive(Debug, Clone, PartialEq)]
pub struct BqpSolution {
    pub value: f64,
    pub u: Vec<bool>,
    /// The minimum number of ones over all surviving prefixes exceeded `k*`
    /// before the last variable. `value`/`u` then describe the best surviving
    /// prefix extended by zeros: feasible, hence a lower bound, but not
    /// necessarily optimal.
    pub early_stopped: bool,
    /// Number of child nodes grown.
    pub node_count: usize,
}

impl BqpSolution {
    pub fn support(&self) -> Vec<usize> {
        self.u
            .iter()
            .enumerate()
            .filter_map(|(i, &on)| on.then_some(i))
            .collect()
    }

    pub fn ones(&self) -> usize {
        self.u.iter().filter(|&&b| b).count()
    }
}

/// Reusable buffers for repeated solves.
#[derive(Debug, Default, Clone)]
pub struct BandedSolver {
    parents: Vec<u32>,
    offsets: Vec<usize>,
    widths: Vec<usize>,
    values: Vec<f64>,
    ones: Vec<u32>,
    next_values: Vec<f64>,
    next_ones: Vec<u32>,
    positions: Vec<usize>,
    weights: Vec<f64>,
}

const ROOT: u32 = u32::MAX;

impl BandedSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `instance` along `plan`, stopping early once every surviving
    /// prefix has more than `k_star` ones.
    pub fn solve(
        &mut self,
        instance: &BqpInstance,
        plan: &NeighborhoodPlan,
        k_star: f64,
    ) -> Result<BqpSolution> {
        let p = instance.dim();
        check_plan(instance, plan)?;
        self.parents.clear();
        self.offsets.clear();
        self.widths.clear();
        if p == 0 || (0.0 > k_star) {
            return Ok(BqpSolution {
                value: instance.c,
                u: vec![false; p],
                early_stopped: p > 0,
                node_count: 0,
            });
        }

        let mut node_count = 0;
        // Level 0: M_0 is empty, the key is u_0 alone.
        self.values.clear();
        self.ones.clear();
        self.values.push(instance.c);
        self.values.push(instance.c + instance.b[0] + instance.a.get(0, 0));
        self.ones.extend_from_slice(&[0, 1]);
        self.offsets.push(0);
        self.widths.push(0);
        self.parents.push(ROOT);
        node_count += 2;

        let mut last = 0;
        let mut early_stopped = false;
        for d in 1..p {
            let k_lower = self.ones.iter().copied().min().unwrap_or(0);
            if f64::from(k_lower) > k_star {
                early_stopped = true;
                break;
            }
            let m_prev = self.widths[d - 1];
            let ext = plan.extended(d);
            let m = ext.len();
            let prev_ext = plan.extended(d - 1);
            self.positions.clear();
            for &v in ext {
                let pos = if v == d - 1 {
                    m_prev
                } else {
                    prev_ext.binary_search(&v).map_err(|_| {
                        Error::invalid(format!(
                            "plan is inconsistent: variable {v} in M_{d} but not carried from level {}",
                            d - 1
                        ))
                    })?
                };
                self.positions.push(pos);
            }

            // Parent selection: best previous node for every state over M_d.
            let offset = self.parents.len();
            self.parents.resize(offset + (1 << m), ROOT);
            for pk in 0..self.values.len() {
                let mut key = 0usize;
                for (j, &pos) in self.positions.iter().enumerate() {
                    key |= ((pk >> pos) & 1) << j;
                }
                let slot = offset + key;
                let current = self.parents[slot];
                let better = if current == ROOT {
                    true
                } else {
                    let cur = current as usize;
                    match self.values[pk].partial_cmp(&self.values[cur]) {
                        Some(Ordering::Greater) => true,
                        Some(Ordering::Equal) => {
                            self.compare_prefixes(d - 1, pk, cur) == Ordering::Less
                        }
                        _ => false,
                    }
                };
                if better {
                    self.parents[slot] = pk as u32;
                }
            }
            self.offsets.push(offset);
            self.widths.push(m);

            // Interaction weight 2 u_Mᵀ A_{d, M_d} for every state.
            self.weights.clear();
            self.weights.resize(1 << m, 0.0);
            for key in 1..(1usize << m) {
                let low = key.trailing_zeros() as usize;
                self.weights[key] = self.weights[key & (key - 1)] + 2.0 * instance.a.get(d, ext[low]);
            }

            // Grow children: key bit m is u_d.
            let diag = instance.b[d] + instance.a.get(d, d);
            self.next_values.clear();
            self.next_ones.clear();
            self.next_values.resize(2 << m, 0.0);
            self.next_ones.resize(2 << m, 0);
            for key in 0..(1usize << m) {
                let parent = self.parents[offset + key] as usize;
                let base = self.values[parent];
                let base_ones = self.ones[parent];
                self.next_values[key] = base;
                self.next_ones[key] = base_ones;
                self.next_values[key | (1 << m)] = base + diag + self.weights[key];
                self.next_ones[key | (1 << m)] = base_ones + 1;
            }
            node_count += 2 << m;
            core::mem::swap(&mut self.values, &mut self.next_values);
            core::mem::swap(&mut self.ones, &mut self.next_ones);
            last = d;
        }

        let mut best = 0;
        for k in 1..self.values.len() {
            match self.values[k].partial_cmp(&self.values[best]) {
                Some(Ordering::Greater) => best = k,
                Some(Ordering::Equal) => {
                    if self.compare_prefixes(last, k, best) == Ordering::Less {
                        best = k;
                    }
                }
                _ => {}
            }
        }
        let value = self.values[best];
        if !value.is_finite() {
            return Err(Error::numeric("non-finite BQP objective"));
        }
        let mut u = vec![false; p];
        self.reconstruct(last, best, &mut u);
        Ok(BqpSolution {
            value,
            u,
            early_stopped,
            node_count,
        })
    }

    /// Writes the prefix `u_0..=u_level` of node `key` at `level` into `u`.
    fn reconstruct(&self, level: usize, key: usize, u: &mut [bool]) {
        let mut key = key;
        let mut lvl = level;
        loop {
            let m = self.widths[lvl];
            u[lvl] = (key >> m) & 1 == 1;
            let parent = self.parents[self.offsets[lvl] + (key & ((1 << m) - 1))];
            if lvl == 0 || parent == ROOT {
                break;
            }
            key = parent as usize;
            lvl -= 1;
        }
    }

    fn compare_prefixes(&self, level: usize, a: usize, b: usize) -> Ordering {
        let mut ua = vec![false; level + 1];
        let mut ub = vec![false; level + 1];
        self.reconstruct(level, a, &mut ua);
        self.reconstruct(level, b, &mut ub);
        ua.cmp(&ub)
    }
}

fn check_plan(instance: &BqpInstance, plan: &NeighborhoodPlan) -> Result<()> {
    let p = instance.dim();
    if plan.p() != p {
        return Err(Error::invalid(format!(
            "plan covers {} variables but the instance has {p}",
            plan.p()
        )));
    }
    if plan.max_width() > MAX_EXTENDED_WIDTH {
        return Err(Error::invalid(format!(
            "extended neighbourhood width {} exceeds the supported {MAX_EXTENDED_WIDTH}",
            plan.max_width()
        )));
    }
    let r = instance.a.bandwidth();
    for d in 0..p {
        let ext = plan.extended(d);
        for i in d.saturating_sub(r)..d {
            if instance.a.get(d, i) != 0.0 && ext.binary_search(&i).is_err() {
                return Err(Error::invalid(format!(
                    "A[{d}][{i}] is non-zero but {i} is not an extended neighbour of {d}"
                )));
            }
        }
    }
    Ok(())
}

/// Solves a banded BQP exactly; see [`BandedSolver::solve`].
pub fn solve_banded_bqp(
    instance: &BqpInstance,
    plan: &NeighborhoodPlan,
    k_star: f64,
) -> Result<BqpSolution> {
    BandedSolver::new().solve(instance, plan, k_star)
}

/// Exhaustive search over all `2^p` vectors, lexicographically smallest
/// maximiser on ties.
pub fn brute_force_bqp(instance: &BqpInstance) -> Result<BqpSolution> {
    let p = instance.dim();
    if p > MAX_BRUTE_FORCE_DIM {
        return Err(Error::invalid(format!(
            "brute force refused for p = {p} > {MAX_BRUTE_FORCE_DIM}"
        )));
    }
    let mut u = vec![false; p];
    let mut best_value = f64::NEG_INFINITY;
    let mut best_u = vec![false; p];
    // Counting with u_0 as the most significant bit visits u in lexicographic order.
    for mask in 0u64..(1u64 << p) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = (mask >> (p - 1 - i)) & 1 == 1;
        }
        let v = instance.objective(&u);
        if v > best_value {
            best_value = v;
            best_u.copy_from_slice(&u);
        }
    }
    Ok(BqpSolution {
        value: best_value,
        u: best_u,
        early_stopped: false,
        node_count: 1 << p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{banded_adjacency, build_plan, Adjacency};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(rng: &mut ChaCha8Rng, p: usize, r: usize) -> BqpInstance {
        let mut a = BandMatrix::zeros(p, r);
        for i in 0..p {
            for j in i.saturating_sub(r)..=i {
                a.set(i, j, rng.random_range(-3.0..3.0)).unwrap();
            }
        }
        let b = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        BqpInstance::new(a, b, rng.random_range(-3.0..3.0)).unwrap()
    }

    fn plan_for(p: usize, r: usize) -> NeighborhoodPlan {
        build_plan(&banded_adjacency(p, r.min(p - 1)).unwrap()).unwrap()
    }

    #[test]
    fn no_positive_contribution() {
        let inst = BqpInstance::new(BandMatrix::zeros(4, 1), vec![-1.0, -2.0, -0.5, -3.0], -2.5).unwrap();
        let sol = solve_banded_bqp(&inst, &plan_for(4, 1), f64::INFINITY).unwrap();
        assert_eq!(sol.value, -2.5);
        assert!(sol.u.iter().all(|&b| !b));
    }

    #[test]
    fn two_variable_enumeration() {
        let mut a = BandMatrix::zeros(2, 1);
        a.set(0, 0, -1.0).unwrap();
        a.set(1, 1, -1.0).unwrap();
        a.set(1, 0, 2.0).unwrap();
        let inst = BqpInstance::new(a, vec![0.5, 0.5], 0.0).unwrap();
        // 00 -> 0, 10 -> -0.5, 01 -> -0.5, 11 -> -1 - 1 + 4 + 1 = 3
        assert_eq!(inst.objective(&[false, false]), 0.0);
        assert_eq!(inst.objective(&[true, false]), -0.5);
        assert_eq!(inst.objective(&[false, true]), -0.5);
        assert_eq!(inst.objective(&[true, true]), 3.0);
        let sol = solve_banded_bqp(&inst, &plan_for(2, 1), f64::INFINITY).unwrap();
        assert_eq!(sol.value, 3.0);
        assert_eq!(sol.u, vec![true, true]);
    }

    #[test]
    fn brute_force_single_variable() {
        let mut a = BandMatrix::zeros(1, 0);
        a.set(0, 0, -2.0).unwrap();
        for (b, expect) in [(1.0, -1.0), (3.0, 0.0)] {
            let inst = BqpInstance::new(a.clone(), vec![b], -1.0).unwrap();
            let sol = brute_force_bqp(&inst).unwrap();
            assert_eq!(sol.value, f64::max(-1.0, -1.0 + b - 2.0));
            assert_eq!(sol.value, expect);
        }
    }

    #[test]
    fn brute_force_refuses_large() {
        let inst = BqpInstance::new(BandMatrix::zeros(26, 0), vec![0.0; 26], 0.0).unwrap();
        assert!(brute_force_bqp(&inst).is_err());
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        // all-zero objective: every u ties, the answer must be u = 0
        let inst = BqpInstance::new(BandMatrix::zeros(5, 2), vec![0.0; 5], 1.0).unwrap();
        let sol = solve_banded_bqp(&inst, &plan_for(5, 2), f64::INFINITY).unwrap();
        assert_eq!(sol.u, vec![false; 5]);
        // u_0 and u_4 each worth 1, but together penalised: 10000 vs 00001 tie
        let mut a = BandMatrix::zeros(5, 4);
        a.set(4, 0, -1.0).unwrap();
        let inst = BqpInstance::new(a, vec![1.0, 0.0, 0.0, 0.0, 1.0], 0.0).unwrap();
        let dp = solve_banded_bqp(&inst, &plan_for(5, 4), f64::INFINITY).unwrap();
        let bf = brute_force_bqp(&inst).unwrap();
        assert_eq!(dp.u, bf.u);
        assert_eq!(dp.u, vec![false, false, false, false, true]);
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let p = rng.random_range(1..=12);
            let r = rng.random_range(1..=4).min(p - 1);
            let inst = random_banded(&mut rng, p, r);
            let plan = plan_for(p, r);
            let dp = solve_banded_bqp(&inst, &plan, f64::INFINITY).unwrap();
            let bf = brute_force_bqp(&inst).unwrap();
            assert!((dp.value - bf.value).abs() <= 1e-9, "{} vs {}", dp.value, bf.value);
            assert_eq!(dp.u, bf.u);
            assert!(!dp.early_stopped);
        }
    }

    #[test]
    fn node_counts_follow_extended_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in 1..=4 {
            let p = 20;
            let inst = random_banded(&mut rng, p, r);
            let plan = plan_for(p, r);
            let sol = solve_banded_bqp(&inst, &plan, f64::INFINITY).unwrap();
            let bound: usize = (0..p).map(|d| 2usize << plan.extended(d).len()).sum();
            assert_eq!(sol.node_count, bound);
            assert!(sol.node_count <= p * (2 << r));
        }
    }

    #[test]
    fn one_banded_has_four_children_per_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = 9;
        let inst = random_banded(&mut rng, p, 1);
        let plan = plan_for(p, 1);
        let sol = solve_banded_bqp(&inst, &plan, f64::INFINITY).unwrap();
        assert_eq!(sol.node_count, 2 + 4 * (p - 1));
        // the two-state recursion written out directly
        let mut s0 = inst.c;
        let mut s1 = inst.c + inst.b[0] + inst.a.get(0, 0);
        for d in 1..p {
            let grow = inst.b[d] + inst.a.get(d, d);
            let c00 = s0;
            let c01 = s1;
            let c10 = s0 + grow;
            let c11 = s1 + grow + 2.0 * inst.a.get(d, d - 1);
            s0 = c00.max(c01);
            s1 = c10.max(c11);
        }
        assert!((s0.max(s1) - sol.value).abs() < 1e-12);
    }

    #[test]
    fn sparse_pattern_plan_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = rng.random_range(2..=10);
            let mut adj = Adjacency::empty(p);
            for i in 0..p {
                for j in i.saturating_sub(3)..i {
                    if rng.random_bool(0.5) {
                        adj.connect(i, j);
                    }
                }
            }
            let r = adj.bandwidth();
            let mut a = BandMatrix::zeros(p, r);
            for i in 0..p {
                a.set(i, i, rng.random_range(-3.0..3.0)).unwrap();
                for j in i.saturating_sub(r)..i {
                    if adj.get(i, j) {
                        a.set(i, j, rng.random_range(-3.0..3.0)).unwrap();
                    }
                }
            }
            let b = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let inst = BqpInstance::new(a, b, 0.0).unwrap();
            let plan = build_plan(&adj).unwrap();
            let dp = solve_banded_bqp(&inst, &plan, f64::INFINITY).unwrap();
            let bf = brute_force_bqp(&inst).unwrap();
            assert!((dp.value - bf.value).abs() <= 1e-9);
            assert_eq!(dp.u, bf.u);
        }
    }

    #[test]
    fn early_stop_only_when_optimum_is_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut stops = 0;
        for _ in 0..400 {
            let p = rng.random_range(3..=10);
            let r = rng.random_range(1..=3).min(p - 1);
            let mut inst = random_banded(&mut rng, p, r);
            // bias towards switching variables on
            for v in inst.b.iter_mut() {
                *v += 4.0;
            }
            let plan = plan_for(p, r);
            let k_star = rng.random_range(0.5..(p as f64));
            let stopped = solve_banded_bqp(&inst, &plan, k_star).unwrap();
            let full = solve_banded_bqp(&inst, &plan, f64::INFINITY).unwrap();
            if stopped.early_stopped {
                stops += 1;
                assert!(full.ones() as f64 > k_star);
                assert!(stopped.value <= full.value + 1e-12);
                assert!((inst.objective(&stopped.u) - stopped.value).abs() < 1e-9);
            } else {
                assert_eq!(stopped.u, full.u);
            }
        }
        assert!(stops > 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let inst = BqpInstance::new(BandMatrix::zeros(3, 1), vec![0.0; 3], 0.0).unwrap();
        assert!(solve_banded_bqp(&inst, &plan_for(4, 1), f64::INFINITY).is_err());
        assert!(BqpInstance::new(BandMatrix::zeros(3, 1), vec![0.0; 2], 0.0).is_err());
        // a plan that misses a non-zero interaction
        let mut a = BandMatrix::zeros(3, 1);
        a.set(1, 0, 1.0).unwrap();
        let inst = BqpInstance::new(a, vec![0.0; 3], 0.0).unwrap();
        let plan = build_plan(&Adjacency::empty(3)).unwrap();
        assert!(solve_banded_bqp(&inst, &plan, f64::INFINITY).is_err());
    }
}
