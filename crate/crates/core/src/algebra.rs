//! Dynamic programming over a BDD under an abstract (⊕, ⊗, 𝟘, 𝟙, θ) algebra.
//!
//! `combine` (⊕) accumulates along a path and `merge` (⊗) joins alternative
//! paths. With (+, min, 0, ∞, λ) the messages give min-marginals, with a
//! log-domain version of (·, +, 1, 0, exp(-λ/α)) they give marginal
//! log-sum-exp values, and with (·, +, 1, 0, 1) they count solutions.
//!
//! Forward messages live on nodes and summarize root-to-node prefixes;
//! backward messages summarize node-to-⊤ suffixes. The terminals are fixed:
//! ←m(⊤) = 𝟘, ←m(⊥) = 𝟙, and →m(root) = 𝟘.

use std::fmt::Debug;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::bdd::{Bdd, NodeId, FALSE, TRUE};

pub trait Algebra {
    type Value: Clone + Debug + PartialEq;
    type Output;

    /// Neutral element of `combine`.
    fn zero(&self) -> Self::Value;
    /// Neutral element of `merge`.
    fn one(&self) -> Self::Value;
    /// ⊕: extend a path.
    fn combine(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    /// ⊗: join alternatives.
    fn merge(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    /// θ for a variable with multiplier `lambda`.
    fn arc_weight(&self, lambda: f64) -> Self::Value;
    /// Converts an internal value into the reported quantity.
    fn finish(&self, value: Self::Value) -> Self::Output;
}

/// (+, min, 0, ∞, λ).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MinSum;

impl Algebra for MinSum {
    type Value = f64;
    type Output = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        f64::INFINITY
    }
    #[inline]
    fn combine(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    #[inline]
    fn merge(&self, a: &f64, b: &f64) -> f64 {
        a.min(*b)
    }
    #[inline]
    fn arc_weight(&self, lambda: f64) -> f64 {
        lambda
    }
    fn finish(&self, value: f64) -> f64 {
        value
    }
}

/// Marginal log-sum-exp with smoothing `alpha`, stored as logarithms of the
/// exp-domain values: a value `v` stands for `exp(v)`, so ⊕ is `+`, ⊗ is a
/// stabilized `log(exp(a) + exp(b))`, 𝟘 is 0 and 𝟙 is -∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSumExp {
    pub alpha: f64,
}

impl LogSumExp {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0, "smoothing must be positive");
        LogSumExp { alpha }
    }
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Algebra for LogSumExp {
    type Value = f64;
    type Output = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        f64::NEG_INFINITY
    }
    #[inline]
    fn combine(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    #[inline]
    fn merge(&self, a: &f64, b: &f64) -> f64 {
        log_add_exp(*a, *b)
    }
    #[inline]
    fn arc_weight(&self, lambda: f64) -> f64 {
        -lambda / self.alpha
    }
    /// `-α log(exp(v))`; an empty sum maps to +∞.
    fn finish(&self, value: f64) -> f64 {
        -self.alpha * value
    }
}

/// (·, +, 1, 0, 1) over unbounded integers.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Counting;

impl Algebra for Counting {
    type Value = BigUint;
    type Output = BigUint;

    fn zero(&self) -> BigUint {
        BigUint::one()
    }
    fn one(&self) -> BigUint {
        BigUint::zero()
    }
    fn combine(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a * b
    }
    fn merge(&self, a: &BigUint, b: &BigUint) -> BigUint {
        a + b
    }
    fn arc_weight(&self, _lambda: f64) -> BigUint {
        BigUint::one()
    }
    fn finish(&self, value: BigUint) -> BigUint {
        value
    }
}

/// Either f64 algebra, chosen at run time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostAlgebra {
    MinSum,
    Smoothed(LogSumExp),
}

impl CostAlgebra {
    pub fn smoothed(alpha: f64) -> Self {
        CostAlgebra::Smoothed(LogSumExp::new(alpha))
    }
}

impl Algebra for CostAlgebra {
    type Value = f64;
    type Output = f64;

    fn zero(&self) -> f64 {
        0.0
    }
    fn one(&self) -> f64 {
        match self {
            CostAlgebra::MinSum => MinSum.one(),
            CostAlgebra::Smoothed(a) => a.one(),
        }
    }
    #[inline]
    fn combine(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    #[inline]
    fn merge(&self, a: &f64, b: &f64) -> f64 {
        match self {
            CostAlgebra::MinSum => a.min(*b),
            CostAlgebra::Smoothed(_) => log_add_exp(*a, *b),
        }
    }
    #[inline]
    fn arc_weight(&self, lambda: f64) -> f64 {
        match self {
            CostAlgebra::MinSum => lambda,
            CostAlgebra::Smoothed(a) => a.arc_weight(lambda),
        }
    }
    fn finish(&self, value: f64) -> f64 {
        match self {
            CostAlgebra::MinSum => value,
            CostAlgebra::Smoothed(a) => a.finish(value),
        }
    }
}

/// Cached forward and backward messages for one BDD.
///
/// Validity is tracked by two watermarks: forward messages are valid on
/// levels `< forward_valid`, backward messages on levels `>= backward_valid`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageStore<V> {
    forward: Vec<V>,
    backward: Vec<V>,
    forward_valid: usize,
    backward_valid: usize,
}

impl<V: Clone + Debug + PartialEq> MessageStore<V> {
    pub fn new<A: Algebra<Value = V>>(bdd: &Bdd, algebra: &A) -> Self {
        MessageStore {
            forward: vec![algebra.one(); bdd.capacity()],
            backward: vec![algebra.one(); bdd.capacity()],
            forward_valid: 0,
            backward_valid: bdd.num_levels(),
        }
    }

    pub fn forward(&self, node: NodeId) -> &V {
        &self.forward[node as usize]
    }

    pub fn backward(&self, node: NodeId) -> &V {
        &self.backward[node as usize]
    }

    pub fn forward_valid_levels(&self) -> usize {
        self.forward_valid
    }

    pub fn backward_valid_from(&self) -> usize {
        self.backward_valid
    }

    /// Records that θ at `level` changed.
    pub fn weight_changed(&mut self, level: usize) {
        self.forward_valid = self.forward_valid.min(level + 1);
        self.backward_valid = self.backward_valid.max(level + 1);
    }

    /// Marks every message stale.
    pub fn invalidate(&mut self, num_levels: usize) {
        self.forward_valid = 0;
        self.backward_valid = num_levels;
    }

    fn backward_of<A: Algebra<Value = V>>(&self, algebra: &A, node: NodeId) -> V {
        match node {
            TRUE => algebra.zero(),
            FALSE => algebra.one(),
            v => self.backward[v as usize].clone(),
        }
    }
}

/// Computes →m for the nodes on `level` from those on `level - 1`.
/// `lambdas[l]` is the multiplier of the variable on level `l`.
pub fn forward_step<A: Algebra>(
    bdd: &Bdd,
    store: &mut MessageStore<A::Value>,
    level: usize,
    lambdas: &[f64],
    algebra: &A,
) {
    debug_assert!(level <= store.forward_valid, "forward messages before level {level} are stale");
    if level == 0 {
        if !crate::bdd::is_terminal(bdd.root()) {
            store.forward[bdd.root() as usize] = algebra.zero();
        }
    } else {
        for v in bdd.level_range(level) {
            store.forward[v as usize] = algebra.one();
        }
        let theta = algebra.arc_weight(lambdas[level - 1]);
        for u in bdd.live_nodes_at(level - 1) {
            let node = *bdd.node(u);
            let fu = store.forward[u as usize].clone();
            if !crate::bdd::is_terminal(node.lo) {
                let slot = &mut store.forward[node.lo as usize];
                *slot = algebra.merge(slot, &fu);
            }
            if !crate::bdd::is_terminal(node.hi) {
                let via = algebra.combine(&fu, &theta);
                let slot = &mut store.forward[node.hi as usize];
                *slot = algebra.merge(slot, &via);
            }
        }
    }
    store.forward_valid = store.forward_valid.max(level + 1);
}

/// Computes ←m for the nodes on `level` from their children.
pub fn backward_step<A: Algebra>(
    bdd: &Bdd,
    store: &mut MessageStore<A::Value>,
    level: usize,
    lambdas: &[f64],
    algebra: &A,
) {
    debug_assert!(
        level + 1 >= store.backward_valid,
        "backward messages after level {level} are stale"
    );
    let theta = algebra.arc_weight(lambdas[level]);
    for v in bdd.live_nodes_at(level) {
        let node = *bdd.node(v);
        let lo = store.backward_of(algebra, node.lo);
        let hi = store.backward_of(algebra, node.hi);
        store.backward[v as usize] = algebra.merge(&lo, &algebra.combine(&hi, &theta));
    }
    store.backward_valid = store.backward_valid.min(level);
}

/// Marginals `(m⁰, m¹)` of the variable on `level`.
pub fn aggregate_marginals<A: Algebra>(
    bdd: &Bdd,
    store: &MessageStore<A::Value>,
    level: usize,
    lambdas: &[f64],
    algebra: &A,
) -> (A::Output, A::Output) {
    let (m0, m1) = aggregate_raw(bdd, store, level, lambdas, algebra);
    (algebra.finish(m0), algebra.finish(m1))
}

pub(crate) fn aggregate_raw<A: Algebra>(
    bdd: &Bdd,
    store: &MessageStore<A::Value>,
    level: usize,
    lambdas: &[f64],
    algebra: &A,
) -> (A::Value, A::Value) {
    debug_assert!(level < store.forward_valid && level + 1 >= store.backward_valid);
    let theta = algebra.arc_weight(lambdas[level]);
    let mut m0 = algebra.one();
    let mut m1 = algebra.one();
    let mut seen = false;
    for v in bdd.live_nodes_at(level) {
        seen = true;
        let node = *bdd.node(v);
        let fv = store.forward(v);
        let lo = store.backward_of(algebra, node.lo);
        let hi = store.backward_of(algebra, node.hi);
        m0 = algebra.merge(&m0, &algebra.combine(fv, &lo));
        m1 = algebra.merge(&m1, &algebra.combine(&algebra.combine(fv, &hi), &theta));
    }
    assert!(seen || !bdd.is_feasible(), "level {level} of a feasible BDD has no nodes");
    (m0, m1)
}

pub fn forward_sweep<A: Algebra>(bdd: &Bdd, store: &mut MessageStore<A::Value>, lambdas: &[f64], algebra: &A) {
    store.forward_valid = 0;
    for level in 0..bdd.num_levels() {
        forward_step(bdd, store, level, lambdas, algebra);
    }
}

pub fn backward_sweep<A: Algebra>(bdd: &Bdd, store: &mut MessageStore<A::Value>, lambdas: &[f64], algebra: &A) {
    store.backward_valid = bdd.num_levels();
    for level in (0..bdd.num_levels()).rev() {
        backward_step(bdd, store, level, lambdas, algebra);
    }
}

/// E^j from the root's backward message: the minimum cost, the smoothed
/// energy, or the number of solutions. An empty BDD yields 𝟙 (∞ / 0).
pub fn subproblem_energy<A: Algebra>(bdd: &Bdd, store: &MessageStore<A::Value>, algebra: &A) -> A::Output {
    let raw = match bdd.root() {
        TRUE => algebra.zero(),
        FALSE => algebra.one(),
        _ if !bdd.is_feasible() => algebra.one(),
        r => {
            debug_assert_eq!(store.backward_valid, 0, "backward messages are stale");
            store.backward[r as usize].clone()
        }
    };
    algebra.finish(raw)
}

/// E^j computed from forward messages on the last level.
pub fn energy_from_forward<A: Algebra>(
    bdd: &Bdd,
    store: &MessageStore<A::Value>,
    lambdas: &[f64],
    algebra: &A,
) -> A::Output {
    let k = bdd.num_levels();
    if k == 0 || !bdd.is_feasible() {
        return subproblem_energy(bdd, store, algebra);
    }
    let (m0, m1) = aggregate_raw(bdd, store, k - 1, lambdas, algebra);
    algebra.finish(algebra.merge(&m0, &m1))
}

/// All marginals of one BDD from fresh sweeps, independent of any cache.
pub fn marginals_from_scratch<A: Algebra>(bdd: &Bdd, lambdas: &[f64], algebra: &A) -> Vec<(A::Output, A::Output)> {
    let mut store = MessageStore::new(bdd, algebra);
    forward_sweep(bdd, &mut store, lambdas, algebra);
    backward_sweep(bdd, &mut store, lambdas, algebra);
    (0..bdd.num_levels())
        .map(|l| aggregate_marginals(bdd, &store, l, lambdas, algebra))
        .collect()
}

/// Energy of one BDD from a fresh backward sweep.
pub fn energy_from_scratch<A: Algebra>(bdd: &Bdd, lambdas: &[f64], algebra: &A) -> A::Output {
    let mut store = MessageStore::new(bdd, algebra);
    backward_sweep(bdd, &mut store, lambdas, algebra);
    subproblem_energy(bdd, &store, algebra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdd::build_bdd;
    use crate::model::{LinearConstraint, Relation};

    fn simplex() -> Bdd {
        let c = LinearConstraint::new("s", vec![(0, 1), (1, 1), (2, 1)], Relation::Eq, 1);
        build_bdd(&c, &[0, 1, 2]).unwrap()
    }

    const LAMBDA: [f64; 3] = [1.0, 2.0, 3.0];
    // Node ids in creation order: root, 3a, 3b, 7a, 7b.
    const N3A: NodeId = 1;
    const N3B: NodeId = 2;
    const N7A: NodeId = 3;
    const N7B: NodeId = 4;

    #[test]
    fn min_sum_forward_messages() {
        let bdd = simplex();
        let mut store = MessageStore::new(&bdd, &MinSum);
        forward_sweep(&bdd, &mut store, &LAMBDA, &MinSum);
        assert_eq!(*store.forward(N3A), 0.0);
        assert_eq!(*store.forward(N3B), 1.0);
        assert_eq!(*store.forward(N7A), 0.0);
        assert_eq!(*store.forward(N7B), 1.0);
    }

    #[test]
    fn min_sum_backward_messages() {
        let bdd = simplex();
        let mut store = MessageStore::new(&bdd, &MinSum);
        backward_sweep(&bdd, &mut store, &LAMBDA, &MinSum);
        assert_eq!(*store.backward(N7A), 3.0);
        assert_eq!(*store.backward(N7B), 0.0);
        assert_eq!(subproblem_energy(&bdd, &store, &MinSum), 1.0);
    }

    #[test]
    fn counting_messages() {
        let bdd = simplex();
        let mut store = MessageStore::new(&bdd, &Counting);
        forward_sweep(&bdd, &mut store, &LAMBDA, &Counting);
        backward_sweep(&bdd, &mut store, &LAMBDA, &Counting);
        assert_eq!(*store.forward(N7B), BigUint::from(2u32));
        assert_eq!(*store.backward(N7A), BigUint::from(1u32));
        assert_eq!(subproblem_energy(&bdd, &store, &Counting), BigUint::from(3u32));
        let (c0, c1) = aggregate_marginals(&bdd, &store, 0, &LAMBDA, &Counting);
        assert_eq!((c0, c1), (BigUint::from(2u32), BigUint::from(1u32)));
    }

    #[test]
    fn min_marginals_of_first_variable() {
        let bdd = simplex();
        let marg = marginals_from_scratch(&bdd, &LAMBDA, &MinSum);
        assert_eq!(marg[0], (2.0, 1.0));
        assert_eq!(marg[1], (1.0, 2.0));
        assert_eq!(marg[2], (1.0, 3.0));
    }

    #[test]
    fn uniform_log_sum_exp() {
        let bdd = simplex();
        let alg = LogSumExp::new(1.0);
        for (m0, m1) in marginals_from_scratch(&bdd, &[0.0; 3], &alg) {
            assert!((m0 + 2f64.ln()).abs() < 1e-12);
            assert!(m1.abs() < 1e-12);
        }
        let e = energy_from_scratch(&bdd, &[0.0; 3], &alg);
        assert!((e + 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn forward_energy_matches_backward() {
        let bdd = simplex();
        let mut store = MessageStore::new(&bdd, &MinSum);
        forward_sweep(&bdd, &mut store, &LAMBDA, &MinSum);
        assert_eq!(energy_from_forward(&bdd, &store, &LAMBDA, &MinSum), 1.0);
    }

    #[test]
    fn empty_bdd_energy() {
        let c = LinearConstraint::new("g", vec![(0, 1)], Relation::Ge, 2);
        let bdd = build_bdd(&c, &[0]).unwrap();
        assert_eq!(energy_from_scratch(&bdd, &[0.0], &MinSum), f64::INFINITY);
        assert_eq!(energy_from_scratch(&bdd, &[0.0], &Counting), BigUint::zero());
        assert_eq!(energy_from_scratch(&bdd, &[0.0], &LogSumExp::new(0.5)), f64::INFINITY);
    }

    #[test]
    fn log_add_exp_is_stable() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        assert!((log_add_exp(1000.0, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert!((log_add_exp(-1e4, 0.0)).abs() < 1e-12);
    }
}
