//! Primal rounding: scores from the dual state and a depth-first search
//! that fixes variables in all their BDDs and propagates forced literals.

use std::cmp::Ordering;
use std::collections::VecDeque;

use num_bigint::{BigInt, Sign};

use crate::algebra::{
    aggregate_marginals, backward_sweep, forward_sweep, marginals_from_scratch, Counting, MessageStore, MinSum,
};
use crate::bdd::{Bdd, Checkpoint, Fixation};
use crate::dual::DualState;
use crate::model::{presolve_free, Decomposition, IlpInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreStrategy {
    /// `S = |M|`
    AbsMm,
    /// `S = −M`
    #[default]
    NegMm,
    /// `S = sign(R)·M`
    Reduction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalScores {
    /// Total min-marginal difference per variable.
    pub m: Vec<f64>,
    /// Search-space reduction coefficient per variable.
    pub r: Vec<BigInt>,
    pub beta: Vec<bool>,
    pub s: Vec<f64>,
    pub strategy: ScoreStrategy,
}

impl PrimalScores {
    /// Builds scores from given `M` and `R`, applying the tie rule `β = 1 ⇔ M ≤ 0`.
    pub fn from_parts(m: Vec<f64>, r: Vec<BigInt>, strategy: ScoreStrategy) -> Self {
        let beta = m.iter().map(|&v| v <= 0.0).collect();
        let s = m
            .iter()
            .zip(&r)
            .map(|(&mi, ri)| match strategy {
                ScoreStrategy::AbsMm => mi.abs(),
                ScoreStrategy::NegMm => -mi,
                ScoreStrategy::Reduction => match ri.sign() {
                    Sign::Plus => mi,
                    Sign::Minus => -mi,
                    Sign::NoSign => 0.0,
                },
            })
            .collect();
        PrimalScores { m, r, beta, s, strategy }
    }

    /// Variables by descending score, ties by ascending index.
    pub fn search_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.s.len()).collect();
        order.sort_by(|&a, &b| match self.s[b].total_cmp(&self.s[a]) {
            Ordering::Equal => a.cmp(&b),
            o => o,
        });
        order
    }
}

/// `R_i = Σ_{j∈J_i} (|X_j ∩ {x_i = 1}| − |X_j ∩ {x_i = 0}|)`.
pub fn reduction_coefficients(bdds: &[Bdd], num_vars: usize) -> Vec<BigInt> {
    let mut r = vec![BigInt::default(); num_vars];
    for bdd in bdds {
        let zeros = vec![0.0; bdd.num_levels()];
        let mut store = MessageStore::new(bdd, &Counting);
        forward_sweep(bdd, &mut store, &zeros, &Counting);
        backward_sweep(bdd, &mut store, &zeros, &Counting);
        for (l, &var) in bdd.support().iter().enumerate() {
            let (c0, c1) = aggregate_marginals(bdd, &store, l, &zeros, &Counting);
            r[var] += BigInt::from(c1) - BigInt::from(c0);
        }
    }
    r
}

/// `M_i = Σ_{j∈J_i} (m¹_ij − m⁰_ij)` under the multipliers in `lambdas`.
pub fn total_marginal_differences(bdds: &[Bdd], lambdas: &[Vec<f64>], num_vars: usize) -> Vec<f64> {
    let mut m = vec![0.0; num_vars];
    for (bdd, lam) in bdds.iter().zip(lambdas) {
        for (l, (m0, m1)) in marginals_from_scratch(bdd, lam, &MinSum).into_iter().enumerate() {
            m[bdd.support()[l]] += m1 - m0;
        }
    }
    // ∞ − ∞ from an empty subproblem carries no preference.
    for v in &mut m {
        if v.is_nan() {
            *v = 0.0;
        }
    }
    m
}

pub fn compute_scores(state: &DualState, strategy: ScoreStrategy) -> PrimalScores {
    let n = state.decomposition().var_subproblems.len();
    let m = total_marginal_differences(state.bdds(), state.lambdas(), n);
    let r = match strategy {
        ScoreStrategy::Reduction => reduction_coefficients(state.bdds(), n),
        _ => vec![BigInt::default(); n],
    };
    PrimalScores::from_parts(m, r, strategy)
}

/// Fixes `x_var = value` in every BDD holding `var` and follows forced
/// literals to a fixed point. Returns false on a conflict. `touch(j, bdds)`
/// runs before BDD `j` is modified.
fn propagate(
    bdds: &mut [Bdd],
    var_subproblems: &[Vec<usize>],
    assignment: &mut [Option<bool>],
    trail: &mut Vec<usize>,
    var: usize,
    value: bool,
    touch: &mut dyn FnMut(usize, &mut [Bdd]),
) -> bool {
    let mut queue = VecDeque::from([(var, value)]);
    while let Some((i, v)) = queue.pop_front() {
        match assignment[i] {
            Some(a) if a == v => continue,
            Some(_) => return false,
            None => {}
        }
        assignment[i] = Some(v);
        trail.push(i);
        for &j in &var_subproblems[i] {
            touch(j, bdds);
            let fixed = bdds[j].fix_variable(i, v).expect("variable in support");
            if fixed == Fixation::Infeasible {
                return false;
            }
            for (k, w) in bdds[j].forced_literals() {
                match assignment[k] {
                    Some(a) if a == w => {}
                    Some(_) => return false,
                    None => queue.push_back((k, w)),
                }
            }
        }
    }
    true
}

/// Restriction propagation on BDDs whose checkpoints the caller manages.
/// Returns the implied literals, or `None` if some BDD became empty.
pub fn restriction_propagation(
    bdds: &mut [Bdd],
    decomposition: &Decomposition,
    assignment: &mut [Option<bool>],
    var: usize,
    value: bool,
) -> Option<Vec<(usize, bool)>> {
    let mut trail = Vec::new();
    let ok = propagate(
        bdds,
        &decomposition.var_subproblems,
        assignment,
        &mut trail,
        var,
        value,
        &mut |_, _| {},
    );
    ok.then(|| {
        trail
            .into_iter()
            .filter(|&i| i != var)
            .map(|i| (i, assignment[i].expect("assigned on trail")))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimalOutcome {
    Solution { assignment: Vec<bool>, objective: f64 },
    Infeasible,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalResult {
    pub outcome: PrimalOutcome,
    /// Propagation calls made, the unit of the node budget.
    pub nodes: usize,
}

struct Frame {
    var: usize,
    alternative: Option<bool>,
    trail_len: usize,
    touched_len: usize,
    cursor: usize,
}

struct Search<'a> {
    bdds: &'a mut [Bdd],
    var_subproblems: &'a [Vec<usize>],
    assignment: Vec<Option<bool>>,
    trail: Vec<usize>,
    /// `(j, checkpoint, previous stamp)` in creation order.
    touched: Vec<(usize, Checkpoint, usize)>,
    stamp: Vec<usize>,
    epoch: usize,
    nodes: usize,
}

impl Search<'_> {
    fn assign(&mut self, var: usize, value: bool) -> bool {
        self.nodes += 1;
        let epoch = self.epoch;
        let stamp = &mut self.stamp;
        let touched = &mut self.touched;
        propagate(
            self.bdds,
            self.var_subproblems,
            &mut self.assignment,
            &mut self.trail,
            var,
            value,
            &mut |j, bdds| {
                if stamp[j] != epoch {
                    touched.push((j, bdds[j].checkpoint(), stamp[j]));
                    stamp[j] = epoch;
                }
            },
        )
    }

    fn undo(&mut self, trail_len: usize, touched_len: usize) {
        for i in self.trail.drain(trail_len..) {
            self.assignment[i] = None;
        }
        while self.touched.len() > touched_len {
            let (j, cp, prev) = self.touched.pop().expect("non-empty");
            self.bdds[j].rollback(cp).expect("checkpoints unwound in order");
            self.stamp[j] = prev;
        }
    }

    fn next_epoch(&mut self) {
        self.epoch += 1;
    }
}

/// Depth-first search: the open variable of highest score is set to its
/// preferred value, then to the other value on backtrack. Every BDD is
/// restored to its pre-search state before returning.
pub fn primal_search(
    instance: &IlpInstance,
    decomposition: &Decomposition,
    bdds: &mut [Bdd],
    scores: &PrimalScores,
    node_budget: Option<usize>,
) -> PrimalResult {
    let n = instance.num_vars();
    let order: Vec<usize> = scores
        .search_order()
        .into_iter()
        .filter(|&i| !decomposition.is_free(i))
        .collect();
    let mut search = Search {
        bdds,
        var_subproblems: &decomposition.var_subproblems,
        assignment: vec![None; n],
        trail: Vec::new(),
        touched: Vec::new(),
        stamp: vec![usize::MAX; decomposition.num_subproblems()],
        epoch: 0,
        nodes: 0,
    };

    let outcome = 'search: {
        if search.bdds.iter().any(|b| !b.is_feasible()) {
            break 'search PrimalOutcome::Infeasible;
        }
        // Literals forced before any decision.
        let initial: Vec<(usize, bool)> = search.bdds.iter().flat_map(|b| b.forced_literals()).collect();
        for (i, v) in initial {
            if !search.assign(i, v) {
                break 'search PrimalOutcome::Infeasible;
            }
        }

        let budget = node_budget.unwrap_or(usize::MAX);
        let mut frames: Vec<Frame> = Vec::new();
        let mut cursor = 0;
        loop {
            while cursor < order.len() && search.assignment[order[cursor]].is_some() {
                cursor += 1;
            }
            if cursor == order.len() {
                break 'search PrimalOutcome::Solution {
                    assignment: Vec::new(),
                    objective: 0.0,
                };
            }
            if search.nodes >= budget {
                break 'search PrimalOutcome::BudgetExhausted;
            }
            let var = order[cursor];
            let beta = scores.beta[var];
            search.next_epoch();
            frames.push(Frame {
                var,
                alternative: Some(!beta),
                trail_len: search.trail.len(),
                touched_len: search.touched.len(),
                cursor,
            });
            let mut ok = search.assign(var, beta);
            while !ok {
                let Some(mut frame) = frames.pop() else {
                    break 'search PrimalOutcome::Infeasible;
                };
                search.undo(frame.trail_len, frame.touched_len);
                if let Some(value) = frame.alternative.take() {
                    if search.nodes >= budget {
                        break 'search PrimalOutcome::BudgetExhausted;
                    }
                    cursor = frame.cursor;
                    let var = frame.var;
                    search.next_epoch();
                    frames.push(frame);
                    ok = search.assign(var, value);
                }
            }
        }
    };

    let outcome = match outcome {
        PrimalOutcome::Solution { .. } => {
            let mut x: Vec<bool> = search.assignment.iter().map(|a| a.unwrap_or(false)).collect();
            for (i, v) in presolve_free(instance, decomposition).fixed {
                x[i] = v;
            }
            assert!(instance.is_feasible(&x), "search produced an infeasible assignment");
            let objective = instance.objective_value(&x);
            PrimalOutcome::Solution { assignment: x, objective }
        }
        other => other,
    };
    let nodes = search.nodes;
    search.undo(0, 0);
    PrimalResult { outcome, nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CostAlgebra;
    use crate::bdd::BddBuilder;
    use crate::dual::{Averaging, SolverConfig};
    use crate::model::{decompose, LinearConstraint, Relation};

    fn setup(inst: &IlpInstance) -> (Decomposition, Vec<Bdd>) {
        let order: Vec<usize> = (0..inst.num_vars()).collect();
        let builder = BddBuilder::new(&order);
        let bdds = inst.constraints.iter().map(|c| builder.build(c).unwrap()).collect();
        (decompose(inst, &order), bdds)
    }

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|k| format!("x{k}")).collect()
    }

    fn chain() -> IlpInstance {
        IlpInstance::new(
            names(3),
            vec![1.0, 0.0, 1.0],
            0.0,
            vec![
                LinearConstraint::new("a", vec![(0, 1), (1, 1)], Relation::Eq, 1),
                LinearConstraint::new("b", vec![(1, 1), (2, 1)], Relation::Eq, 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn scores_follow_tie_rule() {
        let s = PrimalScores::from_parts(vec![-1.0, 0.0, 2.0], vec![BigInt::default(); 3], ScoreStrategy::AbsMm);
        assert_eq!(s.beta, vec![true, true, false]);
        assert_eq!(s.search_order(), vec![2, 0, 1]);
        let s = PrimalScores::from_parts(vec![2.0, -3.0], vec![BigInt::from(-1), BigInt::from(0)], ScoreStrategy::Reduction);
        assert_eq!(s.s, vec![-2.0, 0.0]);
    }

    #[test]
    fn reduction_on_simplex() {
        let inst = IlpInstance::new(
            names(3),
            vec![0.0; 3],
            0.0,
            vec![LinearConstraint::new("s", vec![(0, 1), (1, 1), (2, 1)], Relation::Eq, 1)],
        )
        .unwrap();
        let (_, bdds) = setup(&inst);
        assert_eq!(reduction_coefficients(&bdds, 3), vec![BigInt::from(-1); 3]);
    }

    #[test]
    fn propagation_examples() {
        let inst = chain();
        let (d, mut bdds) = setup(&inst);
        let mut a = vec![None; 3];
        let cps: Vec<_> = bdds.iter_mut().map(|b| b.checkpoint()).collect();
        let implied = restriction_propagation(&mut bdds, &d, &mut a, 0, true).unwrap();
        let mut sorted = implied.clone();
        sorted.sort();
        assert_eq!(sorted, vec![(1, false), (2, true)]);
        assert_eq!(restriction_propagation(&mut bdds, &d, &mut a, 2, true), Some(vec![]));
        for (b, cp) in bdds.iter_mut().zip(cps) {
            b.rollback(cp).unwrap();
        }

        let inst = IlpInstance::new(
            names(2),
            vec![0.0; 2],
            0.0,
            vec![
                LinearConstraint::new("a", vec![(0, 1), (1, 1)], Relation::Eq, 1),
                LinearConstraint::new("b", vec![(1, 1)], Relation::Ge, 1),
            ],
        )
        .unwrap();
        let (d, mut bdds) = setup(&inst);
        let mut a = vec![None; 2];
        assert_eq!(restriction_propagation(&mut bdds, &d, &mut a, 0, true), None);
    }

    #[test]
    fn chain_search_restores_bdds() {
        let inst = chain();
        let (d, bdds) = setup(&inst);
        let mut state = crate::dual::DualState::new(d.clone(), bdds, &inst.objective, CostAlgebra::MinSum, Averaging::Uniform);
        let report = state.run(&SolverConfig::default());
        let before: Vec<Bdd> = state.bdds().to_vec();
        for strategy in [ScoreStrategy::AbsMm, ScoreStrategy::NegMm, ScoreStrategy::Reduction] {
            let scores = compute_scores(&state, strategy);
            let result = primal_search(&inst, &d, state.bdds_mut(), &scores, None);
            match result.outcome {
                PrimalOutcome::Solution { objective, .. } => {
                    assert!(objective == 0.0 || objective == 2.0);
                    assert!(objective >= report.lower_bound - 1e-6);
                }
                o => panic!("unexpected {o:?}"),
            }
            for (a, b) in before.iter().zip(state.bdds()) {
                assert!(a.same_state(b));
            }
        }
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let inst = IlpInstance::new(
            names(2),
            vec![0.0; 2],
            0.0,
            vec![
                LinearConstraint::new("ge", vec![(0, 1), (1, 1)], Relation::Ge, 1),
                LinearConstraint::new("le", vec![(0, 1), (1, 1)], Relation::Le, 0),
            ],
        )
        .unwrap();
        let (d, mut bdds) = setup(&inst);
        let scores = PrimalScores::from_parts(vec![0.0; 2], vec![BigInt::default(); 2], ScoreStrategy::NegMm);
        let result = primal_search(&inst, &d, &mut bdds, &scores, None);
        assert_eq!(result.outcome, PrimalOutcome::Infeasible);
    }

    #[test]
    fn no_constraints_uses_presolve() {
        let inst = IlpInstance::new(names(2), vec![-1.0, 1.0], 0.5, vec![]).unwrap();
        let (d, mut bdds) = setup(&inst);
        let scores = PrimalScores::from_parts(vec![0.0; 2], vec![BigInt::default(); 2], ScoreStrategy::NegMm);
        let result = primal_search(&inst, &d, &mut bdds, &scores, Some(0));
        assert_eq!(
            result.outcome,
            PrimalOutcome::Solution {
                assignment: vec![true, false],
                objective: -0.5
            }
        );
    }

    #[test]
    fn backtracks_past_bad_preference() {
        // Preferring x1 = 1 everywhere forces a conflict three levels down.
        let inst = IlpInstance::new(
            names(4),
            vec![0.0; 4],
            0.0,
            vec![
                LinearConstraint::new("a", vec![(0, 1), (1, 1), (2, 1), (3, 1)], Relation::Eq, 1),
                LinearConstraint::new("b", vec![(0, 1), (3, -1)], Relation::Eq, 0),
            ],
        )
        .unwrap();
        let (d, mut bdds) = setup(&inst);
        let before = bdds.clone();
        let scores = PrimalScores::from_parts(vec![-1.0; 4], vec![BigInt::default(); 4], ScoreStrategy::NegMm);
        let result = primal_search(&inst, &d, &mut bdds, &scores, None);
        let PrimalOutcome::Solution { assignment, .. } = result.outcome else {
            panic!("expected a solution");
        };
        assert!(inst.is_feasible(&assignment));
        for (a, b) in before.iter().zip(&bdds) {
            assert!(a.same_state(b));
        }
    }

    #[test]
    fn zero_budget_exhausts() {
        let inst = chain();
        let (d, mut bdds) = setup(&inst);
        let scores = PrimalScores::from_parts(vec![0.0; 3], vec![BigInt::default(); 3], ScoreStrategy::NegMm);
        let result = primal_search(&inst, &d, &mut bdds, &scores, Some(0));
        assert_eq!(result.outcome, PrimalOutcome::BudgetExhausted);
    }
}
