//! Dual block coordinate ascent by min-marginal averaging.
//!
//! Each subproblem `j` owns a BDD, one multiplier per support level and a
//! cache of forward/backward messages. A forward pass visits variables in
//! the global order: it advances the forward messages of every BDD holding
//! the variable, reads the marginals off the caches and rebalances the
//! multipliers. A backward pass does the same in reverse with backward
//! messages, so every pass touches each BDD node a constant number of times.

use std::time::Instant;

use serde::Serialize;

use crate::algebra::{
    aggregate_marginals, backward_step, backward_sweep, energy_from_forward, energy_from_scratch,
    forward_step, marginals_from_scratch, subproblem_energy, CostAlgebra, MessageStore, MinSum,
};
use crate::bdd::Bdd;
use crate::model::{Decomposition, OrderStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    Uniform,
    /// Redistribute only to subproblems that still hold later variables.
    Srmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "fw")]
    Forward,
    #[serde(rename = "bw")]
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "fw",
            Direction::Backward => "bw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_passes: usize,
    pub rel_improvement_tol: f64,
    pub smoothing: Option<f64>,
    pub averaging: Averaging,
    pub order: OrderStrategy,
    /// Record every update with from-scratch checks (slow).
    pub verify: bool,
    /// Measure wall-clock time for the trace.
    pub timing: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_passes: 1000,
            rel_improvement_tol: 1e-6,
            smoothing: None,
            averaging: Averaging::Uniform,
            order: OrderStrategy::Input,
            verify: false,
            timing: true,
        }
    }
}

/// One multiplier update as observed in verification mode.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub var: usize,
    pub direction: Direction,
    /// `m¹ − m⁰` per subproblem in `J_i`, from the caches.
    pub differences: Vec<f64>,
    /// Change of `Σ_{j∈J_i} E^j` (smoothed energies in smoothed mode).
    pub realized_increase: f64,
    /// Largest gap between cached and from-scratch marginals.
    pub marginal_deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub pass: usize,
    pub direction: Direction,
    pub lb: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    /// Non-smoothed bound `Σ_j E^j` at the final multipliers.
    pub lower_bound: f64,
    /// `Σ_j E^j_α` at the final multipliers, in smoothed mode.
    pub smoothed_bound: Option<f64>,
    pub passes: usize,
    pub converged: bool,
    pub infeasible: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct DualState {
    decomposition: Decomposition,
    objective: Vec<f64>,
    bdds: Vec<Bdd>,
    /// `lambdas[j][l]` multiplies the variable on level `l` of BDD `j`.
    lambdas: Vec<Vec<f64>>,
    stores: Vec<MessageStore<f64>>,
    /// `(j, level)` for every `j ∈ J_i`.
    var_levels: Vec<Vec<(usize, usize)>>,
    algebra: CostAlgebra,
    averaging: Averaging,
    lower_bound: f64,
    passes: usize,
    verify: bool,
    records: Vec<UpdateRecord>,
    scratch: Vec<(f64, f64)>,
}

/// `min{0, Σd} − Σ min{0, d}`, the bound gain of a uniform update.
pub fn predicted_increase(differences: &[f64]) -> f64 {
    let total: f64 = differences.iter().sum();
    total.min(0.0) - differences.iter().map(|d| d.min(0.0)).sum::<f64>()
}

impl DualState {
    /// Sets `λ^j_i = c_i / |J_i|` and runs one full backward sweep.
    pub fn new(
        decomposition: Decomposition,
        bdds: Vec<Bdd>,
        objective: &[f64],
        algebra: CostAlgebra,
        averaging: Averaging,
    ) -> Self {
        assert_eq!(bdds.len(), decomposition.num_subproblems());
        let mut var_levels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); objective.len()];
        let mut lambdas = Vec::with_capacity(bdds.len());
        for (j, bdd) in bdds.iter().enumerate() {
            debug_assert_eq!(bdd.support(), decomposition.subproblem_vars[j].as_slice());
            let mut lam = Vec::with_capacity(bdd.num_levels());
            for (l, &var) in bdd.support().iter().enumerate() {
                var_levels[var].push((j, l));
                lam.push(objective[var] / decomposition.var_subproblems[var].len() as f64);
            }
            lambdas.push(lam);
        }
        let stores = bdds.iter().map(|b| MessageStore::new(b, &algebra)).collect();
        let mut state = DualState {
            decomposition,
            objective: objective.to_vec(),
            bdds,
            lambdas,
            stores,
            var_levels,
            algebra,
            averaging,
            lower_bound: 0.0,
            passes: 0,
            verify: false,
            records: Vec::new(),
            scratch: Vec::new(),
        };
        state.lower_bound = state.full_backward_sweep();
        state
    }

    pub fn with_verification(mut self, on: bool) -> Self {
        self.verify = on;
        self
    }

    fn full_backward_sweep(&mut self) -> f64 {
        let mut bound = 0.0;
        for j in 0..self.bdds.len() {
            backward_sweep(&self.bdds[j], &mut self.stores[j], &self.lambdas[j], &self.algebra);
            bound += subproblem_energy(&self.bdds[j], &self.stores[j], &self.algebra);
        }
        bound
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn algebra(&self) -> CostAlgebra {
        self.algebra
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn bdds(&self) -> &[Bdd] {
        &self.bdds
    }

    pub fn bdds_mut(&mut self) -> &mut [Bdd] {
        &mut self.bdds
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn lambda(&self, var: usize, j: usize) -> Option<f64> {
        self.var_levels[var]
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(k, l)| self.lambdas[k][l])
    }

    pub fn records(&self) -> &[UpdateRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<UpdateRecord> {
        std::mem::take(&mut self.records)
    }

    /// True if some subproblem has no feasible point.
    pub fn is_infeasible(&self) -> bool {
        self.bdds.iter().any(|b| !b.is_feasible())
    }

    /// Largest `|Σ_{j∈J_i} λ^j_i − c_i|` over constrained variables.
    pub fn max_feasibility_violation(&self) -> f64 {
        self.var_levels
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(i, entries)| {
                let s: f64 = entries.iter().map(|&(j, l)| self.lambdas[j][l]).sum();
                (s - self.objective[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `Σ_j E^j` under `algebra` from fresh sweeps.
    pub fn energy_with(&self, algebra: &CostAlgebra) -> f64 {
        (0..self.bdds.len())
            .map(|j| energy_from_scratch(&self.bdds[j], &self.lambdas[j], algebra))
            .sum()
    }

    /// Non-smoothed dual bound at the current multipliers.
    pub fn min_sum_bound(&self) -> f64 {
        (0..self.bdds.len())
            .map(|j| energy_from_scratch(&self.bdds[j], &self.lambdas[j], &MinSum))
            .sum()
    }

    /// Min-marginals `(m⁰, m¹)` of `var` in each of its subproblems, computed
    /// from scratch with the min-sum algebra.
    pub fn min_marginals(&self, var: usize) -> Vec<(usize, f64, f64)> {
        self.var_levels[var]
            .iter()
            .map(|&(j, l)| {
                let m = marginals_from_scratch(&self.bdds[j], &self.lambdas[j], &MinSum);
                (j, m[l].0, m[l].1)
            })
            .collect()
    }

    /// Subproblems of `var` as `(j, level)`.
    pub fn var_levels(&self, var: usize) -> &[(usize, usize)] {
        &self.var_levels[var]
    }

    /// Rebalances the multipliers of `var` from cached marginals and returns
    /// the change in `Σ_{j∈J_i} E^j` predicted by the update rule.
    ///
    /// The caches must hold valid forward messages up to and backward
    /// messages beyond the variable's level in each of its BDDs.
    pub fn mma_update(&mut self, var: usize, direction: Direction) -> f64 {
        let entries = std::mem::take(&mut self.var_levels[var]);
        let gain = self.update_entries(var, &entries, direction);
        self.var_levels[var] = entries;
        gain
    }

    fn update_entries(&mut self, var: usize, entries: &[(usize, usize)], direction: Direction) -> f64 {
        let mut marginals = std::mem::take(&mut self.scratch);
        marginals.clear();
        for &(j, l) in entries {
            marginals.push(aggregate_marginals(
                &self.bdds[j],
                &self.stores[j],
                l,
                &self.lambdas[j],
                &self.algebra,
            ));
        }
        let differences: Vec<f64> = marginals.iter().map(|&(m0, m1)| m1 - m0).collect();

        let (deviation, before) = if self.verify {
            let mut dev: f64 = 0.0;
            for (k, &(j, l)) in entries.iter().enumerate() {
                let fresh = marginals_from_scratch(&self.bdds[j], &self.lambdas[j], &self.algebra)[l];
                dev = dev.max(gap(fresh.0, marginals[k].0)).max(gap(fresh.1, marginals[k].1));
            }
            (dev, self.local_energy(entries))
        } else {
            (0.0, 0.0)
        };

        let gain = if entries.len() > 1 {
            self.rebalance(var, entries, &differences, direction)
        } else {
            0.0
        };

        if self.verify {
            let after = self.local_energy(entries);
            self.records.push(UpdateRecord {
                var,
                direction,
                differences: differences.clone(),
                realized_increase: after - before,
                marginal_deviation: deviation,
            });
        }
        self.scratch = marginals;
        gain
    }

    fn local_energy(&self, entries: &[(usize, usize)]) -> f64 {
        entries
            .iter()
            .map(|&(j, _)| energy_from_scratch(&self.bdds[j], &self.lambdas[j], &self.algebra))
            .sum()
    }

    fn rebalance(
        &mut self,
        var: usize,
        entries: &[(usize, usize)],
        differences: &[f64],
        direction: Direction,
    ) -> f64 {
        let pos_inf = differences.iter().any(|&d| d == f64::INFINITY);
        let neg_inf = differences.iter().any(|&d| d == f64::NEG_INFINITY);
        let mut deltas = vec![0.0; entries.len()];
        let gain;
        if pos_inf || neg_inf {
            if pos_inf && neg_inf {
                // Contradictory forcings: no finite update helps.
                return 0.0;
            }
            // Subproblems that force the variable absorb the finite
            // differences; their energy does not depend on the multiplier
            // (forced to 0) or moves with it one to one (forced to 1).
            let forced: Vec<usize> = (0..entries.len()).filter(|&k| differences[k].is_infinite()).collect();
            let moved: f64 = differences.iter().filter(|d| d.is_finite()).sum();
            for (k, &d) in differences.iter().enumerate() {
                if d.is_finite() {
                    deltas[k] = -d;
                }
            }
            for &k in &forced {
                deltas[k] = moved / forced.len() as f64;
            }
            gain = if pos_inf {
                -differences.iter().filter(|d| d.is_finite()).map(|d| d.min(0.0)).sum::<f64>()
            } else {
                differences.iter().filter(|d| d.is_finite()).map(|d| d.max(0.0)).sum::<f64>()
            };
        } else {
            let total: f64 = differences.iter().sum();
            let receivers: Vec<bool> = match self.averaging {
                Averaging::Uniform => vec![true; entries.len()],
                Averaging::Srmp => {
                    let later: Vec<bool> = entries
                        .iter()
                        .map(|&(j, l)| match direction {
                            Direction::Forward => l + 1 < self.bdds[j].num_levels(),
                            Direction::Backward => l > 0,
                        })
                        .collect();
                    if later.iter().any(|&b| b) {
                        later
                    } else {
                        vec![true; entries.len()]
                    }
                }
            };
            let count = receivers.iter().filter(|&&b| b).count() as f64;
            let share = total / count;
            for k in 0..entries.len() {
                deltas[k] = -differences[k] + if receivers[k] { share } else { 0.0 };
            }
            gain = predicted_increase(differences);
        }

        let mut sum = 0.0;
        for (k, &(j, l)) in entries.iter().enumerate() {
            self.lambdas[j][l] += deltas[k];
            sum += self.lambdas[j][l];
        }
        // Keep Σ_j λ^j_i = c_i from drifting under rounding.
        let &(j_last, l_last) = entries.last().expect("at least two entries");
        self.lambdas[j_last][l_last] += self.objective[var] - sum;
        for &(j, l) in entries {
            self.stores[j].weight_changed(l);
        }
        gain
    }

    pub fn forward_pass(&mut self) -> f64 {
        for p in 0..self.decomposition.order.len() {
            let var = self.decomposition.order[p];
            let entries = std::mem::take(&mut self.var_levels[var]);
            if entries.is_empty() {
                continue;
            }
            for &(j, l) in &entries {
                forward_step(&self.bdds[j], &mut self.stores[j], l, &self.lambdas[j], &self.algebra);
            }
            self.update_entries(var, &entries, Direction::Forward);
            self.var_levels[var] = entries;
        }
        let mut bound = 0.0;
        for j in 0..self.bdds.len() {
            bound += energy_from_forward(&self.bdds[j], &self.stores[j], &self.lambdas[j], &self.algebra);
        }
        self.lower_bound = bound;
        self.passes += 1;
        bound
    }

    pub fn backward_pass(&mut self) -> f64 {
        for p in (0..self.decomposition.order.len()).rev() {
            let var = self.decomposition.order[p];
            let entries = std::mem::take(&mut self.var_levels[var]);
            if entries.is_empty() {
                continue;
            }
            self.update_entries(var, &entries, Direction::Backward);
            for &(j, l) in &entries {
                backward_step(&self.bdds[j], &mut self.stores[j], l, &self.lambdas[j], &self.algebra);
            }
            self.var_levels[var] = entries;
        }
        let mut bound = 0.0;
        for j in 0..self.bdds.len() {
            bound += subproblem_energy(&self.bdds[j], &self.stores[j], &self.algebra);
        }
        self.lower_bound = bound;
        self.passes += 1;
        bound
    }

    /// Alternates forward and backward passes until the bound stalls over a
    /// full round or `max_passes` passes have run.
    pub fn run(&mut self, config: &SolverConfig) -> DualReport {
        let start = Instant::now();
        let elapsed = |on: bool| {
            if on {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            }
        };
        let mut trace = Vec::new();
        let mut converged = false;
        let infeasible = self.is_infeasible();
        if !infeasible {
            let mut round_start = self.lower_bound;
            let mut done = 0;
            while done < config.max_passes {
                let direction = if done % 2 == 0 { Direction::Forward } else { Direction::Backward };
                let lb = match direction {
                    Direction::Forward => self.forward_pass(),
                    Direction::Backward => self.backward_pass(),
                };
                done += 1;
                trace.push(TraceEntry {
                    pass: self.passes,
                    direction,
                    lb,
                    time_ms: elapsed(config.timing),
                });
                if direction == Direction::Backward {
                    let rel = (lb - round_start).abs() / lb.abs().max(1.0);
                    if rel < config.rel_improvement_tol {
                        converged = true;
                        break;
                    }
                    round_start = lb;
                }
            }
        }
        let (lower_bound, smoothed_bound) = if infeasible {
            (f64::INFINITY, None)
        } else {
            match self.algebra {
                CostAlgebra::MinSum => (self.lower_bound, None),
                CostAlgebra::Smoothed(_) => (self.min_sum_bound(), Some(self.lower_bound)),
            }
        };
        DualReport {
            lower_bound,
            smoothed_bound,
            passes: self.passes,
            converged,
            infeasible,
            trace,
        }
    }
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bdd::BddBuilder;
    use crate::model::{decompose, IlpInstance, LinearConstraint, Relation};

    fn state_for(inst: &IlpInstance, algebra: CostAlgebra, averaging: Averaging) -> DualState {
        let order: Vec<usize> = (0..inst.num_vars()).collect();
        let d = decompose(inst, &order);
        let builder = BddBuilder::new(&order);
        let bdds = inst.constraints.iter().map(|c| builder.build(c).unwrap()).collect();
        DualState::new(d, bdds, &inst.objective, algebra, averaging).with_verification(true)
    }

    fn chain(c: [f64; 3]) -> IlpInstance {
        IlpInstance::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            c.to_vec(),
            0.0,
            vec![
                LinearConstraint::new("a", vec![(0, 1), (1, 1)], Relation::Eq, 1),
                LinearConstraint::new("b", vec![(1, 1), (2, 1)], Relation::Eq, 1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn initial_multipliers_split_costs() {
        let inst = IlpInstance::new(
            vec!["x".into(), "y".into()],
            vec![6.0, 0.0],
            0.0,
            vec![
                LinearConstraint::new("a", vec![(0, 1), (1, 1)], Relation::Le, 1),
                LinearConstraint::new("b", vec![(0, 1)], Relation::Le, 1),
                LinearConstraint::new("c", vec![(0, 1), (1, -1)], Relation::Le, 0),
            ],
        )
        .unwrap();
        let s = state_for(&inst, CostAlgebra::MinSum, Averaging::Uniform);
        for j in 0..3 {
            assert_eq!(s.lambda(0, j), Some(2.0));
        }
        assert_eq!(s.lambda(1, 0), Some(0.0));
    }

    #[test]
    fn single_subproblem_bound_is_exact() {
        let inst = IlpInstance::new(
            vec!["x1".into(), "x3".into(), "x7".into()],
            vec![1.0, 2.0, 3.0],
            0.0,
            vec![LinearConstraint::new("s", vec![(0, 1), (1, 1), (2, 1)], Relation::Eq, 1)],
        )
        .unwrap();
        let mut s = state_for(&inst, CostAlgebra::MinSum, Averaging::Uniform);
        assert_eq!(s.lower_bound(), 1.0);
        let report = s.run(&SolverConfig::default());
        assert_eq!(report.lower_bound, 1.0);
        assert!(report.converged);
        assert!(s.records().iter().all(|r| r.realized_increase == 0.0));
    }

    #[test]
    fn prop1_on_two_subproblems() {
        // Differences (2, -3): gain = min(0, -1) - (0 + -3) = 2.
        assert_eq!(predicted_increase(&[2.0, -3.0]), 2.0);
        assert_eq!(predicted_increase(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn chain_bound_below_optimum_and_monotone() {
        for averaging in [Averaging::Uniform, Averaging::Srmp] {
            let mut s = state_for(&chain([1.0, 0.0, 1.0]), CostAlgebra::MinSum, averaging);
            let mut last = s.lower_bound();
            for _ in 0..10 {
                let lb = s.forward_pass();
                assert!(lb >= last - 1e-9);
                let lb2 = s.backward_pass();
                assert!(lb2 >= lb - 1e-9);
                last = lb2;
            }
            // Optimum is x2 = 1 with cost 0.
            assert!(last <= 1e-9);
            assert!(last.abs() < 1e-9, "chain relaxation is tight, got {last}");
            assert!(s.max_feasibility_violation() < 1e-9);
            for r in s.records() {
                assert!(r.marginal_deviation < 1e-9);
                if averaging == Averaging::Uniform {
                    assert!((r.realized_increase - predicted_increase(&r.differences)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn disjoint_constraints_reach_sum_of_minima() {
        let inst = IlpInstance::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![-1.0, 2.0, 3.0, -4.0],
            0.0,
            vec![
                LinearConstraint::new("r1", vec![(0, 1), (1, 1)], Relation::Ge, 1),
                LinearConstraint::new("r2", vec![(2, 1), (3, 1)], Relation::Le, 1),
            ],
        )
        .unwrap();
        let mut s = state_for(&inst, CostAlgebra::MinSum, Averaging::Uniform);
        let lb = s.forward_pass();
        assert_eq!(lb, -1.0 + -4.0);
        assert_eq!(s.backward_pass(), lb);
    }

    #[test]
    fn no_op_for_single_subproblem_variables() {
        let mut s = state_for(&chain([1.0, 0.0, 1.0]), CostAlgebra::MinSum, Averaging::Uniform);
        let before = s.lambda(0, 0);
        s.forward_pass();
        assert_eq!(s.lambda(0, 0), before);
    }

    #[test]
    fn smoothed_mode_is_monotone_and_sandwiched() {
        let alpha = 0.01;
        let mut s = state_for(&chain([1.0, 0.0, 1.0]), CostAlgebra::smoothed(alpha), Averaging::Uniform);
        let report = s.run(&SolverConfig {
            max_passes: 20,
            smoothing: Some(alpha),
            ..SolverConfig::default()
        });
        let smoothed = report.smoothed_bound.unwrap();
        assert!(smoothed <= report.lower_bound + 1e-12);
        // Two subproblems with two solutions each.
        assert!(report.lower_bound - smoothed <= 2.0 * alpha * 2f64.ln() + 1e-9);
        for w in report.trace.windows(2) {
            assert!(w[1].lb >= w[0].lb - 1e-9);
        }
        assert!(s.records().iter().all(|r| r.realized_increase >= -1e-9));
    }

    #[test]
    fn infeasible_subproblem() {
        let inst = IlpInstance::new(
            vec!["x".into()],
            vec![1.0],
            0.0,
            vec![LinearConstraint::new("bad", vec![(0, 1)], Relation::Ge, 2)],
        )
        .unwrap();
        let mut s = state_for(&inst, CostAlgebra::MinSum, Averaging::Uniform);
        let report = s.run(&SolverConfig::default());
        assert!(report.infeasible);
        assert_eq!(report.lower_bound, f64::INFINITY);
        assert!(report.trace.is_empty());
    }

    #[test]
    fn forced_variables_keep_bound_monotone() {
        // x forced to 0 by r1 and shared with r2.
        let inst = IlpInstance::new(
            vec!["x".into(), "y".into()],
            vec![-5.0, 1.0],
            0.0,
            vec![
                LinearConstraint::new("r1", vec![(0, 1), (1, 1)], Relation::Le, 0),
                LinearConstraint::new("r2", vec![(0, 1), (1, -1)], Relation::Le, 1),
            ],
        )
        .unwrap();
        let mut s = state_for(&inst, CostAlgebra::MinSum, Averaging::Uniform);
        let report = s.run(&SolverConfig::default());
        assert!((report.lower_bound - 0.0).abs() < 1e-9);
        assert!(s.max_feasibility_violation() < 1e-9);
        assert!(s.records().iter().all(|r| r.realized_increase >= -1e-9));
    }
}
