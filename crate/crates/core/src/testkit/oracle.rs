//! Exhaustive-enumeration oracles.

use thiserror::Error;

use crate::model::{IlpInstance, LinearConstraint};

pub const ORACLE_MAX_VARS: usize = 22;
pub const MARGINAL_MAX_VARS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{vars} variables exceed the enumeration cap of {cap}")]
    TooLarge { vars: usize, cap: usize },
    #[error("lambda has {got} entries, expected {expected}")]
    LambdaLength { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Minimum objective including the offset; `None` if infeasible.
    pub optimum: Option<f64>,
    pub assignment: Option<Vec<bool>>,
    pub num_feasible: u64,
}

impl OracleResult {
    pub fn is_feasible(&self) -> bool {
        self.optimum.is_some()
    }
}

/// Minimises over all `2^n` assignments, visiting them in Gray-code order
/// with incremental row activities.
pub fn brute_force_solve(instance: &IlpInstance) -> Result<OracleResult, OracleError> {
    let n = instance.num_vars();
    if n > ORACLE_MAX_VARS {
        return Err(OracleError::TooLarge { vars: n, cap: ORACLE_MAX_VARS });
    }
    let mut occurrences: Vec<Vec<(usize, i64)>> = vec![Vec::new(); n];
    for (r, c) in instance.constraints.iter().enumerate() {
        for &(v, a) in &c.terms {
            occurrences[v].push((r, a));
        }
    }
    let satisfied = |r: usize, act: i64| {
        let c = &instance.constraints[r];
        c.relation.holds(act, c.rhs)
    };
    let mut x = vec![false; n];
    let mut activity = vec![0i64; instance.num_constraints()];
    let mut violated = (0..activity.len()).filter(|&r| !satisfied(r, 0)).count();
    let mut cost = 0.0;

    let mut best: Option<(f64, Vec<bool>)> = None;
    let mut num_feasible = 0u64;
    let mut consider = |x: &[bool], cost: f64, violated: usize| {
        if violated == 0 {
            num_feasible += 1;
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, x.to_vec()));
            }
        }
    };
    consider(&x, cost, violated);
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        x[i] = !x[i];
        let sign = if x[i] { 1 } else { -1 };
        cost += sign as f64 * instance.objective[i];
        for &(r, a) in &occurrences[i] {
            let before = satisfied(r, activity[r]);
            activity[r] += sign * a;
            match (before, satisfied(r, activity[r])) {
                (true, false) => violated += 1,
                (false, true) => violated -= 1,
                _ => {}
            }
        }
        consider(&x, cost, violated);
    }
    Ok(match best {
        Some((_, assignment)) => OracleResult {
            optimum: Some(instance.objective_value(&assignment)),
            assignment: Some(assignment),
            num_feasible,
        },
        None => OracleResult {
            optimum: None,
            assignment: None,
            num_feasible,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalOracle {
    /// `(m⁰, m¹)` per level; `+∞` when the clamped set is empty.
    pub min_marginals: Vec<(f64, f64)>,
    /// `(m^{α,0}, m^{α,1})` per level when `α` was given.
    pub smoothed: Option<Vec<(f64, f64)>>,
    /// Number of solutions with `x = 0` / `x = 1` per level.
    pub counts: Vec<(u64, u64)>,
    pub num_solutions: u64,
    pub min_cost: f64,
}

/// Clamped minima, soft-minima and counts of `Σ_l λ_l x_l` over the
/// satisfying assignments of `constraint`. `levels` lists the support
/// variables in level order; `lambdas` is indexed by level.
pub fn brute_force_marginals(
    constraint: &LinearConstraint,
    levels: &[usize],
    lambdas: &[f64],
    alpha: Option<f64>,
) -> Result<MarginalOracle, OracleError> {
    let k = levels.len();
    if k > MARGINAL_MAX_VARS {
        return Err(OracleError::TooLarge { vars: k, cap: MARGINAL_MAX_VARS });
    }
    if lambdas.len() != k {
        return Err(OracleError::LambdaLength { got: lambdas.len(), expected: k });
    }
    let coeffs: Vec<i64> = levels.iter().map(|&v| constraint.coefficient(v).unwrap_or(0)).collect();
    let mut solutions: Vec<(u32, f64)> = Vec::new();
    for mask in 0u32..(1u32 << k) {
        let mut act = 0i64;
        let mut cost = 0.0;
        for l in 0..k {
            if mask >> l & 1 == 1 {
                act += coeffs[l];
                cost += lambdas[l];
            }
        }
        if constraint.relation.holds(act, constraint.rhs) {
            solutions.push((mask, cost));
        }
    }

    let mut min_marginals = vec![(f64::INFINITY, f64::INFINITY); k];
    let mut counts = vec![(0u64, 0u64); k];
    for &(mask, cost) in &solutions {
        for l in 0..k {
            if mask >> l & 1 == 1 {
                min_marginals[l].1 = min_marginals[l].1.min(cost);
                counts[l].1 += 1;
            } else {
                min_marginals[l].0 = min_marginals[l].0.min(cost);
                counts[l].0 += 1;
            }
        }
    }
    let smoothed = alpha.map(|a| {
        (0..k)
            .map(|l| {
                let side = |bit: u32| soft_min(solutions.iter().filter(|s| s.0 >> l & 1 == bit).map(|s| s.1), a);
                (side(0), side(1))
            })
            .collect()
    });
    Ok(MarginalOracle {
        min_marginals,
        smoothed,
        counts,
        num_solutions: solutions.len() as u64,
        min_cost: solutions.iter().map(|s| s.1).fold(f64::INFINITY, f64::min),
    })
}

/// `−α·log Σ exp(−c/α)`, shifted by the minimum for stability.
pub fn soft_min(costs: impl Iterator<Item = f64> + Clone, alpha: f64) -> f64 {
    let min = costs.clone().fold(f64::INFINITY, f64::min);
    if min == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = costs.map(|c| (-(c - min) / alpha).exp()).sum();
    min - alpha * sum.ln()
}

/// Number of satisfying assignments of each constraint over its own support.
pub fn subproblem_counts(instance: &IlpInstance) -> Result<Vec<u64>, OracleError> {
    instance
        .constraints
        .iter()
        .map(|c| {
            let support: Vec<usize> = c.support().collect();
            let zeros = vec![0.0; support.len()];
            brute_force_marginals(c, &support, &zeros, None).map(|m| m.num_solutions)
        })
        .collect()
}
