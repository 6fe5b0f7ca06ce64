//! 0-1 integer linear programs, their row decomposition and variable orders.

mod lp;
mod order;

pub use lp::{parse_lp, write_lp, ParseError, ParseErrorKind};
pub use order::{bandwidth, order_variables, OrderStrategy};

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Largest admissible absolute constraint coefficient.
pub const MAX_COEFFICIENT: i64 = 1 << 20;
/// Largest admissible absolute right-hand side.
pub const MAX_RHS: i64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

impl Relation {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Relation::Le => lhs <= rhs,
            Relation::Ge => lhs >= rhs,
            Relation::Eq => lhs == rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// One row `Σ a_k x_k (<=|>=|=) rhs` with integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
}

impl LinearConstraint {
    pub fn new(
        name: impl Into<String>,
        terms: Vec<(usize, i64)>,
        relation: Relation,
        rhs: i64,
    ) -> Self {
        LinearConstraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        }
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.iter().map(|&(v, _)| v)
    }

    pub fn coefficient(&self, var: usize) -> Option<i64> {
        self.terms.iter().find(|&&(v, _)| v == var).map(|&(_, a)| a)
    }

    /// Evaluates the row on a full assignment indexed by global variable.
    pub fn is_satisfied(&self, assignment: &[bool]) -> bool {
        let lhs: i64 = self
            .terms
            .iter()
            .filter(|&&(v, _)| assignment[v])
            .map(|&(_, a)| a)
            .sum();
        self.relation.holds(lhs, self.rhs)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("constraint `{constraint}` references unknown variable index {var}")]
    UnknownVariable { constraint: String, var: usize },
    #[error("constraint `{constraint}` mentions variable `{var}` more than once")]
    RepeatedTerm { constraint: String, var: String },
    #[error("constraint `{0}` has a zero coefficient")]
    ZeroCoefficient(String),
    #[error("constraint `{constraint}`: {what} {value} exceeds the admissible magnitude")]
    CoefficientRange {
        constraint: String,
        what: &'static str,
        value: i64,
    },
    #[error("objective has {got} entries for {expected} variables")]
    ObjectiveLength { expected: usize, got: usize },
}

/// `min c^T x + offset` over binary `x` subject to linear rows.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpInstance {
    pub var_names: Vec<String>,
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    pub constraints: Vec<LinearConstraint>,
}

impl IlpInstance {
    pub fn new(
        var_names: Vec<String>,
        objective: Vec<f64>,
        objective_offset: f64,
        constraints: Vec<LinearConstraint>,
    ) -> Result<Self, ModelError> {
        let instance = IlpInstance {
            var_names,
            objective,
            objective_offset,
            constraints,
        };
        instance.validate()?;
        Ok(instance)
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(ModelError::ObjectiveLength {
                expected: n,
                got: self.objective.len(),
            });
        }
        let mut seen = HashMap::with_capacity(n);
        for (i, name) in self.var_names.iter().enumerate() {
            if seen.insert(name.as_str(), i).is_some() {
                return Err(ModelError::DuplicateVariable(name.clone()));
            }
        }
        let mut mark = vec![usize::MAX; n];
        for (j, c) in self.constraints.iter().enumerate() {
            if c.rhs.abs() > MAX_RHS {
                return Err(ModelError::CoefficientRange {
                    constraint: c.name.clone(),
                    what: "right-hand side",
                    value: c.rhs,
                });
            }
            for &(v, a) in &c.terms {
                if v >= n {
                    return Err(ModelError::UnknownVariable {
                        constraint: c.name.clone(),
                        var: v,
                    });
                }
                if a == 0 {
                    return Err(ModelError::ZeroCoefficient(c.name.clone()));
                }
                if a.abs() > MAX_COEFFICIENT {
                    return Err(ModelError::CoefficientRange {
                        constraint: c.name.clone(),
                        what: "coefficient",
                        value: a,
                    });
                }
                if mark[v] == j {
                    return Err(ModelError::RepeatedTerm {
                        constraint: c.name.clone(),
                        var: self.var_names[v].clone(),
                    });
                }
                mark[v] = j;
            }
        }
        Ok(())
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.var_names.iter().position(|n| n == name)
    }

    pub fn constraint_index(&self, name: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.name == name)
    }

    pub fn objective_value(&self, assignment: &[bool]) -> f64 {
        self.objective
            .iter()
            .zip(assignment)
            .filter(|(_, &x)| x)
            .map(|(&c, _)| c)
            .sum::<f64>()
            + self.objective_offset
    }

    pub fn is_feasible(&self, assignment: &[bool]) -> bool {
        assignment.len() == self.num_vars()
            && self.constraints.iter().all(|c| c.is_satisfied(assignment))
    }
}

/// Row-wise split of an instance: one subproblem per constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    /// `I_j`, sorted by position in `order`.
    pub subproblem_vars: Vec<Vec<usize>>,
    /// `J_i`, ascending subproblem index.
    pub var_subproblems: Vec<Vec<usize>>,
    pub order: Vec<usize>,
    /// Inverse of `order`.
    pub position: Vec<usize>,
}

impl Decomposition {
    pub fn num_subproblems(&self) -> usize {
        self.subproblem_vars.len()
    }

    pub fn is_free(&self, var: usize) -> bool {
        self.var_subproblems[var].is_empty()
    }

    pub fn free_vars(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.var_subproblems.len()).filter(|&i| self.is_free(i))
    }

    /// Level of `var` inside subproblem `j`, if it belongs to it.
    pub fn level_of(&self, j: usize, var: usize) -> Option<usize> {
        let pos = self.position[var];
        self.subproblem_vars[j]
            .binary_search_by_key(&pos, |&v| self.position[v])
            .ok()
    }
}

/// Splits the instance into one subproblem per row, ordering each support by `order`.
pub fn decompose(instance: &IlpInstance, order: &[usize]) -> Decomposition {
    let n = instance.num_vars();
    assert_eq!(order.len(), n, "order must be a permutation of the variables");
    let mut position = vec![usize::MAX; n];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    let mut var_subproblems = vec![Vec::new(); n];
    let subproblem_vars = instance
        .constraints
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut vars: Vec<usize> = c.support().collect();
            vars.sort_by_key(|&v| position[v]);
            for &v in &vars {
                var_subproblems[v].push(j);
            }
            vars
        })
        .collect();
    Decomposition {
        subproblem_vars,
        var_subproblems,
        order: order.to_vec(),
        position,
    }
}

/// Assignment for variables that appear in no constraint.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FreeAssignment {
    pub fixed: Vec<(usize, bool)>,
    pub contribution: f64,
}

/// Assigns every unconstrained variable its cheaper value (ties to 0).
pub fn presolve_free(instance: &IlpInstance, decomposition: &Decomposition) -> FreeAssignment {
    let mut out = FreeAssignment::default();
    for i in decomposition.free_vars() {
        let c = instance.objective[i];
        let value = c < 0.0;
        out.fixed.push((i, value));
        if value {
            out.contribution += c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> IlpInstance {
        IlpInstance::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
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
    fn incidence_of_chain() {
        let inst = chain();
        let d = decompose(&inst, &[0, 1, 2]);
        assert_eq!(d.var_subproblems, vec![vec![0], vec![0, 1], vec![1]]);
        assert_eq!(d.subproblem_vars, vec![vec![0, 1], vec![1, 2]]);
        assert_eq!(d.level_of(1, 2), Some(1));
        assert_eq!(d.level_of(0, 2), None);
    }

    #[test]
    fn supports_follow_order() {
        let inst = chain();
        let d = decompose(&inst, &[2, 1, 0]);
        assert_eq!(d.subproblem_vars, vec![vec![1, 0], vec![2, 1]]);
        assert_eq!(d.level_of(0, 0), Some(1));
    }

    #[test]
    fn zero_constraints_means_all_free() {
        let inst = IlpInstance::new(vec!["x".into(), "y".into()], vec![-2.0, 0.0], 0.0, vec![])
            .unwrap();
        let d = decompose(&inst, &[0, 1]);
        assert_eq!(d.num_subproblems(), 0);
        assert_eq!(d.free_vars().count(), 2);
        let free = presolve_free(&inst, &d);
        assert_eq!(free.fixed, vec![(0, true), (1, false)]);
        assert_eq!(free.contribution, -2.0);
    }

    #[test]
    fn presolve_without_free_vars_is_empty() {
        let inst = chain();
        let d = decompose(&inst, &[0, 1, 2]);
        assert_eq!(presolve_free(&inst, &d), FreeAssignment::default());
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let names = vec!["x".to_string(), "y".to_string()];
        let err = IlpInstance::new(
            names.clone(),
            vec![0.0; 2],
            0.0,
            vec![LinearConstraint::new("r", vec![(0, 1), (0, 2)], Relation::Le, 1)],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::RepeatedTerm { .. }));
        let err = IlpInstance::new(
            names.clone(),
            vec![0.0; 2],
            0.0,
            vec![LinearConstraint::new("r", vec![(0, MAX_COEFFICIENT + 1)], Relation::Le, 1)],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::CoefficientRange { .. }));
        let err = IlpInstance::new(
            vec!["x".into(), "x".into()],
            vec![0.0; 2],
            0.0,
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::DuplicateVariable("x".into()));
    }
}
