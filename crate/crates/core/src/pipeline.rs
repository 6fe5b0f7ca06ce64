//! End-to-end solve: order, decompose, build BDDs, run the dual, search a
//! primal solution and collect a report.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::algebra::CostAlgebra;
use crate::bdd::{BddBuilder, BddError, DEFAULT_STATE_BUDGET};
use crate::dual::{DualState, SolverConfig, TraceEntry};
use crate::model::{decompose, order_variables, presolve_free, IlpInstance, ParseError};
use crate::primal::{compute_scores, primal_search, PrimalOutcome, ScoreStrategy};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Bdd(#[from] BddError),
    #[error("no constraint named `{0}`")]
    UnknownConstraint(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    pub primal_order: ScoreStrategy,
    /// Propagation budget for the primal search; `None` means `10·n`.
    pub node_budget: Option<usize>,
    pub state_budget: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            solver: SolverConfig::default(),
            primal_order: ScoreStrategy::NegMm,
            node_budget: None,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let tol = self.solver.rel_improvement_tol;
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(PipelineError::InvalidOption(format!("tolerance must be positive, got {tol}")));
        }
        if let Some(a) = self.solver.smoothing {
            if !(a > 0.0 && a.is_finite()) {
                return Err(PipelineError::InvalidOption(format!("smoothing must be positive, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Solved,
    Infeasible,
    NoPrimal,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Solved => "solved",
            Termination::Infeasible => "infeasible",
            Termination::NoPrimal => "no_primal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Termination::Solved => 0,
            Termination::Infeasible => 2,
            Termination::NoPrimal => 3,
        }
    }
}

fn finite_or_string<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub instance: String,
    pub num_vars: usize,
    pub num_constraints: usize,
    #[serde(serialize_with = "finite_or_string")]
    pub lower_bound: f64,
    pub smoothed_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub solution: Option<BTreeMap<String, u8>>,
    pub passes: usize,
    pub converged: bool,
    pub bdd_nodes: usize,
    pub primal_nodes: usize,
    pub build_time_ms: f64,
    pub dual_time_ms: f64,
    pub primal_time_ms: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceLine {
    pub pass: usize,
    pub direction: crate::dual::Direction,
    #[serde(serialize_with = "finite_or_string")]
    pub lb: f64,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<TraceLine>,
    pub assignment: Option<Vec<bool>>,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(&self.report).expect("report serializes")
    }

    /// One JSON object per line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.trace {
            out.push_str(&serde_json::to_string(line).expect("trace serializes"));
            out.push('\n');
        }
        out
    }
}

fn millis(start: Instant, on: bool) -> f64 {
    if on {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

pub fn solve(instance: &IlpInstance, name: &str, config: &PipelineConfig) -> Result<RunOutput, PipelineError> {
    config.validate()?;
    let timing = config.solver.timing;
    let n = instance.num_vars();

    let start = Instant::now();
    let order = order_variables(instance, config.solver.order);
    let decomposition = decompose(instance, &order);
    let free = presolve_free(instance, &decomposition);
    let constant = instance.objective_offset + free.contribution;
    let builder = BddBuilder::new(&order).with_state_budget(config.state_budget);
    let bdds = instance
        .constraints
        .iter()
        .map(|c| builder.build(c))
        .collect::<Result<Vec<_>, _>>()?;
    let bdd_nodes = bdds.iter().map(|b| b.num_nodes()).sum();
    let build_time_ms = millis(start, timing);

    let start = Instant::now();
    let algebra = match config.solver.smoothing {
        Some(alpha) => CostAlgebra::smoothed(alpha),
        None => CostAlgebra::MinSum,
    };
    let mut state = DualState::new(
        decomposition.clone(),
        bdds,
        &instance.objective,
        algebra,
        config.solver.averaging,
    )
    .with_verification(config.solver.verify);
    let dual = state.run(&config.solver);
    let dual_time_ms = millis(start, timing);
    let trace = dual
        .trace
        .iter()
        .map(|t: &TraceEntry| TraceLine {
            pass: t.pass,
            direction: t.direction,
            lb: t.lb + constant,
            time_ms: t.time_ms,
        })
        .collect();

    let mut report = RunReport {
        instance: name.to_string(),
        num_vars: n,
        num_constraints: instance.num_constraints(),
        lower_bound: dual.lower_bound + constant,
        smoothed_bound: dual.smoothed_bound.map(|s| s + constant),
        upper_bound: None,
        solution: None,
        passes: dual.passes,
        converged: dual.converged,
        bdd_nodes,
        primal_nodes: 0,
        build_time_ms,
        dual_time_ms,
        primal_time_ms: 0.0,
        termination: Termination::Infeasible,
    };
    if dual.infeasible {
        return Ok(RunOutput {
            report,
            trace,
            assignment: None,
        });
    }

    let start = Instant::now();
    let scores = compute_scores(&state, config.primal_order);
    let budget = config.node_budget.unwrap_or(10 * n.max(1));
    let primal = primal_search(instance, &decomposition, state.bdds_mut(), &scores, Some(budget));
    report.primal_time_ms = millis(start, timing);
    report.primal_nodes = primal.nodes;
    let assignment = match primal.outcome {
        PrimalOutcome::Solution { assignment, objective } => {
            report.upper_bound = Some(objective);
            report.solution = Some(
                instance
                    .var_names
                    .iter()
                    .zip(&assignment)
                    .map(|(v, &x)| (v.clone(), x as u8))
                    .collect(),
            );
            report.termination = Termination::Solved;
            Some(assignment)
        }
        PrimalOutcome::Infeasible => {
            // The search is exhaustive, so this proves infeasibility.
            report.termination = Termination::Infeasible;
            report.lower_bound = f64::INFINITY;
            None
        }
        PrimalOutcome::BudgetExhausted => {
            report.termination = Termination::NoPrimal;
            None
        }
    };
    Ok(RunOutput {
        report,
        trace,
        assignment,
    })
}

pub fn read_instance(path: &std::path::Path) -> Result<IlpInstance, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    crate::model::parse_lp(&text).map_err(|source| PipelineError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// DOT rendering of the named constraint's BDD under the configured order.
pub fn dump_bdd(instance: &IlpInstance, constraint: &str, config: &PipelineConfig) -> Result<String, PipelineError> {
    let k = instance
        .constraint_index(constraint)
        .ok_or_else(|| PipelineError::UnknownConstraint(constraint.to_string()))?;
    let order = order_variables(instance, config.solver.order);
    let bdd = BddBuilder::new(&order)
        .with_state_budget(config.state_budget)
        .build(&instance.constraints[k])?;
    Ok(bdd.to_dot(&instance.var_names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_lp;

    const SIMPLEX: &str = "Minimize\n obj: x1 + 2 x3 + 3 x7\nSubject To\n s: x1 + x3 + x7 = 1\nBinary\n x1 x3 x7\nEnd\n";

    #[test]
    fn simplex_is_solved_exactly() {
        let inst = parse_lp(SIMPLEX).unwrap();
        let out = solve(&inst, "simplex", &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.lower_bound, 1.0);
        assert_eq!(out.report.upper_bound, Some(1.0));
        assert_eq!(out.report.termination.exit_code(), 0);
        assert_eq!(out.report.solution.as_ref().unwrap()["x1"], 1);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let inst = parse_lp("Minimize\n x + y\nSubject To\n a: x + y >= 1\n b: x + y <= 0\nBinary\n x y\nEnd\n").unwrap();
        let out = solve(&inst, "bad", &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.termination, Termination::Infeasible);
        assert!(out.report_json().contains("\"lower_bound\": \"inf\""));
    }

    #[test]
    fn zero_passes_report_initial_bound() {
        let inst = parse_lp(SIMPLEX).unwrap();
        let mut config = PipelineConfig::default();
        config.solver.max_passes = 0;
        let out = solve(&inst, "simplex", &config).unwrap();
        assert_eq!(out.report.passes, 0);
        assert_eq!(out.report.lower_bound, 1.0);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn offset_and_free_variables_enter_both_bounds() {
        let inst = parse_lp("Minimize\n x + 2 y - 3 z + 4\nSubject To\n a: x + y >= 1\nBinary\n x y z\nEnd\n").unwrap();
        let out = solve(&inst, "f", &PipelineConfig::default()).unwrap();
        assert_eq!(out.report.lower_bound, 2.0);
        assert_eq!(out.report.upper_bound, Some(2.0));
    }

    #[test]
    fn dump_unknown_constraint() {
        let inst = parse_lp(SIMPLEX).unwrap();
        assert!(dump_bdd(&inst, "s", &PipelineConfig::default()).unwrap().starts_with("digraph"));
        assert!(matches!(
            dump_bdd(&inst, "nope", &PipelineConfig::default()),
            Err(PipelineError::UnknownConstraint(_))
        ));
    }
}
