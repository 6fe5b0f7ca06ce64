use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bddmp::bdd::{Bdd as CoreBdd, BddBuilder, Checkpoint, Fixation};
use bddmp::dual::{Averaging, SolverConfig};
use bddmp::model::{self, IlpInstance, LinearConstraint, OrderStrategy, Relation};
use bddmp::pipeline::{self, PipelineConfig};
use bddmp::primal::ScoreStrategy;
use bddmp::testkit::{self, GeneratorSpec, Topology};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A 0-1 integer program.
#[pyclass(name = "Instance", module = "pybddmp", frozen)]
struct PyInstance {
    inner: IlpInstance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn from_lp(text: &str) -> PyResult<Self> {
        model::parse_lp(text).map(|inner| PyInstance { inner }).map_err(value_error)
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Self::from_lp(&text)
    }

    fn to_lp(&self) -> String {
        model::write_lp(&self.inner)
    }

    #[getter]
    fn num_vars(&self) -> usize {
        self.inner.num_vars()
    }

    #[getter]
    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    #[getter]
    fn var_names(&self) -> Vec<String> {
        self.inner.var_names.clone()
    }

    #[getter]
    fn constraint_names(&self) -> Vec<String> {
        self.inner.constraints.iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn objective(&self) -> Vec<f64> {
        self.inner.objective.clone()
    }

    fn is_feasible(&self, x: Vec<bool>) -> PyResult<bool> {
        self.check_len(&x)?;
        Ok(self.inner.is_feasible(&x))
    }

    fn objective_value(&self, x: Vec<bool>) -> PyResult<f64> {
        self.check_len(&x)?;
        Ok(self.inner.objective_value(&x))
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(num_vars={}, num_constraints={})",
            self.inner.num_vars(),
            self.inner.num_constraints()
        )
    }
}

impl PyInstance {
    fn check_len(&self, x: &[bool]) -> PyResult<()> {
        if x.len() != self.inner.num_vars() {
            return Err(PyValueError::new_err(format!(
                "expected {} values, got {}",
                self.inner.num_vars(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// Decision diagram of one constraint.
#[pyclass(name = "Bdd", module = "pybddmp")]
struct PyBdd {
    inner: CoreBdd,
    checkpoints: Vec<Checkpoint>,
}

fn parse_relation(s: &str) -> PyResult<Relation> {
    match s {
        "<=" | "=<" => Ok(Relation::Le),
        ">=" | "=>" => Ok(Relation::Ge),
        "=" | "==" => Ok(Relation::Eq),
        _ => Err(PyValueError::new_err(format!("unknown relation `{s}`"))),
    }
}

#[pymethods]
impl PyBdd {
    /// Builds the diagram of `Σ a·x_v rel rhs` from `(v, a)` terms. `order`
    /// is a permutation of `0..num_vars`; identity when omitted.
    #[new]
    #[pyo3(signature = (terms, relation, rhs, num_vars=None, order=None))]
    fn new(
        terms: Vec<(usize, i64)>,
        relation: &str,
        rhs: i64,
        num_vars: Option<usize>,
        order: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let n = num_vars.unwrap_or_else(|| terms.iter().map(|t| t.0 + 1).max().unwrap_or(0));
        let order = order.unwrap_or_else(|| (0..n).collect());
        let mut seen = vec![false; order.len()];
        for &v in &order {
            if v >= order.len() || std::mem::replace(&mut seen[v], true) {
                return Err(PyValueError::new_err("order must be a permutation"));
            }
        }
        if terms.iter().any(|t| t.0 >= order.len()) {
            return Err(PyValueError::new_err("term variable outside the order"));
        }
        let c = LinearConstraint::new("c", terms, parse_relation(relation)?, rhs);
        let inner = BddBuilder::new(&order).build(&c).map_err(value_error)?;
        Ok(PyBdd {
            inner,
            checkpoints: Vec::new(),
        })
    }

    /// The diagram of a named constraint of `instance`.
    #[staticmethod]
    fn from_constraint(instance: &PyInstance, name: &str) -> PyResult<Self> {
        let inst = &instance.inner;
        let k = inst
            .constraint_index(name)
            .ok_or_else(|| PyValueError::new_err(format!("no constraint named `{name}`")))?;
        let order: Vec<usize> = (0..inst.num_vars()).collect();
        let inner = BddBuilder::new(&order).build(&inst.constraints[k]).map_err(value_error)?;
        Ok(PyBdd {
            inner,
            checkpoints: Vec::new(),
        })
    }

    #[getter]
    fn support(&self) -> Vec<usize> {
        self.inner.support().to_vec()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_levels(&self) -> usize {
        self.inner.num_levels()
    }

    fn is_feasible(&self) -> bool {
        self.inner.is_feasible()
    }

    /// Satisfying assignments over the support, in level order.
    fn solutions(&self) -> PyResult<Vec<Vec<bool>>> {
        self.inner.enumerate_solutions().map_err(value_error)
    }

    fn forced_literals(&self) -> Vec<(usize, bool)> {
        self.inner.forced_literals()
    }

    /// Restricts to `x_var = value`; returns whether solutions remain.
    fn fix(&mut self, var: usize, value: bool) -> PyResult<bool> {
        let f = self.inner.fix_variable(var, value).map_err(value_error)?;
        Ok(f == Fixation::Feasible)
    }

    /// Opens a checkpoint and returns its token.
    fn checkpoint(&mut self) -> usize {
        self.checkpoints.push(self.inner.checkpoint());
        self.checkpoints.len() - 1
    }

    /// Undoes all fixations since `token`, discarding later checkpoints.
    fn rollback(&mut self, token: usize) -> PyResult<()> {
        let cp = *self
            .checkpoints
            .get(token)
            .ok_or_else(|| PyValueError::new_err("unknown checkpoint"))?;
        self.inner.rollback(cp).map_err(value_error)?;
        self.checkpoints.truncate(token);
        Ok(())
    }

    #[pyo3(signature = (names=None))]
    fn to_dot(&self, names: Option<Vec<String>>) -> String {
        let names = names.unwrap_or_else(|| {
            let n = self.inner.support().iter().max().map_or(0, |m| m + 1);
            (0..n).map(|i| format!("x{i}")).collect()
        });
        self.inner.to_dot(&names)
    }
}

/// Outcome of a full solve.
#[pyclass(name = "SolveResult", module = "pybddmp", frozen)]
struct PySolveResult {
    #[pyo3(get)]
    lower_bound: f64,
    #[pyo3(get)]
    upper_bound: Option<f64>,
    #[pyo3(get)]
    solution: Option<Vec<bool>>,
    #[pyo3(get)]
    passes: usize,
    #[pyo3(get)]
    termination: String,
    #[pyo3(get)]
    exit_code: i32,
    #[pyo3(get)]
    trace: Vec<(usize, String, f64)>,
    #[pyo3(get)]
    report_json: String,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(termination={:?}, lower_bound={}, upper_bound={:?})",
            self.termination, self.lower_bound, self.upper_bound
        )
    }
}

#[pyfunction]
#[pyo3(signature = (
    instance,
    *,
    max_passes=1000,
    tol=1e-6,
    smoothing=None,
    averaging="uniform",
    order="input",
    primal_order="neg-mm",
    node_budget=None,
    deterministic=false,
    name="instance",
))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    instance: &PyInstance,
    max_passes: usize,
    tol: f64,
    smoothing: Option<f64>,
    averaging: &str,
    order: &str,
    primal_order: &str,
    node_budget: Option<usize>,
    deterministic: bool,
    name: &str,
) -> PyResult<PySolveResult> {
    let config = PipelineConfig {
        solver: SolverConfig {
            max_passes,
            rel_improvement_tol: tol,
            smoothing,
            averaging: match averaging {
                "uniform" => Averaging::Uniform,
                "srmp" => Averaging::Srmp,
                _ => return Err(PyValueError::new_err(format!("unknown averaging `{averaging}`"))),
            },
            order: match order {
                "input" => OrderStrategy::Input,
                "cuthill-mckee" => OrderStrategy::CuthillMckee,
                _ => return Err(PyValueError::new_err(format!("unknown order `{order}`"))),
            },
            verify: false,
            timing: !deterministic,
        },
        primal_order: match primal_order {
            "abs-mm" => ScoreStrategy::AbsMm,
            "neg-mm" => ScoreStrategy::NegMm,
            "reduction" => ScoreStrategy::Reduction,
            _ => return Err(PyValueError::new_err(format!("unknown primal order `{primal_order}`"))),
        },
        node_budget,
        ..PipelineConfig::default()
    };
    let inst = instance.inner.clone();
    let out = py
        .detach(|| pipeline::solve(&inst, name, &config))
        .map_err(value_error)?;
    let report_json = out.report_json();
    let r = out.report;
    Ok(PySolveResult {
        lower_bound: r.lower_bound,
        upper_bound: r.upper_bound,
        solution: out.assignment,
        passes: r.passes,
        termination: r.termination.as_str().to_string(),
        exit_code: r.termination.exit_code(),
        trace: out
            .trace
            .iter()
            .map(|t| (t.pass, t.direction.as_str().to_string(), t.lb))
            .collect(),
        report_json,
    })
}

fn get<'py, T: FromPyObjectOwned<'py>>(params: Option<&Bound<'py, PyDict>>, key: &str, default: T) -> PyResult<T> {
    match params.map(|p| p.get_item(key)).transpose()?.flatten() {
        Some(v) => v.extract().map_err(Into::into),
        None => Ok(default),
    }
}

/// Generates an instance of `kind` (`random_ilp`, `mrf`, `graph_matching`,
/// `cell_tracking`, `tomography`) with keyword parameters.
#[pyfunction]
#[pyo3(signature = (kind, seed=0, **params))]
fn generate(kind: &str, seed: u64, params: Option<&Bound<'_, PyDict>>) -> PyResult<PyInstance> {
    let spec = match kind {
        "random_ilp" => GeneratorSpec::RandomIlp(testkit::RandomIlpParams {
            vars: get(params, "vars", 6)?,
            cons: get(params, "cons", 3)?,
            density: get(params, "density", 1.0)?,
            planted: get(params, "planted", true)?,
        }),
        "mrf" => {
            let rows: Option<usize> = get(params, "rows", None)?;
            let cols: Option<usize> = get(params, "cols", None)?;
            let topology = match (rows, cols) {
                (Some(rows), Some(cols)) => Topology::Grid { rows, cols },
                _ => Topology::Chain {
                    nodes: get(params, "nodes", 3)?,
                },
            };
            GeneratorSpec::Mrf(testkit::MrfParams {
                topology,
                labels: get(params, "labels", 2)?,
            })
        }
        "graph_matching" => GeneratorSpec::GraphMatching(testkit::GraphMatchingParams {
            left: get(params, "left", 3)?,
            right: get(params, "right", 3)?,
            density: get(params, "density", 1.0)?,
        }),
        "cell_tracking" => {
            let d = testkit::CellTrackingParams::default();
            GeneratorSpec::CellTracking(testkit::CellTrackingParams {
                frames: get(params, "frames", d.frames)?,
                detections: get(params, "detections", d.detections)?,
                transition_density: get(params, "transition_density", d.transition_density)?,
                division_density: get(params, "division_density", d.division_density)?,
                conflict_density: get(params, "conflict_density", d.conflict_density)?,
            })
        }
        "tomography" => GeneratorSpec::Tomography(testkit::TomographyParams {
            rows: get(params, "rows", 3)?,
            cols: get(params, "cols", 3)?,
            max_label: get(params, "max_label", 2)?,
        }),
        _ => return Err(PyValueError::new_err(format!("unknown generator `{kind}`"))),
    };
    testkit::generate(&spec, seed)
        .map(|inner| PyInstance { inner })
        .map_err(value_error)
}

/// Exhaustive optimum: `(value, assignment)`, or `(None, None)` if infeasible.
#[pyfunction]
fn brute_force(instance: &PyInstance) -> PyResult<(Option<f64>, Option<Vec<bool>>)> {
    let r = testkit::brute_force_solve(&instance.inner).map_err(value_error)?;
    Ok((r.optimum, r.assignment))
}

#[pyfunction]
fn parse_lp(text: &str) -> PyResult<PyInstance> {
    PyInstance::from_lp(text)
}

#[pymodule]
fn pybddmp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyBdd>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(parse_lp, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force, m)?)?;
    Ok(())
}
