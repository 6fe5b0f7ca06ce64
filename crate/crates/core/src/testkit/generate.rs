//! Seeded instance generators for the four benchmark families plus dense
//! random ILPs. Potentials are integers in `[-5, 5]`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{IlpInstance, LinearConstraint, Relation};

/// Upper bound on generated variables.
pub const MAX_GENERATED_VARS: usize = 1 << 21;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, GeneratorError> {
    Err(GeneratorError::InvalidParams(msg.into()))
}

fn check_density(name: &str, d: f64) -> Result<(), GeneratorError> {
    if !(0.0..=1.0).contains(&d) {
        return invalid(format!("{name} must lie in [0, 1], got {d}"));
    }
    Ok(())
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn potential(rng: &mut impl Rng) -> f64 {
    rng.random_range(-5i32..=5) as f64
}

fn nonzero_coefficient(rng: &mut impl Rng) -> i64 {
    let a = rng.random_range(1i64..=3);
    if rng.random_bool(0.5) {
        a
    } else {
        -a
    }
}

fn random_relation(rng: &mut impl Rng) -> Relation {
    [Relation::Le, Relation::Ge, Relation::Eq][rng.random_range(0..3)]
}

/// A row over `support_size` distinct variables of `0..num_vars` with
/// coefficients in `[-3, 3] \ {0}`, a random relation and a right-hand side
/// drawn one beyond the attainable activity range on both sides.
pub fn random_constraint(rng: &mut impl Rng, name: &str, num_vars: usize, support_size: usize) -> LinearConstraint {
    assert!(support_size <= num_vars);
    let mut vars: Vec<usize> = (0..num_vars).collect();
    vars.shuffle(rng);
    vars.truncate(support_size);
    let terms: Vec<(usize, i64)> = vars.into_iter().map(|v| (v, nonzero_coefficient(rng))).collect();
    let lo: i64 = terms.iter().map(|t| t.1.min(0)).sum();
    let hi: i64 = terms.iter().map(|t| t.1.max(0)).sum();
    let rhs = rng.random_range(lo - 1..=hi + 1);
    LinearConstraint::new(name, terms, random_relation(rng), rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomIlpParams {
    pub vars: usize,
    pub cons: usize,
    /// Probability that a variable appears in a row.
    pub density: f64,
    /// Choose right-hand sides so that a hidden random point is feasible.
    pub planted: bool,
}

impl Default for RandomIlpParams {
    fn default() -> Self {
        RandomIlpParams {
            vars: 6,
            cons: 3,
            density: 1.0,
            planted: true,
        }
    }
}

pub fn random_ilp(params: &RandomIlpParams, seed: u64) -> Result<IlpInstance, GeneratorError> {
    if params.vars == 0 || params.vars > MAX_GENERATED_VARS {
        return invalid(format!("vars must be in 1..={MAX_GENERATED_VARS}"));
    }
    check_density("density", params.density)?;
    let mut rng = rng_from_seed(seed);
    let n = params.vars;
    let point: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    let objective: Vec<f64> = (0..n).map(|_| potential(&mut rng)).collect();
    let mut constraints = Vec::with_capacity(params.cons);
    for r in 0..params.cons {
        let mut terms: Vec<(usize, i64)> = (0..n)
            .filter(|_| rng.random_bool(params.density))
            .map(|v| (v, 0))
            .collect();
        if terms.is_empty() {
            terms.push((rng.random_range(0..n), 0));
        }
        for t in &mut terms {
            t.1 = nonzero_coefficient(&mut rng);
        }
        let relation = random_relation(&mut rng);
        let rhs = if params.planted {
            let act: i64 = terms.iter().filter(|t| point[t.0]).map(|t| t.1).sum();
            let slack = rng.random_range(0i64..=2);
            match relation {
                Relation::Le => act + slack,
                Relation::Ge => act - slack,
                Relation::Eq => act,
            }
        } else {
            let lo: i64 = terms.iter().map(|t| t.1.min(0)).sum();
            let hi: i64 = terms.iter().map(|t| t.1.max(0)).sum();
            rng.random_range(lo..=hi)
        };
        constraints.push(LinearConstraint::new(format!("r{r}"), terms, relation, rhs));
    }
    let names = (0..n).map(|i| format!("x{i}")).collect();
    IlpInstance::new(names, objective, 0.0, constraints).map_err(|e| GeneratorError::InvalidParams(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Chain { nodes: usize },
    Grid { rows: usize, cols: usize },
}

impl Topology {
    pub fn num_nodes(self) -> usize {
        match self {
            Topology::Chain { nodes } => nodes,
            Topology::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn edges(self) -> Vec<(usize, usize)> {
        match self {
            Topology::Chain { nodes } => (1..nodes).map(|i| (i - 1, i)).collect(),
            Topology::Grid { rows, cols } => {
                let mut e = Vec::new();
                for r in 0..rows {
                    for c in 0..cols {
                        let v = r * cols + c;
                        if c + 1 < cols {
                            e.push((v, v + 1));
                        }
                        if r + 1 < rows {
                            e.push((v, v + cols));
                        }
                    }
                }
                e
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrfParams {
    pub topology: Topology,
    pub labels: usize,
}

/// Pairwise MRF with uniform label count.
#[derive(Debug, Clone, PartialEq)]
pub struct MrfModel {
    pub labels: usize,
    pub edges: Vec<(usize, usize)>,
    /// `unary[i][a]`
    pub unary: Vec<Vec<f64>>,
    /// `pairwise[e][a * labels + b]`
    pub pairwise: Vec<Vec<f64>>,
}

impl MrfModel {
    pub fn random(params: &MrfParams, seed: u64) -> Result<Self, GeneratorError> {
        let n = params.topology.num_nodes();
        let l = params.labels;
        if n == 0 || l == 0 {
            return invalid("an MRF needs at least one node and one label");
        }
        let edges = params.topology.edges();
        if n * l + edges.len() * l * l > MAX_GENERATED_VARS {
            return invalid("model exceeds the variable cap");
        }
        let mut rng = rng_from_seed(seed);
        let unary = (0..n).map(|_| (0..l).map(|_| potential(&mut rng)).collect()).collect();
        let pairwise = edges
            .iter()
            .map(|_| (0..l * l).map(|_| potential(&mut rng)).collect())
            .collect();
        Ok(MrfModel {
            labels: l,
            edges,
            unary,
            pairwise,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.unary.len()
    }

    pub fn energy(&self, labeling: &[usize]) -> f64 {
        let mut e: f64 = labeling.iter().enumerate().map(|(i, &a)| self.unary[i][a]).sum();
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            e += self.pairwise[k][labeling[i] * self.labels + labeling[j]];
        }
        e
    }

    /// Variable index of `μ_i(a)`.
    pub fn node_var(&self, i: usize, a: usize) -> usize {
        i * self.labels + a
    }

    /// Variable index of `μ_e(a, b)`.
    pub fn edge_var(&self, e: usize, a: usize, b: usize) -> usize {
        self.num_nodes() * self.labels + e * self.labels * self.labels + a * self.labels + b
    }

    /// Local-polytope ILP: node and edge simplex rows plus both families of
    /// marginalization equalities.
    pub fn to_instance(&self) -> IlpInstance {
        let l = self.labels;
        let n = self.num_nodes();
        let mut names = Vec::with_capacity(n * l + self.edges.len() * l * l);
        let mut objective = Vec::with_capacity(names.capacity());
        for i in 0..n {
            for a in 0..l {
                names.push(format!("mu_{i}_{a}"));
                objective.push(self.unary[i][a]);
            }
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            for a in 0..l {
                for b in 0..l {
                    names.push(format!("mu_{i}_{j}_{a}_{b}"));
                    objective.push(self.pairwise[e][a * l + b]);
                }
            }
        }
        let mut constraints = Vec::new();
        for i in 0..n {
            let terms = (0..l).map(|a| (self.node_var(i, a), 1)).collect();
            constraints.push(LinearConstraint::new(format!("node_{i}"), terms, Relation::Eq, 1));
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            let terms = (0..l * l).map(|ab| (self.edge_var(e, ab / l, ab % l), 1)).collect();
            constraints.push(LinearConstraint::new(format!("edge_{i}_{j}"), terms, Relation::Eq, 1));
        }
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            for a in 0..l {
                let mut terms: Vec<(usize, i64)> = (0..l).map(|b| (self.edge_var(e, a, b), 1)).collect();
                terms.push((self.node_var(i, a), -1));
                constraints.push(LinearConstraint::new(format!("marg_{i}_{j}_l{a}"), terms, Relation::Eq, 0));
            }
            for b in 0..l {
                let mut terms: Vec<(usize, i64)> = (0..l).map(|a| (self.edge_var(e, a, b), 1)).collect();
                terms.push((self.node_var(j, b), -1));
                constraints.push(LinearConstraint::new(format!("marg_{i}_{j}_r{b}"), terms, Relation::Eq, 0));
            }
        }
        IlpInstance::new(names, objective, 0.0, constraints).expect("well-formed MRF instance")
    }

    /// Labeling encoded by a feasible point, or `None` if some node does not
    /// select exactly one label.
    pub fn decode(&self, x: &[bool]) -> Option<Vec<usize>> {
        (0..self.num_nodes())
            .map(|i| {
                let mut chosen = (0..self.labels).filter(|&a| x[self.node_var(i, a)]);
                match (chosen.next(), chosen.next()) {
                    (Some(a), None) => Some(a),
                    _ => None,
                }
            })
            .collect()
    }
}

pub fn mrf(params: &MrfParams, seed: u64) -> Result<IlpInstance, GeneratorError> {
    Ok(MrfModel::random(params, seed)?.to_instance())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphMatchingParams {
    pub left: usize,
    pub right: usize,
    /// Probability that a pairwise variable is kept.
    pub density: f64,
}

/// Assignment variables `μ_lr`, row/column `≤ 1` constraints and the two
/// linearization families tying `μ` to pairwise variables `ν_{l l' r r'}`.
/// Pairwise variables exist only for `l ≠ l'` and `r ≠ r'`.
pub fn graph_matching(params: &GraphMatchingParams, seed: u64) -> Result<IlpInstance, GeneratorError> {
    let (nl, nr) = (params.left, params.right);
    if nl == 0 || nr == 0 {
        return invalid("both point sets must be non-empty");
    }
    check_density("density", params.density)?;
    let pairs = nl * nr * nl.saturating_sub(1) * nr.saturating_sub(1);
    if nl * nr + pairs > MAX_GENERATED_VARS {
        return invalid("model exceeds the variable cap");
    }
    let mut rng = rng_from_seed(seed);
    let mut names = Vec::new();
    let mut objective = Vec::new();
    let mu = |l: usize, r: usize| l * nr + r;
    for l in 0..nl {
        for r in 0..nr {
            names.push(format!("mu_{l}_{r}"));
            objective.push(potential(&mut rng));
        }
    }
    // (l, l', r, r', index)
    let mut nu = Vec::new();
    for l in 0..nl {
        for lp in 0..nl {
            for r in 0..nr {
                for rp in 0..nr {
                    if l == lp || r == rp || !rng.random_bool(params.density) {
                        continue;
                    }
                    nu.push((l, lp, r, rp, names.len()));
                    names.push(format!("nu_{l}_{lp}_{r}_{rp}"));
                    objective.push(potential(&mut rng));
                }
            }
        }
    }
    let mut constraints = Vec::new();
    for l in 0..nl {
        let terms = (0..nr).map(|r| (mu(l, r), 1)).collect();
        constraints.push(LinearConstraint::new(format!("row_{l}"), terms, Relation::Le, 1));
    }
    for r in 0..nr {
        let terms = (0..nl).map(|l| (mu(l, r), 1)).collect();
        constraints.push(LinearConstraint::new(format!("col_{r}"), terms, Relation::Le, 1));
    }
    for l in 0..nl {
        for r in 0..nr {
            let mut terms: Vec<(usize, i64)> = vec![(mu(l, r), -1)];
            terms.extend(nu.iter().filter(|t| t.0 == l && t.2 == r).map(|t| (t.4, 1)));
            constraints.push(LinearConstraint::new(format!("lin_out_{l}_{r}"), terms, Relation::Eq, 0));
            let mut terms: Vec<(usize, i64)> = vec![(mu(l, r), -1)];
            terms.extend(nu.iter().filter(|t| t.1 == l && t.3 == r).map(|t| (t.4, 1)));
            constraints.push(LinearConstraint::new(format!("lin_in_{l}_{r}"), terms, Relation::Eq, 0));
        }
    }
    IlpInstance::new(names, objective, 0.0, constraints).map_err(|e| GeneratorError::InvalidParams(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellTrackingParams {
    pub frames: usize,
    pub detections: usize,
    /// Probability that a transition between consecutive frames is offered.
    pub transition_density: f64,
    /// Probability that a division into a pair of next-frame detections is offered.
    pub division_density: f64,
    /// Probability that two neighbouring detections of a frame conflict.
    pub conflict_density: f64,
}

impl Default for CellTrackingParams {
    fn default() -> Self {
        CellTrackingParams {
            frames: 3,
            detections: 3,
            transition_density: 1.0,
            division_density: 0.3,
            conflict_density: 0.3,
        }
    }
}

/// Detections `x`, transitions `y` and divisions `y'` between consecutive
/// frames, with outgoing and incoming flow equalities and conflict rows.
/// Flow rows are emitted only for detections that have at least one
/// outgoing (resp. incoming) option.
pub fn cell_tracking(params: &CellTrackingParams, seed: u64) -> Result<IlpInstance, GeneratorError> {
    let (f, d) = (params.frames, params.detections);
    if f == 0 || d == 0 {
        return invalid("frames and detections must be positive");
    }
    check_density("transition_density", params.transition_density)?;
    check_density("division_density", params.division_density)?;
    check_density("conflict_density", params.conflict_density)?;
    if f * d + f.saturating_sub(1) * d * d * (1 + d) > MAX_GENERATED_VARS {
        return invalid("model exceeds the variable cap");
    }
    let mut rng = rng_from_seed(seed);
    let det = |t: usize, k: usize| t * d + k;
    let mut names = Vec::new();
    let mut objective = Vec::new();
    for t in 0..f {
        for k in 0..d {
            names.push(format!("x_{t}_{k}"));
            objective.push(potential(&mut rng));
        }
    }
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); f * d];
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); f * d];
    for t in 1..f {
        for i in 0..d {
            for j in 0..d {
                if rng.random_bool(params.transition_density) {
                    let v = names.len();
                    names.push(format!("y_{}_{i}_{j}", t - 1));
                    objective.push(potential(&mut rng));
                    outgoing[det(t - 1, i)].push(v);
                    incoming[det(t, j)].push(v);
                }
            }
            for j in 0..d {
                for k in j + 1..d {
                    if rng.random_bool(params.division_density) {
                        let v = names.len();
                        names.push(format!("div_{}_{i}_{j}_{k}", t - 1));
                        objective.push(potential(&mut rng));
                        outgoing[det(t - 1, i)].push(v);
                        incoming[det(t, j)].push(v);
                        incoming[det(t, k)].push(v);
                    }
                }
            }
        }
    }
    let mut constraints = Vec::new();
    for (flow, tag) in [(&outgoing, "out"), (&incoming, "in")] {
        for t in 0..f {
            for k in 0..d {
                let opts = &flow[det(t, k)];
                if opts.is_empty() {
                    continue;
                }
                let mut terms: Vec<(usize, i64)> = vec![(det(t, k), -1)];
                terms.extend(opts.iter().map(|&v| (v, 1)));
                constraints.push(LinearConstraint::new(format!("{tag}_{t}_{k}"), terms, Relation::Eq, 0));
            }
        }
    }
    for t in 0..f {
        for k in 1..d {
            if rng.random_bool(params.conflict_density) {
                let terms = vec![(det(t, k - 1), 1), (det(t, k), 1)];
                constraints.push(LinearConstraint::new(format!("conflict_{t}_{k}"), terms, Relation::Le, 1));
            }
        }
    }
    IlpInstance::new(names, objective, 0.0, constraints).map_err(|e| GeneratorError::InvalidParams(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyParams {
    pub rows: usize,
    pub cols: usize,
    /// Labels are `0..=max_label`.
    pub max_label: usize,
}

/// Grid MRF plus row and column projection equalities whose right-hand
/// sides come from a hidden random labeling.
pub fn tomography(params: &TomographyParams, seed: u64) -> Result<IlpInstance, GeneratorError> {
    if params.max_label == 0 {
        return invalid("max_label must be at least 1");
    }
    let topology = Topology::Grid {
        rows: params.rows,
        cols: params.cols,
    };
    let model = MrfModel::random(
        &MrfParams {
            topology,
            labels: params.max_label + 1,
        },
        seed,
    )?;
    let mut inst = model.to_instance();
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9_7f4a_7c15);
    let hidden: Vec<usize> = (0..model.num_nodes())
        .map(|_| rng.random_range(0..=params.max_label))
        .collect();
    let mut projections: Vec<(String, Vec<usize>)> = Vec::new();
    for r in 0..params.rows {
        projections.push((format!("proj_row_{r}"), (0..params.cols).map(|c| r * params.cols + c).collect()));
    }
    for c in 0..params.cols {
        projections.push((format!("proj_col_{c}"), (0..params.rows).map(|r| r * params.cols + c).collect()));
    }
    for (name, nodes) in projections {
        let b: usize = nodes.iter().map(|&i| hidden[i]).sum();
        let terms = nodes
            .iter()
            .flat_map(|&i| (1..=params.max_label).map(move |a| (i, a)))
            .map(|(i, a)| (model.node_var(i, a), a as i64))
            .collect();
        inst.constraints.push(LinearConstraint::new(name, terms, Relation::Eq, b as i64));
    }
    inst.validate().map_err(|e| GeneratorError::InvalidParams(e.to_string()))?;
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    RandomIlp(RandomIlpParams),
    Mrf(MrfParams),
    GraphMatching(GraphMatchingParams),
    CellTracking(CellTrackingParams),
    Tomography(TomographyParams),
}

pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<IlpInstance, GeneratorError> {
    match spec {
        GeneratorSpec::RandomIlp(p) => random_ilp(p, seed),
        GeneratorSpec::Mrf(p) => mrf(p, seed),
        GeneratorSpec::GraphMatching(p) => graph_matching(p, seed),
        GeneratorSpec::CellTracking(p) => cell_tracking(p, seed),
        GeneratorSpec::Tomography(p) => tomography(p, seed),
    }
}
