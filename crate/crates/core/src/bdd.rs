//! Reduced ordered BDDs for single linear constraints.
//!
//! Every root-to-terminal path visits the support variables consecutively, so
//! a node may have both arcs pointing to the same child. Nodes are stored
//! level by level; arcs from level `l` lead to level `l + 1` or to a terminal,
//! and only the last level may point to [`TRUE`].
//!
//! Variable fixations are destructive but journaled: while a checkpoint is
//! open every arc redirection and node removal is recorded and can be undone
//! with [`Bdd::rollback`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use thiserror::Error;

use crate::model::{LinearConstraint, Relation};

pub type NodeId = u32;

/// The rejecting terminal.
pub const FALSE: NodeId = u32::MAX;
/// The accepting terminal.
pub const TRUE: NodeId = u32::MAX - 1;

/// Default cap on distinct construction states per level.
pub const DEFAULT_STATE_BUDGET: usize = 1 << 22;
/// Default cap on the support size accepted by [`Bdd::enumerate_solutions`].
pub const DEFAULT_ENUMERATION_CAP: usize = 25;

#[inline]
pub fn is_terminal(id: NodeId) -> bool {
    id >= TRUE
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BddError {
    #[error(
        "constraint `{constraint}` needs {states} states at level {level} (budget {budget}); \
         it has to be split before it can be compiled"
    )]
    StateBudget {
        constraint: String,
        level: usize,
        states: usize,
        budget: usize,
    },
    #[error("support of {support} variables exceeds the enumeration cap {cap}")]
    EnumerationCap { support: usize, cap: usize },
    #[error("variable {0} is not in the support of this BDD")]
    NotInSupport(usize),
    #[error("unknown or already released checkpoint")]
    UnknownCheckpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub level: u32,
    pub lo: NodeId,
    pub hi: NodeId,
}

impl Node {
    #[inline]
    pub fn child(&self, value: bool) -> NodeId {
        if value {
            self.hi
        } else {
            self.lo
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JournalEntry {
    Redirect {
        node: NodeId,
        hi: bool,
        previous: NodeId,
    },
    Deactivate {
        node: NodeId,
    },
}

/// Handle to a journal position returned by [`Bdd::checkpoint`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    depth: usize,
    journal_len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixation {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct Bdd {
    name: String,
    support: Vec<usize>,
    nodes: Vec<Node>,
    level_start: Vec<u32>,
    root: NodeId,
    alive: Vec<bool>,
    in_degree: Vec<u32>,
    true_in_degree: u32,
    pred_start: Vec<u32>,
    preds: Vec<NodeId>,
    journal: Vec<JournalEntry>,
    checkpoints: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum State {
    Free,
    Sum(i128),
}

/// Compiles constraints under a fixed global variable order.
#[derive(Debug, Clone)]
pub struct BddBuilder {
    position: Vec<usize>,
    state_budget: usize,
}

impl BddBuilder {
    /// `order[p]` is the variable at position `p`.
    pub fn new(order: &[usize]) -> Self {
        let mut position = vec![usize::MAX; order.len()];
        for (p, &v) in order.iter().enumerate() {
            position[v] = p;
        }
        BddBuilder {
            position,
            state_budget: DEFAULT_STATE_BUDGET,
        }
    }

    pub fn with_state_budget(mut self, budget: usize) -> Self {
        self.state_budget = budget;
        self
    }

    pub fn build(&self, constraint: &LinearConstraint) -> Result<Bdd, BddError> {
        let mut terms: Vec<(usize, i64)> = constraint
            .terms
            .iter()
            .copied()
            .filter(|&(_, a)| a != 0)
            .collect();
        terms.sort_by_key(|&(v, _)| self.position[v]);
        let support: Vec<usize> = terms.iter().map(|&(v, _)| v).collect();
        let coefs: Vec<i128> = terms.iter().map(|&(_, a)| a as i128).collect();
        let k = coefs.len();

        let rhs = constraint.rhs as i128;
        let (lower, upper) = match constraint.relation {
            Relation::Le => (i128::MIN / 4, rhs),
            Relation::Ge => (rhs, i128::MAX / 4),
            Relation::Eq => (rhs, rhs),
        };
        let mut min_tail = vec![0i128; k + 1];
        let mut max_tail = vec![0i128; k + 1];
        for l in (0..k).rev() {
            min_tail[l] = min_tail[l + 1] + coefs[l].min(0);
            max_tail[l] = max_tail[l + 1] + coefs[l].max(0);
        }
        // None = no completion satisfies the row.
        let classify = |level: usize, sum: i128| -> Option<State> {
            if sum + max_tail[level] < lower || sum + min_tail[level] > upper {
                None
            } else if sum + min_tail[level] >= lower && sum + max_tail[level] <= upper {
                Some(State::Free)
            } else {
                Some(State::Sum(sum))
            }
        };

        let Some(root_state) = classify(0, 0) else {
            return Ok(Bdd::empty(constraint.name.clone(), support));
        };
        if k == 0 {
            return Ok(Bdd::assemble(
                constraint.name.clone(),
                support,
                Vec::new(),
                TRUE,
            ));
        }

        // Top-down expansion of reachable residual states.
        let mut levels: Vec<Vec<State>> = vec![vec![root_state]];
        let mut arcs: Vec<Vec<(NodeId, NodeId)>> = Vec::with_capacity(k);
        for l in 0..k {
            let mut next: Vec<State> = Vec::new();
            let mut index: HashMap<State, NodeId> = HashMap::new();
            let mut level_arcs = Vec::with_capacity(levels[l].len());
            for &state in &levels[l] {
                let mut child = |value: bool| -> NodeId {
                    let sum = match state {
                        // A free state stays free whatever is chosen.
                        State::Free => return if l + 1 == k { TRUE } else { free_child(&mut next, &mut index) },
                        State::Sum(s) => s + if value { coefs[l] } else { 0 },
                    };
                    match classify(l + 1, sum) {
                        None => FALSE,
                        Some(_) if l + 1 == k => TRUE,
                        Some(s) => *index.entry(s).or_insert_with(|| {
                            next.push(s);
                            (next.len() - 1) as NodeId
                        }),
                    }
                };
                let lo = child(false);
                let hi = child(true);
                level_arcs.push((lo, hi));
            }
            if next.len() > self.state_budget {
                return Err(BddError::StateBudget {
                    constraint: constraint.name.clone(),
                    level: l + 1,
                    states: next.len(),
                    budget: self.state_budget,
                });
            }
            arcs.push(level_arcs);
            if l + 1 < k {
                levels.push(next);
            }
        }

        // Bottom-up: drop dead ends and merge isomorphic nodes. `canon[l][u]`
        // is the local index of state `u` in the reduced level `l`, or FALSE.
        let mut canon: Vec<Vec<NodeId>> = vec![Vec::new(); k];
        let mut reduced: Vec<Vec<(NodeId, NodeId)>> = vec![Vec::new(); k];
        for l in (0..k).rev() {
            let mut unique: HashMap<(NodeId, NodeId), NodeId> = HashMap::new();
            let mut map = Vec::with_capacity(arcs[l].len());
            for &(lo, hi) in &arcs[l] {
                let resolve = |c: NodeId| -> NodeId {
                    if is_terminal(c) {
                        c
                    } else {
                        canon[l + 1][c as usize]
                    }
                };
                let (lo, hi) = (resolve(lo), resolve(hi));
                if lo == FALSE && hi == FALSE {
                    map.push(FALSE);
                    continue;
                }
                let id = *unique.entry((lo, hi)).or_insert_with(|| {
                    reduced[l].push((lo, hi));
                    (reduced[l].len() - 1) as NodeId
                });
                map.push(id);
            }
            canon[l] = map;
        }
        if canon[0][0] == FALSE {
            return Ok(Bdd::empty(constraint.name.clone(), support));
        }

        // Reduced nodes are all reachable: each was created as the image of a
        // live parent. Lay them out top-down in creation order.
        let mut offsets = vec![0u32; k + 1];
        for l in 0..k {
            offsets[l + 1] = offsets[l] + reduced[l].len() as u32;
        }
        let mut nodes = Vec::with_capacity(offsets[k] as usize);
        for l in 0..k {
            for &(lo, hi) in &reduced[l] {
                let global = |c: NodeId| {
                    if is_terminal(c) {
                        c
                    } else {
                        offsets[l + 1] + c
                    }
                };
                nodes.push(Node {
                    level: l as u32,
                    lo: global(lo),
                    hi: global(hi),
                });
            }
        }
        let mut bdd = Bdd::assemble(constraint.name.clone(), support, nodes, 0);
        bdd.prune_unreachable();
        Ok(bdd)
    }
}

fn free_child(next: &mut Vec<State>, index: &mut HashMap<State, NodeId>) -> NodeId {
    *index.entry(State::Free).or_insert_with(|| {
        next.push(State::Free);
        (next.len() - 1) as NodeId
    })
}

/// Compiles `constraint` with its support sorted by `order`.
pub fn build_bdd(constraint: &LinearConstraint, order: &[usize]) -> Result<Bdd, BddError> {
    BddBuilder::new(order).build(constraint)
}

impl Bdd {
    fn empty(name: String, support: Vec<usize>) -> Self {
        let mut bdd = Bdd::assemble(name, support, Vec::new(), FALSE);
        bdd.level_start = vec![0; bdd.support.len() + 1];
        bdd
    }

    fn assemble(name: String, support: Vec<usize>, nodes: Vec<Node>, root: NodeId) -> Self {
        let k = support.len();
        let mut level_start = vec![0u32; k + 1];
        for node in &nodes {
            level_start[node.level as usize + 1] += 1;
        }
        for l in 0..k {
            level_start[l + 1] += level_start[l];
        }
        let n = nodes.len();
        let mut in_degree = vec![0u32; n];
        let mut true_in_degree = 0;
        let mut pred_start = vec![0u32; n + 1];
        for node in &nodes {
            for c in [node.lo, node.hi] {
                if c == TRUE {
                    true_in_degree += 1;
                } else if c != FALSE {
                    in_degree[c as usize] += 1;
                }
            }
            if !is_terminal(node.lo) {
                pred_start[node.lo as usize + 1] += 1;
            }
            // A node whose arcs coincide is listed once.
            if !is_terminal(node.hi) && node.hi != node.lo {
                pred_start[node.hi as usize + 1] += 1;
            }
        }
        for v in 0..n {
            pred_start[v + 1] += pred_start[v];
        }
        let mut fill = pred_start.clone();
        let mut preds = vec![0; pred_start[n] as usize];
        for (u, node) in nodes.iter().enumerate() {
            let children = if node.lo == node.hi {
                [node.lo, FALSE]
            } else {
                [node.lo, node.hi]
            };
            for c in children {
                if !is_terminal(c) {
                    preds[fill[c as usize] as usize] = u as NodeId;
                    fill[c as usize] += 1;
                }
            }
        }
        Bdd {
            name,
            support,
            alive: vec![true; n],
            nodes,
            level_start,
            root,
            in_degree,
            true_in_degree,
            pred_start,
            preds,
            journal: Vec::new(),
            checkpoints: Vec::new(),
        }
    }

    /// Drops nodes not reachable from the root. Only used right after
    /// construction, before any journal exists.
    fn prune_unreachable(&mut self) {
        let mut reach = vec![false; self.nodes.len()];
        if !is_terminal(self.root) {
            reach[self.root as usize] = true;
        }
        for v in 0..self.nodes.len() {
            if reach[v] {
                for c in [self.nodes[v].lo, self.nodes[v].hi] {
                    if !is_terminal(c) {
                        reach[c as usize] = true;
                    }
                }
            }
        }
        if reach.iter().all(|&r| r) {
            return;
        }
        let mut remap = vec![FALSE; self.nodes.len()];
        let mut kept = Vec::new();
        for v in 0..self.nodes.len() {
            if reach[v] {
                remap[v] = kept.len() as NodeId;
                kept.push(self.nodes[v]);
            }
        }
        for node in &mut kept {
            for c in [&mut node.lo, &mut node.hi] {
                if !is_terminal(*c) {
                    *c = remap[*c as usize];
                }
            }
        }
        let name = std::mem::take(&mut self.name);
        let support = std::mem::take(&mut self.support);
        *self = Bdd::assemble(name, support, kept, 0);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Global variable indices in level order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn num_levels(&self) -> usize {
        self.support.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// True for the sentinel of an unsatisfiable constraint.
    pub fn is_empty_sentinel(&self) -> bool {
        self.root == FALSE
    }

    /// Whether at least one assignment still reaches [`TRUE`].
    pub fn is_feasible(&self) -> bool {
        match self.root {
            FALSE => false,
            TRUE => true,
            r => self.alive[r as usize] && self.true_in_degree > 0,
        }
    }

    /// Total node slots, live or removed.
    pub fn capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    #[inline]
    pub fn is_alive(&self, id: NodeId) -> bool {
        self.alive[id as usize]
    }

    /// Node slots at `level`; callers skip removed ones via [`Bdd::is_alive`].
    #[inline]
    pub fn level_range(&self, level: usize) -> Range<NodeId> {
        self.level_start[level]..self.level_start[level + 1]
    }

    pub fn live_nodes_at(&self, level: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.level_range(level).filter(move |&v| self.alive[v as usize])
    }

    pub fn level_of(&self, var: usize) -> Option<usize> {
        self.support.iter().position(|&v| v == var)
    }

    pub fn journal_len(&self) -> usize {
        self.journal.len()
    }

    /// Same graph, liveness and degree bookkeeping; journals are ignored.
    pub fn same_state(&self, other: &Bdd) -> bool {
        self.support == other.support
            && self.nodes == other.nodes
            && self.root == other.root
            && self.alive == other.alive
            && self.in_degree == other.in_degree
            && self.true_in_degree == other.true_in_degree
    }

    pub fn enumerate_solutions(&self) -> Result<Vec<Vec<bool>>, BddError> {
        self.enumerate_solutions_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// All assignments over the support (in level order) whose path ends at
    /// [`TRUE`], in lexicographic order with 0 before 1.
    pub fn enumerate_solutions_capped(&self, cap: usize) -> Result<Vec<Vec<bool>>, BddError> {
        if self.support.len() > cap {
            return Err(BddError::EnumerationCap {
                support: self.support.len(),
                cap,
            });
        }
        let mut out = Vec::new();
        if !self.is_feasible() {
            return Ok(out);
        }
        if self.root == TRUE {
            out.push(Vec::new());
            return Ok(out);
        }
        let mut prefix = Vec::with_capacity(self.support.len());
        self.enumerate_from(self.root, &mut prefix, &mut out);
        Ok(out)
    }

    fn enumerate_from(&self, v: NodeId, prefix: &mut Vec<bool>, out: &mut Vec<Vec<bool>>) {
        if v == TRUE {
            out.push(prefix.clone());
            return;
        }
        if v == FALSE {
            return;
        }
        for value in [false, true] {
            prefix.push(value);
            self.enumerate_from(self.nodes[v as usize].child(value), prefix, out);
            prefix.pop();
        }
    }

    /// Literals `(var, value)` that hold on every accepting path.
    pub fn forced_literals(&self) -> Vec<(usize, bool)> {
        let mut out = Vec::new();
        if !self.is_feasible() {
            return out;
        }
        for level in 0..self.support.len() {
            let mut can_be_zero = false;
            let mut can_be_one = false;
            for v in self.live_nodes_at(level) {
                let node = &self.nodes[v as usize];
                can_be_zero |= node.lo != FALSE;
                can_be_one |= node.hi != FALSE;
                if can_be_zero && can_be_one {
                    break;
                }
            }
            match (can_be_zero, can_be_one) {
                (true, false) => out.push((self.support[level], false)),
                (false, true) => out.push((self.support[level], true)),
                _ => {}
            }
        }
        out
    }

    pub fn checkpoint(&mut self) -> Checkpoint {
        self.checkpoints.push(self.journal.len());
        Checkpoint {
            depth: self.checkpoints.len() - 1,
            journal_len: self.journal.len(),
        }
    }

    /// Restores the state at `checkpoint`, invalidating it and every later one.
    pub fn rollback(&mut self, checkpoint: Checkpoint) -> Result<(), BddError> {
        if self.checkpoints.get(checkpoint.depth) != Some(&checkpoint.journal_len) {
            return Err(BddError::UnknownCheckpoint);
        }
        while self.journal.len() > checkpoint.journal_len {
            match self.journal.pop().expect("journal shorter than checkpoint") {
                JournalEntry::Redirect { node, hi, previous } => {
                    let n = &mut self.nodes[node as usize];
                    if hi {
                        n.hi = previous;
                    } else {
                        n.lo = previous;
                    }
                    self.add_in_degree(previous, 1);
                }
                JournalEntry::Deactivate { node } => self.alive[node as usize] = true,
            }
        }
        self.checkpoints.truncate(checkpoint.depth);
        if self.checkpoints.is_empty() {
            self.journal.clear();
        }
        Ok(())
    }

    #[inline]
    fn add_in_degree(&mut self, target: NodeId, delta: i32) {
        if target == TRUE {
            self.true_in_degree = self.true_in_degree.wrapping_add_signed(delta);
        } else if target != FALSE {
            let d = &mut self.in_degree[target as usize];
            *d = d.wrapping_add_signed(delta);
        }
    }

    fn in_degree_of(&self, target: NodeId) -> u32 {
        if target == TRUE {
            self.true_in_degree
        } else {
            self.in_degree[target as usize]
        }
    }

    fn redirect_to_false(&mut self, node: NodeId, hi: bool) -> NodeId {
        let n = &mut self.nodes[node as usize];
        let previous = if hi {
            std::mem::replace(&mut n.hi, FALSE)
        } else {
            std::mem::replace(&mut n.lo, FALSE)
        };
        if previous != FALSE {
            self.add_in_degree(previous, -1);
            if !self.checkpoints.is_empty() {
                self.journal.push(JournalEntry::Redirect { node, hi, previous });
            }
        }
        previous
    }

    fn deactivate(&mut self, node: NodeId) {
        self.alive[node as usize] = false;
        if !self.checkpoints.is_empty() {
            self.journal.push(JournalEntry::Deactivate { node });
        }
    }

    /// Restricts the BDD to assignments with `x_var = value`.
    pub fn fix_variable(&mut self, var: usize, value: bool) -> Result<Fixation, BddError> {
        let level = self.level_of(var).ok_or(BddError::NotInSupport(var))?;
        Ok(self.fix_level(level, value))
    }

    pub fn fix_level(&mut self, level: usize, value: bool) -> Fixation {
        if !self.is_feasible() {
            return Fixation::Infeasible;
        }
        for v in self.level_range(level) {
            if !self.alive[v as usize] {
                continue;
            }
            let target = self.redirect_to_false(v, !value);
            if target != FALSE && self.in_degree_of(target) == 0 && !self.remove_forward(target) {
                return Fixation::Infeasible;
            }
            let node = self.nodes[v as usize];
            if node.lo == FALSE && node.hi == FALSE {
                self.remove_backward(v);
            }
        }
        if self.is_feasible() {
            Fixation::Feasible
        } else {
            Fixation::Infeasible
        }
    }

    /// Removes `start` and every descendant left without parents. Returns
    /// false if [`TRUE`] becomes unreachable.
    fn remove_forward(&mut self, start: NodeId) -> bool {
        if start == TRUE {
            return false;
        }
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            self.deactivate(u);
            for hi in [false, true] {
                let c = self.redirect_to_false(u, hi);
                if c == FALSE || self.in_degree_of(c) > 0 {
                    continue;
                }
                if c == TRUE {
                    return false;
                }
                stack.push(c);
            }
        }
        true
    }

    /// Removes `start`, whose arcs both point to [`FALSE`], redirecting its
    /// incoming arcs and cascading to parents that become dead ends.
    fn remove_backward(&mut self, start: NodeId) {
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            if !self.alive[u as usize] {
                continue;
            }
            let range = self.pred_start[u as usize] as usize..self.pred_start[u as usize + 1] as usize;
            for k in range {
                let p = self.preds[k];
                if !self.alive[p as usize] {
                    continue;
                }
                for hi in [false, true] {
                    if self.nodes[p as usize].child(hi) == u {
                        self.redirect_to_false(p, hi);
                    }
                }
                let pn = self.nodes[p as usize];
                if pn.lo == FALSE && pn.hi == FALSE {
                    stack.push(p);
                }
            }
            self.deactivate(u);
        }
    }

    /// Graphviz rendering: dotted 0-arcs, solid 1-arcs.
    pub fn to_dot(&self, var_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph \"{}\" {{", self.name);
        out.push_str("  rankdir=LR;\n");
        out.push_str("  top [label=\"⊤\", shape=box];\n  bot [label=\"⊥\", shape=box];\n");
        let label = |id: NodeId| match id {
            TRUE => "top".to_string(),
            FALSE => "bot".to_string(),
            v => format!("n{v}"),
        };
        if self.root == TRUE || self.root == FALSE {
            let _ = writeln!(out, "  root [shape=point];\n  root -> {};", label(self.root));
        }
        for (v, node) in self.nodes.iter().enumerate() {
            if !self.alive[v] {
                continue;
            }
            let var = self.support[node.level as usize];
            let name = var_names.get(var).map_or_else(|| format!("x{var}"), Clone::clone);
            let _ = writeln!(out, "  n{v} [label=\"{name}\", shape=circle];");
        }
        for (v, node) in self.nodes.iter().enumerate() {
            if !self.alive[v] {
                continue;
            }
            let _ = writeln!(out, "  n{v} -> {} [style=dotted];", label(node.lo));
            let _ = writeln!(out, "  n{v} -> {};", label(node.hi));
        }
        out.push_str("}\n");
        out
    }
}
