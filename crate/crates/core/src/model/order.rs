use std::collections::VecDeque;

use super::IlpInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrderStrategy {
    /// Keep the order in which variables were declared.
    #[default]
    Input,
    /// Breadth-first Cuthill-McKee on the variable adjacency graph.
    CuthillMckee,
}

/// Variable adjacency: `i ~ k` iff some constraint contains both.
fn adjacency(instance: &IlpInstance) -> Vec<Vec<usize>> {
    let n = instance.num_vars();
    let mut adj = vec![Vec::new(); n];
    for c in &instance.constraints {
        for (a, &(u, _)) in c.terms.iter().enumerate() {
            for &(v, _) in &c.terms[a + 1..] {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Returns a permutation of `0..n`; position `p` holds the variable visited `p`-th.
pub fn order_variables(instance: &IlpInstance, strategy: OrderStrategy) -> Vec<usize> {
    let n = instance.num_vars();
    match strategy {
        OrderStrategy::Input => (0..n).collect(),
        OrderStrategy::CuthillMckee => cuthill_mckee(&adjacency(instance)),
    }
}

fn cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut neighbours = Vec::new();
    // Each component starts from its lowest-degree vertex.
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            neighbours.clear();
            neighbours.extend(adj[v].iter().copied().filter(|&u| !visited[u]));
            neighbours.sort_by_key(|&u| (degree[u], u));
            for &u in &neighbours {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order
}

/// Bandwidth of the adjacency matrix under `order`.
pub fn bandwidth(instance: &IlpInstance, order: &[usize]) -> usize {
    let mut position = vec![0; order.len()];
    for (p, &v) in order.iter().enumerate() {
        position[v] = p;
    }
    adjacency(instance)
        .iter()
        .enumerate()
        .flat_map(|(u, list)| list.iter().map(move |&v| (u, v)))
        .map(|(u, v)| position[u].abs_diff(position[v]))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearConstraint, Relation};

    fn path_instance() -> IlpInstance {
        // x2 - x1 - x3 as a path, declared x1, x2, x3.
        IlpInstance::new(
            vec!["x1".into(), "x2".into(), "x3".into()],
            vec![0.0; 3],
            0.0,
            vec![
                LinearConstraint::new("a", vec![(1, 1), (0, 1)], Relation::Le, 1),
                LinearConstraint::new("b", vec![(0, 1), (2, 1)], Relation::Le, 1),
            ],
        )
        .unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn path_reaches_minimum_bandwidth() {
        let inst = path_instance();
        let best = permutations(3)
            .iter()
            .map(|p| bandwidth(&inst, p))
            .min()
            .unwrap();
        assert_eq!(best, 1);
        let order = order_variables(&inst, OrderStrategy::CuthillMckee);
        assert_eq!(bandwidth(&inst, &order), best);
        // Declaration order places x1 and x3 two apart.
        assert_eq!(bandwidth(&inst, &[0, 1, 2]), 2);
    }

    #[test]
    fn input_is_identity() {
        let inst = path_instance();
        assert_eq!(order_variables(&inst, OrderStrategy::Input), vec![0, 1, 2]);
    }

    #[test]
    fn isolated_variable_kept_once() {
        let mut inst = path_instance();
        inst.var_names.push("lonely".into());
        inst.objective.push(1.0);
        let mut order = order_variables(&inst, OrderStrategy::CuthillMckee);
        order.sort_unstable();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }
}
