use std::collections::HashMap;

use crate::scenario_reduce::ScenarioFan;

// Exact value equality: identical bits, with -0.0 folded into 0.0.
fn key_bits(x: f64) -> u64 {
    (x + 0.0).to_bits()
}

/// One node of the information lattice. Depth `t` nodes carry the demand
/// history of periods `1..=t`; the root has depth 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub depth: usize,
    pub parent: Option<usize>,
    pub probability: f64,
    /// Demand of period `depth` per product (empty at the root).
    pub demand: Vec<f64>,
    pub scenarios: Vec<usize>,
}

/// Demand-prefix lattice of a fan. In the shared form, scenarios with exactly
/// equal demand histories through period `t` share their depth-`t` node.
/// In the split form every scenario owns a private chain, including its own
/// root.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub nodes: Vec<Node>,
    /// `path[s][t]` is the depth-`t` node of scenario `s`, `t = 0..=T`.
    pub path: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
    pub horizon: usize,
    pub shared: bool,
}

impl Lattice {
    pub fn shared(fan: &ScenarioFan) -> Self {
        Self::build(fan, true)
    }

    pub fn split(fan: &ScenarioFan) -> Self {
        Self::build(fan, false)
    }

    fn build(fan: &ScenarioFan, shared: bool) -> Self {
        let horizon = fan.horizon();
        let n_products = fan.n_products();
        let mut nodes: Vec<Node> = Vec::new();
        let mut path = vec![Vec::with_capacity(horizon + 1); fan.len()];

        let new_node = |nodes: &mut Vec<Node>, depth, parent, demand| {
            nodes.push(Node {
                depth,
                parent,
                probability: 0.0,
                demand,
                scenarios: Vec::new(),
            });
            nodes.len() - 1
        };

        if shared {
            let root = new_node(&mut nodes, 0, None, Vec::new());
            for p in path.iter_mut() {
                p.push(root);
            }
            for t in 1..=horizon {
                let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
                for (s, sc) in fan.scenarios.iter().enumerate() {
                    let parent = path[s][t - 1];
                    let demand: Vec<f64> = (0..n_products).map(|i| sc[i][t - 1]).collect();
                    let key = (parent, demand.iter().map(|&d| key_bits(d)).collect());
                    let id = *index
                        .entry(key)
                        .or_insert_with(|| new_node(&mut nodes, t, Some(parent), demand));
                    path[s].push(id);
                }
            }
        } else {
            for (s, sc) in fan.scenarios.iter().enumerate() {
                let mut prev = new_node(&mut nodes, 0, None, Vec::new());
                path[s].push(prev);
                for t in 1..=horizon {
                    let demand = (0..n_products).map(|i| sc[i][t - 1]).collect();
                    prev = new_node(&mut nodes, t, Some(prev), demand);
                    path[s].push(prev);
                }
            }
        }

        for (s, p) in path.iter().enumerate() {
            for &id in p {
                nodes[id].probability += fan.probabilities[s];
                nodes[id].scenarios.push(s);
            }
        }
        Self {
            nodes,
            path,
            probabilities: fan.probabilities.clone(),
            horizon,
            shared,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_scenarios(&self) -> usize {
        self.path.len()
    }

    /// Nodes at `depth`, in creation order.
    pub fn at_depth(&self, depth: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.depth == depth)
            .map(|(i, _)| i)
    }

    /// Ancestor of `node` at `depth` (itself when depths match).
    pub fn ancestor(&self, mut node: usize, depth: usize) -> usize {
        while self.nodes[node].depth > depth {
            node = self.nodes[node].parent.expect("non-root node has a parent");
        }
        node
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.at_depth(self.horizon)
    }

    /// History classes at `depth`: groups of scenarios with exactly equal
    /// demands through that period, in order of first appearance.
    pub fn history_classes(fan: &ScenarioFan, depth: usize) -> Vec<Vec<usize>> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for (s, sc) in fan.scenarios.iter().enumerate() {
            let key: Vec<u64> = (0..depth)
                .flat_map(|t| sc.iter().map(move |row| key_bits(row[t])))
                .collect();
            let c = *index.entry(key).or_insert_with(|| {
                classes.push(Vec::new());
                classes.len() - 1
            });
            classes[c].push(s);
        }
        classes
    }
}
