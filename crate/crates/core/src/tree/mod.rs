//! Binary regression trees.
//!
//! Nodes live in an arena indexed by [`NodeId`]. An internal node sends
//! `x[var] <= cut` to its left child and everything else to the right;
//! terminal nodes carry a label in `1..=M`, a fitted value and the number of
//! training rows that reached them.

mod grow;
mod json;

pub use grow::{best_split, grow_tree, GrowConfig, Split};
pub use json::{NodeRecord, TreeRecord};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Internal {
        split_var: usize,
        cut: f64,
        left: NodeId,
        right: NodeId,
    },
    Terminal {
        label: usize,
        value: f64,
        count: usize,
    },
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Node::Terminal { .. })
    }

    pub fn split_var(&self) -> Option<usize> {
        match *self {
            Node::Internal { split_var, .. } => Some(split_var),
            Node::Terminal { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRecord", into = "TreeRecord")]
pub struct Tree {
    d: usize,
    nodes: Vec<Node>,
    root: NodeId,
    parents: Vec<Option<NodeId>>,
    /// `terminals[m - 1]` is the node carrying label `m`.
    terminals: Vec<NodeId>,
}

impl Tree {
    /// Validates an arena of nodes and assembles a tree.
    ///
    /// Checks that every node except the root has exactly one parent, that
    /// every node is reachable from the root, that split variables are in
    /// range and that terminal labels are exactly `1..=M`.
    pub fn from_nodes(d: usize, nodes: Vec<Node>, root: NodeId) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidTree("tree must have at least one covariate".into()));
        }
        if root >= nodes.len() {
            return Err(Error::InvalidTree(format!("root {root} out of range")));
        }
        let mut parents: Vec<Option<NodeId>> = vec![None; nodes.len()];
        let mut labels: Vec<Option<NodeId>> = Vec::new();
        for (id, node) in nodes.iter().enumerate() {
            match *node {
                Node::Internal {
                    split_var,
                    cut,
                    left,
                    right,
                } => {
                    if split_var >= d {
                        return Err(Error::InvalidTree(format!(
                            "node {id} splits on variable {split_var} but d = {d}"
                        )));
                    }
                    if cut.is_nan() {
                        return Err(Error::InvalidTree(format!("node {id} has a NaN cut")));
                    }
                    for child in [left, right] {
                        if child >= nodes.len() || child == root {
                            return Err(Error::InvalidTree(format!("node {id} has invalid child {child}")));
                        }
                        if parents[child].replace(id).is_some() {
                            return Err(Error::InvalidTree(format!("node {child} has more than one parent")));
                        }
                    }
                    if left == right {
                        return Err(Error::InvalidTree(format!("node {id} has identical children")));
                    }
                }
                Node::Terminal { label, value, .. } => {
                    if label == 0 {
                        return Err(Error::InvalidTree("terminal labels start at 1".into()));
                    }
                    if !value.is_finite() {
                        return Err(Error::InvalidTree(format!("terminal {label} has a non-finite value")));
                    }
                    if labels.len() < label {
                        labels.resize(label, None);
                    }
                    if labels[label - 1].replace(id).is_some() {
                        return Err(Error::InvalidTree(format!("duplicate terminal label {label}")));
                    }
                }
            }
        }
        let terminals = labels
            .into_iter()
            .enumerate()
            .map(|(i, id)| id.ok_or_else(|| Error::InvalidTree(format!("terminal label {} missing", i + 1))))
            .collect::<Result<Vec<_>>>()?;

        // reachability: with single parents this also rules out cycles
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut reached = 0;
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidTree("cycle detected".into()));
            }
            reached += 1;
            if let Node::Internal { left, right, .. } = nodes[id] {
                stack.push(right);
                stack.push(left);
            }
        }
        if reached != nodes.len() {
            return Err(Error::InvalidTree(format!(
                "{} nodes unreachable from the root",
                nodes.len() - reached
            )));
        }

        Ok(Self {
            d,
            nodes,
            root,
            parents,
            terminals,
        })
    }

    /// Single-terminal tree predicting `value` everywhere.
    pub fn constant(d: usize, value: f64, count: usize) -> Result<Self> {
        Self::from_nodes(d, vec![Node::Terminal { label: 1, value, count }], 0)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents[id]
    }

    /// Number of terminal nodes `M`.
    pub fn num_terminals(&self) -> usize {
        self.terminals.len()
    }

    /// Arena id of the terminal carrying `label`.
    pub fn terminal_node(&self, label: usize) -> Option<NodeId> {
        label.checked_sub(1).and_then(|i| self.terminals.get(i).copied())
    }

    /// Fitted values `a_m`, indexed by `label - 1`.
    pub fn fitted_values(&self) -> Vec<f64> {
        self.terminals
            .iter()
            .map(|&id| match self.nodes[id] {
                Node::Terminal { value, .. } => value,
                Node::Internal { .. } => unreachable!(),
            })
            .collect()
    }

    pub fn terminal_counts(&self) -> Vec<usize> {
        self.terminals
            .iter()
            .map(|&id| match self.nodes[id] {
                Node::Terminal { count, .. } => count,
                Node::Internal { .. } => unreachable!(),
            })
            .collect()
    }

    /// Same topology with new terminal values (indexed by `label - 1`).
    pub fn with_terminal_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() < self.num_terminals() {
            return Err(Error::MissingTerminalValue {
                label: values.len() + 1,
            });
        }
        let mut out = self.clone();
        for node in &mut out.nodes {
            if let Node::Terminal { label, value, .. } = node {
                *value = values[*label - 1];
            }
        }
        Ok(out)
    }

    /// Internal node ids splitting on `var`.
    pub fn splits_on(&self, var: usize) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(move |(_, n)| n.split_var() == Some(var))
            .map(|(id, _)| id)
    }

    /// True when `ancestor` lies strictly above `node`.
    pub fn is_strict_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        let mut cur = self.parents[node];
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parents[p];
        }
        false
    }

    /// Number of edges from the root to `id`.
    pub fn depth(&self, id: NodeId) -> usize {
        let mut depth = 0;
        let mut cur = self.parents[id];
        while let Some(p) = cur {
            depth += 1;
            cur = self.parents[p];
        }
        depth
    }

    /// Terminal labels reachable from `id` with their distance (in edges)
    /// from `id`, left-first depth-first order.
    pub fn terminals_below(&self, id: NodeId) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        let mut stack = vec![(id, 0u32)];
        while let Some((node, depth)) = stack.pop() {
            match self.nodes[node] {
                Node::Internal { left, right, .. } => {
                    stack.push((right, depth + 1));
                    stack.push((left, depth + 1));
                }
                Node::Terminal { label, .. } => out.push((label, depth)),
            }
        }
        out
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Arena id of the terminal reached by `x`. Dimension is not checked.
    pub(crate) fn descend(&self, x: &[f64]) -> NodeId {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Internal {
                    split_var,
                    cut,
                    left,
                    right,
                } => {
                    id = if x[split_var] <= cut { left } else { right };
                }
                Node::Terminal { .. } => return id,
            }
        }
    }

    pub(crate) fn label_of(&self, id: NodeId) -> usize {
        match self.nodes[id] {
            Node::Terminal { label, .. } => label,
            Node::Internal { .. } => panic!("node {id} is not terminal"),
        }
    }

    pub(crate) fn value_of(&self, id: NodeId) -> f64 {
        match self.nodes[id] {
            Node::Terminal { value, .. } => value,
            Node::Internal { .. } => panic!("node {id} is not terminal"),
        }
    }

    /// Terminal label `m` with `B_m(x) = 1`.
    pub fn node_membership(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        Ok(self.label_of(self.descend(x)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.value_of(self.descend(x)))
    }
}

/// Chain tree whose prediction is the indicator `1{x_1 <= c_1, ..., x_d <= c_d}`.
///
/// Internal node `j` splits `x_j` at `cuts[j]` and continues on its left
/// child. The terminal reached by passing every condition has label 1 and
/// value 1; the terminal reached by failing condition `j` has label `j + 2`
/// and value 0.
pub fn rectangle_indicator_tree(cuts: &[f64]) -> Result<Tree> {
    let d = cuts.len();
    if d == 0 {
        return Err(Error::InvalidConfig("rectangle needs at least one cut".into()));
    }
    let mut nodes = Vec::with_capacity(2 * d + 1);
    for (j, &cut) in cuts.iter().enumerate() {
        let id = 2 * j;
        nodes.push(Node::Internal {
            split_var: j,
            cut,
            left: id + 2,
            right: id + 1,
        });
        nodes.push(Node::Terminal {
            label: j + 2,
            value: 0.0,
            count: 0,
        });
    }
    nodes.push(Node::Terminal {
        label: 1,
        value: 1.0,
        count: 0,
    });
    Tree::from_nodes(d, nodes, 0)
}
