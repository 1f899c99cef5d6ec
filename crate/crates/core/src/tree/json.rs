use serde::{Deserialize, Serialize};

use super::{Node, Tree};
use crate::error::Error;

/// On-disk tree layout. `id` is the node's arena index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub d: usize,
    pub root: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeRecord {
    Internal {
        id: usize,
        var: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
    Terminal {
        id: usize,
        label: usize,
        value: f64,
        count: usize,
    },
}

impl NodeRecord {
    fn id(&self) -> usize {
        match *self {
            NodeRecord::Internal { id, .. } | NodeRecord::Terminal { id, .. } => id,
        }
    }
}

impl From<Tree> for TreeRecord {
    fn from(tree: Tree) -> Self {
        let nodes = tree
            .nodes
            .iter()
            .enumerate()
            .map(|(id, node)| match *node {
                Node::Internal {
                    split_var,
                    cut,
                    left,
                    right,
                } => NodeRecord::Internal {
                    id,
                    var: split_var,
                    cut,
                    left,
                    right,
                },
                Node::Terminal { label, value, count } => NodeRecord::Terminal {
                    id,
                    label,
                    value,
                    count,
                },
            })
            .collect();
        TreeRecord {
            d: tree.d,
            root: tree.root,
            nodes,
        }
    }
}

impl TryFrom<TreeRecord> for Tree {
    type Error = Error;

    fn try_from(record: TreeRecord) -> Result<Self, Self::Error> {
        let n = record.nodes.len();
        let mut slots: Vec<Option<Node>> = vec![None; n];
        for rec in record.nodes {
            let id = rec.id();
            if id >= n {
                return Err(Error::InvalidTree(format!("node id {id} out of range")));
            }
            let node = match rec {
                NodeRecord::Internal {
                    var, cut, left, right, ..
                } => Node::Internal {
                    split_var: var,
                    cut,
                    left,
                    right,
                },
                NodeRecord::Terminal {
                    label, value, count, ..
                } => Node::Terminal { label, value, count },
            };
            if slots[id].replace(node).is_some() {
                return Err(Error::InvalidTree(format!("duplicate node id {id}")));
            }
        }
        // ids are unique and in range, so every slot is filled
        let nodes = slots.into_iter().map(Option::unwrap).collect();
        Tree::from_nodes(record.d, nodes, record.root)
    }
}
