//! CART-style growing by exhaustive search for the split with the largest
//! reduction in within-node sum of squared errors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Node, NodeId, Tree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// Reductions at or below this fraction of the node SSE count as zero.
const ZERO_REDUCTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    /// Minimum number of training rows in each child of a split.
    pub min_node_size: usize,
    /// Maximum number of splits on any root-to-terminal path.
    pub max_depth: Option<usize>,
    /// Number of candidate variables drawn at each node; all when `None`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            min_node_size: 5,
            max_depth: None,
            mtry: None,
            seed: 0,
        }
    }
}

impl GrowConfig {
    pub fn rng(&self) -> rand_chacha::ChaCha8Rng {
        stream_rng(self.seed, &[])
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.min_node_size == 0 {
            return Err(Error::InvalidConfig("min_node_size must be at least 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > d {
                return Err(Error::InvalidConfig(format!("mtry = {m} must lie in [1, {d}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub var: usize,
    /// Observed value of `var`; rows with `x[var] <= cut` go left.
    pub cut: f64,
    pub reduction: f64,
}

/// Best admissible split of `rows` over `candidate_vars`.
///
/// Cuts are observed values of each variable that leave at least
/// `min_node_size` rows on both sides. Ties go to the lowest variable index,
/// then the smallest cut. Returns `None` when no split strictly reduces the
/// node's sum of squared errors.
pub fn best_split(data: &Dataset, rows: &[usize], candidate_vars: &[usize], min_node_size: usize) -> Option<Split> {
    let n = rows.len();
    let min = min_node_size.max(1);
    if n < 2 * min {
        return None;
    }
    let mean = rows.iter().map(|&i| data.response(i)).sum::<f64>() / n as f64;
    let centered: Vec<f64> = rows.iter().map(|&i| data.response(i) - mean).collect();
    let total: f64 = centered.iter().sum();
    let node_sse: f64 = centered.iter().map(|r| r * r).sum();
    let baseline = total * total / n as f64;
    let threshold = ZERO_REDUCTION * node_sse;

    let mut vars = candidate_vars.to_vec();
    vars.sort_unstable();
    vars.dedup();

    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for &var in &vars {
        order.sort_by(|&a, &b| data.value(rows[a], var).total_cmp(&data.value(rows[b], var)));
        let mut left_sum = 0.0;
        for (pos, &k) in order.iter().enumerate().take(n - 1) {
            left_sum += centered[k];
            let n_left = pos + 1;
            let n_right = n - n_left;
            if n_left < min {
                continue;
            }
            if n_right < min {
                break;
            }
            let here = data.value(rows[k], var);
            let next = data.value(rows[order[pos + 1]], var);
            if here == next {
                continue;
            }
            let right_sum = total - left_sum;
            let reduction = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - baseline;
            if reduction > threshold && best.is_none_or(|b| reduction > b.reduction) {
                best = Some(Split {
                    var,
                    cut: here,
                    reduction,
                });
            }
        }
    }
    best
}

/// Grows a regression tree on `data`.
///
/// A node stays terminal when it has fewer than `2 * min_node_size` rows,
/// its responses are all equal, `max_depth` is reached, or no candidate
/// split reduces its SSE. With `mtry` set, each node draws its candidate
/// variables without replacement from `rng`.
pub fn grow_tree<R: Rng + ?Sized>(data: &Dataset, config: &GrowConfig, rng: &mut R) -> Result<Tree> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.responses().iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidResponse);
    }
    config.validate(data.dim())?;
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut grower = Grower {
        data,
        config,
        rng,
        nodes: Vec::new(),
        labels: 0,
    };
    let root = grower.build(rows, 0);
    Tree::from_nodes(data.dim(), grower.nodes, root)
}

struct Grower<'a, R: ?Sized> {
    data: &'a Dataset,
    config: &'a GrowConfig,
    rng: &'a mut R,
    nodes: Vec<Node>,
    labels: usize,
}

impl<R: Rng + ?Sized> Grower<'_, R> {
    fn build(&mut self, rows: Vec<usize>, depth: usize) -> NodeId {
        match self.choose_split(&rows, depth) {
            Some(split) => {
                let id = self.nodes.len();
                // placeholder until both children exist
                self.nodes.push(Node::Terminal {
                    label: 0,
                    value: 0.0,
                    count: 0,
                });
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.data.value(i, split.var) <= split.cut);
                let left = self.build(left_rows, depth + 1);
                let right = self.build(right_rows, depth + 1);
                self.nodes[id] = Node::Internal {
                    split_var: split.var,
                    cut: split.cut,
                    left,
                    right,
                };
                id
            }
            None => {
                let count = rows.len();
                let value = rows.iter().map(|&i| self.data.response(i)).sum::<f64>() / count as f64;
                self.labels += 1;
                self.nodes.push(Node::Terminal {
                    label: self.labels,
                    value,
                    count,
                });
                self.nodes.len() - 1
            }
        }
    }

    fn choose_split(&mut self, rows: &[usize], depth: usize) -> Option<Split> {
        if rows.len() < 2 * self.config.min_node_size {
            return None;
        }
        if self.config.max_depth.is_some_and(|max| depth >= max) {
            return None;
        }
        let first = self.data.response(rows[0]);
        if rows.iter().all(|&i| self.data.response(i) == first) {
            return None;
        }
        let d = self.data.dim();
        let vars: Vec<usize> = match self.config.mtry {
            Some(m) if m < d => rand::seq::index::sample(self.rng, d, m).into_vec(),
            _ => (0..d).collect(),
        };
        best_split(self.data, rows, &vars, self.config.min_node_size)
    }
}
