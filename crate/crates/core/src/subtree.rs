//! Maximal subtrees, random-path distributions and node mean squared error.
//!
//! A maximal v-subtree is rooted at an internal node splitting on `v` with no
//! ancestor splitting on `v`. Sending a case down such a subtree with fair
//! coin flips lands it on terminal `m` with probability `2^-L_m`, where `L_m`
//! counts the flips (internal nodes) between the subtree root and `m`.

use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{Node, NodeId, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalSubtree {
    pub variable: usize,
    pub root: NodeId,
    /// Terminal label -> number of coin flips from `root`.
    pub depths: BTreeMap<usize, u32>,
}

impl MaximalSubtree {
    fn new(tree: &Tree, variable: usize, root: NodeId) -> Self {
        Self {
            variable,
            root,
            depths: tree.terminals_below(root).into_iter().collect(),
        }
    }

    pub fn terminals(&self) -> impl Iterator<Item = usize> + '_ {
        self.depths.keys().copied()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.depths.contains_key(&label)
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub label: usize,
    pub value: f64,
    pub mass: f64,
}

/// Law of the terminal value reached by a random left-right path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDistribution {
    pub atoms: Vec<Atom>,
}

impl PathDistribution {
    pub fn mass_of(&self, label: usize) -> Option<f64> {
        self.atoms.iter().find(|a| a.label == label).map(|a| a.mass)
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }
}

/// Maximal subtrees of a variable pair after removing overlap.
///
/// Where a maximal v-subtree sits inside a maximal w-subtree only the outer
/// one is kept; the nested one is recorded as dropped (and symmetrically).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSubtrees {
    pub kept_v: Vec<MaximalSubtree>,
    pub kept_w: Vec<MaximalSubtree>,
    pub dropped_v: Vec<MaximalSubtree>,
    pub dropped_w: Vec<MaximalSubtree>,
}

impl PairedSubtrees {
    pub fn kept(&self) -> impl Iterator<Item = &MaximalSubtree> {
        self.kept_v.iter().chain(&self.kept_w)
    }

    pub fn dropped(&self) -> impl Iterator<Item = &MaximalSubtree> {
        self.dropped_v.iter().chain(&self.dropped_w)
    }

    /// True when the two variables are orthogonal in this tree.
    pub fn is_orthogonal(&self) -> bool {
        self.dropped_v.is_empty() && self.dropped_w.is_empty()
    }
}

/// Probability that a fresh case lands in each terminal, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct PiWeights {
    weights: Vec<f64>,
}

impl PiWeights {
    /// Weights indexed by `label - 1`.
    pub fn new(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    /// Equal weight on each of `m` terminals.
    pub fn uniform(m: usize) -> Self {
        Self {
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn get(&self, label: usize) -> Result<f64> {
        label
            .checked_sub(1)
            .and_then(|i| self.weights.get(i).copied())
            .filter(|w| !w.is_nan())
            .ok_or(Error::MissingTerminalWeight { label })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub(crate) fn terminal_value(values: &[f64], label: usize) -> Result<f64> {
    label
        .checked_sub(1)
        .and_then(|i| values.get(i).copied())
        .filter(|v| !v.is_nan())
        .ok_or(Error::MissingTerminalValue { label })
}

fn check_var(tree: &Tree, v: usize) -> Result<()> {
    if v >= tree.dim() {
        return Err(Error::VariableOutOfRange {
            index: v,
            d: tree.dim(),
        });
    }
    Ok(())
}

/// All maximal v-subtrees, in left-first depth-first order of their roots.
pub fn maximal_subtrees(tree: &Tree, v: usize) -> Result<Vec<MaximalSubtree>> {
    check_var(tree, v)?;
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        if let Node::Internal {
            split_var, left, right, ..
        } = *tree.node(id)
        {
            if split_var == v {
                out.push(MaximalSubtree::new(tree, v, id));
            } else {
                stack.push(right);
                stack.push(left);
            }
        }
    }
    Ok(out)
}

pub fn paired_maximal_subtrees(tree: &Tree, v: usize, w: usize) -> Result<PairedSubtrees> {
    if v == w {
        return Err(Error::IdenticalPair);
    }
    let sub_v = maximal_subtrees(tree, v)?;
    let sub_w = maximal_subtrees(tree, w)?;
    let nested_in = |inner: &MaximalSubtree, outer: &[MaximalSubtree]| {
        outer.iter().any(|o| tree.is_strict_ancestor(o.root, inner.root))
    };
    let mut paired = PairedSubtrees::default();
    for s in &sub_v {
        if nested_in(s, &sub_w) {
            paired.dropped_v.push(s.clone());
        } else {
            paired.kept_v.push(s.clone());
        }
    }
    for s in &sub_w {
        if nested_in(s, &sub_v) {
            paired.dropped_w.push(s.clone());
        } else {
            paired.kept_w.push(s.clone());
        }
    }
    Ok(paired)
}

/// Random-path distribution of `subtree` over `values` (indexed by label - 1).
pub fn path_distribution(subtree: &MaximalSubtree, values: &[f64]) -> Result<PathDistribution> {
    let atoms = subtree
        .depths
        .iter()
        .map(|(&label, &depth)| {
            Ok(Atom {
                label,
                value: terminal_value(values, label)?,
                mass: 0.5f64.powi(depth as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathDistribution { atoms })
}

/// Mean and variance of a path distribution.
pub fn subtree_moments(pd: &PathDistribution) -> (f64, f64) {
    let mean: f64 = pd.atoms.iter().map(|a| a.mass * a.value).sum();
    let variance: f64 = pd.atoms.iter().map(|a| a.mass * (a.value - mean).powi(2)).sum();
    (mean, variance)
}

/// Node mean squared error of a subtree:
/// `sum_m pi_m * E(a~ - a_m)^2` with the random value `a~` drawn from the
/// subtree's path distribution over `values0`.
pub fn node_mse(subtree: &MaximalSubtree, values0: &[f64], pi: &PiWeights) -> Result<f64> {
    let pd = path_distribution(subtree, values0)?;
    let (mean, variance) = subtree_moments(&pd);
    subtree.terminals().try_fold(0.0, |acc, label| {
        let a0 = terminal_value(values0, label)?;
        Ok(acc + pi.get(label)? * (variance + (mean - a0).powi(2)))
    })
}

/// Fraction of `sample` rows landing in each terminal.
pub fn estimate_pi(tree: &Tree, sample: &Dataset) -> Result<PiWeights> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    sample.check_dim(tree.dim())?;
    let mut counts = vec![0usize; tree.num_terminals()];
    for (x, _) in sample.rows() {
        counts[tree.label_of(tree.descend(x)) - 1] += 1;
    }
    let n = sample.len() as f64;
    Ok(PiWeights::new(counts.into_iter().map(|c| c as f64 / n).collect()))
}

/// Half-open region `(lo, hi]` per covariate for every terminal, indexed by
/// label - 1. Unconstrained sides are infinite.
pub fn terminal_regions(tree: &Tree) -> Vec<Vec<(f64, f64)>> {
    let mut regions = vec![Vec::new(); tree.num_terminals()];
    let mut stack = vec![(tree.root(), vec![(f64::NEG_INFINITY, f64::INFINITY); tree.dim()])];
    while let Some((id, region)) = stack.pop() {
        match *tree.node(id) {
            Node::Internal {
                split_var,
                cut,
                left,
                right,
            } => {
                let mut l = region.clone();
                l[split_var].1 = l[split_var].1.min(cut);
                let mut r = region;
                r[split_var].0 = r[split_var].0.max(cut);
                stack.push((right, r));
                stack.push((left, l));
            }
            Node::Terminal { label, .. } => regions[label - 1] = region,
        }
    }
    regions
}

/// Terminal probabilities for `x` uniform on the box `bounds`.
pub fn exact_pi_uniform(tree: &Tree, bounds: &[(f64, f64)]) -> Result<PiWeights> {
    if bounds.len() != tree.dim() {
        return Err(Error::DimensionMismatch {
            expected: tree.dim(),
            got: bounds.len(),
        });
    }
    if bounds
        .iter()
        .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::DegenerateBox);
    }
    let weights = terminal_regions(tree)
        .iter()
        .map(|region| {
            region
                .iter()
                .zip(bounds)
                .map(|(&(lo, hi), &(blo, bhi))| (hi.min(bhi) - lo.max(blo)).max(0.0) / (bhi - blo))
                .product()
        })
        .collect();
    Ok(PiWeights::new(weights))
}
