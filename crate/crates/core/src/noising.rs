//! Noised-up predictors.
//!
//! Noising a variable replaces ordinary descent with fair coin flips from
//! the first node that splits on it. Under [`NoisingMode::FullRandom`] every
//! node from there down is randomized, which makes the prediction a draw
//! from the path distribution of the enclosing maximal subtree; that closed
//! form is what [`NoisedPredictor`] stores.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::TreeEnsemble;
use crate::subtree::{
    maximal_subtrees, paired_maximal_subtrees, path_distribution, subtree_moments, MaximalSubtree, PathDistribution,
};
use crate::tree::{Node, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoisingMode {
    /// Coin flips at every node below the first noised split.
    FullRandom,
    /// Coin flips only at nodes splitting on a noised variable.
    SplitsOnly,
}

/// One or two distinct noised variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarSet {
    Single(usize),
    Pair(usize, usize),
}

impl VarSet {
    pub fn new(vars: &[usize]) -> Result<Self> {
        match *vars {
            [v] => Ok(VarSet::Single(v)),
            [v, w] if v == w => Err(Error::IdenticalPair),
            [v, w] => Ok(VarSet::Pair(v, w)),
            _ => Err(Error::VarSetSize(vars.len())),
        }
    }

    pub fn contains(&self, var: usize) -> bool {
        match *self {
            VarSet::Single(v) => v == var,
            VarSet::Pair(v, w) => v == var || w == var,
        }
    }

    pub fn to_vec(&self) -> Vec<usize> {
        match *self {
            VarSet::Single(v) => vec![v],
            VarSet::Pair(v, w) => vec![v, w],
        }
    }

    pub(crate) fn check(&self, d: usize) -> Result<()> {
        match self.to_vec().into_iter().find(|&v| v >= d) {
            Some(index) => Err(Error::VariableOutOfRange { index, d }),
            None => Ok(()),
        }
    }
}

/// Subtrees randomized when `vars` is noised: the maximal subtrees of a
/// single variable, or the kept (outermost) subtrees of a pair.
pub fn noising_regions(tree: &Tree, vars: VarSet) -> Result<Vec<MaximalSubtree>> {
    match vars {
        VarSet::Single(v) => maximal_subtrees(tree, v),
        VarSet::Pair(v, w) => {
            let paired = paired_maximal_subtrees(tree, v, w)?;
            Ok(paired.kept_v.into_iter().chain(paired.kept_w).collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub subtree: MaximalSubtree,
    pub distribution: PathDistribution,
    pub mean: f64,
    pub variance: f64,
}

/// Closed form of a noised tree: base predictions outside the noised
/// regions, a path-distribution draw inside.
#[derive(Debug, Clone)]
pub struct NoisedPredictor<'a> {
    tree: &'a Tree,
    vars: VarSet,
    regions: Vec<Region>,
    region_of: Vec<Option<usize>>,
}

impl<'a> NoisedPredictor<'a> {
    pub fn tree(&self) -> &'a Tree {
        self.tree
    }

    pub fn vars(&self) -> VarSet {
        self.vars
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region containing the terminal that `x` reaches, if any.
    pub fn region_at(&self, x: &[f64]) -> Result<Option<&Region>> {
        let label = self.tree.node_membership(x)?;
        Ok(self.region_of[label - 1].map(|k| &self.regions[k]))
    }

    pub fn moments_at(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.tree.check_dim(x)?;
        let id = self.tree.descend(x);
        Ok(match self.region_of[self.tree.label_of(id) - 1] {
            Some(k) => (self.regions[k].mean, self.regions[k].variance),
            None => (self.tree.value_of(id), 0.0),
        })
    }
}

pub fn build_noised_predictor(tree: &Tree, vars: VarSet) -> Result<NoisedPredictor<'_>> {
    vars.check(tree.dim())?;
    let fitted = tree.fitted_values();
    let mut region_of = vec![None; tree.num_terminals()];
    let regions = noising_regions(tree, vars)?
        .into_iter()
        .enumerate()
        .map(|(k, subtree)| {
            for label in subtree.terminals() {
                region_of[label - 1] = Some(k);
            }
            let distribution = path_distribution(&subtree, &fitted)?;
            let (mean, variance) = subtree_moments(&distribution);
            Ok(Region {
                subtree,
                distribution,
                mean,
                variance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NoisedPredictor {
        tree,
        vars,
        regions,
        region_of,
    })
}

pub fn noised_moments_at(np: &NoisedPredictor<'_>, x: &[f64]) -> Result<(f64, f64)> {
    np.moments_at(x)
}

/// Terminal label reached by one noised descent of `x`.
pub fn noised_terminal_sample<R: Rng + ?Sized>(
    tree: &Tree,
    x: &[f64],
    vars: VarSet,
    mode: NoisingMode,
    rng: &mut R,
) -> Result<usize> {
    tree.check_dim(x)?;
    vars.check(tree.dim())?;
    let mut id = tree.root();
    let mut randomizing = false;
    loop {
        match *tree.node(id) {
            Node::Internal {
                split_var,
                cut,
                left,
                right,
            } => {
                let noised = vars.contains(split_var);
                let flip = match mode {
                    NoisingMode::FullRandom => {
                        randomizing |= noised;
                        randomizing
                    }
                    NoisingMode::SplitsOnly => noised,
                };
                let go_left = if flip {
                    rng.random::<bool>()
                } else {
                    x[split_var] <= cut
                };
                id = if go_left { left } else { right };
            }
            Node::Terminal { label, .. } => return Ok(label),
        }
    }
}

pub fn noised_predict_sample<R: Rng + ?Sized>(
    tree: &Tree,
    x: &[f64],
    vars: VarSet,
    mode: NoisingMode,
    rng: &mut R,
) -> Result<f64> {
    let label = noised_terminal_sample(tree, x, vars, mode, rng)?;
    Ok(tree.value_of(tree.terminal_node(label).expect("label from this tree")))
}

/// Per-tree noised predictors of an ensemble.
#[derive(Debug, Clone)]
pub struct ForestNoisedPredictor<'a> {
    predictors: Vec<NoisedPredictor<'a>>,
}

impl<'a> ForestNoisedPredictor<'a> {
    pub fn predictors(&self) -> &[NoisedPredictor<'a>] {
        &self.predictors
    }

    /// Mean and variance of the averaged noised prediction; trees randomize
    /// independently, so variances add with weight `1 / B^2`.
    pub fn moments_at(&self, x: &[f64]) -> Result<(f64, f64)> {
        let b = self.predictors.len() as f64;
        let (mut mean, mut var) = (0.0, 0.0);
        for p in &self.predictors {
            let (m, v) = p.moments_at(x)?;
            mean += m;
            var += v;
        }
        Ok((mean / b, var / (b * b)))
    }
}

pub fn build_forest_noised_predictor<M: TreeEnsemble + ?Sized>(
    model: &M,
    vars: VarSet,
) -> Result<ForestNoisedPredictor<'_>> {
    let trees = model.trees();
    if trees.is_empty() {
        return Err(Error::EmptyForest);
    }
    let predictors = trees
        .iter()
        .map(|t| build_noised_predictor(t, vars))
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestNoisedPredictor { predictors })
}

pub fn forest_noised_moments(np: &ForestNoisedPredictor<'_>, x: &[f64]) -> Result<(f64, f64)> {
    np.moments_at(x)
}

/// Average of independent per-tree noised draws, trees taken in order.
pub fn forest_noised_predict<M: TreeEnsemble + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x: &[f64],
    vars: VarSet,
    mode: NoisingMode,
    rng: &mut R,
) -> Result<f64> {
    let trees = model.trees();
    if trees.is_empty() {
        return Err(Error::EmptyForest);
    }
    let mut sum = 0.0;
    for tree in trees {
        sum += noised_predict_sample(tree, x, vars, mode, rng)?;
    }
    Ok(sum / trees.len() as f64)
}
