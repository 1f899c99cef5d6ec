//! Tree ensembles: independent trees averaged with equal weight.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::stream_rng;
use crate::tree::{grow_tree, GrowConfig, Tree};

/// Anything that predicts by averaging a list of trees.
pub trait TreeEnsemble {
    fn trees(&self) -> &[Tree];

    /// Mean of the tree predictions, summed in tree order.
    fn ensemble_predict(&self, x: &[f64]) -> Result<f64> {
        let trees = self.trees();
        if trees.is_empty() {
            return Err(Error::EmptyForest);
        }
        let mut sum = 0.0;
        for tree in trees {
            sum += tree.predict(x)?;
        }
        Ok(sum / trees.len() as f64)
    }
}

impl TreeEnsemble for Tree {
    fn trees(&self) -> &[Tree] {
        std::slice::from_ref(self)
    }
}

impl TreeEnsemble for [Tree] {
    fn trees(&self) -> &[Tree] {
        self
    }
}

impl TreeEnsemble for Vec<Tree> {
    fn trees(&self) -> &[Tree] {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub mtry: usize,
    pub bootstrap: bool,
    pub min_node_size: usize,
    pub seed: u64,
}

impl ForestConfig {
    /// Bootstrap-free forest trying every variable at every node.
    pub fn deterministic(num_trees: usize, d: usize) -> Self {
        Self {
            num_trees,
            mtry: d,
            bootstrap: false,
            min_node_size: 5,
            seed: 0,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.num_trees == 0 {
            return Err(Error::InvalidConfig("num_trees must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > d {
            return Err(Error::InvalidConfig(format!(
                "mtry = {} must lie in [1, {d}]",
                self.mtry
            )));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidConfig("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
    /// Sorted bootstrap draws per tree; empty without bootstrap.
    pub inbag: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub response: String,
}

impl TreeEnsemble for Forest {
    fn trees(&self) -> &[Tree] {
        &self.trees
    }
}

impl Forest {
    /// Wraps hand-built trees as a bootstrap-free forest.
    pub fn from_trees(trees: Vec<Tree>) -> Result<Self> {
        let first = trees.first().ok_or(Error::EmptyForest)?;
        let d = first.dim();
        if let Some(t) = trees.iter().find(|t| t.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: t.dim(),
            });
        }
        Ok(Self {
            config: ForestConfig::deterministic(trees.len(), d),
            trees,
            inbag: Vec::new(),
            columns: Vec::new(),
            response: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.trees.first().map_or(0, Tree::dim)
    }

    /// Rows of the training data not drawn for tree `b`.
    pub fn oob_rows(&self, b: usize, n: usize) -> Vec<usize> {
        let mask = inbag_mask(&self.inbag[b], n);
        (0..n).filter(|&i| !mask[i]).collect()
    }
}

fn inbag_mask(draws: &[usize], n: usize) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in draws {
        mask[i] = true;
    }
    mask
}

/// Grows `config.num_trees` trees in parallel.
///
/// Tree `b` draws its bootstrap sample (when enabled) and its per-node
/// variable subsets from the stream `stream_rng(seed, [b])`, so the forest
/// does not depend on thread scheduling.
pub fn grow_forest(data: &Dataset, config: &ForestConfig) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    config.validate(data.dim())?;
    let n = data.len();
    let grown = (0..config.num_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, &[b as u64]);
            let grow = GrowConfig {
                min_node_size: config.min_node_size,
                max_depth: None,
                mtry: Some(config.mtry),
                seed: config.seed,
            };
            if config.bootstrap {
                let mut draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                draws.sort_unstable();
                let tree = grow_tree(&data.subset(&draws), &grow, &mut rng)?;
                Ok((tree, draws))
            } else {
                Ok((grow_tree(data, &grow, &mut rng)?, Vec::new()))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (trees, draws): (Vec<Tree>, Vec<Vec<usize>>) = grown.into_iter().unzip();
    Ok(Forest {
        config: config.clone(),
        trees,
        inbag: if config.bootstrap { draws } else { Vec::new() },
        columns: data.column_names().to_vec(),
        response: data.response_name().to_string(),
    })
}

pub fn forest_predict(forest: &Forest, x: &[f64]) -> Result<f64> {
    forest.ensemble_predict(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobError {
    pub mse: f64,
    /// Rows with no out-of-bag tree.
    pub skipped: usize,
}

/// Out-of-bag mean squared error over the forest's own training data.
pub fn oob_mse(forest: &Forest, data: &Dataset) -> Result<OobError> {
    if !forest.config.bootstrap || forest.inbag.is_empty() {
        return Err(Error::NoOutOfBag);
    }
    let n = data.len();
    if forest.inbag.iter().flatten().any(|&i| i >= n) {
        return Err(Error::InvalidData("in-bag indices exceed the data size".into()));
    }
    let masks: Vec<Vec<bool>> = forest.inbag.iter().map(|d| inbag_mask(d, n)).collect();
    let per_row = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = data.row(i);
            let (mut sum, mut count) = (0.0, 0usize);
            for (tree, mask) in forest.trees.iter().zip(&masks) {
                if !mask[i] {
                    sum += tree.predict(x)?;
                    count += 1;
                }
            }
            Ok((count > 0).then(|| (data.response(i) - sum / count as f64).powi(2)))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let used: Vec<f64> = per_row.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::NoOutOfBag);
    }
    Ok(OobError {
        mse: used.iter().sum::<f64>() / used.len() as f64,
        skipped: n - used.len(),
    })
}
