//! Prediction error, variable importance and pairwise association.
//!
//! Everything here is conditional on a trained model and a supplied sample:
//! `delta_exact` integrates the random-path draws analytically, `delta_mc`
//! samples them, `delta_formula`/`delta_limit` evaluate the terminal-value
//! closed forms, and `permutation_vimp` is the column-permutation proxy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::TreeEnsemble;
use crate::noising::{
    build_forest_noised_predictor, noised_predict_sample, noising_regions, ForestNoisedPredictor, NoisingMode, VarSet,
};
use crate::seed::stream_rng;
use crate::subtree::{
    node_mse, paired_maximal_subtrees, path_distribution, subtree_moments, terminal_value, PiWeights,
};
use crate::tree::Tree;

/// Known regression function `mu(x)`.
pub type RegressionFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Source of the "true" terminal values `a_{m,0}`.
#[derive(Clone)]
pub enum SignalSpec {
    /// The model's own fitted values.
    Fitted,
    /// `(tree index, terminal label) -> a_{m,0}`.
    Explicit(BTreeMap<(usize, usize), f64>),
    /// A known regression function; `a_{m,0}` is its mean over the design
    /// points landing in terminal `m` (the fitted value when none do).
    TrueFunction { mu: RegressionFn, design: Dataset },
}

impl fmt::Debug for SignalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSpec::Fitted => write!(f, "Fitted"),
            SignalSpec::Explicit(map) => f.debug_tuple("Explicit").field(map).finish(),
            SignalSpec::TrueFunction { design, .. } => {
                write!(f, "TrueFunction {{ design rows: {} }}", design.len())
            }
        }
    }
}

impl SignalSpec {
    /// Per-tree terminal values from a list indexed `[tree][label - 1]`.
    pub fn explicit(values: &[Vec<f64>]) -> Self {
        let map = values
            .iter()
            .enumerate()
            .flat_map(|(b, vals)| vals.iter().enumerate().map(move |(i, &v)| ((b, i + 1), v)))
            .collect();
        SignalSpec::Explicit(map)
    }

    /// `a_{m,0}` for every terminal of `tree`, indexed by `label - 1`.
    pub fn values_for(&self, tree_index: usize, tree: &Tree) -> Result<Vec<f64>> {
        match self {
            SignalSpec::Fitted => Ok(tree.fitted_values()),
            SignalSpec::Explicit(map) => (1..=tree.num_terminals())
                .map(|label| {
                    map.get(&(tree_index, label))
                        .copied()
                        .ok_or(Error::MissingTerminalValue { label })
                })
                .collect(),
            SignalSpec::TrueFunction { mu, design } => {
                design.check_dim(tree.dim())?;
                let m = tree.num_terminals();
                let (mut sums, mut counts) = (vec![0.0; m], vec![0usize; m]);
                for (x, _) in design.rows() {
                    let k = tree.node_membership(x)? - 1;
                    sums[k] += mu(x);
                    counts[k] += 1;
                }
                let fitted = tree.fitted_values();
                Ok((0..m)
                    .map(|k| {
                        if counts[k] > 0 {
                            sums[k] / counts[k] as f64
                        } else {
                            fitted[k]
                        }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VimpMethod {
    ExactConditional,
    MonteCarlo,
    TheoremFormula,
    Limit,
    PermutationProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VimpResult {
    pub delta: f64,
    /// Standard error of the replicate mean (sampled methods only).
    pub std_error: Option<f64>,
    pub method: VimpMethod,
}

impl VimpResult {
    fn exact(delta: f64, method: VimpMethod) -> Self {
        Self {
            delta,
            std_error: None,
            method,
        }
    }

    fn sampled(diffs: &[f64], method: VimpMethod) -> Self {
        let (delta, se) = mean_and_se(diffs);
        Self {
            delta,
            std_error: Some(se),
            method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub paired: f64,
    pub additive: f64,
    pub association: f64,
    /// `association / reference_mse * 100`.
    pub standardized: f64,
}

impl AssociationResult {
    pub fn new(paired: f64, additive: f64, reference_mse: f64) -> Self {
        let association = paired - additive;
        Self {
            paired,
            additive,
            association,
            standardized: association / reference_mse * 100.0,
        }
    }
}

/// Mean and standard error of the mean, summed in index order.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_test(test: &Dataset) -> Result<()> {
    if test.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// Mean squared error of the ensemble on `test`.
pub fn mse<M: TreeEnsemble + ?Sized>(model: &M, test: &Dataset) -> Result<f64> {
    check_test(test)?;
    let mut sum = 0.0;
    for (x, y) in test.rows() {
        sum += (y - model.ensemble_predict(x)?).powi(2);
    }
    Ok(sum / test.len() as f64)
}

/// Expected squared error of a noised predictor, integrating the path draws:
/// the mean over rows of `(y - mean(x))^2 + variance(x)`.
pub fn noised_mse(np: &ForestNoisedPredictor<'_>, test: &Dataset) -> Result<f64> {
    check_test(test)?;
    let mut sum = 0.0;
    for (x, y) in test.rows() {
        let (mean, var) = np.moments_at(x)?;
        sum += (y - mean).powi(2) + var;
    }
    Ok(sum / test.len() as f64)
}

/// `P(noised) - P(model)` on `test` with the path draws integrated exactly.
pub fn delta_exact<M: TreeEnsemble + ?Sized>(model: &M, vars: VarSet, test: &Dataset) -> Result<VimpResult> {
    let np = build_forest_noised_predictor(model, vars)?;
    let delta = noised_mse(&np, test)? - mse(model, test)?;
    Ok(VimpResult::exact(delta, VimpMethod::ExactConditional))
}

/// Monte Carlo version of [`delta_exact`]: each replicate draws fresh coins
/// for every tree and test row. Replicates run in parallel on streams
/// derived from one seed drawn from `rng`.
pub fn delta_mc<M: TreeEnsemble + Sync + ?Sized, R: Rng + ?Sized>(
    model: &M,
    vars: VarSet,
    test: &Dataset,
    replicates: usize,
    mode: NoisingMode,
    rng: &mut R,
) -> Result<VimpResult> {
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be at least 1".into()));
    }
    check_test(test)?;
    let trees = model.trees();
    if trees.is_empty() {
        return Err(Error::EmptyForest);
    }
    if let Some(t) = trees.first() {
        vars.check(t.dim())?;
    }
    let base = mse(model, test)?;
    let seed: u64 = rng.random();
    let b = trees.len() as f64;
    let diffs = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, &[r as u64]);
            let mut sum = 0.0;
            for (x, y) in test.rows() {
                let mut pred = 0.0;
                for tree in trees {
                    pred += noised_predict_sample(tree, x, vars, mode, &mut rng)?;
                }
                sum += (y - pred / b).powi(2);
            }
            Ok(sum / test.len() as f64 - base)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(VimpResult::sampled(&diffs, VimpMethod::MonteCarlo))
}

/// Terminal-value closed form of the noised-up importance:
/// `sum_k sum_{m in M_k} pi_m [s_k^2 + (abar_k - a_m)(abar_k + a_m - 2 a_{m,0})]`
/// with the path moments taken over the fitted values.
pub fn delta_formula(tree: &Tree, vars: VarSet, signal: &SignalSpec, pi: &PiWeights) -> Result<VimpResult> {
    vars.check(tree.dim())?;
    let fitted = tree.fitted_values();
    let values0 = signal.values_for(0, tree)?;
    let mut delta = 0.0;
    for region in noising_regions(tree, vars)? {
        let (mean, var) = subtree_moments(&path_distribution(&region, &fitted)?);
        for label in region.terminals() {
            let a = terminal_value(&fitted, label)?;
            let a0 = terminal_value(&values0, label)?;
            delta += pi.get(label)? * (var + (mean - a) * (mean + a - 2.0 * a0));
        }
    }
    Ok(VimpResult::exact(delta, VimpMethod::TheoremFormula))
}

/// Sum of node mean squared errors over the noised regions.
pub fn delta_limit(tree: &Tree, vars: VarSet, values0: &[f64], pi: &PiWeights) -> Result<VimpResult> {
    vars.check(tree.dim())?;
    let delta = noising_regions(tree, vars)?
        .iter()
        .try_fold(0.0, |acc, region| Ok::<_, Error>(acc + node_mse(region, values0, pi)?))?;
    Ok(VimpResult::exact(delta, VimpMethod::Limit))
}

/// Paired importance against the additive sum of the single importances.
pub fn association<M: TreeEnsemble + ?Sized>(
    model: &M,
    v: usize,
    w: usize,
    test: &Dataset,
    reference_mse: f64,
) -> Result<AssociationResult> {
    if v == w {
        return Err(Error::IdenticalPair);
    }
    let paired = delta_exact(model, VarSet::Pair(v, w), test)?.delta;
    let additive =
        delta_exact(model, VarSet::Single(v), test)?.delta + delta_exact(model, VarSet::Single(w), test)?.delta;
    Ok(AssociationResult::new(paired, additive, reference_mse))
}

/// Limiting association of a single tree: minus the node mean squared error
/// of every subtree counted by both single importances but only once by the
/// paired one (maximal subtrees nested inside a maximal subtree of the other
/// variable).
pub fn association_limit(tree: &Tree, v: usize, w: usize, values0: &[f64], pi: &PiWeights) -> Result<f64> {
    let paired = paired_maximal_subtrees(tree, v, w)?;
    let overcount = paired
        .dropped()
        .try_fold(0.0, |acc, s| Ok::<_, Error>(acc + node_mse(s, values0, pi)?))?;
    Ok(-overcount)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestLimit {
    /// Sample average of `E R_0(x)^2`, path draws integrated per tree.
    pub r_squared: f64,
    /// `B^-1 sum_b sum_k theta_0(k, b)` under the supplied weights.
    pub jensen_bound: f64,
}

struct TreeLimit {
    region_of: Vec<Option<usize>>,
    moments: Vec<(f64, f64)>,
    values0: Vec<f64>,
}

fn tree_limits<M: TreeEnsemble + ?Sized>(model: &M, vars: VarSet, values0: &[Vec<f64>]) -> Result<Vec<TreeLimit>> {
    let trees = model.trees();
    if trees.is_empty() {
        return Err(Error::EmptyForest);
    }
    if values0.len() != trees.len() {
        return Err(Error::InvalidData(format!(
            "{} terminal-value sets for {} trees",
            values0.len(),
            trees.len()
        )));
    }
    trees
        .iter()
        .zip(values0)
        .map(|(tree, vals)| {
            vars.check(tree.dim())?;
            let mut region_of = vec![None; tree.num_terminals()];
            let mut moments = Vec::new();
            for (k, region) in noising_regions(tree, vars)?.iter().enumerate() {
                moments.push(subtree_moments(&path_distribution(region, vals)?));
                for label in region.terminals() {
                    region_of[label - 1] = Some(k);
                }
            }
            Ok(TreeLimit {
                region_of,
                moments,
                values0: vals.clone(),
            })
        })
        .collect()
}

fn limit_r_squared<M: TreeEnsemble + ?Sized>(model: &M, limits: &[TreeLimit], sample: &Dataset) -> Result<f64> {
    check_test(sample)?;
    let b = limits.len() as f64;
    let mut total = 0.0;
    for (x, _) in sample.rows() {
        let (mut mean, mut var) = (0.0, 0.0);
        for (tree, lim) in model.trees().iter().zip(limits) {
            let label = tree.node_membership(x)?;
            if let Some(k) = lim.region_of[label - 1] {
                let (m, s2) = lim.moments[k];
                mean += m - terminal_value(&lim.values0, label)?;
                var += s2;
            }
        }
        total += var / (b * b) + (mean / b).powi(2);
    }
    Ok(total / sample.len() as f64)
}

/// Forest limit of the noised-up importance and its Jensen upper bound.
///
/// `values0[b]` and `pi[b]` are the true terminal values and terminal
/// weights of tree `b`; with `pi[b]` estimated on `sample` the bound holds
/// exactly and is attained when the forest has one tree.
pub fn forest_limit_quantities<M: TreeEnsemble + ?Sized>(
    model: &M,
    vars: VarSet,
    values0: &[Vec<f64>],
    pi: &[PiWeights],
    sample: &Dataset,
) -> Result<ForestLimit> {
    let limits = tree_limits(model, vars, values0)?;
    if pi.len() != limits.len() {
        return Err(Error::InvalidData(format!(
            "{} weight sets for {} trees",
            pi.len(),
            limits.len()
        )));
    }
    let r_squared = limit_r_squared(model, &limits, sample)?;
    let mut bound = 0.0;
    for ((tree, vals), weights) in model.trees().iter().zip(values0).zip(pi) {
        bound += delta_limit(tree, vars, vals, weights)?.delta;
    }
    Ok(ForestLimit {
        r_squared,
        jensen_bound: bound / limits.len() as f64,
    })
}

/// Forest limit of the association:
/// `E R_t^2 - (E R_v^2 + E R_w^2)` averaged over `sample`.
pub fn forest_association_limit<M: TreeEnsemble + ?Sized>(
    model: &M,
    v: usize,
    w: usize,
    values0: &[Vec<f64>],
    sample: &Dataset,
) -> Result<f64> {
    if v == w {
        return Err(Error::IdenticalPair);
    }
    let r = |vars| -> Result<f64> {
        let limits = tree_limits(model, vars, values0)?;
        limit_r_squared(model, &limits, sample)
    };
    Ok(r(VarSet::Pair(v, w))? - (r(VarSet::Single(v))? + r(VarSet::Single(w))?))
}

/// Permutation proxy: test MSE after permuting the noised columns minus the
/// test MSE on the original rows, averaged over replicates. Each replicate
/// draws an independent uniform permutation per variable.
pub fn permutation_vimp<M: TreeEnsemble + Sync + ?Sized, R: Rng + ?Sized>(
    model: &M,
    test: &Dataset,
    vars: VarSet,
    replicates: usize,
    rng: &mut R,
) -> Result<VimpResult> {
    if test.len() < 2 {
        return Err(Error::InvalidData("permutation needs at least two test rows".into()));
    }
    if replicates == 0 {
        return Err(Error::InvalidConfig("replicates must be at least 1".into()));
    }
    vars.check(test.dim())?;
    let base = mse(model, test)?;
    let seed: u64 = rng.random();
    let diffs = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, &[r as u64]);
            Ok(mse(model, &permute_columns(test, vars, &mut rng))? - base)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(VimpResult::sampled(&diffs, VimpMethod::PermutationProxy))
}

/// Copy of `data` with each noised column independently shuffled.
pub fn permute_columns<R: Rng + ?Sized>(data: &Dataset, vars: VarSet, rng: &mut R) -> Dataset {
    let mut out = data.clone();
    for v in vars.to_vec() {
        let mut col = data.column(v);
        col.shuffle(rng);
        out = out.with_column(v, &col);
    }
    out
}
