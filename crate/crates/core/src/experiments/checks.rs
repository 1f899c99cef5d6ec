//! Randomized identity and invariant suite over trees, subtrees, noising,
//! importance limits and forests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::forest::{grow_forest, oob_mse, ForestConfig};
use crate::noising::VarSet;
use crate::seed::stream_rng;
use crate::subtree::{
    estimate_pi, maximal_subtrees, node_mse, paired_maximal_subtrees, path_distribution, terminal_regions,
};
use crate::tree::{grow_tree, rectangle_indicator_tree, GrowConfig, Tree};
use crate::vimp::{association_limit, delta_exact, delta_formula, delta_limit, forest_limit_quantities, SignalSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Largest violation seen (0 when every instance is exact).
    pub worst: f64,
    pub tolerance: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!(
                "{} {:<24} worst {:.3e} (tol {:.0e}, {} instances)\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.worst,
                c.tolerance,
                c.instances
            ));
        }
        s
    }
}

/// Accumulates the worst residual of one check.
struct Tally {
    name: &'static str,
    tolerance: f64,
    worst: f64,
    instances: usize,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            worst: 0.0,
            instances: 0,
        }
    }

    fn record(&mut self, residual: f64) {
        self.instances += 1;
        // NaN residuals count as failures
        if residual.is_nan() || residual > self.worst {
            self.worst = if residual.is_nan() { f64::INFINITY } else { residual };
        }
    }

    fn finish(self) -> CheckOutcome {
        CheckOutcome {
            name: self.name.into(),
            passed: self.worst <= self.tolerance,
            worst: self.worst,
            tolerance: self.tolerance,
            instances: self.instances,
        }
    }
}

/// Random regression data on `[0,1]^d` with steps, an interaction and noise.
pub fn random_dataset<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Dataset> {
    let steps: Vec<(f64, f64)> = (0..d)
        .map(|_| (rng.random_range(-3.0..3.0), rng.random::<f64>()))
        .collect();
    let gamma = rng.random_range(-5.0..5.0);
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let mut y = gamma * x[0] * x[d - 1] + rng.random_range(-0.5..0.5);
        for (j, &(beta, t)) in steps.iter().enumerate() {
            if x[j] > t {
                y += beta;
            }
        }
        ys.push(y);
        rows.push(x);
    }
    Dataset::from_rows(ys, rows)
}

/// A CART tree on random data with `d` in [2, 8] and `n` in [50, 500].
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R) -> Result<(Dataset, Tree)> {
    let d = rng.random_range(2..=8);
    let n = rng.random_range(50..=500);
    let data = random_dataset(n, d, rng)?;
    let config = GrowConfig {
        min_node_size: rng.random_range(1..=8),
        ..GrowConfig::default()
    };
    let tree = grow_tree(&data, &config, rng)?;
    Ok((data, tree))
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Hooks {
    /// Perturbs every node mean squared error used by the limit checks.
    pub corrupt_theta: bool,
}

pub fn run_theory_checks(seed: u64, trials: usize) -> Result<CheckReport> {
    run_with_hooks(seed, trials, Hooks::default())
}

pub(crate) fn run_with_hooks(seed: u64, trials: usize, hooks: Hooks) -> Result<CheckReport> {
    let trials = trials.max(1);
    let theta_shift = if hooks.corrupt_theta { 1e-3 } else { 0.0 };

    let mut partition = Tally::new("partition", 0.0);
    let mut training_mean = Tally::new("training_mean", 1e-9);
    let mut mass_law = Tally::new("mass_law", 0.0);
    let mut theta_nonneg = Tally::new("theta0_nonnegative", 0.0);
    let mut pi_sum = Tally::new("pi_sums_to_one", 1e-12);
    let mut corollary = Tally::new("corollary1_identity", 1e-10);
    let mut exactness = Tally::new("exact_equals_formula", 1e-10);
    let mut assoc_sign = Tally::new("association_sign", 0.0);
    let mut decomposition = Tally::new("pair_decomposition", 1e-10);
    let mut jensen = Tally::new("jensen_bound", 1e-12);
    let mut rectangle = Tally::new("rectangle_construction", 0.0);

    for t in 0..trials {
        let mut rng = stream_rng(seed, &[t as u64]);
        let (data, tree) = random_tree(&mut rng)?;
        let d = data.dim();
        let fitted = tree.fitted_values();
        let test = random_dataset(rng.random_range(20..=200), d, &mut rng)?;
        let pi = estimate_pi(&tree, &test)?;

        // every training row in exactly one terminal box, counts consistent
        let regions = terminal_regions(&tree);
        let counts = tree.terminal_counts();
        let mut seen = vec![0usize; tree.num_terminals()];
        let mut sums = vec![0.0; tree.num_terminals()];
        let mut violations = 0usize;
        for (x, y) in data.rows() {
            let label = tree.node_membership(x)?;
            seen[label - 1] += 1;
            sums[label - 1] += y;
            let boxes = regions
                .iter()
                .filter(|b| b.iter().zip(x).all(|(&(lo, hi), &xi)| xi > lo && xi <= hi))
                .count();
            violations += usize::from(boxes != 1);
        }
        violations += seen.iter().zip(&counts).filter(|(a, b)| a != b).count();
        partition.record(violations as f64);
        for m in 0..tree.num_terminals() {
            training_mean.record((fitted[m] - sums[m] / seen[m] as f64).abs());
        }
        pi_sum.record((pi.sum() - 1.0).abs());

        for v in 0..d {
            for s in maximal_subtrees(&tree, v)? {
                let pd = path_distribution(&s, &fitted)?;
                let dyadic = s
                    .depths
                    .iter()
                    .filter(|(label, &depth)| pd.mass_of(**label) != Some(0.5f64.powi(depth as i32)))
                    .count();
                mass_law.record(dyadic as f64 + (pd.total_mass() - 1.0).abs());
                theta_nonneg.record((-node_mse(&s, &fitted, &pi)?).max(0.0));
            }
            let vars = VarSet::Single(v);
            let formula = delta_formula(&tree, vars, &SignalSpec::Fitted, &pi)?.delta;
            let limit = delta_limit(&tree, vars, &fitted, &pi)?.delta + theta_shift;
            corollary.record((formula - limit).abs() / (1.0 + limit.abs()));
        }

        // exact conditional importance is the closed form with test means
        let mut test_sums = vec![0.0; tree.num_terminals()];
        let mut test_counts = vec![0usize; tree.num_terminals()];
        for (x, y) in test.rows() {
            let m = tree.node_membership(x)? - 1;
            test_sums[m] += y;
            test_counts[m] += 1;
        }
        let test_means: Vec<f64> = (0..tree.num_terminals())
            .map(|m| test_sums[m] / test_counts[m].max(1) as f64)
            .collect();
        let signal = SignalSpec::explicit(std::slice::from_ref(&test_means));
        let v = rng.random_range(0..d);
        let exact = delta_exact(&tree, VarSet::Single(v), &test)?.delta;
        let formula = delta_formula(&tree, VarSet::Single(v), &signal, &pi)?.delta;
        exactness.record((exact - formula).abs() / (1.0 + exact.abs()));

        for v in 0..d {
            for w in v + 1..d {
                let limit = association_limit(&tree, v, w, &fitted, &pi)? - theta_shift;
                let paired = paired_maximal_subtrees(&tree, v, w)?;
                let mut violation = limit.max(0.0);
                if paired.is_orthogonal() && limit != 0.0 {
                    violation += limit.abs();
                }
                assoc_sign.record(violation);
                let kept = delta_limit(&tree, VarSet::Pair(v, w), &fitted, &pi)?.delta;
                let singles = delta_limit(&tree, VarSet::Single(v), &fitted, &pi)?.delta
                    + delta_limit(&tree, VarSet::Single(w), &fitted, &pi)?.delta;
                decomposition.record((kept + limit.abs() - singles).abs() / (1.0 + singles.abs()));
            }
        }

        // forests without bootstrap, one to six trees
        let b = rng.random_range(1..=6);
        let forest = grow_forest(
            &data,
            &ForestConfig {
                num_trees: b,
                mtry: rng.random_range(1..=d),
                bootstrap: false,
                min_node_size: rng.random_range(2..=8),
                seed: rng.random(),
            },
        )?;
        let values0: Vec<Vec<f64>> = forest.trees.iter().map(Tree::fitted_values).collect();
        let weights = forest
            .trees
            .iter()
            .map(|t| estimate_pi(t, &test))
            .collect::<Result<Vec<_>>>()?;
        for v in 0..d {
            let lim = forest_limit_quantities(&forest, VarSet::Single(v), &values0, &weights, &test)?;
            let mut violation = (lim.r_squared - lim.jensen_bound).max(0.0);
            if b == 1 {
                violation = violation.max((lim.r_squared - lim.jensen_bound).abs());
            }
            jensen.record(violation);
        }

        // indicator of (0, c]-box built as a d+1 terminal tree
        let dim = [1, 2, 5, 10][t % 4];
        let cuts: Vec<f64> = (0..dim).map(|_| rng.random_range(0.05..0.95)).collect();
        let rect = rectangle_indicator_tree(&cuts)?;
        let mut mismatches = usize::from(rect.num_terminals() != dim + 1);
        for _ in 0..200 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
            let inside = x.iter().zip(&cuts).all(|(xi, c)| xi <= c);
            mismatches += usize::from(rect.predict(&x)? != f64::from(u8::from(inside)));
        }
        rectangle.record(mismatches as f64);
    }

    // out-of-bag coverage at B = 1000, n = 100
    let mut oob = Tally::new("oob_no_skipped_rows", 0.0);
    let mut rng = stream_rng(seed, &[u64::MAX]);
    let data = random_dataset(100, 3, &mut rng)?;
    let forest = grow_forest(
        &data,
        &ForestConfig {
            num_trees: 1000,
            mtry: 2,
            bootstrap: true,
            min_node_size: 5,
            seed: rng.random(),
        },
    )?;
    oob.record(oob_mse(&forest, &data)?.skipped as f64);

    let checks = [
        partition,
        training_mean,
        mass_law,
        theta_nonneg,
        pi_sum,
        corollary,
        exactness,
        assoc_sign,
        decomposition,
        jensen,
        rectangle,
        oob,
    ]
    .into_iter()
    .map(Tally::finish)
    .collect();
    Ok(CheckReport { seed, trials, checks })
}
