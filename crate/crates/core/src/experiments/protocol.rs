//! Replicated train/test protocol with permutation importances, and the two
//! studies built on it: the air-quality data and the synthetic
//! interaction model.

use std::f64::consts::PI;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::experiments::data::airquality;
use crate::experiments::report::{AssociationRow, AssociationTable, SingleImportance};
use crate::forest::{grow_forest, oob_mse, ForestConfig};
use crate::noising::VarSet;
use crate::seed::stream_rng;
use crate::vimp::{mse, permutation_vimp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub train_fraction: f64,
    pub num_trees: usize,
    pub mtry: usize,
    pub replicates: usize,
    pub min_node_size: usize,
    pub seed: u64,
    /// Reuse each variable's single-variable permutation inside its pairs
    /// (common random numbers) instead of drawing fresh ones.
    #[serde(default = "default_shared")]
    pub shared_permutations: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.63,
            num_trees: 1000,
            mtry: 3,
            replicates: 1000,
            min_node_size: 5,
            seed: 0,
            shared_permutations: true,
        }
    }
}

fn default_shared() -> bool {
    true
}

impl ProtocolConfig {
    /// Reduced scale for quick runs: 200 trees, 100 replicates.
    pub fn fast() -> Self {
        Self {
            num_trees: 200,
            replicates: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub num_datasets: usize,
    /// Drop every signal term, leaving pure noise responses.
    pub pure_noise: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            num_datasets: 100,
            pure_noise: false,
        }
    }
}

impl SimulationConfig {
    pub fn fast() -> Self {
        Self {
            num_datasets: 20,
            ..Self::default()
        }
    }
}

/// How pairs are ordered in the emitted table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOrder {
    /// Variables ranked by averaged single importance, most important first.
    ByImportance,
    /// Variables in column order.
    ByColumn,
}

/// One train/test replicate: permutation importances for every variable
/// and every pair `(i, j)`, `i < j` in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub dataset: usize,
    pub replicate: usize,
    pub oob_mse: f64,
    pub singles: Vec<f64>,
    pub pairs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub table: AssociationTable,
    pub variables: Vec<String>,
    /// Replicates in (dataset, replicate) order.
    pub records: Vec<ReplicateRecord>,
}

impl ProtocolRun {
    /// One CSV line per replicate and pair, full precision.
    pub fn write_replicates<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dataset,replicate,pair,paired,additive,oob_mse")?;
        let pairs = column_pairs(self.variables.len());
        for rec in &self.records {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{}:{},{},{},{}",
                    rec.dataset,
                    rec.replicate,
                    self.variables[i],
                    self.variables[j],
                    rec.pairs[k],
                    rec.singles[i] + rec.singles[j],
                    rec.oob_mse
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn column_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|i| (i + 1..d).map(move |j| (i, j))).collect()
}

/// Runs `config.replicates` independent replicates on `data`: a fresh
/// simple-random split, a bootstrap forest on the training part, and one
/// independent permutation per variable set on the test part.
pub fn run_replicates(data: &Dataset, config: &ProtocolConfig, dataset: usize) -> Result<Vec<ReplicateRecord>> {
    config.validate()?;
    let n = data.len();
    let n_train = (config.train_fraction * n as f64).round() as usize;
    if n_train < 1 || n - n_train < 2 {
        return Err(Error::InvalidData(format!(
            "{n} rows are too few for a train/test split"
        )));
    }
    let d = data.dim();
    let pairs = column_pairs(d);
    (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, &[1, dataset as u64, r as u64]);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let (mut train_idx, mut test_idx) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
            train_idx.sort_unstable();
            test_idx.sort_unstable();
            let (train, test) = (data.subset(&train_idx), data.subset(&test_idx));
            let forest = grow_forest(
                &train,
                &ForestConfig {
                    num_trees: config.num_trees,
                    mtry: config.mtry,
                    bootstrap: true,
                    min_node_size: config.min_node_size,
                    seed: rng.random(),
                },
            )?;
            let oob = oob_mse(&forest, &train)?.mse;
            if config.shared_permutations {
                let (singles, paired) = shared_permutation_deltas(&forest, &test, &pairs, &mut rng)?;
                return Ok(ReplicateRecord {
                    dataset,
                    replicate: r,
                    oob_mse: oob,
                    singles,
                    pairs: paired,
                });
            }
            let singles = (0..d)
                .map(|v| Ok(permutation_vimp(&forest, &test, VarSet::Single(v), 1, &mut rng)?.delta))
                .collect::<Result<Vec<_>>>()?;
            let paired = pairs
                .iter()
                .map(|&(v, w)| Ok(permutation_vimp(&forest, &test, VarSet::Pair(v, w), 1, &mut rng)?.delta))
                .collect::<Result<Vec<_>>>()?;
            Ok(ReplicateRecord {
                dataset,
                replicate: r,
                oob_mse: oob,
                singles,
                pairs: paired,
            })
        })
        .collect()
}

/// One permutation per column, applied to the column alone and to every
/// pair containing it.
fn shared_permutation_deltas<R: Rng + ?Sized>(
    forest: &crate::forest::Forest,
    test: &Dataset,
    pairs: &[(usize, usize)],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = mse(forest, test)?;
    let shuffled: Vec<Vec<f64>> = (0..test.dim())
        .map(|v| {
            let mut col = test.column(v);
            col.shuffle(rng);
            col
        })
        .collect();
    let singles = (0..test.dim())
        .map(|v| Ok(mse(forest, &test.with_column(v, &shuffled[v]))? - base))
        .collect::<Result<Vec<_>>>()?;
    let paired = pairs
        .iter()
        .map(|&(v, w)| {
            let both = test.with_column(v, &shuffled[v]).with_column(w, &shuffled[w]);
            Ok(mse(forest, &both)? - base)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((singles, paired))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Averages replicates in index order into a table.
pub fn summarize(
    variables: &[String],
    records: &[ReplicateRecord],
    order: PairOrder,
    config: &ProtocolConfig,
) -> AssociationTable {
    let d = variables.len();
    let singles: Vec<f64> = (0..d).map(|v| mean(records.iter().map(|r| r.singles[v]))).collect();
    let reference_mse = mean(records.iter().map(|r| r.oob_mse));

    let mut ranked: Vec<usize> = (0..d).collect();
    if order == PairOrder::ByImportance {
        ranked.sort_by(|&a, &b| singles[b].total_cmp(&singles[a]).then(a.cmp(&b)));
    }
    let pair_index = |i: usize, j: usize| {
        let (i, j) = (i.min(j), i.max(j));
        // position of (i, j) in the column-order pair list
        i * (2 * d - i - 1) / 2 + (j - i - 1)
    };
    let mut rows = Vec::new();
    for (a, &v) in ranked.iter().enumerate() {
        for &w in &ranked[a + 1..] {
            let k = pair_index(v, w);
            let paired = mean(records.iter().map(|r| r.pairs[k]));
            let additive = mean(records.iter().map(|r| r.singles[v] + r.singles[w]));
            rows.push(AssociationRow::new(
                format!("{}:{}", variables[v], variables[w]),
                paired,
                additive,
                reference_mse,
            ));
        }
    }
    AssociationTable {
        rows,
        singles: ranked
            .iter()
            .map(|&v| SingleImportance {
                variable: variables[v].clone(),
                importance: singles[v],
            })
            .collect(),
        reference_mse,
        replicates: records.len(),
        seed: config.seed,
        config: Some(config.clone()),
        notes: vec![
            "importances are test-set permutation proxies averaged over replicates".into(),
            if config.shared_permutations {
                "each replicate permutes every column once; pairs reuse the single-variable permutations".into()
            } else {
                "single-variable and paired permutations are drawn independently".into()
            },
            "assoc_per_mse = association / mean training out-of-bag MSE * 100".into(),
        ],
    }
}

pub fn run_airquality_with_replicates(config: &ProtocolConfig) -> Result<ProtocolRun> {
    let loaded = airquality()?;
    let variables = loaded.data.column_names().to_vec();
    let records = run_replicates(&loaded.data, config, 0)?;
    let mut table = summarize(&variables, &records, PairOrder::ByImportance, config);
    table.notes.insert(
        0,
        format!(
            "air-quality data: complete cases only ({} rows kept, {} dropped); response is the cube root of ozone",
            loaded.data.len(),
            loaded.dropped
        ),
    );
    Ok(ProtocolRun {
        table,
        variables,
        records,
    })
}

pub fn run_airquality(config: &ProtocolConfig) -> Result<AssociationTable> {
    Ok(run_airquality_with_replicates(config)?.table)
}

pub const SIMULATION_VARIABLES: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

/// `30 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 20 x1 x4 + 5 x5`; the sixth
/// coordinate is unused.
pub fn simulation_signal(x: &[f64]) -> f64 {
    30.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 20.0 * x[0] * x[3] + 5.0 * x[4]
}

/// `n` rows with six uniform covariates and standard normal noise.
pub fn simulate_data<R: Rng + ?Sized>(n: usize, pure_noise: bool, rng: &mut R) -> Result<Dataset> {
    let mut rows = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        let eps: f64 = rng.sample(StandardNormal);
        ys.push(if pure_noise { eps } else { simulation_signal(&x) + eps });
        rows.push(x);
    }
    Dataset::new(
        SIMULATION_VARIABLES.iter().map(|s| s.to_string()).collect(),
        "y",
        ys,
        rows,
    )
}

pub fn run_simulation_with_replicates(config: &ProtocolConfig, sim: &SimulationConfig) -> Result<ProtocolRun> {
    if sim.n < 10 {
        return Err(Error::InvalidConfig(format!("n = {} must be at least 10", sim.n)));
    }
    if sim.num_datasets == 0 {
        return Err(Error::InvalidConfig("num_datasets must be at least 1".into()));
    }
    let per_dataset = (0..sim.num_datasets)
        .into_par_iter()
        .map(|k| {
            let data = simulate_data(sim.n, sim.pure_noise, &mut stream_rng(config.seed, &[0, k as u64]))?;
            run_replicates(&data, config, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<ReplicateRecord> = per_dataset.into_iter().flatten().collect();
    let variables: Vec<String> = SIMULATION_VARIABLES.iter().map(|s| s.to_string()).collect();
    let mut table = summarize(&variables, &records, PairOrder::ByColumn, config);
    table.notes.insert(
        0,
        format!(
            "simulated data: {} datasets of n = {}, y = {}",
            sim.num_datasets,
            sim.n,
            if sim.pure_noise {
                "N(0,1)"
            } else {
                "30 sin(pi a b) + 20 (c - 0.5)^2 + 20 a d + 5 e + N(0,1), f is noise"
            }
        ),
    );
    Ok(ProtocolRun {
        table,
        variables,
        records,
    })
}

pub fn run_simulation(config: &ProtocolConfig, sim: &SimulationConfig) -> Result<AssociationTable> {
    Ok(run_simulation_with_replicates(config, sim)?.table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ProtocolConfig {
        ProtocolConfig {
            num_trees: 20,
            replicates: 4,
            seed: 11,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig {
            train_fraction: 1.0,
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(ProtocolConfig {
            replicates: 0,
            ..tiny()
        }
        .validate()
        .is_err());
        assert!(tiny().validate().is_ok());
        let fast = ProtocolConfig::fast();
        assert_eq!((fast.num_trees, fast.replicates, fast.mtry), (200, 100, 3));
    }

    #[test]
    fn pair_index_matches_column_pairs() {
        let names: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        let records = vec![ReplicateRecord {
            dataset: 0,
            replicate: 0,
            oob_mse: 1.0,
            singles: vec![0.0; 5],
            pairs: (0..10).map(f64::from).collect(),
        }];
        let t = summarize(&names, &records, PairOrder::ByColumn, &tiny());
        for (k, (i, j)) in column_pairs(5).into_iter().enumerate() {
            assert_eq!(t.row(&format!("{i}:{j}")).unwrap().paired, k as f64);
        }
    }

    #[test]
    fn summary_is_replicate_mean() {
        let names = vec!["p".to_string(), "q".to_string(), "r".to_string()];
        let rec = |s: [f64; 3], p: [f64; 3], oob| ReplicateRecord {
            dataset: 0,
            replicate: 0,
            oob_mse: oob,
            singles: s.to_vec(),
            pairs: p.to_vec(),
        };
        let records = vec![
            rec([1.0, 2.0, 0.0], [4.0, 1.0, 2.0], 2.0),
            rec([3.0, 0.0, 0.0], [2.0, 1.0, 2.0], 4.0),
        ];
        let t = summarize(&names, &records, PairOrder::ByImportance, &tiny());
        // importance: p = 2, q = 1, r = 0
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["p:q", "p:r", "q:r"]);
        let pq = t.row("p:q").unwrap();
        assert_eq!((pq.paired, pq.additive, pq.association), (3.0, 3.0, 0.0));
        assert_eq!(t.reference_mse, 3.0);
        let qr = t.row("q:r").unwrap();
        assert_eq!((qr.paired, qr.additive, qr.standardized), (2.0, 1.0, 1.0 / 3.0 * 100.0));
    }

    #[test]
    fn airquality_is_deterministic() {
        let cfg = ProtocolConfig {
            replicates: 1,
            ..tiny()
        };
        let a = run_airquality(&cfg).unwrap();
        let b = run_airquality(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 10);
        assert!(a.rows.iter().all(|r| r.association == r.paired - r.additive));
    }

    #[test]
    fn simulation_shape() {
        let sim = SimulationConfig {
            n: 40,
            num_datasets: 2,
            pure_noise: false,
        };
        let run = run_simulation_with_replicates(&tiny(), &sim).unwrap();
        assert_eq!(run.table.rows.len(), 15);
        assert_eq!(run.table.rows[0].label, "a:b");
        assert_eq!(run.table.rows[14].label, "e:f");
        assert_eq!(run.records.len(), 8);
        assert_eq!(run_simulation(&tiny(), &sim).unwrap(), run.table);
        assert!(run_simulation(&tiny(), &SimulationConfig { n: 5, ..sim }).is_err());
    }

    #[test]
    fn simulated_covariates_are_uniform() {
        let data = simulate_data(2000, false, &mut stream_rng(3, &[])).unwrap();
        for v in 0..6 {
            let col = data.column(v);
            assert!(col.iter().all(|x| (0.0..1.0).contains(x)));
            let m = col.iter().sum::<f64>() / 2000.0;
            assert!((m - 0.5).abs() < 0.03, "column {v} mean {m}");
        }
        let noise = simulate_data(2000, true, &mut stream_rng(3, &[])).unwrap();
        let m = noise.responses().iter().sum::<f64>() / 2000.0;
        assert!(m.abs() < 0.1);
    }

    #[test]
    fn replicate_dump() {
        let cfg = ProtocolConfig {
            replicates: 2,
            ..tiny()
        };
        let run = run_airquality_with_replicates(&cfg).unwrap();
        let mut buf = Vec::new();
        run.write_replicates(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 10);
        assert!(text.starts_with("dataset,replicate,pair,paired,additive,oob_mse\n0,0,Solar:Wind,"));
    }
}
