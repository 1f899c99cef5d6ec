use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vimp_core::experiments::protocol::ProtocolRun;
use vimp_core::experiments::report::SingleImportance;
use vimp_core::experiments::{
    load_csv, run_airquality_with_replicates, run_simulation_with_replicates, run_theory_checks, write_report,
    AssociationRow, AssociationTable, MissingPolicy, ProtocolConfig, SimulationConfig,
};
use vimp_core::seed::stream_rng;
use vimp_core::vimp::{delta_exact, delta_mc, mse, permutation_vimp, VimpResult};
use vimp_core::{grow_forest, Dataset, Error, Forest, ForestConfig, NoisingMode, VarSet};

#[derive(Parser)]
#[command(
    name = "vimp",
    version,
    about = "Tree-ensemble variable importance and pairwise association"
)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Random left-right paths, integrated exactly.
    Exact,
    /// Random left-right paths from the first noised split down, sampled.
    LrRandom,
    /// Random daughters only at splits on a noised variable, sampled.
    LrSplits,
    /// Column permutation of the test data.
    Permute,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a forest from a CSV file.
    Grow {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        #[arg(long, default_value_t = 500)]
        ntree: usize,
        /// Candidate variables per node (default: max(1, d / 3)).
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long, default_value_t = 5)]
        min_node: usize,
        #[arg(long)]
        bootstrap: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Importance of one variable or a pair on test data.
    Vimp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Response column of the test file (default: the model's).
        #[arg(long)]
        response: Option<String>,
        /// Variable names or zero-based indices, e.g. `Temp,Wind`.
        #[arg(long, value_delimiter = ',', num_args = 1..=2)]
        vars: Vec<String>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired, additive and association values for every variable pair.
    Pairs {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        response: Option<String>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `.json` writes JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicated association study on the bundled air-quality data.
    Airquality {
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        ntree: Option<usize>,
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 200 trees and 100 replicates unless overridden.
        #[arg(long)]
        fast: bool,
        /// Draw pair permutations independently of the single-variable ones.
        #[arg(long)]
        independent_permutations: bool,
        #[arg(long)]
        min_node: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write every replicate's values as CSV.
        #[arg(long)]
        dump_replicates: Option<PathBuf>,
    },
    /// Replicated association study on simulated interaction data.
    Simulate {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        datasets: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        ntree: Option<usize>,
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 20 datasets, 200 trees and 100 replicates unless overridden.
        #[arg(long)]
        fast: bool,
        /// Draw pair permutations independently of the single-variable ones.
        #[arg(long)]
        independent_permutations: bool,
        #[arg(long)]
        min_node: Option<usize>,
        /// Responses are pure noise.
        #[arg(long)]
        pure_noise: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dump_replicates: Option<PathBuf>,
    },
    /// Randomized identity and invariant suite.
    Check {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Data(Error),
    Check,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Check) => ExitCode::from(3),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load_model(path: &Path) -> Result<Forest, Failure> {
    let file = std::io::BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file).map_err(Error::from)?)
}

fn load_test(forest: &Forest, path: &Path, response: Option<&str>) -> Result<Dataset, Failure> {
    let response = match response {
        Some(r) => r,
        None if !forest.response.is_empty() => &forest.response,
        None => return Err(Error::InvalidData("the model names no response; pass --response".into()).into()),
    };
    let loaded = load_csv(path, response, MissingPolicy::DropRow)?;
    if !forest.columns.is_empty() && loaded.data.column_names() != forest.columns.as_slice() {
        return Err(Error::InvalidData(format!(
            "test columns {:?} differ from the model's {:?}",
            loaded.data.column_names(),
            forest.columns
        ))
        .into());
    }
    if loaded.dropped > 0 {
        eprintln!("dropped {} test rows with missing values", loaded.dropped);
    }
    Ok(loaded.data)
}

fn parse_var(spec: &str, data: &Dataset) -> Result<usize, Failure> {
    data.column_index(spec)
        .or_else(|| spec.parse().ok().filter(|&i: &usize| i < data.dim()))
        .ok_or_else(|| Error::InvalidData(format!("unknown variable {spec:?}")).into())
}

fn importance(
    forest: &Forest,
    test: &Dataset,
    vars: VarSet,
    mode: Mode,
    replicates: usize,
    seed: u64,
    stream: u64,
) -> Result<VimpResult, Error> {
    let mut rng = stream_rng(seed, &[stream]);
    match mode {
        Mode::Exact => delta_exact(forest, vars, test),
        Mode::LrRandom => delta_mc(forest, vars, test, replicates, NoisingMode::FullRandom, &mut rng),
        Mode::LrSplits => delta_mc(forest, vars, test, replicates, NoisingMode::SplitsOnly, &mut rng),
        Mode::Permute => permutation_vimp(forest, test, vars, replicates, &mut rng),
    }
}

fn write_run(run: &ProtocolRun, out: &Path, dump: Option<&Path>) -> Result<(), Failure> {
    write_report(&run.table, out)?;
    if let Some(path) = dump {
        run.write_replicates(BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Grow {
            data,
            response,
            ntree,
            mtry,
            min_node,
            bootstrap,
            seed,
            out,
        } => {
            let loaded = load_csv(&data, &response, MissingPolicy::DropRow)?;
            if loaded.dropped > 0 {
                eprintln!("dropped {} rows with missing values", loaded.dropped);
            }
            let d = loaded.data.dim();
            let config = ForestConfig {
                num_trees: ntree,
                mtry: mtry.unwrap_or((d / 3).max(1)),
                bootstrap,
                min_node_size: min_node,
                seed,
            };
            let mut forest = grow_forest(&loaded.data, &config)?;
            forest.columns = loaded.data.column_names().to_vec();
            forest.response = response;
            write_json(&forest, &out)
        }
        Command::Vimp {
            model,
            test,
            response,
            vars,
            mode,
            replicates,
            seed,
            out,
        } => {
            let forest = load_model(&model)?;
            let test = load_test(&forest, &test, response.as_deref())?;
            let indices = vars
                .iter()
                .map(|v| parse_var(v, &test))
                .collect::<Result<Vec<_>, _>>()?;
            let result = importance(&forest, &test, VarSet::new(&indices)?, mode, replicates, seed, 0)?;
            let text = serde_json::to_string_pretty(&result).map_err(Error::from)?;
            match out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::Pairs {
            model,
            test,
            response,
            mode,
            replicates,
            seed,
            out,
        } => {
            let forest = load_model(&model)?;
            let test = load_test(&forest, &test, response.as_deref())?;
            let d = test.dim();
            let reference = mse(&forest, &test)?;
            // each variable set gets its own stream: singles 0..d, pairs after
            let singles = (0..d)
                .map(|v| Ok(importance(&forest, &test, VarSet::Single(v), mode, replicates, seed, v as u64)?.delta))
                .collect::<Result<Vec<f64>, Error>>()?;
            let mut rows = Vec::new();
            let mut k = d as u64;
            for v in 0..d {
                for w in v + 1..d {
                    let paired = importance(&forest, &test, VarSet::Pair(v, w), mode, replicates, seed, k)?.delta;
                    k += 1;
                    let names = test.column_names();
                    rows.push(AssociationRow::new(
                        format!("{}:{}", names[v], names[w]),
                        paired,
                        singles[v] + singles[w],
                        reference,
                    ));
                }
            }
            let table = AssociationTable {
                rows,
                singles: test
                    .column_names()
                    .iter()
                    .zip(&singles)
                    .map(|(n, &s)| SingleImportance {
                        variable: n.clone(),
                        importance: s,
                    })
                    .collect(),
                reference_mse: reference,
                replicates,
                seed,
                config: None,
                notes: vec!["assoc_per_mse = association / unnoised test MSE * 100".into()],
            };
            Ok(write_report(&table, &out)?)
        }
        Command::Airquality {
            replicates,
            ntree,
            mtry,
            seed,
            fast,
            independent_permutations,
            min_node,
            out,
            dump_replicates,
        } => {
            let base = if fast {
                ProtocolConfig::fast()
            } else {
                ProtocolConfig::default()
            };
            let config = ProtocolConfig {
                replicates: replicates.unwrap_or(base.replicates),
                num_trees: ntree.unwrap_or(base.num_trees),
                mtry: mtry.unwrap_or(base.mtry),
                seed,
                shared_permutations: !independent_permutations,
                min_node_size: min_node.unwrap_or(base.min_node_size),
                ..base
            };
            let run = run_airquality_with_replicates(&config)?;
            write_run(&run, &out, dump_replicates.as_deref())
        }
        Command::Simulate {
            n,
            datasets,
            replicates,
            ntree,
            mtry,
            seed,
            fast,
            independent_permutations,
            min_node,
            pure_noise,
            out,
            dump_replicates,
        } => {
            let (base, sim_base) = if fast {
                (ProtocolConfig::fast(), SimulationConfig::fast())
            } else {
                (ProtocolConfig::default(), SimulationConfig::default())
            };
            let config = ProtocolConfig {
                replicates: replicates.unwrap_or(base.replicates),
                num_trees: ntree.unwrap_or(base.num_trees),
                mtry: mtry.unwrap_or(base.mtry),
                seed,
                shared_permutations: !independent_permutations,
                min_node_size: min_node.unwrap_or(base.min_node_size),
                ..base
            };
            let sim = SimulationConfig {
                n: n.unwrap_or(sim_base.n),
                num_datasets: datasets.unwrap_or(sim_base.num_datasets),
                pure_noise,
            };
            let run = run_simulation_with_replicates(&config, &sim)?;
            write_run(&run, &out, dump_replicates.as_deref())
        }
        Command::Check { trials, seed, out } => {
            let report = run_theory_checks(seed, trials)?;
            print!("{}", report.render());
            if let Some(path) = out {
                write_json(&report, &path)?;
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Check)
            }
        }
    }
}
