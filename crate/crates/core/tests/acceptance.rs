//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs as a plain binary so the lines are always printed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use vimp_core::experiments::checks::random_tree;
use vimp_core::experiments::{run_airquality, run_simulation, AssociationTable, ProtocolConfig, SimulationConfig};
use vimp_core::noising::{build_noised_predictor, noised_terminal_sample};
use vimp_core::seed::stream_rng;
use vimp_core::subtree::{estimate_pi, paired_maximal_subtrees};
use vimp_core::tree::rectangle_indicator_tree;
use vimp_core::vimp::{
    association_limit, delta_exact, delta_formula, delta_limit, delta_mc, forest_limit_quantities, SignalSpec,
};
use vimp_core::{grow_forest, Dataset, ForestConfig, NoisingMode, Tree, VarSet};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_sample<R: Rng>(n: usize, d: usize, rng: &mut R) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random()).collect()).collect();
    let ys = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() + rng.random::<f64>())
        .collect();
    Dataset::from_rows(ys, rows).unwrap()
}

fn corollary_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for t in 0..100u64 {
        let mut rng = stream_rng(101, &[t]);
        let (data, tree) = random_tree(&mut rng).map_err(|e| e.to_string())?;
        let fitted = tree.fitted_values();
        let pi = estimate_pi(&tree, &random_sample(200, data.dim(), &mut rng)).map_err(|e| e.to_string())?;
        for v in 0..data.dim() {
            let f = delta_formula(&tree, VarSet::Single(v), &SignalSpec::Fitted, &pi)
                .unwrap()
                .delta;
            let l = delta_limit(&tree, VarSet::Single(v), &fitted, &pi).unwrap().delta;
            worst = worst.max((f - l).abs() / (1.0 + l.abs()));
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-10, || format!("worst relative residual {worst:.3e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "{count} (tree, variable) cases, worst residual {worst:.2e}, {secs:.2}s"
    ))
}

fn lemma_exactness() -> Outcome {
    let start = Instant::now();
    const DRAWS: usize = 100_000;
    let tol = 4.0 / (DRAWS as f64).sqrt();
    let (mut worst_freq, mut worst_z) = (0.0f64, 0.0f64);
    let mut triples = 0u64;
    let mut attempt = 0u64;
    while triples < 50 {
        attempt += 1;
        let mut rng = stream_rng(202, &[attempt]);
        let (data, tree) = random_tree(&mut rng).map_err(|e| e.to_string())?;
        let v = rng.random_range(0..data.dim());
        let np = build_noised_predictor(&tree, VarSet::Single(v)).unwrap();
        // a training point inside a v-region
        let Some(x) = (0..data.len())
            .map(|i| data.row(i))
            .find(|x| np.region_at(x).unwrap().is_some())
        else {
            continue;
        };
        let region = np.region_at(x).unwrap().unwrap();
        let mut freq = std::collections::BTreeMap::<usize, usize>::new();
        for _ in 0..DRAWS {
            let label = noised_terminal_sample(&tree, x, VarSet::Single(v), NoisingMode::FullRandom, &mut rng).unwrap();
            *freq.entry(label).or_default() += 1;
        }
        for atom in &region.distribution.atoms {
            let f = freq.get(&atom.label).copied().unwrap_or(0) as f64 / DRAWS as f64;
            worst_freq = worst_freq.max((f - atom.mass).abs());
        }
        ensure(freq.keys().all(|l| region.subtree.contains(*l)), || {
            "draw left the region".into()
        })?;

        let test = random_sample(10, data.dim(), &mut rng);
        let exact = delta_exact(&tree, VarSet::Single(v), &test).unwrap().delta;
        let mc = delta_mc(
            &tree,
            VarSet::Single(v),
            &test,
            DRAWS,
            NoisingMode::FullRandom,
            &mut rng,
        )
        .unwrap();
        let se = mc.std_error.unwrap();
        let z = if se > 0.0 {
            (mc.delta - exact).abs() / se
        } else {
            (mc.delta - exact).abs() * 1e12
        };
        worst_z = worst_z.max(z);
        triples += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst_freq <= tol, || {
        format!("atom frequency off by {worst_freq:.4} > {tol:.4}")
    })?;
    ensure(worst_z <= 4.0, || {
        format!("Monte Carlo {worst_z:.2} standard errors from exact")
    })?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "50 triples, worst atom error {worst_freq:.4} (tol {tol:.4}), worst |z| {worst_z:.2}, {secs:.1}s"
    ))
}

fn association_sign() -> Outcome {
    let (mut pairs, mut nested, mut worst) = (0, 0, 0.0f64);
    for t in 0..100u64 {
        let mut rng = stream_rng(303, &[t]);
        let (data, tree) = random_tree(&mut rng).map_err(|e| e.to_string())?;
        let fitted = tree.fitted_values();
        let pi = estimate_pi(&tree, &data).unwrap();
        let d = data.dim();
        for v in 0..d {
            for w in v + 1..d {
                let a = association_limit(&tree, v, w, &fitted, &pi).unwrap();
                let orthogonal = paired_maximal_subtrees(&tree, v, w).unwrap().is_orthogonal();
                ensure(a <= 0.0, || {
                    format!("tree {t} pair ({v},{w}): association limit {a} > 0")
                })?;
                ensure((a == 0.0) == orthogonal, || {
                    format!("tree {t} pair ({v},{w}): limit {a} but orthogonal = {orthogonal}")
                })?;
                let kept = delta_limit(&tree, VarSet::Pair(v, w), &fitted, &pi).unwrap().delta;
                let singles = delta_limit(&tree, VarSet::Single(v), &fitted, &pi).unwrap().delta
                    + delta_limit(&tree, VarSet::Single(w), &fitted, &pi).unwrap().delta;
                worst = worst.max((kept + a.abs() - singles).abs());
                pairs += 1;
                nested += usize::from(!orthogonal);
            }
        }
    }
    ensure(worst < 1e-10, || format!("decomposition residual {worst:.3e}"))?;
    Ok(format!(
        "{pairs} pairs ({nested} nested), decomposition residual {worst:.2e}"
    ))
}

fn jensen_bound() -> Outcome {
    let mut cases = 0;
    let mut tightest = f64::INFINITY;
    for t in 0..50u64 {
        let mut rng = stream_rng(404, &[t]);
        let (data, _) = random_tree(&mut rng).map_err(|e| e.to_string())?;
        let d = data.dim();
        let sample = random_sample(100, d, &mut rng);
        let forest = grow_forest(
            &data,
            &ForestConfig {
                num_trees: rng.random_range(2..=20),
                mtry: rng.random_range(1..d.max(2)),
                bootstrap: false,
                min_node_size: rng.random_range(2..=8),
                seed: rng.random(),
            },
        )
        .unwrap();
        let values0: Vec<Vec<f64>> = forest.trees.iter().map(Tree::fitted_values).collect();
        let pis: Vec<_> = forest.trees.iter().map(|t| estimate_pi(t, &sample).unwrap()).collect();
        for v in 0..d {
            let lim = forest_limit_quantities(&forest, VarSet::Single(v), &values0, &pis, &sample).unwrap();
            // rounding slack only
            let slack = 1e-12 * (1.0 + lim.jensen_bound);
            ensure(lim.r_squared <= lim.jensen_bound + slack, || {
                format!("forest {t} var {v}: {} > {}", lim.r_squared, lim.jensen_bound)
            })?;
            tightest = tightest.min(lim.jensen_bound - lim.r_squared);

            let one = &forest.trees[..1];
            let lim1 = forest_limit_quantities(one, VarSet::Single(v), &values0[..1], &pis[..1], &sample).unwrap();
            ensure((lim1.r_squared - lim1.jensen_bound).abs() <= slack, || {
                format!("single tree {t} var {v}: {} vs {}", lim1.r_squared, lim1.jensen_bound)
            })?;
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} (forest, variable) cases, smallest gap {tightest:.3e}, equality at B = 1"
    ))
}

fn rectangle_construction() -> Outcome {
    let mut rng = stream_rng(505, &[]);
    let mut total = 0;
    for d in [1usize, 2, 5, 10] {
        let cuts: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..0.98)).collect();
        let tree = rectangle_indicator_tree(&cuts).unwrap();
        ensure(tree.num_terminals() == d + 1, || {
            format!("d = {d}: {} terminals", tree.num_terminals())
        })?;
        let mut mismatches = 0;
        let mut inside_count = 0;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..d).map(|_| rng.random()).collect();
            let inside = x.iter().zip(&cuts).all(|(xi, c)| xi <= c);
            inside_count += usize::from(inside);
            let want = if inside { 1.0 } else { 0.0 };
            mismatches += usize::from(tree.predict(&x).unwrap() != want);
        }
        ensure(mismatches == 0, || format!("d = {d}: {mismatches} mismatches"))?;
        ensure(inside_count > 0, || format!("d = {d}: no point inside"))?;
        total += 10_000;
    }
    Ok(format!(
        "{total} points over d in {{1, 2, 5, 10}}, 0 mismatches, d + 1 terminals"
    ))
}

fn fmt_rank(table: &AssociationTable, labels: &[&str]) -> String {
    labels
        .iter()
        .map(|l| format!("{l} {:.3}", table.row(l).map_or(f64::NAN, |r| r.standardized)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn simulation_ranking() -> Outcome {
    let start = Instant::now();
    let config = ProtocolConfig {
        seed: 2024,
        ..ProtocolConfig::fast()
    };
    let table = run_simulation(&config, &SimulationConfig::fast()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let mut ranking = table.ranking();
    ranking.reverse();
    ensure(table.rows.len() == 15, || format!("{} rows", table.rows.len()))?;
    let summary = format!("most negative: {} ({secs:.0}s)", fmt_rank(&table, &ranking[..3]));
    ensure(ranking[0] == "a:b" && ranking[1] == "a:d", || summary.clone())?;
    ensure(table.row("a:d").unwrap().standardized < 0.0, || summary.clone())?;
    ensure(secs < 600.0, || summary.clone())?;
    Ok(summary)
}

fn airquality_ranking() -> Outcome {
    let start = Instant::now();
    let config = ProtocolConfig {
        seed: 2024,
        ..ProtocolConfig::fast()
    };
    let table = run_airquality(&config).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ranking = table.ranking();
    let month_day = table
        .row("Month:Day")
        .or_else(|| table.row("Day:Month"))
        .ok_or("no Month/Day row")?
        .standardized;
    let summary = format!(
        "largest: {}; Month/Day {month_day:.3} ({secs:.0}s)",
        fmt_rank(&table, &ranking[..3])
    );
    let positive = |l: &str| table.row(l).is_some_and(|r| r.standardized > 0.0);
    ensure(ranking[0] == "Temp:Wind" && ranking[1] == "Temp:Solar", || {
        summary.clone()
    })?;
    ensure(positive("Temp:Wind") && positive("Temp:Solar"), || summary.clone())?;
    ensure(month_day.abs() <= 0.5, || summary.clone())?;
    ensure(secs < 300.0, || summary.clone())?;
    Ok(summary)
}

fn run_cli(args: &[&str], threads: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_vimp"))
        .args(args)
        .args(["--threads", threads])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!(
            "`vimp {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&status.stderr)
        )
    })
}

fn cli_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    // shared inputs for the model commands
    let mut rng = stream_rng(808, &[]);
    let data = random_sample(120, 4, &mut rng);
    let mut csv = String::from("y,x0,x1,x2,x3\n");
    for (x, y) in data.rows() {
        csv.push_str(&format!("{y},{},{},{},{}\n", x[0], x[1], x[2], x[3]));
    }
    std::fs::write(p("data.csv"), &csv).map_err(|e| e.to_string())?;
    run_cli(
        &[
            "grow",
            "--data",
            &p("data.csv"),
            "--response",
            "y",
            "--ntree",
            "30",
            "--bootstrap",
            "--seed",
            "5",
            "--out",
            &p("model.json"),
        ],
        "1",
    )?;

    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "grow",
            vec![
                "grow",
                "--data",
                &p("data.csv"),
                "--response",
                "y",
                "--ntree",
                "30",
                "--mtry",
                "2",
                "--bootstrap",
                "--seed",
                "5",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "vimp",
            vec![
                "vimp",
                "--model",
                &p("model.json"),
                "--test",
                &p("data.csv"),
                "--vars",
                "x0,x2",
                "--mode",
                "lr-random",
                "--replicates",
                "200",
                "--seed",
                "3",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "vimp-permute",
            vec![
                "vimp",
                "--model",
                &p("model.json"),
                "--test",
                &p("data.csv"),
                "--vars",
                "x1",
                "--mode",
                "permute",
                "--replicates",
                "50",
                "--seed",
                "3",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "pairs",
            vec![
                "pairs",
                "--model",
                &p("model.json"),
                "--test",
                &p("data.csv"),
                "--mode",
                "lr-splits",
                "--replicates",
                "100",
                "--seed",
                "4",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "airquality",
            vec![
                "airquality",
                "--replicates",
                "4",
                "--ntree",
                "25",
                "--seed",
                "6",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--n",
                "40",
                "--datasets",
                "2",
                "--replicates",
                "3",
                "--ntree",
                "15",
                "--seed",
                "7",
                "--out",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
        ),
        (
            "check",
            vec!["check", "--trials", "3", "--seed", "8", "--out"]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];
    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "1"), (2, "8")] {
            let out = p(&format!("{name}-{run}.out"));
            let mut full: Vec<&str> = args.iter().map(String::as_str).collect();
            full.push(&out);
            run_cli(&full, threads)?;
            outputs.push(std::fs::read(Path::new(&out)).map_err(|e| e.to_string())?);
        }
        ensure(!outputs[0].is_empty(), || format!("{name}: empty output"))?;
        ensure(outputs.iter().all(|o| *o == outputs[0]), || {
            format!("{name}: outputs differ")
        })?;
    }
    Ok(format!(
        "{} commands byte-identical across reruns and --threads 1 vs 8",
        commands.len()
    ))
}

fn property_suite() -> Outcome {
    let output = Command::new(env!("CARGO_BIN_EXE_vimp"))
        .args(["check", "--trials", "100", "--seed", "0"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    let required = [
        "partition",
        "training_mean",
        "mass_law",
        "theta0_nonnegative",
        "pi_sums_to_one",
        "oob_no_skipped_rows",
    ];
    for name in required {
        ensure(
            text.lines()
                .any(|l| l.starts_with("PASS") && l.split_whitespace().nth(1) == Some(name)),
            || format!("{name} did not pass:\n{text}"),
        )?;
    }
    ensure(output.status.success(), || {
        format!("exit status {:?}:\n{text}", output.status.code())
    })?;
    Ok(format!("{} checks passed over 100 trials", text.lines().count()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 corollary-1 identity", corollary_identity),
        ("2 path-distribution exactness", lemma_exactness),
        ("3 association sign and decomposition", association_sign),
        ("4 forest Jensen bound", jensen_bound),
        ("5 rectangle indicator construction", rectangle_construction),
        ("6 simulation association ranking", simulation_ranking),
        ("7 air-quality association ranking", airquality_ranking),
        ("8 CLI reproducibility", cli_reproducibility),
        ("9 property suite", property_suite),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
