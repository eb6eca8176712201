//! The experiment verbs. Every random input is keyed by `(size, replica)`
//! from the master seed, so results do not depend on the worker count.

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde_json::{json, Value};
use stochrec::graph::{generate_dcm, generate_ird, tree_likeness_rate};
use stochrec::io::write_trajectory_csv;
use stochrec::metrics::{contraction_estimate, coupling_error_bound, log_slope, moment_bound, BoundInputs, Estimate};
use stochrec::recursion::{
    contraction_precondition, coupled_contraction_run, edge_matrix_summary, iterate, marginal_at, GraphState,
    VertexSample,
};
use stochrec::tree::{
    fixed_point_solve, population_dynamics, spec_from_degree_sequence, spec_from_ird, FixedPointOptions,
};
use stochrec::{wasserstein_p, DiGraph, Error, GWTreeSpec, RecursionModel, Seed};

use crate::config::{ExperimentConfig, Family};
use crate::report::{Report, Table, Verb};

/// Seed for one `(size, replica)` cell.
pub fn cell_seed(master: u64, n: usize, replica: usize) -> Seed {
    Seed(master).child(n as u64).child(replica as u64)
}

fn cells(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    cfg.graph.sizes.iter().flat_map(|&n| (0..cfg.run.replicas).map(move |r| (n, r))).collect()
}

fn stage(name: &str, n: usize, r: usize) -> impl Fn() -> String + '_ {
    move || format!("stage {name} (n={n}, replica {r})")
}

/// The graph for a cell and the tree spec matched to it.
fn build_cell(cfg: &ExperimentConfig, n: usize, r: usize, seed: Seed) -> anyhow::Result<(DiGraph, GWTreeSpec)> {
    let (g, spec) = match cfg.graph.family {
        Family::Dcm => {
            let seq = cfg.degree_sequence(n, seed.child(0)).with_context(stage("degrees", n, r))?;
            let g = generate_dcm(&seq, cfg.graph.mode, seed.child(1)).with_context(stage("graph", n, r))?;
            let spec = spec_from_degree_sequence(&g.degree_sequence()).with_context(stage("tree spec", n, r))?;
            (g, spec)
        }
        Family::Ird => {
            let ird = cfg.ird_spec(n).with_context(stage("weights", n, r))?;
            let g = generate_ird(&ird, seed.child(1)).with_context(stage("graph", n, r))?;
            (g, spec_from_ird(&ird).with_context(stage("tree spec", n, r))?)
        }
    };
    match &cfg.graph.tree {
        Some(_) => Ok((g, cfg.tree_spec(seed.child(0)).with_context(stage("tree spec", n, r))?)),
        None => Ok((g, spec)),
    }
}

fn model(cfg: &ExperimentConfig) -> anyhow::Result<RecursionModel> {
    cfg.model.build().context("stage model")
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Median and its large-sample standard error `1.2533 sd / sqrt(R)`.
fn median_se(xs: &[f64]) -> (f64, f64) {
    let (_, sd) = mean_sd(xs);
    (median(xs), 1.2533 * sd / (xs.len() as f64).sqrt())
}

pub fn run(verb: Verb, cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    match verb {
        Verb::Converge => converge(cfg),
        Verb::Fixpoint => fixpoint(cfg),
        Verb::Contract => contract(cfg),
        Verb::Treelike => treelike(cfg),
        Verb::Bounds => bounds(cfg),
    }
}

/// Runs `verb` on a dedicated pool of `workers` threads, or the global pool.
pub fn run_with_workers(verb: Verb, cfg: &ExperimentConfig, workers: Option<usize>) -> anyhow::Result<Report> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build()?;
            pool.install(|| run(verb, cfg))
        }
        None => run(verb, cfg),
    }
}

/// What `verb` would do, without sampling anything.
pub fn plan(verb: Verb, cfg: &ExperimentConfig) -> Value {
    let run = &cfg.run;
    let stages: Vec<&str> = match verb {
        Verb::Converge => vec!["degrees", "graph", "tree spec", "iterate", "population dynamics", "distance"],
        Verb::Fixpoint => vec!["tree spec", "contraction estimate", "population dynamics", "decay trace"],
        Verb::Contract => vec!["degrees", "graph", "contraction precondition", "coupled run"],
        Verb::Treelike => vec!["degrees", "graph", "exploration"],
        Verb::Bounds => vec!["tree spec", "moment estimates", "contraction estimate", "population dynamics"],
    };
    let per_cell = matches!(verb, Verb::Converge | Verb::Contract | Verb::Treelike);
    json!({
        "command": verb,
        "seed": run.seed,
        "model": cfg.model.name(),
        "family": cfg.graph.family,
        "sizes": cfg.graph.sizes,
        "cells": if per_cell { cells(cfg).len() } else { 1 },
        "stages": stages,
        "config": cfg,
    })
}

fn converge(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let model = model(cfg)?;
    let p = model.p();
    let run = &cfg.run;
    let init = run.initial_law();
    let keep_traj = cfg.outputs.trajectories;
    let results: Vec<(usize, usize, f64, Option<Vec<GraphState>>)> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let seed = cell_seed(run.seed, n, r);
            let (g, spec) = build_cell(cfg, n, r, seed)?;
            let traj = iterate(&g, &model, &init, run.k, seed.child(2)).with_context(stage("iterate", n, r))?;
            let sample = match run.vertex_sample {
                Some(m) => VertexSample::Uniform { m, seed: seed.child(4) },
                None => VertexSample::All,
            };
            let mu = marginal_at(&traj, run.k, sample).with_context(stage("marginal", n, r))?;
            let nu = population_dynamics(&spec, &model, run.pool, run.k, &init, seed.child(3))
                .with_context(stage("population dynamics", n, r))?
                .nu;
            let keep = (keep_traj && r == 0).then_some(traj);
            Ok((n, r, wasserstein_p(&mu, &nu, p), keep))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut tables = vec![Table::new(
        "converge_replicas.csv",
        &["n", "replica", "distance"],
        results.iter().map(|(n, r, d, _)| (n, r, d)),
    )?];
    let mut per_size = Vec::new();
    for &n in &cfg.graph.sizes {
        let ds: Vec<f64> = results.iter().filter(|c| c.0 == n).map(|c| c.2).collect();
        let (med, se) = median_se(&ds);
        per_size.push((n, med, se));
    }
    tables.push(Table::new("converge.csv", &["n", "median", "stderr"], &per_size)?);
    for (n, _, _, traj) in &results {
        if let Some(traj) = traj {
            let mut buf = Vec::new();
            write_trajectory_csv(traj, &mut buf)?;
            tables.push(Table::from_bytes(&format!("trajectory_n{n}.csv"), buf));
        }
    }

    let slack = cfg.thresholds.converge_slack;
    let monotone = (per_size.len() > 1)
        .then(|| per_size.windows(2).all(|w| w[1].1 <= w[0].1 + slack * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt()));
    let final_ok = cfg.thresholds.converge_max_final.map(|cap| per_size.last().expect("nonempty").1 < cap);
    let mut warnings = Vec::new();
    if monotone.is_none() {
        warnings.push("a single size was given; the monotonicity check is skipped".to_string());
    }
    let pass = monotone.unwrap_or(true) && final_ok.unwrap_or(true);
    let measured = json!({
        "p": p,
        "sizes": per_size.iter().map(|&(n, med, se)| json!({
            "n": n,
            "median": med,
            "stderr": se,
            "distances": results.iter().filter(|c| c.0 == n).map(|c| c.2).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "nonincreasing": monotone,
        "final_below_cap": final_ok,
    });
    Ok(Report { verb: Verb::Converge, pass, measured, warnings, tables, config: cfg.clone() })
}

fn fixpoint(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let model = model(cfg)?;
    let run = &cfg.run;
    let seed = Seed(run.seed);
    let spec = cfg.tree_spec(seed.child(0)).context("stage tree spec")?;
    let opts = FixedPointOptions {
        m: run.pool,
        tol: run.tol,
        max_iter: run.max_iter,
        window: run.window,
        estimate_draws: run.draws,
        force: run.force,
    };
    let trace_table = |trace: &[f64]| {
        Table::new(
            "fixpoint_trace.csv",
            &["k", "value", "stderr"],
            trace.iter().enumerate().map(|(i, d)| (i + 1, d, 0.0)),
        )
    };
    match fixed_point_solve(&spec, &model, &run.initial_law(), opts, seed.child(1)) {
        Ok(fp) => {
            let slope = log_slope(&fp.trace);
            let tables =
                vec![trace_table(&fp.trace)?, Table::new("fixpoint_nu.csv", &["value", "weight"], fp.nu.atoms())?];
            let measured = json!({
                "converged": fp.converged,
                "iterations": fp.trace.len(),
                "c_hat": fp.c_hat,
                "trace": fp.trace,
                "log_slope": slope.map(|s| s.0),
                "nu_mean": fp.nu.mean(),
                "nu_variance": fp.nu.variance(),
            });
            Ok(Report {
                verb: Verb::Fixpoint,
                pass: fp.converged,
                measured,
                warnings: fp.warnings,
                tables,
                config: cfg.clone(),
            })
        }
        Err(Error::NotContracting { c_hat, stderr }) => {
            let measured = json!({ "refused": true, "c_hat": { "value": c_hat, "stderr": stderr } });
            let warnings = vec![format!(
                "estimated contraction constant {c_hat:.4} (stderr {stderr:.2e}) is not below 1; set run.force to iterate anyway"
            )];
            Ok(Report {
                verb: Verb::Fixpoint,
                pass: false,
                measured,
                warnings,
                tables: Vec::new(),
                config: cfg.clone(),
            })
        }
        Err(Error::NoContraction { trace }) => {
            let tables = vec![trace_table(&trace)?];
            let measured = json!({ "converged": false, "no_contraction": true, "trace": trace });
            let warnings = vec!["the distance trace stopped decreasing".to_string()];
            Ok(Report { verb: Verb::Fixpoint, pass: false, measured, warnings, tables, config: cfg.clone() })
        }
        Err(e) => Err(anyhow!(e).context("stage population dynamics")),
    }
}

fn contract(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let model = model(cfg)?;
    let p = model.p();
    let run = &cfg.run;
    let th = &cfg.thresholds;
    let init = run.initial_law();
    let results: Vec<(usize, usize, f64, Vec<f64>)> =
        cells(cfg)
            .into_par_iter()
            .map(|(n, r)| {
                let seed = cell_seed(run.seed, n, r);
                let (g, _) = build_cell(cfg, n, r, seed)?;
                let k_bound = match contraction_precondition(&g, &model) {
                    Ok(k) => k,
                    Err(_) if run.force => edge_matrix_summary(&g, &model).interp_bound(p),
                    Err(e) => return Err(anyhow!(e).context(stage("contraction precondition", n, r)())),
                };
                let d = coupled_contraction_run(&g, &model, &init, run.k, seed.child(2), run.force)
                    .with_context(stage("coupled run", n, r))?;
                Ok((n, r, k_bound, d))
            })
            .collect::<anyhow::Result<_>>()?;

    let rows = results.iter().flat_map(|(n, r, _, d)| d.iter().enumerate().map(move |(k, x)| (*n, *r, k, *x)));
    let tables = vec![Table::new("contract.csv", &["n", "replica", "k", "distance"], rows)?];
    let mut pass = true;
    let mut per_size = Vec::new();
    for &n in &cfg.graph.sizes {
        let (mut max_ratio, mut bound, mut checked) = (0.0f64, 0.0f64, 0usize);
        for (_, _, k_bound, d) in results.iter().filter(|c| c.0 == n) {
            bound = bound.max(*k_bound);
            for w in d.windows(2).filter(|w| w[0] >= th.ratio_floor) {
                checked += 1;
                let ratio = w[1] / w[0];
                max_ratio = max_ratio.max(ratio);
                pass &= ratio <= k_bound + th.ratio_tol;
            }
        }
        per_size.push(json!({ "n": n, "max_ratio": max_ratio, "bound": bound, "ratios_checked": checked }));
    }
    let measured = json!({ "p": p, "sizes": per_size });
    Ok(Report { verb: Verb::Contract, pass, measured, warnings: Vec::new(), tables, config: cfg.clone() })
}

fn treelike(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let run = &cfg.run;
    let depth = run.depth.unwrap_or(run.k);
    let results: Vec<(usize, usize, f64)> = cells(cfg)
        .into_par_iter()
        .map(|(n, r)| {
            let seed = cell_seed(run.seed, n, r);
            let (g, _) = build_cell(cfg, n, r, seed)?;
            Ok((n, r, tree_likeness_rate(&g, depth, run.roots, seed.child(2))))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut tables = vec![Table::new("treelike_replicas.csv", &["n", "replica", "rate"], &results)?];
    let per_size: Vec<(usize, f64, f64)> = cfg
        .graph
        .sizes
        .iter()
        .map(|&n| {
            let xs: Vec<f64> = results.iter().filter(|c| c.0 == n).map(|c| c.2).collect();
            let (m, sd) = mean_sd(&xs);
            (n, m, sd / (xs.len() as f64).sqrt())
        })
        .collect();
    tables.push(Table::new("treelike.csv", &["n", "mean", "stderr"], &per_size)?);
    let increasing = per_size.windows(2).all(|w| w[1].1 > w[0].1 || (w[0].1 == 1.0 && w[1].1 == 1.0));
    let final_rate = per_size.last().expect("nonempty").1;
    let pass = increasing && final_rate > cfg.thresholds.treelike_min_final;
    let measured = json!({
        "depth": depth,
        "sizes": per_size.iter().map(|&(n, m, se)| json!({ "n": n, "mean": m, "stderr": se })).collect::<Vec<_>>(),
        "increasing": increasing,
        "final_rate": final_rate,
    });
    Ok(Report { verb: Verb::Treelike, pass, measured, warnings: Vec::new(), tables, config: cfg.clone() })
}

fn bounds(cfg: &ExperimentConfig) -> anyhow::Result<Report> {
    let model = model(cfg)?;
    let p = model.p();
    let run = &cfg.run;
    let seed = Seed(run.seed);
    let init = run.initial_law();
    let spec = cfg.tree_spec(seed.child(0)).context("stage tree spec")?;
    let (inputs, input_se) = BoundInputs::estimate(&spec, &model, &init, run.eps, run.draws, seed.child(1))
        .context("stage moment estimates")?;
    let c_hat =
        contraction_estimate(&spec, &model, run.draws.max(100), seed.child(2)).context("stage contraction estimate")?;
    let out = population_dynamics(&spec, &model, run.pool, run.k, &init, seed.child(3))
        .context("stage population dynamics")?;

    let empirical: Vec<Estimate> = out
        .pools
        .iter()
        .map(|pool| Estimate::pth_root_of_mean(&pool.values.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>(), p))
        .collect();
    let moment: Vec<f64> = (0..=run.k).map(|k| moment_bound(&inputs, k).v).collect();
    let z = cfg.thresholds.moment_z;
    let violations: Vec<usize> =
        (0..=run.k).filter(|&k| empirical[k].value > moment[k] + z * empirical[k].stderr).collect();

    let mut tables = vec![
        Table::new(
            "bounds_empirical.csv",
            &["k", "value", "stderr"],
            empirical.iter().enumerate().map(|(k, e)| (k, e.value, e.stderr)),
        )?,
        Table::new(
            "bounds_moment.csv",
            &["k", "value", "stderr"],
            moment.iter().enumerate().map(|(k, v)| (k, v, 0.0)),
        )?,
    ];
    let coupling = if inputs.holder.is_some() {
        let vals: Vec<f64> = (0..=run.k).map(|k| coupling_error_bound(&inputs, k)).collect::<Result<_, _>>()?;
        tables.push(Table::new(
            "bounds_coupling.csv",
            &["k", "value", "stderr"],
            vals.iter().enumerate().map(|(k, v)| (k, v, 0.0)),
        )?);
        Some(vals)
    } else {
        None
    };
    let measured = json!({
        "p": p,
        "inputs": inputs,
        "input_stderr": input_se,
        "b_const": inputs.b_const(),
        "c_hat": c_hat,
        "empirical_moment": empirical,
        "moment_bound": moment,
        "coupling_bound": coupling,
        "violations": violations,
    });
    Ok(Report {
        verb: Verb::Bounds,
        pass: violations.is_empty(),
        measured,
        warnings: Vec::new(),
        tables,
        config: cfg.clone(),
    })
}
