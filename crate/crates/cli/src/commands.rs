use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{json, Value};

use rumoverload::bounds::{bounds_report, uniform_mse};
use rumoverload::colgen::{solve_colgen, ColGenOptions};
use rumoverload::min_tests::{alpha_n, asymptotic_min_test, finite_min_test, MinTestReport};
use rumoverload::rum_test::{
    bootstrap_p, grand_weight, tuning, weighting_matrix, weights_for, RumTestConfig, RumTestReport, Scope,
};
use rumoverload::sim::{matched_panel, random_rational_population, simulate_panel, with_grand_overload, Population};
use rumoverload::type_space::model_summary;
use rumoverload::{aggregate, enumerate_columns, AggregateDataset, Design, Model, PanelDataset, Tolerances};

use crate::args::{Cli, Command, Common, Format, MethodArg, PopulationArg};
use crate::input::Input;
use crate::CliError;

const SCHEMA_VERSION: u32 = 1;

struct Rendered {
    json: Value,
    csv: Option<Vec<u8>>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let tol = tolerances(&cli.common)?;
    let rendered = match &cli.command {
        Command::Bounds { input, model } => bounds(input, (*model).into(), &tol)?,
        Command::TestMin {
            input,
            method,
            replications,
            seed,
        } => test_min(input, *method, *replications, *seed)?,
        Command::TestRum {
            input,
            model,
            scope,
            replications,
            seed,
        } => test_rum(input, (*model).into(), (*scope).into(), *replications, *seed, &tol)?,
        Command::Colgen {
            input,
            model,
            tighten,
            max_iter,
            extra,
            seed,
        } => colgen(
            input,
            (*model).into(),
            *tighten,
            ColGenOptions {
                max_iter: *max_iter,
                extra: *extra,
                seed: *seed,
            },
            &tol,
        )?,
        Command::Simulate { .. } => simulate(&cli.command)?,
        Command::Report {
            input,
            replications,
            draws,
            seed,
        } => report(input, *replications, *draws, *seed, &tol)?,
    };
    let default = if matches!(cli.command, Command::Simulate { .. }) {
        Format::Csv
    } else {
        Format::Json
    };
    let bytes = match cli.common.format.unwrap_or(default) {
        Format::Json => {
            let envelope = json!({
                "schema_version": SCHEMA_VERSION,
                "version": env!("CARGO_PKG_VERSION"),
                "command": cli.command.name(),
                "config": {
                    "arguments": serde_json::to_value(&cli.command)?,
                    "options": serde_json::to_value(&cli.common)?,
                    "tolerances": serde_json::to_value(tol)?,
                },
                "result": rendered.json,
            });
            let mut s = serde_json::to_string_pretty(&envelope)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => rendered
            .csv
            .ok_or_else(|| CliError::Usage(format!("{} has no CSV output; use --format json", cli.command.name())))?,
    };
    match &cli.common.out {
        Some(path) => {
            std::fs::write(path, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn tolerances(c: &Common) -> Result<Tolerances, CliError> {
    let mut t = Tolerances::default();
    for (value, slot, name) in [
        (c.feasibility_tol, &mut t.feasibility, "--feasibility-tol"),
        (c.kkt_tol, &mut t.kkt, "--kkt-tol"),
        (c.integrality_tol, &mut t.integrality, "--integrality-tol"),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v < 1.0) {
                return Err(CliError::Usage(format!("{name} must lie in (0, 1)")));
            }
            *slot = v;
        }
    }
    Ok(t)
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage(format!("{command} is stochastic: pass --seed or set RUMOVERLOAD_SEED")))
}

/// τ_n, n̲, the grand weight and α_n for a design; entries that are not
/// defined for it are null.
fn tuning_values(design: &Design) -> Value {
    let t = tuning(design).ok();
    json!({
        "n_bar": design.expected_cell_size(),
        "tau_n": t.map(|t| t.tau),
        "grand_weight": grand_weight(design).ok(),
        "alpha_n": (design.n() >= 2).then(|| alpha_n(design.n())),
    })
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CliError::Usage(format!("csv error: {e}")))
}

fn bounds(input: &str, model: Model, tol: &Tolerances) -> Result<Rendered, CliError> {
    let data = Input::load(input)?.aggregate()?;
    let r = bounds_report(&data, model, tol)?;
    let csv = csv_bytes(
        &["problem", "eta_hat"],
        r.eta_hat.iter().map(|(k, v)| [k.clone(), v.to_string()]),
    )?;
    Ok(Rendered {
        json: json!({ "tuning": tuning_values(data.design()), "bounds": r }),
        csv: Some(csv),
    })
}

fn min_reports(
    panel: &PanelDataset,
    method: MethodArg,
    replications: usize,
    seed: Option<u64>,
) -> Result<Vec<MinTestReport>, CliError> {
    let mut out = Vec::new();
    if matches!(method, MethodArg::Finite | MethodArg::Both) {
        out.push(finite_min_test(panel)?);
    }
    if matches!(method, MethodArg::Asymptotic | MethodArg::Both) {
        let seed = require_seed(seed, "the asymptotic Min test")?;
        out.push(asymptotic_min_test(panel, replications, seed)?);
    }
    Ok(out)
}

fn test_min(input: &str, method: MethodArg, replications: usize, seed: Option<u64>) -> Result<Rendered, CliError> {
    let input = Input::load(input)?;
    let panel = input.panel("test-min")?;
    let reports = min_reports(panel, method, replications, seed)?;
    let csv = csv_bytes(
        &["method", "statistic", "p_value"],
        reports.iter().map(|r| {
            [
                format!("{:?}", r.method).to_ascii_lowercase(),
                r.statistic.to_string(),
                r.p_value.to_string(),
            ]
        }),
    )?;
    Ok(Rendered {
        json: json!({ "tuning": tuning_values(panel.design()), "tests": reports }),
        csv: Some(csv),
    })
}

fn rum_report(
    panel: &PanelDataset,
    model: Model,
    scope: Scope,
    replications: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<RumTestReport, CliError> {
    let config = RumTestConfig {
        model,
        replications,
        seed,
        scope,
    };
    Ok(bootstrap_p(panel, &config, tol)?)
}

fn test_rum(
    input: &str,
    model: Model,
    scope: Scope,
    replications: usize,
    seed: Option<u64>,
    tol: &Tolerances,
) -> Result<Rendered, CliError> {
    let seed = require_seed(seed, "test-rum")?;
    let input = Input::load(input)?;
    let panel = input.panel("test-rum")?;
    let r = rum_report(panel, model, scope, replications, seed, tol)?;
    let csv = csv_bytes(
        &["model", "scope", "j_n", "p_value", "replications", "seed"],
        [[
            model.label().to_string(),
            serde_json::to_value(scope)?.as_str().unwrap_or_default().to_string(),
            r.j_n.to_string(),
            r.p_value.to_string(),
            replications.to_string(),
            seed.to_string(),
        ]],
    )?;
    Ok(Rendered {
        json: json!({ "tuning": tuning_values(panel.design()), "test": r }),
        csv: Some(csv),
    })
}

fn colgen(
    input: &str,
    model: Model,
    tighten: bool,
    options: ColGenOptions,
    tol: &Tolerances,
) -> Result<Rendered, CliError> {
    let data = Input::load(input)?.aggregate()?;
    let design = data.design();
    let weights = weighting_matrix(design)?;
    let lower = if tighten {
        tuning(design)?.tau / model_summary(design, model)?.columns as f64
    } else {
        0.0
    };
    let s = solve_colgen(&data.frequencies(), design, model, &weights, lower, &options, tol)?;
    let fitted: BTreeMap<String, f64> = (0..design.n_problems())
        .map(|r| (design.problem_key(r), s.fitted[2 * r + 1]))
        .collect();
    let mut log = Vec::new();
    s.write_log(&mut log)?;
    Ok(Rendered {
        json: json!({
            "tuning": tuning_values(design),
            "status": s.status,
            "objective": s.objective,
            "j": design.n() as f64 * s.objective,
            "pricing_value": s.pricing_value,
            "lower": s.lower,
            "seed_columns": s.seed_columns,
            "generated_columns": s.generated_columns(),
            "total_columns": s.total_columns,
            "fitted_passive": fitted,
            "log": s.log,
        }),
        csv: Some(log),
    })
}

fn simulate(command: &Command) -> Result<Rendered, CliError> {
    let Command::Simulate {
        input,
        k,
        q,
        n,
        population,
        marginal_match,
        exact_counts,
        concentration,
        overload_share,
        seed,
    } = command
    else {
        unreachable!("simulate called with another command")
    };
    let seed = require_seed(*seed, "simulate")?;
    let data: Option<AggregateDataset> = input.as_deref().map(|i| Input::load(i)?.aggregate()).transpose()?;
    let design = match &data {
        Some(d) => match n {
            Some(n) => d.design().with_n(*n),
            None => d.design().clone(),
        },
        None => {
            let (Some(k), Some(q), Some(n)) = (k, q, n) else {
                return Err(CliError::Usage("simulate needs --input or all of --k, --q, --n".into()));
            };
            Design::singletons_and_pairs(*k, *q, *n)?
        }
    };
    let kind = if *marginal_match {
        PopulationArg::MarginalMatch
    } else {
        population.ok_or_else(|| CliError::Usage("pass --population or --marginal-match".into()))?
    };
    if *exact_counts && kind != PopulationArg::MarginalMatch {
        return Err(CliError::Usage(
            "--exact-counts applies to marginal matching only".into(),
        ));
    }
    let panel = match kind {
        PopulationArg::MarginalMatch => {
            let data = data
                .as_ref()
                .ok_or_else(|| CliError::Usage("marginal matching needs --input".into()))?;
            if *exact_counts {
                if n.is_some() {
                    return Err(CliError::Usage(
                        "--exact-counts keeps the input sample size; drop --n".into(),
                    ));
                }
                matched_panel(data, seed)?
            } else {
                simulate_panel(&design, &Population::matching(data), seed)?
            }
        }
        PopulationArg::Rational => {
            let m = enumerate_columns(&design, Model::I)?;
            simulate_panel(&design, &random_rational_population(&m, *concentration, seed)?, seed)?
        }
        PopulationArg::Overload => {
            let m = enumerate_columns(&design, Model::I)?;
            let Population::RationalMix(base) = random_rational_population(&m, *concentration, seed)? else {
                unreachable!("random rational populations are rational mixtures")
            };
            simulate_panel(&design, &with_grand_overload(&design, &base, *overload_share)?, seed)?
        }
    };
    let mut csv = Vec::new();
    panel.write_csv(&mut csv)?;
    let counts = aggregate(&panel)?;
    let cells: BTreeMap<String, Value> = counts
        .counts()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            (
                counts.design().problem_key(i),
                json!({ "shown": c.shown, "default": c.default }),
            )
        })
        .collect();
    Ok(Rendered {
        json: json!({
            "population": serde_json::to_value(kind)?,
            "subjects": panel.n_subjects(),
            "records": panel.records().len(),
            "cells": cells,
        }),
        csv: Some(csv),
    })
}

fn report(
    input: &str,
    replications: usize,
    draws: usize,
    seed: Option<u64>,
    tol: &Tolerances,
) -> Result<Rendered, CliError> {
    let input = Input::load(input)?;
    let data = input.aggregate()?;
    let design = data.design();
    let g = design.grand_index();
    let counts = data.counts();
    let grand_share = counts[g].passive_frequency();
    let below = counts[..g]
        .iter()
        .filter(|c| c.shown > 0 && c.passive_frequency() < grand_share)
        .count();
    let (def, shown) = counts[..g]
        .iter()
        .fold((0, 0), |(d, s), c| (d + c.default, s + c.shown));

    let bounds = bounds_report(&data, Model::I, tol)?;
    let mse = if draws > 0 {
        let seed = require_seed(seed, "the uniform restrictiveness measure")?;
        let mut out = BTreeMap::new();
        for model in Model::ALL {
            let m = enumerate_columns(design, model)?;
            let w = weights_for(&m, design)?;
            out.insert(model.label(), uniform_mse(&m, &w, draws, seed, tol)?);
        }
        Some(out)
    } else {
        None
    };

    let (tests, note) = match &input {
        Input::Panel(panel) => {
            let seed = require_seed(seed, "report on panel data")?;
            let min = min_reports(panel, MethodArg::Both, replications, Some(seed))?;
            let mut rum = Vec::new();
            for (model, scope) in [
                (Model::I, Scope::AllData),
                (Model::I, Scope::ExcludeGrand),
                (Model::II, Scope::AllData),
                (Model::III, Scope::AllData),
            ] {
                rum.push(rum_report(panel, model, scope, replications, seed, tol)?);
            }
            (Some(json!({ "min": min, "rum": rum })), None)
        }
        Input::Aggregate(_) => (
            None,
            Some("tests need panel data; draw one with `rumoverload simulate --input <aggregate> --marginal-match --seed <s>`"),
        ),
    };
    Ok(Rendered {
        json: json!({
            "input_kind": input.kind(),
            "tuning": tuning_values(design),
            "descriptives": {
                "subjects": design.n(),
                "grand_default_share": grand_share,
                "small_sets_below_grand": below,
                "small_sets": g,
                "pooled_small_default_share": def as f64 / shown as f64,
            },
            "bounds": bounds,
            "uniform_mse": mse,
            "tests": tests,
            "note": note,
        }),
        csv: None,
    })
}
