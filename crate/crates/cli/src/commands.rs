use std::path::Path;

use narx::data::{date_of_day_index, load_ohlcv, Channel, LagSet, SplitRatios, TimeSeriesFrame};
use narx::diagnostics::{CorrelationSeries, DiagnosticsOptions, DiagnosticsReport, Thresholds};
use narx::model::SavedModel;
use narx::network::NarxConfig;
use narx::pipeline::{evaluate_model, prepare, simulate_model, ExperimentSpec};
use narx::sweep::{run_sweep, select_best, Selection, SweepData, SweepGrid, SweepRow};
use narx::train::{train_with_restarts, RestartSummary, TrainParams, TrainReport};
use serde::{Deserialize, Serialize};

use crate::output::{input_file, num, opt, Manifest, Outputs};
use crate::{CliError, DataArgs, DiagArgs, EvalArgs, ParamArgs, SimulateArgs, SweepArgs, TrainArgs};

const DEFAULT_INPUT_DELAYS: &str = "0:1";
const DEFAULT_FEEDBACK_DELAYS: &str = "1";
const DEFAULT_NEURONS: usize = 22;

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_frame(data: &DataArgs) -> Result<TimeSeriesFrame, CliError> {
    Ok(load_ohlcv(&data.csv)?.between(data.from, data.to)?)
}

/// Loads data for an existing model: a column the model reads but the file
/// lacks is a model/data mismatch rather than a malformed file.
fn load_for_model(path: &Path, model: &SavedModel) -> Result<TimeSeriesFrame, CliError> {
    match load_ohlcv(path) {
        Err(narx::Error::MissingColumn(column)) => {
            let wanted = model.exo_channels.iter().chain([&model.target_channel]);
            let key = |s: &str| s.to_ascii_lowercase().replace([' ', '_'], "");
            if wanted.clone().any(|c| key(c.name()) == key(&column)) {
                Err(narx::Error::ConfigMismatch(format!(
                    "model reads channels {:?} but the data has no {column} column",
                    wanted.collect::<Vec<_>>()
                ))
                .into())
            } else {
                Err(narx::Error::MissingColumn(column).into())
            }
        }
        other => Ok(other?),
    }
}

fn load_model(path: &Path) -> Result<SavedModel, CliError> {
    Ok(SavedModel::from_json(&read_text(path)?)?)
}

fn resolve_params(args: &ParamArgs) -> Result<TrainParams, CliError> {
    let mut p: TrainParams = match &args.params {
        Some(path) => serde_json::from_str(&read_text(path)?).map_err(narx::Error::from)?,
        None => TrainParams::default(),
    };
    macro_rules! override_with {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { p.$field = v; } )* };
    }
    override_with!(xi, mu, mu_dec, mu_inc, mu_max, epochs, goal, min_grad, max_fail, restarts);
    if args.regularize_biases {
        p.regularize_biases = true;
    }
    p.validate()?;
    Ok(p)
}

fn diag_options(args: &DiagArgs) -> DiagnosticsOptions {
    DiagnosticsOptions {
        max_lag: args.max_lag,
        thresholds: Thresholds {
            r_min: args.r_min,
            max_divergence_pct: args.max_divergence,
            mse_max: args.mse_max,
        },
        max_excursion_rate: args.max_excursion_rate,
    }
}

fn parameters<T: Serialize>(args: &T, extra: serde_json::Value) -> serde_json::Value {
    let mut v = serde_json::to_value(args).unwrap_or_default();
    if let (Some(map), serde_json::Value::Object(extra)) = (v.as_object_mut(), extra) {
        map.extend(extra);
    }
    v
}

fn correlation_csvs(out: &mut Outputs, report: &DiagnosticsReport) -> Result<(), CliError> {
    let rows = |s: &CorrelationSeries| -> Vec<Vec<String>> {
        s.lags
            .iter()
            .zip(&s.values)
            .map(|(l, v)| vec![l.to_string(), num(*v)])
            .collect()
    };
    out.csv("error_autocorr.csv", &["lag", "value"], rows(&report.error_autocorr))?;
    for c in &report.input_error_xcorr {
        out.csv(&format!("xcorr_{}.csv", c.channel), &["lag", "value"], rows(&c.series))?;
    }
    Ok(())
}

fn date_label(t: i64) -> String {
    date_of_day_index(t).map(|d| d.to_string()).unwrap_or_default()
}

/// The file written by `sweep` and accepted by `train --config`.
#[derive(Debug, Serialize, Deserialize)]
struct ChosenConfig {
    input_delays: LagSet,
    feedback_delays: LagSet,
    neurons: usize,
    #[serde(default)]
    exo_channels: Option<Vec<Channel>>,
    #[serde(default)]
    target: Option<Channel>,
    #[serde(default)]
    warning: Option<String>,
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    selected: &'a TrainReport,
    restarts: &'a [RestartSummary],
    diagnostics: &'a DiagnosticsReport,
    test_diagnostics: &'a DiagnosticsReport,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let chosen: Option<ChosenConfig> = match &args.config {
        Some(path) => Some(serde_json::from_str(&read_text(path)?).map_err(narx::Error::from)?),
        None => None,
    };
    let input_delays = args
        .input_delays
        .clone()
        .or_else(|| chosen.as_ref().map(|c| c.input_delays.clone()))
        .unwrap_or_else(|| DEFAULT_INPUT_DELAYS.parse().unwrap());
    let feedback_delays = args
        .feedback_delays
        .clone()
        .or_else(|| chosen.as_ref().map(|c| c.feedback_delays.clone()))
        .unwrap_or_else(|| DEFAULT_FEEDBACK_DELAYS.parse().unwrap());
    let neurons = args
        .neurons
        .or(chosen.as_ref().map(|c| c.neurons))
        .unwrap_or(DEFAULT_NEURONS);
    let params = resolve_params(&args.params)?;
    let options = diag_options(&args.diag);
    let mut inputs = vec![input_file(&args.data.csv)?];
    if let Some(path) = &args.config {
        inputs.push(input_file(path)?);
    }
    let manifest = Manifest::start(
        "train",
        Some(args.params.seed),
        parameters(
            args,
            serde_json::json!({
                "resolved": {
                    "input_delays": &input_delays,
                    "feedback_delays": &feedback_delays,
                    "neurons": neurons,
                    "train_params": &params,
                    "diagnostics": &options,
                }
            }),
        ),
        inputs,
    );

    let frame = load_frame(&args.data)?;
    let spec = ExperimentSpec {
        exo_channels: args.channels.exo_channels.clone(),
        target: args.channels.target,
        input_delays,
        feedback_delays,
        ratios: SplitRatios::default(),
    };
    let prepared = prepare(&frame, &spec)?;
    let config = NarxConfig::new(
        spec.input_delays.clone(),
        spec.feedback_delays.clone(),
        neurons,
        spec.exo_channels.len(),
    )?;
    let report = train_with_restarts(&config, &prepared.dataset, &prepared.splits, &params, args.params.seed)?;
    let selected = &report.selected;
    let best = selected.best();
    let net = &selected.network;
    let diagnostics = prepared.diagnose(net, Some(best.performance), &options)?;
    let test_diagnostics = prepared.diagnose_rows(net, prepared.splits.test.clone(), None, &options)?;
    let model = SavedModel::new(
        net,
        spec.exo_channels.clone(),
        spec.target,
        prepared.normalization.clone(),
    )?;

    let mut out = Outputs::new(&args.out);
    let mut model_json = model.to_json()?.into_bytes();
    model_json.push(b'\n');
    out.raw("model.json", model_json);
    out.json(
        "train_report.json",
        &TrainOutput {
            selected,
            restarts: &report.runs,
            diagnostics: &diagnostics,
            test_diagnostics: &test_diagnostics,
        },
    )?;
    out.csv(
        "epochs.csv",
        &[
            "epoch",
            "performance",
            "train_mse",
            "validation_mse",
            "test_mse",
            "gradient",
            "mu",
            "rejected",
        ],
        selected.epochs.iter().map(|e| {
            vec![
                e.epoch.to_string(),
                num(e.performance),
                num(e.train_mse),
                num(e.validation_mse),
                opt(e.test_mse),
                num(e.gradient),
                num(e.mu),
                e.rejected.to_string(),
            ]
        }),
    )?;
    out.commit(manifest)?;

    println!(
        "trained {} parameters: stop {} at epoch {} (best epoch {}), performance {:.6e}",
        config.param_count(),
        selected.stop_reason,
        selected.final_epoch,
        selected.best_epoch,
        best.performance
    );
    println!(
        "all samples: R {:.5}, MSE {:.6e}, max divergence {:.3}%; verdict {}",
        diagnostics.metrics.r_value,
        diagnostics.metrics.mse,
        diagnostics.metrics.max_divergence_pct,
        if diagnostics.verdict.accepted {
            "accept"
        } else {
            "reject"
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    start_timestep: Option<i64>,
    horizon: usize,
    diagnostics: Option<&'a DiagnosticsReport>,
    diagnostics_note: Option<&'a str>,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    if let Some(channels) = &args.exo_channels {
        model.check_channels(channels)?;
    }
    let options = diag_options(&args.diag);
    let manifest = Manifest::start(
        "simulate",
        None,
        parameters(args, serde_json::json!({ "resolved": { "diagnostics": &options } })),
        vec![input_file(&args.model)?, input_file(&args.csv)?],
    );
    let frame = load_for_model(&args.csv, &model)?.between(None, args.to)?;
    let start = match args.from {
        Some(t) => frame.position_of(t),
        None => frame
            .len()
            .checked_sub(args.horizon)
            .ok_or(narx::Error::InsufficientData {
                needed: args.horizon,
                available: frame.len(),
            })?,
    };
    let sim = simulate_model(&model, &frame, start, args.horizon, &options)?;

    let mut out = Outputs::new(&args.out);
    let errors = sim.errors();
    out.csv(
        "predictions.csv",
        &["timestep", "date", "target", "prediction", "error"],
        (0..sim.horizon).map(|i| {
            vec![
                sim.timesteps[i].to_string(),
                date_label(sim.timesteps[i]),
                num(sim.targets[i]),
                num(sim.predictions[i]),
                num(errors[i]),
            ]
        }),
    )?;
    out.json(
        "diagnostics.json",
        &SimulationOutput {
            start_timestep: sim.start_timestep,
            horizon: sim.horizon,
            diagnostics: sim.diagnostics.as_ref(),
            diagnostics_note: sim.diagnostics_note.as_deref(),
        },
    )?;
    if let Some(d) = &sim.diagnostics {
        correlation_csvs(&mut out, d)?;
    }
    out.commit(manifest)?;

    match &sim.diagnostics {
        Some(d) => println!(
            "simulated {} steps: R {:.5}, MSE {:.6e}, max divergence {:.3}%; verdict {}",
            sim.horizon,
            d.metrics.r_value,
            d.metrics.mse,
            d.metrics.max_divergence_pct,
            if d.verdict.accepted { "accept" } else { "reject" }
        ),
        None => println!(
            "simulated {} steps ({})",
            sim.horizon,
            sim.diagnostics_note.as_deref().unwrap_or("no diagnostics")
        ),
    }
    Ok(())
}

fn parse_axis<T>(flag: &str, text: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    let values = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| CliError::Usage(format!("--{flag}: cannot parse `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage(format!("--{flag} needs at least one value")));
    }
    Ok(values)
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    grid: &'a SweepGrid,
    rows: &'a [SweepRow],
    selection: &'a Selection,
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = SweepGrid {
        input_delays: parse_axis("input-delays", &args.input_delays, |s| s.parse().ok())?,
        feedback_delays: parse_axis("feedback-delays", &args.feedback_delays, |s| s.parse().ok())?,
        neurons: parse_axis("neurons", &args.neurons, |s| s.parse().ok())?,
        params: resolve_params(&args.params)?,
        seed: args.params.seed,
    };
    grid.validate()?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let options = diag_options(&args.diag);
    let manifest = Manifest::start(
        "sweep",
        Some(grid.seed),
        parameters(
            args,
            serde_json::json!({ "resolved": { "grid": &grid, "jobs": jobs, "diagnostics": &options } }),
        ),
        vec![input_file(&args.data.csv)?],
    );
    let frame = load_frame(&args.data)?;
    let data = SweepData {
        frame: &frame,
        template: ExperimentSpec {
            exo_channels: args.channels.exo_channels.clone(),
            target: args.channels.target,
            input_delays: grid.input_delays[0].clone(),
            feedback_delays: grid.feedback_delays[0].clone(),
            ratios: SplitRatios::default(),
        },
        diagnostics: options,
    };
    let rows = run_sweep(&grid, &data, jobs)?;
    let selection = select_best(&rows)?;

    let mut out = Outputs::new(&args.out);
    out.csv(
        "sweep.csv",
        &[
            "input_delays",
            "feedback_delays",
            "neurons",
            "performance",
            "r_value",
            "xcorr_within_bounds",
            "xcorr_excursion_rate",
            "validation_mse",
            "max_divergence_pct",
            "diverged",
            "wall_time_secs",
            "error",
        ],
        rows.iter().map(|r| {
            vec![
                r.input_delays.to_string(),
                r.feedback_delays.to_string(),
                r.neurons.to_string(),
                opt(r.performance),
                opt(r.r_value),
                r.xcorr_within_bounds.to_string(),
                opt(r.xcorr_excursion_rate),
                opt(r.validation_mse),
                opt(r.max_divergence_pct),
                r.diverged.to_string(),
                format!("{:.3}", r.wall_time_secs),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    out.json(
        "sweep.json",
        &SweepOutput {
            grid: &grid,
            rows: &rows,
            selection: &selection,
        },
    )?;
    out.json(
        "chosen_config.json",
        &ChosenConfig {
            input_delays: selection.row.input_delays.clone(),
            feedback_delays: selection.row.feedback_delays.clone(),
            neurons: selection.row.neurons,
            exo_channels: Some(args.channels.exo_channels.clone()),
            target: Some(args.channels.target),
            warning: selection.warning.clone(),
        },
    )?;
    out.commit(manifest)?;

    for r in &rows {
        println!(
            "d_u {:<6} d_y {:<6} N {:<4} R {:<10} bounds {}",
            r.input_delays.to_string(),
            r.feedback_delays.to_string(),
            r.neurons,
            r.r_value.map_or_else(|| "diverged".to_string(), |v| format!("{v:.5}")),
            if r.xcorr_within_bounds { "in" } else { "out" }
        );
    }
    if let Some(w) = &selection.warning {
        eprintln!("warning: {w}");
    }
    println!(
        "chosen: d_u {} d_y {} N {}",
        selection.row.input_delays, selection.row.feedback_delays, selection.row.neurons
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let options = diag_options(&args.diag);
    let manifest = Manifest::start(
        "eval",
        None,
        parameters(args, serde_json::json!({ "resolved": { "diagnostics": &options } })),
        vec![input_file(&args.model)?, input_file(&args.data.csv)?],
    );
    let frame = load_for_model(&args.data.csv, &model)?.between(args.data.from, args.data.to)?;
    let report = evaluate_model(&model, &frame, &options)?;

    let mut out = Outputs::new(&args.out);
    out.json("diagnostics.json", &report)?;
    correlation_csvs(&mut out, &report)?;
    out.commit(manifest)?;

    println!(
        "R {:.5}, MSE {:.6e}, max divergence {:.3}%, cross-correlation {} the band",
        report.metrics.r_value,
        report.metrics.mse,
        report.metrics.max_divergence_pct,
        if report.xcorr_within_bounds {
            "within"
        } else {
            "outside"
        }
    );
    if report.verdict.accepted {
        println!("verdict: accept");
        Ok(())
    } else {
        Err(CliError::Rejected(report.verdict.reasons.clone()))
    }
}
