//! Grid search over input delays, feedback delays and hidden-layer size.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LagSet, TimeSeriesFrame};
use crate::diagnostics::DiagnosticsOptions;
use crate::error::{Error, Result};
use crate::network::NarxConfig;
use crate::pipeline::{prepare, ExperimentSpec};
use crate::train::{train_with_restarts, TrainParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub input_delays: Vec<LagSet>,
    pub feedback_delays: Vec<LagSet>,
    pub neurons: Vec<usize>,
    pub params: TrainParams,
    pub seed: u64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.input_delays.is_empty() || self.feedback_delays.is_empty() || self.neurons.is_empty() {
            return Err(Error::InvalidConfig("every sweep axis needs at least one value".into()));
        }
        if self.neurons.contains(&0) {
            return Err(Error::InvalidConfig("neuron counts must be at least 1".into()));
        }
        for d in &self.feedback_delays {
            d.check_feedback()?;
        }
        self.params.validate()
    }

    /// Grid points in canonical order: input delays, then feedback delays, then neurons.
    pub fn points(&self) -> Vec<(LagSet, LagSet, usize)> {
        let mut out = Vec::new();
        for du in &self.input_delays {
            for dy in &self.feedback_delays {
                for &n in &self.neurons {
                    out.push((du.clone(), dy.clone(), n));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub input_delays: LagSet,
    pub feedback_delays: LagSet,
    pub neurons: usize,
    /// Regularized training objective at the selected epoch.
    pub performance: Option<f64>,
    pub validation_mse: Option<f64>,
    pub r_value: Option<f64>,
    pub max_divergence_pct: Option<f64>,
    pub xcorr_excursion_rate: Option<f64>,
    pub xcorr_within_bounds: bool,
    pub diverged: bool,
    pub error: Option<String>,
    pub wall_time_secs: f64,
}

impl SweepRow {
    fn max_delay(&self) -> usize {
        self.input_delays.max().max(self.feedback_delays.max())
    }
}

/// Shared inputs for every grid point.
#[derive(Debug, Clone)]
pub struct SweepData<'a> {
    pub frame: &'a TimeSeriesFrame,
    pub template: ExperimentSpec,
    pub diagnostics: DiagnosticsOptions,
}

fn run_point(grid: &SweepGrid, data: &SweepData<'_>, du: &LagSet, dy: &LagSet, neurons: usize) -> SweepRow {
    let started = Instant::now();
    let mut row = SweepRow {
        input_delays: du.clone(),
        feedback_delays: dy.clone(),
        neurons,
        performance: None,
        validation_mse: None,
        r_value: None,
        max_divergence_pct: None,
        xcorr_excursion_rate: None,
        xcorr_within_bounds: false,
        diverged: false,
        error: None,
        wall_time_secs: 0.0,
    };
    let outcome = (|| -> Result<()> {
        let spec = ExperimentSpec {
            input_delays: du.clone(),
            feedback_delays: dy.clone(),
            ..data.template.clone()
        };
        let prepared = prepare(data.frame, &spec)?;
        let config = NarxConfig::new(du.clone(), dy.clone(), neurons, spec.exo_channels.len())?;
        let trained = train_with_restarts(&config, &prepared.dataset, &prepared.splits, &grid.params, grid.seed)?;
        let best = trained.selected.best();
        row.performance = Some(best.performance);
        row.validation_mse = Some(best.validation_mse);
        let report = prepared.diagnose(&trained.selected.network, Some(best.performance), &data.diagnostics)?;
        row.r_value = Some(report.metrics.r_value);
        row.max_divergence_pct = Some(report.metrics.max_divergence_pct);
        row.xcorr_excursion_rate = Some(report.xcorr_excursion_rate);
        row.xcorr_within_bounds = report.xcorr_within_bounds;
        Ok(())
    })();
    if let Err(e) = outcome {
        row.diverged = true;
        row.xcorr_within_bounds = false;
        row.error = Some(e.to_string());
    }
    row.wall_time_secs = started.elapsed().as_secs_f64();
    row
}

/// Trains every grid point (with restarts) and diagnoses it. Rows come back
/// in grid order whatever the completion order; failed points are kept and
/// flagged. `jobs` bounds the number of grid points trained at once.
pub fn run_sweep(grid: &SweepGrid, data: &SweepData<'_>, jobs: usize) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let points = grid.points();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|(du, dy, n)| run_point(grid, data, du, dy, *n))
            .collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub row: SweepRow,
    /// Set when no row kept the input-error cross-correlation inside the band.
    pub warning: Option<String>,
}

/// Keeps rows whose inputs are uncorrelated with the errors, then takes the
/// highest R; ties go to lower performance, fewer neurons, smaller max delay.
/// Falls back to all non-diverged rows, with a warning, if none pass.
pub fn select_best(table: &[SweepRow]) -> Result<Selection> {
    let usable: Vec<(usize, &SweepRow)> = table
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.diverged && r.r_value.is_some())
        .collect();
    if usable.is_empty() {
        return Err(Error::NoViableRow);
    }
    let passing: Vec<(usize, &SweepRow)> = usable.iter().copied().filter(|(_, r)| r.xcorr_within_bounds).collect();
    let (pool, warning) = if passing.is_empty() {
        (
            usable,
            Some("no configuration kept the input-error cross-correlation inside the confidence band".to_string()),
        )
    } else {
        (passing, None)
    };
    let key = |r: &SweepRow| {
        (
            -r.r_value.unwrap(),
            r.performance.unwrap_or(f64::INFINITY),
            r.neurons,
            r.max_delay(),
        )
    };
    let (index, row) = pool
        .into_iter()
        .min_by(|a, b| key(a.1).partial_cmp(&key(b.1)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    Ok(Selection {
        index,
        row: row.clone(),
        warning,
    })
}
