//! End-to-end glue: frame → normalized delayed dataset → trained model →
//! open-loop diagnostics or closed-loop simulation.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::{
    prepare_delayed, split_indices, Channel, DelayedDataset, LagSet, NormalizationSpec, SplitRatios, Splits,
    TimeSeriesFrame,
};
use crate::diagnostics::{diagnose, DiagnosticsInput, DiagnosticsOptions, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::model::SavedModel;
use crate::network::{close_loop, NarxNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub exo_channels: Vec<Channel>,
    pub target: Channel,
    pub input_delays: LagSet,
    pub feedback_delays: LagSet,
    pub ratios: SplitRatios,
}

impl ExperimentSpec {
    pub fn new(input_delays: LagSet, feedback_delays: LagSet) -> Self {
        ExperimentSpec {
            exo_channels: Channel::DEFAULT_EXOGENOUS.to_vec(),
            target: Channel::Close,
            input_delays,
            feedback_delays,
            ratios: SplitRatios::default(),
        }
    }

    fn normalized_channels(&self) -> Vec<Channel> {
        let mut c = self.exo_channels.clone();
        c.push(self.target);
        c
    }
}

/// A frame ready for training: normalization fitted on the training rows,
/// the delayed dataset, and its split.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: ExperimentSpec,
    pub normalization: NormalizationSpec,
    pub normalized: TimeSeriesFrame,
    pub dataset: DelayedDataset,
    pub splits: Splits,
}

/// Splits the samples, fits normalization on the rows that feed the training
/// block (including its initial delay rows), and builds the dataset.
pub fn prepare(frame: &TimeSeriesFrame, spec: &ExperimentSpec) -> Result<Prepared> {
    spec.feedback_delays.check_feedback()?;
    let first = spec.input_delays.max().max(spec.feedback_delays.max());
    if frame.len() <= first {
        return Err(Error::InsufficientData {
            needed: first + 1,
            available: frame.len(),
        });
    }
    let splits = split_indices(frame.len() - first, spec.ratios)?;
    let normalization = NormalizationSpec::fit_rows(frame, &spec.normalized_channels(), 0..first + splits.train.end)?;
    let normalized = normalization.apply(frame)?;
    let dataset = prepare_delayed(
        &normalized,
        &spec.input_delays,
        &spec.feedback_delays,
        &spec.exo_channels,
        spec.target,
    )?;
    Ok(Prepared {
        spec: spec.clone(),
        normalization,
        normalized,
        dataset,
        splits,
    })
}

fn aligned_inputs<'a>(
    normalized: &'a TimeSeriesFrame,
    channels: &[Channel],
    rows: Range<usize>,
) -> Result<Vec<(String, &'a [f64])>> {
    channels
        .iter()
        .map(|&c| Ok((c.name().to_string(), &normalized.channel(c)?[rows.clone()])))
        .collect()
}

impl Prepared {
    /// Open-loop diagnostics over every sample.
    pub fn diagnose(
        &self,
        net: &NarxNetwork,
        performance: Option<f64>,
        options: &DiagnosticsOptions,
    ) -> Result<DiagnosticsReport> {
        self.diagnose_rows(net, 0..self.dataset.len(), performance, options)
    }

    /// Open-loop diagnostics over a block of samples, e.g. `splits.test`.
    pub fn diagnose_rows(
        &self,
        net: &NarxNetwork,
        rows: Range<usize>,
        performance: Option<f64>,
        options: &DiagnosticsOptions,
    ) -> Result<DiagnosticsReport> {
        let outputs = net.forward_rows(&self.dataset, rows.clone())?;
        let first = self.dataset.first_usable_index;
        let input = DiagnosticsInput {
            outputs: &outputs,
            targets: &self.dataset.target[rows.clone()],
            inputs: aligned_inputs(
                &self.normalized,
                &self.spec.exo_channels,
                first + rows.start..first + rows.end,
            )?,
            scale: Some((&self.normalization, self.spec.target)),
            performance,
        };
        diagnose(&input, options)
    }
}

/// Open-loop diagnostics of a saved model on new data.
pub fn evaluate_model(
    model: &SavedModel,
    frame: &TimeSeriesFrame,
    options: &DiagnosticsOptions,
) -> Result<DiagnosticsReport> {
    model.check_frame(frame)?;
    let net = model.network()?;
    let normalized = model.normalization.apply(frame)?;
    let ds = prepare_delayed(
        &normalized,
        &model.config.input_delays,
        &model.config.feedback_delays,
        &model.exo_channels,
        model.target_channel,
    )?;
    let outputs = net.forward_open(&ds)?;
    let input = DiagnosticsInput {
        outputs: &outputs,
        targets: &ds.target,
        inputs: aligned_inputs(
            &normalized,
            &model.exo_channels,
            ds.first_usable_index..normalized.len(),
        )?,
        scale: Some((&model.normalization, model.target_channel)),
        performance: None,
    };
    diagnose(&input, options)
}

/// Closed-loop predictions over a horizon, in price units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub start_timestep: Option<i64>,
    pub horizon: usize,
    pub timesteps: Vec<i64>,
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
    pub diagnostics: Option<DiagnosticsReport>,
    /// Why diagnostics are absent, when they are.
    pub diagnostics_note: Option<String>,
}

impl Simulation {
    pub fn errors(&self) -> Vec<f64> {
        self.targets.iter().zip(&self.predictions).map(|(t, p)| t - p).collect()
    }
}

/// Runs the closed-loop network for `horizon` steps starting at row `start`.
/// Rows before `start` prime the delay lines with measured values; from
/// `start` on only the exogenous channels are read from `frame`.
pub fn simulate_model(
    model: &SavedModel,
    frame: &TimeSeriesFrame,
    start: usize,
    horizon: usize,
    options: &DiagnosticsOptions,
) -> Result<Simulation> {
    model.check_frame(frame)?;
    if start + horizon > frame.len() {
        return Err(Error::InsufficientData {
            needed: start + horizon,
            available: frame.len(),
        });
    }
    let net = model.network()?;
    let normalized = model.normalization.apply(frame)?;
    let exo_columns = model
        .exo_channels
        .iter()
        .map(|&c| normalized.channel(c))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..frame.len())
        .map(|t| exo_columns.iter().map(|c| c[t]).collect())
        .collect();
    let target_norm = normalized.channel(model.target_channel)?;

    let predictions_norm =
        close_loop(&net).simulate(&rows[..start], &target_norm[..start], &rows[start..start + horizon])?;
    let predictions = model.normalization.invert(&predictions_norm, model.target_channel)?;
    let window = start..start + horizon;
    let mut sim = Simulation {
        start_timestep: frame.timesteps.get(start).copied(),
        horizon,
        timesteps: frame.timesteps[window.clone()].to_vec(),
        targets: frame.channel(model.target_channel)?[window.clone()].to_vec(),
        predictions,
        diagnostics: None,
        diagnostics_note: None,
    };
    if horizon == 0 {
        sim.diagnostics_note = Some("empty horizon".into());
        return Ok(sim);
    }
    let input = DiagnosticsInput {
        outputs: &predictions_norm,
        targets: &target_norm[window.clone()],
        inputs: aligned_inputs(&normalized, &model.exo_channels, window)?,
        scale: Some((&model.normalization, model.target_channel)),
        performance: None,
    };
    match diagnose(&input, options) {
        Ok(report) => sim.diagnostics = Some(report),
        Err(e) => sim.diagnostics_note = Some(e.to_string()),
    }
    Ok(sim)
}
