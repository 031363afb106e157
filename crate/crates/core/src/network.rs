//! The NARX network: a tapped-delay-line front end feeding one tanh hidden
//! layer and a single linear output unit.
//!
//! For sample `t` the network computes
//!
//! ```text
//! ŷ(t) = b_o + Σ_h w_o[h] · tanh( b_h[h] + Σ_{i,c} w_u[h,i,c] · u_c(t-i) + Σ_j w_y[h,j] · y(t-j) )
//! ```
//!
//! In open-loop (series-parallel) mode the `y(t-j)` taps read measured
//! targets; in closed-loop (parallel) mode they read the network's own
//! earlier predictions.
//!
//! Parameters live in one flat vector with a fixed order:
//! input weights (hidden-unit major, then the dataset's exogenous column
//! order), feedback weights (hidden-unit major), hidden biases, output
//! weights, output bias.

use std::collections::VecDeque;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DelayedDataset, LagSet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hidden-layer transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transfer {
    /// Hyperbolic tangent sigmoid.
    #[default]
    Tansig,
}

impl Transfer {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Transfer::Tansig => x.tanh(),
        }
    }

    /// Derivative expressed through the unit's output `a = eval(x)`.
    #[inline]
    pub fn derivative_at_output(self, a: f64) -> f64 {
        match self {
            Transfer::Tansig => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NarxConfig {
    pub input_delays: LagSet,
    pub feedback_delays: LagSet,
    pub hidden: usize,
    pub n_exo: usize,
    #[serde(default)]
    pub hidden_transfer: Transfer,
}

impl NarxConfig {
    pub fn new(input_delays: LagSet, feedback_delays: LagSet, hidden: usize, n_exo: usize) -> Result<Self> {
        let config = NarxConfig {
            input_delays,
            feedback_delays,
            hidden,
            n_exo,
            hidden_transfer: Transfer::Tansig,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden neuron count must be at least 1".into()));
        }
        if self.n_exo == 0 {
            return Err(Error::InvalidConfig(
                "at least one exogenous channel is required".into(),
            ));
        }
        self.feedback_delays.check_feedback()
    }

    pub fn exo_width(&self) -> usize {
        self.input_delays.len() * self.n_exo
    }

    pub fn regressor_width(&self) -> usize {
        self.exo_width() + self.feedback_delays.len()
    }

    pub fn max_delay(&self) -> usize {
        self.input_delays.max().max(self.feedback_delays.max())
    }

    /// `N·(|d_u|·M + |d_y| + 1) + N + 1`.
    pub fn param_count(&self) -> usize {
        self.hidden * (self.regressor_width() + 1) + self.hidden + 1
    }

    pub fn layout(&self) -> Layout {
        let n = self.hidden;
        let e = self.exo_width();
        let f = self.feedback_delays.len();
        let input = 0..n * e;
        let feedback = input.end..input.end + n * f;
        let hidden_bias = feedback.end..feedback.end + n;
        let output = hidden_bias.end..hidden_bias.end + n;
        Layout {
            input,
            feedback,
            hidden_bias,
            output_bias: output.end,
            output,
        }
    }

    fn check_dataset(&self, ds: &DelayedDataset) -> Result<()> {
        if ds.n_exo != self.n_exo || ds.input_delays != self.input_delays || ds.feedback_delays != self.feedback_delays
        {
            return Err(Error::Shape {
                expected: format!(
                    "{} exogenous channels, input delays {}, feedback delays {}",
                    self.n_exo, self.input_delays, self.feedback_delays
                ),
                found: format!(
                    "{} exogenous channels, input delays {}, feedback delays {}",
                    ds.n_exo, ds.input_delays, ds.feedback_delays
                ),
            });
        }
        Ok(())
    }
}

/// Index ranges of each parameter block in the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub input: Range<usize>,
    pub feedback: Range<usize>,
    pub hidden_bias: Range<usize>,
    pub output: Range<usize>,
    pub output_bias: usize,
}

impl Layout {
    pub fn is_bias(&self, p: usize) -> bool {
        self.hidden_bias.contains(&p) || p == self.output_bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarxNetwork {
    config: NarxConfig,
    weights: Vec<f64>,
}

impl NarxNetwork {
    pub fn from_weights(config: NarxConfig, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.param_count() {
            return Err(Error::Shape {
                expected: format!("{} weights", config.param_count()),
                found: weights.len().to_string(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("weights must be finite".into()));
        }
        Ok(NarxNetwork { config, weights })
    }

    pub fn zeros(config: NarxConfig) -> Result<Self> {
        let n = config.param_count();
        Self::from_weights(config, vec![0.0; n])
    }

    /// Draws each weight uniformly from `[-r, r]` with `r = 1/sqrt(fan_in)`
    /// of the receiving unit.
    pub fn init(config: NarxConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let hidden_r = 1.0 / (config.regressor_width() as f64).sqrt();
        let output_r = 1.0 / (config.hidden as f64).sqrt();
        let weights = (0..config.param_count())
            .map(|p| {
                let r = if p < layout.output.start { hidden_r } else { output_r };
                rng.random_range(-r..=r)
            })
            .collect();
        Self::from_weights(config, weights)
    }

    pub fn config(&self) -> &NarxConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// Same architecture, new parameters.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::from_weights(self.config.clone(), weights)
    }

    pub fn input_weight(&self, hidden: usize, column: usize) -> f64 {
        self.weights[self.config.layout().input.start + hidden * self.config.exo_width() + column]
    }

    pub fn feedback_weight(&self, hidden: usize, tap: usize) -> f64 {
        self.weights[self.config.layout().feedback.start + hidden * self.config.feedback_delays.len() + tap]
    }

    pub fn hidden_bias(&self, hidden: usize) -> f64 {
        self.weights[self.config.layout().hidden_bias.start + hidden]
    }

    pub fn output_weight(&self, hidden: usize) -> f64 {
        self.weights[self.config.layout().output.start + hidden]
    }

    pub fn output_bias(&self) -> f64 {
        self.weights[self.config.layout().output_bias]
    }

    /// `true` for every parameter that enters the weight penalty.
    pub fn penalty_mask(&self, include_biases: bool) -> Vec<bool> {
        let layout = self.config.layout();
        (0..self.weights.len())
            .map(|p| include_biases || !layout.is_bias(p))
            .collect()
    }

    /// Evaluates one assembled regressor row (exogenous taps, then feedback taps),
    /// storing hidden activations in `hidden`.
    fn eval(&self, regressor: &[f64], hidden: &mut [f64]) -> f64 {
        let cfg = &self.config;
        let layout = cfg.layout();
        let e = cfg.exo_width();
        let f = cfg.feedback_delays.len();
        let (x, y) = regressor.split_at(e);
        let w = &self.weights;
        let mut out = w[layout.output_bias];
        for (h, a) in hidden.iter_mut().enumerate() {
            let wu = &w[layout.input.start + h * e..layout.input.start + (h + 1) * e];
            let wy = &w[layout.feedback.start + h * f..layout.feedback.start + (h + 1) * f];
            let mut s = w[layout.hidden_bias.start + h];
            for (wi, xi) in wu.iter().zip(x) {
                s += wi * xi;
            }
            for (wj, yj) in wy.iter().zip(y) {
                s += wj * yj;
            }
            *a = cfg.hidden_transfer.eval(s);
            out += w[layout.output.start + h] * *a;
        }
        out
    }

    /// One-step prediction from an assembled regressor row.
    pub fn predict(&self, regressor: &[f64]) -> f64 {
        let mut hidden = vec![0.0; self.config.hidden];
        self.eval(regressor, &mut hidden)
    }

    /// Open-loop predictions for every sample, using measured feedback taps.
    pub fn forward_open(&self, ds: &DelayedDataset) -> Result<Vec<f64>> {
        self.forward_rows(ds, 0..ds.len())
    }

    pub fn forward_rows(&self, ds: &DelayedDataset, rows: Range<usize>) -> Result<Vec<f64>> {
        self.config.check_dataset(ds)?;
        let mut buf = Vec::with_capacity(ds.regressor_width());
        let mut hidden = vec![0.0; self.config.hidden];
        Ok(rows
            .map(|k| {
                ds.regressor_into(k, &mut buf);
                self.eval(&buf, &mut hidden)
            })
            .collect())
    }

    /// Residuals `F[k] = ŷ(k) - t(k)` and their Jacobian with respect to the
    /// flat weight vector, one row per sample.
    pub fn jacobian(&self, ds: &DelayedDataset) -> Result<(Matrix, Vec<f64>)> {
        self.jacobian_rows(ds, 0..ds.len())
    }

    pub fn jacobian_rows(&self, ds: &DelayedDataset, rows: Range<usize>) -> Result<(Matrix, Vec<f64>)> {
        self.config.check_dataset(ds)?;
        let cfg = &self.config;
        let layout = cfg.layout();
        let e = cfg.exo_width();
        let f = cfg.feedback_delays.len();
        let mut jac = Matrix::zeros(rows.len(), self.weights.len());
        let mut residuals = Vec::with_capacity(rows.len());
        let mut buf = Vec::with_capacity(ds.regressor_width());
        let mut hidden = vec![0.0; cfg.hidden];
        for (r, k) in rows.enumerate() {
            ds.regressor_into(k, &mut buf);
            let out = self.eval(&buf, &mut hidden);
            residuals.push(out - ds.target[k]);

            let (x, y) = buf.split_at(e);
            let row = jac.row_mut(r);
            row[layout.output_bias] = 1.0;
            for (h, &a) in hidden.iter().enumerate() {
                row[layout.output.start + h] = a;
                // back-propagate through the output weight and the transfer function
                let delta = self.weights[layout.output.start + h] * cfg.hidden_transfer.derivative_at_output(a);
                row[layout.hidden_bias.start + h] = delta;
                let du = &mut row[layout.input.start + h * e..layout.input.start + (h + 1) * e];
                for (d, xi) in du.iter_mut().zip(x) {
                    *d = delta * xi;
                }
                let dy = &mut row[layout.feedback.start + h * f..layout.feedback.start + (h + 1) * f];
                for (d, yj) in dy.iter_mut().zip(y) {
                    *d = delta * yj;
                }
            }
        }
        Ok((jac, residuals))
    }
}

/// Convenience alias for [`NarxNetwork::init`].
pub fn init_weights(config: NarxConfig, seed: u64) -> Result<NarxNetwork> {
    NarxNetwork::init(config, seed)
}

/// Tapped delay lines for closed-loop operation.
///
/// Between steps `exo_history` holds the last `max(d_u)` exogenous rows and
/// `y_history` the last `max(d_y)` targets or predictions, oldest first.
/// During a step the current exogenous row is appended, giving the
/// `max(d_u) + 1` taps needed when lag 0 is in use.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    exo_history: VecDeque<Vec<f64>>,
    y_history: VecDeque<f64>,
}

impl ClosedLoopState {
    /// Primes the delay lines from the trailing end of measured history.
    pub fn prime(config: &NarxConfig, exo_rows: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let need_exo = config.input_delays.max();
        let need_y = config.feedback_delays.max();
        if exo_rows.len() < need_exo {
            return Err(Error::InsufficientHistory {
                what: "exogenous rows",
                needed: need_exo,
                available: exo_rows.len(),
            });
        }
        if targets.len() < need_y {
            return Err(Error::InsufficientHistory {
                what: "targets",
                needed: need_y,
                available: targets.len(),
            });
        }
        let exo_tail = &exo_rows[exo_rows.len() - need_exo..];
        if let Some(bad) = exo_tail.iter().find(|r| r.len() != config.n_exo) {
            return Err(Error::Shape {
                expected: format!("{} exogenous values per row", config.n_exo),
                found: bad.len().to_string(),
            });
        }
        Ok(ClosedLoopState {
            exo_history: exo_tail.iter().cloned().collect(),
            y_history: targets[targets.len() - need_y..].iter().copied().collect(),
        })
    }

    pub fn exo_history(&self) -> impl Iterator<Item = &[f64]> {
        self.exo_history.iter().map(Vec::as_slice)
    }

    pub fn y_history(&self) -> impl Iterator<Item = f64> + '_ {
        self.y_history.iter().copied()
    }
}

/// A trained network whose feedback taps read its own predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopNetwork {
    net: NarxNetwork,
}

/// Converts an open-loop network to closed-loop form. Weights are shared unchanged.
pub fn close_loop(net: &NarxNetwork) -> ClosedLoopNetwork {
    ClosedLoopNetwork { net: net.clone() }
}

impl ClosedLoopNetwork {
    pub fn network(&self) -> &NarxNetwork {
        &self.net
    }

    /// Advances one step with the exogenous row for the current time and
    /// returns the prediction, which is pushed onto the feedback line.
    pub fn step(&self, state: &mut ClosedLoopState, exo_now: &[f64]) -> Result<f64> {
        let cfg = self.net.config();
        if exo_now.len() != cfg.n_exo {
            return Err(Error::Shape {
                expected: format!("{} exogenous values per row", cfg.n_exo),
                found: exo_now.len().to_string(),
            });
        }
        state.exo_history.push_back(exo_now.to_vec());
        let newest = state.exo_history.len() - 1;
        let mut regressor = Vec::with_capacity(cfg.regressor_width());
        for &lag in cfg.input_delays.lags() {
            regressor.extend_from_slice(&state.exo_history[newest - lag]);
        }
        let ylen = state.y_history.len();
        for &lag in cfg.feedback_delays.lags() {
            regressor.push(state.y_history[ylen - lag]);
        }
        let y = self.net.predict(&regressor);

        state.exo_history.pop_front();
        state.y_history.push_back(y);
        state.y_history.pop_front();
        Ok(y)
    }

    /// Multi-step simulation over `exo_future.len()` steps. The primer supplies
    /// measured history; every later feedback tap uses predictions.
    pub fn simulate(
        &self,
        primer_exo: &[Vec<f64>],
        primer_targets: &[f64],
        exo_future: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let mut state = ClosedLoopState::prime(self.net.config(), primer_exo, primer_targets)?;
        exo_future.iter().map(|row| self.step(&mut state, row)).collect()
    }
}

/// Convenience alias for [`ClosedLoopNetwork::simulate`].
pub fn simulate_closed(
    evaluator: &ClosedLoopNetwork,
    primer_exo: &[Vec<f64>],
    primer_targets: &[f64],
    exo_future: &[Vec<f64>],
) -> Result<Vec<f64>> {
    evaluator.simulate(primer_exo, primer_targets, exo_future)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(du: &str, dy: &str, hidden: usize, n_exo: usize) -> NarxConfig {
        NarxConfig::new(du.parse().unwrap(), dy.parse().unwrap(), hidden, n_exo).unwrap()
    }

    fn toy_dataset(n_exo: usize, du: &str, dy: &str, n: usize) -> DelayedDataset {
        let exo: Vec<Vec<f64>> = (0..n_exo)
            .map(|c| (0..n).map(|t| ((t * (c + 2)) as f64 * 0.37).sin()).collect())
            .collect();
        let target: Vec<f64> = (0..n).map(|t| (t as f64 * 0.21).cos()).collect();
        let refs: Vec<&[f64]> = exo.iter().map(Vec::as_slice).collect();
        DelayedDataset::from_series(&refs, &target, &du.parse().unwrap(), &dy.parse().unwrap(), None).unwrap()
    }

    #[test]
    fn parameter_count_for_reference_architecture() {
        let cfg = config("0:1", "1", 22, 4);
        assert_eq!(cfg.param_count(), 243);
        let net = NarxNetwork::init(cfg, 7).unwrap();
        assert_eq!(net.weights().len(), 243);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = config("0:1", "1:2", 5, 3);
        let a = NarxNetwork::init(cfg.clone(), 42).unwrap();
        let b = NarxNetwork::init(cfg.clone(), 42).unwrap();
        assert_eq!(
            a.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>(),
            b.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>()
        );
        let c = NarxNetwork::init(cfg.clone(), 43).unwrap();
        assert_ne!(a.weights(), c.weights());

        let layout = cfg.layout();
        let hidden_r = 1.0 / (cfg.regressor_width() as f64).sqrt();
        let output_r = 1.0 / (cfg.hidden as f64).sqrt();
        for (p, w) in a.weights().iter().enumerate() {
            let r = if p < layout.output.start { hidden_r } else { output_r };
            assert!(w.abs() <= r);
        }
    }

    #[test]
    fn zero_network_outputs_output_bias() {
        let cfg = config("0:1", "1", 3, 2);
        let mut w = vec![0.0; cfg.param_count()];
        *w.last_mut().unwrap() = 0.75;
        let net = NarxNetwork::from_weights(cfg, w).unwrap();
        let ds = toy_dataset(2, "0:1", "1", 12);
        assert!(net.forward_open(&ds).unwrap().iter().all(|&y| y == 0.75));

        let (jac, _) = net.jacobian(&ds).unwrap();
        let ob = net.config().layout().output_bias;
        assert!((0..jac.rows()).all(|r| jac[(r, ob)] == 1.0));

        let closed = close_loop(&net);
        let future = vec![vec![0.3, -0.2]; 5];
        let preds = closed.simulate(&[vec![0.0, 0.0]], &[1.0], &future).unwrap();
        assert_eq!(preds, vec![0.75; 5]);
    }

    #[test]
    fn transfer_shape() {
        let t = Transfer::Tansig;
        assert_eq!(t.eval(0.0), 0.0);
        assert_eq!(t.derivative_at_output(t.eval(0.0)), 1.0);
        for x in [0.1, 1.0, 3.0, 40.0] {
            assert_eq!(t.eval(-x), -t.eval(x));
            assert!(t.eval(x).abs() <= 1.0);
        }
    }

    #[test]
    fn duplicate_rows_give_duplicate_jacobian_rows() {
        let cfg = config("0", "1", 2, 1);
        let net = NarxNetwork::init(cfg, 3).unwrap();
        let exo = [0.5, 0.5, 0.5, 0.5];
        let target = [0.2, 0.2, 0.2, 0.2];
        let ds =
            DelayedDataset::from_series(&[&exo], &target, &"0".parse().unwrap(), &"1".parse().unwrap(), None).unwrap();
        let (jac, res) = net.jacobian(&ds).unwrap();
        assert_eq!(jac.row(0), jac.row(1));
        assert_eq!(jac.row(1), jac.row(2));
        assert_eq!(res[0], res[2]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = NarxNetwork::init(config("0:1", "1", 2, 3), 1).unwrap();
        let ds = toy_dataset(2, "0:1", "1", 10);
        assert!(matches!(net.forward_open(&ds), Err(Error::Shape { .. })));
        assert!(matches!(net.jacobian(&ds), Err(Error::Shape { .. })));
    }

    #[test]
    fn first_closed_step_equals_open_step() {
        let cfg = config("0:2", "1:3", 4, 2);
        let net = NarxNetwork::init(cfg, 11).unwrap();
        let n = 20;
        let exo: Vec<Vec<f64>> = (0..2)
            .map(|c| (0..n).map(|t| ((t + c) as f64 * 0.3).sin()).collect())
            .collect();
        let target: Vec<f64> = (0..n).map(|t| (t as f64 * 0.17).cos()).collect();
        let refs: Vec<&[f64]> = exo.iter().map(Vec::as_slice).collect();
        let ds = DelayedDataset::from_series(&refs, &target, &"0:2".parse().unwrap(), &"1:3".parse().unwrap(), None)
            .unwrap();
        let open = net.forward_open(&ds).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|t| vec![exo[0][t], exo[1][t]]).collect();

        let closed = close_loop(&net);
        for (k, o) in open.iter().enumerate() {
            let t = ds.first_usable_index + k;
            let step = closed.simulate(&rows[..t], &target[..t], &rows[t..t + 1]).unwrap();
            assert_eq!(step[0].to_bits(), o.to_bits());
        }
        assert!(closed.simulate(&rows[..5], &target[..5], &[]).unwrap().is_empty());
    }

    #[test]
    fn short_primer_is_rejected() {
        let net = NarxNetwork::init(config("0:2", "1:2", 2, 1), 1).unwrap();
        let closed = close_loop(&net);
        let err = closed.simulate(&[vec![0.0]], &[0.0, 0.0], &[vec![0.0]]);
        assert!(matches!(err, Err(Error::InsufficientHistory { needed: 2, .. })));
        let err = closed.simulate(&[vec![0.0], vec![0.0]], &[0.0], &[vec![0.0]]);
        assert!(matches!(err, Err(Error::InsufficientHistory { needed: 2, .. })));
    }

    #[test]
    fn state_buffers_track_maximal_lags() {
        let cfg = config("0:3", "1:2", 2, 1);
        let net = NarxNetwork::init(cfg.clone(), 5).unwrap();
        let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64]).collect();
        let mut state = ClosedLoopState::prime(&cfg, &rows, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(state.exo_history().count(), 3);
        assert_eq!(state.y_history().collect::<Vec<_>>(), vec![2.0, 3.0]);
        let y = close_loop(&net).step(&mut state, &[9.0]).unwrap();
        assert_eq!(state.exo_history().count(), 3);
        assert_eq!(state.y_history().collect::<Vec<_>>(), vec![3.0, y]);
    }
}
