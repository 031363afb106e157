//! Levenberg-Marquardt training under the regularized performance function
//!
//! ```text
//! perf = ξ·MSE + (1-ξ)·MSW,   MSE = (1/N) Σ e_i²,   MSW = (1/n) Σ w_j²
//! ```
//!
//! Each proposal solves the damped Gauss-Newton system of `N·perf`:
//!
//! ```text
//! (ξ·JᵀJ + β·P + λI) d = -(ξ·JᵀF + β·P·w),   β = (1-ξ)·N/n
//! ```
//!
//! where `P` selects the penalized weights. With `ξ = 1` this is exactly
//! `(JᵀJ + λI) d = -JᵀF`. Reported objective values, the goal and the
//! gradient floor are all in per-sample (MSE) units.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DelayedDataset, Splits};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Matrix, NotPositiveDefinite};
use crate::network::{NarxConfig, NarxNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    /// Initial damping λ.
    pub mu: f64,
    pub mu_dec: f64,
    pub mu_inc: f64,
    pub mu_max: f64,
    pub epochs: usize,
    pub goal: f64,
    pub min_grad: f64,
    pub max_fail: usize,
    /// Performance ratio ξ.
    pub xi: f64,
    pub restarts: usize,
    /// Include biases in the weight penalty.
    pub regularize_biases: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            mu: 1.0,
            mu_dec: 0.8,
            mu_inc: 1.5,
            mu_max: 1e10,
            epochs: 1000,
            goal: 1e-5,
            min_grad: 1e-7,
            max_fail: 6,
            xi: 0.9,
            restarts: 10,
            regularize_biases: false,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.mu_dec > 0.0 && self.mu_dec < 1.0 && self.mu_inc > 1.0) {
            return fail("need 0 < mu_dec < 1 < mu_inc");
        }
        if !(self.mu > 0.0 && self.mu_max > self.mu) {
            return fail("need mu_max > mu > 0");
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return fail("xi must lie in [0, 1]");
        }
        if self.restarts == 0 {
            return fail("restarts must be at least 1");
        }
        if !(self.goal >= 0.0 && self.min_grad >= 0.0) {
            return fail("goal and min_grad must be non-negative");
        }
        Ok(())
    }
}

/// Mean squared error. Returns NaN for an empty slice.
pub fn mse(errors: &[f64]) -> f64 {
    errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64
}

/// `ξ·MSE(errors) + (1-ξ)·MSW(weights)`.
pub fn msereg(errors: &[f64], weights: &[f64], xi: f64) -> Result<f64> {
    if errors.is_empty() || weights.is_empty() {
        return Err(Error::Domain("msereg needs at least one error and one weight".into()));
    }
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Domain(format!("performance ratio {xi} outside [0, 1]")));
    }
    Ok(xi * mse(errors) + (1.0 - xi) * mse(weights))
}

/// Which weights are penalized and how strongly.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularization {
    pub xi: f64,
    pub mask: Vec<bool>,
}

impl Regularization {
    pub fn none(n_params: usize) -> Self {
        Regularization {
            xi: 1.0,
            mask: vec![false; n_params],
        }
    }

    pub fn for_network(net: &NarxNetwork, xi: f64, include_biases: bool) -> Self {
        Regularization {
            xi,
            mask: net.penalty_mask(include_biases),
        }
    }

    fn penalized(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Penalty weight β for `n_samples` residuals.
    fn beta(&self, n_samples: usize) -> f64 {
        let n = self.penalized();
        if n == 0 || self.xi == 1.0 {
            0.0
        } else {
            (1.0 - self.xi) * n_samples as f64 / n as f64
        }
    }

    pub fn performance(&self, residuals: &[f64], weights: &[f64]) -> f64 {
        let penalized: Vec<f64> = weights
            .iter()
            .zip(&self.mask)
            .filter_map(|(&w, &m)| m.then_some(w))
            .collect();
        if penalized.is_empty() {
            self.xi * mse(residuals)
        } else {
            self.xi * mse(residuals) + (1.0 - self.xi) * mse(&penalized)
        }
    }

    /// Half the gradient of `N·perf`: `ξ·JᵀF + β·P·w`.
    fn half_gradient(&self, jac: &Matrix, residuals: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut g = jac.transpose_mul(residuals);
        if self.xi != 1.0 {
            g.iter_mut().for_each(|v| *v *= self.xi);
        }
        let beta = self.beta(jac.rows());
        if beta != 0.0 {
            for ((gi, &w), &m) in g.iter_mut().zip(weights).zip(&self.mask) {
                if m {
                    *gi += beta * w;
                }
            }
        }
        g
    }

    /// Gradient of `perf` itself, in MSE units.
    pub fn gradient(&self, jac: &Matrix, residuals: &[f64], weights: &[f64]) -> Vec<f64> {
        let scale = 2.0 / jac.rows() as f64;
        self.half_gradient(jac, residuals, weights)
            .into_iter()
            .map(|g| g * scale)
            .collect()
    }
}

/// Solves the damped normal equations for the step `d`.
///
/// A failed factorization means λ is too small for the current curvature;
/// callers should raise λ and retry.
pub fn lm_step(
    jac: &Matrix,
    residuals: &[f64],
    lambda: f64,
    weights: &[f64],
    reg: &Regularization,
) -> std::result::Result<Vec<f64>, NotPositiveDefinite> {
    let p = jac.cols();
    assert_eq!(weights.len(), p);
    assert_eq!(reg.mask.len(), p);
    let mut a = jac.gram();
    let mut rhs = jac.transpose_mul(residuals);
    if reg.xi != 1.0 {
        a = Matrix::from_vec(p, p, a.as_slice().iter().map(|v| v * reg.xi).collect());
        rhs.iter_mut().for_each(|v| *v *= reg.xi);
    }
    let beta = reg.beta(jac.rows());
    for i in 0..p {
        if beta != 0.0 && reg.mask[i] {
            a[(i, i)] += beta;
            rhs[i] += beta * weights[i];
        }
        a[(i, i)] += lambda;
    }
    rhs.iter_mut().for_each(|v| *v = -*v);
    cholesky_solve(a, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GoalMet,
    MinGrad,
    MaxFail,
    EpochsExhausted,
    MuMax,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::GoalMet => "goal-met",
            StopReason::MinGrad => "min-grad",
            StopReason::MaxFail => "max-fail",
            StopReason::EpochsExhausted => "epochs-exhausted",
            StopReason::MuMax => "mu-max",
        })
    }
}

/// State after epoch `epoch` (epoch 0 is the initial weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Regularized training objective.
    pub performance: f64,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub test_mse: Option<f64>,
    /// ∞-norm of the objective gradient at these weights.
    pub gradient: f64,
    /// Damping in effect for the next proposal.
    pub mu: f64,
    /// Proposals rejected before this epoch's step was accepted.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub params: TrainParams,
    pub splits: Splits,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub final_epoch: usize,
    /// Weights restored from `best_epoch`.
    pub network: NarxNetwork,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

fn residuals_on(net: &NarxNetwork, ds: &DelayedDataset, rows: Range<usize>) -> Result<Vec<f64>> {
    let out = net.forward_rows(ds, rows.clone())?;
    Ok(out.iter().zip(&ds.target[rows]).map(|(y, t)| y - t).collect())
}

fn block_mse(net: &NarxNetwork, ds: &DelayedDataset, rows: &Range<usize>) -> Result<Option<f64>> {
    if rows.is_empty() {
        return Ok(None);
    }
    Ok(Some(mse(&residuals_on(net, ds, rows.clone())?)))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Trains one network from `seed`, stopping early on validation failures
/// and restoring the weights with the lowest validation MSE.
pub fn train(
    config: &NarxConfig,
    ds: &DelayedDataset,
    splits: &Splits,
    params: &TrainParams,
    seed: u64,
) -> Result<TrainReport> {
    params.validate()?;
    if splits.len() != ds.len() {
        return Err(Error::Shape {
            expected: format!("splits covering {} samples", ds.len()),
            found: splits.len().to_string(),
        });
    }
    if splits.train.is_empty() || splits.validation.is_empty() {
        return Err(Error::InsufficientData {
            needed: 2,
            available: splits.train.len().min(splits.validation.len()),
        });
    }
    let mut net = NarxNetwork::init(config.clone(), seed)?;
    let reg = Regularization::for_network(&net, params.xi, params.regularize_biases);
    let train_rows = splits.train.clone();

    let (mut jac, mut residuals) = net.jacobian_rows(ds, train_rows.clone())?;
    let mut perf = reg.performance(&residuals, net.weights());
    if !perf.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut grad = inf_norm(&reg.gradient(&jac, &residuals, net.weights()));
    let mut mu = params.mu;
    let validation_mse = block_mse(&net, ds, &splits.validation)?.unwrap();
    let mut records = vec![EpochRecord {
        epoch: 0,
        performance: perf,
        train_mse: mse(&residuals),
        validation_mse,
        test_mse: block_mse(&net, ds, &splits.test)?,
        gradient: grad,
        mu,
        rejected: 0,
    }];
    let mut best = (validation_mse, 0usize, net.weights().to_vec());
    let mut fails = 0usize;
    let mut epoch = 0usize;

    let stop_reason = 'epochs: loop {
        if perf <= params.goal {
            break StopReason::GoalMet;
        }
        if mu > params.mu_max {
            break StopReason::MuMax;
        }
        if grad <= params.min_grad {
            break StopReason::MinGrad;
        }
        if epoch >= params.epochs {
            break StopReason::EpochsExhausted;
        }
        if fails >= params.max_fail {
            break StopReason::MaxFail;
        }

        let mut rejected = 0;
        let candidate = loop {
            if let Ok(step) = lm_step(&jac, &residuals, mu, net.weights(), &reg) {
                let weights: Vec<f64> = net.weights().iter().zip(&step).map(|(w, d)| w + d).collect();
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Diverged { epoch: epoch + 1 });
                }
                let cand = net.with_weights(weights)?;
                let cand_perf = reg.performance(&residuals_on(&cand, ds, train_rows.clone())?, cand.weights());
                if !cand_perf.is_finite() {
                    return Err(Error::Diverged { epoch: epoch + 1 });
                }
                if cand_perf < perf {
                    mu *= params.mu_dec;
                    break cand;
                }
            }
            rejected += 1;
            mu *= params.mu_inc;
            if mu > params.mu_max {
                break 'epochs StopReason::MuMax;
            }
        };

        epoch += 1;
        net = candidate;
        (jac, residuals) = net.jacobian_rows(ds, train_rows.clone())?;
        perf = reg.performance(&residuals, net.weights());
        grad = inf_norm(&reg.gradient(&jac, &residuals, net.weights()));
        let validation_mse = block_mse(&net, ds, &splits.validation)?.unwrap();
        records.push(EpochRecord {
            epoch,
            performance: perf,
            train_mse: mse(&residuals),
            validation_mse,
            test_mse: block_mse(&net, ds, &splits.test)?,
            gradient: grad,
            mu,
            rejected,
        });
        if validation_mse < best.0 {
            best = (validation_mse, epoch, net.weights().to_vec());
            fails = 0;
        } else if validation_mse > best.0 {
            fails += 1;
        }
    };

    Ok(TrainReport {
        seed,
        params: params.clone(),
        splits: splits.clone(),
        epochs: records,
        stop_reason,
        best_epoch: best.1,
        final_epoch: epoch,
        network: net.with_weights(best.2)?,
    })
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub validation_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub selected: TrainReport,
    pub runs: Vec<RestartSummary>,
}

/// Trains `params.restarts` networks with seeds `seed, seed + 1, …` and keeps
/// the one with the lowest validation MSE (then lowest test MSE, then lowest seed).
pub fn train_with_restarts(
    config: &NarxConfig,
    ds: &DelayedDataset,
    splits: &Splits,
    params: &TrainParams,
    seed: u64,
) -> Result<RestartReport> {
    params.validate()?;
    let outcomes: Vec<(u64, Result<TrainReport>)> = (0..params.restarts as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            (s, train(config, ds, splits, params, s))
        })
        .collect();

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut selected: Option<TrainReport> = None;
    for (s, outcome) in outcomes {
        match outcome {
            Ok(report) => {
                let best = report.best();
                runs.push(RestartSummary {
                    seed: s,
                    validation_mse: Some(best.validation_mse),
                    test_mse: best.test_mse,
                    stop_reason: Some(report.stop_reason),
                    best_epoch: Some(report.best_epoch),
                    error: None,
                });
                let better = match &selected {
                    None => true,
                    Some(cur) => rank(&report) < rank(cur),
                };
                if better {
                    selected = Some(report);
                }
            }
            // configuration errors are not restart-specific
            Err(e @ (Error::InvalidConfig(_) | Error::Shape { .. } | Error::InsufficientData { .. })) => return Err(e),
            Err(e) => runs.push(RestartSummary {
                seed: s,
                validation_mse: None,
                test_mse: None,
                stop_reason: None,
                best_epoch: None,
                error: Some(e.to_string()),
            }),
        }
    }
    match selected {
        Some(selected) => Ok(RestartReport { selected, runs }),
        None => Err(Error::AllRestartsDiverged {
            restarts: params.restarts,
        }),
    }
}

fn rank(r: &TrainReport) -> (OrdF64, OrdF64, u64) {
    let best = r.best();
    (
        OrdF64(best.validation_mse),
        OrdF64(best.test_mse.unwrap_or(f64::INFINITY)),
        r.seed,
    )
}

#[derive(PartialEq, PartialOrd)]
struct OrdF64(f64);
