//! NARX (nonlinear autoregressive with exogenous inputs) networks trained
//! by Levenberg-Marquardt for daily price forecasting.
//!
//! The workflow follows the modules in order:
//!
//! - [`data`]: OHLCV CSV ingestion, normalization, delay-shifted datasets and splits
//! - [`network`]: the network, open-loop evaluation, Jacobian, closed-loop simulation
//! - [`train`]: the Levenberg-Marquardt trainer with a weight-penalized objective
//! - [`diagnostics`]: R, divergence, residual correlations and the acceptance verdict
//! - [`sweep`]: grid search over delays and hidden-layer size
//! - [`pipeline`] and [`model`]: glue and the JSON model format
//!
//! ```
//! use narx::data::SplitRatios;
//! use narx::pipeline::{prepare, ExperimentSpec};
//! use narx::network::NarxConfig;
//! use narx::train::{train, TrainParams};
//!
//! let frame = narx::synthetic::ohlcv(300, 7, 0.02).frame;
//! let spec = ExperimentSpec::new("0:1".parse()?, "1".parse()?);
//! let prepared = prepare(&frame, &spec)?;
//! let config = NarxConfig::new(spec.input_delays.clone(), spec.feedback_delays.clone(), 4, 4)?;
//! let params = TrainParams { epochs: 20, ..Default::default() };
//! let report = train(&config, &prepared.dataset, &prepared.splits, &params, 1)?;
//! assert!(report.best().validation_mse.is_finite());
//! # Ok::<(), narx::Error>(())
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod network;
pub mod pipeline;
pub mod sweep;
pub mod synthetic;
pub mod train;

pub use error::{Error, ErrorKind, Result};
