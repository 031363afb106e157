use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Channel, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A sorted, duplicate-free, non-empty set of tap delays.
///
/// Parses from `"a:b"` (inclusive range), a single integer, or a
/// whitespace-separated list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct LagSet(Vec<usize>);

impl LagSet {
    pub fn new(mut lags: Vec<usize>) -> Result<Self> {
        lags.sort_unstable();
        lags.dedup();
        if lags.is_empty() {
            return Err(Error::InvalidLag("lag set is empty".into()));
        }
        Ok(LagSet(lags))
    }

    pub fn range(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidLag(format!("{lo}:{hi} is an empty range")));
        }
        Self::new((lo..=hi).collect())
    }

    pub fn lags(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn min(&self) -> usize {
        self.0[0]
    }

    pub fn contains(&self, lag: usize) -> bool {
        self.0.binary_search(&lag).is_ok()
    }

    /// Feedback taps must start at lag 1: lag 0 of the target is the prediction itself.
    pub fn check_feedback(&self) -> Result<()> {
        if self.contains(0) {
            return Err(Error::InvalidLag("feedback delays must be at least 1".into()));
        }
        Ok(())
    }

    fn is_contiguous(&self) -> bool {
        self.max() - self.min() + 1 == self.len()
    }
}

impl TryFrom<Vec<usize>> for LagSet {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        LagSet::new(v)
    }
}

impl From<LagSet> for Vec<usize> {
    fn from(l: LagSet) -> Self {
        l.0
    }
}

impl fmt::Display for LagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() == 1 {
            write!(f, "{}", self.min())
        } else if self.is_contiguous() {
            write!(f, "{}:{}", self.min(), self.max())
        } else {
            let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
            f.write_str(&parts.join(" "))
        }
    }
}

impl FromStr for LagSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidLag(format!("cannot parse `{s}`"));
        if let Some((a, b)) = s.split_once(':') {
            let lo = a.trim().parse().map_err(|_| bad())?;
            let hi = b.trim().parse().map_err(|_| bad())?;
            return LagSet::range(lo, hi);
        }
        let lags = s
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        LagSet::new(lags)
    }
}

/// Delay-shifted supervised samples.
///
/// Sample `k` (0-based, `k < len()`) predicts the target at series index
/// `first_usable_index + k`. Its exogenous regressors are laid out lag-major:
/// for each lag `i` in ascending order, the value of every channel at index
/// `t - i`. Feedback regressors hold `y(t - j)` for each `j` in the feedback
/// lag set, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayedDataset {
    pub input_delays: LagSet,
    pub feedback_delays: LagSet,
    pub n_exo: usize,
    pub exo: Matrix,
    pub feedback: Matrix,
    pub target: Vec<f64>,
    pub timesteps: Vec<i64>,
    pub first_usable_index: usize,
}

impl DelayedDataset {
    /// Builds a dataset from raw column series. `exo` holds one slice per channel.
    pub fn from_series(
        exo: &[&[f64]],
        target: &[f64],
        input_delays: &LagSet,
        feedback_delays: &LagSet,
        timesteps: Option<&[i64]>,
    ) -> Result<Self> {
        feedback_delays.check_feedback()?;
        if exo.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one exogenous channel is required".into(),
            ));
        }
        let n = target.len();
        if let Some(bad) = exo.iter().find(|c| c.len() != n) {
            return Err(Error::Shape {
                expected: format!("{n} exogenous values"),
                found: bad.len().to_string(),
            });
        }
        if let Some(ts) = timesteps {
            if ts.len() != n {
                return Err(Error::Shape {
                    expected: format!("{n} timesteps"),
                    found: ts.len().to_string(),
                });
            }
        }
        let first = input_delays.max().max(feedback_delays.max());
        if n <= first {
            return Err(Error::InsufficientData {
                needed: first + 1,
                available: n,
            });
        }
        let samples = n - first;
        let m = exo.len();
        let mut exo_m = Matrix::zeros(samples, input_delays.len() * m);
        let mut fb_m = Matrix::zeros(samples, feedback_delays.len());
        for k in 0..samples {
            let t = first + k;
            let row = exo_m.row_mut(k);
            for (li, &lag) in input_delays.lags().iter().enumerate() {
                for (c, series) in exo.iter().enumerate() {
                    row[li * m + c] = series[t - lag];
                }
            }
            let row = fb_m.row_mut(k);
            for (lj, &lag) in feedback_delays.lags().iter().enumerate() {
                row[lj] = target[t - lag];
            }
        }
        Ok(DelayedDataset {
            input_delays: input_delays.clone(),
            feedback_delays: feedback_delays.clone(),
            n_exo: m,
            exo: exo_m,
            feedback: fb_m,
            target: target[first..].to_vec(),
            timesteps: match timesteps {
                Some(ts) => ts[first..].to_vec(),
                None => (first as i64..n as i64).collect(),
            },
            first_usable_index: first,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn regressor_width(&self) -> usize {
        self.exo.cols() + self.feedback.cols()
    }

    /// Writes the full regressor row of sample `k` (exogenous then feedback) into `buf`.
    pub fn regressor_into(&self, k: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend_from_slice(self.exo.row(k));
        buf.extend_from_slice(self.feedback.row(k));
    }
}

/// Pairs lagged exogenous channels and lagged targets with the current target.
pub fn prepare_delayed(
    frame: &TimeSeriesFrame,
    input_delays: &LagSet,
    feedback_delays: &LagSet,
    exo_channels: &[Channel],
    target_channel: Channel,
) -> Result<DelayedDataset> {
    let exo = exo_channels
        .iter()
        .map(|&c| frame.channel(c))
        .collect::<Result<Vec<_>>>()?;
    DelayedDataset::from_series(
        &exo,
        frame.channel(target_channel)?,
        input_delays,
        feedback_delays,
        Some(&frame.timesteps),
    )
}
