//! Fit metrics, residual correlation checks and the accept/reject rule.
//!
//! Correlations are normalized so that an error series correlates with itself
//! at lag 0 with value 1. The 95% white-noise band is `±1.96/√n`.

use serde::{Deserialize, Serialize};

use crate::data::{Channel, NormalizationSpec};
use crate::error::{Error, Result};
use crate::train::mse;

/// Pearson correlation between network outputs and targets.
pub fn regression_r(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(outputs, targets)?;
    let n = outputs.len() as f64;
    let mo = outputs.iter().sum::<f64>() / n;
    let mt = targets.iter().sum::<f64>() / n;
    let (mut sot, mut soo, mut stt) = (0.0, 0.0, 0.0);
    for (o, t) in outputs.iter().zip(targets) {
        let (a, b) = (o - mo, t - mt);
        sot += a * b;
        soo += a * a;
        stt += b * b;
    }
    if soo == 0.0 {
        return Err(Error::ZeroVariance("outputs"));
    }
    if stt == 0.0 {
        return Err(Error::ZeroVariance("targets"));
    }
    Ok((sot / (soo.sqrt() * stt.sqrt())).clamp(-1.0, 1.0))
}

/// Largest `|output - target| / |target|`, in percent.
pub fn max_divergence(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(outputs, targets)?;
    let mut worst: f64 = 0.0;
    for (index, (o, t)) in outputs.iter().zip(targets).enumerate() {
        if *t == 0.0 {
            return Err(Error::ZeroTarget { index });
        }
        worst = worst.max((o - t).abs() / t.abs());
    }
    Ok(worst * 100.0)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: format!("{} values", a.len()),
            found: b.len().to_string(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// 95% band for correlations of white noise over `n` samples.
pub fn confidence_bound(n: usize) -> f64 {
    1.96 / (n as f64).sqrt()
}

/// Correlation values indexed by lag, with the band they are judged against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub lags: Vec<i64>,
    pub values: Vec<f64>,
    pub bound: f64,
}

impl CorrelationSeries {
    /// Values outside the band, ignoring lag 0 when `skip_zero` is set.
    pub fn excursions(&self, skip_zero: bool) -> usize {
        self.lags
            .iter()
            .zip(&self.values)
            .filter(|(&l, &v)| !(skip_zero && l == 0) && v.abs() > self.bound)
            .count()
    }

    pub fn value_at(&self, lag: i64) -> Option<f64> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.values[i])
    }
}

fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss = c.iter().map(|v| v * v).sum();
    (c, ss)
}

/// Normalized autocorrelation of `errors` for lags `0..=max_lag`.
pub fn error_autocorrelation(errors: &[f64], max_lag: usize) -> Result<CorrelationSeries> {
    let n = errors.len();
    if max_lag == 0 || n <= max_lag {
        return Err(Error::Domain(format!(
            "autocorrelation needs 1 <= max_lag < n (max_lag {max_lag}, n {n})"
        )));
    }
    let (e, ss) = centered(errors);
    if ss == 0.0 {
        return Err(Error::ZeroVariance("errors"));
    }
    let values = (0..=max_lag)
        .map(|l| {
            if l == 0 {
                1.0
            } else {
                e[..n - l].iter().zip(&e[l..]).map(|(a, b)| a * b).sum::<f64>() / ss
            }
        })
        .collect();
    Ok(CorrelationSeries {
        lags: (0..=max_lag as i64).collect(),
        values,
        bound: confidence_bound(n),
    })
}

/// Normalized cross-correlation between an input channel and the errors for
/// lags `-max_lag..=max_lag`. A positive lag `l` pairs `input(t)` with
/// `errors(t + l)`.
pub fn input_error_crosscorrelation(input: &[f64], errors: &[f64], max_lag: usize) -> Result<CorrelationSeries> {
    check_pair(input, errors)?;
    let n = errors.len();
    if n <= max_lag {
        return Err(Error::Domain(format!(
            "cross-correlation needs max_lag < n (max_lag {max_lag}, n {n})"
        )));
    }
    let (x, sxx) = centered(input);
    let (e, see) = centered(errors);
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("input"));
    }
    if see == 0.0 {
        return Err(Error::ZeroVariance("errors"));
    }
    let norm = sxx.sqrt() * see.sqrt();
    let m = max_lag as i64;
    let values = (-m..=m)
        .map(|l| {
            let s: f64 = if l >= 0 {
                let l = l as usize;
                x[..n - l].iter().zip(&e[l..]).map(|(a, b)| a * b).sum()
            } else {
                let l = (-l) as usize;
                x[l..].iter().zip(&e[..n - l]).map(|(a, b)| a * b).sum()
            };
            (s / norm).clamp(-1.0, 1.0)
        })
        .collect();
    Ok(CorrelationSeries {
        lags: (-m..=m).collect(),
        values,
        bound: confidence_bound(n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub r_min: f64,
    /// Maximum tolerated divergence, percent.
    pub max_divergence_pct: f64,
    /// Maximum MSE in price units; `None` leaves MSE unchecked.
    pub mse_max: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            r_min: 0.99,
            max_divergence_pct: 10.0,
            mse_max: None,
        }
    }
}

/// Headline fit metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// MSE in price units.
    pub mse: f64,
    pub r_value: f64,
    pub max_divergence_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reasons: Vec<String>,
}

/// Inclusive range check that fails for NaN.
fn within(lo: f64, v: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

/// Accepts when every metric is within its threshold (bounds are inclusive);
/// otherwise lists each violated criterion.
pub fn acceptance_verdict(metrics: &Metrics, thresholds: &Thresholds) -> Verdict {
    let mut reasons = Vec::new();
    if !within(thresholds.r_min, metrics.r_value, f64::INFINITY) {
        reasons.push(format!(
            "regression R {:.6} is below the minimum {}",
            metrics.r_value, thresholds.r_min
        ));
    }
    if !within(0.0, metrics.max_divergence_pct, thresholds.max_divergence_pct) {
        reasons.push(format!(
            "maximum divergence {:.4}% exceeds the {}% limit",
            metrics.max_divergence_pct, thresholds.max_divergence_pct
        ));
    }
    if let Some(limit) = thresholds.mse_max {
        if !within(0.0, metrics.mse, limit) {
            reasons.push(format!("MSE {:.6e} exceeds the limit {limit:e}", metrics.mse));
        }
    }
    Verdict {
        accepted: reasons.is_empty(),
        reasons,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCorrelation {
    pub channel: String,
    pub series: CorrelationSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    pub max_lag: usize,
    pub thresholds: Thresholds,
    /// Largest fraction of input-error cross-correlation values allowed
    /// outside the band for the inputs to count as uncorrelated with the errors.
    pub max_excursion_rate: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            max_lag: 20,
            thresholds: Thresholds::default(),
            max_excursion_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub samples: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// MSE in normalized units.
    pub mse_normalized: f64,
    /// Regularized training objective, when known.
    pub performance: Option<f64>,
    pub error_autocorr: CorrelationSeries,
    pub input_error_xcorr: Vec<ChannelCorrelation>,
    pub xcorr_excursion_rate: f64,
    pub xcorr_within_bounds: bool,
    pub verdict: Verdict,
}

/// Everything needed to diagnose one set of predictions.
pub struct DiagnosticsInput<'a> {
    /// Network outputs in normalized units.
    pub outputs: &'a [f64],
    /// Targets in normalized units.
    pub targets: &'a [f64],
    /// Exogenous input series aligned with the targets, by channel name.
    pub inputs: Vec<(String, &'a [f64])>,
    /// Maps target values back to prices; `None` when already in price units.
    pub scale: Option<(&'a NormalizationSpec, Channel)>,
    pub performance: Option<f64>,
}

pub fn diagnose(input: &DiagnosticsInput<'_>, options: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    check_pair(input.outputs, input.targets)?;
    let n = input.targets.len();
    if n < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: n,
        });
    }
    let (out_price, tgt_price) = match input.scale {
        Some((spec, channel)) => (
            spec.invert(input.outputs, channel)?,
            spec.invert(input.targets, channel)?,
        ),
        None => (input.outputs.to_vec(), input.targets.to_vec()),
    };
    let errors: Vec<f64> = input.targets.iter().zip(input.outputs).map(|(t, y)| t - y).collect();
    let price_errors: Vec<f64> = tgt_price.iter().zip(&out_price).map(|(t, y)| t - y).collect();
    let max_lag = options.max_lag.min(n - 1).max(1);

    let metrics = Metrics {
        mse: mse(&price_errors),
        r_value: regression_r(input.outputs, input.targets)?,
        max_divergence_pct: max_divergence(&out_price, &tgt_price)?,
    };
    let error_autocorr = error_autocorrelation(&errors, max_lag)?;
    let input_error_xcorr = input
        .inputs
        .iter()
        .map(|(name, series)| {
            Ok(ChannelCorrelation {
                channel: name.clone(),
                series: input_error_crosscorrelation(series, &errors, max_lag)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = input_error_xcorr.iter().map(|c| c.series.values.len()).sum();
    let outside: usize = input_error_xcorr.iter().map(|c| c.series.excursions(false)).sum();
    let xcorr_excursion_rate = if total == 0 { 0.0 } else { outside as f64 / total as f64 };
    let verdict = acceptance_verdict(&metrics, &options.thresholds);
    Ok(DiagnosticsReport {
        samples: n,
        metrics,
        mse_normalized: mse(&errors),
        performance: input.performance,
        error_autocorr,
        input_error_xcorr,
        xcorr_excursion_rate,
        xcorr_within_bounds: xcorr_excursion_rate <= options.max_excursion_rate,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_of_identical_and_negated() {
        let t = [1.0, 2.0, 4.0, 3.0];
        assert!((regression_r(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((regression_r(&neg, &t).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            regression_r(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(regression_r(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn divergence_values() {
        assert_eq!(max_divergence(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((max_divergence(&[21.0], &[20.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(
            max_divergence(&[1.0, 1.0], &[1.0, 0.0]),
            Err(Error::ZeroTarget { index: 1 })
        ));
    }

    #[test]
    fn autocorrelation_of_period_four() {
        let e: Vec<f64> = (0..400)
            .map(|t| (std::f64::consts::FRAC_PI_2 * t as f64).sin())
            .collect();
        let ac = error_autocorrelation(&e, 8).unwrap();
        assert_eq!(ac.value_at(0), Some(1.0));
        assert!(ac.value_at(4).unwrap() > 0.95);
        assert!(ac.value_at(2).unwrap() < -0.95);
        assert!(ac.value_at(4).unwrap() > ac.bound);
        assert!(matches!(
            error_autocorrelation(&[2.0; 10], 3),
            Err(Error::ZeroVariance(_))
        ));
        assert!(error_autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn cross_correlation_of_copy() {
        let x: Vec<f64> = (0..50).map(|t| (t as f64 * 0.31).sin() + 0.01 * t as f64).collect();
        let cc = input_error_crosscorrelation(&x, &x, 5).unwrap();
        assert!((cc.value_at(0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cc.lags.len(), 11);
        // a delayed copy peaks at the matching positive lag
        let mut delayed = vec![0.0; 3];
        delayed.extend_from_slice(&x[..47]);
        let cc = input_error_crosscorrelation(&x, &delayed, 5).unwrap();
        let peak = cc
            .lags
            .iter()
            .zip(&cc.values)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(*peak.0, 3);
    }

    #[test]
    fn band_for_paper_sized_sample() {
        assert!((confidence_bound(11_900) - 0.018).abs() < 1e-3);
    }

    #[test]
    fn verdicts() {
        let t = Thresholds::default();
        let good = Metrics {
            mse: 0.024288,
            r_value: 0.998,
            max_divergence_pct: 1.122,
        };
        assert!(acceptance_verdict(&good, &t).accepted);

        let diverging = Metrics {
            max_divergence_pct: 10.5,
            ..good.clone()
        };
        let v = acceptance_verdict(&diverging, &t);
        assert!(!v.accepted);
        assert_eq!(v.reasons.len(), 1);
        assert!(v.reasons[0].contains("10%"));

        let boundary = Metrics {
            r_value: 0.99,
            max_divergence_pct: 10.0,
            ..good.clone()
        };
        assert!(acceptance_verdict(&boundary, &t).accepted);

        let strict = Thresholds {
            mse_max: Some(0.01),
            ..Thresholds::default()
        };
        let bad = Metrics { r_value: 0.5, ..good };
        assert_eq!(acceptance_verdict(&bad, &strict).reasons.len(), 2);
    }
}
