use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Channel, TimeSeriesFrame};
use crate::error::{Error, Result};

/// Observed extent of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
}

/// Per-channel affine maps from `[min, max]` onto `[lo, hi]`.
///
/// Values outside the fitted range are mapped linearly beyond the target
/// interval; nothing is clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub ranges: Vec<ChannelRange>,
    pub lo: f64,
    pub hi: f64,
}

/// Fits `[-1, 1]` maps on every row of `frame`.
pub fn fit_normalization(frame: &TimeSeriesFrame, channels: &[Channel]) -> Result<NormalizationSpec> {
    NormalizationSpec::fit_rows(frame, channels, 0..frame.len())
}

impl NormalizationSpec {
    /// Fits on `rows` only. Used to keep validation and test rows out of the fit.
    pub fn fit_rows(frame: &TimeSeriesFrame, channels: &[Channel], rows: Range<usize>) -> Result<Self> {
        if rows.is_empty() || rows.end > frame.len() {
            return Err(Error::InsufficientData {
                needed: rows.end.max(1),
                available: frame.len(),
            });
        }
        let mut ranges: Vec<ChannelRange> = Vec::with_capacity(channels.len());
        for &channel in channels {
            if ranges.iter().any(|r| r.channel == channel) {
                continue;
            }
            let values = &frame.channel(channel)?[rows.clone()];
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max <= min {
                return Err(Error::DegenerateRange { channel });
            }
            ranges.push(ChannelRange { channel, min, max });
        }
        Ok(NormalizationSpec {
            ranges,
            lo: -1.0,
            hi: 1.0,
        })
    }

    pub fn range(&self, channel: Channel) -> Result<&ChannelRange> {
        self.ranges
            .iter()
            .find(|r| r.channel == channel)
            .ok_or(Error::UnknownChannel(channel))
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        self.ranges.iter().map(|r| r.channel)
    }

    fn forward(&self, r: &ChannelRange, x: f64) -> f64 {
        (x - r.min) / (r.max - r.min) * (self.hi - self.lo) + self.lo
    }

    fn backward(&self, r: &ChannelRange, y: f64) -> f64 {
        (y - self.lo) / (self.hi - self.lo) * (r.max - r.min) + r.min
    }

    pub fn normalize(&self, values: &[f64], channel: Channel) -> Result<Vec<f64>> {
        let r = self.range(channel)?;
        Ok(values.iter().map(|&x| self.forward(r, x)).collect())
    }

    pub fn invert(&self, values: &[f64], channel: Channel) -> Result<Vec<f64>> {
        let r = self.range(channel)?;
        Ok(values.iter().map(|&y| self.backward(r, y)).collect())
    }

    /// Returns a copy of `frame` with every channel in the spec normalized.
    /// Channels not covered by the spec are left untouched.
    pub fn apply(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        let mut out = frame.clone();
        for r in &self.ranges {
            let column = out.channel_mut(r.channel)?;
            for x in column.iter_mut() {
                *x = self.forward(r, *x);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::read_ohlcv;

    fn frame_with_close(close: Vec<f64>) -> TimeSeriesFrame {
        let n = close.len();
        TimeSeriesFrame {
            timesteps: (0..n as i64).collect(),
            open: close.clone(),
            high: close.clone(),
            low: close.clone(),
            volume: vec![1.0; n],
            close,
            adj_close: None,
        }
    }

    #[test]
    fn maps_zero_ten_onto_unit_interval() {
        let spec = fit_normalization(&frame_with_close(vec![0.0, 10.0]), &[Channel::Close]).unwrap();
        let mapped = spec.normalize(&[0.0, 10.0, 5.0], Channel::Close).unwrap();
        assert_eq!(mapped, vec![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetric_range_scales_by_a_third() {
        let spec = fit_normalization(&frame_with_close(vec![-3.0, 3.0]), &[Channel::Close]).unwrap();
        let mapped = spec.normalize(&[-3.0, 1.5, 3.0], Channel::Close).unwrap();
        assert_eq!(mapped, vec![-1.0, 0.5, 1.0]);
    }

    #[test]
    fn sample_close_column() {
        let frame = read_ohlcv(crate::data::tests::TABLE_ONE.as_bytes()).unwrap();
        let spec = fit_normalization(&frame, &[Channel::Close]).unwrap();
        let r = spec.range(Channel::Close).unwrap();
        assert_eq!((r.min, r.max), (20.66, 21.15));
        let mapped = spec.normalize(&[20.66, 21.15], Channel::Close).unwrap();
        assert_eq!(mapped, vec![-1.0, 1.0]);

        // 25.0 is far above the fitted max: (25 - 20.66) / 0.49 * 2 - 1
        let above = spec.normalize(&[25.0], Channel::Close).unwrap()[0];
        assert!((above - 16.714_285_714_285_7).abs() < 1e-9, "{above}");

        let normalized = spec.apply(&frame).unwrap();
        let back = spec.invert(&normalized.close, Channel::Close).unwrap();
        for (a, b) in back.iter().zip(&frame.close) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        // channels outside the spec are untouched
        assert_eq!(normalized.open, frame.open);
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let frame = frame_with_close(vec![1.0, 2.0]);
        assert!(matches!(
            fit_normalization(&frame, &[Channel::Volume]),
            Err(Error::DegenerateRange {
                channel: Channel::Volume
            })
        ));
    }

    #[test]
    fn unknown_channel() {
        let spec = fit_normalization(&frame_with_close(vec![0.0, 1.0]), &[Channel::Close]).unwrap();
        assert!(matches!(
            spec.invert(&[0.0], Channel::Open),
            Err(Error::UnknownChannel(Channel::Open))
        ));
    }

    #[test]
    fn fit_rows_ignores_later_rows() {
        let frame = frame_with_close(vec![0.0, 2.0, 100.0]);
        let spec = NormalizationSpec::fit_rows(&frame, &[Channel::Close], 0..2).unwrap();
        assert_eq!(spec.range(Channel::Close).unwrap().max, 2.0);
    }
}
