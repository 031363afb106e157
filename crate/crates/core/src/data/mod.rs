//! OHLCV ingestion and supervised-dataset preparation.
//!
//! A [`TimeSeriesFrame`] holds one row per trading day. Rows are consecutive
//! samples: calendar gaps such as weekends are not filled.

mod delay;
mod normalize;
mod split;

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use delay::{prepare_delayed, DelayedDataset, LagSet};
pub use normalize::{fit_normalization, ChannelRange, NormalizationSpec};
pub use split::{split_indices, SplitRatios, Splits};

/// One column of an OHLCV table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Open,
    High,
    Low,
    Close,
    Volume,
    AdjClose,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Open,
        Channel::High,
        Channel::Low,
        Channel::Close,
        Channel::Volume,
        Channel::AdjClose,
    ];

    /// Default exogenous inputs: everything known at the close except the close itself.
    pub const DEFAULT_EXOGENOUS: [Channel; 4] = [Channel::Open, Channel::High, Channel::Low, Channel::Volume];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Open => "open",
            Channel::High => "high",
            Channel::Low => "low",
            Channel::Close => "close",
            Channel::Volume => "volume",
            Channel::AdjClose => "adj_close",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match header_key(s).as_str() {
            "open" => Ok(Channel::Open),
            "high" => Ok(Channel::High),
            "low" => Ok(Channel::Low),
            "close" => Ok(Channel::Close),
            "volume" => Ok(Channel::Volume),
            "adjclose" => Ok(Channel::AdjClose),
            _ => Err(Error::InvalidConfig(format!("unknown channel `{s}`"))),
        }
    }
}

/// Lowercase and drop everything but letters and digits, so that
/// `Adj Close`, `adj_close` and `AdjClose` compare equal.
fn header_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Timestamped OHLCV rows, sorted by strictly increasing day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesFrame {
    pub timesteps: Vec<i64>,
    pub open: Vec<f64>,
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub volume: Vec<f64>,
    pub close: Vec<f64>,
    pub adj_close: Option<Vec<f64>>,
}

struct RawRow {
    timestep: i64,
    open: f64,
    high: f64,
    low: f64,
    volume: f64,
    close: f64,
    adj_close: Option<f64>,
}

impl TimeSeriesFrame {
    /// Builds a frame from columns, validating every invariant.
    pub fn new(
        timesteps: Vec<i64>,
        open: Vec<f64>,
        high: Vec<f64>,
        low: Vec<f64>,
        volume: Vec<f64>,
        close: Vec<f64>,
        adj_close: Option<Vec<f64>>,
    ) -> Result<Self> {
        let frame = TimeSeriesFrame {
            timesteps,
            open,
            high,
            low,
            volume,
            close,
            adj_close,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timesteps.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let lengths = [
            self.open.len(),
            self.high.len(),
            self.low.len(),
            self.volume.len(),
            self.close.len(),
            self.adj_close.as_ref().map_or(n, Vec::len),
        ];
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::Shape {
                expected: format!("{n} values per channel"),
                found: format!("{lengths:?}"),
            });
        }
        for k in 0..n {
            let row = k + 1;
            if k > 0 && self.timesteps[k] <= self.timesteps[k - 1] {
                return Err(Error::Validation {
                    row,
                    reason: format!(
                        "timestep {} does not follow {}",
                        self.timesteps[k],
                        self.timesteps[k - 1]
                    ),
                });
            }
            check_row(
                row,
                self.high[k],
                self.low[k],
                self.volume[k],
                [self.open[k], self.close[k]],
            )?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    pub fn has_channel(&self, channel: Channel) -> bool {
        channel != Channel::AdjClose || self.adj_close.is_some()
    }

    pub fn channel(&self, channel: Channel) -> Result<&[f64]> {
        Ok(match channel {
            Channel::Open => &self.open,
            Channel::High => &self.high,
            Channel::Low => &self.low,
            Channel::Close => &self.close,
            Channel::Volume => &self.volume,
            Channel::AdjClose => self
                .adj_close
                .as_deref()
                .ok_or(Error::UnknownChannel(Channel::AdjClose))?,
        })
    }

    fn channel_mut(&mut self, channel: Channel) -> Result<&mut Vec<f64>> {
        Ok(match channel {
            Channel::Open => &mut self.open,
            Channel::High => &mut self.high,
            Channel::Low => &mut self.low,
            Channel::Close => &mut self.close,
            Channel::Volume => &mut self.volume,
            Channel::AdjClose => self
                .adj_close
                .as_mut()
                .ok_or(Error::UnknownChannel(Channel::AdjClose))?,
        })
    }

    /// Rows `range`, as a new frame.
    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            timesteps: self.timesteps[range.clone()].to_vec(),
            open: self.open[range.clone()].to_vec(),
            high: self.high[range.clone()].to_vec(),
            low: self.low[range.clone()].to_vec(),
            volume: self.volume[range.clone()].to_vec(),
            close: self.close[range.clone()].to_vec(),
            adj_close: self.adj_close.as_ref().map(|v| v[range].to_vec()),
        }
    }

    /// Rows whose timestep lies in `[from, to]`; either bound may be open.
    pub fn between(&self, from: Option<i64>, to: Option<i64>) -> Result<TimeSeriesFrame> {
        let start = from.map_or(0, |f| self.timesteps.partition_point(|&t| t < f));
        let end = to.map_or(self.len(), |t| self.timesteps.partition_point(|&s| s <= t));
        if start >= end {
            return Err(Error::EmptyInput);
        }
        Ok(self.slice(start..end))
    }

    /// Index of the first row at or after `timestep`.
    pub fn position_of(&self, timestep: i64) -> usize {
        self.timesteps.partition_point(|&t| t < timestep)
    }

    fn from_rows(mut rows: Vec<RawRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let has_adj = rows.iter().all(|r| r.adj_close.is_some());
        rows.sort_by_key(|r| r.timestep);
        if let Some(w) = rows.windows(2).position(|w| w[0].timestep == w[1].timestep) {
            return Err(Error::Validation {
                row: w + 2,
                reason: format!("duplicate timestep {}", rows[w].timestep),
            });
        }
        Ok(TimeSeriesFrame {
            timesteps: rows.iter().map(|r| r.timestep).collect(),
            open: rows.iter().map(|r| r.open).collect(),
            high: rows.iter().map(|r| r.high).collect(),
            low: rows.iter().map(|r| r.low).collect(),
            volume: rows.iter().map(|r| r.volume).collect(),
            close: rows.iter().map(|r| r.close).collect(),
            adj_close: has_adj.then(|| rows.iter().map(|r| r.adj_close.unwrap()).collect()),
        })
    }
}

fn check_row(row: usize, high: f64, low: f64, volume: f64, others: [f64; 2]) -> Result<()> {
    if volume < 0.0 {
        return Err(Error::Validation {
            row,
            reason: format!("negative volume {volume}"),
        });
    }
    if high < low {
        return Err(Error::Validation {
            row,
            reason: format!("high {high} is below low {low}"),
        });
    }
    if !(high.is_finite() && low.is_finite() && volume.is_finite()) || others.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation {
            row,
            reason: "non-finite value".into(),
        });
    }
    Ok(())
}

/// Converts a calendar date to a serial day number. Day 1 is 0000-01-01 in
/// the proleptic Gregorian calendar, so 2000-01-01 is day 730486.
pub fn day_index(date: NaiveDate) -> i64 {
    i64::from(date.num_days_from_ce()) + 366
}

/// Inverse of [`day_index`].
pub fn date_of_day_index(day: i64) -> Option<NaiveDate> {
    i32::try_from(day - 366)
        .ok()
        .and_then(NaiveDate::from_num_days_from_ce_opt)
}

/// Parses a plain integer day index or an ISO-8601 date (an optional time
/// part after `T` or a space is ignored).
pub fn parse_timestep(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    let date_part = s.split(['T', ' ']).next()?;
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").ok().map(day_index)
}

/// Reads an OHLCV CSV file.
pub fn load_ohlcv(path: impl AsRef<Path>) -> Result<TimeSeriesFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_ohlcv(file)
}

/// Parses OHLCV CSV from any reader. Columns are matched case-insensitively;
/// `Adj Close` is optional.
pub fn read_ohlcv<R: Read>(reader: R) -> Result<TimeSeriesFrame> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput);
    }
    let keys: Vec<String> = headers.iter().map(header_key).collect();
    let find = |names: &[&str], label: &str| -> Result<usize> {
        keys.iter()
            .position(|k| names.contains(&k.as_str()))
            .ok_or_else(|| Error::MissingColumn(label.to_string()))
    };
    let date_col = find(&["date", "timestep", "timestepday"], "Date")?;
    let cols = [
        find(&["open"], "Open")?,
        find(&["high"], "High")?,
        find(&["low"], "Low")?,
        find(&["volume"], "Volume")?,
        find(&["close"], "Close")?,
    ];
    let adj_col = keys.iter().position(|k| k == "adjclose");

    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let timestep = parse_timestep(cell(date_col)).ok_or_else(|| Error::Parse {
            row,
            column: headers[date_col].to_string(),
            value: cell(date_col).to_string(),
        })?;
        let number = |col: usize| -> Result<f64> {
            let text = cell(col);
            text.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: headers[col].to_string(),
                    value: text.to_string(),
                })
        };
        let [open, high, low, volume, close] = [
            number(cols[0])?,
            number(cols[1])?,
            number(cols[2])?,
            number(cols[3])?,
            number(cols[4])?,
        ];
        let adj_close = adj_col.map(number).transpose()?;
        check_row(row, high, low, volume, [open, close])?;
        rows.push(RawRow {
            timestep,
            open,
            high,
            low,
            volume,
            close,
            adj_close,
        });
    }
    TimeSeriesFrame::from_rows(rows)
}

/// Writes `frame` as OHLCV CSV with ISO dates, in the column order
/// `Date,Open,High,Low,Volume,Close[,Adj Close]`.
pub fn write_ohlcv<W: std::io::Write>(frame: &TimeSeriesFrame, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["Date", "Open", "High", "Low", "Volume", "Close"];
    if frame.adj_close.is_some() {
        header.push("Adj Close");
    }
    out.write_record(&header)?;
    for i in 0..frame.len() {
        let t = frame.timesteps[i];
        let mut record = vec![
            date_of_day_index(t).map_or_else(|| t.to_string(), |d| d.to_string()),
            frame.open[i].to_string(),
            frame.high[i].to_string(),
            frame.low[i].to_string(),
            frame.volume[i].to_string(),
            frame.close[i].to_string(),
        ];
        if let Some(adj) = &frame.adj_close {
            record.push(adj[i].to_string());
        }
        out.write_record(&record)?;
    }
    out.flush().map_err(|source| Error::Io {
        path: "<csv output>".into(),
        source,
    })
}
