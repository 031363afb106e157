//! Synthetic OHLCV-shaped series driven by a known NARX teacher network.
//!
//! Used for fixtures and for checking that training recovers a system whose
//! generating equation is known.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{LagSet, TimeSeriesFrame};
use crate::network::{NarxConfig, NarxNetwork};

/// Serial day number of 2010-01-01.
pub const FIRST_DAY: i64 = 734_139;
const BURN_IN: usize = 200;

#[derive(Debug, Clone)]
pub struct SyntheticSeries {
    pub frame: TimeSeriesFrame,
    pub teacher: NarxNetwork,
    /// Teacher-scale exogenous inputs, one vector per channel (open, high, low, volume).
    pub inputs: Vec<Vec<f64>>,
    /// Teacher-scale target.
    pub target: Vec<f64>,
    pub noise_std: f64,
}

/// Four bounded exogenous channels shaped like open/high/low/volume: a slowly
/// mean-reverting level with a high/low envelope, plus an independent volume process.
pub fn exogenous_inputs(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level: f64 = 0.0;
    let mut vol: f64 = 0.0;
    let mut out: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    for t in 0..n + BURN_IN {
        level = 0.98 * level + 0.2 * rng.random_range(-1.0..=1.0);
        vol = 0.9 * vol + 0.3 * rng.random_range(-1.0..=1.0);
        let up = 0.3 * rng.random_range(0.0..=1.0);
        let down = 0.3 * rng.random_range(0.0..=1.0);
        if t >= BURN_IN {
            out[0].push(level / 3.0);
            out[1].push((level + up) / 3.0);
            out[2].push((level - down) / 3.0);
            out[3].push(vol / 3.0);
        }
    }
    out
}

/// A random teacher whose exogenous weights are scaled up so that the hidden
/// layer works in its nonlinear range.
pub fn teacher_network(config: NarxConfig, seed: u64) -> NarxNetwork {
    let net = NarxNetwork::init(config, seed).expect("valid teacher config");
    let input = net.config().layout().input;
    let mut w = net.weights().to_vec();
    for v in &mut w[input] {
        *v *= 4.0;
    }
    net.with_weights(w).unwrap()
}

/// Runs the teacher as a generator: `y(t) = teacher(taps) + ε(t)` with
/// `ε ~ N(0, noise_std²)`. Rows before the first full tap window are zero.
pub fn teacher_series(teacher: &NarxNetwork, inputs: &[Vec<f64>], noise_std: f64, seed: u64) -> Vec<f64> {
    let cfg = teacher.config();
    let n = inputs[0].len();
    let first = cfg.max_delay();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, noise_std.max(0.0)).unwrap();
    let mut y = vec![0.0; n];
    let mut regressor = Vec::with_capacity(cfg.regressor_width());
    for t in first..n {
        regressor.clear();
        for &lag in cfg.input_delays.lags() {
            regressor.extend(inputs.iter().map(|c| c[t - lag]));
        }
        regressor.extend(cfg.feedback_delays.lags().iter().map(|&lag| y[t - lag]));
        let e = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        y[t] = teacher.predict(&regressor) + e;
    }
    y
}

fn std_dev(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Affinely maps teacher-scale series onto price-like OHLCV columns.
pub fn to_frame(inputs: &[Vec<f64>], target: &[f64]) -> TimeSeriesFrame {
    let n = target.len();
    let price = |x: f64| 20.0 + 4.5 * x;
    let close: Vec<f64> = target.iter().map(|y| 20.0 + 3.0 * y).collect();
    TimeSeriesFrame::new(
        (0..n as i64).map(|t| FIRST_DAY + t).collect(),
        inputs[0].iter().copied().map(price).collect(),
        inputs[1].iter().copied().map(price).collect(),
        inputs[2].iter().copied().map(price).collect(),
        inputs[3].iter().map(|x| 6.0e7 + 4.5e7 * x).collect(),
        close.clone(),
        Some(close.iter().map(|c| 0.89 * c).collect()),
    )
    .expect("synthetic frame satisfies OHLCV invariants")
}

/// The default teacher: 5 hidden units, input delays 0:1, feedback delay 1,
/// over four exogenous channels.
pub fn default_teacher_config() -> NarxConfig {
    NarxConfig::new(LagSet::range(0, 1).unwrap(), LagSet::range(1, 1).unwrap(), 5, 4).unwrap()
}

/// An `n`-row OHLCV frame whose close follows the default teacher with
/// Gaussian equation noise of `noise_fraction` times the clean signal's std.
pub fn ohlcv(n: usize, seed: u64, noise_fraction: f64) -> SyntheticSeries {
    generate(default_teacher_config(), n, seed, noise_fraction)
}

pub fn generate(config: NarxConfig, n: usize, seed: u64, noise_fraction: f64) -> SyntheticSeries {
    let teacher = teacher_network(config, seed);
    let mut inputs = exogenous_inputs(n + BURN_IN, seed.wrapping_add(1));
    let clean = teacher_series(&teacher, &inputs, 0.0, seed);
    let noise_std = noise_fraction * std_dev(&clean[BURN_IN..]);
    let mut target = teacher_series(&teacher, &inputs, noise_std, seed);
    target.drain(..BURN_IN);
    for c in &mut inputs {
        c.drain(..BURN_IN);
    }
    SyntheticSeries {
        frame: to_frame(&inputs, &target),
        teacher,
        inputs,
        target,
        noise_std,
    }
}
