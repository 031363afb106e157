use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let r = [self.train, self.validation, self.test];
        if r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidConfig(format!("split ratios must be positive: {r:?}")));
        }
        if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must sum to 1: {r:?}")));
        }
        Ok(())
    }
}

/// Contiguous train / validation / test blocks, in temporal order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub layout: String,
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn len(&self) -> usize {
        self.test.end
    }

    pub fn is_empty(&self) -> bool {
        self.test.end == 0
    }
}

/// Partitions `0..n_samples` into three contiguous blocks sized by
/// largest-remainder rounding of `n_samples * ratio` (ties go to the earlier
/// block). A block that rounds to zero borrows one sample from the largest block.
pub fn split_indices(n_samples: usize, ratios: SplitRatios) -> Result<Splits> {
    ratios.validate()?;
    if n_samples < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            available: n_samples,
        });
    }
    let quotas = [ratios.train, ratios.validation, ratios.test].map(|r| r * n_samples as f64);
    let mut sizes = quotas.map(|q| (q + 1e-9).floor() as usize);
    let mut order = [0usize, 1, 2];
    // stable sort keeps earlier blocks first among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - sizes[a] as f64;
        let rb = quotas[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap()
    });
    let mut left = n_samples - sizes.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if sizes[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    let a = sizes[0];
    let b = a + sizes[1];
    Ok(Splits {
        layout: "contiguous".into(),
        train: 0..a,
        validation: a..b,
        test: b..n_samples,
    })
}
