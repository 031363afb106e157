//! On-disk model format: one JSON document with the architecture, the
//! channel wiring, the fitted normalization and the flat weight vector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Channel, NormalizationSpec, TimeSeriesFrame};
use crate::error::{Error, Result};
use crate::network::{NarxConfig, NarxNetwork};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub config: NarxConfig,
    pub exo_channels: Vec<Channel>,
    pub target_channel: Channel,
    /// SHA-256 of the architecture and channel wiring.
    pub config_digest: String,
    pub normalization: NormalizationSpec,
    pub weights: Vec<f64>,
}

fn digest(config: &NarxConfig, exo: &[Channel], target: Channel) -> Result<String> {
    let canonical = serde_json::to_vec(&(config, exo, target))?;
    Ok(Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect())
}

impl SavedModel {
    pub fn new(
        net: &NarxNetwork,
        exo_channels: Vec<Channel>,
        target_channel: Channel,
        normalization: NormalizationSpec,
    ) -> Result<Self> {
        let model = SavedModel {
            format_version: FORMAT_VERSION,
            config: net.config().clone(),
            config_digest: digest(net.config(), &exo_channels, target_channel)?,
            exo_channels,
            target_channel,
            normalization,
            weights: net.weights().to_vec(),
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::ConfigMismatch(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        if self.exo_channels.len() != self.config.n_exo {
            return Err(Error::ConfigMismatch(format!(
                "{} exogenous channels listed for a network expecting {}",
                self.exo_channels.len(),
                self.config.n_exo
            )));
        }
        if self.config_digest != digest(&self.config, &self.exo_channels, self.target_channel)? {
            return Err(Error::ConfigMismatch("configuration digest does not match".into()));
        }
        for c in self.exo_channels.iter().chain([&self.target_channel]) {
            self.normalization.range(*c)?;
        }
        NarxNetwork::from_weights(self.config.clone(), self.weights.clone())?;
        Ok(())
    }

    pub fn network(&self) -> Result<NarxNetwork> {
        NarxNetwork::from_weights(self.config.clone(), self.weights.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SavedModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    /// Verifies that `frame` carries every channel the model reads.
    pub fn check_frame(&self, frame: &TimeSeriesFrame) -> Result<()> {
        for c in self.exo_channels.iter().chain([&self.target_channel]) {
            if !frame.has_channel(*c) {
                return Err(Error::ConfigMismatch(format!("data has no {c} column")));
            }
        }
        Ok(())
    }

    /// Verifies a requested exogenous channel list against the model's.
    pub fn check_channels(&self, exo_channels: &[Channel]) -> Result<()> {
        if exo_channels != self.exo_channels.as_slice() {
            return Err(Error::ConfigMismatch(format!(
                "model was trained on {} exogenous channels {:?}, got {} {:?}",
                self.exo_channels.len(),
                self.exo_channels,
                exo_channels.len(),
                exo_channels
            )));
        }
        Ok(())
    }
}
