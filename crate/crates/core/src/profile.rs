//! Parameter profiles: a `key = value` text file with one `[section]` per
//! model block. Missing keys fall back to the calibrated defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainParams, NonlinearModelSpec, ReferenceSpec, SweepSpec};
use crate::distortion::{Stimulus, WaveformSpec};
use crate::error::{Error, Result};
use crate::noise::{BandSpec, NoiseParams};
use crate::variation::VariationSpec;

const CALIBRATED: &str = include_str!("../data/calibrated.toml");

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Profile {
    pub chain: ChainParams,
    pub models: NonlinearModelSpec,
    pub reference: ReferenceSpec,
    pub noise: NoiseParams,
    pub band: BandSpec,
    pub sweep: SweepSpec,
    pub stimulus: Stimulus,
    pub waveform: WaveformSpec,
    pub variation: VariationSpec,
}

impl Profile {
    /// The shipped calibrated profile.
    pub fn calibrated() -> Self {
        Self::parse(CALIBRATED).expect("shipped profile parses")
    }

    pub fn calibrated_text() -> &'static str {
        CALIBRATED
    }

    pub fn parse(text: &str) -> Result<Self> {
        let profile: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let line = text[..span.start].matches('\n').count() + 1;
                    Error::Config(format!("line {line}: {msg}"))
                }
                None => Error::Config(msg),
            }
        })?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.noise.validate()?;
        self.band.validate()?;
        self.variation.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profile_matches_defaults() {
        assert_eq!(Profile::calibrated(), Profile::default());
    }

    #[test]
    fn partial_profile_uses_defaults() {
        let p = Profile::parse("[chain]\nr_z = 10000.0\n").unwrap();
        assert_eq!(p.chain.r_z, 1e4);
        assert_eq!(p.chain.gm2, ChainParams::default().gm2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let e = Profile::parse("[chain]\nbogus = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(Profile::parse("[chain]\nalpha_c = 1.5\n").is_err());
        assert!(Profile::parse("[chain]\nr_z = \"x\"\n").is_err());
    }
}
