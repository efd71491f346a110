//! Signal-to-spike conversion.

pub mod adm;
pub mod filter;
pub mod pfm;
pub mod poisson;

use serde::{Deserialize, Serialize};

pub use adm::{adm_encode, adm_grid_search, adm_reconstruct, AdmParams};
pub use pfm::{pfm_calibrate, pfm_encode, PfmParams};
pub use poisson::{poisson_train, poisson_trains};

use crate::error::Result;
use crate::signal::{AnalogRecording, SpikeTrain};

/// Encoder choice for a whole recording; both produce two channels per electrode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Encoder {
    Adm(AdmParams),
    Pfm(PfmParams),
}

impl Encoder {
    pub fn name(&self) -> &'static str {
        match self {
            Encoder::Adm(_) => "adm",
            Encoder::Pfm(_) => "pfm",
        }
    }

    /// Encodes every channel and stacks the outputs (electrode `e` lands on
    /// channels `2e` and `2e + 1` for the default two-band PFM and for ADM).
    /// PFM is calibrated on the recording first when it has no scale range.
    pub fn encode(&self, recording: &AnalogRecording) -> Result<SpikeTrain> {
        let per_channel: Vec<SpikeTrain> = match self {
            Encoder::Adm(p) => (0..recording.n_channels())
                .map(|c| adm_encode(&recording.channel(c)?, p))
                .collect::<Result<_>>()?,
            Encoder::Pfm(p) => {
                let calibrated = match p.scale_range {
                    Some(_) => p.clone(),
                    None => pfm_calibrate(recording, p)?,
                };
                (0..recording.n_channels())
                    .map(|c| pfm_encode(&recording.channel(c)?, &calibrated))
                    .collect::<Result<_>>()?
            }
        };
        SpikeTrain::stack(&per_channel)
    }
}
