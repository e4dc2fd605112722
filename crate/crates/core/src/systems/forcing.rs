use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Open-loop force applied to one control channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelForcing {
    Zero,
    /// `amplitude · sin(angular_frequency · t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl ChannelForcing {
    pub fn sinusoid(amplitude: f64, angular_frequency: f64, phase: f64) -> Self {
        ChannelForcing::Sinusoid {
            amplitude,
            angular_frequency,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ChannelForcing::Zero => 0.0,
            ChannelForcing::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
        }
    }
}

/// One [`ChannelForcing`] per control channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ForcingSpec(pub Vec<ChannelForcing>);

impl ForcingSpec {
    pub fn zero(channels: usize) -> Self {
        ForcingSpec(vec![ChannelForcing::Zero; channels])
    }

    pub fn channels(&self) -> usize {
        self.0.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, ch) in self.0.iter().enumerate() {
            if let ChannelForcing::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } = *ch
            {
                if !amplitude.is_finite()
                    || !phase.is_finite()
                    || angular_frequency.is_nan()
                    || angular_frequency < 0.0
                {
                    return Err(Error::InvalidArgument(format!(
                        "channel {i}: amplitude and phase must be finite and angular frequency non-negative"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Concatenates per-subsystem specs into a composite control vector spec.
    pub fn concat<'a>(specs: impl IntoIterator<Item = &'a ForcingSpec>) -> ForcingSpec {
        ForcingSpec(
            specs
                .into_iter()
                .flat_map(|s| s.0.iter().copied())
                .collect(),
        )
    }
}

pub fn forcing(spec: &ForcingSpec, t: f64) -> Vec<f64> {
    spec.0.iter().map(|ch| ch.eval(t)).collect()
}
