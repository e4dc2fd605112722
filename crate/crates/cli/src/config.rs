//! Run configuration, read from TOML (or JSON when the file ends in `.json`).

use std::fmt;
use std::path::{Path, PathBuf};

use phnn_core::composition::Interval;
use phnn_core::systems::{ChannelForcing, ForcingSpec, SmdParams};
use phnn_core::{SamplingDomain, SubsystemLayout};
use serde::Deserialize;

/// A configuration file that cannot be read, parsed or validated.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub subsystems: Vec<SubsystemConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub evaluate: EvaluateConfig,
    #[serde(default)]
    pub bound: BoundConfig,
    #[serde(default)]
    pub passivity: PassivityConfig,
}

/// One spring-mass-damper. `repeat` places several copies in the chain; they
/// share a single trained submodel.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub mass: f64,
    pub spring_constant: f64,
    pub damping: f64,
    #[serde(default = "zero_forcing")]
    pub train_forcing: ChannelForcing,
    /// Defaults to `train_forcing`.
    #[serde(default)]
    pub test_forcing: Option<ChannelForcing>,
    #[serde(default = "one")]
    pub repeat: usize,
}

impl SubsystemConfig {
    pub fn params(&self) -> SmdParams {
        SmdParams {
            mass: self.mass,
            spring_constant: self.spring_constant,
            damping: self.damping,
        }
    }

    pub fn test_forcing(&self) -> ChannelForcing {
        self.test_forcing.unwrap_or(self.train_forcing)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub steps: usize,
    pub initial_low: f64,
    pub initial_high: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_trajectories: 100,
            test_trajectories: 20,
            steps: 500,
            initial_low: -1.0,
            initial_high: 1.0,
        }
    }
}

/// Hidden widths per learned term. An empty list selects the constant
/// parametrization of `R` or `G`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hamiltonian_hidden: Vec<usize>,
    pub dissipation_hidden: Vec<usize>,
    pub input_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hamiltonian_hidden: vec![32, 32],
            dissipation_hidden: vec![32, 32],
            input_hidden: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: 5000,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    Lsq,
    Nn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSource {
    True,
    Learned,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub method: CouplingMethod,
    /// Number of composite one-step transitions used to fit the coupling.
    pub transitions: usize,
    /// Which coupling evaluate, bound-report and passivity-check use.
    pub source: CouplingSource,
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig {
            method: CouplingMethod::Lsq,
            transitions: 4,
            source: CouplingSource::Learned,
            hidden: vec![32, 32],
            steps: 5000,
            batch_size: None,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub trajectories: usize,
    pub steps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            trajectories: 1,
            steps: 500,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Composite test trajectories.
    pub trajectories: usize,
    pub rollout_steps: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            trajectories: 5,
            rollout_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub samples: usize,
    pub state_low: f64,
    pub state_high: f64,
    pub control_low: f64,
    pub control_high: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            samples: 1000,
            state_low: -1.0,
            state_high: 1.0,
            control_low: -1.0,
            control_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassivityConfig {
    pub trajectories: usize,
    pub steps: usize,
    pub tolerance: f64,
}

impl Default for PassivityConfig {
    fn default() -> Self {
        PassivityConfig {
            trajectories: 10,
            steps: 1000,
            tolerance: 1e-10,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_dt() -> f64 {
    0.01
}

fn zero_forcing() -> ChannelForcing {
    ChannelForcing::Zero
}

fn one() -> usize {
    1
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.subsystems.is_empty() {
            return Err(bad("at least one subsystem is required"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(bad(format!("dt must be positive, got {}", self.dt)));
        }
        for (i, s) in self.subsystems.iter().enumerate() {
            s.params()
                .validate()
                .map_err(|e| bad(format!("subsystems[{i}]: {e}")))?;
            for f in [s.train_forcing, s.test_forcing()] {
                ForcingSpec(vec![f])
                    .validate()
                    .map_err(|e| bad(format!("subsystems[{i}]: {e}")))?;
            }
            if s.repeat == 0 {
                return Err(bad(format!("subsystems[{i}]: repeat must be at least 1")));
            }
        }
        let d = &self.data;
        if d.train_trajectories == 0 || d.test_trajectories == 0 || d.steps == 0 {
            return Err(bad("data: trajectory counts and steps must be positive"));
        }
        if !(d.initial_low.is_finite()
            && d.initial_high.is_finite()
            && d.initial_low <= d.initial_high)
        {
            return Err(bad("data: need finite initial_low <= initial_high"));
        }
        if self.model.hamiltonian_hidden.contains(&0)
            || self.model.dissipation_hidden.contains(&0)
            || self.model.input_hidden.contains(&0)
        {
            return Err(bad("model: hidden widths must be positive"));
        }
        let t = &self.train;
        if t.batch_size == 0 || !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(bad("train: batch_size and learning_rate must be positive"));
        }
        let c = &self.coupling;
        if c.transitions == 0 || c.hidden.contains(&0) || c.batch_size == Some(0) {
            return Err(bad(
                "coupling: transitions, hidden widths and batch_size must be positive",
            ));
        }
        if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
            return Err(bad("coupling: learning_rate must be positive"));
        }
        if c.batch_size.is_some_and(|b| b > c.transitions) {
            return Err(bad(
                "coupling: batch_size exceeds the number of transitions",
            ));
        }
        if self.simulate.trajectories == 0 || self.simulate.steps == 0 {
            return Err(bad("simulate: trajectories and steps must be positive"));
        }
        if self.evaluate.trajectories == 0 || self.evaluate.rollout_steps == 0 {
            return Err(bad(
                "evaluate: trajectories and rollout_steps must be positive",
            ));
        }
        let b = &self.bound;
        let ordered = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if b.samples == 0
            || !ordered(b.state_low, b.state_high)
            || !ordered(b.control_low, b.control_high)
        {
            return Err(bad("bound: need samples >= 1 and ordered finite boxes"));
        }
        let p = &self.passivity;
        if p.trajectories == 0 || p.steps == 0 || p.tolerance.is_nan() || p.tolerance < 0.0 {
            return Err(bad(
                "passivity: trajectories and steps must be positive, tolerance non-negative",
            ));
        }
        Ok(())
    }

    /// Config index of every subsystem in the composite, repeats expanded.
    pub fn chain(&self) -> Vec<usize> {
        self.subsystems
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(i, s.repeat))
            .collect()
    }

    pub fn layout(&self) -> SubsystemLayout {
        SubsystemLayout::uniform(self.chain().len(), 2, 1).expect("at least one subsystem")
    }

    pub fn chain_params(&self) -> Vec<SmdParams> {
        self.chain()
            .into_iter()
            .map(|i| self.subsystems[i].params())
            .collect()
    }

    pub fn composite_forcing(&self, test: bool) -> ForcingSpec {
        ForcingSpec(
            self.chain()
                .into_iter()
                .map(|i| {
                    let s = &self.subsystems[i];
                    if test {
                        s.test_forcing()
                    } else {
                        s.train_forcing
                    }
                })
                .collect(),
        )
    }

    pub fn sampling_domain(&self) -> SamplingDomain {
        let b = &self.bound;
        SamplingDomain::uniform(
            &self.layout(),
            Interval::new(b.state_low, b.state_high),
            Interval::new(b.control_low, b.control_high),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[subsystems]]
        mass = 1.0
        spring_constant = 1.2
        damping = 1.7
    "#;

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.dt, 0.01);
        assert_eq!(cfg.data.steps, 500);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.coupling.transitions, 4);
        assert_eq!(cfg.subsystems[0].test_forcing(), ChannelForcing::Zero);
    }

    #[test]
    fn repeats_expand_the_chain() {
        let text = r#"
            [[subsystems]]
            mass = 1.0
            spring_constant = 1.2
            damping = 1.7
            repeat = 3

            [[subsystems]]
            mass = 1.0
            spring_constant = 1.5
            damping = 1.7
            train_forcing = { kind = "sinusoid", amplitude = 0.5, angular_frequency = 1.0 }
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.chain(), vec![0, 0, 0, 1]);
        assert_eq!(cfg.layout().state_dim(), 8);
        assert_eq!(cfg.composite_forcing(false).channels(), 4);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        cfg.subsystems[0].mass = -1.0;
        assert!(cfg.validate().is_err());
        let cfg: RunConfig = toml::from_str(&format!(
            "{MINIMAL}\n[coupling]\ntransitions = 2\nbatch_size = 3\n"
        ))
        .unwrap();
        assert!(cfg.validate().is_err());
        assert!(toml::from_str::<RunConfig>(&format!("{MINIMAL}\nunknown = 1\n")).is_err());
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [
            include_str!("../../../configs/two_systems.toml"),
            include_str!("../../../configs/chain10.toml"),
        ] {
            let cfg: RunConfig = toml::from_str(text).unwrap();
            cfg.validate().unwrap();
        }
        let chain: RunConfig =
            toml::from_str(include_str!("../../../configs/chain10.toml")).unwrap();
        assert_eq!(chain.layout().state_dim(), 20);
    }
}
