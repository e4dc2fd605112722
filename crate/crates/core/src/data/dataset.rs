use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_json, write_atomic, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::systems::ForcingSpec;

/// Time-stamped states and controls. `controls[i]` is held from `times[i]`
/// until `times[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(rename = "t")]
    pub times: Vec<f64>,
    #[serde(rename = "x")]
    pub states: Vec<Vec<f64>>,
    #[serde(rename = "u")]
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>, controls: Vec<Vec<f64>>) -> Result<Self> {
        let t = Trajectory {
            times,
            states,
            controls,
        };
        t.validate().map_err(Error::Validation)?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.states.first().map(Vec::len)
    }

    pub fn control_dim(&self) -> Option<usize> {
        self.controls.first().map(Vec::len)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.states.len() != self.times.len() {
            return Err(format!(
                "field 'x' has {} entries but 't' has {}",
                self.states.len(),
                self.times.len()
            ));
        }
        if self.controls.len() != self.times.len() {
            return Err(format!(
                "field 'u' has {} entries but 't' has {}",
                self.controls.len(),
                self.times.len()
            ));
        }
        if let Some(i) = self.times.iter().position(|t| !t.is_finite()) {
            return Err(format!("field 't' is not finite at index {i}"));
        }
        if let Some(i) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(format!(
                "field 't' is not strictly increasing at index {}",
                i + 1
            ));
        }
        for (field, rows) in [("x", &self.states), ("u", &self.controls)] {
            let dim = rows.first().map_or(0, Vec::len);
            for (i, row) in rows.iter().enumerate() {
                if row.len() != dim {
                    return Err(format!(
                        "field '{field}' has inconsistent length at index {i}"
                    ));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(format!("field '{field}' is not finite at index {i}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub dt: f64,
    pub system: String,
    pub seed: u64,
    pub forcing: ForcingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub metadata: DatasetMetadata,
    pub trajectories: Vec<Trajectory>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format_version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

impl Dataset {
    /// Checks every trajectory and that dimensions agree across trajectories.
    pub fn validate(&self) -> Result<()> {
        let mut dims = None;
        for (k, traj) in self.trajectories.iter().enumerate() {
            traj.validate()
                .map_err(|msg| Error::Validation(format!("trajectory {k}: {msg}")))?;
            if traj.is_empty() {
                continue;
            }
            let d = (traj.state_dim(), traj.control_dim());
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Validation(format!(
                        "trajectory {k}: dimensions {d:?} differ from earlier trajectories {prev:?}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn state_dim(&self) -> Option<usize> {
        self.trajectories.iter().find_map(Trajectory::state_dim)
    }

    pub fn control_dim(&self) -> Option<usize> {
        self.trajectories.iter().find_map(Trajectory::control_dim)
    }

    pub fn transition_count(&self) -> usize {
        self.trajectories
            .iter()
            .map(|t| t.len().saturating_sub(1))
            .sum()
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = DatasetFile {
        format_version: FORMAT_VERSION,
        dataset: dataset.clone(),
    };
    write_atomic(path.as_ref(), &serde_json::to_vec(&file)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file: DatasetFile = read_json(path.as_ref())?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    file.dataset.validate()?;
    Ok(file.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DatasetMetadata {
        DatasetMetadata {
            dt: 0.1,
            system: "test".into(),
            seed: 3,
            forcing: ForcingSpec::zero(1),
        }
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(
            vec![0.0, 0.1],
            vec![vec![1.0], vec![2.0]],
            vec![vec![0.0], vec![0.0]]
        )
        .is_ok());
        assert!(
            Trajectory::new(vec![0.0, 0.1], vec![vec![1.0]], vec![vec![0.0], vec![0.0]]).is_err()
        );
        let err = Trajectory::new(vec![0.0, 0.2, 0.1], vec![vec![1.0]; 3], vec![vec![0.0]; 3])
            .unwrap_err();
        assert!(err.to_string().contains("index 2"), "{err}");
    }

    #[test]
    fn decreasing_times_in_file_rejected_with_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let text = r#"{"format_version":1,"metadata":{"dt":0.1,"system":"s","seed":0,"forcing":[{"kind":"zero"}]},
            "trajectories":[{"t":[0,0.1],"x":[[0],[1]],"u":[[0],[0]]},{"t":[0,0.2,0.1],"x":[[0],[1],[2]],"u":[[0],[0],[0]]}]}"#;
        std::fs::write(&path, text).unwrap();
        let err = load_dataset(&path).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("trajectory 1") && msg.contains("'t'") && msg.contains("index 2"),
            "{msg}"
        );
    }

    #[test]
    fn empty_dataset_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        let ds = Dataset {
            metadata: meta(),
            trajectories: vec![],
        };
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.transition_count(), 0);
    }

    #[test]
    fn version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.json");
        std::fs::write(
            &path,
            r#"{"format_version":2,"metadata":{"dt":0.1,"system":"s","seed":0,"forcing":[]},"trajectories":[]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Version { found: 2, .. })
        ));
    }
}
