use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composition::{BoundReport, CouplingKind, CouplingModel, SubsystemLayout};
use crate::data::{read_json, write_json, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{MlpSpec, ParameterVector, Slot};
use crate::phnn::{
    DissipationSpec, DissipationTerm, HamiltonianTerm, InputSpec, InputTerm, PhnnModel,
};

fn check_version(found: u32) -> Result<()> {
    if found == FORMAT_VERSION {
        Ok(())
    } else {
        Err(Error::Version {
            found,
            expected: FORMAT_VERSION,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    state_dim: usize,
    control_dim: usize,
    /// Row-major `J`.
    interconnection: Vec<f64>,
    hamiltonian_spec: MlpSpec,
    dissipation_spec: DissipationSpec,
    input_spec: InputSpec,
    parameters: Vec<f64>,
    layout: Vec<Slot>,
}

/// Saves a learned submodel. Models with oracle terms cannot be saved.
pub fn save_model(model: &PhnnModel, path: impl AsRef<Path>) -> Result<()> {
    let unsupported =
        |what: &str| Error::Unsupported(format!("cannot save a model with an oracle {what} term"));
    let hamiltonian = match model.hamiltonian_term() {
        HamiltonianTerm::Mlp(net) => net.clone(),
        HamiltonianTerm::Oracle(_) => return Err(unsupported("Hamiltonian")),
    };
    let dissipation = match model.dissipation_term() {
        DissipationTerm::Learned(spec) => spec.clone(),
        DissipationTerm::Oracle(_) => return Err(unsupported("dissipation")),
    };
    let input = match model.input_term() {
        InputTerm::Learned(spec) => spec.clone(),
        InputTerm::Oracle(_) => return Err(unsupported("input")),
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        state_dim: model.interconnection().rows(),
        control_dim: crate::phnn::PortHamiltonian::control_dim(model),
        interconnection: model.interconnection().as_slice().to_vec(),
        hamiltonian_spec: hamiltonian,
        dissipation_spec: dissipation,
        input_spec: input,
        parameters: model.params().values().to_vec(),
        layout: model.params().layout().to_vec(),
    };
    write_json(path.as_ref(), &file)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PhnnModel> {
    let file: ModelFile = read_json(path.as_ref())?;
    check_version(file.format_version)?;
    let n = file.state_dim;
    let j = Matrix::from_row_major(n, n, file.interconnection)?;
    let params = ParameterVector::from_parts(file.parameters, file.layout)?;
    PhnnModel::from_parts(
        n,
        file.control_dim,
        j,
        HamiltonianTerm::Mlp(file.hamiltonian_spec),
        DissipationTerm::Learned(file.dissipation_spec),
        InputTerm::Learned(file.input_spec),
        params,
    )
}

/// Loads a model and checks its state and control dimensions.
pub fn load_model_expecting(
    path: impl AsRef<Path>,
    state_dim: usize,
    control_dim: usize,
) -> Result<PhnnModel> {
    let path = path.as_ref();
    let model = load_model(path)?;
    let n = model.interconnection().rows();
    let m = crate::phnn::PortHamiltonian::control_dim(&model);
    if (n, m) != (state_dim, control_dim) {
        return Err(Error::LayoutMismatch(format!(
            "{} holds a model with state/control dimensions ({n}, {m}), expected ({state_dim}, {control_dim})",
            path.display()
        )));
    }
    Ok(model)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
enum CouplingBody {
    Constant { free_entries: Vec<f64> },
    StateDependent { net: MlpSpec, parameters: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct CouplingFile {
    format_version: u32,
    layout: SubsystemLayout,
    #[serde(flatten)]
    body: CouplingBody,
}

pub fn save_coupling(coupling: &CouplingModel, path: impl AsRef<Path>) -> Result<()> {
    let values = coupling.params().values().to_vec();
    let body = match coupling.kind() {
        CouplingKind::Constant => CouplingBody::Constant {
            free_entries: values,
        },
        CouplingKind::StateDependent { net } => CouplingBody::StateDependent {
            net: net.clone(),
            parameters: values,
        },
    };
    write_json(
        path.as_ref(),
        &CouplingFile {
            format_version: FORMAT_VERSION,
            layout: coupling.layout().clone(),
            body,
        },
    )
}

pub fn load_coupling(path: impl AsRef<Path>) -> Result<CouplingModel> {
    let file: CouplingFile = read_json(path.as_ref())?;
    check_version(file.format_version)?;
    let layout = SubsystemLayout::new(file.layout.dims().to_vec())?;
    match file.body {
        CouplingBody::Constant { free_entries } => CouplingModel::constant(layout, free_entries),
        CouplingBody::StateDependent { net, parameters } => {
            CouplingModel::state_dependent_with(layout, net, parameters)
        }
    }
}

/// Points at the submodel and coupling checkpoints making up a composite.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeManifest {
    pub format_version: u32,
    pub submodels: Vec<PathBuf>,
    pub coupling: PathBuf,
}

pub fn save_composite(manifest: &CompositeManifest, path: impl AsRef<Path>) -> Result<()> {
    write_json(path.as_ref(), manifest)
}

/// Loads every referenced checkpoint. Returns the submodels and coupling.
pub fn load_composite(path: impl AsRef<Path>) -> Result<(Vec<PhnnModel>, CouplingModel)> {
    let path = path.as_ref();
    let manifest: CompositeManifest = read_json(path)?;
    check_version(manifest.format_version)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let coupling = load_coupling(base.join(&manifest.coupling))?;
    let layout = coupling.layout().clone();
    if manifest.submodels.len() != layout.len() {
        return Err(Error::LayoutMismatch(format!(
            "manifest lists {} submodels but the coupling layout has {}",
            manifest.submodels.len(),
            layout.len()
        )));
    }
    let submodels = manifest
        .submodels
        .iter()
        .zip(layout.dims())
        .map(|(p, &(n, m))| load_model_expecting(base.join(p), n, m))
        .collect::<Result<Vec<_>>>()?;
    Ok((submodels, coupling))
}

#[derive(Serialize, Deserialize)]
struct BoundReportFile {
    format_version: u32,
    #[serde(flatten)]
    report: BoundReport,
}

pub fn save_bound_report(report: &BoundReport, path: impl AsRef<Path>) -> Result<()> {
    write_json(
        path.as_ref(),
        &BoundReportFile {
            format_version: FORMAT_VERSION,
            report: report.clone(),
        },
    )
}

pub fn load_bound_report(path: impl AsRef<Path>) -> Result<BoundReport> {
    let file: BoundReportFile = read_json(path.as_ref())?;
    check_version(file.format_version)?;
    Ok(file.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::chain_coupling;
    use crate::phnn::PortHamiltonian;
    use crate::systems::{canonical_interconnection, smd_oracle_model, SmdParams};

    fn learned(seed: u64) -> PhnnModel {
        PhnnModel::builder(2, 1, canonical_interconnection())
            .build(seed)
            .unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = learned(5);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.params(), m.params());
        let x = [0.3, -0.2];
        assert_eq!(back.rhs(&x, &[0.1]).unwrap(), m.rhs(&x, &[0.1]).unwrap());
    }

    #[test]
    fn dimension_check_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&learned(1), &path).unwrap();
        assert!(matches!(
            load_model_expecting(&path, 4, 1),
            Err(Error::LayoutMismatch(_))
        ));
        assert!(load_model_expecting(&path, 2, 1).is_ok());
    }

    #[test]
    fn oracle_models_are_not_saved() {
        let dir = tempfile::tempdir().unwrap();
        let m = smd_oracle_model(&SmdParams::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            save_model(&m, dir.path().join("o.json")),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&learned(1), &path).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 7");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(Error::Version { found: 7, .. })
        ));
    }

    #[test]
    fn coupling_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        let c = chain_coupling(&layout).unwrap();
        save_coupling(&c, dir.path().join("c.json")).unwrap();
        assert_eq!(load_coupling(dir.path().join("c.json")).unwrap(), c);
        let s = CouplingModel::state_dependent(layout, vec![4], 2).unwrap();
        save_coupling(&s, dir.path().join("s.json")).unwrap();
        assert_eq!(load_coupling(dir.path().join("s.json")).unwrap(), s);
        let text = std::fs::read_to_string(dir.path().join("c.json")).unwrap();
        assert!(text.contains("\"variant\": \"constant\""), "{text}");
    }

    #[test]
    fn composite_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
        save_model(&learned(1), dir.path().join("a.json")).unwrap();
        save_model(&learned(2), dir.path().join("b.json")).unwrap();
        save_coupling(&chain_coupling(&layout).unwrap(), dir.path().join("c.json")).unwrap();
        let manifest = CompositeManifest {
            format_version: FORMAT_VERSION,
            submodels: vec!["a.json".into(), "b.json".into()],
            coupling: "c.json".into(),
        };
        save_composite(&manifest, dir.path().join("composite.json")).unwrap();
        let (subs, c) = load_composite(dir.path().join("composite.json")).unwrap();
        assert_eq!(subs.len(), 2);
        assert_eq!(subs[1].params(), learned(2).params());
        assert_eq!(c.layout(), &layout);
    }
}
