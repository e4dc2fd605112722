//! One function per pipeline stage. Stages communicate only through files
//! under the output directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use phnn_core::composition::{learn_coupling_nn, CouplingModel};
use phnn_core::data::{
    load_composite, load_dataset, load_model_expecting, save_bound_report, save_composite,
    save_coupling, save_dataset, save_history_csv, save_model, save_table_csv, save_trajectory_csv,
    write_atomic, CompositeManifest, Dataset, Trajectory, FORMAT_VERSION,
};
use phnn_core::nn::rng::{derive_seed, seeded_rng};
use phnn_core::phnn::{loss, predict, train};
use phnn_core::systems::{
    composite_smd_rhs, generate_dataset_with, simulate, smd_oracle_model, smd_rhs, DatasetSpec,
    ForcingSpec,
};
use phnn_core::{
    chain_coupling, compose, error_bound_report, learn_coupling_lsq, CompositeModel, PhnnModel,
    PortHamiltonian, SolverConfig, TrainConfig,
};
use rand::Rng;
use serde::Serialize;

use crate::config::{CouplingMethod, CouplingSource, RunConfig};

// Stage tags for child seeds.
const SEED_SIMULATE: u64 = 1;
const SEED_TRAIN_DATA: u64 = 2;
const SEED_TEST_DATA: u64 = 3;
const SEED_COMPOSITE_DATA: u64 = 4;
const SEED_INIT: u64 = 5;
const SEED_TRAIN: u64 = 6;
const SEED_COUPLING: u64 = 7;
const SEED_BOUND: u64 = 8;
const SEED_PASSIVITY: u64 = 9;

pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Run {
    fn seed(&self, stage: u64, index: u64) -> u64 {
        derive_seed(derive_seed(self.cfg.seed, stage), index)
    }

    fn solver(&self) -> Result<SolverConfig> {
        Ok(SolverConfig::new(self.cfg.dt)?)
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, part| p.join(part))
    }

    fn model_path(&self, i: usize) -> PathBuf {
        self.path(&["models", &format!("subsystem_{i}.json")])
    }

    fn manifest_path(&self, source: CouplingSource) -> PathBuf {
        let name = match source {
            CouplingSource::True => "composite_true.json",
            CouplingSource::Learned => "composite_learned.json",
        };
        self.path(&["models", name])
    }

    fn spec(
        &self,
        trajectories: usize,
        steps: usize,
        dim: usize,
        forcing: ForcingSpec,
        seed: u64,
    ) -> DatasetSpec {
        DatasetSpec {
            trajectories,
            steps,
            dt: self.cfg.dt,
            initial_low: vec![self.cfg.data.initial_low; dim],
            initial_high: vec![self.cfg.data.initial_high; dim],
            forcing,
            seed,
        }
    }

    fn subsystem_data(&self, i: usize, spec: &DatasetSpec) -> Result<Dataset> {
        let p = self.cfg.subsystems[i].params();
        Ok(generate_dataset_with(
            |x: &[f64], u: &[f64]| smd_rhs(&p, x, u),
            spec,
            &format!("subsystem {i}"),
        )?)
    }

    fn composite_data(&self, spec: &DatasetSpec) -> Result<Dataset> {
        let params = self.cfg.chain_params();
        let coupling = chain_coupling(&self.cfg.layout())?;
        Ok(generate_dataset_with(
            |x: &[f64], u: &[f64]| composite_smd_rhs(&params, &coupling, x, u),
            spec,
            "composite",
        )?)
    }

    fn load_submodel(&self, i: usize) -> Result<PhnnModel> {
        let path = self.model_path(i);
        load_model_expecting(&path, 2, 1)
            .with_context(|| format!("loading {} (run `train` first)", path.display()))
    }

    fn load_composite(&self) -> Result<CompositeModel> {
        let path = self.manifest_path(self.cfg.coupling.source);
        let (subs, coupling) = load_composite(&path).with_context(|| {
            format!(
                "loading {} (run `compose` or `learn-coupling` first)",
                path.display()
            )
        })?;
        let layout = self.cfg.layout();
        Ok(compose(subs, coupling, layout)?)
    }

    fn load(&self, parts: &[&str]) -> Result<Dataset> {
        let path = self.path(parts);
        load_dataset(&path)
            .with_context(|| format!("loading {} (run `gen-data` first)", path.display()))
    }
}

fn write_report<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn simulate_cmd(run: &Run) -> Result<()> {
    let sim = &run.cfg.simulate;
    for (i, s) in run.cfg.subsystems.iter().enumerate() {
        let spec = run.spec(
            sim.trajectories,
            sim.steps,
            2,
            ForcingSpec(vec![s.train_forcing]),
            run.seed(SEED_SIMULATE, i as u64),
        );
        let ds = run.subsystem_data(i, &spec)?;
        export(run, &ds, &format!("subsystem_{i}"))?;
    }
    let layout = run.cfg.layout();
    let spec = run.spec(
        sim.trajectories,
        sim.steps,
        layout.state_dim(),
        run.cfg.composite_forcing(false),
        run.seed(SEED_SIMULATE, u64::MAX),
    );
    let ds = run.composite_data(&spec)?;
    export(run, &ds, "composite")?;
    println!(
        "wrote {} trajectories of {} samples per system to {}",
        sim.trajectories,
        sim.steps + 1,
        run.path(&["simulate"]).display()
    );
    Ok(())
}

fn export(run: &Run, ds: &Dataset, name: &str) -> Result<()> {
    save_dataset(ds, run.path(&["simulate", &format!("{name}.json")]))?;
    for (j, traj) in ds.trajectories.iter().enumerate() {
        save_trajectory_csv(
            traj,
            run.path(&["simulate", &format!("{name}_traj_{j}.csv")]),
        )?;
    }
    Ok(())
}

pub fn gen_data(run: &Run) -> Result<()> {
    let d = &run.cfg.data;
    for (i, s) in run.cfg.subsystems.iter().enumerate() {
        let train = run.spec(
            d.train_trajectories,
            d.steps,
            2,
            ForcingSpec(vec![s.train_forcing]),
            run.seed(SEED_TRAIN_DATA, i as u64),
        );
        let test = run.spec(
            d.test_trajectories,
            d.steps,
            2,
            ForcingSpec(vec![s.test_forcing()]),
            run.seed(SEED_TEST_DATA, i as u64),
        );
        save_dataset(
            &run.subsystem_data(i, &train)?,
            run.path(&["data", &format!("subsystem_{i}_train.json")]),
        )?;
        save_dataset(
            &run.subsystem_data(i, &test)?,
            run.path(&["data", &format!("subsystem_{i}_test.json")]),
        )?;
    }
    let n = run.cfg.layout().state_dim();
    let few = run.spec(
        run.cfg.coupling.transitions,
        1,
        n,
        run.cfg.composite_forcing(false),
        run.seed(SEED_COMPOSITE_DATA, 0),
    );
    let ev = &run.cfg.evaluate;
    let test = run.spec(
        ev.trajectories,
        ev.rollout_steps,
        n,
        run.cfg.composite_forcing(true),
        run.seed(SEED_COMPOSITE_DATA, 1),
    );
    save_dataset(
        &run.composite_data(&few)?,
        run.path(&["data", "composite_train.json"]),
    )?;
    save_dataset(
        &run.composite_data(&test)?,
        run.path(&["data", "composite_test.json"]),
    )?;
    println!(
        "wrote datasets for {} subsystems and the {}-dimensional composite to {}",
        run.cfg.subsystems.len(),
        n,
        run.path(&["data"]).display()
    );
    Ok(())
}

fn fresh_model(run: &Run, i: usize) -> Result<PhnnModel> {
    let m = &run.cfg.model;
    let mut b = PhnnModel::builder(2, 1, phnn_core::systems::canonical_interconnection())
        .hamiltonian_mlp(m.hamiltonian_hidden.clone());
    b = if m.dissipation_hidden.is_empty() {
        b.dissipation_constant()
    } else {
        b.dissipation_mlp(m.dissipation_hidden.clone())
    };
    b = if m.input_hidden.is_empty() {
        b.input_constant()
    } else {
        b.input_mlp(m.input_hidden.clone())
    };
    Ok(b.build(run.seed(SEED_INIT, i as u64))?)
}

pub fn train_cmd(run: &Run) -> Result<()> {
    let solver = run.solver()?;
    for i in 0..run.cfg.subsystems.len() {
        let data = run.load(&["data", &format!("subsystem_{i}_train.json")])?;
        let init = fresh_model(run, i)?;
        let tc = TrainConfig {
            steps: run.cfg.train.steps,
            batch_size: run.cfg.train.batch_size,
            learning_rate: run.cfg.train.learning_rate,
            seed: run.seed(SEED_TRAIN, i as u64),
        };
        let (model, history) =
            train(&init, &data, &tc, &solver).with_context(|| format!("training subsystem {i}"))?;
        save_model(&model, run.model_path(i))?;
        save_history_csv(
            &history,
            run.path(&["models", &format!("subsystem_{i}_history.csv")]),
        )?;
        match (history.first(), history.last()) {
            (Some(a), Some(b)) => println!(
                "subsystem {i}: minibatch loss {a:.3e} -> {b:.3e} over {} steps",
                history.len()
            ),
            _ => println!("subsystem {i}: no training steps"),
        }
    }
    Ok(())
}

fn manifest(run: &Run, coupling_file: &str) -> CompositeManifest {
    CompositeManifest {
        format_version: FORMAT_VERSION,
        submodels: run
            .cfg
            .chain()
            .into_iter()
            .map(|i| PathBuf::from(format!("subsystem_{i}.json")))
            .collect(),
        coupling: PathBuf::from(coupling_file),
    }
}

fn chain_submodels(run: &Run) -> Result<Vec<PhnnModel>> {
    let distinct = (0..run.cfg.subsystems.len())
        .map(|i| run.load_submodel(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(run
        .cfg
        .chain()
        .into_iter()
        .map(|i| distinct[i].clone())
        .collect())
}

pub fn compose_cmd(run: &Run) -> Result<()> {
    let layout = run.cfg.layout();
    let coupling = chain_coupling(&layout)?;
    let composite = compose(chain_submodels(run)?, coupling.clone(), layout)?;
    save_coupling(&coupling, run.path(&["models", "coupling_true.json"]))?;
    save_composite(
        &manifest(run, "coupling_true.json"),
        run.manifest_path(CouplingSource::True),
    )?;
    println!(
        "composed {} submodels into a {}-dimensional model with the chain coupling",
        composite.submodels().len(),
        composite.state_dim()
    );
    Ok(())
}

pub fn learn_coupling(run: &Run) -> Result<()> {
    let layout = run.cfg.layout();
    let subs = chain_submodels(run)?;
    let data = run.load(&["data", "composite_train.json"])?;
    let c = &run.cfg.coupling;
    let coupling: CouplingModel = match c.method {
        CouplingMethod::Lsq => {
            let fit = learn_coupling_lsq(&subs, &layout, &data)?;
            let d = &fit.diagnostics;
            println!(
                "least squares: {} equations, {} unknowns, residual {:.3e}, condition number {:.3e}",
                d.equations, d.unknowns, d.residual_norm, d.condition_number
            );
            fit.coupling
        }
        CouplingMethod::Nn => {
            let tc = TrainConfig {
                steps: c.steps,
                batch_size: c.batch_size.unwrap_or(c.transitions.min(32)),
                learning_rate: c.learning_rate,
                seed: run.seed(SEED_COUPLING, 0),
            };
            let (coupling, history) =
                learn_coupling_nn(&subs, &layout, &data, &c.hidden, &tc, &run.solver()?)?;
            save_history_csv(
                &history,
                run.path(&["models", "coupling_learned_history.csv"]),
            )?;
            if let Some(last) = history.last() {
                println!("coupling network: final minibatch loss {last:.3e}");
            }
            coupling
        }
    };
    save_coupling(&coupling, run.path(&["models", "coupling_learned.json"]))?;
    save_composite(
        &manifest(run, "coupling_learned.json"),
        run.manifest_path(CouplingSource::Learned),
    )?;
    if matches!(c.method, CouplingMethod::Lsq) {
        let entries: Vec<String> = coupling
            .params()
            .values()
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect();
        println!("free coupling entries: [{}]", entries.join(", "));
    }
    Ok(())
}

/// Step-by-step rollout from the first sample using the recorded controls.
fn rollout<M: PortHamiltonian>(
    model: &M,
    traj: &Trajectory,
    solver: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut x = traj.states[0].clone();
    let mut out = vec![x.clone()];
    for k in 0..traj.len() - 1 {
        x = predict(
            model,
            &x,
            &traj.controls[k],
            traj.times[k],
            traj.times[k + 1],
            solver,
        )?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Root-mean-square error per coordinate and over all coordinates.
fn rmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = truth[0].len();
    let mut sums = vec![0.0; n];
    for (p, t) in pred.iter().zip(truth) {
        for c in 0..n {
            sums[c] += (p[c] - t[c]).powi(2);
        }
    }
    let count = truth.len() as f64;
    let total = (sums.iter().sum::<f64>() / (count * n as f64)).sqrt();
    (
        sums.into_iter().map(|s| (s / count).sqrt()).collect(),
        total,
    )
}

#[derive(Serialize)]
struct ModelEvaluation {
    name: String,
    one_step_test_loss: f64,
    rollout_rmse: Vec<f64>,
    rollout_rmse_per_coordinate: Vec<Vec<f64>>,
}

fn evaluate_model<M: PortHamiltonian>(
    name: String,
    model: &M,
    data: &Dataset,
    solver: &SolverConfig,
) -> Result<ModelEvaluation> {
    let one_step = loss(model, data, solver)?;
    let mut totals = Vec::new();
    let mut coords = Vec::new();
    for traj in &data.trajectories {
        let (per, total) = rmse(&rollout(model, traj, solver)?, &traj.states);
        totals.push(total);
        coords.push(per);
    }
    println!("{name}: mean one-step test loss {one_step:.3e}");
    for (j, r) in totals.iter().enumerate() {
        println!("  trajectory {j}: rollout RMSE {r:.3e}");
    }
    Ok(ModelEvaluation {
        name,
        one_step_test_loss: one_step,
        rollout_rmse: totals,
        rollout_rmse_per_coordinate: coords,
    })
}

pub fn evaluate(run: &Run) -> Result<()> {
    let solver = run.solver()?;
    let mut results = Vec::new();
    for i in 0..run.cfg.subsystems.len() {
        let model = run.load_submodel(i)?;
        let data = run.load(&["data", &format!("subsystem_{i}_test.json")])?;
        results.push(evaluate_model(
            format!("subsystem {i}"),
            &model,
            &data,
            &solver,
        )?);
    }
    let composite = run.load_composite()?;
    let data = run.load(&["data", "composite_test.json"])?;
    results.push(evaluate_model(
        "composite".into(),
        &composite,
        &data,
        &solver,
    )?);
    let first = &data.trajectories[0];
    let predicted = Trajectory::new(
        first.times.clone(),
        rollout(&composite, first, &solver)?,
        first.controls.clone(),
    )?;
    save_trajectory_csv(
        &predicted,
        run.path(&["reports", "composite_rollout_0.csv"]),
    )?;
    write_report(&run.path(&["reports", "evaluate.json"]), &results)
}

pub fn bound_report(run: &Run) -> Result<()> {
    let params = run.cfg.chain_params();
    let truth = params
        .iter()
        .map(smd_oracle_model)
        .collect::<phnn_core::Result<Vec<_>>>()?;
    let learned = run.load_composite()?;
    let true_coupling = chain_coupling(&run.cfg.layout())?;
    let report = error_bound_report(
        &truth,
        learned.submodels(),
        &true_coupling,
        learned.coupling(),
        &run.cfg.sampling_domain(),
        run.cfg.bound.samples,
        run.seed(SEED_BOUND, 0),
    )?;
    save_bound_report(&report, run.path(&["reports", "bound.json"]))?;
    println!(
        "lhs_max {:.6e}, rhs {:.6e}, rhs over all ordered pairs {:.6e}, {} samples",
        report.lhs_max, report.rhs, report.rhs_all_pairs, report.samples
    );
    if report.lhs_max > report.rhs {
        println!("lhs_max exceeds the upper-triangular right-hand side on these samples");
    }
    Ok(())
}

#[derive(Serialize)]
struct PassivityResult {
    name: String,
    max_dh_dt: f64,
    violations: usize,
    states_checked: usize,
}

#[derive(Serialize)]
struct PassivityReport {
    tolerance: f64,
    models: Vec<PassivityResult>,
}

fn unforced_rollouts<M: PortHamiltonian>(
    run: &Run,
    model: &M,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let p = &run.cfg.passivity;
    let n = model.state_dim();
    let zero = ForcingSpec::zero(model.control_dim());
    let (lo, hi) = (run.cfg.data.initial_low, run.cfg.data.initial_high);
    (0..p.trajectories)
        .map(|j| {
            let mut rng = seeded_rng(derive_seed(seed, j as u64));
            let x0: Vec<f64> = (0..n)
                .map(|_| {
                    if lo == hi {
                        lo
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect();
            Ok(simulate(
                |x, u| model.rhs(x, u),
                &x0,
                &zero,
                p.steps,
                run.cfg.dt,
            )?)
        })
        .collect()
}

fn check_passivity<M: PortHamiltonian>(
    name: String,
    model: &M,
    rollouts: &[Trajectory],
    tol: f64,
) -> Result<PassivityResult> {
    let zero = vec![0.0; model.control_dim()];
    let mut max = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut checked = 0;
    for traj in rollouts {
        for x in &traj.states {
            let (dh, _) = model.power_balance(x, &zero)?;
            max = max.max(dh);
            violations += usize::from(dh > tol);
            checked += 1;
        }
    }
    println!("{name}: max dH/dt {max:.3e}, {violations} violations over {checked} states");
    Ok(PassivityResult {
        name,
        max_dh_dt: max,
        violations,
        states_checked: checked,
    })
}

pub fn passivity_check(run: &Run) -> Result<()> {
    let tol = run.cfg.passivity.tolerance;
    let mut models = Vec::new();
    for i in 0..run.cfg.subsystems.len() {
        let m = run.load_submodel(i)?;
        let rollouts = unforced_rollouts(run, &m, run.seed(SEED_PASSIVITY, i as u64))?;
        models.push(check_passivity(
            format!("subsystem {i}"),
            &m,
            &rollouts,
            tol,
        )?);
    }
    let composite = run.load_composite()?;
    let rollouts = unforced_rollouts(run, &composite, run.seed(SEED_PASSIVITY, u64::MAX))?;
    models.push(check_passivity(
        "composite".into(),
        &composite,
        &rollouts,
        tol,
    )?);

    let zero = vec![0.0; composite.control_dim()];
    let first = &rollouts[0];
    let rows = first
        .times
        .iter()
        .zip(&first.states)
        .map(|(t, x)| {
            let (dh, _) = composite.power_balance(x, &zero)?;
            Ok(vec![*t, composite.hamiltonian(x)?, dh])
        })
        .collect::<Result<Vec<_>>>()?;
    save_table_csv(
        &["t", "hamiltonian", "dh_dt"],
        &rows,
        run.path(&["reports", "passivity_energy.csv"]),
    )?;
    write_report(
        &run.path(&["reports", "passivity.json"]),
        &PassivityReport {
            tolerance: tol,
            models,
        },
    )
}
