use std::f64::consts::PI;

use phnn_core::composition::CouplingModel;
use phnn_core::data::{
    history_csv, load_dataset, save_dataset, save_trajectory_csv, trajectory_csv, Dataset,
    DatasetMetadata, Trajectory,
};
use phnn_core::systems::{
    composite_smd_rhs, forcing, generate_dataset_with, simulate, smd_hamiltonian, smd_oracle_model,
    smd_rhs, ChannelForcing, DatasetSpec, ForcingSpec, SmdParams,
};
use phnn_core::{chain_coupling, compose, Error, PortHamiltonian, SubsystemLayout};
use rand::{Rng, SeedableRng};

fn paper_params() -> SmdParams {
    SmdParams::new(1.0, 1.2, 1.7).unwrap()
}

fn spec(trajectories: usize, steps: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        trajectories,
        steps,
        dt: 0.01,
        initial_low: vec![-1.0, -1.0],
        initial_high: vec![1.0, 1.0],
        forcing: ForcingSpec::zero(1),
        seed,
    }
}

fn smd_data(p: SmdParams, spec: &DatasetSpec) -> Dataset {
    generate_dataset_with(|x: &[f64], u: &[f64]| smd_rhs(&p, x, u), spec, "smd").unwrap()
}

#[test]
fn forcing_values() {
    assert_eq!(forcing(&ForcingSpec::zero(2), 3.7), vec![0.0, 0.0]);
    let peak = ForcingSpec(vec![ChannelForcing::sinusoid(1.0, 1.0, 0.0)]);
    assert!((forcing(&peak, PI / 2.0)[0] - 1.0).abs() < 1e-15);
    let origin = ForcingSpec(vec![ChannelForcing::sinusoid(0.5, 2.0, 0.0)]);
    assert_eq!(forcing(&origin, 0.0), vec![0.0]);
    let bad = ForcingSpec(vec![ChannelForcing::sinusoid(1.0, -1.0, 0.0)]);
    assert!(bad.validate().is_err());
}

#[test]
fn smd_parameters_validated() {
    assert!(SmdParams::new(0.0, 1.0, 1.0).is_err());
    assert!(SmdParams::new(1.0, -1.0, 1.0).is_err());
    assert!(SmdParams::new(1.0, 1.0, -0.1).is_err());
    assert!(SmdParams::new(1.0, 1.0, 0.0).is_ok());
}

#[test]
fn full_size_dataset_shape() {
    let ds = smd_data(paper_params(), &spec(100, 500, 1));
    assert_eq!(ds.trajectories.len(), 100);
    assert!(ds.trajectories.iter().all(|t| t.len() == 501));
    for t in &ds.trajectories {
        for (i, w) in t.times.windows(2).enumerate() {
            assert_eq!(w[1], (i + 1) as f64 * 0.01);
        }
        assert!(t.states[0].iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn same_seed_same_dataset() {
    let p = paper_params();
    assert_eq!(smd_data(p, &spec(5, 30, 9)), smd_data(p, &spec(5, 30, 9)));
}

#[test]
fn equilibrium_stays_put() {
    let s = DatasetSpec {
        initial_low: vec![0.0, 0.0],
        initial_high: vec![0.0, 0.0],
        ..spec(3, 100, 4)
    };
    let ds = smd_data(paper_params(), &s);
    assert!(ds
        .trajectories
        .iter()
        .flat_map(|t| &t.states)
        .all(|x| x == &vec![0.0, 0.0]));
}

#[test]
fn unforced_energy_is_non_increasing() {
    let p = paper_params();
    let ds = smd_data(p, &spec(20, 500, 2));
    for t in &ds.trajectories {
        for w in t.states.windows(2) {
            assert!(smd_hamiltonian(&p, &w[1]) <= smd_hamiltonian(&p, &w[0]) + 1e-9);
        }
    }
}

#[test]
fn undamped_energy_conserved_over_ten_periods() {
    let p = SmdParams::new(1.0, 1.0, 0.0).unwrap();
    let steps = 6283;
    let traj = simulate(
        |x, u| smd_rhs(&p, x, u),
        &[1.0, 0.0],
        &ForcingSpec::zero(1),
        steps,
        0.01,
    )
    .unwrap();
    let h0 = smd_hamiltonian(&p, &traj.states[0]);
    let drift = traj
        .states
        .iter()
        .map(|x| (smd_hamiltonian(&p, x) - h0).abs() / h0)
        .fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift:e}");
}

#[test]
fn composite_ground_truth_matches_composed_oracles() {
    let params = [
        SmdParams::new(1.0, 1.2, 1.7).unwrap(),
        SmdParams::new(1.0, 1.5, 1.7).unwrap(),
    ];
    let layout = SubsystemLayout::uniform(2, 2, 1).unwrap();
    let c = chain_coupling(&layout).unwrap();
    let subs = params
        .iter()
        .map(|p| smd_oracle_model(p).unwrap())
        .collect();
    let model = compose(subs, c.clone(), layout).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = composite_smd_rhs(&params, &c, &x, &u).unwrap();
        let b = model.rhs(&x, &u).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-14, "{a:?} vs {b:?}");
        }
    }
    let zero = CouplingModel::zero(SubsystemLayout::uniform(2, 2, 1).unwrap());
    let stacked = composite_smd_rhs(&params, &zero, &[0.5, 0.1, -0.3, 0.2], &[0.0, 0.4]).unwrap();
    let a = smd_rhs(&params[0], &[0.5, 0.1], &[0.0]).unwrap();
    let b = smd_rhs(&params[1], &[-0.3, 0.2], &[0.4]).unwrap();
    assert_eq!(stacked, [a, b].concat());
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/data.json");
    let s = DatasetSpec {
        forcing: ForcingSpec(vec![ChannelForcing::sinusoid(0.5, 1.0, 0.0)]),
        ..spec(4, 25, 3)
    };
    let ds = smd_data(paper_params(), &s);
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), ds);
}

#[test]
fn decreasing_times_rejected_with_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.json");
    let good = smd_data(paper_params(), &spec(2, 3, 3));
    save_dataset(&good, &path).unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    value["trajectories"][1]["t"][2] = serde_json::json!(0.0);
    std::fs::write(&path, value.to_string()).unwrap();
    match load_dataset(&path) {
        Err(Error::Validation(msg)) => assert!(msg.contains("trajectory 1"), "{msg}"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn empty_dataset_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    let ds = Dataset {
        metadata: DatasetMetadata {
            dt: 0.01,
            system: "none".into(),
            seed: 0,
            forcing: ForcingSpec::zero(1),
        },
        trajectories: Vec::new(),
    };
    save_dataset(&ds, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap().trajectories.len(), 0);
}

#[test]
fn trajectory_csv_export() {
    let dir = tempfile::tempdir().unwrap();
    let ds = smd_data(paper_params(), &spec(1, 500, 3));
    let path = dir.path().join("traj.csv");
    save_trajectory_csv(&ds.trajectories[0], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 502);
    assert_eq!(lines[0], "t,x_0,x_1,u_0");
    for (line, x) in lines[1..].iter().zip(&ds.trajectories[0].states) {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(&cols[1..3], x.as_slice());
    }
    assert_eq!(history_csv(&[]), "step,loss\n");
    let single = Trajectory::new(vec![0.0], vec![vec![0.1]], vec![vec![]]).unwrap();
    assert_eq!(trajectory_csv(&single), "t,x_0\n0,0.10000000000000001\n");
}
