use super::*;
use crate::error::Error;

#[test]
fn registry_holds_exactly_the_shipped_scenarios() {
    assert_eq!(
        list_scenarios(),
        vec![
            "dirichlet_convergence_2d",
            "dirichlet_convergence_3d",
            "abc_quasi1d",
            "abc_rotated_energy",
            "example1_1",
            "example1_2",
            "example2_fracture"
        ]
    );
    for name in list_scenarios() {
        let cfg = builtin(name).unwrap();
        assert_eq!(cfg.name, name);
    }
    assert!(matches!(builtin("nope"), Err(Error::Config { .. })));
}

#[test]
fn config_round_trips_through_toml() {
    for name in list_scenarios() {
        let cfg = builtin(name).unwrap();
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn shipped_files_keep_table_values() {
    let q = builtin("abc_quasi1d").unwrap();
    let cells: Vec<i64> = q.reference["cells"].as_array().unwrap().iter().map(|v| v.as_integer().unwrap()).collect();
    assert_eq!(cells, vec![42, 162, 616, 2400, 9520]);
    assert_eq!(q.convergence.unwrap().dt, vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
    let e = builtin("abc_rotated_energy").unwrap();
    assert_eq!(e.time.dt, 0.05);
    assert_eq!(e.time.t_final, 15.0);
    let f = builtin("example2_fracture").unwrap();
    assert_eq!(f.time.dt, 5.0e-4);
    assert_eq!(f.reference["cells"].as_integer(), Some(877945));
    assert_eq!(f.regions.len(), 2);
    let x = builtin("example1_2").unwrap();
    assert_eq!(x.regions[0].lower, vec![0.25, 0.25, 0.05]);
    assert_eq!(x.reference["cells"].as_integer(), Some(512000));
}

fn small() -> ScenarioConfig {
    let mut cfg = builtin("abc_rotated_energy").unwrap();
    cfg.grid.cells = vec![4, 4];
    cfg.time.t_final = 0.2;
    cfg
}

#[test]
fn validation_names_the_field() {
    let cases: Vec<(Box<dyn Fn(&mut ScenarioConfig)>, &str)> = vec![
        (Box::new(|c| c.time.dt = -1.0), "time.dt"),
        (Box::new(|c| c.time.t_final = 0.0), "time.t_final"),
        (Box::new(|c| c.grid.cells = vec![4]), "grid.cells"),
        (Box::new(|c| c.material.density = 0.0), "material.density"),
    ];
    for (edit, path) in cases {
        let mut cfg = small();
        edit(&mut cfg);
        match cfg.validate() {
            Err(Error::Config { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{path}: {other:?}"),
        }
    }
    let mut cfg = builtin("example1_1").unwrap();
    cfg.regions[0].upper = vec![1.5, 0.75, 0.75];
    assert!(matches!(cfg.validate(), Err(Error::Config { path, .. }) if path == "regions[0]"));
    let bad = "name = \"x\"\n[domain]\nlower=[0,0]\n";
    assert!(matches!(ScenarioConfig::from_toml(bad), Err(Error::Config { .. })));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = builtin("abc_rotated_energy").unwrap().to_toml().unwrap().replace("[time]", "[time]\nbogus = 1");
    assert!(matches!(ScenarioConfig::from_toml(&text), Err(Error::Config { .. })));
}

#[test]
fn small_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.output.snapshot_stride = 2;
    let opts = RunOptions { out_dir: Some(dir.path().into()), ..Default::default() };
    let s = run_scenario(&cfg, &opts).unwrap();
    let level = &s.levels[0];
    assert_eq!(level.steps, 4);
    assert_eq!(level.snapshots, 3);
    for f in ["snapshot_000000.vtk", "snapshot_000002.vtk", "snapshot_000004.vtk", "energy.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let json: serde_json::Value = serde_json::from_reader(std::fs::File::open(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["levels"][0]["cells"], 32);
    assert!(json["levels"][0]["err_u"].as_f64().unwrap() < 1.0);
    let e = level.energy.as_ref().unwrap();
    assert_eq!(e.t.len(), 5);
    // the output does not depend on the run
    let again = tempfile::tempdir().unwrap();
    run_scenario(&cfg, &RunOptions { out_dir: Some(again.path().into()), ..Default::default() }).unwrap();
    for f in ["snapshot_000004.vtk", "energy.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}

#[test]
fn t_final_must_be_whole_steps() {
    let mut cfg = small();
    cfg.time.t_final = 0.125;
    let r = run_scenario(&cfg, &RunOptions { no_files: true, ..Default::default() });
    assert!(matches!(r, Err(Error::Config { path, .. }) if path == "time"));
}

#[test]
fn fractured_layers_discretize_at_coarse_resolution() {
    // fracture tips cross the layer interface at z = 1/3 when it is not a
    // grid plane
    let cfg = builtin("example2_fracture").unwrap();
    for n in [5, 10] {
        let grid = build_grid(&cfg, &[n, n, n]).unwrap();
        let field = build_field(&cfg, &grid).unwrap();
        let bc = build_boundary(&cfg, &grid, &field).unwrap();
        let abc = crate::mpsa::compute_abc_weights(&grid, &field, &bc, cfg.time.dt).unwrap();
        assert!(crate::mpsa::discretize(&grid, &field, &bc, &abc).is_ok(), "n = {n}");
    }
}
