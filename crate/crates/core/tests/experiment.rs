use bsn_core::config::linear_to_db;
use bsn_core::experiment::{
    convergence_summary_csv, load_spec, manifest, preset_text, records_to_csv, run_convergence_study, run_sweep,
    write_outputs, ExperimentSpec, Method, RECORD_HEADER,
};

fn tiny() -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk();
    spec.network.tags = 28;
    spec.experiment.frames = 64;
    spec.experiment.trials = 2;
    spec.experiment.random_draws = 20;
    spec.experiment.power_sweep_dbm = vec![10.0, 20.0];
    spec
}

fn without_wall_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn sweep_is_reproducible_from_the_seed() {
    let spec = tiny();
    let a = records_to_csv(&run_sweep(&spec).unwrap());
    let b = records_to_csv(&run_sweep(&spec).unwrap());
    assert_eq!(without_wall_time(&a), without_wall_time(&b));
    let c = records_to_csv(&run_sweep(&spec.clone().with_seed(2)).unwrap());
    assert_ne!(without_wall_time(&a), without_wall_time(&c));
}

#[test]
fn sweep_records_are_consistent() {
    let spec = tiny();
    let records = run_sweep(&spec).unwrap();
    assert_eq!(records.len(), 2 * 2 * 2 * 3);
    let csv = records_to_csv(&records);
    assert_eq!(csv.lines().next().unwrap(), RECORD_HEADER);
    assert_eq!(csv.lines().count(), records.len() + 1);
    for r in &records {
        assert!((r.sum_avg_sinr_db - linear_to_db(r.sum_avg_sinr)).abs() < 1e-12);
        if r.method != Method::MaxSum {
            assert_eq!(r.iterations, 0);
        }
    }
    for m in records.iter().filter(|r| r.method == Method::MaxSum) {
        let find = |method| {
            records
                .iter()
                .find(|r| r.trial == m.trial && r.power_dbm == m.power_dbm && r.detector == m.detector && r.method == method)
                .unwrap()
        };
        let exact = find(Method::Exact);
        assert!(m.sum_avg_sinr <= exact.sum_avg_sinr * (1.0 + 1e-12));
        assert!(find(Method::RandomOrthogonal).sum_avg_sinr <= exact.sum_avg_sinr * (1.0 + 1e-12));
    }
}

#[test]
fn convergence_summary_has_one_row_per_core() {
    let spec = tiny();
    let runs = run_convergence_study(&spec).unwrap();
    assert_eq!(runs.len(), 2 * 2 * 7);
    let summary = convergence_summary_csv(&runs);
    assert_eq!(summary.lines().count(), runs.len() + 1);
    for r in &runs {
        assert!(r.gaps().last().is_none_or(|g| *g >= -1e-9));
    }
}

#[test]
fn presets_parse_and_round_trip() {
    for name in ["paper", "desk"] {
        let spec = ExperimentSpec::from_toml_str(preset_text(name).unwrap()).unwrap();
        spec.validate().unwrap();
        assert_eq!(ExperimentSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
    assert_eq!(ExperimentSpec::paper().experiment.frames, 10_000);
    assert_eq!(ExperimentSpec::desk().experiment.frames, 1000);
    assert!(preset_text("nope").is_none());
}

#[test]
fn config_hash_tracks_content() {
    let a = ExperimentSpec::paper();
    assert_eq!(a.config_hash(), ExperimentSpec::paper().config_hash());
    assert_ne!(a.config_hash(), a.clone().with_seed(9).config_hash());
    assert_eq!(a.config_hash().len(), 64);
}

#[test]
fn outputs_and_manifest_land_on_disk() {
    let dir = std::env::temp_dir().join(format!("bsn-exp-{}", std::process::id()));
    let spec = tiny().with_seed(42);
    write_outputs(&dir, &spec, "sweep", &[("a.csv", "x\n1\n".into())]).unwrap();
    let text = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert_eq!(text, manifest(&spec, "sweep", &["a.csv"]));
    assert!(text.contains(&spec.config_hash()));
    assert!(text.contains("seed = 42"));
    let path = dir.join("spec.toml");
    std::fs::write(&path, spec.to_toml_string()).unwrap();
    assert_eq!(load_spec(&path).unwrap(), spec);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_specs_are_rejected() {
    assert!(ExperimentSpec::from_toml_str("[solver]\nalpha = 1.5\n").and_then(|s| s.validate()).is_err());
    assert!(ExperimentSpec::from_toml_str("[experiment]\nbogus = 1\n").is_err());
    assert!(load_spec(std::path::Path::new("/nonexistent/spec.toml")).is_err());
}
