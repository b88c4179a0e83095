use std::path::Path;

use poco_core::experiment::{
    csv_string, emit_csv, header, run_experiment, AlgorithmKind, ExperimentConfig, GateChoice, Scenario, StepperChoice,
    PER_ALGORITHM_COLUMNS,
};
use poco_core::NoiseMode;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn short(scenario: Scenario, rounds: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        rounds: Some(rounds),
        seed: Some(seed),
        ..ExperimentConfig::for_scenario(scenario)
    }
}

#[test]
fn shipped_configs_parse_and_resolve() {
    for (file, scenario) in [
        ("regulation.toml", Scenario::Regulation),
        ("curtailment.toml", Scenario::Curtailment),
        ("synthetic.toml", Scenario::SyntheticQuadratic),
    ] {
        let cfg = ExperimentConfig::from_path(&configs_dir().join(file)).unwrap();
        let resolved = cfg.resolve().unwrap();
        assert_eq!(resolved.scenario, scenario, "{file}");
    }
}

#[test]
fn shipped_regulation_config_matches_defaults() {
    let from_file = ExperimentConfig::from_path(&configs_dir().join("regulation.toml"))
        .unwrap()
        .resolve()
        .unwrap();
    let defaults = ExperimentConfig::for_scenario(Scenario::Regulation).resolve().unwrap();
    assert_eq!(from_file.epsilons, defaults.epsilons);
    assert_eq!(from_file.fleet, defaults.fleet);
    assert_eq!(from_file.gate, defaults.gate);
    assert_eq!(from_file.stepper, defaults.stepper);
}

#[test]
fn scenario_defaults_pick_the_right_machinery() {
    let reg = ExperimentConfig::for_scenario(Scenario::Regulation).resolve().unwrap();
    assert!(matches!(reg.stepper, StepperChoice::SigmaOgd { .. }));
    assert!(matches!(reg.gate, GateChoice::Fixed { .. }));
    assert_eq!(reg.noise_mode, NoiseMode::FixedRadiusSphere);
    let cur = ExperimentConfig::for_scenario(Scenario::Curtailment).resolve().unwrap();
    assert!(matches!(cur.stepper, StepperChoice::Ogd { .. }));
    assert!(matches!(cur.gate, GateChoice::Backtrack { .. }));
    assert_eq!(cur.epsilons, vec![0.1, 0.01, 0.001]);
}

#[test]
fn invalid_values_are_rejected() {
    let bad = [
        "scenario = \"regulation\"\nepsilon = [-0.1]",
        "scenario = \"regulation\"\nepsilon = []",
        "scenario = \"regulation\"\ndelta = 0.0",
        "scenario = \"regulation\"\nsigma = -1.0",
        "scenario = \"curtailment\"\nbeta = 1.5",
        "scenario = \"curtailment\"\nzeta = 0.0",
        "scenario = \"regulation\"\n[fleet]\nN = 0",
        "scenario = \"regulation\"\n[oracle]\ntol = 0.0",
        "epsilon = [0.1]",
    ];
    for text in bad {
        let parsed = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(parsed.resolve().is_err(), "accepted: {text}");
    }
    for text in ["scenario = \"regulation\"\nunknown_key = 1", "scenario = \"nope\"", "T = -3"] {
        assert!(ExperimentConfig::from_toml_str(text).is_err(), "parsed: {text}");
    }
}

#[test]
fn missing_config_file_reports_its_path() {
    let err = ExperimentConfig::from_path(Path::new("/nonexistent/poco.toml")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/poco.toml"), "{err}");
}

#[test]
fn roster_and_csv_layout_follow_the_epsilon_list() {
    let mut cfg = short(Scenario::Regulation, 12, 4);
    cfg.epsilon = Some(vec![0.2, 0.02]);
    let run = run_experiment(&cfg.resolve().unwrap()).unwrap();
    let names: Vec<_> = run.runs.iter().map(|r| r.spec.name.as_str()).collect();
    assert_eq!(names, ["sogd", "poco_e0.2", "poco_e0.02", "omd_e0.2", "omd_e0.02"]);
    let cols = header(&run);
    assert_eq!(cols.len(), 2 + names.len() * PER_ALGORITHM_COLUMNS.len());
    let text = csv_string(&run);
    assert_eq!(text.lines().count(), 13);
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == cols.len()));
}

#[test]
fn predictive_runs_never_underperform_their_shadow() {
    // Regret of the played points equals the regret at x̄ minus realised improvements.
    for scenario in [Scenario::Regulation, Scenario::SyntheticQuadratic, Scenario::Curtailment] {
        let run = run_experiment(&short(scenario, 60, 2).resolve().unwrap()).unwrap();
        for r in run.runs.iter().filter(|r| r.spec.kind == AlgorithmKind::Predictive) {
            let improvements: f64 = r.records.iter().filter_map(|row| row.improvement).sum();
            let gap = (r.shadow_regret - improvements - r.regret).abs();
            assert!(gap <= 1e-8 * r.shadow_regret.abs().max(1.0), "{}: gap {gap}", r.spec.name);
            assert_eq!(r.checks.violations(), 0, "{}", r.spec.name);
        }
    }
}

#[test]
fn seeds_change_the_run_and_repeat_exactly() {
    let resolved = |seed| short(Scenario::SyntheticQuadratic, 40, seed).resolve().unwrap();
    let a = csv_string(&run_experiment(&resolved(1)).unwrap());
    let b = csv_string(&run_experiment(&resolved(1)).unwrap());
    let c = csv_string(&run_experiment(&resolved(2)).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn emit_csv_writes_the_same_bytes_as_csv_string() {
    let run = run_experiment(&short(Scenario::Curtailment, 25, 0).resolve().unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested.csv");
    emit_csv(&run, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), csv_string(&run));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn summary_reports_every_algorithm() {
    let run = run_experiment(&short(Scenario::Regulation, 50, 9).resolve().unwrap()).unwrap();
    let summary = run.summary();
    assert_eq!(summary.algorithms.len(), run.runs.len());
    assert_eq!(summary.baseline, "sogd");
    let json: serde_json::Value = serde_json::from_str(&summary.to_json()).unwrap();
    assert_eq!(json["rounds"], 50);
    for (entry, r) in json["algorithms"].as_array().unwrap().iter().zip(&run.runs) {
        assert_eq!(entry["name"], r.spec.name.as_str());
        assert!((entry["final_regret"].as_f64().unwrap() - r.regret).abs() < 1e-12);
    }
}
