use std::path::Path;

use corostefan::config::RunPlan;
use corostefan::grid::io::{CellArray, VtkFile};
use corostefan::run::{run_plan, EnergyRow, RunOptions, RunReport};
use corostefan::scenarios;

const ENERGY_COLUMNS: &[&str] = &[
    "segment",
    "step",
    "time",
    "tau",
    "outer_iterations",
    "kinetic",
    "stored",
    "gradient",
    "enthalpy",
    "total",
    "maxwell",
    "stokes",
    "hyper",
    "damage",
    "creep_gradient",
    "work_body",
    "work_drive",
    "adiabatic",
    "heat_boundary",
    "entropy_production",
    "mech_lhs",
    "mech_rhs",
    "mech_slack",
    "mech_scale",
    "drift",
    "relative_drift",
    "residual_max",
    "alpha_min",
    "alpha_max",
    "chi_min",
    "chi_max",
    "theta_min",
    "clamped_alpha",
    "enthalpy_underflow",
    "max_trace_pi",
    "max_skew_e",
    "mech_ok",
    "conserve_ok",
    "bounds_ok",
    "signs_ok",
    "structure_ok",
];

fn run(plan: &RunPlan, dir: &Path) -> (RunReport, Vec<EnergyRow>) {
    let report = run_plan(plan, &RunOptions { out_dir: Some(dir.to_path_buf()) }).unwrap();
    let rows = csv::Reader::from_path(dir.join("energy.csv")).unwrap().deserialize().collect::<Result<Vec<EnergyRow>, _>>().unwrap();
    (report, rows)
}

#[test]
fn energy_csv_header_is_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let plan = scenarios::load("rest").unwrap().with_overrides(Some(2), None);
    run(&plan, dir.path());
    let mut r = csv::Reader::from_path(dir.path().join("energy.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ENERGY_COLUMNS);
}

#[test]
fn vtk_snapshots_carry_the_frozen_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let plan = scenarios::load("rest").unwrap().with_overrides(Some(3), None);
    run(&plan, dir.path());
    let first = VtkFile::read(&dir.path().join("fields_0000.vtk")).unwrap();
    assert_eq!(first.dimensions[..2], [17, 17]);
    let names: Vec<(&str, &str)> = first
        .arrays
        .iter()
        .map(|a| {
            let kind = match a {
                CellArray::Scalar(..) => "scalar",
                CellArray::Vector(..) => "vector",
                CellArray::Tensor(..) => "tensor",
            };
            (a.name(), kind)
        })
        .collect();
    assert_eq!(
        names,
        [
            ("theta", "scalar"),
            ("chi", "scalar"),
            ("alpha", "scalar"),
            ("enthalpy", "scalar"),
            ("dev_strain_norm", "scalar"),
            ("sph_strain_norm", "scalar"),
            ("velocity", "vector"),
            ("strain", "tensor"),
            ("creep_rate", "tensor"),
        ]
    );
    assert!(first.scalar("theta").unwrap().iter().all(|t| *t == 260.0));
    assert!(dir.path().join("fields_0001.vtk").exists());
}

#[test]
fn report_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let plan = scenarios::load("rest").unwrap().with_overrides(Some(2), None);
    let (report, _) = run(&plan, dir.path());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["scenario", "segments", "analysis", "audit_passed", "completed"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["scenario"], "rest");
}

#[test]
fn rest_is_a_fixed_point_with_zero_slack() {
    let dir = tempfile::tempdir().unwrap();
    let (report, rows) = run(&scenarios::load("rest").unwrap(), dir.path());
    assert!(report.completed && report.audit_passed);
    assert_eq!(rows.len(), 11);
    for r in &rows {
        assert_eq!(r.mech_slack, 0.0);
        assert_eq!(r.drift, 0.0);
        assert_eq!(r.kinetic, 0.0);
        assert_eq!(r.theta_min, rows[0].theta_min);
    }
}

#[test]
fn reruns_are_bitwise_identical() {
    let plan = scenarios::load("shear2d").unwrap().with_overrides(Some(3), None);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&plan, a.path());
    run(&plan, b.path());
    let read = |d: &Path| std::fs::read(d.join("energy.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_eq!(std::fs::read(a.path().join("report.json")).unwrap(), std::fs::read(b.path().join("report.json")).unwrap());
}

#[test]
fn melting_front_advances_against_the_similarity_solution() {
    let mut plan = scenarios::load("stefan1d").unwrap().with_overrides(Some(40), None);
    plan.segments.truncate(1);
    let report = run_plan(&plan, &RunOptions { out_dir: None }).unwrap();
    let st = report.segments[0].stefan.as_ref().unwrap();
    assert!(st.fronts.len() >= 2);
    let (first, last) = (st.fronts.first().unwrap(), st.fronts.last().unwrap());
    assert!(last.numeric > first.numeric);
    assert!(last.oracle > first.oracle);
    assert!(st.max_relative_error.is_finite());
    assert!(report.audit_passed);
}

#[test]
fn heated_wall_feeds_the_enthalpy() {
    let plan = scenarios::load("melt2d").unwrap().with_overrides(Some(5), None);
    let dir = tempfile::tempdir().unwrap();
    let (report, rows) = run(&plan, dir.path());
    assert!(report.completed);
    let supplied: f64 = rows.iter().skip(1).map(|r| r.heat_boundary).sum();
    assert!(supplied > 0.0);
    assert!(rows.last().unwrap().total > rows[0].total);
    assert!(rows.iter().all(|r| r.bounds_ok));
}

#[test]
fn step_and_tau_overrides_apply_to_every_segment() {
    let plan = scenarios::load("pwave1d").unwrap().with_overrides(Some(7), Some(0.125));
    assert!(plan.segments.iter().all(|s| s.time.steps == 7 && s.time.tau == 0.125));
}

#[test]
fn a_missing_output_directory_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("a/b");
    let plan = scenarios::load("rest").unwrap().with_overrides(Some(1), None);
    run(&plan, &nested);
    assert!(nested.join("report.json").exists());
}

fn recompute_verdicts(report: &RunReport, rows: &[EnergyRow]) {
    for seg in &report.segments {
        let steps: Vec<&EnergyRow> = rows.iter().filter(|r| r.segment == seg.index && r.step > 0).collect();
        let count = |f: fn(&EnergyRow) -> bool| steps.iter().filter(|r| !f(r)).count();
        let a = &seg.audit;
        assert_eq!(a.steps_audited, steps.len());
        assert_eq!(a.mech_failures, count(|r| r.mech_ok));
        assert_eq!(a.conserve_failures, count(|r| r.conserve_ok));
        assert_eq!(a.bounds_failures, count(|r| r.bounds_ok));
        assert_eq!(a.sign_failures, count(|r| r.signs_ok));
        assert_eq!(a.structure_failures, count(|r| r.structure_ok));
        let min_slack = steps
            .iter()
            .map(|r| if r.mech_scale > 0.0 { r.mech_slack / r.mech_scale } else { 0.0 })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.min_relative_slack, if steps.is_empty() { 0.0 } else { min_slack });
        let drift = steps.iter().map(|r| r.relative_drift.abs()).fold(0.0, f64::max);
        assert_eq!(a.max_abs_relative_drift, drift);
        let clean = steps.iter().all(|r| r.mech_ok && r.conserve_ok && r.bounds_ok && r.signs_ok && r.structure_ok);
        assert_eq!(a.passed, clean && seg.steps_completed == seg.steps_requested);
    }
}

#[test]
fn report_verdicts_follow_from_energy_csv() {
    for (name, steps) in [("melt2d", 4), ("stefan1d", 12), ("shear2d", 2)] {
        let dir = tempfile::tempdir().unwrap();
        let plan = scenarios::load(name).unwrap().with_overrides(Some(steps), None);
        let (report, rows) = run(&plan, dir.path());
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let on_disk: RunReport = serde_json::from_str(&text).unwrap();
        recompute_verdicts(&on_disk, &rows);
        assert_eq!(on_disk.audit_passed, report.segments.iter().all(|s| s.audit.passed));
    }
}

#[test]
fn readme_example_configuration_is_valid() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").expect("toml block") + "```toml\n".len();
    let end = start + readme[start..].find("```").expect("closed block");
    let plan = RunPlan::parse(&readme[start..end]).unwrap();
    assert_eq!(plan.segments.len(), 1);
    let cfg = &plan.segments[0];
    assert_eq!(cfg.time.tau, 0.004);
    assert_eq!(cfg.time.output_every, 25);
    let problem = corostefan::run::build_problem(cfg).unwrap();
    corostefan::run::initial_state(cfg, &problem).unwrap();
}
