//! End-to-end acceptance run: every shipped scenario plus the constitutive
//! checks, one PASS/FAIL line per criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use corostefan::audit::constitutive::{legendre_defect, min_damage_heat, semi_convexity_violations, stored_energy_fd_error};
use corostefan::config::{KinematicsConfig, RunPlan};
use corostefan::materials::MaterialParams;
use corostefan::run::{run_plan, EnergyRow, RunOptions, RunReport};
use corostefan::scenarios;

struct Scenario {
    name: &'static str,
    plan: RunPlan,
    report: RunReport,
    rows: Vec<EnergyRow>,
    elapsed: Duration,
    csv: Vec<u8>,
}

fn read_rows(csv: &[u8]) -> Vec<EnergyRow> {
    csv::Reader::from_reader(csv).deserialize().collect::<Result<_, _>>().expect("energy.csv parses")
}

fn run_in(plan: &RunPlan, dir: &Path) -> (RunReport, Vec<u8>) {
    let report = run_plan(plan, &RunOptions { out_dir: Some(dir.to_path_buf()) }).expect("run succeeds");
    let csv = std::fs::read(dir.join("energy.csv")).expect("energy.csv written");
    let json = std::fs::read_to_string(dir.join("report.json")).expect("report.json written");
    let on_disk: RunReport = serde_json::from_str(&json).expect("report.json parses");
    assert_eq!(on_disk.segments.len(), report.segments.len());
    (report, csv)
}

fn run_scenario(name: &'static str) -> Scenario {
    let plan = scenarios::load(name).expect("preset loads");
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let (report, csv) = run_in(&plan, dir.path());
    let elapsed = start.elapsed();
    eprintln!("  ran {name} in {:.1} s", elapsed.as_secs_f64());
    Scenario { name, plan, rows: read_rows(&csv), report, elapsed, csv }
}

struct Verdicts(Vec<(String, bool, String)>);

impl Verdicts {
    fn add(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.0.push((name.to_string(), pass, detail));
    }
}

fn find<'a>(all: &'a [Scenario], name: &str) -> &'a Scenario {
    all.iter().find(|s| s.name == name).expect("scenario ran")
}

fn energy_audit(all: &[Scenario], v: &mut Verdicts) {
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    let mut budget = Vec::new();
    for s in all {
        let cells: usize = s.plan.segments.iter().map(|c| c.grid.cells.iter().product()).max().unwrap_or(0);
        let steps = s.plan.segments.iter().map(|c| c.time.steps).max().unwrap_or(0);
        budget.push(format!("{} {}c/{}s/{:.0}s", s.name, cells, steps, s.elapsed.as_secs_f64()));
        if cells > 64 * 64 || s.elapsed > Duration::from_secs(300) || !s.report.completed {
            failures.push(format!("{} over budget or incomplete", s.name));
        }
        for row in s.rows.iter().filter(|r| r.step > 0) {
            let tol = s.plan.segments[row.segment].solver.outer_tol;
            let rel = if row.mech_scale > 0.0 { row.mech_slack / row.mech_scale } else { 0.0 };
            worst = worst.min(rel / tol);
            if row.mech_slack < -10.0 * tol * row.mech_scale {
                failures.push(format!("{} segment {} step {}", s.name, row.segment, row.step));
            }
        }
    }
    let detail = format!("min slack/(scale*outer_tol) = {worst:.3e}; {}", budget.join(", "));
    v.add("energy audit: mechanical slack >= -10 outer_tol scale", failures.is_empty(), if failures.is_empty() {
        detail
    } else {
        format!("{detail}; failures: {}", failures.join("; "))
    });

    let mut drift: f64 = 0.0;
    let mut closed = Vec::new();
    let mut ok = true;
    for s in all {
        for seg in &s.report.segments {
            let cfg = &s.plan.segments[seg.index];
            if seg.audit.closed && cfg.solver.outer_tol <= 1e-10 {
                closed.push(format!("{}#{}", s.name, seg.index));
                drift = drift.max(seg.audit.max_abs_relative_drift);
                ok &= seg.audit.max_abs_relative_drift <= 1e-8;
            }
        }
    }
    ok &= !closed.is_empty();
    v.add(
        "energy audit: closed runs conserve energy to 1e-8 per step",
        ok,
        format!("max |relative drift| {drift:.3e} over {}", closed.join(", ")),
    );
}

fn bounds(all: &[Scenario], v: &mut Verdicts) {
    let mut bad = Vec::new();
    let (mut amin, mut cmin, mut cmax, mut tmin) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut amax = f64::NEG_INFINITY;
    for s in all {
        for r in &s.rows {
            amin = amin.min(r.alpha_min);
            amax = amax.max(r.alpha_max);
            cmin = cmin.min(r.chi_min);
            cmax = cmax.max(r.chi_max);
            tmin = tmin.min(r.theta_min);
            if !(r.alpha_min >= 0.0 && r.alpha_max <= 1.0 && r.chi_min >= 0.0 && r.chi_max <= 1.0 && r.theta_min >= 0.0) {
                bad.push(format!("{} segment {} step {}", s.name, r.segment, r.step));
            }
        }
    }
    v.add(
        "bounds: alpha, chi in [0,1] and theta >= 0 after every step",
        bad.is_empty(),
        format!("alpha [{amin}, {amax}], chi [{cmin}, {cmax}], theta >= {tmin:.4e}; {} violations", bad.len()),
    );
}

fn rotor(s: &Scenario, v: &mut Verdicts) {
    let rot: Vec<_> = s.report.segments.iter().filter_map(|x| x.rotation.as_ref()).collect();
    let long = rot.iter().filter(|r| r.steps >= 1000).collect::<Vec<_>>();
    let skew = rot.iter().map(|r| r.max_skew_e).fold(0.0, f64::max);
    let pi = rot.iter().map(|r| r.max_trace_pi).fold(0.0, f64::max);
    let p = rot.iter().map(|r| r.max_trace_p).fold(0.0, f64::max);
    v.add(
        "rotor2d: skew E, tr Pi, tr P below 1e-12 over 1000 steps",
        !long.is_empty() && skew <= 1e-12 && pi <= 1e-12 && p <= 1e-12,
        format!("max |skew E| {skew:.3e}, |tr Pi| {pi:.3e}, |tr P| {p:.3e}, longest segment {} steps", rot.iter().map(|r| r.steps).max().unwrap_or(0)),
    );

    let mut ok = rot.len() >= 3;
    let mut parts = Vec::new();
    for (label, pick, orders) in [
        ("|sph E|", (|r: &corostefan::run::RotationReport| r.drift_sph) as fn(&_) -> f64, &s.report.analysis.rotation_orders_sph),
        ("|dev E|", |r: &corostefan::run::RotationReport| r.drift_dev, &s.report.analysis.rotation_orders_dev),
    ] {
        let drifts: Vec<f64> = rot.iter().map(|r| pick(r)).collect();
        let c = rot.iter().map(|r| pick(r) / r.tau).fold(0.0, f64::max);
        let orders = orders.clone().unwrap_or_default();
        let exact = drifts.iter().all(|d| *d <= 1e-12);
        let first_order = orders.len() + 1 == drifts.len() && orders.iter().all(|o| *o >= 0.95);
        ok &= exact || first_order;
        parts.push(format!(
            "{label} drifts {:?} (C = {c:.3}), orders {:?}{}",
            drifts.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.4}")).collect::<Vec<_>>(),
            if exact { ", conserved to roundoff" } else { "" }
        ));
    }
    v.add("rotor2d: invariant drift <= C tau with order >= 1", ok, parts.join("; "));
}

fn pwave(s: &Scenario, v: &mut Verdicts) {
    let disp: Vec<_> = s.report.segments.iter().filter_map(|x| x.dispersion.as_ref()).collect();
    let mut ok = disp.len() == 3;
    let mut parts = Vec::new();
    for d in &disp {
        let err = d.relative_error.unwrap_or(f64::INFINITY);
        ok &= err <= 0.05;
        parts.push(format!(
            "lambda {:.0}h: measured {:.5}, predicted {:.5} ({:.2}%)",
            d.lambda_cells,
            d.measured.unwrap_or(f64::NAN),
            d.predicted.unwrap_or(f64::NAN),
            100.0 * err
        ));
    }
    let cells: Vec<f64> = disp.iter().map(|d| d.lambda_cells.round()).collect();
    ok &= [16.0, 32.0, 64.0].iter().all(|l| cells.contains(l));
    v.add("pwave1d: phase velocity within 5% of the dispersion relation", ok, parts.join("; "));
    let inc = s.report.analysis.dispersion_increasing == Some(true);
    v.add("pwave1d: measured velocity strictly increasing in lambda", inc, format!("{:?}", s.report.analysis.dispersion_increasing));
}

fn stefan(s: &Scenario, v: &mut Verdicts) {
    let st: Vec<_> = s.report.segments.iter().filter_map(|x| x.stefan.as_ref()).collect();
    let frozen = s.plan.segments.iter().all(|c| c.grid.cells == vec![400] && matches!(c.kinematics, Some(KinematicsConfig::Still)));
    let ok = st.len() == 3 && frozen && st.iter().all(|r| r.max_relative_error <= 0.03);
    v.add(
        "stefan1d: front within 3% of the similarity solution for t > 10 tau",
        ok,
        st.iter().map(|r| format!("omega {}: {:.2}%", r.omega, 100.0 * r.max_relative_error)).collect::<Vec<_>>().join(", "),
    );
    let dec = s.report.analysis.stefan_error_decreasing == Some(true);
    v.add("stefan1d: error decreases monotonically with omega", dec, format!("{:?}", s.report.analysis.stefan_error_decreasing));
}

fn constitutive(v: &mut Verdicts) {
    let p = MaterialParams::default();
    let quadratic = MaterialParams { eps_reg: 0.0, ..p.clone() };
    let fd = stored_energy_fd_error(&p, 100, 11).expect("evaluates");
    let fd0 = stored_energy_fd_error(&quadratic, 100, 15).expect("evaluates");
    v.add(
        "constitutive: finite differences to 1e-6 on 100 points",
        fd.max(fd0) <= 1e-6,
        format!("max relative error {fd0:.3e} (quadratic), {fd:.3e} (regularized, eps {})", p.eps_reg),
    );
    let leg = legendre_defect(&p, 100, 12).expect("evaluates");
    v.add("constitutive: Legendre identity to 1e-10", leg <= 1e-10, format!("max relative defect {leg:.3e}"));
    let bad = semi_convexity_violations(&p, 1000, 1.0, 13).expect("evaluates");
    let wide = semi_convexity_violations(&p, 1000, 100.0, 13).expect("evaluates");
    v.add(
        "constitutive: semi-convexity on 1000 segments",
        bad == 0,
        format!("{bad} violating segments with |E| <= 1; {wide} with |E| <= 100, where the profile is radially concave"),
    );
    let xi = min_damage_heat(&p, 100_000, 14);
    v.add("constitutive: damage heat >= 0 at 1e5 rates including the kink", xi >= 0.0, format!("min xi {xi:.3e}"));
}

fn determinism(all: &[Scenario], v: &mut Verdicts) {
    let mut ok = true;
    let mut names = Vec::new();
    for name in ["rest", "shear2d", "melt2d"] {
        let s = find(all, name);
        let plan = if name == "rest" { s.plan.clone() } else { s.plan.clone().with_overrides(Some(20), None) };
        let dir_a = tempfile::tempdir().expect("tempdir");
        let dir_b = tempfile::tempdir().expect("tempdir");
        let (_, a) = run_in(&plan, dir_a.path());
        let (_, b) = run_in(&plan, dir_b.path());
        ok &= a == b && !a.is_empty();
        if name == "rest" {
            ok &= a == s.csv;
        }
        names.push(format!("{name} ({} bytes)", a.len()));
    }
    v.add("determinism: energy.csv bitwise identical across reruns", ok, names.join(", "));
}

fn cli_examples(all: &[Scenario], v: &mut Verdicts) {
    let rest = find(all, "rest");
    let seg = &rest.report.segments[0];
    let zero = rest.rows.iter().all(|r| r.mech_slack == 0.0 && r.drift == 0.0);
    v.add(
        "cli: rest for 10 steps has zero slack and exits cleanly",
        seg.steps_completed == 10 && rest.report.completed && rest.report.audit_passed && zero,
        format!("{} steps, audit passed {}, all slacks zero {zero}", seg.steps_completed, rest.report.audit_passed),
    );

    let st = find(all, "stefan1d");
    let json = serde_json::to_value(&st.report).expect("serializes");
    let has_front = json["segments"].as_array().is_some_and(|segs| {
        segs.iter().all(|s| s["stefan"]["fronts"].as_array().is_some_and(|f| !f.is_empty()) && s["stefan"]["max_relative_error"].is_number())
    });
    v.add("cli: stefan1d report carries the front series and oracle error", has_front, "report.json segments[].stefan".into());

    let pw = find(all, "pwave1d");
    let json = serde_json::to_value(&pw.report).expect("serializes");
    let table = json["segments"]
        .as_array()
        .map(|segs| segs.iter().filter(|s| s["dispersion"]["measured"].is_number() && s["dispersion"]["lambda"].is_number()).count())
        .unwrap_or(0);
    v.add("cli: pwave1d report carries the v(lambda) table", table == 3, format!("{table} rows"));

    let names = scenarios::names();
    let expected = ["rest", "stefan1d", "pwave1d", "shear2d", "melt2d", "rotor2d"];
    let listed = names.len() == 6 && expected.iter().all(|n| names.contains(n));
    let valid = names.iter().all(|n| scenarios::load(n).is_ok_and(|p| p.segments.iter().all(|c| c.check().is_ok())));
    v.add("cli: scenarios lists exactly the six presets, each valid", listed && valid, format!("{names:?}"));

    let melt = scenarios::load("melt2d").expect("loads");
    let mat = melt.segments[0].material().expect("material");
    let thermal = mat.thermal_model().expect("thermal");
    let liquidus = thermal.w_solidus() + thermal.latent();
    let pts = mat.a_curve.points();
    let last = pts.last().copied().unwrap_or([0.0, 1.0]);
    v.add(
        "cli: melt2d declares vanishing healing in the liquid",
        last[1] == 0.0 && last[0] <= liquidus && mat.a_curve.eval(liquidus + 1.0) == 0.0,
        format!("a_curve {pts:?}, liquidus enthalpy {liquidus}"),
    );
}

fn main() -> ExitCode {
    let mut v = Verdicts(Vec::new());
    constitutive(&mut v);
    let all: Vec<Scenario> = ["rest", "stefan1d", "pwave1d", "shear2d", "melt2d", "rotor2d"].into_iter().map(run_scenario).collect();
    energy_audit(&all, &mut v);
    bounds(&all, &mut v);
    rotor(find(&all, "rotor2d"), &mut v);
    pwave(find(&all, "pwave1d"), &mut v);
    stefan(find(&all, "stefan1d"), &mut v);
    determinism(&all, &mut v);
    cli_examples(&all, &mut v);
    let failed = v.0.iter().filter(|x| !x.1).count();
    println!("{} criteria, {} passed, {} failed", v.0.len(), v.0.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
