use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wasserflow::pdm::{io as pdm_io, CaseStudy};
use wasserflow::ParticleMeasureF64;

const LAMBDA: [f64; 2] = [2.0 / 60.0, 5.0 / 60.0];

fn wasserflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wasserflow")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wasserflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn observations(path: &Path) -> Vec<wasserflow::pdm::Observation<f64>> {
    pdm_io::read_observations(fs::File::open(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn diagnostics(path: &Path) -> std::collections::HashMap<String, f64> {
    csv_rows(path).into_iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect()
}

/// Noise-free observations over `days` days plus a fast flow setup.
fn clean_setup(dir: &Path, days: &str) -> Vec<String> {
    let out = dir.to_str().unwrap().to_string();
    ok(&["simulate", "--paper-preset", "--out", &out, "--eps_half_width", "0", "--horizon", "20", "--days", days]);
    ["--paper-preset", "--out", &out, "--n_particles", "200", "--perturb_std", "0"]
        .iter()
        .map(|x| x.to_string())
        .collect()
}

#[test]
fn simulate_preset_recovers_day_zero_within_noise() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--paper-preset", "--out", s(dir.path()), "--seed", "1"]);
    let obs = observations(&dir.path().join("observations.csv"));
    assert_eq!(obs.len(), 10);
    assert_eq!(obs[0].t, 0.0);
    assert!((obs[0].y_hat[0] - 2.5).abs() < 0.5 && (obs[0].y_hat[1] - 1.0).abs() < 0.2, "{:?}", obs[0]);
}

#[test]
fn simulate_noise_free_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["simulate", "--paper-preset", "--out", s(dir.path()), "--eps_half_width", "0"]);
    let obs = observations(&dir.path().join("observations.csv"));
    assert!((obs[0].y_hat[0] - 2.5).abs() < 1e-8 && (obs[0].y_hat[1] - 1.0).abs() < 1e-8);
}

#[test]
fn simulate_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&["simulate", "--paper-preset", "--out", s(d.path()), "--seed", "42"]);
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("observations.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let preset = CaseStudy::<f64>::paper_preset();
    fs::write(
        &cfg,
        format!(
            "# plant\na0 = 2.5\nb0 = 1\nlambda = {},{}\nzeta_min = 0.4\nperiod = 5\ndt = 0.001\nhorizon = 10\neps_half_width = 3\ndays = 4\n",
            preset.model.lambda[0], preset.model.lambda[1]
        ),
    )
    .unwrap();
    ok(&["simulate", "--config", s(&cfg), "--out", s(dir.path()), "--days", "3"]);
    assert_eq!(observations(&dir.path().join("observations.csv")).len(), 3);
}

#[test]
fn missing_and_unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&wasserflow(&["simulate", "--out", s(&out)])), 2);
    assert_eq!(code(&wasserflow(&["simulate", "--paper-preset", "--out", s(&out), "--bogus", "1"])), 2);
    assert_eq!(code(&wasserflow(&["simulate", "--paper-preset", "--out", s(&out), "--rho"])), 2);
    assert!(!out.exists());
}

#[test]
fn unstable_plant_is_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = wasserflow(&["simulate", "--paper-preset", "--out", s(&out), "--dt", "1.5"]);
    assert_eq!(code(&res), 4);
    assert!(String::from_utf8_lossy(&res.stderr).contains("spectral radius"));
    assert!(!out.exists());
}

#[test]
fn flow_noise_free_converges_to_true_rates() {
    let dir = tempfile::tempdir().unwrap();
    // Days stop at 70 (a(t) reaches 0 at day 75); a step close to
    // tau_max = 0.02 contracts the mean by 1 − 25τ = 0.525 per day.
    let args = clean_setup(dir.path(), "15");
    let mut argv = vec!["flow", "--tau", "0.019"];
    argv.extend(args.iter().map(String::as_str));
    ok(&argv);
    let m = ParticleMeasureF64::read_csv(fs::File::open(dir.path().join("particles.csv")).unwrap()).unwrap();
    let mean = m.mean();
    assert!((mean[0] - LAMBDA[0]).abs() < 1e-4 && (mean[1] - LAMBDA[1]).abs() < 1e-4, "{mean:?}");
    let trace = csv_rows(&dir.path().join("trace.csv"));
    assert_eq!(trace.len(), 15);
    assert_eq!(trace.last().unwrap()[0], "14");
}

#[test]
fn zero_iterations_write_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let args = clean_setup(dir.path(), "5");
    let mut argv = vec!["flow", "--max_iters", "0", "--seed", "3"];
    argv.extend(args.iter().map(String::as_str));
    ok(&argv);
    let preset = CaseStudy::<f64>::paper_preset();
    let init = ParticleMeasureF64::uniform_box(&preset.init_lo, &preset.init_hi, 200, 3).unwrap();
    let mut expected = Vec::new();
    init.write_csv(&mut expected).unwrap();
    assert_eq!(fs::read(dir.path().join("particles.csv")).unwrap(), expected);
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    ok(&["simulate", "--paper-preset", "--out", s(full.path()), "--horizon", "20", "--seed", "5"]);
    let obs = full.path().join("observations.csv");
    let common = ["--paper-preset", "--n_particles", "300", "--seed", "5", "--observations", s(&obs)];
    let run = |extra: &[&str], out: &Path| {
        let mut argv = vec!["flow", "--out", s(out)];
        argv.extend(common);
        argv.extend(extra);
        ok(&argv);
    };
    run(&[], full.path());
    let part = tempfile::tempdir().unwrap();
    run(&["--max_iters", "4"], part.path());
    let resumed = tempfile::tempdir().unwrap();
    let ck = part.path().join("checkpoints").join("ck_000004.csv");
    run(&["--resume", s(&ck)], resumed.path());
    let bytes = |d: &Path| fs::read(d.join("particles.csv")).unwrap();
    assert_eq!(bytes(full.path()), bytes(resumed.path()));
    assert_eq!(fs::read(full.path().join("particles.meta")).unwrap(), fs::read(resumed.path().join("particles.meta")).unwrap());

    let wrong_seed = tempfile::tempdir().unwrap();
    let mut argv = vec!["flow", "--out", s(wrong_seed.path()), "--resume", s(&ck), "--paper-preset", "--seed", "6"];
    argv.extend(["--observations", s(&obs)]);
    assert_eq!(code(&wasserflow(&argv)), 2);
}

#[test]
fn flow_output_is_independent_of_thread_count() {
    let src = tempfile::tempdir().unwrap();
    ok(&["simulate", "--paper-preset", "--out", s(src.path()), "--horizon", "20", "--seed", "8"]);
    let obs = src.path().join("observations.csv");
    let dirs: Vec<_> = ["1", "4"]
        .iter()
        .map(|threads| {
            let d = tempfile::tempdir().unwrap();
            ok(&["flow", "--paper-preset", "--seed", "8", "--out", s(d.path()), "--observations", s(&obs), "--threads", threads]);
            d
        })
        .collect();
    for file in ["particles.csv", "trace.csv", "checkpoints/ck_000005.csv"] {
        assert_eq!(fs::read(dirs[0].path().join(file)).unwrap(), fs::read(dirs[1].path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn unsafe_step_is_refused_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let args = clean_setup(dir.path(), "3");
    let out = dir.path().join("flow");
    let mut argv = vec!["flow", "--tau", "0.05"];
    argv.extend(args.iter().map(String::as_str));
    argv.extend(["--out", s(&out), "--observations"]);
    let obs = dir.path().join("observations.csv");
    argv.push(s(&obs));
    let res = wasserflow(&argv);
    assert_eq!(code(&res), 5);
    assert!(!out.exists());
    argv.push("--force");
    ok(&argv);
    assert!(out.join("particles.csv").exists());
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let args = clean_setup(dir.path(), "3");
    let out = dir.path().join("flow");
    let obs = dir.path().join("observations.csv");
    for bad in [["--rho", "-1"], ["--n_particles", "0"], ["--constraint.kind", "cube"], ["--diag_every", "0"]] {
        let mut argv = vec!["flow"];
        argv.extend(args.iter().map(String::as_str));
        argv.extend(["--out", s(&out), "--observations", s(&obs)]);
        argv.extend(bad);
        let res = wasserflow(&argv);
        assert_eq!(code(&res), 2, "{bad:?}: {}", String::from_utf8_lossy(&res.stderr));
        assert!(!out.exists(), "{bad:?}");
    }
}

#[test]
fn irregular_observations_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("observations.csv");
    fs::write(&obs, "t,a_hat,b_hat\n0,2.5,1\n5,2.3,1.4\n11,2.1,1.9\n").unwrap();
    let res = wasserflow(&["flow", "--paper-preset", "--out", s(dir.path()), "--observations", s(&obs)]);
    assert_eq!(code(&res), 3);
    assert!(String::from_utf8_lossy(&res.stderr).contains("irregular"));
}

fn write_belief(dir: &Path, points: &[[f64; 2]], day: f64) {
    let m = ParticleMeasureF64::from_flat(2, points.iter().flatten().copied().collect()).unwrap();
    m.write_csv(fs::File::create(dir.join("particles.csv")).unwrap()).unwrap();
    fs::write(dir.join("particles.meta"), format!("k=3\nseed=0\nrng_counter=3\nday={day}\nperiod=5\n")).unwrap();
}

#[test]
fn predict_dirac_belief_matches_truth() {
    let dir = tempfile::tempdir().unwrap();
    write_belief(dir.path(), &[LAMBDA], 15.0);
    ok(&["predict", "--paper-preset", "--out", s(dir.path()), "--t_grid", "0:5:60"]);
    let rows = csv_rows(&dir.path().join("tstar.csv"));
    assert_eq!(rows.len(), 1);
    let (ours, truth): (f64, f64) = (rows[0][1].parse().unwrap(), rows[0][3].parse().unwrap());
    assert!((ours - truth).abs() <= 1e-3, "{ours} vs {truth}");
    let band = csv_rows(&dir.path().join("prediction.csv"));
    assert_eq!(band[0][..4], ["0", "1.25", "1.25", "1.25"]);
    assert_eq!(band.len(), 13);
    for row in &band {
        assert_eq!(row[1], row[3]);
        let (mean, zt): (f64, f64) = (row[2].parse().unwrap(), row[4].parse().unwrap());
        assert!((mean - zt).abs() < 1e-12);
    }
}

#[test]
fn predict_band_at_day_zero_is_degenerate_for_any_cloud() {
    let dir = tempfile::tempdir().unwrap();
    write_belief(dir.path(), &[[0.01, 0.2], [0.1, 0.01], [0.05, 0.05]], 5.0);
    ok(&["predict", "--paper-preset", "--out", s(dir.path())]);
    let band = csv_rows(&dir.path().join("prediction.csv"));
    assert_eq!(band[0][..4], ["0", "1.25", "1.25", "1.25"]);
}

#[test]
fn predict_rejects_empty_and_unsafe_beliefs() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("particles.csv"), "x1,x2\n").unwrap();
    let res = wasserflow(&["predict", "--paper-preset", "--out", s(dir.path()), "--day", "0"]);
    assert_eq!(code(&res), 3);
    write_belief(dir.path(), &[[-0.1, 0.1]], 5.0);
    assert_eq!(code(&wasserflow(&["predict", "--paper-preset", "--out", s(dir.path())])), 3);
}

#[test]
fn preset_pipeline_is_conservative() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    for cmd in ["simulate", "flow", "predict"] {
        ok(&[cmd, "--paper-preset", "--out", out, "--seed", "0"]);
    }
    let rows = csv_rows(&dir.path().join("tstar.csv"));
    assert_eq!(rows.len(), 10);
    let last = rows.last().unwrap();
    let (ours, truth): (f64, f64) = (last[1].parse().unwrap(), last[3].parse().unwrap());
    assert!(ours <= truth + 1e-3, "{ours} > {truth}");
    assert!(rows[0][2].is_empty() && !rows[1][2].is_empty());
    assert_eq!(csv_rows(&dir.path().join("tstar_rules.csv")).len(), 10);
}

#[test]
fn diagnose_reference_equal_to_particles() {
    let dir = tempfile::tempdir().unwrap();
    let m = ParticleMeasureF64::uniform_box(&[0.0, 0.0], &[0.1, 0.2], 300, 1).unwrap();
    let p = dir.path().join("particles.csv");
    m.write_csv(fs::File::create(&p).unwrap()).unwrap();
    ok(&["diagnose", "--paper-preset", "--out", s(dir.path()), "--reference", s(&p)]);
    let d = diagnostics(&dir.path().join("diagnostics.csv"));
    for key in ["w2_subsample", "gelbrich_bound", "mean_gap", "lipschitz_gap"] {
        assert_eq!(d[key], 0.0, "{key}");
    }
    assert!(d["bures_gap"] < 1e-8);
}

#[test]
fn diagnose_preset_reports_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    ok(&["simulate", "--paper-preset", "--out", out, "--horizon", "20"]);
    ok(&["flow", "--paper-preset", "--out", out, "--n_particles", "300"]);
    let res = ok(&["diagnose", "--paper-preset", "--out", out]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("ball_radius"));
    let d = diagnostics(&dir.path().join("diagnostics.csv"));
    let expected = (0.12f64 * 4.0 * 0.01).sqrt();
    assert!((d["ball_radius"] - expected).abs() < 1e-15);
    assert_eq!((d["alpha"], d["c"], d["tau_max"], d["tau_valid"]), (25.0, 100.0, 0.02, 1.0));
    assert!(d["gelbrich_bound"] <= d["w2_subsample"]);
    assert!(d["w2_subsample"] > 0.0);
}

#[test]
fn diagnose_gelbrich_below_w2_against_cloud_reference() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("particles.csv");
    let r = dir.path().join("reference.csv");
    ParticleMeasureF64::uniform_box(&[0.0, 0.0], &[0.1, 0.2], 300, 1).unwrap().write_csv(fs::File::create(&p).unwrap()).unwrap();
    ParticleMeasureF64::uniform_box(&[0.02, 0.05], &[0.04, 0.1], 150, 2).unwrap().write_csv(fs::File::create(&r).unwrap()).unwrap();
    ok(&["diagnose", "--paper-preset", "--out", s(dir.path()), "--reference", s(&r)]);
    let d = diagnostics(&dir.path().join("diagnostics.csv"));
    assert!(d["gelbrich_bound"] <= d["w2_subsample"]);
}

#[test]
fn diagnose_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("particles.csv");
    let r = dir.path().join("reference.csv");
    fs::write(&p, "x1,x2\n0.1,0.2\n").unwrap();
    fs::write(&r, "x1\n0.1\n").unwrap();
    let res = wasserflow(&["diagnose", "--paper-preset", "--out", s(dir.path()), "--reference", s(&r)]);
    assert_eq!(code(&res), 3);
}

#[test]
fn csv_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    ok(&["simulate", "--paper-preset", "--out", out, "--horizon", "20"]);
    ok(&["flow", "--paper-preset", "--out", out, "--n_particles", "100"]);
    let p = dir.path().join("particles.csv");
    let first = fs::read(&p).unwrap();
    let m = ParticleMeasureF64::read_csv(first.as_slice()).unwrap();
    let mut again = Vec::new();
    m.write_csv(&mut again).unwrap();
    assert_eq!(first, again);
    let obs_bytes = fs::read(dir.path().join("observations.csv")).unwrap();
    let obs: Vec<wasserflow::pdm::Observation<f64>> = pdm_io::read_observations(obs_bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    pdm_io::write_observations(&obs, &mut again).unwrap();
    assert_eq!(obs_bytes, again);
}
