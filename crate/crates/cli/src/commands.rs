//! The four subcommands. Each one parses and validates its whole
//! configuration and every input file before writing anything.

use std::cell::Cell;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use wasserflow::flow::{self, lipschitz_norm_gap, CheckpointMeta, FlowConfig, InvalidObservationPolicy, StepBoundReport};
use wasserflow::pdm::{self, io as pdm_io, CaseStudy, DegradationModel, MaintenanceRule, Observation};
use wasserflow::rng::subsample_indices;
use wasserflow::transport::{bures_distance, gelbrich_lower_bound, w2_exact};
use wasserflow::{MatrixF64, ObjectiveF64, ParticleMeasureF64};

use crate::config::{CliError, CliResult, Config};

fn require_file(path: &Path, key: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("`{key}`: input file {} does not exist", path.display())))
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn read_particles(path: &Path) -> CliResult<ParticleMeasureF64> {
    ParticleMeasureF64::read_csv(open(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

fn read_meta(csv: &Path) -> CliResult<Option<CheckpointMeta>> {
    let path = meta_path(csv);
    if !path.is_file() {
        return Ok(None);
    }
    CheckpointMeta::read(open(&path)?)
        .map(Some)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn meta_value(meta: Option<&CheckpointMeta>, key: &str) -> CliResult<Option<f64>> {
    meta.and_then(|m| m.extra.get(key))
        .map(|v| v.parse::<f64>().map_err(|_| CliError::data(format!("checkpoint meta: invalid `{key}` value `{v}`"))))
        .transpose()
}

fn write_particles(m: &ParticleMeasureF64, meta: &CheckpointMeta, csv: &Path) -> CliResult<()> {
    let mut w = create(csv)?;
    m.write_csv(&mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;
    let mut w = create(&meta_path(csv))?;
    meta.write(&mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;
    Ok(())
}

fn seed(cfg: &Config) -> CliResult<u64> {
    cfg.req("seed")
}

/// Ground truth and experiment parameters; flow fields keep the preset
/// values unless the caller overwrites them.
fn experiment(cfg: &Config) -> CliResult<CaseStudy<f64>> {
    let model = DegradationModel {
        a0: cfg.req("a0")?,
        b0: cfg.req("b0")?,
        lambda: cfg.req_pair("lambda")?,
        zeta_min: cfg.req("zeta_min")?,
        period: cfg.req("period")?,
    };
    Ok(CaseStudy {
        model,
        r: cfg.req("r")?,
        x0: cfg.req_pair("x0")?,
        dt: cfg.req("dt")?,
        horizon: cfg.req("horizon")?,
        eps_half_width: cfg.req("eps_half_width")?,
        observations: cfg.req("days")?,
        ..CaseStudy::paper_preset()
    })
}

pub fn simulate(cfg: &Config) -> CliResult<()> {
    let study = experiment(cfg)?;
    let seed = seed(cfg)?;
    study.validate_experiment()?;
    let obs = study.simulate_observations(seed)?;

    let out = cfg.out_dir();
    create_dir(&out)?;
    let path = out.join("observations.csv");
    let mut w = create(&path)?;
    pdm_io::write_observations(&obs, &mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;
    let first = obs[0].y_hat;
    println!("wrote {} observations to {}", obs.len(), path.display());
    println!("day 0 estimate: a = {}, b = {}", first[0], first[1]);
    Ok(())
}

fn objective(cfg: &Config, period: f64, with_truth: bool) -> CliResult<ObjectiveF64> {
    let theta_star = if with_truth { cfg.pair("lambda")?.map(|l| l.to_vec()) } else { None };
    let obj = ObjectiveF64::new(
        MatrixF64::from_diag(&[-period, period]),
        cfg.req("rho")?,
        theta_star,
        cfg.req("sigma_w2")?,
    )?;
    Ok(obj)
}

fn print_report(r: &StepBoundReport<f64>) {
    println!("step bounds:");
    println!("  alpha              = {}", r.alpha);
    println!("  C                  = {}", r.c);
    println!("  sigma2             = {}", r.sigma2);
    println!("  eta                = {}", r.eta);
    println!("  tau                = {}", r.tau);
    println!("  tau_max            = {}", r.tau_max);
    println!("  tau_max_simplified = {}", r.tau_max_simplified);
    println!("  ball_radius        = {}", r.ball_radius);
    println!("  per_step_rate      = {}", r.per_step_rate);
    println!("  tau_valid          = {}", r.tau_valid);
}

pub fn flow(cfg: &Config) -> CliResult<()> {
    let seed = seed(cfg)?;
    let force = cfg.flag("force")?;
    let obs_path = cfg.path_or("observations", "observations.csv");
    require_file(&obs_path, "observations")?;
    let resume = cfg.str("resume").map(PathBuf::from);
    if let Some(path) = &resume {
        require_file(path, "resume")?;
    }
    let tau: f64 = cfg.req("tau")?;
    let perturb_std: f64 = cfg.req("perturb_std")?;
    let on_invalid = match cfg.str("on_invalid").unwrap_or("abort") {
        "abort" => InvalidObservationPolicy::Abort,
        "skip" => InvalidObservationPolicy::Skip,
        other => return Err(CliError::config(format!("unknown on_invalid `{other}` (abort | skip)"))),
    };
    let checkpoint_every: usize = cfg.req("checkpoint_every")?;

    let obs: Vec<Observation<f64>> = pdm_io::read_observations(open(&obs_path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", obs_path.display())))?;
    let stream = pdm::difference_stream(&obs)?;
    let period = stream.period;
    let total = stream.increments.len();
    let max_iters = cfg.get::<usize>("max_iters")?.unwrap_or(total);
    let obj = objective(cfg, period, true)?;

    let report = StepBoundReport::for_objective(&obj, tau);
    if !report.tau_valid && !force {
        return Err(wasserflow::Error::UnsafeStep { tau, tau_max: report.tau_max }.into());
    }

    let (m0, start) = match &resume {
        Some(path) => {
            let meta = read_meta(path)?
                .ok_or_else(|| CliError::config(format!("resume: {} has no .meta sidecar", path.display())))?;
            if meta.seed != seed {
                return Err(CliError::config(format!(
                    "resume: checkpoint was written with seed {}, run uses seed {seed}",
                    meta.seed
                )));
            }
            if meta.k > total {
                return Err(CliError::data(format!("resume: checkpoint at k = {} but only {total} observations", meta.k)));
            }
            (read_particles(path)?, meta.k)
        }
        None => {
            let lo = cfg.req_pair("init_lo")?;
            let hi = cfg.req_pair("init_hi")?;
            let n: usize = cfg.req("n_particles")?;
            let m0 = ParticleMeasureF64::uniform_box(&lo, &hi, n, seed).map_err(|e| CliError::config(e.to_string()))?;
            (m0, 0)
        }
    };

    let mut fcfg = FlowConfig::new(tau, max_iters.max(1), seed, cfg.constraint(m0.dim())?);
    fcfg.perturb_std = perturb_std;
    fcfg.diag_every = cfg.req("diag_every")?;
    fcfg.diag_subsample = cfg.req("diag_subsample")?;
    fcfg.diag_full = cfg.flag("diag_full")?;
    fcfg.start_iter = start;
    fcfg.force = force;
    fcfg.on_invalid = on_invalid;
    fcfg.validate()?;
    if m0.dim() != obj.dim() {
        return Err(wasserflow::Error::DimensionMismatch { expected: obj.dim(), got: m0.dim() }.into());
    }

    let out = cfg.out_dir();
    let ck_dir = cfg.path_or("checkpoints", "checkpoints");
    create_dir(&out)?;
    if checkpoint_every > 0 {
        create_dir(&ck_dir)?;
    }
    let t0 = obs[0].t;
    // Observations consumed so far; day of iterate k is the time of the last
    // observation entering it.
    let pulled = Cell::new(start);
    let meta_for = |k: usize, consumed: usize| {
        CheckpointMeta::new(k, seed).with("day", t0 + period * consumed as f64).with("period", period)
    };
    let checkpoint = |k: usize, m: &ParticleMeasureF64, consumed: usize| -> CliResult<()> {
        write_particles(m, &meta_for(k, consumed), &ck_dir.join(format!("ck_{k:06}.csv")))
    };
    if checkpoint_every > 0 && resume.is_none() {
        checkpoint(0, &m0, 0)?;
    }
    let budget = max_iters.saturating_sub(start);
    let increments = stream.increments.into_iter().skip(start).take(budget).inspect(|_| pulled.set(pulled.get() + 1));
    let mut ck_error = None;
    let (last, trace) = flow::run_observed(&m0, &obj, increments, &fcfg, |k, m| {
        if checkpoint_every > 0 && k % checkpoint_every == 0 {
            if let Err(e) = checkpoint(k, m, pulled.get()) {
                ck_error = Some(e);
                return Err(wasserflow::Error::Io("checkpoint write failed".into()));
            }
        }
        Ok(())
    })
    .map_err(|e| ck_error.take().unwrap_or_else(|| e.into()))?;

    write_particles(&last, &meta_for(trace.final_k, pulled.get()), &out.join("particles.csv"))?;
    let mut w = create(&out.join("trace.csv"))?;
    trace.write_csv(last.dim(), &mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;

    print_report(&report);
    println!("iterations: {} (from k = {start})", trace.final_k - start);
    if !trace.skipped.is_empty() {
        println!("skipped malformed observations at k = {:?}", trace.skipped);
    }
    let mean = last.mean();
    println!("final mean: ({}, {})", mean[0], mean[1]);
    println!("wrote {}", out.join("particles.csv").display());
    Ok(())
}

struct Belief {
    day: f64,
    measure: ParticleMeasureF64,
}

fn checkpoint_beliefs(dir: &Path, final_k: Option<usize>) -> CliResult<Vec<Belief>> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(Vec::new());
    };
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("ck_"))
        })
        .collect();
    files.sort();
    let mut beliefs = Vec::new();
    for path in files {
        let Some(meta) = read_meta(&path)? else { continue };
        if final_k.is_some_and(|fk| meta.k >= fk) {
            continue;
        }
        let day = meta_value(Some(&meta), "day")?
            .ok_or_else(|| CliError::data(format!("{}: meta lacks `day`", path.display())))?;
        beliefs.push(Belief { day, measure: read_particles(&path)? });
    }
    Ok(beliefs)
}

pub fn predict(cfg: &Config) -> CliResult<()> {
    let particles_path = cfg.path_or("particles", "particles.csv");
    require_file(&particles_path, "particles")?;
    let sibling = |name: &str| particles_path.parent().unwrap_or(Path::new(".")).join(name);
    let ck_dir = cfg.str("checkpoints").map(PathBuf::from).unwrap_or_else(|| sibling("checkpoints"));
    let obs_path = cfg.str("observations").map(PathBuf::from).unwrap_or_else(|| sibling("observations.csv"));
    if cfg.has("observations") {
        require_file(&obs_path, "observations")?;
    }
    let meta = read_meta(&particles_path)?;
    let day = match cfg.get::<f64>("day")? {
        Some(d) => d,
        None => meta_value(meta.as_ref(), "day")?.ok_or_else(|| {
            CliError::config(format!("{} has no .meta with its day; set `day`", particles_path.display()))
        })?,
    };
    let period = match cfg.get::<f64>("period")? {
        Some(p) => p,
        None => meta_value(meta.as_ref(), "period")?.unwrap_or(1.0),
    };
    let lambda = cfg.pair("lambda")?;
    let model = DegradationModel::new(
        cfg.req("a0")?,
        cfg.req("b0")?,
        lambda.unwrap_or([0.0, 0.0]),
        cfg.req("zeta_min")?,
        period,
    )
    .map_err(|e| CliError::config(e.to_string()))?;
    let rule = cfg.rule()?;
    let grid = cfg.t_grid()?;
    let (p_lo, p_hi): (f64, f64) = (cfg.req("band.p_lo")?, cfg.req("band.p_hi")?);
    for (name, p) in [("band.p_lo", p_lo), ("band.p_hi", p_hi)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::config(format!("`{name}` must lie in [0, 1], got {p}")));
        }
    }

    let last = read_particles(&particles_path)?;
    if last.dim() != 2 {
        return Err(wasserflow::Error::DimensionMismatch { expected: 2, got: last.dim() }.into());
    }
    let mut beliefs = checkpoint_beliefs(&ck_dir, meta.as_ref().map(|m| m.k))?;
    beliefs.push(Belief { day, measure: last });
    for b in &beliefs {
        if let Some(i) = b.measure.as_flat().iter().position(|&x| x < 0.0) {
            return Err(CliError::data(format!(
                "belief at day {} has a particle outside the orthant (particle {})",
                b.day,
                i / 2
            )));
        }
    }
    let obs: Option<Vec<Observation<f64>>> = if obs_path.is_file() {
        Some(pdm_io::read_observations(open(&obs_path)?).map_err(|e| CliError::data(format!("{}: {e}", obs_path.display())))?)
    } else {
        None
    };

    let final_belief = &beliefs.last().expect("final belief pushed").measure;
    let band = pdm::predict_damping_band(final_belief, &model, &grid, p_lo, p_hi)?;
    let zeta_true: Vec<Option<f64>> = grid.iter().map(|&t| lambda.map(|_| model.zeta(t))).collect();
    let truth = lambda.map(|_| model.true_maintenance_time().days);
    let mut tstar = Vec::with_capacity(beliefs.len());
    let mut rules = Vec::with_capacity(beliefs.len());
    for b in &beliefs {
        let at = |r| pdm::suggested_maintenance_time(&b.measure, &model, r).map(|t| t.days);
        let ls = match &obs {
            Some(obs) => {
                let seen: Vec<_> = obs.iter().copied().filter(|o| o.t <= b.day + 1e-9).collect();
                if seen.len() >= 2 && seen.iter().any(|o| o.t > 0.0) {
                    Some(pdm::ls_baseline(&seen, model.a0, model.b0, model.zeta_min)?.t_star.days)
                } else {
                    None
                }
            }
            None => None,
        };
        tstar.push(pdm_io::TstarRow { day: b.day, ours: at(rule)?, ls, truth });
        rules.push(pdm_io::RulesRow {
            day: b.day,
            percentile: at(MaintenanceRule::Percentile(cfg.req("rule.p")?))?,
            mean: at(MaintenanceRule::Mean)?,
            chance: at(MaintenanceRule::Chance(cfg.req("rule.alpha")?))?,
        });
    }

    let out = cfg.out_dir();
    create_dir(&out)?;
    let mut w = create(&out.join("prediction.csv"))?;
    pdm_io::write_prediction(&band, &zeta_true, &mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;
    let mut w = create(&out.join("tstar.csv"))?;
    pdm_io::write_tstar(&tstar, &mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;
    let mut w = create(&out.join("tstar_rules.csv"))?;
    pdm_io::write_rules(&rules, &mut w)?;
    w.flush().map_err(wasserflow::Error::from)?;

    let last_row = tstar.last().expect("at least one belief");
    println!("day {}: suggested maintenance at day {} ({rule:?})", last_row.day, last_row.ours);
    if let Some(ls) = last_row.ls {
        println!("  least-squares baseline: day {ls}");
    }
    if let Some(t) = truth {
        println!("  true maintenance time: day {t}");
    }
    println!("wrote {}, {}, {}", out.join("prediction.csv").display(), out.join("tstar.csv").display(), out.join("tstar_rules.csv").display());
    Ok(())
}

pub fn diagnose(cfg: &Config) -> CliResult<()> {
    let seed = seed(cfg)?;
    let particles_path = cfg.path_or("particles", "particles.csv");
    require_file(&particles_path, "particles")?;
    let reference_path = cfg.str("reference").map(PathBuf::from);
    if let Some(p) = &reference_path {
        require_file(p, "reference")?;
    }
    let lambda = cfg.pair("lambda")?;
    if reference_path.is_none() && lambda.is_none() {
        return Err(CliError::config("diagnose needs `reference` or `lambda`"));
    }
    let meta = read_meta(&particles_path)?;
    let period = match cfg.get::<f64>("period")? {
        Some(p) => p,
        None => meta_value(meta.as_ref(), "period")?
            .ok_or_else(|| CliError::config("missing required key `period`"))?,
    };
    let tau: f64 = cfg.req("tau")?;
    let obj = objective(cfg, period, false)?;
    let report = StepBoundReport::for_objective(&obj, tau);
    let subsample: usize = cfg.req("diag_subsample")?;
    if subsample == 0 {
        return Err(CliError::config("`diag_subsample` must be >= 1"));
    }
    let full = cfg.flag("diag_full")?;

    let m = read_particles(&particles_path)?;
    let reference = match &reference_path {
        Some(p) => read_particles(p)?,
        None => ParticleMeasureF64::dirac(&lambda.expect("checked above"))?,
    };
    if reference.dim() != m.dim() {
        return Err(wasserflow::Error::DimensionMismatch { expected: m.dim(), got: reference.dim() }.into());
    }

    let n = m.len();
    let size = if full { n } else { subsample.min(n) };
    let (sub, ref_sub) = if reference.len() == 1 {
        let idx = subsample_indices(seed, 0, n, size);
        (m.select(&idx)?, ParticleMeasureF64::replicated(reference.point(0), size)?)
    } else if reference.len() == n {
        let idx = subsample_indices(seed, 0, n, size);
        (m.select(&idx)?, reference.select(&idx)?)
    } else {
        let size = size.min(reference.len());
        (
            m.select(&subsample_indices(seed, 0, n, size))?,
            reference.select(&subsample_indices(seed, 1, reference.len(), size))?,
        )
    };
    let w2 = w2_exact(&sub, &ref_sub)?.0;
    // The bound is a theorem; the two quantities are computed along
    // different routes, so allow only rounding-level excess.
    let mut gelbrich = gelbrich_lower_bound(&sub, &ref_sub)?;
    if gelbrich > w2 && gelbrich - w2 <= 1e-12 * w2.max(1.0) {
        gelbrich = w2;
    }
    let mean_gap = m.mean().iter().zip(reference.mean()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let bures_gap = bures_distance(&m.covariance(), &reference.covariance())?;
    let lipschitz_gap = lipschitz_norm_gap(&m, &reference, |x| x.iter().map(|v| v * v).sum::<f64>().sqrt());

    print_report(&report);
    println!("gaps to reference ({} of {} particles for W2):", sub.len(), n);
    println!("  w2_subsample   = {w2}");
    println!("  gelbrich_bound = {gelbrich}");
    println!("  mean_gap       = {mean_gap}");
    println!("  bures_gap      = {bures_gap}");
    println!("  lipschitz_gap  = {lipschitz_gap}");

    let out = cfg.out_dir();
    create_dir(&out)?;
    let path = out.join("diagnostics.csv");
    let mut w = create(&path)?;
    let rows = [
        ("alpha", report.alpha),
        ("c", report.c),
        ("sigma2", report.sigma2),
        ("eta", report.eta),
        ("tau", report.tau),
        ("tau_max", report.tau_max),
        ("tau_max_simplified", report.tau_max_simplified),
        ("ball_radius", report.ball_radius),
        ("per_step_rate", report.per_step_rate),
        ("tau_valid", if report.tau_valid { 1.0 } else { 0.0 }),
        ("w2_subsample", w2),
        ("gelbrich_bound", gelbrich),
        ("mean_gap", mean_gap),
        ("bures_gap", bures_gap),
        ("lipschitz_gap", lipschitz_gap),
    ];
    let io = |e: std::io::Error| CliError::data(format!("{}: {e}", path.display()));
    writeln!(w, "quantity,value").map_err(io)?;
    for (name, value) in rows {
        writeln!(w, "{name},{value}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    println!("wrote {}", path.display());
    Ok(())
}
