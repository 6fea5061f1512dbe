//! Flat `key = value` configuration.
//!
//! Layers, lowest precedence first: built-in defaults, `--paper-preset`,
//! the `--config` file, `--key value` overrides, and the dedicated flags.
//! Vectors are comma-separated (`lambda = 0.0333,0.0833`); `#` starts a
//! comment. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use wasserflow::pdm::{CaseStudy, MaintenanceRule};
use wasserflow::{ConvexSetF64, ErrorKind};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed (integer)"),
    ("out", "output directory"),
    ("force", "run even if tau is outside the admissible interval (true/false)"),
    ("threads", "worker threads for parallel sweeps"),
    ("a0", "initial damping coefficient"),
    ("b0", "initial stiffness coefficient"),
    ("lambda", "true degradation rates λ₁,λ₂ (enables ground-truth columns)"),
    ("zeta_min", "safe damping-ratio threshold"),
    ("period", "days between measurements T"),
    ("r", "reference of each identification experiment"),
    ("x0", "initial plant state z,ż"),
    ("dt", "sampling period (s)"),
    ("horizon", "length of each identification experiment (s)"),
    ("eps_half_width", "half-width of the uniform reference noise"),
    ("days", "number of measurement days 0, T, 2T, …"),
    ("n_particles", "belief size N"),
    ("init_lo", "lower corner of the uniform initial belief"),
    ("init_hi", "upper corner of the uniform initial belief"),
    ("rho", "variance weight ρ"),
    ("tau", "step size τ"),
    ("perturb_std", "std of the Gaussian gradient perturbation"),
    ("sigma_w2", "second moment of the differenced measurement noise"),
    ("max_iters", "iteration cap (default: one per observation difference)"),
    ("diag_every", "trace stride"),
    ("diag_subsample", "particles used for W2 diagnostics"),
    ("diag_full", "use every particle for W2 diagnostics (true/false)"),
    ("checkpoint_every", "checkpoint stride (0 disables)"),
    ("on_invalid", "malformed observation policy: abort | skip"),
    ("constraint.kind", "orthant | box | halfspace | ball | all"),
    ("constraint.lo", "box lower corner"),
    ("constraint.hi", "box upper corner"),
    ("constraint.normal", "halfspace normal a in {x : a·x <= b}"),
    ("constraint.offset", "halfspace offset b"),
    ("constraint.center", "ball center"),
    ("constraint.radius", "ball radius"),
    ("resume", "checkpoint CSV to resume from (its .meta must sit next to it)"),
    ("observations", "observations CSV (default <out>/observations.csv)"),
    ("particles", "particle CSV (default <out>/particles.csv)"),
    ("checkpoints", "checkpoint directory (default <out>/checkpoints)"),
    ("reference", "reference particle CSV for diagnose (default δ at lambda)"),
    ("day", "day of the particle file when it has no .meta"),
    ("rule", "maintenance rule: percentile | mean | chance"),
    ("rule.p", "quantile of the percentile rule"),
    ("rule.alpha", "risk level of the chance rule"),
    ("t_grid", "prediction grid start:step:end (days)"),
    ("band.p_lo", "lower band quantile"),
    ("band.p_hi", "upper band quantile"),
];

const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "."),
    ("force", "false"),
    ("r", "1"),
    ("x0", "0,0"),
    ("perturb_std", "0"),
    ("sigma_w2", "0"),
    ("diag_every", "1"),
    ("diag_subsample", "256"),
    ("diag_full", "false"),
    ("checkpoint_every", "1"),
    ("on_invalid", "abort"),
    ("constraint.kind", "orthant"),
    ("rule", "percentile"),
    ("rule.p", "0.1"),
    ("rule.alpha", "0.1"),
    ("t_grid", "0:1:60"),
    ("band.p_lo", "0.1"),
    ("band.p_hi", "0.9"),
];

/// Process exit codes.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const UNSAFE_STEP: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: exit::CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: exit::DATA, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<wasserflow::Error> for CliError {
    fn from(e: wasserflow::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Config => exit::CONFIG,
            ErrorKind::Data => exit::DATA,
            ErrorKind::Numerical => exit::NUMERICAL,
            ErrorKind::UnsafeStep => exit::UNSAFE_STEP,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `key = value` lines.
pub fn parse_flat(text: &str, origin: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("{origin}:{}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Turns trailing `--key value` / `--flag` arguments into pairs.
pub fn parse_overrides(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter().peekable();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::config(format!("unexpected argument `{arg}`; overrides look like `--key value`")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        match key {
            "force" | "paper-preset" => out.push((key.to_string(), "true".into())),
            _ => {
                let value = it.next().ok_or_else(|| CliError::config(format!("`--{key}` needs a value")))?;
                out.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(out)
}

/// Key/value pairs of the maintenance-study preset.
pub fn preset_pairs() -> Vec<(String, String)> {
    let s = CaseStudy::<f64>::paper_preset();
    let pair = |v: [f64; 2]| format!("{},{}", v[0], v[1]);
    let m = &s.model;
    [
        ("a0", m.a0.to_string()),
        ("b0", m.b0.to_string()),
        ("lambda", pair(m.lambda)),
        ("zeta_min", m.zeta_min.to_string()),
        ("period", m.period.to_string()),
        ("r", s.r.to_string()),
        ("x0", pair(s.x0)),
        ("dt", s.dt.to_string()),
        ("horizon", s.horizon.to_string()),
        ("eps_half_width", s.eps_half_width.to_string()),
        ("days", s.observations.to_string()),
        ("n_particles", s.particles.to_string()),
        ("init_lo", pair(s.init_lo)),
        ("init_hi", pair(s.init_hi)),
        ("rho", s.rho.to_string()),
        ("tau", s.tau.to_string()),
        ("perturb_std", s.perturb_std.to_string()),
        ("sigma_w2", s.sigma_w2.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Applies `pairs` on top of the current values, rejecting unknown keys.
    pub fn apply(&mut self, pairs: Vec<(String, String)>, origin: &str) -> CliResult<()> {
        for (k, v) in pairs {
            if !KEYS.iter().any(|(key, _)| *key == k) {
                return Err(CliError::config(format!("{origin}: unknown key `{k}`")));
            }
            self.values.insert(k, v);
        }
        Ok(())
    }

    /// Builds the layered configuration.
    pub fn load(
        file: Option<&Path>,
        preset: bool,
        overrides: &[String],
        flags: Vec<(String, String)>,
    ) -> CliResult<Self> {
        let mut cfg = Config::default();
        let defaults = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        cfg.apply(defaults, "defaults")?;
        let mut overrides = parse_overrides(overrides)?;
        let preset = preset || overrides.iter().any(|(k, v)| k == "paper-preset" && v == "true");
        overrides.retain(|(k, _)| k != "paper-preset");
        if preset {
            cfg.apply(preset_pairs(), "preset")?;
        }
        // `--config` may also arrive among the trailing overrides.
        let mut file = file.map(Path::to_path_buf);
        overrides.retain(|(k, v)| {
            if k == "config" {
                file = Some(PathBuf::from(v));
                false
            } else {
                true
            }
        });
        if let Some(path) = file {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply(parse_flat(&text, &path.display().to_string())?, &path.display().to_string())?;
        }
        cfg.apply(overrides, "command line")?;
        cfg.apply(flags, "command line")?;
        Ok(cfg)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.str(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::config(format!("invalid value `{v}` for `{key}`"))))
            .transpose()
    }

    pub fn req<T: FromStr>(&self, key: &str) -> CliResult<T> {
        self.get(key)?.ok_or_else(|| {
            CliError::config(format!("missing required key `{key}` (set it in --config, pass --{key}, or use --paper-preset)"))
        })
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }

    pub fn vec(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| CliError::config(format!("invalid vector `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn pair(&self, key: &str) -> CliResult<Option<[f64; 2]>> {
        match self.vec(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some([v[0], v[1]])),
            Some(v) => Err(CliError::config(format!("`{key}` needs 2 components, got {}", v.len()))),
        }
    }

    pub fn req_pair(&self, key: &str) -> CliResult<[f64; 2]> {
        self.pair(key)?.ok_or_else(|| CliError::config(format!("missing required key `{key}`")))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.str("out").unwrap_or("."))
    }

    /// `key` if set, else `<out>/<default_name>`.
    pub fn path_or(&self, key: &str, default_name: &str) -> PathBuf {
        self.str(key).map(PathBuf::from).unwrap_or_else(|| self.out_dir().join(default_name))
    }

    pub fn rule(&self) -> CliResult<MaintenanceRule> {
        match self.str("rule").unwrap_or("percentile") {
            "percentile" => Ok(MaintenanceRule::Percentile(self.req("rule.p")?)),
            "mean" => Ok(MaintenanceRule::Mean),
            "chance" => Ok(MaintenanceRule::Chance(self.req("rule.alpha")?)),
            other => Err(CliError::config(format!("unknown rule `{other}` (percentile | mean | chance)"))),
        }
    }

    pub fn t_grid(&self) -> CliResult<Vec<f64>> {
        let spec = self.str("t_grid").unwrap_or("0:1:60");
        let parts: Vec<f64> = spec
            .split(':')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| CliError::config(format!("invalid t_grid `{spec}`")))?;
        let [start, step, end] = parts[..] else {
            return Err(CliError::config(format!("t_grid `{spec}` must be start:step:end")));
        };
        if !(start >= 0.0 && step > 0.0 && end >= start) || !end.is_finite() {
            return Err(CliError::config(format!("t_grid `{spec}` needs 0 <= start <= end and step > 0")));
        }
        let n = ((end - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + step * i as f64).collect())
    }

    pub fn constraint(&self, dim: usize) -> CliResult<ConvexSetF64> {
        let vec_of = |key: &str| -> CliResult<Vec<f64>> {
            let v = self.vec(key)?.ok_or_else(|| CliError::config(format!("missing required key `{key}`")))?;
            if v.len() != dim {
                return Err(CliError::config(format!("`{key}` needs {dim} components, got {}", v.len())));
            }
            Ok(v)
        };
        let set = match self.str("constraint.kind").unwrap_or("orthant") {
            "orthant" => ConvexSetF64::nonneg_orthant(dim),
            "all" => ConvexSetF64::all(dim),
            "box" => ConvexSetF64::boxed(vec_of("constraint.lo")?, vec_of("constraint.hi")?),
            "halfspace" => ConvexSetF64::halfspace(vec_of("constraint.normal")?, self.req("constraint.offset")?),
            "ball" => ConvexSetF64::ball(vec_of("constraint.center")?, self.req("constraint.radius")?),
            other => {
                return Err(CliError::config(format!(
                    "unknown constraint.kind `{other}` (orthant | box | halfspace | ball | all)"
                )))
            }
        };
        set.map_err(|e| CliError::config(e.to_string()))
    }
}
