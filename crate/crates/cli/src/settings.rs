//! Config-file parsing and flag resolution. Precedence: built-in defaults,
//! then the config file, then explicit flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use splitdoor::multiplicity::PiEstimator;
use splitdoor::pipeline::{InputFormat, RunConfig};
use splitdoor::sensitivity::{SensitivityConfig, SurfaceEstimator};

use crate::cli::{AnalysisArgs, SensitivityFlags};
use crate::CliError;

/// Flat `key = value` file: one entry per line, `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "config file {} line {}: expected `key = value`, got `{line}`",
                path.display(),
                idx + 1
            )));
        };
        map.insert(key.trim().to_ascii_lowercase(), value.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("bad value for `{key}`: {e}")))
}

fn parsed_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|v| parsed(key, v.trim()))
        .collect()
}

pub struct Settings {
    pub run: RunConfig,
    pub out: PathBuf,
}

/// Merge flags over the config file over defaults into a validated run
/// configuration.
pub fn resolve(args: &AnalysisArgs) -> Result<Settings, CliError> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let file_get = |key: &str| file.get(key).map(String::as_str);

    let input: PathBuf = match (&args.input, file_get("input")) {
        (Some(flag), _) => flag.clone(),
        (None, Some(value)) => PathBuf::from(value),
        (None, None) => return Err(CliError::Usage("--input is required".into())),
    };
    let format: InputFormat = match (&args.format, file_get("format")) {
        (Some(flag), _) => parsed("format", flag)?,
        (None, Some(value)) => parsed("format", value)?,
        (None, None) => return Err(CliError::Usage("--format is required (events|panel)".into())),
    };

    let mut run = RunConfig::new(input, format);
    if let Some(v) = args.tau.map(Ok).or_else(|| file_get("tau").map(|v| parsed("tau", v))) {
        run.tau = v?;
    }
    if let Some(v) = args
        .alpha
        .clone()
        .map(Ok)
        .or_else(|| file_get("alpha").map(|v| parsed_list("alpha", v)))
    {
        run.alphas = v?;
    }
    if let Some(v) = args
        .resamples
        .map(Ok)
        .or_else(|| file_get("resamples").map(|v| parsed("resamples", v)))
    {
        run.n_resamples = v?;
    }
    if let Some(v) = args.seed.map(Ok).or_else(|| file_get("seed").map(|v| parsed("seed", v))) {
        run.seed = v?;
    }
    if let Some(v) = args
        .min_peak
        .map(Ok)
        .or_else(|| file_get("min_peak").map(|v| parsed("min_peak", v)))
    {
        run.min_peak = v?;
    }
    if let Some(v) = args
        .pi_estimator
        .as_deref()
        .or_else(|| file_get("pi_estimator"))
    {
        run.pi_estimator = v
            .parse::<PiEstimator>()
            .map_err(|e| CliError::Usage(format!("bad value for `pi_estimator`: {e}")))?;
    }
    if let Some(v) = args.bins.map(Ok).or_else(|| file_get("bins").map(|v| parsed("bins", v))) {
        run.bins = v?;
    }
    if let Some(v) = args
        .lambda
        .map(Ok)
        .or_else(|| file_get("lambda").map(|v| parsed("lambda", v)))
    {
        run.lambda = v?;
    }
    if let Some(v) = args.z.map(Ok).or_else(|| file_get("z").map(|v| parsed("z", v))) {
        run.z = v?;
    }
    if let Some(v) = args
        .threads
        .map(Ok)
        .or_else(|| file_get("threads").map(|v| parsed("threads", v)))
    {
        run.threads = Some(v?);
    }
    run.traffic_weighted = args.traffic_weighted
        || file_get("traffic_weighted").is_some_and(|v| v.eq_ignore_ascii_case("true"));

    run.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let out: PathBuf = match (&args.out, file_get("out")) {
        (Some(flag), _) => flag.clone(),
        (None, Some(value)) => PathBuf::from(value),
        (None, None) => return Err(CliError::Usage("--out is required".into())),
    };

    Ok(Settings { run, out })
}

pub struct SensitivitySettings {
    pub kappas: Vec<f64>,
    pub c1_grid: Vec<f64>,
    pub c2_grid: Vec<f64>,
    pub standardize: bool,
    pub estimator: SurfaceEstimator,
}

impl SensitivitySettings {
    pub fn config_for(&self, kappa: f64, seed: u64) -> SensitivityConfig {
        SensitivityConfig {
            c1_grid: self.c1_grid.clone(),
            c2_grid: self.c2_grid.clone(),
            kappa,
            seed,
            standardize: self.standardize,
        }
    }
}

pub fn resolve_sensitivity(
    flags: &SensitivityFlags,
    file: &BTreeMap<String, String>,
) -> Result<SensitivitySettings, CliError> {
    let file_get = |key: &str| file.get(key).map(String::as_str);
    let kappas = match (&flags.kappa, file_get("kappa")) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parsed_list("kappa", v)?,
        (None, None) => vec![1.0],
    };
    let default_grid = vec![-1.0, -0.5, 0.0, 0.5, 1.0];
    let c1_grid = match (&flags.c1_grid, file_get("c1_grid")) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parsed_list("c1_grid", v)?,
        (None, None) => default_grid.clone(),
    };
    let c2_grid = match (&flags.c2_grid, file_get("c2_grid")) {
        (Some(v), _) => v.clone(),
        (None, Some(v)) => parsed_list("c2_grid", v)?,
        (None, None) => default_grid,
    };
    let standardize = !(flags.raw || file_get("raw").is_some_and(|v| v.eq_ignore_ascii_case("true")));
    let estimator = match flags
        .surface_estimator
        .as_deref()
        .or_else(|| file_get("surface_estimator"))
    {
        Some("ols") => SurfaceEstimator::OlsSlope,
        Some("ratio") => SurfaceEstimator::RatioOfSums,
        Some(other) => {
            return Err(CliError::Usage(format!(
                "bad value for `surface_estimator`: `{other}` (expected ols|ratio)"
            )))
        }
        // the ratio estimator needs raw series; standardized windows sum to zero
        None if standardize => SurfaceEstimator::OlsSlope,
        None => SurfaceEstimator::RatioOfSums,
    };
    if standardize && estimator == SurfaceEstimator::RatioOfSums {
        return Err(CliError::Usage(
            "surface_estimator=ratio requires --raw (standardized windows sum to zero)".into(),
        ));
    }
    Ok(SensitivitySettings {
        kappas,
        c1_grid,
        c2_grid,
        standardize,
        estimator,
    })
}
