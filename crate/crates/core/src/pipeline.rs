//! End-to-end orchestration: ingest, filter, slice, screen, estimate,
//! quantify multiplicity error, and emit the run artifacts.
//!
//! P-values are computed once per period and re-thresholded per alpha;
//! sweeping alpha therefore reuses one screen, and a sweep row at a single
//! alpha is exactly the single-alpha pipeline result for the same seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discovery::{screen_periods, threshold, DiscoveryRun, ScreenedPeriods};
use crate::error::{Error, Result};
use crate::estimation::{
    aggregate_focal, group_breakdown, mean_effect, naive_ctr, naive_ctr_mean_of_ratios,
    weighted_mean_effect, GroupEffect,
};
use crate::io;
use crate::multiplicity::{
    effect_interval, fndr_bound, multiplicity_report, pvalue_histogram, EffectInterval,
    IntervalMethod, MultiplicityReport, PiEstimator,
};
use crate::panel::{apply_popularity_filter, filter_constant_direct, slice_periods, PairPeriod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Events,
    Panel,
}

impl std::str::FromStr for InputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "events" => Ok(InputFormat::Events),
            "panel" => Ok(InputFormat::Panel),
            other => Err(format!("unknown input format `{other}` (expected events|panel)")),
        }
    }
}

/// Full run configuration. Everything here except `threads` shapes the
/// statistical result; `threads` only caps parallelism and is excluded
/// from the report echo so reports stay byte-identical across executors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub tau: usize,
    /// Significance levels; the first is the primary reporting level.
    pub alphas: Vec<f64>,
    pub n_resamples: usize,
    pub seed: u64,
    pub min_peak: f64,
    pub pi_estimator: PiEstimator,
    pub bins: usize,
    pub lambda: f64,
    pub z: f64,
    pub traffic_weighted: bool,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, format: InputFormat) -> Self {
        RunConfig {
            input: input.into(),
            format,
            tau: 15,
            alphas: vec![0.95],
            n_resamples: 1000,
            seed: 0,
            min_peak: 10.0,
            pi_estimator: PiEstimator::Nettleton,
            bins: 20,
            lambda: 0.5,
            z: 2.58,
            traffic_weighted: false,
            threads: None,
        }
    }

    pub fn primary_alpha(&self) -> f64 {
        self.alphas[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::invalid("alpha", "at least one level required"));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::invalid("alpha", format!("must be in (0, 1), got {a}")));
            }
        }
        if self.tau < 2 {
            return Err(Error::invalid("tau", "must be >= 2"));
        }
        if self.n_resamples == 0 {
            return Err(Error::invalid("resamples", "must be >= 1"));
        }
        if self.min_peak.is_nan() || self.min_peak < 0.0 {
            return Err(Error::invalid("min_peak", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::invalid("lambda", "must be in [0, 1)"));
        }
        if self.bins < 2 {
            return Err(Error::invalid("bins", "must be >= 2"));
        }
        if self.z.is_nan() || self.z < 0.0 {
            return Err(Error::invalid("z", "must be >= 0"));
        }
        Ok(())
    }
}

/// The numbers a run reports, all recomputable from the emitted
/// instances and p-values plus this config echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: RunConfig,
    pub n_pairs_ingested: usize,
    pub n_rows_rejected: usize,
    pub n_pairs_after_popularity: usize,
    pub n_periods_sliced: usize,
    pub n_constant_direct_removed: usize,
    pub excluded_degenerate: usize,
    pub excluded_zero_treatment: usize,
    pub alpha: f64,
    pub m: usize,
    pub w: usize,
    /// Focal-period estimates behind the mean.
    pub n: usize,
    pub unique_focals: usize,
    pub rho_hat: f64,
    pub sigma_hat: f64,
    pub weighted_rho_hat: Option<f64>,
    pub interval: EffectInterval,
    pub interval_mean_approx: EffectInterval,
    pub naive_ctr: f64,
    pub naive_ctr_mean_of_ratios: f64,
    pub multiplicity: MultiplicityReport,
    pub groups: Vec<GroupEffect>,
    /// Wall-clock per stage; informational only and excluded from any
    /// determinism comparison.
    pub timing_ms: BTreeMap<String, u128>,
}

/// Everything a finished run holds, for writing artifacts or further work
/// (alpha sweeps, sensitivity surfaces).
#[derive(Debug)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub discovery: DiscoveryRun,
    pub screened: ScreenedPeriods,
    /// Post-filter periods, the naive baseline's domain.
    pub periods: Vec<PairPeriod>,
    pub focal_groups: BTreeMap<String, String>,
    pub hist: Vec<usize>,
}

/// Run the full pipeline at the primary alpha.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineRun> {
    config.validate()?;
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid("threads", e.to_string()))?;
            pool.install(|| run_stages(config))
        }
        None => run_stages(config),
    }
}

fn run_stages(config: &RunConfig) -> Result<PipelineRun> {
    let mut timing: BTreeMap<String, u128> = BTreeMap::new();
    let clock = |timing: &mut BTreeMap<String, u128>, stage: &str, start: Instant| {
        timing.insert(stage.to_string(), start.elapsed().as_millis());
    };

    let start = Instant::now();
    let (panel, rejected) = match config.format {
        InputFormat::Events => io::ingest_events_csv(&config.input),
        InputFormat::Panel => io::read_panel_csv(&config.input),
    }
    .map_err(|e| e.in_stage("ingest"))?;
    let n_pairs_ingested = panel.n_pairs();
    clock(&mut timing, "ingest", start);

    let start = Instant::now();
    let panel =
        apply_popularity_filter(panel, config.min_peak).map_err(|e| e.in_stage("popularity"))?;
    let n_pairs_after_popularity = panel.n_pairs();
    if n_pairs_after_popularity == 0 {
        return Err(Error::NoTestablePeriods.in_stage("popularity"));
    }
    clock(&mut timing, "popularity", start);

    let start = Instant::now();
    let sliced = slice_periods(&panel, config.tau).map_err(|e| e.in_stage("slice"))?;
    let n_periods_sliced = sliced.len();
    let (periods, n_constant_direct_removed) = filter_constant_direct(sliced);
    if periods.is_empty() {
        return Err(Error::NoTestablePeriods.in_stage("slice"));
    }
    clock(&mut timing, "slice", start);

    let start = Instant::now();
    let screened = screen_periods(&periods, config.n_resamples, config.seed)
        .map_err(|e| e.in_stage("screen"))?;
    clock(&mut timing, "screen", start);

    let start = Instant::now();
    let discovery =
        threshold(&screened, config.primary_alpha()).map_err(|e| e.in_stage("discover"))?;
    clock(&mut timing, "discover", start);

    let start = Instant::now();
    let focal_groups = panel.groups.clone();
    let estimated = estimate_at(&discovery, &periods, &focal_groups, config)
        .map_err(|e| e.in_stage("estimate"))?;
    let hist = pvalue_histogram(&discovery.all_p_values, config.bins)
        .map_err(|e| e.in_stage("estimate"))?;
    clock(&mut timing, "estimate", start);

    let report = PipelineReport {
        config: config.clone(),
        n_pairs_ingested,
        n_rows_rejected: rejected.len(),
        n_pairs_after_popularity,
        n_periods_sliced,
        n_constant_direct_removed,
        excluded_degenerate: discovery.excluded_degenerate,
        excluded_zero_treatment: discovery.excluded_zero_treatment,
        alpha: discovery.alpha,
        m: discovery.m,
        w: discovery.w,
        n: estimated.n,
        unique_focals: estimated.unique_focals,
        rho_hat: estimated.rho_hat,
        sigma_hat: estimated.sigma_hat,
        weighted_rho_hat: estimated.weighted_rho_hat,
        interval: estimated.interval,
        interval_mean_approx: estimated.interval_mean_approx,
        naive_ctr: naive_ctr(&periods).map_err(|e| e.in_stage("estimate"))?,
        naive_ctr_mean_of_ratios: naive_ctr_mean_of_ratios(&periods)
            .map_err(|e| e.in_stage("estimate"))?,
        multiplicity: estimated.multiplicity,
        groups: estimated.groups,
        timing_ms: timing,
    };

    Ok(PipelineRun {
        report,
        discovery,
        screened,
        periods,
        focal_groups,
        hist,
    })
}

struct Estimated {
    n: usize,
    unique_focals: usize,
    rho_hat: f64,
    sigma_hat: f64,
    weighted_rho_hat: Option<f64>,
    interval: EffectInterval,
    interval_mean_approx: EffectInterval,
    multiplicity: MultiplicityReport,
    groups: Vec<GroupEffect>,
}

fn estimate_at(
    discovery: &DiscoveryRun,
    periods: &[PairPeriod],
    focal_groups: &BTreeMap<String, String>,
    config: &RunConfig,
) -> Result<Estimated> {
    let focals = aggregate_focal(&discovery.instances)?;
    let effect = mean_effect(&focals)?;
    let multiplicity = multiplicity_report(
        &discovery.all_p_values,
        discovery.alpha,
        discovery.w,
        focals.len(),
        config.pi_estimator,
        config.lambda,
        config.bins,
    )?;
    let focal_rhos: Vec<f64> = focals.iter().map(|f| f.rho_i_tau).collect();
    let interval = effect_interval(
        &focal_rhos,
        multiplicity.phi_prime,
        config.z,
        IntervalMethod::TopkExact,
    )?;
    let interval_mean_approx = effect_interval(
        &focal_rhos,
        multiplicity.phi_prime,
        config.z,
        IntervalMethod::MeanApprox,
    )?;
    let unique_focals = focals
        .iter()
        .map(|f| f.focal_id.as_str())
        .collect::<BTreeSet<_>>()
        .len();
    Ok(Estimated {
        n: focals.len(),
        unique_focals,
        rho_hat: effect.rho_hat,
        sigma_hat: effect.sigma_hat,
        weighted_rho_hat: if config.traffic_weighted {
            Some(weighted_mean_effect(&focals)?)
        } else {
            None
        },
        interval,
        interval_mean_approx,
        multiplicity,
        groups: group_breakdown(&discovery.instances, periods, focal_groups)?,
    })
}

/// One row of an alpha sweep. Estimate fields are absent when no instance
/// survives at that level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub w: usize,
    pub unique_focals: usize,
    pub phi: Option<f64>,
    pub rho_hat: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Re-threshold one screen across alphas. The tests run once; only the
/// acceptance cut changes per row.
pub fn alpha_sweep(
    screened: &ScreenedPeriods,
    config: &RunConfig,
) -> Result<Vec<SweepRow>> {
    if config.alphas.len() < 2 {
        return Err(Error::invalid("alpha", "sweep requires at least 2 levels"));
    }
    let mut rows = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let run = threshold(screened, alpha)?;
        if run.w == 0 {
            rows.push(SweepRow {
                alpha,
                w: 0,
                unique_focals: 0,
                phi: None,
                rho_hat: None,
                lower: None,
                upper: None,
            });
            continue;
        }
        let focals = aggregate_focal(&run.instances)?;
        let effect = mean_effect(&focals)?;
        let multiplicity = multiplicity_report(
            &run.all_p_values,
            alpha,
            run.w,
            focals.len(),
            config.pi_estimator,
            config.lambda,
            config.bins,
        )?;
        let focal_rhos: Vec<f64> = focals.iter().map(|f| f.rho_i_tau).collect();
        let interval = effect_interval(
            &focal_rhos,
            multiplicity.phi_prime,
            config.z,
            IntervalMethod::TopkExact,
        )?;
        let unique_focals = focals
            .iter()
            .map(|f| f.focal_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        rows.push(SweepRow {
            alpha,
            w: run.w,
            unique_focals,
            phi: Some(multiplicity.phi),
            rho_hat: Some(effect.rho_hat),
            lower: Some(interval.lower),
            upper: Some(interval.upper),
        });
    }
    Ok(rows)
}

pub fn write_alpha_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["alpha", "w", "unique_focals", "phi", "rho_hat", "lower", "upper"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        writer.write_record([
            row.alpha.to_string().as_str(),
            &row.w.to_string(),
            &row.unique_focals.to_string(),
            &opt(row.phi),
            &opt(row.rho_hat),
            &opt(row.lower),
            &opt(row.upper),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Write the run artifacts into `out_dir`. `report.json` is written last,
/// so its presence marks a complete run.
pub fn write_outputs(run: &PipelineRun, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    io::write_instances_csv(&run.discovery.instances, &out_dir.join("instances.csv"))?;
    io::write_pvalues_csv(&run.screened.tested, &out_dir.join("pvalues.csv"))?;
    io::write_pvalue_hist_csv(&run.hist, &out_dir.join("pvalue_hist.csv"))?;
    io::write_groups_csv(&run.report.groups, &out_dir.join("groups.csv"))?;
    let json = serde_json::to_string_pretty(&run.report)?;
    std::fs::write(out_dir.join("report.json"), json + "\n")?;
    Ok(())
}

/// Consistency oracle used by tests and `report --verify`: recompute the
/// headline estimate from an emitted instances CSV.
pub fn recompute_rho_from_instances_csv(path: &Path) -> Result<f64> {
    let records = io::read_instances_csv(path)?;
    if records.is_empty() {
        return Err(Error::NoInstances);
    }
    let mut by_focal: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for rec in &records {
        *by_focal
            .entry((rec.focal_id.clone(), rec.period_index))
            .or_insert(0.0) += rec.rho_ij_tau;
    }
    let n = by_focal.len() as f64;
    Ok(by_focal.values().sum::<f64>() / n)
}

/// Internal-consistency check: each sweep row's phi equals the bound
/// formula applied to that row.
pub fn sweep_phi_consistent(rows: &[SweepRow], m: usize, pi_dep: f64) -> bool {
    rows.iter().all(|row| match row.phi {
        None => row.w == 0,
        Some(phi) => {
            let want = fndr_bound(row.alpha, pi_dep, m, row.w).unwrap();
            (phi - want).abs() < 1e-12
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_panel_csv;
    use crate::synth::{generate_panel, GeneratorParams};

    fn write_test_panel(dir: &Path, params: &GeneratorParams) -> PathBuf {
        let (panel, _) = generate_panel(params).unwrap();
        let path = dir.join("panel.csv");
        write_panel_csv(&panel, &path).unwrap();
        path
    }

    fn quick_config(input: PathBuf) -> RunConfig {
        let mut config = RunConfig::new(input, InputFormat::Panel);
        config.tau = 15;
        config.alphas = vec![0.8];
        config.n_resamples = 60;
        config.seed = 5;
        config.min_peak = 0.0;
        config
    }

    #[test]
    fn pipeline_runs_and_report_is_recomputable() {
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            n_pairs: 60,
            n_days: 45,
            seed: 41,
            confounded_fraction: 0.0,
            group: Some("books".into()),
            ..Default::default()
        };
        let input = write_test_panel(dir.path(), &params);
        let config = quick_config(input);
        let run = run_pipeline(&config).unwrap();

        assert_eq!(run.report.m, run.discovery.all_p_values.len());
        assert!(run.report.w > 0, "want some accepted instances at alpha=0.8");
        assert_eq!(run.report.groups.len(), 1);
        assert_eq!(run.report.groups[0].group, "books");
        // unconfounded panel: the estimate recovers the generator's effect
        assert!(
            (run.report.rho_hat - 0.05).abs() < 0.01,
            "rho_hat {} far from 0.05",
            run.report.rho_hat
        );

        let out = dir.path().join("out");
        write_outputs(&run, &out).unwrap();
        for file in [
            "report.json",
            "instances.csv",
            "pvalues.csv",
            "pvalue_hist.csv",
            "groups.csv",
        ] {
            assert!(out.join(file).exists(), "{file} missing");
        }
        let recomputed = recompute_rho_from_instances_csv(&out.join("instances.csv")).unwrap();
        assert_eq!(recomputed, run.report.rho_hat, "rho must recompute exactly");
    }

    #[test]
    fn sweep_reuses_pvalues_and_matches_single_runs() {
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            n_pairs: 50,
            n_days: 45,
            seed: 43,
            ..Default::default()
        };
        let input = write_test_panel(dir.path(), &params);
        let mut config = quick_config(input);
        config.alphas = vec![0.8, 0.9, 0.95];
        let run = run_pipeline(&config).unwrap();
        let rows = alpha_sweep(&run.screened, &config).unwrap();

        assert_eq!(rows.len(), 3);
        // monotone: W non-increasing in alpha
        assert!(rows[0].w >= rows[1].w && rows[1].w >= rows[2].w);
        // the first row equals the primary run exactly
        assert_eq!(rows[0].w, run.report.w);
        assert_eq!(rows[0].rho_hat, Some(run.report.rho_hat));
        assert_eq!(rows[0].phi, Some(run.report.multiplicity.phi));
        assert!(sweep_phi_consistent(
            &rows,
            run.report.m,
            run.report.multiplicity.pi_dep
        ));
    }

    #[test]
    fn sweep_on_confounded_panel_trades_coverage_for_error() {
        // half the pairs strongly confounded with a positive demand level:
        // loosening alpha multiplies W while the phi bound grows
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            rho: 0.05,
            gamma1: 2.0,
            gamma2: 1.3,
            gamma3: 2.0,
            u_y_sd: 3.0,
            u_y_mean: 5.0,
            confounded_fraction: 0.5,
            n_pairs: 300,
            n_days: 45,
            seed: 53,
            ..Default::default()
        };
        let input = write_test_panel(dir.path(), &params);
        let mut config = quick_config(input);
        config.alphas = vec![0.8, 0.95];
        config.n_resamples = 100;
        config.seed = 54;
        let run = run_pipeline(&config).unwrap();
        let rows = alpha_sweep(&run.screened, &config).unwrap();

        let loose = &rows[0];
        let tight = &rows[1];
        assert!(
            loose.w >= 2 * tight.w,
            "W(0.8) = {} should be a multiple of W(0.95) = {}",
            loose.w,
            tight.w
        );
        assert!(loose.unique_focals >= tight.unique_focals);
        assert!(
            loose.phi.unwrap() >= tight.phi.unwrap(),
            "phi should grow as alpha loosens: {:?} vs {:?}",
            loose.phi,
            tight.phi
        );
        // both estimates still sit near the true effect: confounded pairs
        // are screened out at either level
        for row in &rows {
            let rho_hat = row.rho_hat.unwrap();
            assert!((rho_hat - 0.05).abs() < 0.01, "rho_hat {rho_hat}");
        }
    }

    #[test]
    fn determinism_across_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            n_pairs: 30,
            n_days: 30,
            seed: 47,
            ..Default::default()
        };
        let input = write_test_panel(dir.path(), &params);
        let mut config = quick_config(input);

        config.threads = Some(1);
        let single = run_pipeline(&config).unwrap();
        config.threads = Some(4);
        let multi = run_pipeline(&config).unwrap();

        let strip = |mut r: PipelineReport| {
            r.timing_ms.clear();
            r.config.threads = None;
            r
        };
        assert_eq!(strip(single.report), strip(multi.report));
        assert_eq!(single.discovery.all_p_values, multi.discovery.all_p_values);
    }

    #[test]
    fn no_testable_periods_is_a_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let params = GeneratorParams {
            n_pairs: 5,
            n_days: 10, // shorter than one tau window
            seed: 3,
            ..Default::default()
        };
        let input = write_test_panel(dir.path(), &params);
        let config = quick_config(input);
        let err = run_pipeline(&config).unwrap_err();
        assert!(err.is_data_error(), "unexpected error kind: {err}");
        assert!(err.to_string().contains("no testable periods"));
    }

    #[test]
    fn config_validation() {
        let mut config = RunConfig::new("x.csv", InputFormat::Panel);
        config.alphas = vec![];
        assert!(config.validate().is_err());
        config.alphas = vec![1.0];
        assert!(config.validate().is_err());
        config.alphas = vec![0.95];
        config.tau = 1;
        assert!(config.validate().is_err());
    }
}
