mod cli;
mod settings;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use splitdoor::io::{write_ground_truth_csv, write_panel_csv, write_surface_csv};
use splitdoor::pipeline::{alpha_sweep, run_pipeline, write_alpha_sweep_csv, write_outputs};
use splitdoor::sensitivity::{sensitivity_surface, SurfaceCell};
use splitdoor::seed::SeedMix;
use splitdoor::synth::{generate_panel, GeneratorParams};

use cli::{Cli, Command, ReportArgs, SensitivityArgs, SimulateArgs};
use settings::{parse_config_file, resolve, resolve_sensitivity, Settings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(splitdoor::Error),
}

impl From<splitdoor::Error> for CliError {
    fn from(e: splitdoor::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(parsed) => parsed,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(parsed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(parsed: Cli) -> Result<(), CliError> {
    match parsed.command {
        Command::Simulate(args) => simulate(args),
        Command::Discover(args) => {
            let settings = resolve(&args)?;
            run_and_write(&settings, Mode::Discover)
        }
        Command::Estimate(args) => {
            let settings = resolve(&args)?;
            run_and_write(&settings, Mode::Estimate)
        }
        Command::Sweep(args) => {
            let settings = resolve(&args)?;
            if settings.run.alphas.len() < 2 {
                return Err(CliError::Usage(
                    "sweep requires at least 2 comma-separated --alpha levels".into(),
                ));
            }
            run_and_write(&settings, Mode::Sweep)
        }
        Command::Sensitivity(SensitivityArgs { analysis, sensitivity }) => {
            let settings = resolve(&analysis)?;
            let file = match &analysis.config {
                Some(path) => parse_config_file(path)?,
                None => Default::default(),
            };
            let sens = resolve_sensitivity(&sensitivity, &file)?;
            run_and_write(&settings, Mode::Sensitivity(sens))
        }
        Command::Report(ReportArgs {
            analysis,
            sensitivity,
            no_sensitivity,
        }) => {
            let settings = resolve(&analysis)?;
            let sens = if no_sensitivity {
                None
            } else {
                let file = match &analysis.config {
                    Some(path) => parse_config_file(path)?,
                    None => Default::default(),
                };
                Some(resolve_sensitivity(&sensitivity, &file)?)
            };
            run_and_write(&settings, Mode::Report(sens))
        }
    }
}

enum Mode {
    Discover,
    Estimate,
    Sweep,
    Sensitivity(settings::SensitivitySettings),
    Report(Option<settings::SensitivitySettings>),
}

fn run_and_write(settings: &Settings, mode: Mode) -> Result<(), CliError> {
    let run = run_pipeline(&settings.run)?;
    let out = settings.out.as_path();
    std::fs::create_dir_all(out).map_err(splitdoor::Error::from)?;

    if run.report.n_rows_rejected > 0 {
        eprintln!(
            "warning: {} malformed input rows rejected",
            run.report.n_rows_rejected
        );
    }

    match &mode {
        Mode::Discover => {
            splitdoor::io::write_instances_csv(&run.discovery.instances, &out.join("instances.csv"))?;
            splitdoor::io::write_pvalues_csv(&run.screened.tested, &out.join("pvalues.csv"))?;
            splitdoor::io::write_pvalue_hist_csv(&run.hist, &out.join("pvalue_hist.csv"))?;
            let summary = serde_json::json!({
                "alpha": run.discovery.alpha,
                "m": run.discovery.m,
                "w": run.discovery.w,
                "tau": run.discovery.tau,
                "n_resamples": run.discovery.n_resamples,
                "seed": run.discovery.seed,
                "excluded_degenerate": run.discovery.excluded_degenerate,
                "excluded_zero_treatment": run.discovery.excluded_zero_treatment,
            });
            std::fs::write(
                out.join("discovery.json"),
                serde_json::to_string_pretty(&summary).map_err(splitdoor::Error::from)? + "\n",
            )
            .map_err(splitdoor::Error::from)?;
        }
        Mode::Estimate => {
            write_outputs(&run, out)?;
        }
        Mode::Sweep => {
            write_outputs(&run, out)?;
            let rows = alpha_sweep(&run.screened, &settings.run)?;
            write_alpha_sweep_csv(&rows, &out.join("alpha_sweep.csv"))?;
            print_sweep(&rows);
        }
        Mode::Sensitivity(sens) => {
            write_outputs(&run, out)?;
            write_surface(&run, sens, &settings.run.seed, out)?;
        }
        Mode::Report(sens) => {
            write_outputs(&run, out)?;
            if settings.run.alphas.len() >= 2 {
                let rows = alpha_sweep(&run.screened, &settings.run)?;
                write_alpha_sweep_csv(&rows, &out.join("alpha_sweep.csv"))?;
                print_sweep(&rows);
            }
            if let Some(sens) = sens {
                write_surface(&run, sens, &settings.run.seed, out)?;
            }
        }
    }

    print_summary(&run);
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn write_surface(
    run: &splitdoor::pipeline::PipelineRun,
    sens: &settings::SensitivitySettings,
    base_seed: &u64,
    out: &Path,
) -> Result<(), CliError> {
    if run.discovery.instances.is_empty() {
        return Err(CliError::Core(splitdoor::Error::NoInstances));
    }
    let mut cells: Vec<SurfaceCell> = Vec::new();
    let mut clip_rates = Vec::new();
    for (idx, &kappa) in sens.kappas.iter().enumerate() {
        let seed = SeedMix::new(*base_seed)
            .mix_str("sensitivity")
            .mix_u64(idx as u64)
            .finish();
        let config = sens.config_for(kappa, seed);
        let surface = sensitivity_surface(&run.discovery.instances, &config, sens.estimator)?;
        if !surface.standardize && surface.clip_rate > 0.0 {
            clip_rates.push((kappa, surface.clip_rate));
        }
        cells.extend(surface.cells);
    }
    for (kappa, rate) in clip_rates {
        eprintln!(
            "warning: raw-mode injection at kappa={kappa} clipped {:.2}% of perturbed values; \
             clipping attenuates the injected bias",
            rate * 100.0
        );
    }
    write_surface_csv(&cells, &out.join("sensitivity_surface.csv"))?;
    println!(
        "sensitivity surface: {} cells over {} kappa level(s)",
        cells.len(),
        sens.kappas.len()
    );
    Ok(())
}

fn print_summary(run: &splitdoor::pipeline::PipelineRun) {
    let r = &run.report;
    let pct = |v: f64| format!("{:.3}%", v * 100.0);
    println!(
        "tested m = {} periods (excluded: {} degenerate, {} zero-treatment)",
        r.m, r.excluded_degenerate, r.excluded_zero_treatment
    );
    println!("accepted W = {} instances at alpha = {}", r.w, r.alpha);
    println!(
        "causal CTR rho_hat = {} (sigma = {}, N = {} focal-periods, {} unique focals)",
        pct(r.rho_hat),
        pct(r.sigma_hat),
        r.n,
        r.unique_focals
    );
    if let Some(weighted) = r.weighted_rho_hat {
        println!("traffic-weighted rho_hat = {}", pct(weighted));
    }
    println!(
        "interval = [{}, {}] (z = {}, top-k exact)",
        pct(r.interval.lower),
        pct(r.interval.upper),
        r.interval.z
    );
    println!(
        "naive CTR = {} ratio-of-sums ({} mean-of-ratios)",
        pct(r.naive_ctr),
        pct(r.naive_ctr_mean_of_ratios)
    );
    println!(
        "phi = {:.4} (pi_dep = {:.4} via {:?}), phi' = {:.4}",
        r.multiplicity.phi,
        r.multiplicity.pi_dep,
        r.multiplicity.estimator,
        r.multiplicity.phi_prime
    );
    if !r.groups.is_empty() {
        println!("groups: {} (see groups.csv)", r.groups.len());
    }
}

fn print_sweep(rows: &[splitdoor::pipeline::SweepRow]) {
    println!("alpha sweep:");
    println!("  alpha      W   focals     phi    rho_hat");
    for row in rows {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "  {:<8} {:>5} {:>7}  {:>6}  {:>9}",
            row.alpha,
            row.w,
            row.unique_focals,
            opt(row.phi),
            opt(row.rho_hat)
        );
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let params = GeneratorParams {
        rho: args.rho,
        eta: args.eta,
        gamma1: args.gamma1,
        gamma2: args.gamma2,
        gamma3: args.gamma3,
        noise_sd_x: args.noise_sd_x,
        noise_sd_yr: args.noise_sd_yr,
        noise_sd_yd: args.noise_sd_yd,
        u_y_sd: args.u_y_sd,
        u_y_mean: args.u_y_mean,
        u_y_ar1: args.u_y_ar1,
        u_y_lognormal: args.u_y_lognormal,
        base_x: args.base_x,
        base_yr: args.base_yr,
        base_yd: args.base_yd,
        n_pairs: args.pairs,
        n_days: args.days,
        confounded_fraction: args.confounded_fraction,
        seed: args.seed,
        id_offset: args.id_offset,
        group: args.group,
    };
    let (panel, truth) = generate_panel(&params).map_err(|e| match e {
        // bad generator parameters are a usage problem, not a data problem
        e @ splitdoor::Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
        e => CliError::Core(e),
    })?;
    std::fs::create_dir_all(&args.out).map_err(splitdoor::Error::from)?;
    write_panel_csv(&panel, &args.out.join("panel.csv"))?;
    write_ground_truth_csv(&truth, &args.out.join("ground_truth.csv"))?;
    println!(
        "generated {} pairs x {} days ({} confounded), floor rate {:.5}",
        panel.n_pairs(),
        panel.n_days,
        truth.pairs.iter().filter(|p| p.confounded).count(),
        truth.floor_rate()
    );
    println!("panel written to {}", args.out.join("panel.csv").display());
    Ok(())
}
