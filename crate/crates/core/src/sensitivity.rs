//! Sensitivity analysis for connectedness violations: inject an artificial
//! confound into accepted instances and map how the estimate deviates as
//! the confound's strength varies.
//!
//! The injected confound V_Y is a fresh standard-normal window per
//! instance, added as c1*V_Y to x and c2*V_Y to y_r; y_d is never touched
//! (a connectedness-violating confound is one the direct outcome cannot
//! see). Under a standardized linear model with slope estimation the
//! expected bias is kappa*c1*c2; the surface reports that closed form as
//! a reference next to each empirical deviation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discovery::SplitDoorInstance;
use crate::error::{Error, Result};
use crate::seed::SeedMix;

/// Grid and strength parameters for the deviation surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub c1_grid: Vec<f64>,
    pub c2_grid: Vec<f64>,
    /// Fraction of instances perturbed, in [0, 1].
    pub kappa: f64,
    pub seed: u64,
    /// Operate on per-instance mean/variance-standardized copies of x and
    /// y_r. Raw mode instead clips perturbed values at zero and reports
    /// the clip rate, since clipping attenuates the injected bias.
    pub standardize: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            c1_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            c2_grid: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            kappa: 1.0,
            seed: 0,
            standardize: true,
        }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c1_grid.is_empty() || self.c2_grid.is_empty() {
            return Err(Error::invalid("c_grid", "grids must be nonempty"));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid("kappa", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Estimator re-run on perturbed instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceEstimator {
    /// Mean per-instance OLS slope of y_r on x. The scale-free choice for
    /// standardized copies, and the one the kappa*c1*c2 reference assumes.
    OlsSlope,
    /// The pipeline's aggregate ratio estimator: per-instance CTR summed
    /// per focal period, then averaged. Requires raw mode (a standardized
    /// window sums to zero, so ratios are undefined there).
    RatioOfSums,
}

impl SurfaceEstimator {
    pub fn estimate(&self, instances: &[SplitDoorInstance]) -> Result<f64> {
        match self {
            SurfaceEstimator::OlsSlope => {
                let slopes: Vec<f64> = instances
                    .iter()
                    .filter_map(|inst| ols_slope(&inst.period.x_window, &inst.period.y_r_window))
                    .collect();
                if slopes.is_empty() {
                    return Err(Error::EmptyInput("instances with non-constant x"));
                }
                Ok(slopes.iter().sum::<f64>() / slopes.len() as f64)
            }
            SurfaceEstimator::RatioOfSums => {
                let usable: Vec<SplitDoorInstance> = instances
                    .iter()
                    .filter(|inst| inst.period.x_sum() > 0.0)
                    .cloned()
                    .collect();
                if usable.is_empty() {
                    return Err(Error::ZeroTreatment);
                }
                let focals = crate::estimation::aggregate_focal(&usable)?;
                Ok(crate::estimation::mean_effect(&focals)?.rho_hat)
            }
        }
    }
}

fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

fn zscore(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return vec![0.0; values.len()];
    }
    let sd = var.sqrt();
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Per-instance standardized copies of x and y_r (y_d kept as-is), so that
/// injected confounds operate on a comparable scale across instances.
pub fn standardize_instances(instances: &[SplitDoorInstance]) -> Vec<SplitDoorInstance> {
    instances
        .iter()
        .map(|inst| {
            let mut out = inst.clone();
            out.period.x_window = zscore(&inst.period.x_window);
            out.period.y_r_window = zscore(&inst.period.y_r_window);
            out
        })
        .collect()
}

/// Result of one injection pass.
#[derive(Debug, Clone)]
pub struct InjectionResult {
    pub instances: Vec<SplitDoorInstance>,
    /// Values clipped to zero (raw mode only).
    pub clipped: usize,
    /// Values eligible for clipping.
    pub total: usize,
}

impl InjectionResult {
    pub fn clip_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.clipped as f64 / self.total as f64
        }
    }
}

/// Add an artificial confound to floor(kappa * W) instances chosen
/// uniformly at random without replacement: x += c1*v, y_r += c2*v with a
/// fresh standard-normal window v per instance. y_d is untouched. When
/// `clip` is set, perturbed values are floored at zero.
///
/// Deterministic given the seed; each instance's v derives from the seed
/// plus the instance identity, so neither selection order nor scheduling
/// changes the output. Stored `rho_ij_tau` values are recomputed from the
/// perturbed windows (0 when the x window no longer sums positive).
pub fn inject_confound(
    instances: &[SplitDoorInstance],
    c1: f64,
    c2: f64,
    kappa: f64,
    seed: u64,
    clip: bool,
) -> Result<InjectionResult> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid("kappa", "must be in [0, 1]"));
    }
    let w = instances.len();
    let n_perturb = (kappa * w as f64).floor() as usize;

    // partial Fisher-Yates for the perturbed subset
    let mut indices: Vec<usize> = (0..w).collect();
    let mut select_rng = ChaCha8Rng::seed_from_u64(SeedMix::new(seed).mix_str("select").finish());
    for i in 0..n_perturb.min(w.saturating_sub(1)) {
        let j = i + rand::Rng::gen_range(&mut select_rng, 0..w - i);
        indices.swap(i, j);
    }
    let mut selected = vec![false; w];
    for &idx in &indices[..n_perturb] {
        selected[idx] = true;
    }

    let mut clipped = 0usize;
    let mut total = 0usize;
    let mut out = Vec::with_capacity(w);
    for (idx, inst) in instances.iter().enumerate() {
        let mut inst = inst.clone();
        if selected[idx] {
            let v_seed = SeedMix::new(seed)
                .mix_str("vy")
                .mix_str(&inst.period.focal_id)
                .mix_str(&inst.period.target_id)
                .mix_u64(inst.period.period_index as u64)
                .finish();
            let mut rng = ChaCha8Rng::seed_from_u64(v_seed);
            let v_y: Vec<f64> = (0..inst.period.tau)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let perturb = |window: &mut [f64], c: f64| -> usize {
                let mut clips = 0;
                for (w_val, v) in window.iter_mut().zip(&v_y) {
                    *w_val += c * v;
                    if clip && *w_val < 0.0 {
                        *w_val = 0.0;
                        clips += 1;
                    }
                }
                clips
            };
            clipped += perturb(&mut inst.period.x_window, c1);
            clipped += perturb(&mut inst.period.y_r_window, c2);
            total += 2 * inst.period.tau;
        }
        let x_sum = inst.period.x_sum();
        inst.rho_ij_tau = if x_sum > 0.0 {
            inst.period.y_r_sum() / x_sum
        } else {
            0.0
        };
        out.push(inst);
    }

    Ok(InjectionResult {
        instances: out,
        clipped,
        total,
    })
}

/// The expected additive bias under the standardized linear model:
/// kappa * c1 * c2.
pub fn linear_bias_prediction(c1: f64, c2: f64, kappa: f64) -> f64 {
    kappa * c1 * c2
}

/// One grid cell of the deviation surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCell {
    pub c1: f64,
    pub c2: f64,
    pub kappa: f64,
    /// Estimate on perturbed instances minus estimate on the baseline.
    pub deviation: f64,
    /// kappa * c1 * c2, the linear-model reference.
    pub predicted_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySurface {
    pub cells: Vec<SurfaceCell>,
    pub estimator: SurfaceEstimator,
    pub standardize: bool,
    /// Fraction of perturbed values clipped at zero (raw mode).
    pub clip_rate: f64,
}

/// Map the deviation surface over the (c1, c2) grid. Each cell injects a
/// confound with its own derived seed, re-estimates, and records the
/// deviation from the unperturbed baseline.
pub fn sensitivity_surface(
    instances: &[SplitDoorInstance],
    config: &SensitivityConfig,
    estimator: SurfaceEstimator,
) -> Result<SensitivitySurface> {
    config.validate()?;
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }
    if config.standardize && estimator == SurfaceEstimator::RatioOfSums {
        return Err(Error::invalid(
            "estimator",
            "ratio-of-sums requires raw mode: standardized windows sum to zero",
        ));
    }

    let baseline_instances = if config.standardize {
        standardize_instances(instances)
    } else {
        instances.to_vec()
    };
    let clip = !config.standardize;
    let baseline = estimator.estimate(&baseline_instances)?;

    let cells_idx: Vec<(usize, usize)> = (0..config.c1_grid.len())
        .flat_map(|i| (0..config.c2_grid.len()).map(move |j| (i, j)))
        .collect();

    let results: Vec<(SurfaceCell, usize, usize)> = cells_idx
        .into_par_iter()
        .map(|(i, j)| {
            let c1 = config.c1_grid[i];
            let c2 = config.c2_grid[j];
            let cell_seed = SeedMix::new(config.seed)
                .mix_str("cell")
                .mix_u64(i as u64)
                .mix_u64(j as u64)
                .finish();
            let injected =
                inject_confound(&baseline_instances, c1, c2, config.kappa, cell_seed, clip)?;
            let estimate = estimator.estimate(&injected.instances)?;
            Ok((
                SurfaceCell {
                    c1,
                    c2,
                    kappa: config.kappa,
                    deviation: estimate - baseline,
                    predicted_bias: linear_bias_prediction(c1, c2, config.kappa),
                },
                injected.clipped,
                injected.total,
            ))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(results.len());
    let mut clipped = 0usize;
    let mut total = 0usize;
    for (cell, c, t) in results {
        cells.push(cell);
        clipped += c;
        total += t;
    }
    Ok(SensitivitySurface {
        cells,
        estimator,
        standardize: config.standardize,
        clip_rate: if total == 0 {
            0.0
        } else {
            clipped as f64 / total as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::independence::IndependenceResult;
    use crate::panel::PairPeriod;
    use chrono::NaiveDate;
    use rand::Rng;

    fn instance_from_windows(idx: usize, x: Vec<f64>, y_r: Vec<f64>) -> SplitDoorInstance {
        let tau = x.len();
        let period = PairPeriod {
            focal_id: format!("f{idx:04}"),
            target_id: format!("t{idx:04}"),
            period_index: 0,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            tau,
            x_window: x,
            y_r_window: y_r,
            y_d_window: (0..tau).map(|i| (i % 3) as f64).collect(),
        };
        SplitDoorInstance {
            result: IndependenceResult {
                focal_id: period.focal_id.clone(),
                target_id: period.target_id.clone(),
                period_index: 0,
                statistic: 0.1,
                p_value: 0.99,
                n_resamples: 100,
                seed: 0,
                degenerate: false,
            },
            rho_ij_tau: 0.0,
            period,
        }
    }

    /// Unconfounded linear instances: x standard normal, y_r = rho*x + e.
    fn linear_instances(n: usize, tau: usize, rho: f64, seed: u64) -> Vec<SplitDoorInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|idx| {
                let x: Vec<f64> = (0..tau).map(|_| rng.sample(StandardNormal)).collect();
                let y_r: Vec<f64> = x
                    .iter()
                    .map(|&xv| rho * xv + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                instance_from_windows(idx, x, y_r)
            })
            .collect()
    }

    #[test]
    fn kappa_zero_is_identity() {
        let instances = linear_instances(20, 10, 0.05, 1);
        let out = inject_confound(&instances, 0.8, 0.8, 0.0, 42, false).unwrap();
        let windows = |v: &[SplitDoorInstance]| -> Vec<Vec<f64>> {
            v.iter()
                .flat_map(|i| {
                    [
                        i.period.x_window.clone(),
                        i.period.y_r_window.clone(),
                        i.period.y_d_window.clone(),
                    ]
                })
                .collect()
        };
        assert_eq!(windows(&out.instances), windows(&instances));
    }

    #[test]
    fn c1_zero_leaves_x_untouched_and_y_d_is_never_touched() {
        let instances = linear_instances(30, 12, 0.05, 2);
        let out = inject_confound(&instances, 0.0, 1.0, 1.0, 7, false).unwrap();
        let mut y_r_changed = 0;
        for (before, after) in instances.iter().zip(&out.instances) {
            assert_eq!(before.period.x_window, after.period.x_window);
            assert_eq!(before.period.y_d_window, after.period.y_d_window);
            if before.period.y_r_window != after.period.y_r_window {
                y_r_changed += 1;
            }
        }
        assert_eq!(y_r_changed, 30);
    }

    #[test]
    fn selection_respects_kappa_count() {
        let instances = linear_instances(40, 10, 0.05, 3);
        let out = inject_confound(&instances, 1.0, 1.0, 0.5, 9, false).unwrap();
        let changed = instances
            .iter()
            .zip(&out.instances)
            .filter(|(b, a)| b.period.x_window != a.period.x_window)
            .count();
        assert_eq!(changed, 20);
    }

    #[test]
    fn injection_is_deterministic() {
        let instances = linear_instances(25, 10, 0.05, 4);
        let a = inject_confound(&instances, 0.7, -0.4, 0.6, 11, true).unwrap();
        let b = inject_confound(&instances, 0.7, -0.4, 0.6, 11, true).unwrap();
        assert_eq!(a.instances, b.instances);
        let c = inject_confound(&instances, 0.7, -0.4, 0.6, 12, true).unwrap();
        assert_ne!(a.instances, c.instances);
    }

    #[test]
    fn raw_mode_clips_and_counts() {
        // windows near zero: injection must clip
        let instances: Vec<SplitDoorInstance> = (0..10)
            .map(|i| instance_from_windows(i, vec![0.1; 8], vec![0.1; 8]))
            .collect();
        let out = inject_confound(&instances, 1.0, 1.0, 1.0, 5, true).unwrap();
        assert!(out.clipped > 0);
        assert!(out.clip_rate() > 0.0);
        for inst in &out.instances {
            assert!(inst.period.x_window.iter().all(|&v| v >= 0.0));
            assert!(inst.period.y_r_window.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn linear_bias_prediction_products() {
        assert_eq!(linear_bias_prediction(1.0, 1.0, 1.0), 1.0);
        assert!((linear_bias_prediction(0.5, -0.4, 1.0) + 0.2).abs() < 1e-15);
        assert!((linear_bias_prediction(0.8, 0.8, 0.5) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn zero_grid_gives_zero_surface() {
        let instances = linear_instances(15, 10, 0.05, 6);
        let config = SensitivityConfig {
            c1_grid: vec![0.0],
            c2_grid: vec![0.0],
            kappa: 1.0,
            seed: 1,
            standardize: true,
        };
        let surface = sensitivity_surface(&instances, &config, SurfaceEstimator::OlsSlope).unwrap();
        assert_eq!(surface.cells.len(), 1);
        assert_eq!(surface.cells[0].deviation, 0.0);
        assert_eq!(surface.cells[0].predicted_bias, 0.0);
    }

    #[test]
    fn surface_is_reproducible_and_rejects_bad_combos() {
        let instances = linear_instances(20, 10, 0.05, 8);
        let config = SensitivityConfig {
            c1_grid: vec![-0.5, 0.5],
            c2_grid: vec![-0.5, 0.5],
            kappa: 0.5,
            seed: 3,
            standardize: true,
        };
        let a = sensitivity_surface(&instances, &config, SurfaceEstimator::OlsSlope).unwrap();
        let b = sensitivity_surface(&instances, &config, SurfaceEstimator::OlsSlope).unwrap();
        assert_eq!(a, b);

        let bad = sensitivity_surface(&instances, &config, SurfaceEstimator::RatioOfSums);
        assert!(bad.is_err());
    }

    #[test]
    fn deviation_depends_on_the_product_of_c1_c2() {
        let instances = linear_instances(400, 30, 0.0, 10);
        let config = SensitivityConfig {
            c1_grid: vec![-0.8, 0.8],
            c2_grid: vec![-0.8, 0.8],
            kappa: 1.0,
            seed: 17,
            standardize: true,
        };
        let surface = sensitivity_surface(&instances, &config, SurfaceEstimator::OlsSlope).unwrap();
        let cell = |c1: f64, c2: f64| -> f64 {
            surface
                .cells
                .iter()
                .find(|c| c.c1 == c1 && c.c2 == c2)
                .unwrap()
                .deviation
        };
        // sign flip: bias follows c1*c2
        assert!((cell(0.8, 0.8) - cell(-0.8, -0.8)).abs() < 0.06);
        assert!((cell(0.8, -0.8) - cell(-0.8, 0.8)).abs() < 0.06);
        assert!(cell(0.8, 0.8) > 0.15);
        assert!(cell(0.8, -0.8) < -0.15);
    }

    #[test]
    fn halving_kappa_roughly_halves_the_surface() {
        let instances = linear_instances(600, 30, 0.0, 12);
        let mk = |kappa: f64| SensitivityConfig {
            c1_grid: vec![-1.0, 1.0],
            c2_grid: vec![-1.0, 1.0],
            kappa,
            seed: 23,
            standardize: true,
        };
        let full =
            sensitivity_surface(&instances, &mk(1.0), SurfaceEstimator::OlsSlope).unwrap();
        let half =
            sensitivity_surface(&instances, &mk(0.5), SurfaceEstimator::OlsSlope).unwrap();
        let magnitude = |s: &SensitivitySurface| -> f64 {
            s.cells.iter().map(|c| c.deviation.abs()).sum::<f64>() / s.cells.len() as f64
        };
        let ratio = magnitude(&half) / magnitude(&full);
        assert!((0.35..=0.65).contains(&ratio), "ratio {ratio}");
    }
}
