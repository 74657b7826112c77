//! Synthetic panel generator with known ground truth.
//!
//! Series follow a linear structural model per pair and day:
//!
//! ```text
//! x   = base_x  + eta * u_x + g1 * u_y + e_x
//! y_d = base_yd + g3 * u_y + e_yd
//! y_r = base_yr + rho * x + g2 * u_y + e_yr
//! ```
//!
//! where `u_y` is the shared latent demand. A configurable fraction of
//! pairs is confounded: those use (g1, g2) = (gamma1, gamma2), the rest
//! use (0, 0). `g3 = gamma3` applies to every pair, so the direct outcome
//! always tracks demand. Values are floored at zero (traffic cannot be
//! negative) and the floor rate is reported, since flooring perturbs the
//! linear identities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DailyPanel, PairKey, PairSeries};
use crate::seed::SeedMix;

/// Parameters of the structural model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// True causal effect of x on y_r.
    pub rho: f64,
    /// Effect of the x-only latent factor (standard normal) on x.
    pub eta: f64,
    /// Effect of shared demand on x, for confounded pairs.
    pub gamma1: f64,
    /// Effect of shared demand on y_r, for confounded pairs.
    pub gamma2: f64,
    /// Effect of shared demand on y_d, for all pairs.
    pub gamma3: f64,
    pub noise_sd_x: f64,
    pub noise_sd_yr: f64,
    pub noise_sd_yd: f64,
    /// Standard deviation of shared demand u_y.
    pub u_y_sd: f64,
    /// Mean level of shared demand. A positive level makes confounded
    /// pairs carry extra non-causal referred traffic, which is what lets
    /// the naive pooled CTR overstate the true effect.
    pub u_y_mean: f64,
    /// AR(1) coefficient for u_y; 0 gives white noise.
    pub u_y_ar1: f64,
    /// Heavy-tailed demand: u_y drawn from a centered, rescaled log-normal.
    pub u_y_lognormal: bool,
    pub base_x: f64,
    pub base_yr: f64,
    pub base_yd: f64,
    pub n_pairs: usize,
    pub n_days: usize,
    /// Share of pairs generated with (gamma1, gamma2) active.
    pub confounded_fraction: f64,
    pub seed: u64,
    /// Offset applied to generated pair ids, for composing panels.
    pub id_offset: usize,
    /// Group label attached to every generated focal and target.
    pub group: Option<String>,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            rho: 0.05,
            eta: 1.0,
            gamma1: 0.8,
            gamma2: 0.8,
            gamma3: 0.8,
            noise_sd_x: 1.0,
            // y_r sits near rho * base_x, a small level; a tighter default
            // noise keeps the zero-floor rate below 1e-3
            noise_sd_yr: 0.5,
            noise_sd_yd: 1.0,
            u_y_sd: 1.0,
            u_y_mean: 0.0,
            u_y_ar1: 0.0,
            u_y_lognormal: false,
            base_x: 50.0,
            base_yr: 0.0,
            base_yd: 20.0,
            n_pairs: 100,
            n_days: 90,
            confounded_fraction: 0.5,
            seed: 0,
            id_offset: 0,
            group: None,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("noise_sd_x", self.noise_sd_x),
            ("noise_sd_yr", self.noise_sd_yr),
            ("noise_sd_yd", self.noise_sd_yd),
            ("u_y_sd", self.u_y_sd),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::invalid("sd", format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.confounded_fraction) {
            return Err(Error::invalid("confounded_fraction", "must be in [0, 1]"));
        }
        if self.n_pairs < 1 {
            return Err(Error::invalid("n_pairs", "must be >= 1"));
        }
        if self.n_days < 2 {
            return Err(Error::invalid("n_days", "must be >= 2"));
        }
        if self.u_y_ar1.abs() >= 1.0 {
            return Err(Error::invalid("u_y_ar1", "must be in (-1, 1)"));
        }
        if self.u_y_lognormal && self.u_y_ar1 != 0.0 {
            return Err(Error::invalid(
                "u_y_lognormal",
                "log-normal demand and AR(1) demand cannot be combined",
            ));
        }
        Ok(())
    }

    /// Cov(X, Y_D) implied by the model for confounded pairs:
    /// gamma1 * gamma3 * Var(U_Y).
    pub fn theoretical_cov(&self) -> f64 {
        self.gamma1 * self.gamma3 * self.u_y_sd * self.u_y_sd
    }
}

/// Per-pair ground truth emitted alongside the generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub focal_id: String,
    pub target_id: String,
    pub confounded: bool,
    pub true_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pairs: Vec<PairTruth>,
    /// Values clipped to zero, over all generated values.
    pub floor_count: usize,
    pub value_count: usize,
}

impl GroundTruth {
    pub fn floor_rate(&self) -> f64 {
        if self.value_count == 0 {
            0.0
        } else {
            self.floor_count as f64 / self.value_count as f64
        }
    }
}

// exp(z) with z ~ N(0,1) has mean e^{1/2} and variance (e - 1) e; center
// and rescale so the heavy-tail option keeps the configured sd
fn lognormal_standardized(z: f64) -> f64 {
    let e = std::f64::consts::E;
    let mean = e.sqrt();
    let sd = ((e - 1.0) * e).sqrt();
    (z.exp() - mean) / sd
}

struct PairDraw {
    key: PairKey,
    series: PairSeries,
    truth: PairTruth,
    floor_count: usize,
}

fn generate_pair(params: &GeneratorParams, pair_index: usize) -> PairDraw {
    let confounded_count =
        (params.confounded_fraction * params.n_pairs as f64).round() as usize;
    let confounded = pair_index < confounded_count;
    let (g1, g2) = if confounded {
        (params.gamma1, params.gamma2)
    } else {
        (0.0, 0.0)
    };

    let seed = SeedMix::new(params.seed)
        .mix_str("pair")
        .mix_u64((params.id_offset + pair_index) as u64)
        .finish();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let n = params.n_days;
    let mut x = Vec::with_capacity(n);
    let mut y_r = Vec::with_capacity(n);
    let mut y_d = Vec::with_capacity(n);
    let mut floor_count = 0usize;
    let mut floor = |v: f64| -> f64 {
        if v < 0.0 {
            floor_count += 1;
            0.0
        } else {
            v
        }
    };

    let mut u_y_prev = 0.0;
    for day in 0..n {
        let u_x = normal();
        let innovation = normal();
        let u_y = if params.u_y_lognormal {
            params.u_y_mean + params.u_y_sd * lognormal_standardized(innovation)
        } else if params.u_y_ar1 != 0.0 {
            // stationary AR(1) with marginal sd u_y_sd
            let phi = params.u_y_ar1;
            let centered = if day == 0 {
                params.u_y_sd * innovation
            } else {
                phi * u_y_prev + (1.0 - phi * phi).sqrt() * params.u_y_sd * innovation
            };
            u_y_prev = centered;
            params.u_y_mean + centered
        } else {
            params.u_y_mean + params.u_y_sd * innovation
        };
        let e_x = params.noise_sd_x * normal();
        let e_yr = params.noise_sd_yr * normal();
        let e_yd = params.noise_sd_yd * normal();

        let x_t = floor(params.base_x + params.eta * u_x + g1 * u_y + e_x);
        let y_d_t = floor(params.base_yd + params.gamma3 * u_y + e_yd);
        // y_r is driven by the observed (floored) x, so rho is the exact
        // per-instance estimand on the emitted data
        let y_r_t = floor(params.base_yr + params.rho * x_t + g2 * u_y + e_yr);
        x.push(x_t);
        y_d.push(y_d_t);
        y_r.push(y_r_t);
    }

    let id = params.id_offset + pair_index;
    let key = PairKey {
        focal_id: format!("f{id:06}"),
        target_id: format!("t{id:06}"),
    };
    PairDraw {
        truth: PairTruth {
            focal_id: key.focal_id.clone(),
            target_id: key.target_id.clone(),
            confounded,
            true_rho: params.rho,
        },
        key,
        series: PairSeries { x, y_r, y_d },
        floor_count,
    }
}

/// Generate a panel with known ground truth. Deterministic given the seed
/// and independent of parallel scheduling: every pair derives its own RNG
/// stream from (seed, pair index).
pub fn generate_panel(params: &GeneratorParams) -> Result<(DailyPanel, GroundTruth)> {
    params.validate()?;

    let draws: Vec<PairDraw> = (0..params.n_pairs)
        .into_par_iter()
        .map(|i| generate_pair(params, i))
        .collect();

    let mut panel = DailyPanel {
        start_date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        n_days: params.n_days,
        pairs: Default::default(),
        groups: Default::default(),
    };
    let mut truth = GroundTruth {
        pairs: Vec::with_capacity(params.n_pairs),
        floor_count: 0,
        value_count: 3 * params.n_pairs * params.n_days,
    };
    for draw in draws {
        if let Some(group) = &params.group {
            panel.groups.insert(draw.key.focal_id.clone(), group.clone());
            panel.groups.insert(draw.key.target_id.clone(), group.clone());
        }
        truth.floor_count += draw.floor_count;
        truth.pairs.push(draw.truth);
        panel.pairs.insert(draw.key, draw.series);
    }
    truth.pairs.sort_by(|a, b| {
        (&a.focal_id, &a.target_id).cmp(&(&b.focal_id, &b.target_id))
    });
    Ok((panel, truth))
}
