//! Independence screen over candidate periods at significance level alpha,
//! materializing accepted split-door instances.
//!
//! Tests are alpha-independent: the screen runs once and records every
//! p-value, and thresholding is a separate, cheap step. This is what makes
//! alpha sweeps exact and the monotonicity of accepted sets in alpha a
//! structural property rather than a statistical one.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::independence::{randomization_pvalue, IndependenceResult, NullPool};
use crate::panel::{is_constant, PairPeriod};

/// One accepted period plus its effect estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDoorInstance {
    pub period: PairPeriod,
    pub result: IndependenceResult,
    /// Per-instance CTR estimate: sum(y_r) / sum(x) over the window.
    pub rho_ij_tau: f64,
}

/// One tested period (accepted or not) with its test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TestedPeriod {
    pub period: PairPeriod,
    pub result: IndependenceResult,
}

/// Every period that received a real hypothesis test, in canonical order
/// (focal, target, period index), plus exclusion bookkeeping.
#[derive(Debug, Clone)]
pub struct ScreenedPeriods {
    pub tested: Vec<TestedPeriod>,
    /// Periods with a constant x or y_d window: no meaningful test occurred.
    pub excluded_degenerate: usize,
    /// Periods with sum(x) <= 0: the CTR estimand is undefined there.
    pub excluded_zero_treatment: usize,
    pub n_resamples: usize,
    pub seed: u64,
    pub tau: usize,
}

impl ScreenedPeriods {
    /// Number of hypothesis tests performed.
    pub fn m(&self) -> usize {
        self.tested.len()
    }
}

/// A thresholded screen: the discovery output at one alpha.
#[derive(Debug, Clone)]
pub struct DiscoveryRun {
    pub alpha: f64,
    /// Hypothesis tests performed (accepted and rejected).
    pub m: usize,
    /// Accepted instances.
    pub w: usize,
    /// All m p-values in canonical period order.
    pub all_p_values: Vec<f64>,
    pub instances: Vec<SplitDoorInstance>,
    pub n_resamples: usize,
    pub seed: u64,
    pub tau: usize,
    pub excluded_degenerate: usize,
    pub excluded_zero_treatment: usize,
}

/// Run the randomization test on every period. The null pool is built from
/// the periods' own treatment windows, one entry per (focal, period).
pub fn screen_periods(
    periods: &[PairPeriod],
    n_resamples: usize,
    seed: u64,
) -> Result<ScreenedPeriods> {
    if periods.is_empty() {
        return Err(Error::NoTestablePeriods);
    }
    let pool = NullPool::from_periods(periods)?;

    let mut order: Vec<usize> = (0..periods.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = &periods[a];
        let pb = &periods[b];
        (&pa.focal_id, &pa.target_id, pa.period_index)
            .cmp(&(&pb.focal_id, &pb.target_id, pb.period_index))
    });

    enum Outcome {
        Tested(Box<TestedPeriod>),
        Degenerate,
        ZeroTreatment,
    }

    let outcomes: Vec<Outcome> = order
        .into_par_iter()
        .map(|idx| {
            let period = &periods[idx];
            if is_constant(&period.x_window) || is_constant(&period.y_d_window) {
                return Ok(Outcome::Degenerate);
            }
            if period.x_sum() <= 0.0 {
                return Ok(Outcome::ZeroTreatment);
            }
            let result = randomization_pvalue(period, &pool, n_resamples, seed)?;
            Ok(Outcome::Tested(Box::new(TestedPeriod {
                period: period.clone(),
                result,
            })))
        })
        .collect::<Result<_>>()?;

    let mut screened = ScreenedPeriods {
        tested: Vec::with_capacity(outcomes.len()),
        excluded_degenerate: 0,
        excluded_zero_treatment: 0,
        n_resamples,
        seed,
        tau: periods[0].tau,
    };
    for outcome in outcomes {
        match outcome {
            Outcome::Tested(t) => screened.tested.push(*t),
            Outcome::Degenerate => screened.excluded_degenerate += 1,
            Outcome::ZeroTreatment => screened.excluded_zero_treatment += 1,
        }
    }
    Ok(screened)
}

/// Threshold a screen at one alpha: accept periods with p strictly above
/// alpha and attach their CTR estimates.
pub fn threshold(screened: &ScreenedPeriods, alpha: f64) -> Result<DiscoveryRun> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("must be in (0, 1), got {alpha}")));
    }
    let instances: Vec<SplitDoorInstance> = screened
        .tested
        .iter()
        .filter(|t| t.result.p_value > alpha)
        .map(|t| SplitDoorInstance {
            period: t.period.clone(),
            result: t.result.clone(),
            rho_ij_tau: t.period.y_r_sum() / t.period.x_sum(),
        })
        .collect();
    Ok(DiscoveryRun {
        alpha,
        m: screened.m(),
        w: instances.len(),
        all_p_values: screened.tested.iter().map(|t| t.result.p_value).collect(),
        instances,
        n_resamples: screened.n_resamples,
        seed: screened.seed,
        tau: screened.tau,
        excluded_degenerate: screened.excluded_degenerate,
        excluded_zero_treatment: screened.excluded_zero_treatment,
    })
}

/// Screen and threshold in one call.
pub fn discover(
    periods: &[PairPeriod],
    alpha: f64,
    n_resamples: usize,
    seed: u64,
) -> Result<DiscoveryRun> {
    threshold(&screen_periods(periods, n_resamples, seed)?, alpha)
}
