//! Effect aggregation: per-instance CTRs roll up to per-focal-period
//! totals, then to the global mean, alongside the naive observational
//! baseline computed over all pre-discovery periods.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::discovery::SplitDoorInstance;
use crate::error::{Error, Result};
use crate::panel::PairPeriod;

/// Total causal CTR of one focal page in one period, summed over its
/// accepted targets (per-target CTRs share the same visit denominator,
/// so they add).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalEstimate {
    pub focal_id: String,
    pub period_index: usize,
    pub rho_i_tau: f64,
    pub n_targets: usize,
    /// Treatment traffic in this focal-period window.
    pub x_sum: f64,
}

/// Mean effect over focal estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub rho_hat: f64,
    /// Sample standard deviation of the focal estimates (0 when n = 1).
    pub sigma_hat: f64,
    pub n: usize,
}

/// Group instances by (focal, period) and sum their CTR estimates.
pub fn aggregate_focal(instances: &[SplitDoorInstance]) -> Result<Vec<FocalEstimate>> {
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }
    let mut groups: BTreeMap<(String, usize), FocalEstimate> = BTreeMap::new();
    for inst in instances {
        let entry = groups
            .entry((inst.period.focal_id.clone(), inst.period.period_index))
            .or_insert_with(|| FocalEstimate {
                focal_id: inst.period.focal_id.clone(),
                period_index: inst.period.period_index,
                rho_i_tau: 0.0,
                n_targets: 0,
                x_sum: inst.period.x_sum(),
            });
        entry.rho_i_tau += inst.rho_ij_tau;
        entry.n_targets += 1;
    }
    Ok(groups.into_values().collect())
}

/// Unweighted mean and sample standard deviation of the focal estimates.
pub fn mean_effect(focals: &[FocalEstimate]) -> Result<EffectEstimate> {
    if focals.is_empty() {
        return Err(Error::EmptyInput("focal estimates"));
    }
    let n = focals.len();
    let rho_hat = focals.iter().map(|f| f.rho_i_tau).sum::<f64>() / n as f64;
    let sigma_hat = if n > 1 {
        let ss: f64 = focals
            .iter()
            .map(|f| (f.rho_i_tau - rho_hat) * (f.rho_i_tau - rho_hat))
            .sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(EffectEstimate {
        rho_hat,
        sigma_hat,
        n,
    })
}

/// Traffic-weighted variant: focal estimates weighted by their window's
/// treatment traffic. Diagnostic only, never the headline number.
pub fn weighted_mean_effect(focals: &[FocalEstimate]) -> Result<f64> {
    if focals.is_empty() {
        return Err(Error::EmptyInput("focal estimates"));
    }
    let total_x: f64 = focals.iter().map(|f| f.x_sum).sum();
    if total_x <= 0.0 {
        return Err(Error::ZeroTreatment);
    }
    Ok(focals.iter().map(|f| f.x_sum * f.rho_i_tau).sum::<f64>() / total_x)
}

/// Naive observational CTR: ratio of sums over all pre-discovery periods,
/// with no independence filter.
pub fn naive_ctr(periods: &[PairPeriod]) -> Result<f64> {
    let x_total: f64 = periods.iter().map(PairPeriod::x_sum).sum();
    let y_r_total: f64 = periods.iter().map(PairPeriod::y_r_sum).sum();
    if x_total <= 0.0 {
        return Err(Error::ZeroTreatment);
    }
    Ok(y_r_total / x_total)
}

/// Mean-of-ratios variant of the naive CTR, over periods with positive
/// treatment traffic. Diagnostic only.
pub fn naive_ctr_mean_of_ratios(periods: &[PairPeriod]) -> Result<f64> {
    let ratios: Vec<f64> = periods
        .iter()
        .filter(|p| p.x_sum() > 0.0)
        .map(|p| p.y_r_sum() / p.x_sum())
        .collect();
    if ratios.is_empty() {
        return Err(Error::ZeroTreatment);
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Per-group effect row: causal estimate over the group's accepted
/// instances, and the naive CTR over all periods of the group's focals
/// that have at least one accepted instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub group: String,
    pub n_instances: usize,
    pub n_focals: usize,
    pub causal: EffectEstimate,
    pub naive_ctr: f64,
}

/// Break the estimate down by focal group. Focals without a mapping fall
/// into "unknown". Rows are ordered by instance count, descending.
pub fn group_breakdown(
    instances: &[SplitDoorInstance],
    all_periods: &[PairPeriod],
    focal_groups: &BTreeMap<String, String>,
) -> Result<Vec<GroupEffect>> {
    if instances.is_empty() {
        return Err(Error::NoInstances);
    }
    let group_of = |focal_id: &str| -> String {
        focal_groups
            .get(focal_id)
            .cloned()
            .unwrap_or_else(|| "unknown".to_string())
    };

    let mut by_group: BTreeMap<String, Vec<&SplitDoorInstance>> = BTreeMap::new();
    for inst in instances {
        by_group
            .entry(group_of(&inst.period.focal_id))
            .or_default()
            .push(inst);
    }

    let mut rows = Vec::with_capacity(by_group.len());
    for (group, members) in by_group {
        let owned: Vec<SplitDoorInstance> = members.iter().map(|&i| i.clone()).collect();
        let focals: BTreeSet<&str> = owned
            .iter()
            .map(|i| i.period.focal_id.as_str())
            .collect();
        let group_periods: Vec<PairPeriod> = all_periods
            .iter()
            .filter(|p| focals.contains(p.focal_id.as_str()))
            .cloned()
            .collect();
        rows.push(GroupEffect {
            n_instances: owned.len(),
            n_focals: focals.len(),
            causal: mean_effect(&aggregate_focal(&owned)?)?,
            naive_ctr: naive_ctr(&group_periods)?,
            group,
        });
    }
    rows.sort_by(|a, b| b.n_instances.cmp(&a.n_instances).then(a.group.cmp(&b.group)));
    Ok(rows)
}
