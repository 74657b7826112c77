//! Domain types and data preparation: event ingestion, daily aggregation,
//! period slicing, and the pre-test filters.
//!
//! The unit of analysis is a (focal, target) pair observed daily:
//! `x` is traffic to the focal page (the treatment), `y_r` is referred
//! traffic from the focal page to the target, and `y_d` is direct traffic
//! to the target through any other channel. All series share one calendar
//! with missing days zero-filled.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a visit arrived at a page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Click-through from a focal page to the visited page.
    Referred,
    /// Any other arrival (search, navigation, ...). The focal id is ignored.
    Direct,
}

/// One raw log row: a dated visit to `target_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitEvent {
    pub date: NaiveDate,
    /// Referrer page for `Channel::Referred`; ignored for `Channel::Direct`.
    pub focal_id: String,
    /// The page visited.
    pub target_id: String,
    pub channel: Channel,
    /// Optional group label for the visited page (e.g. a product category).
    pub group: Option<String>,
    pub count: u64,
}

/// Identity of one (focal, target) pair. Ordering is the canonical merge
/// order used everywhere downstream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub focal_id: String,
    pub target_id: String,
}

/// Aligned daily series for one pair. All three vectors share the panel's
/// calendar index.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    pub x: Vec<f64>,
    pub y_r: Vec<f64>,
    pub y_d: Vec<f64>,
}

/// Daily panel over a gap-free calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPanel {
    pub start_date: NaiveDate,
    pub n_days: usize,
    pub pairs: BTreeMap<PairKey, PairSeries>,
    /// Group label per page id (focal or target); used for breakdowns.
    pub groups: BTreeMap<String, String>,
}

impl DailyPanel {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn date_of(&self, day_index: usize) -> NaiveDate {
        self.start_date + chrono::Days::new(day_index as u64)
    }

    pub fn group_of(&self, id: &str) -> Option<&str> {
        self.groups.get(id).map(String::as_str)
    }

    /// Merge two panels with identical calendars and disjoint pairs.
    pub fn merge(mut self, other: DailyPanel) -> Result<DailyPanel> {
        if self.start_date != other.start_date || self.n_days != other.n_days {
            return Err(Error::invalid("panel", "merge requires identical calendars"));
        }
        for (key, series) in other.pairs {
            if self.pairs.insert(key.clone(), series).is_some() {
                return Err(Error::invalid(
                    "panel",
                    format!("merge collision on pair ({}, {})", key.focal_id, key.target_id),
                ));
            }
        }
        for (id, group) in other.groups {
            self.groups.entry(id).or_insert(group);
        }
        Ok(self)
    }
}

/// One candidate (focal, target, window) slice — the unit of independence
/// testing and, once accepted, of effect estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPeriod {
    pub focal_id: String,
    pub target_id: String,
    pub period_index: usize,
    pub start_date: NaiveDate,
    pub tau: usize,
    pub x_window: Vec<f64>,
    pub y_r_window: Vec<f64>,
    pub y_d_window: Vec<f64>,
}

impl PairPeriod {
    pub fn key(&self) -> PairKey {
        PairKey {
            focal_id: self.focal_id.clone(),
            target_id: self.target_id.clone(),
        }
    }

    pub fn x_sum(&self) -> f64 {
        self.x_window.iter().sum()
    }

    pub fn y_r_sum(&self) -> f64 {
        self.y_r_window.iter().sum()
    }
}

pub(crate) fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Aggregate a stream of visit events into a daily panel.
///
/// Pairs are the (focal, target) combinations observed in referred events.
/// For each pair, `x` counts all visits to the focal page (any channel),
/// `y_r` counts referred visits from focal to target, and `y_d` counts
/// direct visits to the target. Output is independent of event order.
pub fn ingest_events<I>(events: I) -> Result<DailyPanel>
where
    I: IntoIterator<Item = VisitEvent>,
{
    // integer accumulators keep daily sums exact, hence order-invariant
    let mut page_visits: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    let mut referred: BTreeMap<PairKey, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    let mut direct: BTreeMap<String, BTreeMap<NaiveDate, u64>> = BTreeMap::new();
    let mut group_labels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    let mut min_date: Option<NaiveDate> = None;
    let mut max_date: Option<NaiveDate> = None;
    let mut n_events = 0usize;

    for ev in events {
        n_events += 1;
        min_date = Some(min_date.map_or(ev.date, |d| d.min(ev.date)));
        max_date = Some(max_date.map_or(ev.date, |d| d.max(ev.date)));

        *page_visits
            .entry(ev.target_id.clone())
            .or_default()
            .entry(ev.date)
            .or_insert(0) += ev.count;

        match ev.channel {
            Channel::Referred => {
                let key = PairKey {
                    focal_id: ev.focal_id,
                    target_id: ev.target_id.clone(),
                };
                *referred.entry(key).or_default().entry(ev.date).or_insert(0) += ev.count;
            }
            Channel::Direct => {
                *direct
                    .entry(ev.target_id.clone())
                    .or_default()
                    .entry(ev.date)
                    .or_insert(0) += ev.count;
            }
        }

        if let Some(group) = ev.group {
            group_labels.entry(ev.target_id).or_default().insert(group);
        }
    }

    if n_events == 0 {
        return Err(Error::NoValidEvents);
    }
    let start_date = min_date.unwrap();
    let n_days = (max_date.unwrap() - start_date).num_days() as usize + 1;

    let fill = |daily: Option<&BTreeMap<NaiveDate, u64>>| -> Vec<f64> {
        let mut v = vec![0.0; n_days];
        if let Some(daily) = daily {
            for (date, count) in daily {
                let idx = (*date - start_date).num_days() as usize;
                v[idx] = *count as f64;
            }
        }
        v
    };

    let mut pairs = BTreeMap::new();
    for (key, y_r_daily) in &referred {
        let series = PairSeries {
            x: fill(page_visits.get(&key.focal_id)),
            y_r: fill(Some(y_r_daily)),
            y_d: fill(direct.get(&key.target_id)),
        };
        pairs.insert(key.clone(), series);
    }

    // lexicographically smallest observed label wins, for order invariance
    let groups = group_labels
        .into_iter()
        .filter_map(|(id, labels)| labels.into_iter().next().map(|g| (id, g)))
        .collect();

    Ok(DailyPanel {
        start_date,
        n_days,
        pairs,
        groups,
    })
}

/// Keep pairs whose focal series peaks at or above `min_peak` on some day.
pub fn apply_popularity_filter(panel: DailyPanel, min_peak: f64) -> Result<DailyPanel> {
    if min_peak.is_nan() || min_peak < 0.0 {
        return Err(Error::invalid("min_peak", "must be >= 0"));
    }
    let DailyPanel {
        start_date,
        n_days,
        pairs,
        groups,
    } = panel;
    let pairs = pairs
        .into_iter()
        .filter(|(_, series)| series.x.iter().any(|&v| v >= min_peak))
        .collect();
    Ok(DailyPanel {
        start_date,
        n_days,
        pairs,
        groups,
    })
}

/// Cut every pair's series into consecutive non-overlapping windows of
/// `tau` days, aligned to the panel's first calendar day. A trailing
/// partial window is dropped.
pub fn slice_periods(panel: &DailyPanel, tau: usize) -> Result<Vec<PairPeriod>> {
    if tau < 2 {
        return Err(Error::invalid(
            "tau",
            "window length must be >= 2 (independence test undefined on shorter windows)",
        ));
    }
    if panel.pairs.is_empty() {
        return Err(Error::EmptyInput("panel has no pairs"));
    }

    let n_periods = panel.n_days / tau;
    let mut periods = Vec::with_capacity(panel.n_pairs() * n_periods);
    for (key, series) in &panel.pairs {
        for k in 0..n_periods {
            let range = k * tau..(k + 1) * tau;
            periods.push(PairPeriod {
                focal_id: key.focal_id.clone(),
                target_id: key.target_id.clone(),
                period_index: k,
                start_date: panel.date_of(k * tau),
                tau,
                x_window: series.x[range.clone()].to_vec(),
                y_r_window: series.y_r[range.clone()].to_vec(),
                y_d_window: series.y_d[range].to_vec(),
            });
        }
    }
    Ok(periods)
}

/// Drop periods whose direct-outcome window is exactly constant; those pass
/// any empirical independence test trivially and carry no signal.
///
/// Returns the surviving periods and the number removed.
pub fn filter_constant_direct(periods: Vec<PairPeriod>) -> (Vec<PairPeriod>, usize) {
    let before = periods.len();
    let kept: Vec<PairPeriod> = periods
        .into_iter()
        .filter(|p| !is_constant(&p.y_d_window))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}
