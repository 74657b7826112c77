//! CSV interfaces: event logs, pre-aggregated panels, and the run
//! artifacts (instances, p-values, histogram, groups, sweep, surface).
//!
//! All files are UTF-8, comma-separated, RFC-4180 quoted. Floats are
//! written with Rust's shortest round-trip formatting, so reading a file
//! back reproduces the exact values.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::discovery::{SplitDoorInstance, TestedPeriod};
use crate::error::{Error, Result};
use crate::estimation::GroupEffect;
use crate::panel::{ingest_events, Channel, DailyPanel, PairKey, PairSeries, VisitEvent};
use crate::sensitivity::SurfaceCell;
use crate::synth::GroundTruth;

/// A rejected input row: line number (1-based, header is line 1) and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn csv_read_error(path: &Path, reason: impl ToString) -> Error {
    Error::CsvRead {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got_cols: Vec<&str> = got.iter().map(str::trim).collect();
    if got_cols != want {
        return Err(csv_read_error(
            path,
            format!("expected header `{}`, got `{}`", want.join(","), got_cols.join(",")),
        ));
    }
    Ok(())
}

const EVENT_HEADER: [&str; 6] = ["date", "focal_id", "target_id", "channel", "group", "count"];

/// Read an event CSV. Malformed rows are rejected individually with their
/// line numbers; the read continues. Fails outright only on unreadable
/// files or a wrong header.
pub fn read_events_csv(path: &Path) -> Result<(Vec<VisitEvent>, Vec<RowError>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_read_error(path, e))?;
    check_header(path, reader.headers().map_err(|e| csv_read_error(path, e))?, &EVENT_HEADER)?;

    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError {
                    line: e.position().map_or(0, csv::Position::line),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, csv::Position::line);
        match parse_event(&record) {
            Ok(event) => events.push(event),
            Err(message) => rejected.push(RowError { line, message }),
        }
    }
    Ok((events, rejected))
}

fn parse_event(record: &csv::StringRecord) -> std::result::Result<VisitEvent, String> {
    if record.len() != EVENT_HEADER.len() {
        return Err(format!("expected {} fields, got {}", EVENT_HEADER.len(), record.len()));
    }
    let date: NaiveDate = record[0]
        .trim()
        .parse()
        .map_err(|e| format!("bad date `{}`: {e}", &record[0]))?;
    let channel = match record[3].trim().to_ascii_lowercase().as_str() {
        "referred" => Channel::Referred,
        "direct" => Channel::Direct,
        other => return Err(format!("bad channel `{other}` (expected referred|direct)")),
    };
    let group = match record[4].trim() {
        "" => None,
        g => Some(g.to_string()),
    };
    let count = match record[5].trim() {
        "" => 1,
        raw => raw
            .parse::<u64>()
            .map_err(|e| format!("bad count `{raw}`: {e}"))?,
    };
    Ok(VisitEvent {
        date,
        focal_id: record[1].trim().to_string(),
        target_id: record[2].trim().to_string(),
        channel,
        group,
        count,
    })
}

/// Read an event CSV and aggregate it into a panel in one step.
pub fn ingest_events_csv(path: &Path) -> Result<(DailyPanel, Vec<RowError>)> {
    let (events, rejected) = read_events_csv(path)?;
    let panel = ingest_events(events)?;
    Ok((panel, rejected))
}

const PANEL_HEADER: [&str; 7] = ["date", "focal_id", "target_id", "x", "y_r", "y_d", "group"];

/// Read a pre-aggregated panel CSV. The group column labels the focal
/// page. Duplicate (date, focal, target) rows overwrite earlier ones.
pub fn read_panel_csv(path: &Path) -> Result<(DailyPanel, Vec<RowError>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_read_error(path, e))?;
    check_header(path, reader.headers().map_err(|e| csv_read_error(path, e))?, &PANEL_HEADER)?;

    struct Row {
        date: NaiveDate,
        key: PairKey,
        x: f64,
        y_r: f64,
        y_d: f64,
        group: Option<String>,
    }

    let mut rows: Vec<Row> = Vec::new();
    let mut rejected = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowError {
                    line: e.position().map_or(0, csv::Position::line),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, csv::Position::line);
        let parse = || -> std::result::Result<Row, String> {
            if record.len() != PANEL_HEADER.len() {
                return Err(format!(
                    "expected {} fields, got {}",
                    PANEL_HEADER.len(),
                    record.len()
                ));
            }
            let date: NaiveDate = record[0]
                .trim()
                .parse()
                .map_err(|e| format!("bad date `{}`: {e}", &record[0]))?;
            let num = |idx: usize, name: &str| -> std::result::Result<f64, String> {
                let v: f64 = record[idx]
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad {name} `{}`: {e}", &record[idx]))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(format!("{name} must be a finite nonnegative number, got {v}"));
                }
                Ok(v)
            };
            Ok(Row {
                date,
                key: PairKey {
                    focal_id: record[1].trim().to_string(),
                    target_id: record[2].trim().to_string(),
                },
                x: num(3, "x")?,
                y_r: num(4, "y_r")?,
                y_d: num(5, "y_d")?,
                group: match record[6].trim() {
                    "" => None,
                    g => Some(g.to_string()),
                },
            })
        };
        match parse() {
            Ok(row) => rows.push(row),
            Err(message) => rejected.push(RowError { line, message }),
        }
    }

    if rows.is_empty() {
        return Err(Error::NoValidEvents);
    }
    let start_date = rows.iter().map(|r| r.date).min().unwrap();
    let end_date = rows.iter().map(|r| r.date).max().unwrap();
    let n_days = (end_date - start_date).num_days() as usize + 1;

    let mut pairs: BTreeMap<PairKey, PairSeries> = BTreeMap::new();
    let mut groups: BTreeMap<String, String> = BTreeMap::new();
    for row in rows {
        let day = (row.date - start_date).num_days() as usize;
        let series = pairs.entry(row.key.clone()).or_insert_with(|| PairSeries {
            x: vec![0.0; n_days],
            y_r: vec![0.0; n_days],
            y_d: vec![0.0; n_days],
        });
        series.x[day] = row.x;
        series.y_r[day] = row.y_r;
        series.y_d[day] = row.y_d;
        if let Some(group) = row.group {
            groups.insert(row.key.focal_id.clone(), group);
        }
    }

    Ok((
        DailyPanel {
            start_date,
            n_days,
            pairs,
            groups,
        },
        rejected,
    ))
}

/// Write a panel CSV covering every day of every pair.
pub fn write_panel_csv(panel: &DailyPanel, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(PANEL_HEADER)?;
    for (key, series) in &panel.pairs {
        let group = panel.group_of(&key.focal_id).unwrap_or("");
        for day in 0..panel.n_days {
            writer.write_record([
                panel.date_of(day).to_string().as_str(),
                &key.focal_id,
                &key.target_id,
                &series.x[day].to_string(),
                &series.y_r[day].to_string(),
                &series.y_d[day].to_string(),
                group,
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn write_ground_truth_csv(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["focal_id", "target_id", "confounded", "true_rho"])?;
    for pair in &truth.pairs {
        writer.write_record([
            pair.focal_id.as_str(),
            &pair.target_id,
            if pair.confounded { "true" } else { "false" },
            &pair.true_rho.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// One row of an instances CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub focal_id: String,
    pub target_id: String,
    pub period_index: usize,
    pub p_value: f64,
    pub statistic: f64,
    pub rho_ij_tau: f64,
}

pub fn write_instances_csv(instances: &[SplitDoorInstance], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "focal_id",
        "target_id",
        "period_index",
        "p_value",
        "statistic",
        "rho_ij_tau",
    ])?;
    for inst in instances {
        writer.write_record([
            inst.period.focal_id.as_str(),
            &inst.period.target_id,
            &inst.period.period_index.to_string(),
            &inst.result.p_value.to_string(),
            &inst.result.statistic.to_string(),
            &inst.rho_ij_tau.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_instances_csv(path: &Path) -> Result<Vec<InstanceRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_read_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.deserialize() {
        let row: InstanceRecord = record.map_err(|e| csv_read_error(path, e))?;
        out.push(row);
    }
    Ok(out)
}

/// Every tested period's p-value and statistic, accepted or not.
pub fn write_pvalues_csv(tested: &[TestedPeriod], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["focal_id", "target_id", "period_index", "p_value", "statistic"])?;
    for t in tested {
        writer.write_record([
            t.period.focal_id.as_str(),
            &t.period.target_id,
            &t.period.period_index.to_string(),
            &t.result.p_value.to_string(),
            &t.result.statistic.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_pvalue_hist_csv(counts: &[usize], path: &Path) -> Result<()> {
    let bins = counts.len();
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, count) in counts.iter().enumerate() {
        writer.write_record([
            (i as f64 / bins as f64).to_string().as_str(),
            &((i + 1) as f64 / bins as f64).to_string(),
            &count.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_groups_csv(groups: &[GroupEffect], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["group", "n_instances", "n_focals", "causal_ctr", "naive_ctr"])?;
    for row in groups {
        writer.write_record([
            row.group.as_str(),
            &row.n_instances.to_string(),
            &row.n_focals.to_string(),
            &row.causal.rho_hat.to_string(),
            &row.naive_ctr.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_surface_csv(cells: &[SurfaceCell], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["c1", "c2", "kappa", "deviation", "predicted_bias"])?;
    for cell in cells {
        writer.write_record([
            cell.c1.to_string().as_str(),
            &cell.c2.to_string(),
            &cell.kappa.to_string(),
            &cell.deviation.to_string(),
            &cell.predicted_bias.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
