//! Monotonicity audits over results CSVs.
//!
//! Two layouts are accepted: the long layout written by audits
//! (`predictor_id, measure_kind, measure_value, expected_cost`) and the wide
//! layout of the results files (an id column, a `cost` column and one column
//! per measure among `mse`, `regret`, `loglik`). Empty cells are skipped.

use std::io::Write;
use std::path::Path;

use poc_core::measures::{monotonicity_audit, read_audit_csv, AuditEntry, AuditReport, MeasureKind};
use poc_core::PocError;

use crate::error::CliError;

const ID_COLUMNS: [&str; 3] = ["predictor_id", "id", "p_b"];

/// Audit entries grouped by measure, in first-seen order.
pub type MeasureTables = Vec<(MeasureKind, Vec<AuditEntry>)>;

pub fn read_results(path: &Path) -> Result<MeasureTables, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_results(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_results(bytes: &[u8]) -> Result<MeasureTables, String> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().any(|h| h == "measure_kind") {
        return read_audit_csv(bytes).map_err(|e| e.to_string());
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let id = ID_COLUMNS
        .iter()
        .find_map(|c| find(c))
        .ok_or_else(|| format!("missing id column (one of {})", ID_COLUMNS.join(", ")))?;
    let cost = find("cost").ok_or("missing column 'cost'")?;
    let measures: Vec<(MeasureKind, usize)> = MeasureKind::ALL
        .iter()
        .filter_map(|k| find(k.name()).map(|i| (*k, i)))
        .collect();
    if measures.is_empty() {
        return Err("no measure column (mse, regret or loglik)".into());
    }
    let mut tables: MeasureTables = measures.iter().map(|(k, _)| (*k, Vec::new())).collect();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| e.to_string())?;
        let number = |col: usize| -> Result<f64, String> {
            record[col]
                .trim()
                .parse()
                .map_err(|_| format!("row {}: column '{}' value '{}' is not a number", line + 2, &headers[col], &record[col]))
        };
        let c = number(cost)?;
        for ((_, col), (_, entries)) in measures.iter().zip(tables.iter_mut()) {
            if record[*col].trim().is_empty() {
                continue;
            }
            entries.push(AuditEntry::new(&record[id], number(*col)?, c));
        }
    }
    if tables.iter().all(|(_, e)| e.is_empty()) {
        return Err("no data rows".into());
    }
    Ok(tables)
}

/// Merges tables from several files, keeping the measure order of first appearance.
pub fn merge(tables: impl IntoIterator<Item = MeasureTables>) -> MeasureTables {
    let mut merged: MeasureTables = Vec::new();
    for t in tables {
        for (kind, entries) in t {
            match merged.iter_mut().find(|(k, _)| *k == kind) {
                Some((_, e)) => e.extend(entries),
                None => merged.push((kind, entries)),
            }
        }
    }
    merged
}

/// One audited measure.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditOutcome {
    pub group: String,
    pub kind: MeasureKind,
    pub entries: Vec<AuditEntry>,
    pub report: AuditReport,
}

pub fn audit_tables(group: &str, tables: MeasureTables, tolerance: f64) -> Result<Vec<AuditOutcome>, PocError> {
    tables
        .into_iter()
        .filter(|(_, e)| !e.is_empty())
        .map(|(kind, entries)| {
            let report = monotonicity_audit(&entries, tolerance)
                .map_err(|e| PocError::Precondition(format!("{kind} audit: {e}")))?;
            Ok(AuditOutcome {
                group: group.to_string(),
                kind,
                entries,
                report,
            })
        })
        .collect()
}

fn join_ids(entries: &[AuditEntry], idx: &[usize]) -> String {
    idx.iter()
        .map(|&i| entries[i].predictor_id.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `group, measure, entries, violations, measure_argmin, cost_argmin,
/// better_p_lower_c, best_p_lowest_c, kendall_tau`.
pub fn write_summary_csv<W: Write>(writer: W, outcomes: &[AuditOutcome]) -> Result<(), PocError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "measure",
        "entries",
        "violations",
        "measure_argmin",
        "cost_argmin",
        "better_p_lower_c",
        "best_p_lowest_c",
        "kendall_tau",
    ])?;
    for o in outcomes {
        let r = &o.report;
        w.write_record([
            o.group.clone(),
            o.kind.name().to_string(),
            o.entries.len().to_string(),
            r.violations.len().to_string(),
            join_ids(&o.entries, &r.measure_argmin),
            join_ids(&o.entries, &r.cost_argmin),
            r.better_p_lower_c().to_string(),
            r.best_p_lowest_c().to_string(),
            format!("{:?}", r.kendall_tau),
        ])?;
    }
    w.flush().map_err(|e| PocError::Format(e.to_string()))
}

/// Human-readable verdict lines.
pub fn describe(outcomes: &[AuditOutcome]) -> String {
    let mut text = String::new();
    for o in outcomes {
        let r = &o.report;
        text.push_str(&format!(
            "{} {}: {} entries, {} violations, better-P-lower-C {}, best-P-lowest-C {}, kendall tau {:.4}\n",
            o.group,
            o.kind,
            o.entries.len(),
            r.violations.len(),
            if r.better_p_lower_c() { "yes" } else { "no" },
            if r.best_p_lowest_c() { "yes" } else { "no" },
            r.kendall_tau
        ));
    }
    text
}

/// `group, measure, better_id, worse_id, measure_better, measure_worse, cost_better, cost_worse`:
/// one row per pair where the better measure comes with the higher cost.
pub fn write_violations_csv<W: Write>(writer: W, outcomes: &[AuditOutcome]) -> Result<(), PocError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "measure",
        "better_id",
        "worse_id",
        "measure_better",
        "measure_worse",
        "cost_better",
        "cost_worse",
    ])?;
    for o in outcomes {
        for v in &o.report.violations {
            w.write_record([
                o.group.clone(),
                o.kind.name().to_string(),
                o.entries[v.i].predictor_id.clone(),
                o.entries[v.j].predictor_id.clone(),
                format!("{:?}", v.measure_i),
                format!("{:?}", v.measure_j),
                format!("{:?}", v.cost_i),
                format!("{:?}", v.cost_j),
            ])?;
        }
    }
    w.flush().map_err(|e| PocError::Format(e.to_string()))
}
