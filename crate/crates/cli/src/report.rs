//! Report files written by `simulate` and `analyze`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use miqado_core::sim::{aggregate, PayoffRow, SweepResult};
use miqado_core::{canonical, EventRecord, MetricsReport, Regime};
use rust_decimal::Decimal;
use serde::Serialize;

use crate::config::SCHEMA_VERSION;

#[derive(Serialize)]
pub struct Report<'a> {
    pub schema_version: u32,
    pub seed: u64,
    pub regime: Regime,
    pub event_count: usize,
    #[serde(flatten)]
    pub sweep: &'a SweepResult,
}

pub fn report_json(sweep: &SweepResult, regime: Regime, seed: u64) -> anyhow::Result<String> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        seed,
        regime,
        event_count: sweep.baseline.event_count,
        sweep,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    Ok(text)
}

fn csv_text(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> anyhow::Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    write(&mut writer)?;
    let bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?;
    Ok(String::from_utf8(bytes)?)
}

pub fn payoff_csv(rows: &[PayoffRow]) -> anyhow::Result<String> {
    csv_text(|w| {
        if rows.is_empty() {
            w.write_record([
                "lambda",
                "term_secs",
                "sessions",
                "terminated",
                "p_exercise_profit",
                "p_exercise_loss",
                "p_default",
                "p_terminated",
                "mean_profit",
                "std_profit",
            ])?;
        }
        rows.iter().try_for_each(|r| w.serialize(r))
    })
}

/// Flat one-line summary of a report.
#[derive(Serialize)]
struct MetricsLine {
    regime: Regime,
    lambda: Option<Decimal>,
    term_secs: Option<i64>,
    event_count: usize,
    collateral_release_usd: Decimal,
    collateral_restraint_usd: Decimal,
    baseline_release_usd: Decimal,
    release_reduction: Option<Decimal>,
    healthy_fraction_fsl: Decimal,
    healthy_fraction_miqado: Decimal,
    hf_pre_mean: Option<Decimal>,
    hf_post_fsl_mean: Option<Decimal>,
    hf_post_miqado_mean: Option<Decimal>,
    liquidated: usize,
    unsupported: usize,
    terminated: usize,
    exercised: usize,
    defaulted: usize,
    mean_price_decline: Option<Decimal>,
}

impl From<&MetricsReport> for MetricsLine {
    fn from(r: &MetricsReport) -> Self {
        let declines = &r.price_declines;
        let mean_price_decline = (!declines.is_empty()).then(|| {
            canonical(declines.iter().sum::<Decimal>() / Decimal::from(declines.len()))
        });
        MetricsLine {
            regime: r.regime,
            lambda: r.lambda,
            term_secs: r.term_secs,
            event_count: r.event_count,
            collateral_release_usd: r.collateral_release_usd,
            collateral_restraint_usd: r.collateral_restraint_usd,
            baseline_release_usd: r.baseline_release_usd,
            release_reduction: r.release_reduction,
            healthy_fraction_fsl: r.healthy_fraction_fsl,
            healthy_fraction_miqado: r.healthy_fraction_miqado,
            hf_pre_mean: r.hf_pre.mean,
            hf_post_fsl_mean: r.hf_post_fsl.mean,
            hf_post_miqado_mean: r.hf_post_miqado.mean,
            liquidated: r.settlements.liquidated,
            unsupported: r.settlements.unsupported,
            terminated: r.settlements.terminated,
            exercised: r.settlements.exercised,
            defaulted: r.settlements.defaulted,
            mean_price_decline,
        }
    }
}

pub fn metrics_csv<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> anyhow::Result<String> {
    csv_text(|w| {
        reports
            .into_iter()
            .try_for_each(|r| w.serialize(MetricsLine::from(r)))
    })
}

pub fn outcomes_csv<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> anyhow::Result<String> {
    csv_text(|w| records.into_iter().try_for_each(|r| w.serialize(r)))
}

pub fn read_outcomes(bytes: &[u8]) -> anyhow::Result<Vec<EventRecord>> {
    let mut reader = csv::Reader::from_reader(bytes);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("outcomes row {}", i + 1)))
        .collect()
}

/// Group records by regime and sweep cell, in file order of first
/// appearance, and aggregate each group.
pub fn reaggregate(records: &[EventRecord]) -> Vec<MetricsReport> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(Regime, Option<Decimal>, Option<i64>), Vec<EventRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.regime, r.lambda, r.term_secs);
        if !groups.contains_key(&key) {
            order.push(key);
        }
        groups.entry(key).or_default().push(r.clone());
    }
    order
        .into_iter()
        .map(|key| aggregate(key.0, key.1, key.2, &groups[&key]))
        .collect()
}

/// Write every file to a temporary in `dir`, then rename into place.
pub fn write_atomically(dir: &Path, files: &[(&str, String)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot write in {}", dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, target) in staged {
        tmp.persist(&target)
            .with_context(|| format!("cannot write {}", target.display()))?;
    }
    Ok(())
}
