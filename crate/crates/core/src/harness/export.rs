//! Result files: `metrics.csv`, `effects.csv`, `cate.json` and `config.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{CateRow, EffectRow, RunResult};
use crate::error::{Result, TcsError};
use crate::metrics::{BiasSummary, MetricReport};

pub const METRICS_FILE: &str = "metrics.csv";
pub const EFFECTS_FILE: &str = "effects.csv";
pub const CATE_FILE: &str = "cate.json";
pub const CONFIG_FILE: &str = "config.json";

pub const METRICS_HEADER: [&str; 16] = [
    "scenario",
    "replicate",
    "estimator",
    "seed",
    "subgroup",
    "time",
    "rmse",
    "mse",
    "bias_ite",
    "bias_ite_skipped",
    "bias_ate",
    "coverage",
    "auroc",
    "auroc_pooled",
    "concordance",
    "error",
];

pub const EFFECTS_HEADER: [&str; 11] = [
    "scenario",
    "replicate",
    "estimator",
    "id",
    "time",
    "ite",
    "lo",
    "hi",
    "s1",
    "s0",
    "true_ite",
];

/// Everything needed to reproduce a run, minus anything machine specific.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub crate_name: String,
    pub crate_version: String,
    pub parallel_feature: bool,
    /// `(scenario, replicate, seed)` for every replicate in the run.
    pub replicate_seeds: Vec<(String, usize, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: RunConfig,
    pub provenance: Provenance,
}

fn fmt_f(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> TcsError {
    TcsError::format(path, e)
}

fn per_time_len(r: &MetricReport) -> usize {
    [
        r.rmse.as_ref().map(Vec::len),
        r.mse.as_ref().map(Vec::len),
        r.bias_ite.as_ref().map(|b| b.per_time.len()),
        r.bias_ate.as_ref().map(|b| b.per_time.len()),
        r.coverage.as_ref().map(Vec::len),
        r.auroc.as_ref().map(Vec::len),
    ]
    .into_iter()
    .flatten()
    .max()
    .unwrap_or(0)
}

fn mean_of_defined<I: IntoIterator<Item = Option<f64>>>(it: I) -> Option<f64> {
    let v: Vec<f64> = it.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn metric_rows(r: &MetricReport) -> Vec<Vec<String>> {
    let q = per_time_len(r);
    let lead = |time: String| {
        vec![
            r.scenario.clone(),
            r.replicate.to_string(),
            r.estimator.clone(),
            r.seed.to_string(),
            r.subgroup.clone(),
            time,
        ]
    };
    let at = |v: &Option<Vec<f64>>, t: usize| v.as_ref().and_then(|v| v.get(t).copied());
    let bias_at = |b: &Option<BiasSummary>, t: usize| b.as_ref().and_then(|b| b.per_time.get(t).copied().flatten());
    let mut rows = Vec::with_capacity(q + 1);
    for t in 0..q {
        let mut row = lead((t + 1).to_string());
        row.extend([
            fmt_opt(at(&r.rmse, t)),
            fmt_opt(at(&r.mse, t)),
            fmt_opt(bias_at(&r.bias_ite, t)),
            r.bias_ite
                .as_ref()
                .and_then(|b| b.skipped.get(t))
                .map(ToString::to_string)
                .unwrap_or_default(),
            fmt_opt(bias_at(&r.bias_ate, t)),
            fmt_opt(at(&r.coverage, t)),
            fmt_opt(r.auroc.as_ref().and_then(|a| a.get(t).copied().flatten())),
            String::new(),
            String::new(),
            String::new(),
        ]);
        rows.push(row);
    }
    let mut row = lead("mean".into());
    row.extend([
        fmt_opt(r.mean_rmse()),
        fmt_opt(r.mse.as_deref().map(crate::metrics::mean)),
        fmt_opt(r.bias_ite.as_ref().and_then(|b| mean_of_defined(b.per_time.iter().copied()))),
        r.bias_ite
            .as_ref()
            .map(|b| b.total_skipped().to_string())
            .unwrap_or_default(),
        fmt_opt(r.bias_ate.as_ref().and_then(|b| mean_of_defined(b.per_time.iter().copied()))),
        fmt_opt(r.mean_coverage()),
        fmt_opt(r.auroc.as_ref().and_then(|a| mean_of_defined(a.iter().copied()))),
        fmt_opt(r.auroc_pooled),
        fmt_opt(r.concordance),
        r.error.clone().unwrap_or_default(),
    ]);
    rows.push(row);
    rows
}

pub fn write_metrics_csv(reports: &[MetricReport], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(METRICS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in reports {
        for row in metric_rows(r) {
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| TcsError::io(path, e))
}

fn parse_cell<T: std::str::FromStr>(path: &Path, line: usize, col: &str, cell: &str) -> Result<Option<T>> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse()
        .map(Some)
        .map_err(|_| TcsError::format(path, format!("line {line}: bad {col} value {cell:?}")))
}

/// Read reports back from a `metrics.csv` written by [`write_metrics_csv`].
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricReport>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(METRICS_HEADER) {
        return Err(TcsError::format(path, "unexpected metrics header"));
    }
    let mut out: Vec<MetricReport> = Vec::new();
    // per-time cells collected until the closing "mean" row
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); 6];
    let mut skipped: Vec<Option<usize>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |c: usize| parse_cell::<f64>(path, line, METRICS_HEADER[c], &rec[c]);
        if &rec[5] != "mean" {
            for (k, c) in [6, 7, 8, 10, 11, 12].into_iter().enumerate() {
                cols[k].push(f(c)?);
            }
            skipped.push(parse_cell(path, line, "bias_ite_skipped", &rec[9])?);
            continue;
        }
        let replicate = parse_cell(path, line, "replicate", &rec[1])?
            .ok_or_else(|| TcsError::format(path, format!("line {line}: missing replicate")))?;
        let seed = parse_cell(path, line, "seed", &rec[3])?
            .ok_or_else(|| TcsError::format(path, format!("line {line}: missing seed")))?;
        let mut rep = MetricReport::empty(&rec[0], replicate, &rec[2], seed);
        rep.subgroup = rec[4].to_string();
        let dense = |v: &[Option<f64>]| -> Option<Vec<f64>> {
            (!v.is_empty() && v.iter().all(Option::is_some)).then(|| v.iter().flatten().copied().collect())
        };
        rep.rmse = dense(&cols[0]);
        rep.mse = dense(&cols[1]);
        if skipped.iter().any(Option::is_some) {
            rep.bias_ite = Some(BiasSummary {
                per_time: cols[2].clone(),
                skipped: skipped.iter().map(|s| s.unwrap_or(0)).collect(),
            });
        }
        if cols[3].iter().any(Option::is_some) {
            rep.bias_ate = Some(BiasSummary {
                per_time: cols[3].clone(),
                skipped: cols[3].iter().map(|v| usize::from(v.is_none())).collect(),
            });
        }
        rep.coverage = dense(&cols[4]);
        if !cols[5].is_empty() && (rep.rmse.is_some() || cols[5].iter().any(Option::is_some)) {
            rep.auroc = Some(cols[5].clone());
        }
        rep.auroc_pooled = f(13)?;
        rep.concordance = f(14)?;
        rep.error = (!rec[15].is_empty()).then(|| rec[15].to_string());
        out.push(rep);
        cols.iter_mut().for_each(Vec::clear);
        skipped.clear();
    }
    if cols.iter().any(|c| !c.is_empty()) {
        return Err(TcsError::format(path, "per-time rows without a closing mean row"));
    }
    Ok(out)
}

pub fn write_effects_rows(rows: &[EffectRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(EFFECTS_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.replicate.to_string(),
            r.estimator.clone(),
            r.id.clone(),
            r.time.to_string(),
            fmt_f(r.ite),
            fmt_f(r.lo),
            fmt_f(r.hi),
            fmt_f(r.s1),
            fmt_f(r.s0),
            fmt_f(r.true_ite),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| TcsError::io(path, e))
}

pub fn write_cate_rows(rows: &[CateRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TcsError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), rows).map_err(|e| TcsError::format(path, e))
}

pub fn provenance(result: &RunResult) -> Provenance {
    let mut seeds: Vec<(String, usize, u64)> = result
        .reports
        .iter()
        .map(|r| (r.scenario.clone(), r.replicate, r.seed))
        .collect();
    seeds.dedup();
    Provenance {
        crate_name: env!("CARGO_PKG_NAME").to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        parallel_feature: cfg!(feature = "parallel"),
        replicate_seeds: seeds,
    }
}

pub fn write_config_json(cfg: &RunConfig, result: &RunResult, path: &Path) -> Result<()> {
    let record = RunRecord {
        run: cfg.clone(),
        provenance: provenance(result),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| TcsError::format(path, e))?;
    fs::write(path, json + "\n").map_err(|e| TcsError::io(path, e))
}

/// Write the four result files into `dir`, creating it if needed.
pub fn export_results(cfg: &RunConfig, result: &RunResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TcsError::io(dir, e))?;
    write_metrics_csv(&result.reports, &dir.join(METRICS_FILE))?;
    write_effects_rows(&result.effects, &dir.join(EFFECTS_FILE))?;
    write_cate_rows(&result.cate, &dir.join(CATE_FILE))?;
    write_config_json(cfg, result, &dir.join(CONFIG_FILE))
}
