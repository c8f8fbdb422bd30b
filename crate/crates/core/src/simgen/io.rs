//! Long-format CSV for datasets, plus a JSON sidecar carrying the scenario.
//!
//! One row per (subject, internal step):
//! `id,time,x_1..x_D,a,event_time,censor_time,y`. Unobserved covariate cells
//! are written empty.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, GroundTruth, LongitudinalSample, ScenarioConfig};
use crate::error::{Result, TcsError};

pub const SIDECAR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub seed: Option<u64>,
    pub d: usize,
    pub u: usize,
    pub q: usize,
    pub config: Option<ScenarioConfig>,
}

impl DatasetSidecar {
    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Write the sidecar next to the dataset at `csv`.
    pub fn write(&self, csv: &Path) -> Result<()> {
        let side = DatasetSidecar::sidecar_path(csv);
        let json = serde_json::to_string_pretty(self).map_err(|e| TcsError::format(&side, e))?;
        std::fs::write(&side, json + "\n").map_err(|e| TcsError::io(&side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| TcsError::io(path, e))?;
        serde_json::from_reader(file).map_err(|e| TcsError::format(path, e))
    }
}

pub fn header(d: usize) -> Vec<String> {
    let mut cols = vec!["id".to_string(), "time".to_string()];
    cols.extend((1..=d).map(|j| format!("x_{j}")));
    cols.extend(["a", "event_time", "censor_time", "y"].map(String::from));
    cols
}

fn csv_err(path: &Path, e: csv::Error) -> TcsError {
    TcsError::format(path, e)
}

/// Write `dataset` to `path` and its sidecar next to it (`.json`).
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    write_samples_csv(&dataset.samples, dataset.config.d, path)?;
    let sidecar = DatasetSidecar {
        format_version: SIDECAR_VERSION,
        seed: Some(dataset.seed),
        d: dataset.config.d,
        u: dataset.config.u,
        q: dataset.config.q,
        config: Some(dataset.config.clone()),
    };
    sidecar.write(path)
}

pub fn write_samples_csv(samples: &[LongitudinalSample], d: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header(d)).map_err(|e| csv_err(path, e))?;
    let mut record: Vec<String> = Vec::with_capacity(d + 6);
    for sample in samples {
        for s in 1..=sample.steps() {
            record.clear();
            record.push(sample.id.clone());
            record.push(s.to_string());
            for (x, &seen) in sample.x_row(s).iter().zip(sample.mask_row(s)) {
                record.push(if seen { x.to_string() } else { String::new() });
            }
            record.push(sample.a_at(s).to_string());
            record.push(sample.event_time.to_string());
            record.push(sample.censor_time.to_string());
            record.push(u8::from(sample.event()).to_string());
            w.write_record(&record).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| TcsError::io(path, e))
}

/// Ground truth in long format: `id,time,ite,s1,s0,h1,h0` over follow-up steps.
pub fn write_truth_csv(samples: &[LongitudinalSample], truth: &GroundTruth, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TcsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| TcsError::io(path, e);
    writeln!(w, "id,time,ite,s1,s0,h1,h0").map_err(io)?;
    for (i, sample) in samples.iter().enumerate() {
        for k in 0..truth.ite[i].len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                sample.id,
                k + 1,
                truth.ite[i][k],
                truth.survival_1[i][k],
                truth.survival_0[i][k],
                truth.hazard_1[i][k],
                truth.hazard_0[i][k]
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Read a canonical dataset CSV. `u` and `q` come from the sidecar if one
/// exists next to `path`, otherwise from `shape`.
pub fn read_dataset_csv(path: &Path, shape: Option<(usize, usize)>) -> Result<Vec<LongitudinalSample>> {
    let side = DatasetSidecar::sidecar_path(path);
    let (u, q) = match shape {
        Some(s) => s,
        None => {
            let meta = DatasetSidecar::read(&side)?;
            (meta.u, meta.q)
        }
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let d = headers.iter().filter(|h| h.starts_with("x_")).count();
    if headers.iter().collect::<Vec<_>>() != header(d) {
        return Err(TcsError::format(path, "header does not match the canonical dataset layout"));
    }
    let steps = u + q;
    let mut samples: Vec<LongitudinalSample> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| TcsError::format(path, format!("row {}: {what}", line + 2));
        let id = rec[0].to_string();
        let s: usize = rec[1].parse().map_err(|_| bad("time"))?;
        if s < 1 || s > steps {
            return Err(bad("time outside 1..=u+q"));
        }
        let a: u8 = rec[2 + d].parse().map_err(|_| bad("a"))?;
        let event_time: usize = rec[3 + d].parse().map_err(|_| bad("event_time"))?;
        let censor_time: usize = rec[4 + d].parse().map_err(|_| bad("censor_time"))?;
        if samples.last().map_or(true, |p| p.id != id) {
            samples.push(LongitudinalSample {
                id: id.clone(),
                x: vec![0.0; steps * d],
                a: vec![0; steps],
                mask: vec![false; steps * d],
                d,
                u,
                q,
                event_time,
                censor_time,
            });
        }
        let sample = samples.last_mut().expect("pushed above");
        for j in 0..d {
            let cell = &rec[2 + j];
            if !cell.is_empty() {
                sample.x[(s - 1) * d + j] = cell.parse().map_err(|_| bad("covariate"))?;
                sample.mask[(s - 1) * d + j] = true;
            }
        }
        sample.a[s - 1] = a;
    }
    for s in &samples {
        s.check()?;
    }
    Ok(samples)
}
