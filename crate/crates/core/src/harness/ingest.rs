//! Long-format CSV ingestion onto the `1..=u+q` step grid.
//!
//! Observation times are binned as `step = floor((time - origin) / bin_width) + 1`.
//! Covariates are averaged within a bin and masked where a bin has no value.
//! Treatment is 1 if any observation in the bin is treated and is carried
//! forward over bins without a treatment observation. Event and censor
//! columns are in follow-up step units.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::simgen::{rng_from_seed, LongitudinalSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSpec {
    pub source: PathBuf,
    pub id_column: String,
    pub time_column: String,
    pub bin_width: f64,
    /// Raw time that starts step 1.
    pub origin: f64,
    /// Covariate columns in order; empty selects every `x_*` column.
    pub covariates: Vec<String>,
    pub treatment: String,
    pub event_time: String,
    pub censor_time: String,
    pub u: usize,
    pub q: usize,
}

impl Default for IngestSpec {
    fn default() -> Self {
        IngestSpec {
            source: PathBuf::new(),
            id_column: "id".into(),
            time_column: "time".into(),
            bin_width: 1.0,
            origin: 1.0,
            covariates: Vec::new(),
            treatment: "a".into(),
            event_time: "event_time".into(),
            censor_time: "censor_time".into(),
            u: 5,
            q: 10,
        }
    }
}

impl IngestSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width.is_finite()) {
            return Err(TcsError::Config("bin_width must be positive and finite".into()));
        }
        if !self.origin.is_finite() {
            return Err(TcsError::Config("origin must be finite".into()));
        }
        if self.u < 1 || self.q < 1 {
            return Err(TcsError::Config("u and q must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.u + self.q
    }

    /// Grid step of a raw time, `None` outside `1..=u+q`.
    pub fn step_of(&self, time: f64) -> Option<usize> {
        let k = ((time - self.origin) / self.bin_width).floor();
        (k >= 0.0 && k < self.steps() as f64).then(|| k as usize + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub samples: Vec<LongitudinalSample>,
    pub rows: usize,
    /// Rows dropped because a field failed to parse.
    pub malformed: usize,
    /// Rows whose time fell outside the grid.
    pub truncated: usize,
}

#[derive(Default)]
struct Accum {
    sum: Vec<f64>,
    count: Vec<u32>,
    treated: Vec<Option<bool>>,
    event_time: Option<f64>,
    censor_time: Option<f64>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| TcsError::Ingestion(format!("missing column {name:?}")))
}

fn parse_opt(cell: &str) -> std::result::Result<Option<f64>, ()> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some).ok_or(())
}

/// Follow-up step of an event or censor value, clipped to the window.
fn follow_up_step(v: f64, cap: usize) -> usize {
    (v.ceil().max(1.0) as usize).min(cap)
}

pub fn ingest_csv(spec: &IngestSpec) -> Result<Ingested> {
    spec.validate()?;
    let path = &spec.source;
    let mut reader = csv::Reader::from_path(path).map_err(|e| TcsError::format(path, e))?;
    let headers = reader.headers().map_err(|e| TcsError::format(path, e))?.clone();
    let id_col = column(&headers, &spec.id_column)?;
    let time_col = column(&headers, &spec.time_column)?;
    let a_col = column(&headers, &spec.treatment)?;
    let ev_col = column(&headers, &spec.event_time)?;
    let ce_col = column(&headers, &spec.censor_time)?;
    let x_cols: Vec<usize> = if spec.covariates.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with("x_"))
            .map(|(i, _)| i)
            .collect()
    } else {
        spec.covariates.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?
    };
    let d = x_cols.len();
    if d == 0 {
        return Err(TcsError::Ingestion("no covariate columns".into()));
    }
    let steps = spec.steps();

    let mut order: Vec<String> = Vec::new();
    let mut subjects: HashMap<String, Accum> = HashMap::new();
    let (mut rows, mut malformed, mut truncated) = (0, 0, 0);
    for rec in reader.records() {
        rows += 1;
        let Ok(rec) = rec else {
            malformed += 1;
            continue;
        };
        let parsed = (|| -> std::result::Result<_, ()> {
            let id = rec.get(id_col).map(str::trim).filter(|s| !s.is_empty()).ok_or(())?;
            let time = parse_opt(rec.get(time_col).ok_or(())?)?.ok_or(())?;
            let x: Vec<Option<f64>> = x_cols
                .iter()
                .map(|&c| parse_opt(rec.get(c).ok_or(())?))
                .collect::<std::result::Result<_, _>>()?;
            let a = parse_opt(rec.get(a_col).ok_or(())?)?;
            let ev = parse_opt(rec.get(ev_col).ok_or(())?)?;
            let ce = parse_opt(rec.get(ce_col).ok_or(())?)?;
            Ok((id.to_string(), time, x, a, ev, ce))
        })();
        let Ok((id, time, x, a, ev, ce)) = parsed else {
            malformed += 1;
            continue;
        };
        let acc = subjects.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Accum {
                sum: vec![0.0; steps * d],
                count: vec![0; steps * d],
                treated: vec![None; steps],
                ..Accum::default()
            }
        });
        acc.event_time = acc.event_time.or(ev);
        acc.censor_time = acc.censor_time.or(ce);
        let Some(s) = spec.step_of(time) else {
            truncated += 1;
            continue;
        };
        for (j, v) in x.iter().enumerate() {
            if let Some(v) = v {
                acc.sum[(s - 1) * d + j] += v;
                acc.count[(s - 1) * d + j] += 1;
            }
        }
        if let Some(a) = a {
            let slot = &mut acc.treated[s - 1];
            *slot = Some(slot.unwrap_or(false) || a >= 0.5);
        }
    }
    if malformed > 0 {
        log::warn!("{}: skipped {malformed} malformed rows", path.display());
    }
    if truncated > 0 {
        log::info!("{}: {truncated} rows outside the {steps}-step grid", path.display());
    }

    let samples = order
        .into_iter()
        .map(|id| {
            let acc = &subjects[&id];
            let mut x = vec![0.0; steps * d];
            let mut mask = vec![false; steps * d];
            for c in 0..steps * d {
                if acc.count[c] > 0 {
                    x[c] = acc.sum[c] / f64::from(acc.count[c]);
                    mask[c] = true;
                }
            }
            let mut last = 0u8;
            let a = acc
                .treated
                .iter()
                .map(|t| {
                    if let Some(t) = t {
                        last = u8::from(*t);
                    }
                    last
                })
                .collect();
            let sample = LongitudinalSample {
                id,
                x,
                a,
                mask,
                d,
                u: spec.u,
                q: spec.q,
                event_time: acc.event_time.map_or(spec.q + 1, |v| follow_up_step(v, spec.q + 1)),
                censor_time: acc.censor_time.map_or(spec.q, |v| follow_up_step(v, spec.q)),
            };
            sample.check()?;
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(TcsError::Ingestion(format!("{}: no usable rows", path.display())));
    }
    Ok(Ingested {
        samples,
        rows,
        malformed,
        truncated,
    })
}

/// Convenience wrapper with default column names.
pub fn ingest_path(path: &Path, u: usize, q: usize) -> Result<Ingested> {
    ingest_csv(&IngestSpec {
        source: path.to_path_buf(),
        u,
        q,
        ..IngestSpec::default()
    })
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    idx
}

/// Subject-level split; the first vector gets `round(train_frac * n)` indices.
pub fn train_test_split(n: usize, train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(TcsError::Config("train fraction must lie in (0, 1)".into()));
    }
    let cut = (train_frac * n as f64).round() as usize;
    if cut == 0 || cut == n {
        return Err(TcsError::Data(format!("{n} subjects cannot be split at {train_frac}")));
    }
    let idx = shuffled(n, seed);
    let (mut a, mut b) = (idx[..cut].to_vec(), idx[cut..].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    Ok((a, b))
}

/// `k` (train, test) folds; every index is tested exactly once.
pub fn k_fold(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(TcsError::Config(format!("cannot form {k} folds from {n} subjects")));
    }
    let idx = shuffled(n, seed);
    Ok((0..k)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (pos, &i) in idx.iter().enumerate() {
                if pos % k == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            train.sort_unstable();
            test.sort_unstable();
            (train, test)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{generate, write_dataset_csv, ScenarioConfig};
    use std::io::Write;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("raw.csv");
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn simgen_export_round_trips() {
        let cfg = ScenarioConfig {
            n: 15,
            ..ScenarioConfig::default()
        };
        let mut ds = generate(&cfg, 2).unwrap();
        ds.samples[1].mask[7] = false;
        ds.samples[1].x[7] = 0.0;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_dataset_csv(&ds, &p).unwrap();
        let got = ingest_path(&p, cfg.u, cfg.q).unwrap();
        assert_eq!(got.samples, ds.samples);
        assert_eq!((got.malformed, got.truncated), (0, 0));
    }

    #[test]
    fn bin_mean_and_mask() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "id,hour,hr,a,ev,ce\n\
             s1,0.0,4,0,,\n\
             s1,1.5,6,1,3,\n\
             s1,4.0,,,,\n\
             s1,99,1,,,\n\
             s1,oops,2,,,\n",
        );
        let spec = IngestSpec {
            source: p,
            time_column: "hour".into(),
            bin_width: 2.0,
            origin: 0.0,
            covariates: vec!["hr".into()],
            event_time: "ev".into(),
            censor_time: "ce".into(),
            u: 1,
            q: 3,
            ..IngestSpec::default()
        };
        let got = ingest_csv(&spec).unwrap();
        assert_eq!((got.rows, got.malformed, got.truncated), (5, 1, 1));
        let s = &got.samples[0];
        assert_eq!(s.x[0], 5.0);
        assert_eq!(s.mask, vec![true, false, false, false]);
        assert_eq!(s.a, vec![1, 1, 1, 1]);
        assert_eq!((s.event_time, s.censor_time), (3, 3));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "id,time,x_1,a,event_time\n1,1,0.5,0,\n");
        let err = ingest_path(&p, 1, 2).unwrap_err();
        assert!(matches!(err, TcsError::Ingestion(ref m) if m.contains("censor_time")), "{err}");
    }

    #[test]
    fn splits_partition() {
        let (a, b) = train_test_split(50, 0.8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (40, 10));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        let folds = k_fold(23, 10, 1).unwrap();
        let mut tested: Vec<usize> = folds.iter().flat_map(|(_, t)| t.clone()).collect();
        tested.sort_unstable();
        assert_eq!(tested, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|(tr, te)| tr.len() + te.len() == 23));
        assert!(k_fold(3, 5, 0).is_err());
    }
}
