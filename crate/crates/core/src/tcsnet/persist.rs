use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::effects::EffectEstimate;
use super::network::{FeatureScaler, OutcomeArch, OutcomeNet, PropensityNet};
use super::train::{Ensemble, EstimatorKind, Member, TrainConfig};
use crate::error::{Result, TcsError};
use crate::ndgrad::Checkpoint;
use crate::simgen::rng_from_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MemberMeta {
    seed: u64,
    outcome_scaler: FeatureScaler,
    propensity: Option<PropensityMeta>,
    loss_history: Vec<f64>,
    propensity_history: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PropensityMeta {
    scaler: FeatureScaler,
    hidden: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnsembleMeta {
    crate_version: String,
    kind: EstimatorKind,
    config: TrainConfig,
    arch: OutcomeArch,
    members: Vec<MemberMeta>,
}

pub fn save_ensemble(ensemble: &Ensemble, path: &Path) -> Result<()> {
    let arch = ensemble
        .arch()
        .ok_or_else(|| TcsError::Usage("cannot save an ensemble without members".into()))?;
    let meta = EnsembleMeta {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: ensemble.kind,
        config: ensemble.config,
        arch,
        members: ensemble
            .members
            .iter()
            .map(|m| MemberMeta {
                seed: m.seed,
                outcome_scaler: m.outcome.scaler.clone(),
                propensity: m.propensity.as_ref().map(|p| PropensityMeta {
                    scaler: p.scaler.clone(),
                    hidden: p.hidden(),
                }),
                loss_history: m.loss_history.clone(),
                propensity_history: m.propensity_history.clone(),
            })
            .collect(),
    };
    let meta = serde_json::to_value(&meta).map_err(|e| TcsError::format(path, e.to_string()))?;
    let file = File::create(path).map_err(|e| TcsError::io(path, e))?;
    Checkpoint::capture(ensemble, meta).write_to(BufWriter::new(file))
}

pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    let file = File::open(path).map_err(|e| TcsError::io(path, e))?;
    let ck = Checkpoint::read_from(BufReader::new(file))?;
    let meta: EnsembleMeta =
        serde_json::from_value(ck.header.meta.clone()).map_err(|e| TcsError::format(path, e.to_string()))?;
    let mut rng = rng_from_seed(0);
    let members = meta
        .members
        .into_iter()
        .map(|m| Member {
            seed: m.seed,
            propensity: m.propensity.map(|p| PropensityNet::new(p.scaler, p.hidden, &mut rng)),
            outcome: OutcomeNet::new(meta.arch, m.outcome_scaler, &mut rng),
            loss_history: m.loss_history,
            propensity_history: m.propensity_history,
        })
        .collect();
    let mut ensemble = Ensemble {
        kind: meta.kind,
        config: meta.config,
        members,
    };
    ck.restore_into(&mut ensemble)?;
    Ok(ensemble)
}

/// One row per (subject, time): `id,time,ite,lo,hi,s1,s0`.
pub fn write_effects_csv(est: &EffectEstimate, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TcsError::format(path, e.to_string()))?;
    let err = |e: csv::Error| TcsError::format(path, e.to_string());
    w.write_record(["id", "time", "ite", "lo", "hi", "s1", "s0"]).map_err(err)?;
    for (i, id) in est.ids.iter().enumerate() {
        for t in 0..est.q() {
            w.write_record([
                id.clone(),
                (t + 1).to_string(),
                est.ite[i][t].to_string(),
                est.ite_lo[i][t].to_string(),
                est.ite_hi[i][t].to_string(),
                est.survival_1[i][t].to_string(),
                est.survival_0[i][t].to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| TcsError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateSummary {
    pub estimator: String,
    pub subjects: usize,
    pub time: Vec<usize>,
    pub cate: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub hr_star: Vec<f64>,
}

impl CateSummary {
    pub fn from_estimate(est: &EffectEstimate) -> Self {
        CateSummary {
            estimator: est.kind.name().to_string(),
            subjects: est.len(),
            time: (1..=est.q()).collect(),
            cate: est.cate.clone(),
            lo: est.cate_lo.clone(),
            hi: est.cate_hi.clone(),
            hr_star: est.hr_star.clone(),
        }
    }
}

pub fn write_cate_json(est: &EffectEstimate, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TcsError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &CateSummary::from_estimate(est))
        .map_err(|e| TcsError::format(path, e.to_string()))
}
