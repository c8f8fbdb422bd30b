//! Benchmark orchestration: run configuration and presets, scenario sweeps,
//! replicate runs, CSV ingestion and result files.

mod config;
mod export;
mod ingest;
mod run;
mod sweep;

pub use config::{parse_estimators, Estimator, Preset, RunConfig};
pub use export::{
    export_results, provenance, read_metrics_csv, write_cate_rows, write_config_json, write_effects_rows,
    write_metrics_csv, Provenance, RunRecord, CATE_FILE, CONFIG_FILE, EFFECTS_FILE, EFFECTS_HEADER, METRICS_FILE,
    METRICS_HEADER,
};
pub use ingest::{ingest_csv, ingest_path, k_fold, train_test_split, IngestSpec, Ingested};
pub use run::{
    replicate_seed, row_names, run_replicate, run_scenario, run_sweep, CateRow, EffectRow, RunResult,
};
pub use sweep::SweepSpec;
