use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tcs_core::harness::{
    export_results, ingest_csv, parse_estimators, row_names, run_sweep, IngestSpec, Preset, RunConfig,
};
use tcs_core::par::{init_workers, Execution};
use tcs_core::simgen::{generate_pair, read_dataset_csv, write_dataset_csv, write_samples_csv, write_truth_csv, DatasetSidecar, SIDECAR_VERSION};
use tcs_core::tcsnet::{
    estimate_effects, load_ensemble, save_ensemble, train_ensemble, write_cate_json, write_effects_csv, EstimatorKind,
};
use tcs_core::{Result, TcsError};

#[derive(Parser)]
#[command(name = "tcs", version, about = "Time-variant causal survival estimation and benchmarks")]
struct Cli {
    /// Run every parallel section on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/test datasets and their ground truth.
    Simulate(RunArgs),
    /// Train one estimator on a dataset and save the ensemble.
    Fit(FitArgs),
    /// Run the benchmark over every scenario cell and replicate.
    Bench(RunArgs),
    /// Counterfactual curves and effects of a saved ensemble.
    Effects(EffectsArgs),
    /// Bin a long-format CSV onto the step grid.
    Ingest(IngestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON (a previous run's config.json also works).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
    /// Scenario name used in output rows.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of tcs,snn,binary,km.
    #[arg(long)]
    estimators: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::preset(match self.preset {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            }),
        };
        if let Some(name) = &self.scenario {
            cfg.name = name.clone();
        }
        if let Some(r) = self.replicates {
            cfg.scenario.replicates = r;
        }
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(list) = &self.estimators {
            cfg.estimators = parse_estimators(list)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Dataset CSV with its sidecar.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "tcs")]
    estimator: KindArg,
    /// Output checkpoint path.
    #[arg(long, default_value = "model.tcs")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Tcs,
    Snn,
    Binary,
}

impl From<KindArg> for EstimatorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Tcs => EstimatorKind::Tcs,
            KindArg::Snn => EstimatorKind::Snn,
            KindArg::Binary => EstimatorKind::Binary,
        }
    }
}

#[derive(Args)]
struct EffectsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "effects")]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Ingestion spec JSON; flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<f64>,
    #[arg(long)]
    u: Option<usize>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long, default_value = "dataset.csv")]
    out: PathBuf,
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| TcsError::io(dir, e))
}

fn simulate(args: &RunArgs) -> Result<()> {
    let cfg = args.config.resolve()?;
    for (name, scenario) in cfg.sweep.expand(&cfg.name, &cfg.scenario)? {
        for rep in 0..scenario.replicates {
            let dir = args.out.join(&name).join(format!("rep{rep}"));
            create_dir(&dir)?;
            let (train, test) = generate_pair(&scenario, rep)?;
            for (tag, ds) in [("train", &train), ("test", &test)] {
                write_dataset_csv(ds, &dir.join(format!("{tag}.csv")))?;
                write_truth_csv(&ds.samples, &ds.truth, &dir.join(format!("{tag}_truth.csv")))?;
            }
        }
        log::info!("wrote {} replicates of {name}", scenario.replicates);
    }
    Ok(())
}

fn bench(args: &RunArgs, exec: Execution) -> Result<()> {
    let cfg = args.config.resolve()?;
    let result = run_sweep(&cfg, exec)?;
    export_results(&cfg, &result, &args.out)?;
    for e in &cfg.estimators {
        for name in row_names(*e) {
            let reps: Vec<_> = result.reports_for(name).collect();
            let failed = reps.iter().filter(|r| r.error.is_some()).count();
            let bias: Vec<f64> = reps.iter().filter_map(|r| r.mean_bias_ite().or(r.mean_bias_ate())).collect();
            let shown = if bias.is_empty() {
                "n/a".to_string()
            } else {
                format!("{:.3}", bias.iter().sum::<f64>() / bias.len() as f64)
            };
            println!("{name:<12} rows={:<3} failed={failed:<3} mean_bias={shown}", reps.len());
        }
    }
    println!("results in {}", args.out.display());
    Ok(())
}

fn fit(args: &FitArgs, exec: Execution) -> Result<()> {
    let cfg = args.config.resolve()?;
    let samples = read_dataset_csv(&args.data, None)?;
    let train = tcs_core::tcsnet::TrainConfig {
        seed: args.config.seed.unwrap_or(cfg.train.seed),
        ..cfg.train
    };
    let ensemble = train_ensemble(&samples, &train, args.estimator.into(), exec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_ensemble(&ensemble, &args.out)?;
    println!(
        "{} ensemble with {} members saved to {}",
        ensemble.kind.name(),
        ensemble.members.len(),
        args.out.display()
    );
    Ok(())
}

fn effects(args: &EffectsArgs, exec: Execution) -> Result<()> {
    let ensemble = load_ensemble(&args.model)?;
    let samples = read_dataset_csv(&args.data, None)?;
    let est = estimate_effects(&ensemble, &samples, exec)?;
    create_dir(&args.out)?;
    write_effects_csv(&est, &args.out.join("effects.csv"))?;
    write_cate_json(&est, &args.out.join("cate.json"))?;
    println!("effects for {} subjects in {}", est.len(), args.out.display());
    Ok(())
}

fn ingest(args: &IngestArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| TcsError::io(path, e))?;
            serde_json::from_reader(file).map_err(|e| TcsError::format(path, e))?
        }
        None => IngestSpec::default(),
    };
    if let Some(p) = &args.input {
        spec.source = p.clone();
    }
    if spec.source.as_os_str().is_empty() {
        return Err(TcsError::Usage("ingest needs --input or a spec with a source".into()));
    }
    if let Some(w) = args.bin_width {
        spec.bin_width = w;
    }
    if let Some(u) = args.u {
        spec.u = u;
    }
    if let Some(q) = args.q {
        spec.q = q;
    }
    let got = ingest_csv(&spec)?;
    let d = got.samples[0].d;
    write_samples_csv(&got.samples, d, &args.out)?;
    DatasetSidecar {
        format_version: SIDECAR_VERSION,
        seed: None,
        d,
        u: spec.u,
        q: spec.q,
        config: None,
    }
    .write(&args.out)?;
    println!(
        "{} subjects from {} rows ({} malformed, {} outside the grid) -> {}",
        got.samples.len(),
        got.rows,
        got.malformed,
        got.truncated,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    init_workers();
    let cli = Cli::parse();
    let exec = exec(cli.sequential);
    let res = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a, exec),
        Command::Bench(a) => bench(a, exec),
        Command::Effects(a) => effects(a, exec),
        Command::Ingest(a) => ingest(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
