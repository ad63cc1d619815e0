//! `matnet`: generate data, train, predict, run studies, and inspect models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use matnet_bench::{default_scheme, run_study, StudyConfig, StudyKind};
use matnet_core::datagen::{generate_dataset, SamplingConfig, Symmetry};
use matnet_core::io::{load_dataset, load_model, save_dataset, save_history, save_model};
use matnet_core::network::{Model, ModelType, Topology};
use matnet_core::online::{run_loading_path, standard_paths, write_prediction_csv, Scheme, SolverConfig};
use matnet_core::presets::CompositePreset;
use matnet_core::training::{train, LossConfig, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Parser, Serialize, Deserialize)]
#[command(name = "matnet", version, about = "Material network training and online prediction")]
struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Re-run the command recorded in a `config.json` snapshot.
    #[arg(long, global = true)]
    #[serde(skip)]
    replay: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Sample phase stiffness pairs and label them with a teacher network.
    GenData(GenDataArgs),
    /// Fit a network to a stiffness dataset.
    Train(TrainArgs),
    /// Run the six loading paths through a trained network.
    Predict(PredictArgs),
    /// Run a seeded comparative study.
    Bench(BenchArgs),
    /// Print a model's structure.
    Inspect(InspectArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
struct GenDataArgs {
    /// Teacher network file; a random teacher is drawn from --seed if absent.
    #[arg(long)]
    teacher: Option<PathBuf>,
    #[arg(long, default_value = "imn")]
    model: ModelType,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.0, 500.0])]
    youngs: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [0.3, 200.0])]
    shear: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [0.0, 0.45])]
    poisson: Vec<f64>,
    /// Sample isotropic phases instead of orthotropic ones.
    #[arg(long)]
    isotropic: bool,
}

#[derive(Debug, Args, Serialize, Deserialize)]
struct TrainArgs {
    #[arg(long, default_value = "imn")]
    model: ModelType,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 40)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0.8)]
    lr_factor: f64,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 0.2)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
}

#[derive(Debug, Args, Serialize, Deserialize)]
struct PredictArgs {
    /// Model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "composite1")]
    composite: CompositePreset,
    /// Online scheme (default: Newton for IMN, residual for DMN).
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long, default_value_t = 0.02)]
    amplitude: f64,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

#[derive(Debug, Args, Serialize, Deserialize)]
struct BenchArgs {
    #[arg(long)]
    study: StudyKind,
    /// Use full-scale defaults instead of desk-scale ones.
    #[arg(long)]
    full: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    #[arg(long)]
    composite: Option<CompositePreset>,
    #[arg(long)]
    model_type: Option<ModelType>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    teacher_depth: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    validation_samples: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Skip the loading paths.
    #[arg(long)]
    no_online: bool,
    /// Evaluate this model in every cell instead of training.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
struct InspectArgs {
    model: PathBuf,
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    command: &'a str,
    error: String,
    causes: Vec<String>,
}

fn main() -> ExitCode {
    let mut cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(path) = cli.replay.take() {
        match fs::read_to_string(&path).map_err(anyhow::Error::from).and_then(|t| Ok(serde_json::from_str(&t)?)) {
            Ok(c) => cli = c,
            Err(e) => {
                eprintln!("error: cannot replay {}: {e:#}", path.display());
                return ExitCode::from(1);
            }
        }
    }
    let Some(command) = &cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return ExitCode::from(1);
    };
    let name = command_name(command);
    match run(&cli, command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let numerical = e.chain().any(|c| c.downcast_ref::<matnet_core::Error>().is_some_and(|e| e.is_numerical()));
            let causes = distinct_causes(&e);
            eprintln!("error: {}", causes.join(": "));
            if !numerical {
                return ExitCode::from(1);
            }
            let path = cli.out_dir.join("diagnostic.json");
            let diag = Diagnostic { command: name, error: e.to_string(), causes };
            match serde_json::to_string_pretty(&diag)
                .map_err(anyhow::Error::from)
                .and_then(|t| Ok(fs::write(&path, t)?))
            {
                Ok(()) => eprintln!("diagnostic written to {}", path.display()),
                Err(w) => eprintln!("could not write diagnostic: {w:#}"),
            }
            ExitCode::from(2)
        }
    }
}

/// Messages along the error chain, skipping those already contained in the
/// previous message.
fn distinct_causes(e: &anyhow::Error) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for cause in e.chain().map(|c| c.to_string()) {
        if !out.last().is_some_and(|prev| prev.contains(&cause)) {
            out.push(cause);
        }
    }
    out
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::GenData(_) => "gen-data",
        Command::Train(_) => "train",
        Command::Predict(_) => "predict",
        Command::Bench(_) => "bench",
        Command::Inspect(_) => "inspect",
    }
}

fn run(cli: &Cli, command: &Command) -> anyhow::Result<()> {
    if cli.threads == Some(0) {
        bail!("threads must be ≥ 1");
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring thread pool")?;
    }
    if !matches!(command, Command::Inspect(_)) {
        fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
        fs::write(cli.out_dir.join("config.json"), serde_json::to_string_pretty(cli)?)?;
    }
    match command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Predict(a) => predict_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::Inspect(a) => inspect(a),
    }
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> anyhow::Result<()> {
    let teacher = match &a.teacher {
        Some(path) => load_model(path).with_context(|| format!("loading {}", path.display()))?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            rng.set_stream(1);
            Model::random(a.model, Topology::new(a.depth)?, &mut rng)
        }
    };
    let cfg = SamplingConfig {
        youngs: [a.youngs[0], a.youngs[1]],
        shear: [a.shear[0], a.shear[1]],
        poisson: [a.poisson[0], a.poisson[1]],
        symmetry: if a.isotropic { Symmetry::Isotropic } else { Symmetry::Orthotropic },
        num_samples: a.samples,
        seed: cli.seed,
    };
    let data = generate_dataset(&teacher, &cfg)?;
    save_dataset(&cli.out_dir.join("dataset.csv"), &data)?;
    save_model(&cli.out_dir.join("teacher.json"), &teacher, None)?;
    println!("wrote {} samples to {}", data.len(), cli.out_dir.join("dataset.csv").display());
    Ok(())
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> anyhow::Result<()> {
    let topology = Topology::new(a.depth)?;
    let data = load_dataset(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        initial_lr: a.lr,
        lr_factor: a.lr_factor,
        patience: a.patience,
        seed: cli.seed,
        validation_fraction: a.validation_fraction,
    };
    let loss = LossConfig { eta: a.eta, xi: a.xi };
    let outcome = train(a.model, topology, &data, &cfg, &loss)?;
    save_model(&cli.out_dir.join("model.json"), &outcome.best, Some(&outcome.last))?;
    save_history(&cli.out_dir.join("history.csv"), &outcome.history)?;
    let best_val = outcome.history.val_e_c.get(outcome.best_epoch).copied().unwrap_or(f64::NAN);
    println!(
        "best epoch {} of {}: validation e_C {:.4e} (initial {:.4e}), active nodes {}",
        outcome.best_epoch + 1,
        a.epochs,
        best_val,
        outcome.initial_val_e_c,
        outcome.best.active_nodes()
    );
    Ok(())
}

fn predict_cmd(cli: &Cli, a: &PredictArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let scheme = a.scheme.unwrap_or_else(|| default_scheme(model.model_type()));
    let cfg = SolverConfig { tol: a.tol, max_iter: a.max_iter, scheme };
    cfg.validate()?;
    if !(a.amplitude.is_finite() && a.amplitude > 0.0) || a.steps == 0 {
        bail!("amplitude must be > 0 and steps ≥ 1");
    }
    let phases = a.composite.composite().phases()?;
    for path in standard_paths(a.amplitude, a.steps) {
        let result = run_loading_path(&model, &phases, &path, &cfg);
        let file = cli.out_dir.join(format!("prediction_{}.csv", path.name));
        write_prediction_csv(fs::File::create(&file)?, &result)?;
        let result = result.into_result().with_context(|| format!("path {}", path.name))?;
        let iterations: usize = result.iterations.iter().sum();
        let last = result.stress.last().map_or(0.0, |s| s.norm());
        println!("{:<12} {:>3} steps, {:>4} iterations, |sigma| {:.4e} GPa", path.name, result.len(), iterations, last);
    }
    Ok(())
}

fn bench_cmd(cli: &Cli, a: &BenchArgs) -> anyhow::Result<()> {
    let mut cfg = if a.full { StudyConfig::full(a.study) } else { StudyConfig::desk(a.study) };
    cfg.threads = cli.threads;
    cfg.teacher.seed = cli.seed;
    if let Some(v) = &a.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = &a.values {
        cfg.values = v.clone();
    }
    if let Some(v) = a.model_type {
        cfg.model_type = v;
        cfg.teacher.model_type = v;
    }
    macro_rules! set {
        ($($field:ident).+ = $value:expr) => {
            if let Some(v) = $value {
                cfg.$($field).+ = v;
            }
        };
    }
    set!(composite = a.composite);
    set!(depth = a.depth);
    set!(teacher.depth = a.teacher_depth.or(a.depth));
    set!(epochs = a.epochs);
    set!(train_samples = a.train_samples);
    set!(validation_samples = a.validation_samples);
    set!(train.batch_size = a.batch_size);
    set!(loss.eta = a.eta);
    set!(loss.xi = a.xi);
    set!(amplitude = a.amplitude);
    set!(steps = a.steps);
    set!(solver_tol = a.tol);
    set!(max_iter = a.max_iter);
    cfg.online = !a.no_online;
    if let Some(path) = &a.model {
        cfg.pretrained = Some(load_model(path).with_context(|| format!("loading {}", path.display()))?);
    }
    let report = run_study(&cfg)?;
    report.save(&cli.out_dir)?;
    let show = |v: Option<(f64, f64)>| v.map_or("-".to_string(), |(m, s)| format!("{m:.3e}±{s:.1e}"));
    println!("{:<24} {:>5} {:>18} {:>18} {:>18} {:>18}", "config", "seeds", "e_C", "e_sigma", "iterations", "active");
    for agg in &report.aggregates {
        println!(
            "{:<24} {:>5} {:>18} {:>18} {:>18} {:>18}",
            agg.config,
            agg.seeds,
            show(agg.e_c),
            show(agg.e_sigma),
            show(agg.iterations),
            show(agg.active_nodes)
        );
    }
    if !report.complete {
        eprintln!("warning: some cells failed; see report.csv");
    }
    Ok(())
}

fn expected_param_count(model_type: ModelType, depth: usize) -> usize {
    match model_type {
        ModelType::Dmn => 7 * (1 << depth) - 3,
        ModelType::Imn => 3 * (1 << depth) - 2,
    }
}

fn inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let depth = model.topology().depth();
    let count = model.param_count();
    let expected = expected_param_count(model.model_type(), depth);
    if count != expected {
        bail!("parameter count {count} differs from the expected {expected}");
    }
    print_summary(&a.model, &model);
    Ok(())
}

fn print_summary(path: &Path, model: &Model) {
    println!("file: {}", path.display());
    println!("type: {}", model.model_type());
    println!("depth: {}", model.topology().depth());
    println!("parameters: {}", model.param_count());
    println!("active nodes: {} of {}", model.active_nodes(), model.topology().num_base());
}
