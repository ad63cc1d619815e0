use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use matnet_core::datagen::{generate_dataset, SamplingConfig};
use matnet_core::dataset::TrainingSample;
use matnet_core::network::{Model, ModelType, Topology};
use matnet_core::online::{run_loading_path, standard_paths, PathResult, Scheme, SolverConfig};
use matnet_core::presets::CompositePreset;
use matnet_core::training::{mean_relative_error, train_from, LossConfig, TrainConfig};
use matnet_core::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{mean_std, stress_error};
use crate::report::{Aggregate, CellResult, StudyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    BatchSize,
    DataSize,
    EtaSweep,
    XiSweep,
    DepthCompare,
    ResidualStress,
    FpVsNewton,
    DmnVsImn,
}

impl StudyKind {
    pub const ALL: [StudyKind; 8] = [
        Self::BatchSize,
        Self::DataSize,
        Self::EtaSweep,
        Self::XiSweep,
        Self::DepthCompare,
        Self::ResidualStress,
        Self::FpVsNewton,
        Self::DmnVsImn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::BatchSize => "batch_size",
            Self::DataSize => "data_size",
            Self::EtaSweep => "eta_sweep",
            Self::XiSweep => "xi_sweep",
            Self::DepthCompare => "depth_compare",
            Self::ResidualStress => "residual_stress",
            Self::FpVsNewton => "fp_vs_newton",
            Self::DmnVsImn => "dmn_vs_imn",
        }
    }

    /// Whether the study sweeps numeric values (as opposed to fixed variants).
    pub fn is_sweep(self) -> bool {
        !matches!(self, Self::ResidualStress | Self::FpVsNewton | Self::DmnVsImn)
    }

    fn default_values(self, full: bool) -> Vec<f64> {
        match self {
            Self::BatchSize => vec![10.0, 20.0, 40.0, 80.0],
            Self::DataSize => vec![128.0, 256.0, 512.0, 1024.0],
            Self::EtaSweep => vec![0.1, 1.0, 10.0],
            Self::XiSweep => vec![0.5, 1.0, 2.0],
            Self::DepthCompare if full => vec![4.0, 5.0, 6.0, 7.0, 8.0],
            Self::DepthCompare => vec![4.0, 5.0, 6.0],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::Config(format!("unknown study {s:?}")))
    }
}

/// The hidden network that generates training targets and reference stress
/// histories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub model_type: ModelType,
    pub depth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub seeds: Vec<u64>,
    /// Sweep values; empty for studies that compare fixed variants.
    pub values: Vec<f64>,
    pub composite: CompositePreset,
    pub amplitude: f64,
    pub steps: usize,
    pub model_type: ModelType,
    pub depth: usize,
    pub teacher: TeacherConfig,
    pub train_samples: usize,
    pub validation_samples: usize,
    /// Zero skips training and evaluates the initial parameters.
    pub epochs: usize,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub solver_tol: f64,
    pub max_iter: usize,
    /// Run the six loading paths for every cell.
    pub online: bool,
    /// Worker threads for training cells; `None` uses all cores.
    pub threads: Option<usize>,
    /// Skips training and evaluates these parameters in every cell.
    #[serde(skip)]
    pub pretrained: Option<Model>,
}

impl StudyConfig {
    /// Desk-scale defaults: five seeds, 2000 epochs, depth 4.
    pub fn desk(study: StudyKind) -> Self {
        let model_type = match study {
            StudyKind::ResidualStress => ModelType::Dmn,
            _ => ModelType::Imn,
        };
        Self {
            study,
            seeds: (0..5).collect(),
            values: study.default_values(false),
            composite: CompositePreset::Composite1,
            amplitude: 0.02,
            steps: 20,
            model_type,
            depth: 4,
            teacher: TeacherConfig { model_type, depth: 4, seed: 1000 },
            train_samples: 400,
            validation_samples: 100,
            epochs: 2000,
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            solver_tol: 1e-6,
            max_iter: 100,
            online: true,
            threads: None,
            pretrained: None,
        }
    }

    /// Full-scale settings: ten seeds, 10000 epochs, depths up to 8.
    pub fn full(study: StudyKind) -> Self {
        let mut cfg = Self::desk(study);
        cfg.seeds = (0..10).collect();
        cfg.values = study.default_values(true);
        cfg.epochs = 10_000;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.study.is_sweep() && self.values.is_empty() {
            return bad(format!("study {} needs sweep values", self.study));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) || self.steps == 0 {
            return bad("loading paths need a positive amplitude and at least one step".into());
        }
        if self.train_samples == 0 || self.validation_samples == 0 {
            return bad("sample counts must be ≥ 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be ≥ 1".into());
        }
        Topology::new(self.depth)?;
        Topology::new(self.teacher.depth)?;
        for &v in &self.values {
            let ok = match self.study {
                StudyKind::BatchSize | StudyKind::DataSize | StudyKind::DepthCompare => v >= 1.0 && v.fract() == 0.0,
                _ => v.is_finite(),
            };
            if !ok {
                return bad(format!("invalid sweep value {v} for {}", self.study));
            }
        }
        self.loss.validate()?;
        self.solver(Scheme::ImnNewton).validate()
    }

    fn solver(&self, scheme: Scheme) -> SolverConfig {
        SolverConfig { tol: self.solver_tol, max_iter: self.max_iter, scheme }
    }
}

/// Default online scheme for a model type.
pub fn default_scheme(model_type: ModelType) -> Scheme {
    match model_type {
        ModelType::Dmn => Scheme::DmnResidual,
        ModelType::Imn => Scheme::ImnNewton,
    }
}

/// What a cell trains; identical specs share one trained model.
#[derive(Debug, Clone, PartialEq)]
struct TrainSpec {
    model_type: ModelType,
    depth: usize,
    samples: usize,
    batch_size: usize,
    loss: LossConfig,
    seed: u64,
}

#[derive(Debug, Clone)]
struct Cell {
    config: String,
    value: f64,
    seed: u64,
    spec: usize,
    scheme: Scheme,
}

fn plan(cfg: &StudyConfig) -> (Vec<Cell>, Vec<TrainSpec>) {
    let base = |seed| TrainSpec {
        model_type: cfg.model_type,
        depth: cfg.depth,
        samples: cfg.train_samples,
        batch_size: cfg.train.batch_size,
        loss: cfg.loss,
        seed,
    };
    let mut variants: Vec<(String, f64, Scheme, Box<dyn Fn(u64) -> TrainSpec>)> = Vec::new();
    match cfg.study {
        StudyKind::ResidualStress | StudyKind::FpVsNewton => {
            let (kind, schemes) = if cfg.study == StudyKind::ResidualStress {
                (ModelType::Dmn, [Scheme::DmnResidual, Scheme::DmnNoResidual])
            } else {
                (ModelType::Imn, [Scheme::ImnFixedPoint, Scheme::ImnNewton])
            };
            for scheme in schemes {
                variants.push((
                    scheme.to_string(),
                    f64::NAN,
                    scheme,
                    Box::new(move |s| TrainSpec { model_type: kind, ..base(s) }),
                ));
            }
        }
        StudyKind::DmnVsImn => {
            for kind in [ModelType::Dmn, ModelType::Imn] {
                variants.push((
                    kind.to_string(),
                    f64::NAN,
                    default_scheme(kind),
                    Box::new(move |s| TrainSpec { model_type: kind, ..base(s) }),
                ));
            }
        }
        study => {
            for &v in &cfg.values {
                let f: Box<dyn Fn(u64) -> TrainSpec> = match study {
                    StudyKind::BatchSize => Box::new(move |s| TrainSpec { batch_size: v as usize, ..base(s) }),
                    StudyKind::DataSize => Box::new(move |s| TrainSpec { samples: v as usize, ..base(s) }),
                    StudyKind::EtaSweep => {
                        Box::new(move |s| TrainSpec { loss: LossConfig { eta: v, ..cfg.loss }, ..base(s) })
                    }
                    StudyKind::XiSweep => {
                        Box::new(move |s| TrainSpec { loss: LossConfig { xi: v, ..cfg.loss }, ..base(s) })
                    }
                    _ => Box::new(move |s| TrainSpec { depth: v as usize, ..base(s) }),
                };
                variants.push((format!("{}={v}", study.name()), v, default_scheme(cfg.model_type), f));
            }
        }
    }

    let mut specs: Vec<TrainSpec> = Vec::new();
    let mut cells = Vec::new();
    for (config, value, scheme, make) in &variants {
        for &seed in &cfg.seeds {
            let spec = make(seed);
            let idx = specs.iter().position(|s| *s == spec).unwrap_or_else(|| {
                specs.push(spec);
                specs.len() - 1
            });
            cells.push(Cell { config: config.clone(), value: *value, seed, spec: idx, scheme: *scheme });
        }
    }
    (cells, specs)
}

/// Offset applied to the teacher seed for the fixed validation set.
const VALIDATION_SALT: u64 = 0x5eed_0001;
/// Offset applied to the teacher seed for the training pool.
const TRAINING_SALT: u64 = 0x5eed_0002;

struct Trained {
    model: Model,
    e_c: f64,
    initial_e_c: f64,
}

fn train_cell(cfg: &StudyConfig, spec: &TrainSpec, pool: &[TrainingSample], val: &[TrainingSample]) -> Result<Trained> {
    if let Some(model) = &cfg.pretrained {
        let e_c = mean_relative_error(model, val)?;
        return Ok(Trained { model: model.clone(), e_c, initial_e_c: e_c });
    }
    let topology = Topology::new(spec.depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let init = Model::random(spec.model_type, topology, &mut rng);
    let initial_e_c = mean_relative_error(&init, val)?;
    if cfg.epochs == 0 {
        return Ok(Trained { model: init, e_c: initial_e_c, initial_e_c });
    }
    let train_cfg =
        TrainConfig { epochs: cfg.epochs, batch_size: spec.batch_size, seed: spec.seed, ..cfg.train.clone() };
    let outcome = train_from(init, &pool[..spec.samples], val, &train_cfg, &spec.loss)?;
    let e_c = mean_relative_error(&outcome.best, val)?;
    Ok(Trained { model: outcome.best, e_c, initial_e_c })
}

/// Solver settings for the teacher's reference histories, independent of the
/// settings under study.
const REFERENCE_TOL: f64 = 1e-10;
const REFERENCE_MAX_ITER: usize = 200;

fn run_paths(model: &Model, cfg: &StudyConfig, solver: &SolverConfig) -> Result<Vec<PathResult>> {
    let phases = cfg.composite.composite().phases()?;
    standard_paths(cfg.amplitude, cfg.steps)
        .iter()
        .map(|p| run_loading_path(model, &phases, p, solver).into_result())
        .collect()
}

/// Runs every (configuration, seed) cell. Training cells run in parallel on
/// at most `cfg.threads` workers; online prediction then runs sequentially on
/// the calling thread with one untimed warm-up path per cell. Cell failures
/// are recorded and the study continues.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let (cells, specs) = plan(cfg);

    let teacher_topology = Topology::new(cfg.teacher.depth)?;
    let teacher =
        Model::random(cfg.teacher.model_type, teacher_topology, &mut ChaCha8Rng::seed_from_u64(cfg.teacher.seed));
    let pool_size = specs.iter().map(|s| s.samples).max().unwrap_or(cfg.train_samples);
    let sampling =
        |n, salt: u64| SamplingConfig { num_samples: n, seed: cfg.teacher.seed ^ salt, ..SamplingConfig::default() };
    let pool = generate_dataset(&teacher, &sampling(pool_size, TRAINING_SALT))?.samples;
    let val = generate_dataset(&teacher, &sampling(cfg.validation_samples, VALIDATION_SALT))?.samples;

    let threads = cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let trained: Vec<std::result::Result<Trained, String>> = workers.install(|| {
        specs.par_iter().map(|spec| train_cell(cfg, spec, &pool, &val).map_err(|e| e.to_string())).collect()
    });

    let reference_solver = SolverConfig {
        tol: REFERENCE_TOL,
        max_iter: REFERENCE_MAX_ITER,
        scheme: default_scheme(cfg.teacher.model_type),
    };
    let reference = if cfg.online { Some(run_paths(&teacher, cfg, &reference_solver)?) } else { None };

    let mut results = Vec::with_capacity(cells.len());
    let mut first_paths: BTreeMap<u64, Vec<PathResult>> = BTreeMap::new();
    for cell in &cells {
        let mut row = CellResult::new(&cell.config, cell.value, cell.seed);
        let outcome = (|| -> std::result::Result<(), String> {
            let t = trained[cell.spec].as_ref().map_err(|e| format!("training: {e}"))?;
            row.e_c = Some(t.e_c);
            row.initial_e_c = Some(t.initial_e_c);
            row.active_nodes = Some(t.model.active_nodes() as f64);
            let Some(reference) = &reference else { return Ok(()) };
            let phases = cfg.composite.composite().phases().map_err(|e| e.to_string())?;
            let warmup = &standard_paths(cfg.amplitude, cfg.steps)[0];
            run_loading_path(&t.model, &phases, warmup, &cfg.solver(cell.scheme))
                .into_result()
                .map_err(|e| e.to_string())?;
            let paths = run_paths(&t.model, cfg, &cfg.solver(cell.scheme)).map_err(|e| e.to_string())?;
            row.e_sigma = Some(stress_error(&paths, reference).map_err(|e| e.to_string())?);
            let steps: usize = paths.iter().map(|p| p.len()).sum();
            let iterations: usize = paths.iter().flat_map(|p| &p.iterations).sum();
            let elapsed: u64 = paths.iter().flat_map(|p| &p.elapsed_ns).sum();
            row.iterations = Some(iterations as f64 / steps as f64);
            row.total_ns = Some(elapsed as f64);
            row.time_per_iter_node_ns = Some(elapsed as f64 / (iterations as f64 * t.model.active_nodes() as f64));
            if !cfg.study.is_sweep() {
                match first_paths.get(&cell.seed) {
                    Some(first) => row.e_sigma_cross = Some(stress_error(&paths, first).map_err(|e| e.to_string())?),
                    None => {
                        first_paths.insert(cell.seed, paths);
                    }
                }
            }
            Ok(())
        })();
        row.error = outcome.err();
        results.push(row);
    }

    let aggregates = aggregate(&results);
    let complete = results.iter().all(|r| r.error.is_none());
    Ok(StudyReport { study: cfg.study, config: cfg.clone(), cells: results, aggregates, complete })
}

/// Mean and standard deviation per configuration over the successful seeds,
/// in configuration order.
pub fn aggregate(cells: &[CellResult]) -> Vec<Aggregate> {
    let mut order: Vec<&str> = Vec::new();
    for c in cells {
        if !order.contains(&c.config.as_str()) {
            order.push(&c.config);
        }
    }
    order
        .into_iter()
        .map(|config| {
            let rows: Vec<&CellResult> = cells.iter().filter(|c| c.config == config && c.error.is_none()).collect();
            let stat = |f: fn(&CellResult) -> Option<f64>| {
                let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
                mean_std(&v)
            };
            Aggregate {
                config: config.to_string(),
                value: cells.iter().find(|c| c.config == config).map_or(f64::NAN, |c| c.value),
                seeds: rows.len(),
                failed: cells.iter().filter(|c| c.config == config && c.error.is_some()).count(),
                e_c: stat(|r| r.e_c),
                e_sigma: stat(|r| r.e_sigma),
                e_sigma_cross: stat(|r| r.e_sigma_cross),
                iterations: stat(|r| r.iterations),
                active_nodes: stat(|r| r.active_nodes),
                time_per_iter_node_ns: stat(|r| r.time_per_iter_node_ns),
                total_ns: stat(|r| r.total_ns),
            }
        })
        .collect()
}
