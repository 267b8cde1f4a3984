//! Experiment orchestration: world construction, training, evaluation and
//! the artifact files behind the `train`, `evaluate` and `coverage` commands.

pub mod config;
pub mod metrics;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{self, AgentError, EpisodeLog, Training};
use crate::arbiter::{self, FlightOptions};
use crate::gridworld::{GridError, GridWorld};
use crate::qcore::{self, AgentKind, QError, QTable};
use crate::radio::{self, LinkBudget, RadioError};
use crate::streams;

pub use config::{ConfigError, ExperimentConfig};
pub use metrics::{compute_metrics, BandReport, EvalReport, FlightMetrics, FlightRecord};

pub const MANIFEST_VERSION: u32 = 1;

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WORLD_FILE: &str = "world.json";
pub const STRATEGIC_TABLE_FILE: &str = "strategic.qtable.json";
pub const STRATEGIC_REWARDS_FILE: &str = "rewards_strategic.csv";
pub const REPORT_FILE: &str = "evaluation.json";
pub const FLIGHTS_FILE: &str = "evaluation_flights.csv";

pub fn adaptive_table_file(band_mhz: f64) -> String {
    format!("adaptive_{band_mhz}.qtable.json")
}

pub fn adaptive_rewards_file(band_mhz: f64) -> String {
    format!("rewards_adaptive_{band_mhz}.csv")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

impl HarnessError {
    /// Short label printed ahead of the message by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config error",
            HarnessError::Usage(_) => "usage error",
            HarnessError::Io { .. } => "i/o error",
            HarnessError::Artifact { .. } => "artifact error",
            HarnessError::Agent(_) | HarnessError::Grid(_) | HarnessError::Radio(_) => "runtime error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            HarnessError::Config(_) => 3,
            HarnessError::Artifact { .. } => 4,
            HarnessError::Io { .. } => 5,
            HarnessError::Agent(_) | HarnessError::Grid(_) | HarnessError::Radio(_) => 1,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn artifact(path: &Path, reason: impl ToString) -> Self {
        HarnessError::Artifact {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_toml(&text).map_err(|e| match e {
        ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
        ConfigError::Invalid { field, line, reason } => ConfigError::Invalid {
            field: format!("{}: {field}", path.display()),
            line,
            reason,
        },
    })
    .map_err(HarnessError::from)
}

/// Obstacle layout for `cfg`, drawn from the config's master seed.
pub fn build_world(cfg: &ExperimentConfig) -> Result<GridWorld> {
    let world = GridWorld::build(
        cfg.grid_spec(),
        cfg.world.obstacle_density,
        streams::derived_seed(cfg.seed, "world/obstacles"),
        cfg.start(),
        cfg.base_station(),
    )?;
    Ok(world)
}

/// Both agents trained for one experiment.
#[derive(Debug, Clone)]
pub struct Trained {
    pub strategic: Training,
    pub adaptive: Vec<(f64, Training)>,
}

pub fn train_all(cfg: &ExperimentConfig, world: &GridWorld) -> Result<Trained> {
    let strategic = agents::train_strategic(world, &cfg.train_settings(cfg.training.strategic_episodes), cfg.seed)?;
    let mut settings = cfg.train_settings(cfg.training.adaptive_episodes);
    settings.step_cap = cfg.adaptive_step_cap();
    let adaptive = agents::train_adaptive_bands(world, &cfg.link_budget(), &cfg.radio.bands_mhz, &settings, cfg.seed)?;
    Ok(Trained { strategic, adaptive })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub flights: usize,
    pub seed: u64,
    pub flight: FlightOptions,
}

impl EvalOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            flights: cfg.evaluation.flights,
            seed: cfg.seed,
            flight: FlightOptions {
                arbiter: cfg.arbiter_options(),
                step_cap: cfg.step_cap(),
                speed_mps: cfg.evaluation.uav_speed_mps,
            },
        }
    }
}

/// Greedy arbitrated flights, the same destination list for every band.
pub fn evaluate(
    world: &GridWorld,
    lb: &LinkBudget,
    strategic: &QTable,
    adaptive: &[(f64, &QTable)],
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<FlightRecord>)> {
    let mut dest_rng = streams::stream(opts.seed, "evaluation/destinations");
    let destinations = (0..opts.flights)
        .map(|_| agents::draw_destination(world, opts.flight.arbiter.altitude_locked, &mut dest_rng))
        .collect::<Result<Vec<_>, _>>()?;

    let per_band = std::thread::scope(|scope| {
        let handles: Vec<_> = adaptive
            .iter()
            .map(|&(band, table)| {
                let destinations = &destinations;
                scope.spawn(move || -> Result<(BandReport, Vec<FlightRecord>)> {
                    let coverage = radio::coverage_map(&lb.with_band(band), world)?;
                    let mut ties = streams::stream(opts.seed, &format!("evaluation/{band}/ties"));
                    let records: Vec<FlightRecord> = destinations
                        .iter()
                        .enumerate()
                        .map(|(i, &dest)| {
                            let r = arbiter::execute_flight(strategic, table, world, &coverage, dest, &opts.flight, &mut ties);
                            FlightRecord::new(band, i, dest, &r)
                        })
                        .collect();
                    let report = BandReport {
                        band_mhz: band,
                        covered_fraction: coverage.covered_fraction(),
                        metrics: compute_metrics(&records),
                    };
                    Ok((report, records))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut bands = Vec::with_capacity(per_band.len());
    let mut records = Vec::new();
    for (b, rs) in per_band {
        bands.push(b);
        records.extend(rs);
    }
    let report = EvalReport {
        seed: opts.seed,
        safety: opts.flight.arbiter.safety,
        arrival_priority: opts.flight.arbiter.arrival_priority,
        comparison: opts.flight.arbiter.comparison,
        flights_per_band: opts.flights,
        overall: compute_metrics(&records),
        bands,
    };
    Ok((report, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub checkpoint_format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub bands_mhz: Vec<f64>,
    /// SHA-256 of every other artifact file, keyed by file name.
    pub files: BTreeMap<String, String>,
    pub created_unix_s: u64,
}

#[derive(Serialize)]
struct RewardRow {
    episode: u64,
    total_reward: f64,
    epsilon: f64,
    steps: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(path, e))
}

fn rewards_csv(logs: &[EpisodeLog]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for l in logs {
        w.serialize(RewardRow {
            episode: l.episode,
            total_reward: l.total_reward,
            epsilon: l.epsilon,
            steps: l.step_count,
        })
        .expect("in-memory CSV write");
    }
    w.into_inner().expect("in-memory CSV flush")
}

fn table_json(table: &QTable) -> Vec<u8> {
    let mut buf = Vec::new();
    qcore::write_table(table, &mut buf).expect("in-memory table write");
    buf
}

/// Summary of a finished `train` run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// Trains every agent in `config_path` and writes the artifact directory.
pub fn cmd_train(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<TrainOutcome> {
    let mut cfg = load_config(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    train_to_dir(&cfg, out_dir)
}

/// `cmd_train` for an already-loaded config.
pub fn train_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let world = build_world(cfg)?;
    log::info!(
        "training seed {} on {} cells, {} obstacles, bands {:?}",
        cfg.seed,
        world.spec().cell_count(),
        world.obstacles().len(),
        cfg.radio.bands_mhz
    );
    let trained = train_all(cfg, &world)?;

    let mut files: Vec<(String, Vec<u8>)> = vec![
        (CONFIG_FILE.into(), cfg.to_toml().into_bytes()),
        (WORLD_FILE.into(), serde_json::to_vec_pretty(&world).expect("world serializes")),
        (STRATEGIC_TABLE_FILE.into(), table_json(&trained.strategic.table)),
        (STRATEGIC_REWARDS_FILE.into(), rewards_csv(&trained.strategic.logs)),
    ];
    for (band, t) in &trained.adaptive {
        files.push((adaptive_table_file(*band), table_json(&t.table)));
        files.push((adaptive_rewards_file(*band), rewards_csv(&t.logs)));
    }

    let mut hashes = BTreeMap::new();
    for (name, bytes) in &files {
        write_file(&out_dir.join(name), bytes)?;
        hashes.insert(name.clone(), hex::encode(Sha256::digest(bytes)));
    }
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        checkpoint_format_version: qcore::FORMAT_VERSION,
        config_hash: cfg.hash_hex(),
        seed: cfg.seed,
        bands_mhz: cfg.radio.bands_mhz.clone(),
        files: hashes,
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_file(
        &manifest_path,
        &serde_json::to_vec_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(TrainOutcome {
        out_dir: out_dir.to_path_buf(),
        manifest,
    })
}

/// Loaded artifact directory, checked against its own config.
pub struct Artifacts {
    pub config: ExperimentConfig,
    pub manifest: Manifest,
    pub world: GridWorld,
    pub strategic: QTable,
    pub adaptive: Vec<(f64, QTable)>,
}

fn load_table(path: &Path, world: &GridWorld, kind: AgentKind) -> Result<QTable> {
    let table = qcore::load(path).map_err(|e| match e {
        QError::Io(io) => HarnessError::io(path, io),
        other => HarnessError::artifact(path, other),
    })?;
    table
        .check_compatible(world.spec(), kind)
        .map_err(|e| HarnessError::artifact(path, e))?;
    Ok(table)
}

pub fn load_artifacts(dir: &Path) -> Result<Artifacts> {
    let config = load_config(&dir.join(CONFIG_FILE))?;

    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| HarnessError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&manifest_path, e))?;
    if manifest.manifest_version != MANIFEST_VERSION {
        return Err(HarnessError::artifact(
            &manifest_path,
            format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                manifest.manifest_version
            ),
        ));
    }

    let world = build_world(&config)?;
    let world_path = dir.join(WORLD_FILE);
    let text = fs::read_to_string(&world_path).map_err(|e| HarnessError::io(&world_path, e))?;
    let stored: serde_json::Value = serde_json::from_str(&text).map_err(|e| HarnessError::artifact(&world_path, e))?;
    if stored != serde_json::to_value(&world).expect("world serializes") {
        return Err(HarnessError::artifact(
            &world_path,
            "stored world does not match the one rebuilt from config.toml",
        ));
    }

    let strategic = load_table(&dir.join(STRATEGIC_TABLE_FILE), &world, AgentKind::Strategic)?;
    let mut adaptive = Vec::new();
    for &band in &config.radio.bands_mhz {
        let path = dir.join(adaptive_table_file(band));
        let table = load_table(&path, &world, AgentKind::Adaptive)?;
        if table.meta().band_mhz != Some(band) {
            return Err(HarnessError::artifact(
                &path,
                format!("table band {:?} does not match {band} MHz", table.meta().band_mhz),
            ));
        }
        adaptive.push((band, table));
    }
    Ok(Artifacts {
        config,
        manifest,
        world,
        strategic,
        adaptive,
    })
}

/// Overrides accepted by `evaluate`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalOverrides {
    pub seed: Option<u64>,
    pub no_safety: bool,
    pub normalize_q: bool,
}

/// Runs `n_flights` per band against an artifact directory and writes the
/// JSON report and per-flight CSV next to the artifacts.
pub fn cmd_evaluate(artifact_dir: &Path, n_flights: usize, overrides: EvalOverrides) -> Result<EvalReport> {
    let art = load_artifacts(artifact_dir)?;
    let mut opts = EvalOptions::from_config(&art.config);
    opts.flights = n_flights;
    if let Some(s) = overrides.seed {
        opts.seed = s;
    }
    if overrides.no_safety {
        opts.flight.arbiter.safety = false;
    }
    if overrides.normalize_q {
        opts.flight.arbiter.comparison = arbiter::ValueComparison::MinMax;
    }
    let adaptive: Vec<(f64, &QTable)> = art.adaptive.iter().map(|(b, t)| (*b, t)).collect();
    let (report, records) = evaluate(&art.world, &art.config.link_budget(), &art.strategic, &adaptive, &opts)?;

    let report_path = artifact_dir.join(REPORT_FILE);
    write_file(
        &report_path,
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    // An empty evaluation still gets a header row.
    if records.is_empty() {
        w.write_record([
            "band_mhz",
            "flight",
            "dest",
            "outcome",
            "steps",
            "outage_steps",
            "min_snr_db",
            "flight_time_s",
        ])
        .expect("in-memory CSV write");
    }
    for r in &records {
        w.serialize(r).expect("in-memory CSV write");
    }
    write_file(
        &artifact_dir.join(FLIGHTS_FILE),
        &w.into_inner().expect("in-memory CSV flush"),
    )?;
    Ok(report)
}

#[derive(Serialize)]
struct CoverageRow {
    ix: u32,
    iy: u32,
    iz: u32,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    snr_db: f64,
    covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageSummary {
    pub band_mhz: f64,
    pub rows: usize,
    pub covered_fraction: f64,
    pub min_snr_db: f64,
}

/// Writes the per-cell SNR raster for one band.
pub fn cmd_coverage(config_path: &Path, band_mhz: f64, out: &Path) -> Result<CoverageSummary> {
    let cfg = load_config(config_path)?;
    coverage_to_file(&cfg, band_mhz, out)
}

pub fn coverage_to_file(cfg: &ExperimentConfig, band_mhz: f64, out: &Path) -> Result<CoverageSummary> {
    if !(band_mhz.is_finite() && band_mhz > 0.0) {
        return Err(HarnessError::Usage(format!("band must be a positive frequency in MHz, got {band_mhz}")));
    }
    let world = build_world(cfg)?;
    let lb = cfg.link_budget().with_band(band_mhz);
    let map = radio::coverage_map(&lb, &world)?;
    let spec = world.spec();
    let mut w = csv::Writer::from_writer(Vec::new());
    for (c, snr) in map.iter() {
        let [x_m, y_m, z_m] = spec.cell_center_m(c);
        w.serialize(CoverageRow {
            ix: c.ix,
            iy: c.iy,
            iz: c.iz,
            x_m,
            y_m,
            z_m,
            snr_db: snr,
            covered: map.covered(c),
        })
        .expect("in-memory CSV write");
    }
    write_file(out, &w.into_inner().expect("in-memory CSV flush"))?;
    Ok(CoverageSummary {
        band_mhz,
        rows: spec.cell_count(),
        covered_fraction: map.covered_fraction(),
        min_snr_db: map.min_snr_db(),
    })
}
