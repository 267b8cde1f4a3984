//! Experiment configuration, stored as TOML.
//!
//! Every field has a default; a config file only needs the values it
//! changes. Validation errors point at the offending line when the field
//! appears in the source text.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{DistanceMetric, RewardParams, TrainSettings};
use crate::arbiter::{ArbiterOptions, ValueComparison};
use crate::gridworld::{Cell, GridSpec};
use crate::qcore::{EpsilonSchedule, Hyper, Keying};
use crate::radio::{LinkBudget, DEFAULT_SNR_THRESHOLD_DB};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{}", display_invalid(.field, .line, .reason))]
    Invalid {
        field: String,
        line: Option<usize>,
        reason: String,
    },
}

fn display_invalid(field: &str, line: &Option<usize>, reason: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {field}: {reason}"),
        None => format!("{field}: {reason}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub cell_size_m: f64,
    pub cell_height_m: f64,
    pub max_altitude_m: f64,
    /// Restrict flights to the start cell's altitude layer.
    pub altitude_locked: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        Self {
            nx: g.nx,
            ny: g.ny,
            nz: g.nz,
            cell_size_m: g.cell_size_m,
            cell_height_m: g.cell_height_m,
            max_altitude_m: 100.0,
            altitude_locked: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub obstacle_density: f64,
    pub start: [u32; 3],
    /// Ground-plane `[ix, iy]` of the base-station column.
    pub base_station: [u32; 2],
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            obstacle_density: 0.05,
            start: [0, 0, 0],
            base_station: [10, 10],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub bands_mhz: Vec<f64>,
    pub h_b_m: f64,
    pub c_m_db: f64,
    pub p_tx_dbm: f64,
    pub g_tx_db: f64,
    pub g_rx_db: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub snr_threshold_db: f64,
    pub d_min_km: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        let lb = LinkBudget::default();
        Self {
            bands_mhz: vec![900.0, 1800.0, 2100.0],
            h_b_m: lb.h_b_m,
            c_m_db: lb.c_m_db,
            p_tx_dbm: lb.p_tx_dbm,
            g_tx_db: lb.g_tx_db,
            g_rx_db: lb.g_rx_db,
            bandwidth_hz: lb.bandwidth_hz,
            noise_figure_db: lb.noise_figure_db,
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
            d_min_km: lb.d_min_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    pub epsilon_min: f64,
    pub epsilon_decay: f64,
}

impl Default for LearningSection {
    fn default() -> Self {
        let h = Hyper::default();
        let e = EpsilonSchedule::default();
        Self {
            alpha: h.alpha,
            gamma: h.gamma,
            epsilon0: e.epsilon0,
            epsilon_min: e.epsilon_min,
            epsilon_decay: e.decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub strategic_episodes: u64,
    pub adaptive_episodes: u64,
    /// Per-episode step limit for strategic training and evaluation
    /// flights; 0 selects `4·(nx+ny+nz)`.
    pub step_cap: usize,
    /// Per-episode step limit for adaptive training; 0 selects twice the
    /// cell count.
    pub adaptive_step_cap: usize,
    pub keying: Keying,
    pub distance_metric: DistanceMetric,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            strategic_episodes: 1_000_000,
            adaptive_episodes: 5_000,
            step_cap: 0,
            adaptive_step_cap: 0,
            keying: Keying::GoalConditioned,
            distance_metric: DistanceMetric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub flights: usize,
    pub safety: bool,
    pub arrival_priority: bool,
    pub comparison: ValueComparison,
    pub uav_speed_mps: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            flights: 100,
            safety: true,
            arrival_priority: true,
            comparison: ValueComparison::Raw,
            uav_speed_mps: 15.0,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridSection,
    pub world: WorldSection,
    pub radio: RadioSection,
    pub learning: LearningSection,
    pub rewards: RewardParams,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            grid: GridSection::default(),
            world: WorldSection::default(),
            radio: RadioSection::default(),
            learning: LearningSection::default(),
            rewards: RewardParams::default(),
            training: TrainingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML source.
    pub fn from_toml(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(src).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(|e| match e {
            ConfigError::Invalid { field, reason, .. } => ConfigError::Invalid {
                line: line_of(src, &field),
                field,
                reason,
            },
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nx: self.grid.nx,
            ny: self.grid.ny,
            nz: self.grid.nz,
            cell_size_m: self.grid.cell_size_m,
            cell_height_m: self.grid.cell_height_m,
        }
    }

    pub fn start(&self) -> Cell {
        self.world.start.into()
    }

    pub fn base_station(&self) -> Cell {
        Cell::new(self.world.base_station[0], self.world.base_station[1], 0)
    }

    /// Link budget with the first configured band (or 900 MHz when none).
    pub fn link_budget(&self) -> LinkBudget {
        let r = &self.radio;
        LinkBudget {
            f_mhz: r.bands_mhz.first().copied().unwrap_or(900.0),
            h_b_m: r.h_b_m,
            c_m_db: r.c_m_db,
            p_tx_dbm: r.p_tx_dbm,
            g_tx_db: r.g_tx_db,
            g_rx_db: r.g_rx_db,
            bandwidth_hz: r.bandwidth_hz,
            noise_figure_db: r.noise_figure_db,
            snr_threshold_db: r.snr_threshold_db,
            d_min_km: r.d_min_km,
        }
    }

    pub fn hyper(&self) -> Hyper {
        Hyper {
            alpha: self.learning.alpha,
            gamma: self.learning.gamma,
        }
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            epsilon0: self.learning.epsilon0,
            epsilon_min: self.learning.epsilon_min,
            decay: self.learning.epsilon_decay,
        }
    }

    pub fn step_cap(&self) -> usize {
        match self.training.step_cap {
            0 => 4 * (self.grid.nx + self.grid.ny + self.grid.nz) as usize,
            n => n,
        }
    }

    pub fn adaptive_step_cap(&self) -> usize {
        match self.training.adaptive_step_cap {
            0 => 2 * self.grid_spec().cell_count(),
            n => n,
        }
    }

    pub fn train_settings(&self, episodes: u64) -> TrainSettings {
        TrainSettings {
            hyper: self.hyper(),
            schedule: self.schedule(),
            rewards: self.rewards,
            episodes,
            step_cap: self.step_cap(),
            keying: self.training.keying,
            fixed_destination: None,
            distance_metric: self.training.distance_metric,
            altitude_locked: self.grid.altitude_locked,
            detail: Default::default(),
        }
    }

    pub fn arbiter_options(&self) -> ArbiterOptions {
        ArbiterOptions {
            safety: self.evaluation.safety,
            arrival_priority: self.evaluation.arrival_priority,
            comparison: self.evaluation.comparison,
            altitude_locked: self.grid.altitude_locked,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, reason: String| ConfigError::Invalid {
            field: field.to_string(),
            line: None,
            reason,
        };
        let g = &self.grid;
        for (field, v) in [("grid.nx", g.nx), ("grid.ny", g.ny), ("grid.nz", g.nz)] {
            if v == 0 {
                return Err(bad(field, "must be at least 1".into()));
            }
        }
        if g.nx != g.ny {
            return Err(bad("grid.ny", format!("region must be square: ny ({}) must equal nx ({})", g.ny, g.nx)));
        }
        for (field, v) in [
            ("grid.cell_size_m", g.cell_size_m),
            ("grid.cell_height_m", g.cell_height_m),
            ("grid.max_altitude_m", g.max_altitude_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(field, format!("must be positive, got {v}")));
            }
        }
        let spec = self.grid_spec();
        if spec.height_m() > g.max_altitude_m {
            return Err(bad(
                "grid.nz",
                format!(
                    "nz * cell_height_m = {} m exceeds max_altitude_m = {} m",
                    spec.height_m(),
                    g.max_altitude_m
                ),
            ));
        }

        let w = &self.world;
        if !(0.0..=0.5).contains(&w.obstacle_density) {
            return Err(bad(
                "world.obstacle_density",
                format!("must be in [0, 0.5], got {}", w.obstacle_density),
            ));
        }
        if !spec.contains(self.start()) {
            return Err(bad("world.start", format!("{} is outside the grid", self.start())));
        }
        if !spec.contains(self.base_station()) {
            return Err(bad(
                "world.base_station",
                format!("{:?} is outside the grid", w.base_station),
            ));
        }

        let r = &self.radio;
        if r.bands_mhz.is_empty() {
            return Err(bad("radio.bands_mhz", "at least one band is required".into()));
        }
        if let Some(f) = r.bands_mhz.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(bad("radio.bands_mhz", format!("bands must be positive, got {f}")));
        }
        for (i, f) in r.bands_mhz.iter().enumerate() {
            if r.bands_mhz[..i].contains(f) {
                return Err(bad("radio.bands_mhz", format!("band {f} listed twice")));
            }
        }
        if let Err(e) = self.link_budget().validate() {
            let field = match &e {
                crate::radio::RadioError::NonPositive { name, .. } | crate::radio::RadioError::NonFinite { name, .. } => {
                    format!("radio.{name}")
                }
            };
            return Err(bad(&field, e.to_string()));
        }

        let l = &self.learning;
        if !(l.alpha > 0.0 && l.alpha <= 1.0) {
            return Err(bad("learning.alpha", format!("must be in (0, 1], got {}", l.alpha)));
        }
        if !(0.0..1.0).contains(&l.gamma) {
            return Err(bad("learning.gamma", format!("must be in [0, 1), got {}", l.gamma)));
        }
        if !(l.epsilon0 > 0.0 && l.epsilon0 <= 1.0) {
            return Err(bad("learning.epsilon0", format!("must be in (0, 1], got {}", l.epsilon0)));
        }
        if !(l.epsilon_min >= 0.0 && l.epsilon_min <= l.epsilon0) {
            return Err(bad(
                "learning.epsilon_min",
                format!("must be in [0, epsilon0], got {}", l.epsilon_min),
            ));
        }
        if !(l.epsilon_decay > 0.0 && l.epsilon_decay <= 1.0) {
            return Err(bad(
                "learning.epsilon_decay",
                format!("must be in (0, 1], got {}", l.epsilon_decay),
            ));
        }

        if let Err(e) = self.rewards.validate() {
            return Err(bad("rewards", e.to_string()));
        }

        let t = &self.training;
        if t.strategic_episodes == 0 {
            return Err(bad("training.strategic_episodes", "must be at least 1".into()));
        }
        if t.adaptive_episodes == 0 {
            return Err(bad("training.adaptive_episodes", "must be at least 1".into()));
        }
        let s = self.evaluation.uav_speed_mps;
        if !(s.is_finite() && s > 0.0) {
            return Err(bad("evaluation.uav_speed_mps", format!("must be positive, got {s}")));
        }
        Ok(())
    }
}

/// 1-based line of `field` (`section.key` or `key`) in TOML source.
fn line_of(src: &str, field: &str) -> Option<usize> {
    let (section, key) = match field.split_once('.') {
        Some((s, k)) => (s, Some(k)),
        None => (field, None),
    };
    let mut current = "";
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim();
            if key.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        let matches = match key {
            Some(k) => (current == section && lhs == k) || (current.is_empty() && lhs == field),
            None => current.is_empty() && lhs == section,
        };
        if matches {
            return Some(i + 1);
        }
    }
    None
}
