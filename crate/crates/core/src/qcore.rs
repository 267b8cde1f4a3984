//! Tabular Q-learning machinery shared by both agents.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Action, Cell, GridSpec};

/// Checkpoint format written by [`save`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum QError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("invalid hyper-parameter: {0}")]
    InvalidHyper(String),
    #[error("invalid epsilon schedule: {0}")]
    InvalidSchedule(String),
    #[error("no candidate actions")]
    NoCandidates,
    #[error("checkpoint format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which agent a table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Strategic,
    Adaptive,
}

/// How strategic states are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keying {
    /// Position and destination.
    #[default]
    GoalConditioned,
    /// Position only.
    PositionOnly,
}

/// Table key.
///
/// The adaptive agent always uses [`StateKey::Position`]; the strategic agent
/// uses [`StateKey::Goal`] unless it is trained position-keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "KeyRepr", into = "KeyRepr")]
pub enum StateKey {
    Goal { position: Cell, destination: Cell },
    Position(Cell),
}

impl StateKey {
    pub fn position(&self) -> Cell {
        match *self {
            StateKey::Goal { position, .. } | StateKey::Position(position) => position,
        }
    }
}

/// Flat coordinate array: 6 values for goal keys, 3 for position keys.
#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct KeyRepr(Vec<u32>);

impl From<StateKey> for KeyRepr {
    fn from(k: StateKey) -> Self {
        match k {
            StateKey::Goal { position: p, destination: d } => KeyRepr(vec![p.ix, p.iy, p.iz, d.ix, d.iy, d.iz]),
            StateKey::Position(p) => KeyRepr(vec![p.ix, p.iy, p.iz]),
        }
    }
}

impl From<KeyRepr> for StateKey {
    // Length is checked in `load` before conversion; anything else is treated as a position key.
    fn from(r: KeyRepr) -> Self {
        let v = &r.0;
        let at = |i: usize| v.get(i).copied().unwrap_or(0);
        if v.len() == 6 {
            StateKey::Goal {
                position: Cell::new(at(0), at(1), at(2)),
                destination: Cell::new(at(3), at(4), at(5)),
            }
        } else {
            StateKey::Position(Cell::new(at(0), at(1), at(2)))
        }
    }
}

/// Learning rate and discount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { alpha: 0.8, gamma: 0.5 }
    }
}

impl Hyper {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self, QError> {
        let h = Self { alpha, gamma };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), QError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(QError::InvalidHyper(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(QError::InvalidHyper(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// Per-episode exploration rate `max(epsilon_min, epsilon0 · decay^episode)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub epsilon0: f64,
    pub epsilon_min: f64,
    pub decay: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            epsilon0: 1.0,
            epsilon_min: 0.05,
            decay: 0.995,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<(), QError> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 1.0) {
            return Err(QError::InvalidSchedule(format!("epsilon0 {} not in (0, 1]", self.epsilon0)));
        }
        if !(self.epsilon_min >= 0.0 && self.epsilon_min <= self.epsilon0) {
            return Err(QError::InvalidSchedule(format!(
                "epsilon_min {} not in [0, epsilon0]",
                self.epsilon_min
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(QError::InvalidSchedule(format!("decay {} not in (0, 1]", self.decay)));
        }
        Ok(())
    }
}

pub fn epsilon_at(schedule: &EpsilonSchedule, episode: u64) -> f64 {
    let exp = i32::try_from(episode).unwrap_or(i32::MAX);
    (schedule.epsilon0 * schedule.decay.powi(exp)).max(schedule.epsilon_min)
}

/// Grid dimensions recorded in a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDims {
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub cell_size_m: f64,
    pub cell_height_m: f64,
}

impl From<&GridSpec> for GridDims {
    fn from(s: &GridSpec) -> Self {
        Self {
            nx: s.nx,
            ny: s.ny,
            nz: s.nz,
            cell_size_m: s.cell_size_m,
            cell_height_m: s.cell_height_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub agent_kind: AgentKind,
    pub grid: GridDims,
    pub hyper: Hyper,
    pub seed: u64,
    #[serde(default)]
    pub keying: Keying,
    /// Carrier the adaptive table was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_mhz: Option<f64>,
}

/// Sparse action-value table; absent entries read as 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    meta: TableMeta,
    rows: HashMap<StateKey, [f64; Action::COUNT]>,
}

impl QTable {
    pub fn new(meta: TableMeta) -> Self {
        Self {
            meta,
            rows: HashMap::new(),
        }
    }

    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    pub fn get(&self, s: &StateKey, a: Action) -> f64 {
        self.rows.get(s).map_or(0.0, |row| row[a.index()])
    }

    /// All six action values at `s`, indexed by [`Action::index`].
    pub fn values(&self, s: &StateKey) -> [f64; Action::COUNT] {
        self.rows.get(s).copied().unwrap_or([0.0; Action::COUNT])
    }

    pub fn set(&mut self, s: StateKey, a: Action, value: f64) -> Result<(), QError> {
        if !value.is_finite() {
            return Err(QError::NonFinite { name: "value", value });
        }
        self.rows.entry(s).or_insert([0.0; Action::COUNT])[a.index()] = value;
        Ok(())
    }

    pub fn max_value(&self, s: &StateKey) -> f64 {
        self.values(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of states with at least one stored value.
    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    /// Stored `(state, action, value)` triples with non-zero value, sorted.
    pub fn entries(&self) -> Vec<(StateKey, Action, f64)> {
        let mut keys: Vec<&StateKey> = self.rows.keys().collect();
        keys.sort_unstable();
        keys.into_iter()
            .flat_map(|k| {
                let row = self.rows[k];
                Action::ALL
                    .into_iter()
                    .filter(move |a| row[a.index()].to_bits() != 0)
                    .map(move |a| (*k, a, row[a.index()]))
            })
            .collect()
    }

    /// Key for the strategic agent at `position` heading to `destination`,
    /// according to this table's keying.
    pub fn strategic_key(&self, position: Cell, destination: Cell) -> StateKey {
        match self.meta.keying {
            Keying::GoalConditioned => StateKey::Goal { position, destination },
            Keying::PositionOnly => StateKey::Position(position),
        }
    }

    /// Fails unless the table was trained for `kind` on `spec`.
    pub fn check_compatible(&self, spec: &GridSpec, kind: AgentKind) -> Result<(), QError> {
        if self.meta.agent_kind != kind {
            return Err(QError::Mismatch(format!(
                "expected a {kind:?} table, found {:?}",
                self.meta.agent_kind
            )));
        }
        if self.meta.grid != GridDims::from(spec) {
            return Err(QError::Mismatch(format!(
                "table grid {:?} differs from world grid {:?}",
                self.meta.grid,
                GridDims::from(spec)
            )));
        }
        Ok(())
    }
}

/// Bellman update of one entry. `s_next = None` marks a terminal transition.
pub fn q_update(
    table: &mut QTable,
    s: &StateKey,
    a: Action,
    r: f64,
    s_next: Option<&StateKey>,
    h: &Hyper,
) -> Result<f64, QError> {
    if !r.is_finite() {
        return Err(QError::NonFinite { name: "reward", value: r });
    }
    let bootstrap = s_next.map_or(0.0, |n| table.max_value(n));
    let old = table.get(s, a);
    let new = old + h.alpha * (r + h.gamma * bootstrap - old);
    table.set(*s, a, new)?;
    Ok(new)
}

/// Argmax of `values` over `candidates`, ties broken uniformly.
pub fn argmax_action<R: Rng + ?Sized>(
    values: &[f64; Action::COUNT],
    candidates: &[Action],
    rng: &mut R,
) -> Result<Action, QError> {
    let best = candidates
        .iter()
        .map(|a| values[a.index()])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ties = [Action::PlusX; Action::COUNT];
    let mut n = 0;
    for &a in candidates {
        if values[a.index()] == best {
            ties[n] = a;
            n += 1;
        }
    }
    match n {
        0 => Err(QError::NoCandidates),
        1 => Ok(ties[0]),
        _ => Ok(ties[rng.gen_range(0..n)]),
    }
}

/// Epsilon-greedy choice. The explore/exploit coin and the random action use
/// `explore`; argmax ties use `ties`.
pub fn select_action<R: Rng + ?Sized, T: Rng + ?Sized>(
    table: &QTable,
    s: &StateKey,
    epsilon: f64,
    explore: &mut R,
    ties: &mut T,
    candidates: &[Action],
) -> Result<Action, QError> {
    if candidates.is_empty() {
        return Err(QError::NoCandidates);
    }
    if explore.gen::<f64>() < epsilon {
        return Ok(candidates[explore.gen_range(0..candidates.len())]);
    }
    argmax_action(&table.values(s), candidates, ties)
}

#[derive(Serialize, Deserialize)]
struct Entry {
    state_key: StateKey,
    action: Action,
    value: f64,
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format_version: u32,
    #[serde(flatten)]
    meta: &'a TableMeta,
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
struct CheckpointIn {
    #[serde(flatten)]
    meta: TableMeta,
    entries: Vec<Entry>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn write_table<W: Write>(table: &QTable, writer: W) -> Result<(), QError> {
    let doc = CheckpointOut {
        format_version: FORMAT_VERSION,
        meta: &table.meta,
        entries: table
            .entries()
            .into_iter()
            .map(|(state_key, action, value)| Entry {
                state_key,
                action,
                value,
            })
            .collect(),
    };
    serde_json::to_writer(writer, &doc).map_err(|e| QError::Io(e.into()))
}

pub fn read_table<R: Read>(mut reader: R) -> Result<QTable, QError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let probe: VersionProbe = serde_json::from_str(&text).map_err(|e| QError::Corrupt(e.to_string()))?;
    if probe.format_version > FORMAT_VERSION {
        return Err(QError::VersionMismatch {
            found: probe.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let doc: CheckpointIn = serde_json::from_str(&text).map_err(|e| QError::Corrupt(e.to_string()))?;
    let mut table = QTable::new(doc.meta);
    for e in doc.entries {
        let expected = match table.meta.agent_kind {
            AgentKind::Strategic if table.meta.keying == Keying::GoalConditioned => 6,
            _ => 3,
        };
        let len = KeyRepr::from(e.state_key).0.len();
        if len != expected {
            return Err(QError::Corrupt(format!("state key of length {len}, expected {expected}")));
        }
        table.set(e.state_key, e.action, e.value).map_err(|err| QError::Corrupt(err.to_string()))?;
    }
    Ok(table)
}

pub fn save(table: &QTable, path: &Path) -> Result<(), QError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_table(table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<QTable, QError> {
    read_table(BufReader::new(File::open(path)?))
}
