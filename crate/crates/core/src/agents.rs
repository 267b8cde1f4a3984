//! Training loops for the strategic (path) and adaptive (coverage) agents.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Action, Cell, GridError, GridWorld, StepEvent};
use crate::qcore::{
    epsilon_at, q_update, select_action, AgentKind, EpsilonSchedule, GridDims, Hyper, Keying, QError, QTable,
    StateKey, TableMeta,
};
use crate::radio::{coverage_map, CoverageMap, LinkBudget, RadioError};
use crate::streams;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid training settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Q(#[from] QError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Radio(#[from] RadioError),
}

/// Reward and penalty magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub r_closer: f64,
    pub r_farther: f64,
    pub r_crash: f64,
    pub r_arrive: f64,
    pub r_covered: f64,
    pub r_outage: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            r_closer: 1.0,
            r_farther: -1.0,
            r_crash: -100.0,
            r_arrive: 5.0,
            r_covered: 1.0,
            r_outage: -5.0,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let all = [
            self.r_closer,
            self.r_farther,
            self.r_crash,
            self.r_arrive,
            self.r_covered,
            self.r_outage,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::Settings("rewards must be finite".into()));
        }
        if !(self.r_crash < self.r_farther && self.r_farther < 0.0 && 0.0 < self.r_closer && self.r_closer < self.r_arrive)
        {
            return Err(AgentError::Settings(
                "rewards must satisfy r_crash < r_farther < 0 < r_closer < r_arrive".into(),
            ));
        }
        if !(self.r_outage < 0.0 && 0.0 < self.r_covered) {
            return Err(AgentError::Settings("rewards must satisfy r_outage < 0 < r_covered".into()));
        }
        Ok(())
    }
}

/// Distance used by the strategic reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Manhattan,
}

/// Whether episode logs keep every step or only the totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogDetail {
    #[default]
    Summary,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub hyper: Hyper,
    pub schedule: EpsilonSchedule,
    pub rewards: RewardParams,
    pub episodes: u64,
    pub step_cap: usize,
    pub keying: Keying,
    /// Train towards this destination every episode instead of drawing one.
    pub fixed_destination: Option<Cell>,
    pub distance_metric: DistanceMetric,
    pub altitude_locked: bool,
    pub detail: LogDetail,
}

impl TrainSettings {
    /// Defaults for `world`: step cap `4·(nx+ny+nz)`.
    pub fn for_world(world: &GridWorld, episodes: u64) -> Self {
        Self {
            hyper: Hyper::default(),
            schedule: EpsilonSchedule::default(),
            rewards: RewardParams::default(),
            episodes,
            step_cap: default_step_cap(world),
            keying: Keying::GoalConditioned,
            fixed_destination: None,
            distance_metric: DistanceMetric::Euclidean,
            altitude_locked: false,
            detail: LogDetail::Summary,
        }
    }

    pub fn validate(&self, world: &GridWorld) -> Result<(), AgentError> {
        self.hyper.validate()?;
        self.schedule.validate()?;
        self.rewards.validate()?;
        if self.episodes == 0 {
            return Err(AgentError::Settings("episodes must be at least 1".into()));
        }
        if self.step_cap == 0 {
            return Err(AgentError::Settings("step_cap must be at least 1".into()));
        }
        if let Some(d) = self.fixed_destination {
            if !world.spec().contains(d) || world.is_obstacle(d) || d == world.start() {
                return Err(AgentError::Settings(format!(
                    "fixed destination {d} must be an in-bounds free cell other than the start"
                )));
            }
        }
        if self.altitude_locked {
            let locked = world.start().iz;
            if let Some(d) = self.fixed_destination.filter(|d| d.iz != locked) {
                return Err(AgentError::Settings(format!(
                    "fixed destination {d} is not on the locked altitude layer {locked}"
                )));
            }
        }
        Ok(())
    }

    fn candidates(&self) -> &'static [Action] {
        Action::candidates(self.altitude_locked)
    }
}

pub fn default_step_cap(world: &GridWorld) -> usize {
    let s = world.spec();
    4 * (s.nx + s.ny + s.nz) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalCause {
    Arrived,
    StepCapHit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Cell,
    pub action: Action,
    pub reward: f64,
    pub event: StepEvent,
    pub next: Cell,
    /// SNR of `next`; adaptive agent only.
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: u64,
    pub destination: Cell,
    pub epsilon: f64,
    /// Empty unless trained with [`LogDetail::Full`].
    pub steps: Vec<StepRecord>,
    pub step_count: usize,
    pub total_reward: f64,
    pub terminal: TerminalCause,
}

#[derive(Debug, Clone)]
pub struct Training {
    pub table: QTable,
    pub logs: Vec<EpisodeLog>,
}

pub fn reward_strategic(dist_before_m: f64, dist_after_m: f64, event: StepEvent, p: &RewardParams) -> f64 {
    let mut r = if dist_after_m < dist_before_m {
        p.r_closer
    } else {
        p.r_farther
    };
    match event {
        StepEvent::CrashedIntoObstacle => r += p.r_crash,
        StepEvent::ArrivedAtDestination => r += p.r_arrive,
        StepEvent::Moved | StepEvent::BlockedAtBoundary => {}
    }
    r
}

pub fn reward_adaptive(snr_db: f64, threshold_db: f64, p: &RewardParams) -> f64 {
    if snr_db < threshold_db {
        p.r_outage
    } else {
        p.r_covered
    }
}

fn destination<R: rand::Rng>(world: &GridWorld, settings: &TrainSettings, rng: &mut R) -> Result<Cell, GridError> {
    match settings.fixed_destination {
        Some(d) => Ok(d),
        None => draw_destination(world, settings.altitude_locked, rng),
    }
}

/// Uniform free cell, restricted to the start layer when `altitude_locked`.
pub fn draw_destination<R: rand::Rng + ?Sized>(
    world: &GridWorld,
    altitude_locked: bool,
    rng: &mut R,
) -> Result<Cell, GridError> {
    if !altitude_locked {
        return world.random_free_cell(rng);
    }
    let layer = world.start().iz;
    let layer_cells: Vec<Cell> = world.free_cells().iter().copied().filter(|c| c.iz == layer).collect();
    if layer_cells.is_empty() {
        return Err(GridError::NoFreeCell);
    }
    Ok(layer_cells[rng.gen_range(0..layer_cells.len())])
}

fn meta(world: &GridWorld, settings: &TrainSettings, kind: AgentKind, seed: u64, band_mhz: Option<f64>) -> TableMeta {
    TableMeta {
        agent_kind: kind,
        grid: GridDims::from(world.spec()),
        hyper: settings.hyper,
        seed,
        keying: match kind {
            AgentKind::Strategic => settings.keying,
            AgentKind::Adaptive => Keying::PositionOnly,
        },
        band_mhz,
    }
}

/// Strategic agent: shortest obstacle-free paths from the start cell.
pub fn train_strategic(world: &GridWorld, settings: &TrainSettings, seed: u64) -> Result<Training, AgentError> {
    settings.validate(world)?;
    let mut dest_rng = streams::stream(seed, "strategic/destinations");
    let mut explore = streams::stream(seed, "strategic/explore");
    let mut ties = streams::stream(seed, "strategic/ties");
    let mut table = QTable::new(meta(world, settings, AgentKind::Strategic, seed, None));
    let spec = *world.spec();
    let distance = |a: Cell, b: Cell| match settings.distance_metric {
        DistanceMetric::Euclidean => spec.distance_m(a, b),
        DistanceMetric::Manhattan => spec.manhattan_m(a, b),
    };

    let mut logs = Vec::with_capacity(settings.episodes as usize);
    for episode in 0..settings.episodes {
        let epsilon = epsilon_at(&settings.schedule, episode);
        let dest = destination(world, settings, &mut dest_rng)?;
        let mut pos = world.start();
        let mut dist = distance(pos, dest);
        let mut log = EpisodeLog {
            episode,
            destination: dest,
            epsilon,
            steps: Vec::new(),
            step_count: 0,
            total_reward: 0.0,
            terminal: TerminalCause::StepCapHit,
        };

        while log.step_count < settings.step_cap {
            let key = table.strategic_key(pos, dest);
            let action = select_action(&table, &key, epsilon, &mut explore, &mut ties, settings.candidates())?;
            let out = world.apply_action(pos, action, dest);
            let next_dist = distance(out.next, dest);
            let reward = reward_strategic(dist, next_dist, out.event, &settings.rewards);
            let arrived = out.event == StepEvent::ArrivedAtDestination;
            let next_key = (!arrived).then(|| table.strategic_key(out.next, dest));
            q_update(&mut table, &key, action, reward, next_key.as_ref(), &settings.hyper)?;

            log.total_reward += reward;
            log.step_count += 1;
            if settings.detail == LogDetail::Full {
                log.steps.push(StepRecord {
                    state: pos,
                    action,
                    reward,
                    event: out.event,
                    next: out.next,
                    snr_db: None,
                });
            }
            pos = out.next;
            dist = next_dist;
            if arrived {
                log.terminal = TerminalCause::Arrived;
                break;
            }
        }
        logs.push(log);
    }
    Ok(Training { table, logs })
}

/// Adaptive agent on one carrier.
pub fn train_adaptive(
    world: &GridWorld,
    lb: &LinkBudget,
    settings: &TrainSettings,
    seed: u64,
) -> Result<Training, AgentError> {
    let coverage = coverage_map(lb, world)?;
    train_adaptive_on(world, &coverage, settings, seed)
}

/// Adaptive agent against a precomputed coverage map.
pub fn train_adaptive_on(
    world: &GridWorld,
    coverage: &CoverageMap,
    settings: &TrainSettings,
    seed: u64,
) -> Result<Training, AgentError> {
    settings.validate(world)?;
    if coverage.spec() != world.spec() {
        return Err(AgentError::Settings("coverage map grid differs from the world grid".into()));
    }
    let band = coverage.band_mhz();
    let mut dest_rng = streams::stream(seed, &format!("adaptive/{band}/destinations"));
    let mut explore = streams::stream(seed, &format!("adaptive/{band}/explore"));
    let mut ties = streams::stream(seed, &format!("adaptive/{band}/ties"));
    let mut table = QTable::new(meta(world, settings, AgentKind::Adaptive, seed, Some(band)));

    let mut logs = Vec::with_capacity(settings.episodes as usize);
    for episode in 0..settings.episodes {
        let epsilon = epsilon_at(&settings.schedule, episode);
        let dest = destination(world, settings, &mut dest_rng)?;
        let mut pos = world.start();
        let mut log = EpisodeLog {
            episode,
            destination: dest,
            epsilon,
            steps: Vec::new(),
            step_count: 0,
            total_reward: 0.0,
            terminal: TerminalCause::StepCapHit,
        };

        while log.step_count < settings.step_cap {
            let key = StateKey::Position(pos);
            let action = select_action(&table, &key, epsilon, &mut explore, &mut ties, settings.candidates())?;
            let out = world.apply_action(pos, action, dest);
            let snr = coverage.snr(out.next);
            let reward = reward_adaptive(snr, coverage.threshold_db(), &settings.rewards);
            // The destination is not part of this agent's state, so arrival
            // still bootstraps from the arrival cell.
            let next_key = StateKey::Position(out.next);
            q_update(&mut table, &key, action, reward, Some(&next_key), &settings.hyper)?;

            log.total_reward += reward;
            log.step_count += 1;
            if settings.detail == LogDetail::Full {
                log.steps.push(StepRecord {
                    state: pos,
                    action,
                    reward,
                    event: out.event,
                    next: out.next,
                    snr_db: Some(snr),
                });
            }
            pos = out.next;
            if out.event == StepEvent::ArrivedAtDestination {
                log.terminal = TerminalCause::Arrived;
                break;
            }
        }
        logs.push(log);
    }
    Ok(Training { table, logs })
}

/// One adaptive table per carrier in `bands_mhz`, trained concurrently.
pub fn train_adaptive_bands(
    world: &GridWorld,
    lb: &LinkBudget,
    bands_mhz: &[f64],
    settings: &TrainSettings,
    seed: u64,
) -> Result<Vec<(f64, Training)>, AgentError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = bands_mhz
            .iter()
            .map(|&band| {
                let lb = lb.with_band(band);
                scope.spawn(move || train_adaptive(world, &lb, settings, seed).map(|t| (band, t)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("adaptive training thread panicked"))
            .collect()
    })
}

/// Greedy rollout of a single table, without exploration.
#[allow(clippy::too_many_arguments)]
pub fn greedy_path<R: rand::Rng>(
    world: &GridWorld,
    table: &QTable,
    key: impl Fn(Cell) -> StateKey,
    from: Cell,
    dest: Cell,
    max_steps: usize,
    candidates: &[Action],
    ties: &mut R,
) -> Result<Vec<Cell>, QError> {
    let mut path = vec![from];
    let mut pos = from;
    for _ in 0..max_steps {
        if pos == dest {
            break;
        }
        let a = crate::qcore::argmax_action(&table.values(&key(pos)), candidates, ties)?;
        pos = world.apply_action(pos, a, dest).next;
        path.push(pos);
    }
    Ok(path)
}
