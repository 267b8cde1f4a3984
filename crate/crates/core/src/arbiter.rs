//! Flight-time fusion of the strategic and adaptive tables.
//!
//! Each agent proposes its greedy action. When they disagree, the strategic
//! table's value of the adaptive proposal is compared against the adaptive
//! table's value of the strategic proposal; the adaptive proposal wins only
//! on a strict `>`. The optional safety filter removes moves into obstacles
//! before either agent proposes, and the optional arrival priority lets a
//! strategic move that lands on the destination through unopposed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gridworld::{Action, Cell, GridWorld, StepEvent};
use crate::qcore::{argmax_action, QTable, StateKey};
use crate::radio::CoverageMap;

/// How values from the two tables are put on a common scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueComparison {
    /// Compare raw Q-values.
    #[default]
    Raw,
    /// Min-max scale each table's six values at the state to [0, 1] first.
    /// A table with identical values at the state scales to all ones.
    MinMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbiterOptions {
    pub safety: bool,
    /// Take the strategic action outright when it reaches the destination.
    pub arrival_priority: bool,
    pub comparison: ValueComparison,
    pub altitude_locked: bool,
}

impl Default for ArbiterOptions {
    fn default() -> Self {
        Self {
            safety: true,
            arrival_priority: true,
            comparison: ValueComparison::Raw,
            altitude_locked: false,
        }
    }
}

fn min_max(values: &[f64; Action::COUNT]) -> [f64; Action::COUNT] {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        values.map(|v| (v - lo) / span)
    } else {
        [1.0; Action::COUNT]
    }
}

/// Resolves two proposals given each table's values at the current state.
pub fn arbitrate(
    a1: Action,
    a2: Action,
    strategic: &[f64; Action::COUNT],
    adaptive: &[f64; Action::COUNT],
    comparison: ValueComparison,
) -> Action {
    if a1 == a2 {
        return a1;
    }
    let (strategic, adaptive) = match comparison {
        ValueComparison::Raw => (*strategic, *adaptive),
        ValueComparison::MinMax => (min_max(strategic), min_max(adaptive)),
    };
    let q1 = strategic[a2.index()];
    let q2 = adaptive[a1.index()];
    if q1 > q2 {
        a2
    } else {
        a1
    }
}

/// Actions the arbiter may choose from at `pos`.
pub fn candidate_actions(world: &GridWorld, pos: Cell, opts: &ArbiterOptions) -> Vec<Action> {
    let all = Action::candidates(opts.altitude_locked);
    if !opts.safety {
        return all.to_vec();
    }
    let safe: Vec<Action> = all
        .iter()
        .copied()
        .filter(|&a| world.spec().neighbor(pos, a).is_none_or(|n| !world.is_obstacle(n)))
        .collect();
    if safe.is_empty() {
        all.to_vec()
    } else {
        safe
    }
}

/// One arbitrated decision. `ties` breaks argmax ties in either table.
pub fn decide<R: Rng + ?Sized>(
    q_strategic: &QTable,
    q_adaptive: &QTable,
    pos: Cell,
    dest: Cell,
    world: &GridWorld,
    opts: &ArbiterOptions,
    ties: &mut R,
) -> Action {
    let candidates = candidate_actions(world, pos, opts);
    let strategic = q_strategic.values(&q_strategic.strategic_key(pos, dest));
    let adaptive = q_adaptive.values(&StateKey::Position(pos));
    // Candidates are never empty, so the argmax cannot fail.
    let a1 = argmax_action(&strategic, &candidates, ties).expect("non-empty candidates");
    if opts.arrival_priority && world.spec().neighbor(pos, a1) == Some(dest) {
        return a1;
    }
    let a2 = argmax_action(&adaptive, &candidates, ties).expect("non-empty candidates");
    arbitrate(a1, a2, &strategic, &adaptive, opts.comparison)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlightOutcome {
    Arrived,
    Crashed,
    StepCapHit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightResult {
    /// Distinct positions visited, starting at the start cell. Moves blocked
    /// by the boundary count as steps but add no entry.
    pub trajectory: Vec<Cell>,
    pub outcome: FlightOutcome,
    pub steps: usize,
    /// Steps that ended in a cell below the SNR threshold.
    pub outage_steps: usize,
    /// Lowest SNR along the trajectory, start cell included.
    pub min_snr_db: f64,
    pub flight_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightOptions {
    pub arbiter: ArbiterOptions,
    pub step_cap: usize,
    /// Cruise speed used to convert steps into flight time.
    pub speed_mps: f64,
}

/// Greedy arbitrated flight from the world's start cell to `dest`.
pub fn execute_flight<R: Rng + ?Sized>(
    q_strategic: &QTable,
    q_adaptive: &QTable,
    world: &GridWorld,
    coverage: &CoverageMap,
    dest: Cell,
    opts: &FlightOptions,
    ties: &mut R,
) -> FlightResult {
    let mut pos = world.start();
    let mut trajectory = vec![pos];
    let mut min_snr_db = coverage.snr(pos);
    let mut outage_steps = 0;
    let mut steps = 0;
    let mut outcome = FlightOutcome::StepCapHit;

    while steps < opts.step_cap {
        let a = decide(q_strategic, q_adaptive, pos, dest, world, &opts.arbiter, ties);
        let out = world.apply_action(pos, a, dest);
        steps += 1;
        if out.event != StepEvent::BlockedAtBoundary {
            trajectory.push(out.next);
        }
        pos = out.next;
        let snr = coverage.snr(pos);
        min_snr_db = min_snr_db.min(snr);
        if !coverage.covered(pos) {
            outage_steps += 1;
        }
        match out.event {
            StepEvent::ArrivedAtDestination => {
                outcome = FlightOutcome::Arrived;
                break;
            }
            StepEvent::CrashedIntoObstacle => {
                outcome = FlightOutcome::Crashed;
                break;
            }
            StepEvent::Moved | StepEvent::BlockedAtBoundary => {}
        }
    }

    FlightResult {
        trajectory,
        outcome,
        steps,
        outage_steps,
        min_snr_db,
        flight_time_s: steps as f64 * world.spec().cell_size_m / opts.speed_mps,
    }
}
