//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the output stays readable
//! and the expensive trainings are shared between criteria 4, 5 and 6.
//! Exits non-zero when any criterion fails.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uav_multiq::agents::{self, EpisodeLog, TrainSettings};
use uav_multiq::arbiter::{self, ArbiterOptions, ValueComparison};
use uav_multiq::gridworld::{Action, Cell, GridSpec, GridWorld};
use uav_multiq::harness::{self, compute_metrics, EvalOptions, ExperimentConfig, FlightMetrics, FlightRecord};
use uav_multiq::qcore::{self, AgentKind, GridDims, Hyper, Keying, QTable, StateKey, TableMeta};
use uav_multiq::radio::{self, LinkBudget};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(o: &Outcome) {
    println!(
        "{} criterion {}: {} ({}) [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail,
        o.elapsed.as_secs_f64()
    );
}

fn log10(v: f64) -> f64 {
    v.ln() / std::f64::consts::LN_10
}

/// Straight-line transcription of the propagation formula.
fn oracle_path_loss(f: f64, hb: f64, hr: f64, d: f64, cm: f64) -> f64 {
    let a_hr = (1.1 * log10(f) - 0.7) * hr - (1.56 * log10(f) - 0.8);
    46.3 + 33.9 * log10(f) - 13.82 * log10(hb) - a_hr + (44.9 - 6.55 * log10(hb)) * log10(d) + cm
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let f = rng.gen_range(150.0..=2600.0);
        let hb = rng.gen_range(30.0..=200.0);
        let hr = rng.gen_range(1.0..=100.0);
        let d = rng.gen_range(0.01..=5.0);
        let cm = if rng.gen_bool(0.5) { 0.0 } else { 3.0 };
        let lb = LinkBudget {
            f_mhz: f,
            h_b_m: hb,
            c_m_db: cm,
            d_min_km: 1e-6,
            ..LinkBudget::default()
        };
        let got = radio::path_loss_db(&lb, hr, d).expect("valid inputs");
        worst = worst.max((got - oracle_path_loss(f, hb, hr, d, cm)).abs());
    }
    let lb = LinkBudget {
        f_mhz: 900.0,
        h_b_m: 60.0,
        c_m_db: 0.0,
        ..LinkBudget::default()
    };
    let example = radio::path_loss_db(&lb, 1.5, 1.0).expect("valid inputs");
    let elapsed = t.elapsed();
    Outcome {
        id: 1,
        name: "path-loss formula oracle",
        pass: worst <= 1e-9 && (example - 121.859).abs() <= 1e-3 && elapsed < Duration::from_secs(1),
        detail: format!("max |delta| {worst:.2e} dB over 1000 tuples, worked example {example:.4} dB"),
        elapsed,
    }
}

fn one_entry_table() -> (QTable, StateKey, StateKey) {
    let t = QTable::new(TableMeta {
        agent_kind: AgentKind::Adaptive,
        grid: GridDims::from(&GridSpec::default()),
        hyper: Hyper::default(),
        seed: 0,
        keying: Keying::PositionOnly,
        band_mhz: None,
    });
    (t, StateKey::Position(Cell::new(1, 1, 1)), StateKey::Position(Cell::new(2, 1, 1)))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let h = Hyper::new(0.8, 0.5).unwrap();
    let mut checks = Vec::new();

    let (mut q, s, n) = one_entry_table();
    q.set(n, Action::PlusY, 4.0).unwrap();
    let v = qcore::q_update(&mut q, &s, Action::PlusX, 10.0, Some(&n), &h).unwrap();
    checks.push(("9.6 case", (v - 9.6).abs() <= 1e-12));

    // Q = r + gamma * max_next is left unchanged by the update.
    let (mut q, s, n) = one_entry_table();
    q.set(n, Action::PlusY, 4.0).unwrap();
    q.set(s, Action::PlusX, 12.0).unwrap();
    let v = qcore::q_update(&mut q, &s, Action::PlusX, 10.0, Some(&n), &h).unwrap();
    checks.push(("fixed point", v == 12.0));

    let collapse = Hyper::new(1.0, 0.0).unwrap();
    let (mut q, s, n) = one_entry_table();
    q.set(n, Action::PlusY, 4.0).unwrap();
    q.set(s, Action::PlusX, -37.5).unwrap();
    let v = qcore::q_update(&mut q, &s, Action::PlusX, 10.0, Some(&n), &collapse).unwrap();
    checks.push(("alpha=1 gamma=0 collapse", v == 10.0));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome {
        id: 2,
        name: "Q-update unit cases",
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            "9.6 case, fixed point, collapse".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
        elapsed: t.elapsed(),
    }
}

/// Independent breadth-first search over the six moves.
fn bfs_steps(world: &GridWorld, from: Cell, to: Cell) -> Option<usize> {
    let spec = world.spec();
    let mut dist = vec![usize::MAX; spec.cell_count()];
    let mut queue = VecDeque::new();
    dist[spec.index(from)] = 0;
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        if c == to {
            return Some(dist[spec.index(c)]);
        }
        let (x, y, z) = (c.ix as i64, c.iy as i64, c.iz as i64);
        for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
            let (nx, ny, nz) = (x + dx, y + dy, z + dz);
            if nx < 0 || ny < 0 || nz < 0 || nx >= spec.nx as i64 || ny >= spec.ny as i64 || nz >= spec.nz as i64 {
                continue;
            }
            let n = Cell::new(nx as u32, ny as u32, nz as u32);
            if world.is_obstacle(n) || dist[spec.index(n)] != usize::MAX {
                continue;
            }
            dist[spec.index(n)] = dist[spec.index(c)] + 1;
            queue.push_back(n);
        }
    }
    None
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let spec = GridSpec::new(10, 10, 1, 50.0, 20.0).unwrap();
    let world = GridWorld::build(spec, 0.0, 1, Cell::new(0, 0, 0), Cell::new(5, 5, 0)).unwrap();
    let settings = TrainSettings::for_world(&world, 20_000);
    let trained = agents::train_strategic(&world, &settings, 1).expect("training runs");
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut matched = 0;
    let n = 50;
    for _ in 0..n {
        let dest = loop {
            let d = world.random_free_cell(&mut rng).unwrap();
            if d != world.start() {
                break d;
            }
        };
        let path = agents::greedy_path(
            &world,
            &trained.table,
            |p| trained.table.strategic_key(p, dest),
            world.start(),
            dest,
            settings.step_cap,
            Action::candidates(false),
            &mut rng,
        )
        .expect("greedy rollout");
        let bfs = bfs_steps(&world, world.start(), dest).expect("obstacle-free grid is connected");
        if path.last() == Some(&dest) && path.len() - 1 == bfs {
            matched += 1;
        }
    }
    let elapsed = t.elapsed();
    Outcome {
        id: 3,
        name: "greedy strategic paths match BFS on 10x10x1",
        pass: matched * 100 >= 95 * n && elapsed < Duration::from_secs(120),
        detail: format!("{matched}/{n} destinations at BFS length"),
        elapsed,
    }
}

/// Per-seed results of one density/band scenario.
struct ScenarioRun {
    metrics: FlightMetrics,
    records: Vec<FlightRecord>,
    /// Adaptive episode rewards per trained band.
    adaptive_rewards: Vec<(f64, Vec<f64>)>,
    strategic_rewards: Vec<f64>,
}

struct Scenario {
    density: f64,
    band: f64,
    runs: Vec<ScenarioRun>,
    elapsed: Duration,
}

fn rewards(logs: &[EpisodeLog]) -> Vec<f64> {
    logs.iter().map(|l| l.total_reward).collect()
}

fn run_scenario(density: f64, band: f64, bands: &[f64]) -> Scenario {
    let t = Instant::now();
    let runs = SEEDS
        .iter()
        .map(|&seed| {
            let mut cfg = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            cfg.world.obstacle_density = density;
            cfg.radio.bands_mhz = bands.to_vec();
            let world = harness::build_world(&cfg).expect("world builds");
            let trained = harness::train_all(&cfg, &world).expect("training runs");
            let table = &trained.adaptive.iter().find(|(b, _)| *b == band).expect("band trained").1.table;
            let opts = EvalOptions::from_config(&cfg);
            let (report, records) =
                harness::evaluate(&world, &cfg.link_budget(), &trained.strategic.table, &[(band, table)], &opts)
                    .expect("evaluation runs");
            ScenarioRun {
                metrics: report.overall,
                records,
                adaptive_rewards: trained.adaptive.iter().map(|(b, tr)| (*b, rewards(&tr.logs))).collect(),
                strategic_rewards: rewards(&trained.strategic.logs),
            }
        })
        .collect();
    Scenario {
        density,
        band,
        runs,
        elapsed: t.elapsed(),
    }
}

fn arrivals(s: &Scenario) -> String {
    let v: Vec<String> = s.runs.iter().map(|r| format!("{:.0}", r.metrics.arrival_pct)).collect();
    format!("{}%/{}: arrival [{}]", s.density * 100.0, s.band, v.join(", "))
}

fn criterion_4(low: &Scenario, mid: &Scenario) -> Outcome {
    let low_ok = low
        .runs
        .iter()
        .filter(|r| r.metrics.arrival_pct >= 95.0 && r.metrics.crash_pct == 0.0)
        .count();
    let mid_ok = mid.runs.iter().filter(|r| r.metrics.arrival_pct >= 90.0).count();
    let elapsed = low.elapsed + mid.elapsed;
    let crashes: Vec<String> = low.runs.iter().map(|r| format!("{:.0}", r.metrics.crash_pct)).collect();
    Outcome {
        id: 4,
        name: "low and mid density arrival",
        pass: low_ok >= 2 && mid_ok >= 2 && elapsed < Duration::from_secs(600),
        detail: format!(
            "{} crash [{}]; {}; seeds passing {low_ok}/3 and {mid_ok}/3",
            arrivals(low),
            crashes.join(", "),
            arrivals(mid)
        ),
        elapsed,
    }
}

fn criterion_5(scenarios: &[&Scenario]) -> Outcome {
    let pooled: Vec<FlightMetrics> = scenarios
        .iter()
        .map(|s| compute_metrics(s.runs.iter().flat_map(|r| r.records.iter())))
        .collect();
    let arrival_ok = pooled.windows(2).all(|w| w[1].arrival_pct <= w[0].arrival_pct);
    let crash_ok = pooled.windows(2).all(|w| w[1].crash_pct >= w[0].crash_pct);
    let outage_ok = pooled.windows(2).all(|w| w[1].outage_step_pct > w[0].outage_step_pct);
    let fmt = |f: fn(&FlightMetrics) -> f64| {
        pooled.iter().map(|m| format!("{:.2}", f(m))).collect::<Vec<_>>().join(" / ")
    };
    Outcome {
        id: 5,
        name: "ordering across 5%/900, 15%/1800, 30%/2100",
        pass: arrival_ok && crash_ok && outage_ok,
        detail: format!(
            "arrival {} ({}), crash {} ({}), step outage {} ({})",
            fmt(|m| m.arrival_pct),
            if arrival_ok { "non-increasing" } else { "violated" },
            fmt(|m| m.crash_pct),
            if crash_ok { "non-decreasing" } else { "violated" },
            fmt(|m| m.outage_step_pct),
            if outage_ok { "increasing" } else { "not strictly increasing" },
        ),
        elapsed: Duration::ZERO,
    }
}

fn decile_gain(rewards: &[f64]) -> (f64, f64) {
    let k = (rewards.len() / 10).max(1);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    (mean(&rewards[..k]), mean(&rewards[rewards.len() - k..]))
}

/// First episode index at which the trailing 100-episode mean is positive.
fn first_positive_average(rewards: &[f64]) -> Option<usize> {
    let w = 100;
    if rewards.len() < w {
        return None;
    }
    let mut sum: f64 = rewards[..w].iter().sum();
    if sum > 0.0 {
        return Some(w - 1);
    }
    for i in w..rewards.len() {
        sum += rewards[i] - rewards[i - w];
        if sum > 0.0 {
            return Some(i);
        }
    }
    None
}

fn criterion_6(defaults: &Scenario) -> Outcome {
    let mut rising = 0;
    let mut faster = 0;
    let mut notes = Vec::new();
    for (seed, run) in SEEDS.iter().zip(&defaults.runs) {
        let band_rewards = |b: f64| &run.adaptive_rewards.iter().find(|(x, _)| *x == b).expect("band trained").1;
        let mut all_rise = true;
        let (f, l) = decile_gain(&run.strategic_rewards);
        all_rise &= l > f;
        let mut parts = vec![format!("strategic {f:.1}->{l:.1}")];
        for (band, r) in &run.adaptive_rewards {
            let (f, l) = decile_gain(r);
            all_rise &= l > f;
            parts.push(format!("{band} {f:.0}->{l:.0}"));
        }
        rising += usize::from(all_rise);
        let idx = |b: f64| first_positive_average(band_rewards(b)).unwrap_or(usize::MAX);
        let (i900, i2100) = (idx(900.0), idx(2100.0));
        faster += usize::from(i900 < i2100);
        let show = |i: usize| if i == usize::MAX { "never".to_string() } else { i.to_string() };
        notes.push(format!("seed {seed}: {}; positive at {} vs {}", parts.join(", "), show(i900), show(i2100)));
    }
    Outcome {
        id: 6,
        name: "training rewards rise; adaptive learns faster at 900 than 2100",
        pass: rising == SEEDS.len() && faster >= 2,
        detail: format!("rising {rising}/3, faster {faster}/3; {}", notes.join("; ")),
        elapsed: Duration::ZERO,
    }
}

fn random_values(rng: &mut ChaCha8Rng) -> [f64; Action::COUNT] {
    std::array::from_fn(|_| rng.gen_range(-100.0..100.0))
}

fn argmax(v: &[f64; Action::COUNT], allowed: &[Action]) -> Action {
    let mut best = allowed[0];
    for &a in allowed {
        if v[a.index()] > v[best.index()] {
            best = a;
        }
    }
    best
}

/// Direct transcription of the arbitration rule.
fn reference_rule(qs: &[f64; Action::COUNT], qa: &[f64; Action::COUNT]) -> Action {
    let a1 = argmax(qs, &Action::ALL);
    let a2 = argmax(qa, &Action::ALL);
    if a1 == a2 {
        return a1;
    }
    let q1 = qs[a2.index()];
    let q2 = qa[a1.index()];
    if q1 > q2 {
        a2
    } else {
        a1
    }
}

fn criterion_7() -> Outcome {
    let t = Instant::now();
    let spec = GridSpec::default();
    let empty = GridWorld::with_obstacles(spec, Cell::new(0, 0, 0), Cell::new(10, 10, 0), &[]).unwrap();
    let blank = |kind| {
        QTable::new(TableMeta {
            agent_kind: kind,
            grid: GridDims::from(&spec),
            hyper: Hyper::default(),
            seed: 0,
            keying: if kind == AgentKind::Strategic { Keying::GoalConditioned } else { Keying::PositionOnly },
            band_mhz: None,
        })
    };
    let random_cell = |rng: &mut ChaCha8Rng| {
        Cell::new(rng.gen_range(0..spec.nx), rng.gen_range(0..spec.ny), rng.gen_range(0..spec.nz))
    };
    let raw = ArbiterOptions {
        safety: false,
        arrival_priority: false,
        comparison: ValueComparison::Raw,
        altitude_locked: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = 10_000;

    let mut agree_bad = 0;
    let mut disagree_bad = 0;
    let mut disagreements = 0;
    for _ in 0..n {
        let pos = random_cell(&mut rng);
        let dest = random_cell(&mut rng);
        let mut qs = blank(AgentKind::Strategic);
        let mut qa = blank(AgentKind::Adaptive);
        let vs = random_values(&mut rng);
        let mut va = random_values(&mut rng);
        // Agreement case: force the adaptive argmax onto the strategic one.
        let shared = argmax(&vs, &Action::ALL);
        va[shared.index()] = 200.0;
        for a in Action::ALL {
            qs.set(qs.strategic_key(pos, dest), a, vs[a.index()]).unwrap();
            qa.set(StateKey::Position(pos), a, va[a.index()]).unwrap();
        }
        if arbiter::decide(&qs, &qa, pos, dest, &empty, &raw, &mut rng) != shared {
            agree_bad += 1;
        }
        // Unconstrained case: compare against the transcription.
        let va = random_values(&mut rng);
        for a in Action::ALL {
            qa.set(StateKey::Position(pos), a, va[a.index()]).unwrap();
        }
        if argmax(&vs, &Action::ALL) != argmax(&va, &Action::ALL) {
            disagreements += 1;
        }
        if arbiter::decide(&qs, &qa, pos, dest, &empty, &raw, &mut rng) != reference_rule(&vs, &va) {
            disagree_bad += 1;
        }
    }

    let mut obstacle_entries = 0;
    let mut safety_trials = 0;
    while safety_trials < n {
        let pos = random_cell(&mut rng);
        let obstacles: Vec<Cell> = Action::ALL
            .iter()
            .filter_map(|&a| spec.neighbor(pos, a))
            .filter(|_| rng.gen_bool(0.6))
            .collect();
        let world = GridWorld::with_obstacles(spec, pos, Cell::new(10, 10, 0), &obstacles).unwrap();
        let free_neighbor = Action::ALL
            .iter()
            .filter_map(|&a| spec.neighbor(pos, a))
            .find(|c| !world.is_obstacle(*c));
        let Some(dest) = free_neighbor else { continue };
        safety_trials += 1;
        let mut qs = blank(AgentKind::Strategic);
        let mut qa = blank(AgentKind::Adaptive);
        let vs = random_values(&mut rng);
        let va = random_values(&mut rng);
        for a in Action::ALL {
            qs.set(qs.strategic_key(pos, dest), a, vs[a.index()]).unwrap();
            qa.set(StateKey::Position(pos), a, va[a.index()]).unwrap();
        }
        let opts = ArbiterOptions {
            safety: true,
            arrival_priority: rng.gen_bool(0.5),
            comparison: if rng.gen_bool(0.5) { ValueComparison::Raw } else { ValueComparison::MinMax },
            altitude_locked: false,
        };
        let a = arbiter::decide(&qs, &qa, pos, dest, &world, &opts, &mut rng);
        if spec.neighbor(pos, a).is_some_and(|c| world.is_obstacle(c)) {
            obstacle_entries += 1;
        }
    }

    Outcome {
        id: 7,
        name: "arbiter fidelity properties",
        pass: agree_bad == 0 && disagree_bad == 0 && obstacle_entries == 0 && disagreements > 0,
        detail: format!(
            "agreement mismatches {agree_bad}/{n}, transcription mismatches {disagree_bad}/{n} \
             ({disagreements} disagreements), obstacle entries {obstacle_entries}/{n}"
        ),
        elapsed: t.elapsed(),
    }
}

fn criterion_8() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = ExperimentConfig {
        seed: 5,
        ..ExperimentConfig::default()
    };
    cfg.training.strategic_episodes = 2_000;
    cfg.training.adaptive_episodes = 200;
    let config = dir.path().join("config.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    harness::cmd_train(&config, &a, None).expect("first run");
    harness::cmd_train(&config, &b, None).expect("second run");

    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".qtable.json") || n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    Outcome {
        id: 8,
        name: "training is deterministic",
        pass: differing.is_empty() && names.len() == 8,
        detail: format!("{} checkpoint and reward files compared, {} differ", names.len(), differing.len()),
        elapsed: t.elapsed(),
    }
}

fn main() {
    let mut outcomes = Vec::new();
    for f in [criterion_1, criterion_2, criterion_3] {
        let o = f();
        report(&o);
        outcomes.push(o);
    }

    let defaults = run_scenario(0.05, 900.0, &ExperimentConfig::default().radio.bands_mhz);
    let mid = run_scenario(0.15, 1800.0, &[1800.0]);
    let high = run_scenario(0.30, 2100.0, &[2100.0]);
    for o in [
        criterion_4(&defaults, &mid),
        criterion_5(&[&defaults, &mid, &high]),
        criterion_6(&defaults),
    ] {
        report(&o);
        outcomes.push(o);
    }
    drop((defaults, mid, high));

    for f in [criterion_7, criterion_8] {
        let o = f();
        report(&o);
        outcomes.push(o);
    }

    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} acceptance criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
