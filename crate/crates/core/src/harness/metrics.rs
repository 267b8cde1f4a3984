//! Aggregate flight statistics.

use serde::{Deserialize, Serialize};

use crate::arbiter::{FlightOutcome, FlightResult};
use crate::gridworld::Cell;

/// One evaluated flight, as written to the per-flight CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub band_mhz: f64,
    pub flight: usize,
    pub dest: String,
    pub outcome: FlightOutcome,
    pub steps: usize,
    pub outage_steps: usize,
    pub min_snr_db: f64,
    pub flight_time_s: f64,
}

impl FlightRecord {
    pub fn new(band_mhz: f64, flight: usize, dest: Cell, r: &FlightResult) -> Self {
        Self {
            band_mhz,
            flight,
            dest: dest.to_string(),
            outcome: r.outcome,
            steps: r.steps,
            outage_steps: r.outage_steps,
            min_snr_db: r.min_snr_db,
            flight_time_s: r.flight_time_s,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightMetrics {
    pub flights: usize,
    pub arrived: usize,
    pub crashed: usize,
    pub step_cap_hit: usize,
    /// Flights that entered at least one outage cell.
    pub outage_flights: usize,
    pub total_steps: usize,
    pub outage_steps: usize,
    pub arrival_pct: f64,
    pub crash_pct: f64,
    pub step_cap_pct: f64,
    pub outage_flight_pct: f64,
    /// Share of all flown steps that ended in an outage cell.
    pub outage_step_pct: f64,
    pub mean_steps: f64,
    pub mean_flight_time_s: f64,
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub fn compute_metrics<'a>(records: impl IntoIterator<Item = &'a FlightRecord>) -> FlightMetrics {
    let mut m = FlightMetrics::default();
    let mut time = 0.0;
    for r in records {
        m.flights += 1;
        match r.outcome {
            FlightOutcome::Arrived => m.arrived += 1,
            FlightOutcome::Crashed => m.crashed += 1,
            FlightOutcome::StepCapHit => m.step_cap_hit += 1,
        }
        if r.outage_steps > 0 {
            m.outage_flights += 1;
        }
        m.total_steps += r.steps;
        m.outage_steps += r.outage_steps;
        time += r.flight_time_s;
    }
    m.arrival_pct = pct(m.arrived, m.flights);
    m.crash_pct = pct(m.crashed, m.flights);
    m.step_cap_pct = pct(m.step_cap_hit, m.flights);
    m.outage_flight_pct = pct(m.outage_flights, m.flights);
    m.outage_step_pct = pct(m.outage_steps, m.total_steps);
    if m.flights > 0 {
        m.mean_steps = m.total_steps as f64 / m.flights as f64;
        m.mean_flight_time_s = time / m.flights as f64;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band_mhz: f64,
    pub covered_fraction: f64,
    #[serde(flatten)]
    pub metrics: FlightMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub safety: bool,
    pub arrival_priority: bool,
    pub comparison: crate::arbiter::ValueComparison,
    pub flights_per_band: usize,
    pub overall: FlightMetrics,
    pub bands: Vec<BandReport>,
}

impl EvalReport {
    pub fn band(&self, band_mhz: f64) -> Option<&BandReport> {
        self.bands.iter().find(|b| b.band_mhz == band_mhz)
    }
}
