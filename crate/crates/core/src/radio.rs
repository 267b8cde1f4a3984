//! COST 231 Hata propagation, SNR link budget and per-cell coverage maps.
//!
//! The path-loss formula is applied as written for any positive frequency
//! and receiver height; inputs outside the model's published validity box
//! only trigger a one-time log warning.

use std::sync::Once;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Cell, GridSpec, GridWorld};

/// Thermal noise density at 290 K in dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

/// Default coverage threshold. Placed inside the ground-layer SNR range of
/// the default geometry so that coverage differs between bands.
pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 45.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadioError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, RadioError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(RadioError::NonPositive { name, value })
    }
}

fn finite(name: &'static str, value: f64) -> Result<f64, RadioError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(RadioError::NonFinite { name, value })
    }
}

/// Transmitter, receiver and noise parameters for one carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub f_mhz: f64,
    pub h_b_m: f64,
    pub c_m_db: f64,
    pub p_tx_dbm: f64,
    pub g_tx_db: f64,
    pub g_rx_db: f64,
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    /// Cells with SNR at or above this value are covered. `-inf` disables the check.
    pub snr_threshold_db: f64,
    /// Distances below this are clamped before taking the logarithm.
    pub d_min_km: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            f_mhz: 900.0,
            h_b_m: 60.0,
            c_m_db: 0.0,
            p_tx_dbm: 43.0,
            g_tx_db: 0.0,
            g_rx_db: 0.0,
            bandwidth_hz: 10e6,
            noise_figure_db: 7.0,
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
            d_min_km: 0.01,
        }
    }
}

impl LinkBudget {
    pub fn with_band(self, f_mhz: f64) -> Self {
        Self { f_mhz, ..self }
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        positive("f_mhz", self.f_mhz)?;
        positive("h_b_m", self.h_b_m)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("d_min_km", self.d_min_km)?;
        finite("c_m_db", self.c_m_db)?;
        finite("p_tx_dbm", self.p_tx_dbm)?;
        finite("g_tx_db", self.g_tx_db)?;
        finite("g_rx_db", self.g_rx_db)?;
        finite("noise_figure_db", self.noise_figure_db)?;
        if self.snr_threshold_db.is_nan() || self.snr_threshold_db == f64::INFINITY {
            return Err(RadioError::NonFinite {
                name: "snr_threshold_db",
                value: self.snr_threshold_db,
            });
        }
        Ok(())
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * self.bandwidth_hz.log10() + self.noise_figure_db
    }
}

/// Mobile-antenna height correction in dB.
pub fn mobile_correction_alpha(f_mhz: f64, h_r_m: f64) -> Result<f64, RadioError> {
    let f = positive("f_mhz", f_mhz)?.log10();
    let h_r = positive("h_r_m", h_r_m)?;
    Ok((1.1 * f - 0.7) * h_r - (1.56 * f - 0.8))
}

static VALIDITY_WARNING: Once = Once::new();

fn warn_outside_validity(f_mhz: f64, h_b_m: f64, h_r_m: f64, d_km: f64) {
    let inside = (1500.0..=2000.0).contains(&f_mhz)
        && (30.0..=200.0).contains(&h_b_m)
        && (1.0..=10.0).contains(&h_r_m)
        && (1.0..=20.0).contains(&d_km);
    if !inside {
        VALIDITY_WARNING.call_once(|| {
            log::warn!(
                "COST 231 Hata evaluated outside its validity range \
                 (f={f_mhz} MHz, h_B={h_b_m} m, h_R={h_r_m} m, d={d_km} km); applying the formula as written"
            );
        });
    }
}

/// Median path loss in dB for a receiver at `h_r_m` metres, `d_km` away.
pub fn path_loss_db(lb: &LinkBudget, h_r_m: f64, d_km: f64) -> Result<f64, RadioError> {
    let f_mhz = positive("f_mhz", lb.f_mhz)?;
    let h_b = positive("h_b_m", lb.h_b_m)?;
    let d_min = positive("d_min_km", lb.d_min_km)?;
    let c_m = finite("c_m_db", lb.c_m_db)?;
    let d_km = finite("d_km", d_km)?;
    let alpha = mobile_correction_alpha(f_mhz, h_r_m)?;
    let d = d_km.max(d_min);
    warn_outside_validity(f_mhz, h_b, h_r_m, d);

    let log_hb = h_b.log10();
    Ok(46.3 + 33.9 * f_mhz.log10() - 13.82 * log_hb - alpha + (44.9 - 6.55 * log_hb) * d.log10() + c_m)
}

pub fn snr_db(lb: &LinkBudget, h_r_m: f64, d_km: f64) -> Result<f64, RadioError> {
    let loss = path_loss_db(lb, h_r_m, d_km)?;
    Ok(lb.p_tx_dbm + lb.g_tx_db + lb.g_rx_db - loss - lb.noise_floor_dbm())
}

/// Inclusive at the threshold.
pub fn coverage_ok(lb: &LinkBudget, snr: f64) -> bool {
    snr >= lb.snr_threshold_db
}

/// Per-cell SNR lattice for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMap {
    spec: GridSpec,
    band_mhz: f64,
    threshold_db: f64,
    snr_db: Vec<f64>,
}

impl CoverageMap {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn band_mhz(&self) -> f64 {
        self.band_mhz
    }

    pub fn threshold_db(&self) -> f64 {
        self.threshold_db
    }

    pub fn snr(&self, c: Cell) -> f64 {
        self.snr_db[self.spec.index(c)]
    }

    pub fn covered(&self, c: Cell) -> bool {
        self.snr(c) >= self.threshold_db
    }

    /// `(cell, snr_db)` pairs in lattice index order.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.snr_db.iter().enumerate().map(|(i, &s)| (self.spec.cell_at(i), s))
    }

    pub fn covered_fraction(&self) -> f64 {
        let covered = self.snr_db.iter().filter(|&&s| s >= self.threshold_db).count();
        covered as f64 / self.snr_db.len() as f64
    }

    pub fn min_snr_db(&self) -> f64 {
        self.snr_db.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Slant distance in km from the centre of `c` to the base-station antenna.
pub fn slant_distance_km(spec: &GridSpec, bs: Cell, h_b_m: f64, c: Cell) -> f64 {
    let [x, y, z] = spec.cell_center_m(c);
    let [bx, by, _] = spec.cell_center_m(bs);
    let (dx, dy, dz) = (x - bx, y - by, z - h_b_m);
    (dx * dx + dy * dy + dz * dz).sqrt() / 1000.0
}

/// SNR of every cell. Obstacles do not attenuate.
pub fn coverage_map(lb: &LinkBudget, world: &GridWorld) -> Result<CoverageMap, RadioError> {
    lb.validate()?;
    let spec = *world.spec();
    let bs = world.base_station();
    let snr_db = spec
        .cells()
        .map(|c| {
            let h_r = spec.cell_center_m(c)[2];
            snr_db(lb, h_r, slant_distance_km(&spec, bs, lb.h_b_m, c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CoverageMap {
        spec,
        band_mhz: lb.f_mhz,
        threshold_db: lb.snr_threshold_db,
        snr_db,
    })
}
