//! Closed-form capacity calculators: CPRI-style fronthaul, packet backhaul
//! for a software-defined access point, and the ten-fold-per-five-years
//! traffic projection.
//!
//! Fronthaul arithmetic is carried out on exact rationals so scaling
//! identities hold exactly; the result converts to `f64` only for display.

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

use crate::units;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CapacityError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParams {
        field: &'static str,
        reason: &'static str,
    },
}

fn invalid(field: &'static str, reason: &'static str) -> CapacityError {
    CapacityError::InvalidParams { field, reason }
}

/// Digital baseband transport parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FronthaulParams {
    pub bandwidth_hz: u64,
    pub antennas: u32,
    /// Bits per I or per Q sample.
    pub sample_width_bits: u32,
    /// Sample rate divided by channel bandwidth.
    pub oversampling: Ratio<u64>,
    pub control_word_factor: Ratio<u64>,
    pub line_coding_factor: Ratio<u64>,
    /// Baseband compression ratio applied to the final rate (1 = none).
    pub compression: Ratio<u64>,
}

impl FronthaulParams {
    /// LTE sampling (30.72 Msps per 20 MHz), 15-bit IQ, 16/15 control
    /// words, 8b/10b line coding, no compression.
    pub fn lte(bandwidth_hz: u64, antennas: u32) -> Self {
        Self {
            bandwidth_hz,
            antennas,
            sample_width_bits: 15,
            oversampling: Ratio::new(192, 125),
            control_word_factor: Ratio::new(16, 15),
            line_coding_factor: Ratio::new(10, 8),
            compression: Ratio::from_integer(1),
        }
    }

    pub fn validate(&self) -> Result<(), CapacityError> {
        if self.bandwidth_hz == 0 {
            return Err(invalid("bandwidth", "must be positive"));
        }
        if self.antennas == 0 {
            return Err(invalid("antennas", "must be at least 1"));
        }
        if self.sample_width_bits == 0 {
            return Err(invalid("sample_width", "must be positive"));
        }
        for (field, r) in [
            ("oversampling", self.oversampling),
            ("control_word_factor", self.control_word_factor),
            ("line_coding_factor", self.line_coding_factor),
            ("compression", self.compression),
        ] {
            if *r.numer() == 0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        Ok(())
    }
}

/// An exact bit rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BitRate(pub Ratio<u128>);

impl BitRate {
    pub fn bps(&self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    pub fn gbps(&self) -> f64 {
        self.bps() / 1e9
    }

    /// Exact quotient `self / other`.
    pub fn ratio_to(&self, other: &BitRate) -> Ratio<u128> {
        self.0 / other.0
    }
}

impl std::fmt::Display for BitRate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&units::format_rate(self.bps()))
    }
}

fn widen(r: Ratio<u64>) -> Ratio<u128> {
    Ratio::new(u128::from(*r.numer()), u128::from(*r.denom()))
}

/// bandwidth × oversampling × 2 (I, Q) × sample width × antennas ×
/// control-word factor × line-coding factor × compression.
pub fn cpri_fronthaul_rate(p: &FronthaulParams) -> Result<BitRate, CapacityError> {
    p.validate()?;
    let rate = Ratio::from_integer(u128::from(p.bandwidth_hz))
        * widen(p.oversampling)
        * Ratio::from_integer(2 * u128::from(p.sample_width_bits) * u128::from(p.antennas))
        * widen(p.control_word_factor)
        * widen(p.line_coding_factor)
        * widen(p.compression);
    Ok(BitRate(rate))
}

/// Backhaul carrying information packets plus controller signalling.
pub fn soda_backhaul_rate(
    information_rate_bps: f64,
    control_overhead_fraction: f64,
) -> Result<f64, CapacityError> {
    if !(information_rate_bps.is_finite() && information_rate_bps >= 0.0) {
        return Err(invalid("information_rate", "must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&control_overhead_fraction) {
        return Err(invalid("control_overhead", "must lie in [0, 1)"));
    }
    Ok(information_rate_bps * (1.0 + control_overhead_fraction))
}

/// Side-by-side fronthaul vs. packet backhaul figures for one channel.
#[derive(Debug, Clone, Serialize)]
pub struct CranComparison {
    pub fronthaul_bps: f64,
    pub backhaul_bps: f64,
    /// fronthaul / backhaul
    pub ratio: f64,
}

pub fn compare_cran_soda(
    p: &FronthaulParams,
    information_rate_bps: f64,
    control_overhead_fraction: f64,
) -> Result<CranComparison, CapacityError> {
    let fronthaul = cpri_fronthaul_rate(p)?.bps();
    let backhaul = soda_backhaul_rate(information_rate_bps, control_overhead_fraction)?;
    Ok(CranComparison {
        fronthaul_bps: fronthaul,
        backhaul_bps: backhaul,
        ratio: fronthaul / backhaul,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficProjection {
    base_year: i32,
    base_traffic: f64,
    target_year: i32,
}

impl TrafficProjection {
    pub fn new(base_year: i32, base_traffic: f64, target_year: i32) -> Result<Self, CapacityError> {
        if target_year < base_year {
            return Err(invalid("target_year", "must not precede base_year"));
        }
        if !(base_traffic.is_finite() && base_traffic >= 0.0) {
            return Err(invalid("base_traffic", "must be finite and non-negative"));
        }
        Ok(Self {
            base_year,
            base_traffic,
            target_year,
        })
    }
}

/// Ten-fold growth every five years: base × 10^((target − base) / 5).
pub fn omnify_projection(p: &TrafficProjection) -> f64 {
    let years = p.target_year - p.base_year;
    let growth = if years % 5 == 0 {
        10f64.powi(years / 5)
    } else {
        10f64.powf(f64::from(years) / 5.0)
    };
    p.base_traffic * growth
}

pub fn per_user_traffic(total: f64, users: u64) -> Result<f64, CapacityError> {
    if users == 0 {
        return Err(invalid("users", "must be at least 1"));
    }
    Ok(total / users as f64)
}
