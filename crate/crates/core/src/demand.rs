//! Classical parking-generation-rate calculators: the static model and the
//! extended model with turnover, occupancy, level of service, price, and
//! vehicle-growth coefficients.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DemandError {
    #[error("domain error: {0}")]
    Domain(String),
}

/// One land-use term of the extended model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LandUseEntry {
    /// Generation rate: demanded spaces per unit building area.
    pub a: f64,
    /// Building area in square meters.
    pub r: f64,
    /// Average parking turnover rate.
    pub mu: f64,
    /// Parking lot occupancy, in (0, 1].
    pub gamma: f64,
}

/// Global coefficients of the extended model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DemandCoefficients {
    /// Parking level of service.
    pub delta: f64,
    /// Parking price impact coefficient.
    pub l: f64,
    /// Motor vehicle growth coefficient.
    pub beta: f64,
}

/// Static generation-rate model: y = sum of a_i * R_i.
pub fn demand_static(entries: &[(f64, f64)]) -> Result<f64, DemandError> {
    if entries.is_empty() {
        return Err(DemandError::Domain("no land-use entries".into()));
    }
    for &(a, r) in entries {
        if !(a >= 0.0 && r >= 0.0) || !a.is_finite() || !r.is_finite() {
            return Err(DemandError::Domain(format!(
                "generation rate and area must be finite and nonnegative, got ({a}, {r})"
            )));
        }
    }
    Ok(entries.iter().map(|&(a, r)| a * r).sum())
}

/// Extended model: y = sum of (a_i * R_i) / (mu_i * gamma_i) * delta * L * beta.
pub fn demand_extended(
    entries: &[LandUseEntry],
    coeff: &DemandCoefficients,
) -> Result<f64, DemandError> {
    if entries.is_empty() {
        return Err(DemandError::Domain("no land-use entries".into()));
    }
    for e in entries {
        if !(e.a >= 0.0 && e.r >= 0.0) || !e.a.is_finite() || !e.r.is_finite() {
            return Err(DemandError::Domain(format!(
                "generation rate and area must be finite and nonnegative, got ({}, {})",
                e.a, e.r
            )));
        }
        if !(e.mu > 0.0) {
            return Err(DemandError::Domain(format!(
                "turnover rate must be positive, got {}",
                e.mu
            )));
        }
        if !(e.gamma > 0.0 && e.gamma <= 1.0) {
            return Err(DemandError::Domain(format!(
                "occupancy must be in (0, 1], got {}",
                e.gamma
            )));
        }
    }
    for (name, v) in [("delta", coeff.delta), ("L", coeff.l), ("beta", coeff.beta)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(DemandError::Domain(format!(
                "coefficient {name} must be finite and positive, got {v}"
            )));
        }
    }
    let base: f64 = entries
        .iter()
        .map(|e| e.a * e.r / (e.mu * e.gamma))
        .sum();
    Ok(base * coeff.delta * coeff.l * coeff.beta)
}
