//! Performance score, market revenue and the bid objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::DispatchTrace;
use crate::signal::{mileage, RegSignal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("regulation signal is identically zero; the performance score is undefined")]
    ZeroSignal,
    #[error("capacity {0} must be positive and finite")]
    Capacity(f64),
    #[error("trace has {trace} steps but the signal has {signal}")]
    Length { trace: usize, signal: usize },
    #[error("invalid market parameter {field}: {reason}")]
    Market { field: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    /// Capacity price ($/MW).
    pub lambda_c: f64,
    /// Mileage price ($/MW-mile).
    pub lambda_m: f64,
    pub x_p_min: f64,
    pub gamma: f64,
    /// Largest admissible bid (MW).
    pub c_max: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            lambda_c: 1.0,
            lambda_m: 0.0,
            x_p_min: 0.75,
            gamma: 0.9,
            c_max: 100.0,
        }
    }
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |field, reason: &str| {
            Err(ScoreError::Market {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.lambda_c.is_finite() && self.lambda_c >= 0.0) {
            return bad("lambda_c", "must be finite and non-negative");
        }
        if !(self.lambda_m.is_finite() && self.lambda_m >= 0.0) {
            return bad("lambda_m", "must be finite and non-negative");
        }
        if !(self.x_p_min > 0.0 && self.x_p_min < 1.0) {
            return bad("x_p_min", "must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", "must lie in (0, 1)");
        }
        if !(self.c_max.is_finite() && self.c_max > 0.0) {
            return bad("c_max", "must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub x_p: f64,
    /// `Σ |C·r[k] − P_hes[k]|` (MW-steps).
    pub abs_error: f64,
    pub mileage: f64,
    pub revenue: f64,
    /// `C·x_p`, the price-independent part of the revenue (MW).
    pub revenue_controllable: f64,
}

/// `1 − ‖C·r − P_hes‖₁ / (C·‖r‖₁)`. Not clamped: anti-tracking gives
/// negative values.
pub fn performance_score(c: f64, sig: &RegSignal, trace: &DispatchTrace) -> Result<f64, ScoreError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(ScoreError::Capacity(c));
    }
    if trace.len() != sig.len() {
        return Err(ScoreError::Length {
            trace: trace.len(),
            signal: sig.len(),
        });
    }
    let norm = sig.l1();
    if norm == 0.0 {
        return Err(ScoreError::ZeroSignal);
    }
    let err: f64 = sig
        .samples()
        .iter()
        .zip(trace.p_hes())
        .map(|(r, p)| (c * r - p).abs())
        .sum();
    Ok(1.0 - err / (c * norm))
}

/// `C·x_p·(λ_c + λ_m·M)`.
pub fn revenue(c: f64, x_p: f64, market: &MarketParams, mileage: f64) -> f64 {
    c * x_p * (market.lambda_c + market.lambda_m * mileage)
}

/// Score, error, mileage and revenue of a dispatched window.
pub fn evaluate(
    c: f64,
    sig: &RegSignal,
    trace: &DispatchTrace,
    market: &MarketParams,
) -> Result<PerformanceReport, ScoreError> {
    let x_p = performance_score(c, sig, trace)?;
    let m = mileage(sig);
    Ok(PerformanceReport {
        x_p,
        abs_error: trace.abs_error(),
        mileage: m,
        revenue: revenue(c, x_p, market, m),
        revenue_controllable: c * x_p,
    })
}
