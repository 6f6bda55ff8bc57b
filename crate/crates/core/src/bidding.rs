//! Chance-constrained capacity bidding over an archive of historical
//! windows: per-capacity score samples under the real-time rule, the lower
//! empirical quantile `z_γ(C)`, the largest compliant bid `C̄` and the
//! revenue-optimal bid `C* = min{Ĉ, C_max}`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{rt_dispatch, DispatchError};
use crate::fmt::g17;
use crate::model::HesConfig;
use crate::scoring::{performance_score, revenue, MarketParams, ScoreError};
use crate::signal::{mileage, SignalArchive};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BidError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("every window of the archive has a zero signal")]
    NoScorableWindows,
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("compliance boundary not bracketed by [{c_lo}, {c_hi}]: {reason}; widen the sweep")]
    NotBracketed { c_lo: f64, c_hi: f64, reason: String },
}

/// Scores of one capacity over the archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowScores {
    /// Raw scores of the scorable windows, in archive order.
    pub scores: Vec<f64>,
    /// Windows skipped because their signal is identically zero.
    pub excluded: usize,
}

/// Runs the real-time rule on every window from `soc_init` and scores it.
pub fn score_samples(cfg: &HesConfig, c: f64, arch: &SignalArchive) -> Result<WindowScores, BidError> {
    let per_window: Vec<Option<f64>> = arch
        .windows()
        .par_iter()
        .map(|w| {
            if w.l1() == 0.0 {
                return Ok(None);
            }
            let trace = rt_dispatch(cfg, c, w)?;
            Ok(Some(performance_score(c, w, &trace)?))
        })
        .collect::<Result<_, BidError>>()?;
    let excluded = per_window.iter().filter(|s| s.is_none()).count();
    Ok(WindowScores {
        scores: per_window.into_iter().flatten().collect(),
        excluded,
    })
}

/// Number of samples that must lie at or above the quantile.
fn required(h: usize, gamma: f64) -> usize {
    let h_f = h as f64;
    // absorb representation error such as (1 - 0.8)·5 = 0.9999999999999998
    ((gamma * h_f - 1e-9 * h_f).ceil() as usize).clamp(1, h)
}

/// Lower empirical γ-quantile: the `⌊(1−γ)·H⌋+1`-th smallest sample, i.e.
/// the largest sample with at least `⌈γ·H⌉` samples at or above it.
///
/// # Panics
/// On an empty slice.
pub fn quantile_lower(scores: &[f64], gamma: f64) -> f64 {
    assert!(!scores.is_empty(), "quantile of an empty sample");
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[sorted.len() - required(sorted.len(), gamma)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidCurvePoint {
    pub c: f64,
    pub scores: Vec<f64>,
    /// Mean of the raw scores.
    pub mean_xp: f64,
    /// Quantile of the scores clamped to `[0, 1]`.
    pub z_gamma: f64,
    pub prob_compliant: f64,
    /// `C·mean_xp`.
    pub objective: f64,
}

impl BidCurvePoint {
    pub fn from_scores(c: f64, scores: Vec<f64>, market: &MarketParams) -> BidCurvePoint {
        let h = scores.len() as f64;
        let clamped: Vec<f64> = scores.iter().map(|s| s.clamp(0.0, 1.0)).collect();
        let mean_xp = scores.iter().sum::<f64>() / h;
        let hits = clamped.iter().filter(|&&s| s >= market.x_p_min).count();
        BidCurvePoint {
            c,
            z_gamma: quantile_lower(&clamped, market.gamma),
            prob_compliant: hits as f64 / h,
            objective: c * mean_xp,
            mean_xp,
            scores,
        }
    }

    pub fn compliant(&self, market: &MarketParams) -> bool {
        self.z_gamma >= market.x_p_min
    }
}

/// Capacity sweep: a coarse grid `c_lo, c_lo + step, …, ≤ c_hi`, then
/// bisection of the compliance boundary down to `tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub c_lo: f64,
    pub c_hi: f64,
    pub step: f64,
    pub tol: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            c_lo: 0.25,
            c_hi: 30.0,
            step: 0.25,
            tol: 0.01,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BidError> {
        let ok = self.c_lo.is_finite()
            && self.c_lo > 0.0
            && self.c_hi.is_finite()
            && self.c_hi > self.c_lo
            && self.step > 0.0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(BidError::Sweep(format!(
                "need 0 < c_lo < c_hi and positive step and tol, got {self:?}"
            )))
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.c_hi - self.c_lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.c_lo + self.step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidDiagnostics {
    pub sweep: SweepSpec,
    pub coarse_points: usize,
    pub refinement_iterations: usize,
    /// Smallest evaluated capacity found non-compliant.
    pub c_first_noncompliant: f64,
    pub excluded_windows: usize,
    /// Consecutive evaluated capacities `(c_a, c_b)` with `z_γ(c_b) > z_γ(c_a)`.
    pub monotonicity_violations: Vec<(f64, f64)>,
    /// Compliant capacities above the first non-compliant one.
    pub compliant_above_boundary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidSolution {
    /// Every evaluated capacity in increasing order.
    pub curve: Vec<BidCurvePoint>,
    pub c_bar: f64,
    pub c_hat: f64,
    pub c_star: f64,
    /// The curve evaluated at `c_star`.
    pub at_c_star: BidCurvePoint,
    pub diagnostics: BidDiagnostics,
}

fn evaluate_point(
    cfg: &HesConfig,
    c: f64,
    arch: &SignalArchive,
    market: &MarketParams,
) -> Result<(BidCurvePoint, usize), BidError> {
    let ws = score_samples(cfg, c, arch)?;
    if ws.scores.is_empty() {
        return Err(BidError::NoScorableWindows);
    }
    Ok((BidCurvePoint::from_scores(c, ws.scores, market), ws.excluded))
}

/// Solves the chance-constrained bid. `Ĉ` maximises `C·mean_xp` over the
/// evaluated compliant capacities up to `C̄`.
pub fn solve_bid(
    cfg: &HesConfig,
    arch: &SignalArchive,
    market: &MarketParams,
    sweep: &SweepSpec,
) -> Result<BidSolution, BidError> {
    market.validate()?;
    sweep.validate()?;
    cfg.validate_for_dispatch().map_err(DispatchError::from)?;

    let coarse = sweep.grid();
    let evaluated: Vec<(BidCurvePoint, usize)> = coarse
        .par_iter()
        .map(|&c| evaluate_point(cfg, c, arch, market))
        .collect::<Result<_, _>>()?;
    let excluded_windows = evaluated[0].1;
    let mut curve: Vec<BidCurvePoint> = evaluated.into_iter().map(|(p, _)| p).collect();

    if !curve[0].compliant(market) {
        return Err(BidError::NotBracketed {
            c_lo: sweep.c_lo,
            c_hi: sweep.c_hi,
            reason: format!("already non-compliant at c_lo (z_gamma = {})", curve[0].z_gamma),
        });
    }
    let first_bad = curve.iter().position(|p| !p.compliant(market)).ok_or_else(|| {
        BidError::NotBracketed {
            c_lo: sweep.c_lo,
            c_hi: sweep.c_hi,
            reason: "still compliant at c_hi".into(),
        }
    })?;
    let compliant_above_boundary: Vec<f64> = curve[first_bad..]
        .iter()
        .filter(|p| p.compliant(market))
        .map(|p| p.c)
        .collect();

    let (mut lo, mut hi) = (curve[first_bad - 1].c, curve[first_bad].c);
    let mut refinement_iterations = 0;
    while hi - lo > sweep.tol {
        let mid = 0.5 * (lo + hi);
        let (p, _) = evaluate_point(cfg, mid, arch, market)?;
        if p.compliant(market) {
            lo = mid;
        } else {
            hi = mid;
        }
        curve.push(p);
        refinement_iterations += 1;
    }
    curve.sort_by(|a, b| a.c.total_cmp(&b.c));
    let c_bar = lo;

    let mut best: Option<&BidCurvePoint> = None;
    for p in curve.iter().filter(|p| p.c <= c_bar && p.compliant(market)) {
        if best.is_none_or(|b| p.objective > b.objective) {
            best = Some(p);
        }
    }
    let c_hat = best.map_or(c_bar, |p| p.c);
    let c_star = c_hat.min(market.c_max);
    let at_c_star = match curve.iter().find(|p| p.c == c_star) {
        Some(p) => p.clone(),
        None => evaluate_point(cfg, c_star, arch, market)?.0,
    };

    let monotonicity_violations = curve
        .windows(2)
        .filter(|w| w[1].z_gamma > w[0].z_gamma)
        .map(|w| (w[0].c, w[1].c))
        .collect();

    Ok(BidSolution {
        diagnostics: BidDiagnostics {
            sweep: *sweep,
            coarse_points: coarse.len(),
            refinement_iterations,
            c_first_noncompliant: hi,
            excluded_windows,
            monotonicity_violations,
            compliant_above_boundary,
        },
        curve,
        c_bar,
        c_hat,
        c_star,
        at_c_star,
    })
}

/// Out-of-sample compliance of a bid on held-out windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub c: f64,
    pub windows: usize,
    pub mean_xp: f64,
    pub z_gamma: f64,
    pub prob_compliant: f64,
    pub compliant: bool,
}

pub fn holdout_compliance(
    cfg: &HesConfig,
    c: f64,
    holdout: &SignalArchive,
    market: &MarketParams,
) -> Result<HoldoutReport, BidError> {
    let (p, _) = evaluate_point(cfg, c, holdout, market)?;
    Ok(HoldoutReport {
        c,
        windows: p.scores.len(),
        mean_xp: p.mean_xp,
        z_gamma: p.z_gamma,
        prob_compliant: p.prob_compliant,
        compliant: p.compliant(market),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueSummary {
    pub c_star: f64,
    pub mean_xp: f64,
    /// `C*·mean_xp`.
    pub controllable: f64,
    /// Mean over windows of `C*·x_p,i·(λ_c + λ_m·M_i)`.
    pub expected_revenue: f64,
}

/// Expected revenue at `C*`. Windows excluded from scoring are skipped.
pub fn expected_revenue(sol: &BidSolution, market: &MarketParams, arch: &SignalArchive) -> RevenueSummary {
    let p = &sol.at_c_star;
    let mileages = arch
        .windows()
        .iter()
        .filter(|w| w.l1() != 0.0)
        .map(mileage);
    let total: f64 = p
        .scores
        .iter()
        .zip(mileages)
        .map(|(&x, m)| revenue(sol.c_star, x, market, m))
        .sum();
    RevenueSummary {
        c_star: sol.c_star,
        mean_xp: p.mean_xp,
        controllable: sol.c_star * p.mean_xp,
        expected_revenue: total / p.scores.len() as f64,
    }
}

/// Curve CSV with columns `c,mean_xp,z_gamma,prob_compliant,objective`.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &[BidCurvePoint]) -> io::Result<()> {
    writeln!(w, "c,mean_xp,z_gamma,prob_compliant,objective")?;
    for p in curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            g17(p.c),
            g17(p.mean_xp),
            g17(p.z_gamma),
            g17(p.prob_compliant),
            g17(p.objective)
        )?;
    }
    Ok(())
}
