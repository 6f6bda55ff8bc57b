//! Offline optimal dispatch with perfect knowledge of the window's signal.
//!
//! Three routes solve `min Σ |C·r[k] − P_hes[k]|` under the asset and SoC
//! constraints:
//!
//! * [`offline_dispatch`]: the convex relaxation as a linear program, with a
//!   complementarity check, a netting repair, a mixed-integer re-solve and a
//!   DP fallback;
//! * [`closed_form_dispatch`]: the clipping solution, valid whenever the SoC
//!   never reaches its bounds;
//! * [`dp_oracle`]: backward induction over a SoC grid, used as ground truth.

mod dp;
mod lp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dp::{soc_grid, Complementarity, DpOracleConfig};

use crate::controller::{rt_dispatch, DispatchError, DispatchTrace};
use crate::model::{soc_step, DispatchStep, HesConfig, SocState, POWER_TOL, SOC_TOL};
use crate::signal::RegSignal;

/// Largest window the LP route accepts.
pub const LP_MAX_STEPS: usize = 20_000;
/// Largest charge·discharge product still counted as complementary (MW²).
pub const COMPLEMENTARITY_TOL: f64 = 1e-9;
/// Allowed excess of a repaired objective over the LP bound (MW-steps).
pub const REPAIR_TOL: f64 = 1e-6;
/// Branch-and-bound node budget per mixed-integer solve.
pub const MILP_NODE_LIMIT: u64 = 5_000;
/// Rounds of adding complementarity binaries before giving up.
pub const MILP_MAX_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverPath {
    ClosedForm,
    Lp,
    LpWithRepair,
    Milp,
    Dp,
}

impl SolverPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPath::ClosedForm => "closed-form",
            SolverPath::Lp => "lp",
            SolverPath::LpWithRepair => "lp-with-repair",
            SolverPath::Milp => "milp",
            SolverPath::Dp => "dp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSolution {
    pub trace: DispatchTrace,
    /// `Σ |C·r[k] − P_hes[k]|` of `trace` (MW-steps).
    pub objective: f64,
    pub solver_path: SolverPath,
    pub complementarity_clean: bool,
    /// Objective of the convex relaxation when it was solved.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Error)]
pub enum OfflineError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("LP solver failed: {0}")]
    Lp(#[from] microlp::Error),
    #[error("window of {steps} steps exceeds the offline limit of {limit}; downsample the signal or split the window")]
    TooLarge { steps: usize, limit: usize },
    #[error("DP oracle budget exceeded: {steps} steps > {limit}; the exact offline optimum needs a shorter window")]
    DpBudget { steps: usize, limit: usize },
    #[error("invalid DP grid: {0}")]
    Grid(String),
    #[error("real-time objective {j_on} differs from offline optimum {j_off} although the SoC stayed interior")]
    TheoremMismatch { j_on: f64, j_off: f64 },
}

fn check_inputs(cfg: &HesConfig, c: f64) -> Result<(), DispatchError> {
    cfg.validate_for_dispatch()?;
    if !(c.is_finite() && c > 0.0) {
        return Err(DispatchError::Capacity(c));
    }
    Ok(())
}

fn targets(c: f64, sig: &RegSignal) -> Vec<f64> {
    sig.samples().iter().map(|r| c * r).collect()
}

/// Builds a trace by simulating the SoC from `soc_init`.
fn simulate(cfg: &HesConfig, steps: Vec<DispatchStep>, target: Vec<f64>) -> DispatchTrace {
    let mut soc = Vec::with_capacity(steps.len() + 1);
    let mut e = SocState(cfg.batt.soc_init);
    soc.push(e);
    for s in &steps {
        e = soc_step(&cfg.batt, e, s.p_charge, s.p_discharge, cfg.dt);
        soc.push(e);
    }
    DispatchTrace { steps, soc, target }
}

/// Generator and load for a fixed battery exchange: the closest feasible
/// output to the target, never generating and consuming at once.
fn fill_gen_load(cfg: &HesConfig, target: f64, p_discharge: f64, p_charge: f64) -> DispatchStep {
    let residual = target - p_discharge - p_charge;
    let gen = residual.clamp(0.0, cfg.gen.p_max);
    let load = (-residual).clamp(0.0, cfg.load.p_max);
    DispatchStep::new(gen, load, p_discharge, p_charge)
}

/// Clipping dispatch with the real-time priority split. Returns `None` when
/// the SoC leaves the open interval `(soc_min, soc_max)` at some step.
pub fn closed_form_dispatch(cfg: &HesConfig, c: f64, sig: &RegSignal) -> Option<OfflineSolution> {
    check_inputs(cfg, c).ok()?;
    let b = &cfg.batt;
    let mut steps = Vec::with_capacity(sig.len());
    let mut e = SocState(b.soc_init);
    for &r in sig.samples() {
        let target = c * r;
        let step = if r > 0.0 {
            let p_gen = target.min(cfg.gen.p_max);
            let p_d = (target - p_gen).min(b.p_max).max(0.0);
            DispatchStep::new(p_gen, 0.0, p_d, 0.0)
        } else {
            let p_load = (-target).min(cfg.load.p_max);
            let p_c = (target + p_load).max(-b.p_max).min(0.0);
            DispatchStep::new(0.0, p_load, 0.0, p_c)
        };
        e = soc_step(b, e, step.p_charge, step.p_discharge, cfg.dt);
        if !(e.0 > b.soc_min && e.0 < b.soc_max) {
            return None;
        }
        steps.push(step);
    }
    let trace = simulate(cfg, steps, targets(c, sig));
    let objective = trace.abs_error();
    Some(OfflineSolution {
        trace,
        objective,
        solver_path: SolverPath::ClosedForm,
        complementarity_clean: true,
        lower_bound: None,
    })
}

fn complementary(steps: &[DispatchStep]) -> bool {
    steps
        .iter()
        .all(|s| (-s.p_charge) * s.p_discharge <= COMPLEMENTARITY_TOL)
}

/// Pulls the battery powers back so that the simulated SoC respects its
/// bounds exactly, then refits generator and load.
fn enforce_soc(cfg: &HesConfig, steps: &mut [DispatchStep], target: &[f64]) {
    let b = &cfg.batt;
    let scale = b.energy_capacity / cfg.dt;
    let mut e = b.soc_init;
    for (s, &t) in steps.iter_mut().zip(target) {
        let next = soc_step(b, SocState(e), s.p_charge, s.p_discharge, cfg.dt).0;
        let (mut pc, mut pd) = (s.p_charge, s.p_discharge);
        if next > b.soc_max {
            // energy the step may still add, in MW-steps
            let room = ((b.soc_max - e) * scale).max(0.0);
            pc = (-(room + pd / b.eta_d) / b.eta_c).max(pc).min(0.0);
        } else if next < b.soc_min {
            let room = ((e - b.soc_min) * scale).max(0.0);
            pd = ((room - b.eta_c * pc) * b.eta_d).min(pd).max(0.0);
        }
        *s = fill_gen_load(cfg, t, pd, pc);
        e = soc_step(b, SocState(e), s.p_charge, s.p_discharge, cfg.dt)
            .0
            .clamp(b.soc_min, b.soc_max);
    }
}

fn feasible(cfg: &HesConfig, trace: &DispatchTrace) -> bool {
    trace.violations(cfg).is_empty()
}

fn cycling_steps(steps: &[DispatchStep]) -> Vec<usize> {
    steps
        .iter()
        .enumerate()
        .filter(|(_, s)| (-s.p_charge) * s.p_discharge > COMPLEMENTARITY_TOL)
        .map(|(k, _)| k)
        .collect()
}

/// Snaps solver noise to zero and refits generator and load to the battery
/// powers.
fn polish(cfg: &HesConfig, raw: &[DispatchStep], target: &[f64]) -> Vec<DispatchStep> {
    let snap = |x: f64| if x.abs() <= POWER_TOL { 0.0 } else { x };
    raw.iter()
        .zip(target)
        .map(|(s, &t)| fill_gen_load(cfg, t, snap(s.p_discharge), snap(s.p_charge)))
        .collect()
}

fn finish(
    cfg: &HesConfig,
    mut steps: Vec<DispatchStep>,
    target: Vec<f64>,
    path: SolverPath,
    bound: f64,
) -> OfflineSolution {
    enforce_soc(cfg, &mut steps, &target);
    let trace = simulate(cfg, steps, target);
    OfflineSolution {
        objective: trace.abs_error(),
        complementarity_clean: complementary(&trace.steps),
        trace,
        solver_path: path,
        lower_bound: Some(bound),
    }
}

/// Solves the window exactly.
///
/// The convex relaxation is solved first. If its optimum charges and
/// discharges in the same step, the battery power is netted; when that loses
/// optimality, binary mode variables are added at the offending steps and the
/// problem is re-solved until the optimum is complementary. If the node
/// budget runs out, the DP oracle on its default grid takes over for windows
/// of at most `DpOracleConfig::default().max_steps` steps.
pub fn offline_dispatch(cfg: &HesConfig, c: f64, sig: &RegSignal) -> Result<OfflineSolution, OfflineError> {
    check_inputs(cfg, c)?;
    if sig.len() > LP_MAX_STEPS {
        return Err(OfflineError::TooLarge {
            steps: sig.len(),
            limit: LP_MAX_STEPS,
        });
    }
    let target = targets(c, sig);
    let relaxed = lp::solve(cfg, &target, &[], MILP_NODE_LIMIT)?;
    let bound = relaxed.objective;
    let steps = polish(cfg, &relaxed.steps, &target);
    let cycling = cycling_steps(&steps);
    if cycling.is_empty() {
        return Ok(finish(cfg, steps, target, SolverPath::Lp, bound));
    }

    let netted = steps
        .iter()
        .zip(&target)
        .map(|(s, &t)| {
            let net = s.p_discharge + s.p_charge;
            fill_gen_load(cfg, t, net.max(0.0), net.min(0.0))
        })
        .collect();
    let repaired = finish(cfg, netted, target.clone(), SolverPath::LpWithRepair, bound);
    if feasible(cfg, &repaired.trace) && repaired.objective <= bound + REPAIR_TOL {
        return Ok(repaired);
    }

    // binaries wherever the relaxed SoC is within one full-power step of the
    // ceiling, since waste can move between such steps at no cost
    let reach = cfg.batt.p_max * cfg.dt / cfg.batt.energy_capacity;
    let mut exclusive: Vec<usize> = (0..target.len())
        .filter(|&k| {
            let before = if k == 0 { cfg.batt.soc_init } else { relaxed.soc[k - 1] };
            before.max(relaxed.soc[k]) >= cfg.batt.soc_max - reach
        })
        .chain(cycling)
        .collect();
    exclusive.sort_unstable();
    exclusive.dedup();
    for _ in 0..MILP_MAX_ROUNDS {
        let sol = lp::solve(cfg, &target, &exclusive, MILP_NODE_LIMIT)?;
        if !sol.proven {
            break;
        }
        let steps = polish(cfg, &sol.steps, &target);
        let more = cycling_steps(&steps);
        if more.is_empty() {
            return Ok(finish(cfg, steps, target, SolverPath::Milp, bound));
        }
        exclusive.extend(more);
        exclusive.sort_unstable();
        exclusive.dedup();
    }

    let grid = DpOracleConfig::default();
    let mut sol = dp_oracle(cfg, c, sig, &grid)?;
    sol.lower_bound = Some(bound);
    Ok(sol)
}

/// Closed form when the SoC stays interior, otherwise [`offline_dispatch`].
pub fn offline_dispatch_fast(
    cfg: &HesConfig,
    c: f64,
    sig: &RegSignal,
) -> Result<OfflineSolution, OfflineError> {
    match closed_form_dispatch(cfg, c, sig) {
        Some(sol) => Ok(sol),
        None => offline_dispatch(cfg, c, sig),
    }
}

fn check_grid(grid: &DpOracleConfig, steps: usize) -> Result<(), OfflineError> {
    if grid.soc_grid_points < 3 || grid.power_grid_points < 3 {
        return Err(OfflineError::Grid(format!(
            "need at least 3 points per grid, got {}×{}",
            grid.soc_grid_points, grid.power_grid_points
        )));
    }
    if steps > grid.max_steps {
        return Err(OfflineError::DpBudget {
            steps,
            limit: grid.max_steps,
        });
    }
    Ok(())
}

/// Grid-restricted optimum by backward induction, complementarity enforced.
pub fn dp_oracle(
    cfg: &HesConfig,
    c: f64,
    sig: &RegSignal,
    grid: &DpOracleConfig,
) -> Result<OfflineSolution, OfflineError> {
    check_inputs(cfg, c)?;
    dp_oracle_targets(cfg, &targets(c, sig), grid, Complementarity::Enforced)
}

/// [`dp_oracle`] on raw per-step targets `C·r[k]`, any length `≥ 1`.
pub fn dp_oracle_targets(
    cfg: &HesConfig,
    target: &[f64],
    grid: &DpOracleConfig,
    mode: Complementarity,
) -> Result<OfflineSolution, OfflineError> {
    cfg.validate_for_dispatch().map_err(DispatchError::from)?;
    check_grid(grid, target.len())?;
    let trace = dp::solve(cfg, target, grid, mode);
    Ok(OfflineSolution {
        complementarity_clean: complementary(&trace.steps),
        objective: trace.abs_error(),
        trace,
        solver_path: SolverPath::Dp,
        lower_bound: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub c: f64,
    pub j_on: f64,
    pub j_off: f64,
    /// `j_on − j_off`.
    pub gap: f64,
    pub hypothesis_held: bool,
    pub solver_path: SolverPath,
}

/// Compares the real-time rule with the offline optimum. When the SoC stays
/// interior the two objectives must agree within `1e-6·max(1, J_off)`.
pub fn benchmark_theorem1(
    cfg: &HesConfig,
    c: f64,
    sig: &RegSignal,
) -> Result<ComparisonReport, OfflineError> {
    let online = rt_dispatch(cfg, c, sig)?;
    let offline = offline_dispatch(cfg, c, sig)?;
    compare_dispatch(cfg, c, sig, &online, &offline)
}

/// [`benchmark_theorem1`] on traces that were already computed.
pub fn compare_dispatch(
    cfg: &HesConfig,
    c: f64,
    sig: &RegSignal,
    online: &DispatchTrace,
    offline: &OfflineSolution,
) -> Result<ComparisonReport, OfflineError> {
    let hypothesis_held = closed_form_dispatch(cfg, c, sig).is_some();
    let j_on = online.abs_error();
    let j_off = offline.objective;
    if hypothesis_held && (j_on - j_off).abs() > 1e-6 * j_off.max(1.0) {
        return Err(OfflineError::TheoremMismatch { j_on, j_off });
    }
    Ok(ComparisonReport {
        c,
        j_on,
        j_off,
        gap: j_on - j_off,
        hypothesis_held,
        solver_path: offline.solver_path,
    })
}

/// SoC values of a trace that touch a bound within `SOC_TOL`.
pub fn soc_binding_steps(cfg: &HesConfig, trace: &DispatchTrace) -> usize {
    trace.soc[1..]
        .iter()
        .filter(|e| e.0 <= cfg.batt.soc_min + SOC_TOL || e.0 >= cfg.batt.soc_max - SOC_TOL)
        .count()
}
