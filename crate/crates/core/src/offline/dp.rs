//! Backward-induction oracle for the offline dispatch problem on small
//! instances.
//!
//! The value function is tabulated on a SoC grid over `[soc_min, soc_max]`
//! that contains the initial SoC, and interpolated linearly between grid
//! points. From each state the candidate battery actions are every power on
//! the power grid plus every move that lands exactly on a grid point within
//! the power rating. The forward pass re-optimises from the true (possibly
//! off-grid) SoC, so the returned trace satisfies the exact dynamics and its
//! objective is an upper bound on the true optimum.
//!
//! Generator and load are memoryless: given the battery power they take the
//! closest feasible value to the residual target.

use serde::{Deserialize, Serialize};

use crate::controller::DispatchTrace;
use crate::model::{soc_step, DispatchStep, HesConfig, SocState, SOC_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpOracleConfig {
    pub soc_grid_points: usize,
    pub power_grid_points: usize,
    /// Largest horizon the oracle accepts.
    pub max_steps: usize,
}

impl Default for DpOracleConfig {
    fn default() -> Self {
        DpOracleConfig {
            soc_grid_points: 101,
            power_grid_points: 101,
            max_steps: 200,
        }
    }
}

impl DpOracleConfig {
    pub fn with_soc_points(mut self, n: usize) -> Self {
        self.soc_grid_points = n;
        self
    }

    pub fn with_power_points(mut self, n: usize) -> Self {
        self.power_grid_points = n;
        self
    }

    /// Objective resolution of the grids in MW-steps: the larger of one SoC
    /// cell converted to step power (through the worse of the two
    /// efficiencies) and one power-grid spacing.
    pub fn resolution(&self, cfg: &HesConfig) -> f64 {
        let grid = soc_grid(cfg, self.soc_grid_points);
        let cell = grid.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
        let b = &cfg.batt;
        let eta = b.eta_c.min(b.eta_d);
        let cell_power = cell * b.energy_capacity / (cfg.dt * eta);
        let power_step = 2.0 * b.p_max / (self.power_grid_points.max(2) - 1) as f64;
        cell_power.max(power_step)
    }
}

/// Whether a single step may charge and discharge at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Complementarity {
    /// One signed battery power per step.
    Enforced,
    /// Charge and discharge may overlap, as in the convex relaxation.
    Relaxed,
}

/// Grid over `[soc_min, soc_max]` with `points` entries that contains
/// `soc_init` exactly. The two segments on either side of `soc_init` are
/// uniform, with intervals apportioned by length.
pub fn soc_grid(cfg: &HesConfig, points: usize) -> Vec<f64> {
    let b = &cfg.batt;
    let intervals = points.max(3) - 1;
    let span = b.soc_max - b.soc_min;
    let below_len = b.soc_init - b.soc_min;
    let mut below = ((below_len / span) * intervals as f64).round() as usize;
    if below_len > SOC_TOL {
        below = below.max(1);
    } else {
        below = 0;
    }
    if b.soc_max - b.soc_init > SOC_TOL {
        below = below.min(intervals - 1);
    } else {
        below = intervals;
    }
    let above = intervals - below;
    let mut grid = Vec::with_capacity(points);
    for i in 0..below {
        grid.push(b.soc_min + below_len * i as f64 / below as f64);
    }
    grid.push(b.soc_init);
    for i in 1..=above {
        if i == above {
            grid.push(b.soc_max);
        } else {
            grid.push(b.soc_init + (b.soc_max - b.soc_init) * i as f64 / above as f64);
        }
    }
    grid
}

/// Net battery power range that changes the SoC by exactly `delta` (p.u.)
/// in one step, or `None` when the rating does not allow it.
fn power_range(cfg: &HesConfig, delta: f64, mode: Complementarity) -> Option<(f64, f64)> {
    let b = &cfg.batt;
    // energy gained per step in MW-steps
    let d = delta * b.energy_capacity / cfg.dt;
    let strict = if d >= 0.0 { -d / b.eta_c } else { -d * b.eta_d };
    if strict.abs() > b.p_max * (1.0 + 1e-12) {
        return None;
    }
    let strict = strict.clamp(-b.p_max, b.p_max);
    match mode {
        Complementarity::Enforced => Some((strict, strict)),
        Complementarity::Relaxed => {
            // charge magnitude u and discharge eta_d*(eta_c*u - d) both within rating
            let u_hi = b.p_max.min((b.p_max / b.eta_d + d) / b.eta_c);
            let lo = b.eta_d * b.eta_c * u_hi - b.eta_d * d - u_hi;
            Some((lo.min(strict), strict))
        }
    }
}

/// Best net battery power within `[b_lo, b_hi]` for one step, with the
/// resulting generator, load and absolute error.
fn allocate(cfg: &HesConfig, target: f64, b_lo: f64, b_hi: f64) -> (f64, f64, f64, f64) {
    // zero error needs target - b within [-load_max, gen_max]
    let b = b_hi.min(target + cfg.load.p_max).max(b_lo);
    let residual = target - b;
    let gen = residual.clamp(0.0, cfg.gen.p_max);
    let load = (-residual).clamp(0.0, cfg.load.p_max);
    let err = (target - (gen - load + b)).abs();
    (b, gen, load, err)
}

/// Splits a net battery power into charge/discharge parts realising the SoC
/// change `delta`.
fn split_battery(cfg: &HesConfig, b_net: f64, delta: f64) -> (f64, f64) {
    let bp = &cfg.batt;
    let d = delta * bp.energy_capacity / cfg.dt;
    let loss = 1.0 - bp.eta_c * bp.eta_d;
    let strict = if d >= 0.0 { -d / bp.eta_c } else { -d * bp.eta_d };
    if loss <= 0.0 || (b_net - strict).abs() <= 1e-12 {
        return signed(b_net);
    }
    let u = -(b_net + bp.eta_d * d) / loss;
    let dis = bp.eta_d * (bp.eta_c * u - d);
    (-u.max(0.0), dis.max(0.0))
}

fn signed(p: f64) -> (f64, f64) {
    if p < 0.0 {
        (p, 0.0)
    } else {
        (0.0, p)
    }
}

struct Oracle<'a> {
    cfg: &'a HesConfig,
    grid: Vec<f64>,
    powers: Vec<f64>,
    mode: Complementarity,
}

/// One evaluated action.
#[derive(Debug, Clone, Copy)]
struct Choice {
    cost: f64,
    next: f64,
    b_net: f64,
    gen: f64,
    load: f64,
    landing: bool,
}

impl Oracle<'_> {
    fn interp(&self, value: &[f64], e: f64) -> f64 {
        let g = &self.grid;
        let pos = g.partition_point(|&x| x < e);
        if pos == 0 {
            return value[0];
        }
        if pos >= g.len() {
            return value[g.len() - 1];
        }
        if g[pos] == e {
            return value[pos];
        }
        let w = (e - g[pos - 1]) / (g[pos] - g[pos - 1]);
        value[pos - 1] * (1.0 - w) + value[pos] * w
    }

    /// Best action from SoC `e` for target `t`, against next-step values
    /// `value` (all zero after the last step). Ties go to the first
    /// candidate: grid landings nearest to `e` first, then the power grid.
    fn best(&self, e: f64, t: f64, value: &[f64]) -> Choice {
        let cfg = self.cfg;
        let b = &cfg.batt;
        let mut best = Choice {
            cost: f64::INFINITY,
            next: e,
            b_net: 0.0,
            gen: 0.0,
            load: 0.0,
            landing: true,
        };
        let mut consider = |b_lo: f64, b_hi: f64, next: f64, v: f64, landing: bool| {
            let (b_net, gen, load, err) = allocate(cfg, t, b_lo, b_hi);
            let cost = err + v;
            if cost < best.cost {
                best = Choice {
                    cost,
                    next,
                    b_net,
                    gen,
                    load,
                    landing,
                };
            }
        };

        let step = cfg.dt / b.energy_capacity;
        let up = e + b.eta_c * b.p_max * step;
        let down = e - b.p_max / b.eta_d * step;
        let lo = self.grid.partition_point(|&g| g < down - SOC_TOL);
        let hi = self.grid.partition_point(|&g| g <= up + SOC_TOL);
        let mut order: Vec<usize> = (lo..hi).collect();
        order.sort_by(|&a, &c| {
            (self.grid[a] - e)
                .abs()
                .total_cmp(&(self.grid[c] - e).abs())
                .then(a.cmp(&c))
        });
        for j in order {
            if let Some((b_lo, b_hi)) = power_range(cfg, self.grid[j] - e, self.mode) {
                consider(b_lo, b_hi, self.grid[j], value[j], true);
            }
        }
        for &p in &self.powers {
            let (chg, dis) = signed(p);
            let next = soc_step(b, SocState(e), chg, dis, cfg.dt).0;
            if next >= b.soc_min - SOC_TOL && next <= b.soc_max + SOC_TOL {
                let next = next.clamp(b.soc_min, b.soc_max);
                consider(p, p, next, self.interp(value, next), false);
            }
        }
        best
    }
}

pub(crate) fn solve(
    cfg: &HesConfig,
    targets: &[f64],
    grid_cfg: &DpOracleConfig,
    mode: Complementarity,
) -> DispatchTrace {
    let np = grid_cfg.power_grid_points.max(3);
    let p_max = cfg.batt.p_max;
    let oracle = Oracle {
        cfg,
        grid: soc_grid(cfg, grid_cfg.soc_grid_points),
        powers: (0..np)
            .map(|i| -p_max + 2.0 * p_max * i as f64 / (np - 1) as f64)
            .collect(),
        mode,
    };
    let m = oracle.grid.len();
    let n = targets.len();

    // values[k] is the cost-to-go before step k
    let mut values = vec![vec![0.0_f64; m]; n + 1];
    for k in (0..n).rev() {
        let (head, tail) = values.split_at_mut(k + 1);
        let next = &tail[0];
        for (i, v) in head[k].iter_mut().enumerate() {
            *v = oracle.best(oracle.grid[i], targets[k], next).cost;
        }
    }

    let mut e = cfg.batt.soc_init;
    let mut trace = DispatchTrace {
        steps: Vec::with_capacity(n),
        soc: vec![SocState(e)],
        target: targets.to_vec(),
    };
    for k in 0..n {
        let ch = oracle.best(e, targets[k], &values[k + 1]);
        let (chg, dis) = if ch.landing {
            split_battery(cfg, ch.b_net, ch.next - e)
        } else {
            signed(ch.b_net)
        };
        let step = DispatchStep::new(ch.gen, ch.load, dis, chg);
        let next = soc_step(&cfg.batt, SocState(e), chg, dis, cfg.dt)
            .0
            .clamp(cfg.batt.soc_min, cfg.batt.soc_max);
        trace.steps.push(step);
        trace.soc.push(SocState(next));
        e = next;
    }
    trace
}
