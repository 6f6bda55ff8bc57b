//! Convex relaxation of the offline dispatch problem as a linear program.
//!
//! Per step the variables are generator and load power, discharge and charge
//! power, the absolute-error epigraph variable `w` and the SoC after the step.
//! The SoC is carried in MW-step units (`E·capacity/dt`) to keep all
//! coefficients of order one. The charge/discharge complementarity is
//! dropped except at the steps listed by the caller, where a binary mode
//! variable enforces it.

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolutionStatus, SolveOptions, Variable};

use crate::model::{DispatchStep, HesConfig};

/// Tie-break weight on battery throughput. Far below the exchange rate
/// between tracking error and throughput, so it only selects among optimal
/// solutions: no gratuitous cycling and the battery is used last.
const THROUGHPUT_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone)]
pub(crate) struct LpDispatch {
    pub steps: Vec<DispatchStep>,
    /// `Σ w[k]` at the returned point.
    pub objective: f64,
    /// SoC after each step (p.u.).
    pub soc: Vec<f64>,
    /// Whether optimality was proven within the node budget.
    pub proven: bool,
}

struct StepVars {
    gen: Variable,
    load: Variable,
    dis: Variable,
    chg: Variable,
    w: Variable,
}

/// Solves the relaxation with complementarity enforced at `exclusive`
/// steps (sorted step indices).
pub(crate) fn solve(
    cfg: &HesConfig,
    targets: &[f64],
    exclusive: &[usize],
    node_limit: u64,
) -> Result<LpDispatch, microlp::Error> {
    let b = &cfg.batt;
    let scale = b.energy_capacity / cfg.dt;
    let (s_min, s_max) = (b.soc_min * scale, b.soc_max * scale);
    let mut prev_soc: Option<Variable> = None;
    let s0 = b.soc_init * scale;

    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(targets.len());
    let mut exclusive = exclusive.iter().peekable();
    for (k, &target) in targets.iter().enumerate() {
        let v = StepVars {
            gen: lp.add_var(0.0, (0.0, cfg.gen.p_max)),
            load: lp.add_var(0.0, (0.0, cfg.load.p_max)),
            dis: lp.add_var(THROUGHPUT_WEIGHT, (0.0, b.p_max)),
            chg: lp.add_var(-THROUGHPUT_WEIGHT, (-b.p_max, 0.0)),
            w: lp.add_var(1.0, (0.0, f64::INFINITY)),
        };
        let soc = lp.add_var(0.0, (s_min, s_max));
        let output = [(v.gen, 1.0), (v.load, -1.0), (v.dis, 1.0), (v.chg, 1.0)];
        // w >= target - p_hes and w >= p_hes - target
        let mut upper: Vec<(Variable, f64)> = vec![(v.w, 1.0)];
        upper.extend(output);
        lp.add_constraint(upper.as_slice(), ComparisonOp::Ge, target);
        let mut lower: Vec<(Variable, f64)> = vec![(v.w, 1.0)];
        lower.extend(output.iter().map(|&(x, a)| (x, -a)));
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, -target);
        // soc[k+1] - soc[k] + eta_c*chg + dis/eta_d = 0
        let mut dynamics = vec![(soc, 1.0), (v.chg, b.eta_c), (v.dis, 1.0 / b.eta_d)];
        let rhs = match prev_soc {
            Some(p) => {
                dynamics.push((p, -1.0));
                0.0
            }
            None => s0,
        };
        lp.add_constraint(dynamics.as_slice(), ComparisonOp::Eq, rhs);
        // convex hull of one complementary step: discharge + |charge| <= rating
        lp.add_constraint([(v.dis, 1.0), (v.chg, -1.0)], ComparisonOp::Le, b.p_max);
        if exclusive.next_if_eq(&&k).is_some() {
            // z = 1 allows discharge only, z = 0 charge only
            let z = lp.add_binary_var(0.0);
            lp.add_constraint([(v.dis, 1.0), (z, -b.p_max)], ComparisonOp::Le, 0.0);
            lp.add_constraint([(v.chg, -1.0), (z, b.p_max)], ComparisonOp::Le, b.p_max);
        }
        prev_soc = Some(soc);
        vars.push((v, soc));
    }

    let mut options = SolveOptions::default();
    options.node_limit = Some(node_limit);
    let sol = lp.solve_with(options)?.into_solution().map_err(|interrupted| {
        microlp::Error::InternalError(format!("{:?}", interrupted.termination_reason()))
    })?;
    let proven = sol.status() == SolutionStatus::Optimal;
    let clamp = |x: f64, lo: f64, hi: f64| x.clamp(lo, hi);
    let mut objective = 0.0;
    let steps = vars
        .iter()
        .map(|(v, _)| {
            objective += sol.var_value(v.w);
            let gen = clamp(sol.var_value(v.gen), 0.0, cfg.gen.p_max);
            let load = clamp(sol.var_value(v.load), 0.0, cfg.load.p_max);
            let dis = clamp(sol.var_value(v.dis), 0.0, b.p_max);
            let chg = clamp(sol.var_value(v.chg), -b.p_max, 0.0);
            // same net exchange, but never generate and consume at once
            let net = gen - load;
            DispatchStep::new(net.max(0.0), (-net).max(0.0), dis, chg)
        })
        .collect();
    let soc = vars.iter().map(|(_, s)| sol.var_value(*s) / scale).collect();
    Ok(LpDispatch {
        steps,
        soc,
        objective,
        proven,
    })
}
