use std::io::Write;

use anyhow::{bail, Context, Result};
use hes_regkit::bidding::{
    expected_revenue, holdout_compliance, solve_bid, write_curve_csv, BidDiagnostics,
    HoldoutReport, RevenueSummary,
};
use hes_regkit::fmt::g17;
use hes_regkit::model::SOC_TOL;
use hes_regkit::offline::{compare_dispatch, offline_dispatch, soc_binding_steps, SolverPath};
use hes_regkit::scoring::{evaluate, PerformanceReport};
use hes_regkit::signal::{archive_stats, write_archive, Histogram, SignalArchive, Summary};
use hes_regkit::{rt_dispatch, HesConfig, RegSignal};
use serde::Serialize;

use crate::config::{Mode, RunConfig, Side, SynthSpec};
use crate::report::{inputs_digest, ExperimentReport, OutDir, TOOL_VERSION};

fn emit<T: Serialize>(
    out: &OutDir,
    file: &str,
    experiment: &str,
    cfg: &RunConfig,
    arch: &SignalArchive,
    results: T,
) -> Result<()> {
    let report = ExperimentReport {
        experiment,
        tool_version: TOOL_VERSION,
        inputs_digest: inputs_digest(cfg, Some(arch))?,
        config: cfg,
        results,
    };
    out.write_json(file, &report)
}

fn window<'a>(cfg: &RunConfig, arch: &'a SignalArchive) -> Result<&'a RegSignal> {
    let i = cfg.run.window;
    arch.windows()
        .get(i)
        .with_context(|| format!("window {i} out of range; the archive has {} windows", arch.len()))
}

fn write_histogram(out: &OutDir, name: &str, h: &Histogram) -> Result<()> {
    out.write_with(name, |w| {
        writeln!(w, "bin,lo,hi,count")?;
        for (i, n) in h.counts.iter().enumerate() {
            let (lo, hi) = h.edges(i);
            writeln!(w, "{i},{},{},{n}", g17(lo), g17(hi))?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct Characterization {
    windows: usize,
    window_len: usize,
    dt: f64,
    w: Summary,
    w_inf: Summary,
    mileage: Summary,
}

pub fn characterize(cfg: &RunConfig) -> Result<()> {
    let arch = cfg.archive()?;
    let stats = archive_stats(&arch, cfg.run.bins);
    eprintln!(
        "characterize: {} windows, mean W = {} MWh",
        arch.len(),
        g17(stats.w.mean)
    );
    let out = OutDir::create(&cfg.out)?;
    out.write_with("window_stats.csv", |w| {
        writeln!(w, "window,w,w_inf,mileage")?;
        for (i, s) in stats.per_window.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", g17(s.w), g17(s.w_inf), g17(s.mileage))?;
        }
        Ok(())
    })?;
    write_histogram(&out, "histogram_w.csv", &stats.w_histogram)?;
    write_histogram(&out, "histogram_w_inf.csv", &stats.w_inf_histogram)?;
    let results = Characterization {
        windows: arch.len(),
        window_len: arch.window_len(),
        dt: arch.dt(),
        w: stats.w,
        w_inf: stats.w_inf,
        mileage: stats.mileage,
    };
    emit(&out, "summary.json", "characterize", cfg, &arch, results)
}

#[derive(Serialize)]
struct OfflineSummary {
    performance: PerformanceReport,
    solver_path: SolverPath,
    complementarity_clean: bool,
    lower_bound: Option<f64>,
    soc_binding_steps: usize,
}

#[derive(Serialize)]
struct DispatchResults {
    window: usize,
    c: f64,
    mode: Mode,
    rt: Option<PerformanceReport>,
    offline: Option<OfflineSummary>,
}

pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    let arch = cfg.archive()?;
    let sig = window(cfg, &arch)?;
    let c = cfg.capacity()?;
    let mode = cfg.run.mode;
    let out = OutDir::create(&cfg.out)?;

    let online = match mode {
        Mode::Rt | Mode::Both => Some(rt_dispatch(&cfg.hes, c, sig)?),
        Mode::Offline => None,
    };
    let offline = match mode {
        Mode::Offline | Mode::Both => Some(offline_dispatch(&cfg.hes, c, sig)?),
        Mode::Rt => None,
    };

    let mut results = DispatchResults {
        window: cfg.run.window,
        c,
        mode,
        rt: None,
        offline: None,
    };
    if let Some(t) = &online {
        let perf = evaluate(c, sig, t, &cfg.market)?;
        eprintln!("dispatch: rt x_p = {}", g17(perf.x_p));
        out.write_with("trace_rt.csv", |w| t.write_csv(w, sig))?;
        results.rt = Some(perf);
    }
    if let Some(sol) = &offline {
        let perf = evaluate(c, sig, &sol.trace, &cfg.market)?;
        eprintln!(
            "dispatch: offline x_p = {} via {}",
            g17(perf.x_p),
            sol.solver_path.as_str()
        );
        out.write_with("trace_offline.csv", |w| sol.trace.write_csv(w, sig))?;
        results.offline = Some(OfflineSummary {
            performance: perf,
            solver_path: sol.solver_path,
            complementarity_clean: sol.complementarity_clean,
            lower_bound: sol.lower_bound,
            soc_binding_steps: soc_binding_steps(&cfg.hes, &sol.trace),
        });
    }
    if let (Some(t), Some(sol)) = (&online, &offline) {
        let cmp = compare_dispatch(&cfg.hes, c, sig, t, sol)?;
        eprintln!("dispatch: gap J_on - J_off = {}", g17(cmp.gap));
        emit(&out, "comparison.json", "dispatch-comparison", cfg, &arch, cmp)?;
    }
    emit(&out, "dispatch.json", "dispatch", cfg, &arch, results)
}

#[derive(Serialize)]
struct PointSummary {
    c: f64,
    mean_xp: f64,
    z_gamma: f64,
    prob_compliant: f64,
    objective: f64,
}

#[derive(Serialize)]
struct BidResults {
    windows: usize,
    c_bar: f64,
    c_hat: f64,
    c_star: f64,
    at_c_star: PointSummary,
    revenue: RevenueSummary,
    holdout: Option<HoldoutReport>,
    diagnostics: BidDiagnostics,
}

pub fn bid(cfg: &RunConfig) -> Result<()> {
    let arch = cfg.archive()?;
    if arch.len() < 2 {
        bail!(
            "bid needs an archive with at least 2 windows, got {}",
            arch.len()
        );
    }
    let (train, test) = match cfg.run.holdout {
        Some(f) => {
            let (a, b) = arch
                .split_holdout(f)
                .with_context(|| format!("holdout fraction {f} leaves an empty side"))?;
            (a, Some(b))
        }
        None => (arch.clone(), None),
    };
    let sol = solve_bid(&cfg.hes, &train, &cfg.market, &cfg.sweep)?;
    for (a, b) in &sol.diagnostics.monotonicity_violations {
        eprintln!("bid: z_gamma rises between C = {} and {}", g17(*a), g17(*b));
    }
    eprintln!(
        "bid: C_bar = {}, C_hat = {}, C* = {}",
        g17(sol.c_bar),
        g17(sol.c_hat),
        g17(sol.c_star)
    );
    let revenue = expected_revenue(&sol, &cfg.market, &train);
    let holdout = match &test {
        Some(t) => Some(holdout_compliance(&cfg.hes, sol.c_star, t, &cfg.market)?),
        None => None,
    };
    let out = OutDir::create(&cfg.out)?;
    out.write_with("curve.csv", |w| write_curve_csv(w, &sol.curve))?;
    let p = &sol.at_c_star;
    let results = BidResults {
        windows: train.len(),
        c_bar: sol.c_bar,
        c_hat: sol.c_hat,
        c_star: sol.c_star,
        at_c_star: PointSummary {
            c: p.c,
            mean_xp: p.mean_xp,
            z_gamma: p.z_gamma,
            prob_compliant: p.prob_compliant,
            objective: p.objective,
        },
        revenue,
        holdout,
        diagnostics: sol.diagnostics,
    };
    emit(&out, "bid.json", "bid", cfg, &arch, results)
}

#[derive(Serialize)]
struct AsymRow {
    value: f64,
    beta1: f64,
    beta2: f64,
    c_bar: f64,
    c_star: f64,
    mean_xp: f64,
    z_gamma: f64,
}

#[derive(Serialize)]
struct AsymResults {
    vary: Side,
    rows: Vec<AsymRow>,
}

fn varied(cfg: &RunConfig, side: Side, value: f64) -> Result<HesConfig> {
    let hes = side.apply(&cfg.hes, value);
    hes.validate_for_dispatch()
        .with_context(|| format!("invalid rating {value} for {side}"))?;
    Ok(hes)
}

pub fn asym_sweep(cfg: &RunConfig) -> Result<()> {
    let side = cfg.vary()?;
    let arch = cfg.archive()?;
    let out = OutDir::create(&cfg.out)?;
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &value in &cfg.run.values {
        let hes = varied(cfg, side, value)?;
        let sol = solve_bid(&hes, &arch, &cfg.market, &cfg.sweep)
            .with_context(|| format!("bid for {side} = {value}"))?;
        eprintln!("asym-sweep: {side} = {} -> C* = {}", g17(value), g17(sol.c_star));
        for p in &sol.curve {
            curves.push((value, p.c, Summary::of(&p.scores), p.z_gamma));
        }
        rows.push(AsymRow {
            value,
            beta1: hes.beta1(),
            beta2: hes.beta2(),
            c_bar: sol.c_bar,
            c_star: sol.c_star,
            mean_xp: sol.at_c_star.mean_xp,
            z_gamma: sol.at_c_star.z_gamma,
        });
    }
    out.write_with("asym_summary.csv", |w| {
        writeln!(w, "value,beta1,beta2,c_bar,c_star,mean_xp,z_gamma")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                g17(r.value),
                g17(r.beta1),
                g17(r.beta2),
                g17(r.c_bar),
                g17(r.c_star),
                g17(r.mean_xp),
                g17(r.z_gamma)
            )?;
        }
        Ok(())
    })?;
    out.write_with("asym_curves.csv", |w| {
        writeln!(w, "value,c,mean_xp,std_xp,z_gamma")?;
        for (v, c, s, z) in &curves {
            writeln!(w, "{},{},{},{},{}", g17(*v), g17(*c), g17(s.mean), g17(s.std), g17(*z))?;
        }
        Ok(())
    })?;
    emit(&out, "asym_sweep.json", "asym-sweep", cfg, &arch, AsymResults { vary: side, rows })
}

#[derive(Serialize)]
struct DriftRun {
    value: f64,
    file: String,
    soc_min: f64,
    soc_max: f64,
    soc_final: f64,
    /// First step after which the SoC sits on its lower bound.
    first_lower_hit: Option<usize>,
    first_upper_hit: Option<usize>,
    bound_reached: bool,
}

#[derive(Serialize)]
struct DriftResults {
    window: usize,
    c: f64,
    vary: Side,
    runs: Vec<DriftRun>,
}

pub fn soc_drift(cfg: &RunConfig) -> Result<()> {
    let side = cfg.vary()?;
    let c = cfg.capacity()?;
    let arch = cfg.archive()?;
    let sig = window(cfg, &arch)?;
    let out = OutDir::create(&cfg.out)?;
    let mut runs = Vec::new();
    for (i, &value) in cfg.run.values.iter().enumerate() {
        let hes = varied(cfg, side, value)?;
        let trace = rt_dispatch(&hes, c, sig)?;
        let file = format!("soc_drift_{i}.csv");
        out.write_with(&file, |w| trace.write_csv(w, sig))?;
        let soc: Vec<f64> = trace.soc[1..].iter().map(|e| e.0).collect();
        let lo = hes.batt.soc_min + SOC_TOL;
        let hi = hes.batt.soc_max - SOC_TOL;
        let first_lower_hit = soc.iter().position(|&e| e <= lo);
        let first_upper_hit = soc.iter().position(|&e| e >= hi);
        let bound_reached = first_lower_hit.is_some() || first_upper_hit.is_some();
        eprintln!(
            "soc-drift: {side} = {} {}",
            g17(value),
            if bound_reached { "reaches a SoC bound" } else { "stays interior" }
        );
        runs.push(DriftRun {
            value,
            file,
            soc_min: soc.iter().copied().fold(f64::INFINITY, f64::min),
            soc_max: soc.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            soc_final: soc.last().copied().unwrap_or(hes.batt.soc_init),
            first_lower_hit,
            first_upper_hit,
            bound_reached,
        });
    }
    let results = DriftResults {
        window: cfg.run.window,
        c,
        vary: side,
        runs,
    };
    emit(&out, "soc_drift.json", "soc-drift", cfg, &arch, results)
}

#[derive(Serialize)]
struct SynthResults<'a> {
    spec: &'a SynthSpec,
    window_len: usize,
    dt: f64,
    seed: u64,
    file: &'a str,
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let Some(spec) = &cfg.signal.synth else {
        bail!("synth needs a [signal.synth] section");
    };
    let arch = cfg.archive()?;
    let out = OutDir::create(&cfg.out)?;
    out.write_with("signal.csv", |w| write_archive(w, &arch))?;
    let results = SynthResults {
        spec,
        window_len: arch.window_len(),
        dt: arch.dt(),
        seed: cfg.seed,
        file: "signal.csv",
    };
    emit(&out, "synth.json", "synth", cfg, &arch, results)
}
