//! Real-time dispatch rule. Each step's command `C·r[k]` goes to the
//! generator (export) or the controllable load (import) first. The battery
//! covers the remainder, limited by SoC-aware headroom factors so that the
//! next SoC stays within bounds.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::g17;
use crate::model::{
    check_step_feasible, soc_step, ConfigError, DispatchStep, Feasibility, HesConfig, SocState,
    SOC_TOL,
};
use crate::signal::RegSignal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispatchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("capacity {0} must be positive and finite")]
    Capacity(f64),
    #[error("state of charge {soc} outside [{min}, {max}]")]
    SocOutOfRange { soc: f64, min: f64, max: f64 },
    #[error("regulation sample {0} outside [-1, 1]")]
    Sample(f64),
}

/// A dispatched window: one step per sample, `soc[0]` is the initial state
/// and `soc[k + 1]` the state after step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchTrace {
    pub steps: Vec<DispatchStep>,
    pub soc: Vec<SocState>,
    pub target: Vec<f64>,
}

impl DispatchTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn p_hes(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.p_hes)
    }

    /// `Σ |C·r[k] − P_hes[k]|` in MW-steps.
    pub fn abs_error(&self) -> f64 {
        self.target
            .iter()
            .zip(&self.steps)
            .map(|(t, s)| (t - s.p_hes).abs())
            .sum()
    }

    /// Per-step feasibility verdicts; empty when every step is feasible.
    pub fn violations(&self, cfg: &HesConfig) -> Vec<(usize, Feasibility)> {
        self.steps
            .iter()
            .zip(&self.soc[1..])
            .enumerate()
            .map(|(k, (s, e))| (k, check_step_feasible(cfg, s, *e)))
            .filter(|(_, f)| !f.is_feasible())
            .collect()
    }

    /// Step-wise SoC consistency with the battery powers.
    pub fn soc_consistent(&self, cfg: &HesConfig, tol: f64) -> bool {
        self.steps.iter().enumerate().all(|(k, s)| {
            let next = soc_step(&cfg.batt, self.soc[k], s.p_charge, s.p_discharge, cfg.dt);
            (next.0 - self.soc[k + 1].0).abs() <= tol
        })
    }

    /// CSV with columns `k,r,target,p_gen,p_load,p_charge,p_discharge,p_hes,soc`;
    /// `soc` is the state after the step.
    pub fn write_csv<W: Write>(&self, mut w: W, sig: &RegSignal) -> io::Result<()> {
        writeln!(w, "k,r,target,p_gen,p_load,p_charge,p_discharge,p_hes,soc")?;
        for (k, s) in self.steps.iter().enumerate() {
            writeln!(
                w,
                "{k},{},{},{},{},{},{},{},{}",
                g17(sig.samples()[k]),
                g17(self.target[k]),
                g17(s.p_gen),
                g17(s.p_load),
                g17(s.p_charge),
                g17(s.p_discharge),
                g17(s.p_hes),
                g17(self.soc[k + 1].0),
            )?;
        }
        Ok(())
    }

    /// Reads a trace written by [`DispatchTrace::write_csv`]. The CSV does not
    /// carry the initial SoC, so it is supplied by the caller.
    pub fn read_csv<R: Read>(r: R, soc_init: f64) -> Result<(Vec<f64>, DispatchTrace), csv::Error> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            k: usize,
            r: f64,
            target: f64,
            p_gen: f64,
            p_load: f64,
            p_charge: f64,
            p_discharge: f64,
            p_hes: f64,
            soc: f64,
        }
        let mut samples = Vec::new();
        let mut trace = DispatchTrace {
            steps: Vec::new(),
            soc: vec![SocState(soc_init)],
            target: Vec::new(),
        };
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            samples.push(row.r);
            trace.target.push(row.target);
            trace.steps.push(DispatchStep {
                p_gen: row.p_gen,
                p_load: row.p_load,
                p_discharge: row.p_discharge,
                p_charge: row.p_charge,
                p_hes: row.p_hes,
            });
            trace.soc.push(SocState(row.soc));
        }
        Ok((samples, trace))
    }
}

/// Charge and discharge headroom factors in `(-∞, 1]` for the current SoC.
pub fn headroom(cfg: &HesConfig, e: SocState) -> (f64, f64) {
    let b = &cfg.batt;
    let scale = b.energy_capacity / (cfg.dt * b.p_max);
    let delta_c = ((b.soc_max - e.0) * scale / b.eta_c).min(1.0);
    let delta_d = (b.eta_d * (e.0 - b.soc_min) * scale).min(1.0);
    (delta_c, delta_d)
}

/// One step of the rule, without input validation. `r_k = 0` takes the
/// import branch; both branches give the all-zero step there.
fn allocate(cfg: &HesConfig, c: f64, r_k: f64, e: SocState) -> (DispatchStep, SocState) {
    let (delta_c, delta_d) = headroom(cfg, e);
    let target = c * r_k;
    let p_batt = cfg.batt.p_max;
    let step = if r_k > 0.0 {
        let p_gen = target.min(cfg.gen.p_max);
        let p_d = (target - p_gen).min(delta_d * p_batt).max(0.0);
        DispatchStep::new(p_gen, 0.0, p_d, 0.0)
    } else {
        let p_load = (-target).min(cfg.load.p_max);
        let p_c = (target + p_load).max(-delta_c * p_batt).min(0.0);
        DispatchStep::new(0.0, p_load, 0.0, p_c)
    };
    let next = soc_step(&cfg.batt, e, step.p_charge, step.p_discharge, cfg.dt);
    (step, next)
}

fn check_inputs(cfg: &HesConfig, c: f64) -> Result<(), DispatchError> {
    cfg.validate_for_dispatch()?;
    if !(c.is_finite() && c > 0.0) {
        return Err(DispatchError::Capacity(c));
    }
    Ok(())
}

/// Dispatches a single step from SoC `e`.
pub fn rt_step(
    cfg: &HesConfig,
    c: f64,
    r_k: f64,
    e: SocState,
) -> Result<(DispatchStep, SocState), DispatchError> {
    check_inputs(cfg, c)?;
    if !(r_k.is_finite() && (-1.0..=1.0).contains(&r_k)) {
        return Err(DispatchError::Sample(r_k));
    }
    check_soc(cfg, e)?;
    Ok(allocate(cfg, c, r_k, e))
}

fn check_soc(cfg: &HesConfig, e: SocState) -> Result<(), DispatchError> {
    let b = &cfg.batt;
    if e.0 >= b.soc_min - SOC_TOL && e.0 <= b.soc_max + SOC_TOL {
        Ok(())
    } else {
        Err(DispatchError::SocOutOfRange {
            soc: e.0,
            min: b.soc_min,
            max: b.soc_max,
        })
    }
}

/// Runs the rule over a window starting from `cfg.batt.soc_init`.
pub fn rt_dispatch(cfg: &HesConfig, c: f64, sig: &RegSignal) -> Result<DispatchTrace, DispatchError> {
    rt_dispatch_from(cfg, c, sig, SocState(cfg.batt.soc_init))
}

/// Runs the rule over a window from an explicit SoC, for chaining windows.
pub fn rt_dispatch_from(
    cfg: &HesConfig,
    c: f64,
    sig: &RegSignal,
    e0: SocState,
) -> Result<DispatchTrace, DispatchError> {
    check_inputs(cfg, c)?;
    let n = sig.len();
    let mut trace = DispatchTrace {
        steps: Vec::with_capacity(n),
        soc: Vec::with_capacity(n + 1),
        target: Vec::with_capacity(n),
    };
    check_soc(cfg, e0)?;
    trace.soc.push(e0);
    let mut e = e0;
    for &r in sig.samples() {
        let (step, next) = allocate(cfg, c, r, e);
        trace.steps.push(step);
        trace.target.push(c * r);
        trace.soc.push(next);
        e = next;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_signal, SynthKind};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn hand_traces() {
        let cfg = HesConfig::table1();
        let (s, _) = rt_step(&cfg, 12.21, 0.5, SocState(0.5)).unwrap();
        assert!(close(s.p_gen, 3.0) && close(s.p_discharge, 3.105) && close(s.p_hes, 6.105));
        assert_eq!((s.p_load, s.p_charge), (0.0, 0.0));

        let (s, e) = rt_step(&cfg, 12.21, -1.0, SocState(0.5)).unwrap();
        assert!(close(s.p_load, 3.0) && close(s.p_charge, -5.0) && close(s.p_hes, -8.0));
        assert!(e.0 > 0.5);

        let (s, e) = rt_step(&cfg, 10.0, 0.2, SocState(0.1)).unwrap();
        assert_eq!(headroom(&cfg, SocState(0.1)).1, 0.0);
        assert!(close(s.p_gen, 2.0) && s.p_discharge == 0.0 && close(s.p_hes, 2.0));
        assert_eq!(e, SocState(0.1));

        let (s, e) = rt_step(&cfg, 10.0, 0.0, SocState(0.5)).unwrap();
        assert_eq!(s, DispatchStep::default());
        assert_eq!(e, SocState(0.5));
    }

    #[test]
    fn headroom_saturates_exactly_at_bound() {
        let mut cfg = HesConfig::table1();
        cfg.dt = 0.05;
        let e = SocState(0.9 - 0.01);
        let (s, next) = rt_step(&cfg, 20.0, -1.0, e).unwrap();
        assert!(s.p_charge > -5.0);
        assert!((next.0 - 0.9).abs() < 1e-12, "{next:?}");
        let (s, next) = rt_step(&cfg, 20.0, 1.0, SocState(0.1 + 0.01)).unwrap();
        assert!(s.p_discharge < 5.0);
        assert!((next.0 - 0.1).abs() < 1e-12, "{next:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = HesConfig::table1();
        assert!(matches!(rt_step(&cfg, 5.0, 0.1, SocState(0.95)), Err(DispatchError::SocOutOfRange { .. })));
        assert!(matches!(rt_step(&cfg, 0.0, 0.1, SocState(0.5)), Err(DispatchError::Capacity(_))));
        assert!(matches!(rt_step(&cfg, 5.0, 1.5, SocState(0.5)), Err(DispatchError::Sample(_))));
        let mut floor = cfg;
        floor.gen.p_min = 0.5;
        assert!(matches!(rt_step(&floor, 5.0, 0.1, SocState(0.5)), Err(DispatchError::Config(_))));
    }

    #[test]
    fn zero_signal_trace() {
        let cfg = HesConfig::table1();
        let sig = RegSignal::new(vec![0.0; 50], cfg.dt).unwrap();
        let t = rt_dispatch(&cfg, 7.0, &sig).unwrap();
        assert!(t.steps.iter().all(|s| *s == DispatchStep::default()));
        assert!(t.soc.iter().all(|e| *e == SocState(0.5)));
        assert_eq!(t.soc.len(), 51);
    }

    #[test]
    fn square_wave_at_knee_tracks_exactly() {
        let cfg = HesConfig::table1();
        let sig = synth_signal(SynthKind::SquareWave { amplitude: 1.0, period: 2 }, 1800, cfg.dt, 0).unwrap();
        let t = rt_dispatch(&cfg, 8.0, &sig).unwrap();
        for (k, s) in t.steps.iter().enumerate() {
            assert_eq!(s.p_hes, 8.0 * sig.samples()[k]);
        }
        assert_eq!(t.abs_error(), 0.0);
        assert!(t.violations(&cfg).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let cfg = HesConfig::table1();
        let sig = synth_signal(SynthKind::neutral(), 200, cfg.dt, 4).unwrap();
        let t = rt_dispatch(&cfg, 12.21, &sig).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &sig).unwrap();
        let (samples, back) = DispatchTrace::read_csv(buf.as_slice(), cfg.batt.soc_init).unwrap();
        assert_eq!(samples, sig.samples());
        assert_eq!(back, t);
    }
}
