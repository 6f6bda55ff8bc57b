//! Asset parameterization of the hybrid energy system (HES), the battery
//! state-of-charge recursion and the per-step feasibility check shared by
//! every dispatch strategy.
//!
//! Sign conventions follow the dispatch literature: generator output and
//! battery discharge are non-negative, battery charge is non-positive and
//! controllable load consumption is non-negative (it enters the HES output
//! with a minus sign).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance applied to every power bound check (MW).
pub const POWER_TOL: f64 = 1e-9;
/// Absolute tolerance applied to every state-of-charge bound check (p.u.).
pub const SOC_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    /// Rated output (MW).
    pub p_max: f64,
    /// Minimum output (MW). Dispatch strategies require this to be zero.
    #[serde(default)]
    pub p_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadParams {
    /// Rated consumption of the controllable load (MW).
    pub p_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryParams {
    /// Rated charge/discharge power (MW).
    pub p_max: f64,
    /// Usable energy capacity (MWh); base of the per-unit SoC.
    pub energy_capacity: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
}

/// The complete HES together with the dispatch step length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HesConfig {
    pub gen: GeneratorParams,
    pub load: LoadParams,
    pub batt: BatteryParams,
    /// Step length in hours.
    pub dt: f64,
}

/// Per-unit battery state of charge.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SocState(pub f64);

impl SocState {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Power allocation for a single step. `p_hes` is cached and always equals
/// [`hes_output`] of the other four fields when built with [`DispatchStep::new`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DispatchStep {
    pub p_gen: f64,
    pub p_load: f64,
    pub p_discharge: f64,
    pub p_charge: f64,
    pub p_hes: f64,
}

impl DispatchStep {
    pub fn new(p_gen: f64, p_load: f64, p_discharge: f64, p_charge: f64) -> Self {
        let mut step = DispatchStep {
            p_gen,
            p_load,
            p_discharge,
            p_charge,
            p_hes: 0.0,
        };
        step.p_hes = hes_output(&step);
        step
    }

    /// Net battery output; positive when discharging.
    pub fn p_batt(&self) -> f64 {
        self.p_discharge + self.p_charge
    }
}

impl GeneratorParams {
    pub fn new(p_max: f64) -> Self {
        GeneratorParams { p_max, p_min: 0.0 }
    }
}

impl HesConfig {
    /// Parameters of the reference symmetric system: 3 MW generator, 3 MW
    /// load, 5 MW / 5 MWh battery at 95 % efficiency, SoC in [0.1, 0.9]
    /// starting at 0.5, sampled every 2 s.
    pub fn table1() -> Self {
        HesConfig {
            gen: GeneratorParams::new(3.0),
            load: LoadParams { p_max: 3.0 },
            batt: BatteryParams {
                p_max: 5.0,
                energy_capacity: 5.0,
                eta_c: 0.95,
                eta_d: 0.95,
                soc_min: 0.1,
                soc_max: 0.9,
                soc_init: 0.5,
            },
            dt: 1.0 / 1800.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            ("gen.p_max", self.gen.p_max),
            ("gen.p_min", self.gen.p_min),
            ("load.p_max", self.load.p_max),
            ("batt.p_max", self.batt.p_max),
            ("batt.energy_capacity", self.batt.energy_capacity),
            ("batt.eta_c", self.batt.eta_c),
            ("batt.eta_d", self.batt.eta_d),
            ("batt.soc_min", self.batt.soc_min),
            ("batt.soc_max", self.batt.soc_max),
            ("batt.soc_init", self.batt.soc_init),
            ("dt", self.dt),
        ];
        for (field, v) in finite {
            if !v.is_finite() {
                return Err(invalid(field, format!("{v} is not finite")));
            }
        }
        let g = &self.gen;
        if g.p_min < 0.0 || g.p_min > g.p_max {
            return Err(invalid(
                "gen.p_min",
                format!("need 0 <= p_min <= p_max, got p_min={} p_max={}", g.p_min, g.p_max),
            ));
        }
        if self.load.p_max < 0.0 {
            return Err(invalid("load.p_max", "must be >= 0"));
        }
        let b = &self.batt;
        if b.p_max <= 0.0 {
            return Err(invalid("batt.p_max", "must be > 0"));
        }
        if b.energy_capacity <= 0.0 {
            return Err(invalid("batt.energy_capacity", "must be > 0"));
        }
        for (field, eta) in [("batt.eta_c", b.eta_c), ("batt.eta_d", b.eta_d)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(invalid(field, format!("{eta} outside (0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&b.soc_min) {
            return Err(invalid("batt.soc_min", format!("{} outside [0, 1)", b.soc_min)));
        }
        if !(b.soc_max > 0.0 && b.soc_max <= 1.0) {
            return Err(invalid("batt.soc_max", format!("{} outside (0, 1]", b.soc_max)));
        }
        if b.soc_min >= b.soc_max {
            return Err(invalid("batt.soc_min", "must be below soc_max"));
        }
        if b.soc_init < b.soc_min || b.soc_init > b.soc_max {
            return Err(invalid(
                "batt.soc_init",
                format!("{} outside [{}, {}]", b.soc_init, b.soc_min, b.soc_max),
            ));
        }
        if self.dt <= 0.0 {
            return Err(invalid("dt", "must be > 0"));
        }
        Ok(())
    }

    /// Validation plus the zero generator floor that the dispatch strategies
    /// rely on.
    pub fn validate_for_dispatch(&self) -> Result<(), ConfigError> {
        self.validate()?;
        if self.gen.p_min != 0.0 {
            return Err(invalid(
                "gen.p_min",
                format!(
                    "dispatch strategies require a zero generator floor, got {}",
                    self.gen.p_min
                ),
            ));
        }
        Ok(())
    }

    /// First knee of the score curve: the smaller of the two directional
    /// capabilities.
    pub fn beta1(&self) -> f64 {
        self.gen.p_max.min(self.load.p_max) + self.batt.p_max
    }

    /// Second knee: the larger directional capability.
    pub fn beta2(&self) -> f64 {
        self.gen.p_max.max(self.load.p_max) + self.batt.p_max
    }

    /// Largest export the system can deliver in one step.
    pub fn max_export(&self) -> f64 {
        self.gen.p_max + self.batt.p_max
    }

    /// Largest import the system can absorb in one step (as a positive number).
    pub fn max_import(&self) -> f64 {
        self.load.p_max + self.batt.p_max
    }
}

/// Raw SoC recursion, no clamping. `p_charge <= 0`, `p_discharge >= 0`.
pub fn soc_step(
    batt: &BatteryParams,
    e: SocState,
    p_charge: f64,
    p_discharge: f64,
    dt: f64,
) -> SocState {
    let drained = batt.eta_c * p_charge + p_discharge / batt.eta_d;
    SocState(e.0 - drained * dt / batt.energy_capacity)
}

/// Total HES output: generation minus load plus net battery power.
pub fn hes_output(step: &DispatchStep) -> f64 {
    step.p_gen - step.p_load + step.p_discharge + step.p_charge
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    GeneratorLower,
    GeneratorUpper,
    LoadLower,
    LoadUpper,
    DischargeLower,
    DischargeUpper,
    ChargeUpper,
    ChargeLower,
    Complementarity,
    SocLower,
    SocUpper,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feasibility {
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, v: Violation) -> bool {
        self.violations.contains(&v)
    }
}

/// Checks one step against the generator, load, battery power,
/// complementarity and SoC constraints. The cached `p_hes` is not checked.
pub fn check_step_feasible(cfg: &HesConfig, step: &DispatchStep, e_next: SocState) -> Feasibility {
    use Violation::*;
    let mut violations = Vec::new();
    let mut flag = |cond: bool, v: Violation| {
        if cond {
            violations.push(v);
        }
    };
    flag(step.p_gen < cfg.gen.p_min - POWER_TOL, GeneratorLower);
    flag(step.p_gen > cfg.gen.p_max + POWER_TOL, GeneratorUpper);
    flag(step.p_load < -POWER_TOL, LoadLower);
    flag(step.p_load > cfg.load.p_max + POWER_TOL, LoadUpper);
    flag(step.p_discharge < -POWER_TOL, DischargeLower);
    flag(step.p_discharge > cfg.batt.p_max + POWER_TOL, DischargeUpper);
    flag(step.p_charge > POWER_TOL, ChargeUpper);
    flag(step.p_charge < -cfg.batt.p_max - POWER_TOL, ChargeLower);
    flag(
        step.p_charge < -POWER_TOL && step.p_discharge > POWER_TOL,
        Complementarity,
    );
    flag(e_next.0 < cfg.batt.soc_min - SOC_TOL, SocLower);
    flag(e_next.0 > cfg.batt.soc_max + SOC_TOL, SocUpper);
    Feasibility { violations }
}
