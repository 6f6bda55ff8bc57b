//! Run configuration: one TOML file per experiment, overridable from the
//! command line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hes_regkit::bidding::SweepSpec;
use hes_regkit::scoring::MarketParams;
use hes_regkit::signal::{
    load_archive, synth_archive, SignalArchive, SynthKind, WindowSpec, DEFAULT_HISTOGRAM_BINS,
    DEFAULT_WINDOW_LEN,
};
use hes_regkit::HesConfig;
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = r#"# hes-regkit run configuration (TOML). Units: MW, MWh, hours; SoC in p.u.
# Every section except [signal] is optional and falls back to the defaults
# shown here. Command-line flags override the file.

out = "out"              # output directory, created if missing
seed = 0                 # seed for synthetic signals

[hes]                    # the hybrid system; all fields required if present
dt = 0.00055555555555555556   # step length (h); also the signal sample period
[hes.gen]
p_max = 3.0
p_min = 0.0              # dispatch requires 0
[hes.load]
p_max = 3.0
[hes.batt]
p_max = 5.0
energy_capacity = 5.0
eta_c = 0.95
eta_d = 0.95
soc_min = 0.1
soc_max = 0.9
soc_init = 0.5

[market]
lambda_c = 1.0           # capacity price ($/MW)
lambda_m = 0.0           # mileage price ($/MW-mile)
x_p_min = 0.75           # minimum performance score   (--xp-min)
gamma = 0.9              # required compliance level   (--gamma)
c_max = 100.0            # largest admissible bid (MW)

[sweep]                  # bid sweep: coarse grid, then bisection to tol
c_lo = 0.25
c_hi = 30.0
step = 0.25
tol = 0.01

[signal]                 # exactly one of `archive` or [signal.synth]
archive = "reg-d/"       # CSV file or directory; relative to this file (--archive)
window_len = 1800        # samples per window
offset = 0               # leading samples skipped (--offset)
# [signal.synth]
# windows = 24
# shape = { kind = "energy-neutral-random", persistence = 0.98, volatility = 0.15 }
# shape = { kind = "drifting", bias = 0.1, persistence = 0.98, volatility = 0.15 }
# shape = { kind = "square-wave", amplitude = 0.8, period = 4 }

[run]
window = 0               # window used by dispatch and soc-drift (--window)
capacity = 12.21         # bid used by dispatch and soc-drift (--capacity)
mode = "both"            # dispatch mode: rt, offline or both (--mode)
vary = "gen"             # asset varied by asym-sweep and soc-drift (--vary)
values = [0.0, 3.0, 5.0] # ratings (MW) for asym-sweep and soc-drift (--values)
# holdout = 0.25         # trailing fraction of windows kept out of bid (--holdout)
bins = 50                # histogram bins for characterize
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rt,
    Offline,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Gen,
    Load,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Gen => "gen",
            Side::Load => "load",
        })
    }
}

impl Side {
    pub fn apply(self, cfg: &HesConfig, value: f64) -> HesConfig {
        let mut out = *cfg;
        match self {
            Side::Gen => out.gen.p_max = value,
            Side::Load => out.load.p_max = value,
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub windows: usize,
    pub shape: SynthKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub archive: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default = "default_window_len")]
    pub window_len: usize,
    #[serde(default)]
    pub offset: usize,
}

fn default_window_len() -> usize {
    DEFAULT_WINDOW_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    #[serde(default)]
    pub window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vary: Option<Side>,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<f64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_mode() -> Mode {
    Mode::Both
}

fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            window: 0,
            capacity: None,
            mode: Mode::Both,
            vary: None,
            values: Vec::new(),
            holdout: None,
            bins: DEFAULT_HISTOGRAM_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "HesConfig::table1")]
    pub hes: HesConfig,
    #[serde(default)]
    pub market: MarketParams,
    #[serde(default)]
    pub sweep: SweepSpec,
    pub signal: SignalConfig,
    #[serde(default)]
    pub run: RunParams,
    #[serde(default = "default_out", skip_serializing)]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub window: Option<usize>,
    pub capacity: Option<f64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub gamma: Option<f64>,
    pub xp_min: Option<f64>,
    pub vary: Option<Side>,
    pub values: Option<Vec<f64>>,
    pub holdout: Option<f64>,
    pub offset: Option<usize>,
    pub archive: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path`, resolving a relative archive path against its directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(a) = cfg.signal.archive.as_mut() {
            if a.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                *a = base.join(&*a);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.window {
            self.run.window = v;
        }
        if let Some(v) = o.capacity {
            self.run.capacity = Some(v);
        }
        if let Some(v) = o.mode {
            self.run.mode = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.gamma {
            self.market.gamma = v;
        }
        if let Some(v) = o.xp_min {
            self.market.x_p_min = v;
        }
        if let Some(v) = o.vary {
            self.run.vary = Some(v);
        }
        if let Some(v) = &o.values {
            self.run.values = v.clone();
        }
        if let Some(v) = o.holdout {
            self.run.holdout = Some(v);
        }
        if let Some(v) = o.offset {
            self.signal.offset = v;
        }
        if let Some(v) = &o.archive {
            self.signal.archive = Some(v.clone());
            self.signal.synth = None;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hes.validate()?;
        self.market.validate()?;
        match (&self.signal.archive, &self.signal.synth) {
            (Some(_), Some(_)) => bail!("[signal] sets both `archive` and `synth`; choose one"),
            (None, None) => bail!("[signal] needs either `archive` or `synth`"),
            _ => {}
        }
        if let Some(h) = self.run.holdout {
            if !(h > 0.0 && h < 1.0) {
                bail!("holdout fraction {h} must lie in (0, 1)");
            }
        }
        Ok(())
    }

    /// Loads or synthesises the signal archive described by `[signal]`.
    pub fn archive(&self) -> Result<SignalArchive> {
        let s = &self.signal;
        if let Some(path) = &s.archive {
            let spec = WindowSpec {
                window_len: s.window_len,
                dt: self.hes.dt,
                offset: s.offset,
            };
            return Ok(load_archive(path, spec)?);
        }
        let synth = s.synth.as_ref().expect("validated signal source");
        if synth.windows == 0 {
            bail!("[signal.synth] windows must be at least 1");
        }
        Ok(synth_archive(
            synth.shape,
            s.window_len,
            self.hes.dt,
            synth.windows,
            self.seed,
        )?)
    }

    pub fn capacity(&self) -> Result<f64> {
        self.run
            .capacity
            .context("no capacity given; set [run] capacity or pass --capacity")
    }

    pub fn vary(&self) -> Result<Side> {
        self.run
            .vary
            .context("no asset to vary; set [run] vary or pass --vary gen|load")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RunConfig {
        toml::from_str("[signal.synth]\nwindows = 2\nshape = { kind = \"square-wave\", amplitude = 0.5, period = 4 }\n")
            .unwrap()
    }

    #[test]
    fn defaults() {
        let c = base();
        assert_eq!(c.hes, HesConfig::table1());
        assert_eq!(c.market, MarketParams::default());
        assert_eq!(c.sweep, SweepSpec::default());
        assert_eq!(c.signal.window_len, 1800);
        assert_eq!(c.run.mode, Mode::Both);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn schema_parses() {
        let c: RunConfig = toml::from_str(SCHEMA).unwrap();
        assert_eq!(c.hes, HesConfig::table1());
        assert_eq!(c.run.values, vec![0.0, 3.0, 5.0]);
        assert_eq!(c.run.capacity, Some(12.21));
    }

    #[test]
    fn flags_override() {
        let mut c = base();
        c.apply(&Overrides {
            gamma: Some(0.8),
            archive: Some("x.csv".into()),
            mode: Some(Mode::Rt),
            ..Overrides::default()
        });
        assert_eq!(c.market.gamma, 0.8);
        assert_eq!(c.run.mode, Mode::Rt);
        assert!(c.signal.synth.is_none());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn one_signal_source() {
        let mut c = base();
        c.signal.archive = Some("a.csv".into());
        assert!(c.validate().is_err());
        c.signal.archive = None;
        c.signal.synth = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1\n[signal]\narchive = \"a\"\n").is_err());
    }
}
