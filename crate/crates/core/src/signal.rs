//! Regulation-signal windows: ingestion from CSV, synthetic generators and
//! the per-window statistics (net energy `W`, worst-case drift `W∞` and
//! mileage).

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fmt::g17;

/// Two-second sampling expressed in hours.
pub const DEFAULT_DT: f64 = 1.0 / 1800.0;
/// Samples per hour at the default step.
pub const DEFAULT_WINDOW_LEN: usize = 1800;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{path}:{line}: sample {value} outside [-1, 1]")]
    Range { path: PathBuf, line: u64, value: f64 },
    #[error("archive {0} holds no complete window")]
    EmptyArchive(String),
    #[error("invalid signal: {0}")]
    Invalid(String),
}

/// One operational window of normalized regulation samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegSignal {
    samples: Vec<f64>,
    dt: f64,
}

impl RegSignal {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self, SignalError> {
        if samples.len() < 2 {
            return Err(SignalError::Invalid(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SignalError::Invalid(format!("step {dt} must be positive")));
        }
        if let Some((k, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(SignalError::Invalid(format!("sample {k} = {v} outside [-1, 1]")));
        }
        Ok(RegSignal { samples, dt })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// L1 norm of the samples.
    pub fn l1(&self) -> f64 {
        self.samples.iter().map(|r| r.abs()).sum()
    }

    pub fn negated(&self) -> RegSignal {
        RegSignal {
            samples: self.samples.iter().map(|r| -r).collect(),
            dt: self.dt,
        }
    }
}

/// Historical windows with a common length and step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalArchive {
    windows: Vec<RegSignal>,
    label: String,
}

impl SignalArchive {
    pub fn new(windows: Vec<RegSignal>, label: impl Into<String>) -> Result<Self, SignalError> {
        let label = label.into();
        let first = windows
            .first()
            .ok_or_else(|| SignalError::EmptyArchive(label.clone()))?;
        let (n, dt) = (first.len(), first.dt());
        if let Some(i) = windows.iter().position(|w| w.len() != n || w.dt() != dt) {
            return Err(SignalError::Invalid(format!(
                "window {i} differs in length or step from window 0"
            )));
        }
        Ok(SignalArchive { windows, label })
    }

    pub fn windows(&self) -> &[RegSignal] {
        &self.windows
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.windows[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.windows[0].dt()
    }

    /// Splits off the trailing `fraction` of windows (at least one kept on each
    /// side). Returns `None` when the archive is too small to split.
    pub fn split_holdout(&self, fraction: f64) -> Option<(SignalArchive, SignalArchive)> {
        let h = self.windows.len();
        let held = ((h as f64) * fraction).round() as usize;
        if held == 0 || held >= h {
            return None;
        }
        let (train, test) = self.windows.split_at(h - held);
        Some((
            SignalArchive::new(train.to_vec(), format!("{}[train]", self.label)).ok()?,
            SignalArchive::new(test.to_vec(), format!("{}[holdout]", self.label)).ok()?,
        ))
    }
}

/// How a sample stream is cut into windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub window_len: usize,
    pub dt: f64,
    /// Number of leading samples skipped before the first window.
    pub offset: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_len: DEFAULT_WINDOW_LEN,
            dt: DEFAULT_DT,
            offset: 0,
        }
    }
}

/// Reads the `timestamp,r` samples of one CSV stream.
pub fn read_samples<R: Read>(reader: R, path: &Path) -> Result<Vec<f64>, SignalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let parse_err = |line: u64, msg: String| SignalError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "r" {
        return Err(parse_err(
            1,
            format!("expected header `timestamp,r`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec[0].is_empty() {
            return Err(parse_err(line, "empty timestamp".into()));
        }
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(line, format!("`{}` is not a number", &rec[1])))?;
        if !(value.is_finite() && (-1.0..=1.0).contains(&value)) {
            return Err(SignalError::Range {
                path: path.to_path_buf(),
                line,
                value,
            });
        }
        out.push(value);
    }
    Ok(out)
}

/// CSV files the path resolves to: itself, or the sorted `*.csv` entries of
/// a directory.
pub fn archive_files(path: &Path) -> Result<Vec<PathBuf>, SignalError> {
    let io_err = |source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let meta = std::fs::metadata(path).map_err(io_err)?;
    if !meta.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a CSV file (or a directory of them, concatenated in lexicographic
/// order) and partitions the samples into consecutive windows. A trailing
/// partial window is dropped.
pub fn load_archive(path: &Path, spec: WindowSpec) -> Result<SignalArchive, SignalError> {
    if spec.window_len < 2 {
        return Err(SignalError::Invalid("window length must be at least 2".into()));
    }
    let mut samples = Vec::new();
    for file in archive_files(path)? {
        let f = File::open(&file).map_err(|source| SignalError::Io {
            path: file.clone(),
            source,
        })?;
        samples.extend(read_samples(io::BufReader::new(f), &file)?);
    }
    let windows = samples
        .get(spec.offset.min(samples.len())..)
        .unwrap_or_default()
        .chunks_exact(spec.window_len)
        .map(|chunk| RegSignal::new(chunk.to_vec(), spec.dt))
        .collect::<Result<Vec<_>, _>>()?;
    if windows.is_empty() {
        return Err(SignalError::EmptyArchive(path.display().to_string()));
    }
    SignalArchive::new(windows, path.display().to_string())
}

/// Writes samples as `timestamp,r` with integer step indices.
pub fn write_samples<W: Write>(mut w: W, samples: impl IntoIterator<Item = f64>) -> io::Result<()> {
    writeln!(w, "timestamp,r")?;
    for (k, r) in samples.into_iter().enumerate() {
        writeln!(w, "{k},{}", g17(r))?;
    }
    Ok(())
}

/// Writes every window of an archive back to back.
pub fn write_archive<W: Write>(w: W, arch: &SignalArchive) -> io::Result<()> {
    write_samples(
        w,
        arch.windows().iter().flat_map(|s| s.samples().iter().copied()),
    )
}

/// Total variation of the signal.
pub fn mileage(sig: &RegSignal) -> f64 {
    sig.samples().windows(2).map(|p| (p[1] - p[0]).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    /// Net energy per MW of capacity (MWh).
    pub w: f64,
    /// Largest absolute prefix energy per MW of capacity (MWh).
    pub w_inf: f64,
    pub mileage: f64,
}

pub fn energy_stats(sig: &RegSignal) -> SignalStats {
    let mut cum = 0.0_f64;
    let mut w_inf = 0.0_f64;
    for r in sig.samples() {
        cum += r * sig.dt();
        w_inf = w_inf.max(cum.abs());
    }
    SignalStats {
        w: cum,
        w_inf,
        mileage: mileage(sig),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Uniform bins over `[lo, hi]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn of(values: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for v in values {
            let idx = if width > 0.0 {
                (((v - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            counts[idx] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + width * bin as f64, self.lo + width * (bin + 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveStats {
    pub per_window: Vec<SignalStats>,
    pub w: Summary,
    pub w_inf: Summary,
    pub mileage: Summary,
    pub w_histogram: Histogram,
    pub w_inf_histogram: Histogram,
}

pub fn archive_stats(arch: &SignalArchive, bins: usize) -> ArchiveStats {
    let per_window: Vec<SignalStats> = arch.windows().par_iter().map(energy_stats).collect();
    let ws: Vec<f64> = per_window.iter().map(|s| s.w).collect();
    let winfs: Vec<f64> = per_window.iter().map(|s| s.w_inf).collect();
    let ms: Vec<f64> = per_window.iter().map(|s| s.mileage).collect();
    ArchiveStats {
        w: Summary::of(&ws),
        w_inf: Summary::of(&winfs),
        mileage: Summary::of(&ms),
        w_histogram: Histogram::of(&ws, bins),
        w_inf_histogram: Histogram::of(&winfs, bins),
        per_window,
    }
}

/// Synthetic signal families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynthKind {
    /// Clamped AR(1) noise with its mean removed, so `W` is zero up to
    /// rounding.
    EnergyNeutralRandom {
        #[serde(default = "default_persistence")]
        persistence: f64,
        #[serde(default = "default_volatility")]
        volatility: f64,
    },
    /// AR(1) noise around a constant bias, clamped to [-1, 1].
    Drifting {
        bias: f64,
        #[serde(default = "default_persistence")]
        persistence: f64,
        #[serde(default = "default_volatility")]
        volatility: f64,
    },
    /// `+amplitude` for the first half of each period, `-amplitude` after.
    SquareWave { amplitude: f64, period: usize },
}

fn default_persistence() -> f64 {
    0.98
}

fn default_volatility() -> f64 {
    0.15
}

impl SynthKind {
    pub fn neutral() -> Self {
        SynthKind::EnergyNeutralRandom {
            persistence: default_persistence(),
            volatility: default_volatility(),
        }
    }

    fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: String| Err(SignalError::Invalid(m));
        let check_ar = |phi: f64, sigma: f64| {
            if !(0.0..1.0).contains(&phi) {
                return bad(format!("persistence {phi} outside [0, 1)"));
            }
            if !(sigma.is_finite() && sigma >= 0.0) {
                return bad(format!("volatility {sigma} must be >= 0"));
            }
            Ok(())
        };
        match *self {
            SynthKind::EnergyNeutralRandom {
                persistence,
                volatility,
            } => check_ar(persistence, volatility),
            SynthKind::Drifting {
                bias,
                persistence,
                volatility,
            } => {
                if !(-1.0..=1.0).contains(&bias) {
                    return bad(format!("bias {bias} outside [-1, 1]"));
                }
                check_ar(persistence, volatility)
            }
            SynthKind::SquareWave { amplitude, period } => {
                if !(0.0..=1.0).contains(&amplitude) {
                    return bad(format!("amplitude {amplitude} outside [0, 1]"));
                }
                if period < 2 {
                    return bad(format!("period {period} must be at least 2"));
                }
                Ok(())
            }
        }
    }

    fn generate(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        // uniform innovations scaled to unit variance
        let ar = |phi: f64, sigma: f64, rng: &mut ChaCha8Rng| {
            let mut x: f64 = rng.gen_range(-0.5..0.5);
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                out.push(x.clamp(-1.0, 1.0));
                let eps: f64 = rng.gen_range(-1.0..1.0) * 3f64.sqrt();
                x = (phi * x + sigma * eps).clamp(-1.0, 1.0);
            }
            out
        };
        match *self {
            SynthKind::EnergyNeutralRandom {
                persistence,
                volatility,
            } => {
                let mut x = ar(persistence, volatility, rng);
                let mean = x.iter().sum::<f64>() / n as f64;
                x.iter_mut().for_each(|v| *v -= mean);
                let peak = x.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
                x.iter_mut().for_each(|v| *v = (*v / peak).clamp(-1.0, 1.0));
                x
            }
            SynthKind::Drifting {
                bias,
                persistence,
                volatility,
            } => ar(persistence, volatility, rng)
                .into_iter()
                .map(|v| (bias + v).clamp(-1.0, 1.0))
                .collect(),
            SynthKind::SquareWave { amplitude, period } => (0..n)
                .map(|k| if k % period < period / 2 { amplitude } else { -amplitude })
                .collect(),
        }
    }
}

/// Deterministic synthetic window.
pub fn synth_signal(kind: SynthKind, n: usize, dt: f64, seed: u64) -> Result<RegSignal, SignalError> {
    kind.validate()?;
    if n < 2 {
        return Err(SignalError::Invalid(format!("need at least 2 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RegSignal::new(kind.generate(n, &mut rng), dt)
}

/// `windows` consecutive synthetic windows drawn from one seeded stream.
pub fn synth_archive(
    kind: SynthKind,
    n: usize,
    dt: f64,
    windows: usize,
    seed: u64,
) -> Result<SignalArchive, SignalError> {
    kind.validate()?;
    if n < 2 {
        return Err(SignalError::Invalid(format!("need at least 2 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigs = (0..windows)
        .map(|_| RegSignal::new(kind.generate(n, &mut rng), dt))
        .collect::<Result<Vec<_>, _>>()?;
    SignalArchive::new(sigs, format!("synthetic:{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn sig(v: &[f64], dt: f64) -> RegSignal {
        RegSignal::new(v.to_vec(), dt).unwrap()
    }

    #[test]
    fn mileage_examples() {
        assert_eq!(mileage(&sig(&[0.0, 1.0, -1.0], 1.0)), 3.0);
        assert_eq!(mileage(&sig(&[0.3; 10], 1.0)), 0.0);
        assert_eq!(mileage(&sig(&[-1.0, 1.0, -1.0, 1.0], 1.0)), 6.0);
    }

    #[test]
    fn energy_stats_examples() {
        let s = energy_stats(&sig(&[1.0; 1800], 1.0 / 1800.0));
        assert!((s.w - 1.0).abs() < 1e-12 && (s.w_inf - 1.0).abs() < 1e-12);
        let s = energy_stats(&sig(&[1.0, -1.0], 0.5));
        assert_eq!((s.w, s.w_inf), (0.0, 0.5));
        let s = energy_stats(&sig(&[-0.5, -0.5, 1.0], 1.0));
        assert_eq!((s.w, s.w_inf), (0.0, 1.0));
    }

    #[test]
    fn signal_rejects_bad_input() {
        assert!(RegSignal::new(vec![0.0], 1.0).is_err());
        assert!(RegSignal::new(vec![0.0, 1.2], 1.0).is_err());
        assert!(RegSignal::new(vec![0.0, 0.1], 0.0).is_err());
        assert!(RegSignal::new(vec![0.0, f64::NAN], 1.0).is_err());
    }

    #[test]
    fn square_wave_example() {
        let s = synth_signal(SynthKind::SquareWave { amplitude: 1.0, period: 2 }, 4, 1.0, 0).unwrap();
        assert_eq!(s.samples(), &[1.0, -1.0, 1.0, -1.0]);
        assert!(synth_signal(SynthKind::SquareWave { amplitude: 1.0, period: 1 }, 4, 1.0, 0).is_err());
        assert!(synth_signal(SynthKind::neutral(), 1, 1.0, 0).is_err());
    }

    #[test]
    fn drifting_has_bias() {
        let kind = SynthKind::Drifting {
            bias: 0.4,
            persistence: 0.9,
            volatility: 0.05,
        };
        let s = synth_signal(kind, 3600, DEFAULT_DT, 3).unwrap();
        assert!(energy_stats(&s).w > 0.3);
    }

    #[test]
    fn archive_stats_examples() {
        let a = sig(&[0.2, -0.1, 0.4], 0.5);
        let arch = SignalArchive::new(vec![a.clone(), a.clone()], "t").unwrap();
        let st = archive_stats(&arch, 50);
        assert_eq!(st.w.std, 0.0);
        assert_eq!(st.per_window.len(), 2);
        assert_eq!(st.w_histogram.counts.iter().sum::<usize>(), 2);

        let single = SignalArchive::new(vec![a.clone()], "t").unwrap();
        let st = archive_stats(&single, 50);
        assert_eq!(st.w.mean, energy_stats(&a).w);
    }

    #[test]
    fn histogram_bins_cover_range() {
        let h = Histogram::of(&[0.0, 0.5, 1.0, 1.0], 4);
        assert_eq!(h.counts, vec![1, 0, 1, 2]);
        assert_eq!(h.edges(3), (0.75, 1.0));
    }

    fn csv_rows(values: &[f64]) -> String {
        let mut buf = Vec::new();
        write_samples(&mut buf, values.iter().copied()).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn load_archive_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let vals: Vec<f64> = (0..3600).map(|k| ((k as f64) * 0.01).sin()).collect();
        std::fs::write(&path, csv_rows(&vals)).unwrap();
        let arch = load_archive(&path, WindowSpec::default()).unwrap();
        assert_eq!(arch.len(), 2);
        assert_eq!(arch.windows()[1].samples()[0], vals[1800]);

        let off = load_archive(&path, WindowSpec { offset: 10, ..Default::default() }).unwrap();
        assert_eq!(off.len(), 1);
        assert_eq!(off.windows()[0].samples()[0], vals[10]);

        std::fs::write(&path, csv_rows(&vals[..1799])).unwrap();
        assert!(matches!(
            load_archive(&path, WindowSpec::default()),
            Err(SignalError::EmptyArchive(_))
        ));
    }

    #[test]
    fn load_archive_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "timestamp,r\n# note\n0,0.5\n1,1.2\n").unwrap();
        match load_archive(&path, WindowSpec { window_len: 2, ..Default::default() }) {
            Err(SignalError::Range { line, value, .. }) => {
                assert_eq!(value, 1.2);
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "timestamp,r\n0,abc\n").unwrap();
        assert!(matches!(
            load_archive(&path, WindowSpec { window_len: 2, ..Default::default() }),
            Err(SignalError::Parse { line: 2, .. })
        ));
        std::fs::write(&path, "time,value\n0,0.1\n").unwrap();
        assert!(matches!(
            load_archive(&path, WindowSpec { window_len: 2, ..Default::default() }),
            Err(SignalError::Parse { .. })
        ));
        let missing = dir.path().join("nope.csv");
        let err = load_archive(&missing, WindowSpec::default()).unwrap_err();
        assert!(err.to_string().contains("nope.csv"));
    }

    #[test]
    fn directory_mode_concatenates_sorted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("b.csv"), csv_rows(&[0.3, 0.4])).unwrap();
        std::fs::write(dir.path().join("a.csv"), csv_rows(&[0.1, 0.2])).unwrap();
        std::fs::write(dir.path().join("skip.txt"), "junk").unwrap();
        let arch = load_archive(dir.path(), WindowSpec { window_len: 2, dt: 1.0, offset: 0 }).unwrap();
        assert_eq!(arch.windows()[0].samples(), &[0.1, 0.2]);
        assert_eq!(arch.windows()[1].samples(), &[0.3, 0.4]);
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_archive(SynthKind::neutral(), 300, DEFAULT_DT, 3, 11).unwrap();
        let b = synth_archive(SynthKind::neutral(), 300, DEFAULT_DT, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_archive(SynthKind::neutral(), 300, DEFAULT_DT, 3, 12).unwrap();
        assert_ne!(a, c);
    }

    fn arb_signal() -> impl Strategy<Value = RegSignal> {
        (prop::collection::vec(-1.0f64..=1.0, 2..200), 1e-4f64..1.0)
            .prop_map(|(v, dt)| RegSignal::new(v, dt).unwrap())
    }

    proptest! {
        #[test]
        fn stats_properties(s in arb_signal()) {
            let st = energy_stats(&s);
            prop_assert!(st.mileage >= 0.0);
            prop_assert!(st.w_inf >= st.w.abs());
            let neg = energy_stats(&s.negated());
            prop_assert_eq!(neg.w, -st.w);
            prop_assert_eq!(neg.w_inf, st.w_inf);
            prop_assert_eq!(neg.mileage, st.mileage);
            let constant = s.samples().windows(2).all(|p| p[0] == p[1]);
            prop_assert_eq!(st.mileage == 0.0, constant);
        }

        #[test]
        fn neutral_synth_is_neutral(seed in any::<u64>(), n in 2usize..2000) {
            let s = synth_signal(SynthKind::neutral(), n, DEFAULT_DT, seed).unwrap();
            let st = energy_stats(&s);
            prop_assert!(st.w.abs() <= 0.01 * n as f64 * DEFAULT_DT);
        }

        #[test]
        fn csv_round_trip(v in prop::collection::vec(-1.0f64..=1.0, 2..100)) {
            let text = csv_rows(&v);
            let back = read_samples(Cursor::new(text.as_bytes()), Path::new("mem")).unwrap();
            prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            let arch = SignalArchive::new(vec![RegSignal::new(v.clone(), 1.0).unwrap()], "m").unwrap();
            let mut again = Vec::new();
            write_archive(&mut again, &arch).unwrap();
            prop_assert_eq!(String::from_utf8(again).unwrap(), text);
        }
    }
}
