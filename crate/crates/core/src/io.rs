//! File formats: trajectories, fit reports and fit configuration.
//!
//! # Trajectory files
//!
//! A single ASCII header line followed by the payload:
//!
//! ```text
//! ZSTRAJ 1 <binary|text> kind=<target|truth|output> frames=<N> particles=<V> dt=<seconds>\n
//! ```
//!
//! The binary payload is `N·V·3` little-endian `f64` values, frame-major,
//! then particle, then axis. The text payload is one `x y z` line per
//! (frame, particle) in the same order, each value written with 17
//! significant digits so that reading reproduces it exactly. `dt` in the
//! header uses the same 17-digit form.
//!
//! # Fit reports
//!
//! Comma-separated, one record per particle after `#` comment lines:
//!
//! ```text
//! particle,ks,kd,regime,discriminant,final_loss,converged,dropped_frames
//! 0,2.0000000000000000e2,4.0000000000000000e0,underdamped,-7.8400000000000000e2,...,true,3 17 45
//! ```
//!
//! # Fit configuration
//!
//! Flat `key = value` lines mirroring [`FitConfig`]; `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::fitting::{FitConfig, FitResult, GroundTruthTrack};
use crate::kinematics::SampleTrack;
use crate::spring::{RegimeKind, SpringParams};
use crate::Vec3;

const MAGIC: &str = "ZSTRAJ";
const VERSION: &str = "1";
const REPORT_COLUMNS: &str = "particle,ks,kd,regime,discriminant,final_loss,converged,dropped_frames";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} values, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("malformed payload: {0}")]
    MalformedPayload(String),

    #[error("non-finite value at frame {frame}, particle {particle}")]
    NonFinite { frame: usize, particle: usize },

    #[error("malformed fit report at line {line}: {reason}")]
    MalformedReport { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Target,
    Truth,
    Output,
}

impl TrajectoryKind {
    pub fn label(self) -> &'static str {
        match self {
            TrajectoryKind::Target => "target",
            TrajectoryKind::Truth => "truth",
            TrajectoryKind::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target" => Some(TrajectoryKind::Target),
            "truth" => Some(TrajectoryKind::Truth),
            "output" => Some(TrajectoryKind::Output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Binary,
    Text,
}

/// `frames × particles × 3` positions with uniform sample spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    frames: usize,
    particles: usize,
    dt: f64,
    kind: TrajectoryKind,
    data: Vec<f64>,
}

impl TrajectorySet {
    pub fn new(frames: usize, particles: usize, dt: f64, kind: TrajectoryKind, data: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let expected = frames * particles * 3;
        if data.len() != expected {
            return Err(FormatError::TruncatedPayload {
                expected,
                found: data.len(),
            }
            .into());
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                frame: i / (3 * particles),
                particle: (i / 3) % particles,
            }
            .into());
        }
        Ok(Self {
            frames,
            particles,
            dt,
            kind,
            data,
        })
    }

    /// Builds a set from per-particle position sequences of equal length.
    pub fn from_particles(per_particle: &[Vec<Vec3>], dt: f64, kind: TrajectoryKind) -> Result<Self> {
        let particles = per_particle.len();
        let frames = per_particle.first().map_or(0, Vec::len);
        if per_particle.iter().any(|p| p.len() != frames) {
            return Err(Error::Misaligned("particles have different frame counts".into()));
        }
        let mut data = Vec::with_capacity(frames * particles * 3);
        for n in 0..frames {
            for p in per_particle {
                data.extend_from_slice(p[n].as_slice());
            }
        }
        Self::new(frames, particles, dt, kind, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: TrajectoryKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn position(&self, frame: usize, particle: usize) -> Vec3 {
        let i = 3 * (frame * self.particles + particle);
        Vec3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn particle_positions(&self, particle: usize) -> Vec<Vec3> {
        (0..self.frames).map(|n| self.position(n, particle)).collect()
    }

    pub fn track(&self, particle: usize) -> Result<SampleTrack> {
        self.check_particle(particle)?;
        SampleTrack::new(self.particle_positions(particle), self.dt)
    }

    pub fn truth(&self, particle: usize) -> Result<GroundTruthTrack> {
        self.check_particle(particle)?;
        Ok(GroundTruthTrack::new(self.particle_positions(particle)))
    }

    fn check_particle(&self, particle: usize) -> Result<()> {
        if particle >= self.particles {
            return Err(Error::IndexOutOfRange {
                index: particle,
                len: self.particles,
            });
        }
        Ok(())
    }

    pub fn encode(&self, encoding: Encoding) -> Vec<u8> {
        let tag = match encoding {
            Encoding::Binary => "binary",
            Encoding::Text => "text",
        };
        let mut out = format!(
            "{MAGIC} {VERSION} {tag} kind={} frames={} particles={} dt={:.16e}\n",
            self.kind.label(),
            self.frames,
            self.particles,
            self.dt
        )
        .into_bytes();
        match encoding {
            Encoding::Binary => {
                out.reserve(self.data.len() * 8);
                for v in &self.data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Encoding::Text => {
                let mut s = String::with_capacity(self.data.len() * 25);
                for xyz in self.data.chunks_exact(3) {
                    let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", xyz[0], xyz[1], xyz[2]);
                }
                out.extend_from_slice(s.as_bytes());
            }
        }
        out
    }

    /// Parses either encoding, chosen by the header tag.
    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::MalformedHeader("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl])
            .map_err(|_| FormatError::MalformedHeader("header is not ASCII".into()))?;
        let h = Header::parse(header)?;
        let payload = &bytes[nl + 1..];
        let expected = h.frames * h.particles * 3;
        let data = match h.encoding {
            Encoding::Binary => {
                if payload.len() < expected * 8 {
                    return Err(FormatError::TruncatedPayload {
                        expected,
                        found: payload.len() / 8,
                    });
                }
                if payload.len() > expected * 8 {
                    return Err(FormatError::MalformedPayload(format!(
                        "{} trailing bytes after {expected} values",
                        payload.len() - expected * 8
                    )));
                }
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                    .collect::<Vec<_>>()
            }
            Encoding::Text => {
                let text = std::str::from_utf8(payload)
                    .map_err(|_| FormatError::MalformedPayload("text payload is not UTF-8".into()))?;
                let values = text
                    .split_ascii_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .map_err(|_| FormatError::MalformedPayload(format!("bad number {tok:?}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if values.len() < expected {
                    return Err(FormatError::TruncatedPayload {
                        expected,
                        found: values.len(),
                    });
                }
                if values.len() > expected {
                    return Err(FormatError::MalformedPayload(format!(
                        "{} values after the declared {expected}",
                        values.len() - expected
                    )));
                }
                values
            }
        };
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite {
                frame: i / (3 * h.particles),
                particle: (i / 3) % h.particles,
            });
        }
        Ok(Self {
            frames: h.frames,
            particles: h.particles,
            dt: h.dt,
            kind: h.kind,
            data,
        })
    }
}

struct Header {
    encoding: Encoding,
    kind: TrajectoryKind,
    frames: usize,
    particles: usize,
    dt: f64,
}

impl Header {
    fn parse(line: &str) -> Result<Self, FormatError> {
        let bad = |m: String| FormatError::MalformedHeader(m);
        let mut tokens = line.split_ascii_whitespace();
        if tokens.next() != Some(MAGIC) {
            return Err(bad(format!("expected leading {MAGIC:?}")));
        }
        match tokens.next() {
            Some(VERSION) => {}
            other => return Err(bad(format!("unsupported version {other:?}"))),
        }
        let encoding = match tokens.next() {
            Some("binary") => Encoding::Binary,
            Some("text") => Encoding::Text,
            other => return Err(bad(format!("unknown encoding {other:?}"))),
        };
        let (mut kind, mut frames, mut particles, mut dt) = (None, None, None, None);
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {tok:?}")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad {key} {v:?}")));
            match key {
                "kind" => kind = Some(TrajectoryKind::parse(value).ok_or_else(|| bad(format!("unknown kind {value:?}")))?),
                "frames" => frames = Some(num(value)?),
                "particles" => particles = Some(num(value)?),
                "dt" => dt = Some(value.parse::<f64>().map_err(|_| bad(format!("bad dt {value:?}")))?),
                _ => return Err(bad(format!("unknown field {key:?}"))),
            }
        }
        let missing = |k: &str| bad(format!("missing {k}"));
        let dt = dt.ok_or_else(|| missing("dt"))?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(bad(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            encoding,
            kind: kind.ok_or_else(|| missing("kind"))?,
            frames: frames.ok_or_else(|| missing("frames"))?,
            particles: particles.ok_or_else(|| missing("particles"))?,
            dt,
        })
    }
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<TrajectorySet> {
    let bytes = fs::read(path).map_err(FormatError::from)?;
    Ok(TrajectorySet::decode(&bytes)?)
}

pub fn write_trajectory(path: impl AsRef<Path>, set: &TrajectorySet, encoding: Encoding) -> Result<()> {
    let mut f = fs::File::create(path).map_err(FormatError::from)?;
    f.write_all(&set.encode(encoding)).map_err(FormatError::from)?;
    Ok(())
}

/// One particle's line in a fit report.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub particle: usize,
    pub params: SpringParams,
    pub regime: RegimeKind,
    pub discriminant: f64,
    pub final_loss: f64,
    pub converged: bool,
    pub dropped_frames: Vec<usize>,
}

impl FitRecord {
    pub fn from_result(particle: usize, r: &FitResult) -> Self {
        Self {
            particle,
            params: r.params,
            regime: r.regime.kind,
            discriminant: r.params.discriminant(),
            final_loss: r.final_loss,
            converged: r.converged,
            dropped_frames: r.dropped_frames.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub records: Vec<FitRecord>,
}

impl FitReport {
    pub fn record(&self, particle: usize) -> Option<&FitRecord> {
        self.records.iter().find(|r| r.particle == particle)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# zerospring fit report v1\n");
        s.push_str("# last-sample tangent: one-sided difference\n");
        s.push_str(REPORT_COLUMNS);
        s.push('\n');
        for r in &self.records {
            let dropped: Vec<String> = r.dropped_frames.iter().map(ToString::to_string).collect();
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{},{}",
                r.particle,
                r.params.ks,
                r.params.kd,
                r.regime.label(),
                r.discriminant,
                r.final_loss,
                r.converged,
                dropped.join(" ")
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut records: Vec<FitRecord> = Vec::new();
        let mut seen_columns = false;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let bad = |reason: String| FormatError::MalformedReport { line: lineno, reason };
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !seen_columns {
                if line != REPORT_COLUMNS {
                    return Err(bad("missing column header".into()));
                }
                seen_columns = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(bad(format!("expected 8 fields, got {}", fields.len())));
            }
            let float = |k: usize| {
                fields[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad(format!("bad number {:?}", fields[k])))
            };
            let particle = fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("bad particle id {:?}", fields[0])))?;
            let params = SpringParams::new(float(1)?, float(2)?).map_err(|e| bad(e.to_string()))?;
            let regime = RegimeKind::from_label(fields[3].trim())
                .ok_or_else(|| bad(format!("unknown regime {:?}", fields[3])))?;
            let converged = match fields[6].trim() {
                "true" => true,
                "false" => false,
                other => return Err(bad(format!("bad converged flag {other:?}"))),
            };
            let dropped_frames = fields[7]
                .split_ascii_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| bad(format!("bad frame index {t:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if records.iter().any(|r| r.particle == particle) {
                return Err(bad(format!("duplicate particle id {particle}")));
            }
            records.push(FitRecord {
                particle,
                params,
                regime,
                discriminant: float(4)?,
                final_loss: float(5)?,
                converged,
                dropped_frames,
            });
        }
        if !seen_columns {
            return Err(FormatError::MalformedReport {
                line: 0,
                reason: "empty report".into(),
            });
        }
        Ok(Self { records })
    }
}

pub fn read_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let text = fs::read_to_string(path).map_err(FormatError::from)?;
    Ok(FitReport::parse(&text)?)
}

pub fn write_fit_report(path: impl AsRef<Path>, report: &FitReport) -> Result<()> {
    fs::write(path, report.to_text()).map_err(FormatError::from)?;
    Ok(())
}

/// Applies `key = value` lines on top of `base`.
pub fn parse_config(text: &str, base: FitConfig) -> Result<FitConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| Error::Config(format!("line {}: {m}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let float = || value.parse::<f64>().map_err(|_| bad(format!("{key}: bad number {value:?}")));
        let count = || value.parse::<usize>().map_err(|_| bad(format!("{key}: bad count {value:?}")));
        match key {
            "ga_population" => cfg.ga_population = count()?,
            "ga_iterations" => cfg.ga_iterations = count()?,
            "gd_iterations" => cfg.gd_iterations = count()?,
            "gd_step" => cfg.gd_step = float()?,
            "log_space" => {
                cfg.log_space = value
                    .parse::<bool>()
                    .map_err(|_| bad(format!("log_space: expected true/false, got {value:?}")))?
            }
            "ks_min" => cfg.bounds.ks_min = float()?,
            "ks_max" => cfg.bounds.ks_max = float()?,
            "kd_min" => cfg.bounds.kd_min = float()?,
            "kd_max" => cfg.bounds.kd_max = float()?,
            "drop_fraction" => cfg.drop_fraction = float()?,
            "regularization_weight" => cfg.regularization_weight = float()?,
            "seed" => cfg.seed = value.parse::<u64>().map_err(|_| bad(format!("seed: bad value {value:?}")))?,
            "tournament_size" => cfg.tournament_size = count()?,
            "mutation_sigma" => cfg.mutation_sigma = float()?,
            _ => return Err(bad(format!("unknown key {key:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<FitConfig> {
    let text = fs::read_to_string(path).map_err(FormatError::from)?;
    parse_config(&text, FitConfig::default())
}

/// Writes `cfg` in the `key = value` form accepted by [`parse_config`].
pub fn config_to_text(cfg: &FitConfig) -> String {
    let b = &cfg.bounds;
    format!(
        "ga_population = {}\nga_iterations = {}\ngd_iterations = {}\ngd_step = {:e}\nlog_space = {}\n\
         ks_min = {:e}\nks_max = {:e}\nkd_min = {:e}\nkd_max = {:e}\ndrop_fraction = {}\n\
         regularization_weight = {:e}\nseed = {}\ntournament_size = {}\nmutation_sigma = {}\n",
        cfg.ga_population,
        cfg.ga_iterations,
        cfg.gd_iterations,
        cfg.gd_step,
        cfg.log_space,
        b.ks_min,
        b.ks_max,
        b.kd_min,
        b.kd_max,
        cfg.drop_fraction,
        cfg.regularization_weight,
        cfg.seed,
        cfg.tournament_size,
        cfg.mutation_sigma
    )
}

/// Per-frame displacement norms `‖other - reference‖` for every particle.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementTable {
    pub listed: Vec<usize>,
    /// Per frame: mean over all particles, then one value per listed particle.
    pub rows: Vec<(f64, Vec<f64>)>,
    /// Sum of squared norms over all frames and particles.
    pub sum_sq: f64,
    /// Root mean square of the norms over all frames and particles.
    pub rms: f64,
}

pub fn displacement_table(reference: &TrajectorySet, other: &TrajectorySet, listed: &[usize]) -> Result<DisplacementTable> {
    if reference.frames() != other.frames() || reference.particles() != other.particles() {
        return Err(Error::Misaligned(format!(
            "{}x{} vs {}x{} frames x particles",
            reference.frames(),
            reference.particles(),
            other.frames(),
            other.particles()
        )));
    }
    if let Some(&bad) = listed.iter().find(|&&v| v >= reference.particles()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: reference.particles(),
        });
    }
    let v = reference.particles();
    let mut rows = Vec::with_capacity(reference.frames());
    let mut sq = 0.0;
    for n in 0..reference.frames() {
        let norms: Vec<f64> = (0..v)
            .map(|i| (other.position(n, i) - reference.position(n, i)).norm())
            .collect();
        sq += norms.iter().map(|d| d * d).sum::<f64>();
        let mean = if v == 0 { 0.0 } else { norms.iter().sum::<f64>() / v as f64 };
        rows.push((mean, listed.iter().map(|&i| norms[i]).collect()));
    }
    let count = (reference.frames() * v).max(1) as f64;
    Ok(DisplacementTable {
        listed: listed.to_vec(),
        rows,
        sum_sq: sq,
        rms: (sq / count).sqrt(),
    })
}

/// Eval CSV: `frame, mean_disp, disp_<i>...` and, with `err`, the same
/// columns for the error against truth (`mean_err, err_<i>...`).
pub fn eval_csv(disp: &DisplacementTable, err: Option<&DisplacementTable>) -> String {
    let mut s = String::from("frame,mean_disp");
    for v in &disp.listed {
        let _ = write!(s, ",disp_{v}");
    }
    if let Some(e) = err {
        s.push_str(",mean_err");
        for v in &e.listed {
            let _ = write!(s, ",err_{v}");
        }
    }
    s.push('\n');
    for (n, (mean, per)) in disp.rows.iter().enumerate() {
        let _ = write!(s, "{n},{mean:.16e}");
        for d in per {
            let _ = write!(s, ",{d:.16e}");
        }
        if let Some((mean, per)) = err.map(|e| &e.rows[n]) {
            let _ = write!(s, ",{mean:.16e}");
            for d in per {
                let _ = write!(s, ",{d:.16e}");
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_set() -> TrajectorySet {
        let data: Vec<f64> = (0..2 * 3 * 3).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        TrajectorySet::new(2, 3, 1.0 / 30.0, TrajectoryKind::Target, data).unwrap()
    }

    #[test]
    fn minimal_text_file() {
        let text = "ZSTRAJ 1 text kind=target frames=2 particles=1 dt=0.03333333333333333\n0 0 0\n0 0 0\n";
        let set = TrajectorySet::decode(text.as_bytes()).unwrap();
        assert_eq!((set.frames(), set.particles()), (2, 1));
        assert_eq!(set.dt(), 1.0 / 30.0);
        let track = set.track(0).unwrap();
        assert_eq!(track.positions(), &[Vec3::zeros(), Vec3::zeros()]);
    }

    #[test]
    fn binary_bytes_round_trip() {
        let bytes = sample_set().encode(Encoding::Binary);
        let back = TrajectorySet::decode(&bytes).unwrap();
        assert_eq!(back, sample_set());
        assert_eq!(back.encode(Encoding::Binary), bytes);
    }

    #[test]
    fn distinct_diagnostics() {
        let bytes = sample_set().encode(Encoding::Binary);
        assert!(matches!(
            TrajectorySet::decode(&bytes[..bytes.len() - 8]),
            Err(FormatError::TruncatedPayload { expected: 18, found: 17 })
        ));
        let text = "ZSTRAJ 1 text kind=truth frames=2 particles=1 dt=0.1\n0 0 0\n0 0\n";
        assert!(matches!(
            TrajectorySet::decode(text.as_bytes()),
            Err(FormatError::TruncatedPayload { expected: 6, found: 5 })
        ));
        let text = "ZSTRAJ 1 text kind=truth frames=2 particles=1 dt=0.1\n0 0 0\n0 NaN 0\n";
        assert!(matches!(
            TrajectorySet::decode(text.as_bytes()),
            Err(FormatError::NonFinite { frame: 1, particle: 0 })
        ));
        for header in [
            "ZSTRAJ 2 text kind=truth frames=1 particles=1 dt=0.1",
            "ZSTRAJ 1 text kind=truth frames=1 particles=1",
            "ZSTRAJ 1 text kind=truth frames=1 particles=1 dt=-1",
            "ZSTRAJ 1 csv kind=truth frames=1 particles=1 dt=0.1",
            "TRAJ 1 text kind=truth frames=1 particles=1 dt=0.1",
        ] {
            let f = format!("{header}\n0 0 0\n");
            assert!(
                matches!(TrajectorySet::decode(f.as_bytes()), Err(FormatError::MalformedHeader(_))),
                "{header}"
            );
        }
        let text = "ZSTRAJ 1 text kind=truth frames=1 particles=1 dt=0.1\n0 0 0 0\n";
        assert!(matches!(
            TrajectorySet::decode(text.as_bytes()),
            Err(FormatError::MalformedPayload(_))
        ));
    }

    proptest! {
        #[test]
        fn both_encodings_round_trip_exactly(
            frames in 1usize..5,
            particles in 1usize..4,
            dt in 1e-4f64..10.0,
            seed in proptest::collection::vec(-1e6f64..1e6, 60),
        ) {
            let data: Vec<f64> = (0..frames * particles * 3).map(|i| seed[i % 60] * (1.0 + i as f64).sqrt()).collect();
            let set = TrajectorySet::new(frames, particles, dt, TrajectoryKind::Output, data).unwrap();
            for enc in [Encoding::Binary, Encoding::Text] {
                let back = TrajectorySet::decode(&set.encode(enc)).unwrap();
                prop_assert_eq!(&back, &set);
            }
        }
    }

    #[test]
    fn report_round_trip_and_validation() {
        let report = FitReport {
            records: vec![
                FitRecord {
                    particle: 3,
                    params: SpringParams::new(200.0 / 3.0, 4.1).unwrap(),
                    regime: RegimeKind::Underdamped,
                    discriminant: 4.1 * 4.1 - 800.0 / 3.0,
                    final_loss: 1.25e-7,
                    converged: true,
                    dropped_frames: vec![1, 7, 9],
                },
                FitRecord {
                    particle: 0,
                    params: SpringParams::new(1.0, 3.0).unwrap(),
                    regime: RegimeKind::Overdamped,
                    discriminant: 5.0,
                    final_loss: 0.0,
                    converged: false,
                    dropped_frames: vec![],
                },
            ],
        };
        let back = FitReport::parse(&report.to_text()).unwrap();
        assert_eq!(back, report);

        let dup = report.to_text() + "3,1e0,1e0,critical,0,0,true,\n";
        assert!(FitReport::parse(&dup).is_err());
        assert!(FitReport::parse("").is_err());
    }

    #[test]
    fn config_parsing() {
        let cfg = parse_config(
            "# comment\nga_population = 16\nlog_space=false\nks_max = 500 # trailing\nseed = 9\n",
            FitConfig::default(),
        )
        .unwrap();
        assert_eq!(cfg.ga_population, 16);
        assert!(!cfg.log_space);
        assert_eq!(cfg.bounds.ks_max, 500.0);
        assert_eq!(cfg.seed, 9);
        assert!(parse_config("bogus = 1", FitConfig::default()).is_err());
        assert!(parse_config("drop_fraction = 1.5", FitConfig::default()).is_err());
        assert!(parse_config("gd_step", FitConfig::default()).is_err());
        let round = parse_config(&config_to_text(&cfg), FitConfig::default()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn displacement_mean_is_average_of_norms() {
        let a = sample_set();
        let data: Vec<f64> = a.data().iter().enumerate().map(|(i, v)| v + (i % 5) as f64 * 0.1).collect();
        let b = TrajectorySet::new(2, 3, a.dt(), TrajectoryKind::Output, data).unwrap();
        let t = displacement_table(&a, &b, &[0, 2]).unwrap();
        for (n, (mean, listed)) in t.rows.iter().enumerate() {
            let norms: Vec<f64> = (0..3).map(|i| (b.position(n, i) - a.position(n, i)).norm()).collect();
            assert!((mean - norms.iter().sum::<f64>() / 3.0).abs() < 1e-15);
            assert_eq!(listed, &vec![norms[0], norms[2]]);
        }
        assert!(eval_csv(&t, None).starts_with("frame,mean_disp,disp_0,disp_2\n0,"));
        assert!(eval_csv(&t, Some(&t)).starts_with("frame,mean_disp,disp_0,disp_2,mean_err,err_0,err_2\n"));
        assert!(displacement_table(&a, &b, &[3]).is_err());
    }
}
