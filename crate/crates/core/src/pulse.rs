//! Piecewise-constant FM/AM pulse programs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TWO_PI;

/// One constant-parameter interval of a pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Seconds, > 0.
    pub duration: f64,
    /// Drive detuning from the carrier, rad/s.
    pub detuning: f64,
    /// Carrier Rabi frequency, rad/s, ≥ 0.
    pub amplitude: f64,
}

impl Segment {
    pub fn new(duration: f64, detuning: f64, amplitude: f64) -> Result<Self> {
        let seg = Segment {
            duration,
            detuning,
            amplitude,
        };
        seg.validate(0)?;
        Ok(seg)
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation(
                format!("segments[{index}].duration"),
                format!("{} must be positive", self.duration),
            ));
        }
        if !self.detuning.is_finite() {
            return Err(Error::validation(
                format!("segments[{index}].detuning"),
                "must be finite",
            ));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::validation(
                format!("segments[{index}].amplitude"),
                format!("{} must be non-negative", self.amplitude),
            ));
        }
        Ok(())
    }
}

/// Ordered segments plus a global amplitude multiplier.
///
/// The effective Rabi frequency of segment `i` is `scale * amplitude_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    segments: Vec<Segment>,
    scale: f64,
}

impl PulseProgram {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        Self::with_scale(segments, 1.0)
    }

    pub fn with_scale(segments: Vec<Segment>, scale: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::validation("segments", "a pulse needs at least one segment"));
        }
        for (i, s) in segments.iter().enumerate() {
            s.validate(i)?;
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::validation("scale", format!("{scale} must be non-negative")));
        }
        Ok(PulseProgram { segments, scale })
    }

    /// Equal-duration segments with a common amplitude.
    pub fn uniform(detunings: &[f64], segment_duration: f64, amplitude: f64) -> Result<Self> {
        Self::new(
            detunings
                .iter()
                .map(|&d| Segment {
                    duration: segment_duration,
                    detuning: d,
                    amplitude,
                })
                .collect(),
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Effective Rabi frequency of segment `i`.
    pub fn effective_amplitude(&self, i: usize) -> f64 {
        self.scale * self.segments[i].amplitude
    }

    pub fn max_effective_amplitude(&self) -> f64 {
        (0..self.len())
            .map(|i| self.effective_amplitude(i))
            .fold(0.0, f64::max)
    }

    /// Segment start times; one entry per segment.
    pub fn start_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration;
                start
            })
            .collect()
    }

    /// Same program with the global scale folded into segment amplitudes.
    pub fn normalized(&self) -> PulseProgram {
        PulseProgram {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    amplitude: s.amplitude * self.scale,
                    ..*s
                })
                .collect(),
            scale: 1.0,
        }
    }

    /// `n` back-to-back copies with continuous phase.
    pub fn repeated(&self, n: usize) -> Result<PulseProgram> {
        if n == 0 {
            return Err(Error::validation("repeats", "must be at least 1"));
        }
        let base = self.normalized();
        let mut segments = Vec::with_capacity(base.len() * n);
        for _ in 0..n {
            segments.extend_from_slice(&base.segments);
        }
        PulseProgram::new(segments)
    }

    /// Every segment split into `parts` equal pieces (same integrals).
    pub fn subdivided(&self, parts: usize) -> PulseProgram {
        let parts = parts.max(1);
        let segments = self
            .segments
            .iter()
            .flat_map(|s| {
                std::iter::repeat_n(
                    Segment {
                        duration: s.duration / parts as f64,
                        ..*s
                    },
                    parts,
                )
            })
            .collect();
        PulseProgram {
            segments,
            scale: self.scale,
        }
    }

    /// Copy with a zero-amplitude idle segment of length `idle` in front.
    pub fn with_leading_idle(&self, idle: f64) -> Result<PulseProgram> {
        let mut segments = vec![Segment {
            duration: idle,
            detuning: self.segments[0].detuning,
            amplitude: 0.0,
        }];
        segments.extend_from_slice(&self.segments);
        PulseProgram::with_scale(segments, self.scale)
    }

    /// Whether segment `i` equals segment `S-1-i` for every `i`.
    pub fn is_time_symmetric(&self) -> bool {
        let n = self.segments.len();
        (0..n / 2).all(|i| self.segments[i] == self.segments[n - 1 - i])
    }
}

/// Uniform shift `ε` of every mode frequency, realised on the drive side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningOffset {
    /// rad/s
    pub epsilon: f64,
}

/// `θ_k(t) = ω_k t − ∫₀ᵗ δ(t′)dt′`, evaluated exactly from segment boundaries.
pub fn integrated_phase(pulse: &PulseProgram, mode_freq: f64, t: f64) -> Result<f64> {
    let total = pulse.duration();
    if !(0.0..=total).contains(&t) {
        return Err(Error::Range {
            what: "t",
            value: t,
            min: 0.0,
            max: total,
        });
    }
    let mut phase = 0.0;
    let mut start = 0.0;
    for seg in pulse.segments() {
        let dt = (t - start).min(seg.duration);
        if dt <= 0.0 {
            break;
        }
        phase += (mode_freq - seg.detuning) * dt;
        start += seg.duration;
    }
    Ok(phase)
}

/// Reflect every detuning about `(omega1 + omega2)/2`.
pub fn mirror_pulse(pulse: &PulseProgram, omega1: f64, omega2: f64) -> PulseProgram {
    let axis = omega1 + omega2;
    PulseProgram {
        segments: pulse
            .segments
            .iter()
            .map(|s| Segment {
                detuning: axis - s.detuning,
                ..*s
            })
            .collect(),
        scale: pulse.scale,
    }
}

/// `first` followed by `second`, each source scale folded into its segments.
pub fn concatenate(first: &PulseProgram, second: &PulseProgram) -> PulseProgram {
    let mut segments = first.normalized().segments;
    segments.extend(second.normalized().segments);
    PulseProgram {
        segments,
        scale: 1.0,
    }
}

/// Concatenation of an arbitrary non-empty list.
pub fn concatenate_all(pulses: &[PulseProgram]) -> Result<PulseProgram> {
    let mut iter = pulses.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::validation("pulses", "nothing to concatenate"))?;
    Ok(iter.fold(first.normalized(), |acc, p| concatenate(&acc, p)))
}

/// Multiply the global amplitude scale by `beta`.
pub fn scale_amplitude(pulse: &PulseProgram, beta: f64) -> Result<PulseProgram> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::validation("beta", format!("{beta} must be non-negative")));
    }
    Ok(PulseProgram {
        segments: pulse.segments.clone(),
        scale: pulse.scale * beta,
    })
}

/// `δ_i → δ_i − ε`, equivalent to `ω_k → ω_k + ε` for all modes.
pub fn apply_offset(pulse: &PulseProgram, offset: DetuningOffset) -> PulseProgram {
    PulseProgram {
        segments: pulse
            .segments
            .iter()
            .map(|s| Segment {
                detuning: s.detuning - offset.epsilon,
                ..*s
            })
            .collect(),
        scale: pulse.scale,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub duration_s: f64,
    pub detuning_hz: f64,
    pub amplitude_hz: f64,
}

/// On-disk pulse; cyclic Hz for detuning and amplitude.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseFile {
    pub segments: Vec<SegmentRecord>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl From<&PulseProgram> for PulseFile {
    fn from(p: &PulseProgram) -> Self {
        PulseFile {
            segments: p
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    duration_s: s.duration,
                    detuning_hz: s.detuning / TWO_PI,
                    amplitude_hz: s.amplitude / TWO_PI,
                })
                .collect(),
            scale: p.scale,
        }
    }
}

impl TryFrom<PulseFile> for PulseProgram {
    type Error = Error;

    fn try_from(f: PulseFile) -> Result<Self> {
        PulseProgram::with_scale(
            f.segments
                .into_iter()
                .map(|s| Segment {
                    duration: s.duration_s,
                    detuning: s.detuning_hz * TWO_PI,
                    amplitude: s.amplitude_hz * TWO_PI,
                })
                .collect(),
            f.scale,
        )
    }
}

pub fn pulse_from_json(text: &str, origin: &str) -> Result<PulseProgram> {
    let file: PulseFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    PulseProgram::try_from(file)
}

pub fn load_pulse(path: impl AsRef<Path>) -> Result<PulseProgram> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    pulse_from_json(&text, &path.display().to_string())
}

pub fn save_pulse(pulse: &PulseProgram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&PulseFile::from(pulse)).expect("pulse serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
