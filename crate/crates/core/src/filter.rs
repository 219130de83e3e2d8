//! Filter functions for uniform mode-frequency noise `ω_k → ω_k + δ(t)`.
//!
//! Both filter functions are dimensionless. With a two-sided PSD `S(f)`
//! in rad²/s, the error integrals are
//! `E_ν = ∫ S(f) F_ν(f) / (2πf)² df`, which for `F_Θ ≈ (2πf)² (∂Θ/∂ω)²`
//! reproduces the static-offset limit `ε² (∂Θ/∂ω)²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{cross_pair_integral, IonPair, Trace};
use crate::modes::ModeSpec;
use crate::pulse::PulseProgram;
use crate::{C64, TWO_PI};

/// Relative difference between full-grid and half-grid integrals above
/// which [`SpectralError::warning`] is set.
pub const GRID_TOLERANCE: f64 = 1e-2;

/// `F_α(f)` at each frequency (Hz). Frequencies must be positive.
pub fn ff_alpha(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, freqs: &[f64]) -> Result<Vec<f64>> {
    check_freqs(freqs)?;
    pair.validate(modes)?;
    Ok(freqs.iter().map(|&f| alpha_at(pulse, modes, pair, f)).collect())
}

/// `F_Θ(f)` at each frequency (Hz). Frequencies must be positive.
pub fn ff_theta(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, freqs: &[f64]) -> Result<Vec<f64>> {
    check_freqs(freqs)?;
    pair.validate(modes)?;
    let base: Vec<Option<Trace>> = (0..modes.num_modes())
        .map(|k| (theta_weight(modes, pair, k) != 0.0).then(|| Trace::new(pulse, modes.mode_freq(k))))
        .collect();
    Ok(freqs
        .iter()
        .map(|&f| theta_at(pulse, modes, pair, f, &base))
        .collect())
}

fn check_freqs(freqs: &[f64]) -> Result<()> {
    if let Some(f) = freqs.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
        return Err(Error::validation("freqs", format!("frequency {f} Hz is not positive")));
    }
    Ok(())
}

fn theta_weight(modes: &ModeSpec, pair: IonPair, k: usize) -> f64 {
    let eta = modes.lamb_dicke()[k];
    0.5 * eta * eta * modes.coupling(pair.j1, k) * modes.coupling(pair.j2, k)
}

/// Literal `F_α`; `f` may be negative.
fn alpha_at(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, f: f64) -> f64 {
    (0..modes.num_modes())
        .map(|k| {
            let eta = modes.lamb_dicke()[k];
            let (b1, b2) = (modes.coupling(pair.j1, k), modes.coupling(pair.j2, k));
            let w = (b1 * b1 + b2 * b2) * 0.25 * eta.powi(4);
            if w == 0.0 {
                return 0.0;
            }
            // ∫ Ω e^{i(2πft − θ_k)} = conj ∫ Ω e^{iθ at ω_k − 2πf}
            w * Trace::new(pulse, modes.mode_freq(k) - TWO_PI * f)
                .loop_integral()
                .norm_sqr()
        })
        .sum()
}

/// Literal `F_Θ`; `f` may be negative.
fn theta_at(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, f: f64, base: &[Option<Trace>]) -> f64 {
    let nu = TWO_PI * f;
    let mut total = C64::new(0.0, 0.0);
    for (k, tr) in base.iter().enumerate() {
        let Some(tr) = tr else { continue };
        let w = modes.mode_freq(k);
        let up = Trace::new(pulse, w + nu);
        let down = Trace::new(pulse, w - nu);
        // cos = ½(e^{iΔθ} + e^{−iΔθ}); e^{iνt} shifts θ(t), e^{iνt'} shifts θ(t').
        let late = cross_pair_integral(&up, tr) + cross_pair_integral(&down, tr).conj();
        let early = cross_pair_integral(tr, &down) + cross_pair_integral(tr, &up).conj();
        total += (late - early) * (0.5 * theta_weight(modes, pair, k));
    }
    total.norm_sqr()
}

/// 200 log-spaced points from 10 Hz to 1 MHz.
pub fn default_grid() -> Vec<f64> {
    log_grid(10.0, 1.0e6, 200)
}

pub fn log_grid(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (f_min.ln(), f_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Both filter functions on one grid, averaged over `±f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFunctionCurve {
    pub freqs_hz: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub f_theta: Vec<f64>,
}

impl FilterFunctionCurve {
    pub fn compute(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, freqs: &[f64]) -> Result<Self> {
        check_freqs(freqs)?;
        pair.validate(modes)?;
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("freqs", "grid must be strictly increasing"));
        }
        let base: Vec<Option<Trace>> = (0..modes.num_modes())
            .map(|k| (theta_weight(modes, pair, k) != 0.0).then(|| Trace::new(pulse, modes.mode_freq(k))))
            .collect();
        let sym = |g: &dyn Fn(f64) -> f64, f: f64| 0.5 * (g(f) + g(-f));
        let fa = |f: f64| alpha_at(pulse, modes, pair, f);
        let ft = |f: f64| theta_at(pulse, modes, pair, f, &base);
        Ok(FilterFunctionCurve {
            freqs_hz: freqs.to_vec(),
            f_alpha: freqs.iter().map(|&f| sym(&fa, f)).collect(),
            f_theta: freqs.iter().map(|&f| sym(&ft, f)).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,f_alpha,f_theta\n");
        for i in 0..self.freqs_hz.len() {
            out += &format!("{:.10e},{:.10e},{:.10e}\n", self.freqs_hz[i], self.f_alpha[i], self.f_theta[i]);
        }
        out
    }

    /// Least-squares log-log slope of `values` for `f_lo ≤ f ≤ f_hi`.
    pub fn slope(&self, values: &[f64], f_lo: f64, f_hi: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .freqs_hz
            .iter()
            .zip(values)
            .filter(|(f, v)| **f >= f_lo && **f <= f_hi && **v > 0.0)
            .map(|(f, v)| (f.ln(), v.ln()))
            .collect();
        power_law(&pts).map(|(p, _)| p)
    }
}

/// Fit `ln y = p ln x + c`; returns `(p, c)`.
fn power_law(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let p = sxy / sxx;
    Some((p, my - p * mx))
}

/// Two-sided PSD of the uniform frequency fluctuation, rad²/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpectrum {
    /// Static offset `ε` (rad/s): `S = ε² δ(f)`.
    StaticOffset { epsilon: f64 },
    /// `S = amplitude` for `|f| ≤ cutoff_hz`.
    White { amplitude: f64, cutoff_hz: f64 },
    /// `S = amplitude / |f|` for `low_hz ≤ |f| ≤ high_hz`.
    OneOverF { amplitude: f64, low_hz: f64, high_hz: f64 },
    /// Linear interpolation of `(freqs_hz, psd)`, zero outside.
    Tabulated { freqs_hz: Vec<f64>, psd: Vec<f64> },
}

impl NoiseSpectrum {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            NoiseSpectrum::StaticOffset { epsilon } => epsilon.is_finite(),
            NoiseSpectrum::White { amplitude, cutoff_hz } => *amplitude >= 0.0 && *cutoff_hz > 0.0,
            NoiseSpectrum::OneOverF { amplitude, low_hz, high_hz } => {
                *amplitude >= 0.0 && *low_hz > 0.0 && high_hz > low_hz
            }
            NoiseSpectrum::Tabulated { freqs_hz, psd } => {
                freqs_hz.len() == psd.len()
                    && freqs_hz.len() >= 2
                    && freqs_hz.windows(2).all(|w| w[1] > w[0])
                    && freqs_hz[0] >= 0.0
                    && psd.iter().all(|v| *v >= 0.0 && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("spectrum", format!("{self:?} violates its parameter constraints")))
        }
    }

    /// PSD at `|f|` Hz. The static offset has no continuous part.
    pub fn sample(&self, f: f64) -> f64 {
        let f = f.abs();
        match self {
            NoiseSpectrum::StaticOffset { .. } => 0.0,
            NoiseSpectrum::White { amplitude, cutoff_hz } => {
                if f <= *cutoff_hz {
                    *amplitude
                } else {
                    0.0
                }
            }
            NoiseSpectrum::OneOverF { amplitude, low_hz, high_hz } => {
                if f >= *low_hz && f <= *high_hz {
                    amplitude / f
                } else {
                    0.0
                }
            }
            NoiseSpectrum::Tabulated { freqs_hz, psd } => {
                let n = freqs_hz.len();
                if f < freqs_hz[0] || f > freqs_hz[n - 1] {
                    return 0.0;
                }
                let i = freqs_hz.partition_point(|x| *x <= f).min(n - 1).max(1);
                let (x0, x1) = (freqs_hz[i - 1], freqs_hz[i]);
                let t = (f - x0) / (x1 - x0);
                psd[i - 1] + t * (psd[i] - psd[i - 1])
            }
        }
    }

    fn scaled(&self, factor: f64) -> NoiseSpectrum {
        match self.clone() {
            NoiseSpectrum::StaticOffset { epsilon } => NoiseSpectrum::StaticOffset { epsilon: epsilon * factor.sqrt() },
            NoiseSpectrum::White { amplitude, cutoff_hz } => NoiseSpectrum::White { amplitude: amplitude * factor, cutoff_hz },
            NoiseSpectrum::OneOverF { amplitude, low_hz, high_hz } => NoiseSpectrum::OneOverF {
                amplitude: amplitude * factor,
                low_hz,
                high_hz,
            },
            NoiseSpectrum::Tabulated { freqs_hz, psd } => NoiseSpectrum::Tabulated {
                freqs_hz,
                psd: psd.iter().map(|v| v * factor).collect(),
            },
        }
    }

    /// Same shape with the PSD multiplied by `factor ≥ 0`.
    pub fn scale_psd(&self, factor: f64) -> Result<NoiseSpectrum> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::validation("factor", "must be finite and ≥ 0"));
        }
        Ok(self.scaled(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralError {
    pub err_alpha: f64,
    pub err_theta: f64,
    /// Set when the grid looks too coarse or the low-frequency tail diverges.
    pub warning: Option<String>,
}

/// `E = 2 ∫₀^∞ S(f) F(f) / (2πf)² df` on one curve.
fn integrate(freqs: &[f64], values: &[f64], spectrum: &NoiseSpectrum, warnings: &mut Vec<String>, label: &str) -> f64 {
    let f_min = freqs[0];
    if let NoiseSpectrum::StaticOffset { epsilon } = spectrum {
        // ε² lim_{f→0} F/(2πf)², extrapolated from the lowest-decade fit.
        let (p, c) = low_fit(freqs, values).unwrap_or((2.0, (values[0] / (f_min * f_min)).ln()));
        if p < 2.0 - 0.1 {
            warnings.push(format!("{label}: low-frequency slope {p:.2} < 2, static limit diverges"));
        }
        let ratio = if p >= 2.0 - 0.1 {
            (c + (p - 2.0) * f_min.ln()).exp()
        } else {
            values[0] / (f_min * f_min)
        };
        return epsilon * epsilon * ratio / (TWO_PI * TWO_PI);
    }
    let integrand: Vec<f64> = freqs
        .iter()
        .zip(values)
        .map(|(f, v)| 2.0 * spectrum.sample(*f) * v / (TWO_PI * f).powi(2) * f)
        .collect();
    let trap = |step: usize| -> f64 {
        let idx: Vec<usize> = (0..freqs.len()).step_by(step).collect();
        let mut acc = 0.0;
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            acc += 0.5 * (integrand[a] + integrand[b]) * (freqs[b].ln() - freqs[a].ln());
        }
        acc
    };
    let full = trap(1);
    let coarse = trap(2);
    // Power-law tail below the grid, integrated numerically down to 1e-6 f_min.
    let mut tail = 0.0;
    if spectrum.sample(0.5 * f_min) > 0.0 {
        match low_fit(freqs, values) {
            Some((p, c)) if p > 1.0 => {
                let sub = log_grid(1e-6 * f_min, f_min, 121);
                let h: Vec<f64> = sub
                    .iter()
                    .map(|f| 2.0 * spectrum.sample(*f) * (c + p * f.ln()).exp() / (TWO_PI * f).powi(2) * f)
                    .collect();
                for i in 1..sub.len() {
                    tail += 0.5 * (h[i] + h[i - 1]) * (sub[i].ln() - sub[i - 1].ln());
                }
            }
            Some((p, _)) => warnings.push(format!(
                "{label}: low-frequency slope {p:.2} ≤ 1, tail below {f_min} Hz diverges and was omitted"
            )),
            None => {}
        }
    }
    if full > 0.0 && ((full - coarse) / full).abs() > GRID_TOLERANCE {
        warnings.push(format!(
            "{label}: grid too coarse (full {full:.3e} vs half-grid {coarse:.3e})"
        ));
    }
    full + tail
}

/// Fit on the lowest decade of the grid.
fn low_fit(freqs: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let f_min = freqs[0];
    let pts: Vec<(f64, f64)> = freqs
        .iter()
        .zip(values)
        .filter(|(f, v)| **f <= 10.0 * f_min && **v > 0.0)
        .map(|(f, v)| (f.ln(), v.ln()))
        .collect();
    power_law(&pts)
}

/// Spectral errors `(E_α, E_Θ)` of a curve under a noise spectrum.
pub fn spectral_error(curve: &FilterFunctionCurve, spectrum: &NoiseSpectrum) -> Result<SpectralError> {
    spectrum.validate()?;
    let n = curve.freqs_hz.len();
    if n < 3 || curve.f_alpha.len() != n || curve.f_theta.len() != n {
        return Err(Error::validation("curve", "needs ≥ 3 points and matching lengths"));
    }
    let mut warnings = Vec::new();
    let f_max = curve.freqs_hz[n - 1];
    let support_top = match spectrum {
        NoiseSpectrum::White { cutoff_hz, .. } => *cutoff_hz,
        NoiseSpectrum::OneOverF { high_hz, .. } => *high_hz,
        NoiseSpectrum::Tabulated { freqs_hz, .. } => *freqs_hz.last().unwrap(),
        NoiseSpectrum::StaticOffset { .. } => 0.0,
    };
    if support_top > f_max * (1.0 + 1e-12) {
        warnings.push(format!("spectrum extends to {support_top} Hz beyond grid top {f_max} Hz"));
    }
    let err_alpha = integrate(&curve.freqs_hz, &curve.f_alpha, spectrum, &mut warnings, "F_alpha");
    let err_theta = integrate(&curve.freqs_hz, &curve.f_theta, spectrum, &mut warnings, "F_theta");
    Ok(SpectralError {
        err_alpha,
        err_theta,
        warning: (!warnings.is_empty()).then(|| warnings.join("; ")),
    })
}
