//! Second-order Magnus quantities of a piecewise-constant MS drive.
//!
//! For mode frequency `w` the drive integrand is `f(t) = Ω(t) e^{iθ(t)}`
//! with `θ(t) = w t − ∫₀ᵗ δ`. Everything here is a closed-form sum over
//! segments of the scaled moments in [`crate::moments`], except angle
//! derivatives of order ≥ 2 which use nested 64-point Gauss–Legendre rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{loop_area, moments, ordered_pair};
use crate::modes::ModeSpec;
use crate::pulse::PulseProgram;
use crate::quadrature::gl64;
use crate::{C64, TARGET_ANGLE};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// The two addressed ions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IonPair {
    pub j1: usize,
    pub j2: usize,
}

impl IonPair {
    pub fn new(j1: usize, j2: usize, modes: &ModeSpec) -> Result<Self> {
        let pair = IonPair { j1, j2 };
        pair.validate(modes)?;
        Ok(pair)
    }

    pub fn validate(&self, modes: &ModeSpec) -> Result<()> {
        if self.j1 == self.j2 {
            return Err(Error::validation("pair", "ions must be distinct"));
        }
        let n = modes.num_ions();
        if self.j1 >= n || self.j2 >= n {
            return Err(Error::validation(
                "pair",
                format!("ion indices ({}, {}) outside 0..{n}", self.j1, self.j2),
            ));
        }
        Ok(())
    }

    pub fn ions(&self) -> [usize; 2] {
        [self.j1, self.j2]
    }
}

/// Per-segment data of one pulse seen by one mode frequency.
pub(crate) struct Trace {
    starts: Vec<f64>,
    durations: Vec<f64>,
    amps: Vec<f64>,
    slopes: Vec<f64>,
    /// `A_i e^{iθ(t_i)}`
    heads: Vec<C64>,
    /// `p_0..p_2` of `μ_i Δ_i`
    p: Vec<[C64; 3]>,
    /// `∫_seg f`
    g: Vec<C64>,
    /// `∫_seg (t − t_i) f`
    r: Vec<C64>,
    total: f64,
}

impl Trace {
    pub(crate) fn new(pulse: &PulseProgram, w: f64) -> Trace {
        let n = pulse.len();
        let mut tr = Trace {
            starts: Vec::with_capacity(n),
            durations: Vec::with_capacity(n),
            amps: Vec::with_capacity(n),
            slopes: Vec::with_capacity(n),
            heads: Vec::with_capacity(n),
            p: Vec::with_capacity(n),
            g: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            total: 0.0,
        };
        let mut t = 0.0;
        let mut phase = 0.0;
        for (i, seg) in pulse.segments().iter().enumerate() {
            let amp = pulse.effective_amplitude(i);
            let mu = w - seg.detuning;
            let dt = seg.duration;
            let pm = moments(mu * dt, 2);
            let head = C64::from_polar(amp, phase);
            tr.starts.push(t);
            tr.durations.push(dt);
            tr.amps.push(amp);
            tr.slopes.push(mu);
            tr.heads.push(head);
            tr.g.push(head * dt * pm[0]);
            tr.r.push(head * dt * dt * pm[1]);
            tr.p.push([pm[0], pm[1], pm[2]]);
            t += dt;
            phase += mu * dt;
        }
        tr.total = t;
        tr
    }

    fn len(&self) -> usize {
        self.starts.len()
    }

    /// `∫₀^τ f`
    pub(crate) fn loop_integral(&self) -> C64 {
        self.g.iter().sum()
    }

    /// `∫₀^{t_end} f`
    fn loop_integral_until(&self, t_end: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.len() {
            let end = self.starts[i] + self.durations[i];
            if t_end >= end {
                acc += self.g[i];
            } else {
                let s = t_end - self.starts[i];
                if s > 0.0 {
                    acc += self.heads[i] * s * moments(self.slopes[i] * s, 0)[0];
                }
                break;
            }
        }
        acc
    }

    /// `∫₀^τ t f`
    pub(crate) fn time_moment(&self) -> C64 {
        (0..self.len())
            .map(|i| self.g[i] * self.starts[i] + self.r[i])
            .sum()
    }

    /// `∫∫_{t'<t} f(t) f*(t')`
    pub(crate) fn pair_integral(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut prefix = C64::new(0.0, 0.0);
        for i in 0..self.len() {
            let d = self.durations[i];
            let [p0, p1, _] = self.p[i];
            acc += (p0 - p1) * (self.amps[i] * self.amps[i] * d * d);
            acc += self.g[i] * prefix.conj();
            prefix += self.g[i];
        }
        acc
    }

    /// `∫∫_{t'<t} (t − t') f(t) f*(t')`
    pub(crate) fn pair_integral_lagged(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let mut s_g = C64::new(0.0, 0.0);
        let mut s_tg = C64::new(0.0, 0.0);
        let mut s_r = C64::new(0.0, 0.0);
        for i in 0..self.len() {
            let d = self.durations[i];
            let [_, p1, p2] = self.p[i];
            acc += (p1 - p2) * (self.amps[i] * self.amps[i] * d * d * d);
            acc += self.g[i] * (s_g * self.starts[i] - s_tg) + self.r[i] * s_g - self.g[i] * s_r;
            s_g += self.g[i].conj();
            s_tg += self.g[i].conj() * self.starts[i];
            s_r += self.r[i].conj();
        }
        acc
    }

    /// `∫∫_{t'<t} (t − t')^order f(t) f*(t')` by nested Gauss–Legendre.
    pub(crate) fn pair_integral_gl(&self, order: u32) -> C64 {
        let (x, w) = gl64();
        let q = x.len();
        let n = self.len();
        // Node times and weighted integrand values per segment.
        let mut times = vec![0.0; n * q];
        let mut vals = vec![C64::new(0.0, 0.0); n * q];
        for i in 0..n {
            let d = self.durations[i];
            for k in 0..q {
                let s = d * x[k];
                times[i * q + k] = self.starts[i] + s;
                vals[i * q + k] = self.heads[i] * C64::from_polar(w[k] * d, self.slopes[i] * s);
            }
        }
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            // Earlier segments.
            for a in i * q..(i + 1) * q {
                let mut inner = C64::new(0.0, 0.0);
                for b in 0..i * q {
                    inner += vals[b].conj() * (times[a] - times[b]).powi(order as i32);
                }
                acc += vals[a] * inner;
            }
            // Same segment, t' ∈ [t_i, t].
            let d = self.durations[i];
            let mu = self.slopes[i];
            let a2 = self.amps[i] * self.amps[i];
            for k in 0..q {
                let s = d * x[k];
                let mut inner = C64::new(0.0, 0.0);
                for m in 0..q {
                    let lag = s - s * x[m];
                    inner += C64::from_polar(w[m] * s * lag.powi(order as i32), mu * lag);
                }
                acc += inner * (a2 * w[k] * d);
            }
        }
        acc
    }

    /// Per-segment derivatives with respect to each segment detuning.
    pub(crate) fn detuning_gradients(&self) -> TraceGradients {
        let n = self.len();
        let loop_total = self.loop_integral();
        let moment_total = self.time_moment();
        let mut out = TraceGradients {
            loop_integral: Vec::with_capacity(n),
            time_moment: Vec::with_capacity(n),
            pair_integral: Vec::with_capacity(n),
        };
        let mut g_prefix = C64::new(0.0, 0.0);
        let mut m_prefix = C64::new(0.0, 0.0);
        for i in 0..n {
            let d = self.durations[i];
            let t0 = self.starts[i];
            let a = self.heads[i];
            let [p0, p1, p2] = self.p[i];
            let int_g = g_prefix * d + a * (d * d) * (p0 - p1);
            let int_m = m_prefix * d + a * (t0 * d * d * (p0 - p1) + d * d * d * (p1 - p2));
            let int_g2 = d * g_prefix.norm_sqr()
                + 2.0 * (g_prefix.conj() * a * (d * d) * (p0 - p1)).re
                + a.norm_sqr() * d * d * d * loop_area(self.slopes[i] * d);
            out.loop_integral.push(-I * (loop_total * d - int_g));
            out.time_moment.push(-I * (moment_total * d - int_m));
            out.pair_integral
                .push(-I * (loop_total * int_g.conj() - int_g2));
            g_prefix += self.g[i];
            m_prefix += self.g[i] * t0 + self.r[i];
        }
        out
    }
}

/// `∫∫_{t'<t} f_a(t) f_b*(t')` for two traces of the same pulse.
pub(crate) fn cross_pair_integral(a: &Trace, b: &Trace) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = C64::new(0.0, 0.0);
    let mut prefix = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        let d = a.durations[i];
        let same = a.heads[i] * b.heads[i].conj()
            * ordered_pair(a.slopes[i] * d, -b.slopes[i] * d)
            * (d * d);
        acc += same + a.g[i] * prefix.conj();
        prefix += b.g[i];
    }
    acc
}

/// `∂/∂δ_i` of [`Trace::loop_integral`], [`Trace::time_moment`] and
/// [`Trace::pair_integral`].
pub(crate) struct TraceGradients {
    pub loop_integral: Vec<C64>,
    pub time_moment: Vec<C64>,
    pub pair_integral: Vec<C64>,
}

fn check_index(what: &'static str, idx: usize, len: usize) -> Result<()> {
    if idx >= len {
        return Err(Error::Range {
            what,
            value: idx as f64,
            min: 0.0,
            max: len as f64 - 1.0,
        });
    }
    Ok(())
}

/// `α_j^k(t_end) = (η_k b_j^k / 2) ∫₀^{t_end} Ω e^{iθ_k}`.
pub fn displacement(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    ion: usize,
    mode: usize,
    t_end: f64,
) -> Result<C64> {
    check_index("ion", ion, modes.num_ions())?;
    check_index("mode", mode, modes.num_modes())?;
    let tau = pulse.duration();
    if !(t_end > 0.0 && t_end <= tau * (1.0 + 1e-15)) {
        return Err(Error::Range {
            what: "t_end",
            value: t_end,
            min: 0.0,
            max: tau,
        });
    }
    let trace = Trace::new(pulse, modes.mode_freq(mode));
    let pref = 0.5 * modes.lamb_dicke()[mode] * modes.coupling(ion, mode);
    let integral = if t_end >= tau {
        trace.loop_integral()
    } else {
        trace.loop_integral_until(t_end)
    };
    Ok(integral * pref)
}

/// `∂α_j^k/∂ω_k = i (η_k b_j^k / 2) ∫₀^τ Ω t e^{iθ_k}`, seconds.
pub fn alpha_derivative(pulse: &PulseProgram, modes: &ModeSpec, ion: usize, mode: usize) -> Result<C64> {
    check_index("ion", ion, modes.num_ions())?;
    check_index("mode", mode, modes.num_modes())?;
    let trace = Trace::new(pulse, modes.mode_freq(mode));
    let pref = 0.5 * modes.lamb_dicke()[mode] * modes.coupling(ion, mode);
    Ok(I * trace.time_moment() * pref)
}

/// Time-averaged displacement `(1/τ)∫₀^τ α_j^k(t) dt`.
///
/// Exchanging the order of integration gives `(η b/2τ)∫ Ω (τ − t) e^{iθ}`,
/// so `ᾱ = α + i(∂α/∂ω)/τ`: a pulse with `α = ᾱ = 0` also has
/// `∂α/∂ω = 0`.
pub fn avg_displacement(pulse: &PulseProgram, modes: &ModeSpec, ion: usize, mode: usize) -> Result<C64> {
    check_index("ion", ion, modes.num_ions())?;
    check_index("mode", mode, modes.num_modes())?;
    let trace = Trace::new(pulse, modes.mode_freq(mode));
    let tau = trace.total;
    let pref = 0.5 * modes.lamb_dicke()[mode] * modes.coupling(ion, mode);
    Ok((trace.loop_integral() * tau - trace.time_moment()) * (pref / tau))
}

fn angle_weight(modes: &ModeSpec, pair: IonPair, k: usize) -> f64 {
    let eta = modes.lamb_dicke()[k];
    0.5 * eta * eta * modes.coupling(pair.j1, k) * modes.coupling(pair.j2, k)
}

/// Per-mode contributions to the rotation angle; they sum to [`rotation_angle`].
pub fn rotation_angle_per_mode(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair) -> Vec<f64> {
    (0..modes.num_modes())
        .map(|k| {
            let c = angle_weight(modes, pair, k);
            if c == 0.0 {
                return 0.0;
            }
            c * Trace::new(pulse, modes.mode_freq(k)).pair_integral().im
        })
        .collect()
}

/// `Θ(τ) = ½ Σ_k η_k² b_{j1}^k b_{j2}^k ∫∫_{t'<t} Ω Ω' sin(θ_k − θ_k')`.
pub fn rotation_angle(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair) -> f64 {
    rotation_angle_per_mode(pulse, modes, pair).iter().sum()
}

/// `∂ʲΘ/∂ω_kʲ` for every mode, units `sʲ`.
///
/// Differentiating the angle kernel `j` times inserts `(t − t')ʲ` and
/// advances `sin → cos → −sin → …`; equivalently the value is
/// `c_k Im[iʲ K_j]` with `K_j = ∫∫ (t−t')ʲ f f'*`. Order 1 is closed form.
pub fn theta_derivative(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    order: u32,
) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::validation("order", "derivative order must be ≥ 1"));
    }
    let rot = I.powu(order);
    Ok((0..modes.num_modes())
        .map(|k| {
            let c = angle_weight(modes, pair, k);
            if c == 0.0 {
                return 0.0;
            }
            let trace = Trace::new(pulse, modes.mode_freq(k));
            let kj = if order == 1 {
                trace.pair_integral_lagged()
            } else {
                trace.pair_integral_gl(order)
            };
            c * (rot * kj).im
        })
        .collect())
}

/// `Σ_k r_kʲ ∂ʲΘ/∂ω_kʲ`: the `j`-th derivative of `Θ` along the drift
/// direction `ω_k → ω_k + r_k ε`. Θ is a sum of single-mode terms, so no
/// mixed partials appear.
pub fn weighted_theta_derivative(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    ratios: &[f64],
    order: u32,
) -> Result<f64> {
    if ratios.len() != modes.num_modes() {
        return Err(Error::validation(
            "ratios",
            format!("expected {} drift ratios, found {}", modes.num_modes(), ratios.len()),
        ));
    }
    let per_mode = theta_derivative(pulse, modes, pair, order)?;
    Ok(per_mode
        .iter()
        .zip(ratios)
        .map(|(d, r)| d * r.powi(order as i32))
        .sum())
}

/// Everything needed to judge one gate.
#[derive(Debug, Clone)]
pub struct GateDiagnostics {
    /// `alpha[p][k]` for pair member `p` (0 → `j1`, 1 → `j2`) and mode `k`.
    pub alpha: Vec<Vec<C64>>,
    pub dalpha_domega: Vec<Vec<C64>>,
    pub theta: f64,
    pub dtheta_domega: Vec<f64>,
    /// `Σ_k r_k ∂Θ/∂ω_k`
    pub dtheta_weighted: f64,
    /// `Σ_k r_kʲ ∂ʲΘ/∂ω_kʲ` for `j = 2..=max_order`.
    pub higher_dtheta: Vec<f64>,
    pub err_alpha: f64,
    pub err_theta: f64,
}

impl GateDiagnostics {
    pub fn total_error(&self) -> f64 {
        self.err_alpha + self.err_theta
    }

    /// `Σ |∂α/∂ω|²` over the pair and all modes, s².
    pub fn dalpha_norm_sqr(&self) -> f64 {
        self.dalpha_domega
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum()
    }

    pub fn to_record(&self) -> DiagnosticsRecord {
        let cplx = |m: &Vec<Vec<C64>>| -> Vec<Vec<[f64; 2]>> {
            m.iter()
                .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
                .collect()
        };
        DiagnosticsRecord {
            alpha: cplx(&self.alpha),
            dalpha_domega_s: cplx(&self.dalpha_domega),
            theta_rad: self.theta,
            dtheta_domega_s: self.dtheta_domega.clone(),
            dtheta_weighted_s: self.dtheta_weighted,
            higher_dtheta: self.higher_dtheta.clone(),
            err_alpha: self.err_alpha,
            err_theta: self.err_theta,
        }
    }

    /// Flat `quantity,index_a,index_b,re,im` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,pair_member,mode,re,im\n");
        for (p, row) in self.alpha.iter().enumerate() {
            for (k, z) in row.iter().enumerate() {
                out += &format!("alpha,{p},{k},{:.17e},{:.17e}\n", z.re, z.im);
            }
        }
        for (p, row) in self.dalpha_domega.iter().enumerate() {
            for (k, z) in row.iter().enumerate() {
                out += &format!("dalpha_domega,{p},{k},{:.17e},{:.17e}\n", z.re, z.im);
            }
        }
        out += &format!("theta,,,{:.17e},0\n", self.theta);
        for (k, d) in self.dtheta_domega.iter().enumerate() {
            out += &format!("dtheta_domega,,{k},{d:.17e},0\n");
        }
        out += &format!("dtheta_weighted,,,{:.17e},0\n", self.dtheta_weighted);
        for (j, d) in self.higher_dtheta.iter().enumerate() {
            out += &format!("dtheta_order_{},,,{d:.17e},0\n", j + 2);
        }
        out += &format!("err_alpha,,,{:.17e},0\n", self.err_alpha);
        out += &format!("err_theta,,,{:.17e},0\n", self.err_theta);
        out
    }
}

/// Serializable form of [`GateDiagnostics`]; complex numbers as `[re, im]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub alpha: Vec<Vec<[f64; 2]>>,
    pub dalpha_domega_s: Vec<Vec<[f64; 2]>>,
    pub theta_rad: f64,
    pub dtheta_domega_s: Vec<f64>,
    pub dtheta_weighted_s: f64,
    pub higher_dtheta: Vec<f64>,
    pub err_alpha: f64,
    pub err_theta: f64,
}

/// Assemble [`GateDiagnostics`], with angle derivatives up to `max_order`.
pub fn diagnostics(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    max_order: u32,
) -> Result<GateDiagnostics> {
    if max_order < 1 {
        return Err(Error::validation("max_order", "must be ≥ 1"));
    }
    pair.validate(modes)?;
    let nm = modes.num_modes();
    let traces: Vec<Trace> = (0..nm).map(|k| Trace::new(pulse, modes.mode_freq(k))).collect();
    let mut alpha = vec![vec![C64::new(0.0, 0.0); nm]; 2];
    let mut dalpha = vec![vec![C64::new(0.0, 0.0); nm]; 2];
    let mut theta = 0.0;
    let mut dtheta = vec![0.0; nm];
    for (k, tr) in traces.iter().enumerate() {
        let l = tr.loop_integral();
        let m = tr.time_moment();
        for (p, &ion) in pair.ions().iter().enumerate() {
            let pref = 0.5 * modes.lamb_dicke()[k] * modes.coupling(ion, k);
            alpha[p][k] = l * pref;
            dalpha[p][k] = I * m * pref;
        }
        let c = angle_weight(modes, pair, k);
        if c != 0.0 {
            theta += c * tr.pair_integral().im;
            dtheta[k] = c * tr.pair_integral_lagged().re;
        }
    }
    let ratios = modes.drift_ratios();
    let dtheta_weighted = dtheta.iter().zip(ratios).map(|(d, r)| d * r).sum();
    let mut higher = Vec::new();
    for order in 2..=max_order {
        higher.push(weighted_theta_derivative(pulse, modes, pair, ratios, order)?);
    }
    let err_alpha = alpha.iter().flatten().map(|z| z.norm_sqr()).sum();
    Ok(GateDiagnostics {
        alpha,
        dalpha_domega: dalpha,
        theta,
        dtheta_domega: dtheta,
        dtheta_weighted,
        higher_dtheta: higher,
        err_alpha,
        err_theta: (theta - TARGET_ANGLE).powi(2),
    })
}
