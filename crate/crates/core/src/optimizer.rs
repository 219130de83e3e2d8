//! Robust FM pulse search.
//!
//! The pulse is time-symmetric with equal segment durations and a uniform
//! amplitude; only the first half of the detunings are free. Each start is
//! a bounded BFGS run on the amplitude-calibrated cost
//! `Σ_{j,k} |α_j^k|² + w |ᾱ_j^k|² (+ ff_weight · F_α(f₀))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{diagnostics, rotation_angle, DiagnosticsRecord, IonPair, Trace};
use crate::modes::ModeSpec;
use crate::pulse::{scale_amplitude, PulseFile, PulseProgram};
use crate::{GateDiagnostics, TWO_PI};

/// Starting point of the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Constant detunings near each mode, alternating sides.
    #[default]
    Auto,
    /// Every start uses this constant detuning (rad/s), jittered.
    Center(f64),
    /// Explicit first-half detunings (rad/s); used as start 0.
    Half(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FfSuppression {
    pub freq_hz: f64,
    #[serde(default = "default_ff_weight")]
    pub weight: f64,
}

fn default_ff_weight() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub num_segments: usize,
    /// Seconds.
    pub gate_time: f64,
    /// Radians.
    pub target_angle: f64,
    /// rad/s.
    pub max_amplitude: f64,
    /// rad/s; `None` spans the modes with a margin of `2π · 50 kHz`.
    pub detuning_bounds: Option<[f64; 2]>,
    pub initial_guess: InitialGuess,
    pub alpha_bar_weight: f64,
    pub ff_suppression: Option<FfSuppression>,
    pub seed: u64,
    pub num_starts: usize,
    pub max_iters: usize,
    /// Cost below which a run counts as converged.
    pub tolerance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            num_segments: 28,
            gate_time: 200e-6,
            target_angle: crate::TARGET_ANGLE,
            max_amplitude: TWO_PI * 1.0e6,
            detuning_bounds: None,
            initial_guess: InitialGuess::Auto,
            alpha_bar_weight: 1.0,
            ff_suppression: None,
            seed: 0,
            num_starts: 8,
            max_iters: 400,
            tolerance: 1e-6,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, modes: &ModeSpec) -> Result<()> {
        let bad = |f: &str, r: String| Err(Error::validation(f, r));
        if self.num_segments < 2 || self.num_segments % 2 != 0 {
            return bad("num_segments", format!("must be even and ≥ 2, got {}", self.num_segments));
        }
        if !(self.gate_time.is_finite() && self.gate_time > 0.0) {
            return bad("gate_time", format!("must be positive, got {}", self.gate_time));
        }
        if !(self.target_angle.is_finite() && self.target_angle != 0.0) {
            return bad("target_angle", "must be finite and nonzero".into());
        }
        if !(self.max_amplitude.is_finite() && self.max_amplitude > 0.0) {
            return bad("max_amplitude", "must be positive".into());
        }
        if let Some([lo, hi]) = self.detuning_bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad("detuning_bounds", format!("[{lo}, {hi}] is not an ordered interval"));
            }
        }
        let [lo, hi] = self.bounds(modes);
        match &self.initial_guess {
            InitialGuess::Auto => {}
            InitialGuess::Center(c) => {
                if !(*c > lo && *c < hi) {
                    return bad("initial_guess", format!("center {c} outside detuning bounds"));
                }
            }
            InitialGuess::Half(h) => {
                if h.len() != self.num_segments / 2 {
                    return bad(
                        "initial_guess",
                        format!("half pulse needs {} detunings, got {}", self.num_segments / 2, h.len()),
                    );
                }
                if h.iter().any(|d| !(*d >= lo && *d <= hi)) {
                    return bad("initial_guess", "half-pulse detuning outside bounds".into());
                }
            }
        }
        if !(self.alpha_bar_weight.is_finite() && self.alpha_bar_weight >= 0.0) {
            return bad("alpha_bar_weight", "must be ≥ 0".into());
        }
        if let Some(ff) = &self.ff_suppression {
            if !(ff.freq_hz > 0.0 && ff.weight >= 0.0 && ff.weight.is_finite()) {
                return bad("ff_suppression", "needs freq_hz > 0 and weight ≥ 0".into());
            }
        }
        if self.num_starts == 0 {
            return bad("num_starts", "must be ≥ 1".into());
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", "must be positive".into());
        }
        Ok(())
    }

    pub fn bounds(&self, modes: &ModeSpec) -> [f64; 2] {
        self.detuning_bounds.unwrap_or_else(|| {
            let margin = TWO_PI * 50e3;
            let lo = modes.mode_freqs().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = modes.mode_freqs().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            [lo - margin, hi + margin]
        })
    }
}

/// Outcome of one start.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub start: usize,
    pub cost: f64,
    /// Calibrated to the target angle; may exceed the amplitude limit.
    pub pulse: PulseProgram,
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub pulse: PulseProgram,
    /// Best-so-far cost per iteration of the winning start.
    pub cost_history: Vec<f64>,
    pub diagnostics: GateDiagnostics,
    pub converged: bool,
    /// `E_α < 1e-4` and `Σ|∂α/∂ω|² < 1e-4 τ²`.
    pub robust: bool,
    pub start_index: usize,
    pub final_cost: f64,
    /// Every start, ordered by start index.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerReportRecord {
    pub pulse: PulseFile,
    pub cost_history: Vec<f64>,
    pub diagnostics: DiagnosticsRecord,
    pub converged: bool,
    pub robust: bool,
    pub start_index: usize,
    pub final_cost: f64,
    pub candidate_costs: Vec<f64>,
}

impl OptimizerReport {
    pub fn to_record(&self) -> OptimizerReportRecord {
        OptimizerReportRecord {
            pulse: PulseFile::from(&self.pulse),
            cost_history: self.cost_history.clone(),
            diagnostics: self.diagnostics.to_record(),
            converged: self.converged,
            robust: self.robust,
            start_index: self.start_index,
            final_cost: self.final_cost,
            candidate_costs: self.candidates.iter().map(|c| c.cost).collect(),
        }
    }
}

/// Rescale so the rotation angle equals `target` exactly.
pub fn calibrate_angle(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    target: f64,
) -> Result<PulseProgram> {
    let theta = rotation_angle(pulse, modes, pair);
    if theta == 0.0 || !theta.is_finite() {
        return Err(Error::Calibration(format!("rotation angle is {theta}; cannot rescale")));
    }
    if theta.signum() != target.signum() {
        return Err(Error::Calibration(format!(
            "rotation angle {theta:.6e} has the opposite sign to target {target:.6e}"
        )));
    }
    scale_amplitude(pulse, (target / theta).sqrt())
}

/// `true` when the pulse passes both robustness thresholds.
pub fn is_robust(d: &GateDiagnostics, tau: f64) -> bool {
    d.err_alpha < 1e-4 && d.dalpha_norm_sqr() < 1e-4 * tau * tau
}

struct Problem<'a> {
    modes: &'a ModeSpec,
    half: usize,
    seg: f64,
    tau: f64,
    center: f64,
    half_width: f64,
    target: f64,
    w: f64,
    ff: Option<(f64, f64)>,
    max_amp_sq: f64,
    alpha_w: Vec<f64>,
    theta_w: Vec<f64>,
}

const AMP_PENALTY: f64 = 1e2;

impl<'a> Problem<'a> {
    fn new(cfg: &OptimizerConfig, modes: &'a ModeSpec, pair: IonPair) -> Self {
        let [lo, hi] = cfg.bounds(modes);
        let nm = modes.num_modes();
        let mut alpha_w = vec![0.0; nm];
        let mut theta_w = vec![0.0; nm];
        for k in 0..nm {
            let eta = modes.lamb_dicke()[k];
            let (b1, b2) = (modes.coupling(pair.j1, k), modes.coupling(pair.j2, k));
            alpha_w[k] = 0.25 * eta * eta * (b1 * b1 + b2 * b2);
            theta_w[k] = 0.5 * eta * eta * b1 * b2;
        }
        Problem {
            modes,
            half: cfg.num_segments / 2,
            seg: cfg.gate_time / cfg.num_segments as f64,
            tau: cfg.gate_time,
            center: 0.5 * (lo + hi),
            half_width: 0.5 * (hi - lo),
            target: cfg.target_angle,
            w: cfg.alpha_bar_weight,
            ff: cfg
                .ff_suppression
                .as_ref()
                .map(|f| (TWO_PI * f.freq_hz, f.weight)),
            max_amp_sq: cfg.max_amplitude * cfg.max_amplitude,
            alpha_w,
            theta_w,
        }
    }

    fn detunings(&self, u: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = u.iter().map(|x| self.center + self.half_width * x.sin()).collect();
        let mirror: Vec<f64> = d.iter().rev().cloned().collect();
        d.extend(mirror);
        d
    }

    fn to_u(&self, detuning: f64) -> f64 {
        ((detuning - self.center) / self.half_width).clamp(-1.0, 1.0).asin()
    }

    /// Unit-amplitude pulse for the parameters.
    fn pulse(&self, u: &[f64]) -> PulseProgram {
        PulseProgram::uniform(&self.detunings(u), self.seg, 1.0).expect("bounded detunings")
    }

    /// Cost and gradient with respect to `u`.
    fn eval(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let pulse = self.pulse(u);
        let n = 2 * self.half;
        let mut x = 0.0;
        let mut dx = vec![0.0; n];
        let mut theta = 0.0;
        let mut dtheta = vec![0.0; n];
        for k in 0..self.modes.num_modes() {
            let wk = self.modes.mode_freq(k);
            let tr = Trace::new(&pulse, wk);
            let gr = tr.detuning_gradients();
            let l = tr.loop_integral();
            let m = tr.time_moment();
            let bar = l - m / self.tau;
            let ca = self.alpha_w[k];
            x += ca * (l.norm_sqr() + self.w * bar.norm_sqr());
            let ct = self.theta_w[k];
            theta += ct * tr.pair_integral().im;
            for i in 0..n {
                let dbar = gr.loop_integral[i] - gr.time_moment[i] / self.tau;
                dx[i] += ca
                    * 2.0
                    * ((l.conj() * gr.loop_integral[i]).re + self.w * (bar.conj() * dbar).re);
                dtheta[i] += ct * gr.pair_integral[i].im;
            }
            if let Some((wf, weight)) = self.ff {
                // Symmetrised F_α(f₀) at unit amplitude.
                let c = 0.5 * weight * ca * self.modes.lamb_dicke()[k].powi(2);
                for shifted in [wk - wf, wk + wf] {
                    let tr = Trace::new(&pulse, shifted);
                    let gr = tr.detuning_gradients();
                    let l = tr.loop_integral();
                    x += c * l.norm_sqr();
                    for i in 0..n {
                        dx[i] += c * 2.0 * (l.conj() * gr.loop_integral[i]).re;
                    }
                }
            }
        }
        let mut grad = vec![0.0; self.half];
        if !(theta.is_finite() && theta * self.target > 0.0) {
            return (f64::INFINITY, grad);
        }
        let ratio = self.target / theta;
        let mut cost = ratio * x;
        let mut dcost: Vec<f64> = (0..n)
            .map(|i| ratio * dx[i] - ratio * x * dtheta[i] / theta)
            .collect();
        // Required squared amplitude at unit drive is target/Θ.
        let excess = ratio / self.max_amp_sq - 1.0;
        if excess > 0.0 {
            cost += AMP_PENALTY * excess * excess;
            for i in 0..n {
                dcost[i] += AMP_PENALTY * 2.0 * excess * (-ratio * dtheta[i] / theta) / self.max_amp_sq;
            }
        }
        for i in 0..self.half {
            let dd = self.half_width * u[i].cos();
            grad[i] = (dcost[i] + dcost[n - 1 - i]) * dd;
        }
        (cost, grad)
    }
}

/// Result of one BFGS run.
struct Run {
    u: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with Armijo backtracking on the inverse-Hessian form.
fn bfgs<F: Fn(&[f64]) -> (f64, Vec<f64>)>(f: F, x0: Vec<f64>, max_iters: usize, tol: f64) -> Run {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    if !fx.is_finite() {
        return Run { u: x, cost: fx, history };
    }
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    let mut stalls = 0;
    for _ in 0..max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < 1e-14 || fx < 1e-3 * tol * tol {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            identity(&mut h);
            p = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // Keep trial steps to under a radian in the bounded coordinates.
        let pmax = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if pmax > 1.0 { 1.0 / pmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            let (fn_, gn) = f(&xn);
            if fn_.is_finite() && fn_ <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fn_, gn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if stalls > 0 {
                break;
            }
            stalls += 1;
            identity(&mut h);
            continue;
        };
        stalls = 0;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let rel = (fx - fn_) / fx.max(1e-300);
        x = xn;
        fx = fn_;
        g = gn;
        history.push(fx);
        if rel < 1e-12 {
            break;
        }
    }
    Run { u: x, cost: fx, history }
}

fn start_points(cfg: &OptimizerConfig, problem: &Problem, modes: &ModeSpec) -> Vec<Vec<f64>> {
    let half = problem.half;
    let [lo, hi] = cfg.bounds(modes);
    let loop_step = TWO_PI / cfg.gate_time;
    let nm = modes.num_modes();
    let mut freqs: Vec<f64> = modes.mode_freqs().to_vec();
    freqs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (0..cfg.num_starts)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(s as u64));
            let base: Vec<f64> = match &cfg.initial_guess {
                InitialGuess::Half(h) if s == 0 => return h.iter().map(|d| problem.to_u(*d)).collect(),
                InitialGuess::Half(h) => h.clone(),
                InitialGuess::Center(c) => vec![*c; half],
                InitialGuess::Auto => {
                    let mode = freqs[s % nm];
                    let side = if (s / nm) % 2 == 0 { 1.0 } else { -1.0 };
                    let loops = 1.0 + (s / (2 * nm)) as f64;
                    vec![mode + side * loops * loop_step; half]
                }
            };
            base.iter()
                .map(|d| {
                    let jitter = 0.2 * loop_step * rng.random_range(-1.0..1.0);
                    problem.to_u((d + jitter).clamp(lo, hi))
                })
                .collect()
        })
        .collect()
}

/// Multi-start robust FM search, calibrated to `cfg.target_angle`.
pub fn optimize_fm(cfg: &OptimizerConfig, modes: &ModeSpec, pair: IonPair) -> Result<OptimizerReport> {
    cfg.validate(modes)?;
    pair.validate(modes)?;
    let problem = Problem::new(cfg, modes, pair);
    let starts = start_points(cfg, &problem, modes);
    let mut runs = Vec::with_capacity(starts.len());
    for u0 in starts {
        runs.push(bfgs(|u| problem.eval(u), u0, cfg.max_iters, cfg.tolerance));
    }
    let mut candidates = Vec::new();
    let mut best: Option<usize> = None;
    for (s, run) in runs.iter().enumerate() {
        if !run.cost.is_finite() {
            continue;
        }
        let pulse = calibrate_angle(&problem.pulse(&run.u), modes, pair, cfg.target_angle)?;
        candidates.push(Candidate { start: s, cost: run.cost, pulse });
        if best.is_none_or(|b| run.cost < runs[b].cost) {
            best = Some(s);
        }
    }
    let Some(b) = best else {
        return Err(Error::Calibration(
            "no start produced a rotation angle with the sign of the target".into(),
        ));
    };
    let run = &runs[b];
    let pulse = candidates.iter().find(|c| c.start == b).unwrap().pulse.clone();
    let amp = pulse.max_effective_amplitude();
    if amp > cfg.max_amplitude * (1.0 + 1e-12) {
        return Err(Error::Calibration(format!(
            "required amplitude {:.6e} rad/s ({:.3} kHz) exceeds max_amplitude {:.6e} rad/s",
            amp,
            amp / TWO_PI / 1e3,
            cfg.max_amplitude
        )));
    }
    let diag = diagnostics(&pulse, modes, pair, 1)?;
    let mut history = Vec::with_capacity(run.history.len());
    let mut low = f64::INFINITY;
    for c in &run.history {
        low = low.min(*c);
        history.push(low);
    }
    Ok(OptimizerReport {
        robust: is_robust(&diag, cfg.gate_time),
        converged: run.cost <= cfg.tolerance,
        pulse,
        cost_history: history,
        diagnostics: diag,
        start_index: b,
        final_cost: run.cost,
        candidates,
    })
}
