//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the closed-form machinery of the crate: phases
//! are re-accumulated from segment data, integrals come from adaptive
//! Gauss–Kronrod, eigenpairs from cyclic Jacobi sweeps.
#![allow(dead_code)]

use msgate::{ModeSpec, PulseProgram, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

// ---------------------------------------------------------------- quadrature

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += s * WGK[i];
        if i % 2 == 1 {
            g += s * WG[i / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Adaptive G7–K15 of a complex integrand on `[a, b]`.
pub fn integrate<F: FnMut(f64) -> C64>(mut f: F, a: f64, b: f64, rel: f64, abs: f64) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    let mut stack = vec![(a, b, 0usize)];
    let mut sum = C64::new(0.0, 0.0);
    let (whole, _) = gk15(&mut f, a, b);
    let scale = whole.norm().max(abs);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk15(&mut f, lo, hi);
        let share = (hi - lo) / (b - a);
        if err <= (rel * scale).max(abs) * share.sqrt() || depth > 40 {
            sum += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    sum
}

pub fn integrate_real<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel: f64) -> f64 {
    integrate(|x| C64::new(f(x), 0.0), a, b, rel, 1e-300).re
}

// ---------------------------------------------------------------- pulses

/// Segment boundaries `[0, t_1, …, τ]`.
pub fn boundaries(p: &PulseProgram) -> Vec<f64> {
    let mut out = vec![0.0];
    for s in p.segments() {
        out.push(out.last().unwrap() + s.duration);
    }
    out
}

fn locate(p: &PulseProgram, t: f64) -> usize {
    let mut end = 0.0;
    for (i, s) in p.segments().iter().enumerate() {
        end += s.duration;
        if t < end {
            return i;
        }
    }
    p.len() - 1
}

pub fn omega_at(p: &PulseProgram, t: f64) -> f64 {
    p.effective_amplitude(locate(p, t))
}

/// `w t − ∫₀ᵗ δ` by direct summation.
pub fn phase_at(p: &PulseProgram, w: f64, t: f64) -> f64 {
    let mut acc = 0.0;
    let mut start = 0.0;
    for s in p.segments() {
        let end = start + s.duration;
        let upto = t.min(end);
        if upto > start {
            acc += (w - s.detuning) * (upto - start);
        }
        start = end;
    }
    acc
}

/// Integrate piecewise-smooth `f` over `[a, b]`, splitting at segment edges.
pub fn integrate_pulse<F: FnMut(f64) -> C64>(p: &PulseProgram, mut f: F, a: f64, b: f64, rel: f64) -> C64 {
    let edges = boundaries(p);
    let mut acc = C64::new(0.0, 0.0);
    for w in edges.windows(2) {
        let lo = w[0].max(a);
        let hi = w[1].min(b);
        if hi > lo {
            // sample strictly inside the segment
            acc += integrate(&mut f, lo, hi, rel, 1e-300);
        }
    }
    acc
}

/// `(η b/2) ∫₀^{t} Ω e^{iθ}`.
pub fn alpha_quad(p: &PulseProgram, m: &ModeSpec, ion: usize, k: usize, t: f64) -> C64 {
    let w = m.mode_freq(k);
    let pref = 0.5 * m.lamb_dicke()[k] * m.coupling(ion, k);
    integrate_pulse(p, |s| C64::from_polar(omega_at(p, s), phase_at(p, w, s)), 0.0, t, 1e-13) * pref
}

/// `∫₀ᵗ g` for many `t`: full-segment integrals are cached, the partial
/// segment is integrated on demand.
pub struct RunningIntegral<'a, G: Fn(f64) -> C64> {
    pulse: &'a PulseProgram,
    g: G,
    edges: Vec<f64>,
    prefix: Vec<C64>,
    rel: f64,
}

impl<'a, G: Fn(f64) -> C64> RunningIntegral<'a, G> {
    pub fn new(pulse: &'a PulseProgram, g: G, rel: f64) -> Self {
        let edges = boundaries(pulse);
        let mut prefix = vec![C64::new(0.0, 0.0)];
        for w in edges.windows(2) {
            let v = integrate(&g, w[0], w[1], rel, 1e-300);
            prefix.push(prefix.last().unwrap() + v);
        }
        RunningIntegral { pulse, g, edges, prefix, rel }
    }

    pub fn at(&self, t: f64) -> C64 {
        let i = locate(self.pulse, t);
        self.prefix[i] + integrate(&self.g, self.edges[i], t, self.rel, 1e-300)
    }
}

/// `(1/τ) ∫₀^τ α(t) dt`, nested.
pub fn alpha_bar_quad(p: &PulseProgram, m: &ModeSpec, ion: usize, k: usize) -> C64 {
    let tau = p.duration();
    let w = m.mode_freq(k);
    let pref = 0.5 * m.lamb_dicke()[k] * m.coupling(ion, k);
    let inner = RunningIntegral::new(p, |s| C64::from_polar(omega_at(p, s), phase_at(p, w, s)), 1e-13);
    integrate_pulse(p, |t| inner.at(t), 0.0, tau, 1e-12) * (pref / tau)
}

/// `c_k ∫∫_{t'<t} Ω Ω' sin(θ − θ')`, nested.
pub fn theta_quad(p: &PulseProgram, m: &ModeSpec, j1: usize, j2: usize) -> f64 {
    theta_moment_quad(p, m, j1, j2, 0).iter().sum()
}

/// Per mode `c_k ∫∫_{t'<t} (t − t')ʲ Ω Ω' Im[iʲ e^{i(θ − θ')}]`, nested:
/// the `j`-th derivative of each mode's angle contribution.
pub fn theta_moment_quad(p: &PulseProgram, m: &ModeSpec, j1: usize, j2: usize, order: u32) -> Vec<f64> {
    let tau = p.duration();
    let rot = C64::new(0.0, 1.0).powu(order);
    (0..m.num_modes())
        .map(|k| {
            let eta = m.lamb_dicke()[k];
            let c = 0.5 * eta * eta * m.coupling(j1, k) * m.coupling(j2, k);
            let w = m.mode_freq(k);
            let f = |s: f64| C64::from_polar(omega_at(p, s), phase_at(p, w, s));
            // (t − t')ʲ = Σ_i C(j,i) tʲ⁻ⁱ (−t')ⁱ
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..=order {
                let binom = (0..i).fold(1.0, |b, q| b * (order - q) as f64 / (q + 1) as f64);
                let inner = RunningIntegral::new(p, move |s| f(s).conj() * (-s).powi(i as i32), 1e-13);
                acc += integrate_pulse(p, |t| f(t) * t.powi((order - i) as i32) * inner.at(t), 0.0, tau, 1e-12) * binom;
            }
            c * (rot * acc).im
        })
        .collect()
}

/// Literal displacement filter function by single quadrature.
pub fn ff_alpha_quad(p: &PulseProgram, m: &ModeSpec, j1: usize, j2: usize, f_hz: f64) -> f64 {
    let tau = p.duration();
    let nu = TAU * f_hz;
    (0..m.num_modes())
        .map(|k| {
            let eta = m.lamb_dicke()[k];
            let w = m.mode_freq(k);
            let b = m.coupling(j1, k).powi(2) + m.coupling(j2, k).powi(2);
            let v = integrate_pulse(p, |t| C64::from_polar(omega_at(p, t), nu * t - phase_at(p, w, t)), 0.0, tau, 1e-13);
            b * (v * (0.5 * eta * eta)).norm_sqr()
        })
        .sum()
}

/// Literal angle filter function by nested quadrature.
pub fn ff_theta_quad(p: &PulseProgram, m: &ModeSpec, j1: usize, j2: usize, f_hz: f64) -> f64 {
    let tau = p.duration();
    let nu = TAU * f_hz;
    let mut total = C64::new(0.0, 0.0);
    for k in 0..m.num_modes() {
        let eta = m.lamb_dicke()[k];
        let c = 0.5 * eta * eta * m.coupling(j1, k) * m.coupling(j2, k);
        let w = m.mode_freq(k);
        let outer = |t: f64| {
            let th = phase_at(p, w, t);
            let om = omega_at(p, t);
            let inner = integrate_pulse(
                p,
                |s| {
                    let d = th - phase_at(p, w, s);
                    (C64::from_polar(1.0, nu * t) - C64::from_polar(1.0, nu * s)) * (omega_at(p, s) * d.cos())
                },
                0.0,
                t,
                1e-12,
            );
            inner * om
        };
        total += integrate_pulse(p, outer, 0.0, tau, 1e-10) * c;
    }
    total.norm_sqr()
}

/// Random pulse: `n` segments, detunings within `spread` of `center`,
/// amplitudes in `[0.2, 1] · amp`.
pub fn random_pulse(rng: &mut ChaCha8Rng, n: usize, tau: f64, center: f64, spread: f64, amp: f64) -> PulseProgram {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let sum: f64 = weights.iter().sum();
    let segs = weights
        .iter()
        .map(|w| {
            msgate::Segment::new(
                tau * w / sum,
                center + spread * rng.random_range(-1.0..1.0),
                amp * rng.random_range(0.2..1.0),
            )
            .unwrap()
        })
        .collect();
    PulseProgram::new(segs).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two ions, COM 2 MHz, tilt 1.95 MHz, η = 0.1.
pub fn two_ion() -> ModeSpec {
    msgate::modes::two_ion_modes(TAU * 2.0e6, TAU * 1.95e6, 0.1).unwrap()
}

// ---------------------------------------------------------------- linear algebra

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix; eigenvalues
/// ascending, eigenvectors as columns `v[i][k]`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[x][x].total_cmp(&a[y][y]));
    let vals = idx.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| idx.iter().map(|&i| v[r][i]).collect()).collect();
    (vals, vecs)
}

// ---------------------------------------------------------------- fits

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Least-squares polynomial coefficients (ascending powers).
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
    let m = degree + 1;
    let mut ata = vec![vec![0.0; m]; m];
    let mut aty = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let pw: Vec<f64> = (0..m).map(|p| xi.powi(p as i32)).collect();
        for r in 0..m {
            aty[r] += pw[r] * yi;
            for c in 0..m {
                ata[r][c] += pw[r] * pw[c];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..m {
        let piv = (col..m).max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs())).unwrap();
        ata.swap(col, piv);
        aty.swap(col, piv);
        for r in col + 1..m {
            let f = ata[r][col] / ata[col][col];
            for c in col..m {
                ata[r][c] -= f * ata[col][c];
            }
            aty[r] -= f * aty[col];
        }
    }
    let mut coef = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|c| ata[r][c] * coef[c]).sum();
        coef[r] = (aty[r] - s) / ata[r][r];
    }
    coef
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

pub fn rel_err_c(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

// ---------------------------------------------------------------- scenario

/// Robust π/8 half (100 µs), its repeat and its mirror composite.
pub struct Scenario {
    pub modes: ModeSpec,
    pub pair: msgate::IonPair,
    pub half: PulseProgram,
    pub robust: PulseProgram,
    pub arobust: PulseProgram,
}

pub fn scenario() -> &'static Scenario {
    static CELL: std::sync::OnceLock<Scenario> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let modes = two_ion();
        let pair = msgate::IonPair::new(0, 1, &modes).unwrap();
        let cfg = msgate::optimizer::OptimizerConfig {
            gate_time: 100e-6,
            target_angle: msgate::TARGET_ANGLE / 2.0,
            ..Default::default()
        };
        let half = msgate::optimizer::optimize_fm(&cfg, &modes, pair).unwrap().pulse;
        let robust = half.repeated(2).unwrap();
        let arobust = msgate::arobust::two_ion_arobust(&half, &modes, pair).unwrap().composite;
        Scenario { modes, pair, half, robust, arobust }
    })
}

/// `(Θ(ε) − π/4)²` from the closed-form kernel.
pub fn theta_error(p: &PulseProgram, m: &ModeSpec, pair: msgate::IonPair, eps: f64) -> f64 {
    let q = msgate::pulse::apply_offset(p, msgate::DetuningOffset { epsilon: eps });
    (msgate::kernel::rotation_angle(&q, m, pair) - msgate::TARGET_ANGLE).powi(2)
}

/// Seed pool for higher-order composites: every optimizer start at ±π/8
/// and the mirror of each.
pub fn seed_pool() -> Vec<PulseProgram> {
    let s = scenario();
    let mut pool = Vec::new();
    for sign in [1.0, -1.0] {
        let cfg = msgate::optimizer::OptimizerConfig {
            gate_time: 100e-6,
            target_angle: sign * msgate::TARGET_ANGLE / 2.0,
            ..Default::default()
        };
        let r = msgate::optimizer::optimize_fm(&cfg, &s.modes, s.pair).unwrap();
        for c in r.candidates {
            let m = msgate::pulse::mirror_pulse(&c.pulse, s.modes.mode_freq(0), s.modes.mode_freq(1));
            pool.push(c.pulse);
            pool.push(m);
        }
    }
    pool
}

/// Offsets `2π·[50, 500]` Hz, log-spaced.
pub fn offset_range() -> Vec<f64> {
    (0..12).map(|i| TAU * 50.0 * 10f64.powf(i as f64 / 11.0)).collect()
}
