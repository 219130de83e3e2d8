//! Scaled oscillatory moments `p_m(x) = ∫₀¹ uᵐ e^{ixu} du` and related
//! primitives for closed-form segment integrals.
//!
//! A segment of length `Δ` with phase slope `μ` contributes
//! `∫₀^Δ sᵐ e^{iμs} ds = Δ^{m+1} p_m(μΔ)`.

use crate::C64;

/// `p_0(x) ..= p_{m_max}(x)`.
///
/// Upward recurrence `p_m = (e^{ix} − m p_{m−1})/(ix)` amplifies error by
/// `m/|x|` per step, so it is used only while `|x| ≥ max(m + 1, 2)`; the
/// remaining orders come from the power series.
pub(crate) fn moments(x: f64, m_max: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m_max + 1];
    let e = C64::new(x.cos(), x.sin());
    let inv = C64::new(0.0, -1.0 / x);
    let ix = C64::new(0.0, x);
    for m in 0..=m_max {
        let use_recurrence = x.abs() >= (m as f64 + 1.0).max(2.0);
        out[m] = if use_recurrence {
            if m == 0 {
                (e - 1.0) * inv
            } else {
                (e - out[m - 1] * m as f64) * inv
            }
        } else {
            // p_m = Σ_n (ix)^n / (n! (m+n+1))
            let mut term = C64::new(1.0, 0.0);
            let mut acc = C64::new(1.0 / (m as f64 + 1.0), 0.0);
            for n in 1..400 {
                term = term * ix / n as f64;
                let add = term / (m + n + 1) as f64;
                acc += add;
                if n > 4 && add.norm() < 1e-18 * acc.norm().max(1e-300) {
                    break;
                }
            }
            acc
        };
    }
    out
}

/// `∫₀¹ u² |p_0(xu)|² du = 2(x − sin x)/x³`.
pub(crate) fn loop_area(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // 2 Σ_{n≥1} (−1)^{n+1} x^{2n−2}/(2n+1)!
        let x2 = x * x;
        let mut term = 1.0 / 6.0;
        let mut acc = term;
        for n in 2..12 {
            term *= -x2 / ((2 * n) as f64 * (2 * n + 1) as f64);
            acc += term;
        }
        2.0 * acc
    } else {
        2.0 * (x - x.sin()) / (x * x * x)
    }
}

/// `t(x, y) = ∫₀¹ e^{ixu} ∫₀ᵘ e^{iyv} dv du`.
pub(crate) fn ordered_pair(x: f64, y: f64) -> C64 {
    if y.abs() > 0.5 {
        let a = moments(x + y, 0)[0];
        let b = moments(x, 0)[0];
        (a - b) / C64::new(0.0, y)
    } else {
        // ∫₀ᵘ e^{iyv} dv = Σ_n (iy)^n u^{n+1}/(n+1)!
        const TERMS: usize = 16;
        let p = moments(x, TERMS + 1);
        let iy = C64::new(0.0, y);
        let mut coef = C64::new(1.0, 0.0);
        let mut acc = C64::new(0.0, 0.0);
        for n in 0..=TERMS {
            if n > 0 {
                coef = coef * iy / n as f64;
            }
            acc += coef / (n as f64 + 1.0) * p[n + 1];
        }
        acc
    }
}
