//! Angle-robust composite gates.
//!
//! Robust seeds (`α = 0`, `∂α/∂ω = 0`) are amplitude-weighted and
//! concatenated so that the total rotation angle is `π/4` while its drift
//! derivatives cancel. Because every seed closes its phase-space loops, the
//! composite's angle and angle derivatives are the β²-weighted sums of the
//! seeds' values; the composite is re-evaluated to confirm this.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{diagnostics, rotation_angle, weighted_theta_derivative, IonPair};
use crate::modes::ModeSpec;
use crate::pulse::{concatenate_all, mirror_pulse, scale_amplitude, PulseFile, PulseProgram};
use crate::TARGET_ANGLE;

/// Seed thresholds.
pub const SEED_ERR_ALPHA: f64 = 1e-4;
pub const SEED_ANGLE_TOL: f64 = 1e-6;
/// Relative to `τ²`.
pub const SEED_DALPHA: f64 = 1e-4;
/// Largest accepted condition number of the weighting system.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct AmSolution {
    /// Amplitude factors, one per seed, in concatenation order.
    pub betas: Vec<f64>,
    pub composite: PulseProgram,
    /// Row residuals of the solved weighting system (angle row first,
    /// derivative rows in units of `τ_refʲ`).
    pub linear_residuals: Vec<f64>,
    /// `|Θ − π/4|` recomputed on the composite.
    pub theta_residual: f64,
    /// `Σ_k r_kʲ ∂ʲΘ/∂ω_kʲ` recomputed on the composite, `j = 1..=n`.
    pub order_residuals: Vec<f64>,
    pub condition_number: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmSolutionRecord {
    pub betas: Vec<f64>,
    pub linear_residuals: Vec<f64>,
    pub theta_residual_rad: f64,
    pub order_residuals: Vec<f64>,
    pub condition_number: f64,
    pub composite: PulseFile,
}

impl AmSolution {
    pub fn to_record(&self) -> AmSolutionRecord {
        AmSolutionRecord {
            betas: self.betas.clone(),
            linear_residuals: self.linear_residuals.clone(),
            theta_residual_rad: self.theta_residual,
            order_residuals: self.order_residuals.clone(),
            condition_number: self.condition_number,
            composite: PulseFile::from(&self.composite),
        }
    }
}

/// Fails unless the pulse closes its loops to first order in drift.
pub fn check_robust_seed(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, label: &str) -> Result<()> {
    let d = diagnostics(pulse, modes, pair, 1)?;
    if !(d.err_alpha < SEED_ERR_ALPHA) {
        return Err(Error::validation(
            label,
            format!("not a robust seed: E_alpha = {:.3e} (limit {SEED_ERR_ALPHA:.0e})", d.err_alpha),
        ));
    }
    let tau = pulse.duration();
    let da = d.dalpha_norm_sqr();
    if !(da < SEED_DALPHA * tau * tau) {
        return Err(Error::validation(
            label,
            format!(
                "not a robust seed: sum |dalpha/domega|^2 = {:.3e} s^2 (limit {:.3e})",
                da,
                SEED_DALPHA * tau * tau
            ),
        ));
    }
    Ok(())
}

fn check_ratios(modes: &ModeSpec, ratios: &[f64]) -> Result<()> {
    if ratios.len() != modes.num_modes() || ratios.iter().any(|r| !r.is_finite()) {
        return Err(Error::validation(
            "ratios",
            format!("need {} finite drift ratios, got {}", modes.num_modes(), ratios.len()),
        ));
    }
    Ok(())
}

fn finish(
    pulses: &[PulseProgram],
    betas: Vec<f64>,
    linear_residuals: Vec<f64>,
    condition_number: f64,
    modes: &ModeSpec,
    pair: IonPair,
    ratios: &[f64],
    orders: u32,
) -> Result<AmSolution> {
    let scaled: Vec<PulseProgram> = pulses
        .iter()
        .zip(&betas)
        .map(|(p, b)| scale_amplitude(p, *b))
        .collect::<Result<_>>()?;
    let composite = concatenate_all(&scaled)?;
    let theta_residual = (rotation_angle(&composite, modes, pair) - TARGET_ANGLE).abs();
    let order_residuals = (1..=orders)
        .map(|j| weighted_theta_derivative(&composite, modes, pair, ratios, j))
        .collect::<Result<_>>()?;
    Ok(AmSolution {
        betas,
        composite,
        linear_residuals,
        theta_residual,
        order_residuals,
        condition_number,
    })
}

/// Two-ion mirror construction: `half ⧺ mirror(half)` with `β = β̃ = 1`.
pub fn two_ion_arobust(half: &PulseProgram, modes: &ModeSpec, pair: IonPair) -> Result<AmSolution> {
    if modes.num_ions() != 2 {
        return Err(Error::validation("modes", format!("mirror construction needs 2 ions, got {}", modes.num_ions())));
    }
    let eta = modes.lamb_dicke();
    if (eta[0] - eta[1]).abs() > 1e-12 * eta[0].abs().max(eta[1].abs()) {
        return Err(Error::validation("modes", format!("Lamb-Dicke mismatch: {} vs {}", eta[0], eta[1])));
    }
    pair.validate(modes)?;
    let half_target = 0.5 * TARGET_ANGLE;
    let theta = rotation_angle(half, modes, pair);
    if !((theta - half_target).abs() < SEED_ANGLE_TOL) {
        return Err(Error::validation(
            "half",
            format!("rotation angle {theta:.9} rad differs from pi/8 by more than {SEED_ANGLE_TOL:.0e}"),
        ));
    }
    check_robust_seed(half, modes, pair, "half")?;
    let mirrored = mirror_pulse(half, modes.mode_freq(0), modes.mode_freq(1));
    let ratios = vec![1.0; 2];
    let sol = finish(
        &[half.clone(), mirrored],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        1.0,
        modes,
        pair,
        &ratios,
        1,
    )?;
    let g = weighted_theta_derivative(half, modes, pair, &ratios, 1)?;
    let gc = sol.order_residuals[0];
    if sol.theta_residual > 1e-6 || gc.abs() > 1e-6 * g.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Structural(format!(
            "mirror composite check failed: |Theta - pi/4| = {:.3e}, gradient {gc:.3e} vs half {g:.3e}",
            sol.theta_residual
        )));
    }
    Ok(sol)
}

/// Solve `β₁²Θ₁ + β₂²Θ₂ = π/4`, `β₁²g₁ + β₂²g₂ = 0` by Cramer's rule.
pub fn solve_pair_weights(thetas: [f64; 2], grads: [f64; 2]) -> Result<[f64; 2]> {
    let det = thetas[0] * grads[1] - thetas[1] * grads[0];
    let scale = (thetas[0] * grads[1]).abs().max((thetas[1] * grads[0]).abs());
    if det == 0.0 || det.abs() < 1e-14 * scale || !det.is_finite() {
        return Err(Error::Singular(format!(
            "weighting system determinant {det:.3e} (angles {thetas:?}, gradients {grads:?})"
        )));
    }
    let x = [TARGET_ANGLE * grads[1] / det, -TARGET_ANGLE * grads[0] / det];
    let negative: Vec<String> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(i, v)| format!("beta^2[{i}] = {v:.6e}"))
        .collect();
    if !negative.is_empty() {
        return Err(Error::Infeasible(format!(
            "{}; seed pulses must have opposite-sign weighted angle gradients",
            negative.join(", ")
        )));
    }
    Ok(x)
}

/// Amplitude-weighted concatenation of two robust seeds.
pub fn am_concatenate(
    p1: &PulseProgram,
    p2: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    ratios: &[f64],
) -> Result<AmSolution> {
    pair.validate(modes)?;
    check_ratios(modes, ratios)?;
    check_robust_seed(p1, modes, pair, "p1")?;
    check_robust_seed(p2, modes, pair, "p2")?;
    let thetas = [rotation_angle(p1, modes, pair), rotation_angle(p2, modes, pair)];
    let grads = [
        weighted_theta_derivative(p1, modes, pair, ratios, 1)?,
        weighted_theta_derivative(p2, modes, pair, ratios, 1)?,
    ];
    let x = solve_pair_weights(thetas, grads)?;
    let res = vec![
        x[0] * thetas[0] + x[1] * thetas[1] - TARGET_ANGLE,
        (x[0] * grads[0] + x[1] * grads[1]) / p1.duration().max(p2.duration()),
    ];
    let m = DMatrix::from_row_slice(2, 2, &[thetas[0], thetas[1], grads[0], grads[1]]);
    let cond = condition_number(&scaled_rows(m, &[1.0, 1.0 / p1.duration().max(p2.duration())]));
    finish(
        &[p1.clone(), p2.clone()],
        vec![x[0].sqrt(), x[1].sqrt()],
        res,
        cond,
        modes,
        pair,
        ratios,
        1,
    )
}

fn scaled_rows(mut m: DMatrix<f64>, row_scale: &[f64]) -> DMatrix<f64> {
    for (i, s) in row_scale.iter().enumerate() {
        m.row_mut(i).scale_mut(*s);
    }
    m
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solve for `β_i²` from per-seed angles and derivative rows.
///
/// `derivs[i][j-1]` is `Σ_k r_kʲ ∂ʲΘ_i/∂ω_kʲ`; row `j` is scaled by
/// `τ_ref^{-j}` so all rows are radians. Returns `(β², residuals, cond)`.
pub fn solve_weights(
    thetas: &[f64],
    derivs: &[Vec<f64>],
    tau_ref: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let m = thetas.len();
    if derivs.len() != m || derivs.iter().any(|d| d.len() + 1 != m) {
        return Err(Error::validation("seeds", format!("need {m} seeds with {} derivative orders", m.saturating_sub(1))));
    }
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(0, i)] = thetas[i];
        for j in 1..m {
            a[(j, i)] = derivs[i][j - 1] / tau_ref.powi(j as i32);
        }
    }
    let cond = condition_number(&a);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Singular(format!("condition number {cond:.3e} exceeds {MAX_CONDITION:.0e}")));
    }
    let mut b = DVector::zeros(m);
    b[0] = TARGET_ANGLE;
    let x = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("LU factorisation failed".into()))?;
    let res: Vec<f64> = (&a * &x - &b).iter().cloned().collect();
    let negative: Vec<String> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < 0.0)
        .map(|(i, v)| format!("beta^2[{i}] = {v:.6e}"))
        .collect();
    if !negative.is_empty() {
        return Err(Error::Infeasible(format!(
            "{}; no non-negative amplitude weighting exists for these seeds",
            negative.join(", ")
        )));
    }
    Ok((x.iter().cloned().collect(), res, cond))
}

/// `n`-th order angle-robust composite from `n + 1` robust seeds.
pub fn nth_order_arobust(
    pulses: &[PulseProgram],
    modes: &ModeSpec,
    pair: IonPair,
    ratios: &[f64],
    n: u32,
) -> Result<AmSolution> {
    if n < 1 {
        return Err(Error::validation("n", "order must be ≥ 1"));
    }
    if pulses.len() != n as usize + 1 {
        return Err(Error::validation("pulses", format!("order {n} needs {} seeds, got {}", n + 1, pulses.len())));
    }
    pair.validate(modes)?;
    check_ratios(modes, ratios)?;
    for (i, p) in pulses.iter().enumerate() {
        check_robust_seed(p, modes, pair, &format!("pulses[{i}]"))?;
    }
    let thetas: Vec<f64> = pulses.iter().map(|p| rotation_angle(p, modes, pair)).collect();
    let derivs: Vec<Vec<f64>> = pulses
        .iter()
        .map(|p| {
            (1..=n)
                .map(|j| weighted_theta_derivative(p, modes, pair, ratios, j))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let tau_ref = pulses.iter().map(|p| p.duration()).sum::<f64>() / pulses.len() as f64;
    let (x, res, cond) = solve_weights(&thetas, &derivs, tau_ref)?;
    finish(pulses, x.iter().map(|v| v.sqrt()).collect(), res, cond, modes, pair, ratios, n)
}

/// Index sets of size `k` from `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Pick the feasible `n + 1`-subset of `candidates` needing the least
/// peak power (smallest max β·Ω). Non-robust candidates are skipped.
pub fn select_seeds(
    candidates: &[PulseProgram],
    modes: &ModeSpec,
    pair: IonPair,
    ratios: &[f64],
    n: u32,
) -> Result<(Vec<usize>, AmSolution)> {
    if n < 1 {
        return Err(Error::validation("n", "order must be ≥ 1"));
    }
    pair.validate(modes)?;
    check_ratios(modes, ratios)?;
    let usable: Vec<usize> = (0..candidates.len())
        .filter(|&i| check_robust_seed(&candidates[i], modes, pair, "candidate").is_ok())
        .collect();
    let thetas: Vec<f64> = usable.iter().map(|&i| rotation_angle(&candidates[i], modes, pair)).collect();
    let derivs: Vec<Vec<f64>> = usable
        .iter()
        .map(|&i| {
            (1..=n)
                .map(|j| weighted_theta_derivative(&candidates[i], modes, pair, ratios, j))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for combo in combinations(usable.len(), n as usize + 1) {
        let th: Vec<f64> = combo.iter().map(|&c| thetas[c]).collect();
        let dv: Vec<Vec<f64>> = combo.iter().map(|&c| derivs[c].clone()).collect();
        let tau_ref = combo.iter().map(|&c| candidates[usable[c]].duration()).sum::<f64>() / combo.len() as f64;
        let Ok((x, _, _)) = solve_weights(&th, &dv, tau_ref) else {
            continue;
        };
        let power = combo
            .iter()
            .zip(&x)
            .map(|(&c, v)| v.sqrt() * candidates[usable[c]].max_effective_amplitude())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(p, _)| power < *p) {
            best = Some((power, combo.iter().map(|&c| usable[c]).collect()));
        }
    }
    let Some((_, ids)) = best else {
        return Err(Error::Infeasible(format!(
            "no feasible set of {} among {} robust candidates",
            n + 1,
            usable.len()
        )));
    };
    let seeds: Vec<PulseProgram> = ids.iter().map(|&i| candidates[i].clone()).collect();
    let sol = nth_order_arobust(&seeds, modes, pair, ratios, n)?;
    Ok((ids, sol))
}
