//! Predicted measurement outcomes of MS gate sequences on `|00⟩`.
//!
//! Two independent routes are provided: the exact second-order Magnus
//! solution ([`ideal_populations`]) and a Fock-truncated master equation
//! ([`lindblad_sim`]) in the interaction picture of the modes. The latter
//! stores the density matrix as 4×4 blocks over the σ_x eigenbasis of the
//! pair, each block an operator on the motional space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{diagnostics, displacement, rotation_angle, IonPair};
use crate::modes::ModeSpec;
use crate::ode::{integrate, Tolerances};
use crate::pulse::{apply_offset, DetuningOffset, PulseProgram};
use crate::{C64, TWO_PI};

/// Largest admissible population on the top Fock level.
pub const TRUNCATION_LIMIT: f64 = 1e-4;

/// Σ_x eigenvalue of each ion for branch `b` (0..4).
fn signs(b: usize) -> [f64; 2] {
    [if b & 2 == 0 { 1.0 } else { -1.0 }, if b & 1 == 0 { 1.0 } else { -1.0 }]
}

/// Incoherent processes acting during the gate.
///
/// Channels: `√Γ_k a_k` and `√Γ_k a_k†` for heating, `√(1/T2_k) a_k†a_k`
/// for motional dephasing and `√(1/T2) σ_z^j` on each ion for carrier
/// dephasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Quanta per second, per mode.
    pub heating_rates: Vec<f64>,
    /// Seconds per mode; `null` for no motional dephasing.
    pub motional_dephasing_t2: Vec<Option<f64>>,
    /// Seconds; `null` for no carrier dephasing.
    pub carrier_t2: Option<f64>,
    /// Thermal occupation at the start, per mode.
    pub initial_nbar: Vec<f64>,
}

impl NoiseModel {
    pub fn noiseless(num_modes: usize) -> Self {
        NoiseModel {
            heating_rates: vec![0.0; num_modes],
            motional_dephasing_t2: vec![None; num_modes],
            carrier_t2: None,
            initial_nbar: vec![0.0; num_modes],
        }
    }

    pub fn validate(&self, modes: &ModeSpec) -> Result<()> {
        let m = modes.num_modes();
        if self.heating_rates.len() != m || self.motional_dephasing_t2.len() != m || self.initial_nbar.len() != m {
            return Err(Error::validation("noise", format!("per-mode lists must have {m} entries")));
        }
        if self.heating_rates.iter().chain(&self.initial_nbar).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation("noise", "heating rates and nbar must be finite and ≥ 0"));
        }
        let t2_ok = |t: &Option<f64>| t.is_none_or(|t| t > 0.0);
        if !self.motional_dephasing_t2.iter().all(t2_ok) || !t2_ok(&self.carrier_t2) {
            return Err(Error::validation("noise", "coherence times must be > 0"));
        }
        Ok(())
    }

    fn is_coherent(&self) -> bool {
        self.heating_rates.iter().all(|r| *r == 0.0)
            && self.motional_dephasing_t2.iter().all(|t| t.is_none_or(f64::is_infinite))
            && self.carrier_t2.is_none_or(f64::is_infinite)
    }
}

/// Measured quantities after the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub p00: f64,
    pub p11: f64,
    pub p01_10: f64,
    /// `2|ρ_{00,11}|`
    pub contrast: f64,
    /// `(P00 + P11)/2 + |ρ_{00,11}|`
    pub fidelity: f64,
}

/// Two-qubit density matrix in the computational basis `|00⟩,|01⟩,|10⟩,|11⟩`.
pub type SpinDensity = [[C64; 4]; 4];

fn observables(rho: &SpinDensity) -> Observables {
    let coh = rho[0][3].norm();
    let p00 = rho[0][0].re;
    let p11 = rho[3][3].re;
    Observables {
        p00,
        p11,
        p01_10: rho[1][1].re + rho[2][2].re,
        contrast: 2.0 * coh,
        fidelity: 0.5 * (p00 + p11) + coh,
    }
}

/// σ_x-branch matrix to computational basis.
fn to_computational(x: &[[C64; 4]; 4]) -> SpinDensity {
    // ⟨a|s⟩ = ±½ for two qubits: ⟨0|±⟩ = 1/√2, ⟨1|±⟩ = ±1/√2.
    let overlap = |a: usize, s: usize| -> f64 {
        let sg = signs(s);
        let bit = |q: usize| (a >> (1 - q)) & 1;
        let f = |q: usize| if bit(q) == 1 { sg[q] } else { 1.0 };
        0.5 * f(0) * f(1)
    };
    let mut out = [[C64::new(0.0, 0.0); 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let mut acc = C64::new(0.0, 0.0);
            for s in 0..4 {
                for t in 0..4 {
                    acc += x[s][t] * (overlap(a, s) * overlap(b, t));
                }
            }
            out[a][b] = acc;
        }
    }
    out
}

/// Exact evolution of `|00⟩ ⊗ thermal(n̄)` under one pulse.
pub fn ideal_populations(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, nbar: &[f64]) -> Result<Observables> {
    Ok(observables(&ideal_density(pulse, modes, pair, nbar)?))
}

/// Spin density matrix behind [`ideal_populations`].
pub fn ideal_density(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, nbar: &[f64]) -> Result<SpinDensity> {
    pair.validate(modes)?;
    let nm = modes.num_modes();
    if nbar.len() != nm || nbar.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::validation("nbar", format!("need {nm} finite values ≥ 0")));
    }
    let tau = pulse.duration();
    let theta = rotation_angle(pulse, modes, pair);
    let mut alpha = vec![[C64::new(0.0, 0.0); 2]; nm];
    for (k, a) in alpha.iter_mut().enumerate() {
        a[0] = displacement(pulse, modes, pair.j1, k, tau)?;
        a[1] = displacement(pulse, modes, pair.j2, k, tau)?;
    }
    let gamma = |b: usize, k: usize| {
        let s = signs(b);
        alpha[k][0] * s[0] + alpha[k][1] * s[1]
    };
    let mut x = [[C64::new(0.0, 0.0); 4]; 4];
    for s in 0..4 {
        for t in 0..4 {
            let (ss, st) = (signs(s), signs(t));
            let mut log = C64::new(0.0, theta * (ss[0] * ss[1] - st[0] * st[1]));
            for k in 0..nm {
                let (g, h) = (gamma(s, k), gamma(t, k));
                log += C64::new(-(g - h).norm_sqr() * (nbar[k] + 0.5), (h.conj() * g).im);
            }
            x[s][t] = log.exp() * 0.25;
        }
    }
    Ok(to_computational(&x))
}

/// Outcome of [`lindblad_sim`].
#[derive(Debug, Clone)]
pub struct LindbladResult {
    pub spin_density: SpinDensity,
    pub observables: Observables,
    /// Final `⟨a_k†a_k⟩`.
    pub mode_nbar: Vec<f64>,
    /// Final population of the top Fock level per mode.
    pub top_population: Vec<f64>,
    /// Largest `|tr ρ − 1|` seen at segment boundaries.
    pub trace_error: f64,
}

/// Multi-mode Fock space layout.
struct Space {
    dims: Vec<usize>,
    strides: Vec<usize>,
    size: usize,
    /// `level[k][m]`
    level: Vec<Vec<usize>>,
}

impl Space {
    fn new(dims: &[usize]) -> Space {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let size: usize = dims.iter().product();
        let level = (0..dims.len())
            .map(|k| (0..size).map(|m| (m / strides[k]) % dims[k]).collect())
            .collect();
        Space { dims: dims.to_vec(), strides, size, level }
    }
}

/// Per-segment couplings: `g[b][k]` and the phase of mode `k` at the segment start.
struct Drive {
    g: Vec<[f64; 4]>,
    phase0: Vec<f64>,
    slope: Vec<f64>,
    t0: f64,
}

fn drives(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair) -> Vec<Drive> {
    let nm = modes.num_modes();
    let mut phase = vec![0.0; nm];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(pulse.len());
    for (i, seg) in pulse.segments().iter().enumerate() {
        let amp = pulse.effective_amplitude(i);
        let g = (0..nm)
            .map(|k| {
                let eta = modes.lamb_dicke()[k];
                let (b1, b2) = (modes.coupling(pair.j1, k), modes.coupling(pair.j2, k));
                let mut row = [0.0; 4];
                for (b, r) in row.iter_mut().enumerate() {
                    let s = signs(b);
                    *r = 0.5 * amp * eta * (b1 * s[0] + b2 * s[1]);
                }
                row
            })
            .collect();
        let slope: Vec<f64> = (0..nm).map(|k| modes.mode_freq(k) - seg.detuning).collect();
        out.push(Drive { g, phase0: phase.clone(), slope: slope.clone(), t0: t });
        for k in 0..nm {
            phase[k] += slope[k] * seg.duration;
        }
        t += seg.duration;
    }
    out
}

/// `A_k = e^{−iθ_k(t)}` multiplying `a_k` in `H_b = Σ_k g_bk (A_k a_k + h.c.)`.
fn mode_phases(d: &Drive, t: f64) -> Vec<C64> {
    d.phase0
        .iter()
        .zip(&d.slope)
        .map(|(p, s)| C64::from_polar(1.0, -(p + s * (t - d.t0))))
        .collect()
}

fn check_nmax(modes: &ModeSpec, n_max: &[usize]) -> Result<()> {
    if n_max.len() != modes.num_modes() || n_max.iter().any(|n| *n < 2) {
        return Err(Error::validation("n_max", format!("need {} truncations ≥ 2", modes.num_modes())));
    }
    let size: usize = n_max.iter().map(|n| n + 1).product();
    if size > 4096 {
        return Err(Error::validation("n_max", format!("motional space of dimension {size} is too large")));
    }
    Ok(())
}

/// Integrate the master equation for `|00⟩ ⊗ thermal(n̄)` through the pulse.
pub fn lindblad_sim(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    noise: &NoiseModel,
    n_max: &[usize],
) -> Result<LindbladResult> {
    pair.validate(modes)?;
    noise.validate(modes)?;
    check_nmax(modes, n_max)?;
    let dims: Vec<usize> = n_max.iter().map(|n| n + 1).collect();
    let space = Space::new(&dims);
    if noise.is_coherent() && noise.initial_nbar.iter().all(|n| *n == 0.0) {
        pure_sim(pulse, modes, pair, &space)
    } else {
        mixed_sim(pulse, modes, pair, noise, &space)
    }
}

fn finish(x: [[C64; 4]; 4], diag: &[f64], space: &Space, trace_error: f64) -> Result<LindbladResult> {
    let nm = space.dims.len();
    let mut nbar = vec![0.0; nm];
    let mut top = vec![0.0; nm];
    for m in 0..space.size {
        for k in 0..nm {
            let n = space.level[k][m];
            nbar[k] += n as f64 * diag[m];
            if n + 1 == space.dims[k] {
                top[k] += diag[m];
            }
        }
    }
    for (k, p) in top.iter().enumerate() {
        if *p > TRUNCATION_LIMIT {
            return Err(Error::Truncation { mode: k, population: *p });
        }
    }
    let rho = to_computational(&x);
    Ok(LindbladResult {
        spin_density: rho,
        observables: observables(&rho),
        mode_nbar: nbar,
        top_population: top,
        trace_error,
    })
}

fn pure_sim(pulse: &PulseProgram, modes: &ModeSpec, pair: IonPair, space: &Space) -> Result<LindbladResult> {
    let d = space.size;
    let nm = space.dims.len();
    let mut psi = vec![C64::new(0.0, 0.0); 4 * d];
    for b in 0..4 {
        psi[b * d] = C64::new(0.5, 0.0);
    }
    let sq: Vec<f64> = (0..=space.dims.iter().max().copied().unwrap_or(1)).map(|n| (n as f64).sqrt()).collect();
    let tol = Tolerances { rtol: 1e-10, atol: 1e-13, max_steps: 2_000_000 };
    let mut h = 0.0;
    let mut trace_error: f64 = 0.0;
    for (seg, drv) in pulse.segments().iter().zip(drives(pulse, modes, pair)) {
        let t0 = drv.t0;
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            let ph = mode_phases(&drv, t);
            dy.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for b in 0..4 {
                let yb = &y[b * d..(b + 1) * d];
                let out = &mut dy[b * d..(b + 1) * d];
                for k in 0..nm {
                    let g = drv.g[k][b];
                    if g == 0.0 {
                        continue;
                    }
                    // −i g (A a + A* a†) ψ
                    let lo = C64::new(0.0, -g) * ph[k];
                    let hi = C64::new(0.0, -g) * ph[k].conj();
                    let s = space.strides[k];
                    let lv = &space.level[k];
                    for m in 0..d {
                        let n = lv[m];
                        if n + 1 < space.dims[k] {
                            out[m] += lo * sq[n + 1] * yb[m + s];
                        }
                        if n > 0 {
                            out[m] += hi * sq[n] * yb[m - s];
                        }
                    }
                }
            }
        };
        integrate(rhs, t0, t0 + seg.duration, &mut psi, &mut h, tol)?;
        let tr: f64 = psi.iter().map(|v| v.norm_sqr()).sum();
        trace_error = trace_error.max((tr - 1.0).abs());
    }
    let mut x = [[C64::new(0.0, 0.0); 4]; 4];
    for s in 0..4 {
        for t in 0..4 {
            x[s][t] = (0..d).map(|m| psi[s * d + m] * psi[t * d + m].conj()).sum();
        }
    }
    let diag: Vec<f64> = (0..d).map(|m| (0..4).map(|b| psi[b * d + m].norm_sqr()).sum()).collect();
    finish(x, &diag, space, trace_error)
}

fn thermal(space: &Space, nbar: &[f64]) -> Vec<f64> {
    let per_mode: Vec<Vec<f64>> = space
        .dims
        .iter()
        .zip(nbar)
        .map(|(&dim, &n)| {
            let mut p: Vec<f64> = (0..dim).map(|l| (n / (n + 1.0)).powi(l as i32) / (n + 1.0)).collect();
            if n == 0.0 {
                p = (0..dim).map(|l| if l == 0 { 1.0 } else { 0.0 }).collect();
            }
            let s: f64 = p.iter().sum();
            p.iter().map(|v| v / s).collect()
        })
        .collect();
    (0..space.size)
        .map(|m| (0..space.dims.len()).map(|k| per_mode[k][space.level[k][m]]).product())
        .collect()
}

fn mixed_sim(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    noise: &NoiseModel,
    space: &Space,
) -> Result<LindbladResult> {
    let d = space.size;
    let dd = d * d;
    let nm = space.dims.len();
    let th = thermal(space, &noise.initial_nbar);
    let mut rho = vec![C64::new(0.0, 0.0); 16 * dd];
    for blk in 0..16 {
        for m in 0..d {
            rho[blk * dd + m * d + m] = C64::new(0.25 * th[m], 0.0);
        }
    }
    let sq: Vec<f64> = (0..=space.dims.iter().max().copied().unwrap_or(1)).map(|n| (n as f64).sqrt()).collect();
    let heat = &noise.heating_rates;
    let deph: Vec<f64> = noise
        .motional_dephasing_t2
        .iter()
        .map(|t| t.map_or(0.0, |t| 0.5 / t))
        .collect();
    let carrier = noise.carrier_t2.map_or(0.0, |t| 1.0 / t);
    // Static part of the generator per (m, n): heating anticommutator and dephasing.
    let mut decay = vec![0.0; dd];
    for m in 0..d {
        for n in 0..d {
            let mut r = 0.0;
            for k in 0..nm {
                let (lm, ln) = (space.level[k][m] as f64, space.level[k][n] as f64);
                let top = (space.dims[k] - 1) as f64;
                let up = |l: f64| if l < top { l + 1.0 } else { 0.0 };
                r += 0.5 * heat[k] * (lm + ln + up(lm) + up(ln));
                r += deph[k] * (lm - ln).powi(2);
            }
            decay[m * d + n] = r;
        }
    }
    let tol = Tolerances { rtol: 1e-8, atol: 1e-12, max_steps: 2_000_000 };
    let mut h = 0.0;
    let mut trace_error: f64 = 0.0;
    for (seg, drv) in pulse.segments().iter().zip(drives(pulse, modes, pair)) {
        let t0 = drv.t0;
        let rhs = |t: f64, y: &[C64], dy: &mut [C64]| {
            let ph = mode_phases(&drv, t);
            for blk in 0..16 {
                let (b, c) = (blk / 4, blk % 4);
                let yb = &y[blk * dd..(blk + 1) * dd];
                let out = &mut dy[blk * dd..(blk + 1) * dd];
                for i in 0..dd {
                    out[i] = yb[i] * (-decay[i] - 2.0 * carrier);
                }
                if carrier > 0.0 {
                    for j in [2usize, 1] {
                        let src = ((b ^ j) * 4 + (c ^ j)) * dd;
                        for i in 0..dd {
                            out[i] += y[src + i] * carrier;
                        }
                    }
                }
                for k in 0..nm {
                    let s = space.strides[k];
                    let lv = &space.level[k];
                    let top = space.dims[k] - 1;
                    let (gb, gc) = (drv.g[k][b], drv.g[k][c]);
                    // −i(H_b ρ − ρ H_c), H = g(A a + A* a†)
                    let lo_l = C64::new(0.0, -gb) * ph[k];
                    let hi_l = C64::new(0.0, -gb) * ph[k].conj();
                    let lo_r = C64::new(0.0, gc) * ph[k];
                    let hi_r = C64::new(0.0, gc) * ph[k].conj();
                    let hk = heat[k];
                    for m in 0..d {
                        let nmv = lv[m];
                        for n in 0..d {
                            let nn = lv[n];
                            let mut acc = C64::new(0.0, 0.0);
                            if gb != 0.0 {
                                if nmv < top {
                                    acc += lo_l * sq[nmv + 1] * yb[(m + s) * d + n];
                                }
                                if nmv > 0 {
                                    acc += hi_l * sq[nmv] * yb[(m - s) * d + n];
                                }
                            }
                            if gc != 0.0 {
                                // ρ a: column n − s, ρ a†: column n + s
                                if nn > 0 {
                                    acc += lo_r * sq[nn] * yb[m * d + n - s];
                                }
                                if nn < top {
                                    acc += hi_r * sq[nn + 1] * yb[m * d + n + s];
                                }
                            }
                            if hk > 0.0 {
                                if nmv < top && nn < top {
                                    acc += yb[(m + s) * d + n + s] * (hk * sq[nmv + 1] * sq[nn + 1]);
                                }
                                if nmv > 0 && nn > 0 {
                                    acc += yb[(m - s) * d + n - s] * (hk * sq[nmv] * sq[nn]);
                                }
                            }
                            out[m * d + n] += acc;
                        }
                    }
                }
            }
        };
        integrate(rhs, t0, t0 + seg.duration, &mut rho, &mut h, tol)?;
        let tr: f64 = (0..4).map(|b| (0..d).map(|m| rho[(b * 5) * dd + m * d + m].re).sum::<f64>()).sum();
        trace_error = trace_error.max((tr - 1.0).abs());
    }
    let mut x = [[C64::new(0.0, 0.0); 4]; 4];
    for s in 0..4 {
        for t in 0..4 {
            x[s][t] = (0..d).map(|m| rho[(s * 4 + t) * dd + m * d + m]).sum();
        }
    }
    let diag: Vec<f64> = (0..d).map(|m| (0..4).map(|b| rho[(b * 5) * dd + m * d + m].re).sum()).collect();
    finish(x, &diag, space, trace_error)
}

/// One row of a detuning scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// rad/s
    pub offset: f64,
    #[serde(flatten)]
    pub observables: Observables,
    /// Single-gate errors at this offset.
    pub err_alpha: f64,
    pub err_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub repeats: usize,
    pub points: Vec<ScanPoint>,
}

impl ScanResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset_hz,p00,p11,p01_10,contrast,fidelity,err_alpha,err_theta\n");
        for p in &self.points {
            let o = &p.observables;
            out += &format!(
                "{:.6},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                p.offset / TWO_PI,
                o.p00,
                o.p11,
                o.p01_10,
                o.contrast,
                o.fidelity,
                p.err_alpha,
                p.err_theta
            );
        }
        out
    }
}

/// Default truncation for noisy scans.
pub const NOISY_N_MAX: usize = 10;

/// Evaluate `repeats` back-to-back gates at each offset (rad/s).
///
/// Without noise the exact solution is used; with noise each point is a
/// master-equation run with `n_max` levels per mode.
pub fn detuning_scan(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    offsets: &[f64],
    repeats: usize,
    noise: Option<&NoiseModel>,
    n_max: usize,
) -> Result<ScanResult> {
    if repeats < 1 {
        return Err(Error::validation("repeats", "must be ≥ 1"));
    }
    if offsets.iter().any(|o| !o.is_finite()) {
        return Err(Error::validation("offsets", "must be finite"));
    }
    pair.validate(modes)?;
    if let Some(n) = noise {
        n.validate(modes)?;
        check_nmax(modes, &vec![n_max; modes.num_modes()])?;
    }
    let mut points = Vec::with_capacity(offsets.len());
    for &eps in offsets {
        let gate = apply_offset(pulse, DetuningOffset { epsilon: eps });
        let seq = gate.repeated(repeats)?;
        let observables = match noise {
            None => ideal_populations(&seq, modes, pair, &vec![0.0; modes.num_modes()])?,
            Some(n) => lindblad_sim(&seq, modes, pair, n, &vec![n_max; modes.num_modes()])?.observables,
        };
        let d = diagnostics(&gate, modes, pair, 1)?;
        points.push(ScanPoint { offset: eps, observables, err_alpha: d.err_alpha, err_theta: d.err_theta });
    }
    Ok(ScanResult { repeats, points })
}

/// Default sequence lengths of the repeated-gate protocol.
pub const DEFAULT_SCHEDULE: [usize; 4] = [1, 5, 9, 13];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateFit {
    /// Slope of `1 − F` versus gate count.
    pub gate_error: f64,
    pub std_error: f64,
    pub intercept: f64,
}

/// Least-squares per-gate error from state fidelities after `counts` gates.
pub fn repeated_gate_fit(counts: &[usize], fidelities: &[f64]) -> Result<GateFit> {
    if counts.len() != fidelities.len() {
        return Err(Error::validation("fidelities", "one fidelity per gate count"));
    }
    let mut distinct = counts.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::validation("counts", "need at least two distinct gate counts"));
    }
    let n = counts.len() as f64;
    let x: Vec<f64> = counts.iter().map(|c| *c as f64).collect();
    let y: Vec<f64> = fidelities.iter().map(|f| 1.0 - f).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = if counts.len() > 2 {
        let ss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (ss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(GateFit { gate_error: slope, std_error, intercept })
}

/// State fidelity after each count of back-to-back gates. Counts must be
/// `1 mod 4`, for which the ideal sequence prepares the same Bell state.
pub fn repeated_gate_fidelities(
    pulse: &PulseProgram,
    modes: &ModeSpec,
    pair: IonPair,
    counts: &[usize],
    noise: Option<&NoiseModel>,
    n_max: usize,
) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().find(|c| **c % 4 != 1) {
        return Err(Error::validation("counts", format!("gate count {c} is not 1 mod 4")));
    }
    counts
        .iter()
        .map(|&c| {
            let seq = pulse.repeated(c)?;
            Ok(match noise {
                None => ideal_populations(&seq, modes, pair, &vec![0.0; modes.num_modes()])?.fidelity,
                Some(n) => lindblad_sim(&seq, modes, pair, n, &vec![n_max; modes.num_modes()])?.observables.fidelity,
            })
        })
        .collect()
}
