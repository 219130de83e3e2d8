//! Motional-mode data: frequencies, ion–mode couplings, Lamb-Dicke
//! parameters and drift ratios.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TWO_PI;

const ORTHONORMAL_TOL: f64 = 1e-12;

/// Immutable description of the transverse modes seen by a gate.
///
/// `coupling[j][k]` is the normalised participation of ion `j` in mode `k`.
/// Modes are stored in descending frequency order when produced by the
/// constructors in this module; files may use any order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    num_ions: usize,
    mode_freqs: Vec<f64>,
    coupling: Vec<Vec<f64>>,
    lamb_dicke: Vec<f64>,
    drift_ratios: Vec<f64>,
}

impl ModeSpec {
    /// Builds and validates a spec. `drift_ratios = None` means uniform drift.
    pub fn new(
        mode_freqs: Vec<f64>,
        coupling: Vec<Vec<f64>>,
        lamb_dicke: Vec<f64>,
        drift_ratios: Option<Vec<f64>>,
    ) -> Result<Self> {
        let num_ions = coupling.len();
        let drift_ratios = drift_ratios.unwrap_or_else(|| vec![1.0; mode_freqs.len()]);
        let spec = ModeSpec {
            num_ions,
            mode_freqs,
            coupling,
            lamb_dicke,
            drift_ratios,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let m = self.mode_freqs.len();
        if self.num_ions == 0 {
            return Err(Error::validation("coupling", "at least one ion is required"));
        }
        if m == 0 {
            return Err(Error::validation("mode_freqs", "at least one mode is required"));
        }
        if self.lamb_dicke.len() != m {
            return Err(Error::validation(
                "lamb_dicke",
                format!("expected {m} entries, found {}", self.lamb_dicke.len()),
            ));
        }
        if self.drift_ratios.len() != m {
            return Err(Error::validation(
                "drift_ratios",
                format!("expected {m} entries, found {}", self.drift_ratios.len()),
            ));
        }
        for (j, row) in self.coupling.iter().enumerate() {
            if row.len() != m {
                return Err(Error::validation(
                    "coupling",
                    format!("row {j} has {} entries, expected {m}", row.len()),
                ));
            }
            if row.iter().any(|b| !b.is_finite()) {
                return Err(Error::validation("coupling", format!("row {j} is not finite")));
            }
        }
        for (k, &w) in self.mode_freqs.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation(
                    "mode_freqs",
                    format!("mode {k} frequency {w} must be positive"),
                ));
            }
        }
        for (k, &eta) in self.lamb_dicke.iter().enumerate() {
            if !(eta.is_finite() && eta >= 0.0) {
                return Err(Error::validation(
                    "lamb_dicke",
                    format!("mode {k} value {eta} must be non-negative"),
                ));
            }
        }
        if self.drift_ratios.iter().any(|r| !r.is_finite()) {
            return Err(Error::validation("drift_ratios", "entries must be finite"));
        }
        for k in 0..m {
            for l in k..m {
                let dot: f64 = self.coupling.iter().map(|row| row[k] * row[l]).sum();
                let want = if k == l { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::validation(
                        "coupling",
                        format!("columns {k} and {l} not orthonormal (inner product {dot:.3e})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn num_ions(&self) -> usize {
        self.num_ions
    }

    pub fn num_modes(&self) -> usize {
        self.mode_freqs.len()
    }

    /// Mode angular frequencies, rad/s.
    pub fn mode_freqs(&self) -> &[f64] {
        &self.mode_freqs
    }

    pub fn mode_freq(&self, k: usize) -> f64 {
        self.mode_freqs[k]
    }

    /// `b_j^k` for ion `j`, mode `k`.
    pub fn coupling(&self, ion: usize, mode: usize) -> f64 {
        self.coupling[ion][mode]
    }

    pub fn coupling_matrix(&self) -> &[Vec<f64>] {
        &self.coupling
    }

    pub fn lamb_dicke(&self) -> &[f64] {
        &self.lamb_dicke
    }

    pub fn drift_ratios(&self) -> &[f64] {
        &self.drift_ratios
    }

    /// Copy with every mode frequency shifted by `r_k * epsilon`.
    pub fn with_drift(&self, epsilon: f64) -> ModeSpec {
        let mut out = self.clone();
        for (w, r) in out.mode_freqs.iter_mut().zip(&self.drift_ratios) {
            *w += r * epsilon;
        }
        out
    }

    /// Copy with only mode `k` shifted by `delta`.
    pub fn with_mode_shift(&self, k: usize, delta: f64) -> ModeSpec {
        let mut out = self.clone();
        out.mode_freqs[k] += delta;
        out
    }

    /// Copy with replaced drift ratios (validated).
    pub fn with_drift_ratios(&self, ratios: Vec<f64>) -> Result<ModeSpec> {
        ModeSpec::new(
            self.mode_freqs.clone(),
            self.coupling.clone(),
            self.lamb_dicke.clone(),
            Some(ratios),
        )
    }
}

/// Two-ion radial modes: COM (`b = [1, 1]/√2`) then tilt (`b = [1, -1]/√2`).
pub fn two_ion_modes(omega_com: f64, omega_tilt: f64, eta: f64) -> Result<ModeSpec> {
    if !(omega_tilt > 0.0 && omega_tilt.is_finite()) {
        return Err(Error::validation("omega_tilt", "must be positive"));
    }
    if !(omega_com > omega_tilt && omega_com.is_finite()) {
        return Err(Error::validation(
            "omega_com",
            format!("COM frequency {omega_com} must exceed tilt frequency {omega_tilt}"),
        ));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ModeSpec::new(
        vec![omega_com, omega_tilt],
        vec![vec![h, h], vec![h, -h]],
        vec![eta, eta],
        None,
    )
}

/// Controls for the equilibrium-position solve in [`chain_modes_with`].
#[derive(Debug, Clone, Copy)]
pub struct ChainSolver {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for ChainSolver {
    fn default() -> Self {
        ChainSolver {
            max_iters: 200,
            tolerance: 1e-13,
        }
    }
}

/// Radial modes of a harmonically confined linear Coulomb chain.
///
/// `axial_freq` and `radial_freq` are single-ion trap frequencies (rad/s).
/// Modes are returned in descending frequency order, each coupling column
/// signed so its first non-negligible entry is positive, and
/// `η_k = eta_com·√(ω_COM/ω_k)`.
pub fn chain_modes(
    num_ions: usize,
    axial_freq: f64,
    radial_freq: f64,
    eta_com: f64,
) -> Result<ModeSpec> {
    chain_modes_with(num_ions, axial_freq, radial_freq, eta_com, ChainSolver::default())
}

pub fn chain_modes_with(
    num_ions: usize,
    axial_freq: f64,
    radial_freq: f64,
    eta_com: f64,
    solver: ChainSolver,
) -> Result<ModeSpec> {
    if num_ions < 2 {
        return Err(Error::validation("num_ions", "a chain needs at least two ions"));
    }
    if !(axial_freq > 0.0 && axial_freq.is_finite()) {
        return Err(Error::validation("axial_freq", "must be positive"));
    }
    if !(radial_freq > axial_freq && radial_freq.is_finite()) {
        return Err(Error::validation(
            "radial_freq",
            "must exceed the axial frequency",
        ));
    }
    let positions = equilibrium_positions(num_ions, solver)?;
    let ratio = radial_freq / axial_freq;
    let hessian = radial_hessian(&positions, ratio * ratio);
    let eig = SymmetricEigen::new(hessian);

    let mut order: Vec<usize> = (0..num_ions).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut freqs = Vec::with_capacity(num_ions);
    let mut columns = Vec::with_capacity(num_ions);
    for (k, &idx) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            return Err(Error::Structural(format!(
                "radial mode {k} is unstable (squared frequency ratio {lambda:.4e}); \
                 the chain would buckle into a zig-zag"
            )));
        }
        freqs.push(axial_freq * lambda.sqrt());
        let mut col: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-9) {
            if *first < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
        columns.push(col);
    }
    // Remove eigen-solver round-off so the 1e-12 orthonormality check holds.
    let columns = gram_schmidt(columns);
    let coupling = (0..num_ions)
        .map(|j| columns.iter().map(|c| c[j]).collect())
        .collect();
    let w_com = freqs[0];
    let eta = freqs.iter().map(|w| eta_com * (w_com / w).sqrt()).collect();
    ModeSpec::new(freqs, coupling, eta, None)
}

fn gram_schmidt(mut cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for k in 0..cols.len() {
        for l in 0..k {
            let dot: f64 = cols[k].iter().zip(&cols[l]).map(|(a, b)| a * b).sum();
            let prev = cols[l].clone();
            cols[k].iter_mut().zip(prev).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = cols[k].iter().map(|a| a * a).sum::<f64>().sqrt();
        cols[k].iter_mut().for_each(|a| *a /= norm);
    }
    cols
}

/// Dimensionless radial Hessian in units of the axial frequency squared.
///
/// Positions are in units of `(e²/4πε₀ m ω_z²)^{1/3}`. The diagonal carries
/// `(ω_r/ω_z)² − Σ 1/|u_i − u_j|³`, the off-diagonal `+1/|u_i − u_j|³`.
pub fn radial_hessian(positions: &[f64], radial_ratio_sq: f64) -> DMatrix<f64> {
    let n = positions.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = radial_ratio_sq;
        for j in 0..n {
            if i != j {
                let c = 1.0 / (positions[i] - positions[j]).abs().powi(3);
                diag -= c;
                h[(i, j)] = c;
            }
        }
        h[(i, i)] = diag;
    }
    h
}

/// Dimensionless axial equilibrium positions, ascending, by damped Newton.
pub fn equilibrium_positions(n: usize, solver: ChainSolver) -> Result<Vec<f64>> {
    // Initial spacing from the empirical large-chain scaling of the minimum gap.
    let spacing = 2.018 / (n as f64).powf(0.559);
    let mut u: Vec<f64> = (0..n)
        .map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * spacing)
        .collect();
    let energy = |u: &[f64]| -> f64 {
        let mut e = 0.0;
        for i in 0..u.len() {
            e += 0.5 * u[i] * u[i];
            for j in i + 1..u.len() {
                e += 1.0 / (u[j] - u[i]).abs();
            }
        }
        e
    };
    let mut residual = f64::INFINITY;
    for _ in 0..solver.max_iters {
        let mut grad = vec![0.0; n];
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            grad[i] = u[i];
            hess[(i, i)] = 1.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let d = u[i] - u[j];
                grad[i] -= d.signum() / (d * d);
                let c = 2.0 / d.abs().powi(3);
                hess[(i, i)] += c;
                hess[(i, j)] -= c;
            }
        }
        residual = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if residual < solver.tolerance {
            return Ok(u);
        }
        let step = hess
            .lu()
            .solve(&nalgebra::DVector::from_vec(grad))
            .ok_or_else(|| Error::Structural("singular axial Hessian".into()))?;
        let e0 = energy(&u);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            let ordered = trial.windows(2).all(|w| w[1] > w[0]);
            if ordered && energy(&trial) <= e0 + 1e-15 * e0.abs() {
                u = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::Convergence {
                    what: "chain equilibrium line search",
                    iterations: solver.max_iters,
                    residual,
                });
            }
        }
    }
    Err(Error::Convergence {
        what: "chain equilibrium Newton iteration",
        iterations: solver.max_iters,
        residual,
    })
}

/// On-disk representation; frequencies in cyclic Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeFile {
    pub num_ions: usize,
    pub mode_freqs_hz: Vec<f64>,
    /// Row-major, one row per ion.
    pub coupling: Vec<Vec<f64>>,
    pub lamb_dicke: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_ratios: Option<Vec<f64>>,
}

impl From<&ModeSpec> for ModeFile {
    fn from(spec: &ModeSpec) -> Self {
        ModeFile {
            num_ions: spec.num_ions,
            mode_freqs_hz: spec.mode_freqs.iter().map(|w| w / TWO_PI).collect(),
            coupling: spec.coupling.clone(),
            lamb_dicke: spec.lamb_dicke.clone(),
            drift_ratios: Some(spec.drift_ratios.clone()),
        }
    }
}

impl TryFrom<ModeFile> for ModeSpec {
    type Error = Error;

    fn try_from(file: ModeFile) -> Result<Self> {
        if file.coupling.len() != file.num_ions {
            return Err(Error::validation(
                "num_ions",
                format!(
                    "declared {} ions but coupling has {} rows",
                    file.num_ions,
                    file.coupling.len()
                ),
            ));
        }
        ModeSpec::new(
            file.mode_freqs_hz.iter().map(|f| f * TWO_PI).collect(),
            file.coupling,
            file.lamb_dicke,
            file.drift_ratios,
        )
    }
}

pub fn mode_spec_from_json(text: &str, origin: &str) -> Result<ModeSpec> {
    let file: ModeFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    ModeSpec::try_from(file)
}

pub fn load_mode_spec(path: impl AsRef<Path>) -> Result<ModeSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    mode_spec_from_json(&text, &path.display().to_string())
}

pub fn save_mode_spec(spec: &ModeSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&ModeFile::from(spec)).expect("mode file serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MHZ: f64 = 1e6 * TWO_PI;

    #[test]
    fn two_ion_coupling_matches_fixed_matrix() {
        let spec = two_ion_modes(2.0 * MHZ, 1.99 * MHZ, 0.1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(spec.coupling(0, 0), h);
        assert_eq!(spec.coupling(1, 0), h);
        assert_eq!(spec.coupling(0, 1), h);
        assert_eq!(spec.coupling(1, 1), -h);
        assert_eq!(spec.drift_ratios(), &[1.0, 1.0]);
        assert_eq!(spec.lamb_dicke(), &[0.1, 0.1]);
    }

    #[test]
    fn degenerate_or_misordered_two_ion_rejected() {
        assert!(two_ion_modes(2.0 * MHZ, 2.0 * MHZ, 0.1).is_err());
        assert!(two_ion_modes(1.9 * MHZ, 2.0 * MHZ, 0.1).is_err());
        assert!(two_ion_modes(2.0 * MHZ, -1.0, 0.1).is_err());
    }

    #[test]
    fn five_ion_com_is_uniform_and_first() {
        let spec = chain_modes(5, 0.3 * MHZ, 3.0 * MHZ, 0.08).unwrap();
        let u = 1.0 / 5f64.sqrt();
        for j in 0..5 {
            assert!((spec.coupling(j, 0) - u).abs() < 1e-12);
        }
        assert!((spec.mode_freq(0) - 3.0 * MHZ).abs() < 1e-6 * MHZ);
        assert!(spec.mode_freqs().windows(2).all(|w| w[0] > w[1]));
        assert!((spec.lamb_dicke()[0] - 0.08).abs() < 1e-15);
        assert!(spec.lamb_dicke()[4] > 0.08);
    }

    #[test]
    fn zigzag_instability_is_structural_error() {
        let err = chain_modes(10, 1.0 * MHZ, 1.5 * MHZ, 0.1).unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
    }

    #[test]
    fn non_orthonormal_coupling_rejected() {
        let err = ModeSpec::new(
            vec![1.0, 2.0],
            vec![vec![1.0, 0.1], vec![0.0, 1.0]],
            vec![0.1, 0.1],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("coupling"));
    }

    #[test]
    fn missing_drift_ratios_default_to_ones() {
        let text = r#"{"num_ions":2,"mode_freqs_hz":[2.0e6,1.99e6],
            "coupling":[[0.7071067811865476,0.7071067811865476],[0.7071067811865476,-0.7071067811865476]],
            "lamb_dicke":[0.1,0.1]}"#;
        let spec = mode_spec_from_json(text, "inline").unwrap();
        assert_eq!(spec.drift_ratios(), &[1.0, 1.0]);
        assert!((spec.mode_freq(0) - 2.0 * MHZ).abs() < 1e-6);
    }
}
