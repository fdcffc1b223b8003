//! Problem data, the objective, and evaluation of candidate beamformers.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::time::Duration;

use serde::{Serialize, Serializer};

use crate::channel::{self, ChannelSet, GeometryConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};

/// Relative tolerance used when re-checking SNR constraints of a solution.
pub const FEASIBILITY_RTOL: f64 = 1e-6;

/// Constant-modulus phase alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet {
    magnitude: f64,
    angles: Vec<f64>,
    symbols: Vec<C64>,
    uniform: bool,
}

impl PhaseSet {
    /// `L = 2^bits` phases `magnitude * exp(j 2 pi l / L)`.
    pub fn uniform(bits: u32, magnitude: f64) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::InvalidInput(format!(
                "phase resolution must be 1..=16 bits, got {bits}"
            )));
        }
        let l = 1usize << bits;
        let angles = (0..l).map(|i| 2.0 * PI * i as f64 / l as f64).collect();
        Self::build(angles, magnitude, true)
    }

    /// Arbitrary alphabet from phase angles in radians.
    pub fn from_angles(angles: Vec<f64>, magnitude: f64) -> Result<Self> {
        if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("phase alphabet must be nonempty and finite".into()));
        }
        let l = angles.len();
        let uniform = angles.iter().enumerate().all(|(i, a)| {
            let target = 2.0 * PI * i as f64 / l as f64;
            let diff = (a - target).rem_euclid(2.0 * PI);
            diff.min(2.0 * PI - diff) < 1e-12
        });
        Self::build(angles, magnitude, uniform)
    }

    fn build(angles: Vec<f64>, magnitude: f64, uniform: bool) -> Result<Self> {
        if !(magnitude > 0.0) || !magnitude.is_finite() {
            return Err(Error::InvalidInput(format!(
                "phase magnitude must be positive, got {magnitude}"
            )));
        }
        let symbols = angles.iter().map(|&a| C64::from_polar(magnitude, a)).collect();
        Ok(Self {
            magnitude,
            angles,
            symbols,
            uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// `log2(L)` when `L` is a power of two.
    pub fn bits(&self) -> Option<u32> {
        let l = self.len();
        l.is_power_of_two().then(|| l.trailing_zeros())
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Index of the alphabet entry closest in phase to `z`.
    pub fn nearest(&self, z: C64) -> usize {
        let arg = z.arg();
        let mut best = (0, f64::INFINITY);
        for (i, a) in self.angles.iter().enumerate() {
            let d = (arg - a).rem_euclid(2.0 * PI);
            let d = d.min(2.0 * PI - d);
            if d < best.1 - 1e-15 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Parameters layered on top of the channel data.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParams {
    pub phase_bits: u32,
    /// Explicit alphabet (radians); overrides `phase_bits` when set.
    pub phase_angles: Option<Vec<f64>>,
    /// Linear SNR threshold.
    pub snr_threshold: f64,
    pub couple_admission: bool,
    /// `(rho_com, rho_sen)`; hierarchy weights when `None`.
    pub weights: Option<(f64, f64)>,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            phase_bits: 3,
            phase_angles: None,
            snr_threshold: 30.0,
            couple_admission: false,
            weights: None,
        }
    }
}

/// All data defining one optimization problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n_antennas: usize,
    /// `H~_u = h_u h_u^H / sigma_com^2`.
    pub com_matrices: Vec<CMatrix>,
    /// `G~(theta)` for every grid angle.
    pub sen_matrices: Vec<CMatrix>,
    pub grid_deg: Vec<f64>,
    pub snr_threshold: f64,
    pub rho_com: f64,
    pub rho_sen: f64,
    pub phases: PhaseSet,
    /// Upper bound on the sensing floor over all admissible beamformers.
    pub tau_max: f64,
    pub couple_admission: bool,
}

/// Hierarchy weights: `rho_com = 1`, `rho_sen = sigma^2 / (2 alpha N P)`.
pub fn hierarchy_weights(noise_sen: f64, alpha: f64, n: usize, tx_power: f64) -> Result<(f64, f64)> {
    if !(noise_sen > 0.0) || !(alpha > 0.0) || n == 0 || !(tx_power > 0.0) {
        return Err(Error::InvalidInput(
            "hierarchy weights need positive noise, reflection, antennas and power".into(),
        ));
    }
    Ok((1.0, noise_sen / (2.0 * alpha * n as f64 * tx_power)))
}

/// Cauchy-Schwarz bound `alpha N P / sigma^2` on the sensing SNR.
pub fn tau_upper_bound(alpha: f64, n: usize, tx_power: f64, noise_sen: f64) -> f64 {
    alpha * n as f64 * tx_power / noise_sen
}

/// `w^H M w` for a Hermitian PSD `M`.
pub fn quadratic_snr(w: &[C64], m: &CMatrix) -> Result<f64> {
    if w.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: w.len(),
        });
    }
    Ok(m.quad_form(w).re)
}

/// Communication SNR of one user.
pub fn snr_com(w: &[C64], h: &CMatrix) -> Result<f64> {
    quadratic_snr(w, h)
}

/// Sensing SNR at one grid angle.
pub fn snr_sen(w: &[C64], g: &CMatrix) -> Result<f64> {
    quadratic_snr(w, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Objective {
    pub f: f64,
    pub f_com: usize,
    pub f_sen: f64,
}

pub fn objective(admitted: &[bool], tau: f64, rho_com: f64, rho_sen: f64) -> Objective {
    let f_com = admitted.iter().filter(|&&m| m).count();
    Objective {
        f: rho_com * f_com as f64 + rho_sen * tau,
        f_com,
        f_sen: tau,
    }
}

/// Sensing SNR over an angle sweep for a fixed beamformer.
pub fn beampattern(
    w: &[C64],
    angles_deg: &[f64],
    alpha: f64,
    noise_sen: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if angles_deg.is_empty() {
        return Err(Error::InvalidInput("beampattern needs at least one angle".into()));
    }
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    Ok(angles_deg
        .iter()
        .map(|&t| {
            let a = channel::steering_vector(t, n);
            alpha / noise_sen * crate::linalg::inner(&a, w).norm_sqr()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
    /// Produced by a heuristic or baseline; no optimality claim.
    Heuristic,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::NodeLimit => "node_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Heuristic => "heuristic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    #[serde(serialize_with = "ser_millis")]
    pub wall_time: Duration,
    pub gap: f64,
    pub status: SolveStatus,
}

impl Default for SolveStats {
    fn default() -> Self {
        Self {
            nodes: 0,
            lp_iterations: 0,
            wall_time: Duration::ZERO,
            gap: f64::INFINITY,
            status: SolveStatus::Heuristic,
        }
    }
}

fn ser_millis<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

fn ser_complex<S: Serializer>(w: &[C64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(w.len()))?;
    for z in w {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub phase_index: Vec<usize>,
    pub admitted: Vec<bool>,
    pub tau: f64,
    #[serde(serialize_with = "ser_complex")]
    pub beamformer: Vec<C64>,
    pub f: f64,
    pub f_com: usize,
    pub f_sen: f64,
    pub stats: SolveStats,
}

/// Lexicographic comparison: admitted count first, then sensing floor.
pub fn lex_compare(a: &Solution, b: &Solution) -> Ordering {
    a.f_com
        .cmp(&b.f_com)
        .then_with(|| a.f_sen.total_cmp(&b.f_sen))
}

impl ProblemInstance {
    /// Assembles an instance from generated channels.
    pub fn from_channels(
        geometry: &GeometryConfig,
        channels: &ChannelSet,
        params: &InstanceParams,
    ) -> Result<Self> {
        let n = geometry.n_antennas;
        let p_tx = geometry.tx_power_mw();
        let delta = (p_tx / n as f64).sqrt();
        let phases = match &params.phase_angles {
            Some(a) => PhaseSet::from_angles(a.clone(), delta)?,
            None => PhaseSet::uniform(params.phase_bits, delta)?,
        };
        let noise_com = geometry.noise_com_mw();
        let com_matrices = channels
            .user_channels
            .iter()
            .map(|h| CMatrix::outer(h, 1.0 / noise_com))
            .collect();
        let noise_sen = geometry.noise_sen_mw();
        let tau_max = tau_upper_bound(channels.reflection, n, p_tx, noise_sen);
        let (rho_com, rho_sen) = match params.weights {
            Some(w) => w,
            None => hierarchy_weights(noise_sen, channels.reflection, n, p_tx)?,
        };
        Self::new(
            n,
            com_matrices,
            channels.target_matrices.clone(),
            channels.grid_deg.clone(),
            params.snr_threshold,
            (rho_com, rho_sen),
            phases,
            tau_max,
            params.couple_admission,
        )
    }

    /// Generates channels from `geometry` and assembles the instance.
    pub fn generate(geometry: &GeometryConfig, params: &InstanceParams) -> Result<Self> {
        let channels = channel::generate(geometry)?;
        Self::from_channels(geometry, &channels, params)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_antennas: usize,
        com_matrices: Vec<CMatrix>,
        sen_matrices: Vec<CMatrix>,
        grid_deg: Vec<f64>,
        snr_threshold: f64,
        (rho_com, rho_sen): (f64, f64),
        phases: PhaseSet,
        tau_max: f64,
        couple_admission: bool,
    ) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidInput("at least one antenna required".into()));
        }
        if sen_matrices.is_empty() {
            return Err(Error::InvalidInput("at least one sensing angle required".into()));
        }
        for m in com_matrices.iter().chain(&sen_matrices) {
            if m.dim() != n_antennas {
                return Err(Error::DimensionMismatch {
                    expected: n_antennas,
                    found: m.dim(),
                });
            }
            if m.hermitian_residual() > 1e-9 * m.max_abs().max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput("SNR matrices must be Hermitian".into()));
            }
        }
        if !(snr_threshold >= 0.0) || !snr_threshold.is_finite() {
            return Err(Error::InvalidInput(format!(
                "SNR threshold must be finite and nonnegative, got {snr_threshold}"
            )));
        }
        if !(rho_com > 0.0) || !(rho_sen >= 0.0) {
            return Err(Error::InvalidInput("objective weights must be positive".into()));
        }
        if !(tau_max > 0.0) || !tau_max.is_finite() {
            return Err(Error::InvalidInput(format!("tau_max must be positive, got {tau_max}")));
        }
        Ok(Self {
            n_antennas,
            com_matrices,
            sen_matrices,
            grid_deg,
            snr_threshold,
            rho_com,
            rho_sen,
            phases,
            tau_max,
            couple_admission,
        })
    }

    pub fn n_users(&self) -> usize {
        self.com_matrices.len()
    }

    pub fn tx_power(&self) -> f64 {
        self.phases.magnitude().powi(2) * self.n_antennas as f64
    }

    pub fn beamformer(&self, phase_index: &[usize]) -> Vec<C64> {
        let s = self.phases.symbols();
        phase_index.iter().map(|&i| s[i]).collect()
    }

    pub fn com_snrs(&self, w: &[C64]) -> Vec<f64> {
        self.com_matrices.iter().map(|m| m.quad_form(w).re).collect()
    }

    pub fn sen_snrs(&self, w: &[C64]) -> Vec<f64> {
        self.sen_matrices.iter().map(|m| m.quad_form(w).re).collect()
    }

    /// Best admission vector and sensing floor for a fixed beamformer:
    /// admit every user meeting the threshold (all-or-nothing when
    /// admission is coupled) and take the worst grid SNR as the floor.
    pub fn optimal_mu_tau(&self, w: &[C64]) -> (Vec<bool>, f64) {
        let snrs = self.com_snrs(w);
        let mut admitted: Vec<bool> = snrs.iter().map(|&s| s >= self.snr_threshold).collect();
        if self.couple_admission && !admitted.iter().all(|&m| m) {
            admitted.iter_mut().for_each(|m| *m = false);
        }
        let tau = self
            .sen_snrs(w)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        (admitted, tau)
    }

    /// Builds a Solution from its discrete parts, recomputing `w` and the
    /// objective.
    pub fn solution(
        &self,
        phase_index: Vec<usize>,
        admitted: Vec<bool>,
        tau: f64,
        stats: SolveStats,
    ) -> Solution {
        let beamformer = self.beamformer(&phase_index);
        let obj = objective(&admitted, tau, self.rho_com, self.rho_sen);
        Solution {
            phase_index,
            admitted,
            tau,
            beamformer,
            f: obj.f,
            f_com: obj.f_com,
            f_sen: obj.f_sen,
            stats,
        }
    }

    /// Evaluates a phase tuple with the closed-form optimal `(mu, tau)`.
    pub fn evaluate_phases(&self, phase_index: &[usize]) -> Solution {
        let w = self.beamformer(phase_index);
        let (admitted, tau) = self.optimal_mu_tau(&w);
        self.solution(phase_index.to_vec(), admitted, tau, SolveStats::default())
    }

    /// Checks the original (nonconvex) constraints on a solution.
    pub fn check_feasible(&self, sol: &Solution) -> Result<()> {
        let n = self.n_antennas;
        if sol.phase_index.len() != n || sol.beamformer.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: sol.phase_index.len(),
            });
        }
        if sol.admitted.len() != self.n_users() {
            return Err(Error::DimensionMismatch {
                expected: self.n_users(),
                found: sol.admitted.len(),
            });
        }
        if sol.phase_index.iter().any(|&i| i >= self.phases.len()) {
            return Err(Error::FeasibilityViolation("phase index out of range".into()));
        }
        let w = self.beamformer(&sol.phase_index);
        if w.iter().zip(&sol.beamformer).any(|(a, b)| (a - b).norm() > 1e-9 * a.norm()) {
            return Err(Error::FeasibilityViolation(
                "beamformer does not match phase indices".into(),
            ));
        }
        if self.couple_admission && sol.admitted.iter().any(|&m| m != sol.admitted[0]) {
            return Err(Error::FeasibilityViolation("coupled admission".into()));
        }
        for (u, s) in self.com_snrs(&w).into_iter().enumerate() {
            if sol.admitted[u] && s < self.snr_threshold * (1.0 - FEASIBILITY_RTOL) {
                return Err(Error::FeasibilityViolation(format!(
                    "C3 for user {u}: SNR {s} below threshold {}",
                    self.snr_threshold
                )));
            }
        }
        if sol.tau < 0.0 {
            return Err(Error::FeasibilityViolation("negative tau".into()));
        }
        for (k, s) in self.sen_snrs(&w).into_iter().enumerate() {
            if s < sol.tau * (1.0 - FEASIBILITY_RTOL) - 1e-12 * self.tau_max {
                return Err(Error::FeasibilityViolation(format!(
                    "C5 at grid angle {k}: SNR {s} below tau {}",
                    sol.tau
                )));
            }
        }
        let obj = objective(&sol.admitted, sol.tau, self.rho_com, self.rho_sen);
        if (obj.f - sol.f).abs() > 1e-9 * (1.0 + obj.f.abs()) || obj.f_com != sol.f_com {
            return Err(Error::FeasibilityViolation("objective breakdown".into()));
        }
        Ok(())
    }
}
