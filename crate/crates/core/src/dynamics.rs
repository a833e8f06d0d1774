//! Two-level spin evolution in the rotating frame of the microwave carrier.
//!
//! A constant control step with in-phase amplitude `I`, quadrature amplitude
//! `Q` (both cyclic Hz, `I = Ω cos φ / 2π`) and detuning `Δ` (cyclic Hz) has
//! the generator
//!
//! ```text
//! H/ħ = ½ [2πΔ σz + 2πI σx + 2πQ σy]
//! ```
//!
//! whose exponential has the closed form `cos θ 𝟙 − i sin θ (n̂·σ)` with
//! `θ = (dt/2)·|h|`. Steps are exact; there is no time-stepping error.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::field::{sample_at, FieldEnvironment, WireDrive};
use crate::par;
use crate::physics::{
    hyperfine_detunings, transition_frequencies, DipoleOrientation, HyperfineManifold, SpinSite,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Microwave carrier. The phase fixes the zero of the rotating frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveCarrier {
    /// Hz.
    pub omega_mw: f64,
    /// Radians.
    pub phi_mw: f64,
}

impl DriveCarrier {
    pub fn new(omega_mw: f64, phi_mw: f64) -> Result<Self> {
        if !(omega_mw.is_finite() && omega_mw > 0.0) {
            return Err(Error::invalid(
                "omega_mw",
                format!("must be > 0, got {omega_mw}"),
            ));
        }
        if !phi_mw.is_finite() {
            return Err(Error::invalid("phi_mw", "must be finite"));
        }
        Ok(Self { omega_mw, phi_mw })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PulseStep {
    /// Hz.
    pub i_amp: f64,
    /// Hz.
    pub q_amp: f64,
}

impl PulseStep {
    pub fn new(i_amp: f64, q_amp: f64) -> Self {
        Self { i_amp, q_amp }
    }

    /// `Ω/2π`, Hz.
    pub fn rabi(&self) -> f64 {
        self.i_amp.hypot(self.q_amp)
    }

    pub fn phase(&self) -> f64 {
        self.q_amp.atan2(self.i_amp)
    }
}

/// Piecewise-constant I/Q program with uniform step duration.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseProgram {
    steps: Vec<PulseStep>,
    dt: f64,
}

impl PulseProgram {
    pub fn new(steps: Vec<PulseStep>, dt: f64) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("steps", "a pulse needs at least one step"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt:e}")));
        }
        if steps
            .iter()
            .any(|s| !(s.i_amp.is_finite() && s.q_amp.is_finite()))
        {
            return Err(Error::invalid("steps", "amplitudes must be finite"));
        }
        Ok(Self { steps, dt })
    }

    pub fn from_iq(i_amps: &[f64], q_amps: &[f64], dt: f64) -> Result<Self> {
        if i_amps.len() != q_amps.len() {
            return Err(Error::invalid("steps", "I and Q traces differ in length"));
        }
        let steps = i_amps
            .iter()
            .zip(q_amps)
            .map(|(&i, &q)| PulseStep::new(i, q))
            .collect();
        Self::new(steps, dt)
    }

    pub fn constant(i_amp: f64, q_amp: f64, m: usize, dt: f64) -> Result<Self> {
        Self::new(vec![PulseStep::new(i_amp, q_amp); m], dt)
    }

    pub fn steps(&self) -> &[PulseStep] {
        &self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.steps.len() as f64
    }

    pub fn i_amps(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.i_amp).collect()
    }

    pub fn q_amps(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.q_amp).collect()
    }

    /// Every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            steps: self
                .steps
                .iter()
                .map(|s| PulseStep::new(s.i_amp * factor, s.q_amp * factor))
                .collect(),
            dt: self.dt,
        }
    }

    /// Every step's phase advanced by `phi` radians.
    pub fn phase_shifted(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self {
            steps: self
                .steps
                .iter()
                .map(|p| PulseStep::new(c * p.i_amp - s * p.q_amp, s * p.i_amp + c * p.q_amp))
                .collect(),
            dt: self.dt,
        }
    }

    /// `self` followed by `next`. Step durations must match.
    pub fn concat(&self, next: &PulseProgram) -> Result<Self> {
        if (self.dt - next.dt).abs() > 1e-12 * self.dt {
            return Err(Error::invalid(
                "dt",
                "cannot join pulses with different step durations",
            ));
        }
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&next.steps);
        Self::new(steps, self.dt)
    }

    /// `Σ |I_l − I_{l+1}| + |Q_l − Q_{l+1}|`, Hz.
    pub fn total_variation(&self) -> f64 {
        self.steps
            .windows(2)
            .map(|w| (w[0].i_amp - w[1].i_amp).abs() + (w[0].q_amp - w[1].q_amp).abs())
            .sum()
    }
}

/// Normalised pure state `c₀|0⟩ + c₁|1⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    amplitudes: Vector2<C64>,
}

impl QubitState {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn new(c0: C64, c1: C64) -> Result<Self> {
        let n = c0.norm_sqr() + c1.norm_sqr();
        if (n - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::invalid("state", format!("norm² = {n}, expected 1")));
        }
        Ok(Self {
            amplitudes: Vector2::new(c0, c1),
        })
    }

    /// Rescales any non-zero pair of amplitudes onto the unit sphere.
    pub fn normalized(c0: C64, c1: C64) -> Result<Self> {
        let n = (c0.norm_sqr() + c1.norm_sqr()).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("state", "cannot normalise a zero vector"));
        }
        Ok(Self {
            amplitudes: Vector2::new(c0 / n, c1 / n),
        })
    }

    pub fn ground() -> Self {
        Self {
            amplitudes: Vector2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        }
    }

    pub fn excited() -> Self {
        Self {
            amplitudes: Vector2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        }
    }

    pub fn amplitudes(&self) -> &Vector2<C64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QubitState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn population_excited(&self) -> f64 {
        self.amplitudes[1].norm_sqr()
    }
}

/// A 2×2 unitary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    matrix: Matrix2<C64>,
}

impl Propagator {
    pub const UNITARY_TOL: f64 = 1e-10;

    pub fn identity() -> Self {
        Self {
            matrix: Matrix2::identity(),
        }
    }

    /// Wraps `matrix`, rejecting anything further than [`Self::UNITARY_TOL`]
    /// from unitary.
    pub fn from_matrix(matrix: Matrix2<C64>) -> Result<Self> {
        let p = Self { matrix };
        if p.unitarity_error() > Self::UNITARY_TOL {
            return Err(Error::invalid("propagator", "matrix is not unitary"));
        }
        Ok(p)
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.matrix
    }

    /// `‖U†U − 𝟙‖_max`.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.matrix.adjoint() * self.matrix - Matrix2::identity();
        d.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, state: &QubitState) -> QubitState {
        QubitState {
            amplitudes: self.matrix * state.amplitudes,
        }
    }

    /// `next · self`: `self` acts first.
    pub fn then(&self, next: &Propagator) -> Propagator {
        Propagator {
            matrix: next.matrix * self.matrix,
        }
    }

    pub fn adjoint(&self) -> Propagator {
        Propagator {
            matrix: self.matrix.adjoint(),
        }
    }

    /// `⟨a|U|b⟩`.
    pub fn element(&self, a: &QubitState, b: &QubitState) -> C64 {
        a.amplitudes.dotc(&(self.matrix * b.amplitudes))
    }
}

/// Rotation generator of one constant step, `v = (dt/2)·h` with `h` the
/// angular field vector. Kept around by the optimizer to form derivatives.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepRotation {
    pub v: Vector3<f64>,
    pub theta: f64,
    /// sin θ / θ
    pub sinc: f64,
    pub cos: f64,
}

impl StepRotation {
    pub fn new(delta: f64, i_amp: f64, q_amp: f64, dt: f64) -> Self {
        // (dt/2)·2π·x
        let s = PI * dt;
        let v = Vector3::new(s * i_amp, s * q_amp, s * delta);
        let theta = v.norm();
        let (sin, cos) = theta.sin_cos();
        let sinc = if theta > 1e-8 {
            sin / theta
        } else {
            1.0 - theta * theta / 6.0
        };
        Self {
            v,
            theta,
            sinc,
            cos,
        }
    }

    pub fn propagator(&self) -> Propagator {
        let (vx, vy, vz) = (self.v.x, self.v.y, self.v.z);
        let c = C64::new(self.cos, 0.0);
        let f = self.sinc;
        Propagator {
            matrix: Matrix2::new(
                c - I * f * vz,
                -I * f * C64::new(vx, -vy),
                -I * f * C64::new(vx, vy),
                c + I * f * vz,
            ),
        }
    }

    /// `(θ cos θ − sin θ)/θ³`, the radial derivative of sinc over θ.
    pub fn sinc_slope(&self) -> f64 {
        let t = self.theta;
        if t > 1e-3 {
            (t * self.cos - t.sin()) / (t * t * t)
        } else {
            -1.0 / 3.0 + t * t / 30.0
        }
    }

    /// `⟨χ| ∂U/∂v_k |φ⟩` for `k ∈ {x, y}`.
    ///
    /// With `U = cos θ 𝟙 − i sinc(θ) (v·σ)`:
    /// `∂U/∂v_k = −sinc v_k 𝟙 − i [g v_k (v·σ) + sinc σ_k]`, `g = sinc'(θ)/θ`.
    pub fn derivative_xy(&self, chi: &Vector2<C64>, phi: &Vector2<C64>) -> (C64, C64) {
        let overlap = chi.dotc(phi);
        // ⟨χ|σx|φ⟩, ⟨χ|σy|φ⟩, ⟨χ|σz|φ⟩
        let sx = chi[0].conj() * phi[1] + chi[1].conj() * phi[0];
        let sy = -I * chi[0].conj() * phi[1] + I * chi[1].conj() * phi[0];
        let sz = chi[0].conj() * phi[0] - chi[1].conj() * phi[1];
        let vs = sx * self.v.x + sy * self.v.y + sz * self.v.z;
        let g = self.sinc_slope();
        let f = self.sinc;
        let d = |vk: f64, sk: C64| -overlap * (f * vk) - I * (vs * (g * vk) + sk * f);
        (d(self.v.x, sx), d(self.v.y, sy))
    }
}

/// Exact propagator of one constant step. All arguments in cyclic Hz and s.
pub fn step_propagator(delta: f64, i_amp: f64, q_amp: f64, dt: f64) -> Propagator {
    StepRotation::new(delta, i_amp, q_amp, dt).propagator()
}

/// Time-ordered product `U_m ⋯ U_2 U_1` at detuning `delta`.
pub fn evolve(pulse: &PulseProgram, delta: f64) -> Propagator {
    pulse.steps.iter().fold(Propagator::identity(), |acc, s| {
        acc.then(&step_propagator(delta, s.i_amp, s.q_amp, pulse.dt))
    })
}

/// `1 − |⟨ψ|U|ψ⟩|²`.
pub fn state_error(u: &Propagator, initial: &QubitState) -> f64 {
    let eps = 1.0 - u.element(initial, initial).norm_sqr();
    if (-1e-12..0.0).contains(&eps) {
        0.0
    } else if eps > 1.0 && eps <= 1.0 + 1e-12 {
        1.0
    } else {
        eps
    }
}

/// `(Ω/Δ)²`, the off-resonant error ceiling of a rectangular pulse.
pub fn crosstalk_bound(rabi: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::ZeroDetuning);
    }
    Ok((rabi / delta).powi(2))
}

/// `m` equal steps with `I = rabi`, lasting `1/(2·rabi)` in total.
pub fn rect_pi_pulse(rabi: f64, m: usize) -> Result<PulseProgram> {
    if !(rabi.is_finite() && rabi > 0.0) {
        return Err(Error::invalid("rabi", format!("must be > 0, got {rabi}")));
    }
    if m == 0 {
        return Err(Error::invalid("m", "must be >= 1"));
    }
    PulseProgram::constant(rabi, 0.0, m, 1.0 / (2.0 * rabi * m as f64))
}

/// Excited-state population after a constant drive of each duration,
/// starting from `|0⟩`.
pub fn simulate_rabi(rabi: f64, delta: f64, durations: &[f64]) -> Vec<f64> {
    durations
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return 0.0;
            }
            let u = step_propagator(delta, rabi, 0.0, t);
            u.apply(&QubitState::ground()).population_excited()
        })
        .collect()
}

/// Ramsey signal `(1/3) Σ cos(2π Δ_m τ) e^{−τ/T₂*}` over the hyperfine triplet.
pub fn simulate_ramsey(
    delta: f64,
    manifold: &HyperfineManifold,
    t2_star: f64,
    taus: &[f64],
) -> Result<Vec<f64>> {
    if t2_star.is_nan() || t2_star <= 0.0 {
        return Err(Error::invalid(
            "t2_star",
            format!("must be > 0, got {t2_star:e}"),
        ));
    }
    let detunings = hyperfine_detunings(delta, manifold);
    Ok(taus
        .iter()
        .map(|&tau| {
            let beat: f64 = detunings.iter().map(|d| (2.0 * PI * d * tau).cos()).sum();
            beat / 3.0 * (-tau / t2_star).exp()
        })
        .collect())
}

/// Default Lorentzian floor applied by ODMR simulations, Hz.
pub const DEFAULT_ODMR_LINEWIDTH: f64 = 0.2e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    /// Hz.
    pub frequency: f64,
    pub contrast: f64,
}

/// Pulsed-ODMR spectrum: at each carrier frequency, the `|1⟩` population after
/// a π-duration pulse at `probe_rabi`, summed over the `ω±` transitions and
/// averaged over hyperfine members and sites. A non-zero `linewidth_floor`
/// (FWHM, Hz) convolves the result with a Lorentzian sampled on the scan grid.
pub fn simulate_odmr(
    env: &FieldEnvironment,
    drive: &WireDrive,
    sites: &[SpinSite],
    probe_rabi: f64,
    scan: &[f64],
    linewidth_floor: f64,
) -> Result<Vec<SpectrumPoint>> {
    if scan.is_empty() {
        return Err(Error::invalid("scan", "at least one frequency is required"));
    }
    if sites.is_empty() {
        return Err(Error::invalid("sites", "at least one site is required"));
    }
    if probe_rabi.is_nan() || probe_rabi <= 0.0 {
        return Err(Error::invalid(
            "probe_rabi",
            format!("must be > 0, got {probe_rabi}"),
        ));
    }
    if linewidth_floor.is_nan() || linewidth_floor < 0.0 {
        return Err(Error::invalid("linewidth_floor", "must be >= 0"));
    }
    let manifold = env.constants.manifold();
    let lines: Vec<f64> = par::try_map(sites, |s| {
        let sample = sample_at(env, drive, &s.position, &s.orientation)?;
        let (plus, minus) = transition_frequencies(&env.constants, sample.b_ext_z + sample.b_dc_z);
        debug_assert!((plus - sample.omega_plus).abs() < 1e-6);
        Ok::<_, Error>([plus, minus])
    })?
    .into_iter()
    .flatten()
    .collect();

    let t_pi = 1.0 / (2.0 * probe_rabi);
    let n_sites = sites.len() as f64;
    let raw = par::map(scan, |&f| {
        let mut total = 0.0;
        for line in &lines {
            for member in hyperfine_detunings(line - f, &manifold) {
                total += simulate_rabi(probe_rabi, member, &[t_pi])[0];
            }
        }
        total / (3.0 * n_sites)
    });

    let contrast = if linewidth_floor > 0.0 {
        let hw = 0.5 * linewidth_floor;
        par::map_range(scan.len(), |k| {
            let (mut num, mut den) = (0.0, 0.0);
            for (l, &c) in raw.iter().enumerate() {
                let x = (scan[k] - scan[l]) / hw;
                let w = 1.0 / (1.0 + x * x);
                num += w * c;
                den += w;
            }
            num / den
        })
    } else {
        raw
    };
    Ok(scan
        .iter()
        .zip(contrast)
        .map(|(&frequency, contrast)| SpectrumPoint {
            frequency,
            contrast,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkEntry {
    pub label: String,
    pub position: Vector3<f64>,
    /// `ω₊(r) − ω_mw`, Hz.
    pub detuning: f64,
    /// Local Rabi frequency, Hz.
    pub rabi: f64,
    pub epsilon: f64,
    /// `(Ω/Δ)²`; infinite on resonance.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkReport {
    pub entries: Vec<CrosstalkEntry>,
}

/// State error left on spins across `grid` by a rectangular π-pulse aimed at
/// the spin at `target`.
///
/// The carrier sits on the target's `ω₊` at `drive_dc`. Local Rabi frequencies
/// follow the perpendicular AC field relative to its value at the target.
pub fn crosstalk_landscape(
    env: &FieldEnvironment,
    drive_dc: f64,
    target: &Vector3<f64>,
    rabi_target: f64,
    grid: &[Vector3<f64>],
    orientation: &DipoleOrientation,
) -> Result<CrosstalkReport> {
    let pulse = rect_pi_pulse(rabi_target, 1)?;
    // Only ratios of the AC field matter; carrier is irrelevant here.
    let drive = WireDrive::new(drive_dc, 1.0, DriveCarrier::new(1.0, 0.0)?)?;
    let at_target = sample_at(env, &drive, target, orientation)?;
    if at_target.b_ac_xy.is_nan() || at_target.b_ac_xy <= 0.0 {
        return Err(Error::invalid(
            "target",
            "no transverse AC field at the target, Rabi scaling undefined",
        ));
    }
    let omega_mw = at_target.omega_plus;
    let ground = QubitState::ground();
    let entries = par::try_map(grid, |p| {
        let s = sample_at(env, &drive, p, orientation)?;
        let detuning = s.omega_plus - omega_mw;
        let rabi = rabi_target * s.b_ac_xy / at_target.b_ac_xy;
        let local = pulse.scaled(rabi / rabi_target);
        let epsilon = state_error(&evolve(&local, detuning), &ground);
        let bound = crosstalk_bound(rabi, detuning).unwrap_or(f64::INFINITY);
        Ok(CrosstalkEntry {
            label: format!("({:e},{:e},{:e})", p.x, p.y, p.z),
            position: *p,
            detuning,
            rabi,
            epsilon,
            bound,
        })
    })?;
    Ok(CrosstalkReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix2<C64>, b: &Matrix2<C64>, tol: f64) -> bool {
        (a - b).iter().all(|c| c.norm() <= tol)
    }

    #[test]
    fn resonant_half_step_is_minus_i_sigma_x() {
        let u = step_propagator(0.0, 1e7, 0.0, 50e-9);
        let minus_i_sx = Matrix2::new(C64::new(0.0, 0.0), -I, -I, C64::new(0.0, 0.0));
        assert!(close(u.matrix(), &minus_i_sx, 1e-12));
        let out = u.apply(&QubitState::ground());
        assert!((out.amplitudes()[1] - (-I)).norm() < 1e-12);
    }

    #[test]
    fn free_precession_is_diagonal_phase() {
        let (delta, dt) = (3.3e6, 70e-9);
        let u = step_propagator(delta, 0.0, 0.0, dt);
        let ph = PI * delta * dt;
        let expect = Matrix2::new(
            C64::from_polar(1.0, -ph),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::from_polar(1.0, ph),
        );
        assert!(close(u.matrix(), &expect, 1e-14));
    }

    #[test]
    fn single_step_evolve_matches_step() {
        let p = PulseProgram::constant(2e6, -1e6, 1, 40e-9).unwrap();
        assert_eq!(evolve(&p, 5e5), step_propagator(5e5, 2e6, -1e6, 40e-9));
    }

    #[test]
    fn two_quarter_turns_make_a_flip() {
        // θ = π/4 per step -> total π/2 half-angle -> π rotation
        let p = PulseProgram::constant(1e7, 0.0, 2, 25e-9).unwrap();
        let eps = state_error(&evolve(&p, 0.0), &QubitState::ground());
        assert!((eps - 1.0).abs() < 1e-12);
    }

    #[test]
    fn state_error_cases() {
        let g = QubitState::ground();
        assert_eq!(state_error(&Propagator::identity(), &g), 0.0);
        let sx = Propagator::from_matrix(Matrix2::new(
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ))
        .unwrap();
        assert_eq!(state_error(&sx, &g), 1.0);
        // π/2 about x
        let half = step_propagator(0.0, 1e7, 0.0, 25e-9);
        assert!((state_error(&half, &g) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bound_values() {
        assert!((crosstalk_bound(1e7, 1.6e8).unwrap() - 3.90625e-3).abs() < 1e-15);
        assert_eq!(crosstalk_bound(2e6, 2e6).unwrap(), 1.0);
        assert_eq!(crosstalk_bound(1e6, 0.0), Err(Error::ZeroDetuning));
    }

    #[test]
    fn rect_pulse_duration_and_flip() {
        let p = rect_pi_pulse(7.5e6, 10).unwrap();
        assert_eq!(p.len(), 10);
        assert!((p.duration() - 66.666_666_666e-9).abs() < 1e-17);
        let eps = state_error(&evolve(&p, 0.0), &QubitState::ground());
        assert!((eps - 1.0).abs() < 1e-10);

        let p = rect_pi_pulse(1e7, 20).unwrap();
        let eps = state_error(&evolve(&p, 1.6e8), &QubitState::ground());
        assert!(eps <= crosstalk_bound(1e7, 1.6e8).unwrap());
        assert!(rect_pi_pulse(0.0, 3).is_err());
        assert!(rect_pi_pulse(1.0, 0).is_err());
    }

    #[test]
    fn rabi_curve_landmarks() {
        let r = 7.5e6;
        let p = simulate_rabi(r, 0.0, &[0.0, 1.0 / (4.0 * r), 1.0 / (2.0 * r)]);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-12);
        assert!((p[2] - 1.0).abs() < 1e-12);

        // contrast Ω²/(Ω²+Δ²) = 1/2 when Δ = Ω
        let ts: Vec<f64> = (0..4000).map(|k| k as f64 * 1e-10).collect();
        let max = simulate_rabi(1e6, 1e6, &ts).into_iter().fold(0.0, f64::max);
        assert!((max - 0.5).abs() < 1e-4 && max <= 0.5 + 1e-12);
    }

    #[test]
    fn ramsey_basics() {
        let m = HyperfineManifold::default();
        assert!((simulate_ramsey(3e6, &m, 1.7e-6, &[0.0]).unwrap()[0] - 1.0).abs() < 1e-15);
        let taus = [0.1e-6, 0.37e-6, 1.234e-6];
        let s = simulate_ramsey(1e6, &HyperfineManifold::disabled(), f64::INFINITY, &taus).unwrap();
        for (v, t) in s.iter().zip(taus) {
            assert!((v - (2.0 * PI * 1e6 * t).cos()).abs() < 1e-12);
        }
        assert!(simulate_ramsey(1e6, &m, 0.0, &taus).is_err());
    }

    #[test]
    fn phase_shift_preserves_ground_error() {
        let p = PulseProgram::from_iq(&[1e6, -2e6, 3e5], &[0.5e6, 1e6, -7e5], 80e-9).unwrap();
        let g = QubitState::ground();
        let a = state_error(&evolve(&p, 4e5), &g);
        let b = state_error(&evolve(&p.phase_shifted(1.234), 4e5), &g);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn qubit_state_norm_checked() {
        assert!(QubitState::new(C64::new(1.0, 0.0), C64::new(0.1, 0.0)).is_err());
        let s = QubitState::normalized(C64::new(1.0, 0.0), C64::new(0.0, 1.0)).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!(QubitState::normalized(C64::new(0.0, 0.0), C64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn pulse_program_validation() {
        assert!(PulseProgram::new(vec![], 1e-9).is_err());
        assert!(PulseProgram::constant(1.0, 0.0, 2, 0.0).is_err());
        assert!(PulseProgram::from_iq(&[1.0], &[1.0, 2.0], 1e-9).is_err());
        let a = PulseProgram::constant(1.0, 0.0, 2, 1e-9).unwrap();
        let b = PulseProgram::constant(1.0, 0.0, 2, 2e-9).unwrap();
        assert!(a.concat(&b).is_err());
    }

    #[test]
    fn step_rotation_small_angle_branch_is_continuous() {
        let a = StepRotation::new(0.0, 1e-3, 0.0, 1e-9);
        assert!((a.sinc - 1.0).abs() < 1e-15);
        let big = StepRotation::new(0.0, 1.0e3 / (PI * 1e-9) * 1.0001e-3, 0.0, 1e-9);
        let t = big.theta;
        let exact = (t * t.cos() - t.sin()) / (t * t * t);
        assert!((big.sinc_slope() - exact).abs() < 1e-6);
    }
}
