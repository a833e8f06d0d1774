//! Selective pulse synthesis by projected steepest descent.
//!
//! The cost for a target spin `i` and idle spins `j` is
//!
//! ```text
//! f = (1 − ε̄_i) + Σ_j ε̄_j + λ Σ_l (|I_l − I_{l+1}| + |Q_l − Q_{l+1}|)
//! ```
//!
//! where bars denote the mean over hyperfine members. The smooth part has an
//! exact gradient from forward states and backward costates. [`gradient`]
//! adds the sign subgradient of the total-variation term; the descent itself
//! treats that term through its exact proximal map, which keeps steps large
//! when the pulse is noisy.

use nalgebra::Vector2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{evolve, rect_pi_pulse, PulseProgram, QubitState, StepRotation};
use crate::error::{Error, Result};
use crate::par;
use crate::physics::HyperfineManifold;

/// Largest accepted regularisation weight, 1/Hz.
pub const MAX_LAMBDA: f64 = 1e-6;
pub const ARMIJO_C: f64 = 1e-4;
pub const MAX_LINE_SEARCH: usize = 50;
/// A failed line search counts as stationary when the smallest proximal
/// gradient mapping `‖x' − x‖/s` seen is below this fraction of `‖∇f‖`.
pub const STATIONARY_RTOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpin {
    /// Hz.
    pub detuning: f64,
    pub initial: QubitState,
    pub goal: QubitState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdleSpin {
    /// Hz.
    pub detuning: f64,
    pub initial: QubitState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlScenario {
    pub target: TargetSpin,
    pub idle: Vec<IdleSpin>,
    pub manifold: HyperfineManifold,
}

impl ControlScenario {
    pub fn new(
        target: TargetSpin,
        idle: Vec<IdleSpin>,
        manifold: HyperfineManifold,
    ) -> Result<Self> {
        if !target.detuning.is_finite() {
            return Err(Error::invalid("target.detuning", "must be finite"));
        }
        for (k, j) in idle.iter().enumerate() {
            if !j.detuning.is_finite() {
                return Err(Error::invalid(
                    format!("idle[{k}].detuning"),
                    "must be finite",
                ));
            }
            if j.detuning == target.detuning {
                return Err(Error::invalid(
                    format!("idle[{k}].detuning"),
                    "coincides with the target detuning",
                ));
            }
        }
        Ok(Self {
            target,
            idle,
            manifold,
        })
    }

    /// Flip the target `|0⟩ → |1⟩` while every idle spin stays in `|0⟩`.
    pub fn flip(
        target_detuning: f64,
        idle_detunings: &[f64],
        manifold: HyperfineManifold,
    ) -> Result<Self> {
        let target = TargetSpin {
            detuning: target_detuning,
            initial: QubitState::ground(),
            goal: QubitState::excited(),
        };
        let idle = idle_detunings
            .iter()
            .map(|&detuning| IdleSpin {
                detuning,
                initial: QubitState::ground(),
            })
            .collect();
        Self::new(target, idle, manifold)
    }

    fn offsets(&self) -> Vec<f64> {
        member_offsets(&self.manifold)
    }

    /// Same scenario with every idle detuning moved by `offset` Hz.
    pub fn with_idle_offset(&self, offset: f64) -> Self {
        let mut s = self.clone();
        for j in &mut s.idle {
            j.detuning += offset;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub m: usize,
    /// Seconds.
    pub dt: f64,
    /// 1/Hz.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `f − R` drops to this value.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
    /// Hz.
    pub max_amp: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let max_amp = 1e7;
        Self {
            m: 200,
            dt: 0.05 / max_amp,
            lambda: 1e-7,
            max_iters: 1000,
            tol: 5e-3,
            seed: 0,
            restarts: 1,
            max_amp,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "must be >= 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("must be > 0, got {:e}", self.dt),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda < MAX_LAMBDA) {
            return Err(Error::invalid(
                "lambda",
                format!(
                    "must lie in [0, {MAX_LAMBDA:e}) 1/Hz, got {:e}",
                    self.lambda
                ),
            ));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::invalid("tol", "must be >= 0"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts", "must be >= 1"));
        }
        if !(self.max_amp.is_finite() && self.max_amp > 0.0) {
            return Err(Error::invalid("max_amp", "must be > 0"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.m as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub eps_i: f64,
    pub eps_j: Vec<f64>,
    pub reg: f64,
    pub f: f64,
}

impl CostBreakdown {
    pub fn eps_j_total(&self) -> f64 {
        self.eps_j.iter().sum()
    }

    /// `f − R`.
    pub fn infidelity(&self) -> f64 {
        (1.0 - self.eps_i) + self.eps_j_total()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub d_i: Vec<f64>,
    pub d_q: Vec<f64>,
}

impl Gradient {
    fn zeros(m: usize) -> Self {
        Self {
            d_i: vec![0.0; m],
            d_q: vec![0.0; m],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.d_i
            .iter()
            .chain(&self.d_q)
            .fold(0.0, |a, g| a.max(g.abs()))
    }
}

/// `λ Σ (|ΔI| + |ΔQ|)`.
pub fn regularization(pulse: &PulseProgram, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    lambda * pulse.total_variation()
}

fn member_offsets(manifold: &HyperfineManifold) -> Vec<f64> {
    if manifold.splitting() == 0.0 {
        vec![0.0]
    } else {
        manifold.offsets().to_vec()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn regularization_gradient(pulse: &PulseProgram, lambda: f64, grad: &mut Gradient) {
    if lambda == 0.0 {
        return;
    }
    let s = pulse.steps();
    for l in 0..s.len().saturating_sub(1) {
        let di = lambda * sign(s[l].i_amp - s[l + 1].i_amp);
        let dq = lambda * sign(s[l].q_amp - s[l + 1].q_amp);
        grad.d_i[l] += di;
        grad.d_i[l + 1] -= di;
        grad.d_q[l] += dq;
        grad.d_q[l + 1] -= dq;
    }
}

/// `∂a/∂I_l` and `∂a/∂Q_l`.
type OverlapGradient = (Vec<C64>, Vec<C64>);

/// `⟨bra|U|ket⟩` and, if requested, its derivative with respect to every
/// `I_l` and `Q_l`.
fn overlap(
    pulse: &PulseProgram,
    delta: f64,
    ket: &QubitState,
    bra: &QubitState,
    with_gradient: bool,
) -> (C64, Option<OverlapGradient>) {
    let dt = pulse.dt();
    if !with_gradient {
        return (evolve(pulse, delta).element(bra, ket), None);
    }
    let rots: Vec<StepRotation> = pulse
        .steps()
        .iter()
        .map(|s| StepRotation::new(delta, s.i_amp, s.q_amp, dt))
        .collect();
    let mats: Vec<_> = rots.iter().map(|r| *r.propagator().matrix()).collect();

    let m = rots.len();
    let mut forward: Vec<Vector2<C64>> = Vec::with_capacity(m + 1);
    forward.push(*ket.amplitudes());
    for u in &mats {
        let next = u * forward.last().unwrap();
        forward.push(next);
    }
    let a = bra.amplitudes().dotc(&forward[m]);

    let scale = std::f64::consts::PI * dt;
    let mut da_i = vec![C64::new(0.0, 0.0); m];
    let mut da_q = vec![C64::new(0.0, 0.0); m];
    let mut chi = *bra.amplitudes();
    for l in (0..m).rev() {
        let (dx, dy) = rots[l].derivative_xy(&chi, &forward[l]);
        da_i[l] = dx * scale;
        da_q[l] = dy * scale;
        chi = mats[l].adjoint() * chi;
    }
    (a, Some((da_i, da_q)))
}

struct Term {
    /// Index into the spin list; 0 is the target.
    spin: usize,
    delta: f64,
    ket: QubitState,
    bra: QubitState,
}

fn terms(scenario: &ControlScenario) -> Vec<Term> {
    let offsets = scenario.offsets();
    let mut out = Vec::new();
    for &o in &offsets {
        out.push(Term {
            spin: 0,
            delta: scenario.target.detuning + o,
            ket: scenario.target.initial,
            bra: scenario.target.goal,
        });
    }
    for (k, j) in scenario.idle.iter().enumerate() {
        for &o in &offsets {
            out.push(Term {
                spin: k + 1,
                delta: j.detuning + o,
                ket: j.initial,
                bra: j.initial,
            });
        }
    }
    out
}

fn evaluate(
    pulse: &PulseProgram,
    scenario: &ControlScenario,
    lambda: f64,
    with_gradient: bool,
    with_reg_gradient: bool,
) -> (CostBreakdown, Option<Gradient>) {
    let terms = terms(scenario);
    let members = scenario.offsets().len() as f64;
    let results = par::map(&terms, |t| {
        overlap(pulse, t.delta, &t.ket, &t.bra, with_gradient)
    });

    let mut eps = vec![0.0; scenario.idle.len() + 1];
    let mut grad = with_gradient.then(|| Gradient::zeros(pulse.len()));
    for (t, (a, da)) in terms.iter().zip(&results) {
        let p = a.norm_sqr();
        // target: ε = |⟨goal|U|init⟩|², f gains 1 − ε̄; idle: ε = 1 − |⟨init|U|init⟩|², f gains ε̄.
        // Either way f carries −|a|²/members, so df/dc = −2 Re(ā da/dc)/members.
        eps[t.spin] += if t.spin == 0 { p } else { 1.0 - p };
        if let (Some(g), Some((da_i, da_q))) = (grad.as_mut(), da) {
            let w = -2.0 / members;
            for l in 0..pulse.len() {
                g.d_i[l] += w * (a.conj() * da_i[l]).re;
                g.d_q[l] += w * (a.conj() * da_q[l]).re;
            }
        }
    }
    for e in &mut eps {
        *e /= members;
    }
    let eps_i = eps[0];
    let eps_j: Vec<f64> = eps[1..].to_vec();
    let reg = regularization(pulse, lambda);
    let f = (1.0 - eps_i) + eps_j.iter().sum::<f64>() + reg;
    if let (Some(g), true) = (grad.as_mut(), with_reg_gradient) {
        regularization_gradient(pulse, lambda, g);
    }
    (
        CostBreakdown {
            eps_i,
            eps_j,
            reg,
            f,
        },
        grad,
    )
}

pub fn cost(pulse: &PulseProgram, scenario: &ControlScenario, lambda: f64) -> CostBreakdown {
    evaluate(pulse, scenario, lambda, false, false).0
}

/// Hyperfine-averaged `1 − |⟨ψ|U|ψ⟩|²` for a single spin, computed exactly as
/// the idle terms of [`cost`].
pub fn idle_error(
    pulse: &PulseProgram,
    detuning: f64,
    initial: &QubitState,
    manifold: &HyperfineManifold,
) -> f64 {
    let offsets = member_offsets(manifold);
    let mut e = 0.0;
    for o in &offsets {
        e += 1.0
            - evolve(pulse, detuning + o)
                .element(initial, initial)
                .norm_sqr();
    }
    e / offsets.len() as f64
}

/// `(∂f/∂I_l, ∂f/∂Q_l)` for every step.
pub fn gradient(pulse: &PulseProgram, scenario: &ControlScenario, lambda: f64) -> Gradient {
    cost_and_gradient(pulse, scenario, lambda).1
}

pub fn cost_and_gradient(
    pulse: &PulseProgram,
    scenario: &ControlScenario,
    lambda: f64,
) -> (CostBreakdown, Gradient) {
    let (c, g) = evaluate(pulse, scenario, lambda, true, true);
    (c, g.expect("gradient requested"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub f: f64,
    pub eps_i: f64,
    pub eps_j: Vec<f64>,
    pub reg: f64,
    /// Accepted step length, Hz² per unit gradient; 0 for the initial row.
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `f − R` reached `tol`.
    Converged,
    /// The proximal gradient mapping vanished relative to the gradient.
    Stationary,
    MaxIters,
    /// No step accepted within [`MAX_LINE_SEARCH`] halvings.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationTrace {
    pub restart: usize,
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub pulse: PulseProgram,
    pub cost: CostBreakdown,
    pub trace: OptimizationTrace,
}

/// Rectangular π-pulse over the configured duration, clamped to `max_amp`,
/// with independent uniform ±10% noise on every in-phase step.
fn initial_pulse(config: &OptimizerConfig, restart: usize) -> Result<PulseProgram> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let amp = (0.5 / config.duration()).min(config.max_amp);
    let i: Vec<f64> = (0..config.m)
        .map(|_| (amp * (1.0 + rng.gen_range(-0.1..=0.1))).clamp(-config.max_amp, config.max_amp))
        .collect();
    PulseProgram::from_iq(&i, &vec![0.0; config.m], config.dt)
}

fn row(iteration: usize, c: &CostBreakdown, step: f64) -> TraceRow {
    TraceRow {
        iteration,
        f: c.f,
        eps_i: c.eps_i,
        eps_j: c.eps_j.clone(),
        reg: c.reg,
        step,
    }
}

fn descend(
    scenario: &ControlScenario,
    config: &OptimizerConfig,
    restart: usize,
) -> Result<Synthesis> {
    let lambda = config.lambda;
    let mut pulse = initial_pulse(config, restart)?;
    let (mut c, g) = evaluate(&pulse, scenario, lambda, true, false);
    let mut g = g.expect("gradient requested");
    let mut rows = vec![row(0, &c, 0.0)];
    let finish = |pulse, cost, rows, termination| Synthesis {
        pulse,
        cost,
        trace: OptimizationTrace {
            restart,
            rows,
            termination,
        },
    };
    if c.infidelity() <= config.tol {
        return Ok(finish(pulse, c, rows, Termination::Converged));
    }
    let gmax = g.max_abs();
    if gmax == 0.0 && pulse.total_variation() == 0.0 {
        return Ok(finish(pulse, c, rows, Termination::Stationary));
    }
    let mut step = if gmax > 0.0 {
        config.max_amp / gmax
    } else {
        config.max_amp / lambda.max(f64::MIN_POSITIVE)
    };

    let project = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(d).map(|(x, d)| x - s * d).collect();
        tv_prox(&y, s * lambda)
            .into_iter()
            .map(|v| v.clamp(-config.max_amp, config.max_amp))
            .collect()
    };

    for iteration in 1..=config.max_iters {
        let (i0, q0) = (pulse.i_amps(), pulse.q_amps());
        let mut accepted = None;
        let mut mapping = f64::INFINITY;
        let mut s = step;
        for _ in 0..MAX_LINE_SEARCH {
            let i1 = project(&i0, &g.d_i, s);
            let q1 = project(&q0, &g.d_q, s);
            let dist2: f64 = i1
                .iter()
                .zip(&i0)
                .chain(q1.iter().zip(&q0))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            mapping = mapping.min(dist2.sqrt() / s);
            if dist2 > 0.0 {
                let cand = PulseProgram::from_iq(&i1, &q1, config.dt)?;
                let cc = cost(&cand, scenario, lambda);
                if cc.f < c.f && cc.f <= c.f - ARMIJO_C * dist2 / s {
                    accepted = Some((cand, s));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((next, s)) = accepted else {
            let gnorm = g
                .d_i
                .iter()
                .chain(&g.d_q)
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            let termination = if mapping <= STATIONARY_RTOL * gnorm {
                Termination::Stationary
            } else {
                Termination::Diverged
            };
            return Ok(finish(pulse, c, rows, termination));
        };
        pulse = next;
        let (nc, ng) = evaluate(&pulse, scenario, lambda, true, false);
        c = nc;
        g = ng.expect("gradient requested");
        rows.push(row(iteration, &c, s));
        if c.infidelity() <= config.tol {
            return Ok(finish(pulse, c, rows, Termination::Converged));
        }
        step = 2.0 * s;
    }
    Ok(finish(pulse, c, rows, Termination::MaxIters))
}

/// Solves `argmin_x ½‖x − y‖² + weight·Σ|x_{k+1} − x_k|` exactly with
/// Condat's direct algorithm.
pub fn tv_prox(y: &[f64], weight: f64) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    if n == 0 {
        return x;
    }
    if weight <= 0.0 {
        x.copy_from_slice(y);
        return x;
    }
    let lam = weight;
    let (mut k, mut k0, mut kminus, mut kplus) = (0usize, 0usize, 0usize, 0usize);
    let (mut umin, mut umax) = (lam, -lam);
    let (mut vmin, mut vmax) = (y[0] - lam, y[0] + lam);
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                loop {
                    x[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = y[k0];
                umin = lam;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    x[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = y[k0];
                umax = -lam;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                for v in &mut x[k0..=k] {
                    *v = vmin;
                }
                return x;
            }
        }
        umin += y[k + 1] - vmin;
        if umin < -lam {
            loop {
                x[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = y[k0];
            vmax = vmin + 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }
        umax += y[k + 1] - vmax;
        if umax > lam {
            loop {
                x[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = y[k0];
            vmin = vmax - 2.0 * lam;
            umin = lam;
            umax = -lam;
            continue;
        }
        k += 1;
        if umin >= lam {
            kminus = k;
            vmin += (umin - lam) / (kminus - k0 + 1) as f64;
            umin = lam;
        }
        if umax <= -lam {
            kplus = k;
            vmax += (umax + lam) / (kplus - k0 + 1) as f64;
            umax = -lam;
        }
    }
}

/// Runs `config.restarts` seeded descents and returns the one with the lowest
/// final cost. Restarts are independent and run concurrently; the result does
/// not depend on scheduling.
///
/// Fails with [`Error::Diverged`] only when every restart stalled in its line
/// search; the error carries the best pulse found.
pub fn optimize(scenario: &ControlScenario, config: &OptimizerConfig) -> Result<Synthesis> {
    config.validate()?;
    let runs = par::map_range(config.restarts, |r| descend(scenario, config, r));
    let runs: Vec<Synthesis> = runs.into_iter().collect::<Result<_>>()?;
    let all_diverged = runs
        .iter()
        .all(|s| s.trace.termination == Termination::Diverged);
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.cost.f < a.cost.f { b } else { a })
        .expect("at least one restart");
    if all_diverged {
        return Err(Error::Diverged {
            attempts: MAX_LINE_SEARCH,
            best: Box::new(best),
        });
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    ShortRectangular,
    LongRectangular,
    Optimized,
}

impl PulseKind {
    pub fn name(&self) -> &'static str {
        match self {
            PulseKind::ShortRectangular => "short_rect",
            PulseKind::LongRectangular => "long_rect",
            PulseKind::Optimized => "optimized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub kind: PulseKind,
    pub eps_i: f64,
    /// Summed over idle spins.
    pub eps_j: f64,
}

/// Hyperfine-averaged errors of rectangular π-pulses at `rabi_fast` and
/// `rabi_slow`, and of `optimized` when given.
pub fn compare_rectangular(
    scenario: &ControlScenario,
    rabi_fast: f64,
    rabi_slow: f64,
    optimized: Option<&PulseProgram>,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (kind, rabi) in [
        (PulseKind::ShortRectangular, rabi_fast),
        (PulseKind::LongRectangular, rabi_slow),
    ] {
        let c = cost(&rect_pi_pulse(rabi, 1)?, scenario, 0.0);
        rows.push(ComparisonRow {
            kind,
            eps_i: c.eps_i,
            eps_j: c.eps_j_total(),
        });
    }
    if let Some(p) = optimized {
        let c = cost(p, scenario, 0.0);
        rows.push(ComparisonRow {
            kind: PulseKind::Optimized,
            eps_i: c.eps_i,
            eps_j: c.eps_j_total(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    /// Hz.
    pub offset: f64,
    pub scale: f64,
    pub eps_i: f64,
    /// Summed over idle spins.
    pub eps_j: f64,
}

/// Errors with every idle detuning shifted by each offset and every amplitude
/// scaled by each factor. Rows are offset-major.
pub fn sensitivity_sweep(
    pulse: &PulseProgram,
    scenario: &ControlScenario,
    delta_offsets: &[f64],
    amp_scales: &[f64],
) -> Vec<SweepPoint> {
    let grid: Vec<(f64, f64)> = delta_offsets
        .iter()
        .flat_map(|&o| amp_scales.iter().map(move |&s| (o, s)))
        .collect();
    par::map(&grid, |&(offset, scale)| {
        let c = cost(
            &pulse.scaled(scale),
            &scenario.with_idle_offset(offset),
            0.0,
        );
        SweepPoint {
            offset,
            scale,
            eps_i: c.eps_i,
            eps_j: c.eps_j_total(),
        }
    })
}
