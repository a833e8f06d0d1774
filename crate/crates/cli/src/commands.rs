use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use nalgebra::Vector3;
use serde_json::json;
use spinmux::dynamics::{
    crosstalk_landscape, simulate_odmr, simulate_rabi, simulate_ramsey, QubitState,
};
use spinmux::field::{address_map, calibrate_wire, field_sample};
use spinmux::optimizer::{
    idle_error, optimize, sensitivity_sweep, ControlScenario, OptimizerConfig, Synthesis,
    Termination,
};
use spinmux::physics::DipoleOrientation;

use crate::config::RegisterConfig;
use crate::error::{CliError, CliResult};
use crate::{fmt_num, pulse_file};

/// `start:stop:n`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub n: usize,
}

impl Linspace {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.n - 1) as f64;
        (0..self.n).map(|k| self.start + k as f64 * step).collect()
    }
}

impl FromStr for Linspace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(format!("expected start:stop:count, got {s:?}"));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("not a finite number: {x:?}"))
        };
        let n: usize = n.trim().parse().map_err(|_| format!("bad count {n:?}"))?;
        if n == 0 {
            return Err("count must be >= 1".into());
        }
        Ok(Self {
            start: num(a)?,
            stop: num(b)?,
            n,
        })
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn orientation_or_first(
    cfg: &RegisterConfig,
    w: Option<f64>,
    u: Option<f64>,
) -> CliResult<DipoleOrientation> {
    let first = cfg.sites[0].orientation;
    DipoleOrientation::new(w.unwrap_or(first.theta_w), u.unwrap_or(first.theta_u))
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Detunings from the configured carrier at the configured DC current.
fn scenario(cfg: &RegisterConfig, target: &str, idle: &[String]) -> CliResult<ControlScenario> {
    if idle.iter().any(|j| j == target) {
        return Err(CliError::Usage(format!(
            "site {target:?} cannot be both target and idle"
        )));
    }
    let det = |id: &str| -> CliResult<f64> {
        Ok(
            field_sample(&cfg.env, &cfg.drive, cfg.site(id)?)?.omega_plus
                - cfg.drive.carrier.omega_mw,
        )
    };
    let idle: Vec<f64> = idle.iter().map(|j| det(j)).collect::<CliResult<_>>()?;
    Ok(ControlScenario::flip(
        det(target)?,
        &idle,
        cfg.constants.manifold(),
    )?)
}

#[derive(Debug, Args)]
pub struct AddressMapArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides drive.i_dc_ma.
    #[arg(long, allow_hyphen_values = true)]
    pub i_dc_ma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn address_map_cmd(args: &AddressMapArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    let drive = match args.i_dc_ma {
        Some(i) => cfg.drive.with_dc(i * 1e-3),
        None => cfg.drive,
    };
    let map = address_map(&cfg.env, &drive, &cfg.sites)?;
    let rows = map.entries.iter().map(|e| {
        vec![
            e.site_id.clone(),
            fmt_num(e.u * 1e6),
            fmt_num(e.omega_plus / 1e9),
        ]
    });
    emit(args.out.as_deref(), &csv("site,u_um,f_ghz", rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationKind {
    Rabi,
    Ramsey,
    Odmr,
    Pulse,
}

impl FromStr for SimulationKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "rabi" => Ok(Self::Rabi),
            "ramsey" => Ok(Self::Ramsey),
            "odmr" => Ok(Self::Odmr),
            "pulse" => Ok(Self::Pulse),
            other => Err(CliError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// rabi, ramsey, odmr or pulse.
    pub kind: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rabi frequency for `rabi`, probe Rabi frequency for `odmr`.
    #[arg(long)]
    pub rabi_mhz: Option<f64>,
    /// Defaults to 0 for `rabi` and 3 for `ramsey`.
    #[arg(long, allow_hyphen_values = true)]
    pub detuning_mhz: Option<f64>,
    /// Pulse durations for `rabi` or free-evolution times for `ramsey`.
    #[arg(long, allow_hyphen_values = true)]
    pub times_ns: Option<Linspace>,
    /// Defaults to the first site's value.
    #[arg(long)]
    pub t2_star_us: Option<f64>,
    #[arg(long, default_value = "2.6:3.4:1601")]
    pub scan_ghz: Linspace,
    #[arg(long, default_value_t = spinmux::dynamics::DEFAULT_ODMR_LINEWIDTH / 1e6)]
    pub linewidth_mhz: f64,
    #[arg(long)]
    pub pulse: Option<PathBuf>,
}

pub fn simulate_cmd(args: &SimulateArgs) -> CliResult<()> {
    let kind: SimulationKind = args.kind.parse()?;
    let cfg = args
        .config
        .as_deref()
        .map(RegisterConfig::load)
        .transpose()?;
    let need_cfg = || {
        cfg.as_ref()
            .ok_or_else(|| CliError::Usage(format!("simulate {} requires --config", args.kind)))
    };
    let text = match kind {
        SimulationKind::Rabi => {
            let rabi = args.rabi_mhz.unwrap_or(7.5) * 1e6;
            let delta = args.detuning_mhz.unwrap_or(0.0) * 1e6;
            let ts = args
                .times_ns
                .unwrap_or(Linspace {
                    start: 0.0,
                    stop: 200.0,
                    n: 401,
                })
                .values();
            let secs: Vec<f64> = ts.iter().map(|t| t * 1e-9).collect();
            let p = simulate_rabi(rabi, delta, &secs);
            csv(
                "t_ns,p1",
                ts.iter()
                    .zip(&p)
                    .map(|(t, p)| vec![fmt_num(*t), fmt_num(*p)]),
            )
        }
        SimulationKind::Ramsey => {
            let delta = args.detuning_mhz.unwrap_or(3.0) * 1e6;
            let t2_star = match (args.t2_star_us, &cfg) {
                (Some(t), _) => t * 1e-6,
                (None, Some(c)) => c.sites[0].coherence.t2_star,
                (None, None) => spinmux::physics::CoherenceParams::default().t2_star,
            };
            let manifold = cfg
                .as_ref()
                .map(|c| c.constants.manifold())
                .unwrap_or_default();
            let ts = args
                .times_ns
                .unwrap_or(Linspace {
                    start: 0.0,
                    stop: 8000.0,
                    n: 801,
                })
                .values();
            let secs: Vec<f64> = ts.iter().map(|t| t * 1e-9).collect();
            let s = simulate_ramsey(delta, &manifold, t2_star, &secs)?;
            csv(
                "tau_ns,signal",
                ts.iter()
                    .zip(&s)
                    .map(|(t, s)| vec![fmt_num(*t), fmt_num(*s)]),
            )
        }
        SimulationKind::Odmr => {
            let cfg = need_cfg()?;
            let scan: Vec<f64> = args.scan_ghz.values().iter().map(|f| f * 1e9).collect();
            let probe = args.rabi_mhz.unwrap_or(1.0) * 1e6;
            let spectrum = simulate_odmr(
                &cfg.env,
                &cfg.drive,
                &cfg.sites,
                probe,
                &scan,
                args.linewidth_mhz * 1e6,
            )?;
            csv(
                "f_ghz,contrast",
                spectrum
                    .iter()
                    .map(|p| vec![fmt_num(p.frequency / 1e9), fmt_num(p.contrast)]),
            )
        }
        SimulationKind::Pulse => {
            let cfg = need_cfg()?;
            let path = args
                .pulse
                .as_deref()
                .ok_or_else(|| CliError::Usage("simulate pulse requires --pulse".into()))?;
            let pulse = pulse_file::read(path)?;
            let manifold = cfg.constants.manifold();
            let mut rows = Vec::with_capacity(cfg.sites.len());
            for site in &cfg.sites {
                let delta = field_sample(&cfg.env, &cfg.drive, site)?.omega_plus
                    - cfg.drive.carrier.omega_mw;
                let eps = idle_error(&pulse, delta, &QubitState::ground(), &manifold);
                rows.push(vec![site.id.clone(), fmt_num(delta / 1e6), fmt_num(eps)]);
            }
            csv("site,detuning_mhz,epsilon", rows)
        }
    };
    emit(args.out.as_deref(), &text)
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub target_site: String,
    /// Repeat for several idle spins.
    #[arg(long)]
    pub idle_site: Vec<String>,
    #[arg(long, default_value_t = OptimizerConfig::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 10.0)]
    pub duration_us: f64,
    #[arg(long, default_value_t = 10.0)]
    pub max_amp_mhz: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = OptimizerConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = OptimizerConfig::default().tol)]
    pub tol: f64,
    #[arg(long)]
    pub out_pulse: PathBuf,
    #[arg(long)]
    pub out_trace: PathBuf,
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::Stationary => "stationary",
        Termination::MaxIters => "max_iters",
        Termination::Diverged => "diverged",
    }
}

pub fn trace_jsonl(s: &Synthesis) -> String {
    let mut out = String::new();
    for r in &s.trace.rows {
        let row = json!({
            "restart": s.trace.restart,
            "iteration": r.iteration,
            "f": r.f,
            "eps_i": r.eps_i,
            "eps_j": r.eps_j,
            "reg": r.reg,
            "step": r.step,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    let end = json!({
        "restart": s.trace.restart,
        "termination": termination_name(s.trace.termination),
    });
    out.push_str(&end.to_string());
    out.push('\n');
    out
}

pub fn optimize_cmd(args: &OptimizeArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    let scenario = scenario(&cfg, &args.target_site, &args.idle_site)?;
    if args.steps == 0 {
        return Err(CliError::Usage("--steps must be >= 1".into()));
    }
    let config = OptimizerConfig {
        m: args.steps,
        dt: args.duration_us * 1e-6 / args.steps as f64,
        lambda: args.lambda,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        restarts: args.restarts,
        max_amp: args.max_amp_mhz * 1e6,
    };
    let (best, result) = match optimize(&scenario, &config) {
        Ok(s) => (s, Ok(())),
        Err(spinmux::Error::Diverged { attempts, best }) => {
            let b = (*best).clone();
            (
                b,
                Err(CliError::Physics(spinmux::Error::Diverged {
                    attempts,
                    best,
                })),
            )
        }
        Err(e) => return Err(e.into()),
    };
    pulse_file::write(&args.out_pulse, &best.pulse)?;
    std::fs::write(&args.out_trace, trace_jsonl(&best))
        .map_err(|e| CliError::io(&args.out_trace, e))?;
    println!(
        "restart={} termination={} iterations={} f={} eps_i={} eps_j={} reg={}",
        best.trace.restart,
        termination_name(best.trace.termination),
        best.trace.rows.len().saturating_sub(1),
        fmt_num(best.cost.f),
        fmt_num(best.cost.eps_i),
        fmt_num(best.cost.eps_j_total()),
        fmt_num(best.cost.reg)
    );
    result
}

#[derive(Debug, Args)]
pub struct CrosstalkMapArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated DC currents; one CSV per value.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    pub idc_ma: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub target_u_um: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub target_v_um: f64,
    #[arg(long, default_value_t = 10.0)]
    pub rabi_mhz: f64,
    #[arg(long, default_value = "-10:10:81", allow_hyphen_values = true)]
    pub u_grid_um: Linspace,
    #[arg(long, default_value = "0:0:1", allow_hyphen_values = true)]
    pub v_grid_um: Linspace,
    /// Defaults to the first site's orientation.
    #[arg(long)]
    pub theta_w_deg: Option<f64>,
    #[arg(long)]
    pub theta_u_deg: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn crosstalk_file_name(i_dc_ma: f64) -> String {
    format!("crosstalk_{i_dc_ma}mA.csv")
}

pub fn crosstalk_map_cmd(args: &CrosstalkMapArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    let orientation = orientation_or_first(&cfg, args.theta_w_deg, args.theta_u_deg)?;
    let target = Vector3::new(args.target_u_um, args.target_v_um, 0.0) * 1e-6;
    let grid: Vec<Vector3<f64>> = args
        .v_grid_um
        .values()
        .iter()
        .flat_map(|&v| {
            args.u_grid_um
                .values()
                .into_iter()
                .map(move |u| Vector3::new(u, v, 0.0) * 1e-6)
        })
        .collect();
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    for &i in &args.idc_ma {
        let report = crosstalk_landscape(
            &cfg.env,
            i * 1e-3,
            &target,
            args.rabi_mhz * 1e6,
            &grid,
            &orientation,
        )?;
        let rows = report.entries.iter().map(|e| {
            vec![
                fmt_num(e.position.x * 1e6),
                fmt_num(e.position.y * 1e6),
                fmt_num(e.epsilon),
                fmt_num(e.bound),
            ]
        });
        let path = args.out_dir.join(crosstalk_file_name(i));
        emit(Some(&path), &csv("u_um,v_um,epsilon,bound", rows))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub pulse: PathBuf,
    #[arg(long)]
    pub target_site: String,
    #[arg(long)]
    pub idle_site: Vec<String>,
    /// Offsets added to every idle detuning.
    #[arg(long, default_value = "-0.2:0.2:41", allow_hyphen_values = true)]
    pub delta_range_mhz: Linspace,
    #[arg(long, default_value = "1:1:1", allow_hyphen_values = true)]
    pub amp_range: Linspace,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn sweep_cmd(args: &SweepArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    let scenario = scenario(&cfg, &args.target_site, &args.idle_site)?;
    let pulse = pulse_file::read(&args.pulse)?;
    let offsets: Vec<f64> = args
        .delta_range_mhz
        .values()
        .iter()
        .map(|x| x * 1e6)
        .collect();
    let points = sensitivity_sweep(&pulse, &scenario, &offsets, &args.amp_range.values());
    let rows = points.iter().map(|p| {
        vec![
            fmt_num(p.offset / 1e6),
            fmt_num(p.scale),
            fmt_num(p.eps_i),
            fmt_num(p.eps_j),
        ]
    });
    emit(
        args.out.as_deref(),
        &csv("offset_mhz,scale,eps_i,eps_j", rows),
    )
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub target_shift_mhz: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub at_u_um: f64,
    /// Defaults to drive.i_dc_ma.
    #[arg(long, allow_hyphen_values = true)]
    pub i_dc_ma: Option<f64>,
    #[arg(long)]
    pub theta_w_deg: Option<f64>,
    #[arg(long)]
    pub theta_u_deg: Option<f64>,
    /// Calibrated configuration; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn calibrate(cfg: &RegisterConfig, args: &CalibrateArgs) -> CliResult<RegisterConfig> {
    let orientation = orientation_or_first(cfg, args.theta_w_deg, args.theta_u_deg)?;
    let i_dc = args.i_dc_ma.map(|i| i * 1e-3).unwrap_or(cfg.drive.i_dc);
    let wire = calibrate_wire(
        &cfg.env,
        &orientation,
        args.target_shift_mhz * 1e6,
        args.at_u_um * 1e-6,
        i_dc,
    )?;
    let mut file = cfg.file.clone();
    file.environment.wire.anchor_um[2] = wire.anchor.z * 1e6;
    RegisterConfig::from_file(file)
}

pub fn calibrate_cmd(args: &CalibrateArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    let out = calibrate(&cfg, args)?;
    let mut text = out.to_json();
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    if args.out.is_some() {
        println!("depth_um={}", fmt_num(-out.env.wire.anchor.z * 1e6));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ShowConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
}

pub fn show_config_cmd(args: &ShowConfigArgs) -> CliResult<()> {
    let cfg = RegisterConfig::load(&args.config)?;
    println!("{}", cfg.to_json());
    Ok(())
}
