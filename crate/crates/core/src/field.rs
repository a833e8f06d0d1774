//! Wire fields, per-site Zeeman shifts and Rabi frequencies, and frequency
//! address maps.
//!
//! The on-chip line is modelled as a bundle of infinitely long, thin, parallel
//! filaments spread uniformly (midpoint rule) across the wire width in the
//! chip plane. The field of each filament is the closed-form Biot-Savart result
//! `μ₀ I / (2π d)` circulating by the right-hand rule.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Vector3;

use crate::dynamics::DriveCarrier;
use crate::error::{Error, Result};
use crate::par;
use crate::physics::{
    dipole_axis, project_field, transition_frequencies, DipoleOrientation, PhysicalConstants,
    SpinSite, MU0,
};

/// Points closer than this to a filament centerline are rejected.
pub const MIN_FILAMENT_DISTANCE: f64 = 1e-9;

/// Depth bracket searched by [`calibrate_wire`], metres.
pub const CALIBRATION_DEPTH_RANGE: (f64, f64) = (1e-7, 1e-4);

const CALIBRATION_SCAN_POINTS: usize = 300;
const CALIBRATION_DEPTH_TOL: f64 = 1e-10;
const CALIBRATION_SHIFT_TOL: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct WireGeometry {
    /// A point on the wire centerline, metres.
    pub anchor: Vector3<f64>,
    direction: Vector3<f64>,
    num_filaments: usize,
    width: f64,
}

impl WireGeometry {
    /// `direction` is normalised here; it must be non-zero.
    pub fn new(
        anchor: Vector3<f64>,
        direction: Vector3<f64>,
        num_filaments: usize,
        width: f64,
    ) -> Result<Self> {
        let n = direction.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid(
                "direction",
                "must be a finite non-zero vector",
            ));
        }
        if !anchor.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("anchor", "must be finite"));
        }
        if num_filaments == 0 {
            return Err(Error::invalid("num_filaments", "must be >= 1"));
        }
        if !(width.is_finite() && width >= 0.0) {
            return Err(Error::invalid(
                "width",
                format!("must be >= 0, got {width:e}"),
            ));
        }
        if width == 0.0 && num_filaments != 1 {
            return Err(Error::invalid(
                "num_filaments",
                "a zero-width wire must have exactly one filament",
            ));
        }
        Ok(Self {
            anchor,
            direction: direction / n,
            num_filaments,
            width,
        })
    }

    pub fn thin(anchor: Vector3<f64>, direction: Vector3<f64>) -> Result<Self> {
        Self::new(anchor, direction, 1, 0.0)
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }

    pub fn num_filaments(&self) -> usize {
        self.num_filaments
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Same wire moved so that its anchor sits `depth` below the chip plane.
    pub fn at_depth(&self, depth: f64) -> Self {
        let mut g = self.clone();
        g.anchor.z = -depth;
        g
    }

    /// In-plane unit vector across the wire width.
    fn spread_axis(&self) -> Vector3<f64> {
        let across = self.direction.cross(&Vector3::z());
        let n = across.norm();
        if n < 1e-12 {
            Vector3::x()
        } else {
            across / n
        }
    }

    fn filament_anchors(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let n = self.num_filaments;
        let step = self.width / n as f64;
        let across = self.spread_axis();
        (0..n).map(move |k| {
            let offset = -0.5 * self.width + (k as f64 + 0.5) * step;
            self.anchor + across * offset
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnvironment {
    /// Uniform external bias, tesla.
    pub b_ext: Vector3<f64>,
    pub wire: WireGeometry,
    pub constants: PhysicalConstants,
}

impl FieldEnvironment {
    pub fn new(
        b_ext: Vector3<f64>,
        wire: WireGeometry,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        if !b_ext.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("b_ext", "must be finite"));
        }
        constants.validate()?;
        Ok(Self {
            b_ext,
            wire,
            constants,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireDrive {
    /// Amperes.
    pub i_dc: f64,
    /// Peak AC envelope, amperes.
    pub i_ac: f64,
    pub carrier: DriveCarrier,
}

impl WireDrive {
    pub fn new(i_dc: f64, i_ac: f64, carrier: DriveCarrier) -> Result<Self> {
        if !i_dc.is_finite() {
            return Err(Error::invalid("i_dc", "must be finite"));
        }
        if !(i_ac.is_finite() && i_ac >= 0.0) {
            return Err(Error::invalid("i_ac", format!("must be >= 0, got {i_ac}")));
        }
        Ok(Self {
            i_dc,
            i_ac,
            carrier,
        })
    }

    pub fn with_dc(self, i_dc: f64) -> Self {
        Self { i_dc, ..self }
    }

    pub fn with_ac(self, i_ac: f64) -> Self {
        Self { i_ac, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub b_dc_z: f64,
    pub b_ext_z: f64,
    pub b_ac_xy: f64,
    pub omega_plus: f64,
}

/// Magnetic field (tesla) of `current` through `wire`, evaluated at `point`.
pub fn wire_field(wire: &WireGeometry, current: f64, point: &Vector3<f64>) -> Result<Vector3<f64>> {
    let dir = wire.direction;
    let per_filament = current / wire.num_filaments as f64;
    let mut b = Vector3::zeros();
    for anchor in wire.filament_anchors() {
        let r = point - anchor;
        let r_perp = r - dir * r.dot(&dir);
        let d2 = r_perp.norm_squared();
        if d2.sqrt() <= MIN_FILAMENT_DISTANCE {
            return Err(Error::DegeneratePoint {
                distance: d2.sqrt(),
            });
        }
        // |B| = μ₀I/(2πd) along dir × r̂
        b += dir.cross(&r_perp) * (MU0 * per_filament / (2.0 * PI * d2));
    }
    Ok(b)
}

pub fn field_sample(
    env: &FieldEnvironment,
    drive: &WireDrive,
    site: &SpinSite,
) -> Result<FieldSample> {
    sample_at(env, drive, &site.position, &site.orientation)
}

/// [`field_sample`] for a bare position and orientation.
pub fn sample_at(
    env: &FieldEnvironment,
    drive: &WireDrive,
    position: &Vector3<f64>,
    orientation: &DipoleOrientation,
) -> Result<FieldSample> {
    let axis = dipole_axis(orientation);
    let b_dc = wire_field(&env.wire, drive.i_dc, position)?;
    let b_ac = wire_field(&env.wire, drive.i_ac, position)?;
    let (b_dc_z, _) = project_field(&b_dc, &axis);
    let (b_ext_z, _) = project_field(&env.b_ext, &axis);
    let (_, b_ac_xy) = project_field(&b_ac, &axis);
    let (omega_plus, _) = transition_frequencies(&env.constants, b_ext_z + b_dc_z);
    Ok(FieldSample {
        b_dc_z,
        b_ext_z,
        b_ac_xy,
        omega_plus,
    })
}

/// `Ω = γ B_xy / √2`, cyclic Hz.
pub fn rabi_frequency(constants: &PhysicalConstants, b_ac_xy: f64) -> f64 {
    FRAC_1_SQRT_2 * constants.gamma_nv * b_ac_xy
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddressEntry {
    pub site_id: String,
    /// Metres.
    pub u: f64,
    /// Hz.
    pub omega_plus: f64,
    /// Hz per ampere of AC envelope.
    pub rabi_at_unit_current: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddressMap {
    pub entries: Vec<AddressEntry>,
}

impl AddressMap {
    pub fn get(&self, site_id: &str) -> Option<&AddressEntry> {
        self.entries.iter().find(|e| e.site_id == site_id)
    }

    /// `max - min` of the addresses, Hz.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .entries
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                (lo.min(e.omega_plus), hi.max(e.omega_plus))
            });
        if self.entries.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

pub fn address_map(
    env: &FieldEnvironment,
    drive: &WireDrive,
    sites: &[SpinSite],
) -> Result<AddressMap> {
    if sites.is_empty() {
        return Err(Error::invalid("sites", "at least one site is required"));
    }
    let unit_ac = drive.with_ac(1.0);
    let mut entries = par::try_map(sites, |site| {
        let s = field_sample(env, &unit_ac, site)?;
        Ok(AddressEntry {
            site_id: site.id.clone(),
            u: site.position.x,
            omega_plus: s.omega_plus,
            rabi_at_unit_current: rabi_frequency(&env.constants, s.b_ac_xy),
        })
    })?;
    entries.sort_by(|a, b| a.site_id.cmp(&b.site_id));
    Ok(AddressMap { entries })
}

/// Zeeman shift `γ·B_DC,z` (Hz) at `(at_u, 0, 0)` for a wire whose anchor
/// sits `depth` below the chip plane.
fn shift_at_depth(
    env: &FieldEnvironment,
    orientation: &DipoleOrientation,
    at_u: f64,
    i_dc: f64,
    depth: f64,
) -> Result<f64> {
    let wire = env.wire.at_depth(depth);
    let b = wire_field(&wire, i_dc, &Vector3::new(at_u, 0.0, 0.0))?;
    Ok(env.constants.gamma_nv * b.dot(&dipole_axis(orientation)))
}

/// Finds the wire standoff depth that produces `target_shift` (Hz) of Zeeman
/// shift for a spin with `orientation` at `(at_u, 0, 0)` under `i_dc`.
///
/// The anchor keeps its in-plane coordinates; only its `w` coordinate moves.
/// A log-spaced scan from the deepest allowed standoff towards the shallowest
/// picks the first bracketing interval, which is then bisected, so the
/// deepest matching standoff wins when several exist.
pub fn calibrate_wire(
    env: &FieldEnvironment,
    orientation: &DipoleOrientation,
    target_shift: f64,
    at_u: f64,
    i_dc: f64,
) -> Result<WireGeometry> {
    let (min_depth, max_depth) = CALIBRATION_DEPTH_RANGE;
    let no_solution = Error::NoSolution {
        target: target_shift,
        min_depth,
        max_depth,
    };
    if !(target_shift.is_finite() && target_shift > 0.0) {
        return Err(no_solution);
    }
    let residual = |d: f64| -> Result<f64> {
        Ok(shift_at_depth(env, orientation, at_u, i_dc, d)? - target_shift)
    };

    let ratio = (min_depth / max_depth).powf(1.0 / (CALIBRATION_SCAN_POINTS - 1) as f64);
    let mut prev_d = max_depth;
    let mut prev_r = residual(prev_d)?;
    let mut bracket = None;
    for k in 1..CALIBRATION_SCAN_POINTS {
        let d = if k == CALIBRATION_SCAN_POINTS - 1 {
            min_depth
        } else {
            max_depth * ratio.powi(k as i32)
        };
        let r = residual(d)?;
        if r == 0.0 {
            return Ok(env.wire.at_depth(d));
        }
        if (r > 0.0) != (prev_r > 0.0) {
            bracket = Some((prev_d, prev_r, d));
            break;
        }
        prev_d = d;
        prev_r = r;
    }
    let (mut deep, deep_r, mut shallow) = bracket.ok_or(no_solution.clone())?;

    let mut mid = 0.5 * (deep + shallow);
    for _ in 0..200 {
        mid = 0.5 * (deep + shallow);
        let r = residual(mid)?;
        if (deep - shallow).abs() <= CALIBRATION_DEPTH_TOL && r.abs() <= CALIBRATION_SHIFT_TOL {
            break;
        }
        if (r > 0.0) == (deep_r > 0.0) {
            deep = mid;
        } else {
            shallow = mid;
        }
        if deep == shallow {
            break;
        }
    }
    if residual(mid)?.abs() > CALIBRATION_SHIFT_TOL {
        return Err(no_solution);
    }
    Ok(env.wire.at_depth(mid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolvability {
    pub first: String,
    pub second: String,
    /// `|Δω|`, Hz.
    pub spacing: f64,
    pub resolvable: bool,
}

/// Default ratio of address spacing to Rabi frequency needed to resolve two
/// spins with a rectangular pulse.
pub const DEFAULT_RESOLVABILITY_FACTOR: f64 = 20.0;

/// Every unordered pair of the map, flagged resolvable iff
/// `|Δω| >= factor * rabi`.
pub fn resolvability(map: &AddressMap, rabi: f64, factor: f64) -> Result<Vec<Resolvability>> {
    if factor.is_nan() || factor <= 0.0 {
        return Err(Error::invalid(
            "factor",
            format!("must be > 0, got {factor}"),
        ));
    }
    let threshold = factor * rabi;
    let mut out = Vec::new();
    for (i, a) in map.entries.iter().enumerate() {
        for b in &map.entries[i + 1..] {
            let spacing = (a.omega_plus - b.omega_plus).abs();
            out.push(Resolvability {
                first: a.site_id.clone(),
                second: b.site_id.clone(),
                spacing,
                resolvable: spacing > 0.0 && spacing >= threshold,
            });
        }
    }
    Ok(out)
}
