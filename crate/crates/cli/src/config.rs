//! Register configuration files.
//!
//! JSON with the unit spelled out in every numeric field name. Values are
//! converted to SI on load; [`RegisterConfig::file`] keeps the resolved form
//! with every default filled in.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use spinmux::dynamics::DriveCarrier;
use spinmux::field::{field_sample, FieldEnvironment, WireDrive, WireGeometry};
use spinmux::physics::{CoherenceParams, DipoleOrientation, PhysicalConstants, SpinSite};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub constants: ConstantsFile,
    pub environment: EnvironmentFile,
    pub sites: Vec<SiteFile>,
    #[serde(default)]
    pub drive: DriveFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsFile {
    pub d_zfs_ghz: f64,
    pub gamma_ghz_per_t: f64,
    pub hyperfine_mhz: f64,
}

impl Default for ConstantsFile {
    fn default() -> Self {
        let c = PhysicalConstants::default();
        Self {
            d_zfs_ghz: c.d_zfs / 1e9,
            gamma_ghz_per_t: c.gamma_nv / 1e9,
            hyperfine_mhz: c.hyperfine_splitting / 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentFile {
    #[serde(default)]
    pub b_ext_mt: [f64; 3],
    pub wire: WireFile,
}

fn default_direction() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireFile {
    pub anchor_um: [f64; 3],
    #[serde(default = "default_direction")]
    pub direction: [f64; 3],
    #[serde(default = "one")]
    pub num_filaments: usize,
    #[serde(default)]
    pub width_um: f64,
}

fn default_theta_w() -> f64 {
    DipoleOrientation::THETA_W_100
}

fn default_theta_u() -> f64 {
    41.0
}

fn default_t2_star() -> f64 {
    CoherenceParams::default().t2_star * 1e6
}

fn default_t2() -> f64 {
    CoherenceParams::default().t2 * 1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteFile {
    pub id: String,
    pub position_um: [f64; 3],
    #[serde(default = "default_theta_w")]
    pub theta_w_deg: f64,
    #[serde(default = "default_theta_u")]
    pub theta_u_deg: f64,
    #[serde(default = "default_t2_star")]
    pub t2_star_us: f64,
    #[serde(default = "default_t2")]
    pub t2_us: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveFile {
    pub i_dc_ma: f64,
    pub i_ac_ma: f64,
    /// Fixed carrier. Defaults to the zero-field splitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_ghz: Option<f64>,
    /// Puts the carrier on this site's `ω₊` at `i_dc_ma` instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_site: Option<String>,
    pub phase_rad: f64,
}

/// A validated register in SI units.
#[derive(Debug, Clone)]
pub struct RegisterConfig {
    pub file: ConfigFile,
    pub constants: PhysicalConstants,
    pub env: FieldEnvironment,
    pub sites: Vec<SpinSite>,
    pub drive: WireDrive,
}

fn um(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v) * 1e-6
}

fn at<T>(path: &str, r: spinmux::Result<T>) -> CliResult<T> {
    r.map_err(|e| match e {
        spinmux::Error::Invalid { reason, .. } => CliError::validation(path, reason),
        other => CliError::validation(path, other.to_string()),
    })
}

impl RegisterConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// `origin` labels parse errors.
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_string(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub fn from_file(mut file: ConfigFile) -> CliResult<Self> {
        let c = &file.constants;
        let constants = PhysicalConstants {
            d_zfs: c.d_zfs_ghz * 1e9,
            gamma_nv: c.gamma_ghz_per_t * 1e9,
            hyperfine_splitting: c.hyperfine_mhz * 1e6,
        };
        for (name, v) in [
            ("constants.d_zfs_ghz", c.d_zfs_ghz),
            ("constants.gamma_ghz_per_t", c.gamma_ghz_per_t),
            ("constants.hyperfine_mhz", c.hyperfine_mhz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::validation(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }

        let w = &file.environment.wire;
        if !w.width_um.is_finite() || w.width_um < 0.0 {
            return Err(CliError::validation(
                "environment.wire.width_um",
                "must be >= 0",
            ));
        }
        let wire = WireGeometry::new(
            um(w.anchor_um),
            Vector3::from(w.direction),
            w.num_filaments,
            w.width_um * 1e-6,
        )
        .map_err(|e| match e {
            spinmux::Error::Invalid { field, reason } => {
                let name = match field.as_str() {
                    "anchor" => "anchor_um",
                    "width" => "width_um",
                    other => other,
                };
                CliError::validation(format!("environment.wire.{name}"), reason)
            }
            other => CliError::validation("environment.wire", other.to_string()),
        })?;
        let b_ext = Vector3::from(file.environment.b_ext_mt) * 1e-3;
        let env = at(
            "environment.b_ext_mt",
            FieldEnvironment::new(b_ext, wire, constants),
        )?;

        if file.sites.is_empty() {
            return Err(CliError::validation(
                "sites",
                "at least one site is required",
            ));
        }
        let mut seen = HashSet::new();
        let mut sites = Vec::with_capacity(file.sites.len());
        for (k, s) in file.sites.iter().enumerate() {
            let p = format!("sites[{k}]");
            if s.id.is_empty() {
                return Err(CliError::validation(format!("{p}.id"), "must not be empty"));
            }
            if !seen.insert(s.id.clone()) {
                return Err(CliError::validation(
                    format!("{p}.id"),
                    format!("duplicate site id {:?}", s.id),
                ));
            }
            if !s.position_um.iter().all(|x| x.is_finite()) {
                return Err(CliError::validation(
                    format!("{p}.position_um"),
                    "must be finite",
                ));
            }
            let orientation =
                DipoleOrientation::new(s.theta_w_deg, s.theta_u_deg).map_err(|e| match e {
                    spinmux::Error::Invalid { field, reason } => {
                        CliError::validation(format!("{p}.{field}_deg"), reason)
                    }
                    other => CliError::validation(p.clone(), other.to_string()),
                })?;
            let coherence = at(
                &format!("{p}.t2_star_us"),
                CoherenceParams::new(s.t2_star_us * 1e-6, s.t2_us * 1e-6),
            )?;
            sites.push(SpinSite {
                id: s.id.clone(),
                position: um(s.position_um),
                orientation,
                coherence,
            });
        }

        let d = &file.drive;
        if !d.i_dc_ma.is_finite() {
            return Err(CliError::validation("drive.i_dc_ma", "must be finite"));
        }
        if !(d.i_ac_ma.is_finite() && d.i_ac_ma >= 0.0) {
            return Err(CliError::validation("drive.i_ac_ma", "must be >= 0"));
        }
        let placeholder = at("drive", DriveCarrier::new(constants.d_zfs, 0.0))?;
        let dc_only = at(
            "drive",
            WireDrive::new(d.i_dc_ma * 1e-3, d.i_ac_ma * 1e-3, placeholder),
        )?;
        for (k, s) in sites.iter().enumerate() {
            at(
                &format!("sites[{k}].position_um"),
                field_sample(&env, &dc_only, s),
            )?;
        }
        let carrier_ghz = match (&d.carrier_ghz, &d.carrier_site) {
            (Some(_), Some(_)) => {
                return Err(CliError::validation(
                    "drive.carrier_site",
                    "give either carrier_ghz or carrier_site, not both",
                ))
            }
            (Some(f), None) => *f,
            (None, Some(id)) => {
                let site = sites.iter().find(|s| &s.id == id).ok_or_else(|| {
                    CliError::validation("drive.carrier_site", format!("no site with id {id:?}"))
                })?;
                field_sample(&env, &dc_only, site)?.omega_plus / 1e9
            }
            (None, None) => constants.d_zfs / 1e9,
        };
        let carrier = at(
            "drive.carrier_ghz",
            DriveCarrier::new(carrier_ghz * 1e9, d.phase_rad),
        )?;
        let drive = WireDrive { carrier, ..dc_only };
        if d.carrier_site.is_none() {
            file.drive.carrier_ghz = Some(carrier_ghz);
        }
        Ok(Self {
            file,
            constants,
            env,
            sites,
            drive,
        })
    }

    pub fn site(&self, id: &str) -> CliResult<&SpinSite> {
        self.sites
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| CliError::Usage(format!("no site with id {id:?} in the configuration")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("config serialises")
    }
}
