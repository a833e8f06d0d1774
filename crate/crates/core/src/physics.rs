//! Physical constants, spin-site descriptions and the Zeeman algebra that maps
//! a static field onto NV transition frequencies.
//!
//! Every frequency here is cyclic (Hz). Angular factors of 2π are applied only
//! inside [`crate::dynamics`].
//!
//! The chip frame is `(u, v, w)`: `u` runs along the waveguide, `v` is the
//! in-plane transverse axis and `w` points out of the chip plane.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Vacuum permeability, T·m/A.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Default NV zero-field splitting, Hz.
pub const D_ZFS: f64 = 2.87e9;
/// Default NV gyromagnetic ratio, Hz/T.
pub const GAMMA_NV: f64 = 2.803e10;
/// Default ¹⁴N hyperfine splitting, Hz.
pub const HYPERFINE_SPLITTING: f64 = 2.2e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub d_zfs: f64,
    pub gamma_nv: f64,
    pub hyperfine_splitting: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            d_zfs: D_ZFS,
            gamma_nv: GAMMA_NV,
            hyperfine_splitting: HYPERFINE_SPLITTING,
        }
    }
}

impl PhysicalConstants {
    pub fn new(d_zfs: f64, gamma_nv: f64, hyperfine_splitting: f64) -> Result<Self> {
        let c = Self {
            d_zfs,
            gamma_nv,
            hyperfine_splitting,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_zfs", self.d_zfs),
            ("gamma_nv", self.gamma_nv),
            ("hyperfine_splitting", self.hyperfine_splitting),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    name,
                    format!("must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    /// The ¹⁴N triplet implied by these constants.
    pub fn manifold(&self) -> HyperfineManifold {
        HyperfineManifold::new(self.hyperfine_splitting)
    }
}

/// Orientation of an NV dipole axis in the chip frame, in degrees.
///
/// `theta_w` is the polar tilt away from `w`; `theta_u` is the azimuth of the
/// in-plane projection measured from `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleOrientation {
    pub theta_w: f64,
    pub theta_u: f64,
}

impl DipoleOrientation {
    /// Dipole tilt for NVs in [100]-cut diamond (the magic angle).
    pub const THETA_W_100: f64 = 54.7;

    pub fn new(theta_w: f64, theta_u: f64) -> Result<Self> {
        if !(0.0..=180.0).contains(&theta_w) {
            return Err(Error::invalid(
                "theta_w",
                format!("{theta_w} deg outside range [0, 180] deg"),
            ));
        }
        if !(-180.0..=180.0).contains(&theta_u) {
            return Err(Error::invalid(
                "theta_u",
                format!("{theta_u} deg outside range [-180, 180] deg"),
            ));
        }
        Ok(Self { theta_w, theta_u })
    }

    pub fn axis(&self) -> Vector3<f64> {
        dipole_axis(self)
    }
}

/// Unit vector along the dipole axis in `(u, v, w)` components.
pub fn dipole_axis(orientation: &DipoleOrientation) -> Vector3<f64> {
    let (sw, cw) = orientation.theta_w.to_radians().sin_cos();
    let (su, cu) = orientation.theta_u.to_radians().sin_cos();
    Vector3::new(sw * cu, sw * su, cw)
}

/// Splits `b` into its signed component along `axis` and the magnitude of the
/// remainder. `axis` must be unit length.
pub fn project_field(b: &Vector3<f64>, axis: &Vector3<f64>) -> (f64, f64) {
    let b_z = b.dot(axis);
    let b_xy = (b - axis * b_z).norm();
    (b_z, b_xy)
}

/// `(ω₊, ω₋) = D ± γ·B_z`, cyclic Hz.
pub fn transition_frequencies(constants: &PhysicalConstants, b_z_total: f64) -> (f64, f64) {
    let zeeman = constants.gamma_nv * b_z_total;
    (constants.d_zfs + zeeman, constants.d_zfs - zeeman)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    pub t2_star: f64,
    pub t2: f64,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        Self {
            t2_star: 1.7e-6,
            t2: 150e-6,
        }
    }
}

impl CoherenceParams {
    pub fn new(t2_star: f64, t2: f64) -> Result<Self> {
        if !(t2_star > 0.0 && t2_star <= t2 && t2.is_finite()) {
            return Err(Error::invalid(
                "coherence",
                format!("require 0 < t2_star <= t2, got t2_star={t2_star:e} s, t2={t2:e} s"),
            ));
        }
        Ok(Self { t2_star, t2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSite {
    pub id: String,
    /// Metres, chip frame.
    pub position: Vector3<f64>,
    pub orientation: DipoleOrientation,
    pub coherence: CoherenceParams,
}

impl SpinSite {
    pub fn new(
        id: impl Into<String>,
        position: Vector3<f64>,
        orientation: DipoleOrientation,
    ) -> Self {
        Self {
            id: id.into(),
            position,
            orientation,
            coherence: CoherenceParams::default(),
        }
    }
}

/// Detuning offsets of the three nuclear sublevels `m_n ∈ {-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperfineManifold {
    splitting: f64,
}

impl Default for HyperfineManifold {
    fn default() -> Self {
        Self::new(HYPERFINE_SPLITTING)
    }
}

impl HyperfineManifold {
    pub fn new(splitting: f64) -> Self {
        Self {
            splitting: splitting.abs(),
        }
    }

    /// All three members collapse onto the bare detuning.
    pub fn disabled() -> Self {
        Self { splitting: 0.0 }
    }

    pub fn splitting(&self) -> f64 {
        self.splitting
    }

    pub fn offsets(&self) -> [f64; 3] {
        [-self.splitting, 0.0, self.splitting]
    }
}

pub fn hyperfine_detunings(delta: f64, manifold: &HyperfineManifold) -> [f64; 3] {
    manifold.offsets().map(|a| delta + a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_along_w_and_u() {
        let a = dipole_axis(&DipoleOrientation::new(0.0, 0.0).unwrap());
        assert!((a - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        let a = dipole_axis(&DipoleOrientation::new(90.0, 0.0).unwrap());
        assert!((a - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn magic_angle_axis() {
        let a = dipole_axis(&DipoleOrientation::new(54.7, 41.0).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!((a.z - 0.578).abs() < 5e-4);
    }

    #[test]
    fn orientation_range_checked() {
        assert!(DipoleOrientation::new(200.0, 0.0).is_err());
        assert!(DipoleOrientation::new(-1.0, 0.0).is_err());
        assert!(DipoleOrientation::new(10.0, 181.0).is_err());
        assert!(DipoleOrientation::new(180.0, -180.0).is_ok());
    }

    #[test]
    fn projection_parallel_and_perpendicular() {
        let w = Vector3::new(0.0, 0.0, 1.0);
        assert_eq!(
            project_field(&Vector3::new(0.0, 0.0, 5e-3), &w),
            (5e-3, 0.0)
        );
        assert_eq!(
            project_field(&Vector3::new(5e-3, 0.0, 0.0), &w),
            (0.0, 5e-3)
        );
    }

    #[test]
    fn zero_field_degeneracy() {
        let c = PhysicalConstants::default();
        assert_eq!(transition_frequencies(&c, 0.0), (2.87e9, 2.87e9));
    }

    #[test]
    fn bias_for_three_gigahertz() {
        let c = PhysicalConstants::default();
        let b = (3.00e9 - c.d_zfs) / c.gamma_nv;
        assert!((b - 4.64e-3).abs() < 5e-6);
        let (plus, _) = transition_frequencies(&c, b);
        assert!((plus - 3.00e9).abs() < 1e-3);
    }

    #[test]
    fn sixty_megahertz_wire_shift() {
        // 3.00 GHz -> 3.06 GHz under 150 mA.
        let c = PhysicalConstants::default();
        let db = (3.06e9 - 3.00e9) / c.gamma_nv;
        assert!((db - 2.14e-3).abs() < 5e-6);
    }

    #[test]
    fn hyperfine_triplet() {
        let m = HyperfineManifold::default();
        assert_eq!(hyperfine_detunings(0.0, &m), [-2.2e6, 0.0, 2.2e6]);
        let d = hyperfine_detunings(1.1e6, &m);
        assert!((d[0] + 1.1e6).abs() < 1e-9 && d[1] == 1.1e6 && (d[2] - 3.3e6).abs() < 1e-9);
        assert_eq!(
            hyperfine_detunings(7.0, &HyperfineManifold::disabled()),
            [7.0; 3]
        );
    }

    #[test]
    fn constants_must_be_positive() {
        assert!(PhysicalConstants::new(0.0, 1.0, 1.0).is_err());
        assert!(PhysicalConstants::new(1.0, -1.0, 1.0).is_err());
        assert!(PhysicalConstants::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn coherence_ordering() {
        assert!(CoherenceParams::new(1.7e-6, 150e-6).is_ok());
        assert!(CoherenceParams::new(2e-6, 1e-6).is_err());
        assert!(CoherenceParams::new(0.0, 1e-6).is_err());
    }
}
