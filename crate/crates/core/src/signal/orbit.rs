//! Synthetic circular-orbit satellite geometry.
//!
//! The constellation is self-consistent rather than tied to real
//! ephemerides: positions are given directly in the Earth-fixed frame,
//! so the same orbit parameters drive both signal synthesis and the
//! receiver-side position reconstruction.

use serde::{Deserialize, Serialize};

/// Circular orbit: radius, plane orientation and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularOrbit {
    pub radius_m: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    pub anomaly0_rad: f64,
    pub angular_rate_rad_s: f64,
}

impl CircularOrbit {
    /// ECEF position at time `t` seconds.
    pub fn position(&self, t: f64) -> [f64; 3] {
        let nu = self.anomaly0_rad + self.angular_rate_rad_s * t;
        let (sin_nu, cos_nu) = nu.sin_cos();
        self.rotate([self.radius_m * cos_nu, self.radius_m * sin_nu, 0.0])
    }

    /// ECEF velocity at time `t` seconds.
    pub fn velocity(&self, t: f64) -> [f64; 3] {
        let nu = self.anomaly0_rad + self.angular_rate_rad_s * t;
        let (sin_nu, cos_nu) = nu.sin_cos();
        let v = self.radius_m * self.angular_rate_rad_s;
        self.rotate([-v * sin_nu, v * cos_nu, 0.0])
    }

    /// Rotate an in-plane vector by inclination about x, then RAAN about z.
    fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let (sin_i, cos_i) = self.inclination_rad.sin_cos();
        let (sin_o, cos_o) = self.raan_rad.sin_cos();
        let y1 = p[1] * cos_i - p[2] * sin_i;
        let z1 = p[1] * sin_i + p[2] * cos_i;
        [
            p[0] * cos_o - y1 * sin_o,
            p[0] * sin_o + y1 * cos_o,
            z1,
        ]
    }
}

/// A satellite definition: PRN, orbit and nominal transmit power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteDef {
    pub prn: u8,
    #[serde(flatten)]
    pub orbit: CircularOrbit,
    pub tx_power_dbw: f64,
}

impl SatelliteDef {
    pub fn position(&self, t: f64) -> [f64; 3] {
        self.orbit.position(t)
    }

    pub fn velocity(&self, t: f64) -> [f64; 3] {
        self.orbit.velocity(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm3(v: [f64; 3]) -> f64 {
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
    use std::f64::consts::{PI, TAU};

    fn sample_orbit() -> CircularOrbit {
        CircularOrbit {
            radius_m: 26_559_800.0,
            inclination_rad: 0.9599,
            raan_rad: 1.2,
            anomaly0_rad: 0.4,
            angular_rate_rad_s: 1.4585e-4,
        }
    }

    #[test]
    fn radius_is_preserved() {
        let orbit = sample_orbit();
        for t in [0.0, 17.3, 900.0, 86_400.0] {
            let r = norm3(orbit.position(t));
            assert!((r - orbit.radius_m).abs() / orbit.radius_m < 1e-6, "t={t}");
        }
    }

    #[test]
    fn period_is_two_pi_over_rate() {
        let orbit = sample_orbit();
        let period = TAU / orbit.angular_rate_rad_s;
        let a = orbit.position(100.0);
        let b = orbit.position(100.0 + period);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() / orbit.radius_m < 1e-6);
        }
    }

    #[test]
    fn zero_angles_start_on_equatorial_x_axis() {
        let orbit = CircularOrbit {
            radius_m: 26_559_800.0,
            inclination_rad: 0.0,
            raan_rad: 0.0,
            anomaly0_rad: 0.0,
            angular_rate_rad_s: 1.4585e-4,
        };
        let p = orbit.position(0.0);
        assert!((p[0] - orbit.radius_m).abs() < 1e-6);
        assert!(p[1].abs() < 1e-6);
        assert!(p[2].abs() < 1e-6);
    }

    #[test]
    fn velocity_matches_finite_difference() {
        let orbit = sample_orbit();
        let h = 1e-3;
        let t = 321.0;
        let p0 = orbit.position(t - h);
        let p1 = orbit.position(t + h);
        let v = orbit.velocity(t);
        for k in 0..3 {
            let fd = (p1[k] - p0[k]) / (2.0 * h);
            assert!((v[k] - fd).abs() < 1e-2, "component {k}: {} vs {}", v[k], fd);
        }
        // Speed of a circular orbit is r * omega.
        let speed = norm3(v);
        assert!((speed - orbit.radius_m * orbit.angular_rate_rad_s).abs() < 1e-3);
    }

    #[test]
    fn quarter_period_is_orthogonal() {
        let orbit = CircularOrbit {
            radius_m: 1.0,
            inclination_rad: PI / 3.0,
            raan_rad: 0.7,
            anomaly0_rad: 0.0,
            angular_rate_rad_s: 1.0,
        };
        let a = orbit.position(0.0);
        let b = orbit.position(PI / 2.0);
        assert!(dot3(a, b).abs() < 1e-12);
    }
}
