//! Pseudorange navigation solution: iterative least squares on
//! [x, y, z, clock bias].

use crate::signal::SatelliteDef;
use crate::SPEED_OF_LIGHT;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PvtError {
    #[error("{0} observations, at least 4 required")]
    InsufficientObservations(usize),
    #[error("solution did not converge within {0} iterations")]
    NoConvergence(usize),
}

/// One satellite's contribution to an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatObservation {
    pub prn: u8,
    pub pseudorange_m: f64,
    /// Satellite ECEF position at transmit time.
    pub sat_pos_ecef: [f64; 3],
    pub cn0_dbhz: f64,
}

/// All observations of one common reception epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub receive_epoch_s: f64,
    pub sats: Vec<SatObservation>,
}

/// Position/velocity/time solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvtSolution {
    pub position_ecef: [f64; 3],
    pub velocity_ecef: [f64; 3],
    pub clock_bias_s: f64,
    pub residual_rms_m: f64,
    pub fix_valid: bool,
    pub num_sats: usize,
}

const MAX_ITERATIONS: usize = 20;
const CONVERGENCE_M: f64 = 1e-4;

/// Gauss-Newton on linearized pseudoranges. Velocity is left zero; the
/// caller differentiates successive fixes if it needs one.
pub fn solve_pvt(obs: &ObservationSet) -> Result<PvtSolution, PvtError> {
    let n = obs.sats.len();
    if n < 4 {
        return Err(PvtError::InsufficientObservations(n));
    }

    let mut x = [0.0f64; 3];
    let mut bias_m = 0.0f64;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let mut h = DMatrix::<f64>::zeros(n, 4);
        let mut r = DVector::<f64>::zeros(n);
        for (i, sat) in obs.sats.iter().enumerate() {
            let dx = [
                sat.sat_pos_ecef[0] - x[0],
                sat.sat_pos_ecef[1] - x[1],
                sat.sat_pos_ecef[2] - x[2],
            ];
            let range = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
            r[i] = sat.pseudorange_m - (range + bias_m);
            h[(i, 0)] = -dx[0] / range;
            h[(i, 1)] = -dx[1] / range;
            h[(i, 2)] = -dx[2] / range;
            h[(i, 3)] = 1.0;
        }
        let ht = h.transpose();
        let normal = &ht * &h;
        let rhs = &ht * &r;
        let Some(delta) = normal.lu().solve(&rhs) else {
            return Err(PvtError::NoConvergence(MAX_ITERATIONS));
        };
        x[0] += delta[0];
        x[1] += delta[1];
        x[2] += delta[2];
        bias_m += delta[3];
        if delta.norm() < CONVERGENCE_M {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PvtError::NoConvergence(MAX_ITERATIONS));
    }

    let mut ss = 0.0;
    for sat in &obs.sats {
        let dx = [
            sat.sat_pos_ecef[0] - x[0],
            sat.sat_pos_ecef[1] - x[1],
            sat.sat_pos_ecef[2] - x[2],
        ];
        let range = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
        let resid = sat.pseudorange_m - (range + bias_m);
        ss += resid * resid;
    }
    let residual_rms_m = (ss / n as f64).sqrt();

    Ok(PvtSolution {
        position_ecef: x,
        velocity_ecef: [0.0; 3],
        clock_bias_s: bias_m / SPEED_OF_LIGHT,
        residual_rms_m,
        fix_valid: residual_rms_m.is_finite(),
        num_sats: n,
    })
}

/// Geometric range plus receiver clock bias, for building synthetic
/// observations in tests and oracles.
pub fn pseudorange_for(sat: &SatelliteDef, t_transmit: f64, rx: [f64; 3], bias_s: f64) -> f64 {
    let sp = sat.position(t_transmit);
    let dx = [sp[0] - rx[0], sp[1] - rx[1], sp[2] - rx[2]];
    (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt() + bias_s * SPEED_OF_LIGHT
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four satellites placed symmetrically about the origin at equal
    /// range; the closed-form solution is the origin with the common
    /// bias absorbed by the clock term.
    fn symmetric_obs(range: f64, bias_s: f64) -> ObservationSet {
        let a = range / 3f64.sqrt();
        let positions = [
            [a, a, a],
            [a, -a, -a],
            [-a, a, -a],
            [-a, -a, a],
        ];
        ObservationSet {
            receive_epoch_s: 0.0,
            sats: positions
                .iter()
                .enumerate()
                .map(|(i, &p)| SatObservation {
                    prn: i as u8 + 1,
                    pseudorange_m: range + bias_s * SPEED_OF_LIGHT,
                    sat_pos_ecef: p,
                    cn0_dbhz: 45.0,
                })
                .collect(),
        }
    }

    #[test]
    fn symmetric_geometry_solves_to_origin() {
        let bias = 1.5e-3;
        let sol = solve_pvt(&symmetric_obs(26_559_800.0, bias)).unwrap();
        for k in 0..3 {
            assert!(sol.position_ecef[k].abs() < 1e-3, "axis {k}: {}", sol.position_ecef[k]);
        }
        assert!((sol.clock_bias_s - bias).abs() < 1e-9);
        assert!(sol.fix_valid);
        assert!(sol.residual_rms_m < 1e-6);
    }

    #[test]
    fn common_delay_moves_only_the_clock() {
        // Non-symmetric geometry so nothing cancels by accident.
        let sats: [[f64; 3]; 5] = [
            [15_000_000.0, 10_000_000.0, 20_000_000.0],
            [-12_000_000.0, 18_000_000.0, 14_000_000.0],
            [20_000_000.0, -15_000_000.0, 12_000_000.0],
            [-8_000_000.0, -17_000_000.0, 18_000_000.0],
            [5_000_000.0, 23_000_000.0, -11_000_000.0],
        ];
        let rx = [3_200_000.0, 1_000_000.0, 5_400_000.0];
        let make = |extra: f64| ObservationSet {
            receive_epoch_s: 0.0,
            sats: sats
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let dx = [p[0] - rx[0], p[1] - rx[1], p[2] - rx[2]];
                    let range = (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt();
                    SatObservation {
                        prn: i as u8 + 1,
                        pseudorange_m: range + extra,
                        sat_pos_ecef: p,
                        cn0_dbhz: 45.0,
                    }
                })
                .collect(),
        };
        let base = solve_pvt(&make(0.0)).unwrap();
        let delta_m = 900.0;
        let shifted = solve_pvt(&make(delta_m)).unwrap();
        for k in 0..3 {
            assert!((base.position_ecef[k] - shifted.position_ecef[k]).abs() < 1e-3);
        }
        let bias_shift = shifted.clock_bias_s - base.clock_bias_s;
        assert!((bias_shift - delta_m / SPEED_OF_LIGHT).abs() < 1e-12);
        assert!(base.residual_rms_m < 1.0, "noise-free residual {}", base.residual_rms_m);
    }

    #[test]
    fn three_satellites_rejected() {
        let mut obs = symmetric_obs(26_559_800.0, 0.0);
        obs.sats.truncate(3);
        assert_eq!(solve_pvt(&obs), Err(PvtError::InsufficientObservations(3)));
    }
}
