//! Self-checks runnable on a fresh checkout: gradient check, sensor-model
//! round trips, the calibration anchor and a contact clearance audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fbg::{self, FiberConstants, FiberSpec};
use crate::kinematics::{self, CdmConfig, Obstacle, Placement, SolverOptions};
use crate::nn;

pub const GRADIENT_TOLERANCE: f64 = 1e-5;
pub const GRADIENT_DIMS: [usize; 4] = [8, 5, 4, 6];

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn below(name: &'static str, value: f64, limit: f64) -> Self {
        Self {
            name,
            value,
            limit,
            passed: value < limit,
        }
    }
}

/// Largest gradient deviation over `nets` random 8→5→4→6 networks.
pub fn gradient_deviation(nets: u64, seed: u64) -> Result<f64> {
    (0..nets).try_fold(0.0f64, |worst, i| {
        Ok(worst.max(nn::gradient_check(&GRADIENT_DIMS, seed.wrapping_add(i))?))
    })
}

/// Worst relative error of strain → shift → strain over `n` random strains.
pub fn strain_round_trip_error(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constants = FiberConstants::default();
    let fiber = &FiberSpec::pair(&constants, 0.25)[0];
    let mut worst = 0.0f64;
    for i in 0..n {
        let eps: f64 = rng.random_range(-2e-2..2e-2);
        let node = i % constants.base_wavelengths.len();
        let back = fbg::strain_from_shift(fbg::wavelength_shift(eps, 0.0, fiber, node)?, fiber, node)?;
        if eps != 0.0 {
            worst = worst.max(((back - eps) / eps).abs());
        }
    }
    Ok(worst)
}

/// Worst residual, nm, of a uniform temperature change after common-mode
/// correction over `n` random curvature profiles and temperatures.
pub fn temperature_residual(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = CdmConfig::default();
    let fibers = FiberSpec::pair(&FiberConstants::default(), cfg.fiber_offset);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let profile = kinematics::CurvatureProfile(std::array::from_fn(|_| rng.random_range(-0.08..0.08)));
        let dt = rng.random_range(-40.0..40.0);
        let cold = fbg::common_mode_correct(&fbg::raw_shifts(&profile, &fibers, 0.0, &cfg)?);
        let warm = fbg::common_mode_correct(&fbg::raw_shifts(&profile, &fibers, dt, &cfg)?);
        for (a, b) in cold.0.iter().zip(&warm.0) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Deepest penetration over constrained solves at 11 displacements per
/// default placement.
pub fn contact_audit(cfg: &CdmConfig, opts: &SolverOptions, radius: f64) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for p in Placement::ALL {
        let obs = Obstacle::at(p, radius)?;
        for k in 0..=10 {
            let delta = p.side().sign() * cfg.max_cable_disp * k as f64 / 10.0;
            let sol = kinematics::constrained_bend(delta, &obs, cfg, opts)?;
            let line = kinematics::shape_from_curvatures(&sol.profile, cfg);
            worst = worst.max(obs.penetration(&line, cfg));
        }
    }
    Ok(worst)
}

pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let cfg = CdmConfig::default();
    let opts = SolverOptions::default();
    let full = kinematics::free_bend_curvature(cfg.max_cable_disp, &cfg)?;
    let angle = kinematics::tip_angle(&full, &cfg).to_degrees();
    Ok(vec![
        Check::below("gradient_check_max_deviation", gradient_deviation(10, seed)?, GRADIENT_TOLERANCE),
        Check::at_most("strain_round_trip_rel_error", strain_round_trip_error(1000, seed)?, 1e-15),
        Check::at_most("common_mode_temperature_residual_nm", temperature_residual(1000, seed)?, 1e-12),
        Check::at_most("tip_angle_error_deg", (angle - cfg.max_tip_angle.to_degrees()).abs(), 1e-9),
        Check::at_most("contact_max_penetration_mm", contact_audit(&cfg, &opts, 10.0)?, opts.penetration_tol),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_all(0).unwrap() {
            assert!(c.passed, "{c:?}");
        }
    }
}
