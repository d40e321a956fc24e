//! Fiber Bragg grating response: bending strain at the active areas, the
//! strain/temperature wavelength relation and common-mode compensation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{CdmConfig, CurvatureProfile, N_FBG_NODES};

/// Number of model input features: four nodes on each of two fibers.
pub const N_FEATURES: usize = 2 * N_FBG_NODES;

/// Optical constants shared by both fibers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberConstants {
    /// Reference Bragg wavelength per node, nm.
    pub base_wavelengths: [f64; N_FBG_NODES],
    pub photoelastic: f64,
    /// Thermal expansion coefficient, 1/°C.
    pub thermal_expansion: f64,
    /// Thermo-optic coefficient, 1/°C.
    pub thermo_optic: f64,
}

impl Default for FiberConstants {
    fn default() -> Self {
        Self {
            base_wavelengths: [1532.0, 1542.0, 1552.0, 1562.0],
            photoelastic: 0.22,
            thermal_expansion: 0.55e-6,
            thermo_optic: 8.6e-6,
        }
    }
}

impl FiberConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.photoelastic > 0.0 && self.photoelastic < 1.0) {
            return Err(Error::Config(format!(
                "photoelastic coefficient must lie in (0, 1), got {}",
                self.photoelastic
            )));
        }
        if self.base_wavelengths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("base wavelengths must be positive".into()));
        }
        if !(self.thermal_expansion.is_finite() && self.thermo_optic.is_finite()) {
            return Err(Error::Config("thermal coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// One fiber of the sensing assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberSpec {
    pub constants: FiberConstants,
    /// Signed distance from the neutral axis, mm. Positive sits on the left.
    pub radial_offset: f64,
}

impl FiberSpec {
    /// The two fibers mounted at `±offset`; fiber 1 on the left.
    pub fn pair(constants: &FiberConstants, offset: f64) -> [FiberSpec; 2] {
        [
            FiberSpec {
                constants: constants.clone(),
                radial_offset: offset,
            },
            FiberSpec {
                constants: constants.clone(),
                radial_offset: -offset,
            },
        ]
    }

    fn base_wavelength(&self, node: usize) -> Result<f64> {
        self.constants
            .base_wavelengths
            .get(node)
            .copied()
            .ok_or_else(|| Error::Argument(format!("fbg node index {node} out of range 0..4")))
    }
}

/// Mode-corrected wavelength shifts, nm: fiber 1 nodes 1–4 then fiber 2 nodes 1–4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavelengthFrame(pub [f64; N_FEATURES]);

impl WavelengthFrame {
    pub fn shifts(&self) -> &[f64; N_FEATURES] {
        &self.0
    }
}

/// Bending strain `offset · κ(s_j)` at each active area.
pub fn node_strains(
    profile: &CurvatureProfile,
    fiber: &FiberSpec,
    config: &CdmConfig,
) -> Result<[f64; N_FBG_NODES]> {
    let mut out = [0.0; N_FBG_NODES];
    for (e, &s) in out.iter_mut().zip(&config.fbg_node_arclengths) {
        *e = fiber.radial_offset * profile.0[config.segment_at(s)?];
    }
    Ok(out)
}

/// `Δλ = λ_B((1 − p_e)ε + (α_Λ + α_n)ΔT)` for node index `node` (0-based).
pub fn wavelength_shift(strain: f64, delta_t: f64, fiber: &FiberSpec, node: usize) -> Result<f64> {
    let c = &fiber.constants;
    let base = fiber.base_wavelength(node)?;
    Ok(base * ((1.0 - c.photoelastic) * strain + (c.thermal_expansion + c.thermo_optic) * delta_t))
}

/// Inverse of [`wavelength_shift`] for temperature-compensated shifts.
pub fn strain_from_shift(delta_lambda: f64, fiber: &FiberSpec, node: usize) -> Result<f64> {
    let base = fiber.base_wavelength(node)?;
    Ok(delta_lambda / (base * (1.0 - fiber.constants.photoelastic)))
}

/// Raw (uncorrected) shifts of both fibers under a uniform temperature change.
pub fn raw_shifts(
    profile: &CurvatureProfile,
    fibers: &[FiberSpec; 2],
    delta_t: f64,
    config: &CdmConfig,
) -> Result<[f64; N_FEATURES]> {
    let mut out = [0.0; N_FEATURES];
    for (f, fiber) in fibers.iter().enumerate() {
        let strains = node_strains(profile, fiber, config)?;
        for (j, &e) in strains.iter().enumerate() {
            out[f * N_FBG_NODES + j] = wavelength_shift(e, delta_t, fiber, j)?;
        }
    }
    Ok(out)
}

/// Removes the per-node mean of the two fibers.
pub fn common_mode_correct(raw: &[f64; N_FEATURES]) -> WavelengthFrame {
    let mut out = [0.0; N_FEATURES];
    for j in 0..N_FBG_NODES {
        let (a, b) = (raw[j], raw[j + N_FBG_NODES]);
        let mean = 0.5 * (a + b);
        out[j] = a - mean;
        out[j + N_FBG_NODES] = b - mean;
    }
    WavelengthFrame(out)
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma` nm.
pub fn add_measurement_noise(
    frame: &[f64; N_FEATURES],
    sigma: f64,
    seed: u64,
) -> Result<[f64; N_FEATURES]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(frame, sigma, &mut rng)
}

pub(crate) fn add_noise_with<R: rand::Rng>(
    frame: &[f64; N_FEATURES],
    sigma: f64,
    rng: &mut R,
) -> Result<[f64; N_FEATURES]> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Argument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(*frame);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    Ok(frame.map(|v| v + normal.sample(rng)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fiber(offset: f64, base: f64) -> FiberSpec {
        FiberSpec {
            constants: FiberConstants {
                base_wavelengths: [base; 4],
                ..FiberConstants::default()
            },
            radial_offset: offset,
        }
    }

    #[test]
    fn strains_follow_offset_sign() {
        let cfg = CdmConfig::default();
        let kappa = 0.040392;
        let profile = CurvatureProfile::uniform(kappa);
        let [f1, f2] = FiberSpec::pair(&FiberConstants::default(), 0.25);
        let up = node_strains(&profile, &f1, &cfg).unwrap();
        let down = node_strains(&profile, &f2, &cfg).unwrap();
        for j in 0..4 {
            assert_relative_eq!(up[j], 1.0098e-2, max_relative = 1e-12);
            assert_relative_eq!(down[j], -1.0098e-2, max_relative = 1e-12);
        }
        let straight = node_strains(&CurvatureProfile::straight(), &f1, &cfg).unwrap();
        assert_eq!(straight, [0.0; 4]);
    }

    #[test]
    fn strain_samples_containing_segment() {
        let cfg = CdmConfig::default();
        let mut k = [0.0; 30];
        // nodes at 4, 12, 20, 28 mm fall in segments 3, 10, 17, 24
        for (v, i) in [3usize, 10, 17, 24].iter().enumerate() {
            k[*i] = (v + 1) as f64;
        }
        let e = node_strains(&CurvatureProfile(k), &fiber(1.0, 1540.0), &cfg).unwrap();
        assert_eq!(e, [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn node_outside_length_is_config_error() {
        let cfg = CdmConfig {
            fbg_node_arclengths: [4.0, 12.0, 20.0, 36.0],
            ..CdmConfig::default()
        };
        let err = node_strains(&CurvatureProfile::straight(), &fiber(0.25, 1540.0), &cfg);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn wavelength_shift_examples() {
        let f = fiber(0.25, 1540.0);
        assert_eq!(wavelength_shift(0.0, 0.0, &f, 0).unwrap(), 0.0);
        assert_relative_eq!(wavelength_shift(1e-3, 0.0, &f, 0).unwrap(), 1.2012, max_relative = 1e-12);
        assert_relative_eq!(wavelength_shift(0.0, 10.0, &f, 0).unwrap(), 0.140910, max_relative = 1e-12);
        assert!(wavelength_shift(0.0, 0.0, &f, 4).is_err());
    }

    #[test]
    fn strain_from_shift_inverts() {
        let f = fiber(0.25, 1540.0);
        assert_eq!(strain_from_shift(0.0, &f, 2).unwrap(), 0.0);
        assert_relative_eq!(strain_from_shift(1.2012, &f, 2).unwrap(), 1e-3, max_relative = 1e-14);
    }

    #[test]
    fn common_mode_examples() {
        let mut raw = [0.0; 8];
        raw[0] = 0.5;
        raw[4] = -0.3;
        let out = common_mode_correct(&raw).0;
        assert_relative_eq!(out[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(out[4], -0.4, epsilon = 1e-15);
        assert_eq!(common_mode_correct(&[0.0; 8]).0, [0.0; 8]);
    }

    #[test]
    fn noise_contract() {
        let frame = [0.1, -0.2, 0.3, 0.0, 1.0, 2.0, -3.0, 4.0];
        assert_eq!(add_measurement_noise(&frame, 0.0, 9).unwrap(), frame);
        let a = add_measurement_noise(&frame, 0.002, 42).unwrap();
        let b = add_measurement_noise(&frame, 0.002, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, frame);
        assert!(matches!(
            add_measurement_noise(&frame, -1.0, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn noise_standard_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut n = 0.0;
        for _ in 0..(100_000 / 8) {
            for v in add_noise_with(&[0.0; 8], 0.002, &mut rng).unwrap() {
                sum += v;
                sum2 += v * v;
                n += 1.0;
            }
        }
        let mean = sum / n;
        let std = (sum2 / n - mean * mean).sqrt();
        assert!((0.00195..=0.00205).contains(&std), "std {std}");
    }

    fn profiles() -> impl proptest::strategy::Strategy<Value = [f64; 30]> {
        proptest::array::uniform30(-0.08f64..0.08)
    }

    proptest::proptest! {
        #[test]
        fn corrected_shifts_are_antisymmetric(k in profiles(), dt in -5.0f64..5.0) {
            let cfg = CdmConfig::default();
            let fibers = FiberSpec::pair(&FiberConstants::default(), 0.25);
            let out = common_mode_correct(&raw_shifts(&CurvatureProfile(k), &fibers, dt, &cfg).unwrap()).0;
            for j in 0..4 {
                proptest::prop_assert!((out[j] + out[j + 4]).abs() <= 1e-12);
            }
        }

        #[test]
        fn uniform_temperature_cancels(k in profiles(), dt in -20.0f64..20.0) {
            let cfg = CdmConfig::default();
            let fibers = FiberSpec::pair(&FiberConstants::default(), 0.25);
            let p = CurvatureProfile(k);
            let cold = common_mode_correct(&raw_shifts(&p, &fibers, 0.0, &cfg).unwrap()).0;
            let warm = common_mode_correct(&raw_shifts(&p, &fibers, dt, &cfg).unwrap()).0;
            for j in 0..8 {
                proptest::prop_assert!((cold[j] - warm[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn corrected_shift_is_linear_in_node_curvature(kappa in -0.08f64..0.08) {
            let cfg = CdmConfig::default();
            let c = FiberConstants::default();
            let fibers = FiberSpec::pair(&c, 0.25);
            let out = common_mode_correct(
                &raw_shifts(&CurvatureProfile::uniform(kappa), &fibers, 0.0, &cfg).unwrap(),
            ).0;
            for j in 0..4 {
                let slope = c.base_wavelengths[j] * (1.0 - c.photoelastic) * 0.25;
                proptest::prop_assert!((out[j] - slope * kappa).abs() <= 1e-12);
            }
        }
    }
}
