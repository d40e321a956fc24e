mod common;

use cdm_shape::kinematics::{self, CdmConfig, CurvatureProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn uniform_tip_matches_quadrature() {
    let cfg = CdmConfig::default();
    let bound = cfg.curvature_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let kappa = rng.random_range(-bound..bound);
        let tip = kinematics::shape_from_curvatures(&CurvatureProfile::uniform(kappa), &cfg).tip;
        let oracle = common::quadrature_tip(kappa, cfg.dexterous_length, 1_000_000);
        let err = (tip[0] - oracle[0]).hypot(tip[1] - oracle[1]);
        assert!(err < 1e-6, "kappa {kappa}: error {err} mm");
    }
}

#[test]
fn markers_lie_on_the_quadrature_arc() {
    let cfg = CdmConfig::default();
    let kappa = 0.9 * cfg.curvature_bound();
    let line = kinematics::shape_from_curvatures(&CurvatureProfile::uniform(kappa), &cfg);
    for (i, m) in line.shape.markers.iter().enumerate() {
        let s = i as f64 * cfg.segment_length();
        let oracle = common::quadrature_tip(kappa, s, 100_000);
        assert!((m[0] - oracle[0]).hypot(m[1] - oracle[1]) < 1e-6, "marker {}", i + 1);
    }
}
