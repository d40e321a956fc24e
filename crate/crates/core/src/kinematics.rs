//! Planar piecewise-constant-curvature model of the continuum manipulator.
//!
//! The bendable section is split into [`N_SEGMENTS`] circular arcs of equal
//! length. Markers sit at the proximal end of every arc, so marker 1 is the
//! base origin and marker 30 is one segment short of the distal tip. The tip
//! point itself is carried separately on [`Centerline`].
//!
//! Frames follow the camera convention used for the targets: the base tangent
//! points along +x and a left bend (positive curvature) moves the tip to +y.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_SEGMENTS: usize = 30;
pub const N_MARKERS: usize = 30;
pub const N_FBG_NODES: usize = 4;

/// Geometry and actuation calibration of the manipulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdmConfig {
    /// Arclength of the bendable region covered by the markers, mm.
    pub dexterous_length: f64,
    /// Outer radius of the tube, mm.
    pub outer_radius: f64,
    /// Cable displacement at full deflection, mm.
    pub max_cable_disp: f64,
    /// Free-space tip angle reached at `max_cable_disp`, rad.
    pub max_tip_angle: f64,
    /// Arclengths of the four FBG active areas, mm from the base.
    pub fbg_node_arclengths: [f64; N_FBG_NODES],
    /// Distance of each fiber from the sensor-assembly neutral axis, mm.
    pub fiber_offset: f64,
}

impl Default for CdmConfig {
    fn default() -> Self {
        Self {
            dexterous_length: 35.0,
            outer_radius: 3.0,
            max_cable_disp: 5.0,
            max_tip_angle: 81f64.to_radians(),
            fbg_node_arclengths: [4.0, 12.0, 20.0, 28.0],
            fiber_offset: 0.25,
        }
    }
}

impl CdmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dexterous_length", self.dexterous_length),
            ("outer_radius", self.outer_radius),
            ("max_cable_disp", self.max_cable_disp),
            ("max_tip_angle", self.max_tip_angle),
            ("fiber_offset", self.fiber_offset),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let nodes = &self.fbg_node_arclengths;
        for (j, &s) in nodes.iter().enumerate() {
            if !(0.0..=self.dexterous_length).contains(&s) {
                return Err(Error::Config(format!(
                    "fbg node {} at {s} mm lies outside [0, {}]",
                    j + 1,
                    self.dexterous_length
                )));
            }
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "fbg_node_arclengths must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn segment_length(&self) -> f64 {
        self.dexterous_length / N_SEGMENTS as f64
    }

    /// Uniform curvature per mm of cable displacement, 1/mm².
    pub fn curvature_gain(&self) -> f64 {
        self.max_tip_angle / self.max_cable_disp / self.dexterous_length
    }

    /// Sanity bound on any single segment curvature, 1/mm.
    pub fn curvature_bound(&self) -> f64 {
        2.0 * self.max_tip_angle / self.dexterous_length
    }

    /// Index of the segment containing arclength `s`. Segment `i` covers
    /// `[i·ℓ, (i+1)·ℓ)`; the distal end belongs to the last segment.
    pub fn segment_at(&self, s: f64) -> Result<usize> {
        if !(0.0..=self.dexterous_length).contains(&s) {
            return Err(Error::Config(format!(
                "arclength {s} mm lies outside [0, {}]",
                self.dexterous_length
            )));
        }
        // s·n/L instead of s/ℓ keeps node positions on segment borders exact.
        let idx = (s * N_SEGMENTS as f64 / self.dexterous_length).floor() as usize;
        Ok(idx.min(N_SEGMENTS - 1))
    }
}

/// Signed curvature of every segment, 1/mm. Positive bends left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureProfile(pub [f64; N_SEGMENTS]);

impl CurvatureProfile {
    pub fn straight() -> Self {
        Self([0.0; N_SEGMENTS])
    }

    pub fn uniform(kappa: f64) -> Self {
        Self([kappa; N_SEGMENTS])
    }

    pub fn kappa(&self) -> &[f64; N_SEGMENTS] {
        &self.0
    }

    pub fn within_bound(&self, config: &CdmConfig) -> bool {
        let bound = config.curvature_bound();
        self.0.iter().all(|k| k.is_finite() && k.abs() <= bound)
    }

    pub fn negated(&self) -> Self {
        Self(self.0.map(|k| -k))
    }
}

/// Marker positions in mm with marker 1 at the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeFrame {
    pub markers: [[f64; 2]; N_MARKERS],
}

impl ShapeFrame {
    pub fn tip_marker(&self) -> [f64; 2] {
        self.markers[N_MARKERS - 1]
    }

    /// Interleaved `(x1, y1, x2, y2, ...)`.
    pub fn to_flat(&self) -> [f64; 2 * N_MARKERS] {
        let mut out = [0.0; 2 * N_MARKERS];
        for (i, p) in self.markers.iter().enumerate() {
            out[2 * i] = p[0];
            out[2 * i + 1] = p[1];
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != 2 * N_MARKERS {
            return Err(Error::Shape {
                what: "flattened shape",
                expected: 2 * N_MARKERS,
                got: flat.len(),
            });
        }
        let mut markers = [[0.0; 2]; N_MARKERS];
        for (i, m) in markers.iter_mut().enumerate() {
            *m = [flat[2 * i], flat[2 * i + 1]];
        }
        Ok(Self { markers })
    }
}

/// Full forward-kinematics result: markers plus the distal tip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Centerline {
    pub shape: ShapeFrame,
    /// End of the last arc (arclength = dexterous length).
    pub tip: [f64; 2],
    /// Tangent angle at the tip, rad.
    pub tip_angle: f64,
}

impl Centerline {
    /// Every node of the discretized centerline: the 30 markers and the tip.
    pub fn nodes(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.shape
            .markers
            .iter()
            .copied()
            .chain(std::iter::once(self.tip))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placement {
    BaseLeft,
    CenterLeft,
    TipLeft,
    BaseRight,
    CenterRight,
    TipRight,
}

impl Placement {
    pub const ALL: [Placement; 6] = [
        Placement::BaseLeft,
        Placement::CenterLeft,
        Placement::TipLeft,
        Placement::BaseRight,
        Placement::CenterRight,
        Placement::TipRight,
    ];

    pub fn side(self) -> Side {
        match self {
            Placement::BaseLeft | Placement::CenterLeft | Placement::TipLeft => Side::Left,
            _ => Side::Right,
        }
    }

    /// Obstacle center for the default 35 mm geometry. Placements are chosen
    /// so that contact starts at roughly half stroke and the straight pose is
    /// clear of the obstacle.
    pub fn default_center(self) -> [f64; 2] {
        let (x, y) = match self {
            Placement::BaseLeft | Placement::BaseRight => (8.0, 14.0),
            Placement::CenterLeft | Placement::CenterRight => (14.0, 16.5),
            Placement::TipLeft | Placement::TipRight => (32.0, 26.0),
        };
        [x, self.side().sign() * y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
    pub placement: Placement,
}

impl Obstacle {
    pub fn new(center: [f64; 2], radius: f64, placement: Placement) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Argument(format!(
                "obstacle radius must be positive, got {radius}"
            )));
        }
        Ok(Self {
            center,
            radius,
            placement,
        })
    }

    pub fn at(placement: Placement, radius: f64) -> Result<Self> {
        Self::new(placement.default_center(), radius, placement)
    }

    /// Deepest intrusion of the tube (centerline nodes dilated by the outer
    /// radius) into the obstacle, mm. Negative when clear.
    pub fn penetration(&self, line: &Centerline, config: &CdmConfig) -> f64 {
        let clearance = self.radius + config.outer_radius;
        line.nodes()
            .map(|p| clearance - dist(p, self.center))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that the undeflected manipulator does not touch the obstacle.
    pub fn clear_of_straight_pose(&self, config: &CdmConfig) -> bool {
        let line = shape_from_curvatures(&CurvatureProfile::straight(), config);
        self.penetration(&line, config) < 0.0
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Free-space curvature for cable displacement `delta` (positive pulls left).
pub fn free_bend_curvature(delta: f64, config: &CdmConfig) -> Result<CurvatureProfile> {
    if !delta.is_finite() || delta.abs() > config.max_cable_disp {
        return Err(Error::Range {
            what: "cable displacement",
            value: delta,
            bound: config.max_cable_disp,
        });
    }
    Ok(CurvatureProfile::uniform(config.curvature_gain() * delta))
}

/// Chains the arcs from the base. Each arc is applied in closed form:
/// translate along the chord, then rotate the heading by `κ·ℓ`.
pub fn shape_from_curvatures(profile: &CurvatureProfile, config: &CdmConfig) -> Centerline {
    let seg = config.segment_length();
    let mut markers = [[0.0; 2]; N_MARKERS];
    let (mut x, mut y, mut heading) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &kappa) in profile.0.iter().enumerate() {
        markers[i] = [x, y];
        let turn = kappa * seg;
        let chord = chord_length(kappa, seg);
        let mid = heading + 0.5 * turn;
        x += chord * mid.cos();
        y += chord * mid.sin();
        heading += turn;
    }
    Centerline {
        shape: ShapeFrame { markers },
        tip: [x, y],
        tip_angle: heading,
    }
}

/// Chord of an arc with curvature `kappa` and arclength `len`.
pub fn chord_length(kappa: f64, len: f64) -> f64 {
    let half = 0.5 * kappa.abs() * len;
    if half < 1e-8 {
        // sin(h)/h series; the h⁴ term is below f64 resolution here.
        len * (1.0 - half * half / 6.0)
    } else {
        2.0 * half.sin() / kappa.abs()
    }
}

pub fn tip_angle(profile: &CurvatureProfile, config: &CdmConfig) -> f64 {
    let seg = config.segment_length();
    profile.0.iter().map(|k| k * seg).sum()
}

/// Options of the penalty solver used for obstacle contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Weight of the squared penetration penalty.
    pub beta: f64,
    /// Weight of the curvature smoothness term.
    pub gamma: f64,
    pub max_iters: usize,
    /// Central finite-difference step on curvature, 1/mm.
    pub fd_step: f64,
    /// Accepted residual penetration, mm.
    pub penetration_tol: f64,
    /// Stop once the relative objective decrease falls below this.
    pub rel_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor on a failed Armijo check.
    pub shrink: f64,
    /// Largest curvature change of any segment in one iteration, 1/mm.
    pub max_step: f64,
    /// Number of penalty weights visited, ending at `beta`.
    pub continuation_stages: usize,
    /// Ratio between consecutive penalty weights.
    pub continuation_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            beta: 1e4,
            gamma: 10.0,
            max_iters: 500,
            fd_step: 1e-6,
            penetration_tol: 0.05,
            rel_tol: 1e-8,
            armijo: 1e-4,
            shrink: 0.5,
            max_step: 2e-3,
            continuation_stages: 5,
            continuation_factor: 10.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.gamma >= 0.0
            && self.max_iters > 0
            && self.fd_step > 0.0
            && self.penetration_tol >= 0.0
            && self.rel_tol >= 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.max_step > 0.0
            && self.continuation_factor >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options: {self:?}")))
        }
    }
}

/// Penalized objective of the contact problem.
pub struct ContactObjective<'a> {
    pub free: f64,
    pub gamma: f64,
    pub beta: f64,
    pub obstacle: &'a Obstacle,
    pub config: &'a CdmConfig,
}

impl ContactObjective<'_> {
    pub fn value(&self, kappa: &[f64; N_SEGMENTS]) -> f64 {
        let fit: f64 = kappa.iter().map(|k| (k - self.free).powi(2)).sum();
        let smooth: f64 = kappa.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        fit + self.gamma * smooth + self.beta * self.penalty(kappa)
    }

    /// Sum of squared penetrations over all centerline nodes, mm².
    pub fn penalty(&self, kappa: &[f64; N_SEGMENTS]) -> f64 {
        let line = shape_from_curvatures(&CurvatureProfile(*kappa), self.config);
        let clearance = self.obstacle.radius + self.config.outer_radius;
        line.nodes()
            .map(|p| (clearance - dist(p, self.obstacle.center)).max(0.0).powi(2))
            .sum()
    }

    /// Central finite differences, one coordinate at a time.
    pub fn gradient(&self, kappa: &[f64; N_SEGMENTS], h: f64) -> [f64; N_SEGMENTS] {
        let mut grad = [0.0; N_SEGMENTS];
        let mut probe = *kappa;
        for i in 0..N_SEGMENTS {
            probe[i] = kappa[i] + h;
            let up = self.value(&probe);
            probe[i] = kappa[i] - h;
            let down = self.value(&probe);
            probe[i] = kappa[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }
}

/// Outcome of a successful constrained solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactSolution {
    pub profile: CurvatureProfile,
    pub penetration: f64,
    pub iterations: usize,
    /// Objective value at the full penalty weight.
    pub objective: f64,
}

/// Bends toward `delta` while keeping the tube outside `obstacle`.
///
/// Quadratic penalty method: quasi-Newton descent with backtracking is run on
/// the penalized objective for a rising sequence of penalty weights ending at
/// `opts.beta`, each stage warm-started from the previous one. The first
/// stage starts from the last contact-free pose on the free-bend path, so the
/// tube is held back by the obstacle instead of being pushed through it.
/// Returns the free profile untouched when that is already clear.
pub fn constrained_bend(
    delta: f64,
    obstacle: &Obstacle,
    config: &CdmConfig,
    opts: &SolverOptions,
) -> Result<ContactSolution> {
    let free = free_bend_curvature(delta, config)?;
    let penetration_of = |k: &[f64; N_SEGMENTS]| {
        obstacle.penetration(&shape_from_curvatures(&CurvatureProfile(*k), config), config)
    };
    let mut objective = ContactObjective {
        free: free.0[0],
        gamma: opts.gamma,
        beta: opts.beta,
        obstacle,
        config,
    };
    if penetration_of(&free.0) <= 0.0 {
        return Ok(ContactSolution {
            profile: free,
            penetration: penetration_of(&free.0),
            iterations: 0,
            objective: 0.0,
        });
    }

    let mut kappa =
        CurvatureProfile::uniform(free.0[0] * contact_onset(&free, obstacle, config)).0;
    let mut iterations = 0;
    let stages = opts.continuation_stages.max(1);
    for stage in 0..stages {
        let remaining = (stages - 1 - stage) as i32;
        objective.beta = opts.beta * opts.continuation_factor.powi(-remaining);
        let run = descend(&objective, kappa, opts);
        kappa = run.kappa;
        iterations += run.iterations;
    }

    let penetration = penetration_of(&kappa);
    if penetration > opts.penetration_tol {
        return Err(Error::Solver {
            iterations,
            penetration,
        });
    }
    Ok(ContactSolution {
        profile: CurvatureProfile(kappa),
        penetration,
        iterations,
        objective: objective.value(&kappa),
    })
}

struct Descent {
    kappa: [f64; N_SEGMENTS],
    iterations: usize,
}

/// Quasi-Newton descent with Armijo backtracking until the relative decrease
/// stalls. The inverse Hessian estimate is a dense BFGS update; curvature
/// pairs with `yᵀs ≤ 0` are skipped.
fn descend(objective: &ContactObjective<'_>, start: [f64; N_SEGMENTS], opts: &SolverOptions) -> Descent {
    const N: usize = N_SEGMENTS;
    let mut kappa = start;
    let mut value = objective.value(&kappa);
    let mut grad = objective.gradient(&kappa, opts.fd_step);
    let mut inv_hess = identity();
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let mut dir = [0.0; N];
        for (i, d) in dir.iter_mut().enumerate() {
            *d = -(0..N).map(|j| inv_hess[i][j] * grad[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            // Lost positive definiteness: fall back to steepest descent.
            inv_hess = identity();
            dir = grad.map(|g| -g);
            slope = -grad.iter().map(|g| g * g).sum::<f64>();
        }
        if slope == 0.0 {
            break;
        }
        let d_max = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut step = (opts.max_step / d_max).min(1.0);
        let accepted = loop {
            let mut trial = kappa;
            for (t, d) in trial.iter_mut().zip(&dir) {
                *t += step * d;
            }
            let trial_value = objective.value(&trial);
            if trial_value <= value + opts.armijo * step * slope {
                break Some((trial, trial_value));
            }
            step *= opts.shrink;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((next, next_value)) = accepted else { break };
        let next_grad = objective.gradient(&next, opts.fd_step);
        let s_vec: [f64; N] = std::array::from_fn(|i| next[i] - kappa[i]);
        let y_vec: [f64; N] = std::array::from_fn(|i| next_grad[i] - grad[i]);
        let sy: f64 = s_vec.iter().zip(&y_vec).map(|(a, b)| a * b).sum();
        if sy > 1e-14 * norm(&s_vec) * norm(&y_vec) && sy > 0.0 {
            if iterations == 1 {
                let yy: f64 = y_vec.iter().map(|v| v * v).sum();
                inv_hess = identity();
                for (i, row) in inv_hess.iter_mut().enumerate() {
                    row[i] = sy / yy;
                }
            }
            bfgs_update(&mut inv_hess, &s_vec, &y_vec, sy);
        }
        let decrease = (value - next_value) / value.max(f64::MIN_POSITIVE);
        kappa = next;
        value = next_value;
        grad = next_grad;
        if decrease < opts.rel_tol {
            break;
        }
    }
    Descent { kappa, iterations }
}

type Square = [[f64; N_SEGMENTS]; N_SEGMENTS];

fn identity() -> Square {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ` with `ρ = 1/(yᵀs)`.
fn bfgs_update(h: &mut Square, s: &[f64; N_SEGMENTS], y: &[f64; N_SEGMENTS], sy: f64) {
    const N: usize = N_SEGMENTS;
    let rho = 1.0 / sy;
    let hy: [f64; N] = std::array::from_fn(|i| (0..N).map(|j| h[i][j] * y[j]).sum());
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..N {
        for j in 0..N {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Largest fraction of the free-bend curvature whose pose is still clear of
/// the obstacle. Assumes the straight pose is clear.
fn contact_onset(free: &CurvatureProfile, obstacle: &Obstacle, config: &CdmConfig) -> f64 {
    let clear = |t: f64| {
        let line = shape_from_curvatures(&CurvatureProfile(free.0.map(|k| k * t)), config);
        obstacle.penetration(&line, config) <= 0.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if clear(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> CdmConfig {
        CdmConfig::default()
    }

    #[test]
    fn free_bend_calibration() {
        let c = cfg();
        assert_eq!(free_bend_curvature(0.0, &c).unwrap(), CurvatureProfile::straight());
        let full = free_bend_curvature(5.0, &c).unwrap();
        assert_relative_eq!(full.0[0], 0.040392, max_relative = 1e-5);
        assert!(full.0.iter().all(|&k| k == full.0[0]));
        assert_relative_eq!(tip_angle(&full, &c).to_degrees(), 81.0, epsilon = 1e-9);
        let half = free_bend_curvature(2.5, &c).unwrap();
        assert_relative_eq!(half.0[0], 0.020196, max_relative = 1e-5);
        assert_relative_eq!(tip_angle(&half, &c).to_degrees(), 40.5, epsilon = 1e-9);
        let right = free_bend_curvature(-5.0, &c).unwrap();
        assert_eq!(right, full.negated());
    }

    #[test]
    fn free_bend_rejects_overtravel() {
        match free_bend_curvature(5.01, &cfg()) {
            Err(Error::Range { bound, .. }) => assert_eq!(bound, 5.0),
            other => panic!("expected range error, got {other:?}"),
        }
        assert!(free_bend_curvature(f64::NAN, &cfg()).is_err());
    }

    #[test]
    fn straight_profile_lies_on_x_axis() {
        let c = cfg();
        let line = shape_from_curvatures(&CurvatureProfile::straight(), &c);
        for (i, m) in line.shape.markers.iter().enumerate() {
            assert_relative_eq!(m[0], i as f64 * 35.0 / 30.0, epsilon = 1e-12);
            assert_eq!(m[1], 0.0);
        }
        assert_relative_eq!(line.tip[0], 35.0, epsilon = 1e-12);
        assert_eq!(line.tip_angle, 0.0);
    }

    #[test]
    fn quarter_turn_tip() {
        let c = cfg();
        let kappa = std::f64::consts::FRAC_PI_2 / 35.0;
        let line = shape_from_curvatures(&CurvatureProfile::uniform(kappa), &c);
        assert_relative_eq!(line.tip[0], 22.281692032865347, epsilon = 1e-9);
        assert_relative_eq!(line.tip[1], 22.281692032865347, epsilon = 1e-9);
        assert_relative_eq!(line.tip_angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn full_deflection_tip() {
        let c = cfg();
        let line = shape_from_curvatures(&free_bend_curvature(5.0, &c).unwrap(), &c);
        let theta = 81f64.to_radians();
        let kappa = theta / 35.0;
        assert_relative_eq!(line.tip[0], theta.sin() / kappa, epsilon = 1e-9);
        assert_relative_eq!(line.tip[1], (1.0 - theta.cos()) / kappa, epsilon = 1e-9);
        assert_relative_eq!(line.tip[0], 24.45263, epsilon = 1e-5);
        assert_relative_eq!(line.tip[1], 20.88452, epsilon = 1e-5);
    }

    #[test]
    fn tip_angle_single_segment() {
        let mut k = [0.0; N_SEGMENTS];
        k[0] = 0.03;
        assert_relative_eq!(
            tip_angle(&CurvatureProfile(k), &cfg()),
            0.03 * 35.0 / 30.0,
            epsilon = 1e-15
        );
        assert_eq!(tip_angle(&CurvatureProfile::straight(), &cfg()), 0.0);
    }

    #[test]
    fn segment_lookup_on_borders() {
        let c = cfg();
        assert_eq!(c.segment_at(0.0).unwrap(), 0);
        assert_eq!(c.segment_at(4.0).unwrap(), 3);
        assert_eq!(c.segment_at(28.0).unwrap(), 24);
        assert_eq!(c.segment_at(35.0).unwrap(), 29);
        assert!(c.segment_at(35.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = CdmConfig {
            fbg_node_arclengths: [4.0, 12.0, 12.0, 28.0],
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = CdmConfig {
            dexterous_length: -1.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn default_placements_clear_straight_pose() {
        for p in Placement::ALL {
            let obs = Obstacle::at(p, 10.0).unwrap();
            assert!(obs.clear_of_straight_pose(&cfg()), "{p:?}");
            assert_eq!(obs.center[1].signum(), p.side().sign());
        }
        assert!(Obstacle::at(Placement::TipLeft, 0.0).is_err());
    }

    #[test]
    fn distant_obstacle_returns_free_profile() {
        let c = cfg();
        let obs = Obstacle::new([350.0, 350.0], 10.0, Placement::TipLeft).unwrap();
        for delta in [-5.0, -1.3, 0.0, 2.2, 5.0] {
            let sol = constrained_bend(delta, &obs, &c, &SolverOptions::default()).unwrap();
            assert_eq!(sol.profile, free_bend_curvature(delta, &c).unwrap());
        }
    }

    #[test]
    fn neutral_pose_stays_straight() {
        for p in Placement::ALL {
            let obs = Obstacle::at(p, 10.0).unwrap();
            let sol = constrained_bend(0.0, &obs, &cfg(), &SolverOptions::default()).unwrap();
            assert!(sol.profile.0.iter().all(|&k| k == 0.0));
        }
    }

    #[test]
    fn contact_solution_is_feasible_and_improves_objective() {
        let c = cfg();
        let opts = SolverOptions::default();
        let obs = Obstacle::at(Placement::CenterRight, 10.0).unwrap();
        let free = free_bend_curvature(-5.0, &c).unwrap();
        let free_line = shape_from_curvatures(&free, &c);
        assert!(obs.penetration(&free_line, &c) > 1.0, "free arc must hit the obstacle");

        let sol = constrained_bend(-5.0, &obs, &c, &opts).unwrap();
        let line = shape_from_curvatures(&sol.profile, &c);
        for p in line.shape.markers {
            let d = (p[0] - obs.center[0]).hypot(p[1] - obs.center[1]);
            assert!(d >= 10.0 + 3.0 - 0.05, "marker at distance {d}");
        }
        let objective = ContactObjective {
            free: free.0[0],
            gamma: opts.gamma,
            beta: opts.beta,
            obstacle: &obs,
            config: &c,
        };
        assert!(objective.value(&sol.profile.0) < objective.value(&free.0));
        assert!(sol.profile.within_bound(&c));
    }

    #[test]
    fn contact_solve_is_deterministic() {
        let c = cfg();
        let obs = Obstacle::at(Placement::TipLeft, 10.0).unwrap();
        let a = constrained_bend(4.3, &obs, &c, &SolverOptions::default()).unwrap();
        let b = constrained_bend(4.3, &obs, &c, &SolverOptions::default()).unwrap();
        assert_eq!(a.profile.0.map(f64::to_bits), b.profile.0.map(f64::to_bits));
    }

    #[test]
    fn exhausted_solver_reports_penetration() {
        let c = cfg();
        let obs = Obstacle::at(Placement::TipLeft, 10.0).unwrap();
        let opts = SolverOptions {
            beta: 1e-6,
            continuation_stages: 1,
            ..SolverOptions::default()
        };
        match constrained_bend(5.0, &obs, &c, &opts) {
            Err(Error::Solver { penetration, .. }) => assert!(penetration > 0.05),
            other => panic!("expected solver error, got {other:?}"),
        }
    }

    fn profiles() -> impl Strategy<Value = [f64; N_SEGMENTS]> {
        prop::array::uniform30(-0.08f64..0.08)
    }

    proptest! {
        #[test]
        fn mirror_symmetry(k in profiles()) {
            let c = cfg();
            let a = shape_from_curvatures(&CurvatureProfile(k), &c);
            let b = shape_from_curvatures(&CurvatureProfile(k).negated(), &c);
            for (p, q) in a.nodes().zip(b.nodes()) {
                prop_assert!((p[0] - q[0]).abs() <= 1e-12);
                prop_assert!((p[1] + q[1]).abs() <= 1e-12);
            }
        }

        #[test]
        fn consecutive_markers_are_chords(k in profiles()) {
            let c = cfg();
            let seg = c.segment_length();
            let line = shape_from_curvatures(&CurvatureProfile(k), &c);
            let nodes: Vec<_> = line.nodes().collect();
            let mut arclength = 0.0;
            for i in 0..N_SEGMENTS {
                let d = (nodes[i + 1][0] - nodes[i][0]).hypot(nodes[i + 1][1] - nodes[i][1]);
                let expected = if k[i] == 0.0 { seg } else { 2.0 / k[i].abs() * (k[i].abs() * seg / 2.0).sin() };
                prop_assert!((d - expected).abs() <= 1e-9);
                // recover the arc length from the chord
                arclength += if k[i] == 0.0 { d } else { 2.0 * (d * k[i].abs() / 2.0).asin() / k[i].abs() };
            }
            prop_assert!((arclength - c.dexterous_length).abs() <= 1e-9);
            prop_assert_eq!(line.shape.markers[0], [0.0, 0.0]);
        }

        #[test]
        fn tip_angle_calibration_is_linear(delta in -5.0f64..5.0) {
            let c = cfg();
            let angle = tip_angle(&free_bend_curvature(delta, &c).unwrap(), &c);
            prop_assert!((angle.to_degrees() - 81.0 / 5.0 * delta).abs() <= 1e-9);
        }
    }
}
