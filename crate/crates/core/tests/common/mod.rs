/// Tip of a uniform-curvature rod of length `len`, integrating the unit
/// tangent `(cos κs, sin κs)` with the midpoint rule.
pub fn quadrature_tip(kappa: f64, len: f64, steps: usize) -> [f64; 2] {
    let h = len / steps as f64;
    let (mut x, mut y) = (0.0, 0.0);
    for i in 0..steps {
        let theta = kappa * (i as f64 + 0.5) * h;
        x += theta.cos();
        y += theta.sin();
    }
    [x * h, y * h]
}
