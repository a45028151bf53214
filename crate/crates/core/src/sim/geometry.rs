//! Exact separation between the sharp ego rectangle and the obstacle disk.

/// Signed separation between the rectangle with half widths `half` centered
/// at `p` with heading `psi`, and the disk of `radius` around `center`.
/// Negative values measure penetration depth.
pub fn rectangle_disk_separation(p: [f64; 2], psi: f64, half: [f64; 2], center: [f64; 2], radius: f64) -> f64 {
    let (s, c) = psi.sin_cos();
    let d = [center[0] - p[0], center[1] - p[1]];
    // disk center in the body frame
    let b = [c * d[0] + s * d[1], -s * d[0] + c * d[1]];
    let out = [(b[0].abs() - half[0]).max(0.0), (b[1].abs() - half[1]).max(0.0)];
    let outside = out[0].hypot(out[1]);
    if outside > 0.0 {
        outside - radius
    } else {
        let depth = (half[0] - b[0].abs()).min(half[1] - b[1].abs());
        -(depth + radius)
    }
}
