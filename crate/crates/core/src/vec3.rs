//! Small fixed-size vector helpers for per-node R³ values.

/// A 3-component vector; nodal magnetization, velocity, and torque values.
pub type Vec3 = [f64; 3];

pub const ZERO: Vec3 = [0.0, 0.0, 0.0];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// a + s·b
pub fn axpy(a: Vec3, s: f64, b: Vec3) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

pub fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

pub fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

/// a / |a|; caller must ensure |a| > 0.
pub fn normalize(a: Vec3) -> Vec3 {
    scale(1.0 / norm(a), a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_follows_right_hand_rule() {
        let x = [1.0, 0.0, 0.0];
        let y = [0.0, 1.0, 0.0];
        assert_eq!(cross(x, y), [0.0, 0.0, 1.0]);
        assert_eq!(cross(y, x), [0.0, 0.0, -1.0]);
    }

    #[test]
    fn cross_is_orthogonal_to_both_factors() {
        let a = [0.3, -1.2, 2.0];
        let b = [1.5, 0.4, -0.7];
        let c = cross(a, b);
        assert!(dot(a, c).abs() < 1e-15);
        assert!(dot(b, c).abs() < 1e-15);
    }

    #[test]
    fn normalize_gives_unit_length() {
        let a = [3.0, 4.0, 12.0];
        assert!((norm(normalize(a)) - 1.0).abs() < 1e-15);
    }
}
