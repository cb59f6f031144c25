//! Gauss–Legendre nodes and sphere frames.

use std::f64::consts::PI;

use nalgebra::Vector3;

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|w| w * half).collect())
}

/// Orthonormal pair spanning the plane perpendicular to the unit vector `a`.
pub fn perpendicular_frame(a: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let k = a.iamin();
    let mut t = Vector3::zeros();
    t[k] = 1.0;
    let e1 = (t - a * a.dot(&t)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Point on the unit sphere with polar axis `a` and frame (e1, e2).
pub fn sphere_point(a: &Vector3<f64>, e1: &Vector3<f64>, e2: &Vector3<f64>, t: f64, phi: f64) -> Vector3<f64> {
    let s = (1.0 - t * t).max(0.0).sqrt();
    a * t + (e1 * phi.cos() + e2 * phi.sin()) * s
}
