//! Gauss rules on `[0, 1]` and on the reference triangle.

use alloc::vec::Vec;

use crate::math::{cos, sqrt};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        x.push(z);
        w.push(2.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Rule on `[0, 1]`, exact for polynomials up to `degree`; weights sum to 1.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn new(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre(n);
        Self {
            points: x.iter().map(|z| 0.5 * (z + 1.0)).collect(),
            weights: w.iter().map(|v| 0.5 * v).collect(),
        }
    }
}

/// Collapsed-Gauss rule on the reference triangle `(0,0), (1,0), (0,1)`,
/// exact up to `degree`; weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Points in reference coordinates `(ξ, η)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn new(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (xa, wa) in x.iter().zip(&w) {
            let u = 0.5 * (xa + 1.0);
            for (xb, wb) in x.iter().zip(&w) {
                let v = 0.5 * (xb + 1.0);
                points.push([u, v * (1.0 - u)]);
                weights.push(0.25 * wa * wb * (1.0 - u));
            }
        }
        Self { points, weights }
    }

    /// Integrates `g` over the triangle with vertices `p`, where `g` receives
    /// the physical point and the barycentric coordinates.
    pub fn integrate<const N: usize>(
        &self,
        p: &[[f64; 2]; 3],
        mut g: impl FnMut([f64; 2], [f64; 3]) -> [f64; N],
    ) -> [f64; N] {
        let area2 = ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        let mut acc = [0.0; N];
        for (q, w) in self.points.iter().zip(&self.weights) {
            let b = [1.0 - q[0] - q[1], q[0], q[1]];
            let x = [
                b[0] * p[0][0] + b[1] * p[1][0] + b[2] * p[2][0],
                b[0] * p[0][1] + b[1] * p[1][1] + b[2] * p[2][1],
            ];
            let v = g(x, b);
            for k in 0..N {
                acc[k] += w * area2 * v[k];
            }
        }
        acc
    }
}

pub(crate) fn segment_length(a: [f64; 2], b: [f64; 2]) -> f64 {
    sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in 1..12 {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn line_rule_exact_monomials() {
        for d in 0..14 {
            let r = LineRule::new(d);
            for k in 0..=d {
                let s: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * libm::pow(*x, k as f64)).sum();
                assert!((s - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "d={d} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_monomials() {
        for d in [1usize, 2, 4, 8, 10, 12] {
            let r = TriangleRule::new(d);
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let s: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| w * libm::pow(p[0], a as f64) * libm::pow(p[1], b as f64))
                        .sum();
                    let exact = factorial(a as u32) * factorial(b as u32) / factorial((a + b + 2) as u32);
                    assert!((s - exact).abs() < 1e-14, "d={d} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn point_counts() {
        assert_eq!(TriangleRule::new(8).points.len(), 25);
        assert_eq!(TriangleRule::new(10).points.len(), 36);
    }
}
