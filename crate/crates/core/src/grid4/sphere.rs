//! Product quadrature on the unit 3-sphere.
//!
//! Coordinates x = (sinψ sinθ cosφ, sinψ sinθ sinφ, sinψ cosθ, cosψ) with
//! measure sin²ψ sinθ dψ dθ dφ. The ψ factor is a Gauss rule in cosψ for the
//! weight √(1 − t²) (Chebyshev, second kind), θ is Gauss–Legendre in cosθ and
//! φ is the uniform trapezoid rule.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct S3Quadrature {
    points: Vec<[f64; 4]>,
    weights: Vec<f64>,
    shape: [usize; 3],
}

impl Default for S3Quadrature {
    fn default() -> Self {
        Self::new(16, 16, 32)
    }
}

impl S3Quadrature {
    pub fn new(n_psi: usize, n_theta: usize, n_phi: usize) -> Self {
        let (ct, wt) = gauss_legendre(n_theta);
        let mut points = Vec::with_capacity(n_psi * n_theta * n_phi);
        let mut weights = Vec::with_capacity(points.capacity());
        let wphi = 2.0 * PI / n_phi as f64;
        for j in 1..=n_psi {
            let angle = j as f64 * PI / (n_psi as f64 + 1.0);
            let (spsi, cpsi) = angle.sin_cos();
            // sin²ψ dψ = √(1 − t²) dt with t = cosψ
            let wpsi = PI / (n_psi as f64 + 1.0) * spsi * spsi;
            for (t, w) in ct.iter().zip(&wt) {
                let st = (1.0 - t * t).sqrt();
                for p in 0..n_phi {
                    let (sp, cp) = (p as f64 * wphi).sin_cos();
                    points.push([spsi * st * cp, spsi * st * sp, spsi * t, cpsi]);
                    weights.push(wpsi * w * wphi);
                }
            }
        }
        Self { points, weights, shape: [n_psi, n_theta, n_phi] }
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// (ψ, θ, φ) node counts.
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; 4]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let int = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((int(0) - 2.0).abs() < 1e-14);
        assert!((int(14) - 2.0 / 15.0).abs() < 1e-14);
        assert!(int(7).abs() < 1e-14);
    }

    #[test]
    fn sphere_area_and_moments() {
        let q = S3Quadrature::default();
        let area = 2.0 * PI * PI;
        assert!((q.total_weight() - area).abs() < 1e-8);
        for a in 0..4 {
            let m2 = q.integrate(|x| x[a] * x[a]);
            assert!((m2 - area / 4.0).abs() < 1e-10, "{a}: {m2}");
        }
        // ∫ x₁²x₄² = |S³| / 24
        let m = q.integrate(|x| x[0] * x[0] * x[3] * x[3]);
        assert!((m - area / 24.0).abs() < 1e-10);
    }

    #[test]
    fn points_lie_on_sphere() {
        let q = S3Quadrature::new(4, 5, 6);
        assert_eq!(q.len(), 120);
        for p in q.points() {
            let r2: f64 = p.iter().map(|v| v * v).sum();
            assert!((r2 - 1.0).abs() < 1e-14);
        }
    }
}
