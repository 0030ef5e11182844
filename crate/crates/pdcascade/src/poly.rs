use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Scalars the polynomial layer is generic over.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Dense polynomial, coefficients lowest degree first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly<T> {
    pub coeffs: Vec<T>,
}

impl<T: Real> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.is_zero()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(T::zero());
        }
        Poly { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: T) -> T {
        self.coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_d(&self, x: T) -> (T, T) {
        let mut p = T::zero();
        let mut dp = T::zero();
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn deriv(&self) -> Self {
        if self.coeffs.len() <= 1 {
            return Poly::new(vec![T::zero()]);
        }
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &c)| c * T::from_usize(i).unwrap())
            .collect();
        Poly::new(c)
    }

    pub fn scale(&self, s: T) -> Self {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or_else(T::zero);
                let b = other.coeffs.get(i).copied().unwrap_or_else(T::zero);
                a + b
            })
            .collect();
        Poly::new(c)
    }

    /// Coefficients of x ↦ r(x²) given `self` = r.
    pub fn even_expand(&self) -> Self {
        let mut c = vec![T::zero(); 2 * self.coeffs.len() - 1];
        for (i, &v) in self.coeffs.iter().enumerate() {
            c[2 * i] = v;
        }
        Poly::new(c)
    }
}

/// Chebyshev points of the first kind on [lo, hi].
pub fn chebyshev_nodes(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let t = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * t
        })
        .collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Least-squares fit of r in g(x) = r(x²) to samples (x_k, y_k); returns r and the max abs residual at the samples.
pub fn fit_even(xs: &[f64], ys: &[f64], r_degree: usize) -> (Poly<f64>, f64) {
    let m = xs.len();
    let n = r_degree + 1;
    let a = DMatrix::from_fn(m, n, |i, j| (xs[i] * xs[i]).powi(j as i32));
    // column equilibration keeps the QR solve tame for high powers
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm().max(1e-300)).collect();
    let a_s = DMatrix::from_fn(m, n, |i, j| a[(i, j)] / norms[j]);
    let b = DVector::from_column_slice(ys);
    let sol = a_s
        .clone()
        .svd(true, true)
        .solve(&b, 1e-15)
        .unwrap_or_else(|_| DVector::zeros(n));
    let coeffs: Vec<f64> = (0..n).map(|j| sol[j] / norms[j]).collect();
    let r = Poly::new(coeffs);
    let res = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (r.eval(x * x) - y).abs())
        .fold(0.0, f64::max);
    (r, res)
}

/// Monomial coefficients of the interpolant through (u_k, s_k).
pub fn interpolate(us: &[f64], ss: &[f64]) -> Poly<f64> {
    let n = us.len();
    let a = DMatrix::from_fn(n, n, |i, j| us[i].powi(j as i32));
    let b = DVector::from_column_slice(ss);
    let sol = a.lu().solve(&b).unwrap_or_else(|| DVector::zeros(n));
    Poly::new(sol.iter().copied().collect())
}

/// Lagrange basis polynomial j on nodes, evaluated at u.
pub fn lagrange(nodes: &[f64], j: usize, u: f64) -> f64 {
    let mut v = 1.0;
    for (k, &uk) in nodes.iter().enumerate() {
        if k != j {
            v *= (u - uk) / (nodes[j] - uk);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_matches_naive() {
        let p = Poly::new(vec![1.0, -2.0, 0.5, 3.0]);
        let x = 0.37_f64;
        let naive = 1.0 - 2.0 * x + 0.5 * x * x + 3.0 * x * x * x;
        assert!((p.eval(x) - naive).abs() < 1e-15);
        let (v, d) = p.eval_d(x);
        assert!((v - naive).abs() < 1e-15);
        assert!((d - (-2.0 + x + 9.0 * x * x)).abs() < 1e-14);
    }

    #[test]
    fn generic_over_f32() {
        let p: Poly<f32> = Poly::new(vec![1.0, 0.0, -2.0]);
        assert_eq!(p.eval(0.5), 0.5);
        assert_eq!(p.deriv().coeffs, vec![0.0, -4.0]);
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = Poly::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn even_fit_recovers_exact_polynomial() {
        let xs = chebyshev_nodes(21, -1.0, 1.0);
        let r = Poly::new(vec![1.0, -1.5, 0.1]);
        let ys: Vec<f64> = xs.iter().map(|&x| r.eval(x * x)).collect();
        let (fit, res) = fit_even(&xs, &ys, 4);
        assert!(res < 1e-13);
        assert!((fit.coeffs[1] + 1.5).abs() < 1e-10);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let us = [0.1, 0.4, 0.9];
        let p = interpolate(&us, &[1.0, 2.0, -1.0]);
        assert!((p.eval(0.4) - 2.0).abs() < 1e-12);
        assert!((lagrange(&us, 1, 0.4) - 1.0).abs() < 1e-15);
        assert!(lagrange(&us, 1, 0.9).abs() < 1e-15);
    }
}
