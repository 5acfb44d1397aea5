//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}`.

use crate::polynomials::gauss_rule;

/// Points and weights on the reference triangle; weights sum to `1/2`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor rule with `n` Gauss points per direction.
    ///
    /// With `x = (1+u)(1-v)/4`, `y = (1+v)/2` a polynomial of total degree `k`
    /// becomes degree `k` in `u` and `k + 1` in `v` (Jacobian included), so the
    /// rule is exact for degree `2n - 2`.
    pub fn collapsed(n: usize) -> Self {
        let g = gauss_rule(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&v, &wv) in g.nodes.iter().zip(&g.weights) {
            for (&u, &wu) in g.nodes.iter().zip(&g.weights) {
                points.push([(1.0 + u) * (1.0 - v) / 4.0, (1.0 + v) / 2.0]);
                weights.push(wu * wv * (1.0 - v) / 8.0);
            }
        }
        Self { points, weights }
    }

    /// Smallest collapsed rule exact for polynomials of total degree `degree`.
    pub fn for_degree(degree: usize) -> Self {
        Self::collapsed((degree + 3) / 2)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// `int_T x^a y^b = a! b! / (a + b + 2)!` on the reference triangle.
pub fn monomial_integral(a: u32, b: u32) -> f64 {
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_stated_degree() {
        for deg in 0..=16u32 {
            let rule = TriangleRule::for_degree(deg as usize);
            for a in 0..=deg {
                let b = deg - a;
                let q = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
                let exact = monomial_integral(a, b);
                assert!((q - exact).abs() < 1e-14 * exact.max(1e-3), "a={a} b={b}");
            }
        }
    }

    #[test]
    fn points_inside_and_area() {
        let rule = TriangleRule::collapsed(7);
        assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        for p in &rule.points {
            assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
        }
    }
}
