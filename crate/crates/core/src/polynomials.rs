//! Jacobi, Legendre and integrated Legendre polynomials, their homogenized
//! ("scaled") variants, and Gauss-Legendre quadrature.
//!
//! Every family is evaluated by a three-term recurrence. The scaled families
//! `t^n P_n(s/t)` use the homogenized form of the same recurrence, so they are
//! well defined at `t = 0` and never divide by `t`.

use crate::error::{Error, Result};

const DOMAIN_SLACK: f64 = 1e-12;

/// Exponents `(alpha, beta)` of the Jacobi weight `(1-x)^alpha (1+x)^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiParams {
    alpha: f64,
    beta: f64,
}

impl JacobiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > -1.0 && beta > -1.0) {
            return Err(Error::InvalidJacobiParams { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    pub const LEGENDRE: JacobiParams = JacobiParams {
        alpha: 0.0,
        beta: 0.0,
    };

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Recurrence coefficients `(a, b, c, d)` for
    /// `d P_n = (a x + b) P_{n-1} - c P_{n-2}`, valid for `n >= 2`.
    fn coefficients(&self, n: usize) -> (f64, f64, f64, f64) {
        let (al, be) = (self.alpha, self.beta);
        let n = n as f64;
        let s = 2.0 * n + al + be;
        let a = (s - 1.0) * s * (s - 2.0);
        let b = (s - 1.0) * (al * al - be * be);
        let c = 2.0 * (n + al - 1.0) * (n + be - 1.0) * s;
        let d = 2.0 * n * (n + al + be) * (s - 2.0);
        (a, b, c, d)
    }
}

/// Values and first partial derivatives of a homogenized polynomial family
/// at one point `(s, t)`; entry `n` belongs to degree (or index) `n`.
#[derive(Debug, Clone, Default)]
pub struct ScaledValues {
    pub value: Vec<f64>,
    pub ds: Vec<f64>,
    pub dt: Vec<f64>,
}

fn check_unit_interval(x: f64) -> Result<()> {
    if !(-1.0 - DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&x) {
        return Err(Error::OutOfDomain {
            value: x,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(())
}

/// `t^n P_n^{(alpha,beta)}(s/t)` for `n = 0..=n_max` together with its partial
/// derivatives in `s` and `t`.
pub fn scaled_jacobi(params: JacobiParams, n_max: usize, s: f64, t: f64) -> ScaledValues {
    let mut out = ScaledValues {
        value: vec![0.0; n_max + 1],
        ds: vec![0.0; n_max + 1],
        dt: vec![0.0; n_max + 1],
    };
    out.value[0] = 1.0;
    if n_max == 0 {
        return out;
    }
    let (al, be) = (params.alpha, params.beta);
    out.value[1] = 0.5 * ((al + be + 2.0) * s + (al - be) * t);
    out.ds[1] = 0.5 * (al + be + 2.0);
    out.dt[1] = 0.5 * (al - be);
    for n in 2..=n_max {
        let (a, b, c, d) = params.coefficients(n);
        let lin = a * s + b * t;
        let (p1, p2) = (out.value[n - 1], out.value[n - 2]);
        out.value[n] = (lin * p1 - c * t * t * p2) / d;
        out.ds[n] = (a * p1 + lin * out.ds[n - 1] - c * t * t * out.ds[n - 2]) / d;
        out.dt[n] =
            (b * p1 + lin * out.dt[n - 1] - 2.0 * c * t * p2 - c * t * t * out.dt[n - 2]) / d;
    }
    out
}

/// `t^n L_n(s/t)` for `n = 0..=n_max` with partial derivatives. Entry 0 is
/// unused and left at zero.
pub fn scaled_integrated_legendre(n_max: usize, s: f64, t: f64) -> ScaledValues {
    let mut out = ScaledValues {
        value: vec![0.0; n_max + 1],
        ds: vec![0.0; n_max + 1],
        dt: vec![0.0; n_max + 1],
    };
    if n_max >= 1 {
        out.value[1] = s + t;
        out.ds[1] = 1.0;
        out.dt[1] = 1.0;
    }
    if n_max >= 2 {
        out.value[2] = 0.5 * (s * s - t * t);
        out.ds[2] = s;
        out.dt[2] = -t;
    }
    for n in 3..=n_max {
        let nf = n as f64;
        let a = 2.0 * nf - 3.0;
        let c = nf - 3.0;
        let (l1, l2) = (out.value[n - 1], out.value[n - 2]);
        out.value[n] = (a * s * l1 - c * t * t * l2) / nf;
        out.ds[n] = (a * l1 + a * s * out.ds[n - 1] - c * t * t * out.ds[n - 2]) / nf;
        out.dt[n] = (a * s * out.dt[n - 1] - 2.0 * c * t * l2 - c * t * t * out.dt[n - 2]) / nf;
    }
    out
}

/// `P_k^{(alpha,beta)}(x)` for `k = 0..=n_max`, normalized so that
/// `P_k(1) = binom(k + alpha, k)`.
pub fn jacobi_eval(params: JacobiParams, n_max: usize, x: f64) -> Result<Vec<f64>> {
    check_unit_interval(x)?;
    Ok(scaled_jacobi(params, n_max, x, 1.0).value)
}

/// Legendre polynomials `l_k(x)` for `k = 0..=n_max`.
pub fn legendre_eval(n_max: usize, x: f64) -> Result<Vec<f64>> {
    jacobi_eval(JacobiParams::LEGENDRE, n_max, x)
}

/// Integrated Legendre polynomials `L_n(x) = int_{-1}^x l_{n-1}`; entry `k`
/// of the result holds `L_{k+1}(x)`, so the vector has `n_max` entries.
pub fn integrated_legendre_eval(n_max: usize, x: f64) -> Result<Vec<f64>> {
    if n_max < 1 {
        return Err(Error::InvalidDegree { min: 1, got: n_max });
    }
    check_unit_interval(x)?;
    let mut v = scaled_integrated_legendre(n_max, x, 1.0).value;
    v.remove(0);
    Ok(v)
}

/// Which homogenized family [`scaled_eval`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaledKind {
    Jacobi(JacobiParams),
    IntegratedLegendre,
}

/// `t^n P_n(s/t)` for the chosen family, evaluated without division by `t`.
pub fn scaled_eval(kind: ScaledKind, n: usize, s: f64, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::OutOfDomain {
            value: t,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(match kind {
        ScaledKind::Jacobi(params) => scaled_jacobi(params, n, s, t).value[n],
        ScaledKind::IntegratedLegendre => {
            if n == 0 {
                return Err(Error::InvalidDegree { min: 1, got: 0 });
            }
            scaled_integrated_legendre(n, s, t).value[n]
        }
    })
}

/// Nodes and weights of a quadrature rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// The same rule mapped affinely to `[0, 1]`.
    pub fn unit_interval(&self) -> QuadratureRule1D {
        QuadratureRule1D {
            nodes: self.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
            weights: self.weights.iter().map(|w| 0.5 * w).collect(),
        }
    }
}

/// `n`-point Gauss-Legendre rule, exact for polynomials of degree `2n - 1`.
///
/// Nodes come from Newton's method on `l_n` started at Chebyshev-like
/// guesses.
pub fn gauss_rule(n: usize) -> QuadratureRule1D {
    assert!(n >= 1, "gauss_rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule1D { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_low_degrees() {
        let p = JacobiParams::new(2.0, 2.0).unwrap();
        assert_eq!(jacobi_eval(p, 0, 0.7).unwrap(), vec![1.0]);
        let v = jacobi_eval(p, 1, 1.0).unwrap();
        assert!((v[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_rejects_bad_params() {
        assert!(JacobiParams::new(-1.0, 0.0).is_err());
        assert!(JacobiParams::new(0.0, -1.5).is_err());
        assert!(JacobiParams::new(-0.5, -0.5).is_ok());
    }

    #[test]
    fn jacobi_endpoint_normalization() {
        // P_k(1) = binom(k + alpha, k)
        let p = JacobiParams::new(5.0, 2.0).unwrap();
        let v = jacobi_eval(p, 4, 1.0).unwrap();
        let expected = [1.0, 6.0, 21.0, 56.0, 126.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn jacobi_orthogonality_2_2() {
        let p = JacobiParams::new(2.0, 2.0).unwrap();
        let rule = gauss_rule(6);
        let ip = rule.integrate(|x| {
            let v = jacobi_eval(p, 2, x).unwrap();
            (1.0 - x).powi(2) * (1.0 + x).powi(2) * v[1] * v[2]
        });
        assert!(ip.abs() < 1e-12);
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre_eval(1, 0.5).unwrap(), vec![1.0, 0.5]);
        assert!((legendre_eval(2, 1.0).unwrap()[2] - 1.0).abs() < 1e-15);
        let x: f64 = 0.3;
        let explicit = (3.0 * x * x - 1.0) / 2.0;
        assert!((legendre_eval(2, x).unwrap()[2] - explicit).abs() < 1e-15);
        assert!((explicit + 0.365).abs() < 1e-15);
    }

    #[test]
    fn domain_is_checked() {
        assert!(legendre_eval(3, 1.5).is_err());
        assert!(jacobi_eval(JacobiParams::LEGENDRE, 2, -1.0000001).is_err());
    }

    #[test]
    fn integrated_legendre_values() {
        let v = integrated_legendre_eval(3, 0.25).unwrap();
        assert!((v[0] - 1.25).abs() < 1e-15);
        let at = |x| integrated_legendre_eval(2, x).unwrap()[1];
        assert!(at(-1.0).abs() < 1e-15);
        assert!(at(1.0).abs() < 1e-15);
        assert!((at(0.0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrated_legendre_matches_legendre_difference() {
        // L_n = (l_n - l_{n-2}) / (2n - 1)
        for &x in &[-0.9, -0.3, 0.1, 0.77] {
            let l = legendre_eval(12, x).unwrap();
            let big = integrated_legendre_eval(12, x).unwrap();
            for n in 2..=12 {
                let expected = (l[n] - l[n - 2]) / (2.0 * n as f64 - 1.0);
                assert!((big[n - 1] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scaled_reduces_to_unscaled_at_t_one() {
        let x = 0.2;
        let l3 = integrated_legendre_eval(3, x).unwrap()[2];
        let s = scaled_eval(ScaledKind::IntegratedLegendre, 3, x, 1.0).unwrap();
        assert!((l3 - s).abs() < 1e-15);
    }

    #[test]
    fn scaled_vanishes_at_origin() {
        let p = JacobiParams::new(2.0, 2.0).unwrap();
        assert_eq!(scaled_eval(ScaledKind::Jacobi(p), 2, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(
            scaled_eval(ScaledKind::IntegratedLegendre, 2, 0.0, 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn scaled_homogeneity_example() {
        let c: f64 = 0.37;
        let (s, t) = (0.1, 0.6);
        let base = scaled_eval(ScaledKind::IntegratedLegendre, 2, s, t).unwrap();
        let scaled = scaled_eval(ScaledKind::IntegratedLegendre, 2, c * s, c * t).unwrap();
        assert!((scaled - c * c * base).abs() < 1e-15);
    }

    #[test]
    fn scaled_rejects_negative_t() {
        assert!(scaled_eval(ScaledKind::IntegratedLegendre, 2, 0.0, -0.1).is_err());
    }

    #[test]
    fn gauss_small_rules() {
        let r1 = gauss_rule(1);
        assert_eq!(r1.nodes, vec![0.0]);
        assert!((r1.weights[0] - 2.0).abs() < 1e-15);
        let r2 = gauss_rule(2);
        let x = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + x).abs() < 1e-15 && (r2.nodes[1] - x).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15 && (r2.weights[1] - 1.0).abs() < 1e-15);
        let r5 = gauss_rule(5);
        assert!(r5.integrate(|x| x.powi(9)).abs() < 1e-14);
    }

    #[test]
    fn gauss_rule_invariants() {
        for n in 1..=40 {
            let r = gauss_rule(n);
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n={n}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            // exact for degree 2n-1
            let deg = 2 * n - 2;
            let exact = 2.0 / (deg as f64 + 1.0);
            assert!((r.integrate(|x| x.powi(deg as i32)) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn legendre_norms() {
        let rule = gauss_rule(25);
        for i in 0..20usize {
            let n = i + 1;
            let nrm = rule.integrate(|x| legendre_eval(n, x).unwrap()[n].powi(2));
            assert!((nrm - 2.0 / (2.0 * i as f64 + 3.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn integrated_legendre_vanishes_at_endpoints() {
        for &x in &[-1.0, 1.0] {
            let v = integrated_legendre_eval(20, x).unwrap();
            for n in 2..=20 {
                assert!(v[n - 1].abs() < 1e-13, "L_{n}({x}) = {}", v[n - 1]);
            }
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        const FAMILIES: [(f64, f64); 4] = [(0.0, 0.0), (2.0, 2.0), (5.0, 2.0), (7.0, 2.0)];

        proptest! {
            #[test]
            fn orthogonality(fam in 0usize..4, n in 0usize..=10, m in 0usize..=10) {
                prop_assume!(n != m);
                let (a, b) = FAMILIES[fam];
                let params = JacobiParams::new(a, b).unwrap();
                // weight exponents are integers, so Gauss-Legendre is exact
                let rule = gauss_rule(20);
                let ip = rule.integrate(|x| {
                    let v = jacobi_eval(params, 10, x).unwrap();
                    (1.0 - x).powf(a) * (1.0 + x).powf(b) * v[n] * v[m]
                });
                let nn = rule.integrate(|x| {
                    let v = jacobi_eval(params, 10, x).unwrap();
                    (1.0 - x).powf(a) * (1.0 + x).powf(b) * v[n] * v[n]
                });
                prop_assert!(ip.abs() <= 1e-11 * nn.max(1.0), "ip={ip}");
            }

            #[test]
            fn derivative_is_legendre(x in -0.99f64..0.99, n in 1usize..=12) {
                let f = |y: f64| integrated_legendre_eval(n, y).unwrap()[n - 1];
                let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
                let h = 1e-3;
                let fd = (4.0 * d(h / 2.0) - d(h)) / 3.0;
                let exact = legendre_eval(n, x).unwrap()[n - 1];
                prop_assert!((fd - exact).abs() <= 1e-7 * exact.abs().max(1.0));
            }

            #[test]
            fn homogeneity(c in 0.01f64..5.0, s in -1.0f64..1.0, t in 0.0f64..1.0,
                           n in 1usize..=10, jac in proptest::bool::ANY) {
                let kind = if jac {
                    ScaledKind::Jacobi(JacobiParams::new(5.0, 2.0).unwrap())
                } else {
                    ScaledKind::IntegratedLegendre
                };
                let base = scaled_eval(kind, n, s, t).unwrap();
                let scaled = scaled_eval(kind, n, c * s, c * t).unwrap();
                let expected = c.powi(n as i32) * base;
                prop_assert!((scaled - expected).abs() <= 1e-12 * expected.abs().max(c.powi(n as i32)));
            }

            #[test]
            fn scaled_partials_match_differences(s in -1.0f64..1.0, t in 0.1f64..1.0, n in 1usize..=8) {
                let p = JacobiParams::new(2.0, 2.0).unwrap();
                let h = 1e-5;
                let j = scaled_jacobi(p, n, s, t);
                let js = (scaled_jacobi(p, n, s + h, t).value[n] - scaled_jacobi(p, n, s - h, t).value[n]) / (2.0 * h);
                let jt = (scaled_jacobi(p, n, s, t + h).value[n] - scaled_jacobi(p, n, s, t - h).value[n]) / (2.0 * h);
                prop_assert!((j.ds[n] - js).abs() < 1e-6 * js.abs().max(1.0));
                prop_assert!((j.dt[n] - jt).abs() < 1e-6 * jt.abs().max(1.0));
                let l = scaled_integrated_legendre(n, s, t);
                let ls = (scaled_integrated_legendre(n, s + h, t).value[n] - scaled_integrated_legendre(n, s - h, t).value[n]) / (2.0 * h);
                let lt = (scaled_integrated_legendre(n, s, t + h).value[n] - scaled_integrated_legendre(n, s, t - h).value[n]) / (2.0 * h);
                prop_assert!((l.ds[n] - ls).abs() < 1e-6 * ls.abs().max(1.0));
                prop_assert!((l.dt[n] - lt).abs() < 1e-6 * lt.abs().max(1.0));
            }
        }
    }
}
