//! Preconditioned CG and extremal eigenvalues of `B^-1 A`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::precond::AdditiveSchwarzPreconditioner;

#[derive(Debug, Clone)]
pub struct PcgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Preconditioned residual norms `sqrt(r^T B^-1 r)`, starting with the initial one.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

fn precondition(b: Option<&AdditiveSchwarzPreconditioner>, r: &DVector<f64>) -> DVector<f64> {
    match b {
        Some(b) => b.apply(r),
        None => r.clone(),
    }
}

/// Solves `A x = rhs` from `x = 0` until the preconditioned residual drops
/// below `tol` times its initial value.
pub fn pcg(
    a: &DMatrix<f64>,
    b: Option<&AdditiveSchwarzPreconditioner>,
    rhs: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<PcgResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    let mut r = rhs.clone();
    let mut z = precondition(b, &r);
    let mut rz = r.dot(&z);
    let r0 = rz.max(0.0).sqrt();
    let mut residuals = vec![r0];
    if r0 == 0.0 {
        return Ok(PcgResult { x, iterations: 0, residuals, converged: true });
    }
    let mut d = z.clone();
    for it in 1..=max_iter {
        let ad = a * &d;
        let dad = d.dot(&ad);
        if !(dad > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("p^T A p = {dad:e} in iteration {it}")));
        }
        let step = rz / dad;
        x.axpy(step, &d, 1.0);
        r.axpy(-step, &ad, 1.0);
        z = precondition(b, &r);
        let rz_new = r.dot(&z);
        let res = rz_new.max(0.0).sqrt();
        residuals.push(res);
        if res <= tol * r0 {
            return Ok(PcgResult { x, iterations: it, residuals, converged: true });
        }
        d = &z + &d * (rz_new / rz);
        rz = rz_new;
    }
    Ok(PcgResult { x, iterations: max_iter, residuals, converged: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub method: SpectralMethod,
    pub iterations: usize,
}

impl SpectralReport {
    fn new(lambda_min: f64, lambda_max: f64, method: SpectralMethod, iterations: usize) -> Result<Self> {
        if !(lambda_min > 0.0) || !(lambda_max >= lambda_min) || !lambda_max.is_finite() {
            return Err(Error::Spectral(format!(
                "extremal eigenvalues {lambda_min:e}, {lambda_max:e} are not those of an SPD pencil"
            )));
        }
        Ok(Self {
            lambda_min,
            lambda_max,
            kappa: lambda_max / lambda_min,
            method,
            iterations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    /// Largest dimension handled by the dense path.
    pub dense_threshold: usize,
    pub lanczos_iterations: usize,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            dense_threshold: 4000,
            lanczos_iterations: 200,
            seed: 7,
        }
    }
}

/// Extremal eigenvalues of `B^-1 A` (of `A` without preconditioner).
pub fn spectral_bounds(
    a: &DMatrix<f64>,
    b: Option<&AdditiveSchwarzPreconditioner>,
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    if a.nrows() <= opts.dense_threshold {
        dense_bounds(a, b)
    } else {
        match lanczos_bounds(a, b, opts) {
            Err(Error::Spectral(_)) => dense_bounds(a, b),
            other => other,
        }
    }
}

/// `B^-1 A` is similar to `L^T B^-1 L` with `A = L L^T`.
pub fn dense_bounds(a: &DMatrix<f64>, b: Option<&AdditiveSchwarzPreconditioner>) -> Result<SpectralReport> {
    let n = a.nrows();
    let sym = match b {
        None => (a + a.transpose()) * 0.5,
        Some(b) => {
            let l = a
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("system matrix".into()))?
                .unpack();
            let binv = b.to_dense();
            let binv = (&binv + binv.transpose()) * 0.5;
            let m = l.transpose() * binv * &l;
            (&m + m.transpose()) * 0.5
        }
    };
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    SpectralReport::new(lo, hi, SpectralMethod::Dense, n)
}

/// Lanczos for `B^-1 A`, self-adjoint in the `A` inner product, with full
/// reorthogonalization. Stops early on an invariant subspace.
pub fn lanczos_bounds(
    a: &DMatrix<f64>,
    b: Option<&AdditiveSchwarzPreconditioner>,
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    let n = a.nrows();
    let m = opts.lanczos_iterations.min(n).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let mut av = a * &v;
    let norm = v.dot(&av);
    if !(norm > 0.0) {
        return Err(Error::NotPositiveDefinite("system matrix".into()));
    }
    v /= norm.sqrt();
    av /= norm.sqrt();
    let mut basis: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(m);
    let (mut alpha, mut beta) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for j in 0..m {
        let mut w = precondition(b, &av);
        let aj = w.dot(&av);
        alpha.push(aj);
        basis.push((v.clone(), av.clone()));
        for _ in 0..2 {
            for (u, au) in &basis {
                let c = w.dot(au);
                w.axpy(-c, u, 1.0);
            }
        }
        // recomputed rather than updated: the update loses all accuracy once w is small
        let aw = a * &w;
        let bj2 = w.dot(&aw);
        let done = j + 1 == m;
        if done || !(bj2 > 1e-24 * aj * aj) {
            break;
        }
        let bj = bj2.sqrt();
        beta.push(bj);
        v = w / bj;
        av = aw / bj;
    }
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let ev = SymmetricEigen::new(t).eigenvalues;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    SpectralReport::new(lo, hi, SpectralMethod::Lanczos, k)
}
