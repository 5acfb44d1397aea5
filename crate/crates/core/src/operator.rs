use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// What a [`SymmetricOperator`] discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Hypersingular,
    Mass,
    H1Stiffness,
}

/// Dense symmetric Galerkin matrix plus the data it was assembled with.
#[derive(Debug, Clone)]
pub struct SymmetricOperator {
    pub matrix: DMatrix<f64>,
    pub kind: OperatorKind,
    /// Polynomial degree of the trial space.
    pub degree: usize,
    /// Stabilization parameter; zero for everything but stabilized operators.
    pub alpha: f64,
    /// Extra points added to every quadrature order (0 = defaults).
    pub quadrature_extra: usize,
}

impl SymmetricOperator {
    pub fn new(matrix: DMatrix<f64>, kind: OperatorKind, degree: usize) -> Self {
        Self {
            matrix,
            kind,
            degree,
            alpha: 0.0,
            quadrature_extra: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.amax()
    }

    /// `max |A - A^T|`, the quantity bounded by the symmetry invariant.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Principal submatrix on `idx` (in the given order).
    pub fn restrict(&self, idx: &[usize]) -> DMatrix<f64> {
        principal_submatrix(&self.matrix, idx)
    }

    /// Write `N` followed by the lower triangle, row by row, 17 significant digits.
    pub fn write_lower_triangle(&self, mut w: impl std::io::Write) -> Result<()> {
        let n = self.dim();
        writeln!(w, "{n}")?;
        for i in 0..n {
            for j in 0..=i {
                writeln!(w, "{:.16e}", self.matrix[(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn read_lower_triangle(text: &str, kind: OperatorKind, degree: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.to_string(),
        };
        let (l0, first) = lines.next().ok_or_else(|| parse_err(0, "empty matrix file"))?;
        let n: usize = first
            .trim()
            .parse()
            .map_err(|_| parse_err(l0, "expected dimension"))?;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let (ln, s) = lines.next().ok_or_else(|| parse_err(l0, "truncated matrix"))?;
                let v: f64 = s.trim().parse().map_err(|_| parse_err(ln, "bad value"))?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(Self::new(m, kind, degree))
    }
}

pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}
