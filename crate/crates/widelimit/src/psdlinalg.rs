//! Symmetric / positive-semidefinite matrix calculus: square roots, spectral
//! floors, partial traces and the dominance relation used throughout the
//! kernel recursions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance classifying eigenvalues as numerically zero or negative.
pub const PSD_TOL: f64 = 1e-10;

/// Dense real symmetric matrix. Entries are stored canonically so that
/// `entry(i, j) == entry(j, i)` holds exactly, not just up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrize an arbitrary square matrix by averaging opposite entries.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut out = m.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(SymMatrix { m: out })
    }

    /// Build from an entry function; `f` is only evaluated on `i <= j`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { m }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            m: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.m.norm()
    }

    /// Eigenvalues and eigenvectors, sorted ascending by eigenvalue.
    pub fn eigen(&self) -> (DVector<f64>, DMatrix<f64>) {
        let se = self.m.clone().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let vals = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
        let mut vecs = DMatrix::zeros(n, n);
        for (col, &i) in order.iter().enumerate() {
            vecs.set_column(col, &se.eigenvectors.column(i));
        }
        (vals, vecs)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix { m: &self.m * c }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            m: &self.m - &other.m,
        }
    }
}

/// Symmetric positive-semidefinite matrix with its smallest eigenvalue cached.
#[derive(Debug, Clone)]
pub struct PsdMatrix {
    sym: SymMatrix,
    spectral_floor: f64,
}

impl PsdMatrix {
    /// Validate numerical positive semidefiniteness: eigenvalues must stay
    /// above `-PSD_TOL * ||A||` (Frobenius).
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let (vals, _) = sym.eigen();
        let lambda_min = vals[0];
        let tol = PSD_TOL * sym.norm();
        if lambda_min < -tol {
            return Err(Error::NonPsdInput { lambda_min, tol });
        }
        Ok(PsdMatrix {
            sym,
            spectral_floor: lambda_min,
        })
    }

    /// Project onto the PSD cone: clamp negative eigenvalues to zero and
    /// re-symmetrize. Used after quadrature steps whose rounding can push a
    /// kernel slightly outside the cone.
    pub fn new_clamped(sym: SymMatrix) -> Self {
        let (vals, vecs) = sym.eigen();
        if vals[0] >= 0.0 {
            return PsdMatrix {
                spectral_floor: vals[0],
                sym,
            };
        }
        let clamped = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0)));
        let m = &vecs * DMatrix::from_diagonal(&clamped) * vecs.transpose();
        let sym = SymMatrix::from_matrix(&m).expect("square by construction");
        let floor = sym.eigen().0[0];
        PsdMatrix {
            sym,
            spectral_floor: floor,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        PsdMatrix {
            sym: SymMatrix::zeros(dim),
            spectral_floor: 0.0,
        }
    }

    pub fn identity(dim: usize) -> Self {
        PsdMatrix {
            sym: SymMatrix::identity(dim),
            spectral_floor: 1.0,
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let sym = SymMatrix::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 });
        PsdMatrix::new(sym)
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.sym.entry(i, j)
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.sym.as_matrix()
    }

    pub fn norm(&self) -> f64 {
        self.sym.norm()
    }

    /// Smallest eigenvalue, as computed at construction.
    pub fn spectral_floor(&self) -> f64 {
        self.spectral_floor
    }
}

/// Ordered factorization of a product index set, e.g. `[n, k]` for
/// `R^{n x k}` stored row-major. The factor list is the single source of
/// truth for how multi-indices linearize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexShape {
    factors: Vec<usize>,
}

impl IndexShape {
    pub fn new(factors: Vec<usize>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|&f| f == 0) {
            return Err(Error::InvalidConfig(
                "index shape factors must be positive".into(),
            ));
        }
        Ok(IndexShape { factors })
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major linearization of a multi-index.
    pub fn linear(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.factors.len());
        let mut out = 0;
        for (i, &f) in idx.iter().zip(&self.factors) {
            debug_assert!(*i < f);
            out = out * f + i;
        }
        out
    }
}

/// Positive square root via spectral decomposition. Eigenvalues in
/// `[-PSD_TOL * ||A||, 0)` are clamped to zero before taking roots.
pub fn sym_sqrt(a: &PsdMatrix) -> PsdMatrix {
    let (vals, vecs) = a.as_sym().eigen();
    let roots = DVector::from_iterator(vals.len(), vals.iter().map(|&v| v.max(0.0).sqrt()));
    let m = &vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    PsdMatrix::new_clamped(SymMatrix::from_matrix(&m).expect("square"))
}

/// `(lambda(A), lambda_plus(A))`: the smallest eigenvalue and the smallest
/// eigenvalue above `tol * ||A||`. Returns `f64::INFINITY` for the second
/// component when no eigenvalue clears the threshold (the zero matrix).
pub fn spectral_floors(a: &PsdMatrix, tol: f64) -> (f64, f64) {
    let (vals, _) = a.as_sym().eigen();
    let cut = tol * a.norm();
    let lambda_min = vals[0].max(0.0);
    let lambda_plus = vals
        .iter()
        .copied()
        .find(|&v| v > cut)
        .unwrap_or(f64::INFINITY);
    (lambda_min, lambda_plus)
}

/// Partial trace over the first factor `S` of a matrix on `(S x T) x (S x T)`:
/// `tr_S(B)[t1, t2] = sum_s B[(s,t1),(s,t2)]`.
pub fn partial_trace(b: &SymMatrix, shape: &IndexShape) -> Result<SymMatrix> {
    let [s, t] = shape.factors() else {
        return Err(Error::ShapeMismatch(format!(
            "partial trace expects a two-factor shape, got {} factors",
            shape.factors().len()
        )));
    };
    let (s, t) = (*s, *t);
    if shape.len() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "shape covers {} indices but matrix has dim {}",
            shape.len(),
            b.dim()
        )));
    }
    let m = b.as_matrix();
    Ok(SymMatrix::from_fn(t, |t1, t2| {
        (0..s).map(|i| m[(i * t + t1, i * t + t2)]).sum()
    }))
}

/// Covariance of a partial-traced matrix Gaussian.
///
/// `A` is the covariance of a Gaussian with values in `R^{(S x T) x (S x T)}`
/// (dimension `(s*t)^2`), row-major in the four factors `[S, T, S, T]`. The
/// result, on `(T x T) x (T x T)`, is
/// `out[(t1,t2),(u1,u2)] = sum_{s,v} A[(s,t1,s,t2),(v,u1,v,u2)]`,
/// i.e. the covariance of `tr_S` applied to samples with covariance `A`.
pub fn partial_trace_pair(a: &PsdMatrix, s: usize, t: usize) -> Result<PsdMatrix> {
    let d = s * t;
    if a.dim() != d * d {
        return Err(Error::ShapeMismatch(format!(
            "expected dim {} for |S|={s}, |T|={t}, got {}",
            d * d,
            a.dim()
        )));
    }
    let m = a.as_matrix();
    let idx = |i: usize, t1: usize, j: usize, t2: usize| (i * t + t1) * d + (j * t + t2);
    let out = SymMatrix::from_fn(t * t, |row, col| {
        let (t1, t2) = (row / t, row % t);
        let (u1, u2) = (col / t, col % t);
        let mut acc = 0.0;
        for i in 0..s {
            for j in 0..s {
                acc += m[(idx(i, t1, i, t2), idx(j, u1, j, u2))];
            }
        }
        acc
    });
    Ok(PsdMatrix::new_clamped(out))
}

/// Numerical test of `B << A` (kernel containment): every eigenvector of `A`
/// with eigenvalue below `tol * ||A||` must be annihilated by `B` up to
/// `tol * ||B||`. Trivially true when `A` is invertible.
pub fn dominated_by(b: &PsdMatrix, a: &PsdMatrix, tol: f64) -> bool {
    debug_assert_eq!(a.dim(), b.dim());
    let (vals, vecs) = a.as_sym().eigen();
    let a_cut = tol * a.norm();
    let b_cut = tol * b.norm();
    for (i, &v) in vals.iter().enumerate() {
        if v < a_cut {
            let dir = vecs.column(i);
            if (b.as_matrix() * dir).norm() > b_cut {
                return false;
            }
        }
    }
    true
}
