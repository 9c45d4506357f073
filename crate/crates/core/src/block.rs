//! The 2×2 block system `[A B; C D][u; v] = [f1; f2]`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sparse::{self, check_len, mm, CsrMatrix, DenseVector, LinearSolver, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    a: CsrMatrix,
    b: CsrMatrix,
    c: CsrMatrix,
    d: CsrMatrix,
    f1: DenseVector,
    f2: DenseVector,
}

/// An iterate `w = (u, v)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockVector {
    pub u: DenseVector,
    pub v: DenseVector,
}

impl BlockVector {
    pub fn new(u: impl Into<DenseVector>, v: impl Into<DenseVector>) -> Self {
        Self {
            u: u.into(),
            v: v.into(),
        }
    }

    pub fn zeros(n_u: usize, n_v: usize) -> Self {
        Self::new(DenseVector::zeros(n_u), DenseVector::zeros(n_v))
    }

    /// Splits a monolithic vector after the first `n_u` entries.
    pub fn from_stacked(w: &[f64], n_u: usize) -> Result<Self> {
        if n_u > w.len() {
            return Err(Error::dims("stacked vector split", n_u, w.len()));
        }
        Ok(Self::new(&w[..n_u], &w[n_u..]))
    }

    pub fn stacked(&self) -> DenseVector {
        self.u.iter().chain(self.v.iter()).copied().collect()
    }

    /// Euclidean norm of the stacked vector.
    pub fn norm2(&self) -> f64 {
        self.u.norm2().hypot(self.v.norm2())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn sub(&self, other: &BlockVector) -> Result<BlockVector> {
        Ok(BlockVector {
            u: self.u.sub(&other.u)?,
            v: self.v.sub(&other.v)?,
        })
    }
}

impl BlockSystem {
    /// Validates block dimensions and rejects zero diagonal entries in `A` and `D`.
    pub fn new(
        a: CsrMatrix,
        b: CsrMatrix,
        c: CsrMatrix,
        d: CsrMatrix,
        f1: impl Into<DenseVector>,
        f2: impl Into<DenseVector>,
    ) -> Result<Self> {
        let (f1, f2) = (f1.into(), f2.into());
        if !a.is_square() {
            return Err(Error::NotSquare {
                rows: a.n_rows(),
                cols: a.n_cols(),
            });
        }
        if !d.is_square() {
            return Err(Error::NotSquare {
                rows: d.n_rows(),
                cols: d.n_cols(),
            });
        }
        let (nu, nv) = (a.n_rows(), d.n_rows());
        check_len("B rows", nu, b.n_rows())?;
        check_len("B columns", nv, b.n_cols())?;
        check_len("C rows", nv, c.n_rows())?;
        check_len("C columns", nu, c.n_cols())?;
        check_len("f1 length", nu, f1.len())?;
        check_len("f2 length", nv, f2.len())?;
        for (name, m) in [("A", &a), ("D", &d)] {
            if let Some(index) = m.extract_diagonal()?.iter().position(|&x| x == 0.0) {
                return Err(Error::ZeroDiagonal { block: name, index });
            }
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "block {name} has non-finite entries"
                )));
            }
        }
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::InvalidParameter(
                "right-hand side has non-finite entries".into(),
            ));
        }
        Ok(Self { a, b, c, d, f1, f2 })
    }

    pub fn a(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn b(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn c(&self) -> &CsrMatrix {
        &self.c
    }

    pub fn d(&self) -> &CsrMatrix {
        &self.d
    }

    pub fn f1(&self) -> &DenseVector {
        &self.f1
    }

    pub fn f2(&self) -> &DenseVector {
        &self.f2
    }

    pub fn n_u(&self) -> usize {
        self.a.n_rows()
    }

    pub fn n_v(&self) -> usize {
        self.d.n_rows()
    }

    /// Same blocks with a new right-hand side.
    pub fn with_rhs(&self, f1: impl Into<DenseVector>, f2: impl Into<DenseVector>) -> Result<Self> {
        let (f1, f2) = (f1.into(), f2.into());
        check_len("f1 length", self.n_u(), f1.len())?;
        check_len("f2 length", self.n_v(), f2.len())?;
        Ok(Self {
            f1,
            f2,
            ..self.clone()
        })
    }

    /// `𝒜 w`, blockwise.
    pub fn apply(&self, w: &BlockVector) -> Result<BlockVector> {
        self.check_vector(w)?;
        let u = DenseVector::lincomb(1.0, &self.a.spmv(&w.u)?, 1.0, &self.b.spmv(&w.v)?)?;
        let v = DenseVector::lincomb(1.0, &self.c.spmv(&w.u)?, 1.0, &self.d.spmv(&w.v)?)?;
        Ok(BlockVector { u, v })
    }

    pub fn check_vector(&self, w: &BlockVector) -> Result<()> {
        check_len("u length", self.n_u(), w.u.len())?;
        check_len("v length", self.n_v(), w.v.len())
    }

    /// `(f1 − A u − B v, f2 − C u − D v)`
    pub fn residuals(&self, w: &BlockVector) -> Result<(DenseVector, DenseVector)> {
        let aw = self.apply(w)?;
        Ok((self.f1.sub(&aw.u)?, self.f2.sub(&aw.v)?))
    }

    pub fn monolithic_assemble(&self) -> CsrMatrix {
        CsrMatrix::from_blocks(&self.a, &self.b, &self.c, &self.d)
            .expect("block dimensions validated at construction")
    }

    pub fn rhs_stacked(&self) -> DenseVector {
        self.f1.iter().chain(self.f2.iter()).copied().collect()
    }

    /// Direct reference solve of the monolithic system. The inner solver is
    /// asked for `tol` relative to `‖f‖₂`.
    pub fn monolithic_solve(&self, tol: f64) -> Result<BlockVector> {
        let m = self.monolithic_assemble();
        let opts = SolverOptions {
            tol,
            max_it: sparse::DEFAULT_INNER_MAX_IT.max(4 * m.n_rows()),
        };
        let w = LinearSolver::new(&m, opts)?.solve(&self.rhs_stacked())?;
        BlockVector::from_stacked(&w, self.n_u())
    }

    /// Consistent start for a given `v`: `u` solves `A u = f1 − B v`.
    pub fn consistent_start(&self, v: impl Into<DenseVector>, tol: f64) -> Result<BlockVector> {
        let v = v.into();
        check_len("v length", self.n_v(), v.len())?;
        let rhs = self.f1.sub(&self.b.spmv(&v)?)?;
        let u = sparse::inner_solve(&self.a, &rhs, tol, sparse::DEFAULT_INNER_MAX_IT)?;
        Ok(BlockVector { u, v })
    }

    pub fn write_files(&self, prefix: impl AsRef<Path>) -> Result<()> {
        let p = BlockFiles::new(prefix.as_ref());
        mm::write_matrix_market(&p.a, &self.a)?;
        mm::write_matrix_market(&p.b, &self.b)?;
        mm::write_matrix_market(&p.c, &self.c)?;
        mm::write_matrix_market(&p.d, &self.d)?;
        mm::write_vector(&p.f1, &self.f1)?;
        mm::write_vector(&p.f2, &self.f2)
    }

    pub fn read_files(prefix: impl AsRef<Path>) -> Result<Self> {
        let p = BlockFiles::new(prefix.as_ref());
        Self::new(
            mm::read_matrix_market(&p.a)?,
            mm::read_matrix_market(&p.b)?,
            mm::read_matrix_market(&p.c)?,
            mm::read_matrix_market(&p.d)?,
            mm::read_vector(&p.f1)?,
            mm::read_vector(&p.f2)?,
        )
    }
}

/// File names used by [`BlockSystem::write_files`] for a given prefix.
#[derive(Debug, Clone)]
pub struct BlockFiles {
    pub a: PathBuf,
    pub b: PathBuf,
    pub c: PathBuf,
    pub d: PathBuf,
    pub f1: PathBuf,
    pub f2: PathBuf,
}

impl BlockFiles {
    pub fn new(prefix: &Path) -> Self {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        Self {
            a: with("_A.mtx"),
            b: with("_B.mtx"),
            c: with("_C.mtx"),
            d: with("_D.mtx"),
            f1: with("_f1.vec"),
            f2: with("_f2.vec"),
        }
    }
}

pub fn mm_read_block_system(prefix: impl AsRef<Path>) -> Result<BlockSystem> {
    BlockSystem::read_files(prefix)
}

pub fn mm_write_block_system(sys: &BlockSystem, prefix: impl AsRef<Path>) -> Result<()> {
    sys.write_files(prefix)
}
