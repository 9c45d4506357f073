//! Cell-centred finite-volume assembly of the coupled two-field model
//!
//! ```text
//! −(m_uu u')' − (m_uv v')' + τ(u − v) = f1
//! −(m_vu u')' − (m_vv v')' + τ(v − u) = f2
//! ```
//!
//! in 1D, and its 2D analogue with `∇·(m∇·)` on the unit square. Face
//! mobilities are evaluated at face midpoints. Dirichlet sides use a ghost
//! cell mirrored through the face; Neumann sides impose the exact flux of the
//! manufactured solution.

use super::fields::{flux_divergence_1d, flux_divergence_2d, Field1D, Field2D};
use super::{Boundaries, BoundaryKind, Grid1D, Grid2D};
use crate::block::BlockSystem;
use crate::error::Result;
use crate::sparse::{CsrMatrix, DenseVector};

#[derive(Debug, Clone)]
pub struct CoupledModel1D {
    pub m_uu: Field1D,
    pub m_uv: Option<Field1D>,
    pub m_vu: Option<Field1D>,
    pub m_vv: Field1D,
    /// Reaction coefficient `τ` of the exchange term.
    pub transfer: f64,
    pub u: Field1D,
    pub v: Field1D,
}

#[derive(Debug, Clone)]
pub struct CoupledModel2D {
    pub m_uu: Field2D,
    pub m_uv: Option<Field2D>,
    pub m_vu: Option<Field2D>,
    pub m_vv: Field2D,
    pub transfer: f64,
    pub u: Field2D,
    pub v: Field2D,
}

impl CoupledModel1D {
    /// Right-hand sides `(f1, f2)` of the continuous equations at `x`.
    pub fn forcing(&self, x: f64) -> (f64, f64) {
        let (u, v) = (self.u.jet(x), self.v.jet(x));
        let cross =
            |m: &Option<Field1D>, w| m.as_ref().map_or(0.0, |m| flux_divergence_1d(m.jet(x), w));
        let f1 = flux_divergence_1d(self.m_uu.jet(x), u)
            + cross(&self.m_uv, v)
            + self.transfer * (u.v - v.v);
        let f2 = cross(&self.m_vu, u)
            + flux_divergence_1d(self.m_vv.jet(x), v)
            + self.transfer * (v.v - u.v);
        (f1, f2)
    }
}

impl CoupledModel2D {
    pub fn forcing(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = (self.u.jet(x, y), self.v.jet(x, y));
        let cross = |m: &Option<Field2D>, w| {
            m.as_ref()
                .map_or(0.0, |m| flux_divergence_2d(m.jet(x, y), w))
        };
        let f1 = flux_divergence_2d(self.m_uu.jet(x, y), u)
            + cross(&self.m_uv, v)
            + self.transfer * (u.v - v.v);
        let f2 = cross(&self.m_vu, u)
            + flux_divergence_2d(self.m_vv.jet(x, y), v)
            + self.transfer * (v.v - u.v);
        (f1, f2)
    }
}

type Triplets = Vec<(usize, usize, f64)>;

/// Stencil of `−(m w')'` and its boundary contribution to the right-hand side for data `w`.
fn diffusion_1d(
    m: &Field1D,
    w: &Field1D,
    grid: &Grid1D,
    bcs: &Boundaries,
    t: &mut Triplets,
    rhs: &mut [f64],
) {
    let n = grid.n_cells;
    let h = grid.h();
    let h2 = h * h;
    for i in 0..n {
        for (east, face) in [(false, i), (true, i + 1)] {
            let xf = grid.face(face);
            let mf = m.value(xf);
            let boundary = if east { i + 1 == n } else { i == 0 };
            if !boundary {
                let j = if east { i + 1 } else { i - 1 };
                t.push((i, i, mf / h2));
                t.push((i, j, -mf / h2));
                continue;
            }
            let kind = if east { bcs.right } else { bcs.left };
            match kind {
                BoundaryKind::Dirichlet => {
                    t.push((i, i, 2.0 * mf / h2));
                    rhs[i] += 2.0 * mf / h2 * w.value(xf);
                }
                BoundaryKind::Neumann => {
                    let flux = mf * w.jet(xf).d / h;
                    rhs[i] += if east { flux } else { -flux };
                }
            }
        }
    }
}

fn diffusion_2d(
    m: &Field2D,
    w: &Field2D,
    grid: &Grid2D,
    bcs: &Boundaries,
    t: &mut Triplets,
    rhs: &mut [f64],
) {
    let (nx, ny) = (grid.n_x, grid.n_y);
    let (hx, hy) = (grid.hx(), grid.hy());
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            let (xc, yc) = grid.center(i, j);
            // (neighbour, face point, h, side kind, outward sign, normal along x)
            let faces = [
                (
                    i.checked_sub(1).map(|ii| grid.index(ii, j)),
                    (i as f64 * hx, yc),
                    hx,
                    bcs.left,
                    -1.0,
                    true,
                ),
                (
                    (i + 1 < nx).then(|| grid.index(i + 1, j)),
                    ((i + 1) as f64 * hx, yc),
                    hx,
                    bcs.right,
                    1.0,
                    true,
                ),
                (
                    j.checked_sub(1).map(|jj| grid.index(i, jj)),
                    (xc, j as f64 * hy),
                    hy,
                    bcs.bottom,
                    -1.0,
                    false,
                ),
                (
                    (j + 1 < ny).then(|| grid.index(i, j + 1)),
                    (xc, (j + 1) as f64 * hy),
                    hy,
                    bcs.top,
                    1.0,
                    false,
                ),
            ];
            for (neighbour, (xf, yf), h, kind, sign, along_x) in faces {
                let mf = m.value(xf, yf);
                let h2 = h * h;
                match neighbour {
                    Some(q) => {
                        t.push((p, p, mf / h2));
                        t.push((p, q, -mf / h2));
                    }
                    None => match kind {
                        BoundaryKind::Dirichlet => {
                            t.push((p, p, 2.0 * mf / h2));
                            rhs[p] += 2.0 * mf / h2 * w.value(xf, yf);
                        }
                        BoundaryKind::Neumann => {
                            let g = w.jet(xf, yf);
                            let dn = if along_x { g.x } else { g.y };
                            rhs[p] += sign * mf * dn / h;
                        }
                    },
                }
            }
        }
    }
}

fn with_transfer(mut t: Triplets, n: usize, value: f64) -> Triplets {
    if value != 0.0 {
        t.extend((0..n).map(|i| (i, i, value)));
    }
    t
}

pub(crate) struct Assembled {
    pub system: BlockSystem,
    pub exact_u: DenseVector,
    pub exact_v: DenseVector,
}

pub(crate) fn assemble_1d(
    model: &CoupledModel1D,
    grid: &Grid1D,
    bcs: &Boundaries,
) -> Result<Assembled> {
    let n = grid.n_cells;
    let mut f1: Vec<f64> = Vec::with_capacity(n);
    let mut f2: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = model.forcing(grid.center(i));
        f1.push(a);
        f2.push(b);
    }
    let (mut ta, mut tb, mut tc, mut td) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    diffusion_1d(&model.m_uu, &model.u, grid, bcs, &mut ta, &mut f1);
    if let Some(m) = &model.m_uv {
        diffusion_1d(m, &model.v, grid, bcs, &mut tb, &mut f1);
    }
    if let Some(m) = &model.m_vu {
        diffusion_1d(m, &model.u, grid, bcs, &mut tc, &mut f2);
    }
    diffusion_1d(&model.m_vv, &model.v, grid, bcs, &mut td, &mut f2);
    let tau = model.transfer;
    let system = BlockSystem::new(
        CsrMatrix::from_triplets(n, n, with_transfer(ta, n, tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(tb, n, -tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(tc, n, -tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(td, n, tau))?,
        f1,
        f2,
    )?;
    Ok(Assembled {
        system,
        exact_u: DenseVector::from_fn(n, |i| model.u.value(grid.center(i))),
        exact_v: DenseVector::from_fn(n, |i| model.v.value(grid.center(i))),
    })
}

pub(crate) fn assemble_2d(
    model: &CoupledModel2D,
    grid: &Grid2D,
    bcs: &Boundaries,
) -> Result<Assembled> {
    let n = grid.n_cells();
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    for j in 0..grid.n_y {
        for i in 0..grid.n_x {
            let (x, y) = grid.center(i, j);
            let p = grid.index(i, j);
            (f1[p], f2[p]) = model.forcing(x, y);
        }
    }
    let (mut ta, mut tb, mut tc, mut td) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    diffusion_2d(&model.m_uu, &model.u, grid, bcs, &mut ta, &mut f1);
    if let Some(m) = &model.m_uv {
        diffusion_2d(m, &model.v, grid, bcs, &mut tb, &mut f1);
    }
    if let Some(m) = &model.m_vu {
        diffusion_2d(m, &model.u, grid, bcs, &mut tc, &mut f2);
    }
    diffusion_2d(&model.m_vv, &model.v, grid, bcs, &mut td, &mut f2);
    let tau = model.transfer;
    let system = BlockSystem::new(
        CsrMatrix::from_triplets(n, n, with_transfer(ta, n, tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(tb, n, -tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(tc, n, -tau))?,
        CsrMatrix::from_triplets(n, n, with_transfer(td, n, tau))?,
        f1,
        f2,
    )?;
    let sample = |f: &Field2D| {
        let mut out = DenseVector::zeros(n);
        for j in 0..grid.n_y {
            for i in 0..grid.n_x {
                let (x, y) = grid.center(i, j);
                out[grid.index(i, j)] = f.value(x, y);
            }
        }
        out
    };
    Ok(Assembled {
        system,
        exact_u: sample(&model.u),
        exact_v: sample(&model.v),
    })
}
