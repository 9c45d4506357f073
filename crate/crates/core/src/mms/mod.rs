//! Manufactured-solution test problems: dual-porosity flow and the
//! quad-Laplacian, in 1D and on the unit square.

mod assembly;
pub mod fields;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use assembly::{CoupledModel1D, CoupledModel2D};
use fields::{Field1D, Field2D};

use crate::block::{BlockSystem, BlockVector};
use crate::error::{Error, Result};
use crate::sparse::{check_len, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    DualPorosity,
    QuadLaplacian,
}

impl FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dual-porosity" | "dp" => Ok(Model::DualPorosity),
            "quad-laplacian" | "ql" => Ok(Model::QuadLaplacian),
            _ => Err(Error::InvalidParameter(format!(
                "unknown model `{s}` (expected dual-porosity or quad-laplacian)"
            ))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::DualPorosity => "dual-porosity",
            Model::QuadLaplacian => "quad-laplacian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dim {
    D1,
    D2,
}

impl FromStr for Dim {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "1d" | "d1" => Ok(Dim::D1),
            "2" | "2d" | "d2" => Ok(Dim::D2),
            _ => Err(Error::InvalidParameter(format!(
                "unknown dimension `{s}` (expected 1 or 2)"
            ))),
        }
    }
}

/// Uniform cells on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::InvalidParameter(format!(
                "invalid interval [{x_min}, {x_max}]"
            )));
        }
        if n_cells < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_cells,
        })
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.h()
    }

    /// Face `i` sits between cells `i − 1` and `i`; faces `0` and `n_cells` are the ends.
    pub fn face(&self, i: usize) -> f64 {
        if i == self.n_cells {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h()
        }
    }
}

/// Uniform cells on the unit square, numbered `j · n_x + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    pub n_x: usize,
    pub n_y: usize,
}

impl Grid2D {
    pub fn new(n_x: usize, n_y: usize) -> Result<Self> {
        if n_x < 2 || n_y < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2x2 cells, got {n_x}x{n_y}"
            )));
        }
        Ok(Self { n_x, n_y })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn hx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn hy(&self) -> f64 {
        1.0 / self.n_y as f64
    }

    pub fn n_cells(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_x + i
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Boundary type per side. In 1D only `left` and `right` are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundaries {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl Boundaries {
    pub fn all_dirichlet() -> Self {
        Self {
            left: BoundaryKind::Dirichlet,
            right: BoundaryKind::Dirichlet,
            bottom: BoundaryKind::Dirichlet,
            top: BoundaryKind::Dirichlet,
        }
    }

    /// Dirichlet left/right, Neumann bottom/top.
    pub fn default_2d() -> Self {
        Self {
            bottom: BoundaryKind::Neumann,
            top: BoundaryKind::Neumann,
            ..Self::all_dirichlet()
        }
    }

    fn validate(&self, dim: Dim) -> Result<()> {
        let sides = match dim {
            Dim::D1 => vec![self.left, self.right],
            Dim::D2 => vec![self.left, self.right, self.bottom, self.top],
        };
        if !sides.contains(&BoundaryKind::Dirichlet) {
            return Err(Error::InvalidParameter(
                "at least one Dirichlet side is required for a nonsingular problem".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Boundaries {
    fn default() -> Self {
        Self::default_2d()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Grid {
    D1(Grid1D),
    D2(Grid2D),
}

impl Grid {
    pub fn dim(&self) -> Dim {
        match self {
            Grid::D1(_) => Dim::D1,
            Grid::D2(_) => Dim::D2,
        }
    }

    pub fn cell_measure(&self) -> f64 {
        match self {
            Grid::D1(g) => g.h(),
            Grid::D2(g) => g.hx() * g.hy(),
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Grid::D1(g) => g.n_cells,
            Grid::D2(g) => g.n_cells(),
        }
    }

    /// Cells along one direction (`n_x` in 2D).
    pub fn cells_per_direction(&self) -> usize {
        match self {
            Grid::D1(g) => g.n_cells,
            Grid::D2(g) => g.n_x,
        }
    }
}

/// An assembled system together with the exact cell-centre samples it was built from.
#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub model: Model,
    pub beta: f64,
    pub grid: Grid,
    pub system: BlockSystem,
    pub exact_u: DenseVector,
    pub exact_v: DenseVector,
}

impl ManufacturedProblem {
    pub fn dim(&self) -> Dim {
        self.grid.dim()
    }

    pub fn exact(&self) -> BlockVector {
        BlockVector::new(self.exact_u.clone(), self.exact_v.clone())
    }
}

/// Cell-measure weighted L2 errors `(‖u − u*‖, ‖v − v*‖)`.
pub fn discrete_l2_error(w: &BlockVector, prob: &ManufacturedProblem) -> Result<(f64, f64)> {
    check_len("u length", prob.exact_u.len(), w.u.len())?;
    check_len("v length", prob.exact_v.len(), w.v.len())?;
    let vol = prob.grid.cell_measure();
    let err = |a: &[f64], b: &[f64]| {
        (vol * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()).sqrt()
    };
    Ok((err(&w.u, &prob.exact_u), err(&w.v, &prob.exact_v)))
}

pub const DUAL_POROSITY_1D_INTERVAL: (f64, f64) = (0.0, PI);
pub const QUAD_LAPLACIAN_1D_INTERVAL: (f64, f64) = (0.0, 2.0 * PI);

fn check_interval(grid: &Grid1D, expected: (f64, f64), model: Model) -> Result<()> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + b.abs());
    if !close(grid.x_min, expected.0) || !close(grid.x_max, expected.1) {
        return Err(Error::InvalidParameter(format!(
            "{model} in 1D is posed on [{}, {}], grid covers [{}, {}]",
            expected.0, expected.1, grid.x_min, grid.x_max
        )));
    }
    Ok(())
}

fn check_beta(model: Model, beta: f64) -> Result<()> {
    let ok = beta.is_finite()
        && match model {
            Model::DualPorosity => beta >= 0.0,
            Model::QuadLaplacian => beta > 0.0,
        };
    if !ok {
        let req = match model {
            Model::DualPorosity => "beta >= 0",
            Model::QuadLaplacian => "beta > 0",
        };
        return Err(Error::InvalidParameter(format!(
            "{model} requires {req}, got {beta}"
        )));
    }
    Ok(())
}

/// `u = sin 2x`, `v = e^{−2x}`, `m_u = 10⁴(1 + sin(2x)/2)`, `m_v = 1 + sin(4x)/2`.
pub fn dual_porosity_1d_model(beta: f64) -> CoupledModel1D {
    CoupledModel1D {
        m_uu: Field1D::sine_modulated(1e4, 2.0),
        m_uv: None,
        m_vu: None,
        m_vv: Field1D::sine_modulated(1.0, 4.0),
        transfer: beta,
        u: Field1D::sine(2.0),
        v: Field1D::exponential(-2.0),
    }
}

/// `u = e^{sin x}`, `v = −x² + x − 1`, `m_uu = 1 + sin(4x)/2`,
/// `m_vv = (10⁻²/β)(1 + sin(2x)/2)`, `m_uv = −m_vu = β`.
pub fn quad_laplacian_1d_model(beta: f64) -> CoupledModel1D {
    CoupledModel1D {
        m_uu: Field1D::sine_modulated(1.0, 4.0),
        m_uv: Some(Field1D::constant(beta)),
        m_vu: Some(Field1D::constant(-beta)),
        m_vv: Field1D::sine_modulated(1e-2 / beta, 2.0),
        transfer: 0.0,
        u: Field1D::exp_sine(),
        v: Field1D::quadratic(-1.0, 1.0, -1.0),
    }
}

/// Assembles an arbitrary 1D coupled model with Dirichlet data at both ends.
pub fn assemble_model_1d(
    model_kind: Model,
    beta: f64,
    model: &CoupledModel1D,
    grid: Grid1D,
) -> Result<ManufacturedProblem> {
    assemble_model_1d_with(model_kind, beta, model, grid, &Boundaries::all_dirichlet())
}

pub fn assemble_model_1d_with(
    model_kind: Model,
    beta: f64,
    model: &CoupledModel1D,
    grid: Grid1D,
    bcs: &Boundaries,
) -> Result<ManufacturedProblem> {
    bcs.validate(Dim::D1)?;
    let a = assembly::assemble_1d(model, &grid, bcs)?;
    Ok(ManufacturedProblem {
        model: model_kind,
        beta,
        grid: Grid::D1(grid),
        system: a.system,
        exact_u: a.exact_u,
        exact_v: a.exact_v,
    })
}

pub fn assemble_dual_porosity_1d(grid: Grid1D, beta: f64) -> Result<ManufacturedProblem> {
    check_beta(Model::DualPorosity, beta)?;
    check_interval(&grid, DUAL_POROSITY_1D_INTERVAL, Model::DualPorosity)?;
    assemble_model_1d(
        Model::DualPorosity,
        beta,
        &dual_porosity_1d_model(beta),
        grid,
    )
}

pub fn assemble_quad_laplacian_1d(grid: Grid1D, beta: f64) -> Result<ManufacturedProblem> {
    check_beta(Model::QuadLaplacian, beta)?;
    check_interval(&grid, QUAD_LAPLACIAN_1D_INTERVAL, Model::QuadLaplacian)?;
    assemble_model_1d(
        Model::QuadLaplacian,
        beta,
        &quad_laplacian_1d_model(beta),
        grid,
    )
}

/// Parameters of the 2D dual-porosity problem.
///
/// With `φ = sin 2πx sin 2πy`: `m_u = κ e^{σφ}`, `m_v = e^{−σφ}` (so
/// `m_u m_v ≡ κ`), `u = φ`, `v = cos πx cos πy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPorosity2D {
    pub beta: f64,
    /// Contrast exponent `σ`.
    pub contrast: f64,
    /// Mobility ratio `κ`.
    pub mobility_ratio: f64,
    pub boundaries: Boundaries,
}

impl DualPorosity2D {
    pub const DEFAULT_BETA: f64 = 100.0;
    pub const DEFAULT_CONTRAST: f64 = 3.0;
    pub const DEFAULT_MOBILITY_RATIO: f64 = 1e-2;

    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn model(&self) -> CoupledModel2D {
        let phi = Field2D::sine_product(2.0);
        CoupledModel2D {
            m_uu: Field2D::scaled_exp_of(self.mobility_ratio, self.contrast, phi.clone()),
            m_uv: None,
            m_vu: None,
            m_vv: Field2D::scaled_exp_of(1.0, -self.contrast, phi.clone()),
            transfer: self.beta,
            u: phi,
            v: Field2D::cosine_product(1.0),
        }
    }
}

impl Default for DualPorosity2D {
    fn default() -> Self {
        Self {
            beta: Self::DEFAULT_BETA,
            contrast: Self::DEFAULT_CONTRAST,
            mobility_ratio: Self::DEFAULT_MOBILITY_RATIO,
            boundaries: Boundaries::default_2d(),
        }
    }
}

/// Parameters of the 2D quad-Laplacian problem.
///
/// `m_uu = 1 + sin 4πx sin 4πy / 2`, `m_vv = (10⁻²/β)(1 + φ/2)`,
/// `m_uv = −m_vu = β`, with `u`, `v` as in [`DualPorosity2D`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadLaplacian2D {
    pub beta: f64,
    pub boundaries: Boundaries,
}

impl QuadLaplacian2D {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            boundaries: Boundaries::default_2d(),
        }
    }

    pub fn model(&self) -> CoupledModel2D {
        let phi = Field2D::sine_product(2.0);
        CoupledModel2D {
            m_uu: Field2D::half_modulated(1.0, Field2D::sine_product(4.0)),
            m_uv: Some(Field2D::constant(self.beta)),
            m_vu: Some(Field2D::constant(-self.beta)),
            m_vv: Field2D::half_modulated(1e-2 / self.beta, phi.clone()),
            transfer: 0.0,
            u: phi,
            v: Field2D::cosine_product(1.0),
        }
    }
}

pub fn assemble_model_2d(
    model_kind: Model,
    beta: f64,
    model: &CoupledModel2D,
    grid: Grid2D,
    bcs: &Boundaries,
) -> Result<ManufacturedProblem> {
    bcs.validate(Dim::D2)?;
    let a = assembly::assemble_2d(model, &grid, bcs)?;
    Ok(ManufacturedProblem {
        model: model_kind,
        beta,
        grid: Grid::D2(grid),
        system: a.system,
        exact_u: a.exact_u,
        exact_v: a.exact_v,
    })
}

pub fn assemble_dual_porosity_2d(
    grid: Grid2D,
    params: &DualPorosity2D,
) -> Result<ManufacturedProblem> {
    check_beta(Model::DualPorosity, params.beta)?;
    if !(params.contrast.is_finite()
        && params.mobility_ratio.is_finite()
        && params.mobility_ratio > 0.0)
    {
        return Err(Error::InvalidParameter(format!(
            "contrast must be finite and mobility ratio positive, got {} and {}",
            params.contrast, params.mobility_ratio
        )));
    }
    assemble_model_2d(
        Model::DualPorosity,
        params.beta,
        &params.model(),
        grid,
        &params.boundaries,
    )
}

pub fn assemble_quad_laplacian_2d(
    grid: Grid2D,
    params: &QuadLaplacian2D,
) -> Result<ManufacturedProblem> {
    check_beta(Model::QuadLaplacian, params.beta)?;
    assemble_model_2d(
        Model::QuadLaplacian,
        params.beta,
        &params.model(),
        grid,
        &params.boundaries,
    )
}
