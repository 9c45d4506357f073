//! Splitting schemes for block systems.
//!
//! Every scheme is expressed as two half-steps, one per block, executed in
//! the order given by [`Ordering`]. A half-step for `u` takes the current
//! `v` (old for block-Jacobi, freshly updated for Gauss-Seidel orderings)
//! and solves one of:
//!
//! * relaxed: `(A + L_u) u⁺ = f1 − B v + L_u u`
//! * SOR: `A u⁺ = (1 − ω) A u + ω (f1 − B v)`
//! * Schur-factorized: `(A − 𝔹 𝔻⁻¹ C) u⁺ = f1 − B v − 𝔹 𝔻⁻¹ (f2 − D v)`
//!
//! and symmetrically for `v`. Implicit operators are assembled and factored
//! once per [`Stepper`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::block::{BlockSystem, BlockVector};
use crate::error::{Error, Result};
use crate::sparse::{
    add_scaled, norm2, triple_product_diag, CsrMatrix, DenseVector, LinearSolver, SolverOptions,
    RESIDUAL_FLOOR,
};

/// Residual growth factor, relative to the initial residual, treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SchemeKind {
    BJ,
    BGS,
    BSOR,
    LSCHEME,
    SPJ,
    S2PJ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Side {
    U,
    V,
    Alternate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Ordering {
    UFirst,
    VFirst,
}

/// How SPJ/S2PJ relaxations enter the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchurForm {
    /// Added as a relaxation operator `ℒ`.
    #[default]
    Relaxed,
    /// The relaxed equation is replaced by its approximate-Schur factorized form.
    Factorized,
}

impl FromStr for Ordering {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "u" | "u_first" | "ufirst" => Ok(Ordering::UFirst),
            "v" | "v_first" | "vfirst" => Ok(Ordering::VFirst),
            _ => Err(Error::InvalidParameter(format!(
                "unknown ordering `{s}` (expected u_first or v_first)"
            ))),
        }
    }
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::UFirst => "U_FIRST",
            Ordering::VFirst => "V_FIRST",
        })
    }
}

impl FromStr for SchurForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relaxed" => Ok(SchurForm::Relaxed),
            "factorized" => Ok(SchurForm::Factorized),
            _ => Err(Error::InvalidParameter(format!(
                "unknown Schur form `{s}` (expected relaxed or factorized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// BSOR weight.
    pub omega: f64,
    /// LSCHEME relaxation.
    pub ell: f64,
    /// SPJ/S2PJ side.
    pub side: Side,
    pub ordering: Ordering,
    pub form: SchurForm,
}

impl SchemeSpec {
    fn base(kind: SchemeKind) -> Self {
        Self {
            kind,
            omega: 1.0,
            ell: 0.0,
            side: Side::Alternate,
            ordering: Ordering::UFirst,
            form: SchurForm::Relaxed,
        }
    }

    pub fn bj() -> Self {
        Self::base(SchemeKind::BJ)
    }

    pub fn bgs() -> Self {
        Self::base(SchemeKind::BGS)
    }

    pub fn bsor(omega: f64) -> Self {
        Self {
            omega,
            ..Self::base(SchemeKind::BSOR)
        }
    }

    pub fn lscheme(ell: f64) -> Self {
        Self {
            ell,
            ..Self::base(SchemeKind::LSCHEME)
        }
    }

    pub fn spj(side: Side) -> Self {
        Self::partial_jacobi(SchemeKind::SPJ, side)
    }

    pub fn s2pj(side: Side) -> Self {
        Self::partial_jacobi(SchemeKind::S2PJ, side)
    }

    fn partial_jacobi(kind: SchemeKind, side: Side) -> Self {
        let ordering = if side == Side::V {
            Ordering::VFirst
        } else {
            Ordering::UFirst
        };
        Self {
            side,
            ordering,
            ..Self::base(kind)
        }
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_form(mut self, form: SchurForm) -> Self {
        self.form = form;
        self
    }

    pub fn is_partial_jacobi(&self) -> bool {
        matches!(self.kind, SchemeKind::SPJ | SchemeKind::S2PJ)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SchemeKind::BSOR if !(self.omega > 0.0 && self.omega <= 2.0) => {
                Err(Error::InvalidParameter(format!(
                    "BSOR weight must lie in (0, 2], got {}",
                    self.omega
                )))
            }
            SchemeKind::LSCHEME if !(self.ell > 0.0 && self.ell.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "LSCHEME relaxation must be positive, got {}",
                    self.ell
                )))
            }
            _ => Ok(()),
        }
    }

    /// Canonical name, e.g. `BGS`, `BSOR:1.2`, `LSCHEME:0.5`, `S2PJ_a`.
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::U => "u",
            Side::V => "v",
            Side::Alternate => "a",
        };
        match self.kind {
            SchemeKind::BJ => f.write_str("BJ"),
            SchemeKind::BGS => f.write_str("BGS"),
            SchemeKind::BSOR => write!(f, "BSOR:{}", self.omega),
            SchemeKind::LSCHEME => write!(f, "LSCHEME:{}", self.ell),
            SchemeKind::SPJ => write!(f, "SPJ_{side}"),
            SchemeKind::S2PJ => write!(f, "S2PJ_{side}"),
        }
    }
}

impl FromStr for SchemeSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("unknown scheme `{s}`"));
        let (head, param) = match s.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (s, None),
        };
        let number = |p: Option<&str>, what: &str| -> Result<f64> {
            let p = p.ok_or_else(|| {
                Error::InvalidParameter(format!("{head} needs a {what}, e.g. `{head}:1.0`"))
            })?;
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad {what} `{p}` in `{s}`: {e}")))
        };
        let upper = head.to_ascii_uppercase();
        let spec = match upper.as_str() {
            "BJ" if param.is_none() => Self::bj(),
            "BGS" if param.is_none() => Self::bgs(),
            "BSOR" => Self::bsor(number(param, "weight")?),
            "LSCHEME" => Self::lscheme(number(param, "relaxation")?),
            _ => {
                if param.is_some() {
                    return Err(bad());
                }
                let (kind, side) = upper.split_once('_').ok_or_else(bad)?;
                let side = match side {
                    "U" => Side::U,
                    "V" => Side::V,
                    "A" => Side::Alternate,
                    _ => return Err(bad()),
                };
                match kind {
                    "SPJ" => Self::spj(side),
                    "S2PJ" => Self::s2pj(side),
                    _ => return Err(bad()),
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Block-diagonal relaxation `ℒ = [L_u 0; 0 L_v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationOperator {
    pub l_u: CsrMatrix,
    pub l_v: CsrMatrix,
}

impl RelaxationOperator {
    pub fn zeros(n_u: usize, n_v: usize) -> Self {
        Self {
            l_u: CsrMatrix::zeros(n_u, n_u),
            l_v: CsrMatrix::zeros(n_v, n_v),
        }
    }

    pub fn validate(&self, sys: &BlockSystem) -> Result<()> {
        if self.l_u.shape() != (sys.n_u(), sys.n_u()) {
            return Err(Error::dims("L_u size", sys.n_u(), self.l_u.n_rows()));
        }
        if self.l_v.shape() != (sys.n_v(), sys.n_v()) {
            return Err(Error::dims("L_v size", sys.n_v(), self.l_v.n_rows()));
        }
        Ok(())
    }

    /// The monolithic operator `ℒ`.
    pub fn monolithic(&self) -> CsrMatrix {
        let zuv = CsrMatrix::zeros(self.l_u.n_rows(), self.l_v.n_cols());
        let zvu = CsrMatrix::zeros(self.l_v.n_rows(), self.l_u.n_cols());
        CsrMatrix::from_blocks(&self.l_u, &zuv, &zvu, &self.l_v).expect("square blocks")
    }
}

fn inverse(d: &DenseVector) -> Vec<f64> {
    d.iter().map(|x| 1.0 / x).collect()
}

/// Leading coupling factor: the coupling block itself (SPJ) or its diagonal (S2PJ).
fn lead_factor(kind: SchemeKind, m: &CsrMatrix, name: &str) -> Result<CsrMatrix> {
    if kind == SchemeKind::S2PJ {
        if !m.is_square() {
            return Err(Error::InvalidStructure(format!(
                "S2PJ needs a square coupling block, {name} is {}x{}",
                m.n_rows(),
                m.n_cols()
            )));
        }
        return Ok(CsrMatrix::from_diagonal(&m.extract_diagonal()?));
    }
    Ok(m.clone())
}

/// `𝔹 𝔻⁻¹ C` (for `u`) and `ℂ 𝔸⁻¹ B` (for `v`).
fn schur_corrections(sys: &BlockSystem, kind: SchemeKind) -> Result<(CsrMatrix, CsrMatrix)> {
    let dinv_a = inverse(&sys.a().extract_diagonal()?);
    let dinv_d = inverse(&sys.d().extract_diagonal()?);
    let lead_b = lead_factor(kind, sys.b(), "B")?;
    let lead_c = lead_factor(kind, sys.c(), "C")?;
    Ok((
        triple_product_diag(&lead_b, &dinv_d, sys.c())?,
        triple_product_diag(&lead_c, &dinv_a, sys.b())?,
    ))
}

pub fn build_relaxation(sys: &BlockSystem, spec: &SchemeSpec) -> Result<RelaxationOperator> {
    spec.validate()?;
    let (nu, nv) = (sys.n_u(), sys.n_v());
    let mut relax = RelaxationOperator::zeros(nu, nv);
    match spec.kind {
        SchemeKind::BJ | SchemeKind::BGS | SchemeKind::BSOR => {}
        SchemeKind::LSCHEME => relax.l_u = CsrMatrix::from_diagonal(&vec![spec.ell; nu]),
        SchemeKind::SPJ | SchemeKind::S2PJ => {
            let (su, sv) = schur_corrections(sys, spec.kind)?;
            if spec.side != Side::V {
                relax.l_u = su.scaled(-1.0);
            }
            if spec.side != Side::U {
                relax.l_v = sv.scaled(-1.0);
            }
        }
    }
    Ok(relax)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    U,
    V,
}

impl Block {
    fn name(self) -> &'static str {
        match self {
            Block::U => "u",
            Block::V => "v",
        }
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Relaxed(Option<CsrMatrix>),
    Sor(f64),
    /// Leading coupling factor and the inverse diagonal of the other block.
    Schur {
        lead: CsrMatrix,
        other_dinv: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct HalfStep {
    block: Block,
    rule: Rule,
    solver: LinearSolver,
}

/// Prefactored outer iteration for one system and scheme.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    sys: &'a BlockSystem,
    jacobi: bool,
    ordering: Ordering,
    u: HalfStep,
    v: HalfStep,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a BlockSystem, spec: &SchemeSpec) -> Result<Self> {
        Self::with_inner(sys, spec, SolverOptions::default())
    }

    pub fn with_inner(
        sys: &'a BlockSystem,
        spec: &SchemeSpec,
        inner: SolverOptions,
    ) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            SchemeKind::BJ | SchemeKind::BGS => Self::from_rules(
                sys,
                spec.kind == SchemeKind::BJ,
                spec.ordering,
                Rule::Relaxed(None),
                Rule::Relaxed(None),
                inner,
            ),
            SchemeKind::BSOR => Self::from_rules(
                sys,
                false,
                spec.ordering,
                Rule::Sor(spec.omega),
                Rule::Sor(spec.omega),
                inner,
            ),
            SchemeKind::SPJ | SchemeKind::S2PJ if spec.form == SchurForm::Factorized => {
                let lead_b = lead_factor(spec.kind, sys.b(), "B")?;
                let lead_c = lead_factor(spec.kind, sys.c(), "C")?;
                let dinv_a = inverse(&sys.a().extract_diagonal()?);
                let dinv_d = inverse(&sys.d().extract_diagonal()?);
                let ru = if spec.side == Side::V {
                    Rule::Relaxed(None)
                } else {
                    Rule::Schur {
                        lead: lead_b,
                        other_dinv: dinv_d,
                    }
                };
                let rv = if spec.side == Side::U {
                    Rule::Relaxed(None)
                } else {
                    Rule::Schur {
                        lead: lead_c,
                        other_dinv: dinv_a,
                    }
                };
                Self::from_rules(sys, false, spec.ordering, ru, rv, inner)
            }
            _ => {
                Self::from_relaxation_with(sys, &build_relaxation(sys, spec)?, spec.ordering, inner)
            }
        }
    }

    /// Gauss-Seidel relaxed iteration with a caller-supplied `ℒ`.
    pub fn from_relaxation(
        sys: &'a BlockSystem,
        relax: &RelaxationOperator,
        ordering: Ordering,
    ) -> Result<Self> {
        Self::from_relaxation_with(sys, relax, ordering, SolverOptions::default())
    }

    pub fn from_relaxation_with(
        sys: &'a BlockSystem,
        relax: &RelaxationOperator,
        ordering: Ordering,
        inner: SolverOptions,
    ) -> Result<Self> {
        relax.validate(sys)?;
        let nonzero = |m: &CsrMatrix| (m.nnz() > 0).then(|| m.clone());
        Self::from_rules(
            sys,
            false,
            ordering,
            Rule::Relaxed(nonzero(&relax.l_u)),
            Rule::Relaxed(nonzero(&relax.l_v)),
            inner,
        )
    }

    fn from_rules(
        sys: &'a BlockSystem,
        jacobi: bool,
        ordering: Ordering,
        ru: Rule,
        rv: Rule,
        inner: SolverOptions,
    ) -> Result<Self> {
        let u = HalfStep::new(sys, Block::U, ru, inner)?;
        let v = HalfStep::new(sys, Block::V, rv, inner)?;
        Ok(Self {
            sys,
            jacobi,
            ordering,
            u,
            v,
        })
    }

    pub fn system(&self) -> &BlockSystem {
        self.sys
    }

    /// One outer iteration from `w`.
    pub fn step(&self, w: &BlockVector) -> Result<BlockVector> {
        self.sys.check_vector(w)?;
        if self.jacobi {
            let u = self.u.apply(self.sys, &w.u, &w.v)?;
            let v = self.v.apply(self.sys, &w.v, &w.u)?;
            return Ok(BlockVector { u, v });
        }
        Ok(match self.ordering {
            Ordering::UFirst => {
                let u = self.u.apply(self.sys, &w.u, &w.v)?;
                let v = self.v.apply(self.sys, &w.v, &u)?;
                BlockVector { u, v }
            }
            Ordering::VFirst => {
                let v = self.v.apply(self.sys, &w.v, &w.u)?;
                let u = self.u.apply(self.sys, &w.u, &v)?;
                BlockVector { u, v }
            }
        })
    }
}

impl HalfStep {
    fn new(sys: &BlockSystem, block: Block, rule: Rule, inner: SolverOptions) -> Result<Self> {
        let (own, coupling_other) = match block {
            Block::U => (sys.a(), sys.c()),
            Block::V => (sys.d(), sys.b()),
        };
        let implicit = match &rule {
            Rule::Relaxed(None) | Rule::Sor(_) => own.clone(),
            Rule::Relaxed(Some(l)) => add_scaled(own, 1.0, l, 1.0)?,
            Rule::Schur { lead, other_dinv } => {
                let corr = triple_product_diag(lead, other_dinv, coupling_other)?;
                add_scaled(own, 1.0, &corr, -1.0)?
            }
        };
        let solver = LinearSolver::new(&implicit, inner)?;
        Ok(Self {
            block,
            rule,
            solver,
        })
    }

    /// Updated value of this block given its previous value `own` and the
    /// current value of the other block.
    fn apply(&self, sys: &BlockSystem, own: &[f64], other: &[f64]) -> Result<DenseVector> {
        let (f_own, coupling, f_other, other_block) = match self.block {
            Block::U => (sys.f1(), sys.b(), sys.f2(), sys.d()),
            Block::V => (sys.f2(), sys.c(), sys.f1(), sys.a()),
        };
        let mut rhs = f_own.sub(&coupling.spmv(other)?)?;
        match &self.rule {
            Rule::Relaxed(None) => {}
            Rule::Relaxed(Some(l)) => {
                let lx = l.spmv(own)?;
                rhs.iter_mut().zip(lx.iter()).for_each(|(r, x)| *r += x);
            }
            Rule::Sor(omega) => {
                let mx = self.solver.matrix().spmv(own)?;
                rhs = DenseVector::lincomb(1.0 - omega, &mx, *omega, &rhs)?;
            }
            Rule::Schur { lead, other_dinv } => {
                let r_other = f_other.sub(&other_block.spmv(other)?)?;
                let scaled: Vec<f64> = r_other.iter().zip(other_dinv).map(|(r, d)| r * d).collect();
                let corr = lead.spmv(&scaled)?;
                rhs.iter_mut().zip(corr.iter()).for_each(|(r, c)| *r -= c);
            }
        }
        self.solver
            .solve(&rhs)
            .map_err(|e| Error::BlockSolveFailure {
                block: self.block.name(),
                source: Box::new(e),
            })
    }
}

/// One relaxed Gauss-Seidel iteration with an explicit `ℒ`.
pub fn step_relaxed(
    sys: &BlockSystem,
    relax: &RelaxationOperator,
    ordering: Ordering,
    w: &BlockVector,
) -> Result<BlockVector> {
    Stepper::from_relaxation(sys, relax, ordering)?.step(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
    InnerFailure,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "CONVERGED",
            Status::MaxIters => "MAX_ITERS",
            Status::Diverged => "DIVERGED",
            Status::InnerFailure => "INNER_FAILURE",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub status: Status,
    pub iterations: usize,
    /// `‖r_u‖₂ / max(‖f1‖₂, ε)` per iterate, starting with the initial guess.
    pub res_u_history: Vec<f64>,
    pub res_v_history: Vec<f64>,
    /// `‖w − w_ref‖₂` per iterate when a reference solution was supplied.
    pub err_history: Option<Vec<f64>>,
    pub final_w: BlockVector,
    /// Message from the inner solver when `status` is `INNER_FAILURE`.
    pub failure: Option<String>,
}

impl IterationReport {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn final_res_u(&self) -> f64 {
        *self
            .res_u_history
            .last()
            .expect("history holds the initial state")
    }

    pub fn final_res_v(&self) -> f64 {
        *self
            .res_v_history
            .last()
            .expect("history holds the initial state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub inner: SolverOptions,
}

impl RunOptions {
    pub fn new(tol: f64, max_iters: usize) -> Self {
        Self {
            tol,
            max_iters,
            inner: SolverOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Runs `spec` on `sys` from `w0` (zero when `None`).
///
/// Only invalid input or setup problems are reported as `Err`; inner-solver
/// failures during the iteration end the run with `INNER_FAILURE`.
pub fn run(
    sys: &BlockSystem,
    spec: &SchemeSpec,
    w0: Option<&BlockVector>,
    tol: f64,
    max_iters: usize,
    reference: Option<&BlockVector>,
) -> Result<IterationReport> {
    run_with(sys, spec, w0, RunOptions::new(tol, max_iters), reference)
}

pub fn run_with(
    sys: &BlockSystem,
    spec: &SchemeSpec,
    w0: Option<&BlockVector>,
    opts: RunOptions,
    reference: Option<&BlockVector>,
) -> Result<IterationReport> {
    opts.validate()?;
    let stepper = Stepper::with_inner(sys, spec, opts.inner)?;
    iterate(&stepper, w0, opts, reference)
}

/// Drives a prepared [`Stepper`] to termination.
pub fn iterate(
    stepper: &Stepper<'_>,
    w0: Option<&BlockVector>,
    opts: RunOptions,
    reference: Option<&BlockVector>,
) -> Result<IterationReport> {
    opts.validate()?;
    let sys = stepper.system();
    let mut w = match w0 {
        Some(w) => {
            sys.check_vector(w)?;
            w.clone()
        }
        None => BlockVector::zeros(sys.n_u(), sys.n_v()),
    };
    if let Some(r) = reference {
        sys.check_vector(r)?;
    }
    let scale_u = sys.f1().norm2().max(RESIDUAL_FLOOR);
    let scale_v = sys.f2().norm2().max(RESIDUAL_FLOOR);

    let measure = |w: &BlockVector| -> Result<(f64, f64, f64)> {
        let (r1, r2) = sys.residuals(w)?;
        let (a, b) = (norm2(&r1), norm2(&r2));
        Ok((a, b, a.hypot(b)))
    };
    let error = |w: &BlockVector| reference.map(|r| w.sub(r).map(|e| e.norm2()));

    let (a0, b0, initial) = measure(&w)?;
    let mut report = IterationReport {
        status: Status::MaxIters,
        iterations: 0,
        res_u_history: vec![a0 / scale_u],
        res_v_history: vec![b0 / scale_v],
        err_history: error(&w).transpose()?.map(|e| vec![e]),
        final_w: w.clone(),
        failure: None,
    };
    let done = |ru: f64, rv: f64| ru <= opts.tol && rv <= opts.tol;
    if done(a0 / scale_u, b0 / scale_v) {
        report.status = Status::Converged;
        return Ok(report);
    }

    for k in 1..=opts.max_iters {
        w = match stepper.step(&w) {
            Ok(next) => next,
            Err(e) => {
                report.status = Status::InnerFailure;
                report.failure = Some(e.to_string());
                break;
            }
        };
        let (a, b, combined) = measure(&w)?;
        let (ru, rv) = (a / scale_u, b / scale_v);
        report.iterations = k;
        report.res_u_history.push(ru);
        report.res_v_history.push(rv);
        if let (Some(h), Some(e)) = (report.err_history.as_mut(), error(&w).transpose()?) {
            h.push(e);
        }
        report.final_w = w.clone();
        if !combined.is_finite() || !w.is_finite() || combined > DIVERGENCE_FACTOR * initial {
            report.status = Status::Diverged;
            break;
        }
        if done(ru, rv) {
            report.status = Status::Converged;
            break;
        }
    }
    Ok(report)
}
