//! Operator-norm and coercivity estimates, and the convergence conditions
//! and rate bounds built from them.
//!
//! Coercivity of `M` means `⟨Mx, x⟩ ≥ α‖x‖²`; the estimate is the smallest
//! eigenvalue of the symmetric part `(M + Mᵀ)/2`. Norms are spectral.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::block::BlockSystem;
use crate::error::{Error, Result};
use crate::schemes::{build_relaxation, Ordering, RelaxationOperator, SchemeKind, SchemeSpec};
use crate::sparse::{add_scaled, axpy, dot, norm2, CsrMatrix, LinearSolver, SolverOptions};

/// Entrywise tolerance, relative to the largest entry, for structural checks.
pub const STRUCTURE_TOL: f64 = 1e-12;
/// Relative slack granted to non-strict comparisons of estimated quantities.
pub const COMPARISON_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub tol: f64,
    pub max_it: usize,
    pub seed: u64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_it: 20_000,
            seed: 0x5eed,
        }
    }
}

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    x
}

const KRYLOV_DIM: usize = 64;

/// Largest eigenpair of a symmetric positive semidefinite operator by
/// explicitly restarted Lanczos with full reorthogonalisation.
///
/// `accept` maps the current Ritz vector to an estimate and whether it is
/// accurate enough; the routine stops at the first accepted estimate, on an
/// invariant subspace, or after `opts.max_it` operator applications.
fn lanczos_top(
    n: usize,
    opts: &EstimatorOptions,
    mut op: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    mut accept: impl FnMut(&[f64]) -> Result<(f64, bool)>,
) -> Result<f64> {
    let m = n.min(KRYLOV_DIM);
    let mut start = random_unit(n, opts.seed);
    let mut applied = 0usize;
    loop {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        for j in 0..m {
            let mut w = op(&basis[j])?;
            applied += 1;
            alpha.push(dot(&w, &basis[j]));
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(&w, q);
                    axpy(-c, q, &mut w);
                }
            }
            let bj = norm2(&w);

            let k = j + 1;
            let t = DMatrix::from_fn(k, k, |r, c| match r.abs_diff(c) {
                0 => alpha[r],
                1 => beta[r.min(c)],
                _ => 0.0,
            });
            let eig = SymmetricEigen::new(t);
            let top = eig.eigenvalues.imax();
            let theta = eig.eigenvalues[top];
            let mut x = vec![0.0; n];
            for (i, q) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, top)], q, &mut x);
            }
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v /= nx);
            let (value, ok) = accept(&x)?;
            let invariant = bj <= 1e-14 * theta.abs().max(f64::MIN_POSITIVE) || k == n;
            if ok || invariant {
                return Ok(value);
            }
            if applied >= opts.max_it {
                return Err(Error::EstimatorNonConvergence {
                    estimate: value,
                    iterations: applied,
                });
            }
            if j + 1 == m {
                start = x;
                break;
            }
            w.iter_mut().for_each(|v| *v /= bj);
            beta.push(bj);
            basis.push(w);
        }
    }
}

/// Spectral norm from the top eigenpair of `MᵀM`.
pub fn estimate_norm(m: &CsrMatrix, tol: f64, max_it: usize) -> Result<f64> {
    estimate_norm_with(
        m,
        &EstimatorOptions {
            tol,
            max_it,
            ..Default::default()
        },
    )
}

pub fn estimate_norm_with(m: &CsrMatrix, opts: &EstimatorOptions) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::InvalidParameter(
            "matrix has non-finite entries".into(),
        ));
    }
    if m.max_abs() == 0.0 || m.n_cols() == 0 || m.n_rows() == 0 {
        return Ok(0.0);
    }
    let gram = |x: &[f64]| -> Result<Vec<f64>> { Ok(m.spmv_transpose(&m.spmv(x)?)?.into_inner()) };
    let rtol = opts.tol.max(f64::EPSILON).sqrt();
    lanczos_top(m.n_cols(), opts, gram, |x| {
        let mx = m.spmv(x)?;
        let rho = mx.norm2().powi(2);
        let mut r = m.spmv_transpose(&mx)?.into_inner();
        axpy(-rho, x, &mut r);
        Ok((rho.sqrt(), norm2(&r) <= rtol * rho))
    })
}

/// `λ_min((M + Mᵀ)/2)` by shift-and-invert Lanczos, shifted below the
/// Gershgorin lower bound.
pub fn estimate_coercivity(m: &CsrMatrix, tol: f64, max_it: usize) -> Result<f64> {
    estimate_coercivity_with(
        m,
        &EstimatorOptions {
            tol,
            max_it,
            ..Default::default()
        },
    )
}

pub fn estimate_coercivity_with(m: &CsrMatrix, opts: &EstimatorOptions) -> Result<f64> {
    let s = m.symmetric_part()?;
    let n = s.n_rows();
    if n == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let (mut d, mut off) = (0.0, 0.0);
        for (j, v) in s.row(i) {
            if i == j {
                d += v;
            } else {
                off += v.abs();
            }
        }
        lo = lo.min(d - off);
        hi = hi.max(d + off);
    }
    let spread = hi - lo;
    if spread <= 0.0 {
        return Ok(lo);
    }
    let shift = lo - (1e-3 * spread).max(f64::MIN_POSITIVE);
    let shifted = add_scaled(&s, 1.0, &CsrMatrix::identity(n), -shift)?;
    let solver = LinearSolver::new(
        &shifted,
        SolverOptions {
            tol: 1e-13,
            max_it: 10 * n.max(100),
        },
    )?;
    let floor = 1e-14 * lo.abs().max(hi.abs());
    let rtol = opts.tol.max(f64::EPSILON).sqrt();
    lanczos_top(
        n,
        opts,
        |x| Ok(solver.solve(x)?.into_inner()),
        |x| {
            let mut r = s.spmv(x)?.into_inner();
            let rho = dot(x, &r);
            axpy(-rho, x, &mut r);
            Ok((rho, norm2(&r) <= rtol * rho.abs().max(floor)))
        },
    )
}

/// Block splitting `𝒜 = 𝒜_i + 𝒜_e` of an unrelaxed iteration `𝒜_i w⁺ + 𝒜_e w = f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Splitting {
    BJ,
    BGS(Ordering),
    BSOR(f64, Ordering),
}

impl Splitting {
    /// Splitting underlying a scheme; relaxed schemes use Gauss-Seidel data flow.
    pub fn of(spec: &SchemeSpec) -> Self {
        match spec.kind {
            SchemeKind::BJ => Splitting::BJ,
            SchemeKind::BSOR => Splitting::BSOR(spec.omega, spec.ordering),
            _ => Splitting::BGS(spec.ordering),
        }
    }
}

/// `(𝒜_i, 𝒜_e)` as monolithic matrices.
pub fn splitting_operators(sys: &BlockSystem, split: Splitting) -> Result<(CsrMatrix, CsrMatrix)> {
    let (nu, nv) = (sys.n_u(), sys.n_v());
    let zu = CsrMatrix::zeros(nu, nu);
    let zv = CsrMatrix::zeros(nv, nv);
    let zuv = CsrMatrix::zeros(nu, nv);
    let zvu = CsrMatrix::zeros(nv, nu);
    let (a, b, c, d) = (sys.a(), sys.b(), sys.c(), sys.d());
    let explicit = match split {
        Splitting::BJ => CsrMatrix::from_blocks(&zu, b, c, &zv)?,
        Splitting::BGS(Ordering::UFirst) => CsrMatrix::from_blocks(&zu, b, &zvu, &zv)?,
        Splitting::BGS(Ordering::VFirst) => CsrMatrix::from_blocks(&zu, &zuv, c, &zv)?,
        Splitting::BSOR(omega, ordering) => {
            if !(omega > 0.0 && omega <= 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "BSOR weight must lie in (0, 2], got {omega}"
                )));
            }
            let k = 1.0 - 1.0 / omega;
            let (au, dv) = (a.scaled(k), d.scaled(k));
            match ordering {
                Ordering::UFirst => CsrMatrix::from_blocks(&au, b, &zvu, &dv)?,
                Ordering::VFirst => CsrMatrix::from_blocks(&au, &zuv, c, &dv)?,
            }
        }
    };
    let implicit = add_scaled(&sys.monolithic_assemble(), 1.0, &explicit, -1.0)?;
    Ok((implicit, explicit))
}

/// Outcome of one sufficient condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionRecord {
    /// Whether the structural preconditions of the statement are met.
    pub applicable: bool,
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub quantities: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ConditionRecord {
    fn new(holds: bool, lhs: f64, rhs: f64) -> Self {
        Self {
            applicable: true,
            holds,
            lhs,
            rhs,
            quantities: BTreeMap::new(),
            note: None,
        }
    }

    fn not_applicable(note: impl Into<String>) -> Self {
        Self {
            applicable: false,
            holds: false,
            lhs: f64::NAN,
            rhs: f64::NAN,
            quantities: BTreeMap::new(),
            note: Some(note.into()),
        }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.quantities.insert(key.to_string(), value);
        self
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

fn at_least(lhs: f64, rhs: f64) -> bool {
    lhs >= rhs - COMPARISON_SLACK * rhs.abs().max(lhs.abs())
}

/// `max |x − y|` over both patterns, relative to the largest entry involved.
fn relative_deviation(x: &CsrMatrix, y: &CsrMatrix) -> Result<f64> {
    let scale = x.max_abs().max(y.max_abs());
    let diff = x.max_abs_diff(y)?;
    Ok(if scale == 0.0 { 0.0 } else { diff / scale })
}

/// `C = −Bᵀ` entrywise within [`STRUCTURE_TOL`].
pub fn is_skew_coupled(sys: &BlockSystem) -> bool {
    relative_deviation(sys.c(), &sys.b().transpose().scaled(-1.0)).is_ok_and(|d| d <= STRUCTURE_TOL)
}

/// `C = Bᵀ` entrywise within [`STRUCTURE_TOL`].
pub fn is_symmetric_coupled(sys: &BlockSystem) -> bool {
    relative_deviation(sys.c(), &sys.b().transpose()).is_ok_and(|d| d <= STRUCTURE_TOL)
}

/// `C = B` entrywise within [`STRUCTURE_TOL`].
pub fn is_equal_coupled(sys: &BlockSystem) -> bool {
    relative_deviation(sys.c(), sys.b()).is_ok_and(|d| d <= STRUCTURE_TOL)
}

pub fn is_symmetric(m: &CsrMatrix) -> bool {
    m.is_square() && relative_deviation(m, &m.transpose()).is_ok_and(|d| d <= STRUCTURE_TOL)
}

/// `α_𝒜 > 2‖𝒜_e‖` for the given splitting.
pub fn check_unrelaxed(
    sys: &BlockSystem,
    split: Splitting,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    let alpha = estimate_coercivity_with(&sys.monolithic_assemble(), opts)?;
    let (_, explicit) = splitting_operators(sys, split)?;
    let norm_ae = estimate_norm_with(&explicit, opts)?;
    Ok(unrelaxed_record(alpha, norm_ae))
}

fn unrelaxed_record(alpha: f64, norm_ae: f64) -> ConditionRecord {
    ConditionRecord::new(alpha > 2.0 * norm_ae, alpha, 2.0 * norm_ae)
        .with("alpha_mono", alpha)
        .with("norm_Ae", norm_ae)
}

/// `‖𝒜_e‖² / (2α_𝒜)`.
pub fn optimal_ell_from(norm_ae: f64, alpha_mono: f64) -> Result<f64> {
    if !(alpha_mono > 0.0) {
        return Err(Error::Hypothesis(format!(
            "monolithic operator is not coercive (alpha = {alpha_mono:e})"
        )));
    }
    Ok(norm_ae * norm_ae / (2.0 * alpha_mono))
}

pub fn optimal_ell(sys: &BlockSystem, split: Splitting, opts: &EstimatorOptions) -> Result<f64> {
    let alpha = estimate_coercivity_with(&sys.monolithic_assemble(), opts)?;
    let (_, explicit) = splitting_operators(sys, split)?;
    optimal_ell_from(estimate_norm_with(&explicit, opts)?, alpha)
}

/// Rate at the optimal relaxation: `√((1+ε)‖𝒜_e‖² / (‖𝒜_e‖² + 2α²))`.
pub fn optimal_rate(eps_l: f64, norm_ae: f64, alpha_mono: f64) -> f64 {
    let ne2 = norm_ae * norm_ae;
    if ne2 == 0.0 {
        return 0.0;
    }
    ((1.0 + eps_l) * ne2 / (ne2 + 2.0 * alpha_mono * alpha_mono)).sqrt()
}

/// General bound `√((1+ε)α_ℒ / (2α + α_ℒ − δ))` with `δ = ‖𝒜_e‖²/(2α_ℒ)`.
/// Requires `α, α_ℒ > 0` and `δ ≤ 2α − ε α_ℒ`.
pub fn rate_bound(eps_l: f64, alpha_l: f64, norm_ae: f64, alpha_mono: f64) -> Result<f64> {
    if !(alpha_mono > 0.0) {
        return Err(Error::Hypothesis(format!(
            "monolithic coercivity {alpha_mono:e} is not positive"
        )));
    }
    if !(alpha_l > 0.0) {
        return Err(Error::Hypothesis(format!(
            "relaxation coercivity {alpha_l:e} is not positive"
        )));
    }
    let delta = norm_ae * norm_ae / (2.0 * alpha_l);
    let limit = 2.0 * alpha_mono - eps_l * alpha_l;
    if !at_least(limit, delta) {
        return Err(Error::Hypothesis(format!(
            "‖A_e‖²/(2 alpha_L) = {delta:e} exceeds 2 alpha - eps_L alpha_L = {limit:e}"
        )));
    }
    Ok(((1.0 + eps_l) * alpha_l / (2.0 * alpha_mono + alpha_l - delta)).sqrt())
}

/// `ε_ℒ = ‖ℒ‖/α_ℒ − 1`, clamped at 0; NaN when `α_ℒ ≤ 0`.
pub fn eps_from(norm_l: f64, alpha_l: f64) -> f64 {
    if alpha_l > 0.0 && norm_l.is_finite() {
        (norm_l / alpha_l - 1.0).max(0.0)
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePrediction {
    pub rate: f64,
    pub below_one: bool,
    pub alpha_mono: f64,
    pub norm_ae: f64,
    pub alpha_l: f64,
    pub norm_l: f64,
    pub eps_l: f64,
}

/// Contraction bound for the relaxed iteration with splitting `split` and `ℒ = relax`.
pub fn predicted_rate(
    sys: &BlockSystem,
    split: Splitting,
    relax: &RelaxationOperator,
    opts: &EstimatorOptions,
) -> Result<RatePrediction> {
    relax.validate(sys)?;
    let alpha_mono = estimate_coercivity_with(&sys.monolithic_assemble(), opts)?;
    let (_, explicit) = splitting_operators(sys, split)?;
    let norm_ae = estimate_norm_with(&explicit, opts)?;
    let l = relax.monolithic();
    let alpha_l = estimate_coercivity_with(&l, opts)?;
    let norm_l = estimate_norm_with(&l, opts)?;
    let eps_l = eps_from(norm_l, alpha_l);
    let rate = rate_bound(eps_l, alpha_l, norm_ae, alpha_mono)?;
    Ok(RatePrediction {
        rate,
        below_one: rate < 1.0,
        alpha_mono,
        norm_ae,
        alpha_l,
        norm_l,
        eps_l,
    })
}

/// `‖B‖⁴ / (α_D α_A²)`
pub fn skew_threshold(norm_b: f64, alpha_a: f64, alpha_d: f64) -> f64 {
    norm_b.powi(4) / (alpha_d * alpha_a * alpha_a)
}

/// `‖B‖⁴ / (2α_A²(2α_D − ‖B‖²/α_A))`
pub fn symmetric_threshold(norm_b: f64, alpha_a: f64, alpha_d: f64) -> f64 {
    norm_b.powi(4) / (2.0 * alpha_a * alpha_a * (2.0 * alpha_d - norm_b * norm_b / alpha_a))
}

fn coercive_inputs_note(alpha_a: f64, alpha_d: f64, alpha_l: f64) -> Option<String> {
    let mut bad = Vec::new();
    for (name, v) in [("A", alpha_a), ("D", alpha_d), ("L_v", alpha_l)] {
        if !(v > 0.0) {
            bad.push(format!("{name} is not coercive (alpha = {v:e})"));
        }
    }
    (!bad.is_empty()).then(|| bad.join("; "))
}

fn skew_record(
    alpha_l: f64,
    norm_b: f64,
    alpha_a: f64,
    alpha_d: f64,
    l_symmetric: bool,
) -> ConditionRecord {
    if !l_symmetric {
        return ConditionRecord::not_applicable("L_v is not symmetric");
    }
    let rhs = skew_threshold(norm_b, alpha_a, alpha_d);
    let note = coercive_inputs_note(alpha_a, alpha_d, alpha_l);
    let holds = note.is_none() && at_least(alpha_l, rhs);
    let mut r = ConditionRecord::new(holds, alpha_l, rhs)
        .with("alpha_L", alpha_l)
        .with("norm_B", norm_b)
        .with("alpha_A", alpha_a)
        .with("alpha_D", alpha_d);
    if let Some(n) = note {
        r = r.with_note(n);
    }
    r
}

/// Skew coupling `C = −Bᵀ`: `α_L ≥ ‖B‖⁴/(α_D α_A²)`.
pub fn check_skew_condition(
    sys: &BlockSystem,
    l_v: &CsrMatrix,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    if !is_skew_coupled(sys) {
        return Ok(ConditionRecord::not_applicable("C is not -B^T"));
    }
    let e = BlockEstimates::compute(sys, opts)?;
    let alpha_l = estimate_coercivity_with(l_v, opts)?;
    Ok(skew_record(
        alpha_l,
        e.norm_b,
        e.alpha_a,
        e.alpha_d,
        is_symmetric(l_v),
    ))
}

fn symmetric_record(alpha_l: f64, norm_b: f64, alpha_a: f64, alpha_d: f64) -> ConditionRecord {
    let side_lhs = alpha_a * alpha_d;
    let side_rhs = norm_b * norm_b / 2.0;
    let side = side_lhs > side_rhs && alpha_a > 0.0 && alpha_d > 0.0;
    let rhs = symmetric_threshold(norm_b, alpha_a, alpha_d);
    let note = coercive_inputs_note(alpha_a, alpha_d, alpha_l);
    let holds = side && note.is_none() && alpha_l > rhs;
    let mut r = ConditionRecord::new(holds, alpha_l, rhs)
        .with("alpha_L", alpha_l)
        .with("norm_B", norm_b)
        .with("alpha_A", alpha_a)
        .with("alpha_D", alpha_d)
        .with("side_lhs", side_lhs)
        .with("side_rhs", side_rhs)
        .with("side_holds", if side { 1.0 } else { 0.0 });
    if let Some(n) = note {
        r = r.with_note(n);
    }
    r
}

/// Symmetric coupling `C = Bᵀ`: `α_A α_D > ‖B‖²/2` and
/// `α_L > ‖B‖⁴/(2α_A²(2α_D − ‖B‖²/α_A))`.
pub fn check_symmetric_condition(
    sys: &BlockSystem,
    l_v: &CsrMatrix,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    if !is_symmetric_coupled(sys) {
        return Ok(ConditionRecord::not_applicable("C is not B^T"));
    }
    let e = BlockEstimates::compute(sys, opts)?;
    let alpha_l = estimate_coercivity_with(l_v, opts)?;
    Ok(symmetric_record(alpha_l, e.norm_b, e.alpha_a, e.alpha_d))
}

/// Equal coupling `C = B`: `A+B`, `D+B` and `−B` coercive; with `L_v` given,
/// also `α_L ≥ ‖B‖⁴/(α_{D+B} α_A²)`.
pub fn check_cb_condition(
    sys: &BlockSystem,
    l_v: Option<&CsrMatrix>,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    if !is_equal_coupled(sys) {
        return Ok(ConditionRecord::not_applicable("C is not B"));
    }
    if !sys.b().is_square() {
        return Ok(ConditionRecord::not_applicable("B is not square"));
    }
    let e = BlockEstimates::compute(sys, opts)?;
    let alpha_l = l_v.map(|l| estimate_coercivity_with(l, opts)).transpose()?;
    cb_record(sys, &e, alpha_l, opts)
}

fn cb_record(
    sys: &BlockSystem,
    e: &BlockEstimates,
    alpha_l: Option<f64>,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    let alpha_ab = estimate_coercivity_with(&add_scaled(sys.a(), 1.0, sys.b(), 1.0)?, opts)?;
    let alpha_db = estimate_coercivity_with(&add_scaled(sys.d(), 1.0, sys.b(), 1.0)?, opts)?;
    let alpha_mb = estimate_coercivity_with(&sys.b().scaled(-1.0), opts)?;
    let positive = alpha_ab > 0.0 && alpha_db > 0.0 && alpha_mb > 0.0;
    let threshold = e.norm_b.powi(4) / (alpha_db * e.alpha_a * e.alpha_a);
    let mut r = match alpha_l {
        Some(al) => ConditionRecord::new(
            positive && al > 0.0 && at_least(al, threshold),
            al,
            threshold,
        ),
        None => {
            let m = alpha_ab.min(alpha_db).min(alpha_mb);
            ConditionRecord::new(positive, m, 0.0)
        }
    };
    r = r
        .with("alpha_A_plus_B", alpha_ab)
        .with("alpha_D_plus_B", alpha_db)
        .with("alpha_minus_B", alpha_mb)
        .with("norm_B", e.norm_b)
        .with("alpha_A", e.alpha_a)
        .with("threshold", threshold);
    if let Some(al) = alpha_l {
        r = r.with("alpha_L", al);
    }
    if !positive {
        r = r.with_note("A+B, D+B and -B are not all coercive");
    }
    Ok(r)
}

/// `min(α_A, α_D) − (‖B‖ + ‖C‖)/2 > 0`.
pub fn check_monolithic_coercivity(
    sys: &BlockSystem,
    opts: &EstimatorOptions,
) -> Result<ConditionRecord> {
    Ok(BlockEstimates::compute(sys, opts)?.monolithic_record())
}

/// Block constants shared by the condition checkers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockEstimates {
    pub alpha_a: f64,
    pub alpha_d: f64,
    pub norm_b: f64,
    pub norm_c: f64,
}

impl BlockEstimates {
    pub fn compute(sys: &BlockSystem, opts: &EstimatorOptions) -> Result<Self> {
        Ok(Self {
            alpha_a: estimate_coercivity_with(sys.a(), opts)?,
            alpha_d: estimate_coercivity_with(sys.d(), opts)?,
            norm_b: estimate_norm_with(sys.b(), opts)?,
            norm_c: estimate_norm_with(sys.c(), opts)?,
        })
    }

    pub fn monolithic_margin(&self) -> f64 {
        self.alpha_a.min(self.alpha_d) - 0.5 * (self.norm_b + self.norm_c)
    }

    fn monolithic_record(&self) -> ConditionRecord {
        let m = self.monolithic_margin();
        ConditionRecord::new(m > 0.0, m, 0.0)
            .with("alpha_A", self.alpha_a)
            .with("alpha_D", self.alpha_d)
            .with("norm_B", self.norm_b)
            .with("norm_C", self.norm_c)
    }
}

/// Everything the condition checkers report for one system and scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scheme: String,
    #[serde(rename = "alpha_A")]
    pub alpha_a: f64,
    #[serde(rename = "alpha_D")]
    pub alpha_d: f64,
    pub alpha_mono: f64,
    #[serde(rename = "norm_B")]
    pub norm_b: f64,
    #[serde(rename = "norm_C")]
    pub norm_c: f64,
    #[serde(rename = "norm_Ae")]
    pub norm_ae: f64,
    #[serde(rename = "norm_L")]
    pub norm_l: f64,
    #[serde(rename = "alpha_L")]
    pub alpha_l: f64,
    #[serde(rename = "eps_L")]
    pub eps_l: f64,
    pub optimal_ell: Option<f64>,
    pub conditions: BTreeMap<String, ConditionRecord>,
    pub predicted_rate: Option<f64>,
}

fn failed(e: Error) -> ConditionRecord {
    ConditionRecord::not_applicable(format!("estimation failed: {e}"))
}

type Estimate = std::result::Result<f64, String>;

fn estimated(r: Result<f64>) -> Estimate {
    r.map_err(|e| e.to_string())
}

/// First failed input of a condition, as a not-applicable record.
fn missing(inputs: &[(&str, &Estimate)]) -> Option<ConditionRecord> {
    inputs.iter().find_map(|(name, r)| {
        r.as_ref()
            .err()
            .map(|e| ConditionRecord::not_applicable(format!("estimation of {name} failed: {e}")))
    })
}

/// Runs every estimator and condition for `spec` on `sys`. Estimator failures
/// are recorded in the conditions that need the failed quantity, and the
/// quantity itself is reported as NaN.
pub fn analyze(
    sys: &BlockSystem,
    spec: &SchemeSpec,
    opts: &EstimatorOptions,
) -> Result<AnalysisReport> {
    let split = Splitting::of(spec);
    let relax = build_relaxation(sys, spec)?;
    let (_, explicit) = splitting_operators(sys, split)?;
    let l = relax.monolithic();

    let alpha_a = estimated(estimate_coercivity_with(sys.a(), opts));
    let alpha_d = estimated(estimate_coercivity_with(sys.d(), opts));
    let norm_b = estimated(estimate_norm_with(sys.b(), opts));
    let norm_c = estimated(estimate_norm_with(sys.c(), opts));
    let alpha_mono = estimated(estimate_coercivity_with(&sys.monolithic_assemble(), opts));
    let norm_ae = estimated(estimate_norm_with(&explicit, opts));
    let norm_l = estimated(estimate_norm_with(&l, opts));
    let alpha_l = estimated(estimate_coercivity_with(&l, opts));
    let alpha_lv = estimated(estimate_coercivity_with(&relax.l_v, opts));
    let val = |r: &Estimate| *r.as_ref().unwrap_or(&f64::NAN);
    let e = BlockEstimates {
        alpha_a: val(&alpha_a),
        alpha_d: val(&alpha_d),
        norm_b: val(&norm_b),
        norm_c: val(&norm_c),
    };
    let eps_l = eps_from(val(&norm_l), val(&alpha_l));
    let block_inputs = [
        ("alpha_A", &alpha_a),
        ("alpha_D", &alpha_d),
        ("norm_B", &norm_b),
    ];

    let mut conditions = BTreeMap::new();
    let mono = missing(&[
        block_inputs[0],
        block_inputs[1],
        block_inputs[2],
        ("norm_C", &norm_c),
    ])
    .unwrap_or_else(|| e.monolithic_record());
    conditions.insert("monolithic_coercivity".to_string(), mono);
    let unrelaxed = missing(&[("alpha_mono", &alpha_mono), ("norm_Ae", &norm_ae)])
        .unwrap_or_else(|| unrelaxed_record(val(&alpha_mono), val(&norm_ae)));
    conditions.insert("unrelaxed".to_string(), unrelaxed);

    let skew = if !is_skew_coupled(sys) {
        ConditionRecord::not_applicable("C is not -B^T")
    } else {
        missing(&[
            block_inputs[0],
            block_inputs[1],
            block_inputs[2],
            ("alpha_Lv", &alpha_lv),
        ])
        .unwrap_or_else(|| {
            skew_record(
                val(&alpha_lv),
                e.norm_b,
                e.alpha_a,
                e.alpha_d,
                is_symmetric(&relax.l_v),
            )
        })
    };
    conditions.insert("skew".to_string(), skew);
    let symmetric = if !is_symmetric_coupled(sys) {
        ConditionRecord::not_applicable("C is not B^T")
    } else {
        missing(&[
            block_inputs[0],
            block_inputs[1],
            block_inputs[2],
            ("alpha_Lv", &alpha_lv),
        ])
        .unwrap_or_else(|| symmetric_record(val(&alpha_lv), e.norm_b, e.alpha_a, e.alpha_d))
    };
    conditions.insert("symmetric".to_string(), symmetric);
    let cb = if !is_equal_coupled(sys) {
        ConditionRecord::not_applicable("C is not B")
    } else if !sys.b().is_square() {
        ConditionRecord::not_applicable("B is not square")
    } else if let Some(r) = missing(&block_inputs) {
        r
    } else {
        let al = (relax.l_v.nnz() > 0)
            .then(|| alpha_lv.as_ref().ok().copied())
            .flatten();
        cb_record(sys, &e, al, opts).unwrap_or_else(failed)
    };
    conditions.insert("c_equals_b".to_string(), cb);

    let rate = match missing(&[
        ("alpha_mono", &alpha_mono),
        ("norm_Ae", &norm_ae),
        ("norm_L", &norm_l),
        ("alpha_L", &alpha_l),
    ]) {
        Some(r) => Err(r),
        None => rate_bound(eps_l, val(&alpha_l), val(&norm_ae), val(&alpha_mono))
            .map_err(|err| ConditionRecord::new(false, f64::NAN, 1.0).with_note(err.to_string())),
    };
    let rate_record = match &rate {
        Ok(r) => ConditionRecord::new(*r < 1.0, *r, 1.0),
        Err(rec) => rec.clone(),
    }
    .with("alpha_mono", val(&alpha_mono))
    .with("alpha_L", val(&alpha_l))
    .with("eps_L", eps_l)
    .with("norm_Ae", val(&norm_ae));
    conditions.insert("relaxed_rate".to_string(), rate_record);

    Ok(AnalysisReport {
        scheme: spec.name(),
        alpha_a: e.alpha_a,
        alpha_d: e.alpha_d,
        alpha_mono: val(&alpha_mono),
        norm_b: e.norm_b,
        norm_c: e.norm_c,
        norm_ae: val(&norm_ae),
        norm_l: val(&norm_l),
        alpha_l: val(&alpha_l),
        eps_l,
        optimal_ell: optimal_ell_from(val(&norm_ae), val(&alpha_mono)).ok(),
        conditions,
        predicted_rate: rate.ok(),
    })
}
