//! Random instance builders, dense oracles and the invariant suite shared by
//! the property tests and the acceptance harness.
#![allow(dead_code)]

use std::f64::consts::PI;

use blocksplit::analysis::{
    check_skew_condition, check_unrelaxed, estimate_coercivity_with, estimate_norm_with,
    predicted_rate, skew_threshold, EstimatorOptions, Splitting,
};
use blocksplit::experiment::{build_problem, convergence_study, ExperimentConfig};
use blocksplit::mms::{
    dual_porosity_1d_model, quad_laplacian_1d_model, DualPorosity2D, QuadLaplacian2D,
};
use blocksplit::schemes::{iterate, RunOptions};
use blocksplit::sparse::mm::{read_matrix_market, read_vector, write_matrix_market, write_vector};
use blocksplit::sparse::{inner_solve, triple_product_diag, BACKWARD_TOL};
use blocksplit::{
    build_relaxation, BlockSystem, BlockVector, CsrMatrix, Dim, Model, Ordering,
    RelaxationOperator, SchemeSpec, SchurForm, Side, Status, Stepper,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: u32 = 1000;

pub fn runner() -> TestRunner {
    runner_with(CASES)
}

pub fn runner_with(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

// ---------------------------------------------------------------------------
// instance builders

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_sparse(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    density: f64,
    scale: f64,
) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen_bool(density) {
                t.push((i, j, scale * rng.gen_range(-1.0..1.0)));
            }
        }
    }
    CsrMatrix::from_triplets(rows, cols, t).unwrap()
}

/// Off-diagonal noise plus a diagonal making the symmetric part strictly
/// diagonally dominant, so the coercivity constant is at least `boost / 2`.
pub fn dominant(rng: &mut ChaCha8Rng, n: usize, density: f64, boost: f64) -> CsrMatrix {
    let off = random_sparse(rng, n, n, density, 1.0);
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut t = Vec::new();
    for (i, j, v) in off.triplets() {
        if i != j {
            row[i] += v.abs();
            col[j] += v.abs();
            t.push((i, j, v));
        }
    }
    for i in 0..n {
        t.push((
            i,
            i,
            0.5 * (row[i] + col[i]) + boost * rng.gen_range(0.5..1.5),
        ));
    }
    CsrMatrix::from_triplets(n, n, t).unwrap()
}

fn symmetrized(m: &CsrMatrix) -> CsrMatrix {
    m.symmetric_part().unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    General,
    /// `C = −Bᵀ`
    Skew,
    /// `C = Bᵀ`
    Symmetric,
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n_u: usize,
    pub n_v: usize,
    pub coupling: f64,
    pub kind: Coupling,
    /// Symmetric diagonal blocks.
    pub symmetric_blocks: bool,
}

impl Shape {
    pub fn new(n_u: usize, n_v: usize, coupling: f64, kind: Coupling) -> Self {
        Self {
            n_u,
            n_v,
            coupling,
            kind,
            symmetric_blocks: false,
        }
    }
}

pub fn random_system(seed: u64, shape: Shape) -> BlockSystem {
    let mut r = rng(seed);
    let mut a = dominant(&mut r, shape.n_u, 0.3, 1.0);
    let mut d = dominant(&mut r, shape.n_v, 0.3, 1.0);
    if shape.symmetric_blocks {
        a = symmetrized(&a);
        d = symmetrized(&d);
    }
    let b = random_sparse(&mut r, shape.n_u, shape.n_v, 0.4, shape.coupling);
    let c = match shape.kind {
        Coupling::General => random_sparse(&mut r, shape.n_v, shape.n_u, 0.4, shape.coupling),
        Coupling::Skew => b.transpose().scaled(-1.0),
        Coupling::Symmetric => b.transpose(),
    };
    let f1 = random_vec(&mut r, shape.n_u);
    let f2 = random_vec(&mut r, shape.n_v);
    BlockSystem::new(a, b, c, d, f1, f2).unwrap()
}

// ---------------------------------------------------------------------------
// dense oracles

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.n_rows(), m.n_cols());
    for (i, j, v) in m.triplets() {
        out[(i, j)] += v;
    }
    out
}

pub fn sparse_of(m: &DMatrix<f64>) -> CsrMatrix {
    let t = (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| m[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, m[(i, j)]));
    CsrMatrix::from_triplets(m.nrows(), m.ncols(), t.collect::<Vec<_>>()).unwrap()
}

pub fn dense_monolithic(sys: &BlockSystem) -> DMatrix<f64> {
    let (nu, nv) = (sys.n_u(), sys.n_v());
    let mut m = DMatrix::zeros(nu + nv, nu + nv);
    m.view_mut((0, 0), (nu, nu)).copy_from(&dense(sys.a()));
    m.view_mut((0, nu), (nu, nv)).copy_from(&dense(sys.b()));
    m.view_mut((nu, 0), (nv, nu)).copy_from(&dense(sys.c()));
    m.view_mut((nu, nu), (nv, nv)).copy_from(&dense(sys.d()));
    m
}

pub fn dense_solve(sys: &BlockSystem) -> BlockVector {
    let m = dense_monolithic(sys);
    let rhs = DVector::from_vec(sys.rhs_stacked().into_inner());
    let x = m.lu().solve(&rhs).expect("nonsingular test system");
    BlockVector::from_stacked(x.as_slice(), sys.n_u()).unwrap()
}

/// Exact `−C A⁻¹ B` from a dense factorization.
pub fn exact_schur_relaxation(sys: &BlockSystem) -> CsrMatrix {
    let a = dense(sys.a());
    let ainv_b = a.lu().solve(&dense(sys.b())).expect("A nonsingular");
    sparse_of(&(-dense(sys.c()) * ainv_b))
}

pub fn dense_residuals(sys: &BlockSystem, w: &BlockVector) -> (f64, f64) {
    let m = dense_monolithic(sys);
    let r = DVector::from_vec(sys.rhs_stacked().into_inner())
        - m * DVector::from_vec(w.stacked().into_inner());
    let nu = sys.n_u();
    (r.rows(0, nu).norm(), r.rows(nu, sys.n_v()).norm())
}

pub fn relative_residual(sys: &BlockSystem, w: &BlockVector) -> f64 {
    let (ru, rv) = dense_residuals(sys, w);
    ru.hypot(rv) / sys.f1().norm2().hypot(sys.f2().norm2())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn check<T>(r: blocksplit::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

/// Iterates of `stepper` from `w0`.
pub fn iterates(
    stepper: &Stepper<'_>,
    w0: &BlockVector,
    count: usize,
) -> blocksplit::Result<Vec<BlockVector>> {
    let mut out = Vec::with_capacity(count);
    let mut w = w0.clone();
    for _ in 0..count {
        w = stepper.step(&w)?;
        out.push(w.clone());
    }
    Ok(out)
}

pub fn estimator() -> EstimatorOptions {
    EstimatorOptions::default()
}

// ---------------------------------------------------------------------------
// constructed instances for the convergence-guarantee checks

/// Skew system with `L_v = factor · threshold · I`, plus the estimated constants.
pub struct SkewInstance {
    pub sys: BlockSystem,
    pub ell: f64,
    pub alpha_d: f64,
    pub threshold: f64,
}

pub fn skew_instance(
    seed: u64,
    n_u: usize,
    n_v: usize,
    coupling: f64,
    factor: f64,
) -> SkewInstance {
    let mut shape = Shape::new(n_u, n_v, coupling, Coupling::Skew);
    shape.symmetric_blocks = true;
    let sys = random_system(seed, shape);
    let o = estimator();
    let alpha_a = estimate_coercivity_with(sys.a(), &o).unwrap();
    let alpha_d = estimate_coercivity_with(sys.d(), &o).unwrap();
    let norm_b = estimate_norm_with(sys.b(), &o).unwrap();
    let threshold = skew_threshold(norm_b, alpha_a, alpha_d);
    SkewInstance {
        sys,
        ell: factor * threshold,
        alpha_d,
        threshold,
    }
}

impl SkewInstance {
    pub fn relaxation(&self) -> RelaxationOperator {
        RelaxationOperator {
            l_u: CsrMatrix::zeros(self.sys.n_u(), self.sys.n_u()),
            l_v: CsrMatrix::identity(self.sys.n_v()).scaled(self.ell),
        }
    }
}

/// Worst violation ratio of `(α_D/‖L‖ + 1)‖e_v^{k+1}‖²_L ≤ ‖e_v^k‖²_L` over a
/// V-first run from the consistent start `v⁰ = 0`, `A u⁰ = f₁`. Iterates stop
/// being compared once the error has dropped below `1e-8` of its initial value,
/// where the reference solution's own rounding error dominates.
pub fn skew_contraction_worst(
    inst: &SkewInstance,
    max_steps: usize,
) -> blocksplit::Result<(f64, usize)> {
    let sys = &inst.sys;
    let reference = dense_solve(sys);
    let relax = inst.relaxation();
    let stepper = Stepper::from_relaxation(sys, &relax, Ordering::VFirst)?;
    let mut w = sys.consistent_start(vec![0.0; sys.n_v()], 1e-14)?;
    let err = |w: &BlockVector| w.v.sub(&reference.v).map(|e| e.norm2()).unwrap();
    let e0 = err(&w);
    let factor = inst.alpha_d / inst.ell + 1.0;
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    let mut prev = e0;
    while steps < max_steps && prev > 1e-8 * e0 {
        w = stepper.step(&w)?;
        steps += 1;
        let next = err(&w);
        // ‖e‖²_L = ℓ‖e‖² for L = ℓI
        let lhs = factor * inst.ell * next * next;
        let rhs = inst.ell * prev * prev;
        worst = worst.max(lhs / rhs);
        prev = next;
    }
    Ok((worst, steps))
}

/// Relaxed Gauss-Seidel with `ℒ = ℓ_opt I` on both blocks.
pub struct RateInstance {
    pub sys: BlockSystem,
    pub relax: RelaxationOperator,
    pub predicted: f64,
}

pub fn rate_instance(seed: u64, n_u: usize, n_v: usize, coupling: f64) -> Option<RateInstance> {
    let sys = random_system(seed, Shape::new(n_u, n_v, coupling, Coupling::General));
    let o = estimator();
    let split = Splitting::BGS(Ordering::UFirst);
    let ell = blocksplit::analysis::optimal_ell(&sys, split, &o).ok()?;
    let relax = RelaxationOperator {
        l_u: CsrMatrix::identity(n_u).scaled(ell),
        l_v: CsrMatrix::identity(n_v).scaled(ell),
    };
    let pred = predicted_rate(&sys, split, &relax, &o).ok()?;
    Some(RateInstance {
        sys,
        relax,
        predicted: pred.rate,
    })
}

/// Asymptotic contraction of `‖w^k − w*‖₂`: geometric mean over the second
/// half of the iterates above the rounding floor.
pub fn observed_rate(inst: &RateInstance, max_steps: usize) -> blocksplit::Result<f64> {
    let sys = &inst.sys;
    let reference = dense_solve(sys);
    let stepper = Stepper::from_relaxation(sys, &inst.relax, Ordering::UFirst)?;
    let mut w = BlockVector::zeros(sys.n_u(), sys.n_v());
    let e0 = w.sub(&reference)?.norm2();
    let mut errs = vec![e0];
    while errs.len() <= max_steps && *errs.last().unwrap() > 1e-10 * e0 {
        w = stepper.step(&w)?;
        errs.push(w.sub(&reference)?.norm2());
    }
    let k = errs.len() - 1;
    if k == 0 || errs[k] == 0.0 {
        return Ok(0.0);
    }
    let j = if k >= 4 { k / 2 } else { 0 };
    Ok((errs[k] / errs[j]).powf(1.0 / (k - j) as f64))
}

// ---------------------------------------------------------------------------
// invariant suite

type Outcome = Result<(), String>;
pub type Invariant = fn(&mut TestRunner) -> Outcome;

fn run_cases<S: Strategy>(
    runner: &mut TestRunner,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome {
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn size() -> impl Strategy<Value = usize> {
    1usize..=20
}

pub fn spmv_linearity(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (
            any::<u64>(),
            1usize..=30,
            1usize..=30,
            -10.0f64..10.0,
            -10.0f64..10.0,
        ),
        |(seed, rows, cols, a, b)| {
            let mut r = rng(seed);
            let m = random_sparse(&mut r, rows, cols, 0.3, 1.0);
            let x = random_vec(&mut r, cols);
            let y = random_vec(&mut r, cols);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let lhs = check(m.spmv(&combo))?;
            let (mx, my) = (check(m.spmv(&x))?, check(m.spmv(&y))?);
            for i in 0..rows {
                let scale: f64 = m
                    .row(i)
                    .map(|(j, v)| v.abs() * (a * x[j]).abs().max((b * y[j]).abs()))
                    .sum();
                let rhs = a * mx[i] + b * my[i];
                ensure(
                    (lhs[i] - rhs).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) * 2.0,
                    || format!("row {i}: {} vs {rhs}", lhs[i]),
                )?;
            }
            Ok(())
        },
    )
}

pub fn triple_product_matches_dense(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), size()),
        |(seed, p, k, q)| {
            let mut r = rng(seed);
            let b = random_sparse(&mut r, p, k, 0.4, 2.0);
            let c = random_sparse(&mut r, k, q, 0.4, 2.0);
            let dinv: Vec<f64> = (0..k)
                .map(|_| r.gen_range(0.1..10.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let got = dense(&check(triple_product_diag(&b, &dinv, &c))?);
            let dd = DMatrix::from_diagonal(&DVector::from_vec(dinv.clone()));
            let oracle = dense(&b) * &dd * dense(&c);
            let scale = dense(&b).abs() * dd.abs() * dense(&c).abs();
            for i in 0..p {
                for j in 0..q {
                    ensure(
                        (got[(i, j)] - oracle[(i, j)]).abs() <= 1e-13 * scale[(i, j)],
                        || format!("({i},{j}): {} vs {}", got[(i, j)], oracle[(i, j)]),
                    )?;
                }
            }
            Ok(())
        },
    )
}

pub fn inner_solve_contract(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), 1usize..=40, 0.0f64..2.0, -12.0f64..-6.0),
        |(seed, n, boost, log_tol)| {
            let mut r = rng(seed);
            let m = dominant(&mut r, n, 0.3, boost);
            // Drop part of the diagonal so some systems are far from dominant.
            let shift = CsrMatrix::identity(n).scaled(-r.gen_range(0.0..1.0) * m.max_abs());
            let m = blocksplit::sparse::add_scaled(&m, 1.0, &shift, 1.0).unwrap();
            let b = random_vec(&mut r, n);
            let tol = 10f64.powf(log_tol);
            if let Ok(x) = inner_solve(&m, &b, tol, 500) {
                let res = DVector::from_vec(b.clone()) - dense(&m) * DVector::from_vec(x.to_vec());
                let bn = DVector::from_vec(b.clone()).norm();
                let norm_inf = dense(&m)
                    .row_iter()
                    .map(|row| row.abs().sum())
                    .fold(0.0, f64::max);
                let backward =
                    res.amax() <= BACKWARD_TOL * (norm_inf * inf_norm(&x) + inf_norm(&b));
                ensure(res.norm() <= tol * bn || backward, || {
                    format!("residual {} > {}", res.norm(), tol * bn)
                })?;
            }
            Ok(())
        },
    )
}

pub fn canonical_idempotence(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (
            1usize..=15,
            1usize..=15,
            prop::collection::vec((0usize..15, 0usize..15, -5i32..=5), 0..60),
        ),
        |(rows, cols, raw)| {
            let t: Vec<(usize, usize, f64)> = raw
                .into_iter()
                .map(|(i, j, v)| (i % rows, j % cols, v as f64 * 0.25))
                .collect();
            let m = check(CsrMatrix::from_triplets(rows, cols, t))?;
            let once = m.canonicalized();
            let twice = once.canonicalized();
            ensure(
                once.row_offsets() == twice.row_offsets()
                    && once.col_indices() == twice.col_indices()
                    && once.values() == twice.values(),
                || "canonicalized twice differs".into(),
            )
        },
    )
}

pub fn matrix_market_round_trip(runner: &mut TestRunner) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mp, vp) = (dir.path().join("m.mtx"), dir.path().join("v.vec"));
    run_cases(
        runner,
        (any::<u64>(), size(), size()),
        |(seed, rows, cols)| {
            let mut r = rng(seed);
            let mut m = random_sparse(&mut r, rows, cols, 0.3, 1.0);
            if r.gen_bool(0.2) {
                m = m.scaled(r.gen_range(-1e300..1e300));
            }
            check(write_matrix_market(&mp, &m))?;
            let back = check(read_matrix_market(&mp))?;
            ensure(back == m.canonicalized(), || {
                "matrix differs after round trip".into()
            })?;
            let v: Vec<f64> = random_vec(&mut r, rows)
                .into_iter()
                .map(|x| x * 1e-200)
                .collect();
            check(write_vector(&vp, &v))?;
            ensure(check(read_vector(&vp))?.as_slice() == v.as_slice(), || {
                "vector differs".into()
            })
        },
    )
}

pub fn monolithic_spmv_matches_blocks(runner: &mut TestRunner) -> Outcome {
    run_cases(runner, (any::<u64>(), size(), size()), |(seed, nu, nv)| {
        let sys = random_system(seed, Shape::new(nu, nv, 1.0, Coupling::General));
        let mut r = rng(seed ^ 1);
        let w = BlockVector::new(random_vec(&mut r, nu), random_vec(&mut r, nv));
        let got = check(sys.monolithic_assemble().spmv(&w.stacked()))?;
        let au = dense(sys.a()) * DVector::from_vec(w.u.to_vec());
        let bv = dense(sys.b()) * DVector::from_vec(w.v.to_vec());
        let cu = dense(sys.c()) * DVector::from_vec(w.u.to_vec());
        let dv = dense(sys.d()) * DVector::from_vec(w.v.to_vec());
        let expect: Vec<f64> = (au + bv).iter().chain((cu + dv).iter()).copied().collect();
        let scale = dense_monolithic(&sys).abs()
            * DVector::from_vec(w.stacked().iter().map(|x| x.abs()).collect());
        for i in 0..nu + nv {
            ensure(
                (got[i] - expect[i]).abs() <= 1e-13 * scale[i].max(f64::MIN_POSITIVE),
                || format!("row {i}: {} vs {}", got[i], expect[i]),
            )?;
        }
        Ok(())
    })
}

pub fn monolithic_solve_meets_tolerance(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), 0.0f64..0.5),
        |(seed, nu, nv, c)| {
            let sys = random_system(seed, Shape::new(nu, nv, c, Coupling::General));
            let tol = 1e-11;
            let w = check(sys.monolithic_solve(tol))?;
            let (ru, rv) = check(sys.residuals(&w))?;
            let rel = ru.norm2().hypot(rv.norm2()) / sys.rhs_stacked().norm2();
            ensure(rel <= tol, || format!("relative residual {rel:e}"))
        },
    )
}

pub fn lscheme_small_ell_matches_bgs(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), 0.0f64..1.0),
        |(seed, nu, nv, c)| {
            let sys = random_system(seed, Shape::new(nu, nv, c, Coupling::General));
            let w0 = BlockVector::zeros(nu, nv);
            let bgs = check(iterates(
                &check(Stepper::new(&sys, &SchemeSpec::bgs()))?,
                &w0,
                5,
            ))?;
            let ls = check(iterates(
                &check(Stepper::new(&sys, &SchemeSpec::lscheme(1e-15)))?,
                &w0,
                5,
            ))?;
            for (k, (x, y)) in bgs.iter().zip(&ls).enumerate() {
                let d = check(x.sub(y))?.norm2();
                ensure(d <= 1e-12 * x.norm2().max(1.0), || {
                    format!("iterate {k}: difference {d:e}")
                })?;
            }
            Ok(())
        },
    )
}

fn scheme_pool(square: bool) -> Vec<SchemeSpec> {
    let mut v = vec![
        SchemeSpec::bj(),
        SchemeSpec::bgs(),
        SchemeSpec::bgs().with_ordering(Ordering::VFirst),
        SchemeSpec::bsor(0.8),
        SchemeSpec::bsor(1.3),
        SchemeSpec::lscheme(0.5),
        SchemeSpec::spj(Side::U),
        SchemeSpec::spj(Side::V),
        SchemeSpec::spj(Side::Alternate),
        SchemeSpec::spj(Side::V).with_form(SchurForm::Factorized),
    ];
    if square {
        v.extend([
            SchemeSpec::s2pj(Side::U),
            SchemeSpec::s2pj(Side::V),
            SchemeSpec::s2pj(Side::Alternate),
            SchemeSpec::s2pj(Side::Alternate).with_form(SchurForm::Factorized),
        ]);
    }
    v
}

pub fn converged_limit_solves_system(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (
            any::<u64>(),
            size(),
            size(),
            0.0f64..1.5,
            any::<prop::sample::Index>(),
        ),
        |(seed, nu, nv, c, pick)| {
            let sys = random_system(seed, Shape::new(nu, nv, c, Coupling::General));
            let pool = scheme_pool(nu == nv);
            let spec = pool[pick.index(pool.len())];
            let tol = 1e-8;
            let rep = check(blocksplit::run(&sys, &spec, None, tol, 300, None))?;
            if rep.status == Status::Converged {
                let (ru, rv) = dense_residuals(&sys, &rep.final_w);
                let slack = 1.0 + 1e-6;
                ensure(
                    ru <= slack * tol * sys.f1().norm2() && rv <= slack * tol * sys.f2().norm2(),
                    || format!("{spec}: residuals {ru:e}, {rv:e}"),
                )?;
            }
            Ok(())
        },
    )
}

pub fn spj_v_relaxed_matches_factorized(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), 0.0f64..0.7),
        |(seed, nu, nv, c)| {
            let sys = random_system(seed, Shape::new(nu, nv, c, Coupling::General));
            let mut r = rng(seed ^ 7);
            let w0 = check(sys.consistent_start(random_vec(&mut r, nv), 1e-14))?;
            let relaxed = Stepper::new(&sys, &SchemeSpec::spj(Side::V));
            let factored = Stepper::new(
                &sys,
                &SchemeSpec::spj(Side::V).with_form(SchurForm::Factorized),
            );
            let xs = check(iterates(&check(relaxed)?, &w0, 5))?;
            let ys = check(iterates(&check(factored)?, &w0, 5))?;
            for (k, (x, y)) in xs.iter().zip(&ys).enumerate() {
                let d = check(x.sub(y))?.norm2();
                ensure(d <= 1e-10 * x.norm2().max(w0.norm2()).max(1.0), || {
                    format!("iterate {k}: difference {d:e}")
                })?;
            }
            Ok(())
        },
    )
}

pub fn skew_l_norm_contraction(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (
            any::<u64>(),
            1usize..=25,
            1usize..=25,
            0.05f64..1.5,
            1.05f64..4.0,
        ),
        |(seed, nu, nv, c, factor)| {
            let inst = skew_instance(seed, nu, nv, c, factor);
            if !(inst.ell > 0.0) {
                return Ok(());
            }
            let (worst, _) = check(skew_contraction_worst(&inst, 400))?;
            ensure(worst <= 1.0 + 1e-6, || format!("contraction ratio {worst}"))
        },
    )
}

pub fn symmetric_part_identity(runner: &mut TestRunner) -> Outcome {
    run_cases(runner, (any::<u64>(), 1usize..=30), |(seed, n)| {
        let mut r = rng(seed);
        let m = random_sparse(&mut r, n, n, 0.5, 3.0);
        let s = m.symmetric_part().unwrap();
        let x = random_vec(&mut r, n);
        let y = random_vec(&mut r, n);
        let d: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let ip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let sx = check(s.spmv(&x))?;
        let sy = check(s.spmv(&y))?;
        let sd = check(s.spmv(&d))?;
        let lhs = ip(&x, &sd);
        let (xsx, dsd, ysy) = (ip(&x, &sx), ip(&d, &sd), ip(&y, &sy));
        let rhs = 0.5 * (xsx + dsd - ysy);
        let scale = lhs.abs() + xsx.abs() + dsd.abs() + ysy.abs();
        ensure(
            (lhs - rhs).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE),
            || format!("{lhs} vs {rhs}"),
        )
    })
}

#[derive(Debug, Clone, Copy)]
enum Spectrum {
    Diagonal,
    Toeplitz,
    PermutedDiagonal,
}

pub fn estimator_soundness(runner: &mut TestRunner) -> Outcome {
    let kinds = prop_oneof![
        Just(Spectrum::Diagonal),
        Just(Spectrum::Toeplitz),
        Just(Spectrum::PermutedDiagonal)
    ];
    run_cases(
        runner,
        (any::<u64>(), 1usize..=40, kinds),
        |(seed, n, kind)| {
            let mut r = rng(seed);
            let o = estimator();
            let close = |est: f64, exact: f64, scale: f64| {
                (est - exact).abs() <= 1e-6 * exact.abs().max(1e-3 * scale)
            };
            match kind {
                Spectrum::Diagonal => {
                    let d: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
                    let m = CsrMatrix::from_diagonal(&d);
                    let norm = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
                    let (en, ec) = (
                        check(estimate_norm_with(&m, &o))?,
                        check(estimate_coercivity_with(&m, &o))?,
                    );
                    ensure(close(en, norm, norm) && close(ec, min, norm), || {
                        format!("{en} vs {norm}, {ec} vs {min}")
                    })
                }
                Spectrum::Toeplitz => {
                    // tridiag(b − s, a, b + s): symmetric part tridiag(b, a, b)
                    let (a, b, s) = (
                        r.gen_range(-3.0..3.0),
                        r.gen_range(-1.0..1.0),
                        r.gen_range(-1.0..1.0),
                    );
                    let mut t = Vec::new();
                    for i in 0..n {
                        t.push((i, i, a));
                        if i + 1 < n {
                            t.push((i, i + 1, b + s));
                            t.push((i + 1, i, b - s));
                        }
                    }
                    let m = check(CsrMatrix::from_triplets(n, n, t))?;
                    let eig = |k: usize| a + 2.0 * b * (k as f64 * PI / (n as f64 + 1.0)).cos();
                    let min = (1..=n).map(eig).fold(f64::INFINITY, f64::min);
                    let scale = (1..=n).map(|k| eig(k).abs()).fold(0.0, f64::max);
                    let ec = check(estimate_coercivity_with(&m, &o))?;
                    ensure(close(ec, min, scale), || {
                        format!("coercivity {ec} vs {min}")
                    })?;
                    let sym = m.symmetric_part().unwrap();
                    let en = check(estimate_norm_with(&sym, &o))?;
                    ensure(close(en, scale, scale), || format!("norm {en} vs {scale}"))
                }
                Spectrum::PermutedDiagonal => {
                    let d: Vec<f64> = (0..n).map(|_| r.gen_range(-5.0..5.0)).collect();
                    let shift = r.gen_range(0..n);
                    let m = check(CsrMatrix::from_triplets(
                        n,
                        n,
                        (0..n)
                            .map(|i| (i, (i + shift) % n, d[i]))
                            .collect::<Vec<_>>(),
                    ))?;
                    let norm = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                    let en = check(estimate_norm_with(&m, &o))?;
                    ensure(close(en, norm, norm), || format!("norm {en} vs {norm}"))
                }
            }
        },
    )
}

pub fn unrelaxed_guarantee_sound(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), 0.0f64..0.8),
        |(seed, nu, nv, c)| {
            let sys = random_system(seed, Shape::new(nu, nv, c, Coupling::General));
            let o = estimator();
            for (split, spec) in [
                (Splitting::BJ, SchemeSpec::bj()),
                (Splitting::BGS(Ordering::UFirst), SchemeSpec::bgs()),
            ] {
                if check(check_unrelaxed(&sys, split, &o))?.holds {
                    let rep = check(blocksplit::run(&sys, &spec, None, 1e-8, 500, None))?;
                    ensure(rep.status == Status::Converged, || {
                        format!("{spec}: {}", rep.status)
                    })?;
                }
            }
            Ok(())
        },
    )
}

pub fn skew_guarantee_sound(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (
            any::<u64>(),
            1usize..=20,
            1usize..=20,
            0.05f64..1.5,
            0.2f64..3.0,
        ),
        |(seed, nu, nv, c, factor)| {
            let inst = skew_instance(seed, nu, nv, c, factor);
            let relax = inst.relaxation();
            let rec = check(check_skew_condition(&inst.sys, &relax.l_v, &estimator()))?;
            if rec.holds {
                let stepper = check(Stepper::from_relaxation(
                    &inst.sys,
                    &relax,
                    Ordering::VFirst,
                ))?;
                let rep = check(iterate(&stepper, None, RunOptions::new(1e-8, 5000), None))?;
                ensure(rep.status == Status::Converged, || {
                    format!("status {} after {} iterations", rep.status, rep.iterations)
                })?;
            }
            Ok(())
        },
    )
}

pub fn rate_bound_sound(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<u64>(), size(), size(), 0.0f64..1.5),
        |(seed, nu, nv, c)| {
            if let Some(inst) = rate_instance(seed, nu, nv, c) {
                let observed = check(observed_rate(&inst, 2000))?;
                ensure(observed <= inst.predicted + 0.05, || {
                    format!("observed {observed} > predicted {}", inst.predicted)
                })?;
            }
            Ok(())
        },
    )
}

fn problem_strategy() -> impl Strategy<Value = (Model, Dim, f64, usize, f64, f64)> {
    (
        prop_oneof![Just(Model::DualPorosity), Just(Model::QuadLaplacian)],
        prop_oneof![Just(Dim::D1), Just(Dim::D2)],
        -3.0f64..4.0,
        2usize..=16,
        0.0f64..4.0,
        -3.0f64..0.0,
    )
        .prop_map(|(m, d, lb, n, sigma, lk)| (m, d, 10f64.powf(lb), n, sigma, 10f64.powf(lk)))
}

pub fn m_matrix_sign_pattern(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        problem_strategy(),
        |(model, dim, beta, n, sigma, kappa)| {
            let p = check(build_problem(model, dim, beta, n, sigma, kappa))?;
            for (name, m) in [("A", p.system.a()), ("D", p.system.d())] {
                for (i, j, v) in m.triplets() {
                    let ok = if i == j { v > 0.0 } else { v <= 0.0 };
                    ensure(ok, || format!("{name}[{i},{j}] = {v}"))?;
                }
            }
            Ok(())
        },
    )
}

fn interior_rows(p: &blocksplit::ManufacturedProblem) -> Vec<usize> {
    let n = p.grid.cells_per_direction();
    match p.dim() {
        Dim::D1 => (1..n - 1).collect(),
        Dim::D2 => (1..n - 1)
            .flat_map(|j| (1..n - 1).map(move |i| j * n + i))
            .collect(),
    }
}

pub fn interior_rows_conserve_flux(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        problem_strategy(),
        |(model, dim, beta, n, sigma, kappa)| {
            let n = n.max(3);
            let beta = if model == Model::DualPorosity {
                0.0
            } else {
                beta
            };
            let p = check(build_problem(model, dim, beta, n, sigma, kappa))?;
            let s = &p.system;
            for (name, m) in [("A", s.a()), ("B", s.b()), ("C", s.c()), ("D", s.d())] {
                if m.nnz() == 0 {
                    continue;
                }
                for &i in &interior_rows(&p) {
                    let (sum, abs) = m
                        .row(i)
                        .fold((0.0, 0.0), |(s, a), (_, v)| (s + v, a + v.abs()));
                    ensure(sum.abs() <= 1e-12 * abs, || {
                        format!("{name} row {i} sums to {sum:e}")
                    })?;
                }
            }
            Ok(())
        },
    )
}

pub fn dual_porosity_structure(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        problem_strategy(),
        |(_, dim, beta, n, sigma, kappa)| {
            let beta = if n % 5 == 0 { 0.0 } else { beta };
            let p = check(build_problem(
                Model::DualPorosity,
                dim,
                beta,
                n,
                sigma,
                kappa,
            ))?;
            let s = &p.system;
            let cells = p.grid.n_cells();
            let expect: Vec<(usize, usize, f64)> = if beta == 0.0 {
                vec![]
            } else {
                (0..cells).map(|i| (i, i, -beta)).collect()
            };
            for (name, m) in [("B", s.b()), ("C", s.c())] {
                ensure(m.triplets().collect::<Vec<_>>() == expect, || {
                    format!("{name} is not -beta I")
                })?;
            }
            for side in [Side::U, Side::V, Side::Alternate] {
                let spj = check(build_relaxation(s, &SchemeSpec::spj(side)))?;
                let s2pj = check(build_relaxation(s, &SchemeSpec::s2pj(side)))?;
                ensure(spj == s2pj, || {
                    format!("relaxations differ for side {side:?}")
                })?;
            }
            Ok(())
        },
    )
}

/// Sixth-order central difference.
fn fd6(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = [1.0 / 60.0, -3.0 / 20.0, 3.0 / 4.0];
    let mut acc = 0.0;
    for (k, ck) in c.iter().enumerate() {
        let s = (3 - k) as f64 * h;
        acc += ck * (f(x + s) - f(x - s));
    }
    acc / h
}

/// `(−(m w')', |m w''| + |m' w'|)` by nested differences.
fn fd_flux_1d(m: &dyn Fn(f64) -> f64, w: &dyn Fn(f64) -> f64, x: f64) -> (f64, f64) {
    let h = 1e-3;
    let flux = |y: f64| m(y) * fd6(w, y, h);
    let val = -fd6(&flux, x, h);
    let scale = (m(x) * fd6(&|y| fd6(w, y, h), x, h)).abs() + (fd6(m, x, h) * fd6(w, x, h)).abs();
    (val, scale)
}

pub fn forcing_matches_difference_oracle(runner: &mut TestRunner) -> Outcome {
    run_cases(
        runner,
        (any::<bool>(), -2.0f64..3.0, 0.05f64..0.95, 0.05f64..0.95),
        |(dp, lb, tx, ty)| {
            let beta = 10f64.powf(lb);
            // 1D
            let (model, (a, b)) = if dp {
                (
                    dual_porosity_1d_model(beta),
                    blocksplit::mms::DUAL_POROSITY_1D_INTERVAL,
                )
            } else {
                (
                    quad_laplacian_1d_model(beta),
                    blocksplit::mms::QUAD_LAPLACIAN_1D_INTERVAL,
                )
            };
            let x = a + tx * (b - a);
            let (u, v) = (|y: f64| model.u.value(y), |y: f64| model.v.value(y));
            let zero = |_: f64| 0.0;
            let muu = |y: f64| model.m_uu.value(y);
            let mvv = |y: f64| model.m_vv.value(y);
            let muv = |y: f64| model.m_uv.as_ref().map_or(0.0, |m| m.value(y));
            let mvu = |y: f64| model.m_vu.as_ref().map_or(0.0, |m| m.value(y));
            let _ = zero;
            let (t1, s1) = fd_flux_1d(&muu, &u, x);
            let (t2, s2) = fd_flux_1d(&muv, &v, x);
            let (t3, s3) = fd_flux_1d(&mvu, &u, x);
            let (t4, s4) = fd_flux_1d(&mvv, &v, x);
            let tr = model.transfer * (u(x) - v(x));
            let (f1, f2) = model.forcing(x);
            let e1 = t1 + t2 + tr;
            let e2 = t3 + t4 - tr;
            ensure((f1 - e1).abs() <= 1e-6 * (s1 + s2 + tr.abs()), || {
                format!("1D f1 {f1} vs {e1}")
            })?;
            ensure((f2 - e2).abs() <= 1e-6 * (s3 + s4 + tr.abs()), || {
                format!("1D f2 {f2} vs {e2}")
            })?;

            // 2D, as two one-dimensional slices
            let m2 = if dp {
                DualPorosity2D::with_beta(beta).model()
            } else {
                QuadLaplacian2D::with_beta(beta).model()
            };
            let (x, y) = (tx, ty);
            let slice = |f: &blocksplit::mms::fields::Field2D, alongx: bool| {
                let f = f.clone();
                move |s: f64| if alongx { f.value(s, y) } else { f.value(x, s) }
            };
            let opt = |m: &Option<blocksplit::mms::fields::Field2D>| {
                m.clone()
                    .unwrap_or_else(|| blocksplit::mms::fields::Field2D::constant(0.0))
            };
            let pairs = [
                (m2.m_uu.clone(), m2.u.clone(), 1),
                (opt(&m2.m_uv), m2.v.clone(), 1),
                (opt(&m2.m_vu), m2.u.clone(), 2),
                (m2.m_vv.clone(), m2.v.clone(), 2),
            ];
            let (mut e, mut sc) = ([0.0; 2], [0.0; 2]);
            for (m, w, eq) in pairs {
                for alongx in [true, false] {
                    let (t, s) = fd_flux_1d(
                        &slice(&m, alongx),
                        &slice(&w, alongx),
                        if alongx { x } else { y },
                    );
                    e[eq - 1] += t;
                    sc[eq - 1] += s;
                }
            }
            let tr = m2.transfer * (m2.u.value(x, y) - m2.v.value(x, y));
            e[0] += tr;
            e[1] -= tr;
            let (f1, f2) = m2.forcing(x, y);
            ensure((f1 - e[0]).abs() <= 1e-6 * (sc[0] + tr.abs()), || {
                format!("2D f1 {f1} vs {}", e[0])
            })?;
            ensure((f2 - e[1]).abs() <= 1e-6 * (sc[1] + tr.abs()), || {
                format!("2D f2 {f2} vs {}", e[1])
            })
        },
    )
}

/// Error ratios between successive dyadic grids of the monolithic solution.
pub fn refinement_ratios(
    model: Model,
    dim: Dim,
    beta: f64,
    levels: &[usize],
) -> blocksplit::Result<Vec<(f64, f64)>> {
    let cfg = ExperimentConfig::new(model, dim).with_betas(vec![beta]);
    let rows = convergence_study(&cfg, levels)?;
    Ok(rows
        .windows(2)
        .map(|w| (w[0].err_u / w[1].err_u, w[0].err_v / w[1].err_v))
        .collect())
}

pub fn mms_second_order(_: &mut TestRunner) -> Outcome {
    let cases = [
        (Model::DualPorosity, Dim::D1, 1.0, vec![64, 128, 256]),
        (Model::QuadLaplacian, Dim::D1, 1.0, vec![64, 128, 256]),
        (Model::DualPorosity, Dim::D2, 100.0, vec![16, 32, 64]),
        (Model::QuadLaplacian, Dim::D2, 1.0, vec![16, 32, 64]),
    ];
    for (model, dim, beta, levels) in cases {
        let ratios = refinement_ratios(model, dim, beta, &levels).map_err(|e| e.to_string())?;
        for (ru, rv) in ratios {
            if !((3.5..=4.5).contains(&ru) && (3.5..=4.5).contains(&rv)) {
                return Err(format!("{model} {dim:?}: ratios {ru}, {rv}"));
            }
        }
    }
    Ok(())
}

/// Every module-level invariant, by name.
pub fn all() -> Vec<(&'static str, Invariant)> {
    vec![
        ("spmv linearity", spmv_linearity),
        ("triple product vs dense", triple_product_matches_dense),
        ("inner solve residual contract", inner_solve_contract),
        ("canonical form idempotence", canonical_idempotence),
        ("matrix market round trip", matrix_market_round_trip),
        ("monolithic spmv vs blocks", monolithic_spmv_matches_blocks),
        (
            "monolithic solve tolerance",
            monolithic_solve_meets_tolerance,
        ),
        (
            "lscheme small ell equals bgs",
            lscheme_small_ell_matches_bgs,
        ),
        (
            "converged limit solves system",
            converged_limit_solves_system,
        ),
        (
            "spj_v relaxed equals factorized",
            spj_v_relaxed_matches_factorized,
        ),
        ("skew L-norm contraction", skew_l_norm_contraction),
        ("symmetric part identity", symmetric_part_identity),
        ("estimator soundness", estimator_soundness),
        ("unrelaxed guarantee soundness", unrelaxed_guarantee_sound),
        ("skew guarantee soundness", skew_guarantee_sound),
        ("rate bound soundness", rate_bound_sound),
        ("m-matrix sign pattern", m_matrix_sign_pattern),
        ("interior flux conservation", interior_rows_conserve_flux),
        ("dual-porosity coupling structure", dual_porosity_structure),
        (
            "forcing vs difference oracle",
            forcing_matches_difference_oracle,
        ),
        ("mms second order", mms_second_order),
    ]
}
