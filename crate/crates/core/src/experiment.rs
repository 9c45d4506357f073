//! Batch experiments over manufactured problems: single runs, β-sweeps,
//! condition analyses and grid-refinement studies.

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{analyze, AnalysisReport, EstimatorOptions};
use crate::block::{BlockSystem, BlockVector};
use crate::error::{Error, Result};
use crate::mms::{
    assemble_dual_porosity_1d, assemble_dual_porosity_2d, assemble_quad_laplacian_1d,
    assemble_quad_laplacian_2d, discrete_l2_error, Dim, DualPorosity2D, Grid1D, Grid2D,
    ManufacturedProblem, Model, QuadLaplacian2D, DUAL_POROSITY_1D_INTERVAL,
    QUAD_LAPLACIAN_1D_INTERVAL,
};
use crate::schemes::{run_with, Ordering, RunOptions, SchemeSpec, SchurForm, Status};
use crate::sparse::SolverOptions;

/// 25 log-spaced values in `[10⁻², 10⁴]`.
pub fn default_beta_sweep() -> Vec<f64> {
    log_range(1e-2, 1e4, 25).expect("valid range")
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_range(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) || count == 0 {
        return Err(Error::InvalidParameter(format!(
            "log range needs 0 < lo <= hi and count >= 1, got {lo}:{hi}:{count}"
        )));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..count)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == count {
                hi
            } else {
                10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)
            }
        })
        .collect())
}

pub fn default_tol(dim: Dim) -> f64 {
    match dim {
        Dim::D1 => 1e-6,
        Dim::D2 => 1e-8,
    }
}

pub fn default_max_iters(dim: Dim) -> usize {
    match dim {
        Dim::D1 => 100,
        Dim::D2 => 1000,
    }
}

pub fn default_cells(dim: Dim) -> usize {
    match dim {
        Dim::D1 => 128,
        Dim::D2 => 32,
    }
}

pub fn default_beta(model: Model, dim: Dim) -> f64 {
    match (model, dim) {
        (Model::DualPorosity, Dim::D2) => DualPorosity2D::DEFAULT_BETA,
        _ => 1.0,
    }
}

pub fn default_schemes() -> Vec<SchemeSpec> {
    [
        "BJ", "BGS", "SPJ_u", "SPJ_v", "SPJ_a", "S2PJ_u", "S2PJ_v", "S2PJ_a",
    ]
    .iter()
    .map(|s| s.parse().expect("built-in scheme names parse"))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub dim: Dim,
    pub betas: Vec<f64>,
    /// Cells per direction.
    pub n_cells: usize,
    pub schemes: Vec<SchemeSpec>,
    pub tol: f64,
    pub max_iters: usize,
    /// Overrides each scheme's default ordering.
    pub ordering: Option<Ordering>,
    pub form: SchurForm,
    /// 2D dual-porosity contrast exponent.
    pub contrast: f64,
    /// 2D dual-porosity mobility ratio.
    pub mobility_ratio: f64,
    pub inner: SolverOptions,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(model: Model, dim: Dim) -> Self {
        Self {
            model,
            dim,
            betas: vec![default_beta(model, dim)],
            n_cells: default_cells(dim),
            schemes: default_schemes(),
            tol: default_tol(dim),
            max_iters: default_max_iters(dim),
            ordering: None,
            form: SchurForm::Relaxed,
            contrast: DualPorosity2D::DEFAULT_CONTRAST,
            mobility_ratio: DualPorosity2D::DEFAULT_MOBILITY_RATIO,
            inner: SolverOptions::default(),
            seed: EstimatorOptions::default().seed,
        }
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Self {
        self.betas = betas;
        self
    }

    pub fn with_schemes(mut self, schemes: Vec<SchemeSpec>) -> Self {
        self.schemes = schemes;
        self
    }

    pub fn with_cells(mut self, n: usize) -> Self {
        self.n_cells = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max iterations must be at least 1".into(),
            ));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidParameter("scheme list is empty".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::InvalidParameter("beta list is empty".into()));
        }
        for s in &self.schemes {
            s.validate()?;
        }
        for &beta in &self.betas {
            let ok = beta.is_finite()
                && match self.model {
                    Model::DualPorosity => beta >= 0.0,
                    Model::QuadLaplacian => beta > 0.0,
                };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "beta = {beta} is not allowed for {}",
                    self.model
                )));
            }
        }
        if self.n_cells < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 cells, got {}",
                self.n_cells
            )));
        }
        Ok(())
    }

    /// Scheme with the config's ordering and Schur form applied.
    pub fn effective(&self, spec: &SchemeSpec) -> SchemeSpec {
        let mut s = *spec;
        if let Some(o) = self.ordering {
            s.ordering = o;
        }
        if s.is_partial_jacobi() {
            s.form = self.form;
        }
        s
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            inner: self.inner,
        }
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        EstimatorOptions {
            seed: self.seed,
            ..Default::default()
        }
    }

    pub fn problem(&self, beta: f64, n_cells: usize) -> Result<ManufacturedProblem> {
        build_problem(
            self.model,
            self.dim,
            beta,
            n_cells,
            self.contrast,
            self.mobility_ratio,
        )
    }
}

pub fn build_problem(
    model: Model,
    dim: Dim,
    beta: f64,
    n_cells: usize,
    contrast: f64,
    mobility_ratio: f64,
) -> Result<ManufacturedProblem> {
    match (model, dim) {
        (Model::DualPorosity, Dim::D1) => {
            let (a, b) = DUAL_POROSITY_1D_INTERVAL;
            assemble_dual_porosity_1d(Grid1D::new(a, b, n_cells)?, beta)
        }
        (Model::QuadLaplacian, Dim::D1) => {
            let (a, b) = QUAD_LAPLACIAN_1D_INTERVAL;
            assemble_quad_laplacian_1d(Grid1D::new(a, b, n_cells)?, beta)
        }
        (Model::DualPorosity, Dim::D2) => {
            let params = DualPorosity2D {
                beta,
                contrast,
                mobility_ratio,
                ..Default::default()
            };
            assemble_dual_porosity_2d(Grid2D::square(n_cells)?, &params)
        }
        (Model::QuadLaplacian, Dim::D2) => {
            assemble_quad_laplacian_2d(Grid2D::square(n_cells)?, &QuadLaplacian2D::with_beta(beta))
        }
    }
}

/// One row of run/sweep output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scheme: String,
    pub beta: f64,
    pub n_cells: usize,
    pub iterations: usize,
    pub status: Status,
    pub final_res_u: f64,
    pub final_res_v: f64,
    pub final_err_u: f64,
    pub final_err_v: f64,
}

/// Runs one scheme and measures the final iterate against `reference`.
/// Setup failures are reported as `INNER_FAILURE` rows.
pub fn run_record(
    sys: &BlockSystem,
    spec: &SchemeSpec,
    opts: RunOptions,
    beta: f64,
    n_cells: usize,
    error_of: impl Fn(&BlockVector) -> Result<(f64, f64)>,
) -> RunRecord {
    let mut rec = RunRecord {
        scheme: spec.name(),
        beta,
        n_cells,
        iterations: 0,
        status: Status::InnerFailure,
        final_res_u: f64::NAN,
        final_res_v: f64::NAN,
        final_err_u: f64::NAN,
        final_err_v: f64::NAN,
    };
    if let Ok(rep) = run_with(sys, spec, None, opts, None) {
        rec.iterations = rep.iterations;
        rec.status = rep.status;
        rec.final_res_u = rep.final_res_u();
        rec.final_res_v = rep.final_res_v();
        if let Ok((eu, ev)) = error_of(&rep.final_w) {
            rec.final_err_u = eu;
            rec.final_err_v = ev;
        }
    }
    rec
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.beta.total_cmp(&b.beta)));
}

/// Cross product of schemes × β values, run concurrently, sorted by (scheme, β).
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let problems: Vec<ManufacturedProblem> = cfg
        .betas
        .par_iter()
        .map(|&b| cfg.problem(b, cfg.n_cells))
        .collect::<Result<_>>()?;
    let jobs: Vec<(&ManufacturedProblem, SchemeSpec)> = problems
        .iter()
        .flat_map(|p| cfg.schemes.iter().map(move |s| (p, cfg.effective(s))))
        .collect();
    let mut records: Vec<RunRecord> = jobs
        .par_iter()
        .map(|(p, spec)| {
            run_record(
                &p.system,
                spec,
                cfg.run_options(),
                p.beta,
                p.grid.cells_per_direction(),
                |w| discrete_l2_error(w, p),
            )
        })
        .collect();
    sort_records(&mut records);
    Ok(records)
}

/// Condition analysis of every configured scheme at the first configured β.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub model: Model,
    pub beta: f64,
    pub n_cells: usize,
    pub reports: Vec<AnalysisReport>,
}

pub fn analyze_config(cfg: &ExperimentConfig) -> Result<Vec<AnalysisSummary>> {
    cfg.validate()?;
    let opts = cfg.estimator_options();
    cfg.betas
        .iter()
        .map(|&beta| {
            let p = cfg.problem(beta, cfg.n_cells)?;
            let reports = cfg
                .schemes
                .iter()
                .map(|s| analyze(&p.system, &cfg.effective(s), &opts))
                .collect::<Result<Vec<_>>>()?;
            Ok(AnalysisSummary {
                model: cfg.model,
                beta,
                n_cells: cfg.n_cells,
                reports,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n_cells: usize,
    pub err_u: f64,
    pub err_v: f64,
    /// `log₂` of the error ratio to the previous (coarser) level.
    pub order_u: Option<f64>,
    pub order_v: Option<f64>,
}

/// Monolithic-solve errors on dyadically refined grids.
pub fn convergence_study(cfg: &ExperimentConfig, levels: &[usize]) -> Result<Vec<ConvergenceRow>> {
    if levels.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 grid levels, got {}",
            levels.len()
        )));
    }
    if levels[0] < 2 || levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParameter(format!(
            "grid levels must double each time, got {levels:?}"
        )));
    }
    let beta = *cfg
        .betas
        .first()
        .ok_or_else(|| Error::InvalidParameter("beta list is empty".into()))?;
    let errs = levels
        .par_iter()
        .map(|&n| {
            let p = cfg.problem(beta, n)?;
            let w = p.system.monolithic_solve(1e-13)?;
            discrete_l2_error(&w, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let order =
                |f: fn(&(f64, f64)) -> f64| (k > 0).then(|| (f(&errs[k - 1]) / f(&errs[k])).log2());
            ConvergenceRow {
                n_cells: n,
                err_u: errs[k].0,
                err_v: errs[k].1,
                order_u: order(|e| e.0),
                order_v: order(|e| e.1),
            }
        })
        .collect())
}
