//! Inner linear solves.
//!
//! A [`LinearSolver`] factors a square matrix once and then solves repeatedly.
//! Matrices whose (reverse Cuthill-McKee reordered) band fits in memory are
//! factored with a banded LU with partial pivoting followed by iterative
//! refinement. Everything else, and any system where that path breaks down,
//! goes to restarted GMRES with a Jacobi preconditioner. Whatever the path, a
//! solve only succeeds when `‖b − Mx‖₂ ≤ tol·max(‖b‖₂, RESIDUAL_FLOOR)` has
//! been verified with the original matrix. A refined LU solution is also
//! accepted once it is backward stable to working precision
//! (`‖b − Mx‖∞ ≤ BACKWARD_TOL·(‖M‖∞‖x‖∞ + ‖b‖∞)`), since no floating-point
//! solve can certify more than that.

use std::collections::VecDeque;

use super::csr::CsrMatrix;
use super::vector::{axpy, check_len, dot, norm2, DenseVector};
use crate::error::{Error, Result};

/// Floor applied to `‖b‖₂` in every relative residual test.
pub const RESIDUAL_FLOOR: f64 = 1e-300;

pub const DEFAULT_INNER_TOL: f64 = 1e-12;
pub const DEFAULT_INNER_MAX_IT: usize = 2000;

/// Normwise backward error accepted regardless of the requested tolerance.
pub const BACKWARD_TOL: f64 = 64.0 * f64::EPSILON;

const GMRES_RESTART: usize = 50;
const REFINEMENT_STEPS: usize = 4;
/// Largest band storage (in entries) the direct path will allocate.
const MAX_BAND_ENTRIES: usize = 40_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_it: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_INNER_TOL,
            max_it: DEFAULT_INNER_MAX_IT,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inner tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrised pattern; `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in m.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();

    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut scratch = vec![usize::MAX; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| degree[i]);

    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj, &visited, &mut scratch);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(node) = queue.pop_front() {
            order.push(node);
            let mut next: Vec<usize> = adj[node].iter().copied().filter(|&j| !visited[j]).collect();
            next.sort_by_key(|&j| degree[j]);
            for j in next {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(
    seed: usize,
    adj: &[Vec<usize>],
    excluded: &[bool],
    level: &mut [usize],
) -> usize {
    let mut start = seed;
    let mut best_depth = 0;
    for _ in 0..4 {
        let (far, depth, touched) = bfs_levels(start, adj, excluded, level);
        for t in touched {
            level[t] = usize::MAX;
        }
        if depth <= best_depth && start != seed {
            break;
        }
        best_depth = depth;
        if far == start {
            break;
        }
        start = far;
    }
    start
}

fn bfs_levels(
    start: usize,
    adj: &[Vec<usize>],
    excluded: &[bool],
    level: &mut [usize],
) -> (usize, usize, Vec<usize>) {
    let mut touched = vec![start];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut far = start;
    while let Some(node) = queue.pop_front() {
        let l = level[node];
        if l > level[far] || (l == level[far] && adj[node].len() < adj[far].len()) {
            far = node;
        }
        for &j in &adj[node] {
            if !excluded[j] && level[j] == usize::MAX {
                level[j] = l + 1;
                touched.push(j);
                queue.push_back(j);
            }
        }
    }
    let depth = level[far];
    (far, depth, touched)
}

/// LU factors of a banded matrix with partial pivoting.
///
/// Row `i` holds columns `i-kl ..= i+kl+ku` (room for pivoting fill) at
/// offset `j + kl - i`. Multipliers stay where they were computed; row
/// interchanges are replayed during the forward solve.
#[derive(Debug, Clone)]
struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn factor(m: &CsrMatrix, kl: usize, ku: usize) -> Option<Self> {
        let n = m.n_rows();
        let width = 2 * kl + ku + 1;
        let mut data = vec![0.0; n * width];
        for (i, j, v) in m.triplets() {
            data[i * width + j + kl - i] += v;
        }
        let mut lu = Self {
            n,
            kl,
            ku,
            width,
            data,
            pivots: vec![0; n],
        };
        lu.eliminate().then_some(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self) -> bool {
        let (n, kl) = (self.n, self.kl);
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return n == 0;
        }
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= scale * f64::EPSILON * 1e-3 || !best.is_finite() {
                return false;
            }
            self.pivots[k] = p;
            let last_col = (k + kl + self.ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=last_col {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        true
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.data[self.idx(i, k)] * bk;
                }
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..=(i + kl + self.ku).min(n - 1) {
                acc -= self.data[self.idx(i, j)] * b[j];
            }
            b[i] = acc / self.data[self.idx(i, i)];
        }
    }
}

#[derive(Debug, Clone)]
enum Factorization {
    Banded { perm: Vec<usize>, lu: BandedLu },
    Krylov,
}

/// Reusable solver for one square matrix.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    matrix: CsrMatrix,
    jacobi: Vec<f64>,
    factorization: Factorization,
    opts: SolverOptions,
    norm_inf: f64,
}

impl LinearSolver {
    pub fn new(m: &CsrMatrix, opts: SolverOptions) -> Result<Self> {
        opts.validate()?;
        if !m.is_square() {
            return Err(Error::NotSquare {
                rows: m.n_rows(),
                cols: m.n_cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::InvalidParameter(
                "matrix has non-finite entries".into(),
            ));
        }
        let jacobi = m
            .extract_diagonal()?
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let factorization = Self::try_banded(m).unwrap_or(Factorization::Krylov);
        let norm_inf = (0..m.n_rows())
            .map(|i| m.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(Self {
            matrix: m.clone(),
            jacobi,
            factorization,
            opts,
            norm_inf,
        })
    }

    fn try_banded(m: &CsrMatrix) -> Option<Factorization> {
        let n = m.n_rows();
        let (kl0, ku0) = m.bandwidth();
        let natural = kl0.max(ku0);
        let perm = reverse_cuthill_mckee(m);
        let reordered = m.permuted(&perm).ok()?;
        let (kl1, ku1) = reordered.bandwidth();
        let (perm, m, kl, ku) = if kl1.max(ku1) < natural {
            (perm, reordered, kl1, ku1)
        } else {
            ((0..n).collect(), m.clone(), kl0, ku0)
        };
        if n.checked_mul(2 * kl + ku + 1)? > MAX_BAND_ENTRIES {
            return None;
        }
        let lu = BandedLu::factor(&m, kl, ku)?;
        Some(Factorization::Banded { perm, lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Whether a direct factorization is in use.
    pub fn is_direct(&self) -> bool {
        matches!(self.factorization, Factorization::Banded { .. })
    }

    fn backward_stable(&self, b: &[f64], x: &[f64], r: &[f64]) -> bool {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let scale = self.norm_inf * inf(x) + inf(b);
        r.iter().all(|v| v.is_finite()) && inf(r) <= BACKWARD_TOL * scale
    }

    pub fn solve(&self, b: &[f64]) -> Result<DenseVector> {
        let n = self.dim();
        check_len("inner solve right-hand side", n, b.len())?;
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InnerSolverFailure {
                reason: "non-finite right-hand side".into(),
                residual: f64::NAN,
                required: 0.0,
            });
        }
        let bnorm = norm2(b);
        let required = self.opts.tol * bnorm.max(RESIDUAL_FLOOR);
        if bnorm == 0.0 {
            return Ok(DenseVector::zeros(n));
        }

        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut rnorm = bnorm;
        if let Factorization::Banded { perm, lu } = &self.factorization {
            for _ in 0..=REFINEMENT_STEPS {
                let mut pb: Vec<f64> = perm.iter().map(|&old| r[old]).collect();
                lu.solve_in_place(&mut pb);
                for (new, &old) in perm.iter().enumerate() {
                    x[old] += pb[new];
                }
                self.residual_into(b, &x, &mut r);
                let next = norm2(&r);
                if !next.is_finite() {
                    break;
                }
                let stalled = next > 0.5 * rnorm;
                rnorm = next;
                if rnorm <= required || stalled {
                    break;
                }
            }
            if rnorm <= required || self.backward_stable(b, &x, &r) {
                return Ok(x.into());
            }
            if !rnorm.is_finite() {
                x.iter_mut().for_each(|v| *v = 0.0);
                r.copy_from_slice(b);
                rnorm = bnorm;
            }
        }

        rnorm = self.gmres(b, &mut x, &mut r, rnorm, required);
        if rnorm <= required {
            Ok(x.into())
        } else {
            Err(Error::InnerSolverFailure {
                reason: format!("no convergence within {} iterations", self.opts.max_it),
                residual: rnorm,
                required,
            })
        }
    }

    fn residual_into(&self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.matrix.spmv_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    /// Right-preconditioned restarted GMRES; returns the true residual norm.
    /// `r` must hold `b - M x` on entry and holds it again on exit.
    fn gmres(&self, b: &[f64], x: &mut [f64], r: &mut [f64], mut rnorm: f64, required: f64) -> f64 {
        let n = self.dim();
        let m = GMRES_RESTART.min(n.max(1));
        let mut basis: Vec<Vec<f64>> = vec![vec![0.0; n]; m + 1];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        let mut z = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut used = 0;

        while rnorm > required && used < self.opts.max_it {
            let beta = rnorm;
            for (bi, ri) in basis[0].iter_mut().zip(r.iter()) {
                *bi = ri / beta;
            }
            g.iter_mut().for_each(|v| *v = 0.0);
            g[0] = beta;
            let mut k = 0;
            while k < m && used < self.opts.max_it {
                used += 1;
                for i in 0..n {
                    z[i] = self.jacobi[i] * basis[k][i];
                }
                self.matrix.spmv_into(&z, &mut w);
                for j in 0..=k {
                    let hij = dot(&w, &basis[j]);
                    h[j][k] = hij;
                    axpy(-hij, &basis[j], &mut w);
                }
                let hk1 = norm2(&w);
                h[k + 1][k] = hk1;
                if hk1 > 0.0 {
                    for (bi, wi) in basis[k + 1].iter_mut().zip(&w) {
                        *bi = wi / hk1;
                    }
                }
                for j in 0..k {
                    let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                    h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                    h[j][k] = t;
                }
                let denom = h[k][k].hypot(h[k + 1][k]);
                if denom == 0.0 {
                    break;
                }
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
                h[k][k] = denom;
                h[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                k += 1;
                if g[k].abs() <= 0.5 * required || hk1 == 0.0 {
                    break;
                }
            }
            if k == 0 {
                break;
            }
            let mut y = vec![0.0; k];
            for i in (0..k).rev() {
                let mut acc = g[i];
                for j in i + 1..k {
                    acc -= h[i][j] * y[j];
                }
                y[i] = acc / h[i][i];
            }
            z.iter_mut().for_each(|v| *v = 0.0);
            for (j, yj) in y.iter().enumerate() {
                axpy(*yj, &basis[j], &mut z);
            }
            for i in 0..n {
                x[i] += self.jacobi[i] * z[i];
            }
            self.residual_into(b, x, r);
            let next = norm2(r);
            if !next.is_finite() {
                return f64::INFINITY;
            }
            if next >= rnorm && k < m {
                rnorm = next;
                break;
            }
            rnorm = next;
        }
        rnorm
    }
}

/// One-shot solve of `M x = b` meeting the relative residual contract.
pub fn inner_solve(m: &CsrMatrix, b: &[f64], tol: f64, max_it: usize) -> Result<DenseVector> {
    LinearSolver::new(m, SolverOptions { tol, max_it })?.solve(b)
}
