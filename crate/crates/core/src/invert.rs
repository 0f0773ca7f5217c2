//! Regularized recovery of pixel values from Fourier samples.
//!
//! Both methods reduce to quadratic problems
//! min ‖Aq − b‖² + λ·qᵀ(ΓᵀWΓ)q over real vectors, where [A | b] stacks the
//! real and imaginary parts of [E | F]. When there are fewer pixels than data
//! rows the normal equations are factored directly; otherwise the dual form
//! q = L⁻¹Aᵀ(λI + AL⁻¹Aᵀ)⁻¹b with L = ΓᵀWΓ is used, which only needs a
//! dense factorization of data-space size.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt as SparseLlt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier_op::{FourierData, ForwardFourierOperator, PixelGrid};
use crate::par::{map_indexed, Execution};
use crate::potentials::PotentialField;

/// Target relative residual of the regularized normal equations.
const NORMAL_TOL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Tikhonov,
    Tv,
}

/// Real-q mode stacks real and imaginary parts; complex-q mode solves for
/// real and imaginary pixel values jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    #[default]
    Real,
    Complex,
}

/// Γ = [Id; D_x; D_y] on the kept pixels. Each difference row is
/// (q_j − q_i)/h for a pair (i, j) of kept cells adjacent along x or y.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerStack {
    pub n_pixels: usize,
    pub h: f64,
    pub dx: Vec<(usize, usize)>,
    pub dy: Vec<(usize, usize)>,
}

impl RegularizerStack {
    pub fn new(pg: &PixelGrid) -> Self {
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for (i, &(m, n)) in pg.cells.iter().enumerate() {
            if let Some(j) = pg.position_of(m + 1, n) {
                dx.push((i, j));
            }
            if let Some(j) = pg.position_of(m, n + 1) {
                dy.push((i, j));
            }
        }
        RegularizerStack { n_pixels: pg.len(), h: pg.h, dx, dy }
    }

    pub fn n_rows(&self) -> usize {
        self.n_pixels + self.dx.len() + self.dy.len()
    }

    fn pairs(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.dx.iter().chain(&self.dy)
    }

    /// Γq = [q; D_x q; D_y q].
    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        let mut out = q.to_vec();
        out.extend(self.pairs().map(|&(i, j)| (q[j] - q[i]) / self.h));
        out
    }

    /// Γ as a sparse matrix.
    pub fn to_sparse(&self) -> SparseColMat<usize, f64> {
        let mut t: Vec<Triplet<usize, usize, f64>> = (0..self.n_pixels).map(|i| Triplet::new(i, i, 1.0)).collect();
        for (r, &(i, j)) in self.pairs().enumerate() {
            t.push(Triplet::new(self.n_pixels + r, i, -1.0 / self.h));
            t.push(Triplet::new(self.n_pixels + r, j, 1.0 / self.h));
        }
        SparseColMat::try_new_from_triplets(self.n_rows(), self.n_pixels, &t).expect("valid triplets")
    }

    /// ΓᵀWΓ, block-diagonal over `blocks` copies of the pixel vector. `weights`
    /// has `blocks·n_rows` entries (all ones when absent).
    pub fn gram(&self, weights: Option<&[f64]>, blocks: usize) -> SparseColMat<usize, f64> {
        let n = self.n_pixels;
        let rows = self.n_rows();
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut t = Vec::with_capacity(blocks * (n + 4 * (rows - n)));
        for b in 0..blocks {
            let w = |r: usize| weights.map_or(1.0, |w| w[b * rows + r]);
            let off = b * n;
            for i in 0..n {
                t.push(Triplet::new(off + i, off + i, w(i)));
            }
            for (r, &(i, j)) in self.pairs().enumerate() {
                let c = w(n + r) * inv_h2;
                t.push(Triplet::new(off + i, off + i, c));
                t.push(Triplet::new(off + j, off + j, c));
                t.push(Triplet::new(off + i, off + j, -c));
                t.push(Triplet::new(off + j, off + i, -c));
            }
        }
        SparseColMat::try_new_from_triplets(blocks * n, blocks * n, &t).expect("valid triplets")
    }
}

/// One outer iteration of the TV solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvIterate {
    pub objective: f64,
    pub relative_change: f64,
    pub normal_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub q_pixels: Vec<f64>,
    /// Imaginary part (complex-q mode only).
    pub q_imag: Option<Vec<f64>>,
    pub lambda: f64,
    pub method: Method,
    /// ‖Eq − F‖₂.
    pub residual: f64,
    /// ‖Γq‖₂² for Tikhonov, Σ√((Γq)ᵢ² + β²) for TV.
    pub regularizer: f64,
    /// Relative residual of the last regularized normal-equations solve.
    pub normal_residual: f64,
    pub beta: Option<f64>,
    pub iterations: Vec<TvIterate>,
}

/// Scalars of a reconstruction without the pixel values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMeta {
    pub method: Method,
    pub lambda: f64,
    pub residual: f64,
    pub regularizer: f64,
    pub normal_residual: f64,
    pub beta: Option<f64>,
    pub outer_iterations: usize,
}

impl ReconstructionResult {
    pub fn metadata(&self) -> ReconstructionMeta {
        ReconstructionMeta {
            method: self.method,
            lambda: self.lambda,
            residual: self.residual,
            regularizer: self.regularizer,
            normal_residual: self.normal_residual,
            beta: self.beta,
            outer_iterations: self.iterations.len(),
        }
    }

    /// Grid header lines, then one `m n value` row per kept pixel (plus the
    /// imaginary part in complex-q mode).
    pub fn to_pixel_table(&self, pg: &PixelGrid, header: &str) -> String {
        let mut out = String::new();
        for line in header.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# grid nx {} ny {} x_min {:e} y_min {:e} h {:e}", pg.nx, pg.ny, pg.x_min, pg.y_min, pg.h);
        for (k, &(m, n)) in pg.cells.iter().enumerate() {
            match &self.q_imag {
                Some(im) => writeln!(out, "{m} {n} {:e} {:e}", self.q_pixels[k], im[k]),
                None => writeln!(out, "{m} {n} {:e}", self.q_pixels[k]),
            }
            .expect("write to string");
        }
        out
    }
}

/// Real least-squares data: ‖Eq − F‖² = ‖Aq − b‖² + const over the admissible q.
struct RealSystem {
    a: Mat<f64>,
    b: Vec<f64>,
    blocks: usize,
}

fn check_data(op: &ForwardFourierOperator, f: &FourierData) -> Result<()> {
    if f.len() != op.nrows() {
        return Err(Error::Shape(format!("{} Fourier samples for an operator with {} rows", f.len(), op.nrows())));
    }
    for (k, (a, b)) in op.xis.iter().zip(&f.xis).enumerate() {
        let scale = 1.0 + a[0].hypot(a[1]);
        if (a[0] - b[0]).abs() > 1e-9 * scale || (a[1] - b[1]).abs() > 1e-9 * scale {
            return Err(Error::Shape(format!("frequency {k} of the data {b:?} differs from the operator's {a:?}")));
        }
    }
    Ok(())
}

/// For real q, rows at ξ and −ξ carry the same information
/// (E_{−ξ}q = conj(E_ξ q)); groups of such rows are merged exactly:
/// Σⱼ|E_ξ q − dⱼ|² = c·|E_ξ q − mean(d)|² + const.
fn frequency_groups(xis: &[[f64; 2]]) -> Vec<Vec<(usize, bool)>> {
    let mut groups: Vec<Vec<(usize, bool)>> = Vec::new();
    for (k, xi) in xis.iter().enumerate() {
        let tol = 1e-9 * (1.0 + xi[0].hypot(xi[1]));
        let found = groups.iter_mut().find_map(|g| {
            let r = xis[g[0].0];
            if (r[0] - xi[0]).abs() <= tol && (r[1] - xi[1]).abs() <= tol {
                Some((g, false))
            } else if (r[0] + xi[0]).abs() <= tol && (r[1] + xi[1]).abs() <= tol {
                Some((g, true))
            } else {
                None
            }
        });
        match found {
            Some((g, conj)) => g.push((k, conj)),
            None => groups.push(vec![(k, false)]),
        }
    }
    groups
}

fn real_system(op: &ForwardFourierOperator, f: &FourierData, mode: QMode) -> Result<RealSystem> {
    check_data(op, f)?;
    let n = op.ncols();
    match mode {
        QMode::Real => {
            let groups = frequency_groups(&op.xis);
            let m = 2 * groups.len();
            let mut a = Mat::<f64>::zeros(m, n);
            let mut b = vec![0.0; m];
            for (g, members) in groups.iter().enumerate() {
                let c = members.len() as f64;
                let row = op.row(members[0].0);
                let d: Complex64 = members.iter().map(|&(k, conj)| if conj { f.values[k].conj() } else { f.values[k] }).sum::<Complex64>() / c;
                let s = c.sqrt();
                for (i, e) in row.iter().enumerate() {
                    a[(2 * g, i)] = s * e.re;
                    a[(2 * g + 1, i)] = s * e.im;
                }
                b[2 * g] = s * d.re;
                b[2 * g + 1] = s * d.im;
            }
            Ok(RealSystem { a, b, blocks: 1 })
        }
        QMode::Complex => {
            let k = op.nrows();
            let mut a = Mat::<f64>::zeros(2 * k, 2 * n);
            let mut b = vec![0.0; 2 * k];
            for r in 0..k {
                for (i, e) in op.row(r).iter().enumerate() {
                    a[(r, i)] = e.re;
                    a[(r, n + i)] = -e.im;
                    a[(k + r, i)] = e.im;
                    a[(k + r, n + i)] = e.re;
                }
                b[r] = f.values[r].re;
                b[k + r] = f.values[r].im;
            }
            Ok(RealSystem { a, b, blocks: 2 })
        }
    }
}

fn col(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sparse_matvec(l: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let (sym, vals) = l.parts();
    let mut out = vec![0.0; l.nrows()];
    for c in 0..l.ncols() {
        for idx in sym.col_ptr()[c]..sym.col_ptr()[c + 1] {
            out[sym.row_idx()[idx]] += vals[idx] * x[c];
        }
    }
    out
}

enum Factored {
    /// AᵀA and L densely; each λ factors AᵀA + λL.
    Primal { ata: Mat<f64>, l: Mat<f64> },
    /// L⁻¹ (sparse), Y = L⁻¹Aᵀ and G = AY; each λ factors λI + G.
    Dual { l_fact: SparseLlt<usize, f64>, y: Mat<f64>, g: Mat<f64> },
}

/// Solver for (AᵀA + λL)q = Aᵀb at one or several λ with a fixed L.
struct QuadraticSolver<'a> {
    sys: &'a RealSystem,
    l: SparseColMat<usize, f64>,
    atb: Vec<f64>,
    factored: Factored,
}

impl<'a> QuadraticSolver<'a> {
    fn new(sys: &'a RealSystem, l: SparseColMat<usize, f64>) -> Result<Self> {
        let (m, n) = (sys.a.nrows(), sys.a.ncols());
        let atb = to_vec(&(sys.a.transpose() * col(&sys.b)));
        let factored = if n <= m {
            Factored::Primal { ata: sys.a.transpose() * &sys.a, l: l.to_dense() }
        } else {
            let sym = SymbolicLlt::try_new(l.symbolic(), Side::Lower)
                .map_err(|e| Error::LinearSolve(format!("symbolic Cholesky of the regularizer: {e:?}")))?;
            let l_fact = SparseLlt::try_new_with_symbolic(sym, l.as_ref(), Side::Lower)
                .map_err(|e| Error::LinearSolve(format!("Cholesky of the regularizer: {e:?}")))?;
            let mut y = sys.a.transpose().to_owned();
            l_fact.solve_in_place(y.as_mut());
            let mut g = &sys.a * &y;
            for i in 0..m {
                for j in 0..i {
                    let s = 0.5 * (g[(i, j)] + g[(j, i)]);
                    g[(i, j)] = s;
                    g[(j, i)] = s;
                }
            }
            Factored::Dual { l_fact, y, g }
        };
        Ok(QuadraticSolver { sys, l, atb, factored })
    }

    /// (AᵀA + λL)q.
    fn apply(&self, lambda: f64, q: &[f64]) -> Vec<f64> {
        let aq = &self.sys.a * col(q);
        let ataq = to_vec(&(self.sys.a.transpose() * aq));
        let lq = sparse_matvec(&self.l, q);
        ataq.iter().zip(&lq).map(|(x, y)| x + lambda * y).collect()
    }

    /// q with relative normal-equations residual, refined until ≤ NORMAL_TOL
    /// or no longer improving.
    fn solve(&self, lambda: f64) -> Result<(Vec<f64>, f64)> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("regularization parameter must be positive, got {lambda}")));
        }
        let inverse = self.inverse(lambda)?;
        let scale = norm(&self.atb);
        if scale == 0.0 {
            return Ok((vec![0.0; self.atb.len()], 0.0));
        }
        let mut q = inverse(&self.atb);
        let mut r: Vec<f64> = self.atb.iter().zip(self.apply(lambda, &q)).map(|(b, v)| b - v).collect();
        let mut rel = norm(&r) / scale;
        for _ in 0..MAX_REFINEMENTS {
            if rel <= NORMAL_TOL {
                break;
            }
            let dq = inverse(&r);
            let trial: Vec<f64> = q.iter().zip(&dq).map(|(a, b)| a + b).collect();
            let tr: Vec<f64> = self.atb.iter().zip(self.apply(lambda, &trial)).map(|(b, v)| b - v).collect();
            let trel = norm(&tr) / scale;
            if !(trel < rel) {
                break;
            }
            (q, r, rel) = (trial, tr, trel);
        }
        Ok((q, rel))
    }

    /// c ↦ (AᵀA + λL)⁻¹c.
    fn inverse(&self, lambda: f64) -> Result<Box<dyn Fn(&[f64]) -> Vec<f64> + '_>> {
        let singular = |e| Error::LinearSolve(format!("regularized system is not positive definite at λ = {lambda}: {e:?}"));
        match &self.factored {
            Factored::Primal { ata, l } => {
                let h = ata + l * faer::Scale(lambda);
                let chol = faer::linalg::solvers::Llt::new(h.as_ref(), Side::Lower).map_err(singular)?;
                Ok(Box::new(move |c: &[f64]| to_vec(&chol.solve(col(c)))))
            }
            Factored::Dual { l_fact, y, g } => {
                let mut s = g.clone();
                for i in 0..s.nrows() {
                    s[(i, i)] += lambda;
                }
                let chol = faer::linalg::solvers::Llt::new(s.as_ref(), Side::Lower).map_err(singular)?;
                let a = &self.sys.a;
                // (AᵀA + λL)⁻¹c = (L⁻¹c − Y(λI + G)⁻¹AL⁻¹c)/λ
                Ok(Box::new(move |c: &[f64]| {
                    let mut lc = col(c);
                    l_fact.solve_in_place(lc.as_mut());
                    let t = chol.solve(a * &lc);
                    let corr = y * t;
                    (0..c.len()).map(|i| (lc[(i, 0)] - corr[(i, 0)]) / lambda).collect()
                }))
            }
        }
    }
}

/// ‖Eq − F‖₂ for the stacked real (and optionally imaginary) pixel values.
fn fit_residual(op: &ForwardFourierOperator, f: &FourierData, q: &[f64], mode: QMode) -> Result<f64> {
    let n = op.ncols();
    let qc: Vec<Complex64> = match mode {
        QMode::Real => q.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        QMode::Complex => (0..n).map(|i| Complex64::new(q[i], q[n + i])).collect(),
    };
    let eq = op.apply(&qc)?;
    Ok(eq.values.iter().zip(&f.values).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
}

fn stacked_gamma(stack: &RegularizerStack, q: &[f64], blocks: usize) -> Vec<f64> {
    let n = stack.n_pixels;
    (0..blocks).flat_map(|b| stack.apply(&q[b * n..(b + 1) * n])).collect()
}

fn split(q: Vec<f64>, n: usize, mode: QMode) -> (Vec<f64>, Option<Vec<f64>>) {
    match mode {
        QMode::Real => (q, None),
        QMode::Complex => (q[..n].to_vec(), Some(q[n..].to_vec())),
    }
}

fn check_stack(op: &ForwardFourierOperator, stack: &RegularizerStack) -> Result<()> {
    if stack.n_pixels != op.ncols() {
        return Err(Error::Shape(format!("regularizer on {} pixels, operator on {}", stack.n_pixels, op.ncols())));
    }
    Ok(())
}

/// argmin ‖Eq − F‖₂² + λ‖Γq‖₂² over real pixel vectors.
pub fn tikhonov_solve(op: &ForwardFourierOperator, f: &FourierData, lambda: f64, stack: &RegularizerStack) -> Result<ReconstructionResult> {
    tikhonov_solve_mode(op, f, lambda, stack, QMode::Real)
}

pub fn tikhonov_solve_mode(
    op: &ForwardFourierOperator,
    f: &FourierData,
    lambda: f64,
    stack: &RegularizerStack,
    mode: QMode,
) -> Result<ReconstructionResult> {
    Ok(tikhonov_ladder(op, f, &[lambda], stack, mode, Execution::Sequential)?.remove(0))
}

/// Tikhonov reconstructions for each λ, sharing one factorization of the
/// λ-independent parts.
pub fn tikhonov_ladder(
    op: &ForwardFourierOperator,
    f: &FourierData,
    lambdas: &[f64],
    stack: &RegularizerStack,
    mode: QMode,
    exec: Execution,
) -> Result<Vec<ReconstructionResult>> {
    check_stack(op, stack)?;
    let sys = real_system(op, f, mode)?;
    let solver = QuadraticSolver::new(&sys, stack.gram(None, sys.blocks))?;
    let results = map_indexed(exec, lambdas.len(), |k| -> Result<ReconstructionResult> {
        let lambda = lambdas[k];
        let (q, normal_residual) = solver.solve(lambda)?;
        let regularizer = stacked_gamma(stack, &q, sys.blocks).iter().map(|v| v * v).sum();
        let residual = fit_residual(op, f, &q, mode)?;
        let (q_pixels, q_imag) = split(q, stack.n_pixels, mode);
        Ok(ReconstructionResult {
            q_pixels,
            q_imag,
            lambda,
            method: Method::Tikhonov,
            residual,
            regularizer,
            normal_residual,
            beta: None,
            iterations: Vec::new(),
        })
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TvOptions {
    /// Smoothing of |t| as √(t² + β²); `None` uses 10⁻⁶ times the dynamic
    /// range of the starting iterate.
    #[serde(default)]
    pub beta: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for TvOptions {
    fn default() -> Self {
        TvOptions { beta: None, max_iter: 100, tol: 1e-5 }
    }
}

/// Relative slack allowed in the per-iteration descent check.
const DESCENT_SLACK: f64 = 1e-9;

/// argmin ‖Eq − F‖₂² + λ Σᵢ √((Γq)ᵢ² + β²) by lagged diffusivity: each outer
/// step minimizes the quadratic majorizer ‖Eq − F‖² + (λ/2)Σᵢ wᵢ(Γq)ᵢ² with
/// wᵢ = 1/√((Γq_k)ᵢ² + β²), so the objective cannot increase.
pub fn tv_solve(
    op: &ForwardFourierOperator,
    f: &FourierData,
    lambda: f64,
    stack: &RegularizerStack,
    opts: &TvOptions,
) -> Result<ReconstructionResult> {
    tv_solve_mode(op, f, lambda, stack, opts, QMode::Real)
}

pub fn tv_solve_mode(
    op: &ForwardFourierOperator,
    f: &FourierData,
    lambda: f64,
    stack: &RegularizerStack,
    opts: &TvOptions,
    mode: QMode,
) -> Result<ReconstructionResult> {
    check_stack(op, stack)?;
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Error::Config("TV needs a positive iteration cap and tolerance".into()));
    }
    let sys = real_system(op, f, mode)?;
    let blocks = sys.blocks;
    let (mut q, mut normal_residual) = QuadraticSolver::new(&sys, stack.gram(None, blocks))?.solve(0.5 * lambda)?;
    let beta = match opts.beta {
        Some(b) if b > 0.0 => b,
        Some(b) => return Err(Error::Config(format!("TV smoothing must be positive, got {b}"))),
        None => {
            let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let range = hi - lo;
            1e-6 * if range > 0.0 { range } else { 1.0 }
        }
    };
    let tv = |q: &[f64]| stacked_gamma(stack, q, blocks).iter().map(|t| (t * t + beta * beta).sqrt()).sum::<f64>();
    let objective = |q: &[f64]| -> Result<f64> { Ok(fit_residual(op, f, q, mode)?.powi(2) + lambda * tv(q)) };
    let mut current = objective(&q)?;
    let mut history = Vec::new();
    for _ in 0..opts.max_iter {
        let weights: Vec<f64> = stacked_gamma(stack, &q, blocks).iter().map(|t| 1.0 / (t * t + beta * beta).sqrt()).collect();
        let solver = QuadraticSolver::new(&sys, stack.gram(Some(&weights), blocks))?;
        let (next, nr) = solver.solve(0.5 * lambda)?;
        let value = objective(&next)?;
        let diff: Vec<f64> = next.iter().zip(&q).map(|(a, b)| a - b).collect();
        let relative_change = norm(&diff) / norm(&next).max(f64::MIN_POSITIVE);
        history.push(TvIterate { objective: value, relative_change, normal_residual: nr });
        if value > current * (1.0 + DESCENT_SLACK) {
            return Err(Error::Convergence {
                message: format!("TV objective increased from {current:e} to {value:e}"),
                history: history.iter().map(|h| h.objective).collect(),
            });
        }
        q = next;
        normal_residual = nr;
        current = value;
        if relative_change <= opts.tol {
            break;
        }
    }
    let residual = fit_residual(op, f, &q, mode)?;
    let regularizer = tv(&q);
    let (q_pixels, q_imag) = split(q, stack.n_pixels, mode);
    Ok(ReconstructionResult {
        q_pixels,
        q_imag,
        lambda,
        method: Method::Tv,
        residual,
        regularizer,
        normal_residual,
        beta: Some(beta),
        iterations: history,
    })
}

/// Absolute and relative discrete L² errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2Error {
    pub absolute: f64,
    pub relative: f64,
}

/// ‖q_rec − q_true(centers)‖₂·h.
pub fn l2_error(q_rec: &ReconstructionResult, q_true: &PotentialField, pg: &PixelGrid) -> Result<f64> {
    Ok(l2_errors(&q_rec.q_pixels, q_true, pg)?.absolute)
}

pub fn l2_errors(q: &[f64], q_true: &PotentialField, pg: &PixelGrid) -> Result<L2Error> {
    if q.len() != pg.len() {
        return Err(Error::Shape(format!("{} pixel values for a grid of {}", q.len(), pg.len())));
    }
    let truth = q_true.sample_on(pg);
    let diff: f64 = q.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let absolute = diff * pg.h;
    let reference = norm(&truth) * pg.h;
    Ok(L2Error { absolute, relative: if reference > 0.0 { absolute / reference } else { f64::INFINITY } })
}
