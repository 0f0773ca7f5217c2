//! Lagrange finite elements on the disk mesh and the Newton solver for
//! −Δu + q·uᵖ = 0 with complex Dirichlet data.
//!
//! Boundary dofs are eliminated; the unknowns are the interior coefficients.
//! The interior stiffness matrix K is real SPD and is factored once per
//! space. Newton steps solve with the Jacobian K + p·q·uᵖ⁻¹·M either by a
//! fresh sparse LU or by GMRES preconditioned with the K factorization.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions};
use crate::mesh::{boundary_edges, DiskMesh};
use crate::potentials::PotentialField;
use crate::quadrature::{gauss_legendre_interval, TriangleRule};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Krylov residual accepted when GMRES stagnates short of its 1e-12 target
/// (the rounding floor of K grows with mesh refinement).
const GMRES_ACCEPT: f64 = 1e-10;

/// Lagrange basis on the reference triangle, with nodes on the barycentric
/// lattice of step 1/k. Local node 0, 1, 2 are the vertices.
#[derive(Debug, Clone)]
struct ReferenceBasis {
    degree: usize,
    /// Integer barycentric coordinates (l0, l1, l2), l0 + l1 + l2 = k.
    lattice: Vec<[usize; 3]>,
}

impl ReferenceBasis {
    fn new(degree: usize) -> Self {
        let k = degree;
        let mut corners = vec![[k, 0, 0], [0, k, 0], [0, 0, k]];
        let mut edges = Vec::new();
        let mut interior = Vec::new();
        for l1 in 0..=k {
            for l2 in 0..=k - l1 {
                let l = [k - l1 - l2, l1, l2];
                match l.iter().filter(|&&v| v == 0).count() {
                    2 => {}
                    1 => edges.push(l),
                    _ => interior.push(l),
                }
            }
        }
        corners.extend(edges);
        corners.extend(interior);
        ReferenceBasis { degree, lattice: corners }
    }

    fn len(&self) -> usize {
        self.lattice.len()
    }

    /// Values and reference gradients (d/ds, d/dt) at (s, t).
    fn eval(&self, s: f64, t: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
        let k = self.degree as f64;
        let lam = [1.0 - s - t, s, t];
        // P_m(λ) = Π_{j<m} (kλ − j)/(j + 1) and its derivative.
        let factor = |m: usize, x: f64| -> (f64, f64) {
            let mut val = 1.0;
            let mut der = 0.0;
            for j in 0..m {
                let a = (k * x - j as f64) / (j + 1) as f64;
                let da = k / (j + 1) as f64;
                der = der * a + val * da;
                val *= a;
            }
            (val, der)
        };
        let mut values = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for l in &self.lattice {
            let f: Vec<(f64, f64)> = (0..3).map(|v| factor(l[v], lam[v])).collect();
            let value = f[0].0 * f[1].0 * f[2].0;
            let d = [f[0].1 * f[1].0 * f[2].0, f[0].0 * f[1].1 * f[2].0, f[0].0 * f[1].0 * f[2].1];
            values.push(value);
            grads.push([d[1] - d[0], d[2] - d[0]]);
        }
        (values, grads)
    }
}

/// Affine element map x = v0 + B (s, t).
#[derive(Debug, Clone, Copy)]
struct Geometry {
    origin: [f64; 2],
    b: [[f64; 2]; 2],
    /// B⁻ᵀ, maps reference gradients to physical ones.
    binv_t: [[f64; 2]; 2],
    det: f64,
}

impl Geometry {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let b = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        let binv_t = [[b[1][1] / det, -b[1][0] / det], [-b[0][1] / det, b[0][0] / det]];
        Geometry { origin: p[0], b, binv_t, det }
    }

    fn map(&self, s: f64, t: f64) -> [f64; 2] {
        [
            self.origin[0] + self.b[0][0] * s + self.b[0][1] * t,
            self.origin[1] + self.b[1][0] * s + self.b[1][1] * t,
        ]
    }

    fn inverse(&self, x: [f64; 2]) -> (f64, f64) {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        // (s, t) = B⁻¹ d, and B⁻¹ is the transpose of binv_t.
        (
            self.binv_t[0][0] * d[0] + self.binv_t[1][0] * d[1],
            self.binv_t[0][1] * d[0] + self.binv_t[1][1] * d[1],
        )
    }

    fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.binv_t[0][0] * g[0] + self.binv_t[0][1] * g[1],
            self.binv_t[1][0] * g[0] + self.binv_t[1][1] * g[1],
        ]
    }
}

/// Whether a dof is an unknown or carries Dirichlet data, with its position
/// in the corresponding list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofSlot {
    Interior(usize),
    Boundary(usize),
}

/// Lagrange P_k space over a disk mesh.
pub struct FESpace {
    pub mesh: DiskMesh,
    pub degree: usize,
    pub dof_coordinates: Vec<[f64; 2]>,
    pub interior_dofs: Vec<usize>,
    pub boundary_dofs: Vec<usize>,
    /// Polynomial degree integrated exactly by the element rule.
    pub quadrature_order: usize,
    slots: Vec<DofSlot>,
    basis: ReferenceBasis,
    rule: TriangleRule,
    /// φ_i at each quadrature point, `[qp * n_local + i]`.
    phi: Vec<f64>,
    cell_dofs: Vec<usize>,
    geometry: Vec<Geometry>,
    /// Element stiffness matrices, `[cell][i * n_local + j]`.
    elem_stiffness: Vec<f64>,
    /// Interior-interior pattern (CSC, sorted rows).
    pattern: SymbolicSparseColMat<usize>,
    /// For each cell and local pair (i, j), the slot of K_II holding it, or usize::MAX.
    elem_slots: Vec<usize>,
    k_values: Vec<f64>,
    k_factor: Llt<usize, f64>,
    lu_symbolic: OnceLock<SymbolicLu<usize>>,
}

impl fmt::Debug for FESpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FESpace")
            .field("degree", &self.degree)
            .field("n_dofs", &self.n_dofs())
            .field("n_interior", &self.interior_dofs.len())
            .field("n_cells", &self.n_cells())
            .field("quadrature_order", &self.quadrature_order)
            .finish()
    }
}

impl FESpace {
    pub fn new(mesh: DiskMesh, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Config("element degree must be at least 1".into()));
        }
        mesh.validate()?;
        let basis = ReferenceBasis::new(degree);
        let nl = basis.len();
        let quadrature_order = 2 * degree + 2;
        let rule = TriangleRule::with_exactness(quadrature_order);
        let mut phi = Vec::with_capacity(rule.len() * nl);
        let mut dphi = Vec::with_capacity(rule.len() * nl);
        for p in &rule.points {
            let (v, g) = basis.eval(p[0], p[1]);
            phi.extend(v);
            dphi.extend(g);
        }

        // Global numbering: vertices, then k−1 dofs per edge, then cell interiors.
        let nv = mesh.n_vertices();
        let mut edge_id: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_count: Vec<usize> = Vec::new();
        for t in &mesh.triangles {
            for e in 0..3 {
                let key = ordered(t[e], t[(e + 1) % 3]);
                let next = edge_id.len();
                let id = *edge_id.entry(key).or_insert(next);
                if id == edge_count.len() {
                    edge_count.push(0);
                }
                edge_count[id] += 1;
            }
        }
        let per_edge = degree - 1;
        let per_cell = nl - 3 - 3 * per_edge;
        let edge_base = nv;
        let cell_base = nv + edge_id.len() * per_edge;
        let n_dofs = cell_base + mesh.n_triangles() * per_cell;

        let mut cell_dofs = Vec::with_capacity(mesh.n_triangles() * nl);
        let mut dof_coordinates = vec![[0.0; 2]; n_dofs];
        let mut on_boundary = vec![false; n_dofs];
        let mut geometry = Vec::with_capacity(mesh.n_triangles());
        let k = degree as f64;
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let geo = Geometry::new([mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]]);
            let mut interior_seen = 0;
            for l in &basis.lattice {
                let zeros: Vec<usize> = (0..3).filter(|&v| l[v] == 0).collect();
                let dof = match zeros.len() {
                    2 => t[(0..3).find(|&v| l[v] == degree).unwrap()],
                    1 => {
                        let (a, b) = match zeros[0] {
                            0 => (1, 2),
                            1 => (0, 2),
                            _ => (0, 1),
                        };
                        let (ga, gb) = (t[a], t[b]);
                        let id = edge_id[&ordered(ga, gb)];
                        // Steps from the lower-numbered endpoint.
                        let pos = if ga < gb { l[b] } else { l[a] };
                        let dof = edge_base + id * per_edge + pos - 1;
                        if edge_count[id] == 1 {
                            on_boundary[dof] = true;
                        }
                        dof
                    }
                    _ => {
                        interior_seen += 1;
                        cell_base + ti * per_cell + interior_seen - 1
                    }
                };
                dof_coordinates[dof] = geo.map(l[1] as f64 / k, l[2] as f64 / k);
                cell_dofs.push(dof);
            }
            geometry.push(geo);
        }
        for v in 0..nv {
            dof_coordinates[v] = mesh.vertices[v];
        }
        for &v in &mesh.boundary_vertices {
            on_boundary[v] = true;
        }

        let mut slots = Vec::with_capacity(n_dofs);
        let mut interior_dofs = Vec::new();
        let mut boundary_dofs = Vec::new();
        for (d, &b) in on_boundary.iter().enumerate() {
            if b {
                slots.push(DofSlot::Boundary(boundary_dofs.len()));
                boundary_dofs.push(d);
            } else {
                slots.push(DofSlot::Interior(interior_dofs.len()));
                interior_dofs.push(d);
            }
        }
        let n_int = interior_dofs.len();
        if n_int == 0 {
            return Err(Error::Config("mesh has no interior degrees of freedom".into()));
        }

        // Element stiffness.
        let nq = rule.len();
        let mut elem_stiffness = vec![0.0; mesh.n_triangles() * nl * nl];
        for (ti, geo) in geometry.iter().enumerate() {
            let ke = &mut elem_stiffness[ti * nl * nl..(ti + 1) * nl * nl];
            for q in 0..nq {
                let w = rule.weights[q] * geo.det;
                let grads: Vec<[f64; 2]> = (0..nl).map(|i| geo.gradient(dphi[q * nl + i])).collect();
                for i in 0..nl {
                    for j in 0..nl {
                        ke[i * nl + j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                    }
                }
            }
        }

        // Interior pattern and slot maps.
        let interior_of = |d: usize| match slots[d] {
            DofSlot::Interior(i) => Some(i),
            DofSlot::Boundary(_) => None,
        };
        let mut columns: Vec<Vec<usize>> = vec![Vec::new(); n_int];
        for cell in cell_dofs.chunks(nl) {
            for &dj in cell {
                if let Some(j) = interior_of(dj) {
                    for &di in cell {
                        if let Some(i) = interior_of(di) {
                            columns[j].push(i);
                        }
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n_int + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in columns.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        drop(columns);
        let slot_of = |i: usize, j: usize| -> usize {
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            col_ptr[j] + rows.binary_search(&i).expect("pattern covers element couplings")
        };
        let mut elem_slots = vec![usize::MAX; mesh.n_triangles() * nl * nl];
        let mut k_values = vec![0.0; row_idx.len()];
        for (ti, cell) in cell_dofs.chunks(nl).enumerate() {
            for (a, &di) in cell.iter().enumerate() {
                let Some(i) = interior_of(di) else { continue };
                for (b, &dj) in cell.iter().enumerate() {
                    let Some(j) = interior_of(dj) else { continue };
                    let s = slot_of(i, j);
                    elem_slots[(ti * nl + a) * nl + b] = s;
                    k_values[s] += elem_stiffness[(ti * nl + a) * nl + b];
                }
            }
        }
        let pattern = SymbolicSparseColMat::new_checked(n_int, n_int, col_ptr, None, row_idx);
        let k_factor = {
            let sym = SymbolicLlt::try_new(pattern.as_ref(), Side::Lower)
                .map_err(|e| Error::LinearSolve(format!("symbolic Cholesky of K: {e:?}")))?;
            Llt::try_new_with_symbolic(sym, SparseColMatRef::new(pattern.as_ref(), &k_values), Side::Lower)
                .map_err(|e| Error::LinearSolve(format!("Cholesky of K: {e:?}")))?
        };

        Ok(FESpace {
            mesh,
            degree,
            dof_coordinates,
            interior_dofs,
            boundary_dofs,
            quadrature_order,
            slots,
            basis,
            rule,
            phi,
            cell_dofs,
            geometry,
            elem_stiffness,
            pattern,
            elem_slots,
            k_values,
            k_factor,
            lu_symbolic: OnceLock::new(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coordinates.len()
    }

    pub fn n_interior(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn n_cells(&self) -> usize {
        self.geometry.len()
    }

    pub fn dofs_per_cell(&self) -> usize {
        self.basis.len()
    }

    pub fn slot(&self, dof: usize) -> DofSlot {
        self.slots[dof]
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let nl = self.basis.len();
        &self.cell_dofs[cell * nl..(cell + 1) * nl]
    }

    fn cell_quadrature_points(&self, cell: usize) -> impl Iterator<Item = [f64; 2]> + '_ {
        let geo = self.geometry[cell];
        self.rule.points.iter().map(move |p| geo.map(p[0], p[1]))
    }

    /// Values of the nodal basis of `cell` at physical point `x` (used by tests).
    pub fn basis_at(&self, cell: usize, x: [f64; 2]) -> Vec<f64> {
        let (s, t) = self.geometry[cell].inverse(x);
        self.basis.eval(s, t).0
    }

    /// Interpolant of `f` at the dof coordinates.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> Complex64) -> FESolution {
        FESolution { coefficients: self.dof_coordinates.iter().map(|&x| f(x)).collect() }
    }

    /// Values of `f` at the boundary dofs, in `boundary_dofs` order.
    pub fn boundary_values(&self, f: impl Fn([f64; 2]) -> Complex64) -> Vec<Complex64> {
        self.boundary_dofs.iter().map(|&d| f(self.dof_coordinates[d])).collect()
    }

    fn check(&self, u: &FESolution) -> Result<()> {
        if u.coefficients.len() != self.n_dofs() {
            return Err(Error::Shape(format!(
                "solution has {} coefficients, space has {} dofs",
                u.coefficients.len(),
                self.n_dofs()
            )));
        }
        Ok(())
    }

    /// u at the quadrature points of `cell`.
    fn values_at_quadrature(&self, cell: usize, coeffs: &[Complex64], out: &mut [Complex64]) {
        let nl = self.basis.len();
        let dofs = self.cell_dofs(cell);
        for (q, o) in out.iter_mut().enumerate() {
            let row = &self.phi[q * nl..(q + 1) * nl];
            *o = row.iter().zip(dofs).map(|(p, &d)| *p * coeffs[d]).sum();
        }
    }

    /// K_II x for an interior vector.
    fn stiffness_apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for (j, xj) in x.iter().enumerate() {
            for s in cp[j]..cp[j + 1] {
                out[ri[s]] += self.k_values[s] * xj;
            }
        }
    }

    /// K_II⁻¹ r for a complex interior vector (two real solves).
    fn stiffness_solve(&self, r: &[Complex64]) -> Vec<Complex64> {
        let n = r.len();
        let mut m = Mat::<f64>::from_fn(n, 2, |i, j| if j == 0 { r[i].re } else { r[i].im });
        self.k_factor.solve_in_place(m.as_mut());
        (0..n).map(|i| Complex64::new(m[(i, 0)], m[(i, 1)])).collect()
    }

    /// Dense copy of K_II (tests and small diagnostics).
    pub fn stiffness_dense(&self) -> Mat<f64> {
        SparseColMatRef::new(self.pattern.as_ref(), &self.k_values).to_dense()
    }

    /// Interior mass matrix weighted by `weight`, on the K_II pattern.
    pub fn assemble_weighted_mass(&self, weight: impl Fn([f64; 2]) -> f64) -> SparseColMat<usize, f64> {
        let nl = self.basis.len();
        let mut values = vec![0.0; self.k_values.len()];
        for cell in 0..self.n_cells() {
            let geo = self.geometry[cell];
            for (q, x) in self.cell_quadrature_points(cell).enumerate() {
                let w = self.rule.weights[q] * geo.det * weight(x);
                let row = &self.phi[q * nl..(q + 1) * nl];
                for a in 0..nl {
                    for b in 0..nl {
                        let s = self.elem_slots[(cell * nl + a) * nl + b];
                        if s != usize::MAX {
                            values[s] += w * row[a] * row[b];
                        }
                    }
                }
            }
        }
        SparseColMat::new(self.pattern.clone(), values)
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Coefficient vector over all dofs of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct FESolution {
    pub coefficients: Vec<Complex64>,
}

impl FESolution {
    /// ∫ |u − f|² over the mesh, square-rooted.
    pub fn l2_error(&self, space: &FESpace, f: impl Fn([f64; 2]) -> Complex64) -> Result<f64> {
        space.check(self)?;
        let mut acc = 0.0;
        let mut uq = vec![ZERO; space.rule.len()];
        for cell in 0..space.n_cells() {
            space.values_at_quadrature(cell, &self.coefficients, &mut uq);
            let det = space.geometry[cell].det;
            for (q, x) in space.cell_quadrature_points(cell).enumerate() {
                acc += space.rule.weights[q] * det * (uq[q] - f(x)).norm_sqr();
            }
        }
        Ok(acc.sqrt())
    }
}

/// Source term g on the right of −Δu + q·uᵖ = g (manufactured solutions).
pub type SourceFn = Arc<dyn Fn([f64; 2]) -> Complex64 + Send + Sync>;

/// How each Newton step's linear system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Sparse LU of the Jacobian at every step (symbolic analysis shared per space).
    Direct,
    /// GMRES preconditioned by the factored stiffness matrix, with a direct
    /// fallback when it stalls.
    #[default]
    Preconditioned,
}

#[derive(Clone)]
pub struct ProblemConfig {
    pub p: u32,
    pub potential: PotentialField,
    pub newton_rel_tol: f64,
    pub newton_max_iter: usize,
    pub linear_solver: LinearSolver,
    pub source: Option<SourceFn>,
}

impl fmt::Debug for ProblemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemConfig")
            .field("p", &self.p)
            .field("potential", &self.potential)
            .field("newton_rel_tol", &self.newton_rel_tol)
            .field("newton_max_iter", &self.newton_max_iter)
            .field("linear_solver", &self.linear_solver)
            .field("source", &self.source.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl ProblemConfig {
    pub fn new(potential: PotentialField) -> Self {
        ProblemConfig {
            p: 2,
            potential,
            newton_rel_tol: 1e-8,
            newton_max_iter: 20,
            linear_solver: LinearSolver::default(),
            source: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config(format!("nonlinearity power must be at least 2, got {}", self.p)));
        }
        if !(self.newton_rel_tol > 0.0) {
            return Err(Error::Config(format!("Newton tolerance must be positive, got {}", self.newton_rel_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::Config("Newton iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of a forward solve. `residual_norms[0]` is the
/// reference ‖F(ū)‖ of the boundary data extended by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual_norms: Vec<f64>,
    pub converged: bool,
    /// Krylov iterations per step (0 for direct or stiffness-only solves).
    pub linear_iterations: Vec<usize>,
    pub direct_fallbacks: usize,
    pub warm_start: bool,
}

impl NewtonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// A problem bound to a space: potential values at the quadrature points of
/// the cells where q does not vanish, and the optional source load.
pub struct ForwardProblem<'a> {
    pub space: &'a FESpace,
    pub config: &'a ProblemConfig,
    active: Vec<usize>,
    q_at: Vec<f64>,
    load: Option<Vec<Complex64>>,
}

impl<'a> ForwardProblem<'a> {
    pub fn new(space: &'a FESpace, config: &'a ProblemConfig) -> Result<Self> {
        config.validate()?;
        let nq = space.rule.len();
        let mut active = Vec::new();
        let mut q_at = Vec::new();
        for cell in 0..space.n_cells() {
            let vals: Vec<f64> = space.cell_quadrature_points(cell).map(|x| config.potential.evaluate(x)).collect();
            if vals.iter().any(|&v| v != 0.0) {
                active.push(cell);
                q_at.extend(vals);
            }
        }
        debug_assert_eq!(q_at.len(), active.len() * nq);
        let load = config.source.as_ref().map(|g| {
            let nl = space.dofs_per_cell();
            let mut load = vec![ZERO; space.n_interior()];
            for cell in 0..space.n_cells() {
                let det = space.geometry[cell].det;
                let dofs = space.cell_dofs(cell);
                for (q, x) in space.cell_quadrature_points(cell).enumerate() {
                    let gw = g(x) * (space.rule.weights[q] * det);
                    for a in 0..nl {
                        if let DofSlot::Interior(i) = space.slots[dofs[a]] {
                            load[i] += gw * space.phi[q * nl + a];
                        }
                    }
                }
            }
            load
        });
        Ok(ForwardProblem { space, config, active, q_at, load })
    }

    /// Number of cells on which q is nonzero somewhere.
    pub fn active_cells(&self) -> usize {
        self.active.len()
    }

    /// Interior residual F(u)_v = ∫ ∇u·∇φ_v + q uᵖ φ_v − g φ_v.
    pub fn residual(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.residual_parts(u, true)
    }

    fn residual_parts(&self, u: &[Complex64], nonlinear: bool) -> Vec<Complex64> {
        let s = self.space;
        let nl = s.dofs_per_cell();
        let nq = s.rule.len();
        let mut r = vec![ZERO; s.n_interior()];
        let mut ue = vec![ZERO; nl];
        for cell in 0..s.n_cells() {
            let dofs = s.cell_dofs(cell);
            if dofs.iter().all(|&d| u[d] == ZERO) {
                continue;
            }
            for (a, &d) in dofs.iter().enumerate() {
                ue[a] = u[d];
            }
            let ke = &s.elem_stiffness[cell * nl * nl..(cell + 1) * nl * nl];
            for (a, &d) in dofs.iter().enumerate() {
                if let DofSlot::Interior(i) = s.slots[d] {
                    r[i] += ke[a * nl..(a + 1) * nl].iter().zip(&ue).map(|(k, x)| *k * x).sum::<Complex64>();
                }
            }
        }
        if nonlinear {
            let p = self.config.p as i32;
            let mut uq = vec![ZERO; nq];
            for (ai, &cell) in self.active.iter().enumerate() {
                s.values_at_quadrature(cell, u, &mut uq);
                let det = s.geometry[cell].det;
                let dofs = s.cell_dofs(cell);
                for q in 0..nq {
                    let c = uq[q].powi(p) * (self.q_at[ai * nq + q] * s.rule.weights[q] * det);
                    if c == ZERO {
                        continue;
                    }
                    for a in 0..nl {
                        if let DofSlot::Interior(i) = s.slots[dofs[a]] {
                            r[i] += c * s.phi[q * nl + a];
                        }
                    }
                }
            }
            if let Some(load) = &self.load {
                for (ri, li) in r.iter_mut().zip(load) {
                    *ri -= li;
                }
            }
        }
        r
    }

    /// Local matrices ∫ p q uᵖ⁻¹ φ_j φ_i on the active cells.
    fn reaction_blocks(&self, u: &[Complex64]) -> Vec<Complex64> {
        let s = self.space;
        let nl = s.dofs_per_cell();
        let nq = s.rule.len();
        let p = self.config.p;
        let mut blocks = vec![ZERO; self.active.len() * nl * nl];
        let mut uq = vec![ZERO; nq];
        for (ai, &cell) in self.active.iter().enumerate() {
            s.values_at_quadrature(cell, u, &mut uq);
            let det = s.geometry[cell].det;
            let m = &mut blocks[ai * nl * nl..(ai + 1) * nl * nl];
            for q in 0..nq {
                let c = uq[q].powi(p as i32 - 1) * (p as f64 * self.q_at[ai * nq + q] * s.rule.weights[q] * det);
                if c == ZERO {
                    continue;
                }
                let row = &s.phi[q * nl..(q + 1) * nl];
                for a in 0..nl {
                    let ca = c * row[a];
                    for b in 0..nl {
                        m[a * nl + b] += ca * row[b];
                    }
                }
            }
        }
        blocks
    }

    fn jacobian_values(&self, blocks: &[Complex64]) -> Vec<Complex64> {
        let s = self.space;
        let nl = s.dofs_per_cell();
        let mut values: Vec<Complex64> = s.k_values.iter().map(|&k| Complex64::new(k, 0.0)).collect();
        for (ai, &cell) in self.active.iter().enumerate() {
            for ab in 0..nl * nl {
                let slot = s.elem_slots[cell * nl * nl + ab];
                if slot != usize::MAX {
                    values[slot] += blocks[ai * nl * nl + ab];
                }
            }
        }
        values
    }

    /// Sparse Jacobian on the interior dofs at `u`.
    pub fn jacobian(&self, u: &[Complex64]) -> SparseColMat<usize, Complex64> {
        let values = self.jacobian_values(&self.reaction_blocks(u));
        SparseColMat::new(self.space.pattern.clone(), values)
    }

    fn jacobian_apply(&self, blocks: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
        let s = self.space;
        let nl = s.dofs_per_cell();
        s.stiffness_apply(x, out);
        let mut xe = vec![ZERO; nl];
        for (ai, &cell) in self.active.iter().enumerate() {
            let dofs = s.cell_dofs(cell);
            for (a, &d) in dofs.iter().enumerate() {
                xe[a] = match s.slots[d] {
                    DofSlot::Interior(i) => x[i],
                    DofSlot::Boundary(_) => ZERO,
                };
            }
            let m = &blocks[ai * nl * nl..(ai + 1) * nl * nl];
            for (a, &d) in dofs.iter().enumerate() {
                if let DofSlot::Interior(i) = s.slots[d] {
                    out[i] += m[a * nl..(a + 1) * nl].iter().zip(&xe).map(|(m, x)| m * x).sum::<Complex64>();
                }
            }
        }
    }

    fn direct_solve(&self, blocks: &[Complex64], rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let s = self.space;
        let values = self.jacobian_values(blocks);
        let mat = SparseColMatRef::new(s.pattern.as_ref(), &values);
        let symbolic = match s.lu_symbolic.get() {
            Some(sym) => sym.clone(),
            None => {
                let sym = SymbolicLu::try_new(s.pattern.as_ref())
                    .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
                s.lu_symbolic.get_or_init(|| sym).clone()
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, mat)
            .map_err(|e| Error::LinearSolve(format!("singular Jacobian: {e:?}")))?;
        let mut b = Mat::<Complex64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(b.as_mut());
        let x: Vec<Complex64> = (0..rhs.len()).map(|i| b[(i, 0)]).collect();
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::LinearSolve("non-finite Newton increment".into()));
        }
        Ok(x)
    }

    /// Solve J δ = rhs. Returns δ, Krylov iterations, and whether the
    /// direct fallback was used.
    fn newton_solve(&self, u: &[Complex64], rhs: &[Complex64]) -> Result<(Vec<Complex64>, usize, bool)> {
        let blocks = self.reaction_blocks(u);
        match self.config.linear_solver {
            LinearSolver::Direct => Ok((self.direct_solve(&blocks, rhs)?, 0, false)),
            LinearSolver::Preconditioned => {
                let out = gmres(
                    |x, y| self.jacobian_apply(&blocks, x, y),
                    |r| self.space.stiffness_solve(r),
                    rhs,
                    GmresOptions::default(),
                );
                if out.converged || out.relative_residual <= GMRES_ACCEPT {
                    Ok((out.x, out.iterations, false))
                } else {
                    Ok((self.direct_solve(&blocks, rhs)?, out.iterations, true))
                }
            }
        }
    }

    /// Newton iteration for the given boundary values (in `boundary_dofs`
    /// order). Without `guess` the first iterate is the discrete harmonic
    /// lift; with it, Newton starts from the supplied interior values.
    pub fn solve(&self, boundary: &[Complex64], guess: Option<&[Complex64]>) -> Result<(FESolution, NewtonReport)> {
        let s = self.space;
        if boundary.len() != s.boundary_dofs.len() {
            return Err(Error::Shape(format!(
                "{} boundary values for {} boundary dofs",
                boundary.len(),
                s.boundary_dofs.len()
            )));
        }
        if let Some(g) = guess {
            if g.len() != s.n_interior() {
                return Err(Error::Shape(format!("initial guess has {} entries, expected {}", g.len(), s.n_interior())));
            }
        }
        let mut u = vec![ZERO; s.n_dofs()];
        for (&d, &v) in s.boundary_dofs.iter().zip(boundary) {
            u[d] = v;
        }
        let reference = norm(&self.residual(&u));
        let mut report = NewtonReport {
            iterations: 0,
            residual_norms: vec![reference],
            converged: false,
            linear_iterations: Vec::new(),
            direct_fallbacks: 0,
            warm_start: guess.is_some(),
        };
        let target = self.config.newton_rel_tol * reference;
        if reference == 0.0 {
            report.converged = true;
            return Ok((FESolution { coefficients: u }, report));
        }
        match guess {
            Some(g) => {
                for (&d, &v) in s.interior_dofs.iter().zip(g) {
                    u[d] = v;
                }
            }
            None => {
                let r = self.residual_parts(&u, false);
                let lift = s.stiffness_solve(&r);
                for (&d, v) in s.interior_dofs.iter().zip(lift) {
                    u[d] = -v;
                }
                report.iterations = 1;
                report.linear_iterations.push(0);
                report.residual_norms.push(norm(&self.residual(&u)));
            }
        }
        let mut current = if guess.is_some() { norm(&self.residual(&u)) } else { *report.residual_norms.last().unwrap() };
        while !(current <= target) {
            if !current.is_finite() || report.iterations >= self.config.newton_max_iter {
                return Err(Error::SolverDivergence { iterations: report.iterations, history: report.residual_norms });
            }
            let r = self.residual(&u);
            let rhs: Vec<Complex64> = r.iter().map(|v| -v).collect();
            let (delta, lin_iters, fallback) = self.newton_solve(&u, &rhs)?;
            for (&d, v) in s.interior_dofs.iter().zip(&delta) {
                u[d] += v;
            }
            current = norm(&self.residual(&u));
            report.iterations += 1;
            report.residual_norms.push(current);
            report.linear_iterations.push(lin_iters);
            report.direct_fallbacks += fallback as usize;
        }
        report.converged = true;
        Ok((FESolution { coefficients: u }, report))
    }

    /// Interior part of a solution, for warm starts.
    pub fn interior_values(&self, u: &FESolution) -> Vec<Complex64> {
        self.space.interior_dofs.iter().map(|&d| u.coefficients[d]).collect()
    }

    /// Discrete harmonic lift of the boundary values (interior part).
    pub fn harmonic_lift(&self, boundary: &[Complex64]) -> Result<Vec<Complex64>> {
        let s = self.space;
        if boundary.len() != s.boundary_dofs.len() {
            return Err(Error::Shape(format!("{} boundary values for {} boundary dofs", boundary.len(), s.boundary_dofs.len())));
        }
        let mut u = vec![ZERO; s.n_dofs()];
        for (&d, &v) in s.boundary_dofs.iter().zip(boundary) {
            u[d] = v;
        }
        let r = self.residual_parts(&u, false);
        Ok(s.stiffness_solve(&r).into_iter().map(|v| -v).collect())
    }

    /// ∫ q uᵖ over the mesh.
    pub fn domain_integral(&self, u: &FESolution) -> Result<Complex64> {
        let s = self.space;
        s.check(u)?;
        let nq = s.rule.len();
        let p = self.config.p as i32;
        let mut uq = vec![ZERO; nq];
        let mut acc = ZERO;
        for (ai, &cell) in self.active.iter().enumerate() {
            s.values_at_quadrature(cell, &u.coefficients, &mut uq);
            let det = s.geometry[cell].det;
            for q in 0..nq {
                acc += uq[q].powi(p) * (self.q_at[ai * nq + q] * s.rule.weights[q] * det);
            }
        }
        Ok(acc)
    }

    /// Smallest eigenvalue of the Hermitian part of the Jacobian at `u`,
    /// by inverse iteration with Rayleigh-quotient readout.
    pub fn coercivity_margin(&self, u: &FESolution, iterations: usize) -> Result<f64> {
        let s = self.space;
        s.check(u)?;
        let j = self.jacobian(&u.coefficients);
        let n = s.n_interior();
        let (sym, vals) = j.parts();
        let mut triplets = Vec::with_capacity(2 * vals.len());
        for c in 0..n {
            for idx in sym.col_ptr()[c]..sym.col_ptr()[c + 1] {
                let r = sym.row_idx()[idx];
                triplets.push(faer::sparse::Triplet::new(r, c, 0.5 * vals[idx]));
                triplets.push(faer::sparse::Triplet::new(c, r, 0.5 * vals[idx].conj()));
            }
        }
        let h = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolve(format!("Hermitian part: {e:?}")))?;
        let lu = h.sp_lu().map_err(|e| Error::LinearSolve(format!("Hermitian part LU: {e:?}")))?;
        let mut x = Mat::<Complex64>::from_fn(n, 1, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, 0.0));
        let mut rayleigh = 0.0;
        for _ in 0..iterations.max(1) {
            let nrm = x.norm_l2();
            x = x * faer::Scale(Complex64::new(1.0 / nrm, 0.0));
            let y = lu.solve(&x);
            // xᴴ H⁻¹ x ≈ 1/λ_min for the dominant direction.
            let num: Complex64 = (0..n).map(|i| x[(i, 0)].conj() * y[(i, 0)]).sum();
            rayleigh = 1.0 / num.re;
            x = y;
        }
        Ok(rayleigh)
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Residual over the interior dofs for a full coefficient vector.
pub fn assemble_residual(space: &FESpace, u: &FESolution, config: &ProblemConfig) -> Result<Vec<Complex64>> {
    space.check(u)?;
    Ok(ForwardProblem::new(space, config)?.residual(&u.coefficients))
}

/// Jacobian over the interior dofs at `u`.
pub fn assemble_jacobian(space: &FESpace, u: &FESolution, config: &ProblemConfig) -> Result<SparseColMat<usize, Complex64>> {
    space.check(u)?;
    Ok(ForwardProblem::new(space, config)?.jacobian(&u.coefficients))
}

/// Newton solve with boundary data evaluated at the boundary dof coordinates.
pub fn solve_forward(
    space: &FESpace,
    boundary_data: impl Fn([f64; 2]) -> Complex64,
    config: &ProblemConfig,
) -> Result<(FESolution, NewtonReport)> {
    let problem = ForwardProblem::new(space, config)?;
    problem.solve(&space.boundary_values(boundary_data), None)
}

/// Contraction orders log(e_{n+1})/log(e_n) of the normalized residuals
/// e_n = ‖F(u_n)‖/‖F(ū)‖.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub orders: Vec<f64>,
    pub final_order: f64,
    pub quadratic: bool,
}

/// `None` when fewer than three iterations were taken or the residuals do
/// not decrease below the reference.
pub fn newton_convergence_diagnostics(report: &NewtonReport) -> Option<ContractionEstimate> {
    contraction_orders(&report.residual_norms)
}

pub fn contraction_orders(residuals: &[f64]) -> Option<ContractionEstimate> {
    if residuals.len() < 4 || !(residuals[0] > 0.0) {
        return None;
    }
    let e: Vec<f64> = residuals[1..].iter().map(|r| r / residuals[0]).collect();
    if e.iter().any(|&v| !(v > 0.0 && v < 1.0)) || e.windows(2).any(|w| w[1] >= w[0]) {
        return None;
    }
    let orders: Vec<f64> = e.windows(2).map(|w| w[1].ln() / w[0].ln()).collect();
    let final_order = *orders.last()?;
    Some(ContractionEstimate { orders, final_order, quadratic: final_order >= 1.7 })
}

/// ∫ q uᵖ over the mesh.
pub fn domain_integral_psi(space: &FESpace, u: &FESolution, config: &ProblemConfig) -> Result<Complex64> {
    ForwardProblem::new(space, config)?.domain_integral(u)
}

/// ∫_∂Ω n·∇u with the elementwise gradient, by Gauss quadrature on each boundary edge.
pub fn boundary_flux_psi(space: &FESpace, u: &FESolution) -> Result<Complex64> {
    space.check(u)?;
    let edges = boundary_edges(&space.mesh)?;
    let (ts, ws) = gauss_legendre_interval(space.degree + 1, 0.0, 1.0);
    let mut acc = ZERO;
    for e in &edges {
        let geo = space.geometry[e.triangle];
        let dofs = space.cell_dofs(e.triangle);
        let (a, b) = (space.mesh.vertices[e.start], space.mesh.vertices[e.end]);
        for (t, w) in ts.iter().zip(&ws) {
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (s, r) = geo.inverse(x);
            let (_, grads) = space.basis.eval(s, r);
            let mut g = [ZERO; 2];
            for (gr, &d) in grads.iter().zip(dofs) {
                let gp = geo.gradient(*gr);
                g[0] += gp[0] * u.coefficients[d];
                g[1] += gp[1] * u.coefficients[d];
            }
            acc += (g[0] * e.normal[0] + g[1] * e.normal[1]) * (w * e.length);
        }
    }
    Ok(acc)
}
