//! Pixel grid over the disk, polar frequency grid, and the dense operator
//! mapping piecewise-constant pixel values to Fourier samples.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::MatRef;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::STABILITY_BOUND;
use crate::par::{self, Execution};

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn unit_square() -> Self {
        Rect { x_min: -1.0, y_min: -1.0, x_max: 1.0, y_max: 1.0 }
    }
}

/// Uniform Cartesian grid restricted to cells whose center lies in the open disk.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    pub x_min: f64,
    pub y_min: f64,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Kept cells (m, n), sorted by the row-major index n·nx + m.
    pub cells: Vec<(usize, usize)>,
    pub centers: Vec<[f64; 2]>,
    /// Row-major grid index of each kept cell.
    pub grid_index: Vec<usize>,
    /// Inverse of `grid_index`: kept position for every grid cell, if kept.
    position: Vec<Option<usize>>,
}

pub fn build_pixel_grid(nx: usize, ny: usize, bbox: Rect) -> Result<PixelGrid> {
    if nx < 2 || ny < 2 {
        return Err(Error::Config(format!("pixel grid needs at least 2×2 cells, got {nx}×{ny}")));
    }
    if bbox.x_min > -1.0 || bbox.y_min > -1.0 || bbox.x_max < 1.0 || bbox.y_max < 1.0 {
        return Err(Error::Config(format!("bounding box {bbox:?} does not contain the closed unit disk")));
    }
    let h = (bbox.x_max - bbox.x_min) / nx as f64;
    let hy = (bbox.y_max - bbox.y_min) / ny as f64;
    if (h - hy).abs() > 1e-12 * h {
        return Err(Error::Config(format!("cells are not square: hx = {h}, hy = {hy}")));
    }
    let mut cells = Vec::new();
    let mut centers = Vec::new();
    let mut grid_index = Vec::new();
    let mut position = vec![None; nx * ny];
    for n in 0..ny {
        for m in 0..nx {
            let cx = bbox.x_min + (m as f64 + 0.5) * h;
            let cy = bbox.y_min + (n as f64 + 0.5) * h;
            if cx * cx + cy * cy < 1.0 {
                position[n * nx + m] = Some(cells.len());
                cells.push((m, n));
                centers.push([cx, cy]);
                grid_index.push(n * nx + m);
            }
        }
    }
    Ok(PixelGrid { x_min: bbox.x_min, y_min: bbox.y_min, nx, ny, h, cells, centers, grid_index, position })
}

impl PixelGrid {
    /// Number of kept pixels N′.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Kept position of cell (m, n), if that cell is kept.
    pub fn position_of(&self, m: usize, n: usize) -> Option<usize> {
        if m >= self.nx || n >= self.ny {
            return None;
        }
        self.position[n * self.nx + m]
    }

    /// Same grid with every center shifted by `d` (used to check the
    /// translation structure of the operator).
    pub fn translated(&self, d: [f64; 2]) -> PixelGrid {
        let mut g = self.clone();
        g.x_min += d[0];
        g.y_min += d[1];
        for c in g.centers.iter_mut() {
            c[0] += d[0];
            c[1] += d[1];
        }
        g
    }
}

/// Polar sampling ξ = (r cos θ, r sin θ) with flat index K = k_r·N_θ + k_θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarFrequencyGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_max: f64,
    pub half_plane: bool,
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
}

/// Uniform radii from 0 to `r_max` (inclusive) and uniform angles over
/// [0, π) when `half_plane`, else [0, 2π).
pub fn build_frequency_grid(n_r: usize, n_theta: usize, r_max: f64, half_plane: bool) -> Result<PolarFrequencyGrid> {
    if n_r == 0 || n_theta == 0 {
        return Err(Error::Config("frequency grid needs N_r, N_θ ≥ 1".into()));
    }
    if !(r_max >= 0.0) {
        return Err(Error::Config(format!("R_max must be non-negative, got {r_max}")));
    }
    if r_max > STABILITY_BOUND {
        return Err(Error::Stability { norm: r_max, bound: STABILITY_BOUND });
    }
    let radii = if n_r == 1 {
        vec![0.0]
    } else {
        (0..n_r).map(|l| r_max * l as f64 / (n_r - 1) as f64).collect()
    };
    let span = if half_plane { PI } else { 2.0 * PI };
    let angles = (0..n_theta).map(|j| span * j as f64 / n_theta as f64).collect();
    Ok(PolarFrequencyGrid { n_r, n_theta, r_max, half_plane, radii, angles })
}

impl PolarFrequencyGrid {
    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let (kr, kt) = (k / self.n_theta, k % self.n_theta);
        let (r, t) = (self.radii[kr], self.angles[kt]);
        [r * t.cos(), r * t.sin()]
    }

    /// All frequencies in flat-index order.
    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }
}

/// sin(t)/t with the continuous value 1 at t = 0.
pub fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        t.sin() / t
    }
}

/// Magnitude factor of ∫_cell e^{-iξ·x} dx (everything except the center phase).
fn cell_factor(xi: [f64; 2], h: f64) -> f64 {
    let h2 = h * h;
    match (xi[0] == 0.0, xi[1] == 0.0) {
        (false, false) => h2 * sinc(0.5 * xi[0] * h) * sinc(0.5 * xi[1] * h),
        (true, false) => h2 * sinc(0.5 * xi[1] * h),
        (false, true) => h2 * sinc(0.5 * xi[0] * h),
        (true, true) => h2,
    }
}

/// Closed-form ∫ over the square cell of side `h` centered at `center` of e^{-iξ·x}.
pub fn cell_integral(xi: [f64; 2], center: [f64; 2], h: f64) -> Complex64 {
    cell_factor(xi, h) * Complex64::from_polar(1.0, -(xi[0] * center[0] + xi[1] * center[1]))
}

/// Dense K × N′ operator, stored row-major (one row per frequency).
#[derive(Debug, Clone)]
pub struct ForwardFourierOperator {
    pub xis: Vec<[f64; 2]>,
    pub n_pixels: usize,
    pub h: f64,
    data: Vec<Complex64>,
}

pub fn assemble_e(pg: &PixelGrid, xis: &[[f64; 2]]) -> ForwardFourierOperator {
    assemble_e_with(pg, xis, Execution::default())
}

pub fn assemble_e_with(pg: &PixelGrid, xis: &[[f64; 2]], exec: Execution) -> ForwardFourierOperator {
    let n = pg.len();
    let mut data = vec![Complex64::new(0.0, 0.0); xis.len() * n];
    if n > 0 {
        par::for_each_chunk_mut(exec, &mut data, n, |k, row| fill_row(pg, xis[k], row));
    }
    ForwardFourierOperator { xis: xis.to_vec(), n_pixels: n, h: pg.h, data }
}

fn fill_row(pg: &PixelGrid, xi: [f64; 2], row: &mut [Complex64]) {
    let factor = cell_factor(xi, pg.h);
    // e^{-iξ_x c_m} and e^{-iξ_y c_n} separately; a pixel's phase is their product.
    let px: Vec<Complex64> = (0..pg.nx)
        .map(|m| Complex64::from_polar(1.0, -xi[0] * (pg.x_min + (m as f64 + 0.5) * pg.h)))
        .collect();
    let py: Vec<Complex64> = (0..pg.ny)
        .map(|n| Complex64::from_polar(factor, -xi[1] * (pg.y_min + (n as f64 + 0.5) * pg.h)))
        .collect();
    for (entry, &(m, n)) in row.iter_mut().zip(&pg.cells) {
        *entry = px[m] * py[n];
    }
}

impl ForwardFourierOperator {
    pub fn nrows(&self) -> usize {
        self.xis.len()
    }

    pub fn ncols(&self) -> usize {
        self.n_pixels
    }

    pub fn entry(&self, k: usize, i: usize) -> Complex64 {
        self.data[k * self.n_pixels + i]
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.data[k * self.n_pixels..(k + 1) * self.n_pixels]
    }

    pub fn as_mat(&self) -> MatRef<'_, Complex64> {
        MatRef::from_row_major_slice(&self.data, self.nrows(), self.ncols())
    }

    /// F = E q.
    pub fn apply(&self, q: &[Complex64]) -> Result<FourierData> {
        if q.len() != self.n_pixels {
            return Err(Error::Shape(format!("pixel vector has length {}, operator expects {}", q.len(), self.n_pixels)));
        }
        let values = (0..self.nrows())
            .map(|k| self.row(k).iter().zip(q).map(|(e, x)| e * x).sum())
            .collect();
        Ok(FourierData { xis: self.xis.clone(), values })
    }

    pub fn apply_real(&self, q: &[f64]) -> Result<FourierData> {
        let qc: Vec<Complex64> = q.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.apply(&qc)
    }

    /// Eᴴ F.
    pub fn adjoint(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        if f.len() != self.nrows() {
            return Err(Error::Shape(format!("data vector has length {}, operator has {} rows", f.len(), self.nrows())));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_pixels];
        for (k, fk) in f.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(self.row(k)) {
                *o += e.conj() * fk;
            }
        }
        Ok(out)
    }
}

/// E q computed without storing E.
pub fn apply_matrix_free(pg: &PixelGrid, xis: &[[f64; 2]], q: &[Complex64], exec: Execution) -> Result<FourierData> {
    if q.len() != pg.len() {
        return Err(Error::Shape(format!("pixel vector has length {}, grid has {} pixels", q.len(), pg.len())));
    }
    let values = par::map_indexed(exec, xis.len(), |k| {
        let mut row = vec![Complex64::new(0.0, 0.0); pg.len()];
        fill_row(pg, xis[k], &mut row);
        row.iter().zip(q).map(|(e, x)| e * x).sum()
    });
    Ok(FourierData { xis: xis.to_vec(), values })
}

/// Eᴴ F computed without storing E.
pub fn adjoint_matrix_free(pg: &PixelGrid, xis: &[[f64; 2]], f: &[Complex64]) -> Result<Vec<Complex64>> {
    if f.len() != xis.len() {
        return Err(Error::Shape(format!("data vector has length {}, expected {}", f.len(), xis.len())));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); pg.len()];
    let mut row = vec![Complex64::new(0.0, 0.0); pg.len()];
    for (xi, fk) in xis.iter().zip(f) {
        fill_row(pg, *xi, &mut row);
        for (o, e) in out.iter_mut().zip(&row) {
            *o += e.conj() * fk;
        }
    }
    Ok(out)
}

/// Largest `count` singular values of E, non-increasing.
pub fn singular_spectrum(op: &ForwardFourierOperator, count: usize) -> Result<Vec<f64>> {
    let max = op.nrows().min(op.ncols());
    if count > max {
        return Err(Error::Config(format!("requested {count} singular values, operator has at most {max}")));
    }
    let mut s = op
        .as_mat()
        .singular_values()
        .map_err(|e| Error::LinearSolve(format!("SVD failed: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    s.truncate(count);
    Ok(s)
}

/// Fourier samples F_k at frequencies ξ_k.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierData {
    pub xis: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
}

impl FourierData {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `xi_x xi_y re im` per row; `#` lines are comments.
    pub fn to_text(&self, header: &str) -> String {
        let mut s = String::new();
        for line in header.lines() {
            writeln!(s, "# {line}").unwrap();
        }
        writeln!(s, "# xi_x xi_y re im").unwrap();
        for (xi, v) in self.xis.iter().zip(&self.values) {
            writeln!(s, "{:.17e} {:.17e} {:.17e} {:.17e}", xi[0], xi[1], v.re, v.im).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut xis = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            if nums.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 columns, got {}", ln + 1, nums.len())));
            }
            xis.push([nums[0], nums[1]]);
            values.push(Complex64::new(nums[2], nums[3]));
        }
        Ok(FourierData { xis, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{fourier_oracle, PotentialField};
    use crate::quadrature::gauss_legendre_interval;

    fn tensor_gauss_cell(xi: [f64; 2], center: [f64; 2], h: f64) -> Complex64 {
        let (xs, wx) = gauss_legendre_interval(32, center[0] - 0.5 * h, center[0] + 0.5 * h);
        let (ys, wy) = gauss_legendre_interval(32, center[1] - 0.5 * h, center[1] + 0.5 * h);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, a) in xs.iter().zip(&wx) {
            for (y, b) in ys.iter().zip(&wy) {
                acc += a * b * Complex64::from_polar(1.0, -(xi[0] * x + xi[1] * y));
            }
        }
        acc
    }

    #[test]
    fn paper_scale_grid_keeps_17692_pixels() {
        let pg = build_pixel_grid(150, 150, Rect::unit_square()).unwrap();
        assert_eq!(pg.len(), 17692);
        let ratio = pg.len() as f64 / (150.0 * 150.0);
        assert!((ratio - PI / 4.0).abs() / (PI / 4.0) < 0.01);
    }

    #[test]
    fn two_by_two_grid_keeps_all_cells() {
        let pg = build_pixel_grid(2, 2, Rect::unit_square()).unwrap();
        assert_eq!(pg.len(), 4);
        for c in &pg.centers {
            assert_eq!(c[0].abs(), 0.5);
            assert_eq!(c[1].abs(), 0.5);
        }
    }

    #[test]
    fn grid_rejects_box_not_covering_disk() {
        let bbox = Rect { x_min: -0.9, y_min: -1.0, x_max: 1.0, y_max: 1.0 };
        assert!(matches!(build_pixel_grid(10, 10, bbox), Err(Error::Config(_))));
    }

    #[test]
    fn kept_indices_are_dense_unique_and_inside() {
        let pg = build_pixel_grid(37, 37, Rect::unit_square()).unwrap();
        for (i, (&(m, n), c)) in pg.cells.iter().zip(&pg.centers).enumerate() {
            assert!(c[0] * c[0] + c[1] * c[1] < 1.0);
            assert_eq!(pg.position_of(m, n), Some(i));
            assert_eq!(pg.grid_index[i], n * pg.nx + m);
        }
        assert!(pg.grid_index.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn paper_frequency_grid_has_1800_points() {
        let fg = build_frequency_grid(60, 30, 5.0, true).unwrap();
        assert_eq!(fg.len(), 1800);
        assert!(fg.angles.iter().all(|&t| t < PI));
        assert!(fg.radii.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(fg.radii[0], 0.0);
        assert_eq!(*fg.radii.last().unwrap(), 5.0);
    }

    #[test]
    fn single_point_grid_is_zero_frequency() {
        let fg = build_frequency_grid(1, 1, 0.0, true).unwrap();
        assert_eq!(fg.points(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn frequency_grid_enforces_stability_bound() {
        assert!(matches!(build_frequency_grid(4, 4, 10.5, true), Err(Error::Stability { .. })));
    }

    #[test]
    fn paper_scale_operator_shape() {
        let pg = build_pixel_grid(150, 150, Rect::unit_square()).unwrap();
        let fg = build_frequency_grid(60, 30, 5.0, true).unwrap();
        // Shape only; avoid allocating the full matrix in a unit test.
        assert_eq!((fg.len(), pg.len()), (1800, 17692));
    }

    #[test]
    fn zero_frequency_row_is_h_squared() {
        let pg = build_pixel_grid(20, 20, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[[0.0, 0.0]]);
        for i in 0..pg.len() {
            assert_eq!(op.entry(0, i), Complex64::new(pg.h * pg.h, 0.0));
        }
    }

    #[test]
    fn one_zero_component_case() {
        let pg = build_pixel_grid(20, 20, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[[0.0, 2.0]]);
        let h = pg.h;
        for (i, c) in pg.centers.iter().enumerate() {
            let expected = h * h * Complex64::from_polar(1.0, -2.0 * c[1]) * sinc(h);
            assert!((op.entry(0, i) - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn entries_match_tensor_gauss_quadrature() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let xi = [10.0 * (2.0 * next() - 1.0), 10.0 * (2.0 * next() - 1.0)];
            let h = 0.01 + 0.2 * next();
            let c = [2.0 * next() - 1.0, 2.0 * next() - 1.0];
            let exact = tensor_gauss_cell(xi, c, h);
            let closed = cell_integral(xi, c, h);
            assert!((closed - exact).norm() <= 1e-10 * exact.norm());
        }
    }

    #[test]
    fn entry_modulus_bounded_by_h_squared() {
        let pg = build_pixel_grid(30, 30, Rect::unit_square()).unwrap();
        let fg = build_frequency_grid(6, 6, 10.0, false).unwrap();
        let op = assemble_e(&pg, &fg.points());
        let h2 = pg.h * pg.h;
        for k in 0..op.nrows() {
            assert!(op.row(k).iter().all(|e| e.norm() <= h2 * (1.0 + 1e-14)));
        }
    }

    #[test]
    fn opposite_frequencies_give_conjugate_rows() {
        let pg = build_pixel_grid(16, 16, Rect::unit_square()).unwrap();
        let fg = build_frequency_grid(4, 8, 5.0, false).unwrap();
        let op = assemble_e(&pg, &fg.points());
        // θ_j + π is j + 4 on an 8-angle full-plane grid.
        for kr in 0..4 {
            for kt in 0..4 {
                let a = op.row(kr * 8 + kt);
                let b = op.row(kr * 8 + kt + 4);
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y.conj()).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn translation_multiplies_by_phase() {
        let pg = build_pixel_grid(3, 3, Rect { x_min: -1.5, y_min: -1.5, x_max: 1.5, y_max: 1.5 }).unwrap();
        let d = [0.13, -0.07];
        let shifted = pg.translated(d);
        let xis = [[1.5, -2.0], [0.0, 3.0], [4.0, 0.0]];
        let a = assemble_e(&pg, &xis);
        let b = assemble_e(&shifted, &xis);
        for (k, xi) in xis.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -(xi[0] * d[0] + xi[1] * d[1]));
            for i in 0..pg.len() {
                assert!((a.entry(k, i) * phase - b.entry(k, i)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn nyquist_sinc_factors_near_one_at_paper_parameters() {
        let h = 2.0 / 150.0;
        let fg = build_frequency_grid(60, 30, 5.0, true).unwrap();
        for xi in fg.points() {
            assert!(sinc(0.5 * xi[0] * h).abs() >= 0.98);
            assert!(sinc(0.5 * xi[1] * h).abs() >= 0.98);
        }
    }

    #[test]
    fn constant_potential_at_zero_frequency_is_disk_area() {
        let pg = build_pixel_grid(150, 150, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[[0.0, 0.0]]);
        let f = op.apply_real(&vec![1.0; pg.len()]).unwrap();
        assert!((f.values[0].re - pg.h * pg.h * pg.len() as f64).abs() < 1e-12);
        assert!((f.values[0].re - PI).abs() / PI < 0.01);
        let zero = op.apply_real(&vec![0.0; pg.len()]).unwrap();
        assert_eq!(zero.values[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn apply_rejects_wrong_length() {
        let pg = build_pixel_grid(8, 8, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[[1.0, 0.0]]);
        assert!(matches!(op.apply_real(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn sampled_bump_matches_continuous_transform() {
        let pg = build_pixel_grid(150, 150, Rect::unit_square()).unwrap();
        let q = PotentialField::centered_bump();
        let samples = q.sample_on(&pg);
        let xis = [[0.0, 0.0], [2.0, 1.0], [-3.0, 4.0], [0.0, 5.0]];
        let op = assemble_e(&pg, &xis);
        let f = op.apply_real(&samples).unwrap();
        for (xi, v) in xis.iter().zip(&f.values) {
            let exact = fourier_oracle(&q, *xi, 32).value;
            assert!((v - exact).norm() <= 0.01 * exact.norm(), "xi {xi:?}: {v} vs {exact}");
        }
    }

    #[test]
    fn matrix_free_apply_and_adjoint_match_dense() {
        let pg = build_pixel_grid(12, 12, Rect::unit_square()).unwrap();
        let fg = build_frequency_grid(3, 5, 4.0, true).unwrap();
        let xis = fg.points();
        let op = assemble_e(&pg, &xis);
        let q: Vec<Complex64> = (0..pg.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let dense = op.apply(&q).unwrap();
        let free = apply_matrix_free(&pg, &xis, &q, Execution::Sequential).unwrap();
        for (a, b) in dense.values.iter().zip(&free.values) {
            assert!((a - b).norm() < 1e-14);
        }
        let f: Vec<Complex64> = (0..xis.len()).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let a = op.adjoint(&f).unwrap();
        let b = adjoint_matrix_free(&pg, &xis, &f).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn single_zero_row_singular_value() {
        let pg = build_pixel_grid(10, 10, Rect::unit_square()).unwrap();
        let op = assemble_e(&pg, &[[0.0, 0.0]]);
        let s = singular_spectrum(&op, 1).unwrap();
        let expected = pg.h * pg.h * (pg.len() as f64).sqrt();
        assert!((s[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn singular_values_are_non_increasing() {
        let pg = build_pixel_grid(20, 20, Rect::unit_square()).unwrap();
        let fg = build_frequency_grid(4, 6, 5.0, true).unwrap();
        let op = assemble_e(&pg, &fg.points());
        let s = singular_spectrum(&op, 24).unwrap();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        assert!(matches!(singular_spectrum(&op, 25), Err(Error::Config(_))));
    }

    #[test]
    fn fourier_data_text_round_trip() {
        let fd = FourierData { xis: vec![[0.1, -0.2], [3.0, 0.0]], values: vec![Complex64::new(1.0 / 3.0, -2.5e-9), Complex64::new(0.0, 7.0)] };
        let back = FourierData::from_text(&fd.to_text("config_hash abc")).unwrap();
        assert_eq!(back, fd);
    }
}
