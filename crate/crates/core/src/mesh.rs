//! Structured polar-ring triangulation of the closed unit disk.
//!
//! Ring `k` (radius `k/R`) carries `6·k·s` vertices, where `s` is an angular
//! refinement factor that is only larger than one for very coarse meshes.
//! Consecutive rings are stitched by walking both rings in increasing angle.
//! The ring count `R ≈ 9N/16` for radial resolution `N` puts the mean edge
//! length at `2/N` (ring-to-ring diagonals are ~12% longer than the ring
//! spacing).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Radial tolerance used to identify boundary vertices.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Boundary vertex indices in counterclockwise order around the circle.
    pub boundary_vertices: Vec<usize>,
    /// Requested mean edge length, `2 / radial_resolution`.
    pub h_target: f64,
}

/// Oriented boundary edge with its outward unit normal.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub start: usize,
    pub end: usize,
    /// Index of the single triangle carrying the edge.
    pub triangle: usize,
    pub normal: [f64; 2],
    pub length: f64,
}

/// Build the disk mesh for a given radial resolution (cells across the diameter).
pub fn build_disk_mesh(radial_resolution: usize) -> Result<DiskMesh> {
    if radial_resolution < 4 {
        return Err(Error::Config(format!(
            "radial resolution must be at least 4, got {radial_resolution}"
        )));
    }
    let rings = (9 * radial_resolution + 8) / 16;
    let refine = 4usize.div_ceil(rings).max(1);

    let mut vertices = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    let mut ring_len = vec![1usize];
    for k in 1..=rings {
        let n = 6 * k * refine;
        let r = if k == rings { 1.0 } else { k as f64 / rings as f64 };
        ring_start.push(vertices.len());
        ring_len.push(n);
        for j in 0..n {
            let theta = 2.0 * PI * j as f64 / n as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut triangles = Vec::new();
    // Fan around the center.
    for j in 0..ring_len[1] {
        let a = ring_start[1] + j;
        let b = ring_start[1] + (j + 1) % ring_len[1];
        triangles.push([0, a, b]);
    }
    for k in 2..=rings {
        stitch_rings(
            &mut triangles,
            (ring_start[k - 1], ring_len[k - 1]),
            (ring_start[k], ring_len[k]),
        );
    }
    for t in triangles.iter_mut() {
        if signed_area(&vertices, t) < 0.0 {
            t.swap(1, 2);
        }
    }

    let boundary_vertices = (0..ring_len[rings]).map(|j| ring_start[rings] + j).collect();
    Ok(DiskMesh {
        vertices,
        triangles,
        boundary_vertices,
        h_target: 2.0 / radial_resolution as f64,
    })
}

fn stitch_rings(triangles: &mut Vec<[usize; 3]>, inner: (usize, usize), outer: (usize, usize)) {
    let (is, il) = inner;
    let (os, ol) = outer;
    let (mut i, mut j) = (0usize, 0usize);
    while i < il || j < ol {
        // Angle (in units of a full turn) of the next vertex on each ring.
        let next_inner = (i + 1) as f64 / il as f64;
        let next_outer = (j + 1) as f64 / ol as f64;
        let a = is + i % il;
        let b = os + j % ol;
        if j < ol && (i >= il || next_outer <= next_inner) {
            triangles.push([a, b, os + (j + 1) % ol]);
            j += 1;
        } else {
            triangles.push([a, b, is + (i + 1) % il]);
            i += 1;
        }
    }
}

pub(crate) fn signed_area(vertices: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl DiskMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.triangles.iter().map(|t| signed_area(&self.vertices, t)).sum()
    }

    /// Unique undirected edges as (low, high) vertex pairs, in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for t in &self.triangles {
            for e in 0..3 {
                let key = edge_key(t[e], t[(e + 1) % 3]);
                if seen.insert(key, ()).is_none() {
                    out.push(key);
                }
            }
        }
        out
    }

    /// (min, mean, max) edge length.
    pub fn edge_length_stats(&self) -> (f64, f64, f64) {
        let edges = self.edges();
        let mut min = f64::INFINITY;
        let mut max = 0.0f64;
        let mut sum = 0.0;
        for (a, b) in &edges {
            let l = dist(self.vertices[*a], self.vertices[*b]);
            min = min.min(l);
            max = max.max(l);
            sum += l;
        }
        (min, sum / edges.len() as f64, max)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let [x, y] = self.vertices[v];
        ((x * x + y * y).sqrt() - 1.0).abs() <= BOUNDARY_TOL
    }

    /// Check every structural invariant of the mesh.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.triangles.iter().enumerate() {
            if signed_area(&self.vertices, t) <= 0.0 {
                return Err(Error::Topology(format!("triangle {i} is not counterclockwise")));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if (v[0] * v[0] + v[1] * v[1]).sqrt() > 1.0 + 1e-12 {
                return Err(Error::Topology(format!("vertex {i} lies outside the disk")));
            }
        }
        for &v in &self.boundary_vertices {
            if !self.is_boundary_vertex(v) {
                return Err(Error::Topology(format!("boundary vertex {v} is off the circle")));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                *count.entry(edge_key(t[e], t[(e + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &c) in &count {
            if c > 2 {
                return Err(Error::Topology(format!("edge ({a}, {b}) shared by {c} triangles")));
            }
            if c == 1 && !(self.is_boundary_vertex(a) && self.is_boundary_vertex(b)) {
                return Err(Error::Topology(format!("open edge ({a}, {b}) is not on the boundary")));
            }
        }
        let (min, _, max) = self.edge_length_stats();
        if max > 3.0 * min {
            return Err(Error::Topology(format!(
                "mesh is not quasi-uniform: max edge {max:.3e} > 3 × min edge {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Plain-text dump: a `vertices N` block of `x y` lines, then a
    /// `triangles M` block of `a b c` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", v[0], v[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Boundary edges as a single counterclockwise loop.
pub fn boundary_edges(mesh: &DiskMesh) -> Result<Vec<BoundaryEdge>> {
    // Directed edges that appear once, keyed by start vertex.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        for e in 0..3 {
            directed.insert((t[e], t[(e + 1) % 3]), ti);
        }
    }
    let mut next: HashMap<usize, (usize, usize)> = HashMap::new();
    for (&(a, b), &ti) in &directed {
        if !directed.contains_key(&(b, a)) {
            if next.insert(a, (b, ti)).is_some() {
                return Err(Error::Topology(format!("vertex {a} starts two boundary edges")));
            }
        }
    }
    if next.is_empty() {
        return Err(Error::Topology("mesh has no boundary".into()));
    }
    let start = *next.keys().min().unwrap();
    let mut loop_edges = Vec::with_capacity(next.len());
    let mut cur = start;
    loop {
        let &(nxt, ti) = next
            .get(&cur)
            .ok_or_else(|| Error::Topology(format!("boundary loop broken at vertex {cur}")))?;
        let (a, b) = (mesh.vertices[cur], mesh.vertices[nxt]);
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let length = (dx * dx + dy * dy).sqrt();
        loop_edges.push(BoundaryEdge {
            start: cur,
            end: nxt,
            triangle: ti,
            normal: [dy / length, -dx / length],
            length,
        });
        cur = nxt;
        if cur == start {
            break;
        }
        if loop_edges.len() > next.len() {
            return Err(Error::Topology("boundary loop does not close".into()));
        }
    }
    if loop_edges.len() != next.len() {
        return Err(Error::Topology(format!(
            "boundary is disconnected: loop covers {} of {} boundary edges",
            loop_edges.len(),
            next.len()
        )));
    }
    Ok(loop_edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_too_coarse_resolution() {
        assert!(matches!(build_disk_mesh(3), Err(Error::Config(_))));
    }

    #[test]
    fn meshes_are_valid_across_resolutions() {
        for res in [4, 5, 6, 8, 16, 32, 48, 64] {
            let mesh = build_disk_mesh(res).unwrap();
            mesh.validate().unwrap_or_else(|e| panic!("res {res}: {e}"));
        }
    }

    #[test]
    fn resolution_64_has_paper_mesh_size() {
        let mesh = build_disk_mesh(64).unwrap();
        let (_, mean, _) = mesh.edge_length_stats();
        assert!((mean - 3.1e-2).abs() < 0.2e-2, "mean edge {mean}");
        assert!((mesh.h_target - 2.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn coarse_mesh_area_is_close_to_pi() {
        let mesh = build_disk_mesh(4).unwrap();
        assert!((mesh.total_area() - PI).abs() / PI < 0.02);
    }

    #[test]
    fn resolution_32_area_matches_inscribed_polygon() {
        let mesh = build_disk_mesh(32).unwrap();
        let area = mesh.total_area();
        let n = mesh.boundary_vertices.len() as f64;
        let polygon = 0.5 * n * (2.0 * PI / n).sin();
        assert!((area - polygon).abs() < 1e-12);
        assert!((area - PI).abs() / PI < 1e-3);
        let (_, mean, _) = mesh.edge_length_stats();
        assert!(PI - area < 2.0 * mean * mean);
    }

    #[test]
    fn area_error_converges_at_second_order() {
        let errs: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&r| PI - build_disk_mesh(r).unwrap().total_area())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn boundary_loop_perimeter() {
        let edges = boundary_edges(&build_disk_mesh(8).unwrap()).unwrap();
        let perim: f64 = edges.iter().map(|e| e.length).sum();
        assert!((perim - 2.0 * PI).abs() / (2.0 * PI) < 0.01);

        let edges = boundary_edges(&build_disk_mesh(64).unwrap()).unwrap();
        let perim: f64 = edges.iter().map(|e| e.length).sum();
        let n = edges.len() as f64;
        assert!((perim - 2.0 * n * (PI / n).sin()).abs() < 1e-12);
        assert!((perim - 2.0 * PI).abs() / (2.0 * PI) < 5e-4);
    }

    #[test]
    fn boundary_loop_is_closed_counterclockwise_and_outward() {
        for res in [4, 8, 24] {
            let mesh = build_disk_mesh(res).unwrap();
            let edges = boundary_edges(&mesh).unwrap();
            assert_eq!(edges.first().unwrap().start, edges.last().unwrap().end);
            assert_eq!(edges.len(), mesh.boundary_vertices.len());
            let mut turning = 0.0;
            for e in &edges {
                let (a, b) = (mesh.vertices[e.start], mesh.vertices[e.end]);
                let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                assert!(e.normal[0] * mid[0] + e.normal[1] * mid[1] > 0.9);
                turning += a[0] * b[1] - a[1] * b[0];
            }
            assert!(turning > 0.0);
        }
    }

    #[test]
    fn disconnected_boundary_is_a_topology_error() {
        let mut mesh = build_disk_mesh(8).unwrap();
        // Two disjoint triangles have two boundary loops.
        mesh.vertices = vec![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [0.5, 0.0], [0.6, 0.0], [0.5, 0.1]];
        mesh.triangles = vec![[0, 1, 2], [3, 4, 5]];
        assert!(matches!(boundary_edges(&mesh), Err(Error::Topology(_))));
    }

    #[test]
    fn text_dump_has_both_blocks() {
        let mesh = build_disk_mesh(4).unwrap();
        let text = mesh.to_text();
        assert!(text.starts_with(&format!("vertices {}", mesh.n_vertices())));
        assert!(text.contains(&format!("triangles {}", mesh.n_triangles())));
    }
}
