//! Structured triangulations of the square `[-1,1]^2` and of discs.

use crate::error::{Error, Result};
use crate::{Mat2, Vec2};

/// Reference domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    /// `Q = [-1, 1]^2`.
    Square,
    /// Disc of the given radius centred at the origin.
    Disc { radius: f64 },
}

/// Which boundary nodes carry Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirichletSet {
    #[default]
    Full,
    /// Only the edges `x2 = -1` and `x2 = 1` (square only).
    TopBottom,
}

/// Triangle mesh with precomputed P1 shape-function gradients.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub n: usize,
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub areas: Vec<f64>,
    pub centroids: Vec<Vec2>,
    /// Gradients of the three hat functions on each triangle.
    pub shape_grads: Vec<[Vec2; 3]>,
    pub boundary: Vec<bool>,
    pub dirichlet: Vec<bool>,
    /// Longest edge.
    pub h_max: f64,
    /// Logical grid spacing `2 / n` scaled to the domain.
    pub spacing: f64,
}

impl Domain {
    pub fn area(&self) -> f64 {
        match self {
            Domain::Square => 4.0,
            Domain::Disc { radius } => std::f64::consts::PI * radius * radius,
        }
    }

    /// Distance from `p` to the boundary (negative outside).
    pub fn dist_to_boundary(&self, p: Vec2) -> f64 {
        match self {
            Domain::Square => (1.0 - p.x.abs()).min(1.0 - p.y.abs()),
            Domain::Disc { radius } => radius - p.norm(),
        }
    }

    /// Map a logical grid point of `[-1,1]^2` into the domain.
    fn map_logical(&self, p: Vec2) -> Vec2 {
        match self {
            Domain::Square => p,
            Domain::Disc { radius } => {
                let inf = p.x.abs().max(p.y.abs());
                let two = p.norm();
                if two == 0.0 {
                    p
                } else {
                    p * (radius * inf / two)
                }
            }
        }
    }

    /// Inverse of `map_logical`.
    fn unmap(&self, q: Vec2) -> Vec2 {
        match self {
            Domain::Square => q,
            Domain::Disc { radius } => {
                let q = q / *radius;
                let inf = q.x.abs().max(q.y.abs());
                if inf == 0.0 {
                    q
                } else {
                    q * (q.norm() / inf)
                }
            }
        }
    }
}

pub fn make_mesh(domain: Domain, n: usize) -> Result<Mesh> {
    make_mesh_with(domain, n, DirichletSet::Full)
}

pub fn make_mesh_with(domain: Domain, n: usize, dirichlet: DirichletSet) -> Result<Mesh> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("need n >= 2, got {n}")));
    }
    if let Domain::Disc { radius } = domain {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParams(format!("disc radius must be positive, got {radius}")));
        }
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("disc meshes need even n, got {n}")));
        }
        if dirichlet == DirichletSet::TopBottom {
            return Err(Error::InvalidParams("top/bottom Dirichlet set needs the square".into()));
        }
    }

    let stride = n + 1;
    let idx = |i: usize, j: usize| j * stride + i;
    let logical = |i: usize, j: usize| {
        Vec2::new(-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64)
    };

    let mut vertices = Vec::with_capacity(stride * stride);
    let mut boundary = Vec::with_capacity(stride * stride);
    let mut dirichlet_flags = Vec::with_capacity(stride * stride);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(domain.map_logical(logical(i, j)));
            let on_edge = i == 0 || i == n || j == 0 || j == n;
            boundary.push(on_edge);
            dirichlet_flags.push(match dirichlet {
                DirichletSet::Full => on_edge,
                DirichletSet::TopBottom => j == 0 || j == n,
            });
        }
    }

    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            let main_diagonal = match domain {
                Domain::Square => true,
                Domain::Disc { .. } => {
                    // union-jack: diagonals follow the lines x1 = +-x2
                    let cx = i as f64 + 0.5 - n as f64 / 2.0;
                    let cy = j as f64 + 0.5 - n as f64 / 2.0;
                    cx * cy > 0.0
                }
            };
            if main_diagonal {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }

    let mut areas = Vec::with_capacity(triangles.len());
    let mut centroids = Vec::with_capacity(triangles.len());
    let mut shape_grads = Vec::with_capacity(triangles.len());
    let mut h_max = 0.0f64;
    for (e, tri) in triangles.iter().enumerate() {
        let [p0, p1, p2] = tri.map(|k| vertices[k]);
        let d = Mat2::from_columns(&[p1 - p0, p2 - p0]);
        let det = d.determinant();
        if det <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "triangle {e} has non-positive area {}",
                det / 2.0
            )));
        }
        let dinv = d.try_inverse().expect("nonsingular");
        let g1 = Vec2::new(dinv[(0, 0)], dinv[(0, 1)]);
        let g2 = Vec2::new(dinv[(1, 0)], dinv[(1, 1)]);
        shape_grads.push([-(g1 + g2), g1, g2]);
        areas.push(det / 2.0);
        centroids.push((p0 + p1 + p2) / 3.0);
        for (a, b) in [(p0, p1), (p1, p2), (p2, p0)] {
            h_max = h_max.max((a - b).norm());
        }
    }

    let spacing = match domain {
        Domain::Square => 2.0 / n as f64,
        Domain::Disc { radius } => 2.0 * radius / n as f64,
    };

    Ok(Mesh {
        domain,
        n,
        vertices,
        triangles,
        areas,
        centroids,
        shape_grads,
        boundary,
        dirichlet: dirichlet_flags,
        h_max,
        spacing,
    })
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        crate::ext::compensated_sum(self.areas.iter().copied())
    }

    /// Lumped nodal areas (one third of each incident triangle).
    pub fn lumped_areas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vertices()];
        for (tri, a) in self.triangles.iter().zip(&self.areas) {
            for &k in tri {
                out[k] += a / 3.0;
            }
        }
        out
    }

    /// Barycentric coordinates of `p` in triangle `e`.
    pub fn barycentric(&self, e: usize, p: Vec2) -> [f64; 3] {
        let [i0, i1, i2] = self.triangles[e];
        let (p0, p1, p2) = (self.vertices[i0], self.vertices[i1], self.vertices[i2]);
        let d = Mat2::from_columns(&[p1 - p0, p2 - p0]);
        let rhs = p - p0;
        let det = d.determinant();
        let l1 = (rhs.x * d[(1, 1)] - rhs.y * d[(0, 1)]) / det;
        let l2 = (d[(0, 0)] * rhs.y - d[(1, 0)] * rhs.x) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Locate the triangle containing `p`, returning it with barycentric
    /// coordinates.
    pub fn locate(&self, p: Vec2) -> Result<(usize, [f64; 3])> {
        let n = self.n;
        let logical = self.domain.unmap(p);
        let fi = ((logical.x + 1.0) / 2.0 * n as f64).floor() as i64;
        let fj = ((logical.y + 1.0) / 2.0 * n as f64).floor() as i64;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for dj in -1..=1 {
            for di in -1..=1 {
                let (ci, cj) = (fi + di, fj + dj);
                if ci < 0 || cj < 0 || ci >= n as i64 || cj >= n as i64 {
                    continue;
                }
                let cell = cj as usize * n + ci as usize;
                for e in [2 * cell, 2 * cell + 1] {
                    let bary = self.barycentric(e, p);
                    let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
                    if best.as_ref().is_none_or(|b| worst > b.2) {
                        best = Some((e, bary, worst));
                    }
                }
            }
        }
        match best {
            Some((e, bary, worst)) if worst >= -1e-10 => Ok((e, bary)),
            _ => Err(Error::OutOfDomain { x: p.x, y: p.y }),
        }
    }

    /// Vertex indices `(i, j)` of the logical grid.
    pub fn grid_index(&self, v: usize) -> (usize, usize) {
        (v % (self.n + 1), v / (self.n + 1))
    }

    pub fn vertex_at(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }
}
