//! Nodal fields on a [`Mesh`] and their per-element P1 differentials.

use rayon::prelude::*;

use crate::error::Result;
use crate::mesh::Mesh;
use crate::{Mat2, Vec2};

/// Nodal vector field `u`, one 2-vector per mesh vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub nodal: Vec<Vec2>,
}

/// Piecewise-constant differential data on one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementState {
    pub grad: Mat2,
    pub det: f64,
    pub adj: Mat2,
    pub centroid: Vec2,
}

/// `adj A = [[a22, -a12], [-a21, a11]]`, so that `adj A * A = det A * I`.
pub fn adjugate(a: &Mat2) -> Mat2 {
    Mat2::new(a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)])
}

/// `cof A = (adj A)^T`.
pub fn cofactor(a: &Mat2) -> Mat2 {
    adjugate(a).transpose()
}

impl DeformationField {
    pub fn from_fn(mesh: &Mesh, f: impl Fn(Vec2) -> Vec2) -> Self {
        DeformationField {
            nodal: mesh.vertices.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn identity(mesh: &Mesh) -> Self {
        Self::from_fn(mesh, |x| x)
    }

    pub fn as_flat(&self) -> Vec<f64> {
        self.nodal.iter().flat_map(|v| [v.x, v.y]).collect()
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        DeformationField {
            nodal: flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nodal.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }
}

/// P1 gradient of `u` on triangle `e`.
pub fn element_gradient(mesh: &Mesh, nodal: &[Vec2], e: usize) -> Mat2 {
    let tri = mesh.triangles[e];
    let g = &mesh.shape_grads[e];
    let mut out = Mat2::zeros();
    for k in 0..3 {
        out += nodal[tri[k]] * g[k].transpose();
    }
    out
}

/// P1 gradient of a scalar nodal field on triangle `e`.
pub fn scalar_gradient(mesh: &Mesh, nodal: &[f64], e: usize) -> Vec2 {
    let tri = mesh.triangles[e];
    let g = &mesh.shape_grads[e];
    g[0] * nodal[tri[0]] + g[1] * nodal[tri[1]] + g[2] * nodal[tri[2]]
}

/// Centroid value of a nodal vector field on triangle `e`.
pub fn centroid_value(mesh: &Mesh, nodal: &[Vec2], e: usize) -> Vec2 {
    let [a, b, c] = mesh.triangles[e];
    (nodal[a] + nodal[b] + nodal[c]) / 3.0
}

pub fn element_state(mesh: &Mesh, u: &DeformationField) -> Vec<ElementState> {
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| {
            let grad = element_gradient(mesh, &u.nodal, e);
            ElementState {
                grad,
                det: grad.determinant(),
                adj: adjugate(&grad),
                centroid: mesh.centroids[e],
            }
        })
        .collect()
}

/// Per-element `det grad u`.
pub fn element_dets(mesh: &Mesh, nodal: &[Vec2]) -> Vec<f64> {
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|e| element_gradient(mesh, nodal, e).determinant())
        .collect()
}

/// Barycentric P1 interpolation of `u` at `p`.
pub fn interpolate(mesh: &Mesh, u: &DeformationField, p: Vec2) -> Result<Vec2> {
    let (e, bary) = mesh.locate(p)?;
    let tri = mesh.triangles[e];
    Ok(u.nodal[tri[0]] * bary[0] + u.nodal[tri[1]] * bary[1] + u.nodal[tri[2]] * bary[2])
}

pub fn interpolate_scalar(mesh: &Mesh, nodal: &[f64], p: Vec2) -> Result<f64> {
    let (e, bary) = mesh.locate(p)?;
    let tri = mesh.triangles[e];
    Ok(nodal[tri[0]] * bary[0] + nodal[tri[1]] * bary[1] + nodal[tri[2]] * bary[2])
}
