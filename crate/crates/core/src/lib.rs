//! Planar elasticity with a determinant barrier on P1 triangle meshes.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod ext;
pub mod field;
pub mod law;
pub mod mesh;
pub mod regularity;
pub mod shear;
pub mod solver;
pub mod twist;

pub use error::{Error, Result};
pub use ext::Extended;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Round-trip scientific notation used in every output file.
pub fn fmt_sci(x: f64) -> String {
    format!("{x:.17e}")
}
