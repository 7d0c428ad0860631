//! Extended norm scale on grid functions: exponent algebra, norms, and
//! empirical checks of interpolation and Gagliardo–Nirenberg type
//! inequalities.

pub mod exponent;
pub mod grid;
pub mod norm;
pub mod proof;
pub mod iso;
pub mod harness;
