//! Geometry optimization on triangle and tetrahedral meshes.

pub mod mesh;
pub mod numerics;
pub mod small;
pub mod energy;
pub mod filter;
pub mod linesearch;
pub mod qn;
pub mod solver;
pub mod io;
pub mod generate;
