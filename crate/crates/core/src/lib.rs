pub mod assembly;
pub mod bc;
pub mod config;
pub mod driver;
pub mod dual;
pub mod linalg;
pub mod mapping;
pub mod mesh;
pub mod meshgen;
pub mod nurbs;
pub mod output;
pub mod physics;
pub mod solver;
pub mod stabilization;
pub mod vec2;
