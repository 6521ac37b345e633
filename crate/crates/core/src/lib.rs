//! Height-function solver and verification tools for steady periodic
//! stratified water waves.

pub mod error;
pub mod function_space;
pub mod hodograph;
pub mod inequality;
pub mod io;
pub mod ode;
pub mod regularity;
pub mod solver;
pub mod spectral;
pub mod strip;

pub use error::{Result, WaveError};
