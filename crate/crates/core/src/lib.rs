//! Numerical laboratory for the thermodynamic reading of the Schrödinger equation:
//! grid operators, Crank–Nicolson evolution, Madelung hydrodynamics, thermostat
//! bookkeeping, fluctuation-theorem estimators and the vacuum fluctuation ratio.

pub mod error;
pub mod fields;
pub mod ft;
pub mod madelung;
pub mod rng;
pub mod schrodinger;
pub mod thermo;
pub mod variational;
pub mod vft;

pub use error::{Error, Result};
pub use fields::{Boundary, ComplexField, Constants, Grid, MadelungBundle, Mask, RealField};
