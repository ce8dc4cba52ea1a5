//! Numerical toolkit for the dimensional-reduction identity between
//! self-avoiding branched polymers in `D + 2` dimensions and repulsive gases
//! in `D` dimensions.

pub mod analysis;
pub mod combinatorics;
pub mod error;
pub mod forestroot;
pub mod gas;
pub mod mc;
pub mod polymer;
pub mod potential;
pub mod quad;
pub mod reduction;

pub use error::{Error, Result};
pub use mc::{MCEstimate, Value};
pub use potential::{PotentialSpec, SoftPotential};
