pub mod error;
pub mod geodesic;
pub mod group;
pub mod heisenberg;
pub mod hopflax;
pub mod optim;
pub mod probe;

pub use error::{Error, Result};
pub use geodesic::{Covector, DistanceBackend, ExtremalPath, OracleOptions, ShootingOptions, ShootingResult};
pub use group::{GroupSpec, HorizontalVec, Law, Point};
