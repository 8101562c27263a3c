//! Krein-space spectral theory and scattering for discretized charged
//! Klein-Gordon equations in one dimension.

pub mod definitize;
pub mod dynamics;
pub mod klein;
pub mod krein;
pub mod linalg;
pub mod model;
pub mod par;
pub mod quad;
pub mod scenario;
pub mod scattering;
pub mod smooth;
