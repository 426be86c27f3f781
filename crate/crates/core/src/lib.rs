pub mod error;
pub mod estimates;
pub mod htransform;
pub mod hypgeo;
pub mod kernels;
pub mod nls;
pub mod propagator;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
