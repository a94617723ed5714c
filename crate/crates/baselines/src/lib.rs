//! Classical inverse-design baselines: simulated annealing over the full
//! discrete/continuous design space, and L-BFGS thickness refinement driven
//! by an analytic TMM Jacobian.

pub mod diffopt;
pub mod jacobian;
pub mod lbfgs;
pub mod merit;
pub mod sa;

pub use diffopt::{diffopt_inverse, DiffOptConfig, DiffOptDesigner, DiffOptResult};
pub use jacobian::{spectrum_thickness_jacobian, Jacobian};
pub use merit::merit;
pub use sa::{sa_inverse, SaConfig, SaDesigner, SaResult};
