//! Function-on-function linear regression with basis smoothing, penalized
//! likelihood estimation, information-criterion tuning and bootstrap bands.

pub mod basis;
pub mod bootstrap;
pub mod criteria;
pub mod error;
pub mod linalg;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod smoothing;

pub use basis::{BasisKind, BasisSystem, Domain, GramMatrix, PenaltyMatrix};
pub use bootstrap::{BootstrapBand, BootstrapConfig, ErrorCurves, Refit};
pub use criteria::{Criterion, CriterionReport};
pub use error::{FofrError, Result};
pub use regression::{DesignBlocks, FitMethod, FofrModel, MplOptions, PenaltySpec};
pub use simulation::{CampaignConfig, DgpCase, McResult};
pub use smoothing::{SampledCurves, SelectionGrid, SmoothedCurves};
