//! Numerical laboratory for generalized interval exchange transformations.

pub mod birkhoff;
pub mod combinatorics;
pub mod diffeo;
pub mod diophantine;
pub mod distance;
pub mod giet;
pub mod induction;
pub mod matrix;
pub mod quad;
pub mod real;
pub mod regularity;
pub mod towers;

pub use birkhoff::{BirkhoffError, Decomposer, Decomposition, Observable, SpecialSums};
pub use combinatorics::{Combinatorics, CombinatoricsError, SingularityStructure};
pub use diffeo::{Diffeo, DiffeoSpec, Jet};
pub use diophantine::{growth_fit, tpg_probe, GrowthFit, TpgReport};
pub use giet::{Direction, Giet, GietDocument, GietError, Side, StandardIet};
pub use induction::{Acceleration, InductionChain, InductionConfig, InductionError, InductionRecord, Winner};
pub use matrix::IncidenceMatrix;
pub use real::{tolerance, DEFAULT_PRECISION};
pub use regularity::{ApproximationCertificate, OrbitCache, PiecewiseLinear, RegularityError, RegularityReport};
pub use towers::{Covering, DynamicalPartition, FloorAddress, Scale, TowerError, Towers};
