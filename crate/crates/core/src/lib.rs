//! Two-state batch Markov modulated Poisson processes: exact descriptors,
//! canonical transforms, moment-based reconstruction and fitting, likelihood
//! and EM, counting probabilities, queue lengths and trace handling.

pub mod canonical;
pub mod counting;
pub mod descriptors;
pub mod error;
pub mod fit;
pub mod likelihood;
pub mod linalg;
pub mod model;
pub mod optim;
pub mod queue;
pub mod simulate;
pub mod stats;
pub mod trace_io;

pub use canonical::{CanonicalMap2, CanonicalSolution, Degeneracy, MomentSet};
pub use counting::CountDistribution;
pub use descriptors::{DescriptorReport, StationaryVectors};
pub use error::{Error, Result};
pub use model::{BmmppModel, MmppModel, ProbParam, ValidationReport};
pub use fit::{EmpiricalMoments, FitConfig, FitResult, Variant};
pub use likelihood::{EmFit, EmOptions, LikelihoodValue};
pub use queue::{QueueLengthDist, QueueSpec, RhoKind};
pub use simulate::{InitialPhase, ModelBounds, RngSpec, Trace};
pub use trace_io::{RawPacketTrace, TraceSummary};
