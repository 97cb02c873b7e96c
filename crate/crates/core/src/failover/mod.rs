//! Failure-aware deployment: which ensembles fit a budget, where their parts
//! go, when servers are deemed failed, and which `h_S` serves each request.

mod detect;
mod family;
mod placement;
mod sim;

pub use detect::{detect_failures, true_availability, FailureTrace, ServerEvent, TraceEvent};
pub use family::{ensemble_family, ensemble_family_with, Budget, DownstreamOption, FamilyEntry, OriginalArch};
pub use placement::{best_fit_place, place, Part, PartId, PlacementPlan, PlacementPolicy, ServerId, ServerSpec};
pub use sim::{
    select_active_subset, simulate, summarize, ClusterScenario, LatencyModel, PlacementSource, RequestRecord, Requests,
    SimOutput, SimSummary,
};
