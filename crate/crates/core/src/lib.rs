//! Static analysis of population protocols: stage-graph construction, symbolic
//! bounds on the expected number of interactions until stable consensus, and a
//! finite-instance oracle to check the construction on small populations.

pub mod bounds;
pub mod corpus;
pub mod export;
pub mod logic;
pub mod protocol;
pub mod stagegraph;
pub mod transform;
pub mod verify;

pub use bounds::{aggregate, AnalysisReport, Bound, ConsensusClaim};
pub use logic::{Atom, Formula, Valuation};
pub use protocol::{
    parse_protocol, Configuration, Head, PopulationProtocol, ProtocolBuilder, ProtocolError,
    StateId, Transition,
};
pub use stagegraph::{build_stage_graph, BuildError, Limits, Stage, StageGraph, StageKind};

/// Builds the stage tree and classifies it in one go.
pub fn analyze(p: &PopulationProtocol, limits: &Limits) -> Result<(StageGraph, AnalysisReport), BuildError> {
    let start = std::time::Instant::now();
    let sg = build_stage_graph(p, limits)?;
    let report = aggregate(p, &sg, start.elapsed());
    Ok((sg, report))
}
