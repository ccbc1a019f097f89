//! Asymptotic bounds on stage transitions and their aggregation into a
//! protocol-level bound.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::logic::{heads_formula, implies, xi, Formula};
use crate::protocol::{Head, PopulationProtocol, StateId};
use crate::stagegraph::{CaseAnalysis, StageGraph, StageKind};
use crate::transform::TransformationGraph;

/// Expected-interaction classes, ordered from best to worst.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Bound {
    Zero,
    Quadratic,
    QuasiQuadratic,
    Cubic,
    PolyUnknown,
    Exponential,
}

impl Bound {
    pub const ALL: [Bound; 6] = [
        Bound::Zero,
        Bound::Quadratic,
        Bound::QuasiQuadratic,
        Bound::Cubic,
        Bound::PolyUnknown,
        Bound::Exponential,
    ];

    /// Interaction complexity, e.g. `O(n^2·log n)`.
    pub fn interactions(self) -> &'static str {
        match self {
            Bound::Zero => "0",
            Bound::Quadratic => "O(n^2)",
            Bound::QuasiQuadratic => "O(n^2·log n)",
            Bound::Cubic => "O(n^3)",
            Bound::PolyUnknown => "n^O(1)",
            Bound::Exponential => "exp(n)",
        }
    }

    /// The same class divided by `n`.
    pub fn parallel_time(self) -> &'static str {
        match self {
            Bound::Zero => "0",
            Bound::Quadratic => "O(n)",
            Bound::QuasiQuadratic => "O(n·log n)",
            Bound::Cubic => "O(n^2)",
            Bound::PolyUnknown => "n^O(1)",
            Bound::Exponential => "exp(n)",
        }
    }

    /// Short machine-friendly tag used in CSV and JSON.
    pub fn tag(self) -> &'static str {
        match self {
            Bound::Zero => "0",
            Bound::Quadratic => "n^2",
            Bound::QuasiQuadratic => "n^2 log n",
            Bound::Cubic => "n^3",
            Bound::PolyUnknown => "poly",
            Bound::Exponential => "exp(n)",
        }
    }

    pub fn from_tag(s: &str) -> Option<Bound> {
        Bound::ALL.into_iter().find(|b| b.tag() == s)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.interactions())
    }
}

/// Whether the successor is fast: every state `A` in a non-bottom SCC keeps some
/// head of `Exp_ν` containing it enabled while `Exp_ν` is not yet disabled.
pub fn is_fast(
    p: &PopulationProtocol,
    ctx: &Formula,
    exp: &BTreeSet<Head>,
    u: &BTreeSet<StateId>,
) -> bool {
    let not_exp = Formula::not(heads_formula(p, exp));
    u.iter().all(|&a| {
        let lhs = Formula::and([ctx.clone(), not_exp.clone(), Formula::present(a)]);
        let rhs = Formula::or(
            exp.iter()
                .filter(|h| h.contains(a))
                .map(|&h| Formula::not(xi(p, h))),
        );
        implies(&lhs, &rhs)
    })
}

/// Whether the successor is very fast: every live non-idle transition touching
/// a non-bottom SCC moves both agents to other SCCs.
pub fn is_very_fast(p: &PopulationProtocol, g: &TransformationGraph) -> bool {
    let u = g.non_bottom_states();
    let v = g.vertices();
    p.non_idle_transitions().all(|t| {
        let [a, b] = t.lhs.states();
        let [c, d] = t.rhs.states();
        let all = [a, b, c, d];
        if !all.iter().all(|s| v.contains(s)) || !all.iter().any(|s| u.contains(s)) {
            return true;
        }
        if !g.live_heads().contains(&t.lhs) {
            return true;
        }
        let scc = |s| g.scc(s);
        scc(c) != scc(a) && scc(a) != scc(d) && scc(c) != scc(b) && scc(b) != scc(d)
    })
}

/// Bound on reaching the successor described by `ca`.
pub fn edge_bound(ca: &CaseAnalysis) -> Bound {
    if ca.stable.is_some() || ca.dead {
        return Bound::Zero;
    }
    if ca.exp.is_empty() {
        return Bound::Exponential;
    }
    if ca.j.is_empty() {
        return Bound::PolyUnknown;
    }
    if ca.very_fast {
        Bound::Quadratic
    } else if ca.fast {
        Bound::QuasiQuadratic
    } else {
        Bound::Cubic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusClaim {
    Certified,
    DeadTerminalPresent,
    ExhaustedTerminalPresent,
}

impl fmt::Display for ConsensusClaim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConsensusClaim::Certified => "certified",
            ConsensusClaim::DeadTerminalPresent => "dead-terminal-present",
            ConsensusClaim::ExhaustedTerminalPresent => "exhausted-terminal-present",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeBound {
    pub parent: usize,
    pub child: usize,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub protocol: String,
    pub states: usize,
    pub transitions: usize,
    pub stages: usize,
    pub overall: Bound,
    pub edges: Vec<EdgeBound>,
    pub all_terminals_stable: bool,
    pub claim: ConsensusClaim,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl AnalysisReport {
    pub fn summary_line(&self) -> String {
        format!(
            "bound: {}; stages: {}; {}",
            self.overall.interactions(),
            self.stages,
            self.claim
        )
    }
}

/// Classifies every edge of `sg` and takes the maximum.
pub fn aggregate(p: &PopulationProtocol, sg: &StageGraph, wall_time: Duration) -> AnalysisReport {
    let mut edges = Vec::new();
    for stage in sg.stages() {
        if let (Some(parent), Some(ca)) = (stage.parent, stage.analysis.as_ref()) {
            edges.push(EdgeBound {
                parent,
                child: stage.id,
                bound: edge_bound(ca),
            });
        }
    }
    let overall = edges.iter().map(|e| e.bound).max().unwrap_or(Bound::Zero);
    let terminals: Vec<StageKind> = sg
        .stages()
        .iter()
        .filter(|s| s.children.is_empty())
        .map(|s| s.kind)
        .collect();
    let all_terminals_stable = terminals.iter().all(|k| matches!(k, StageKind::Stable(_)));
    let claim = if terminals.contains(&StageKind::Exhausted) {
        ConsensusClaim::ExhaustedTerminalPresent
    } else if terminals.contains(&StageKind::Dead) {
        ConsensusClaim::DeadTerminalPresent
    } else {
        ConsensusClaim::Certified
    };
    AnalysisReport {
        protocol: p.name().to_string(),
        states: p.num_states(),
        transitions: p.explicit_transitions().count(),
        stages: sg.len(),
        overall,
        edges,
        all_terminals_stable,
        claim,
        wall_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_order() {
        for w in Bound::ALL.windows(2) {
            assert!(w[0] < w[1]);
        }
        for b in Bound::ALL {
            assert_eq!(Bound::from_tag(b.tag()), Some(b));
        }
    }

    #[test]
    fn refinement_precedence() {
        let mut ca = CaseAnalysis::default();
        ca.exp.insert(Head::new(StateId(0), StateId(1)));
        assert_eq!(edge_bound(&ca), Bound::PolyUnknown);
        ca.j = ca.exp.clone();
        assert_eq!(edge_bound(&ca), Bound::Cubic);
        ca.fast = true;
        assert_eq!(edge_bound(&ca), Bound::QuasiQuadratic);
        ca.very_fast = true;
        assert_eq!(edge_bound(&ca), Bound::Quadratic);
        ca.stable = Some(true);
        assert_eq!(edge_bound(&ca), Bound::Zero);
        let empty = CaseAnalysis::default();
        assert_eq!(edge_bound(&empty), Bound::Exponential);
    }

    #[test]
    fn empty_u_is_fast() {
        let p = crate::protocol::parse_protocol(
            "states: A B\ninputs: x -> A\noutput1: B\ntransitions:\n  A B -> B B\n",
        )
        .unwrap();
        assert!(is_fast(&p, &Formula::True, &BTreeSet::new(), &BTreeSet::new()));
    }
}
