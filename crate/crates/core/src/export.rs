//! Graphviz and JSON renderings of a stage tree. Both are byte-for-byte
//! deterministic for a given protocol and tree.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{edge_bound, AnalysisReport};
use crate::logic::{Atom, Formula, Valuation};
use crate::protocol::{Head, PopulationProtocol};
use crate::stagegraph::{CaseAnalysis, Stage, StageGraph, StageKind};

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("malformed stage document: {0}")]
    Json(String),
    #[error("document was produced for states {found:?}, protocol has {expected:?}")]
    StateMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("stage {0}: {1}")]
    Shape(usize, String),
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn heads(p: &PopulationProtocol, hs: &BTreeSet<Head>) -> String {
    let v: Vec<String> = hs.iter().map(|h| p.display_head(*h)).collect();
    format!("{{{}}}", v.join(", "))
}

pub fn to_dot(p: &PopulationProtocol, sg: &StageGraph) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(p.name())).unwrap();
    writeln!(out, "  node [shape=box, fontname=\"monospace\"];").unwrap();
    for s in sg.stages() {
        let label = format!(
            "S{} [{}]\\lphi: {}\\lpi: {}\\lT: {}\\l",
            s.id,
            s.kind.label(),
            escape(&s.phi.display(p)),
            escape(&s.pi.display(p)),
            escape(&heads(p, &s.disabled)),
        );
        let style = match s.kind {
            StageKind::Stable(_) => ", style=rounded",
            StageKind::Dead | StageKind::Exhausted => ", style=dashed",
            StageKind::Internal => "",
        };
        writeln!(out, "  s{} [label=\"{}\"{}];", s.id, label, style).unwrap();
    }
    for s in sg.stages() {
        if let (Some(parent), Some(ca)) = (s.parent, &s.analysis) {
            writeln!(out, "  s{} -> s{} [label=\"{}\"];", parent, s.id, edge_bound(ca).tag()).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

/// One stage as stored in the JSON document. Structured fields round-trip;
/// the `*_text` fields are for readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub kind: StageKind,
    pub phi_text: String,
    pub pi_text: String,
    pub disabled_text: Vec<String>,
    /// Bound on the edge from the parent, as a tag.
    pub bound: Option<String>,
    pub phi: Formula,
    pub pi: Valuation,
    pub disabled: BTreeSet<Head>,
    pub via: Option<Valuation>,
    pub analysis: Option<CaseAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDocument {
    pub protocol: String,
    pub states: Vec<String>,
    pub report: AnalysisReport,
    pub stages: Vec<StageRecord>,
}

pub fn to_document(p: &PopulationProtocol, sg: &StageGraph, report: &AnalysisReport) -> StageDocument {
    let stages = sg
        .stages()
        .iter()
        .map(|s| StageRecord {
            id: s.id,
            parent: s.parent,
            children: s.children.clone(),
            kind: s.kind,
            phi_text: s.phi.display(p),
            pi_text: s.pi.display(p),
            disabled_text: s.disabled.iter().map(|h| p.display_head(*h)).collect(),
            bound: s
                .analysis
                .as_ref()
                .filter(|_| s.parent.is_some())
                .map(|ca| edge_bound(ca).tag().to_string()),
            phi: s.phi.clone(),
            pi: s.pi.clone(),
            disabled: s.disabled.clone(),
            via: s.via.clone(),
            analysis: s.analysis.clone(),
        })
        .collect();
    StageDocument {
        protocol: p.name().to_string(),
        states: p.state_ids().map(|s| p.state_name(s).to_string()).collect(),
        report: report.clone(),
        stages,
    }
}

pub fn to_json(p: &PopulationProtocol, sg: &StageGraph, report: &AnalysisReport) -> String {
    let mut s = serde_json::to_string_pretty(&to_document(p, sg, report)).expect("serializable");
    s.push('\n');
    s
}

/// Reads a stage tree back from [`to_json`] output. The structured fields are
/// authoritative; the text fields and bounds are ignored.
pub fn from_json(p: &PopulationProtocol, text: &str) -> Result<StageGraph, ImportError> {
    let doc: StageDocument = serde_json::from_str(text).map_err(|e| ImportError::Json(e.to_string()))?;
    let expected: Vec<String> = p.state_ids().map(|s| p.state_name(s).to_string()).collect();
    if doc.states != expected {
        return Err(ImportError::StateMismatch {
            expected,
            found: doc.states,
        });
    }
    let n = doc.stages.len();
    if n == 0 {
        return Err(ImportError::Json("no stages".into()));
    }
    let mut stages = Vec::with_capacity(n);
    for (i, r) in doc.stages.into_iter().enumerate() {
        if r.id != i {
            return Err(ImportError::Shape(r.id, format!("expected id {i}")));
        }
        if (i == 0) != r.parent.is_none() || r.parent.is_some_and(|q| q >= i) {
            return Err(ImportError::Shape(i, "parent must precede the stage; only stage 0 is a root".into()));
        }
        if let Some(&c) = r.children.iter().find(|&&c| c <= i || c >= n) {
            return Err(ImportError::Shape(i, format!("invalid child {c}")));
        }
        let states = p.num_states();
        let out_of_range = |a: Atom| match a {
            Atom::Presence(s) | Atom::Singleton(s) => s.index() >= states,
            Atom::Out0 | Atom::Out1 => false,
        };
        let bad_state = r.phi.atoms().into_iter().chain(r.pi.iter().map(|(a, _)| a)).any(out_of_range)
            || r.disabled.iter().any(|h| h.hi().index() >= states);
        if bad_state {
            return Err(ImportError::Shape(i, "refers to an unknown state".into()));
        }
        stages.push(Stage {
            id: r.id,
            phi: r.phi,
            pi: r.pi,
            disabled: r.disabled,
            parent: r.parent,
            children: r.children,
            kind: r.kind,
            via: r.via,
            analysis: r.analysis,
        });
    }
    for s in &stages {
        for &c in &s.children {
            if stages[c].parent != Some(s.id) {
                return Err(ImportError::Shape(c, format!("parent does not list stage {}", s.id)));
            }
        }
    }
    Ok(StageGraph::from_stages(stages))
}
