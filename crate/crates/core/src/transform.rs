//! Transformation graphs: which states can still turn into which, given the
//! heads that are known to be disabled.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::logic::{heads_formula, implies, xi, Formula, Valuation};
use crate::protocol::{Head, PopulationProtocol, StateId, Transition};

/// SCC decomposition of a directed graph over a subset of states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component id per state (`None` for states outside the vertex set).
    /// Ids are numbered by the smallest state they contain.
    comp: Vec<Option<usize>>,
    bottom: Vec<bool>,
}

impl Components {
    pub fn compute(
        num_states: usize,
        vertices: &BTreeSet<StateId>,
        edges: impl IntoIterator<Item = (StateId, StateId)> + Clone,
    ) -> Components {
        let mut g: DiGraph<StateId, ()> = DiGraph::new();
        let mut node: BTreeMap<StateId, NodeIndex> = BTreeMap::new();
        for &v in vertices {
            node.insert(v, g.add_node(v));
        }
        for (a, b) in edges.clone() {
            if let (Some(&x), Some(&y)) = (node.get(&a), node.get(&b)) {
                g.add_edge(x, y, ());
            }
        }
        let mut sccs: Vec<Vec<StateId>> = tarjan_scc(&g)
            .into_iter()
            .map(|c| {
                let mut states: Vec<StateId> = c.into_iter().map(|n| g[n]).collect();
                states.sort();
                states
            })
            .collect();
        sccs.sort();
        let mut comp = vec![None; num_states];
        for (i, c) in sccs.iter().enumerate() {
            for s in c {
                comp[s.index()] = Some(i);
            }
        }
        let mut bottom = vec![true; sccs.len()];
        for (a, b) in edges {
            if let (Some(x), Some(y)) = (comp[a.index()], comp[b.index()]) {
                if x != y {
                    bottom[x] = false;
                }
            }
        }
        Components { comp, bottom }
    }

    pub fn of(&self, s: StateId) -> Option<usize> {
        self.comp[s.index()]
    }

    pub fn count(&self) -> usize {
        self.bottom.len()
    }

    pub fn is_bottom(&self, component: usize) -> bool {
        self.bottom[component]
    }

    /// States lying in a non-bottom component.
    pub fn non_bottom_states(&self) -> BTreeSet<StateId> {
        self.comp
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.filter(|&c| !self.bottom[c]).map(|_| StateId(i)))
            .collect()
    }
}

/// Edges a non-idle transition generates: the four lhs/rhs pairs when the two
/// sides share no state, otherwise one edge between the residues left after
/// cancelling one shared state.
pub fn generated_edges(t: &Transition) -> Vec<(StateId, StateId)> {
    if t.is_idle() {
        return Vec::new();
    }
    let [a, b] = t.lhs.states();
    let [c, d] = t.rhs.states();
    let disjoint = !t.rhs.contains(a) && !t.rhs.contains(b);
    let mut out = Vec::new();
    if disjoint {
        for x in [a, b] {
            for y in [c, d] {
                if !out.contains(&(x, y)) {
                    out.push((x, y));
                }
            }
        }
    } else {
        let shared = if t.rhs.contains(a) { a } else { b };
        let x = t.lhs.partner(shared).expect("shared state is in lhs");
        let y = t.rhs.partner(shared).expect("shared state is in rhs");
        out.push((x, y));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TransformationGraph {
    vertices: BTreeSet<StateId>,
    /// Edge -> indices (into `PopulationProtocol::transitions`) generating it.
    edges: BTreeMap<(StateId, StateId), Vec<usize>>,
    /// Heads whose non-idle rules are not disabled under the context.
    live_heads: BTreeSet<Head>,
    components: Components,
}

/// `π ∧ Ψ_T` as a formula.
pub fn context(p: &PopulationProtocol, pi: &Valuation, t: &BTreeSet<Head>) -> Formula {
    Formula::and([pi.formula(), heads_formula(p, t)])
}

/// Heads with a non-idle rule for which `ctx ⇒ ξ_h` is not a tautology.
pub fn live_heads(p: &PopulationProtocol, ctx: &Formula) -> BTreeSet<Head> {
    let heads: BTreeSet<Head> = p.non_idle_transitions().map(|t| t.lhs).collect();
    heads
        .into_iter()
        .filter(|&h| !implies(ctx, &xi(p, h)))
        .collect()
}

impl TransformationGraph {
    pub fn build(p: &PopulationProtocol, pi: &Valuation, t: &BTreeSet<Head>) -> Self {
        let ctx = context(p, pi, t);
        let live = live_heads(p, &ctx);
        Self::from_live_heads(p, pi, live)
    }

    pub fn from_live_heads(p: &PopulationProtocol, pi: &Valuation, live: BTreeSet<Head>) -> Self {
        let vertices: BTreeSet<StateId> = p
            .state_ids()
            .filter(|&s| pi.presence(s) != Some(false))
            .collect();
        let mut edges: BTreeMap<(StateId, StateId), Vec<usize>> = BTreeMap::new();
        for (i, tr) in p.transitions().iter().enumerate() {
            if tr.is_idle() || !live.contains(&tr.lhs) {
                continue;
            }
            for e in generated_edges(tr) {
                if vertices.contains(&e.0) && vertices.contains(&e.1) {
                    edges.entry(e).or_default().push(i);
                }
            }
        }
        let components =
            Components::compute(p.num_states(), &vertices, edges.keys().copied().collect::<Vec<_>>());
        TransformationGraph {
            vertices,
            edges,
            live_heads: live,
            components,
        }
    }

    pub fn vertices(&self) -> &BTreeSet<StateId> {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = ((StateId, StateId), &[usize])> {
        self.edges.iter().map(|(e, ts)| (*e, ts.as_slice()))
    }

    pub fn has_edge(&self, a: StateId, b: StateId) -> bool {
        self.edges.contains_key(&(a, b))
    }

    pub fn live_heads(&self) -> &BTreeSet<Head> {
        &self.live_heads
    }

    pub fn components(&self) -> &Components {
        &self.components
    }

    pub fn scc(&self, s: StateId) -> Option<usize> {
        self.components.of(s)
    }

    /// `U`: states in non-bottom SCCs.
    pub fn non_bottom_states(&self) -> BTreeSet<StateId> {
        self.components.non_bottom_states()
    }

    fn crosses(&self, (a, b): (StateId, StateId)) -> bool {
        self.scc(a) != self.scc(b)
    }

    /// `Exp_ν`: heads of transitions generating an edge between two SCCs.
    pub fn exp(&self, p: &PopulationProtocol) -> BTreeSet<Head> {
        let mut out = BTreeSet::new();
        for (e, ts) in &self.edges {
            if self.crosses(*e) {
                out.extend(ts.iter().map(|&i| p.transitions()[i].lhs));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_protocol;

    const EX1: &str = "states: A B a b\ninputs: x -> A, y -> B\noutput1: B b\ntransitions:\n  A B -> a b\n  A b -> A a\n  B a -> B b\n  b a -> b b\n";
    const EX2: &str = "states: A B C a b\ninputs: x -> A, y -> B\noutput1: B b C\ntransitions:\n  A B -> b C\n  A C -> A a\n  B C -> B b\n  B a -> B b\n  A b -> A a\n  C a -> C b\n";

    fn names(p: &PopulationProtocol, g: &TransformationGraph) -> Vec<String> {
        g.edges()
            .map(|((a, b), _)| format!("{}{}", p.state_name(a), p.state_name(b)))
            .collect()
    }

    fn heads(p: &PopulationProtocol, hs: &BTreeSet<Head>) -> Vec<String> {
        hs.iter().map(|&h| p.display_head(h)).collect()
    }

    #[test]
    fn example_one_initial_graph() {
        let p = parse_protocol(EX1).unwrap();
        let g = TransformationGraph::build(&p, &Valuation::new(), &BTreeSet::new());
        let mut e = names(&p, &g);
        e.sort();
        assert_eq!(e, vec!["Aa", "Ab", "Ba", "Bb", "ab", "ba"]);
        assert_eq!(heads(&p, &g.exp(&p)), vec!["AB"]);
        assert_eq!(g.components().count(), 3);
    }

    #[test]
    fn example_two_initial_graph() {
        let p = parse_protocol(EX2).unwrap();
        let g = TransformationGraph::build(&p, &Valuation::new(), &BTreeSet::new());
        let mut e = names(&p, &g);
        e.sort();
        assert_eq!(e, vec!["AC", "Ab", "BC", "Bb", "Ca", "Cb", "ab", "ba"]);
        assert_eq!(heads(&p, &g.exp(&p)), vec!["AB", "AC", "BC"]);
    }

    #[test]
    fn residue_edges() {
        let p = parse_protocol(
            "states: A B D\ninputs: x -> A\noutput1: D\ntransitions:\n  A A -> A D\n  A B -> A A\n  B D -> D D\n",
        )
        .unwrap();
        let mut got: Vec<Vec<(usize, usize)>> = p
            .non_idle_transitions()
            .map(|t| generated_edges(t).into_iter().map(|(a, b)| (a.0, b.0)).collect())
            .collect();
        got.sort();
        assert_eq!(got, vec![vec![(0, 2)], vec![(1, 0)], vec![(1, 2)]]);
    }

    #[test]
    fn disabled_heads_give_edgeless_graph() {
        let p = parse_protocol(EX1).unwrap();
        let all: BTreeSet<Head> = p.non_idle_transitions().map(|t| t.lhs).collect();
        let g = TransformationGraph::build(&p, &Valuation::new(), &all);
        assert_eq!(g.edges().count(), 0);
        assert_eq!(g.components().count(), 4);
        assert!(g.exp(&p).is_empty());
        assert!(g.non_bottom_states().is_empty());
    }
}
