use std::collections::BTreeSet;

use stagebound::corpus;
use stagebound::stagegraph::{compute_pi_nu, initial_stage, persistent_sets, stage_valuations};
use stagebound::transform::TransformationGraph;
use stagebound::{analyze, Atom, Limits, PopulationProtocol, StateId, Valuation};

fn names(p: &PopulationProtocol, s: &BTreeSet<StateId>) -> Vec<String> {
    s.iter().map(|&x| p.state_name(x).to_string()).collect()
}

#[test]
fn reference_table_rows() {
    for b in corpus::benchmarks() {
        let p = (b.build)();
        let (sg, r) = analyze(&p, &Limits::default()).unwrap();
        assert_eq!((sg.len(), r.overall), (b.stages, b.bound), "{}", b.name);
        assert_eq!(r.states, b.states, "{}", b.name);
        assert_eq!(r.transitions, b.transitions, "{}", b.name);
    }
}

#[test]
fn initial_exp_sets() {
    for (p, want) in [
        (corpus::majority_ex1(true), vec!["AB"]),
        (corpus::majority_ex2(), vec!["AB", "AC", "BC"]),
    ] {
        let g = TransformationGraph::build(&p, &Valuation::new(), &BTreeSet::new());
        let got: Vec<String> = g.exp(&p).iter().map(|h| p.display_head(*h)).collect();
        assert_eq!(got, want, "{}", p.name());
    }
}

#[test]
fn initial_fixed_points_of_example_one() {
    let p = corpus::majority_ex1(true);
    let root = initial_stage(&p);
    let vals = stage_valuations(&root);
    assert_eq!(vals.len(), 3);
    let a = p.state_by_name("A").unwrap();
    let b = p.state_by_name("B").unwrap();
    let t = BTreeSet::new();
    for nu in &vals {
        let (m, n) = persistent_sets(&p, &t, nu);
        let pi = compute_pi_nu(&p, &Valuation::new(), &t, nu);
        let dom: BTreeSet<Atom> = pi.iter().map(|(x, _)| x).collect();
        assert!(n.is_empty());
        match (nu.presence(a), nu.presence(b)) {
            (Some(true), Some(false)) => {
                assert_eq!(names(&p, &m), ["B", "a", "b"]);
                assert_eq!(dom.len(), 4);
            }
            (Some(false), Some(true)) => {
                assert_eq!(names(&p, &m), ["A", "a", "b"]);
                assert_eq!(dom.len(), 4);
            }
            (Some(true), Some(true)) => {
                assert!(m.is_empty());
                assert!(dom.is_empty());
            }
            other => panic!("unexpected valuation {other:?}"),
        }
    }
}
