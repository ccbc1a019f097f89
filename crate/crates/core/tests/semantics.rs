use std::collections::BTreeMap;

use num_rational::{BigRational, Rational64};
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use stagebound::corpus;
use stagebound::verify::{self, SimTarget};
use stagebound::{Configuration, Head, PopulationProtocol};

/// Distribution of one step by listing every ordered pair of distinct agents.
fn brute_step(p: &PopulationProtocol, c: &Configuration) -> BTreeMap<Configuration, Rational64> {
    let agents: Vec<_> = p
        .state_ids()
        .flat_map(|s| std::iter::repeat_n(s, c.get(s) as usize))
        .collect();
    let n = agents.len() as i64;
    let mut out = BTreeMap::new();
    for i in 0..agents.len() {
        for j in 0..agents.len() {
            if i == j {
                continue;
            }
            let head = Head::new(agents[i], agents[j]);
            let rules: Vec<_> = p.transitions_with_head(head).collect();
            for t in &rules {
                let w = Rational64::new(1, n * (n - 1) * rules.len() as i64);
                *out.entry(c.fire(t)).or_insert_with(Rational64::zero) += w;
            }
        }
    }
    out
}

fn protocol_and_config() -> impl Strategy<Value = (usize, Vec<u32>)> {
    let n = corpus::benchmarks().len();
    (0..n).prop_flat_map(|i| {
        let q = (corpus::benchmarks()[i].build)().num_states();
        (Just(i), prop::collection::vec(0u32..4, q))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn step_distribution_is_a_distribution((i, counts) in protocol_and_config()) {
        let p = (corpus::benchmarks()[i].build)();
        let c = Configuration::new(counts);
        prop_assume!(c.size() >= 2);
        let d = p.step_distribution(&c).unwrap();
        let total: Rational64 = d.values().copied().sum();
        prop_assert_eq!(total, Rational64::from_integer(1));
        prop_assert!(d.keys().all(|x| x.size() == c.size()));
        prop_assert_eq!(d, brute_step(&p, &c));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn explored_chains_are_stochastic_and_stability_is_closed((i, counts) in protocol_and_config()) {
        let p = (corpus::benchmarks()[i].build)();
        let c = Configuration::new(counts);
        prop_assume!(c.size() >= 2 && c.size() <= 8);
        let g = verify::explore(&p, &c, 100_000).unwrap();
        let q = p.num_states() as u64;
        let bound = binomial(c.size() + q - 1, q - 1);
        prop_assert!(g.len() as u64 <= bound);
        let st = verify::stable_set(&g, &p);
        for v in 0..g.len() {
            let total: Rational64 = g.successors(v).iter().map(|(_, r)| *r).sum();
            prop_assert_eq!(total, Rational64::from_integer(1));
            if st[v] {
                prop_assert!(g.successors(v).iter().all(|(u, _)| st[*u]));
                prop_assert!(verify::consensus(&p, g.node(v)).is_some());
            }
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[test]
fn example_one_smallest_tie_takes_two_steps() {
    let p = corpus::majority_ex1(true);
    let mut c = Configuration::zero(p.num_states());
    c.set(p.state_by_name("A").unwrap(), 1);
    c.set(p.state_by_name("B").unwrap(), 1);
    match verify::expected_steps_to_stable(&p, &c, 1000).unwrap() {
        verify::Expectation::Exact(e) => assert_eq!(e, BigRational::from_integer(2.into())),
        other => panic!("expected an exact value, got {other:?}"),
    }
}

/// Small chains across the corpus for the Monte Carlo agreement check.
fn small_chains() -> Vec<(PopulationProtocol, Configuration)> {
    let mut out = Vec::new();
    for b in corpus::benchmarks() {
        let p = (b.build)();
        let inputs = p.input_states();
        for n in [3u32, 4] {
            let mut c = Configuration::zero(p.num_states());
            let first = inputs[0];
            let last = *inputs.last().unwrap();
            c.set(first, n - 1);
            c.set(last, c.get(last) + 1);
            let g = verify::explore(&p, &c, 10_000).unwrap();
            if verify::holds_diamond_as(&g, &verify::stable_set(&g, &p)) {
                out.push((p.clone(), c));
            }
        }
    }
    out
}

#[test]
fn monte_carlo_agrees_with_exact_expectation() {
    let chains = small_chains();
    assert!(chains.len() >= 20, "only {} chains", chains.len());
    for (k, (p, c)) in chains.iter().enumerate() {
        let exact = verify::expected_steps_to_stable(p, c, 10_000).unwrap().to_f64();
        let r = verify::simulate(p, c, 10_000, 1000 + k as u64, &SimTarget::Stable, 10_000_000, 10_000).unwrap();
        let (mean, se) = (r.mean.unwrap(), r.stderr().unwrap());
        let z = if se == 0.0 { (mean - exact).abs() } else { (mean - exact).abs() / se };
        assert!(
            z <= 5.0,
            "{} {}: mean {mean} stderr {se} exact {exact}",
            p.name(),
            p.display_config(c)
        );
    }
}

#[test]
fn float_solver_matches_exact() {
    let p = corpus::majority_ex2();
    for c in p.initial_configurations(6) {
        let g = verify::explore(&p, &c, 10_000).unwrap();
        let st = verify::stable_set(&g, &p);
        let exact = verify::expected_steps_exact(&g, &st).unwrap();
        let float = verify::expected_steps_float(&g, &st).unwrap();
        for (e, f) in exact.iter().zip(&float) {
            let e = e.to_f64().unwrap();
            assert!((e - f).abs() <= 1e-9 * e.max(1.0), "{e} vs {f}");
        }
    }
}
