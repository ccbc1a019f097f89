//! Finite-instance oracle: the Markov chain of a fixed population size,
//! probability-one modalities on it, exact expected hitting times, validation
//! of a stage tree, and seeded Monte Carlo simulation.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Write;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Atom, Formula};
use crate::protocol::{Configuration, Head, PopulationProtocol, ProtocolError, Transition};
use crate::stagegraph::{Stage, StageGraph, StageKind};

/// Above this many nodes expected times are solved in floating point.
pub const EXACT_NODE_LIMIT: usize = 5000;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("exploration exceeded the cap of {0} configurations")]
    NodeCap(usize),
    #[error("target is not reached with probability one; the expectation diverges")]
    Divergent,
    #[error("a trial exceeded the step cap of {0} interactions without reaching the target")]
    StepCap(u64),
    #[error("floating-point solve left a residual of {0:e}")]
    Residual(f64),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Node predicate over a [`ReachGraph`], indexed like its nodes.
pub type NodeSet = Vec<bool>;

/// Reachable part of the induced Markov chain, with exact step probabilities.
#[derive(Debug, Clone)]
pub struct ReachGraph {
    nodes: Vec<Configuration>,
    index: HashMap<Configuration, usize>,
    succ: Vec<Vec<(usize, Rational64)>>,
    roots: Vec<usize>,
}

impl ReachGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &Configuration {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Configuration] {
        &self.nodes
    }

    pub fn successors(&self, i: usize) -> &[(usize, Rational64)] {
        &self.succ[i]
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c).copied()
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.len()];
        for (v, out) in self.succ.iter().enumerate() {
            for &(u, _) in out {
                pred[u].push(v);
            }
        }
        pred
    }

    /// Nodes satisfying a propositional formula.
    pub fn satisfying(&self, p: &PopulationProtocol, f: &Formula) -> NodeSet {
        self.nodes.iter().map(|c| f.holds_in(p, c)).collect()
    }
}

/// Breadth-first closure of `c0` under the step relation.
pub fn explore(p: &PopulationProtocol, c0: &Configuration, cap: usize) -> Result<ReachGraph, VerifyError> {
    explore_many(p, std::slice::from_ref(c0), cap)
}

/// Like [`explore`] for several roots sharing one graph.
pub fn explore_many(
    p: &PopulationProtocol,
    roots: &[Configuration],
    cap: usize,
) -> Result<ReachGraph, VerifyError> {
    let mut g = ReachGraph {
        nodes: Vec::new(),
        index: HashMap::new(),
        succ: Vec::new(),
        roots: Vec::new(),
    };
    let mut queue = VecDeque::new();
    for c in roots {
        if c.size() < 2 {
            return Err(ProtocolError::TooSmall(c.size()).into());
        }
        let id = intern(&mut g, c.clone(), &mut queue, cap)?;
        g.roots.push(id);
    }
    while let Some(v) = queue.pop_front() {
        let dist = p.step_distribution(&g.nodes[v])?;
        let mut out = Vec::with_capacity(dist.len());
        for (c, pr) in dist {
            let u = intern(&mut g, c, &mut queue, cap)?;
            out.push((u, pr));
        }
        g.succ[v] = out;
    }
    Ok(g)
}

fn intern(
    g: &mut ReachGraph,
    c: Configuration,
    queue: &mut VecDeque<usize>,
    cap: usize,
) -> Result<usize, VerifyError> {
    if let Some(&i) = g.index.get(&c) {
        return Ok(i);
    }
    if g.nodes.len() >= cap {
        return Err(VerifyError::NodeCap(cap));
    }
    let i = g.nodes.len();
    g.index.insert(c.clone(), i);
    g.nodes.push(c);
    g.succ.push(Vec::new());
    queue.push_back(i);
    Ok(i)
}

/// Nodes from which every reachable node lies in `ok`.
pub fn box_set(g: &ReachGraph, ok: &[bool]) -> NodeSet {
    let pred = g.predecessors();
    let mut good = ok.to_vec();
    let mut queue: VecDeque<usize> = (0..g.len()).filter(|&v| !ok[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &u in &pred[v] {
            if good[u] {
                good[u] = false;
                queue.push_back(u);
            }
        }
    }
    good
}

/// Nodes from which some node of `target` is reachable.
pub fn can_reach(g: &ReachGraph, target: &[bool]) -> NodeSet {
    let pred = g.predecessors();
    let mut seen = target.to_vec();
    let mut queue: VecDeque<usize> = (0..g.len()).filter(|&v| target[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &u in &pred[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    seen
}

/// Nodes from which `target` is reached with probability one. Target nodes are
/// absorbing: what happens after the first visit does not matter.
pub fn almost_surely(g: &ReachGraph, target: &[bool]) -> NodeSet {
    let reach = can_reach(g, target);
    let pred = g.predecessors();
    let mut good = reach.clone();
    let mut queue: VecDeque<usize> = (0..g.len()).filter(|&v| !reach[v]).collect();
    while let Some(v) = queue.pop_front() {
        for &u in &pred[v] {
            if good[u] && !target[u] {
                good[u] = false;
                queue.push_back(u);
            }
        }
    }
    good
}

/// `□φ` at every root, i.e. every node of the closure satisfies `φ`.
pub fn holds_box(g: &ReachGraph, p: &PopulationProtocol, f: &Formula) -> bool {
    g.nodes.iter().all(|c| f.holds_in(p, c))
}

/// `◇target` with probability one from the roots.
pub fn holds_diamond_as(g: &ReachGraph, target: &[bool]) -> bool {
    let as_ = almost_surely(g, target);
    g.roots.iter().all(|&r| as_[r])
}

/// Nodes satisfying `□Out0 ∨ □Out1`.
pub fn stable_set(g: &ReachGraph, p: &PopulationProtocol) -> NodeSet {
    let out0 = box_set(g, &g.satisfying(p, &Formula::atom(Atom::Out0)));
    let out1 = box_set(g, &g.satisfying(p, &Formula::atom(Atom::Out1)));
    out0.iter().zip(&out1).map(|(a, b)| *a || *b).collect()
}

/// Consensus output of a node known to be stable.
pub fn consensus(p: &PopulationProtocol, c: &Configuration) -> Option<bool> {
    let mut outs = p.state_ids().filter(|&s| c.get(s) > 0).map(|s| p.output(s));
    let first = outs.next()?;
    outs.all(|o| o == first).then_some(first)
}

fn big(r: Rational64) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// Exact expected number of steps to reach `target`, for every node.
pub fn expected_steps_exact(g: &ReachGraph, target: &[bool]) -> Result<Vec<BigRational>, VerifyError> {
    if !almost_surely(g, target).iter().all(|&b| b) {
        return Err(VerifyError::Divergent);
    }
    let mut value = vec![BigRational::zero(); g.len()];
    for comp in transient_components(g, target) {
        let pos: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let m = comp.len();
        // Row i: x_i - Σ_{u in comp} P(i,u) x_u = 1 + Σ_{u outside} P(i,u) E[u]
        let mut a = vec![vec![BigRational::zero(); m + 1]; m];
        for (i, &v) in comp.iter().enumerate() {
            a[i][i] = BigRational::one();
            a[i][m] = BigRational::one();
            for (u, pr) in &g.succ[v] {
                let pr = big(*pr);
                match pos.get(u) {
                    Some(&j) => a[i][j] -= pr,
                    None => a[i][m] += pr * &value[*u],
                }
            }
        }
        let x = bareiss_solve(a);
        for (i, &v) in comp.iter().enumerate() {
            value[v] = x[i].clone();
        }
    }
    Ok(value)
}

/// Non-target SCCs in an order where successors come first.
fn transient_components(g: &ReachGraph, target: &[bool]) -> Vec<Vec<usize>> {
    let mut h: DiGraph<usize, ()> = DiGraph::new();
    let ids: Vec<_> = (0..g.len()).map(|v| h.add_node(v)).collect();
    for v in 0..g.len() {
        if target[v] {
            continue;
        }
        for &(u, _) in &g.succ[v] {
            if !target[u] {
                h.add_edge(ids[v], ids[u], ());
            }
        }
    }
    // tarjan_scc yields components in reverse topological order.
    tarjan_scc(&h)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|n| h[n]).collect();
            c.sort_unstable();
            c
        })
        .filter(|c| !target[c[0]])
        .collect()
}

/// Solves an augmented rational system by fraction-free elimination.
fn bareiss_solve(rows: Vec<Vec<BigRational>>) -> Vec<BigRational> {
    let m = rows.len();
    let mut a: Vec<Vec<BigInt>> = rows
        .into_iter()
        .map(|row| {
            let l = row
                .iter()
                .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
            row.into_iter()
                .map(|x| (x * BigRational::from_integer(l.clone())).to_integer())
                .collect()
        })
        .collect();
    let mut prev = BigInt::one();
    for k in 0..m {
        let piv = (k..m).find(|&i| !a[i][k].is_zero()).expect("system is non-singular");
        a.swap(k, piv);
        for i in k + 1..m {
            for j in k + 1..=m {
                let t = &a[k][k] * &a[i][j] - &a[i][k] * &a[k][j];
                a[i][j] = t / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    let mut x = vec![BigRational::zero(); m];
    for i in (0..m).rev() {
        let mut rhs = BigRational::from_integer(a[i][m].clone());
        for j in i + 1..m {
            rhs -= BigRational::from_integer(a[i][j].clone()) * &x[j];
        }
        x[i] = rhs / BigRational::from_integer(a[i][i].clone());
    }
    x
}

/// Floating-point counterpart of [`expected_steps_exact`] with a residual check.
pub fn expected_steps_float(g: &ReachGraph, target: &[bool]) -> Result<Vec<f64>, VerifyError> {
    if !almost_surely(g, target).iter().all(|&b| b) {
        return Err(VerifyError::Divergent);
    }
    let prob = |r: &Rational64| *r.numer() as f64 / *r.denom() as f64;
    let mut value = vec![0.0f64; g.len()];
    for comp in transient_components(g, target) {
        let pos: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let m = comp.len();
        let mut a = vec![vec![0.0f64; m + 1]; m];
        for (i, &v) in comp.iter().enumerate() {
            a[i][i] = 1.0;
            a[i][m] = 1.0;
            for (u, pr) in &g.succ[v] {
                match pos.get(u) {
                    Some(&j) => a[i][j] -= prob(pr),
                    None => a[i][m] += prob(pr) * value[*u],
                }
            }
        }
        let orig = a.clone();
        let x = gauss_f64(a);
        for row in &orig {
            let lhs: f64 = (0..m).map(|j| row[j] * x[j]).sum();
            let res = (lhs - row[m]).abs() / row[m].abs().max(1.0);
            if res.is_nan() || res > 1e-9 {
                return Err(VerifyError::Residual(res));
            }
        }
        for (i, &v) in comp.iter().enumerate() {
            value[v] = x[i];
        }
    }
    Ok(value)
}

fn gauss_f64(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let m = a.len();
    for k in 0..m {
        let piv = (k..m)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .expect("non-empty");
        a.swap(k, piv);
        let (top, rest) = a.split_at_mut(k + 1);
        let pivot = &top[k];
        for row in rest {
            let f = row[k] / pivot[k];
            if f != 0.0 {
                for (x, y) in row[k..].iter_mut().zip(&pivot[k..]) {
                    *x -= f * y;
                }
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][m] - s) / a[i][i];
    }
    x
}

/// Expected steps, exact when the chain is small enough.
#[derive(Debug, Clone, PartialEq)]
pub enum Expectation {
    Exact(BigRational),
    Approx(f64),
}

impl Expectation {
    pub fn to_f64(&self) -> f64 {
        match self {
            Expectation::Exact(r) => r.to_f64().unwrap_or(f64::INFINITY),
            Expectation::Approx(x) => *x,
        }
    }
}

/// Expected number of interactions from `c0` until a stable configuration.
pub fn expected_steps_to_stable(
    p: &PopulationProtocol,
    c0: &Configuration,
    cap: usize,
) -> Result<Expectation, VerifyError> {
    let g = explore(p, c0, cap)?;
    let target = stable_set(&g, p);
    let root = g.roots[0];
    if g.len() <= EXACT_NODE_LIMIT {
        Ok(Expectation::Exact(expected_steps_exact(&g, &target)?[root].clone()))
    } else {
        Ok(Expectation::Approx(expected_steps_float(&g, &target)?[root]))
    }
}

/// Which of the two conditions a violation breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// An initial configuration outside the root stage.
    Initial,
    /// A member of a non-terminal stage that does not surely reach a successor.
    Progress,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub stage: usize,
    pub n: u32,
    /// One offending configuration.
    pub witness: String,
    /// Number of offending configurations at this size.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub sizes: Vec<u32>,
    pub configurations: usize,
    pub violations: Vec<Violation>,
    /// Size at which the node cap stopped the check.
    pub truncated_at: Option<u32>,
}

/// Members of `[[S]]` among the nodes of `g`.
pub fn stage_members(g: &ReachGraph, p: &PopulationProtocol, s: &Stage) -> NodeSet {
    let phi = g.satisfying(p, &s.phi);
    let inv = Formula::and([
        s.pi.formula(),
        crate::logic::heads_formula(p, &s.disabled),
    ]);
    let boxed = box_set(g, &g.satisfying(p, &inv));
    phi.iter().zip(&boxed).map(|(a, b)| *a && *b).collect()
}

/// Checks both stage-graph conditions on every population size `2..=max_n`.
pub fn check_stage_graph(
    p: &PopulationProtocol,
    sg: &StageGraph,
    max_n: u32,
    cap: usize,
) -> CheckReport {
    let mut report = CheckReport::default();
    for n in 2..=max_n {
        let inits = p.initial_configurations(n);
        let g = match explore_many(p, &inits, cap) {
            Ok(g) => g,
            Err(_) => {
                report.truncated_at = Some(n);
                break;
            }
        };
        tracing::debug!(n, configurations = g.len(), "checking size");
        report.sizes.push(n);
        report.configurations += g.len();
        let members: Vec<NodeSet> = sg
            .stages()
            .par_iter()
            .map(|s| stage_members(&g, p, s))
            .collect();
        let root = &members[0];
        let bad: Vec<usize> = g.roots().iter().copied().filter(|&r| !root[r]).collect();
        if let Some(&w) = bad.first() {
            report.violations.push(Violation {
                condition: Condition::Initial,
                stage: 0,
                n,
                witness: p.display_config(g.node(w)),
                count: bad.len(),
            });
        }
        let progress: Vec<Violation> = sg
            .stages()
            .par_iter()
            .filter(|s| s.kind == StageKind::Internal && !s.children.is_empty())
            .filter_map(|s| {
                let target: NodeSet = (0..g.len())
                    .map(|v| s.children.iter().any(|&c| members[c][v]))
                    .collect();
                let ok = almost_surely(&g, &target);
                let bad: Vec<usize> = (0..g.len()).filter(|&v| members[s.id][v] && !ok[v]).collect();
                bad.first().map(|&w| Violation {
                    condition: Condition::Progress,
                    stage: s.id,
                    n,
                    witness: p.display_config(g.node(w)),
                    count: bad.len(),
                })
            })
            .collect();
        report.violations.extend(progress);
    }
    report
}

/// Where a simulated run stops.
#[derive(Debug, Clone)]
pub enum SimTarget {
    Stable,
    Formula(Formula),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: usize,
    pub seed: u64,
    /// Interactions per trial, idle ones included.
    pub steps: Vec<u64>,
    /// Consensus output at the end of each trial, if any.
    pub outputs: Vec<Option<bool>>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

impl SimResult {
    /// Standard error of the mean.
    pub fn stderr(&self) -> Option<f64> {
        self.variance.map(|v| (v / self.trials as f64).sqrt())
    }
}

/// Seeded Monte Carlo estimate of the number of interactions until `target`.
pub fn simulate(
    p: &PopulationProtocol,
    c0: &Configuration,
    trials: usize,
    seed: u64,
    target: &SimTarget,
    step_cap: u64,
    node_cap: usize,
) -> Result<SimResult, VerifyError> {
    if c0.size() < 2 {
        return Err(ProtocolError::TooSmall(c0.size()).into());
    }
    let stable: Option<HashMap<Configuration, bool>> = match target {
        SimTarget::Stable => {
            let g = explore(p, c0, node_cap)?;
            let st = stable_set(&g, p);
            Some(g.nodes.iter().cloned().zip(st).collect())
        }
        SimTarget::Formula(_) => None,
    };
    let done = |c: &Configuration| match (target, &stable) {
        (SimTarget::Stable, Some(st)) => st.get(c).copied().unwrap_or(false),
        (SimTarget::Formula(f), _) => f.holds_in(p, c),
        _ => unreachable!(),
    };
    let rules: HashMap<Head, Vec<&Transition>> = p
        .transitions()
        .iter()
        .fold(HashMap::new(), |mut m, t| {
            m.entry(t.lhs).or_insert_with(Vec::new).push(t);
            m
        });
    let runs: Vec<(u64, Option<bool>)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            run_trial(p, c0, &rules, &done, step_cap, &mut rng)
        })
        .collect::<Result<_, _>>()?;
    let steps: Vec<u64> = runs.iter().map(|r| r.0).collect();
    let outputs = runs.iter().map(|r| r.1).collect();
    let (mean, variance) = moments(&steps);
    Ok(SimResult {
        trials,
        seed,
        steps,
        outputs,
        mean,
        variance,
    })
}

fn run_trial(
    p: &PopulationProtocol,
    c0: &Configuration,
    rules: &HashMap<Head, Vec<&Transition>>,
    done: &impl Fn(&Configuration) -> bool,
    step_cap: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(u64, Option<bool>), VerifyError> {
    let mut c = c0.clone();
    let n = c.size();
    let mut steps = 0u64;
    while !done(&c) {
        if steps >= step_cap {
            return Err(VerifyError::StepCap(step_cap));
        }
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let head = Head::new(agent_state(p, &c, i), agent_state(p, &c, j));
        let options = &rules[&head];
        let t = options[rng.gen_range(0..options.len())];
        c = c.fire(t);
        steps += 1;
    }
    Ok((steps, consensus(p, &c)))
}

/// State of the agent with index `i` when agents are listed state by state.
fn agent_state(p: &PopulationProtocol, c: &Configuration, mut i: u64) -> crate::protocol::StateId {
    for s in p.state_ids() {
        let k = c.get(s) as u64;
        if i < k {
            return s;
        }
        i -= k;
    }
    unreachable!("agent index within population size")
}

fn moments(xs: &[u64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (Some(mean), Some(var))
}

/// One row of a scaling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: u64,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Writes `n,value,stderr` rows; the header is written even for no rows.
pub fn write_csv<W: Write>(rows: &[ScalingRow], w: W) -> Result<(), VerifyError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(["n", "value", "stderr"]).map_err(|e| VerifyError::Csv(e.to_string()))?;
    for r in rows {
        out.serialize(r).map_err(|e| VerifyError::Csv(e.to_string()))?;
    }
    out.flush().map_err(|e| VerifyError::Csv(e.to_string()))
}

/// Maximum exact expected interactions to stability over all initial
/// configurations of size `n`, with the maximizing configuration.
pub fn interaction_complexity(
    p: &PopulationProtocol,
    n: u32,
    cap: usize,
) -> Result<(Expectation, Configuration), VerifyError> {
    let mut best: Option<(Expectation, Configuration)> = None;
    for c in p.initial_configurations(n) {
        let e = expected_steps_to_stable(p, &c, cap)?;
        let better = match &best {
            None => true,
            Some((b, _)) => match (&e, b) {
                (Expectation::Exact(x), Expectation::Exact(y)) => x > y,
                _ => e.to_f64() > b.to_f64(),
            },
        };
        if better {
            best = Some((e, c));
        }
    }
    Ok(best.expect("at least one initial configuration"))
}

/// States occupied in some node of `g`.
pub fn occupied_states(g: &ReachGraph) -> BTreeSet<usize> {
    g.nodes
        .iter()
        .flat_map(|c| c.counts().iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, _)| i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::protocol::parse_protocol;

    fn cfg(p: &PopulationProtocol, spec: &[(&str, u32)]) -> Configuration {
        let mut c = Configuration::zero(p.num_states());
        for (name, k) in spec {
            c.set(p.state_by_name(name).unwrap(), *k);
        }
        c
    }

    #[test]
    fn example_one_closure() {
        let p = corpus::majority_ex1(true);
        let g = explore(&p, &cfg(&p, &[("A", 1), ("B", 1)]), 100).unwrap();
        let mut got: Vec<String> = g.nodes().iter().map(|c| p.display_config(c)).collect();
        got.sort();
        assert_eq!(got, vec!["(A:1,B:1)", "(a:1,b:1)", "(b:2)"]);
        for v in 0..g.len() {
            let total: Rational64 = g.successors(v).iter().map(|(_, r)| *r).sum();
            assert_eq!(total, Rational64::from_integer(1));
        }
    }

    #[test]
    fn idle_only_chain_is_a_self_loop() {
        let p = parse_protocol("states: A B\ninputs: x -> A\noutput1: B\ntransitions:\n  B B -> B B\n").unwrap();
        let g = explore(&p, &cfg(&p, &[("A", 2)]), 10).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.successors(0), &[(0, Rational64::from_integer(1))]);
    }

    #[test]
    fn node_count_bounded_by_stars_and_bars() {
        let p = corpus::broadcast();
        let g = explore(&p, &Configuration::new(vec![1, 2]), 10).unwrap();
        assert!(g.len() <= 4);
    }

    #[test]
    fn cap_is_reported() {
        let p = corpus::majority_ex1(true);
        let err = explore(&p, &cfg(&p, &[("A", 3), ("B", 3)]), 2).unwrap_err();
        assert!(matches!(err, VerifyError::NodeCap(2)));
    }

    #[test]
    fn box_and_diamond() {
        let p = corpus::majority_ex1(true);
        let a = p.state_by_name("A").unwrap();
        let b = p.state_by_name("B").unwrap();
        let lower = explore(&p, &cfg(&p, &[("a", 1), ("b", 1)]), 100).unwrap();
        assert!(holds_box(&lower, &p, &Formula::and([Formula::absent(a), Formula::absent(b)])));
        assert!(holds_box(&lower, &p, &Formula::True));
        let g = explore(&p, &cfg(&p, &[("A", 1), ("B", 1)]), 100).unwrap();
        assert!(!holds_box(&g, &p, &Formula::present(a)));
        let target = g.satisfying(&p, &Formula::or([Formula::absent(a), Formula::absent(b)]));
        assert!(holds_diamond_as(&g, &target));
        assert!(holds_diamond_as(&g, &vec![true; g.len()]));
        assert!(!holds_diamond_as(&g, &vec![false; g.len()]));
    }

    #[test]
    fn stable_nodes_of_example_one() {
        let p = corpus::majority_ex1(true);
        let g = explore(&p, &cfg(&p, &[("A", 1), ("B", 1)]), 100).unwrap();
        let st = stable_set(&g, &p);
        let bb = g.index_of(&cfg(&p, &[("b", 2)])).unwrap();
        let ab = g.index_of(&cfg(&p, &[("a", 1), ("b", 1)])).unwrap();
        assert!(st[bb]);
        assert!(!st[ab]);
        assert_eq!(consensus(&p, g.node(bb)), Some(true));
    }

    #[test]
    fn geometric_chain() {
        // With A:1,B:1 the only pair is AB; AB -> BB fires with probability 1/2.
        let p = parse_protocol(
            "states: A B\ninputs: x -> A, y -> B\noutput1: B\ntransitions:\n  A B -> B B\n  A B -> A B\n",
        )
        .unwrap();
        let g = explore(&p, &cfg(&p, &[("A", 1), ("B", 1)]), 10).unwrap();
        let target = g.satisfying(&p, &Formula::absent(p.state_by_name("A").unwrap()));
        let e = expected_steps_exact(&g, &target).unwrap();
        assert_eq!(e[g.roots()[0]], BigRational::from_integer(2.into()));
        let f = expected_steps_float(&g, &target).unwrap();
        assert!((f[g.roots()[0]] - 2.0).abs() < 1e-12);
        let root_target = vec![true; g.len()];
        assert!(expected_steps_exact(&g, &root_target).unwrap().iter().all(|x| x.is_zero()));
    }

    #[test]
    fn divergence_is_an_error() {
        let p = corpus::majority_ex1(true);
        let g = explore(&p, &cfg(&p, &[("A", 1), ("B", 1)]), 100).unwrap();
        let never = vec![false; g.len()];
        assert!(matches!(expected_steps_exact(&g, &never), Err(VerifyError::Divergent)));
    }

    #[test]
    fn example_two_three_agents_reach_output_zero() {
        let p = corpus::majority_ex2();
        let c = cfg(&p, &[("A", 2), ("B", 1)]);
        let g = explore(&p, &c, 1000).unwrap();
        let st = stable_set(&g, &p);
        for v in 0..g.len() {
            if st[v] && can_reach(&g, &{
                let mut t = vec![false; g.len()];
                t[v] = true;
                t
            })[g.roots()[0]]
            {
                assert_eq!(consensus(&p, g.node(v)), Some(false));
            }
        }
        let r = simulate(&p, &c, 200, 7, &SimTarget::Stable, 1_000_000, 10_000).unwrap();
        assert!(r.outputs.iter().all(|o| *o == Some(false)));
    }

    #[test]
    fn simulation_is_reproducible() {
        let p = corpus::majority_ex2();
        let c = cfg(&p, &[("A", 3), ("B", 2)]);
        let a = simulate(&p, &c, 50, 11, &SimTarget::Stable, 1_000_000, 10_000).unwrap();
        let b = simulate(&p, &c, 50, 11, &SimTarget::Stable, 1_000_000, 10_000).unwrap();
        assert_eq!(a, b);
        let empty = simulate(&p, &c, 0, 11, &SimTarget::Stable, 1_000_000, 10_000).unwrap();
        assert_eq!(empty.mean, None);
        assert!(empty.steps.is_empty());
    }

    #[test]
    fn step_cap_is_reported() {
        let p = corpus::majority_ex1(true);
        let c = cfg(&p, &[("A", 1), ("B", 1)]);
        let never = SimTarget::Formula(Formula::False);
        assert!(matches!(
            simulate(&p, &c, 1, 0, &never, 100, 100),
            Err(VerifyError::StepCap(100))
        ));
    }

    #[test]
    fn example_two_tree_is_sound() {
        let p = corpus::majority_ex2();
        let (sg, _) = crate::analyze(&p, &Default::default()).unwrap();
        let r = check_stage_graph(&p, &sg, 6, 100_000);
        assert_eq!(r.violations, vec![]);
        assert_eq!(r.sizes, vec![2, 3, 4, 5, 6]);
        let vacuous = check_stage_graph(&p, &sg, 1, 100_000);
        assert!(vacuous.sizes.is_empty() && vacuous.violations.is_empty());
    }

    #[test]
    fn corrupted_tree_is_caught() {
        let p = corpus::majority_ex2();
        let (mut sg, _) = crate::analyze(&p, &Default::default()).unwrap();
        let child = sg.root().children[0];
        sg.stages_mut()[child].phi = Formula::False;
        let r = check_stage_graph(&p, &sg, 4, 100_000);
        assert!(r
            .violations
            .iter()
            .any(|v| v.condition == Condition::Progress && v.stage == 0));
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_csv(
            &[ScalingRow { n: 4, value: 1.5, stderr: None }, ScalingRow { n: 6, value: 2.0, stderr: Some(0.1) }],
            &mut buf,
        )
        .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "n,value,stderr\n4,1.5,\n6,2.0,0.1\n");
        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "n,value,stderr\n");
    }
}
