//! Construction of the stage tree: starting from the stage of all initial
//! configurations, every stage is split by the valuations of its formula and
//! each valuation yields a successor describing where the protocol is forced to
//! go next.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{is_fast, is_very_fast};
use crate::logic::{enumerate_satisfying_valuations, eta, heads_formula, implies, xi, Atom, Formula, Valuation};
use crate::protocol::{Head, PopulationProtocol, StateId};
use crate::transform::{context, live_heads, Components, TransformationGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    Internal,
    /// Stable with the given consensus output.
    Stable(bool),
    Dead,
    /// Not stable or dead, but every candidate successor was redundant.
    Exhausted,
}

impl StageKind {
    pub fn label(self) -> &'static str {
        match self {
            StageKind::Internal => "internal",
            StageKind::Stable(false) => "stable-0",
            StageKind::Stable(true) => "stable-1",
            StageKind::Dead => "dead",
            StageKind::Exhausted => "exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuMode {
    Disabled,
    Enabled,
    #[default]
    Neither,
}

/// Everything computed while deriving a successor from a parent and a valuation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CaseAnalysis {
    pub pi_nu: Valuation,
    pub stable: Option<bool>,
    pub dead: bool,
    pub exp: BTreeSet<Head>,
    pub j: BTreeSet<Head>,
    pub t_nu: BTreeSet<Head>,
    pub mode: NuMode,
    pub k: BTreeSet<Head>,
    pub i_states: BTreeSet<StateId>,
    pub l: BTreeSet<Head>,
    pub u_states: BTreeSet<StateId>,
    pub fast: bool,
    pub very_fast: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub id: usize,
    pub phi: Formula,
    pub pi: Valuation,
    pub disabled: BTreeSet<Head>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub kind: StageKind,
    /// The valuation of the parent that produced this stage.
    pub via: Option<Valuation>,
    pub analysis: Option<CaseAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageGraph {
    stages: Vec<Stage>,
}

impl StageGraph {
    pub fn root(&self) -> &Stage {
        &self.stages[0]
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, id: usize) -> &Stage {
        &self.stages[id]
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Mutable access, meant for fault-injection tests and imports.
    pub fn stages_mut(&mut self) -> &mut [Stage] {
        &mut self.stages
    }

    pub fn from_stages(stages: Vec<Stage>) -> Self {
        StageGraph { stages }
    }

    /// Ids on the path from the root to `id`, root first.
    pub fn path_to(&self, id: usize) -> Vec<usize> {
        root_path(&self.stages, id)
    }
}

fn root_path(stages: &[Stage], id: usize) -> Vec<usize> {
    let mut path = vec![id];
    let mut cur = id;
    while let Some(p) = stages[cur].parent {
        path.push(p);
        cur = p;
    }
    path.reverse();
    path
}

/// Which successors are subject to the redundancy test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedundancyScope {
    /// Only successors built when `Exp_ν` is empty.
    ExpEmptyOnly,
    /// Every successor that is not stable or dead.
    NonTerminal,
    /// Every successor.
    All,
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub max_stages: usize,
    pub timeout: Duration,
    pub redundancy: RedundancyScope,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_stages: 100_000,
            timeout: Duration::from_secs(1000),
            redundancy: RedundancyScope::NonTerminal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    Stages,
    Time,
}

#[derive(Debug, Error)]
#[error("{}", match .kind { LimitKind::Stages => "stage limit exceeded", LimitKind::Time => "time limit exceeded" })]
pub struct BuildError {
    pub kind: LimitKind,
    /// The tree built so far; unexpanded stages are marked internal.
    pub partial: StageGraph,
}

/// `S0`: some input state is populated and every other state is empty.
pub fn initial_stage(p: &PopulationProtocol) -> Stage {
    let inputs = p.input_states();
    let phi = Formula::and(
        std::iter::once(Formula::or(inputs.iter().map(|&s| Formula::present(s)))).chain(
            p.state_ids()
                .filter(|s| !inputs.contains(s))
                .map(Formula::absent),
        ),
    );
    Stage {
        id: 0,
        phi,
        pi: Valuation::new(),
        disabled: BTreeSet::new(),
        parent: None,
        children: Vec::new(),
        kind: StageKind::Internal,
        via: None,
        analysis: None,
    }
}

/// Greatest fixed point `(M, N)` and the set `E`, combined into `π_ν`
/// (extending the parent's persistent valuation).
pub fn compute_pi_nu(
    p: &PopulationProtocol,
    pi: &Valuation,
    t: &BTreeSet<Head>,
    nu: &Valuation,
) -> Valuation {
    let (m, n) = persistent_sets(p, t, nu);
    let mut out = pi.clone();
    for &a in &m {
        out.set(Atom::Presence(a), false);
    }
    for a in p.state_ids() {
        if nu.presence(a) != Some(true) {
            continue;
        }
        let stays = p.transitions().iter().all(|tr| {
            let Some(b) = tr.lhs.partner(a) else { return true };
            if tr.rhs.contains(a) {
                return true;
            }
            m.contains(&b) || t.contains(&tr.lhs) || (a == b && n.contains(&a))
        });
        if stays {
            out.set(Atom::Presence(a), true);
        }
    }
    for &a in &n {
        out.set(Atom::Singleton(a), true);
        out.set(Atom::Presence(a), true);
    }
    out
}

/// The pair `(M, N)`: states that stay empty, and states that keep exactly
/// one agent, in every configuration reachable from one satisfying `ν`.
pub fn persistent_sets(
    p: &PopulationProtocol,
    t: &BTreeSet<Head>,
    nu: &Valuation,
) -> (BTreeSet<StateId>, BTreeSet<StateId>) {
    let mut m: BTreeSet<StateId> = p
        .state_ids()
        .filter(|&s| nu.presence(s) == Some(false))
        .collect();
    let mut n: BTreeSet<StateId> = p
        .state_ids()
        .filter(|&s| nu.get(Atom::Singleton(s)) == Some(true))
        .collect();
    // A transition producing something stays impossible.
    let blocked = |m: &BTreeSet<StateId>, n: &BTreeSet<StateId>, lhs: Head| {
        m.contains(&lhs.lo())
            || m.contains(&lhs.hi())
            || t.contains(&lhs)
            || (lhs.is_double() && n.contains(&lhs.lo()))
    };
    loop {
        let m2: BTreeSet<StateId> = m
            .iter()
            .copied()
            .filter(|&a| {
                p.transitions()
                    .iter()
                    .filter(|tr| tr.rhs.contains(a))
                    .all(|tr| blocked(&m, &n, tr.lhs))
            })
            .collect();
        let n2: BTreeSet<StateId> = n
            .iter()
            .copied()
            .filter(|&a| {
                p.transitions().iter().all(|tr| {
                    let consumed_pair = |b: StateId| m.contains(&b) || t.contains(&tr.lhs);
                    if let Some(b) = tr.lhs.partner(a) {
                        if a != b && !tr.rhs.contains(a) && !consumed_pair(b) {
                            return false;
                        }
                        if a != b && tr.rhs == Head::new(a, a) && !consumed_pair(b) {
                            return false;
                        }
                    } else if tr.rhs.contains(a) && !blocked(&m, &n, tr.lhs) {
                        return false;
                    }
                    true
                })
            })
            .collect();
        if m2 == m && n2 == n {
            return (m, n);
        }
        m = m2;
        n = n2;
    }
}

/// Consensus output `x` if `(π, T)` is stable.
pub fn is_stable(p: &PopulationProtocol, pi: &Valuation, t: &BTreeSet<Head>) -> Option<bool> {
    let ctx = context(p, pi, t);
    stable_with(p, pi, &ctx)
}

fn stable_with(p: &PopulationProtocol, pi: &Valuation, ctx: &Formula) -> Option<bool> {
    [false, true].into_iter().find(|&x| {
        let outputs_agree = p
            .state_ids()
            .filter(|&s| pi.presence(s) != Some(false))
            .all(|s| p.output(s) == x);
        outputs_agree
            && p.transitions().iter().all(|tr| {
                let [e, f] = tr.rhs.states();
                (p.output(e) == x && p.output(f) == x) || implies(ctx, &xi(p, tr.lhs))
            })
    })
}

/// `(π, T)` is not stable and no non-idle transition can fire.
pub fn is_dead(p: &PopulationProtocol, pi: &Valuation, t: &BTreeSet<Head>) -> bool {
    let ctx = context(p, pi, t);
    stable_with(p, pi, &ctx).is_none() && live_heads(p, &ctx).is_empty()
}

/// `J_ν`: the largest subset of `exp` whose heads can only be re-enabled by
/// transitions that are themselves permanently disabled.
pub fn compute_j(
    p: &PopulationProtocol,
    pi_nu: &Valuation,
    t: &BTreeSet<Head>,
    exp: &BTreeSet<Head>,
) -> BTreeSet<Head> {
    let base = context(p, pi_nu, t);
    let mut m = exp.clone();
    loop {
        let ctx = Formula::and([base.clone(), heads_formula(p, &m)]);
        let keep: BTreeSet<Head> = m
            .iter()
            .copied()
            .filter(|&h| j_conditions_hold(p, &ctx, h))
            .collect();
        if keep == m {
            return m;
        }
        m = keep;
    }
}

fn j_conditions_hold(p: &PopulationProtocol, ctx: &Formula, h: Head) -> bool {
    let (e, f) = (h.lo(), h.hi());
    let disabled_under = |extra: Formula, lhs: Head| {
        implies(&Formula::and([extra, ctx.clone()]), &xi(p, lhs))
    };
    // Re-enabling by producing one element of the head while the other is present.
    let side = |x: StateId, y: StateId, lhs: Head, rhs: Head| -> bool {
        let Some(g) = rhs.partner(x) else { return true };
        if g == y {
            return true;
        }
        if x != y {
            disabled_under(Formula::and([Formula::absent(x), Formula::present(y)]), lhs)
        } else {
            lhs.contains(x) || disabled_under(Formula::Atom(Atom::Singleton(x)), lhs)
        }
    };
    p.non_idle_transitions().all(|tr| {
        if tr.rhs == h && !disabled_under(Formula::True, tr.lhs) {
            return false;
        }
        side(e, f, tr.lhs, tr.rhs) && side(f, e, tr.lhs, tr.rhs)
    })
}

/// ν-disabled / ν-enabled classification of `J_ν`.
pub fn classify_nu_mode(p: &PopulationProtocol, nu: &Valuation, j: &BTreeSet<Head>) -> NuMode {
    if j.is_empty() {
        return NuMode::Neither;
    }
    let nf = nu.formula();
    if j.iter().all(|&h| implies(&nf, &xi(p, h))) {
        NuMode::Disabled
    } else if j.iter().any(|&h| implies(&nf, &Formula::not(xi(p, h)))) {
        NuMode::Enabled
    } else {
        NuMode::Neither
    }
}

/// `K_ν`: right-hand sides of the transitions of `J_ν` that transform a state
/// of `Q_ν`. Only these can be the last step before all of `J_ν` is disabled.
pub fn compute_k(p: &PopulationProtocol, g: &TransformationGraph, j: &BTreeSet<Head>) -> BTreeSet<Head> {
    let q_nu: BTreeSet<StateId> = j.iter().flat_map(|h| h.states()).collect();
    let mut k = BTreeSet::new();
    for ((a, _), ts) in g.edges() {
        if q_nu.contains(&a) {
            k.extend(
                ts.iter()
                    .map(|&i| &p.transitions()[i])
                    .filter(|tr| j.contains(&tr.lhs))
                    .map(|tr| tr.rhs),
            );
        }
    }
    k
}

/// `I_ν` and `L_ν` from the stable edges of `g`.
pub fn compute_i_and_l(
    p: &PopulationProtocol,
    g: &TransformationGraph,
    pi_nu: &Valuation,
) -> (BTreeSet<StateId>, BTreeSet<Head>) {
    // (edge, transition index) pairs whose partner state is persistently present.
    let mut stable: Vec<((StateId, StateId), usize)> = Vec::new();
    for ((a, b), ts) in g.edges() {
        for &i in ts {
            let partner = p.transitions()[i].lhs.partner(a).expect("edge source is in lhs");
            if pi_nu.presence(partner) == Some(true) {
                stable.push(((a, b), i));
            }
        }
    }
    let comps = Components::compute(
        p.num_states(),
        g.vertices(),
        stable.iter().map(|(e, _)| *e).collect::<Vec<_>>(),
    );
    let i_states = comps.non_bottom_states();
    let l = stable
        .iter()
        .filter(|((a, b), _)| i_states.contains(a) && !i_states.contains(b))
        .map(|(_, i)| p.transitions()[*i].rhs)
        .collect();
    (i_states, l)
}

/// Result of deriving one successor.
#[derive(Debug, Clone)]
pub struct ChildStage {
    pub phi: Formula,
    pub pi: Valuation,
    pub disabled: BTreeSet<Head>,
    pub kind: StageKind,
    pub analysis: CaseAnalysis,
}

/// Builds `S_ν` for the stage `(phi, pi, t)` (without the redundancy test).
pub fn derive_child(
    p: &PopulationProtocol,
    pi: &Valuation,
    t: &BTreeSet<Head>,
    nu: &Valuation,
) -> ChildStage {
    let pi_nu = compute_pi_nu(p, pi, t, nu);
    let ctx = context(p, &pi_nu, t);
    let mut ca = CaseAnalysis {
        pi_nu: pi_nu.clone(),
        ..Default::default()
    };
    let live = live_heads(p, &ctx);
    let stable = stable_with(p, &pi_nu, &ctx);
    if stable.is_some() || live.is_empty() {
        ca.stable = stable;
        ca.dead = stable.is_none();
        ca.t_nu = t.clone();
        return ChildStage {
            phi: pi_nu.formula(),
            pi: pi_nu,
            disabled: t.clone(),
            kind: match stable {
                Some(x) => StageKind::Stable(x),
                None => StageKind::Dead,
            },
            analysis: ca,
        };
    }
    let g = TransformationGraph::from_live_heads(p, &pi_nu, live);
    ca.exp = g.exp(p);
    ca.u_states = g.non_bottom_states();
    let base = |tn: &BTreeSet<Head>| Formula::and([pi_nu.formula(), heads_formula(p, tn)]);
    let phi;
    if !ca.exp.is_empty() {
        ca.j = compute_j(p, &pi_nu, t, &ca.exp);
        if !ca.j.is_empty() {
            ca.t_nu = t.union(&ca.j).copied().collect();
            ca.mode = classify_nu_mode(p, nu, &ca.j);
            phi = match ca.mode {
                NuMode::Disabled => Formula::and([base(&ca.t_nu), nu.formula()]),
                NuMode::Enabled => {
                    ca.k = compute_k(p, &g, &ca.j);
                    Formula::and([
                        base(&ca.t_nu),
                        Formula::or(ca.k.iter().map(|&h| eta(h))),
                    ])
                }
                NuMode::Neither => base(&ca.t_nu),
            };
            ca.fast = is_fast(p, &ctx, &ca.exp, &ca.u_states);
            ca.very_fast = is_very_fast(p, &g);
        } else {
            ca.t_nu = t.union(&ca.exp).copied().collect();
            phi = base(&ca.t_nu);
        }
    } else {
        ca.t_nu = t.clone();
        let (i_states, l) = compute_i_and_l(p, &g, &pi_nu);
        ca.i_states = i_states;
        ca.l = l;
        let none_in_i = Formula::and(ca.i_states.iter().map(|&s| Formula::absent(s)));
        phi = if ca.i_states.iter().any(|&s| nu.presence(s) == Some(true)) {
            Formula::and([
                base(&ca.t_nu),
                none_in_i,
                Formula::or(ca.l.iter().map(|&h| eta(h))),
            ])
        } else if ca.i_states.iter().all(|&s| nu.presence(s) == Some(false)) {
            Formula::and([base(&ca.t_nu), nu.formula()])
        } else {
            Formula::and([base(&ca.t_nu), none_in_i])
        };
    }
    ChildStage {
        phi,
        pi: pi_nu,
        disabled: ca.t_nu.clone(),
        kind: StageKind::Internal,
        analysis: ca,
    }
}

fn subject_to_redundancy(child: &ChildStage, scope: RedundancyScope) -> bool {
    match scope {
        RedundancyScope::All => true,
        RedundancyScope::NonTerminal => child.kind == StageKind::Internal,
        RedundancyScope::ExpEmptyOnly => {
            child.kind == StageKind::Internal && child.analysis.exp.is_empty()
        }
    }
}

/// Whether some stage on `path` has the same `π` and `T` and a formula
/// implying the child's.
fn is_redundant(stages: &[Stage], path: &[usize], child: &ChildStage) -> bool {
    path.iter().any(|&id| {
        let s = &stages[id];
        s.pi == child.pi && s.disabled == child.disabled && implies(&s.phi, &child.phi)
    })
}

/// Valuations splitting the stage, in canonical order.
pub fn stage_valuations(stage: &Stage) -> Vec<Valuation> {
    enumerate_satisfying_valuations(&stage.phi)
}

/// Builds the whole stage tree breadth-first.
pub fn build_stage_graph(p: &PopulationProtocol, limits: &Limits) -> Result<StageGraph, BuildError> {
    let _span = tracing::info_span!("build_stage_graph", protocol = p.name()).entered();
    let start = Instant::now();
    let mut stages = vec![initial_stage(p)];
    let mut next = 0;
    while next < stages.len() {
        if start.elapsed() > limits.timeout {
            return Err(BuildError {
                kind: LimitKind::Time,
                partial: StageGraph { stages },
            });
        }
        let id = next;
        next += 1;
        if stages[id].kind != StageKind::Internal {
            continue;
        }
        let path = root_path(&stages, id);
        let vals = stage_valuations(&stages[id]);
        let (pi, t) = (stages[id].pi.clone(), stages[id].disabled.clone());
        let children: Vec<(Valuation, ChildStage)> = vals
            .into_par_iter()
            .map(|nu| {
                let child = derive_child(p, &pi, &t, &nu);
                (nu, child)
            })
            .filter(|(_, child)| {
                !(subject_to_redundancy(child, limits.redundancy)
                    && is_redundant(&stages, &path, child))
            })
            .collect();
        tracing::debug!(stage = id, depth = path.len() - 1, children = children.len(), "expanded");
        if children.is_empty() {
            stages[id].kind = StageKind::Exhausted;
            continue;
        }
        for (nu, child) in children {
            let cid = stages.len();
            if cid >= limits.max_stages {
                return Err(BuildError {
                    kind: LimitKind::Stages,
                    partial: StageGraph { stages },
                });
            }
            stages[id].children.push(cid);
            stages.push(Stage {
                id: cid,
                phi: child.phi,
                pi: child.pi,
                disabled: child.disabled,
                parent: Some(id),
                children: Vec::new(),
                kind: child.kind,
                via: Some(nu),
                analysis: Some(child.analysis),
            });
        }
    }
    tracing::info!(stages = stages.len(), elapsed = ?start.elapsed(), "stage graph complete");
    Ok(StageGraph { stages })
}
