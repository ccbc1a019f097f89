//! Propositional formulas over presence/singleton atoms, valuations, and a small
//! DPLL-style engine for satisfiability, tautology and valuation enumeration.
//!
//! Every query respects the coupling `A! => A`: whenever a singleton atom takes
//! part in a query its presence atom does too, and assignments with `A! = tt`
//! and `A = ff` are never considered.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{Configuration, Head, PopulationProtocol, StateId};

/// Atomic propositions. The derived order sorts by state index with the
/// presence atom before the singleton atom; output atoms come last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Atom {
    Presence(StateId),
    Singleton(StateId),
    Out0,
    Out1,
}

impl Atom {
    /// Builds `A!`, which only exists when a non-idle `AA` rule exists.
    pub fn singleton(p: &PopulationProtocol, s: StateId) -> Option<Atom> {
        p.has_singleton(s).then_some(Atom::Singleton(s))
    }

    fn key(self) -> (usize, u8) {
        match self {
            Atom::Presence(s) => (s.index(), 0),
            Atom::Singleton(s) => (s.index(), 1),
            Atom::Out0 => (usize::MAX, 0),
            Atom::Out1 => (usize::MAX, 1),
        }
    }

    pub fn display(self, p: &PopulationProtocol) -> String {
        match self {
            Atom::Presence(s) => p.state_name(s).to_string(),
            Atom::Singleton(s) => format!("{}!", p.state_name(s)),
            Atom::Out0 => "Out0".into(),
            Atom::Out1 => "Out1".into(),
        }
    }

    /// Truth value in a concrete configuration.
    pub fn holds(self, p: &PopulationProtocol, c: &Configuration) -> bool {
        match self {
            Atom::Presence(s) => c.get(s) > 0,
            Atom::Singleton(s) => c.get(s) == 1,
            Atom::Out0 => p.state_ids().all(|s| c.get(s) == 0 || !p.output(s)),
            Atom::Out1 => p.state_ids().all(|s| c.get(s) == 0 || p.output(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn present(s: StateId) -> Formula {
        Formula::Atom(Atom::Presence(s))
    }

    pub fn absent(s: StateId) -> Formula {
        Formula::not(Formula::present(s))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    /// Conjunction; flattens nested conjunctions and drops `true`.
    pub fn and(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in parts {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    /// Disjunction; flattens nested disjunctions and drops `false`.
    pub fn or(parts: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in parts {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Atoms occurring in the formula.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(*a);
            }
            Formula::Not(f) => f.collect_atoms(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_atoms(out)),
            Formula::Implies(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    pub fn eval(&self, atom: &mut impl FnMut(Atom) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => atom(*a),
            Formula::Not(f) => !f.eval(atom),
            Formula::And(fs) => fs.iter().all(|f| f.eval(atom)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(atom)),
            Formula::Implies(a, b) => !a.eval(atom) || b.eval(atom),
        }
    }

    /// `C ⊨ φ` for a propositional formula.
    pub fn holds_in(&self, p: &PopulationProtocol, c: &Configuration) -> bool {
        self.eval(&mut |a| a.holds(p, c))
    }

    /// Infix rendering with `!`, `&`, `|`, `=>`, `true`, `false`.
    pub fn display(&self, p: &PopulationProtocol) -> String {
        let mut s = String::new();
        self.render(p, &mut s, 0);
        s
    }

    // Precedence: 0 top, 1 implication operand, 2 disjunct, 3 conjunct, 4 negated.
    fn render(&self, p: &PopulationProtocol, out: &mut String, ctx: u8) {
        let wrap = |prec: u8, out: &mut String, body: &dyn Fn(&mut String)| {
            if ctx > prec {
                out.push('(');
                body(out);
                out.push(')');
            } else {
                body(out);
            }
        };
        match self {
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
            Formula::Atom(a) => out.push_str(&a.display(p)),
            Formula::Not(f) => {
                out.push('!');
                f.render(p, out, 4);
            }
            Formula::And(fs) => wrap(3, out, &|out: &mut String| {
                for (i, f) in fs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" & ");
                    }
                    f.render(p, out, 4);
                }
            }),
            Formula::Or(fs) => wrap(2, out, &|out: &mut String| {
                for (i, f) in fs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(" | ");
                    }
                    f.render(p, out, 3);
                }
            }),
            Formula::Implies(a, b) => wrap(1, out, &|out: &mut String| {
                a.render(p, out, 2);
                out.push_str(" => ");
                b.render(p, out, 2);
            }),
        }
    }
}

/// `ξ_h`: no non-idle transition with head `h` is enabled.
pub fn xi(p: &PopulationProtocol, h: Head) -> Formula {
    let (a, b) = (h.lo(), h.hi());
    if a != b {
        Formula::or([Formula::absent(a), Formula::absent(b)])
    } else if p.has_singleton(a) {
        Formula::or([Formula::absent(a), Formula::Atom(Atom::Singleton(a))])
    } else {
        Formula::True
    }
}

/// "The pair `h` is populated": `C ∧ D`, or `C ∧ ¬C!` for `h = CC`. The
/// singleton atom is used here even for states without a non-idle `CC` rule,
/// since "at least two agents in `C`" has no other propositional encoding.
pub fn eta(h: Head) -> Formula {
    let (a, b) = (h.lo(), h.hi());
    if a != b {
        Formula::and([Formula::present(a), Formula::present(b)])
    } else {
        Formula::and([
            Formula::present(a),
            Formula::not(Formula::Atom(Atom::Singleton(a))),
        ])
    }
}

/// `Ψ_H = ⋀_{h ∈ H} ξ_h`.
pub fn heads_formula<'a>(p: &PopulationProtocol, heads: impl IntoIterator<Item = &'a Head>) -> Formula {
    Formula::and(heads.into_iter().map(|&h| xi(p, h)))
}

/// A partial assignment of truth values to atoms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<(Atom, bool)>", into = "Vec<(Atom, bool)>")]
pub struct Valuation(BTreeMap<Atom, bool>);

impl From<Vec<(Atom, bool)>> for Valuation {
    fn from(v: Vec<(Atom, bool)>) -> Self {
        Valuation(v.into_iter().collect())
    }
}

impl From<Valuation> for Vec<(Atom, bool)> {
    fn from(v: Valuation) -> Self {
        v.0.into_iter().collect()
    }
}

impl Valuation {
    pub fn new() -> Self {
        Valuation(BTreeMap::new())
    }

    pub fn get(&self, a: Atom) -> Option<bool> {
        self.0.get(&a).copied()
    }

    pub fn presence(&self, s: StateId) -> Option<bool> {
        self.get(Atom::Presence(s))
    }

    pub fn set(&mut self, a: Atom, v: bool) {
        self.0.insert(a, v);
    }

    pub fn contains(&self, a: Atom) -> bool {
        self.0.contains_key(&a)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Atom, bool)> + '_ {
        self.0.iter().map(|(a, v)| (*a, *v))
    }

    /// Adds every binding of `other` (bindings in `other` win).
    pub fn extend(&mut self, other: &Valuation) {
        for (a, v) in other.iter() {
            self.set(a, v);
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.iter().all(|(a, v)| match a {
            Atom::Singleton(s) if v => self.presence(s) != Some(false),
            _ => true,
        })
    }

    /// `⋀_{ν(p)=tt} p ∧ ⋀_{ν(p)=ff} ¬p`.
    pub fn formula(&self) -> Formula {
        Formula::and(self.iter().map(|(a, v)| {
            if v {
                Formula::Atom(a)
            } else {
                Formula::not(Formula::Atom(a))
            }
        }))
    }

    pub fn display(&self, p: &PopulationProtocol) -> String {
        let parts: Vec<String> = self
            .iter()
            .map(|(a, v)| format!("{}{}", if v { "" } else { "!" }, a.display(p)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Solver

#[derive(Debug, Clone)]
enum Node {
    Const(bool),
    Var(usize),
    Not(Box<Node>),
    And(Vec<Node>),
    Or(Vec<Node>),
}

type Assign = Vec<Option<bool>>;

struct Problem {
    vars: Vec<Atom>,
    /// For a singleton variable, the index of its presence variable.
    presence_of: Vec<Option<usize>>,
    /// For a presence variable, the index of its singleton variable.
    singleton_of: Vec<Option<usize>>,
    root: Node,
    clauses: Vec<Node>,
}

impl Problem {
    fn new(f: &Formula, extra: &BTreeSet<Atom>) -> Problem {
        let mut atoms = f.atoms();
        atoms.extend(extra.iter().copied());
        let companions: Vec<Atom> = atoms
            .iter()
            .filter_map(|a| match a {
                Atom::Singleton(s) => Some(Atom::Presence(*s)),
                _ => None,
            })
            .collect();
        atoms.extend(companions);
        let mut vars: Vec<Atom> = atoms.into_iter().collect();
        vars.sort_by_key(|a| a.key());
        let index: BTreeMap<Atom, usize> = vars.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut presence_of = vec![None; vars.len()];
        let mut singleton_of = vec![None; vars.len()];
        for (i, a) in vars.iter().enumerate() {
            if let Atom::Singleton(s) = a {
                let j = index[&Atom::Presence(*s)];
                presence_of[i] = Some(j);
                singleton_of[j] = Some(i);
            }
        }
        let root = compile(f, &index);
        let clauses = match &root {
            Node::And(parts) => parts.clone(),
            other => vec![other.clone()],
        };
        Problem {
            vars,
            presence_of,
            singleton_of,
            root,
            clauses,
        }
    }

    /// Assigns `v := val` together with the consistency consequences.
    /// Returns false on conflict.
    fn assign(&self, asg: &mut Assign, v: usize, val: bool) -> bool {
        match asg[v] {
            Some(old) => return old == val,
            None => asg[v] = Some(val),
        }
        if val {
            if let Some(pv) = self.presence_of[v] {
                return self.assign(asg, pv, true);
            }
        } else if let Some(sv) = self.singleton_of[v] {
            return self.assign(asg, sv, false);
        }
        true
    }

    /// Unit propagation over the top-level conjuncts. False on conflict.
    fn propagate(&self, asg: &mut Assign) -> bool {
        loop {
            let mut changed = false;
            for c in &self.clauses {
                match eval3(c, asg) {
                    Some(true) => {}
                    Some(false) => return false,
                    None => {
                        if let Some((v, val)) = unit(c, asg) {
                            if !self.assign(asg, v, val) {
                                return false;
                            }
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn solve(&self, asg: &mut Assign) -> bool {
        if !self.propagate(asg) {
            return false;
        }
        match eval3(&self.root, asg) {
            Some(b) => b,
            None => {
                let v = branch_var(&self.root, asg).expect("undecided formula has a free variable");
                for val in [true, false] {
                    let mut next = asg.clone();
                    if self.assign(&mut next, v, val) && self.solve(&mut next) {
                        *asg = next;
                        return true;
                    }
                }
                false
            }
        }
    }

    fn enumerate(&self, i: usize, asg: &mut Assign, out: &mut Vec<Valuation>) {
        if i == self.vars.len() {
            if eval3(&self.root, asg) == Some(true) {
                let mut v = Valuation::new();
                for (k, a) in self.vars.iter().enumerate() {
                    v.set(*a, asg[k].expect("total assignment"));
                }
                out.push(v);
            }
            return;
        }
        if let Some(val) = asg[i] {
            // Forced by the consistency rule.
            let _ = val;
            self.enumerate(i + 1, asg, out);
            return;
        }
        for val in [true, false] {
            let mut next = asg.clone();
            if !self.assign(&mut next, i, val) {
                continue;
            }
            let mut probe = next.clone();
            if self.solve(&mut probe) {
                self.enumerate(i + 1, &mut next, out);
            }
        }
    }
}

fn compile(f: &Formula, index: &BTreeMap<Atom, usize>) -> Node {
    match f {
        Formula::True => Node::Const(true),
        Formula::False => Node::Const(false),
        Formula::Atom(a) => Node::Var(index[a]),
        Formula::Not(g) => match compile(g, index) {
            Node::Const(b) => Node::Const(!b),
            Node::Not(inner) => *inner,
            n => Node::Not(Box::new(n)),
        },
        Formula::And(fs) => {
            let mut parts = Vec::new();
            for g in fs {
                match compile(g, index) {
                    Node::And(inner) => parts.extend(inner),
                    n => parts.push(n),
                }
            }
            Node::And(parts)
        }
        Formula::Or(fs) => {
            let mut parts = Vec::new();
            for g in fs {
                match compile(g, index) {
                    Node::Or(inner) => parts.extend(inner),
                    n => parts.push(n),
                }
            }
            Node::Or(parts)
        }
        Formula::Implies(a, b) => {
            let na = compile(&Formula::not((**a).clone()), index);
            let nb = compile(b, index);
            let mut parts = Vec::new();
            for n in [na, nb] {
                match n {
                    Node::Or(inner) => parts.extend(inner),
                    n => parts.push(n),
                }
            }
            Node::Or(parts)
        }
    }
}

fn eval3(n: &Node, asg: &Assign) -> Option<bool> {
    match n {
        Node::Const(b) => Some(*b),
        Node::Var(v) => asg[*v],
        Node::Not(g) => eval3(g, asg).map(|b| !b),
        Node::And(gs) => {
            let mut undecided = false;
            for g in gs {
                match eval3(g, asg) {
                    Some(false) => return Some(false),
                    None => undecided = true,
                    Some(true) => {}
                }
            }
            if undecided {
                None
            } else {
                Some(true)
            }
        }
        Node::Or(gs) => {
            let mut undecided = false;
            for g in gs {
                match eval3(g, asg) {
                    Some(true) => return Some(true),
                    None => undecided = true,
                    Some(false) => {}
                }
            }
            if undecided {
                None
            } else {
                Some(false)
            }
        }
    }
}

fn literal(n: &Node) -> Option<(usize, bool)> {
    match n {
        Node::Var(v) => Some((*v, true)),
        Node::Not(g) => match **g {
            Node::Var(v) => Some((v, false)),
            _ => None,
        },
        _ => None,
    }
}

/// If the undecided clause `n` forces a single literal, returns it.
fn unit(n: &Node, asg: &Assign) -> Option<(usize, bool)> {
    if let Some(l) = literal(n) {
        return Some(l);
    }
    if let Node::Or(gs) = n {
        let mut open = None;
        for g in gs {
            match eval3(g, asg) {
                Some(false) => {}
                Some(true) => return None,
                None => {
                    if open.is_some() {
                        return None;
                    }
                    open = Some(g);
                }
            }
        }
        return open.and_then(literal);
    }
    None
}

/// First unassigned variable inside an undecided part of `n`.
fn branch_var(n: &Node, asg: &Assign) -> Option<usize> {
    match n {
        Node::Const(_) => None,
        Node::Var(v) => asg[*v].is_none().then_some(*v),
        Node::Not(g) => branch_var(g, asg),
        Node::And(gs) | Node::Or(gs) => gs
            .iter()
            .filter(|g| eval3(g, asg).is_none())
            .find_map(|g| branch_var(g, asg)),
    }
}

/// Satisfiable by some consistent assignment.
pub fn is_satisfiable(f: &Formula) -> bool {
    let problem = Problem::new(f, &BTreeSet::new());
    let mut asg = vec![None; problem.vars.len()];
    problem.solve(&mut asg)
}

/// True under every consistent assignment.
pub fn is_tautology(f: &Formula) -> bool {
    !is_satisfiable(&Formula::not(f.clone()))
}

/// `a ⇒ b` is a tautology.
pub fn implies(a: &Formula, b: &Formula) -> bool {
    !is_satisfiable(&Formula::and([a.clone(), Formula::not(b.clone())]))
}

/// All consistent total assignments over the atoms of `f` (closed under
/// singleton companions) satisfying `f`, in canonical order: atoms sorted by
/// state with `A` before `A!`, `tt` explored before `ff`.
pub fn enumerate_satisfying_valuations(f: &Formula) -> Vec<Valuation> {
    enumerate_over(f, &BTreeSet::new())
}

/// Like [`enumerate_satisfying_valuations`] with additional domain atoms.
pub fn enumerate_over(f: &Formula, extra: &BTreeSet<Atom>) -> Vec<Valuation> {
    let problem = Problem::new(f, extra);
    let mut asg = vec![None; problem.vars.len()];
    let mut out = Vec::new();
    if problem.solve(&mut asg.clone()) {
        problem.enumerate(0, &mut asg, &mut out);
    }
    out
}
