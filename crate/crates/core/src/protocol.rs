//! Population protocols: states, symmetric pair transitions, configurations and
//! the exact one-step semantics of the uniform random scheduler.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or parsing a protocol.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("undeclared state `{0}`")]
    UnknownState(String),
    #[error("unknown input symbol `{0}`")]
    UnknownSymbol(String),
    #[error("protocol declares no states")]
    NoStates,
    #[error("protocol declares no input symbols")]
    NoInputs,
    #[error("duplicate input symbol `{0}`")]
    DuplicateSymbol(String),
    #[error("missing `output1` declaration")]
    MissingOutput,
    #[error("invalid JSON protocol: {0}")]
    Json(String),
    #[error("configuration of size {0} cannot step (at least two agents are required)")]
    TooSmall(u64),
}

/// Index of a state inside one protocol.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct StateId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An unordered pair of states, stored sorted.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Head {
    lo: StateId,
    hi: StateId,
}

impl Head {
    pub fn new(a: StateId, b: StateId) -> Self {
        if a <= b {
            Head { lo: a, hi: b }
        } else {
            Head { lo: b, hi: a }
        }
    }

    pub fn lo(self) -> StateId {
        self.lo
    }

    pub fn hi(self) -> StateId {
        self.hi
    }

    /// Both elements are the same state.
    pub fn is_double(self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(self, s: StateId) -> bool {
        self.lo == s || self.hi == s
    }

    /// The element paired with `s`, if `s` occurs in the head.
    pub fn partner(self, s: StateId) -> Option<StateId> {
        if self.lo == s {
            Some(self.hi)
        } else if self.hi == s {
            Some(self.lo)
        } else {
            None
        }
    }

    pub fn states(self) -> [StateId; 2] {
        [self.lo, self.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub lhs: Head,
    pub rhs: Head,
    /// False for idle rules added for heads without any declared rule.
    pub explicit: bool,
}

impl Transition {
    pub fn is_idle(&self) -> bool {
        self.lhs == self.rhs
    }
}

/// A symmetric population protocol over the complete interaction graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationProtocol {
    name: String,
    states: Vec<String>,
    transitions: Vec<Transition>,
    inputs: Vec<(String, StateId)>,
    output: Vec<bool>,
    rules_by_head: BTreeMap<Head, Vec<usize>>,
    has_singleton: Vec<bool>,
}

/// Incremental constructor used by the parser and by the corpus builders.
#[derive(Debug, Default, Clone)]
pub struct ProtocolBuilder {
    name: String,
    states: Vec<String>,
    index: HashMap<String, StateId>,
    inputs: Vec<(String, StateId)>,
    output1: BTreeSet<StateId>,
    output_declared: bool,
    rules: Vec<(Head, Head)>,
}

impl ProtocolBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        ProtocolBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn state(&mut self, name: impl Into<String>) -> Result<StateId, ProtocolError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ProtocolError::DuplicateState(name));
        }
        let id = StateId(self.states.len());
        self.index.insert(name.clone(), id);
        self.states.push(name);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Result<StateId, ProtocolError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ProtocolError::UnknownState(name.to_string()))
    }

    pub fn input(&mut self, symbol: impl Into<String>, state: &str) -> Result<(), ProtocolError> {
        let symbol = symbol.into();
        if self.inputs.iter().any(|(s, _)| *s == symbol) {
            return Err(ProtocolError::DuplicateSymbol(symbol));
        }
        let id = self.lookup(state)?;
        self.inputs.push((symbol, id));
        Ok(())
    }

    /// Marks the given states as outputting 1. Calling this with an empty list
    /// still counts as an output declaration.
    pub fn output1<'a>(
        &mut self,
        states: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), ProtocolError> {
        self.output_declared = true;
        for s in states {
            let id = self.lookup(s)?;
            self.output1.insert(id);
        }
        Ok(())
    }

    pub fn rule(&mut self, a: &str, b: &str, c: &str, d: &str) -> Result<(), ProtocolError> {
        let lhs = Head::new(self.lookup(a)?, self.lookup(b)?);
        let rhs = Head::new(self.lookup(c)?, self.lookup(d)?);
        if !self.rules.contains(&(lhs, rhs)) {
            self.rules.push((lhs, rhs));
        }
        Ok(())
    }

    pub fn build(self) -> Result<PopulationProtocol, ProtocolError> {
        if self.states.is_empty() {
            return Err(ProtocolError::NoStates);
        }
        if self.inputs.is_empty() {
            return Err(ProtocolError::NoInputs);
        }
        if !self.output_declared {
            return Err(ProtocolError::MissingOutput);
        }
        let q = self.states.len();
        let mut transitions: Vec<Transition> = self
            .rules
            .iter()
            .map(|&(lhs, rhs)| Transition {
                lhs,
                rhs,
                explicit: true,
            })
            .collect();
        let declared: BTreeSet<Head> = self.rules.iter().map(|(l, _)| *l).collect();
        for i in 0..q {
            for j in i..q {
                let h = Head::new(StateId(i), StateId(j));
                if !declared.contains(&h) {
                    transitions.push(Transition {
                        lhs: h,
                        rhs: h,
                        explicit: false,
                    });
                }
            }
        }
        let mut rules_by_head: BTreeMap<Head, Vec<usize>> = BTreeMap::new();
        for (i, t) in transitions.iter().enumerate() {
            rules_by_head.entry(t.lhs).or_default().push(i);
        }
        let mut has_singleton = vec![false; q];
        for t in &transitions {
            if t.lhs.is_double() && !t.is_idle() {
                has_singleton[t.lhs.lo().index()] = true;
            }
        }
        let output = (0..q).map(|i| self.output1.contains(&StateId(i))).collect();
        Ok(PopulationProtocol {
            name: self.name,
            states: self.states,
            transitions,
            inputs: self.inputs,
            output,
            rules_by_head,
            has_singleton,
        })
    }
}

impl PopulationProtocol {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> + Clone {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_name(&self, s: StateId) -> &str {
        &self.states[s.index()]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|n| n == name).map(StateId)
    }

    /// All transitions, including materialized idle ones.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn explicit_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.explicit)
    }

    pub fn non_idle_transitions(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| !t.is_idle())
    }

    /// Number of transitions sharing the head `h` (the implicit idle rule counts as one).
    pub fn rules_with_head(&self, h: Head) -> usize {
        self.rules_by_head.get(&h).map_or(0, Vec::len)
    }

    pub fn transitions_with_head(&self, h: Head) -> impl Iterator<Item = &Transition> {
        self.rules_by_head
            .get(&h)
            .into_iter()
            .flatten()
            .map(move |&i| &self.transitions[i])
    }

    /// Whether the singleton atom `A!` exists, i.e. some non-idle rule has head `AA`.
    pub fn has_singleton(&self, s: StateId) -> bool {
        self.has_singleton[s.index()]
    }

    /// Whether some non-idle rule has head `h`.
    pub fn head_is_active(&self, h: Head) -> bool {
        self.transitions_with_head(h).any(|t| !t.is_idle())
    }

    pub fn output(&self, s: StateId) -> bool {
        self.output[s.index()]
    }

    pub fn inputs(&self) -> &[(String, StateId)] {
        &self.inputs
    }

    /// `I(Σ)`, sorted and deduplicated.
    pub fn input_states(&self) -> Vec<StateId> {
        let set: BTreeSet<StateId> = self.inputs.iter().map(|(_, s)| *s).collect();
        set.into_iter().collect()
    }

    pub fn initial_configuration(
        &self,
        input: &BTreeMap<String, u64>,
    ) -> Result<Configuration, ProtocolError> {
        let mut counts = vec![0u32; self.num_states()];
        for (sym, &k) in input {
            let state = self
                .inputs
                .iter()
                .find(|(s, _)| s == sym)
                .map(|(_, q)| *q)
                .ok_or_else(|| ProtocolError::UnknownSymbol(sym.clone()))?;
            counts[state.index()] += k as u32;
        }
        Ok(Configuration::new(counts))
    }

    /// Every initial configuration with exactly `n` agents, in lexicographic order.
    pub fn initial_configurations(&self, n: u32) -> Vec<Configuration> {
        let inputs = self.input_states();
        let mut out = Vec::new();
        let mut counts = vec![0u32; self.num_states()];
        fn rec(
            inputs: &[StateId],
            i: usize,
            left: u32,
            counts: &mut Vec<u32>,
            out: &mut Vec<Configuration>,
        ) {
            if i + 1 == inputs.len() {
                counts[inputs[i].index()] = left;
                out.push(Configuration::new(counts.clone()));
                counts[inputs[i].index()] = 0;
                return;
            }
            for k in (0..=left).rev() {
                counts[inputs[i].index()] = k;
                rec(inputs, i + 1, left - k, counts, out);
            }
            counts[inputs[i].index()] = 0;
        }
        rec(&inputs, 0, n, &mut counts, &mut out);
        out
    }

    /// Probability that one scheduler step fires `t` in `c`.
    pub fn transition_probability(
        &self,
        c: &Configuration,
        t: &Transition,
    ) -> Result<Rational64, ProtocolError> {
        let n = c.size();
        if n < 2 {
            return Err(ProtocolError::TooSmall(n));
        }
        if !c.enabled(t) {
            return Ok(Rational64::from_integer(0));
        }
        let k = self.rules_with_head(t.lhs) as i64;
        Ok(pair_weight(c, t.lhs) / (pair_count(n) * k))
    }

    /// Successor distribution of `c` under one scheduler step. Idle steps show
    /// up as mass on `c` itself.
    pub fn step_distribution(
        &self,
        c: &Configuration,
    ) -> Result<BTreeMap<Configuration, Rational64>, ProtocolError> {
        let n = c.size();
        if n < 2 {
            return Err(ProtocolError::TooSmall(n));
        }
        let total = pair_count(n);
        let mut dist: BTreeMap<Configuration, Rational64> = BTreeMap::new();
        for (&head, rules) in &self.rules_by_head {
            let w = pair_weight(c, head);
            if w == Rational64::from_integer(0) {
                continue;
            }
            let each = w / (total * rules.len() as i64);
            for &i in rules {
                let succ = c.fire(&self.transitions[i]);
                *dist.entry(succ).or_insert_with(|| Rational64::from_integer(0)) += each;
            }
        }
        Ok(dist)
    }

    /// Serializes the protocol in the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("protocol {}\n", self.name));
        out.push_str(&format!("states: {}\n", self.states.join(" ")));
        let inputs: Vec<String> = self
            .inputs
            .iter()
            .map(|(sym, s)| format!("{} -> {}", sym, self.state_name(*s)))
            .collect();
        out.push_str(&format!("inputs: {}\n", inputs.join(", ")));
        let ones: Vec<&str> = self
            .state_ids()
            .filter(|&s| self.output(s))
            .map(|s| self.state_name(s))
            .collect();
        out.push_str(&format!("output1: {}\n", ones.join(" ")));
        out.push_str("transitions:\n");
        for t in self.explicit_transitions() {
            out.push_str(&format!(
                "  {} {} -> {} {}\n",
                self.state_name(t.lhs.lo()),
                self.state_name(t.lhs.hi()),
                self.state_name(t.rhs.lo()),
                self.state_name(t.rhs.hi())
            ));
        }
        out
    }

    /// `AB` for one-letter names, `A B` otherwise.
    pub fn display_head(&self, h: Head) -> String {
        let (a, b) = (self.state_name(h.lo()), self.state_name(h.hi()));
        if a.chars().count() == 1 && b.chars().count() == 1 {
            format!("{a}{b}")
        } else {
            format!("{a} {b}")
        }
    }

    pub fn display_config(&self, c: &Configuration) -> String {
        let parts: Vec<String> = self
            .state_ids()
            .filter(|&s| c.get(s) > 0)
            .map(|s| format!("{}:{}", self.state_name(s), c.get(s)))
            .collect();
        format!("({})", parts.join(","))
    }
}

fn pair_count(n: u64) -> i64 {
    (n * n - n) as i64
}

/// Number of ordered agent pairs whose states form `h`.
fn pair_weight(c: &Configuration, h: Head) -> Rational64 {
    let a = c.get(h.lo()) as i64;
    if h.is_double() {
        Rational64::from_integer(a * (a - 1))
    } else {
        Rational64::from_integer(2 * a * c.get(h.hi()) as i64)
    }
}

/// A multiset of agents over the states of a protocol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Configuration {
    counts: Vec<u32>,
}

impl Configuration {
    pub fn new(counts: Vec<u32>) -> Self {
        Configuration { counts }
    }

    pub fn zero(num_states: usize) -> Self {
        Configuration {
            counts: vec![0; num_states],
        }
    }

    pub fn get(&self, s: StateId) -> u32 {
        self.counts[s.index()]
    }

    pub fn set(&mut self, s: StateId, k: u32) {
        self.counts[s.index()] = k;
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn size(&self) -> u64 {
        self.counts.iter().map(|&k| k as u64).sum()
    }

    pub fn enabled(&self, t: &Transition) -> bool {
        let a = self.get(t.lhs.lo());
        if t.lhs.is_double() {
            a >= 2
        } else {
            a >= 1 && self.get(t.lhs.hi()) >= 1
        }
    }

    /// Fires `t`. Panics if `t` is not enabled.
    pub fn fire(&self, t: &Transition) -> Configuration {
        assert!(self.enabled(t), "firing a disabled transition");
        let mut counts = self.counts.clone();
        for s in t.lhs.states() {
            counts[s.index()] -= 1;
        }
        for s in t.rhs.states() {
            counts[s.index()] += 1;
        }
        Configuration { counts }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.counts)
    }
}

/// Parses either the text format or (if the first non-blank char is `{`) JSON.
pub fn parse_protocol(text: &str) -> Result<PopulationProtocol, ProtocolError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ProtocolError {
    ProtocolError::Parse {
        line,
        message: message.into(),
    }
}

/// Rewrites builder errors so they name the offending line.
fn at_line(line: usize) -> impl Fn(ProtocolError) -> ProtocolError {
    move |e| match e {
        ProtocolError::Parse { .. } => e,
        other => parse_err(line, other.to_string()),
    }
}

fn parse_text(text: &str) -> Result<PopulationProtocol, ProtocolError> {
    let mut builder: Option<ProtocolBuilder> = None;
    let mut states_line = None;
    let mut in_transitions = false;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("protocol") {
            if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
                return Err(parse_err(line_no, format!("unexpected `{line}`")));
            }
            if builder.is_some() {
                return Err(parse_err(line_no, "duplicate `protocol` header"));
            }
            builder = Some(ProtocolBuilder::new(rest.trim()));
            continue;
        }
        let b = builder.get_or_insert_with(|| ProtocolBuilder::new("unnamed"));
        let (key, value) = match line.split_once(':') {
            Some((k, v)) if !k.contains("->") => (Some(k.trim()), v.trim()),
            _ => (None, line),
        };
        match key {
            Some("states") => {
                in_transitions = false;
                if states_line.is_some() {
                    return Err(parse_err(line_no, "duplicate `states` declaration"));
                }
                states_line = Some(line_no);
                for name in value.split_whitespace() {
                    b.state(name).map_err(at_line(line_no))?;
                }
            }
            Some("inputs") => {
                in_transitions = false;
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (sym, state) = item.split_once("->").ok_or_else(|| {
                        parse_err(line_no, format!("input symbol `{item}` has no `-> state` mapping"))
                    })?;
                    let (sym, state) = (sym.trim(), state.trim());
                    if sym.is_empty() || state.is_empty() {
                        return Err(parse_err(line_no, format!("malformed input mapping `{item}`")));
                    }
                    b.input(sym, state).map_err(at_line(line_no))?;
                }
            }
            Some("output1") => {
                in_transitions = false;
                b.output1(value.split_whitespace()).map_err(at_line(line_no))?;
            }
            Some("transitions") => {
                if !value.is_empty() {
                    parse_rule(b, value, line_no)?;
                }
                in_transitions = true;
            }
            Some(other) => {
                return Err(parse_err(line_no, format!("unknown section `{other}`")));
            }
            None if in_transitions => parse_rule(b, value, line_no)?,
            None => return Err(parse_err(line_no, format!("unexpected `{line}`"))),
        }
    }
    let b = builder.ok_or_else(|| parse_err(last_line.max(1), "empty protocol"))?;
    let end = last_line.max(1);
    b.build().map_err(at_line(end))
}

fn parse_rule(b: &mut ProtocolBuilder, text: &str, line_no: usize) -> Result<(), ProtocolError> {
    let (lhs, rhs) = text
        .split_once("->")
        .ok_or_else(|| parse_err(line_no, format!("expected `A B -> C D`, got `{text}`")))?;
    let lhs: Vec<&str> = lhs.split_whitespace().collect();
    let rhs: Vec<&str> = rhs.split_whitespace().collect();
    if lhs.len() != 2 || rhs.len() != 2 {
        return Err(parse_err(
            line_no,
            format!("transitions need exactly two states on each side: `{text}`"),
        ));
    }
    b.rule(lhs[0], lhs[1], rhs[0], rhs[1]).map_err(at_line(line_no))
}

#[derive(Deserialize)]
struct JsonProtocol {
    #[serde(default)]
    name: Option<String>,
    states: Vec<String>,
    inputs: BTreeMap<String, String>,
    output1: Option<Vec<String>>,
    transitions: Vec<[String; 4]>,
}

fn parse_json(text: &str) -> Result<PopulationProtocol, ProtocolError> {
    let raw: JsonProtocol =
        serde_json::from_str(text).map_err(|e| ProtocolError::Json(e.to_string()))?;
    let mut b = ProtocolBuilder::new(raw.name.unwrap_or_else(|| "unnamed".into()));
    for s in &raw.states {
        b.state(s.as_str())?;
    }
    for (sym, state) in &raw.inputs {
        b.input(sym.as_str(), state)?;
    }
    let output1 = raw.output1.ok_or(ProtocolError::MissingOutput)?;
    b.output1(output1.iter().map(String::as_str))?;
    for [a, c, d, e] in &raw.transitions {
        b.rule(a, c, d, e)?;
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE_1: &str = "\
protocol majority_ex1
states: A B a b
inputs: x -> A, y -> B
output1: B b            # states with output 1
transitions:
  A B -> a b
  A b -> A a
  B a -> B b
  b a -> b b
";

    fn ex1() -> PopulationProtocol {
        parse_protocol(EXAMPLE_1).unwrap()
    }

    fn cfg(p: &PopulationProtocol, pairs: &[(&str, u32)]) -> Configuration {
        let mut c = Configuration::zero(p.num_states());
        for (name, k) in pairs {
            c.set(p.state_by_name(name).unwrap(), *k);
        }
        c
    }

    fn rule(p: &PopulationProtocol, a: &str, b: &str) -> Transition {
        let h = Head::new(p.state_by_name(a).unwrap(), p.state_by_name(b).unwrap());
        *p.transitions_with_head(h).next().unwrap()
    }

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn parses_example_one() {
        let p = ex1();
        assert_eq!(p.num_states(), 4);
        assert_eq!(p.explicit_transitions().count(), 4);
        assert_eq!(p.non_idle_transitions().count(), 4);
        // 10 heads over 4 states, 4 carry explicit rules.
        assert_eq!(p.transitions().iter().filter(|t| !t.explicit).count(), 6);
        assert!(p.output(p.state_by_name("b").unwrap()));
        assert!(!p.output(p.state_by_name("a").unwrap()));
    }

    #[test]
    fn swapped_rhs_is_idle() {
        let p = parse_protocol(
            "states: A B\ninputs: x -> A\noutput1: B\ntransitions:\n  A B -> B A\n",
        )
        .unwrap();
        let t = rule(&p, "A", "B");
        assert!(t.explicit);
        assert!(t.is_idle());
        assert_eq!(p.non_idle_transitions().count(), 0);
    }

    #[test]
    fn symmetric_rules_are_identical() {
        let p = parse_protocol(
            "states: A B C D\ninputs: x -> A\noutput1:\ntransitions:\n  A B -> C D\n  B A -> D C\n",
        )
        .unwrap();
        assert_eq!(p.explicit_transitions().count(), 1);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dup = "states: A A\ninputs: x -> A\noutput1: A\n";
        assert!(matches!(parse_protocol(dup), Err(ProtocolError::Parse { line: 1, .. })));
        let undeclared = "states: A\ninputs: x -> A\noutput1: A\ntransitions:\n  A A -> A Z\n";
        assert!(matches!(
            parse_protocol(undeclared),
            Err(ProtocolError::Parse { line: 5, .. })
        ));
        let unmapped = "states: A\ninputs: x\noutput1: A\n";
        assert!(matches!(parse_protocol(unmapped), Err(ProtocolError::Parse { line: 2, .. })));
        let no_output = "states: A\ninputs: x -> A\n";
        match parse_protocol(no_output) {
            Err(ProtocolError::Parse { message, .. }) => assert!(message.contains("output1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parses_json_encoding() {
        let json = r#"{"states":["A","B","a","b"],"inputs":{"x":"A","y":"B"},
            "output1":["B","b"],
            "transitions":[["A","B","a","b"],["A","b","A","a"],["B","a","B","b"],["b","a","b","b"]]}"#;
        let p = parse_protocol(json).unwrap();
        let q = ex1();
        assert_eq!(p.transitions(), q.transitions());
        assert_eq!(p.input_states(), q.input_states());
    }

    #[test]
    fn initial_configuration_sums_symbols() {
        let p = ex1();
        let input = BTreeMap::from([("x".to_string(), 3), ("y".to_string(), 2)]);
        assert_eq!(p.initial_configuration(&input).unwrap(), cfg(&p, &[("A", 3), ("B", 2)]));

        let q = parse_protocol("states: A B\ninputs: x -> A, z -> A\noutput1: B\n").unwrap();
        let input = BTreeMap::from([("x".to_string(), 2), ("z".to_string(), 5)]);
        assert_eq!(q.initial_configuration(&input).unwrap().get(StateId(0)), 7);

        let empty = p.initial_configuration(&BTreeMap::new()).unwrap();
        assert_eq!(empty.size(), 0);
        assert!(p.step_distribution(&empty).is_err());
    }

    #[test]
    fn enabled_and_fire() {
        let p = ex1();
        let ab = rule(&p, "A", "B");
        assert!(cfg(&p, &[("A", 1), ("B", 1)]).enabled(&ab));
        assert!(!cfg(&p, &[("A", 1)]).enabled(&ab));
        let aa = rule(&p, "A", "A");
        assert!(aa.is_idle());
        assert!(!cfg(&p, &[("A", 1)]).enabled(&aa));
        assert_eq!(
            cfg(&p, &[("A", 2), ("B", 1)]).fire(&ab),
            cfg(&p, &[("A", 1), ("a", 1), ("b", 1)])
        );
        let c = cfg(&p, &[("A", 2)]);
        assert_eq!(c.fire(&aa), c);
    }

    #[test]
    fn probabilities_match_hand_values() {
        let p = ex1();
        let ab = rule(&p, "A", "B");
        assert_eq!(
            p.transition_probability(&cfg(&p, &[("A", 1), ("B", 1)]), &ab).unwrap(),
            r(1, 1)
        );
        let aa = rule(&p, "A", "A");
        assert_eq!(
            p.transition_probability(&cfg(&p, &[("A", 2), ("a", 1)]), &aa).unwrap(),
            r(1, 3)
        );
        assert!(p.transition_probability(&cfg(&p, &[("A", 1)]), &ab).is_err());
    }

    #[test]
    fn single_pair_distribution() {
        let p = ex1();
        let d = p.step_distribution(&cfg(&p, &[("A", 1), ("B", 1)])).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&cfg(&p, &[("a", 1), ("b", 1)])], r(1, 1));
    }

    #[test]
    fn three_agent_distribution_by_pair_enumeration() {
        // Agents A, B, a: the unordered pairs {A,B}, {A,a}, {B,a} each have
        // probability 1/3. AB fires AB->ab, Aa is idle, Ba fires Ba->Bb.
        let p = ex1();
        let c = cfg(&p, &[("A", 1), ("B", 1), ("a", 1)]);
        let d = p.step_distribution(&c).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[&cfg(&p, &[("a", 2), ("b", 1)])], r(1, 3));
        assert_eq!(d[&c], r(1, 3));
        assert_eq!(d[&cfg(&p, &[("A", 1), ("B", 1), ("b", 1)])], r(1, 3));
    }

    #[test]
    fn uniform_choice_among_rules_with_same_head() {
        let p = parse_protocol(
            "states: A B C\ninputs: x -> A\noutput1: C\ntransitions:\n  A A -> B B\n  A A -> C C\n  A A -> B C\n",
        )
        .unwrap();
        let c = cfg(&p, &[("A", 3)]);
        let probs: Vec<Rational64> = p
            .transitions_with_head(Head::new(StateId(0), StateId(0)))
            .map(|t| p.transition_probability(&c, t).unwrap())
            .collect();
        assert_eq!(probs, vec![r(1, 3); 3]);
    }

    #[test]
    fn text_roundtrip() {
        let p = ex1();
        let q = parse_protocol(&p.to_text()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn initial_configurations_enumerates_compositions() {
        let p = ex1();
        let all = p.initial_configurations(3);
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|c| c.size() == 3));
    }
}
