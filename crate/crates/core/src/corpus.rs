//! Parameterized builders for the benchmark protocols, and the reference table
//! of expected results.

use crate::bounds::Bound;
use crate::protocol::{PopulationProtocol, ProtocolBuilder, ProtocolError};

fn names(it: impl IntoIterator<Item = String>) -> Vec<String> {
    it.into_iter().collect()
}

fn add_states(b: &mut ProtocolBuilder, states: &[String]) -> Result<(), ProtocolError> {
    for s in states {
        b.state(s.as_str())?;
    }
    Ok(())
}

/// `x1 ∨ … ∨ xn`: a single `1` converts everyone.
pub fn broadcast() -> PopulationProtocol {
    let mut b = ProtocolBuilder::new("broadcast");
    (|| {
        add_states(&mut b, &names(["0".into(), "1".into()]))?;
        b.input("x0", "0")?;
        b.input("x1", "1")?;
        b.output1(["1"])?;
        b.rule("0", "1", "1", "1")
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// Majority with strong states `A`, `B` and weak `a`, `b`. The rule `ba -> bb`
/// breaks ties in favour of `B`; without it the protocol is only correct when
/// the input is not tied.
pub fn majority_ex1(tie_break: bool) -> PopulationProtocol {
    let name = if tie_break { "majority_ex1" } else { "majority_ex1_no_tiebreak" };
    let mut b = ProtocolBuilder::new(name);
    (|| {
        add_states(&mut b, &names(["A", "B", "a", "b"].map(String::from)))?;
        b.input("x", "A")?;
        b.input("y", "B")?;
        b.output1(["B", "b"])?;
        b.rule("A", "B", "a", "b")?;
        b.rule("A", "b", "A", "a")?;
        b.rule("B", "a", "B", "b")?;
        if tie_break {
            b.rule("b", "a", "b", "b")?;
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// Majority where cancelling `A` and `B` leaves a `C` that converts weak agents.
pub fn majority_ex2() -> PopulationProtocol {
    let mut b = ProtocolBuilder::new("majority_ex2");
    (|| {
        add_states(&mut b, &names(["A", "B", "C", "a", "b"].map(String::from)))?;
        b.input("x", "A")?;
        b.input("y", "B")?;
        b.output1(["B", "b", "C"])?;
        b.rule("A", "B", "b", "C")?;
        b.rule("A", "C", "A", "a")?;
        b.rule("B", "C", "B", "b")?;
        b.rule("B", "a", "B", "b")?;
        b.rule("A", "b", "A", "a")?;
        b.rule("C", "a", "C", "b")
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// Flock of birds `x >= c` where agents add up their values; once the sum
/// reaches `c` everyone is converted. Every pair has an explicit rule.
pub fn flock_sum(c: u32) -> PopulationProtocol {
    assert!(c >= 1);
    let mut b = ProtocolBuilder::new(format!("flock_sum_c{c}"));
    (|| {
        add_states(&mut b, &names((0..=c).map(|i| i.to_string())))?;
        b.input("x0", "0")?;
        b.input("x1", "1")?;
        let cs = c.to_string();
        b.output1([cs.as_str()])?;
        for i in 0..=c {
            for j in i..=c {
                let (l, r) = if i + j < c { (i + j, 0) } else { (c, c) };
                b.rule(&i.to_string(), &j.to_string(), &l.to_string(), &r.to_string())?;
            }
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// Flock of birds `x >= c` where equal levels promote one agent; level `c`
/// converts everyone.
pub fn flock_levels(c: u32) -> PopulationProtocol {
    assert!(c >= 2);
    let mut b = ProtocolBuilder::new(format!("flock_levels_c{c}"));
    (|| {
        add_states(&mut b, &names((0..=c).map(|i| i.to_string())))?;
        b.input("x0", "0")?;
        b.input("x1", "1")?;
        let cs = c.to_string();
        b.output1([cs.as_str()])?;
        for i in 1..c {
            let (s, t) = (i.to_string(), (i + 1).to_string());
            b.rule(&s, &s, &s, &t)?;
        }
        for i in 0..c {
            b.rule(&i.to_string(), &cs, &cs, &cs)?;
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// Flock of birds `x >= c` for `c = 2^k - 1` with logarithmically many states:
/// powers of two double up, and the top value collects the lower bits one at a
/// time.
pub fn flock_log(k: u32) -> PopulationProtocol {
    assert!(k >= 2);
    let c = (1u64 << k) - 1;
    let powers: Vec<u64> = (0..k).map(|i| 1u64 << i).collect();
    // Partial sums 2^(k-1) + ... + 2^j for j = k-2 down to 0; the last one is c.
    let mut partial = Vec::new();
    let mut acc = 1u64 << (k - 1);
    for j in (0..k - 1).rev() {
        acc += 1 << j;
        partial.push(acc);
    }
    let mut values = vec![0u64];
    values.extend(&powers);
    values.extend(&partial);
    let mut b = ProtocolBuilder::new(format!("flock_log_c{c}"));
    (|| {
        add_states(&mut b, &names(values.iter().map(|v| v.to_string())))?;
        b.input("x0", "0")?;
        b.input("x1", "1")?;
        let cs = c.to_string();
        b.output1([cs.as_str()])?;
        let top = 1u64 << (k - 1);
        for (i, &x) in values.iter().enumerate() {
            for &y in &values[i..] {
                let (lo, hi) = (x.min(y), x.max(y));
                let rhs = if hi == c || (lo != 0 && lo + hi >= c) {
                    Some((c, c))
                } else if lo == 0 {
                    None
                } else if lo == hi && lo < top {
                    Some((2 * lo, 0))
                } else if (hi == top || partial.contains(&hi)) && lo == lowest_bit(hi) / 2 {
                    Some((lo + hi, 0))
                } else {
                    None
                };
                if let Some((l, r)) = rhs {
                    b.rule(&lo.to_string(), &hi.to_string(), &l.to_string(), &r.to_string())?;
                }
            }
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

fn lowest_bit(v: u64) -> u64 {
    v & v.wrapping_neg()
}

/// `Σ i·x_i ≡ 0 (mod m)`: numeric agents merge their values, passive agents
/// `T`/`F` copy the verdict of the numeric agents they meet.
pub fn remainder(m: u32) -> PopulationProtocol {
    assert!(m >= 2);
    let mut b = ProtocolBuilder::new(format!("remainder_m{m}"));
    (|| {
        let mut states: Vec<String> = (0..m).map(|i| i.to_string()).collect();
        states.push("T".into());
        states.push("F".into());
        add_states(&mut b, &states)?;
        for i in 1..m {
            b.input(format!("x{i}"), &i.to_string())?;
        }
        b.output1(["0", "T"])?;
        let verdict = |v: u32| if v == 0 { "T" } else { "F" };
        for i in 0..m {
            for j in i..m {
                let r = (i + j) % m;
                b.rule(&i.to_string(), &j.to_string(), &r.to_string(), verdict(r))?;
            }
        }
        for i in 0..m {
            let s = i.to_string();
            for p in ["T", "F"] {
                b.rule(&s, p, &s, verdict(i))?;
            }
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// `Σ a_i·x_i < c` with a leader bit, an output bit and a bounded counter per
/// agent. Whenever a leader meets another agent, the leader keeps as much of
/// the sum as fits, the other agent gets the rest, and both take the verdict.
pub fn threshold(coeffs: &[i64], c: i64) -> PopulationProtocol {
    assert!(!coeffs.is_empty());
    let s = coeffs.iter().map(|a| a.abs()).max().unwrap().max(c.abs() + 1);
    let name = |l: u8, o: u8, u: i64| format!("{l}{o}_{u}");
    let pretty: Vec<String> = coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{a}x{}", i + 1))
        .collect();
    let mut b = ProtocolBuilder::new(format!("threshold[{}<{c}]", pretty.join("+")));
    (|| {
        let mut all = Vec::new();
        for l in [0u8, 1] {
            for o in [0u8, 1] {
                for u in -s..=s {
                    all.push((l, o, u));
                    b.state(name(l, o, u))?;
                }
            }
        }
        for (i, &a) in coeffs.iter().enumerate() {
            b.input(format!("x{}", i + 1), &name(1, u8::from(a < c), a))?;
        }
        let ones: Vec<String> = all
            .iter()
            .filter(|st| st.1 == 1)
            .map(|&(l, o, u)| name(l, o, u))
            .collect();
        b.output1(ones.iter().map(String::as_str))?;
        for (i, &(l1, o1, u1)) in all.iter().enumerate() {
            for &(l2, o2, u2) in &all[i..] {
                if l1 == 0 && l2 == 0 {
                    continue;
                }
                let sum = u1 + u2;
                let q = sum.clamp(-s, s);
                let r = sum - q;
                let v = u8::from(sum < c);
                b.rule(&name(l1, o1, u1), &name(l2, o2, u2), &name(1, v, q), &name(0, v, r))?;
            }
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Avc {
    /// Odd weight at least 3.
    Strong(i64),
    /// Weight 1 at the given level `1..=d`.
    Weak(i64, u32),
    Zero(i64),
}

impl Avc {
    fn value(self) -> i64 {
        match self {
            Avc::Strong(v) => v,
            Avc::Weak(sign, _) => sign,
            Avc::Zero(_) => 0,
        }
    }

    fn weight(self) -> i64 {
        self.value().abs()
    }

    fn sign(self) -> i64 {
        match self {
            Avc::Strong(v) => v.signum(),
            Avc::Weak(s, _) | Avc::Zero(s) => s,
        }
    }

    fn name(self) -> String {
        let sign = if self.sign() > 0 { "+" } else { "-" };
        match self {
            Avc::Strong(v) => format!("{sign}{}", v.abs()),
            Avc::Weak(_, j) => format!("{sign}1_{j}"),
            Avc::Zero(_) => format!("{sign}0"),
        }
    }

    fn from_value(v: i64) -> Avc {
        if v.abs() == 1 {
            Avc::Weak(v, 1)
        } else {
            Avc::Strong(v)
        }
    }

    fn shift_to_zero(self, d: u32) -> Avc {
        match self {
            Avc::Weak(s, j) if j < d => Avc::Weak(s, j + 1),
            other => other,
        }
    }
}

fn round_down_odd(k: i64) -> i64 {
    if k.rem_euclid(2) == 1 {
        k
    } else {
        k - 1
    }
}

fn round_up_odd(k: i64) -> i64 {
    if k.rem_euclid(2) == 1 {
        k
    } else {
        k + 1
    }
}

fn avc_step(x: Avc, y: Avc, d: u32) -> (Avc, Avc) {
    let (wx, wy) = (x.weight(), y.weight());
    let sum = x.value() + y.value();
    if (wx > 0 && wy > 1) || (wy > 0 && wx > 1) {
        // sum of two odd values is even
        let avg = sum / 2;
        (Avc::from_value(round_down_odd(avg)), Avc::from_value(round_up_odd(avg)))
    } else if wx * wy == 0 && sum != 0 {
        let sign = sum.signum();
        if wx != 0 {
            (x.shift_to_zero(d), Avc::Zero(sign))
        } else {
            (Avc::Zero(sign), y.shift_to_zero(d))
        }
    } else if matches!((x, y), (Avc::Weak(_, i), Avc::Weak(_, j)) if i == d && j == d)
        && x.sign() != y.sign()
    {
        (Avc::Zero(-1), Avc::Zero(1))
    } else {
        (x.shift_to_zero(d), y.shift_to_zero(d))
    }
}

/// Average-and-conquer majority (`x >= y`, correct when `x != y`) with maximal
/// weight `m` (odd) and `d` intermediate levels of weight 1.
pub fn average_and_conquer(m: i64, d: u32) -> PopulationProtocol {
    assert!(m >= 3 && m % 2 == 1 && d >= 1);
    let mut states = Vec::new();
    for sign in [1i64, -1] {
        for w in (3..=m).step_by(2) {
            states.push(Avc::Strong(sign * w));
        }
        for j in 1..=d {
            states.push(Avc::Weak(sign, j));
        }
        states.push(Avc::Zero(sign));
    }
    let mut b = ProtocolBuilder::new(format!("avc_m{m}_d{d}"));
    (|| {
        for s in &states {
            b.state(s.name())?;
        }
        b.input("x", &Avc::Strong(m).name())?;
        b.input("y", &Avc::Strong(-m).name())?;
        let ones: Vec<String> = states.iter().filter(|s| s.sign() > 0).map(|s| s.name()).collect();
        b.output1(ones.iter().map(String::as_str))?;
        for (i, &x) in states.iter().enumerate() {
            for &y in &states[i..] {
                let (c, e) = avc_step(x, y, d);
                b.rule(&x.name(), &y.name(), &c.name(), &e.name())?;
            }
        }
        Ok::<_, ProtocolError>(())
    })()
    .expect("valid protocol");
    b.build().expect("valid protocol")
}

/// One row of the reference table.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    /// The predicate or parameters, for tables.
    pub label: &'static str,
    pub build: fn() -> PopulationProtocol,
    pub states: usize,
    pub transitions: usize,
    pub stages: usize,
    pub bound: Bound,
}

/// The benchmark suite with reference |Q|, |T|, |S| and bound.
pub fn benchmarks() -> Vec<Benchmark> {
    use Bound::*;
    vec![
        Benchmark { name: "broadcast", label: "x1 or ... or xn", build: broadcast, states: 2, transitions: 1, stages: 5, bound: QuasiQuadratic },
        Benchmark { name: "majority_ex2", label: "majority, cancellation via C", build: majority_ex2, states: 5, transitions: 6, stages: 13, bound: QuasiQuadratic },
        Benchmark { name: "majority_ex1", label: "majority, with tie-break", build: || majority_ex1(true), states: 4, transitions: 4, stages: 11, bound: Exponential },
        Benchmark { name: "majority_ex1_no_tiebreak", label: "majority, no tie-break", build: || majority_ex1(false), states: 4, transitions: 3, stages: 9, bound: QuasiQuadratic },
        Benchmark { name: "flock_sum_c5", label: "x >= 5 (sum)", build: || flock_sum(5), states: 6, transitions: 21, stages: 26, bound: Cubic },
        Benchmark { name: "flock_sum_c10", label: "x >= 10 (sum)", build: || flock_sum(10), states: 11, transitions: 66, stages: 46, bound: Cubic },
        Benchmark { name: "flock_levels_c5", label: "x >= 5 (levels)", build: || flock_levels(5), states: 6, transitions: 9, stages: 54, bound: Cubic },
        Benchmark { name: "flock_levels_c7", label: "x >= 7 (levels)", build: || flock_levels(7), states: 8, transitions: 13, stages: 198, bound: Cubic },
        Benchmark { name: "flock_log_c15", label: "x >= 15 (binary)", build: || flock_log(4), states: 8, transitions: 23, stages: 66, bound: Cubic },
        Benchmark { name: "flock_log_c31", label: "x >= 31 (binary)", build: || flock_log(5), states: 10, transitions: 34, stages: 130, bound: Cubic },
        Benchmark { name: "remainder_m3", label: "sum of i*x_i = 0 mod 3", build: || remainder(3), states: 5, transitions: 12, stages: 27, bound: QuasiQuadratic },
        Benchmark { name: "remainder_m5", label: "sum of i*x_i = 0 mod 5", build: || remainder(5), states: 7, transitions: 25, stages: 225, bound: QuasiQuadratic },
        Benchmark { name: "avc_m3_d1", label: "majority, m=3 d=1", build: || average_and_conquer(3, 1), states: 6, transitions: 21, stages: 41, bound: QuasiQuadratic },
        Benchmark { name: "threshold_2v_lt0", label: "-x1+x2 < 0", build: || threshold(&[-1, 1], 0), states: 12, transitions: 57, stages: 21, bound: Cubic },
    ]
}

/// Larger threshold rows. Each takes seconds rather than milliseconds.
pub fn extended_benchmarks() -> Vec<Benchmark> {
    use Bound::*;
    vec![
        Benchmark { name: "threshold_2v_lt1", label: "-x1+x2 < 1", build: || threshold(&[-1, 1], 1), states: 20, transitions: 155, stages: 131, bound: Cubic },
        Benchmark { name: "threshold_4v_lt0", label: "-2x1-x2+x3+2x4 < 0", build: || threshold(&[-2, -1, 1, 2], 0), states: 20, transitions: 155, stages: 1049, bound: Cubic },
        Benchmark { name: "threshold_4v_lt1", label: "-2x1-x2+x3+2x4 < 1", build: || threshold(&[-2, -1, 1, 2], 1), states: 20, transitions: 155, stages: 1049, bound: Cubic },
    ]
}

pub fn benchmark(name: &str) -> Option<Benchmark> {
    benchmarks().into_iter().chain(extended_benchmarks()).find(|b| b.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_reference_table() {
        for b in benchmarks() {
            let p = (b.build)();
            assert_eq!(p.num_states(), b.states, "{}", b.name);
            assert_eq!(p.explicit_transitions().count(), b.transitions, "{}", b.name);
        }
    }

    #[test]
    fn family_sizes() {
        for (k, q, t) in [(2, 4, 7), (3, 6, 14), (4, 8, 23), (5, 10, 34), (6, 12, 47)] {
            let p = flock_log(k);
            assert_eq!((p.num_states(), p.explicit_transitions().count()), (q, t), "k={k}");
        }
        for (m, t) in [(2, 7), (3, 12), (4, 18), (5, 25), (7, 42), (9, 63)] {
            assert_eq!(remainder(m).explicit_transitions().count(), t);
        }
        assert_eq!(threshold(&[-1, 1], 1).num_states(), 20);
        assert_eq!(threshold(&[-1, 1], 1).explicit_transitions().count(), 155);
        assert_eq!(average_and_conquer(3, 2).explicit_transitions().count(), 36);
        assert_eq!(average_and_conquer(5, 1).num_states(), 8);
    }

    #[test]
    fn avc_rules() {
        let d = 1;
        assert_eq!(avc_step(Avc::Strong(3), Avc::Strong(-3), d), (Avc::Weak(-1, 1), Avc::Weak(1, 1)));
        assert_eq!(avc_step(Avc::Strong(3), Avc::Weak(-1, 1), d), (Avc::Weak(1, 1), Avc::Weak(1, 1)));
        assert_eq!(avc_step(Avc::Strong(3), Avc::Zero(-1), d), (Avc::Strong(3), Avc::Zero(1)));
        assert_eq!(avc_step(Avc::Weak(1, 1), Avc::Weak(-1, 1), d), (Avc::Zero(-1), Avc::Zero(1)));
        assert_eq!(avc_step(Avc::Weak(1, 1), Avc::Weak(-1, 1), 2), (Avc::Weak(1, 2), Avc::Weak(-1, 2)));
        assert_eq!(avc_step(Avc::Strong(5), Avc::Strong(-3), 1), (Avc::Weak(1, 1), Avc::Weak(1, 1)));
    }
}
