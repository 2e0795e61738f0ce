// SPDX-License-Identifier: Apache-2.0

//! Reference implementations used to cross-check the evolutionary path:
//! a Boolean expression parser/evaluator, the sequential-detector benchmark
//! machine, and exhaustive minimum-gate search on tiny arrays.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::circuit::{Cell, Phenotype};
use crate::fsm_spec::{bits_of, FsmSpec, State, TargetFunction, Transition};
use crate::genome::{self, ArrayLayout, Chromosome, Connectivity, GateType, SignalRef};
use crate::synthesizer::{LayoutParams, SequentialCircuit};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("variable \"{0}\" is unassigned")]
    Unassigned(String),
    #[error("search space of 2^{0} chromosomes exceeds the 2^24 enumeration bound")]
    SearchSpaceTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoolExpr {
    Const(bool),
    Var(String),
    Not(Box<BoolExpr>),
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Xor(Box<BoolExpr>, Box<BoolExpr>),
}

impl BoolExpr {
    pub fn var(name: &str) -> Self {
        BoolExpr::Var(name.to_string())
    }

    pub fn negate(e: BoolExpr) -> Self {
        BoolExpr::Not(Box::new(e))
    }

    pub fn and(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Or(Box::new(a), Box::new(b))
    }

    pub fn xor(a: BoolExpr, b: BoolExpr) -> Self {
        BoolExpr::Xor(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, env: &HashMap<String, bool>) -> Result<bool, OracleError> {
        Ok(match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Var(v) => *env.get(v).ok_or_else(|| OracleError::Unassigned(v.clone()))?,
            BoolExpr::Not(a) => !a.eval(env)?,
            BoolExpr::And(a, b) => a.eval(env)? & b.eval(env)?,
            BoolExpr::Or(a, b) => a.eval(env)? | b.eval(env)?,
            BoolExpr::Xor(a, b) => a.eval(env)? ^ b.eval(env)?,
        })
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Var(v) => {
                out.insert(v.clone());
            }
            BoolExpr::Not(a) => a.collect_vars(out),
            BoolExpr::And(a, b) | BoolExpr::Or(a, b) | BoolExpr::Xor(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for BoolExpr {
    /// Fully parenthesized prefix form, for diagnostics.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolExpr::Const(b) => write!(f, "{}", *b as u8),
            BoolExpr::Var(v) => write!(f, "{v}"),
            BoolExpr::Not(a) => write!(f, "NOT({a})"),
            BoolExpr::And(a, b) => write!(f, "AND({a},{b})"),
            BoolExpr::Or(a, b) => write!(f, "OR({a},{b})"),
            BoolExpr::Xor(a, b) => write!(f, "XOR({a},{b})"),
        }
    }
}

// Grammar, loosest binding first:
//   or   := xor ('+' xor)*
//   xor  := and ('⊕' and)*
//   and  := post (['·'] post)*
//   post := atom '\''*
//   atom := NAME | '{' chars '}' | '0' | '1' | '(' or ')'
// NAME is one ASCII letter followed by digits or underscores, so `XAC` is
// three variables.
struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, OracleError> {
        Err(OracleError::Syntax { pos: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, set: &[char]) -> bool {
        match self.peek() {
            Some(c) if set.contains(&c) => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn or(&mut self) -> Result<BoolExpr, OracleError> {
        let mut lhs = self.xor()?;
        while self.eat(&['+', '|']) {
            lhs = BoolExpr::or(lhs, self.xor()?);
        }
        Ok(lhs)
    }

    fn xor(&mut self) -> Result<BoolExpr, OracleError> {
        let mut lhs = self.and()?;
        while self.eat(&['⊕', '^']) {
            lhs = BoolExpr::xor(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<BoolExpr, OracleError> {
        let mut lhs = self.post()?;
        loop {
            let juxtaposed = matches!(self.peek(), Some(c) if c.is_ascii_alphabetic() || c == '(' || c == '{' || c == '0' || c == '1');
            if self.eat(&['·', '*', '&', '.']) || juxtaposed {
                lhs = BoolExpr::and(lhs, self.post()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn post(&mut self) -> Result<BoolExpr, OracleError> {
        let mut e = self.atom()?;
        while self.eat(&['\'', '’']) {
            e = BoolExpr::negate(e);
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<BoolExpr, OracleError> {
        match self.peek() {
            None => self.err("unexpected end of expression"),
            Some('0') => {
                self.pos += 1;
                Ok(BoolExpr::Const(false))
            }
            Some('1') => {
                self.pos += 1;
                Ok(BoolExpr::Const(true))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.or()?;
                if !self.eat(&[')']) {
                    return self.err("expected ')'");
                }
                Ok(e)
            }
            Some('{') => {
                let start = self.pos + 1;
                let Some(len) = self.chars[start..].iter().position(|&c| c == '}') else {
                    return self.err("unterminated '{'");
                };
                self.pos = start + len + 1;
                let name: String = self.chars[start..start + len].iter().collect();
                if name.is_empty() {
                    return self.err("empty braced name");
                }
                Ok(BoolExpr::Var(name))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let mut name = String::from(c);
                self.pos += 1;
                while let Some(&d) = self.chars.get(self.pos) {
                    if d.is_ascii_digit() || d == '_' {
                        name.push(d);
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                Ok(BoolExpr::Var(name))
            }
            Some(c) => self.err(format!("unexpected '{c}'")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<BoolExpr, OracleError> {
    let mut p = Parser { chars: text.chars().collect(), pos: 0 };
    let e = p.or()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    Ok(e)
}

/// True when both expressions agree on every assignment of the union of
/// their variables.
pub fn equivalent(a: &BoolExpr, b: &BoolExpr) -> bool {
    let vars: Vec<String> = a.variables().union(&b.variables()).cloned().collect();
    assert!(vars.len() <= 20, "too many variables for exhaustive comparison");
    (0..1u64 << vars.len()).all(|v| {
        let env: HashMap<String, bool> = vars.iter().enumerate().map(|(i, n)| (n.clone(), v >> i & 1 == 1)).collect();
        a.eval(&env).unwrap() == b.eval(&env).unwrap()
    })
}

/// Published next-state and output equations of the sequential detector.
pub const DETECTOR_D_A: &str = "XB";
pub const DETECTOR_D_B: &str = "X'";
pub const DETECTOR_D_C_EVOLVED: &str = "(XAC)'(C+XA)";
pub const DETECTOR_D_C_SOP: &str = "XAC'+X'C+A'C";
pub const DETECTOR_Z: &str = "C";

/// The two published forms of the third flip-flop's equation agree on all
/// 16 assignments of (X, A, B, C).
pub fn detector_d_c_forms_agree() -> bool {
    equivalent(&parse_expr(DETECTOR_D_C_EVOLVED).unwrap(), &parse_expr(DETECTOR_D_C_SOP).unwrap())
}

/// The sequential detector closed over all eight codes of (A, B, C): one
/// input X, output Z, states `S0..S7` where `Sk` has code `k`.
pub fn derive_benchmark_fsm() -> FsmSpec {
    assert!(detector_d_c_forms_agree());
    let equations: Vec<BoolExpr> = [DETECTOR_D_A, DETECTOR_D_B, DETECTOR_D_C_SOP, DETECTOR_Z]
        .iter()
        .map(|s| parse_expr(s).expect("benchmark equation parses"))
        .collect();
    let states: Vec<State> = (0..8).map(|k| State { name: format!("S{k}"), code: bits_of(k, 3) }).collect();
    let mut transitions = Vec::new();
    for (k, s) in states.iter().enumerate() {
        for x in [false, true] {
            let env: HashMap<String, bool> = [("X", x), ("A", s.code[0]), ("B", s.code[1]), ("C", s.code[2])]
                .into_iter()
                .map(|(n, v)| (n.to_string(), v))
                .collect();
            let next: Vec<bool> = equations[..3].iter().map(|e| e.eval(&env).unwrap()).collect();
            let z = equations[3].eval(&env).unwrap();
            let to = states.iter().position(|t| t.code == next).unwrap();
            transitions.push(Transition { from: k, input: vec![x], to, output: vec![z] });
        }
    }
    FsmSpec::from_parts(
        "seqdet6",
        vec!["X".into()],
        vec!["A".into(), "B".into(), "C".into()],
        vec!["Z".into()],
        states,
        transitions,
    )
    .expect("benchmark machine is valid")
}

/// Hand-wired phenotypes of the published detector solution on an `R x C`
/// all-left array with signals (X; A, B, C), in target order
/// (D_A, D_B, D_C, Z). Needs at least 2 rows and 4 columns.
pub fn detector_reference_phenotypes(layout: &Arc<ArrayLayout>) -> Vec<Phenotype> {
    assert!(layout.rows >= 2 && layout.cols >= 4 && layout.connectivity == Connectivity::AllLeft);
    let (x, a, b, c) = (SignalRef::Input(0), SignalRef::State(0), SignalRef::State(1), SignalRef::State(2));
    let g = |row, col| SignalRef::Gate { row, col };
    let cell = |gate, p, q| Cell { gate, inputs: [p, q] };
    let d_a = Phenotype::blank(layout.clone(), g(0, 0)).unwrap().with_cell(0, 0, cell(GateType::And, x, b)).unwrap();
    let d_b = Phenotype::blank(layout.clone(), g(0, 0))
        .unwrap()
        .with_cell(0, 0, cell(GateType::Not, x, SignalRef::Zero))
        .unwrap();
    let d_c = Phenotype::blank(layout.clone(), g(0, 3))
        .unwrap()
        .with_cell(0, 0, cell(GateType::And, x, a))
        .unwrap()
        .with_cell(0, 1, cell(GateType::And, g(0, 0), c))
        .unwrap()
        .with_cell(1, 1, cell(GateType::Or, c, g(0, 0)))
        .unwrap()
        .with_cell(0, 2, cell(GateType::Not, g(0, 1), SignalRef::Zero))
        .unwrap()
        .with_cell(0, 3, cell(GateType::And, g(0, 2), g(1, 1)))
        .unwrap();
    let z = Phenotype::blank(layout.clone(), c).unwrap();
    vec![d_a, d_b, d_c, z]
}

/// The published detector solution assembled on the default 4x4 all-left
/// arrays.
pub fn detector_reference_circuit() -> SequentialCircuit {
    let spec = derive_benchmark_fsm();
    let layout = LayoutParams::default().layout_for(&spec).expect("4x4 layout");
    let mut parts = detector_reference_phenotypes(&layout);
    let outputs = parts.split_off(3);
    SequentialCircuit::new(spec, parts, outputs).expect("widths match")
}

/// Minimal-gate fully functional phenotype found by enumerating every
/// chromosome of `layout`. Ties go to the numerically smallest chromosome.
pub fn exhaustive_search(
    layout: &Arc<ArrayLayout>,
    target: &TargetFunction,
) -> Result<Option<(Phenotype, Chromosome)>, OracleError> {
    let len = layout.chromosome_len();
    if len > 24 {
        return Err(OracleError::SearchSpaceTooLarge(len));
    }
    let total = 1u64 << len;
    let chunk = 1u64 << 12;
    let best = (0..total.div_ceil(chunk))
        .into_par_iter()
        .filter_map(|ci| {
            let mut best: Option<(usize, u64)> = None;
            for v in ci * chunk..((ci + 1) * chunk).min(total) {
                let c = Chromosome::from_u64(v, len);
                let p = genome::decode(layout, &c).expect("length matches");
                let gates = p.used_gates().count;
                if matches!(best, Some((g, _)) if g <= gates) {
                    continue;
                }
                let ok = target
                    .vectors
                    .iter()
                    .all(|t| p.evaluate(&t.inputs, &t.present_state).expect("widths match") == t.expected);
                if ok {
                    best = Some((gates, v));
                }
            }
            best
        })
        .min();
    Ok(best.map(|(_, v)| {
        let c = Chromosome::from_u64(v, len);
        (genome::decode(layout, &c).unwrap(), c)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm_spec::{derive_targets, TargetKind};
    use crate::genome::build_layout;

    fn v(n: &str) -> BoolExpr {
        BoolExpr::var(n)
    }

    #[test]
    fn parses_published_forms() {
        assert_eq!(parse_expr("XB").unwrap(), BoolExpr::and(v("X"), v("B")));
        assert_eq!(parse_expr("X'").unwrap(), BoolExpr::negate(v("X")));
        let and_xa = BoolExpr::and(v("X"), v("A"));
        assert_eq!(
            parse_expr("(XAC)'(C+XA)").unwrap(),
            BoolExpr::and(BoolExpr::negate(BoolExpr::and(and_xa.clone(), v("C"))), BoolExpr::or(v("C"), and_xa))
        );
    }

    #[test]
    fn precedence_not_and_xor_or() {
        // A + B ⊕ C D'  ==  A + (B ⊕ (C (D')))
        let e = parse_expr("A+B⊕CD'").unwrap();
        assert_eq!(e, BoolExpr::or(v("A"), BoolExpr::xor(v("B"), BoolExpr::and(v("C"), BoolExpr::negate(v("D"))))));
        assert_eq!(parse_expr("X·1").unwrap(), BoolExpr::and(v("X"), BoolExpr::Const(true)));
        assert_eq!(parse_expr("X1B").unwrap(), BoolExpr::and(v("X1"), v("B")));
        assert_eq!(parse_expr("{enable}'").unwrap(), BoolExpr::negate(v("enable")));
        assert_eq!(parse_expr("X''").unwrap(), BoolExpr::negate(BoolExpr::negate(v("X"))));
    }

    #[test]
    fn syntax_errors_carry_position() {
        assert_eq!(
            parse_expr("X+").unwrap_err(),
            OracleError::Syntax { pos: 2, msg: "unexpected end of expression".into() }
        );
        assert!(matches!(parse_expr("(X"), Err(OracleError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_expr("X)"), Err(OracleError::Syntax { pos: 1, .. })));
        assert!(matches!(parse_expr("X $"), Err(OracleError::Syntax { pos: 2, .. })));
        assert!(parse_expr("{}").is_err());
    }

    #[test]
    fn unassigned_variable() {
        let e = parse_expr("XQ").unwrap();
        let env: HashMap<String, bool> = [("X".to_string(), true)].into();
        assert_eq!(e.eval(&env), Err(OracleError::Unassigned("Q".into())));
    }

    #[test]
    fn d_c_identity() {
        assert!(detector_d_c_forms_agree());
        assert!(!equivalent(&parse_expr("XAC'+X'C").unwrap(), &parse_expr(DETECTOR_D_C_SOP).unwrap()));
    }

    #[test]
    fn benchmark_rows() {
        let spec = derive_benchmark_fsm();
        assert_eq!(spec.states.len(), 8);
        assert_eq!(spec.transitions().len(), 16);
        // state 000, X=0 -> 010, Z=0
        let t = spec.transition(0, &[false]);
        assert_eq!(spec.states[t.to].code, vec![false, true, false]);
        assert_eq!(t.output, vec![false]);
        // state 011, X=1 -> D_A = XB = 1
        let t = spec.transition(3, &[true]);
        assert!(spec.states[t.to].code[0]);
        assert_eq!(t.output, vec![true]);
        assert_eq!(derive_benchmark_fsm(), spec);
    }

    #[test]
    fn benchmark_targets() {
        let targets = derive_targets(&derive_benchmark_fsm());
        assert_eq!(targets.len(), 4);
        assert!(targets.iter().all(|t| t.vectors.len() == 16));
        let d_b = &targets[1];
        assert_eq!(d_b.id(), "dff:B");
        assert!(d_b.vectors.iter().all(|v| v.expected == !v.inputs[0]));
    }

    #[test]
    fn search_finds_single_not() {
        let l = Arc::new(build_layout(1, 1, 1, 1, Connectivity::AllLeft).unwrap());
        let codes = vec![vec![false], vec![true]];
        let t = TargetFunction::from_fn(TargetKind::NextState, "S", 1, &codes, 1, |_, i| !i[0]);
        assert_eq!(t.vectors.len(), 4);
        let (p, _) = exhaustive_search(&l, &t).unwrap().unwrap();
        assert_eq!(p.used_gates().count, 1);
        // XOR(X, 1) ties with NOT(X) and has the smaller chromosome
        assert!(t.vectors.iter().all(|v| p.evaluate(&v.inputs, &v.present_state).unwrap() == v.expected));
        assert!(matches!(p.cell(0, 0).gate, GateType::Not | GateType::Xor));
    }

    #[test]
    fn search_finds_xor() {
        let l = Arc::new(build_layout(1, 1, 1, 1, Connectivity::AllLeft).unwrap());
        let codes = vec![vec![false], vec![true]];
        let t = TargetFunction::from_fn(TargetKind::NextState, "A", 1, &codes, 1, |s, i| s[0] ^ i[0]);
        let (p, _) = exhaustive_search(&l, &t).unwrap().unwrap();
        assert_eq!(p.used_gates().count, 1);
        assert_eq!(p.cell(0, 0).gate, GateType::Xor);
    }

    #[test]
    fn search_reports_unsolvable_and_oversized() {
        // XOR of three signals cannot fit in one cell
        let l = Arc::new(build_layout(1, 1, 1, 2, Connectivity::AllLeft).unwrap());
        let codes: Vec<Vec<bool>> = (0..4).map(|k| bits_of(k, 2)).collect();
        let t = TargetFunction::from_fn(TargetKind::Output, "Z", 1, &codes, 2, |s, i| s[0] ^ s[1] ^ i[0]);
        assert!(exhaustive_search(&l, &t).unwrap().is_none());
        let big = Arc::new(build_layout(4, 4, 1, 3, Connectivity::AllLeft).unwrap());
        assert!(matches!(exhaustive_search(&big, &t), Err(OracleError::SearchSpaceTooLarge(_))));
    }

    #[test]
    fn reference_phenotypes_follow_equations() {
        let l = Arc::new(build_layout(4, 4, 1, 3, Connectivity::AllLeft).unwrap());
        let ps = detector_reference_phenotypes(&l);
        let counts: Vec<usize> = ps.iter().map(|p| p.used_gates().count).collect();
        assert_eq!(counts, vec![1, 1, 5, 0]);
        let names = crate::circuit::SignalNames::new(vec!["X".into()], vec!["A".into(), "B".into(), "C".into()]);
        let exprs: Vec<String> = ps.iter().map(|p| p.to_expression(&names)).collect();
        assert_eq!(exprs, vec!["XB", "X'", "(XAC)'(C+XA)", "C"]);
    }
}
