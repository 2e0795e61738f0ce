// SPDX-License-Identifier: Apache-2.0

//! Finite-state-machine specifications and the per-bit target functions
//! derived from them.
//!
//! A machine is read from a JSON document:
//!
//! ```json
//! {
//!   "name": "toggle",
//!   "input_bits": ["X"],
//!   "state_bits": ["S"],
//!   "output_bits": ["Z"],
//!   "states": [{"name": "S0", "code": "0"}, {"name": "S1", "code": "1"}],
//!   "transitions": [
//!     {"from": "S0", "input": "-", "to": "S1", "output": "0"},
//!     {"from": "S1", "input": "-", "to": "S0", "output": "1"}
//!   ]
//! }
//! ```
//!
//! Bit strings are written most-significant bit first, in the declared
//! bit-name order. A `-` in an input pattern matches both values and is
//! expanded while parsing, so a validated [`FsmSpec`] always holds exactly
//! one transition per (state, input vector) pair.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on primary inputs; the transition table grows as `2^inputs`.
pub const MAX_INPUT_BITS: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FsmError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("validation error: {0}")]
    Validation(String),
}

fn invalid(msg: impl Into<String>) -> FsmError {
    FsmError::Validation(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub name: String,
    pub code: Vec<bool>,
}

/// One fully expanded row of the transition table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub input: Vec<bool>,
    pub to: usize,
    pub output: Vec<bool>,
}

/// A validated, deterministic and total Mealy machine.
///
/// Transitions are kept sorted by (source state index, input value), so two
/// specs describing the same machine compare equal regardless of how their
/// documents listed the rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsmSpec {
    pub name: String,
    pub input_bits: Vec<String>,
    pub state_bits: Vec<String>,
    pub output_bits: Vec<String>,
    pub states: Vec<State>,
    transitions: Vec<Transition>,
}

/// A single (state, input) evaluation point with its expected response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalVector {
    pub present_state: Vec<bool>,
    pub inputs: Vec<bool>,
    pub expected_next_state: Vec<bool>,
    pub expected_outputs: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    NextState,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetVector {
    pub present_state: Vec<bool>,
    pub inputs: Vec<bool>,
    pub expected: bool,
}

/// The single-bit function one cell array has to realise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetFunction {
    pub kind: TargetKind,
    pub bit_index: usize,
    /// Signal name of the driven bit (`A` for a flip-flop, `Z` for an output).
    pub name: String,
    pub num_inputs: usize,
    pub num_state_bits: usize,
    pub vectors: Vec<TargetVector>,
}

impl TargetFunction {
    /// Builds a target from an arbitrary predicate evaluated on the listed
    /// present-state codes and on every input vector.
    pub fn from_fn(
        kind: TargetKind,
        name: &str,
        num_inputs: usize,
        state_codes: &[Vec<bool>],
        num_state_bits: usize,
        f: impl Fn(&[bool], &[bool]) -> bool,
    ) -> Self {
        let mut vectors = Vec::new();
        for code in state_codes {
            assert_eq!(code.len(), num_state_bits);
            for v in 0..(1u64 << num_inputs) {
                let inputs = bits_of(v, num_inputs);
                let expected = f(code, &inputs);
                vectors.push(TargetVector { present_state: code.clone(), inputs, expected });
            }
        }
        TargetFunction { kind, bit_index: 0, name: name.to_string(), num_inputs, num_state_bits, vectors }
    }

    /// `dff:NAME` or `out:NAME`.
    pub fn id(&self) -> String {
        match self.kind {
            TargetKind::NextState => format!("dff:{}", self.name),
            TargetKind::Output => format!("out:{}", self.name),
        }
    }

    /// Left-hand side used when printing equations, e.g. `D_A` or `Z`.
    pub fn lhs(&self) -> String {
        match self.kind {
            TargetKind::NextState => format!("D_{}", self.name),
            TargetKind::Output => self.name.clone(),
        }
    }

    pub fn design_max(&self) -> u32 {
        self.vectors.len() as u32
    }
}

/// `value` as `width` bits, most-significant first.
pub fn bits_of(value: u64, width: usize) -> Vec<bool> {
    (0..width).rev().map(|i| (value >> i) & 1 == 1).collect()
}

/// Inverse of [`bits_of`].
pub fn value_of(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn parse_exact_bits(s: &str, width: usize, what: &str) -> Result<Vec<bool>, FsmError> {
    if s.chars().count() != width {
        return Err(invalid(format!("{what} \"{s}\" must be exactly {width} bits wide")));
    }
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(invalid(format!("{what} \"{s}\" may only contain 0 and 1"))),
        })
        .collect()
}

/// Expands a `{0,1,-}` pattern into all matching input values.
fn expand_pattern(s: &str, width: usize, what: &str) -> Result<Vec<u64>, FsmError> {
    if s.chars().count() != width {
        return Err(invalid(format!("{what} \"{s}\" must be exactly {width} bits wide")));
    }
    let mut values = vec![0u64];
    for c in s.chars() {
        values = match c {
            '0' => values.into_iter().map(|v| v << 1).collect(),
            '1' => values.into_iter().map(|v| (v << 1) | 1).collect(),
            '-' => values.into_iter().flat_map(|v| [v << 1, (v << 1) | 1]).collect(),
            _ => return Err(invalid(format!("{what} \"{s}\" may only contain 0, 1 and -"))),
        };
    }
    Ok(values)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    name: String,
    code: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDoc {
    from: String,
    input: String,
    to: String,
    output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FsmDoc {
    name: String,
    input_bits: Vec<String>,
    state_bits: Vec<String>,
    output_bits: Vec<String>,
    states: Vec<StateDoc>,
    transitions: Vec<TransitionDoc>,
}

/// Parses and validates an FSM document.
pub fn parse_fsm(text: &str) -> Result<FsmSpec, FsmError> {
    let doc: FsmDoc = serde_json::from_str(text).map_err(|e| FsmError::Syntax(e.to_string()))?;
    FsmSpec::from_doc(doc)
}

impl FsmSpec {
    fn from_doc(doc: FsmDoc) -> Result<Self, FsmError> {
        if doc.input_bits.len() > MAX_INPUT_BITS {
            return Err(invalid(format!(
                "{} input bits exceeds the supported maximum of {MAX_INPUT_BITS}",
                doc.input_bits.len()
            )));
        }
        if doc.state_bits.len() > 63 {
            return Err(invalid("more than 63 state bits"));
        }
        let mut seen = HashSet::new();
        for n in doc.input_bits.iter().chain(&doc.state_bits).chain(&doc.output_bits) {
            if n.is_empty() {
                return Err(invalid("signal names must be non-empty"));
            }
            if !seen.insert(n.as_str()) {
                return Err(invalid(format!("signal name \"{n}\" is declared more than once")));
            }
        }
        if doc.states.is_empty() {
            return Err(invalid("at least one state is required"));
        }

        let width = doc.state_bits.len();
        let mut states = Vec::with_capacity(doc.states.len());
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        let mut by_code: HashMap<Vec<bool>, &str> = HashMap::new();
        for (i, s) in doc.states.iter().enumerate() {
            if by_name.insert(s.name.as_str(), i).is_some() {
                return Err(invalid(format!("state \"{}\" is declared more than once", s.name)));
            }
            let code = parse_exact_bits(&s.code, width, &format!("code of state \"{}\"", s.name))?;
            if let Some(other) = by_code.insert(code.clone(), s.name.as_str()) {
                return Err(invalid(format!("states \"{other}\" and \"{}\" share code \"{}\"", s.name, s.code)));
            }
            states.push(State { name: s.name.clone(), code });
        }

        let n_in = doc.input_bits.len();
        let n_out = doc.output_bits.len();
        let per_state = 1usize << n_in;
        // (to, output, source row) per (state, input value)
        let mut table: Vec<Option<(usize, Vec<bool>, usize)>> = vec![None; states.len() * per_state];
        for (row, t) in doc.transitions.iter().enumerate() {
            let from = *by_name
                .get(t.from.as_str())
                .ok_or_else(|| invalid(format!("transition {row} starts in undeclared state \"{}\"", t.from)))?;
            let to = *by_name.get(t.to.as_str()).ok_or_else(|| {
                invalid(format!("transition {row} ({} -> {}) targets an undeclared state", t.from, t.to))
            })?;
            let output = parse_exact_bits(
                &t.output,
                n_out,
                &format!("output of transition {row} ({} on \"{}\")", t.from, t.input),
            )?;
            let values = expand_pattern(&t.input, n_in, &format!("input of transition {row} (from \"{}\")", t.from))?;
            for v in values {
                let slot = &mut table[from * per_state + v as usize];
                match slot {
                    Some((prev_to, prev_out, prev_row)) => {
                        if *prev_to != to || *prev_out != output {
                            return Err(invalid(format!(
                                "nondeterministic transitions {prev_row} and {row}: state \"{}\" on input \"{}\"",
                                t.from,
                                bits_to_string(&bits_of(v, n_in))
                            )));
                        }
                    }
                    None => *slot = Some((to, output.clone(), row)),
                }
            }
        }

        let mut transitions = Vec::with_capacity(table.len());
        for (i, slot) in table.into_iter().enumerate() {
            let (from, v) = (i / per_state, (i % per_state) as u64);
            let (to, output, _) = slot.ok_or_else(|| {
                invalid(format!(
                    "incomplete transitions: state \"{}\" has no transition on input \"{}\"",
                    states[from].name,
                    bits_to_string(&bits_of(v, n_in))
                ))
            })?;
            transitions.push(Transition { from, input: bits_of(v, n_in), to, output });
        }

        Ok(FsmSpec {
            name: doc.name,
            input_bits: doc.input_bits,
            state_bits: doc.state_bits,
            output_bits: doc.output_bits,
            states,
            transitions,
        })
    }

    /// Builds a spec from already-expanded rows. Rows may come in any order.
    pub fn from_parts(
        name: &str,
        input_bits: Vec<String>,
        state_bits: Vec<String>,
        output_bits: Vec<String>,
        states: Vec<State>,
        transitions: Vec<Transition>,
    ) -> Result<Self, FsmError> {
        let doc = FsmDoc {
            name: name.to_string(),
            input_bits,
            state_bits,
            output_bits,
            states: states.iter().map(|s| StateDoc { name: s.name.clone(), code: bits_to_string(&s.code) }).collect(),
            transitions: transitions
                .iter()
                .map(|t| {
                    let name_of = |i: usize| states.get(i).map(|s| s.name.clone()).unwrap_or_else(|| format!("#{i}"));
                    TransitionDoc {
                        from: name_of(t.from),
                        input: bits_to_string(&t.input),
                        to: name_of(t.to),
                        output: bits_to_string(&t.output),
                    }
                })
                .collect(),
        };
        Self::from_doc(doc)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn num_inputs(&self) -> usize {
        self.input_bits.len()
    }

    pub fn num_state_bits(&self) -> usize {
        self.state_bits.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.output_bits.len()
    }

    pub fn state_by_code(&self, code: &[bool]) -> Option<usize> {
        self.states.iter().position(|s| s.code == code)
    }

    /// Looks up the row for a state index and input vector.
    pub fn transition(&self, state: usize, input: &[bool]) -> &Transition {
        &self.transitions[state * (1usize << self.num_inputs()) + value_of(input) as usize]
    }

    /// Canonical document form: one row per (state, input), no wildcards.
    pub fn to_json(&self) -> String {
        let doc = FsmDoc {
            name: self.name.clone(),
            input_bits: self.input_bits.clone(),
            state_bits: self.state_bits.clone(),
            output_bits: self.output_bits.clone(),
            states: self
                .states
                .iter()
                .map(|s| StateDoc { name: s.name.clone(), code: bits_to_string(&s.code) })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionDoc {
                    from: self.states[t.from].name.clone(),
                    input: bits_to_string(&t.input),
                    to: self.states[t.to].name.clone(),
                    output: bits_to_string(&t.output),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("fsm document serializes");
        s.push('\n');
        s
    }

    /// One vector per declared state and input value, in table order.
    pub fn eval_vectors(&self) -> Vec<EvalVector> {
        self.transitions
            .iter()
            .map(|t| EvalVector {
                present_state: self.states[t.from].code.clone(),
                inputs: t.input.clone(),
                expected_next_state: self.states[t.to].code.clone(),
                expected_outputs: t.output.clone(),
            })
            .collect()
    }
}

impl fmt::Display for FsmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} states, {} input bit(s), {} state bit(s), {} output bit(s)",
            self.name,
            self.states.len(),
            self.num_inputs(),
            self.num_state_bits(),
            self.num_outputs()
        )
    }
}

/// Next-state targets (one per flip-flop) followed by output targets.
pub fn derive_targets(spec: &FsmSpec) -> Vec<TargetFunction> {
    let vectors = spec.eval_vectors();
    let make = |kind: TargetKind, bit: usize, name: &str| TargetFunction {
        kind,
        bit_index: bit,
        name: name.to_string(),
        num_inputs: spec.num_inputs(),
        num_state_bits: spec.num_state_bits(),
        vectors: vectors
            .iter()
            .map(|v| TargetVector {
                present_state: v.present_state.clone(),
                inputs: v.inputs.clone(),
                expected: match kind {
                    TargetKind::NextState => v.expected_next_state[bit],
                    TargetKind::Output => v.expected_outputs[bit],
                },
            })
            .collect(),
    };
    let mut targets: Vec<TargetFunction> =
        spec.state_bits.iter().enumerate().map(|(i, n)| make(TargetKind::NextState, i, n)).collect();
    targets.extend(spec.output_bits.iter().enumerate().map(|(i, n)| make(TargetKind::Output, i, n)));
    targets
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOGGLE: &str = r#"{
        "name": "toggle",
        "input_bits": ["X"],
        "state_bits": ["S"],
        "output_bits": ["Z"],
        "states": [{"name": "S0", "code": "0"}, {"name": "S1", "code": "1"}],
        "transitions": [
            {"from": "S0", "input": "-", "to": "S1", "output": "0"},
            {"from": "S1", "input": "-", "to": "S0", "output": "1"}
        ]
    }"#;

    #[test]
    fn toggle_parses_with_expanded_wildcards() {
        let spec = parse_fsm(TOGGLE).unwrap();
        assert_eq!(spec.states.len(), 2);
        assert_eq!(spec.transitions().len(), 4);
        for s in 0..2 {
            for x in [false, true] {
                let t = spec.transition(s, &[x]);
                assert_eq!(t.to, 1 - s);
                assert_eq!(t.output, vec![s == 1]);
            }
        }
    }

    #[test]
    fn duplicate_code_names_both_states() {
        let text = TOGGLE.replace(r#""name": "S1", "code": "1""#, r#""name": "S1", "code": "0""#);
        let err = parse_fsm(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, FsmError::Validation(_)));
        assert!(msg.contains("S0") && msg.contains("S1"), "{msg}");
    }

    #[test]
    fn malformed_json_is_a_syntax_error() {
        assert!(matches!(parse_fsm("{ not json"), Err(FsmError::Syntax(_))));
        assert!(matches!(parse_fsm(r#"{"name": "x"}"#), Err(FsmError::Syntax(_))));
    }

    #[test]
    fn incomplete_table_is_rejected() {
        let text = TOGGLE.replace(r#""from": "S1", "input": "-""#, r#""from": "S1", "input": "1""#);
        let msg = parse_fsm(&text).unwrap_err().to_string();
        assert!(msg.contains("incomplete") && msg.contains("S1"), "{msg}");
    }

    #[test]
    fn conflicting_overlap_is_nondeterministic() {
        let text = TOGGLE.replace(
            r#"{"from": "S1", "input": "-", "to": "S0", "output": "1"}"#,
            r#"{"from": "S1", "input": "-", "to": "S0", "output": "1"},
               {"from": "S1", "input": "1", "to": "S1", "output": "1"}"#,
        );
        let msg = parse_fsm(&text).unwrap_err().to_string();
        assert!(msg.contains("nondeterministic") && msg.contains("S1"), "{msg}");
    }

    #[test]
    fn identical_overlap_is_accepted() {
        let text = TOGGLE.replace(
            r#"{"from": "S1", "input": "-", "to": "S0", "output": "1"}"#,
            r#"{"from": "S1", "input": "-", "to": "S0", "output": "1"},
               {"from": "S1", "input": "1", "to": "S0", "output": "1"}"#,
        );
        assert_eq!(parse_fsm(&text).unwrap(), parse_fsm(TOGGLE).unwrap());
    }

    #[test]
    fn width_mismatches_are_rejected() {
        let bad_code = TOGGLE.replace(r#""code": "1""#, r#""code": "10""#);
        assert!(parse_fsm(&bad_code).unwrap_err().to_string().contains("S1"));
        let bad_out = TOGGLE.replace(r#""output": "1""#, r#""output": "11""#);
        assert!(matches!(parse_fsm(&bad_out), Err(FsmError::Validation(_))));
        let bad_in = TOGGLE.replace(r#""input": "-", "to": "S1""#, r#""input": "--", "to": "S1""#);
        assert!(matches!(parse_fsm(&bad_in), Err(FsmError::Validation(_))));
    }

    #[test]
    fn undeclared_target_state_is_rejected() {
        let text = TOGGLE.replace(r#""to": "S0""#, r#""to": "S9""#);
        assert!(parse_fsm(&text).unwrap_err().to_string().contains("S9"));
    }

    #[test]
    fn toggle_targets() {
        let spec = parse_fsm(TOGGLE).unwrap();
        let targets = derive_targets(&spec);
        assert_eq!(targets.len(), 2);
        assert_eq!(targets[0].kind, TargetKind::NextState);
        assert_eq!(targets[1].kind, TargetKind::Output);
        assert!(targets.iter().all(|t| t.vectors.len() == 4));
        for v in &targets[0].vectors {
            assert_eq!(v.expected, !v.present_state[0]);
        }
        assert_eq!(targets[0].id(), "dff:S");
        assert_eq!(targets[1].lhs(), "Z");
    }

    #[test]
    fn machine_without_inputs() {
        let text = r#"{
            "name": "osc", "input_bits": [], "state_bits": ["Q"], "output_bits": [],
            "states": [{"name": "a", "code": "0"}, {"name": "b", "code": "1"}],
            "transitions": [
                {"from": "a", "input": "", "to": "b", "output": ""},
                {"from": "b", "input": "", "to": "a", "output": ""}
            ]
        }"#;
        let spec = parse_fsm(text).unwrap();
        assert_eq!(spec.eval_vectors().len(), 2);
        let targets = derive_targets(&spec);
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0].vectors.len(), 2);
    }

    #[test]
    fn canonical_json_round_trips() {
        let spec = parse_fsm(TOGGLE).unwrap();
        assert_eq!(parse_fsm(&spec.to_json()).unwrap(), spec);
    }
}
