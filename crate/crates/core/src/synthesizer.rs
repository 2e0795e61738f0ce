// SPDX-License-Identifier: Apache-2.0

//! Decomposed synthesis: one cell array per flip-flop input and one per
//! primary output, each evolved on its own, then assembled around the
//! flip-flops and checked by clocked simulation.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitError, NetlistDoc, Phenotype, SignalNames};
use crate::fsm_spec::{bits_of, bits_to_string, derive_targets, FsmSpec, TargetFunction, TargetKind};
use crate::ga_engine::{run_ga, GaConfig, GaError, RunResult};
use crate::genome::{decode, ArrayLayout, Connectivity, GateTypeMode, GenomeError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no run reached full functionality for {target} (best design fitness {best_design}/{design_max})")]
    Failure { target: String, best_design: u32, design_max: u32 },
    #[error("expected {expected} {what} bits, got {got}")]
    WidthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("circuit does not match the machine: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Ga(#[from] GaError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
}

/// Array shape shared by every subcircuit of a synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutParams {
    pub rows: usize,
    pub cols: usize,
    pub connectivity: Connectivity,
    pub gate_types: GateTypeMode,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams { rows: 4, cols: 4, connectivity: Connectivity::AllLeft, gate_types: GateTypeMode::Evolved }
    }
}

impl LayoutParams {
    pub fn layout_for(&self, spec: &FsmSpec) -> Result<Arc<ArrayLayout>, GenomeError> {
        ArrayLayout::new(
            self.rows,
            self.cols,
            spec.num_inputs(),
            spec.num_state_bits(),
            self.connectivity,
            self.gate_types,
        )
        .map(Arc::new)
    }
}

/// Seed of run `run` on target `target`, mixed with SplitMix64 steps.
pub fn derive_seed(master: u64, target: usize, run: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ target as u64) ^ run as u64)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub result: RunResult,
    pub wall_clock_ms: u128,
}

/// All runs of one target.
#[derive(Debug, Clone)]
pub struct TargetOutcome {
    pub target: TargetFunction,
    /// Position of the target in `derive_targets` order.
    pub index: usize,
    pub runs: Vec<RunOutcome>,
}

impl TargetOutcome {
    /// Lexicographically best run: functional, then fewest gates, then
    /// fewest generations, then lowest run index.
    pub fn best(&self) -> &RunOutcome {
        self.runs
            .iter()
            .min_by_key(|r| (!r.result.report.fully_functional, r.result.report.gates, r.result.generations, r.run))
            .expect("at least one run")
    }

    pub fn successes(&self) -> usize {
        self.runs.iter().filter(|r| r.result.report.fully_functional).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: u64,
    pub median: f64,
    pub max: u64,
}

impl Summary {
    pub fn of(values: &[u64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] as f64 } else { (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0 };
        Some(Summary { min: v[0], median, max: v[n - 1] })
    }
}

/// Which targets a synthesis evolves.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TargetSelection {
    #[default]
    All,
    /// A single target id such as `dff:A` or `out:Z`.
    Only(String),
}

impl TargetSelection {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "all" {
            Ok(TargetSelection::All)
        } else if s.starts_with("dff:") || s.starts_with("out:") {
            Ok(TargetSelection::Only(s.to_string()))
        } else {
            Err(format!("invalid target \"{s}\" (expected all, dff:NAME or out:NAME)"))
        }
    }
}

/// Runs `runs` independent GA runs for every selected target. Runs may
/// execute concurrently; results are returned in (target, run) order and do
/// not depend on the worker count.
pub fn evolve_targets(
    spec: &FsmSpec,
    params: &LayoutParams,
    config: &GaConfig,
    runs: usize,
    selection: &TargetSelection,
) -> Result<Vec<TargetOutcome>, SynthError> {
    if runs == 0 {
        return Err(SynthError::Config("runs must be at least 1".into()));
    }
    config.validate()?;
    let layout = params.layout_for(spec)?;
    let targets: Vec<(usize, TargetFunction)> = derive_targets(spec)
        .into_iter()
        .enumerate()
        .filter(|(_, t)| match selection {
            TargetSelection::All => true,
            TargetSelection::Only(id) => &t.id() == id,
        })
        .collect();
    if targets.is_empty() {
        return Err(SynthError::Config(format!("no target matches {selection:?}")));
    }
    let jobs: Vec<(usize, usize)> = (0..targets.len()).flat_map(|t| (0..runs).map(move |r| (t, r))).collect();
    let results: Vec<Result<RunOutcome, GaError>> = jobs
        .par_iter()
        .map(|&(t, r)| {
            let (index, target) = &targets[t];
            let seed = derive_seed(config.seed, *index, r);
            let cfg = GaConfig { seed, ..config.clone() };
            let start = Instant::now();
            let result = run_ga(&layout, target, &cfg)?;
            Ok(RunOutcome { run: r, seed, result, wall_clock_ms: start.elapsed().as_millis() })
        })
        .collect();
    let mut results = results.into_iter();
    let mut outcomes = Vec::with_capacity(targets.len());
    for (index, target) in targets {
        let runs = results.by_ref().take(runs).collect::<Result<Vec<_>, _>>()?;
        outcomes.push(TargetOutcome { target, index, runs });
    }
    Ok(outcomes)
}

/// A sequential circuit: one combinational array per flip-flop input and per
/// primary output, around a bank of D flip-flops.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialCircuit {
    pub spec: FsmSpec,
    pub next_state: Vec<Phenotype>,
    pub outputs: Vec<Phenotype>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub state: String,
    pub input: String,
    pub field: String,
    pub expected: bool,
    pub got: bool,
}

/// Behaviour of the circuit from a state code no declared state uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnusedCodeStep {
    pub code: String,
    pub input: String,
    pub next: String,
    /// Next code is also unused.
    pub escapes: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Verdict {
    pub mismatches: Vec<Mismatch>,
    /// Only filled by [`verify_strict`].
    pub unused_codes: Vec<UnusedCodeStep>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl SequentialCircuit {
    pub fn new(spec: FsmSpec, next_state: Vec<Phenotype>, outputs: Vec<Phenotype>) -> Result<Self, SynthError> {
        if next_state.len() != spec.num_state_bits() || outputs.len() != spec.num_outputs() {
            return Err(SynthError::Mismatch(format!(
                "{} next-state and {} output subcircuits for a machine with {} state and {} output bits",
                next_state.len(),
                outputs.len(),
                spec.num_state_bits(),
                spec.num_outputs()
            )));
        }
        for p in next_state.iter().chain(&outputs) {
            let l = p.layout();
            if l.num_inputs != spec.num_inputs() || l.num_state_bits != spec.num_state_bits() {
                return Err(SynthError::Mismatch("subcircuit signal counts differ from the machine".into()));
            }
        }
        Ok(SequentialCircuit { spec, next_state, outputs })
    }

    pub fn subcircuits(&self) -> impl Iterator<Item = &Phenotype> {
        self.next_state.iter().chain(&self.outputs)
    }

    pub fn total_gates(&self) -> usize {
        self.subcircuits().map(|p| p.used_gates().count).sum()
    }

    pub fn names(&self) -> SignalNames {
        SignalNames::new(self.spec.input_bits.clone(), self.spec.state_bits.clone())
    }

    /// One clock edge: every subcircuit reads the same pre-clock state.
    pub fn step(&self, state: &[bool], inputs: &[bool]) -> Result<(Vec<bool>, Vec<bool>), SynthError> {
        if state.len() != self.spec.num_state_bits() {
            return Err(SynthError::WidthMismatch {
                what: "state",
                expected: self.spec.num_state_bits(),
                got: state.len(),
            });
        }
        if inputs.len() != self.spec.num_inputs() {
            return Err(SynthError::WidthMismatch {
                what: "input",
                expected: self.spec.num_inputs(),
                got: inputs.len(),
            });
        }
        let next = self.next_state.iter().map(|p| p.evaluate(inputs, state)).collect::<Result<Vec<_>, _>>()?;
        let out = self.outputs.iter().map(|p| p.evaluate(inputs, state)).collect::<Result<Vec<_>, _>>()?;
        Ok((next, out))
    }

    /// One equation per subcircuit: `D_A=XB`, ..., `Z=C`.
    pub fn expressions(&self) -> Vec<String> {
        let names = self.names();
        let lhs = self.spec.state_bits.iter().map(|n| format!("D_{n}")).chain(self.spec.output_bits.iter().cloned());
        lhs.zip(self.subcircuits()).map(|(l, p)| format!("{l}={}", p.to_expression(&names))).collect()
    }

    pub fn to_doc(&self) -> CircuitDoc {
        let names = self.names();
        let ids = derive_target_ids(&self.spec);
        CircuitDoc {
            fsm: self.spec.name.clone(),
            subcircuits: ids
                .into_iter()
                .zip(self.subcircuits())
                .map(|((target, lhs), p)| SubcircuitDoc { target, lhs, netlist: p.export_netlist(&names) })
                .collect(),
        }
    }

    pub fn from_doc(doc: &CircuitDoc, spec: &FsmSpec) -> Result<Self, SynthError> {
        let ids = derive_target_ids(spec);
        if doc.subcircuits.len() != ids.len() {
            return Err(SynthError::Mismatch(format!(
                "circuit has {} subcircuits, machine needs {}",
                doc.subcircuits.len(),
                ids.len()
            )));
        }
        let mut phenotypes = Vec::with_capacity(ids.len());
        for ((id, _), sub) in ids.iter().zip(&doc.subcircuits) {
            if &sub.target != id {
                return Err(SynthError::Mismatch(format!("expected subcircuit {id}, found {}", sub.target)));
            }
            let (p, names) = sub.netlist.import()?;
            if names.inputs != spec.input_bits || names.state != spec.state_bits {
                return Err(SynthError::Mismatch(format!("{id} uses different signal names than the machine")));
            }
            phenotypes.push(p);
        }
        let outputs = phenotypes.split_off(spec.num_state_bits());
        SequentialCircuit::new(spec.clone(), phenotypes, outputs)
    }
}

fn derive_target_ids(spec: &FsmSpec) -> Vec<(String, String)> {
    spec.state_bits
        .iter()
        .map(|n| (format!("dff:{n}"), format!("D_{n}")))
        .chain(spec.output_bits.iter().map(|n| (format!("out:{n}"), n.clone())))
        .collect()
}

/// Circuit file: one netlist per subcircuit, flip-flops first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitDoc {
    pub fsm: String,
    pub subcircuits: Vec<SubcircuitDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubcircuitDoc {
    pub target: String,
    pub lhs: String,
    pub netlist: NetlistDoc,
}

/// Walks every declared state and input vector and compares one clock step
/// against the machine.
pub fn verify(circuit: &SequentialCircuit, spec: &FsmSpec) -> Result<Verdict, SynthError> {
    let mut verdict = Verdict::default();
    for t in spec.transitions() {
        let from = &spec.states[t.from];
        let (next, out) = circuit.step(&from.code, &t.input)?;
        let expected_next = &spec.states[t.to].code;
        let next_fields =
            spec.state_bits.iter().enumerate().map(|(i, n)| (format!("next:{n}"), expected_next[i], next[i]));
        let out_fields = spec.output_bits.iter().enumerate().map(|(i, n)| (format!("out:{n}"), t.output[i], out[i]));
        for (field, expected, got) in next_fields.chain(out_fields) {
            if expected != got {
                verdict.mismatches.push(Mismatch {
                    state: from.name.clone(),
                    input: bits_to_string(&t.input),
                    field,
                    expected,
                    got,
                });
            }
        }
    }
    Ok(verdict)
}

/// [`verify`], plus a record of where every unused state code leads.
pub fn verify_strict(circuit: &SequentialCircuit, spec: &FsmSpec) -> Result<Verdict, SynthError> {
    let mut verdict = verify(circuit, spec)?;
    let w = spec.num_state_bits();
    for code in 0..1u64 << w {
        let code = bits_of(code, w);
        if spec.state_by_code(&code).is_some() {
            continue;
        }
        for v in 0..1u64 << spec.num_inputs() {
            let input = bits_of(v, spec.num_inputs());
            let (next, _) = circuit.step(&code, &input)?;
            verdict.unused_codes.push(UnusedCodeStep {
                code: bits_to_string(&code),
                input: bits_to_string(&input),
                escapes: spec.state_by_code(&next).is_none(),
                next: bits_to_string(&next),
            });
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcircuitReport {
    pub target: String,
    pub lhs: String,
    pub runs: usize,
    pub successes: usize,
    pub best_run: usize,
    pub best_seed: u64,
    pub generations: u64,
    pub functional_at: Option<u64>,
    pub gates: u32,
    pub design: u32,
    pub design_max: u32,
    pub expression: String,
    /// Generations to first full functionality over successful runs.
    pub generations_to_functional: Option<Summary>,
    pub gates_over_successes: Option<Summary>,
    pub wall_clock_ms: u128,
}

impl SubcircuitReport {
    pub fn from_outcome(outcome: &TargetOutcome, layout: &Arc<ArrayLayout>, names: &SignalNames) -> Self {
        let best = outcome.best();
        let expression = decode(layout, &best.result.best).map(|p| p.to_expression(names)).unwrap_or_default();
        let functional: Vec<&RunOutcome> = outcome.runs.iter().filter(|r| r.result.report.fully_functional).collect();
        let gens: Vec<u64> = functional.iter().filter_map(|r| r.result.functional_at).collect();
        let gates: Vec<u64> = functional.iter().map(|r| r.result.report.gates as u64).collect();
        SubcircuitReport {
            target: outcome.target.id(),
            lhs: outcome.target.lhs(),
            runs: outcome.runs.len(),
            successes: functional.len(),
            best_run: best.run,
            best_seed: best.seed,
            generations: best.result.generations,
            functional_at: best.result.functional_at,
            gates: best.result.report.gates,
            design: best.result.report.design,
            design_max: best.result.report.design_max,
            expression,
            generations_to_functional: Summary::of(&gens),
            gates_over_successes: Summary::of(&gates),
            wall_clock_ms: outcome.runs.iter().map(|r| r.wall_clock_ms).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub fsm: String,
    pub layout: LayoutParams,
    pub ga: GaConfig,
    pub runs: usize,
    pub subcircuits: Vec<SubcircuitReport>,
    pub next_state_gates: u32,
    pub output_gates: u32,
    pub total_gates: u32,
    /// `pass`, `fail`, or `skipped` when only some targets were evolved.
    pub verdict: String,
    pub mismatches: Vec<Mismatch>,
}

/// Builds the report for a set of outcomes; `circuit` is present only when
/// every target was evolved and reached full functionality.
pub fn report(
    spec: &FsmSpec,
    params: &LayoutParams,
    config: &GaConfig,
    runs: usize,
    outcomes: &[TargetOutcome],
    verdict: Option<&Verdict>,
) -> Result<SynthesisReport, SynthError> {
    let layout = params.layout_for(spec)?;
    let names = SignalNames::new(spec.input_bits.clone(), spec.state_bits.clone());
    let subcircuits: Vec<SubcircuitReport> =
        outcomes.iter().map(|o| SubcircuitReport::from_outcome(o, &layout, &names)).collect();
    let sum = |kind: TargetKind| -> u32 {
        outcomes.iter().filter(|o| o.target.kind == kind).map(|o| o.best().result.report.gates).sum()
    };
    let (next_state_gates, output_gates) = (sum(TargetKind::NextState), sum(TargetKind::Output));
    Ok(SynthesisReport {
        fsm: spec.name.clone(),
        layout: *params,
        ga: config.clone(),
        runs,
        subcircuits,
        next_state_gates,
        output_gates,
        total_gates: next_state_gates + output_gates,
        verdict: match verdict {
            None => "skipped".into(),
            Some(v) if v.passed() => "pass".into(),
            Some(_) => "fail".into(),
        },
        mismatches: verdict.map(|v| v.mismatches.clone()).unwrap_or_default(),
    })
}

/// Assembles the best run of every target into a circuit. Fails on the
/// first target without a fully functional run.
pub fn assemble(
    spec: &FsmSpec,
    params: &LayoutParams,
    outcomes: &[TargetOutcome],
) -> Result<SequentialCircuit, SynthError> {
    let layout = params.layout_for(spec)?;
    let expected = spec.num_state_bits() + spec.num_outputs();
    if outcomes.len() != expected || outcomes.iter().enumerate().any(|(i, o)| o.index != i) {
        return Err(SynthError::Config("assembly needs outcomes for every target, in order".into()));
    }
    let mut phenotypes = Vec::with_capacity(expected);
    for o in outcomes {
        let best = o.best();
        if !best.result.report.fully_functional {
            let top = o.runs.iter().map(|r| r.result.report.design).max().unwrap_or(0);
            return Err(SynthError::Failure {
                target: o.target.id(),
                best_design: top,
                design_max: o.target.design_max(),
            });
        }
        phenotypes.push(decode(&layout, &best.result.best)?);
    }
    let outputs = phenotypes.split_off(spec.num_state_bits());
    SequentialCircuit::new(spec.clone(), phenotypes, outputs)
}

/// Evolves every target, assembles the best-of-runs circuit and verifies it.
pub fn synthesize(
    spec: &FsmSpec,
    params: &LayoutParams,
    config: &GaConfig,
    runs: usize,
) -> Result<(SequentialCircuit, SynthesisReport), SynthError> {
    let outcomes = evolve_targets(spec, params, config, runs, &TargetSelection::All)?;
    let circuit = assemble(spec, params, &outcomes)?;
    let verdict = verify(&circuit, spec)?;
    let report = report(spec, params, config, runs, &outcomes, Some(&verdict))?;
    Ok((circuit, report))
}
