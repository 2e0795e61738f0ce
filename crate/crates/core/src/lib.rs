// SPDX-License-Identifier: Apache-2.0

//! Evolutionary synthesis of synchronous sequential circuits.
//!
//! A finite-state machine is split into one single-bit target per flip-flop
//! input and per primary output. Each target is realised by its own
//! rectangular array of AND/OR/XOR/NOT cells whose wiring is chosen by
//! multiplexer select bits; a genetic algorithm searches those bits first
//! for full functionality and then for the fewest active gates.

pub mod circuit;
pub mod cli;
pub mod fitness;
pub mod fsm_spec;
pub mod ga_engine;
pub mod genome;
pub mod oracle;
pub mod synthesizer;

pub use circuit::{Cell, GateUsage, NetlistDoc, Phenotype, SignalNames};
pub use fitness::{evaluate_fitness, max_fitness, Evaluator, FitnessReport};
pub use fsm_spec::{derive_targets, parse_fsm, FsmSpec, TargetFunction, TargetKind};
pub use ga_engine::{run_ga, GaConfig, RunResult, Termination};
pub use genome::{
    build_layout, decode, encode, random_chromosome, ArrayLayout, Chromosome, Connectivity, GateType, SignalRef,
};
pub use synthesizer::{synthesize, verify, LayoutParams, SequentialCircuit, SynthesisReport};
