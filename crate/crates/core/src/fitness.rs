// SPDX-License-Identifier: Apache-2.0

//! Two-stage fitness: matched target bits, plus unused-gate credit once
//! every bit matches.
//!
//! Evaluation is bit-parallel: every signal carries one bit per target
//! vector, packed into `u64` words, so a cell costs one word operation per
//! 64 vectors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{push_cone, Cell};
use crate::fsm_spec::TargetFunction;
use crate::genome::{decode_cells, ArrayLayout, Chromosome, SignalRef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitnessError {
    #[error("chromosome has {got} bits but the layout needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("target {target} has {got_inputs} input / {got_state} state bits, layout expects {inputs} / {state}")]
    TargetMismatch { target: String, inputs: usize, state: usize, got_inputs: usize, got_state: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitnessReport {
    /// Target vectors whose expected bit the circuit reproduces.
    pub design: u32,
    pub design_max: u32,
    /// Cells outside the tap's fan-in cone.
    pub optimization: u32,
    #[serde(rename = "final")]
    pub final_fitness: u32,
    pub fully_functional: bool,
    pub gates: u32,
}

impl FitnessReport {
    pub fn new(design: u32, design_max: u32, cells: u32, gates: u32) -> Self {
        let fully_functional = design == design_max;
        let optimization = cells - gates;
        FitnessReport {
            design,
            design_max,
            optimization,
            final_fitness: if fully_functional { design + optimization } else { design },
            fully_functional,
            gates,
        }
    }
}

/// Ceiling of the final score: every vector matched with zero gates used.
pub fn max_fitness(layout: &ArrayLayout, target: &TargetFunction) -> u32 {
    target.design_max() + layout.num_cells() as u32
}

/// Fitness evaluator bound to one (layout, target) pair.
#[derive(Debug, Clone)]
pub struct Evaluator {
    layout: Arc<ArrayLayout>,
    words: usize,
    design_max: u32,
    inputs: Vec<Vec<u64>>,
    state: Vec<Vec<u64>>,
    expected: Vec<u64>,
    valid: Vec<u64>,
}

/// Reusable buffers for [`Evaluator::evaluate_with`].
#[derive(Debug, Default)]
pub struct Scratch {
    cells: Vec<Cell>,
    used: Vec<bool>,
    values: Vec<u64>,
}

impl Evaluator {
    pub fn new(layout: Arc<ArrayLayout>, target: &TargetFunction) -> Result<Self, FitnessError> {
        if target.num_inputs != layout.num_inputs || target.num_state_bits != layout.num_state_bits {
            return Err(FitnessError::TargetMismatch {
                target: target.id(),
                inputs: layout.num_inputs,
                state: layout.num_state_bits,
                got_inputs: target.num_inputs,
                got_state: target.num_state_bits,
            });
        }
        let n = target.vectors.len();
        let words = n.div_ceil(64).max(1);
        let mut inputs = vec![vec![0u64; words]; layout.num_inputs];
        let mut state = vec![vec![0u64; words]; layout.num_state_bits];
        let mut expected = vec![0u64; words];
        let mut valid = vec![0u64; words];
        for (k, v) in target.vectors.iter().enumerate() {
            let (w, bit) = (k / 64, 1u64 << (k % 64));
            valid[w] |= bit;
            if v.expected {
                expected[w] |= bit;
            }
            for (i, &b) in v.inputs.iter().enumerate() {
                if b {
                    inputs[i][w] |= bit;
                }
            }
            for (i, &b) in v.present_state.iter().enumerate() {
                if b {
                    state[i][w] |= bit;
                }
            }
        }
        Ok(Evaluator { layout, words, design_max: n as u32, inputs, state, expected, valid })
    }

    pub fn layout(&self) -> &Arc<ArrayLayout> {
        &self.layout
    }

    pub fn design_max(&self) -> u32 {
        self.design_max
    }

    pub fn max_fitness(&self) -> u32 {
        self.design_max + self.layout.num_cells() as u32
    }

    pub fn evaluate(&self, chromosome: &Chromosome) -> Result<FitnessReport, FitnessError> {
        self.evaluate_with(chromosome, &mut Scratch::default())
    }

    pub fn evaluate_with(&self, chromosome: &Chromosome, scratch: &mut Scratch) -> Result<FitnessReport, FitnessError> {
        let l = &*self.layout;
        if chromosome.len() != l.chromosome_len() {
            return Err(FitnessError::LengthMismatch { expected: l.chromosome_len(), got: chromosome.len() });
        }
        let tap = decode_cells(l, chromosome, &mut scratch.cells);
        scratch.used.clear();
        scratch.used.resize(l.num_cells(), false);
        let gates = push_cone(&scratch.cells, l.rows, tap, &mut scratch.used);

        let words = self.words;
        scratch.values.clear();
        scratch.values.resize(l.num_cells() * words, 0);
        for i in 0..l.num_cells() {
            if !scratch.used[i] {
                continue;
            }
            let cell = scratch.cells[i];
            for w in 0..words {
                let a = self.word(cell.inputs[0], w, &scratch.values);
                let b = self.word(cell.inputs[1], w, &scratch.values);
                scratch.values[i * words + w] = cell.gate.apply_word(a, b);
            }
        }
        let mut design = 0u32;
        for w in 0..words {
            let out = self.word(tap, w, &scratch.values);
            design += (!(out ^ self.expected[w]) & self.valid[w]).count_ones();
        }
        Ok(FitnessReport::new(design, self.design_max, l.num_cells() as u32, gates as u32))
    }

    #[inline]
    fn word(&self, s: SignalRef, w: usize, values: &[u64]) -> u64 {
        match s {
            SignalRef::Input(i) => self.inputs[i][w],
            SignalRef::State(i) => self.state[i][w],
            SignalRef::Zero => 0,
            SignalRef::One => !0,
            SignalRef::Gate { row, col } => values[(col * self.layout.rows + row) * self.words + w],
        }
    }
}

/// One-shot evaluation of a chromosome against a target.
pub fn evaluate_fitness(
    layout: &Arc<ArrayLayout>,
    chromosome: &Chromosome,
    target: &TargetFunction,
) -> Result<FitnessReport, FitnessError> {
    Evaluator::new(layout.clone(), target)?.evaluate(chromosome)
}
