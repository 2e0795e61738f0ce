// SPDX-License-Identifier: Apache-2.0

//! Chromosome layout for one multiplexer-configured cell array.
//!
//! Genes are laid out cell by cell in column-major, row-ascending order.
//! Each cell contributes a 2-bit gate type followed by two input-select
//! fields; the output-tap select field comes last. Every field is read
//! most-significant bit first.
//!
//! Choice sets are ordered as: primary inputs, present-state bits, the
//! constants 0 and 1 (gate inputs only), then gate outputs in column-major,
//! row-ascending order. A select value past the end of its choice set wraps
//! around modulo the set size, so every bit string decodes.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Cell, Phenotype};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenomeError {
    #[error("array dimensions must be positive (got {rows}x{cols})")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("chromosome has {got} bits but the layout needs {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid chromosome hex: {0}")]
    BadHex(String),
    #[error("{0} is not selectable at this position")]
    NotSelectable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Connectivity {
    /// Gate inputs may come from the immediately preceding column only.
    Neighbor,
    /// Gate inputs may come from any column to the left.
    #[default]
    AllLeft,
}

impl std::str::FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "neighbor" => Ok(Connectivity::Neighbor),
            "all-left" => Ok(Connectivity::AllLeft),
            other => Err(format!("unknown connectivity \"{other}\" (expected all-left or neighbor)")),
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Neighbor => "neighbor",
            Connectivity::AllLeft => "all-left",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateType {
    And,
    Or,
    Xor,
    Not,
}

impl GateType {
    pub const ALL: [GateType; 4] = [GateType::And, GateType::Or, GateType::Xor, GateType::Not];

    /// 00 = AND, 01 = OR, 10 = XOR, 11 = NOT.
    pub fn from_code(code: u8) -> Self {
        Self::ALL[(code & 3) as usize]
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn arity(self) -> usize {
        if self == GateType::Not {
            1
        } else {
            2
        }
    }

    #[inline]
    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            GateType::And => a & b,
            GateType::Or => a | b,
            GateType::Xor => a ^ b,
            GateType::Not => !a,
        }
    }

    #[inline]
    pub fn apply_word(self, a: u64, b: u64) -> u64 {
        match self {
            GateType::And => a & b,
            GateType::Or => a | b,
            GateType::Xor => a ^ b,
            GateType::Not => !a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateType::And => "AND",
            GateType::Or => "OR",
            GateType::Xor => "XOR",
            GateType::Not => "NOT",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name().eq_ignore_ascii_case(s))
    }
}

/// Whether gate types are evolved or pinned to a fixed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GateTypeMode {
    #[default]
    Evolved,
    /// Row `r` is always `GateType::ALL[r % 4]`; the type genes are neutral.
    FixedRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalRef {
    Input(usize),
    State(usize),
    Zero,
    One,
    Gate { row: usize, col: usize },
}

impl SignalRef {
    pub fn is_gate(self) -> bool {
        matches!(self, SignalRef::Gate { .. })
    }
}

/// Array geometry plus the derived chromosome field widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub rows: usize,
    pub cols: usize,
    pub num_inputs: usize,
    pub num_state_bits: usize,
    pub connectivity: Connectivity,
    pub gate_types: GateTypeMode,
    input_choices: Vec<usize>,
    input_widths: Vec<usize>,
    tap_choices: usize,
    tap_width: usize,
    cell_offsets: Vec<usize>,
    length: usize,
}

pub const TYPE_WIDTH: usize = 2;

/// Bits needed to address `n` choices (0 for a single choice).
pub fn select_width(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

pub fn build_layout(
    rows: usize,
    cols: usize,
    num_inputs: usize,
    num_state_bits: usize,
    connectivity: Connectivity,
) -> Result<ArrayLayout, GenomeError> {
    ArrayLayout::new(rows, cols, num_inputs, num_state_bits, connectivity, GateTypeMode::Evolved)
}

impl ArrayLayout {
    pub fn new(
        rows: usize,
        cols: usize,
        num_inputs: usize,
        num_state_bits: usize,
        connectivity: Connectivity,
        gate_types: GateTypeMode,
    ) -> Result<Self, GenomeError> {
        if rows == 0 || cols == 0 {
            return Err(GenomeError::ZeroDimension { rows, cols });
        }
        let terminals = num_inputs + num_state_bits + 2;
        let input_choices: Vec<usize> = (0..cols)
            .map(|c| {
                let gates = match (connectivity, c) {
                    (_, 0) => 0,
                    (Connectivity::Neighbor, _) => rows,
                    (Connectivity::AllLeft, _) => rows * c,
                };
                terminals + gates
            })
            .collect();
        let input_widths: Vec<usize> = input_choices.iter().map(|&n| select_width(n)).collect();
        let tap_choices = num_inputs + num_state_bits + rows * cols;
        let tap_width = select_width(tap_choices);
        let mut cell_offsets = Vec::with_capacity(rows * cols);
        let mut offset = 0;
        for &w in &input_widths {
            for _ in 0..rows {
                cell_offsets.push(offset);
                offset += TYPE_WIDTH + 2 * w;
            }
        }
        Ok(ArrayLayout {
            rows,
            cols,
            num_inputs,
            num_state_bits,
            connectivity,
            gate_types,
            input_choices,
            input_widths,
            tap_choices,
            tap_width,
            cell_offsets,
            length: offset + tap_width,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Column-major cell index.
    #[inline]
    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        col * self.rows + row
    }

    pub fn input_choice_count(&self, col: usize) -> usize {
        self.input_choices[col]
    }

    pub fn input_select_width(&self, col: usize) -> usize {
        self.input_widths[col]
    }

    pub fn tap_choice_count(&self) -> usize {
        self.tap_choices
    }

    pub fn tap_width(&self) -> usize {
        self.tap_width
    }

    /// Total chromosome length in bits.
    pub fn chromosome_len(&self) -> usize {
        self.length
    }

    /// Bit offset of a cell's gate-type field.
    pub fn cell_offset(&self, row: usize, col: usize) -> usize {
        self.cell_offsets[self.cell_index(row, col)]
    }

    pub fn tap_offset(&self) -> usize {
        self.length - self.tap_width
    }

    /// Signal selected by `index` on a gate input in column `col`.
    pub fn input_choice(&self, col: usize, index: usize) -> SignalRef {
        let index = index % self.input_choices[col];
        let (ni, ns) = (self.num_inputs, self.num_state_bits);
        if index < ni {
            SignalRef::Input(index)
        } else if index < ni + ns {
            SignalRef::State(index - ni)
        } else if index == ni + ns {
            SignalRef::Zero
        } else if index == ni + ns + 1 {
            SignalRef::One
        } else {
            let g = index - ni - ns - 2;
            match self.connectivity {
                Connectivity::Neighbor => SignalRef::Gate { row: g, col: col - 1 },
                Connectivity::AllLeft => SignalRef::Gate { row: g % self.rows, col: g / self.rows },
            }
        }
    }

    /// Inverse of [`Self::input_choice`] for in-range signals.
    pub fn input_choice_index(&self, col: usize, signal: SignalRef) -> Option<usize> {
        let (ni, ns) = (self.num_inputs, self.num_state_bits);
        match signal {
            SignalRef::Input(i) if i < ni => Some(i),
            SignalRef::State(i) if i < ns => Some(ni + i),
            SignalRef::Zero => Some(ni + ns),
            SignalRef::One => Some(ni + ns + 1),
            SignalRef::Gate { row, col: gc } if row < self.rows && gc < col => match self.connectivity {
                Connectivity::Neighbor if gc + 1 == col => Some(ni + ns + 2 + row),
                Connectivity::Neighbor => None,
                Connectivity::AllLeft => Some(ni + ns + 2 + self.cell_index(row, gc)),
            },
            _ => None,
        }
    }

    pub fn tap_choice(&self, index: usize) -> SignalRef {
        let index = index % self.tap_choices;
        let (ni, ns) = (self.num_inputs, self.num_state_bits);
        if index < ni {
            SignalRef::Input(index)
        } else if index < ni + ns {
            SignalRef::State(index - ni)
        } else {
            let g = index - ni - ns;
            SignalRef::Gate { row: g % self.rows, col: g / self.rows }
        }
    }

    pub fn tap_choice_index(&self, signal: SignalRef) -> Option<usize> {
        let (ni, ns) = (self.num_inputs, self.num_state_bits);
        match signal {
            SignalRef::Input(i) if i < ni => Some(i),
            SignalRef::State(i) if i < ns => Some(ni + i),
            SignalRef::Gate { row, col } if row < self.rows && col < self.cols => {
                Some(ni + ns + self.cell_index(row, col))
            }
            _ => None,
        }
    }

    /// The gate type a cell takes when types are not evolved.
    pub fn fixed_gate_type(&self, row: usize) -> GateType {
        GateType::ALL[row % 4]
    }
}

/// A fixed-length bit string configuring one [`ArrayLayout`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    bits: Vec<bool>,
}

impl Chromosome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Chromosome { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Chromosome { bits: vec![false; len] }
    }

    /// Chromosome whose bits are the low `len` bits of `value`, MSB first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        Chromosome { bits: (0..len).rev().map(|i| (value >> i) & 1 == 1).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// Reads `width` bits at `offset` as an unsigned integer, MSB first.
    pub fn field(&self, offset: usize, width: usize) -> usize {
        self.bits[offset..offset + width].iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn set_field(&mut self, offset: usize, width: usize, value: usize) {
        for i in 0..width {
            self.bits[offset + i] = (value >> (width - 1 - i)) & 1 == 1;
        }
    }

    /// Hex digits of the bit string read as a big-endian integer; leading
    /// pad bits are zero.
    pub fn to_hex(&self) -> String {
        if self.bits.is_empty() {
            return String::new();
        }
        let pad = (4 - self.bits.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad).chain(self.bits.iter().copied()).collect();
        padded
            .chunks(4)
            .map(|nib| {
                let v = nib.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
                char::from_digit(v, 16).unwrap()
            })
            .collect()
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self, GenomeError> {
        let expected_digits = len.div_ceil(4);
        if hex.len() != expected_digits {
            return Err(GenomeError::BadHex(format!(
                "expected {expected_digits} hex digits for {len} bits, got {}",
                hex.len()
            )));
        }
        let mut bits = Vec::with_capacity(expected_digits * 4);
        for c in hex.chars() {
            let v = c.to_digit(16).ok_or_else(|| GenomeError::BadHex(format!("'{c}' is not a hex digit")))?;
            bits.extend((0..4).rev().map(|i| (v >> i) & 1 == 1));
        }
        let pad = bits.len() - len;
        if bits[..pad].iter().any(|&b| b) {
            return Err(GenomeError::BadHex("non-zero padding bits".into()));
        }
        Ok(Chromosome { bits: bits.split_off(pad) })
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Uniform, independent bits drawn from `rng`.
pub fn random_chromosome<R: Rng + ?Sized>(layout: &ArrayLayout, rng: &mut R) -> Chromosome {
    Chromosome { bits: (0..layout.chromosome_len()).map(|_| rng.gen::<bool>()).collect() }
}

/// Decodes into the gate grid and tap without allocating a [`Phenotype`].
pub(crate) fn decode_cells(layout: &ArrayLayout, chromosome: &Chromosome, cells: &mut Vec<Cell>) -> SignalRef {
    cells.clear();
    for col in 0..layout.cols {
        let w = layout.input_widths[col];
        for row in 0..layout.rows {
            let off = layout.cell_offsets[layout.cell_index(row, col)];
            let gate = match layout.gate_types {
                GateTypeMode::Evolved => GateType::from_code(chromosome.field(off, TYPE_WIDTH) as u8),
                GateTypeMode::FixedRows => layout.fixed_gate_type(row),
            };
            let a = layout.input_choice(col, chromosome.field(off + TYPE_WIDTH, w));
            let b = layout.input_choice(col, chromosome.field(off + TYPE_WIDTH + w, w));
            cells.push(Cell { gate, inputs: [a, b] });
        }
    }
    layout.tap_choice(chromosome.field(layout.tap_offset(), layout.tap_width))
}

/// Decodes a chromosome into its netlist. Total for correctly sized input.
pub fn decode(layout: &Arc<ArrayLayout>, chromosome: &Chromosome) -> Result<Phenotype, GenomeError> {
    if chromosome.len() != layout.chromosome_len() {
        return Err(GenomeError::LengthMismatch { expected: layout.chromosome_len(), got: chromosome.len() });
    }
    let mut cells = Vec::with_capacity(layout.num_cells());
    let tap = decode_cells(layout, chromosome, &mut cells);
    Ok(Phenotype::from_parts_unchecked(layout.clone(), cells, tap))
}

/// Encodes a phenotype back into canonical (in-range) select values.
pub fn encode(phenotype: &Phenotype) -> Result<Chromosome, GenomeError> {
    let layout = phenotype.layout();
    let mut chromosome = Chromosome::zeros(layout.chromosome_len());
    for col in 0..layout.cols {
        let w = layout.input_select_width(col);
        for row in 0..layout.rows {
            let cell = phenotype.cell(row, col);
            let off = layout.cell_offset(row, col);
            let type_code = match layout.gate_types {
                GateTypeMode::Evolved => cell.gate.code(),
                GateTypeMode::FixedRows => {
                    if cell.gate != layout.fixed_gate_type(row) {
                        return Err(GenomeError::NotSelectable(format!(
                            "{} at cell ({row},{col}) in a fixed-type array",
                            cell.gate.name()
                        )));
                    }
                    cell.gate.code()
                }
            };
            chromosome.set_field(off, TYPE_WIDTH, type_code as usize);
            for (k, &input) in cell.inputs.iter().enumerate() {
                let idx = layout.input_choice_index(col, input).ok_or_else(|| {
                    GenomeError::NotSelectable(format!("{input:?} as input {k} of cell ({row},{col})"))
                })?;
                chromosome.set_field(off + TYPE_WIDTH + k * w, w, idx);
            }
        }
    }
    let tap = layout
        .tap_choice_index(phenotype.tap())
        .ok_or_else(|| GenomeError::NotSelectable(format!("{:?} as the output tap", phenotype.tap())))?;
    chromosome.set_field(layout.tap_offset(), layout.tap_width(), tap);
    Ok(chromosome)
}
