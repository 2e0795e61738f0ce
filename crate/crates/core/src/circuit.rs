// SPDX-License-Identifier: Apache-2.0

//! Decoded netlists: evaluation, active-gate accounting and export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{self, ArrayLayout, Chromosome, Connectivity, GateType, GateTypeMode, SignalRef};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("expected {expected} {what} bits, got {got}")]
    WidthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("cell ({row},{col}) cannot read {signal:?}")]
    BadWiring { row: usize, col: usize, signal: SignalRef },
    #[error("tap {0:?} is out of range")]
    BadTap(SignalRef),
    #[error("netlist: {0}")]
    Netlist(String),
}

/// One cell of the array. NOT gates read `inputs[0]` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub gate: GateType,
    pub inputs: [SignalRef; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phenotype {
    layout: Arc<ArrayLayout>,
    cells: Vec<Cell>,
    tap: SignalRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateUsage {
    /// Column-major mask over all cells.
    pub used: Vec<bool>,
    pub count: usize,
}

/// Names used when printing signals of one array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalNames {
    pub inputs: Vec<String>,
    pub state: Vec<String>,
}

impl SignalNames {
    pub fn new(inputs: Vec<String>, state: Vec<String>) -> Self {
        SignalNames { inputs, state }
    }

    /// `X0, X1, ...` for inputs and `S0, S1, ...` for state bits.
    pub fn generic(layout: &ArrayLayout) -> Self {
        SignalNames {
            inputs: (0..layout.num_inputs).map(|i| format!("X{i}")).collect(),
            state: (0..layout.num_state_bits).map(|i| format!("S{i}")).collect(),
        }
    }

    fn fits(&self, layout: &ArrayLayout) -> bool {
        self.inputs.len() == layout.num_inputs && self.state.len() == layout.num_state_bits
    }
}

pub(crate) fn push_cone(cells: &[Cell], rows: usize, tap: SignalRef, used: &mut [bool]) -> usize {
    let mut count = 0;
    let mut stack = vec![tap];
    while let Some(s) = stack.pop() {
        if let SignalRef::Gate { row, col } = s {
            let idx = col * rows + row;
            if used[idx] {
                continue;
            }
            used[idx] = true;
            count += 1;
            let cell = &cells[idx];
            stack.push(cell.inputs[0]);
            if cell.gate.arity() == 2 {
                stack.push(cell.inputs[1]);
            }
        }
    }
    count
}

impl Phenotype {
    /// Builds a phenotype by hand, checking every gate input against the
    /// layout's connectivity rule. The tap may be any in-range signal,
    /// including a constant (such a phenotype has no chromosome encoding).
    pub fn new(layout: Arc<ArrayLayout>, cells: Vec<Cell>, tap: SignalRef) -> Result<Self, CircuitError> {
        if cells.len() != layout.num_cells() {
            return Err(CircuitError::CellCount { expected: layout.num_cells(), got: cells.len() });
        }
        for col in 0..layout.cols {
            for row in 0..layout.rows {
                let cell = &cells[layout.cell_index(row, col)];
                for &s in &cell.inputs {
                    if layout.input_choice_index(col, s).is_none() {
                        return Err(CircuitError::BadWiring { row, col, signal: s });
                    }
                }
                if layout.gate_types == GateTypeMode::FixedRows && cell.gate != layout.fixed_gate_type(row) {
                    return Err(CircuitError::Netlist(format!(
                        "cell ({row},{col}) must be {} in a fixed-type array",
                        layout.fixed_gate_type(row).name()
                    )));
                }
            }
        }
        let tap_ok = match tap {
            SignalRef::Zero | SignalRef::One => true,
            other => layout.tap_choice_index(other).is_some(),
        };
        if !tap_ok {
            return Err(CircuitError::BadTap(tap));
        }
        Ok(Phenotype { layout, cells, tap })
    }

    /// A phenotype with every cell set to `AND(0, 0)` and the given tap.
    pub fn blank(layout: Arc<ArrayLayout>, tap: SignalRef) -> Result<Self, CircuitError> {
        let cells = (0..layout.num_cells())
            .map(|i| {
                let row = i % layout.rows;
                let gate = match layout.gate_types {
                    GateTypeMode::Evolved => GateType::And,
                    GateTypeMode::FixedRows => layout.fixed_gate_type(row),
                };
                Cell { gate, inputs: [SignalRef::Zero; 2] }
            })
            .collect();
        Self::new(layout, cells, tap)
    }

    pub(crate) fn from_parts_unchecked(layout: Arc<ArrayLayout>, cells: Vec<Cell>, tap: SignalRef) -> Self {
        Phenotype { layout, cells, tap }
    }

    pub fn layout(&self) -> &Arc<ArrayLayout> {
        &self.layout
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[self.layout.cell_index(row, col)]
    }

    pub fn tap(&self) -> SignalRef {
        self.tap
    }

    pub fn with_cell(mut self, row: usize, col: usize, cell: Cell) -> Result<Self, CircuitError> {
        let idx = self.layout.cell_index(row, col);
        self.cells[idx] = cell;
        Self::new(self.layout, self.cells, self.tap)
    }

    pub fn with_tap(self, tap: SignalRef) -> Result<Self, CircuitError> {
        Self::new(self.layout, self.cells, tap)
    }

    /// Combinational value of the tap for one input assignment.
    pub fn evaluate(&self, inputs: &[bool], state: &[bool]) -> Result<bool, CircuitError> {
        let l = &self.layout;
        if inputs.len() != l.num_inputs {
            return Err(CircuitError::WidthMismatch {
                what: "primary input",
                expected: l.num_inputs,
                got: inputs.len(),
            });
        }
        if state.len() != l.num_state_bits {
            return Err(CircuitError::WidthMismatch {
                what: "present-state",
                expected: l.num_state_bits,
                got: state.len(),
            });
        }
        let mut values = vec![false; self.cells.len()];
        let read = |s: SignalRef, values: &[bool]| match s {
            SignalRef::Input(i) => inputs[i],
            SignalRef::State(i) => state[i],
            SignalRef::Zero => false,
            SignalRef::One => true,
            SignalRef::Gate { row, col } => values[col * l.rows + row],
        };
        // column-major order is a topological order
        for i in 0..self.cells.len() {
            let c = &self.cells[i];
            values[i] = c.gate.apply(read(c.inputs[0], &values), read(c.inputs[1], &values));
        }
        Ok(read(self.tap, &values))
    }

    /// Gates in the transitive fan-in cone of the tap.
    pub fn used_gates(&self) -> GateUsage {
        let mut used = vec![false; self.cells.len()];
        let count = push_cone(&self.cells, self.layout.rows, self.tap, &mut used);
        GateUsage { used, count }
    }

    pub fn to_chromosome(&self) -> Result<Chromosome, genome::GenomeError> {
        genome::encode(self)
    }

    /// Infix expression for the tap: juxtaposition for AND, `+` for OR,
    /// `⊕` for XOR and postfix `'` for NOT.
    pub fn to_expression(&self, names: &SignalNames) -> String {
        let names = if names.fits(&self.layout) { names.clone() } else { SignalNames::generic(&self.layout) };
        self.render(self.tap, &names).text
    }

    fn render(&self, s: SignalRef, names: &SignalNames) -> Rendered {
        match s {
            SignalRef::Input(i) => Rendered::atom(format_name(&names.inputs[i])),
            SignalRef::State(i) => Rendered::atom(format_name(&names.state[i])),
            SignalRef::Zero => Rendered::atom("0".into()),
            SignalRef::One => Rendered::atom("1".into()),
            SignalRef::Gate { row, col } => {
                let cell = *self.cell(row, col);
                let a = self.render(cell.inputs[0], names);
                if cell.gate == GateType::Not {
                    let text = match a.prec {
                        Prec::Atom => format!("{}'", a.text),
                        _ => format!("({})'", a.text),
                    };
                    return Rendered { text, prec: Prec::Atom };
                }
                let b = self.render(cell.inputs[1], names);
                let (prec, sep) = match cell.gate {
                    GateType::And => {
                        (Prec::And, if b.text.starts_with(|c: char| c.is_ascii_digit()) { "·" } else { "" })
                    }
                    GateType::Xor => (Prec::Xor, "⊕"),
                    _ => (Prec::Or, "+"),
                };
                // left operand may share the operator's level (left-assoc),
                // the right one must bind strictly tighter
                let left = if a.prec >= prec { a.text } else { format!("({})", a.text) };
                let right = if b.prec > prec { b.text } else { format!("({})", b.text) };
                let sep = if prec == Prec::And && right.starts_with('(') { "" } else { sep };
                Rendered { text: format!("{left}{sep}{right}"), prec }
            }
        }
    }

    /// Netlist document listing the active gates in column-major order.
    pub fn export_netlist(&self, names: &SignalNames) -> NetlistDoc {
        let names = if names.fits(&self.layout) { names.clone() } else { SignalNames::generic(&self.layout) };
        let l = &self.layout;
        let usage = self.used_gates();
        let gates = (0..l.num_cells())
            .filter(|&i| usage.used[i])
            .map(|i| {
                let c = &self.cells[i];
                let inputs = &c.inputs[..c.gate.arity()];
                GateDoc {
                    id: i,
                    gate_type: c.gate.name().to_string(),
                    inputs: inputs.iter().map(|&s| ref_string(s, l, &names)).collect(),
                }
            })
            .collect();
        NetlistDoc {
            layout: LayoutDoc {
                rows: l.rows,
                cols: l.cols,
                inputs: names.inputs.clone(),
                state_bits: names.state.clone(),
                connectivity: l.connectivity,
                gate_types: l.gate_types,
            },
            chromosome_hex: self.to_chromosome().ok().map(|c| c.to_hex()),
            gates,
            tap: ref_string(self.tap, l, &names),
        }
    }

    /// Graphviz rendering of the active cone.
    pub fn to_dot(&self, names: &SignalNames, output_name: &str) -> String {
        let names = if names.fits(&self.layout) { names.clone() } else { SignalNames::generic(&self.layout) };
        let l = &self.layout;
        let usage = self.used_gates();
        let mut terminals = BTreeSet::new();
        let mut edges = Vec::new();
        let node = |s: SignalRef| match s {
            SignalRef::Gate { row, col } => format!("g{}", l.cell_index(row, col)),
            SignalRef::Input(i) => format!("pi_{i}"),
            SignalRef::State(i) => format!("ps_{i}"),
            SignalRef::Zero => "c0".to_string(),
            SignalRef::One => "c1".to_string(),
        };
        for (i, c) in self.cells.iter().enumerate() {
            if !usage.used[i] {
                continue;
            }
            for &s in &c.inputs[..c.gate.arity()] {
                if !s.is_gate() {
                    terminals.insert(s);
                }
                edges.push((node(s), format!("g{i}")));
            }
        }
        if !self.tap.is_gate() {
            terminals.insert(self.tap);
        }
        let mut out = String::from("digraph circuit {\n  rankdir=LR;\n");
        for &t in &terminals {
            let label = match t {
                SignalRef::Input(i) => names.inputs[i].clone(),
                SignalRef::State(i) => names.state[i].clone(),
                SignalRef::Zero => "0".into(),
                SignalRef::One => "1".into(),
                SignalRef::Gate { .. } => unreachable!(),
            };
            let _ = writeln!(out, "  {} [shape=box, label=\"{}\"];", node(t), escape_dot(&label));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if usage.used[i] {
                let _ = writeln!(out, "  g{i} [shape=ellipse, label=\"{} g{i}\"];", c.gate.name());
            }
        }
        let _ = writeln!(out, "  out [shape=doublecircle, label=\"{}\"];", escape_dot(output_name));
        for (a, b) in edges {
            let _ = writeln!(out, "  {a} -> {b};");
        }
        let _ = writeln!(out, "  {} -> out;", node(self.tap));
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Or,
    Xor,
    And,
    Atom,
}

struct Rendered {
    text: String,
    prec: Prec,
}

impl Rendered {
    fn atom(text: String) -> Self {
        Rendered { text, prec: Prec::Atom }
    }
}

/// A name prints bare when it is one letter optionally followed by digits
/// or underscores; anything else is wrapped in braces.
pub fn format_name(name: &str) -> String {
    let mut chars = name.chars();
    let bare =
        matches!(chars.next(), Some(c) if c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_digit() || c == '_');
    if bare {
        name.to_string()
    } else {
        format!("{{{name}}}")
    }
}

fn ref_string(s: SignalRef, layout: &ArrayLayout, names: &SignalNames) -> String {
    match s {
        SignalRef::Input(i) => format!("PI:{}", names.inputs[i]),
        SignalRef::State(i) => format!("PS:{}", names.state[i]),
        SignalRef::Zero => "C0".into(),
        SignalRef::One => "C1".into(),
        SignalRef::Gate { row, col } => format!("G:{}", layout.cell_index(row, col)),
    }
}

fn parse_ref(s: &str, layout: &ArrayLayout, names: &SignalNames) -> Result<SignalRef, CircuitError> {
    let err = || CircuitError::Netlist(format!("unknown signal reference \"{s}\""));
    if s == "C0" {
        return Ok(SignalRef::Zero);
    }
    if s == "C1" {
        return Ok(SignalRef::One);
    }
    if let Some(n) = s.strip_prefix("PI:") {
        return names.inputs.iter().position(|x| x == n).map(SignalRef::Input).ok_or_else(err);
    }
    if let Some(n) = s.strip_prefix("PS:") {
        return names.state.iter().position(|x| x == n).map(SignalRef::State).ok_or_else(err);
    }
    if let Some(id) = s.strip_prefix("G:") {
        let id: usize = id.parse().map_err(|_| err())?;
        if id >= layout.num_cells() {
            return Err(err());
        }
        return Ok(SignalRef::Gate { row: id % layout.rows, col: id / layout.rows });
    }
    Err(err())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutDoc {
    pub rows: usize,
    pub cols: usize,
    pub inputs: Vec<String>,
    pub state_bits: Vec<String>,
    #[serde(default)]
    pub connectivity: Connectivity,
    #[serde(default)]
    pub gate_types: GateTypeMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDoc {
    /// Column-major cell index.
    pub id: usize,
    #[serde(rename = "type")]
    pub gate_type: String,
    #[serde(rename = "in")]
    pub inputs: Vec<String>,
}

/// Serializable netlist of one array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetlistDoc {
    pub layout: LayoutDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chromosome_hex: Option<String>,
    pub gates: Vec<GateDoc>,
    pub tap: String,
}

impl NetlistDoc {
    /// Rebuilds the phenotype. Dormant cells come from `chromosome_hex` when
    /// present (all-zero otherwise); listed gates and the tap override it.
    pub fn import(&self) -> Result<(Phenotype, SignalNames), CircuitError> {
        let d = &self.layout;
        let layout = ArrayLayout::new(d.rows, d.cols, d.inputs.len(), d.state_bits.len(), d.connectivity, d.gate_types)
            .map_err(|e| CircuitError::Netlist(e.to_string()))?;
        let layout = Arc::new(layout);
        let names = SignalNames::new(d.inputs.clone(), d.state_bits.clone());
        let base = match &self.chromosome_hex {
            Some(hex) => Chromosome::from_hex(hex, layout.chromosome_len()),
            None => Ok(Chromosome::zeros(layout.chromosome_len())),
        }
        .map_err(|e| CircuitError::Netlist(e.to_string()))?;
        let base = genome::decode(&layout, &base).map_err(|e| CircuitError::Netlist(e.to_string()))?;
        let mut cells = base.cells().to_vec();
        for g in &self.gates {
            if g.id >= cells.len() {
                return Err(CircuitError::Netlist(format!("gate id {} out of range", g.id)));
            }
            let gate = GateType::from_name(&g.gate_type)
                .ok_or_else(|| CircuitError::Netlist(format!("unknown gate type \"{}\"", g.gate_type)))?;
            if g.inputs.len() != gate.arity() {
                return Err(CircuitError::Netlist(format!(
                    "gate {} ({}) needs {} input(s), got {}",
                    g.id,
                    gate.name(),
                    gate.arity(),
                    g.inputs.len()
                )));
            }
            let mut inputs = cells[g.id].inputs;
            for (k, r) in g.inputs.iter().enumerate() {
                inputs[k] = parse_ref(r, &layout, &names)?;
            }
            cells[g.id] = Cell { gate, inputs };
        }
        let tap = parse_ref(&self.tap, &layout, &names)?;
        Ok((Phenotype::new(layout, cells, tap)?, names))
    }
}
