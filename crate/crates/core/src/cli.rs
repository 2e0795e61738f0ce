// SPDX-License-Identifier: Apache-2.0

//! `seqevolve` command-line front end.
//!
//! Exit codes: 0 success, 1 synthesis or verification failure, 2 usage or
//! I/O errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::fsm_spec::{parse_fsm, FsmSpec};
use crate::ga_engine::GaConfig;
use crate::genome::{Connectivity, GateTypeMode};
use crate::oracle::{derive_benchmark_fsm, detector_reference_circuit};
use crate::synthesizer::{
    assemble, evolve_targets, report, verify, verify_strict, CircuitDoc, LayoutParams, SequentialCircuit, Summary,
    TargetOutcome, TargetSelection,
};

pub const THREADS_ENV: &str = "SEQEVOLVE_THREADS";
pub const REFERENCE_CIRCUIT_FILE: &str = "seqdet6_reference.circuit.json";

#[derive(Debug, Parser)]
#[command(name = "seqevolve", version, about = "Evolve gate-level sequential circuits from FSM specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve every subcircuit, assemble and verify the circuit.
    Evolve(EvolveArgs),
    /// Repeat runs per subcircuit and summarise generations and gate counts.
    Bench(EvolveArgs),
    /// Check a circuit file against a machine by clocked simulation.
    Verify(VerifyArgs),
    /// Print a circuit file as equations, JSON or DOT.
    Show(ShowArgs),
    /// Write the sequential-detector machine and its hand-wired reference circuit.
    DeriveBenchmark {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConnectivityArg {
    AllLeft,
    Neighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GateTypesArg {
    Evolved,
    FixedRows,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[arg(long)]
    fsm: PathBuf,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    #[arg(long, value_enum, default_value_t = ConnectivityArg::AllLeft)]
    connectivity: ConnectivityArg,
    #[arg(long, value_enum, default_value_t = GateTypesArg::Evolved)]
    gate_types: GateTypesArg,
    #[arg(long, default_value_t = 10)]
    pop: usize,
    #[arg(long, default_value_t = 40_000)]
    max_gens: u64,
    #[arg(long, default_value_t = 20_000)]
    stall: u64,
    #[arg(long, default_value_t = 0.9)]
    crossover_rate: f64,
    /// Per-bit flip probability (default: 4 / chromosome length, at most 0.5).
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    elitism: usize,
    /// Independent runs per subcircuit (default 1 for evolve, 50 for bench).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// all, dff:NAME or out:NAME
    #[arg(long, default_value = "all")]
    target: String,
    #[arg(long)]
    out: PathBuf,
    /// Add a wall_clock_ms column to stats.csv (makes it non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    fsm: PathBuf,
    /// Also report where unused state codes lead.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Expr,
    Json,
    Dot,
}

#[derive(Debug, Args)]
struct ShowArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Expr)]
    format: Format,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn failed(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Evolve(a) => cmd_evolve(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Show(a) => cmd_show(&a),
        Command::DeriveBenchmark { out } => cmd_derive_benchmark(&out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_fsm(path: &Path) -> Result<FsmSpec, Failure> {
    parse_fsm(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_circuit_doc(path: &Path) -> Result<CircuitDoc, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// partial file.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), Failure> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, &dest))
        .map_err(|e| usage(format!("cannot write {}: {e}", dest.display())))
}

fn thread_count() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got \"{v}\""))),
        },
    }
}

struct Prepared {
    spec: FsmSpec,
    params: LayoutParams,
    config: GaConfig,
    runs: usize,
    selection: TargetSelection,
}

fn prepare(a: &EvolveArgs, default_runs: usize) -> Result<Prepared, Failure> {
    let spec = load_fsm(&a.fsm)?;
    let params = LayoutParams {
        rows: a.rows,
        cols: a.cols,
        connectivity: match a.connectivity {
            ConnectivityArg::AllLeft => Connectivity::AllLeft,
            ConnectivityArg::Neighbor => Connectivity::Neighbor,
        },
        gate_types: match a.gate_types {
            GateTypesArg::Evolved => GateTypeMode::Evolved,
            GateTypesArg::FixedRows => GateTypeMode::FixedRows,
        },
    };
    params.layout_for(&spec).map_err(|e| usage(e.to_string()))?;
    let config = GaConfig {
        population_size: a.pop,
        max_generations: a.max_gens,
        stall_generations: a.stall.min(a.max_gens),
        crossover_rate: a.crossover_rate,
        mutation_rate: a.mutation_rate,
        elitism: a.elitism,
        seed: a.seed,
        history_stride: 1,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let runs = a.runs.unwrap_or(default_runs);
    if runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let selection = TargetSelection::parse(&a.target).map_err(usage)?;
    fs::create_dir_all(&a.out).map_err(|e| usage(format!("cannot create {}: {e}", a.out.display())))?;
    Ok(Prepared { spec, params, config, runs, selection })
}

fn evolve(p: &Prepared) -> Result<Vec<TargetOutcome>, Failure> {
    let job = || evolve_targets(&p.spec, &p.params, &p.config, p.runs, &p.selection);
    let result = match thread_count()? {
        None => job(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| usage(format!("cannot start worker pool: {e}")))?
            .install(job),
    };
    result.map_err(|e| usage(e.to_string()))
}

/// One row of `stats.csv` per (target, run).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub benchmark: String,
    pub target: String,
    pub run: usize,
    pub seed: u64,
    pub generations: u64,
    pub generations_to_functional: Option<u64>,
    pub termination: String,
    pub design: u32,
    pub gates: u32,
    pub final_fitness: u32,
    pub wall_clock_ms: u128,
}

pub const STATS_HEADER: [&str; 10] = [
    "benchmark",
    "target",
    "run",
    "seed",
    "generations",
    "generations_to_functional",
    "termination",
    "design",
    "gates",
    "final",
];

pub fn run_records(benchmark: &str, outcomes: &[TargetOutcome]) -> Vec<RunRecord> {
    outcomes
        .iter()
        .flat_map(|o| {
            o.runs.iter().map(move |r| RunRecord {
                benchmark: benchmark.to_string(),
                target: o.target.id(),
                run: r.run,
                seed: r.seed,
                generations: r.result.generations,
                generations_to_functional: r.result.functional_at,
                termination: r.result.termination.as_str().to_string(),
                design: r.result.report.design,
                gates: r.result.report.gates,
                final_fitness: r.result.report.final_fitness,
                wall_clock_ms: r.wall_clock_ms,
            })
        })
        .collect()
}

pub fn stats_csv(records: &[RunRecord], timing: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = STATS_HEADER.to_vec();
    if timing {
        header.push("wall_clock_ms");
    }
    w.write_record(&header).unwrap();
    for r in records {
        let mut row = vec![
            r.benchmark.clone(),
            r.target.clone(),
            r.run.to_string(),
            r.seed.to_string(),
            r.generations.to_string(),
            r.generations_to_functional.map(|g| g.to_string()).unwrap_or_default(),
            r.termination.clone(),
            r.design.to_string(),
            r.gates.to_string(),
            r.final_fitness.to_string(),
        ];
        if timing {
            row.push(r.wall_clock_ms.to_string());
        }
        w.write_record(&row).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

fn cmd_evolve(a: &EvolveArgs) -> Result<(), Failure> {
    let p = prepare(a, 1)?;
    let outcomes = evolve(&p)?;
    write_atomic(&a.out, "stats.csv", stats_csv(&run_records(&p.spec.name, &outcomes), a.timing).as_bytes())?;

    let write_report = |verdict| -> Result<(), Failure> {
        let r = report(&p.spec, &p.params, &p.config, p.runs, &outcomes, verdict).map_err(|e| usage(e.to_string()))?;
        write_atomic(&a.out, "report.json", json(&r).as_bytes())
    };

    if p.selection != TargetSelection::All {
        // partial circuits cannot be clocked; report per-target results only
        write_report(None)?;
        let failed_targets: Vec<String> =
            outcomes.iter().filter(|o| o.successes() == 0).map(|o| o.target.id()).collect();
        for o in &outcomes {
            let b = o.best();
            println!(
                "{}: design {}/{} gates {}",
                o.target.id(),
                b.result.report.design,
                b.result.report.design_max,
                b.result.report.gates
            );
        }
        return if failed_targets.is_empty() {
            Ok(())
        } else {
            Err(failed(format!("no fully functional run for {}", failed_targets.join(", "))))
        };
    }

    let circuit = match assemble(&p.spec, &p.params, &outcomes) {
        Ok(c) => c,
        Err(e) => {
            write_report(None)?;
            return Err(failed(format!("synthesis failed: {e}")));
        }
    };
    let verdict = verify(&circuit, &p.spec).map_err(|e| usage(e.to_string()))?;
    write_report(Some(&verdict))?;
    write_atomic(&a.out, "circuit.json", json(&circuit.to_doc()).as_bytes())?;
    let mut exprs = circuit.expressions().join("\n");
    exprs.push('\n');
    write_atomic(&a.out, "expressions.txt", exprs.as_bytes())?;
    print!("{exprs}");
    println!("total gates: {}", circuit.total_gates());
    if verdict.passed() {
        Ok(())
    } else {
        Err(failed(format!("verification found {} mismatches", verdict.mismatches.len())))
    }
}

fn fmt_summary(s: Option<Summary>) -> [String; 3] {
    match s {
        Some(s) => [s.min.to_string(), format!("{}", s.median), s.max.to_string()],
        None => [String::new(), String::new(), String::new()],
    }
}

fn cmd_bench(a: &EvolveArgs) -> Result<(), Failure> {
    let p = prepare(a, 50)?;
    let outcomes = evolve(&p)?;
    write_atomic(&a.out, "stats.csv", stats_csv(&run_records(&p.spec.name, &outcomes), a.timing).as_bytes())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "target",
        "runs",
        "successes",
        "success_rate",
        "gens_to_functional_min",
        "gens_to_functional_median",
        "gens_to_functional_max",
        "gates_min",
        "gates_median",
        "gates_max",
        "generations_max",
    ])
    .unwrap();
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<12} {:>5} {:>9} {:>26} {:>18} {:>8}",
        "target", "runs", "success", "gens to func min/med/max", "gates min/med/max", "gen max"
    );
    for o in &outcomes {
        let succ = o.successes();
        let gens: Vec<u64> = o.runs.iter().filter_map(|r| r.result.functional_at).collect();
        let gates: Vec<u64> =
            o.runs.iter().filter(|r| r.result.report.fully_functional).map(|r| r.result.report.gates as u64).collect();
        let gen_max = o.runs.iter().map(|r| r.result.generations).max().unwrap_or(0);
        let [g0, g1, g2] = fmt_summary(Summary::of(&gens));
        let [q0, q1, q2] = fmt_summary(Summary::of(&gates));
        let rate = succ as f64 / o.runs.len() as f64;
        w.write_record([
            o.target.id(),
            o.runs.len().to_string(),
            succ.to_string(),
            format!("{rate}"),
            g0.clone(),
            g1.clone(),
            g2.clone(),
            q0.clone(),
            q1.clone(),
            q2.clone(),
            gen_max.to_string(),
        ])
        .unwrap();
        let _ = writeln!(
            table,
            "{:<12} {:>5} {:>9} {:>26} {:>18} {:>8}",
            o.target.id(),
            o.runs.len(),
            format!("{succ} ({:.0}%)", rate * 100.0),
            format!("{g0}/{g1}/{g2}"),
            format!("{q0}/{q1}/{q2}"),
            gen_max
        );
    }
    let summary = String::from_utf8(w.into_inner().unwrap()).unwrap();
    write_atomic(&a.out, "summary.csv", summary.as_bytes())?;
    write_atomic(&a.out, "summary.txt", table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let spec = load_fsm(&a.fsm)?;
    let doc = load_circuit_doc(&a.circuit)?;
    let circuit = SequentialCircuit::from_doc(&doc, &spec).map_err(|e| usage(e.to_string()))?;
    let verdict = if a.strict { verify_strict(&circuit, &spec) } else { verify(&circuit, &spec) }
        .map_err(|e| usage(e.to_string()))?;
    for m in &verdict.mismatches {
        println!(
            "mismatch state={} input={} {} expected={} got={}",
            m.state, m.input, m.field, m.expected as u8, m.got as u8
        );
    }
    for u in &verdict.unused_codes {
        println!(
            "unused code={} input={} next={}{}",
            u.code,
            u.input,
            u.next,
            if u.escapes { " (unused)" } else { "" }
        );
    }
    if verdict.passed() {
        println!("pass: {} transitions checked", spec.transitions().len());
        Ok(())
    } else {
        Err(failed(format!("{} mismatches", verdict.mismatches.len())))
    }
}

fn cmd_show(a: &ShowArgs) -> Result<(), Failure> {
    let doc = load_circuit_doc(&a.circuit)?;
    let mut out = String::new();
    for sub in &doc.subcircuits {
        let (p, names) = sub.netlist.import().map_err(|e| usage(format!("{}: {e}", sub.target)))?;
        match a.format {
            Format::Expr => {
                let _ = writeln!(out, "{}={}", sub.lhs, p.to_expression(&names));
            }
            Format::Dot => out.push_str(&p.to_dot(&names, &sub.lhs)),
            Format::Json => {}
        }
    }
    if a.format == Format::Json {
        out = json(&doc);
    }
    print!("{out}");
    Ok(())
}

fn cmd_derive_benchmark(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    write_atomic(out, "seqdet6.json", derive_benchmark_fsm().to_json().as_bytes())?;
    write_atomic(out, REFERENCE_CIRCUIT_FILE, json(&detector_reference_circuit().to_doc()).as_bytes())?;
    println!("{}", out.join("seqdet6.json").display());
    println!("{}", out.join(REFERENCE_CIRCUIT_FILE).display());
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
