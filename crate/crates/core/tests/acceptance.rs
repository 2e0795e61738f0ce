// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqevolve::fsm_spec::{bits_of, TargetKind};
use seqevolve::ga_engine::{one_point_crossover, roulette_select, uniform_mutate};
use seqevolve::genome::{ArrayLayout, GateTypeMode};
use seqevolve::oracle::{
    derive_benchmark_fsm, detector_reference_circuit, exhaustive_search, parse_expr, DETECTOR_D_C_EVOLVED,
    DETECTOR_D_C_SOP,
};
use seqevolve::synthesizer::{evolve_targets, Summary, TargetSelection};
use seqevolve::*;

const BENCH_SEED: u64 = 42;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn all_codes(bits: usize) -> Vec<Vec<bool>> {
    (0..1u64 << bits).map(|v| bits_of(v, bits)).collect()
}

fn benchmark_reproduction() -> Outcome {
    let spec = derive_benchmark_fsm();
    let params = LayoutParams::default();
    let config = GaConfig { seed: BENCH_SEED, ..GaConfig::default() };
    let outcomes = evolve_targets(&spec, &params, &config, 50, &TargetSelection::All).unwrap();
    let mut ok = true;
    let mut next_state_gates = 0;
    let mut output_gates = 0;
    let mut lines = Vec::new();
    for o in &outcomes {
        let best = o.best();
        let functional: Vec<u64> = o.runs.iter().filter_map(|r| r.result.functional_at).collect();
        let rate = functional.len() as f64 / o.runs.len() as f64;
        let median = Summary::of(&functional).map(|s| s.median);
        ok &= best.result.report.fully_functional;
        ok &= rate >= 0.8;
        ok &= median.is_some_and(|m| m <= 40_000.0);
        match o.target.kind {
            TargetKind::NextState => next_state_gates += best.result.report.gates,
            TargetKind::Output => output_gates += best.result.report.gates,
        }
        lines.push(format!(
            "{} success {:.0}% median {} gates {}",
            o.target.id(),
            rate * 100.0,
            median.map_or("none".to_string(), |m| m.to_string()),
            best.result.report.gates
        ));
    }
    ok &= next_state_gates <= 8 && output_gates == 0;
    check(ok, format!("{}; next-state gates {next_state_gates}, output gates {output_gates}", lines.join(", ")))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    let mut assignments = 0usize;
    for _ in 0..10_000 {
        let signals = rng.gen_range(1..=6);
        let ni = rng.gen_range(0..=signals);
        let conn = if rng.gen_bool(0.5) { Connectivity::AllLeft } else { Connectivity::Neighbor };
        let mode = if rng.gen_bool(0.8) { GateTypeMode::Evolved } else { GateTypeMode::FixedRows };
        let layout = Arc::new(
            ArrayLayout::new(rng.gen_range(1..=4), rng.gen_range(1..=4), ni, signals - ni, conn, mode).unwrap(),
        );
        let chrom = random_chromosome(&layout, &mut rng);
        let p = decode(&layout, &chrom).unwrap();
        let names = SignalNames::generic(&layout);
        let text = p.to_expression(&names);
        let Ok(expr) = parse_expr(&text) else {
            mismatches += 1;
            continue;
        };
        for v in 0..1u64 << signals {
            let bits = bits_of(v, signals);
            let (inputs, state) = bits.split_at(ni);
            let env: HashMap<String, bool> =
                names.inputs.iter().chain(&names.state).cloned().zip(bits.iter().copied()).collect();
            assignments += 1;
            if expr.eval(&env).ok() != Some(p.evaluate(inputs, state).unwrap()) {
                mismatches += 1;
            }
        }
    }
    check(mismatches == 0, format!("10000 chromosomes, {assignments} assignments, {mismatches} mismatches"))
}

fn exact_minimality() -> Outcome {
    // signals (X; A, B) on a 1x2 all-left array: 19 chromosome bits
    let layout = build_layout(1, 2, 1, 2, Connectivity::AllLeft).unwrap();
    let layout = Arc::new(layout);
    let codes = all_codes(2);
    let targets = [
        ("X'", TargetFunction::from_fn(TargetKind::Output, "Z", 1, &codes, 2, |_, i| !i[0])),
        ("X·B", TargetFunction::from_fn(TargetKind::Output, "Z", 1, &codes, 2, |s, i| i[0] & s[1])),
        ("X⊕A", TargetFunction::from_fn(TargetKind::Output, "Z", 1, &codes, 2, |s, i| i[0] ^ s[0])),
        ("1", TargetFunction::from_fn(TargetKind::Output, "Z", 1, &codes, 2, |_, _| true)),
    ];
    let mut deviations = 0;
    let mut lines = Vec::new();
    for (label, target) in &targets {
        let (minimal, _) = exhaustive_search(&layout, target).unwrap().expect("target is realizable");
        let exact = minimal.used_gates().count as u32;
        let ga_best = (0..50u64)
            .filter_map(|run| {
                let cfg = GaConfig { seed: 1000 + run, ..GaConfig::default() };
                let r = run_ga(&layout, target, &cfg).unwrap();
                r.report.fully_functional.then_some(r.report.gates)
            })
            .min();
        if ga_best != Some(exact) {
            deviations += 1;
        }
        lines.push(format!("{label}: exhaustive {exact}, GA {ga_best:?}"));
    }
    check(deviations == 0, format!("{} bits; {}", layout.chromosome_len(), lines.join(", ")))
}

/// Cells in the tap's fan-in cone, found by walking back from the tap.
fn cone_size(p: &Phenotype) -> u32 {
    let rows = p.layout().rows;
    let mut seen = vec![false; p.cells().len()];
    let mut stack = vec![p.tap()];
    while let Some(s) = stack.pop() {
        if let SignalRef::Gate { row, col } = s {
            let i = col * rows + row;
            if !seen[i] {
                seen[i] = true;
                let cell = p.cells()[i];
                stack.push(cell.inputs[0]);
                if cell.gate != GateType::Not {
                    stack.push(cell.inputs[1]);
                }
            }
        }
    }
    seen.iter().filter(|&&b| b).count() as u32
}

fn fitness_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut functional = 0;
    for k in 0..1000 {
        let ni = rng.gen_range(0..=2);
        let ns = rng.gen_range(1..=3);
        let layout =
            Arc::new(build_layout(rng.gen_range(1..=4), rng.gen_range(1..=4), ni, ns, Connectivity::AllLeft).unwrap());
        let codes: Vec<Vec<bool>> = all_codes(ns).into_iter().filter(|_| rng.gen_bool(0.8)).collect();
        let chrom = random_chromosome(&layout, &mut rng);
        let p = decode(&layout, &chrom).unwrap();
        // every fourth target is the circuit's own function, so the
        // functional branch is exercised too
        let truth: Vec<bool> = (0..codes.len() << ni).map(|_| rng.gen_bool(0.5)).collect();
        let own = k % 4 == 0;
        let target = TargetFunction::from_fn(TargetKind::Output, "Z", ni, &codes, ns, |s, i| {
            if own {
                p.evaluate(i, s).unwrap()
            } else {
                let row = codes.iter().position(|c| c == s).unwrap();
                truth[(row << ni) | seqevolve::fsm_spec::value_of(i) as usize]
            }
        });
        let r = evaluate_fitness(&layout, &chrom, &target).unwrap();
        let design =
            target.vectors.iter().filter(|v| p.evaluate(&v.inputs, &v.present_state).unwrap() == v.expected).count()
                as u32;
        let gates = cone_size(&p);
        let ff = design == target.vectors.len() as u32;
        let cells = (layout.rows * layout.cols) as u32;
        let expected = design + if ff { cells - gates } else { 0 };
        functional += ff as usize;
        let gating = if r.fully_functional { r.final_fitness >= r.design_max } else { r.final_fitness < r.design_max };
        if r.final_fitness != expected || r.design != design || r.gates != gates || r.fully_functional != ff || !gating
        {
            violations += 1;
        }
    }
    check(violations == 0, format!("1000 pairs ({functional} fully functional), {violations} violations"))
}

fn end_to_end_verification() -> Outcome {
    let spec = derive_benchmark_fsm();
    let circuit = detector_reference_circuit();
    let verdict = verify(&circuit, &spec).unwrap();
    let evolved = parse_expr(DETECTOR_D_C_EVOLVED).unwrap();
    let sop = parse_expr(DETECTOR_D_C_SOP).unwrap();
    let mut identity_failures = 0;
    for v in 0..16u64 {
        let b = bits_of(v, 4);
        let (x, a, c) = (b[0], b[1], b[3]);
        let env: HashMap<String, bool> =
            ["X", "A", "B", "C"].iter().map(|n| n.to_string()).zip(b.iter().copied()).collect();
        let direct_evolved = !(x & a & c) & (c | (x & a));
        let direct_sop = (x & a & !c) | (!x & c) | (!a & c);
        let parsed = (evolved.eval(&env).unwrap(), sop.eval(&env).unwrap());
        if direct_evolved != direct_sop || parsed != (direct_evolved, direct_sop) {
            identity_failures += 1;
        }
    }
    check(
        verdict.passed() && verdict.mismatches.is_empty() && identity_failures == 0,
        format!("{} mismatches, identity fails on {identity_failures}/16 assignments", verdict.mismatches.len()),
    )
}

fn bench_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let fsm = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks/seqdet6.json");
    let run = |threads: &str| {
        let out = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_seqevolve"))
            .env("SEQEVOLVE_THREADS", threads)
            .args(["bench", "--runs", "6", "--max-gens", "3000", "--stall", "1500", "--seed", "9", "--fsm"])
            .arg(&fsm)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        (status.code(), read("stats.csv"), read("summary.csv"))
    };
    let one = run("1");
    let four = run("4");
    let ok = one.0 == Some(0) && !one.1.is_empty() && one == four;
    check(ok, format!("threads 1 vs 4: stats.csv {} bytes, summary.csv {} bytes", one.1.len(), one.2.len()))
}

fn operator_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000;
    let hits = (0..draws).filter(|_| roulette_select(&[1, 3], &mut rng).unwrap() == 1).count();
    let roulette = hits as f64 / draws as f64;

    let zeros = Chromosome::zeros(10_000);
    let flipped = uniform_mutate(&zeros, 0.5, &mut rng).bits().iter().filter(|&&b| b).count();
    let mutation = flipped as f64 / 10_000.0;

    let mut runner = TestRunner::new(ProptestConfig { cases: 10_000, failure_persistence: None, ..Default::default() });
    let strategy = (2usize..128).prop_flat_map(|n| {
        (proptest::collection::vec(any::<bool>(), n), proptest::collection::vec(any::<bool>(), n), any::<u64>())
    });
    let crossover = runner.run(&strategy, |(a, b, seed)| {
        let (a, b) = (Chromosome::from_bits(a), Chromosome::from_bits(b));
        let (x, y) = one_point_crossover(&a, &b, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for i in 0..a.len() {
            let mut parents = [a.bits()[i], b.bits()[i]];
            let mut children = [x.bits()[i], y.bits()[i]];
            parents.sort();
            children.sort();
            prop_assert_eq!(parents, children);
        }
        Ok(())
    });

    let ok = (roulette - 0.75).abs() <= 0.01 && (mutation - 0.5).abs() <= 0.02 && crossover.is_ok();
    check(
        ok,
        format!(
            "roulette P(3/4) = {roulette:.4}, flip fraction = {mutation:.4}, crossover multiset {}",
            if crossover.is_ok() { "kept over 10000 cases" } else { "broken" }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 benchmark reproduction", benchmark_reproduction),
        ("2 oracle equivalence", oracle_equivalence),
        ("3 exact minimality", exact_minimality),
        ("4 fitness formula", fitness_formula),
        ("5 end-to-end verification", end_to_end_verification),
        ("6 bench determinism", bench_determinism),
        ("7 operator statistics", operator_statistics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, criterion) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = criterion();
        println!("{} [{name}] {}", if outcome.passed { "PASS" } else { "FAIL" }, outcome.detail);
        failures += !outcome.passed as usize;
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
