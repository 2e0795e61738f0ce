// SPDX-License-Identifier: Apache-2.0

//! Generational GA over fixed-length bit strings: roulette-wheel parent
//! selection, one-point crossover, per-bit mutation and elitism.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{Evaluator, FitnessError, FitnessReport, Scratch};
use crate::fsm_spec::TargetFunction;
use crate::genome::{random_chromosome, ArrayLayout, Chromosome};

#[derive(Debug, Error, PartialEq)]
pub enum GaError {
    #[error("invalid GA configuration: {0}")]
    Config(String),
    #[error("roulette selection over an empty population")]
    EmptySelection,
    #[error("crossover parents differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("crossover needs chromosomes of at least 2 bits")]
    TooShort,
    #[error(transparent)]
    Fitness(#[from] FitnessError),
}

/// Expected bit flips per offspring under the default mutation rate. At one
/// flip per child, runs on the detector's third flip-flop stall on `C` alone
/// (12 of 16 vectors) in roughly a third of runs.
pub const DEFAULT_FLIPS_PER_CHILD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: u64,
    pub stall_generations: u64,
    pub crossover_rate: f64,
    /// Per-bit flip probability; `None` means [`DEFAULT_FLIPS_PER_CHILD`]
    /// expected flips per child, i.e. `4 / chromosome length` capped at 0.5.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
    pub seed: u64,
    /// Keep every n-th entry of the best-fitness history.
    pub history_stride: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 10,
            max_generations: 40_000,
            stall_generations: 20_000,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 1,
            seed: 0,
            history_stride: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let fail = |m: String| Err(GaError::Config(m));
        if self.population_size < 2 {
            return fail(format!("population size {} < 2", self.population_size));
        }
        if self.max_generations == 0 {
            return fail("max generations must be at least 1".into());
        }
        if self.stall_generations == 0 || self.stall_generations > self.max_generations {
            return fail(format!(
                "stall generations {} must be in 1..={}",
                self.stall_generations, self.max_generations
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return fail(format!("crossover rate {} outside [0, 1]", self.crossover_rate));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return fail(format!("mutation rate {m} outside [0, 1]"));
            }
        }
        if self.elitism > self.population_size {
            return fail(format!("elitism {} exceeds population size {}", self.elitism, self.population_size));
        }
        if self.history_stride == 0 {
            return fail("history stride must be at least 1".into());
        }
        Ok(())
    }

    pub fn effective_mutation_rate(&self, chromosome_len: usize) -> f64 {
        self.mutation_rate.unwrap_or_else(|| (DEFAULT_FLIPS_PER_CHILD / chromosome_len.max(1) as f64).min(0.5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Fully functional and either at the fitness ceiling or no longer improving.
    TargetMet,
    /// No improvement for `stall_generations` without reaching functionality.
    Stall,
    GenerationLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::TargetMet => "target-met",
            Termination::Stall => "stall",
            Termination::GenerationLimit => "generation-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Chromosome,
    pub report: FitnessReport,
    /// Populations evaluated, counting the initial one.
    pub generations: u64,
    /// First generation in which some individual was fully functional.
    pub functional_at: Option<u64>,
    pub termination: Termination,
    /// Best-so-far final score, one entry per `history_stride` generations.
    pub history: Vec<u32>,
}

/// Proportional selection; a zero total falls back to a uniform draw.
pub fn roulette_select<R: Rng + ?Sized>(values: &[u32], rng: &mut R) -> Result<usize, GaError> {
    if values.is_empty() {
        return Err(GaError::EmptySelection);
    }
    let total: u64 = values.iter().map(|&v| v as u64).sum();
    if total == 0 {
        return Ok(rng.gen_range(0..values.len()));
    }
    let mut ticket = rng.gen_range(0..total);
    for (i, &v) in values.iter().enumerate() {
        if ticket < v as u64 {
            return Ok(i);
        }
        ticket -= v as u64;
    }
    unreachable!("ticket below total")
}

/// Swaps suffixes starting at bit `cut`.
pub fn crossover_at(a: &Chromosome, b: &Chromosome, cut: usize) -> (Chromosome, Chromosome) {
    let (mut x, mut y) = (a.clone(), b.clone());
    x.bits_mut()[cut..].copy_from_slice(&b.bits()[cut..]);
    y.bits_mut()[cut..].copy_from_slice(&a.bits()[cut..]);
    (x, y)
}

/// One-point crossover with the cut drawn uniformly from `1..len`.
pub fn one_point_crossover<R: Rng + ?Sized>(
    a: &Chromosome,
    b: &Chromosome,
    rng: &mut R,
) -> Result<(Chromosome, Chromosome), GaError> {
    if a.len() != b.len() {
        return Err(GaError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(GaError::TooShort);
    }
    Ok(crossover_at(a, b, rng.gen_range(1..a.len())))
}

pub fn mutate_in_place<R: Rng + ?Sized>(c: &mut Chromosome, rate: f64, rng: &mut R) {
    for bit in c.bits_mut() {
        if rng.gen_bool(rate) {
            *bit = !*bit;
        }
    }
}

/// Flips each bit independently with probability `rate`.
pub fn uniform_mutate<R: Rng + ?Sized>(c: &Chromosome, rate: f64, rng: &mut R) -> Chromosome {
    let mut out = c.clone();
    mutate_in_place(&mut out, rate, rng);
    out
}

/// Runs the GA from a random initial population.
pub fn run_ga(layout: &Arc<ArrayLayout>, target: &TargetFunction, config: &GaConfig) -> Result<RunResult, GaError> {
    run_ga_from(layout, target, config, None)
}

/// Runs the GA, optionally starting from a given population.
pub fn run_ga_from(
    layout: &Arc<ArrayLayout>,
    target: &TargetFunction,
    config: &GaConfig,
    initial: Option<Vec<Chromosome>>,
) -> Result<RunResult, GaError> {
    config.validate()?;
    let evaluator = Evaluator::new(layout.clone(), target)?;
    let len = layout.chromosome_len();
    let n = config.population_size;
    let rate = config.effective_mutation_rate(len);
    let ceiling = evaluator.max_fitness();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scratch = Scratch::default();

    let mut population = match initial {
        Some(p) => {
            if p.len() != n {
                return Err(GaError::Config(format!("initial population has {} members, expected {n}", p.len())));
            }
            p
        }
        None => (0..n).map(|_| random_chromosome(layout, &mut rng)).collect(),
    };
    let mut reports =
        population.iter().map(|c| evaluator.evaluate_with(c, &mut scratch)).collect::<Result<Vec<_>, _>>()?;

    let mut generation = 1u64;
    let top = best_index(&reports);
    let mut best = population[top].clone();
    let mut best_report = reports[top];
    let mut improved_at = 1u64;
    let mut functional_at = reports.iter().any(|r| r.fully_functional).then_some(1);
    let mut history = vec![best_report.final_fitness];

    let termination = loop {
        if best_report.final_fitness >= ceiling {
            break Termination::TargetMet;
        }
        if generation - improved_at >= config.stall_generations {
            break if best_report.fully_functional { Termination::TargetMet } else { Termination::Stall };
        }
        if generation >= config.max_generations {
            break Termination::GenerationLimit;
        }

        let finals: Vec<u32> = reports.iter().map(|r| r.final_fitness).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| finals[j].cmp(&finals[i]));
        let mut next: Vec<Chromosome> = Vec::with_capacity(n);
        let mut next_reports: Vec<Option<FitnessReport>> = Vec::with_capacity(n);
        for &i in order.iter().take(config.elitism) {
            next.push(population[i].clone());
            next_reports.push(Some(reports[i]));
        }
        while next.len() < n {
            let pa = roulette_select(&finals, &mut rng)?;
            let pb = roulette_select(&finals, &mut rng)?;
            let (mut ca, mut cb) = if len >= 2 && rng.gen_bool(config.crossover_rate) {
                crossover_at(&population[pa], &population[pb], rng.gen_range(1..len))
            } else {
                (population[pa].clone(), population[pb].clone())
            };
            mutate_in_place(&mut ca, rate, &mut rng);
            mutate_in_place(&mut cb, rate, &mut rng);
            next.push(ca);
            next_reports.push(None);
            if next.len() < n {
                next.push(cb);
                next_reports.push(None);
            }
        }
        population = next;
        reports = population
            .iter()
            .zip(next_reports)
            .map(|(c, r)| match r {
                Some(r) => Ok(r),
                None => evaluator.evaluate_with(c, &mut scratch),
            })
            .collect::<Result<Vec<_>, _>>()?;
        generation += 1;

        let top = best_index(&reports);
        if reports[top].final_fitness > best_report.final_fitness {
            best = population[top].clone();
            best_report = reports[top];
            improved_at = generation;
        }
        if functional_at.is_none() && reports.iter().any(|r| r.fully_functional) {
            functional_at = Some(generation);
        }
        if generation.is_multiple_of(config.history_stride) {
            history.push(best_report.final_fitness);
        }
    };

    Ok(RunResult { best, report: best_report, generations: generation, functional_at, termination, history })
}

fn best_index(reports: &[FitnessReport]) -> usize {
    let mut top = 0;
    for (i, r) in reports.iter().enumerate() {
        if r.final_fitness > reports[top].final_fitness {
            top = i;
        }
    }
    top
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm_spec::{bits_of, TargetKind};
    use crate::genome::{build_layout, Connectivity};

    fn bits(s: &str) -> Chromosome {
        Chromosome::from_bits(s.chars().map(|c| c == '1').collect())
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn not_x_target() -> TargetFunction {
        let codes: Vec<Vec<bool>> = (0..8).map(|v| bits_of(v, 3)).collect();
        TargetFunction::from_fn(TargetKind::NextState, "B", 1, &codes, 3, |_, i| !i[0])
    }

    #[test]
    fn crossover_definition() {
        let (x, y) = crossover_at(&bits("0000"), &bits("1111"), 2);
        assert_eq!(x, bits("0011"));
        assert_eq!(y, bits("1100"));
        let p = bits("101101");
        let (x, y) = one_point_crossover(&p, &p, &mut rng(1)).unwrap();
        assert_eq!((x, y), (p.clone(), p));
    }

    #[test]
    fn crossover_errors() {
        assert_eq!(one_point_crossover(&bits("01"), &bits("011"), &mut rng(0)), Err(GaError::LengthMismatch(2, 3)));
        assert_eq!(one_point_crossover(&bits("0"), &bits("1"), &mut rng(0)), Err(GaError::TooShort));
    }

    #[test]
    fn mutation_extremes() {
        let c = bits("0110100111");
        assert_eq!(uniform_mutate(&c, 0.0, &mut rng(3)), c);
        assert_eq!(uniform_mutate(&c, 1.0, &mut rng(3)), bits("1001011000"));
    }

    #[test]
    fn roulette_edge_cases() {
        let mut r = rng(4);
        assert_eq!(roulette_select(&[], &mut r), Err(GaError::EmptySelection));
        for _ in 0..100 {
            assert_eq!(roulette_select(&[5], &mut r).unwrap(), 0);
            assert_eq!(roulette_select(&[0, 7, 0], &mut r).unwrap(), 1);
        }
        let mut seen = [0u32; 2];
        for _ in 0..1000 {
            seen[roulette_select(&[0, 0], &mut r).unwrap()] += 1;
        }
        assert!(seen[0] > 400 && seen[1] > 400, "{seen:?}");
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig::default().validate().is_ok());
        let bad = [
            GaConfig { population_size: 1, ..Default::default() },
            GaConfig { crossover_rate: 1.5, ..Default::default() },
            GaConfig { mutation_rate: Some(-0.1), ..Default::default() },
            GaConfig { stall_generations: 50_000, ..Default::default() },
            GaConfig { elitism: 11, ..Default::default() },
            GaConfig { max_generations: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(GaError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn single_generation_limit() {
        let l = Arc::new(build_layout(4, 4, 1, 3, Connectivity::AllLeft).unwrap());
        let cfg = GaConfig { max_generations: 1, stall_generations: 1, seed: 3, ..Default::default() };
        let t = TargetFunction::from_fn(
            TargetKind::NextState,
            "C",
            1,
            &(0..8).map(|v| bits_of(v, 3)).collect::<Vec<_>>(),
            3,
            |s, i| s[2] ^ (s[0] & i[0]),
        );
        let r = run_ga(&l, &t, &cfg).unwrap();
        assert_eq!(r.generations, 1);
        assert_eq!(r.history.len(), 1);
        if r.report.final_fitness < 32 {
            assert_ne!(r.termination, Termination::Stall);
        }
    }

    #[test]
    fn clones_of_minimal_solution_stall_out() {
        let l = Arc::new(build_layout(2, 2, 1, 3, Connectivity::AllLeft).unwrap());
        // cell (0,0) = NOT(X), tap = gate 0
        let p = crate::circuit::Phenotype::blank(l.clone(), crate::genome::SignalRef::Gate { row: 0, col: 0 })
            .unwrap()
            .with_cell(
                0,
                0,
                crate::circuit::Cell {
                    gate: crate::genome::GateType::Not,
                    inputs: [crate::genome::SignalRef::Input(0); 2],
                },
            )
            .unwrap();
        let solution = p.to_chromosome().unwrap();
        let cfg = GaConfig { max_generations: 500, stall_generations: 100, seed: 8, ..Default::default() };
        let r = run_ga_from(&l, &not_x_target(), &cfg, Some(vec![solution.clone(); 10])).unwrap();
        assert_eq!(r.termination, Termination::TargetMet);
        assert_eq!(r.generations, 101);
        assert_eq!(r.functional_at, Some(1));
        assert_eq!(r.report.gates, 1);
        assert_eq!(r.report.final_fitness, 16 + 3);
        assert!(r.history.iter().all(|&h| h == 19));
    }

    #[test]
    fn run_is_reproducible() {
        let l = Arc::new(build_layout(4, 4, 1, 3, Connectivity::AllLeft).unwrap());
        let cfg = GaConfig { max_generations: 3000, stall_generations: 1000, seed: 77, ..Default::default() };
        let a = run_ga(&l, &not_x_target(), &cfg).unwrap();
        let b = run_ga(&l, &not_x_target(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.history.windows(2).all(|w| w[0] <= w[1]));
    }
}
