use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::selection::{ranked, tournament_cull, truncation_step};
use super::EvolveError;
use crate::config::{DuplicatePolicy, RunConfig, Selection};
use crate::domain::Domain;
use crate::individual::{Individual, Population, Provenance};
use crate::operator::{Variation, VariationOutput};
use crate::rng::RngStream;
use crate::runlog::{EventKind, LogEvent, RunLog};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    /// Valid children over candidate children examined; 0 when nothing
    /// was proposed.
    pub validity_rate: f64,
    /// Distinct valid children absent from the previous population.
    pub novel_count: usize,
    /// Fitness evaluations spent in this generation.
    pub evaluations: usize,
    pub best_genotype: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaHistory {
    pub records: Vec<GenerationRecord>,
}

impl GaHistory {
    pub fn best_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_fitness).collect()
    }

    /// First generation whose best fitness reaches `target`.
    pub fn reached(&self, target: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.best_fitness >= target)
            .map(|r| r.generation)
    }

    pub fn total_evaluations(&self) -> usize {
        self.records.iter().map(|r| r.evaluations).sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GaOutcome {
    pub history: GaHistory,
    pub population: Population,
    pub elite: Individual,
}

enum Job {
    Prior(RngStream),
    Vary(Vec<Individual>, RngStream),
}

struct Streams {
    init: RngStream,
    select: RngStream,
    prior: RngStream,
    vary: RngStream,
}

/// Generational evolution with a pluggable variation operator.
///
/// Each generation repeatedly picks `k` random parents and applies the
/// operator until `n` new evaluated children exist (or the attempt budget
/// runs out), then merges and reduces back to `n` according to
/// `config.selection`. Calls within a generation run in parallel batches
/// sized so that at most `n + max_children - 1` children are gathered;
/// every call has its own RNG stream, so results do not depend on thread
/// scheduling.
pub fn ga_run(
    config: &RunConfig,
    domain: &dyn Domain,
    variation: &dyn Variation,
    log: &mut RunLog,
) -> Result<GaOutcome, EvolveError> {
    config.validate()?;
    let root = RngStream::new(config.seed, "ga");
    let mut streams = Streams {
        init: root.child("init"),
        select: root.child("select"),
        prior: root.child("prior"),
        vary: root.child("vary"),
    };
    let n = config.population_size;

    let (mut population, init_evals) = initialize(config, domain, &mut streams, log)?;
    let mut elite = population.best().cloned().ok_or(EvolveError::Initialization)?;
    let mut history = GaHistory::default();
    history.records.push(record(0, &population, 0.0, 0, init_evals));

    let k = variation.parents_wanted(config.parents_per_crossover).max(1);
    let cap = variation.max_children().max(1);
    let max_calls = config.max_attempts_factor * n;

    let done = |elite: &Individual| {
        config
            .target_fitness
            .is_some_and(|t| elite.fitness().is_some_and(|f| f >= t))
    };

    for gen in 1..=config.generations {
        if done(&elite) {
            break;
        }
        let pool = match config.selection {
            Selection::Tournament { .. } => population.members.clone(),
            Selection::TruncationWithElitism { fraction } => {
                truncation_step(&population.members, Some(&elite), fraction)?
            }
        };
        let before: HashSet<String> = population.members.iter().map(|m| m.genotype().to_string()).collect();
        let mut seen = before.clone();
        let mut novel: HashSet<String> = HashSet::new();
        let mut children: Vec<Individual> = Vec::new();
        let (mut calls, mut proposed, mut valid, mut evaluations) = (0usize, 0usize, 0usize, 0usize);

        while children.len() < n && calls < max_calls {
            let batch = (n - children.len()).div_ceil(cap).min(max_calls - calls);
            let jobs: Vec<Job> = (calls..calls + batch)
                .map(|call| {
                    let stream = streams.vary.child(format!("g{gen}/c{call}"));
                    let inject = config.prior_injection_probability > 0.0
                        && streams.prior.gen_bool(config.prior_injection_probability);
                    if inject {
                        Job::Prior(stream)
                    } else {
                        let take = k.min(pool.len());
                        let parents = pool.choose_multiple(&mut streams.select, take).cloned().collect();
                        Job::Vary(parents, stream)
                    }
                })
                .collect();
            calls += batch;
            let outputs: Vec<VariationOutput> = jobs
                .into_par_iter()
                .map(|job| match job {
                    Job::Prior(mut rng) => match domain.sample_prior(&mut rng) {
                        Some(text) => VariationOutput {
                            children: vec![text],
                            proposed: 1,
                            provenance: Provenance::PriorInjection,
                            event: None,
                        },
                        None => VariationOutput::empty(Provenance::PriorInjection),
                    },
                    Job::Vary(parents, mut rng) => variation.vary(&parents, &mut rng),
                })
                .collect();

            let mut candidates: Vec<(String, Provenance)> = Vec::new();
            for out in outputs {
                if let Some(ev) = &out.event {
                    log.push(ev.to_event(gen as u64, "vary"));
                }
                proposed += out.proposed;
                for text in out.children {
                    let Some(genotype) = domain.normalize(&text) else {
                        log.push(LogEvent::new(gen as u64, EventKind::Invalid, "vary").note(text));
                        continue;
                    };
                    valid += 1;
                    if !before.contains(&genotype) {
                        novel.insert(genotype.clone());
                    }
                    if config.duplicate_policy == DuplicatePolicy::Discard && !seen.insert(genotype.clone()) {
                        continue;
                    }
                    candidates.push((genotype, out.provenance));
                }
            }
            evaluations += candidates.len();
            let scored: Vec<Option<Individual>> = candidates
                .into_par_iter()
                .map(|(g, prov)| {
                    let eval = domain.evaluate(&g)?;
                    let mut ind = Individual::new(g, prov).ok()?;
                    ind.set_evaluation(eval).ok()?;
                    Some(ind)
                })
                .collect();
            for ind in scored.into_iter().flatten() {
                log.push(LogEvent::new(gen as u64, EventKind::Evaluation, "vary").individual(&ind));
                children.push(ind);
            }
        }

        let members = match config.selection {
            Selection::Tournament { size } => {
                let mut pool = population.members;
                pool.extend(children);
                tournament_cull(pool, n, size, &mut streams.select)?
            }
            Selection::TruncationWithElitism { .. } => {
                generational_replace(&population.members, &elite, children, n)?
            }
        };
        population = Population {
            members,
            generation: gen as u64,
        };
        if let Some(best) = population.best() {
            if best.fitness() > elite.fitness() {
                elite = best.clone();
            }
        }
        log.push(
            LogEvent::new(gen as u64, EventKind::Selection, "select")
                .individual(&elite)
                .note(format!("population {}", population.len())),
        );
        let rate = if proposed == 0 { 0.0 } else { valid as f64 / proposed as f64 };
        history
            .records
            .push(record(gen, &population, rate, novel.len(), evaluations));
    }
    Ok(GaOutcome {
        history,
        population,
        elite,
    })
}

/// Best `n` of the elite and the children; if children are short, the
/// previous population fills the gap best-first.
fn generational_replace(
    previous: &[Individual],
    elite: &Individual,
    children: Vec<Individual>,
    n: usize,
) -> Result<Vec<Individual>, EvolveError> {
    let mut pool = vec![elite.clone()];
    pool.extend(children);
    let mut next: Vec<Individual> = ranked(&pool)?.into_iter().take(n).map(|i| pool[i].clone()).collect();
    if next.len() < n {
        let mut rest: Vec<Individual> = previous
            .iter()
            .filter(|p| !(p.genotype() == elite.genotype() && p.fitness() == elite.fitness()))
            .cloned()
            .collect();
        let order = ranked(&rest)?;
        let mut picked: Vec<Individual> = order.into_iter().map(|i| rest[i].clone()).collect();
        picked.truncate(n - next.len());
        next.append(&mut picked);
        rest.clear();
    }
    Ok(next)
}

fn initialize(
    config: &RunConfig,
    domain: &dyn Domain,
    streams: &mut Streams,
    log: &mut RunLog,
) -> Result<(Population, usize), EvolveError> {
    let count = config.initial_population_size.unwrap_or(config.population_size);
    let mut seen = HashSet::new();
    let mut genotypes = Vec::new();
    for text in domain.initialize(count, &mut streams.init) {
        let Some(g) = domain.normalize(&text) else {
            log.push(LogEvent::new(0, EventKind::Invalid, "init").note(text));
            continue;
        };
        if config.duplicate_policy == DuplicatePolicy::Discard && !seen.insert(g.clone()) {
            continue;
        }
        genotypes.push(g);
    }
    let evaluations = genotypes.len();
    let members: Vec<Individual> = genotypes
        .into_par_iter()
        .filter_map(|g| {
            let eval = domain.evaluate(&g)?;
            let mut ind = Individual::new(g, Provenance::Seed).ok()?;
            ind.set_evaluation(eval).ok()?;
            Some(ind)
        })
        .collect();
    if members.is_empty() {
        return Err(EvolveError::Initialization);
    }
    for ind in &members {
        log.push(LogEvent::new(0, EventKind::Evaluation, "init").individual(ind));
    }
    let n = config.population_size;
    let members = match config.selection {
        Selection::Tournament { size } => tournament_cull(members, n, size, &mut streams.select)?,
        Selection::TruncationWithElitism { .. } => {
            let order = ranked(&members)?;
            if members.len() > n {
                order.into_iter().take(n).map(|i| members[i].clone()).collect()
            } else {
                members
            }
        }
    };
    Ok((Population::new(members), evaluations))
}

fn record(generation: usize, pop: &Population, validity_rate: f64, novel_count: usize, evaluations: usize) -> GenerationRecord {
    let best = pop.best().expect("population is never empty");
    GenerationRecord {
        generation,
        best_fitness: best.fitness().expect("members are evaluated"),
        mean_fitness: pop.mean_fitness().expect("members are evaluated"),
        validity_rate,
        novel_count,
        evaluations,
        best_genotype: best.genotype().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{make_umda_mock, FnEngine, SamplingParams, UmdaMock};
    use crate::binary::{BinaryDomain, Codec, OnePointCrossover};
    use crate::domain::ExternalDomain;
    use crate::individual::Evaluation;
    use crate::operator::{Lmx, OffspringParser, PromptTemplate};
    use std::sync::Arc;

    fn onemax_lmx(engine: Arc<dyn crate::backend::Engine>) -> Lmx {
        Lmx::new(
            engine,
            PromptTemplate::default(),
            OffspringParser::new(3, |s: &str| s.len() == 10),
            SamplingParams::binary_defaults(),
        )
    }

    #[test]
    fn zero_generations_only_record_initialization() {
        let mut c = RunConfig::onemax_defaults();
        c.generations = 0;
        let out = ga_run(&c, &BinaryDomain::onemax(10), &OnePointCrossover::default(), &mut RunLog::new()).unwrap();
        assert_eq!(out.history.records.len(), 1);
        assert_eq!(out.history.records[0].evaluations, 10);
    }

    #[test]
    fn target_fitness_stops_the_run() {
        let mut c = RunConfig::onemax_defaults();
        c.generations = 500;
        c.target_fitness = Some(10.0);
        let out = ga_run(&c, &BinaryDomain::onemax(10), &OnePointCrossover::default(), &mut RunLog::new()).unwrap();
        let last = out.history.records.last().unwrap();
        assert_eq!(last.best_fitness, 10.0);
        assert_eq!(out.history.reached(10.0), Some(last.generation));
        assert!(out.history.records.len() < 501);
    }

    #[test]
    fn optimal_population_is_absorbing() {
        let domain = ExternalDomain::new(
            "ones",
            vec!["1111111111".into()],
            |t: &str| (t.len() == 10 && crate::binary::is_bits(t)).then(|| t.to_string()),
            |g: &str| Some(Evaluation::new(crate::binary::onemax(g) as f64)),
        );
        let engine = make_umda_mock(&["1111111111".to_string()], Codec::Plain).unwrap();
        let out = ga_run(&RunConfig::onemax_defaults(), &domain, &onemax_lmx(Arc::new(engine)), &mut RunLog::new()).unwrap();
        for ind in &out.population.members {
            assert_eq!(ind.genotype(), "1111111111");
        }
        assert!(out.history.records.iter().all(|r| r.best_fitness == 10.0 && r.mean_fitness == 10.0));
    }

    #[test]
    fn best_is_monotone_and_runs_repeat() {
        for selection in [
            Selection::TruncationWithElitism { fraction: 0.5 },
            Selection::Tournament { size: 3 },
        ] {
            let mut c = RunConfig::onemax_defaults();
            c.selection = selection;
            c.seed = 11;
            let lmx = onemax_lmx(Arc::new(UmdaMock::from_prompt(Codec::Plain)));
            let a = ga_run(&c, &BinaryDomain::onemax(10), &lmx, &mut RunLog::new()).unwrap();
            let b = ga_run(&c, &BinaryDomain::onemax(10), &lmx, &mut RunLog::new()).unwrap();
            assert_eq!(a.history, b.history);
            let best = a.history.best_series();
            assert!(best.windows(2).all(|w| w[1] >= w[0]), "{best:?}");
            for r in &a.history.records[1..] {
                assert!(r.evaluations <= c.population_size + 2);
                assert_eq!(r.validity_rate, 1.0);
            }
        }
    }

    #[test]
    fn garbage_engine_exhausts_attempts_without_failing() {
        let mut c = RunConfig::onemax_defaults();
        c.generations = 2;
        c.max_attempts_factor = 1;
        let lmx = onemax_lmx(Arc::new(FnEngine::constant("no bits here\n")));
        let mut log = RunLog::new();
        let out = ga_run(&c, &BinaryDomain::onemax(10), &lmx, &mut log).unwrap();
        assert_eq!(out.history.records.len(), 3);
        assert_eq!(out.history.records[1].validity_rate, 0.0);
        assert_eq!(out.history.records[1].evaluations, 0);
        assert_eq!(out.population.len(), 10);
        assert!(log.events().iter().any(|e| e.event == EventKind::LmxCall));
    }

    #[test]
    fn empty_initialization_is_an_error() {
        let domain = ExternalDomain::new("none", vec!["x".into()], |_: &str| None, |_: &str| None);
        let err = ga_run(&RunConfig::onemax_defaults(), &domain, &OnePointCrossover::default(), &mut RunLog::new());
        assert_eq!(err.unwrap_err(), EvolveError::Initialization);
    }

    #[test]
    fn history_csv_layout() {
        let mut c = RunConfig::onemax_defaults();
        c.generations = 1;
        let out = ga_run(&c, &BinaryDomain::onemax(10), &OnePointCrossover::default(), &mut RunLog::disabled()).unwrap();
        let mut buf = Vec::new();
        out.history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "generation,best_fitness,mean_fitness,validity_rate,novel_count,evaluations,best_genotype\n"
        ));
        assert_eq!(text.lines().count(), 3);
    }
}
