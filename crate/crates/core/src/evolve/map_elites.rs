use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvolveError;
use crate::domain::Domain;
use crate::individual::{Individual, Provenance};
use crate::operator::{Variation, VariationOutput};
use crate::rng::RngStream;
use crate::runlog::{EventKind, LogEvent, RunLog};

/// One behavior-space axis: `bins` equal-width bins over `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDim {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl MapDim {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Result<Self, EvolveError> {
        let d = Self { lower, upper, bins };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), EvolveError> {
        if self.bins == 0 || !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(EvolveError::Config(format!(
                "map axis needs finite lower < upper and bins > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Bin of `v`; values outside the range go to the nearest end bin.
    pub fn bin(&self, v: f64) -> usize {
        let t = (v - self.lower) / (self.upper - self.lower);
        let i = (t * self.bins as f64).floor();
        if i.is_nan() || i < 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }
}

/// Best individual found so far in each cell of a discretized behavior
/// space. Replacement requires strictly higher fitness.
#[derive(Clone, Debug, PartialEq)]
pub struct EliteMap {
    dims: Vec<MapDim>,
    cells: BTreeMap<Vec<usize>, Individual>,
}

impl EliteMap {
    pub fn new(dims: Vec<MapDim>) -> Result<Self, EvolveError> {
        if dims.is_empty() {
            return Err(EvolveError::Config("map needs at least one axis".into()));
        }
        for d in &dims {
            d.validate()?;
        }
        Ok(Self {
            dims,
            cells: BTreeMap::new(),
        })
    }

    pub fn dims(&self) -> &[MapDim] {
        &self.dims
    }

    pub fn cell_of(&self, descriptor: &[f64]) -> Result<Vec<usize>, EvolveError> {
        if descriptor.len() != self.dims.len() {
            return Err(EvolveError::DescriptorDims {
                got: descriptor.len(),
                want: self.dims.len(),
            });
        }
        Ok(self.dims.iter().zip(descriptor).map(|(d, &v)| d.bin(v)).collect())
    }

    /// Stores `ind` if its cell is empty or it beats the incumbent.
    pub fn map_insert(&mut self, ind: Individual) -> Result<bool, EvolveError> {
        let fitness = ind.fitness().ok_or(EvolveError::Unevaluated)?;
        let cell = self.cell_of(ind.descriptor().ok_or(EvolveError::MissingDescriptor)?)?;
        match self.cells.get(&cell) {
            Some(old) if old.fitness().is_some_and(|f| fitness <= f) => Ok(false),
            _ => {
                self.cells.insert(cell, ind);
                Ok(true)
            }
        }
    }

    pub fn qd_score(&self) -> f64 {
        self.cells.values().filter_map(Individual::fitness).sum()
    }

    pub fn niches_filled(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, cell: &[usize]) -> Option<&Individual> {
        self.cells.get(cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &Individual)> {
        self.cells.iter()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.cells.values().fold(None, |best: Option<&Individual>, ind| match best {
            Some(b) if b.fitness() >= ind.fitness() => Some(b),
            _ => Some(ind),
        })
    }

    /// `cell,fitness,genotype` rows in cell order; coordinates are joined
    /// with `:`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell", "fitness", "genotype"])?;
        for (cell, ind) in &self.cells {
            let coords: Vec<String> = cell.iter().map(ToString::to_string).collect();
            w.write_record([
                coords.join(":"),
                ind.fitness().unwrap_or(f64::NAN).to_string(),
                ind.genotype().to_string(),
            ])?;
        }
        w.flush()
            .map_err(csv::Error::from)
    }
}

/// How parents are drawn from the map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParentStrategy {
    /// Distinct occupied cells, uniformly.
    #[default]
    Uniform,
    /// An anchor cell uniformly, then the other parents from occupied cells
    /// within `radius` bins of it on every axis.
    Near { radius: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapElitesConfig {
    pub dims: Vec<MapDim>,
    /// Evaluations after seeding.
    pub budget: usize,
    #[serde(default)]
    pub strategy: ParentStrategy,
    /// Variation calls run concurrently per step.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Candidates requested from the domain initializer.
    pub initial_size: usize,
}

/// Consecutive batches without a valid child before a run gives up.
const MAX_IDLE_STEPS: usize = 50;

fn default_batch() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapCheckpoint {
    pub evaluations: usize,
    pub qd_score: f64,
    pub niches_filled: usize,
    pub best_fitness: f64,
    pub validity_rate: f64,
}

#[derive(Clone, Debug)]
pub struct MapElitesOutcome {
    pub map: EliteMap,
    pub history: Vec<MapCheckpoint>,
}

impl MapElitesOutcome {
    pub fn write_history_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.history {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn pick_parents(map: &EliteMap, k: usize, strategy: ParentStrategy, rng: &mut RngStream) -> Vec<Individual> {
    let occupied: Vec<(&Vec<usize>, &Individual)> = map.iter().collect();
    if occupied.is_empty() {
        return Vec::new();
    }
    let k = k.max(1);
    match strategy {
        ParentStrategy::Uniform => occupied
            .choose_multiple(rng, k.min(occupied.len()))
            .map(|(_, ind)| (*ind).clone())
            .collect(),
        ParentStrategy::Near { radius } => {
            let (anchor, first) = occupied[rng.gen_range(0..occupied.len())];
            let near: Vec<&Individual> = occupied
                .iter()
                .filter(|(cell, _)| {
                    *cell != anchor && cell.iter().zip(anchor).all(|(a, b)| a.abs_diff(*b) <= radius)
                })
                .map(|(_, ind)| *ind)
                .collect();
            let mut out = vec![first.clone()];
            out.extend(near.choose_multiple(rng, (k - 1).min(near.len())).map(|i| (*i).clone()));
            out
        }
    }
}

/// MAP-Elites: seed the map from the domain initializer, then repeatedly
/// vary parents drawn from the map and insert the evaluated children.
/// A checkpoint is recorded after seeding and after every batch.
pub fn map_elites_run(
    seed: u64,
    parents_per_call: usize,
    config: &MapElitesConfig,
    domain: &dyn Domain,
    variation: &dyn Variation,
    log: &mut RunLog,
) -> Result<MapElitesOutcome, EvolveError> {
    let mut map = EliteMap::new(config.dims.clone())?;
    if config.batch_size == 0 {
        return Err(EvolveError::Config("batch_size must be at least 1".into()));
    }
    let root = RngStream::new(seed, "map-elites");
    let mut init_rng = root.child("init");
    let mut select = root.child("select");
    let vary = root.child("vary");

    let seeds: Vec<String> = domain
        .initialize(config.initial_size, &mut init_rng)
        .iter()
        .filter_map(|t| domain.normalize(t))
        .collect();
    let mut evaluations = seeds.len();
    for ind in score(domain, seeds, Provenance::Seed) {
        log.push(LogEvent::new(0, EventKind::Evaluation, "init").individual(&ind));
        map.map_insert(ind)?;
    }
    if map.niches_filled() == 0 {
        return Err(EvolveError::Initialization);
    }
    let mut history = vec![checkpoint(&map, evaluations, 0, 0)];
    let k = variation.parents_wanted(parents_per_call);
    let (mut spent, mut proposed, mut valid, mut step, mut idle) = (0usize, 0usize, 0usize, 0u64, 0usize);
    while spent < config.budget {
        step += 1;
        let jobs: Vec<(Vec<Individual>, RngStream)> = (0..config.batch_size)
            .map(|j| (pick_parents(&map, k, config.strategy, &mut select), vary.child(format!("s{step}/c{j}"))))
            .collect();
        let outputs: Vec<VariationOutput> = jobs
            .into_par_iter()
            .map(|(parents, mut rng)| variation.vary(&parents, &mut rng))
            .collect();
        let mut genotypes = Vec::new();
        for out in outputs {
            if let Some(ev) = &out.event {
                log.push(ev.to_event(step, "vary"));
            }
            proposed += out.proposed;
            for text in out.children {
                match domain.normalize(&text) {
                    Some(g) => {
                        valid += 1;
                        genotypes.push((g, out.provenance));
                    }
                    None => log.push(LogEvent::new(step, EventKind::Invalid, "vary").note(text)),
                }
            }
        }
        idle = if genotypes.is_empty() { idle + 1 } else { 0 };
        genotypes.truncate(config.budget - spent);
        spent += genotypes.len();
        evaluations += genotypes.len();
        let by_prov: Vec<Individual> = genotypes
            .into_par_iter()
            .filter_map(|(g, prov)| score_one(domain, g, prov))
            .collect();
        for ind in by_prov {
            log.push(LogEvent::new(step, EventKind::Evaluation, "vary").individual(&ind));
            map.map_insert(ind)?;
        }
        history.push(checkpoint(&map, evaluations, valid, proposed));
        if idle >= MAX_IDLE_STEPS {
            log.push(LogEvent::new(step, EventKind::Selection, "vary").note("stopped: operator produced no valid children"));
            break;
        }
    }
    Ok(MapElitesOutcome { map, history })
}

fn score_one(domain: &dyn Domain, genotype: String, prov: Provenance) -> Option<Individual> {
    let eval = domain.evaluate(&genotype)?;
    eval.descriptor.as_ref()?;
    let mut ind = Individual::new(genotype, prov).ok()?;
    ind.set_evaluation(eval).ok()?;
    Some(ind)
}

fn score(domain: &dyn Domain, genotypes: Vec<String>, prov: Provenance) -> Vec<Individual> {
    genotypes
        .into_par_iter()
        .filter_map(|g| score_one(domain, g, prov))
        .collect()
}

fn checkpoint(map: &EliteMap, evaluations: usize, valid: usize, proposed: usize) -> MapCheckpoint {
    MapCheckpoint {
        evaluations,
        qd_score: map.qd_score(),
        niches_filled: map.niches_filled(),
        best_fitness: map.best().and_then(Individual::fitness).unwrap_or(0.0),
        validity_rate: if proposed == 0 { 0.0 } else { valid as f64 / proposed as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{SamplingParams, UmdaMock};
    use crate::binary::{BinaryDescriptor, BinaryDomain, BinaryFitness, BitstringSpec, Codec, OnePointCrossover};
    use crate::individual::Evaluation;
    use crate::operator::{Lmx, OffspringParser, PromptTemplate};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ind(g: &str, f: f64, d: &[f64]) -> Individual {
        let mut i = Individual::new(g, Provenance::Seed).unwrap();
        i.set_evaluation(Evaluation::with_descriptor(f, d.to_vec())).unwrap();
        i
    }

    fn line() -> EliteMap {
        EliteMap::new(vec![MapDim::new(0.0, 1.5, 30).unwrap()]).unwrap()
    }

    #[test]
    fn binning_and_clamping() {
        let m = line();
        assert_eq!(m.cell_of(&[0.0]).unwrap(), [0]);
        assert_eq!(m.cell_of(&[1.5]).unwrap(), [29]);
        assert_eq!(m.cell_of(&[9.0]).unwrap(), [29]);
        assert_eq!(m.cell_of(&[-1.0]).unwrap(), [0]);
        assert_eq!(m.cell_of(&[0.05]).unwrap(), [1]);
        assert!(m.cell_of(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn insertion_rules() {
        let mut m = line();
        assert_eq!(m.qd_score(), 0.0);
        assert!(m.map_insert(ind("a1", 0.5, &[0.0])).unwrap());
        assert!(!m.map_insert(ind("b1", 0.5, &[0.01])).unwrap());
        assert!(m.map_insert(ind("c1", 0.25, &[1.0])).unwrap());
        assert_eq!(m.qd_score(), 0.75);
        assert!(m.map_insert(ind("d1", 0.6, &[0.02])).unwrap());
        assert_eq!(m.get(&[0]).unwrap().genotype(), "d1");
        let mut raw = Individual::new("zz", Provenance::Seed).unwrap();
        assert!(m.map_insert(raw.clone()).is_err());
        raw.set_evaluation(Evaluation::new(1.0)).unwrap();
        assert_eq!(m.map_insert(raw), Err(EvolveError::MissingDescriptor));
    }

    #[test]
    fn improving_stream_in_one_cell() {
        let mut m = line();
        let mut last = -1.0;
        for i in 0..20 {
            m.map_insert(ind(&format!("g{i}"), i as f64, &[0.3])).unwrap();
            assert_eq!(m.niches_filled(), 1);
            assert!(m.qd_score() > last);
            last = m.qd_score();
        }
    }

    proptest! {
        #[test]
        fn qd_and_niches_never_decrease(stream in prop::collection::vec((-0.5f64..2.0, 0.0f64..1.0), 1..300)) {
            let mut m = line();
            let (mut qd, mut niches) = (0.0, 0);
            for (i, (d, f)) in stream.into_iter().enumerate() {
                m.map_insert(ind(&format!("g{i}"), f, &[d])).unwrap();
                prop_assert!(m.qd_score() >= qd);
                prop_assert!(m.niches_filled() >= niches);
                qd = m.qd_score();
                niches = m.niches_filled();
            }
            for (cell, stored) in m.iter() {
                prop_assert_eq!(&m.cell_of(stored.descriptor().unwrap()).unwrap(), cell);
            }
        }
    }

    fn domain() -> BinaryDomain {
        BinaryDomain {
            spec: BitstringSpec::new(10, Codec::Plain),
            fitness: BinaryFitness::LeadingOnes,
            descriptor: Some(BinaryDescriptor::OnesFraction),
        }
    }

    #[test]
    fn zero_budget_is_seed_map() {
        let cfg = MapElitesConfig {
            dims: vec![MapDim::new(0.0, 1.0, 11).unwrap()],
            budget: 0,
            strategy: ParentStrategy::Uniform,
            batch_size: 4,
            initial_size: 5,
        };
        let out = map_elites_run(0, 2, &cfg, &domain(), &OnePointCrossover::default(), &mut RunLog::new()).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.map.niches_filled() >= 1);
    }

    #[test]
    fn runs_fill_niches_monotonically() {
        for strategy in [ParentStrategy::Uniform, ParentStrategy::Near { radius: 3 }] {
            let cfg = MapElitesConfig {
                dims: vec![MapDim::new(0.0, 1.0, 11).unwrap()],
                budget: 300,
                strategy,
                batch_size: 4,
                initial_size: 4,
            };
            let lmx = Lmx::new(
                Arc::new(UmdaMock::from_prompt(Codec::Plain)),
                PromptTemplate::default(),
                OffspringParser::new(3, |s: &str| s.len() == 10),
                SamplingParams::default(),
            );
            let a = map_elites_run(3, 3, &cfg, &domain(), &lmx, &mut RunLog::new()).unwrap();
            let b = map_elites_run(3, 3, &cfg, &domain(), &lmx, &mut RunLog::new()).unwrap();
            assert_eq!(a.history, b.history);
            assert_eq!(a.history.last().unwrap().evaluations, 304);
            for w in a.history.windows(2) {
                assert!(w[1].qd_score >= w[0].qd_score);
                assert!(w[1].niches_filled >= w[0].niches_filled);
            }
        }
    }

    #[test]
    fn near_parents_stay_close() {
        let mut m = EliteMap::new(vec![MapDim::new(0.0, 30.0, 30).unwrap()]).unwrap();
        for c in [0usize, 1, 2, 10, 20, 21] {
            m.map_insert(ind(&format!("g{c}"), 1.0, &[c as f64 + 0.5])).unwrap();
        }
        let mut rng = RngStream::new(0, "near");
        for _ in 0..200 {
            let ps = pick_parents(&m, 3, ParentStrategy::Near { radius: 3 }, &mut rng);
            let cells: Vec<usize> = ps.iter().map(|p| m.cell_of(p.descriptor().unwrap()).unwrap()[0]).collect();
            for c in &cells[1..] {
                assert!(c.abs_diff(cells[0]) <= 3, "{cells:?}");
            }
        }
    }
}
