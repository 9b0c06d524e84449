use rand::Rng;

use super::EvolveError;
use crate::individual::Individual;

fn fitness_of(ind: &Individual) -> Result<f64, EvolveError> {
    ind.fitness().ok_or(EvolveError::Unevaluated)
}

/// Winner of a tournament whose contestants are `draws` (population
/// indices, in draw order). Ties go to the earliest draw.
pub fn tournament_winner(pop: &[Individual], draws: &[usize]) -> Result<usize, EvolveError> {
    let mut best: Option<(usize, f64)> = None;
    for &i in draws {
        let ind = pop.get(i).ok_or(EvolveError::EmptyPopulation)?;
        let f = fitness_of(ind)?;
        if best.map_or(true, |(_, b)| f > b) {
            best = Some((i, f));
        }
    }
    best.map(|(i, _)| i).ok_or(EvolveError::EmptyPopulation)
}

/// Index of the fittest of `size` uniform draws with replacement.
pub fn tournament_select<R: Rng + ?Sized>(
    pop: &[Individual],
    size: usize,
    rng: &mut R,
) -> Result<usize, EvolveError> {
    if pop.is_empty() {
        return Err(EvolveError::EmptyPopulation);
    }
    let draws: Vec<usize> = (0..size.max(1)).map(|_| rng.gen_range(0..pop.len())).collect();
    tournament_winner(pop, &draws)
}

/// Indices of `pop` sorted by descending fitness; ties keep population order.
pub(crate) fn ranked(pop: &[Individual]) -> Result<Vec<usize>, EvolveError> {
    let scores: Vec<f64> = pop.iter().map(fitness_of).collect::<Result<_, _>>()?;
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(idx)
}

/// The top `ceil(keep_fraction * n)` members plus the all-time elite,
/// without duplicating the elite when it is already among them.
pub fn truncation_step(
    pop: &[Individual],
    elite: Option<&Individual>,
    keep_fraction: f64,
) -> Result<Vec<Individual>, EvolveError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(EvolveError::Config("keep fraction must lie in (0, 1]".into()));
    }
    let keep = ((keep_fraction * pop.len() as f64).ceil() as usize).min(pop.len());
    let mut out: Vec<Individual> = ranked(pop)?[..keep].iter().map(|&i| pop[i].clone()).collect();
    if let Some(e) = elite {
        let present = out
            .iter()
            .any(|m| m.genotype() == e.genotype() && m.fitness() == e.fitness());
        if !present {
            out.push(e.clone());
        }
    }
    Ok(out)
}

/// Reduces `pool` to `n` survivors: the pool's best, then repeated
/// tournaments among those not yet chosen.
pub fn tournament_cull<R: Rng + ?Sized>(
    mut pool: Vec<Individual>,
    n: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Individual>, EvolveError> {
    if pool.len() <= n {
        return Ok(pool);
    }
    let best = ranked(&pool)?[0];
    let mut out = vec![pool.remove(best)];
    while out.len() < n {
        let i = tournament_select(&pool, size, rng)?;
        out.push(pool.remove(i));
    }
    Ok(out)
}
