//! Genetic search over frozen sets of a fixed `(N, K)`.
//!
//! Each generation, slot `j` breeds a child from member `j` and a
//! tournament-selected partner (uniform crossover, repaired to the exact
//! frozen count), then applies random frozen/unfrozen swaps. The next
//! generation keeps the parents' elites and fills the remaining slots with
//! the fittest of the other parents and the novel children. Random draws happen sequentially; only fitness
//! evaluation runs in parallel, so results do not depend on the worker count.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::RngStream;
use crate::codec::Construction;
use crate::construction::dega_construct;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub mutation_swaps: usize,
    pub crossover_rate: f64,
    pub elitism_count: usize,
    pub tournament_size: usize,
    /// Seed the initial population with the DE/GA code at this design SNR.
    pub dega_seed_snr_db: Option<f64>,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 32,
            generations: 50,
            mutation_swaps: 1,
            crossover_rate: 0.9,
            elitism_count: 2,
            tournament_size: 2,
            dega_seed_snr_db: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if self.elitism_count >= self.population_size {
            return bad("elitism_count must be below population_size");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if self.tournament_size == 0 {
            return bad("tournament_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaMember {
    pub construction: Construction,
    pub fitness: f64,
}

/// Members sorted by descending fitness (ties keep insertion order).
#[derive(Clone, Debug, PartialEq)]
pub struct GaPopulation {
    pub n: usize,
    pub k: usize,
    pub generation: usize,
    pub members: Vec<GaMember>,
}

impl GaPopulation {
    pub fn best(&self) -> &GaMember {
        &self.members[0]
    }

    pub fn constructions(&self) -> impl Iterator<Item = &Construction> {
        self.members.iter().map(|m| &m.construction)
    }
}

/// Fitness function shared by all workers.
pub type Fitness<'a> = dyn Fn(&Construction) -> Result<f64> + Sync + 'a;

/// Evolve a population of `(n, k)` codes for `cfg.generations` generations.
pub fn ga_evolve(
    n: usize,
    k: usize,
    cfg: &GaConfig,
    fitness: &Fitness<'_>,
    rng: &mut RngStream,
) -> Result<GaPopulation> {
    ga_evolve_observed(n, k, cfg, fitness, rng, &mut |_| {})
}

/// [`ga_evolve`], calling `observe` with every generation's population.
pub fn ga_evolve_observed(
    n: usize,
    k: usize,
    cfg: &GaConfig,
    fitness: &Fitness<'_>,
    rng: &mut RngStream,
    observe: &mut dyn FnMut(&GaPopulation),
) -> Result<GaPopulation> {
    cfg.validate()?;
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("GA needs 1 <= K <= N-1, got K={k} N={n}")));
    }
    let mut initial = Vec::with_capacity(cfg.population_size);
    if let Some(snr) = cfg.dega_seed_snr_db {
        initial.push(dega_construct(n, k, snr)?);
    }
    while initial.len() < cfg.population_size {
        initial.push(random_construction(n, k, rng)?);
    }
    let mut pop = GaPopulation { n, k, generation: 0, members: score(initial, fitness)? };
    observe(&pop);

    for generation in 1..=cfg.generations {
        let children: Vec<Construction> = (0..cfg.population_size)
            .map(|j| breed(&pop, j, cfg, rng))
            .collect::<Result<_>>()?;
        // Children repeating a mask already in the population (or in an
        // earlier slot) add nothing and are dropped; without variation the
        // population is therefore carried over unchanged.
        let mut seen: HashSet<&Construction> = pop.constructions().collect();
        let novel: Vec<Construction> = children.iter().filter(|c| seen.insert(c)).cloned().collect();
        let mut contenders = pop.members[cfg.elitism_count..].to_vec();
        contenders.extend(score(novel, fitness)?);
        sort_desc(&mut contenders);
        let mut members = pop.members[..cfg.elitism_count].to_vec();
        members.extend(contenders.into_iter().take(cfg.population_size - cfg.elitism_count));
        sort_desc(&mut members);
        pop = GaPopulation { n, k, generation, members };
        observe(&pop);
    }
    Ok(pop)
}

fn score(constructions: Vec<Construction>, fitness: &Fitness<'_>) -> Result<Vec<GaMember>> {
    let values: Vec<f64> = constructions.par_iter().map(fitness).collect::<Result<_>>()?;
    let mut members: Vec<GaMember> = constructions
        .into_iter()
        .zip(values)
        .map(|(construction, fitness)| {
            if fitness.is_finite() {
                Ok(GaMember { construction, fitness })
            } else {
                Err(Error::InvalidParameter(format!("non-finite fitness {fitness}")))
            }
        })
        .collect::<Result<_>>()?;
    sort_desc(&mut members);
    Ok(members)
}

fn sort_desc(members: &mut [GaMember]) {
    members.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
}

fn breed(pop: &GaPopulation, j: usize, cfg: &GaConfig, rng: &mut RngStream) -> Result<Construction> {
    let parent = &pop.members[j].construction;
    let mut child = if rng.random_bool(cfg.crossover_rate) {
        let partner = &pop.members[tournament(pop, cfg.tournament_size, rng)].construction;
        let (a, b) = (parent.mask(), partner.mask());
        let mixed: Vec<bool> = a.iter().zip(b).map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y }).collect();
        let agreed: Vec<bool> = a.iter().zip(b).map(|(x, y)| x == y).collect();
        repair_mask_with_agreement(&mixed, pop.k, &agreed, rng)?
    } else {
        parent.clone()
    };
    for _ in 0..cfg.mutation_swaps {
        let frozen = child.frozen_indices();
        let info = child.info_indices();
        let f = frozen[rng.random_range(0..frozen.len())];
        let i = info[rng.random_range(0..info.len())];
        child.set(f, false);
        child.set(i, true);
    }
    Ok(child)
}

/// Index of the fittest of `size` uniformly drawn members.
fn tournament(pop: &GaPopulation, size: usize, rng: &mut RngStream) -> usize {
    // Members are sorted, so the smallest index is the fittest.
    (0..size).map(|_| rng.random_range(0..pop.members.len())).min().expect("size >= 1")
}

/// Uniformly random code with `k` information bits.
pub fn random_construction(n: usize, k: usize, rng: &mut RngStream) -> Result<Construction> {
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    Construction::from_frozen_set(n, &idx[..n - k])
}

/// Randomly flip entries until exactly `n - k` are frozen.
pub fn repair_mask(mask: &[bool], k: usize, rng: &mut RngStream) -> Result<Construction> {
    repair_mask_with_agreement(mask, k, &vec![false; mask.len()], rng)
}

/// [`repair_mask`], flipping entries marked `agreed` only once every other
/// candidate has been used.
pub fn repair_mask_with_agreement(
    mask: &[bool],
    k: usize,
    agreed: &[bool],
    rng: &mut RngStream,
) -> Result<Construction> {
    let n = mask.len();
    if agreed.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: agreed.len() });
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {n}")));
    }
    let target = n - k;
    let frozen = mask.iter().filter(|&&f| f).count();
    let mut out = mask.to_vec();
    if frozen != target {
        // Flip entries currently in the surplus state.
        let surplus_state = frozen > target;
        let mut free: Vec<usize> = (0..n).filter(|&i| mask[i] == surplus_state && !agreed[i]).collect();
        let mut fixed: Vec<usize> = (0..n).filter(|&i| mask[i] == surplus_state && agreed[i]).collect();
        free.shuffle(rng);
        fixed.shuffle(rng);
        for i in free.into_iter().chain(fixed).take(frozen.abs_diff(target)) {
            out[i] = !surplus_state;
        }
    }
    Construction::new(out)
}

/// One archive line per member: `K=<int> fitness=<real> mask=<hex>`.
pub fn write_archive<W: Write>(mut out: W, pop: &GaPopulation) -> Result<()> {
    for m in &pop.members {
        writeln!(out, "K={} fitness={} mask={}", pop.k, m.fitness, m.construction.to_hex())?;
    }
    Ok(())
}

/// Entry of a population archive.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveEntry {
    pub k: usize,
    pub fitness: f64,
    pub construction: Construction,
}

pub fn parse_archive(text: &str, n: usize) -> Result<Vec<ArchiveEntry>> {
    let mut entries = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse(format!("archive line {}: {m}", no + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [k, fitness, mask] = fields.as_slice() else {
            return Err(err(format!("expected 3 fields, got {}", fields.len())));
        };
        let value = |field: &str, key: &str| -> Result<String> {
            field
                .strip_prefix(key)
                .map(str::to_owned)
                .ok_or_else(|| err(format!("expected {key}..., got {field:?}")))
        };
        let k: usize = value(k, "K=")?.parse().map_err(|e| err(format!("bad K: {e}")))?;
        let fitness: f64 = value(fitness, "fitness=")?.parse().map_err(|e| err(format!("bad fitness: {e}")))?;
        let construction = Construction::from_hex(&value(mask, "mask=")?, n).map_err(|e| err(e.to_string()))?;
        if construction.info_len() != k {
            return Err(err(format!("mask has K = {}, line says {k}", construction.info_len())));
        }
        entries.push(ArchiveEntry { k, fitness, construction });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_fitness(c: &Construction) -> Result<f64> {
        // Prefers freezing low indices.
        Ok(c.frozen_indices().iter().map(|&i| (c.n() - i) as f64).sum())
    }

    #[test]
    fn repair_leaves_valid_masks_alone() {
        let mut rng = RngStream::new(0, 0);
        let mask = [true, false, true, false];
        assert_eq!(repair_mask(&mask, 2, &mut rng).unwrap().mask(), &mask);
    }

    #[test]
    fn repair_all_frozen_to_all_info() {
        let mut rng = RngStream::new(0, 0);
        assert_eq!(repair_mask(&[true; 8], 8, &mut rng).unwrap().mask(), &[false; 8]);
    }

    #[test]
    fn repair_prefers_disagreeing_entries() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..100 {
            let mask = [true, true, true, false];
            let agreed = [true, false, true, false];
            let c = repair_mask_with_agreement(&mask, 2, &agreed, &mut rng).unwrap();
            assert_eq!(c.mask(), &[true, false, true, false]);
        }
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig { population_size: 1, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { elitism_count: 32, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { crossover_rate: 1.5, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_generations_scores_initial_population() {
        let cfg = GaConfig { generations: 0, population_size: 6, ..GaConfig::default() };
        let pop = ga_evolve(8, 4, &cfg, &count_fitness, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(pop.generation, 0);
        assert_eq!(pop.members.len(), 6);
        for m in &pop.members {
            assert_eq!(m.fitness, count_fitness(&m.construction).unwrap());
        }
        assert!(pop.members.windows(2).all(|w| w[0].fitness >= w[1].fitness));
    }

    #[test]
    fn dega_seed_is_included() {
        let cfg = GaConfig { generations: 0, population_size: 4, dega_seed_snr_db: Some(1.0), ..GaConfig::default() };
        let pop = ga_evolve(16, 8, &cfg, &count_fitness, &mut RngStream::new(3, 0)).unwrap();
        let dega = dega_construct(16, 8, 1.0).unwrap();
        assert!(pop.constructions().any(|c| *c == dega));
    }

    #[test]
    fn rejects_degenerate_k() {
        let cfg = GaConfig::default();
        assert!(ga_evolve(8, 0, &cfg, &count_fitness, &mut RngStream::new(0, 0)).is_err());
        assert!(ga_evolve(8, 8, &cfg, &count_fitness, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let cfg = GaConfig { generations: 2, population_size: 4, ..GaConfig::default() };
        let pop = ga_evolve(16, 5, &cfg, &count_fitness, &mut RngStream::new(4, 0)).unwrap();
        let mut buf = Vec::new();
        write_archive(&mut buf, &pop).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.starts_with("K=5 fitness=") && l.contains(" mask=")));
        let entries = parse_archive(&text, 16).unwrap();
        assert_eq!(entries.len(), 4);
        for (e, m) in entries.iter().zip(&pop.members) {
            assert_eq!(e.construction, m.construction);
            assert_eq!(e.fitness, m.fitness);
        }
    }

    #[test]
    fn archive_errors_name_the_line() {
        let err = parse_archive("K=15 fitness=0.5 mask=0001\nK=14 fitness=x mask=0003\n", 16).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_archive("K=3 fitness=0.5 mask=0001\n", 16).is_err());
    }
}
