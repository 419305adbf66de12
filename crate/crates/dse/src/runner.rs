//! The exploration loop shared by all methods: a Sobol prefix, then either
//! GP + EHVI proposals, NSGA-II generations or uniform random draws, with
//! the archive hypervolume recorded after every evaluation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use memexplorer_core::DesignPoint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ehvi::ehvi;
use crate::gp::{fit_surrogate, Gp, GpConfig};
use crate::nsga2::{crossover, mutate, rank_and_crowding, select_survivors, tournament, NsgaConfig};
use crate::pareto::{ArchiveEntry, Objectives, ParetoArchive};
use crate::problem::{Evaluation, FeasibilityMemo, Problem};
use crate::space::Config;
use crate::{substream, DseError, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ehvi,
    Nsga2,
    Random,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ehvi, Method::Nsga2, Method::Random];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ehvi => "ehvi",
            Method::Nsga2 => "nsga2",
            Method::Random => "random",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ehvi" => Ok(Method::Ehvi),
            "nsga2" => Ok(Method::Nsga2),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown method `{other}` (expected ehvi, nsga2 or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DseOptions {
    /// Total evaluations, including the shared prefix.
    pub budget: usize,
    /// Length of the shared Sobol prefix.
    pub n_init: usize,
    /// Candidates scored per EHVI proposal.
    pub pool_size: usize,
    /// Draw attempts allowed per wanted point before giving up.
    pub max_draws_per_point: usize,
    pub gp: GpConfig,
    pub nsga: NsgaConfig,
}

impl Default for DseOptions {
    fn default() -> Self {
        DseOptions {
            budget: 100,
            n_init: 20,
            pool_size: 2048,
            max_draws_per_point: 1000,
            gp: GpConfig::default(),
            nsga: NsgaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    /// 1-based evaluation index.
    pub step: usize,
    pub design_id: String,
    pub config: Config,
    pub eval: Evaluation,
    /// Archive hypervolume after this evaluation.
    pub hv_after: f64,
    /// The design had been evaluated before in this run.
    pub cached: bool,
    /// Seconds since the run started; informational only.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DseHistory {
    pub method: Method,
    pub seed: u64,
    pub n_init: usize,
    pub n_total: usize,
    pub entries: Vec<HistoryEntry>,
}

impl DseHistory {
    pub fn final_hv(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.hv_after)
    }
}

#[derive(Debug, Clone)]
pub struct DseRun {
    pub history: DseHistory,
    pub archive: ParetoArchive,
    /// Every distinct design evaluated, in first-evaluation order.
    pub evaluated: Vec<ArchiveEntry>,
    /// Whether the loop stopped early because no unevaluated feasible
    /// configuration could be found.
    pub exhausted: bool,
}

/// `n` distinct configurations that pass the feasibility filter and
/// evaluate successfully, taken in order from a scrambled Sobol sequence
/// snapped to the lattice.
pub fn sobol_init(problem: &Problem, n: usize, seed: u64) -> Result<Vec<Config>, DseError> {
    if n == 0 {
        return Err(DseError::Options("the initial sample needs at least one point".into()));
    }
    let dim = problem.space.dim();
    if dim > sobol_burley::NUM_DIMENSIONS as usize {
        return Err(DseError::Space(format!(
            "embedding has {dim} dimensions, more than the {} the Sobol generator supports",
            sobol_burley::NUM_DIMENSIONS
        )));
    }
    let scramble: u32 = substream(seed, Substream::Sobol).gen();
    let max_draws = n.saturating_mul(1000);
    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    for index in 0..max_draws {
        let x: Vec<f64> = (0..dim)
            .map(|k| f64::from(sobol_burley::sample(index as u32, k as u32, scramble)))
            .collect();
        let config = problem.space.snap(&x)?;
        if !seen.insert(config.clone()) {
            continue;
        }
        if problem.evaluate(&config).is_ok() {
            out.push(config);
            if out.len() == n {
                return Ok(out);
            }
        }
    }
    Err(DseError::SearchSpace(format!(
        "found only {} of {n} feasible configurations in {max_draws} Sobol draws \
         (TDP budget {:.1} W)",
        out.len(),
        problem.tdp_budget
    )))
}

/// Uniformly drawn, de-duplicated configurations accepted by `admissible`.
fn sample_pool<R: Rng + ?Sized>(
    problem: &Problem,
    admissible: &mut dyn FnMut(&Config) -> bool,
    pool_size: usize,
    max_draws: usize,
    rng: &mut R,
) -> Vec<Config> {
    let mut pool = Vec::with_capacity(pool_size);
    let mut seen = HashSet::new();
    for _ in 0..max_draws {
        if pool.len() == pool_size {
            break;
        }
        let c = problem.space.sample(rng);
        if admissible(&c) && seen.insert(c.clone()) {
            pool.push(c);
        }
    }
    pool
}

/// Scores a pool of candidate configurations by EHVI under the surrogates
/// and returns the best one (ties: lowest embedding in lexicographic
/// order). `admissible` decides which uniform draws may enter the pool;
/// callers pass "feasible and not yet evaluated". `None` when no candidate
/// can be found.
pub fn propose_next<R: Rng + ?Sized>(
    surrogates: &[Gp; 2],
    problem: &Problem,
    archive: &ParetoArchive,
    admissible: &mut dyn FnMut(&Config) -> bool,
    pool_size: usize,
    rng: &mut R,
) -> Result<Option<Config>, DseError> {
    let pool = sample_pool(problem, admissible, pool_size, pool_size.saturating_mul(1000), rng);
    let front = archive.objectives();
    let mut scored = Vec::with_capacity(pool.len());
    for c in pool {
        let x = problem.space.encode_config(&c)?;
        let (m0, v0) = surrogates[0].predict(&x);
        let (m1, v1) = surrogates[1].predict(&x);
        let score = ehvi(&[m0, m1], &[v0.sqrt(), v1.sqrt()], &front, archive.reference)?;
        scored.push((score, x, c));
    }
    Ok(best_candidate(scored))
}

/// Highest score; ties go to the lexicographically lowest embedding.
fn best_candidate(scored: Vec<(f64, Vec<f64>, Config)>) -> Option<Config> {
    let mut best: Option<(f64, Vec<f64>, Config)> = None;
    for (score, x, c) in scored {
        let replace = match &best {
            None => true,
            Some((s, bx, _)) => score > *s || (score == *s && lexicographically_less(&x, bx)),
        };
        if replace {
            best = Some((score, x, c));
        }
    }
    best.map(|(_, _, c)| c)
}

fn lexicographically_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

struct Engine<'a> {
    problem: &'a Problem,
    opts: &'a DseOptions,
    archive: ParetoArchive,
    entries: Vec<HistoryEntry>,
    /// `None` marks configurations whose evaluation failed.
    cache: HashMap<Config, Option<(DesignPoint, Evaluation)>>,
    evaluated: Vec<ArchiveEntry>,
    memo: FeasibilityMemo,
    start: Instant,
}

impl<'a> Engine<'a> {
    fn new(problem: &'a Problem, opts: &'a DseOptions) -> Self {
        Engine {
            problem,
            opts,
            archive: ParetoArchive::new(problem.reference()),
            entries: Vec::new(),
            cache: HashMap::new(),
            evaluated: Vec::new(),
            memo: FeasibilityMemo::new(),
            start: Instant::now(),
        }
    }

    fn done(&self) -> bool {
        self.entries.len() >= self.opts.budget
    }

    /// Evaluates `config` (or reuses its cached result) and records one
    /// step. Returns the objectives, or `None` if the configuration turned
    /// out to be infeasible; that consumes no budget.
    fn record(&mut self, config: &Config) -> Option<Objectives> {
        let cached = self.cache.contains_key(config);
        if !cached {
            let result = self.problem.evaluate(config).ok();
            if let Some((design, eval)) = &result {
                self.evaluated.push(ArchiveEntry::new(config.clone(), design.clone(), *eval));
            }
            self.cache.insert(config.clone(), result);
        }
        let (design, eval) = self.cache[config].clone()?;
        let entry = ArchiveEntry::new(config.clone(), design, eval);
        let design_id = entry.design_id.clone();
        self.archive.insert(entry);
        self.entries.push(HistoryEntry {
            step: self.entries.len() + 1,
            design_id,
            config: config.clone(),
            eval,
            hv_after: self.archive.hypervolume(),
            cached,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        });
        Some(eval.objectives())
    }

    fn is_evaluated(&self, config: &Config) -> bool {
        self.cache.contains_key(config)
    }

    fn max_draws(&self) -> usize {
        self.opts.max_draws_per_point.max(1)
    }

    /// Uniform feasible draw.
    fn draw_feasible<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<Config> {
        for _ in 0..self.max_draws() {
            let c = self.problem.space.sample(rng);
            if self.memo.is_feasible(self.problem, &c) {
                return Some(c);
            }
        }
        None
    }

    fn run_random(&mut self, seed: u64) -> bool {
        let mut rng = substream(seed, Substream::Random);
        let mut failures = 0;
        while !self.done() {
            let Some(c) = self.draw_feasible(&mut rng) else {
                return true;
            };
            if self.record(&c).is_none() {
                failures += 1;
                if failures > self.max_draws() {
                    return true;
                }
            }
        }
        false
    }

    fn run_ehvi(&mut self, seed: u64) -> Result<bool, DseError> {
        let mut gp_rng = substream(seed, Substream::GpRestarts);
        let mut pool_rng = substream(seed, Substream::Pool);
        while !self.done() {
            let x: Vec<Vec<f64>> = self
                .evaluated
                .iter()
                .map(|e| self.problem.space.encode_config(&e.config))
                .collect::<Result<_, _>>()?;
            let objs: Vec<Objectives> = self.evaluated.iter().map(ArchiveEntry::objectives).collect();
            let y0: Vec<f64> = objs.iter().map(|o| o[0]).collect();
            let y1: Vec<f64> = objs.iter().map(|o| o[1]).collect();
            let surrogates = [
                fit_surrogate(&x, &y0, &self.opts.gp, &mut gp_rng)?,
                fit_surrogate(&x, &y1, &self.opts.gp, &mut gp_rng)?,
            ];
            let mut proposed = false;
            for _ in 0..self.max_draws() {
                let (cache, memo, problem) = (&self.cache, &mut self.memo, self.problem);
                let mut admissible = |c: &Config| memo.is_feasible(problem, c) && !cache.contains_key(c);
                let next = propose_next(
                    &surrogates,
                    self.problem,
                    &self.archive,
                    &mut admissible,
                    self.opts.pool_size,
                    &mut pool_rng,
                )?;
                let Some(next) = next else {
                    return Ok(true);
                };
                if self.record(&next).is_some() {
                    proposed = true;
                    break;
                }
            }
            if !proposed {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn breed<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        population: &[Config],
        rank: &[usize],
        crowd: &[f64],
    ) -> Option<Config> {
        let nsga = &self.opts.nsga;
        let genes = self.problem.space.genes().len();
        let p_mut = nsga.mutation_prob.unwrap_or(1.0 / genes as f64);
        for _ in 0..nsga.max_repair.max(1) {
            let a = &population[tournament(rng, rank, crowd)];
            let b = &population[tournament(rng, rank, crowd)];
            let mut child = crossover(rng, a, b, nsga.crossover_prob);
            mutate(rng, &self.problem.space, &mut child, p_mut);
            if self.cache.get(&child).is_some_and(Option::is_none) {
                continue;
            }
            if self.is_evaluated(&child) || self.memo.is_feasible(self.problem, &child) {
                return Some(child);
            }
        }
        self.draw_feasible(rng)
    }

    fn run_nsga2(&mut self, seed: u64) -> bool {
        let mut rng = substream(seed, Substream::Nsga2);
        let pop_size = self.opts.nsga.population.max(2);
        let mut population: Vec<(Config, Objectives)> = self
            .entries
            .iter()
            .map(|e| (e.config.clone(), e.eval.objectives()))
            .collect();
        while !self.done() {
            let configs: Vec<Config> = population.iter().map(|p| p.0.clone()).collect();
            let objs: Vec<Objectives> = population.iter().map(|p| p.1).collect();
            let (rank, crowd) = rank_and_crowding(&objs);
            let mut offspring = Vec::new();
            let mut failures = 0;
            while offspring.len() < pop_size && !self.done() {
                let Some(child) = self.breed(&mut rng, &configs, &rank, &crowd) else {
                    return true;
                };
                match self.record(&child) {
                    Some(y) => offspring.push((child, y)),
                    None => {
                        failures += 1;
                        if failures > self.max_draws() {
                            return true;
                        }
                    }
                }
            }
            population.extend(offspring);
            let objs: Vec<Objectives> = population.iter().map(|p| p.1).collect();
            let keep = select_survivors(&objs, pop_size);
            population = keep.into_iter().map(|i| population[i].clone()).collect();
        }
        false
    }
}

/// Runs one method for one seed. Every method starts from the same
/// `n_init`-point Sobol prefix for a given seed.
pub fn run_dse(problem: &Problem, method: Method, seed: u64, opts: &DseOptions) -> Result<DseRun, DseError> {
    if opts.n_init == 0 || opts.budget < opts.n_init {
        return Err(DseError::Options(format!(
            "budget ({}) must be at least the initial sample size ({}), which must be positive",
            opts.budget, opts.n_init
        )));
    }
    let mut engine = Engine::new(problem, opts);
    for c in sobol_init(problem, opts.n_init, seed)? {
        if engine.record(&c).is_none() {
            return Err(DseError::SearchSpace(format!(
                "initial configuration {c} failed to evaluate"
            )));
        }
    }
    let exhausted = match method {
        Method::Random => engine.run_random(seed),
        Method::Ehvi => engine.run_ehvi(seed)?,
        Method::Nsga2 => engine.run_nsga2(seed),
    };
    Ok(DseRun {
        history: DseHistory {
            method,
            seed,
            n_init: opts.n_init,
            n_total: opts.budget,
            entries: engine.entries,
        },
        archive: engine.archive,
        evaluated: engine.evaluated,
        exhausted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_the_lowest_embedding() {
        let c = |v: usize| Config(vec![v]);
        let scored = vec![
            (0.5, vec![0.0, 1.0], c(0)),
            (0.5, vec![0.0, 0.5], c(1)),
            (0.2, vec![0.0, 0.0], c(2)),
            (0.5, vec![1.0, 0.0], c(3)),
        ];
        assert_eq!(best_candidate(scored), Some(c(1)));
        let zeros = vec![(0.0, vec![1.0], c(0)), (0.0, vec![0.0], c(1))];
        assert_eq!(best_candidate(zeros), Some(c(1)));
        assert_eq!(best_candidate(Vec::new()), None);
    }

    #[test]
    fn higher_score_wins_regardless_of_order() {
        let c = |v: usize| Config(vec![v]);
        let scored = vec![(0.1, vec![0.0], c(0)), (0.3, vec![1.0], c(1)), (0.2, vec![0.5], c(2))];
        assert_eq!(best_candidate(scored), Some(c(1)));
    }
}
