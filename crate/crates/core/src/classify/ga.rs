use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::nn::{nearest, Labeled, ThresholdSet};
use crate::error::{Error, Result};
use crate::eval::metrics;

#[derive(Debug, Clone, PartialEq)]
pub struct GaParams {
    pub population: usize,
    /// Per-gene probability of a Gaussian perturbation.
    pub mutation_rate: f64,
    /// Probability that a pair of parents is recombined.
    pub crossover_rate: f64,
    pub generations: usize,
    /// Best individuals copied unchanged into the next generation.
    pub elitism: usize,
    /// Mutation standard deviation as a fraction of the gene range.
    pub mutation_scale: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 200,
            mutation_rate: 0.15,
            crossover_rate: 0.7,
            generations: 1000,
            elitism: 2,
            mutation_scale: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub thresholds: ThresholdSet,
    pub best_fitness: f64,
    /// Best fitness in the population after each generation (index 0 is the
    /// initial population).
    pub history: Vec<f64>,
}

/// Validation item reduced to what threshold search needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationMatch {
    pub truth: String,
    pub neighbor_label: String,
    pub distance: f64,
}

/// Micro-averaged F-measure of thresholded nearest-neighbor predictions.
/// `class_of[i]` indexes `genome` for item `i`.
fn fitness(genome: &[f64], items: &[ValidationMatch], class_of: &[usize]) -> f64 {
    let (mut accepted, mut correct) = (0u64, 0u64);
    for (item, &c) in items.iter().zip(class_of) {
        if item.distance <= genome[c] {
            accepted += 1;
            correct += (item.neighbor_label == item.truth) as u64;
        }
    }
    metrics(correct, accepted, items.len() as u64)
        .expect("counts are consistent")
        .f_measure
}

/// Real-coded GA over one threshold per class in `[0, max distance]`, with
/// rank selection, arithmetic crossover, Gaussian mutation and elitism.
/// The nearest neighbor of every validation item is computed once up front.
pub fn ga_optimize_thresholds(train: &[Labeled], validation: &[Labeled], params: &GaParams) -> Result<GaOutcome> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::EmptyInput("threshold search needs training and validation items"));
    }
    let classes: BTreeSet<&str> = train.iter().map(|(l, _)| l.as_str()).collect();
    let items = validation
        .par_iter()
        .map(|(truth, f)| {
            nearest(f, train).map(|m| ValidationMatch {
                truth: truth.clone(),
                neighbor_label: m.label,
                distance: m.distance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<String> = classes.into_iter().map(str::to_string).collect();
    ga_optimize_matches(&items, &classes, params)
}

/// Threshold search on precomputed nearest-neighbor matches.
pub fn ga_optimize_matches(items: &[ValidationMatch], classes: &[String], params: &GaParams) -> Result<GaOutcome> {
    if items.is_empty() || classes.is_empty() {
        return Err(Error::EmptyInput("threshold search needs validation matches and classes"));
    }
    if params.population < 2 || params.elitism > params.population {
        return Err(Error::InvalidParameter("population must be >= 2 and hold the elite".into()));
    }
    if !(0.0..=1.0).contains(&params.mutation_rate) || !(0.0..=1.0).contains(&params.crossover_rate) {
        return Err(Error::InvalidParameter("GA rates must lie in [0, 1]".into()));
    }
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let class_of = items
        .iter()
        .map(|m| {
            index
                .get(m.neighbor_label.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidLabel(format!("neighbor label {:?} is not a class", m.neighbor_label)))
        })
        .collect::<Result<Vec<_>>>()?;
    // unreachable distances (disjoint supports) would swamp the range
    let max = items
        .iter()
        .map(|m| m.distance)
        .filter(|d| d.is_finite() && *d < 1e300)
        .fold(0.0, f64::max);
    let range = if max > 0.0 { max } else { 1.0 };

    let genes = classes.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.mutation_scale * range).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut pop: Vec<Vec<f64>> = (0..params.population)
        .map(|i| {
            if i == 0 {
                // accept-everything individual
                vec![range; genes]
            } else {
                (0..genes).map(|_| rng.gen_range(0.0..=range)).collect()
            }
        })
        .collect();
    let eval = |pop: &[Vec<f64>]| -> Vec<f64> { pop.par_iter().map(|g| fitness(g, items, &class_of)).collect() };
    let mut fit = eval(&pop);
    let mut history = Vec::with_capacity(params.generations + 1);

    let n = params.population;
    // linear rank weights: best gets n, worst gets 1
    let rank_total = (n * (n + 1) / 2) as f64;
    for generation in 0..=params.generations {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]).then(a.cmp(&b)));
        history.push(fit[order[0]]);
        if generation == params.generations {
            let best = &pop[order[0]];
            let thresholds = ThresholdSet::new(classes.iter().cloned().zip(best.iter().copied()).collect())?;
            return Ok(GaOutcome {
                thresholds,
                best_fitness: fit[order[0]],
                history,
            });
        }

        let pick = |rng: &mut ChaCha8Rng| {
            let mut t = rng.gen_range(0.0..rank_total);
            for (rank, &i) in order.iter().enumerate() {
                t -= (n - rank) as f64;
                if t < 0.0 {
                    return i;
                }
            }
            order[n - 1]
        };
        let mut next: Vec<Vec<f64>> = order[..params.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..params.elitism].iter().map(|&i| fit[i]).collect();
        while next.len() < n {
            let (a, b) = (pick(&mut rng), pick(&mut rng));
            let (mut c1, mut c2) = (pop[a].clone(), pop[b].clone());
            if rng.gen_bool(params.crossover_rate) {
                for g in 0..genes {
                    let alpha: f64 = rng.gen();
                    c1[g] = alpha * pop[a][g] + (1.0 - alpha) * pop[b][g];
                    c2[g] = (1.0 - alpha) * pop[a][g] + alpha * pop[b][g];
                }
            }
            for child in [&mut c1, &mut c2] {
                for g in child.iter_mut() {
                    if rng.gen_bool(params.mutation_rate) {
                        *g = (*g + noise.sample(&mut rng)).clamp(0.0, range);
                    }
                }
            }
            next.push(c1);
            if next.len() < n {
                next.push(c2);
            }
        }
        let fresh = eval(&next[params.elitism..]);
        next_fit.extend(fresh);
        pop = next;
        fit = next_fit;
    }
    unreachable!("the loop returns after the last generation")
}
