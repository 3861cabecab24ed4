//! Deterministic multi-step evolution and the finite-population sampler
//! that mirrors it.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::simplex::{SimplexVector, DEFAULT_TOL};
use crate::tensor::{evolve, validate_tensor, CubicTensor};

/// Distributions at consecutive integer times, starting at `start_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub start_time: i64,
    pub states: Vec<SimplexVector>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn at(&self, time: i64) -> Option<&SimplexVector> {
        let offset = usize::try_from(time - self.start_time).ok()?;
        self.states.get(offset)
    }

    pub fn last(&self) -> &SimplexVector {
        self.states.last().expect("trajectory always holds x0")
    }
}

/// Applies [`evolve`] `horizon` times; the result has `horizon + 1` states.
pub fn iterate(t: &CubicTensor, x0: &SimplexVector, horizon: usize) -> Result<Trajectory> {
    if t.n() != x0.n() {
        return Err(Error::Dimension {
            left: t.n(),
            right: x0.n(),
        });
    }
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0.clone());
    for _ in 0..horizon {
        let next = evolve(t, states.last().unwrap())?;
        states.push(next);
    }
    Ok(Trajectory {
        start_time: 0,
        states,
    })
}

fn frequencies(counts: &[u64], population: usize) -> SimplexVector {
    let probs = counts
        .iter()
        .map(|&c| c as f64 / population as f64)
        .collect();
    SimplexVector::from_contraction(probs)
}

/// Simulates a population of `population` individuals for `horizon`
/// generations and returns the empirical distribution of every generation.
///
/// Generation 0 is an i.i.d. sample from `x0`. Each offspring of the next
/// generation picks three parents independently (with replacement) from the
/// current population and draws its state from the row `p[i][j][k][.]`.
pub fn monte_carlo_trajectory(
    t: &CubicTensor,
    x0: &SimplexVector,
    horizon: usize,
    population: usize,
    seed: u64,
) -> Result<Vec<SimplexVector>> {
    if population == 0 {
        return Err(param("population", "must be at least 1"));
    }
    let n = t.n();
    if n != x0.n() {
        return Err(Error::Dimension {
            left: n,
            right: x0.n(),
        });
    }
    let report = validate_tensor(t, DEFAULT_TOL);
    if let Some(v) = report.violations.first() {
        return Err(Error::Tensor(v.to_string()));
    }
    let offspring: Vec<WeightedIndex<f64>> = t
        .rows()
        .map(|(_, row)| WeightedIndex::new(row).map_err(|e| Error::Tensor(e.to_string())))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; n];
    let initial = WeightedIndex::new(x0.probs()).map_err(|e| Error::Distribution(e.to_string()))?;
    for _ in 0..population {
        counts[initial.sample(&mut rng)] += 1;
    }
    let mut generations = vec![frequencies(&counts, population)];

    for _ in 0..horizon {
        let parents = WeightedIndex::new(&counts).expect("population is nonempty");
        let mut next = vec![0u64; n];
        for _ in 0..population {
            let i = parents.sample(&mut rng);
            let j = parents.sample(&mut rng);
            let k = parents.sample(&mut rng);
            let l = offspring[(i * n + j) * n + k].sample(&mut rng);
            next[l] += 1;
        }
        counts = next;
        generations.push(frequencies(&counts, population));
    }
    Ok(generations)
}
