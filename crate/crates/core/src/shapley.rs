//! Shapley values of cooperative games.
//!
//! [`exact_shapley`] enumerates every coalition once and forms the weighted
//! sum of marginal contributions. [`mc_shapley`] averages marginal
//! contributions over random player orderings; each ordering is drawn from
//! its own substream so the estimate does not depend on scheduling.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{Coalition, MAX_PLAYERS};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Largest player count accepted by [`exact_shapley`].
pub const EXACT_MAX_PLAYERS: usize = 20;
/// Largest player count accepted by [`mc_shapley`].
pub const MC_MAX_PLAYERS: usize = MAX_PLAYERS;

const EXACT_CHUNK: usize = 256;
const MC_BLOCK: usize = 1024;

/// A characteristic function `v(S)` over `num_players()` players.
///
/// `evaluate` must be deterministic for a given coalition. Implementations
/// that carry internal randomness (background draws) may use the sample
/// index passed to [`ValueFunction::evaluate_chain`] to pair every
/// coalition of one Monte-Carlo sample with the same draw.
pub trait ValueFunction: Sync {
    fn num_players(&self) -> usize;

    fn evaluate(&self, coalition: Coalition) -> Result<f64>;

    fn evaluate_many(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        coalitions.iter().map(|&c| self.evaluate(c)).collect()
    }

    /// Evaluates the nested prefix chain of one Monte-Carlo sample.
    fn evaluate_chain(&self, chain: &[Coalition], _sample: u64) -> Result<Vec<f64>> {
        self.evaluate_many(chain)
    }

    /// `false` makes the engine serialize all calls.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<V: ValueFunction + ?Sized> ValueFunction for &V {
    fn num_players(&self) -> usize {
        (**self).num_players()
    }
    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        (**self).evaluate(coalition)
    }
    fn evaluate_many(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        (**self).evaluate_many(coalitions)
    }
    fn evaluate_chain(&self, chain: &[Coalition], sample: u64) -> Result<Vec<f64>> {
        (**self).evaluate_chain(chain, sample)
    }
    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

/// Adapts a closure into a [`ValueFunction`].
pub struct FnGame<F> {
    n: usize,
    f: F,
}

impl<F> FnGame<F>
where
    F: Fn(Coalition) -> f64 + Sync,
{
    pub fn new(n: usize, f: F) -> Self {
        FnGame { n, f }
    }
}

impl<F> ValueFunction for FnGame<F>
where
    F: Fn(Coalition) -> f64 + Sync,
{
    fn num_players(&self) -> usize {
        self.n
    }
    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        Ok((self.f)(coalition))
    }
}

/// A game given by its full table of coalition values, indexed by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || n > EXACT_MAX_PLAYERS {
            return Err(Error::PlayerCountExceeded {
                n,
                max: EXACT_MAX_PLAYERS,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::config(format!(
                "table game over {n} players needs {} values, got {}",
                1usize << n,
                values.len()
            )));
        }
        Ok(TableGame { n, values })
    }

    /// Values uniform in `[0, 1)` drawn from a seeded substream.
    pub fn random(n: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = rng::substream(seed, Domain::GAME, n as u64);
        let values = (0..1usize << n).map(|_| rng.gen::<f64>()).collect();
        TableGame { n, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl ValueFunction for TableGame {
    fn num_players(&self) -> usize {
        self.n
    }
    fn evaluate(&self, coalition: Coalition) -> Result<f64> {
        Ok(self.values[coalition.members() as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// Per-player Shapley estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `v(N)`, or its sample mean for stochastic games.
    pub v_full: f64,
    /// `v(∅)`, or its sample mean for stochastic games.
    pub v_empty: f64,
    /// Standard error of `Σφ`; zero for exact results.
    pub total_std_error: f64,
    pub method: Method,
    pub num_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_class: Option<usize>,
}

impl Attribution {
    pub fn num_players(&self) -> usize {
        self.values.len()
    }

    pub fn with_feature_names(mut self, names: &[String]) -> Self {
        assert_eq!(names.len(), self.values.len());
        self.feature_names = names.to_vec();
        self
    }
}

/// `Σφ − (v(N) − v(∅))`.
pub fn efficiency_gap(a: &Attribution) -> f64 {
    a.values.iter().sum::<f64>() - (a.v_full - a.v_empty)
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("player-{i}")).collect()
}

fn checked(coalition: Coalition, value: f64) -> Result<f64> {
    if value.is_finite() && !value.is_subnormal() {
        Ok(value)
    } else {
        Err(Error::InvalidValue {
            coalition: coalition.members(),
            value,
        })
    }
}

/// `ln k!` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `|S|!(n−|S|−1)!/n!` for every coalition size `|S| = 0..n`.
pub fn shapley_weights(n: usize) -> Vec<f64> {
    let lf = log_factorials(n);
    (0..n).map(|s| (lf[s] + lf[n - s - 1] - lf[n]).exp()).collect()
}

pub fn exact_shapley<V: ValueFunction + ?Sized>(v: &V) -> Result<Attribution> {
    exact_shapley_capped(v, EXACT_MAX_PLAYERS)
}

/// [`exact_shapley`] with a caller-chosen player cap.
pub fn exact_shapley_capped<V: ValueFunction + ?Sized>(v: &V, cap: usize) -> Result<Attribution> {
    let n = v.num_players();
    let cap = cap.min(usize::BITS as usize - 2).min(MAX_PLAYERS);
    if n == 0 || n > cap {
        return Err(Error::PlayerCountExceeded { n, max: cap });
    }
    let table = evaluate_all(v, n)?;
    let weights = shapley_weights(n);
    let total = table.len();

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bit = 1usize << i;
            let mut acc = 0.0;
            for mask in 0..total {
                if mask & bit == 0 {
                    let s = mask.count_ones() as usize;
                    acc += weights[s] * (table[mask | bit] - table[mask]);
                }
            }
            acc
        })
        .collect();

    Ok(Attribution {
        feature_names: default_names(n),
        std_errors: vec![0.0; n],
        v_full: table[total - 1],
        v_empty: table[0],
        values,
        total_std_error: 0.0,
        method: Method::Exact,
        num_samples: 0,
        target_class: None,
    })
}

/// `v(S)` for every `S ⊆ N`, indexed by bitmask. Each coalition is evaluated once.
fn evaluate_all<V: ValueFunction + ?Sized>(v: &V, n: usize) -> Result<Vec<f64>> {
    let total = 1usize << n;
    let chunk = |start: usize| -> Result<Vec<f64>> {
        let end = (start + EXACT_CHUNK).min(total);
        let coalitions: Vec<Coalition> = (start..end)
            .map(|m| Coalition::from_bits_unchecked(m as u64, n))
            .collect();
        let vals = v.evaluate_many(&coalitions)?;
        if vals.len() != coalitions.len() {
            return Err(Error::config("value function returned the wrong number of values"));
        }
        coalitions.iter().zip(vals).map(|(&c, x)| checked(c, x)).collect()
    };
    let starts: Vec<usize> = (0..total).step_by(EXACT_CHUNK).collect();
    let parts: Vec<Vec<f64>> = if v.concurrent() {
        starts.into_par_iter().map(chunk).collect::<Result<_>>()?
    } else {
        starts.into_iter().map(chunk).collect::<Result<_>>()?
    };
    Ok(parts.concat())
}

struct PermutationSample {
    marginals: Vec<f64>,
    v_empty: f64,
    v_full: f64,
}

fn permutation_sample<V: ValueFunction + ?Sized>(v: &V, n: usize, seed: u64, index: u64) -> Result<PermutationSample> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::substream(seed, Domain::PERMUTATION, index));

    let mut chain = Vec::with_capacity(n + 1);
    let mut current = Coalition::empty(n);
    chain.push(current);
    for &player in &order {
        current = current.with(player);
        chain.push(current);
    }
    let vals = v.evaluate_chain(&chain, index)?;
    if vals.len() != chain.len() {
        return Err(Error::config("value function returned the wrong number of values"));
    }
    for (&c, &x) in chain.iter().zip(&vals) {
        checked(c, x)?;
    }
    let mut marginals = vec![0.0; n];
    for (k, &player) in order.iter().enumerate() {
        marginals[player] = vals[k + 1] - vals[k];
    }
    Ok(PermutationSample {
        marginals,
        v_empty: vals[0],
        v_full: vals[n],
    })
}

/// Running mean and sum of squared deviations.
#[derive(Clone, Default)]
struct Welford {
    count: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = (self.m2 / (self.count - 1) as f64).max(0.0);
        (var / self.count as f64).sqrt()
    }
}

/// Monte-Carlo permutation estimate with `num_samples` random orderings.
pub fn mc_shapley<V: ValueFunction + ?Sized>(v: &V, num_samples: usize, seed: u64) -> Result<Attribution> {
    let n = v.num_players();
    if n == 0 || n > MC_MAX_PLAYERS {
        return Err(Error::TooManyFeatures(n));
    }
    if num_samples < 2 {
        return Err(Error::InsufficientSamples(num_samples));
    }

    let mut stats = vec![Welford::default(); n];
    let mut total = Welford::default();
    let mut empty_sum = 0.0;
    let mut full_sum = 0.0;

    let mut start = 0usize;
    while start < num_samples {
        let end = (start + MC_BLOCK).min(num_samples);
        let sample = |p: usize| permutation_sample(v, n, seed, p as u64);
        let block: Vec<PermutationSample> = if v.concurrent() {
            (start..end).into_par_iter().map(sample).collect::<Result<_>>()?
        } else {
            (start..end).map(sample).collect::<Result<_>>()?
        };
        for s in &block {
            for (acc, &m) in stats.iter_mut().zip(&s.marginals) {
                acc.push(m);
            }
            total.push(s.v_full - s.v_empty);
            empty_sum += s.v_empty;
            full_sum += s.v_full;
        }
        start = end;
    }

    Ok(Attribution {
        feature_names: default_names(n),
        values: stats.iter().map(|s| s.mean).collect(),
        std_errors: stats.iter().map(Welford::std_error).collect(),
        v_full: full_sum / num_samples as f64,
        v_empty: empty_sum / num_samples as f64,
        total_std_error: total.std_error(),
        method: Method::MonteCarlo,
        num_samples,
        target_class: None,
    })
}
