//! False positive / false negative guarantees of threshold pruning.
//!
//! Each edge weight is modeled as `T` independent coin flips, with success
//! probability at least `p` inside a cluster and at most `q` across clusters.
//! With `X ~ Binomial(T, p)`, `delta` in `(0, 1]`:
//!
//! ```text
//! Pr[X <= (1 - delta) T p] <= exp(-T p delta^2 / 2)
//! Pr[X >= (1 + delta) T p] <= exp(-T p delta^2 / 3)
//! ```
//!
//! Taking `delta = alpha/q - 1` and a union bound over a foreign cluster `c`
//! gives the false positive bound `|c| exp(-T (q - alpha)^2 / (3q))`; taking
//! `delta = 1 - alpha/p` over the own cluster gives the false negative bound
//! `exp(-|c| T (p - alpha)^2 / (2p))`. The upper-tail form is only a valid
//! Chernoff bound for `delta <= 1`, so every evaluation reports whether its
//! `delta` is inside that range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::with_workers;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChernoffBounds {
    /// Bound on `Pr[X <= (1 - delta) T p]`.
    pub lower_tail: f64,
    /// Bound on `Pr[X >= (1 + delta) T p]`.
    pub upper_tail: f64,
}

pub fn chernoff_bounds(repetitions: usize, p: f64, delta: f64) -> Result<ChernoffBounds> {
    if repetitions == 0 {
        return Err(Error::Bounds("T must be at least 1".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Bounds(format!("p must lie in (0, 1], got {p}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Bounds(format!("delta must lie in (0, 1], got {delta}")));
    }
    let mu = repetitions as f64 * p;
    Ok(ChernoffBounds {
        lower_tail: (-mu * delta * delta / 2.0).exp(),
        upper_tail: (-mu * delta * delta / 3.0).exp(),
    })
}

/// A closed-form bound together with the Chernoff `delta` it was derived with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEval {
    pub value: f64,
    /// Infinite when `q = 0`.
    pub delta: f64,
    pub delta_in_range: bool,
}

fn check_common(repetitions: usize, alpha: f64, cluster_size: usize) -> Result<()> {
    if repetitions == 0 {
        return Err(Error::Bounds("T must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Bounds(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if cluster_size == 0 {
        return Err(Error::Bounds("cluster size must be at least 1".into()));
    }
    Ok(())
}

fn delta_ok(delta: f64) -> bool {
    delta > 0.0 && delta <= 1.0
}

/// Probability bound that a fixed word is connected to some member of a foreign
/// cluster of size `cluster_size`.
pub fn fp_bound(repetitions: usize, q: f64, alpha: f64, cluster_size: usize) -> Result<BoundEval> {
    check_common(repetitions, alpha, cluster_size)?;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Bounds(format!("q must lie in [0, 1), got {q}")));
    }
    if alpha <= q {
        return Err(Error::Bounds(format!(
            "alpha ({alpha}) must exceed q ({q}): with alpha <= q the upper-tail deviation delta = alpha/q - 1 is not positive"
        )));
    }
    if q == 0.0 {
        // no foreign collision can ever happen
        return Ok(BoundEval { value: 0.0, delta: f64::INFINITY, delta_in_range: false });
    }
    let delta = alpha / q - 1.0;
    let gap = q - alpha;
    let value = cluster_size as f64 * (-(repetitions as f64) * gap * gap / (3.0 * q)).exp();
    Ok(BoundEval { value, delta, delta_in_range: delta_ok(delta) })
}

/// Probability bound that a fixed word keeps no edge to its own cluster of size `cluster_size`.
pub fn fn_bound(repetitions: usize, p: f64, alpha: f64, cluster_size: usize) -> Result<BoundEval> {
    check_common(repetitions, alpha, cluster_size)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Bounds(format!("p must lie in (0, 1], got {p}")));
    }
    if alpha >= p {
        return Err(Error::Bounds(format!(
            "alpha ({alpha}) must be below p ({p}): with alpha >= p the lower-tail deviation delta = 1 - alpha/p is not positive"
        )));
    }
    let delta = 1.0 - alpha / p;
    let gap = p - alpha;
    let value = (-(cluster_size as f64) * repetitions as f64 * gap * gap / (2.0 * p)).exp();
    Ok(BoundEval { value, delta, delta_in_range: delta_ok(delta) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeModelParams {
    pub p: f64,
    pub q: f64,
    pub cluster_sizes: Vec<usize>,
    pub repetitions: usize,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

impl EdgeModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Bounds(m));
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(0.0..1.0).contains(&self.q) {
            return bad(format!("q must lie in [0, 1), got {}", self.q));
        }
        if self.p <= self.q {
            return bad(format!("p ({}) must exceed q ({})", self.p, self.q));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.repetitions == 0 || self.trials == 0 {
            return bad("T and trials must be at least 1".into());
        }
        if self.cluster_sizes.is_empty() || self.cluster_sizes.contains(&0) {
            return bad("cluster sizes must be a non-empty list of positive sizes".into());
        }
        Ok(())
    }

    /// Per-trial generator, independent of the order trials are run in.
    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial as u64);
        rng
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrialCounts {
    /// (node, foreign cluster) pairs joined by a surviving edge.
    pub fp_events: u64,
    /// Nodes with no surviving edge into their own cluster.
    pub fn_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub fp_events: u64,
    pub fp_opportunities: u64,
    pub fn_events: u64,
    pub fn_opportunities: u64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub per_trial: Vec<TrialCounts>,
}

fn run_trial(params: &EdgeModelParams, cluster_of: &[usize], trial: usize) -> TrialCounts {
    let mut rng = params.trial_rng(trial);
    let n = cluster_of.len();
    let k = params.cluster_sizes.len();
    let threshold = params.alpha * params.repetitions as f64;
    // foreign[i * k + c]: node i kept an edge into cluster c
    let mut reached = vec![false; n * k];
    for i in 0..n {
        for j in i + 1..n {
            let same = cluster_of[i] == cluster_of[j];
            let prob = if same { params.p } else { params.q };
            let weight = (0..params.repetitions).filter(|_| rng.random_bool(prob)).count();
            if weight as f64 >= threshold {
                reached[i * k + cluster_of[j]] = true;
                reached[j * k + cluster_of[i]] = true;
            }
        }
    }
    let mut counts = TrialCounts::default();
    for (i, &own) in cluster_of.iter().enumerate() {
        for c in 0..k {
            if c != own {
                counts.fp_events += reached[i * k + c] as u64;
            } else if params.cluster_sizes[c] >= 2 && !reached[i * k + c] {
                counts.fn_events += 1;
            }
        }
    }
    counts
}

/// Monte-Carlo run of the pruning rule `weight >= alpha * T` on the coin-flip edge model.
pub fn simulate_edge_model(params: &EdgeModelParams, workers: usize) -> Result<Simulation> {
    params.validate()?;
    let cluster_of: Vec<usize> = params
        .cluster_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &size)| std::iter::repeat_n(c, size))
        .collect();
    let per_trial: Vec<TrialCounts> = with_workers(workers, || {
        (0..params.trials)
            .into_par_iter()
            .map(|t| run_trial(params, &cluster_of, t))
            .collect()
    })?;

    let n = cluster_of.len() as u64;
    let k = params.cluster_sizes.len() as u64;
    let trials = params.trials as u64;
    let fp_opportunities = n * (k - 1) * trials;
    let fn_nodes: u64 = params.cluster_sizes.iter().filter(|&&s| s >= 2).map(|&s| s as u64).sum();
    let fn_opportunities = fn_nodes * trials;
    let fp_events = per_trial.iter().map(|t| t.fp_events).sum();
    let fn_events = per_trial.iter().map(|t| t.fn_events).sum();
    let rate = |e: u64, n: u64| if n == 0 { 0.0 } else { e as f64 / n as f64 };
    Ok(Simulation {
        fp_events,
        fp_opportunities,
        fn_events,
        fn_opportunities,
        fp_rate: rate(fp_events, fp_opportunities),
        fn_rate: rate(fn_events, fn_opportunities),
        per_trial,
    })
}

/// Standard error of a binomial proportion estimated from `n` samples.
pub fn binomial_standard_error(rate: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (rate * (1.0 - rate) / n as f64).sqrt()
}

/// Number of standard errors of slack allowed when comparing a simulated rate to its bound.
pub const ENVELOPE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideReport {
    /// Cluster size the closed form was evaluated at.
    pub cluster_size: usize,
    pub bound: Option<BoundEval>,
    /// Error message when the closed form cannot be evaluated.
    pub bound_error: Option<String>,
    pub empirical_rate: f64,
    pub events: u64,
    pub opportunities: u64,
    pub standard_error: f64,
    pub margin: f64,
    /// `empirical_rate <= bound + margin`; `None` without a bound.
    pub within_envelope: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub inputs: EdgeModelParams,
    pub false_positive: SideReport,
    pub false_negative: SideReport,
    pub per_trial: Option<Vec<TrialCounts>>,
}

fn side(bound: Result<BoundEval>, cluster_size: usize, events: u64, opportunities: u64, rate: f64) -> SideReport {
    let standard_error = binomial_standard_error(rate, opportunities);
    let margin = ENVELOPE_SIGMAS * standard_error;
    let (bound, bound_error) = match bound {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    SideReport {
        cluster_size,
        within_envelope: bound.map(|b| rate <= b.value + margin),
        bound,
        bound_error,
        empirical_rate: rate,
        events,
        opportunities,
        standard_error,
        margin,
    }
}

/// Closed-form bounds next to simulated rates.
///
/// The false positive side is evaluated at the largest cluster (the bound grows
/// with `|c|`), the false negative side at the smallest cluster with at least two
/// members (the bound shrinks with `|c|`).
pub fn bounds_report(params: &EdgeModelParams, workers: usize, with_trials: bool) -> Result<BoundsReport> {
    let sim = simulate_edge_model(params, workers)?;
    let largest = params.cluster_sizes.iter().copied().max().unwrap_or(1);
    let smallest = params
        .cluster_sizes
        .iter()
        .copied()
        .filter(|&s| s >= 2)
        .min()
        .unwrap_or(1);
    let fp = fp_bound(params.repetitions, params.q, params.alpha, largest);
    let fneg = fn_bound(params.repetitions, params.p, params.alpha, smallest);
    Ok(BoundsReport {
        inputs: params.clone(),
        false_positive: side(fp, largest, sim.fp_events, sim.fp_opportunities, sim.fp_rate),
        false_negative: side(fneg, smallest, sim.fn_events, sim.fn_opportunities, sim.fn_rate),
        per_trial: with_trials.then_some(sim.per_trial),
    })
}
