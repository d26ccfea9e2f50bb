//! Finite offline datasets: seeded trajectory sampling and empirical window
//! statistics.
//!
//! Trajectory `i` of a dataset is drawn from its own ChaCha8 stream: the
//! generator is `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(i)`. Each
//! categorical draw takes one `f64` uniform in `[0, 1)` (the `rand` 53-bit
//! conversion) and picks the first outcome whose cumulative probability
//! (converted to `f64`) exceeds it. A dataset therefore does not depend on how
//! sampling is split across threads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::observation::{crop, ObservationModel, ObservedSegment, SegmentDistribution, Trajectory};
use crate::policy::Policy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset<S> {
    pub behavior: String,
    pub seed: u64,
    pub trajectories: Vec<Trajectory<S>>,
}

impl<S: Scalar> OfflineDataset<S> {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn pick<'a, T, S: Scalar>(rng: &mut ChaCha8Rng, items: impl IntoIterator<Item = (T, &'a S)>) -> Option<T> {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last = None;
    for (item, p) in items {
        if p.is_zero() {
            continue;
        }
        cumulative += p.to_f64();
        if u < cumulative {
            return Some(item);
        }
        last = Some(item);
    }
    // rounding left the cumulative sum just below 1
    last
}

fn sample_one<S: Scalar>(
    mdp: &TabularMdp<S>,
    behavior: &Policy<S>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory<S>> {
    let mut state = pick(rng, mdp.initial.iter().enumerate()).expect("validated initial distribution");
    let mut traj = Trajectory {
        states: vec![state],
        actions: Vec::with_capacity(mdp.horizon),
        rewards: Vec::with_capacity(mdp.horizon),
    };
    for t in 0..mdp.horizon {
        let dist = behavior.dist_at(mdp, t, state)?;
        let action = pick(rng, dist.iter().map(|(a, p)| (*a, p))).expect("validated policy");
        let outcomes = mdp.outcomes(state, action);
        let o = pick(rng, outcomes.iter().map(|o| (o, &o.prob))).expect("validated MDP");
        traj.actions.push(action);
        traj.rewards.push(o.reward.clone());
        traj.states.push(o.next);
        state = o.next;
    }
    Ok(traj)
}

/// Draws `n` independent episodes under `behavior`.
pub fn sample_dataset<S: Scalar>(
    mdp: &TabularMdp<S>,
    behavior: &Policy<S>,
    n: usize,
    seed: u64,
) -> Result<OfflineDataset<S>> {
    if n == 0 {
        return Err(Error::InvalidParam("sample count must be at least 1".into()));
    }
    let violations = mdp.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidMdp(violations));
    }
    behavior.check_against(mdp)?;
    let trajectories = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            sample_one(mdp, behavior, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OfflineDataset { behavior: behavior.name.clone(), seed, trajectories })
}

/// Per-start segment counts over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSegmentStats {
    pub model: ObservationModel,
    pub samples: usize,
    pub counts: BTreeMap<usize, BTreeMap<ObservedSegment, usize>>,
}

impl EmpiricalSegmentStats {
    pub fn frequency<S: Scalar>(&self, start: usize, segment: &ObservedSegment) -> S {
        let count = self.counts.get(&start).and_then(|c| c.get(segment)).copied().unwrap_or(0);
        S::from_ratio(count as i64, self.samples as i64)
    }
}

/// Crops every trajectory at every start and tallies the observed segments.
pub fn empirical_segments<S: Scalar>(
    mdp: &TabularMdp<S>,
    dataset: &OfflineDataset<S>,
    model: &ObservationModel,
) -> Result<EmpiricalSegmentStats> {
    model.check_against(mdp)?;
    let mut counts: BTreeMap<usize, BTreeMap<ObservedSegment, usize>> =
        model.window_starts.iter().map(|&t| (t, BTreeMap::new())).collect();
    for traj in &dataset.trajectories {
        traj.check_against(mdp)
            .map_err(|e| Error::ModelMismatch(format!("dataset does not fit the MDP: {e}")))?;
        for seg in crop(mdp, traj, model) {
            *counts.get_mut(&seg.start).expect("start present").entry(seg).or_insert(0) += 1;
        }
    }
    Ok(EmpiricalSegmentStats { model: model.clone(), samples: dataset.len(), counts })
}

/// Total-variation distance between empirical frequencies and an exact
/// distribution, per window start.
pub fn tv_distance<S: Scalar>(
    empirical: &EmpiricalSegmentStats,
    exact: &SegmentDistribution<S>,
) -> Result<BTreeMap<usize, S>> {
    if empirical.model != exact.model {
        return Err(Error::ModelMismatch(
            "empirical and exact statistics use different observation models".into(),
        ));
    }
    let two = S::from_ratio(2, 1);
    let mut out = BTreeMap::new();
    for (&start, dist) in &exact.per_start {
        let counts = empirical
            .counts
            .get(&start)
            .ok_or_else(|| Error::ModelMismatch(format!("no empirical counts for start {start}")))?;
        let mut total = S::zero();
        for (seg, p) in dist {
            let q: S = empirical.frequency(start, seg);
            total = total + (q - p.clone()).abs();
        }
        for (seg, &c) in counts {
            if !dist.contains_key(seg) {
                total = total + S::from_ratio(c as i64, empirical.samples as i64);
            }
        }
        out.insert(start, total / two.clone());
    }
    Ok(out)
}
