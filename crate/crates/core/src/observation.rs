//! What a horizon-reduced learner sees: cropped windows of a trajectory,
//! passed through a feature map, with actions and rewards optionally hidden.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use crate::error::{Error, Result};
use crate::eval::{occupancy, times, OccupancyTable};
use crate::mdp::TabularMdp;
use crate::policy::Policy;
use crate::scalar::Scalar;

/// A full episode: `T + 1` states, `T` actions, `T` rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Checks lengths and that every step has positive probability with the
    /// recorded reward.
    pub fn check_against(&self, mdp: &TabularMdp<S>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidTrajectory(msg));
        let t_len = mdp.horizon;
        if self.states.len() != t_len + 1 || self.actions.len() != t_len || self.rewards.len() != t_len {
            return bad(format!(
                "expected {} states and {t_len} actions/rewards, got {}/{}/{}",
                t_len + 1,
                self.states.len(),
                self.actions.len(),
                self.rewards.len()
            ));
        }
        if let Some(&s) = self.states.iter().find(|&&s| s >= mdp.num_states()) {
            return bad(format!("state index {s} out of range"));
        }
        if mdp.initial[self.states[0]].is_zero() {
            return bad(format!("start state {} has zero initial mass", mdp.states[self.states[0]]));
        }
        for t in 0..t_len {
            let (s, a, next) = (self.states[t], self.actions[t], self.states[t + 1]);
            if a >= mdp.actions[s].len() {
                return bad(format!("t={t}: action index {a} not available in {}", mdp.states[s]));
            }
            let supported = mdp
                .outcomes(s, a)
                .iter()
                .any(|o| o.next == next && !o.prob.is_zero() && o.reward == self.rewards[t]);
            if !supported {
                return bad(format!(
                    "t={t}: ({}, {}) -> {} with reward {} has no support",
                    mdp.states[s],
                    mdp.actions[s][a],
                    mdp.states[next],
                    self.rewards[t].canonical()
                ));
            }
        }
        Ok(())
    }
}

/// The learner interface: windows of `window_length` transitions starting at
/// each of `window_starts`, states mapped through `phi`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationModel {
    pub window_length: usize,
    pub window_starts: BTreeSet<usize>,
    /// Feature id of each state.
    pub phi: Vec<usize>,
    pub features: Vec<String>,
    pub observe_actions: bool,
    pub observe_rewards: bool,
}

impl ObservationModel {
    /// Identity features, every valid start, actions and rewards visible.
    pub fn identity<S: Scalar>(mdp: &TabularMdp<S>, window_length: usize) -> Self {
        let starts = (0..=mdp.horizon.saturating_sub(window_length)).collect();
        Self {
            window_length,
            window_starts: starts,
            phi: (0..mdp.num_states()).collect(),
            features: mdp.states.clone(),
            observe_actions: true,
            observe_rewards: true,
        }
    }

    /// Replaces `phi` by interning one feature label per state, in state order.
    pub fn with_feature_labels<I, L>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = L>,
        L: Into<String>,
    {
        let mut ids: HashMap<String, usize> = HashMap::new();
        self.features.clear();
        self.phi = labels
            .into_iter()
            .map(|label| {
                let label = label.into();
                *ids.entry(label.clone()).or_insert_with(|| {
                    self.features.push(label);
                    self.features.len() - 1
                })
            })
            .collect();
        self
    }

    pub fn with_starts(mut self, starts: impl IntoIterator<Item = usize>) -> Self {
        self.window_starts = starts.into_iter().collect();
        self
    }

    pub fn with_actions(mut self, on: bool) -> Self {
        self.observe_actions = on;
        self
    }

    pub fn with_rewards(mut self, on: bool) -> Self {
        self.observe_rewards = on;
        self
    }

    /// Feature label of every state.
    pub fn feature_labels(&self) -> Vec<&str> {
        self.phi.iter().map(|&f| self.features[f].as_str()).collect()
    }

    pub fn check_against<S: Scalar>(&self, mdp: &TabularMdp<S>) -> Result<()> {
        let bad = |msg: String| Err(Error::ModelMismatch(msg));
        if self.window_length == 0 {
            return bad("window length must be positive".into());
        }
        if self.window_starts.is_empty() {
            return bad("no window starts".into());
        }
        if let Some(&t) = self.window_starts.iter().find(|&&t| t + self.window_length > mdp.horizon) {
            return bad(format!(
                "window start {t} + length {} exceeds horizon {}",
                self.window_length, mdp.horizon
            ));
        }
        if self.phi.len() != mdp.num_states() {
            return bad(format!("phi covers {} states, MDP has {}", self.phi.len(), mdp.num_states()));
        }
        if self.phi.iter().any(|&f| f >= self.features.len()) {
            return bad("phi refers to an unknown feature".into());
        }
        Ok(())
    }
}

/// One cropped, featurized window. Rewards are kept in canonical text form so
/// segments are exact map keys for any scalar type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObservedSegment {
    pub start: usize,
    pub features: Vec<usize>,
    pub actions: Option<Vec<String>>,
    pub rewards: Option<Vec<String>>,
}

impl ObservedSegment {
    fn seed(start: usize, feature: usize, model: &ObservationModel) -> Self {
        Self {
            start,
            features: vec![feature],
            actions: model.observe_actions.then(Vec::new),
            rewards: model.observe_rewards.then(Vec::new),
        }
    }

    fn extend<S: Scalar>(&self, action: &str, reward: &S, feature: usize) -> Self {
        let mut next = self.clone();
        if let Some(actions) = &mut next.actions {
            actions.push(action.to_string());
        }
        if let Some(rewards) = &mut next.rewards {
            rewards.push(reward.canonical());
        }
        next.features.push(feature);
        next
    }

    /// `t=1: f1 -a/r-> f2 ...` using the model's feature labels.
    pub fn render(&self, model: &ObservationModel) -> String {
        let mut out = format!("t={}: {}", self.start, model.features[self.features[0]]);
        for i in 1..self.features.len() {
            let action = self.actions.as_ref().map(|a| a[i - 1].as_str());
            let reward = self.rewards.as_ref().map(|r| r[i - 1].as_str());
            match (action, reward) {
                (Some(a), Some(r)) => write!(out, " -{a}/{r}->"),
                (Some(a), None) => write!(out, " -{a}->"),
                (None, Some(r)) => write!(out, " -/{r}->"),
                (None, None) => write!(out, " ->"),
            }
            .expect("writing to a String");
            write!(out, " {}", model.features[self.features[i]]).expect("writing to a String");
        }
        out
    }
}

/// Crops one trajectory at every window start.
pub fn observe<S: Scalar>(
    mdp: &TabularMdp<S>,
    trajectory: &Trajectory<S>,
    model: &ObservationModel,
) -> Result<Vec<ObservedSegment>> {
    model.check_against(mdp)?;
    trajectory.check_against(mdp)?;
    Ok(crop(mdp, trajectory, model))
}

/// `observe` without re-validating; callers guarantee consistency.
pub(crate) fn crop<S: Scalar>(
    mdp: &TabularMdp<S>,
    trajectory: &Trajectory<S>,
    model: &ObservationModel,
) -> Vec<ObservedSegment> {
    model
        .window_starts
        .iter()
        .map(|&start| {
            let mut seg = ObservedSegment::seed(start, model.phi[trajectory.states[start]], model);
            for t in start..start + model.window_length {
                let s = trajectory.states[t];
                seg = seg.extend(
                    &mdp.actions[s][trajectory.actions[t]],
                    &trajectory.rewards[t],
                    model.phi[trajectory.states[t + 1]],
                );
            }
            seg
        })
        .collect()
}

/// Exact law of the observed window at each start time.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDistribution<S> {
    pub policy: String,
    pub model: ObservationModel,
    pub per_start: BTreeMap<usize, BTreeMap<ObservedSegment, S>>,
}

impl<S: Scalar> SegmentDistribution<S> {
    /// Canonical text: segments sorted, probabilities as exact strings.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (start, dist) in &self.per_start {
            writeln!(out, "start {start}").expect("writing to a String");
            for (seg, p) in dist {
                writeln!(out, "  {} = {}", seg.render(&self.model), p.canonical())
                    .expect("writing to a String");
            }
        }
        out
    }

    /// Hash of the segment masses only (not the policy name).
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (start, dist) in &self.per_start {
            start.hash(&mut h);
            for (seg, p) in dist {
                seg.hash(&mut h);
                p.canonical().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Total mass at each start.
    pub fn masses(&self) -> BTreeMap<usize, S> {
        self.per_start.iter().map(|(&t, d)| (t, d.values().cloned().sum())).collect()
    }

    /// Same masses, ignoring which policy produced them.
    pub fn same_law(&self, other: &Self) -> bool {
        self.per_start == other.per_start
    }
}

/// Forward pass over `(partial segment, current state)` pairs; identical
/// partial observations with the same underlying state are merged each step.
pub fn segment_distribution<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    model: &ObservationModel,
) -> Result<SegmentDistribution<S>> {
    model.check_against(mdp)?;
    let occ = occupancy(mdp, policy)?;
    segment_law(mdp, policy, model, &occ)
}

/// The forward pass of `segment_distribution`, given the policy's occupancy.
pub(crate) fn segment_law<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &Policy<S>,
    model: &ObservationModel,
    occ: &OccupancyTable<S>,
) -> Result<SegmentDistribution<S>> {
    let mut per_start = BTreeMap::new();
    for &start in &model.window_starts {
        let mut frontier: HashMap<(ObservedSegment, usize), S> = HashMap::new();
        for (s, mass) in occ.row(start).iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            let key = (ObservedSegment::seed(start, model.phi[s], model), s);
            bump(frontier.entry(key).or_insert_with(S::zero), mass.clone());
        }
        for t in start..start + model.window_length {
            let mut next = HashMap::with_capacity(frontier.len());
            for ((seg, s), mass) in frontier {
                for (a, pa) in policy.dist_at(mdp, t, s)?.iter() {
                    if pa.is_zero() {
                        continue;
                    }
                    let label = &mdp.actions[s][*a];
                    for o in mdp.outcomes(s, *a) {
                        if o.prob.is_zero() {
                            continue;
                        }
                        let w = times(&times(&mass, pa), &o.prob);
                        let key = (seg.extend(label, &o.reward, model.phi[o.next]), o.next);
                        bump(next.entry(key).or_insert_with(S::zero), w);
                    }
                }
            }
            frontier = next;
        }
        let mut dist = BTreeMap::new();
        for ((seg, _), mass) in frontier {
            bump(dist.entry(seg).or_insert_with(S::zero), mass);
        }
        per_start.insert(start, dist);
    }
    Ok(SegmentDistribution { policy: policy.name.clone(), model: model.clone(), per_start })
}

fn bump<S: Scalar>(slot: &mut S, mass: S) {
    *slot = slot.clone() + mass;
}

/// Exact equality at every start. Both sides must come from the same model.
pub fn distributions_equal<S: Scalar>(
    a: &SegmentDistribution<S>,
    b: &SegmentDistribution<S>,
) -> Result<bool> {
    if a.model != b.model {
        return Err(Error::ModelMismatch(
            "distributions were computed under different observation models".into(),
        ));
    }
    Ok(a.same_law(b))
}
