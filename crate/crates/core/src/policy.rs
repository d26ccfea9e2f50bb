//! Time-indexed policies and exhaustive enumeration of deterministic ones.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Deterministic,
    Stochastic,
}

/// Action distribution over action indices of one state.
pub type ActionDist<S> = Vec<(usize, S)>;

/// `table[t][state]` is the action distribution at time `t`; a stationary
/// policy stores a single row used at every step. `None` cells are allowed for
/// terminal states and for states the policy never reaches.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S> {
    pub name: String,
    pub kind: PolicyKind,
    pub stationary: bool,
    pub horizon: usize,
    pub table: Vec<Vec<Option<ActionDist<S>>>>,
}

impl<S: Scalar> Policy<S> {
    /// Deterministic stationary policy from one optional action index per state.
    pub fn stationary(name: impl Into<String>, horizon: usize, choice: &[Option<usize>]) -> Self {
        let row: Vec<_> = choice.iter().map(|c| c.map(|a| vec![(a, S::one())])).collect();
        Self {
            name: name.into(),
            kind: PolicyKind::Deterministic,
            stationary: true,
            horizon,
            table: vec![row],
        }
    }

    /// Deterministic policy; `choice[t][state]`.
    pub fn nonstationary(name: impl Into<String>, choice: &[Vec<Option<usize>>]) -> Self {
        let table =
            choice.iter().map(|row| row.iter().map(|c| c.map(|a| vec![(a, S::one())])).collect()).collect();
        Self {
            name: name.into(),
            kind: PolicyKind::Deterministic,
            stationary: false,
            horizon: choice.len(),
            table,
        }
    }

    /// Stochastic stationary policy, one distribution per state.
    pub fn stochastic(name: impl Into<String>, horizon: usize, row: Vec<Option<ActionDist<S>>>) -> Self {
        Self { name: name.into(), kind: PolicyKind::Stochastic, stationary: true, horizon, table: vec![row] }
    }

    /// Row used at time `t`.
    pub fn row(&self, t: usize) -> Option<&[Option<ActionDist<S>>]> {
        let index = if self.stationary { 0 } else { t };
        self.table.get(index).map(Vec::as_slice)
    }

    /// Picks the action labelled `label` wherever a state offers it, and the
    /// first action elsewhere.
    pub fn prefer_label(mdp: &TabularMdp<S>, name: impl Into<String>, label: &str) -> Self {
        let choice: Vec<_> =
            (0..mdp.num_states()).map(|s| Some(mdp.action_index(s, label).unwrap_or(0))).collect();
        Self::stationary(name, mdp.horizon, &choice)
    }

    /// Action distribution used at `(t, state)`. Terminal states fall back to
    /// their single self-loop action.
    pub fn dist_at<'a>(
        &'a self,
        mdp: &TabularMdp<S>,
        t: usize,
        state: usize,
    ) -> Result<Cow<'a, [(usize, S)]>> {
        match self.row(t).and_then(|row| row.get(state)) {
            Some(Some(dist)) => Ok(Cow::Borrowed(dist.as_slice())),
            _ if mdp.is_terminal(state) => Ok(Cow::Owned(vec![(0, S::one())])),
            _ => Err(Error::PolicyMismatch(format!(
                "policy {} undefined at t={t}, state {}",
                self.name, mdp.states[state]
            ))),
        }
    }

    /// Checks shape, action support, and that every reachable non-terminal
    /// cell is defined.
    pub fn check_against(&self, mdp: &TabularMdp<S>) -> Result<()> {
        let mismatch = |msg: String| Err(Error::PolicyMismatch(format!("{}: {msg}", self.name)));
        let rows = if self.stationary { 1 } else { mdp.horizon };
        if self.horizon != mdp.horizon || self.table.len() != rows {
            return mismatch(format!(
                "policy horizon {} (table {}) vs MDP horizon {}",
                self.horizon,
                self.table.len(),
                mdp.horizon
            ));
        }
        for (t, row) in self.table.iter().enumerate() {
            if row.len() != mdp.num_states() {
                return mismatch(format!("row t={t} has {} states", row.len()));
            }
            for (s, cell) in row.iter().enumerate() {
                let Some(dist) = cell else { continue };
                let available = mdp.actions[s].len();
                let mut sum = S::zero();
                for (a, p) in dist {
                    if *a >= available {
                        return mismatch(format!(
                            "t={t}, state {}: action index {a} not available",
                            mdp.states[s]
                        ));
                    }
                    if p.is_negative() {
                        return mismatch(format!("t={t}, state {}: negative probability", mdp.states[s]));
                    }
                    sum = sum + p.clone();
                }
                if !sum.same(&S::one()) {
                    return mismatch(format!(
                        "t={t}, state {}: action probabilities sum to {}",
                        mdp.states[s],
                        sum.canonical()
                    ));
                }
                if self.kind == PolicyKind::Deterministic
                    && dist.iter().filter(|(_, p)| !p.is_zero()).count() != 1
                {
                    return mismatch(format!("t={t}, state {}: not a point mass", mdp.states[s]));
                }
            }
        }

        // Reachability sweep over supports.
        let mut live: Vec<bool> = mdp.initial.iter().map(|p| !p.is_zero()).collect();
        for t in 0..mdp.horizon {
            let mut next = vec![false; mdp.num_states()];
            for s in (0..mdp.num_states()).filter(|&s| live[s]) {
                for (a, p) in self.dist_at(mdp, t, s)?.iter() {
                    if p.is_zero() {
                        continue;
                    }
                    for o in mdp.outcomes(s, *a) {
                        if !o.prob.is_zero() {
                            next[o.next] = true;
                        }
                    }
                }
            }
            live = next;
        }
        Ok(())
    }
}

/// Which deterministic policies to enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PolicyClass {
    pub stationary: bool,
}

impl PolicyClass {
    pub const STATIONARY: PolicyClass = PolicyClass { stationary: true };
    pub const NONSTATIONARY: PolicyClass = PolicyClass { stationary: false };
}

impl fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stationary {
            write!(f, "deterministic stationary")
        } else {
            write!(f, "deterministic nonstationary")
        }
    }
}

/// Mixed-radix index over deterministic policies.
///
/// Slots are the non-terminal states (stationary) or `(t, state)` pairs in
/// t-major order (nonstationary). Index 0 picks action 0 everywhere and the
/// first slot is the most significant digit, so increasing index is
/// lexicographic order of the action-index vector.
#[derive(Debug, Clone)]
pub struct PolicySpace<'a, S> {
    mdp: &'a TabularMdp<S>,
    class: PolicyClass,
    slots: Vec<(usize, usize)>,
    radices: Vec<usize>,
    total: Option<u128>,
}

impl<'a, S: Scalar> PolicySpace<'a, S> {
    pub fn new(mdp: &'a TabularMdp<S>, class: PolicyClass) -> Self {
        let states: Vec<usize> = (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)).collect();
        let times = if class.stationary { 1 } else { mdp.horizon };
        let mut slots = Vec::with_capacity(times * states.len());
        for t in 0..times {
            slots.extend(states.iter().map(|&s| (t, s)));
        }
        let radices: Vec<usize> = slots.iter().map(|&(_, s)| mdp.actions[s].len()).collect();
        let total = radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r as u128));
        Self { mdp, class, slots, radices, total }
    }

    pub fn class(&self) -> PolicyClass {
        self.class
    }

    /// Number of policies in the class, `None` if it overflows `u128`.
    pub fn total(&self) -> Option<u128> {
        self.total
    }

    fn digits(&self, mut index: u128) -> Vec<usize> {
        let mut digits = vec![0; self.radices.len()];
        for (slot, &radix) in self.radices.iter().enumerate().rev() {
            digits[slot] = (index % radix as u128) as usize;
            index /= radix as u128;
        }
        digits
    }

    /// The policy at position `index` of the lexicographic order.
    pub fn policy_at(&self, index: u128) -> Policy<S> {
        let mut policy = self.unnamed_at(index);
        policy.name = self.name_at(index);
        policy
    }

    /// `policy_at` without building the descriptive name.
    pub(crate) fn unnamed_at(&self, index: u128) -> Policy<S> {
        let n = self.mdp.num_states();
        let rows = if self.class.stationary { 1 } else { self.mdp.horizon };
        let mut choice = vec![vec![None; n]; rows];
        for (&(t, s), a) in self.slots.iter().zip(self.digits(index)) {
            choice[t][s] = Some(a);
        }
        if self.class.stationary {
            Policy::stationary(String::new(), self.mdp.horizon, &choice[0])
        } else {
            Policy::nonstationary(String::new(), &choice)
        }
    }

    /// `state=action` for every slot with a real choice, e.g. `s0=L` or
    /// `t0:s0=L` for time-indexed classes; `only` when nothing is chosen.
    pub fn name_at(&self, index: u128) -> String {
        let mdp = self.mdp;
        let parts: Vec<String> = self
            .slots
            .iter()
            .zip(self.digits(index))
            .filter(|((_, s), _)| mdp.actions[*s].len() > 1)
            .map(|(&(t, s), a)| {
                let part = format!("{}={}", mdp.states[s], mdp.actions[s][a]);
                if self.class.stationary {
                    part
                } else {
                    format!("t{t}:{part}")
                }
            })
            .collect();
        if parts.is_empty() {
            "only".to_string()
        } else {
            parts.join(",")
        }
    }

    /// Lazy lexicographic iterator that stops after `cap` policies.
    pub fn iter(&self, cap: usize) -> PolicyIter<'a, S> {
        PolicyIter { space: self.clone(), next: 0, cap, done: false }
    }
}

/// Yields `Ok(policy)` in order; if the class is larger than the cap, the
/// final item is `Err(CapExceeded)`.
pub struct PolicyIter<'a, S> {
    space: PolicySpace<'a, S>,
    next: u128,
    cap: usize,
    done: bool,
}

impl<S: Scalar> Iterator for PolicyIter<'_, S> {
    type Item = Result<Policy<S>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.space.total.is_some_and(|total| self.next >= total) {
            self.done = true;
            return None;
        }
        if self.next >= self.cap as u128 {
            self.done = true;
            return Some(Err(Error::CapExceeded { cap: self.cap, total: self.space.total }));
        }
        let policy = self.space.policy_at(self.next);
        self.next += 1;
        Some(Ok(policy))
    }
}

/// Every deterministic policy of the class, lexicographically, up to `cap`.
pub fn enumerate_deterministic_policies<S: Scalar>(
    mdp: &TabularMdp<S>,
    class: PolicyClass,
    cap: usize,
) -> PolicyIter<'_, S> {
    PolicySpace::new(mdp, class).iter(cap)
}
