//! Exact expected returns and state occupancy by forward dynamic programming.

use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::policy::Policy;
use crate::scalar::Scalar;

/// `rows[t]` is the state distribution at time `t`, for `t` in `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable<S> {
    pub rows: Vec<Vec<S>>,
}

impl<S: Scalar> OccupancyTable<S> {
    pub fn row(&self, t: usize) -> &[S] {
        &self.rows[t]
    }
}

/// Occupancy together with the expected reward collected at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardProfile<S> {
    pub occupancy: OccupancyTable<S>,
    /// `step_rewards[t]` is `E[r_t]`, for `t` in `0..T`.
    pub step_rewards: Vec<S>,
}

impl<S: Scalar> RewardProfile<S> {
    pub fn full(&self) -> S {
        self.step_rewards.iter().cloned().sum()
    }

    /// Sum of `E[r_t]` for `t = 0..=h`, clipped to the horizon.
    pub fn truncated(&self, h: usize) -> S {
        let terms = h.saturating_add(1).min(self.step_rewards.len());
        self.step_rewards[..terms].iter().cloned().sum()
    }
}

/// One forward pass: occupancy rows and per-step expected rewards.
pub fn reward_profile<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>) -> Result<RewardProfile<S>> {
    policy.check_against(mdp)?;
    forward(mdp, policy)
}

/// `reward_profile` for a policy already known to fit `mdp`.
pub(crate) fn forward<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>) -> Result<RewardProfile<S>> {
    let n = mdp.num_states();
    let mut rows = Vec::with_capacity(mdp.horizon + 1);
    let mut step_rewards = Vec::with_capacity(mdp.horizon);
    rows.push(mdp.initial.clone());
    for t in 0..mdp.horizon {
        let current = &rows[t];
        let mut next = vec![S::zero(); n];
        let mut reward = S::zero();
        for (s, mass) in current.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            for (a, pa) in policy.dist_at(mdp, t, s)?.iter() {
                if pa.is_zero() {
                    continue;
                }
                let weight = times(mass, pa);
                for o in mdp.outcomes(s, *a) {
                    if o.prob.is_zero() {
                        continue;
                    }
                    let w = times(&weight, &o.prob);
                    if !o.reward.is_zero() {
                        reward = reward + times(&w, &o.reward);
                    }
                    let slot = &mut next[o.next];
                    *slot = if slot.is_zero() { w } else { slot.clone() + w };
                }
            }
        }
        rows.push(next);
        step_rewards.push(reward);
    }
    Ok(RewardProfile { occupancy: OccupancyTable { rows }, step_rewards })
}

/// Product that skips the multiplication when either side is one.
pub(crate) fn times<S: Scalar>(a: &S, b: &S) -> S {
    if b.is_one() {
        a.clone()
    } else if a.is_one() {
        b.clone()
    } else {
        a.clone() * b.clone()
    }
}

/// `J(π)`: expected sum of all `T` rewards.
pub fn full_return<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>) -> Result<S> {
    Ok(reward_profile(mdp, policy)?.full())
}

/// `J_h(π)`: expected sum of rewards `r_0 ..= r_h` (the upper index is
/// inclusive, so `h + 1` terms, clipped at `T`).
pub fn truncated_return<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>, h: usize) -> Result<S> {
    Ok(reward_profile(mdp, policy)?.truncated(h))
}

pub fn occupancy<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>) -> Result<OccupancyTable<S>> {
    Ok(reward_profile(mdp, policy)?.occupancy)
}
