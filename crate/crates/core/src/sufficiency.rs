//! H-sufficiency over an enumerated policy class, and agreement between
//! truncated and full-horizon policy orderings.
//!
//! Both checks enumerate deterministic policies in lexicographic order,
//! evaluate them in parallel chunks, and merge the chunks sequentially in
//! index order, so the result does not depend on the number of workers.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{forward, reward_profile};
use crate::mdp::TabularMdp;
use crate::observation::{segment_distribution, segment_law, ObservationModel, SegmentDistribution};
use crate::policy::{Policy, PolicyClass, PolicySpace};
use crate::scalar::Scalar;

const CHUNK: usize = 4096;

/// Which policies a verdict actually covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassScope {
    pub class: PolicyClass,
    pub enumerated: usize,
    /// Size of the full class; `None` if it overflows `u128`.
    pub total: Option<u128>,
    pub truncated: bool,
}

impl ClassScope {
    fn new(space: &PolicySpace<'_, impl Scalar>, cap: usize) -> Self {
        let total = space.total();
        let enumerated = match total {
            Some(t) if t <= cap as u128 => t as usize,
            _ => cap,
        };
        Self { class: space.class(), enumerated, total, truncated: total.is_none_or(|t| t > cap as u128) }
    }
}

impl fmt::Display for ClassScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total = self.total.map_or_else(|| "more than 2^128".to_string(), |t| t.to_string());
        write!(f, "{} policies, {} of {} enumerated", self.class, self.enumerated, total)?;
        if self.truncated {
            write!(f, " (truncated by cap; result holds over the enumerated subset only)")?;
        }
        Ok(())
    }
}

/// Two policies the learner cannot tell apart whose full returns differ.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness<S> {
    pub first: Policy<S>,
    pub second: Policy<S>,
    pub first_return: S,
    pub second_return: S,
    /// `first_return - second_return`.
    pub gap: S,
}

impl<S: Scalar> Witness<S> {
    /// Recomputes both distributions and returns; `true` iff they are still
    /// equal and the gap is reproduced exactly.
    pub fn replay(&self, mdp: &TabularMdp<S>, model: &ObservationModel) -> Result<bool> {
        let a = segment_distribution(mdp, &self.first, model)?;
        let b = segment_distribution(mdp, &self.second, model)?;
        let ja = reward_profile(mdp, &self.first)?.full();
        let jb = reward_profile(mdp, &self.second)?.full();
        Ok(a.same_law(&b)
            && ja == self.first_return
            && jb == self.second_return
            && ja.clone() - jb.clone() == self.gap
            && ja != jb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyVerdict<S> {
    pub sufficient: bool,
    pub witness: Option<Witness<S>>,
    pub scope: ClassScope,
}

struct Bucket<S> {
    law: SegmentDistribution<S>,
    first: usize,
    first_return: S,
    violation: Option<usize>,
}

/// Buckets the enumerated policies by exact segment distribution. The class
/// is sufficient iff every bucket has a single full return; otherwise the
/// witness is the lexicographically first violating pair.
pub fn check_h_sufficiency<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &ObservationModel,
    class: PolicyClass,
    cap: usize,
) -> Result<SufficiencyVerdict<S>> {
    require_valid(mdp)?;
    model.check_against(mdp)?;
    let space = PolicySpace::new(mdp, class);
    let scope = ClassScope::new(&space, cap);

    // fingerprint -> buckets sharing it (collisions resolved by full equality)
    let mut buckets: HashMap<u64, Vec<Bucket<S>>> = HashMap::new();
    let mut best: Option<(usize, usize)> = None;

    for chunk_start in (0..scope.enumerated).step_by(CHUNK) {
        let chunk_end = (chunk_start + CHUNK).min(scope.enumerated);
        let evaluated: Vec<(usize, SegmentDistribution<S>, S)> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| {
                let policy = space.unnamed_at(i as u128);
                let profile = forward(mdp, &policy)?;
                let law = segment_law(mdp, &policy, model, &profile.occupancy)?;
                let ret = profile.full();
                Ok((i, law, ret))
            })
            .collect::<Result<_>>()?;

        for (i, law, ret) in evaluated {
            let group = buckets.entry(law.fingerprint()).or_default();
            match group.iter_mut().find(|b| b.law.same_law(&law)) {
                Some(bucket) => {
                    if bucket.violation.is_none() && bucket.first_return != ret {
                        bucket.violation = Some(i);
                        let pair = (bucket.first, i);
                        if best.is_none_or(|b| pair < b) {
                            best = Some(pair);
                        }
                    }
                }
                None => group.push(Bucket { law, first: i, first_return: ret, violation: None }),
            }
        }
    }

    let witness = match best {
        None => None,
        Some((a, b)) => {
            let first = space.policy_at(a as u128);
            let second = space.policy_at(b as u128);
            let first_return = reward_profile(mdp, &first)?.full();
            let second_return = reward_profile(mdp, &second)?.full();
            let gap = first_return.clone() - second_return.clone();
            Some(Witness { first, second, first_return, second_return, gap })
        }
    };
    Ok(SufficiencyVerdict { sufficient: witness.is_none(), witness, scope })
}

/// A policy with both of its objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPolicy<S> {
    pub index: usize,
    pub name: String,
    pub truncated: S,
    pub full: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingReport<S> {
    pub h: usize,
    pub scope: ClassScope,
    pub best_truncated: S,
    pub best_full: S,
    /// Maximizers of `J_h`, in enumeration order.
    pub truncated_argmax: Vec<ScoredPolicy<S>>,
    /// Maximizers of `J`, in enumeration order.
    pub full_argmax: Vec<ScoredPolicy<S>>,
    pub argmax_intersect: bool,
    /// `J_h` and `J` order every pair of policies the same way (ties included).
    pub ordering_consistent: bool,
    /// A pair the two objectives order differently, when there is one.
    pub discordant: Option<(ScoredPolicy<S>, ScoredPolicy<S>)>,
}

impl<S: Scalar> OrderingReport<S> {
    pub fn consistent(&self) -> bool {
        self.argmax_intersect && self.ordering_consistent
    }
}

/// Evaluates `J_h` and `J` on every enumerated policy and compares the two
/// orderings.
pub fn check_objective_consistency<S: Scalar>(
    mdp: &TabularMdp<S>,
    h: usize,
    class: PolicyClass,
    cap: usize,
) -> Result<OrderingReport<S>> {
    require_valid(mdp)?;
    let space = PolicySpace::new(mdp, class);
    let scope = ClassScope::new(&space, cap);
    if scope.enumerated == 0 {
        return Err(Error::InvalidParam("empty policy class".into()));
    }

    let mut scores: Vec<(usize, S, S)> = Vec::with_capacity(scope.enumerated);
    for chunk_start in (0..scope.enumerated).step_by(CHUNK) {
        let chunk_end = (chunk_start + CHUNK).min(scope.enumerated);
        let chunk: Vec<(usize, S, S)> = (chunk_start..chunk_end)
            .into_par_iter()
            .map(|i| {
                let profile = forward(mdp, &space.unnamed_at(i as u128))?;
                Ok((i, profile.truncated(h), profile.full()))
            })
            .collect::<Result<_>>()?;
        scores.extend(chunk);
    }

    let scored = |&(i, ref jh, ref j): &(usize, S, S)| ScoredPolicy {
        index: i,
        name: space.name_at(i as u128),
        truncated: jh.clone(),
        full: j.clone(),
    };

    let best_truncated = max_of(scores.iter().map(|s| &s.1));
    let best_full = max_of(scores.iter().map(|s| &s.2));
    let truncated_argmax: Vec<_> = scores.iter().filter(|s| s.1 == best_truncated).map(scored).collect();
    let full_argmax: Vec<_> = scores.iter().filter(|s| s.2 == best_full).map(scored).collect();
    let argmax_intersect = truncated_argmax.iter().any(|p| p.full == best_full);

    // The orderings agree on all pairs iff J_h is a strictly increasing
    // function of J: sort by (J, J_h) and check adjacent groups.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        cmp(&scores[a].2, &scores[b].2).then_with(|| cmp(&scores[a].1, &scores[b].1)).then(a.cmp(&b))
    });
    let mut discordant = None;
    for pair in order.windows(2) {
        let (a, b) = (&scores[pair[0]], &scores[pair[1]]);
        let full_order = cmp(&a.2, &b.2);
        let truncated_order = cmp(&a.1, &b.1);
        if full_order != truncated_order {
            let (x, y) = if a.0 < b.0 { (a, b) } else { (b, a) };
            discordant = Some((scored(x), scored(y)));
            break;
        }
    }

    Ok(OrderingReport {
        h,
        scope,
        best_truncated,
        best_full,
        truncated_argmax,
        full_argmax,
        argmax_intersect,
        ordering_consistent: discordant.is_none(),
        discordant,
    })
}

fn cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

fn max_of<'a, S: Scalar>(mut values: impl Iterator<Item = &'a S>) -> S {
    let first = values.next().expect("nonempty class").clone();
    values.fold(first, |best, v| if *v > best { v.clone() } else { best })
}

fn require_valid<S: Scalar>(mdp: &TabularMdp<S>) -> Result<()> {
    let violations = mdp.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidMdp(violations))
    }
}
