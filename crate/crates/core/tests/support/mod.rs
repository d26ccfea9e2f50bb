//! Shared test helpers: a seeded random MDP generator and a brute-force
//! oracle that enumerates whole trajectories instead of running any forward
//! recursion.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use horizon_audit::eval::{full_return, truncated_return};
use horizon_audit::mdp::{Outcome, TabularMdp};
use horizon_audit::observation::{segment_distribution, ObservationModel, SegmentDistribution};
use horizon_audit::policy::{PolicyClass, PolicySpace};
use horizon_audit::sufficiency::check_h_sufficiency;
use horizon_audit::{Rational, Scalar};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn r(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// A random MDP with at most `max_states` states, at most two actions per
/// state, horizon at most `max_horizon`, and small rational rewards. About
/// half of them end in an absorbing terminal state.
pub fn random_mdp(rng: &mut ChaCha8Rng, max_states: usize, max_horizon: usize) -> TabularMdp<Rational> {
    let n = rng.random_range(2..=max_states);
    let horizon = rng.random_range(1..=max_horizon);
    let terminal_last = rng.random_bool(0.5);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut transitions = Vec::new();
    let mut terminal = BTreeSet::new();
    for s in 0..n {
        states.push(format!("q{s}"));
        if terminal_last && s == n - 1 {
            terminal.insert(s);
            actions.push(vec!["stay".to_string()]);
            transitions.push(vec![vec![Outcome::new(s, r(1, 1), r(0, 1))]]);
            continue;
        }
        let k = rng.random_range(1..=2);
        let mut labels = Vec::new();
        let mut outs = Vec::new();
        for a in 0..k {
            labels.push(["x", "y"][a].to_string());
            outs.push(random_outcomes(rng, n));
        }
        actions.push(labels);
        transitions.push(outs);
    }
    let mut initial = vec![r(0, 1); n];
    let first = rng.random_range(0..n);
    if rng.random_bool(0.5) {
        initial[first] = r(1, 1);
    } else {
        let second = (first + 1 + rng.random_range(0..n - 1)) % n;
        let w = rng.random_range(1..=4);
        initial[first] = r(w, 5);
        initial[second] = r(5 - w, 5);
    }
    TabularMdp { states, actions, transitions, horizon, initial, terminal }
}

fn random_outcomes(rng: &mut ChaCha8Rng, n: usize) -> Vec<Outcome<Rational>> {
    let k = rng.random_range(1..=3usize);
    let weights: Vec<i64> = (0..k).map(|_| rng.random_range(1..=4)).collect();
    let total: i64 = weights.iter().sum();
    weights
        .iter()
        .map(|&w| {
            let next = rng.random_range(0..n);
            let reward = r(rng.random_range(-5..=5), rng.random_range(1..=4));
            Outcome::new(next, r(w, total), reward)
        })
        .collect()
}

/// A random observation model for `mdp`: window length, nonempty start set,
/// a random coarsening of the states and random visibility flags.
pub fn random_model(rng: &mut ChaCha8Rng, mdp: &TabularMdp<Rational>) -> ObservationModel {
    let t = mdp.horizon;
    let h = rng.random_range(1..=t);
    let starts: Vec<usize> = (0..=t - h).filter(|_| rng.random_bool(0.5)).collect();
    let starts = if starts.is_empty() { vec![rng.random_range(0..=t - h)] } else { starts };
    let buckets = rng.random_range(1..=mdp.states.len());
    let phi: Vec<usize> = (0..mdp.states.len()).map(|_| rng.random_range(0..buckets)).collect();
    let used: BTreeSet<usize> = phi.iter().copied().collect();
    let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(i, &f)| (f, i)).collect();
    ObservationModel {
        window_length: h,
        window_starts: starts.into_iter().collect(),
        phi: phi.iter().map(|f| remap[f]).collect(),
        features: (0..used.len()).map(|i| format!("f{i}")).collect(),
        observe_actions: rng.random_bool(0.5),
        observe_rewards: rng.random_bool(0.5),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A deterministic policy as a table `choice[t][s]`; stationary policies
/// repeat one row.
pub type Choice = Vec<Vec<usize>>;

/// Every deterministic policy, in the order of an odometer whose first
/// digit is (t = 0, first non-terminal state) and whose last digit turns
/// fastest.
pub fn all_policies(mdp: &TabularMdp<Rational>, stationary: bool) -> Vec<Choice> {
    let rows = if stationary { 1 } else { mdp.horizon };
    let mut digits: Vec<(usize, usize)> = Vec::new();
    for t in 0..rows {
        for s in 0..mdp.states.len() {
            if !mdp.terminal.contains(&s) {
                digits.push((t, s));
            }
        }
    }
    let mut out = Vec::new();
    let mut current = vec![0usize; digits.len()];
    loop {
        let mut choice = vec![vec![0; mdp.states.len()]; rows];
        for (&(t, s), &a) in digits.iter().zip(&current) {
            choice[t][s] = a;
        }
        if stationary {
            choice = vec![choice[0].clone(); mdp.horizon];
        }
        out.push(choice);
        // increment from the last digit
        let mut i = digits.len();
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            let (_, s) = digits[i];
            current[i] += 1;
            if current[i] < mdp.actions[s].len() {
                break;
            }
            current[i] = 0;
        }
    }
}

/// One complete trajectory and its probability.
pub struct Path {
    pub prob: Rational,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<Rational>,
}

/// Every trajectory with positive probability, by depth-first expansion.
pub fn paths(mdp: &TabularMdp<Rational>, choice: &Choice) -> Vec<Path> {
    let mut out = Vec::new();
    for (s, p) in mdp.initial.iter().enumerate() {
        if !p.is_zero() {
            let path = Path { prob: p.clone(), states: vec![s], actions: vec![], rewards: vec![] };
            expand(mdp, choice, path, &mut out);
        }
    }
    out
}

fn expand(mdp: &TabularMdp<Rational>, choice: &Choice, path: Path, out: &mut Vec<Path>) {
    let t = path.actions.len();
    if t == mdp.horizon {
        out.push(path);
        return;
    }
    let s = *path.states.last().unwrap();
    let a = if mdp.terminal.contains(&s) { 0 } else { choice[t][s] };
    for o in &mdp.transitions[s][a] {
        if o.prob.is_zero() {
            continue;
        }
        let mut states = path.states.clone();
        let mut actions = path.actions.clone();
        let mut rewards = path.rewards.clone();
        states.push(o.next);
        actions.push(a);
        rewards.push(o.reward.clone());
        let prob = &path.prob * &o.prob;
        expand(mdp, choice, Path { prob, states, actions, rewards }, out);
    }
}

/// `J_h` with `h + 1` reward terms (clipped), and `J` for `h = None`.
pub fn oracle_return(mdp: &TabularMdp<Rational>, choice: &Choice, h: Option<usize>) -> Rational {
    let terms = h.map_or(mdp.horizon, |h| (h + 1).min(mdp.horizon));
    paths(mdp, choice).iter().map(|p| &p.prob * p.rewards[..terms].iter().cloned().sum::<Rational>()).sum()
}

/// Window law as text keys: per start, the rendered feature / action /
/// reward sequence mapped to its probability.
pub type Law = BTreeMap<usize, BTreeMap<String, Rational>>;

pub fn oracle_law(mdp: &TabularMdp<Rational>, choice: &Choice, model: &ObservationModel) -> Law {
    let mut law: Law = BTreeMap::new();
    let all = paths(mdp, choice);
    for &start in &model.window_starts {
        let entry = law.entry(start).or_default();
        for p in &all {
            let end = start + model.window_length;
            let features: Vec<&str> =
                p.states[start..=end].iter().map(|&s| model.features[model.phi[s]].as_str()).collect();
            let actions: Option<Vec<&str>> = model
                .observe_actions
                .then(|| (start..end).map(|t| mdp.actions[p.states[t]][p.actions[t]].as_str()).collect());
            let rewards: Option<Vec<String>> =
                model.observe_rewards.then(|| p.rewards[start..end].iter().map(|x| x.to_string()).collect());
            let key = format!("{features:?}|{actions:?}|{rewards:?}");
            let slot = entry.entry(key).or_insert_with(Rational::zero);
            *slot = &*slot + &p.prob;
        }
    }
    law
}

/// The library's distribution rewritten with the oracle's keys.
pub fn as_law(dist: &SegmentDistribution<Rational>) -> Law {
    let model = &dist.model;
    dist.per_start
        .iter()
        .map(|(&start, d)| {
            let keyed = d
                .iter()
                .map(|(seg, p)| {
                    let features: Vec<&str> =
                        seg.features.iter().map(|&f| model.features[f].as_str()).collect();
                    let actions: Option<Vec<&str>> =
                        seg.actions.as_ref().map(|a| a.iter().map(String::as_str).collect());
                    (format!("{features:?}|{actions:?}|{:?}", seg.rewards), p.clone())
                })
                .collect();
            (start, keyed)
        })
        .collect()
}

/// Naive pairwise sufficiency: the lexicographically smallest pair `(i, j)`,
/// `i < j`, with equal laws and different full returns.
pub fn oracle_witness(
    mdp: &TabularMdp<Rational>,
    model: &ObservationModel,
    stationary: bool,
) -> Option<(usize, usize)> {
    let policies = all_policies(mdp, stationary);
    let laws: Vec<Law> = policies.iter().map(|c| oracle_law(mdp, c, model)).collect();
    let returns: Vec<Rational> = policies.iter().map(|c| oracle_return(mdp, c, None)).collect();
    for i in 0..policies.len() {
        for j in i + 1..policies.len() {
            if laws[i] == laws[j] && returns[i] != returns[j] {
                return Some((i, j));
            }
        }
    }
    None
}

/// The library policy's action at every `(t, s)` cell, in the oracle's shape.
pub fn choice_of(mdp: &TabularMdp<Rational>, policy: &horizon_audit::ExactPolicy) -> Choice {
    (0..mdp.horizon)
        .map(|t| {
            (0..mdp.states.len())
                .map(|s| {
                    let dist = policy.dist_at(mdp, t, s).expect("defined");
                    assert_eq!(dist.len(), 1);
                    assert!(dist[0].1.is_one());
                    dist[0].0
                })
                .collect()
        })
        .collect()
}

/// Exact per-start masses of a law.
pub fn masses(law: &Law) -> Vec<Rational> {
    law.values().map(|d| d.values().cloned().sum()).collect()
}

pub fn canonical(x: &Rational) -> String {
    x.canonical()
}

fn class_size(mdp: &TabularMdp<Rational>, stationary: bool) -> usize {
    let per_row: usize =
        (0..mdp.states.len()).filter(|s| !mdp.terminal.contains(s)).map(|s| mdp.actions[s].len()).product();
    if stationary {
        per_row
    } else {
        per_row.pow(mdp.horizon as u32)
    }
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Compares the library with the oracle on random case `seed`: enumeration
/// order, both objectives at every `h`, window laws, and the sufficiency
/// verdict with its witness. The nonstationary class is included when it
/// has at most 256 policies.
pub fn oracle_case(seed: u64) -> Result<(), String> {
    let mut g = rng(seed);
    let mdp = random_mdp(&mut g, 6, 4);
    ensure!(mdp.validate().is_empty(), "seed {seed}: generator produced an invalid MDP");
    let model = random_model(&mut g, &mdp);
    let fail = |e: horizon_audit::Error| format!("seed {seed}: {e}");

    let mut classes = vec![true];
    if class_size(&mdp, false) <= 256 {
        classes.push(false);
    }
    for stationary in classes {
        let class = PolicyClass { stationary };
        let space = PolicySpace::new(&mdp, class);
        let policies = all_policies(&mdp, stationary);
        ensure!(space.total() == Some(policies.len() as u128), "seed {seed}: class size");

        for (i, choice) in policies.iter().enumerate() {
            let policy = space.policy_at(i as u128);
            ensure!(&choice_of(&mdp, &policy) == choice, "seed {seed}: enumeration order differs at {i}");
            ensure!(
                full_return(&mdp, &policy).map_err(fail)? == oracle_return(&mdp, choice, None),
                "seed {seed}: full return of policy {i}"
            );
            for h in 0..=mdp.horizon {
                ensure!(
                    truncated_return(&mdp, &policy, h).map_err(fail)? == oracle_return(&mdp, choice, Some(h)),
                    "seed {seed}: truncated return of policy {i} at h = {h}"
                );
            }
            let dist = segment_distribution(&mdp, &policy, &model).map_err(fail)?;
            ensure!(
                as_law(&dist) == oracle_law(&mdp, choice, &model),
                "seed {seed}: window law of policy {i}"
            );
        }

        let verdict = check_h_sufficiency(&mdp, &model, class, 1 << 20).map_err(fail)?;
        let expected = oracle_witness(&mdp, &model, stationary);
        ensure!(verdict.sufficient == expected.is_none(), "seed {seed}: verdict (stationary {stationary})");
        if let (Some(w), Some((i, j))) = (&verdict.witness, expected) {
            ensure!(choice_of(&mdp, &w.first) == policies[i], "seed {seed}: first witness policy");
            ensure!(choice_of(&mdp, &w.second) == policies[j], "seed {seed}: second witness policy");
            let gap = oracle_return(&mdp, &policies[i], None) - oracle_return(&mdp, &policies[j], None);
            ensure!(w.gap == gap, "seed {seed}: witness gap");
        }
    }
    Ok(())
}
