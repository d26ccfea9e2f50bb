//! The three counterexample families and machine checks of their claims.
//!
//! * `prefix`: the initial choice only matters after the window ends; the
//!   commitment is carried by duplicated chain states `s_t^L` / `s_t^R` that
//!   the bundled feature map merges back into one chain.
//! * `greedy`: a +1 per-step bonus that arms a flag, paid back as `-M` after
//!   the window.
//! * `aliasing`: two chains that only differ in states the feature map merges.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::reward_profile;
use crate::mdp::{MdpBuilder, Outcome, TabularMdp};
use crate::observation::{segment_distribution, ObservationModel};
use crate::policy::{Policy, PolicyClass};
use crate::scalar::Scalar;
use crate::sufficiency::{check_h_sufficiency, check_objective_consistency};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Prefix,
    Greedy,
    Aliasing,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Prefix => "prefix",
            Family::Greedy => "greedy",
            Family::Aliasing => "aliasing",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prefix" => Ok(Family::Prefix),
            "greedy" => Ok(Family::Greedy),
            "aliasing" => Ok(Family::Aliasing),
            other => Err(Error::InvalidParam(format!(
                "unknown family {other:?} (expected prefix, greedy or aliasing)"
            ))),
        }
    }
}

/// A family plus its parameters. `penalty` is `M` and only used by `greedy`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleSpec<S> {
    pub family: Family,
    pub window: usize,
    pub penalty: Option<S>,
}

impl<S: Scalar> CounterexampleSpec<S> {
    pub fn new(family: Family, window: usize, penalty: Option<S>) -> Result<Self> {
        if window < 1 {
            return Err(Error::InvalidParam(format!("H must be at least 1, got {window}")));
        }
        if family == Family::Greedy {
            let m = penalty.as_ref().ok_or_else(|| Error::InvalidParam("greedy family needs M".into()))?;
            let bound = S::from_ratio(window as i64 + 1, 1);
            if *m <= bound {
                return Err(Error::InvalidParam(format!(
                    "greedy family requires M > H+1 (M = {}, H+1 = {})",
                    m.canonical(),
                    bound.canonical()
                )));
            }
        }
        Ok(Self { family, window, penalty })
    }

    pub fn generate(&self) -> Result<(TabularMdp<S>, ObservationModel)> {
        match self.family {
            Family::Prefix => gen_prefix(self.window),
            Family::Greedy => gen_greedy(self.window, self.penalty.clone().expect("checked in new")),
            Family::Aliasing => gen_aliasing(self.window),
        }
    }
}

fn require_window(h: usize) -> Result<()> {
    if h < 1 {
        return Err(Error::InvalidParam(format!("H must be at least 1, got {h}")));
    }
    Ok(())
}

/// Prefix-indistinguishable commitment, `T = H + 2`.
pub fn gen_prefix<S: Scalar>(h: usize) -> Result<(TabularMdp<S>, ObservationModel)> {
    require_window(h)?;
    let zero = S::zero;
    let mut b = MdpBuilder::new(h + 2);
    let s0 = b.state("s0");
    let left: Vec<usize> = (1..=h + 1).map(|t| b.state(format!("s{t}^L"))).collect();
    let right: Vec<usize> = (1..=h + 1).map(|t| b.state(format!("s{t}^R"))).collect();
    let g = b.terminal("g");
    let bad = b.terminal("b");

    b.action(s0, "L", vec![Outcome::certain(left[0], zero())]);
    b.action(s0, "R", vec![Outcome::certain(right[0], zero())]);
    for (chain, end, reward) in [(&left, g, S::one()), (&right, bad, zero())] {
        for w in chain.windows(2) {
            b.action(w[0], "next", vec![Outcome::certain(w[1], zero())]);
        }
        b.action(chain[h], "next", vec![Outcome::certain(end, reward)]);
    }
    b.initial(s0, S::one());
    let mdp = b.build();

    let labels: Vec<String> =
        mdp.states.iter().map(|s| s.trim_end_matches("^L").trim_end_matches("^R").to_string()).collect();
    let model = ObservationModel::identity(&mdp, h).with_starts([1]).with_feature_labels(labels);
    Ok((mdp, model))
}

/// Short-segment optimality violation, `T = H + 3` (one absorbing pad step
/// after the terminal transition).
pub fn gen_greedy<S: Scalar>(h: usize, penalty: S) -> Result<(TabularMdp<S>, ObservationModel)> {
    CounterexampleSpec::new(Family::Greedy, h, Some(penalty.clone()))?;
    let zero = S::zero;
    let mut b = MdpBuilder::new(h + 3);
    // calm[p] has G = 0, armed[p] has G = 1; s0 is never armed
    let calm: Vec<usize> = (0..=h + 1).map(|p| b.state(format!("s{p}"))).collect();
    let armed: Vec<Option<usize>> =
        (0..=h + 1).map(|p| (p > 0).then(|| b.state(format!("s{p}+G")))).collect();
    let trap = b.terminal("trap");
    let safe = b.terminal("safe");

    for p in 0..=h {
        let next_armed = armed[p + 1].expect("positions after s0 have an armed copy");
        b.action(calm[p], "greedy", vec![Outcome::certain(next_armed, S::one())]);
        b.action(calm[p], "patient", vec![Outcome::certain(calm[p + 1], zero())]);
        if let Some(s) = armed[p] {
            b.action(s, "greedy", vec![Outcome::certain(next_armed, S::one())]);
            b.action(s, "patient", vec![Outcome::certain(next_armed, zero())]);
        }
    }
    b.action(calm[h + 1], "end", vec![Outcome::certain(safe, zero())]);
    let last_armed = armed[h + 1].expect("armed end state");
    b.action(last_armed, "end", vec![Outcome::certain(trap, -penalty)]);
    b.initial(calm[0], S::one());
    let mdp = b.build();
    let model = ObservationModel::identity(&mdp, h);
    Ok((mdp, model))
}

/// Support and representation aliasing, `T = H + 2`.
///
/// A window starting at time 1 spans times `1..=H+1`, so the bundled feature
/// map merges `u_t` with `v_t` for every `t` in `1..=H+1`; only the transition
/// into `g` / `b` (outside the window) tells the branches apart.
pub fn gen_aliasing<S: Scalar>(h: usize) -> Result<(TabularMdp<S>, ObservationModel)> {
    require_window(h)?;
    let zero = S::zero;
    let mut b = MdpBuilder::new(h + 2);
    let s0 = b.state("s0");
    let u: Vec<usize> = (1..=h + 1).map(|t| b.state(format!("u{t}"))).collect();
    let v: Vec<usize> = (1..=h + 1).map(|t| b.state(format!("v{t}"))).collect();
    let g = b.terminal("g");
    let bad = b.terminal("b");

    b.action(s0, "L", vec![Outcome::certain(u[0], zero())]);
    b.action(s0, "R", vec![Outcome::certain(v[0], zero())]);
    for (chain, end, reward) in [(&u, g, S::one()), (&v, bad, zero())] {
        for w in chain.windows(2) {
            b.action(w[0], "next", vec![Outcome::certain(w[1], zero())]);
        }
        b.action(chain[h], "next", vec![Outcome::certain(end, reward)]);
    }
    b.initial(s0, S::one());
    let mdp = b.build();

    let labels: Vec<String> = mdp
        .states
        .iter()
        .map(|s| match s.strip_prefix('u').or_else(|| s.strip_prefix('v')) {
            Some(t) => format!("x{t}"),
            None => s.clone(),
        })
        .collect();
    let model = ObservationModel::identity(&mdp, h).with_starts([1]).with_feature_labels(labels);
    Ok((mdp, model))
}

/// One checked claim: exact expected and computed values as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Claim {
    pub description: String,
    pub expected: String,
    pub computed: String,
    pub pass: bool,
}

impl Claim {
    fn exact<S: Scalar>(description: impl Into<String>, expected: &S, computed: &S) -> Self {
        Self {
            description: description.into(),
            expected: expected.canonical(),
            computed: computed.canonical(),
            pass: expected == computed,
        }
    }

    fn flag(description: impl Into<String>, expected: bool, computed: bool) -> Self {
        Self {
            description: description.into(),
            expected: expected.to_string(),
            computed: computed.to_string(),
            pass: expected == computed,
        }
    }

    fn text(description: impl Into<String>, expected: String, computed: String) -> Self {
        let pass = expected == computed;
        Self { description: description.into(), expected, computed, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropositionReport {
    pub proposition: u8,
    pub window: usize,
    pub penalty: Option<String>,
    pub scope: String,
    pub claims: Vec<Claim>,
}

impl PropositionReport {
    pub fn pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }
}

/// Deterministic policy taking `label` wherever it is available.
pub fn policy_choosing<S: Scalar>(mdp: &TabularMdp<S>, name: &str, label: &str) -> Policy<S> {
    let choice: Vec<_> = (0..mdp.num_states())
        .map(|s| (!mdp.is_terminal(s)).then(|| mdp.action_index(s, label).unwrap_or(0)))
        .collect();
    Policy::stationary(name, mdp.horizon, &choice)
}

/// Generates the family for proposition `id` (1 prefix, 2 greedy, 3 aliasing)
/// and checks every stated exact value.
pub fn verify_proposition<S: Scalar>(
    id: u8,
    h: usize,
    penalty: Option<S>,
    class: PolicyClass,
    cap: usize,
) -> Result<PropositionReport> {
    let family = match id {
        1 => Family::Prefix,
        2 => Family::Greedy,
        3 => Family::Aliasing,
        other => return Err(Error::InvalidParam(format!("unknown proposition {other}"))),
    };
    let spec = CounterexampleSpec::new(family, h, penalty.clone())?;
    let (mdp, model) = spec.generate()?;
    let mut claims = vec![Claim::text(
        "generated MDP validates",
        "0 violations".into(),
        format!("{} violations", mdp.validate().len()),
    )];

    let scope = match family {
        Family::Prefix | Family::Aliasing => indistinguishable_pair(&mdp, &model, class, cap, &mut claims)?,
        Family::Greedy => truncation_misorders(&mdp, h, penalty.expect("checked"), class, cap, &mut claims)?,
    };

    if family == Family::Aliasing {
        let identity = ObservationModel::identity(&mdp, h).with_starts([1]);
        let control = check_h_sufficiency(&mdp, &identity, class, cap)?;
        claims.push(Claim::flag(
            "identity features, start 1: sufficient (control)",
            true,
            control.sufficient,
        ));
    }

    Ok(PropositionReport {
        proposition: id,
        window: h,
        penalty: spec.penalty.as_ref().map(Scalar::canonical),
        scope,
        claims,
    })
}

fn indistinguishable_pair<S: Scalar>(
    mdp: &TabularMdp<S>,
    model: &ObservationModel,
    class: PolicyClass,
    cap: usize,
    claims: &mut Vec<Claim>,
) -> Result<String> {
    let pi_l = policy_choosing(mdp, "pi_L", "L");
    let pi_r = policy_choosing(mdp, "pi_R", "R");
    let law_l = segment_distribution(mdp, &pi_l, model)?;
    let law_r = segment_distribution(mdp, &pi_r, model)?;
    claims.push(Claim::flag(
        "segment distributions under pi_L and pi_R are equal",
        true,
        law_l.same_law(&law_r),
    ));
    let j_l = reward_profile(mdp, &pi_l)?.full();
    let j_r = reward_profile(mdp, &pi_r)?.full();
    claims.push(Claim::exact("J(pi_L)", &S::one(), &j_l));
    claims.push(Claim::exact("J(pi_R)", &S::zero(), &j_r));

    let verdict = check_h_sufficiency(mdp, model, class, cap)?;
    claims.push(Claim::flag("H-sufficient", false, verdict.sufficient));
    let (pair, replays) = match &verdict.witness {
        Some(w) => {
            let same_as = |p: &Policy<S>, q: &Policy<S>| {
                // a nonstationary witness is compared on its first row
                p.table.first() == q.table.first()
            };
            let named = match (same_as(&w.first, &pi_l), same_as(&w.second, &pi_r)) {
                (true, true) => "(pi_L, pi_R)".to_string(),
                _ => format!("({}, {})", w.first.name, w.second.name),
            };
            (named, w.replay(mdp, model)?)
        }
        None => ("none".to_string(), false),
    };
    claims.push(Claim::text("witness pair", "(pi_L, pi_R)".into(), pair));
    claims.push(Claim::flag("witness replays exactly", true, replays));
    Ok(verdict.scope.to_string())
}

fn truncation_misorders<S: Scalar>(
    mdp: &TabularMdp<S>,
    h: usize,
    penalty: S,
    class: PolicyClass,
    cap: usize,
    claims: &mut Vec<Claim>,
) -> Result<String> {
    let greedy = policy_choosing(mdp, "all-greedy", "greedy");
    let patient = policy_choosing(mdp, "all-patient", "patient");
    let g = reward_profile(mdp, &greedy)?;
    let p = reward_profile(mdp, &patient)?;
    let bonus = S::from_ratio(h as i64 + 1, 1);

    claims.push(Claim::exact("J_H(all-greedy)", &bonus, &g.truncated(h)));
    claims.push(Claim::exact("J(all-greedy)", &(bonus.clone() - penalty.clone()), &g.full()));
    claims.push(Claim::exact("J_H(all-patient)", &S::zero(), &p.truncated(h)));
    claims.push(Claim::exact("J(all-patient)", &S::zero(), &p.full()));
    claims.push(Claim::exact(
        "gap J(all-patient) - J(all-greedy)",
        &(penalty.clone() - bonus.clone()),
        &(p.full() - g.full()),
    ));

    let report = check_objective_consistency(mdp, h, class, cap)?;
    let greedy_index = position_in(mdp, &greedy, class);
    let patient_index = position_in(mdp, &patient, class);
    claims.push(Claim::exact("max J_H over the class", &bonus, &report.best_truncated));
    claims.push(Claim::flag(
        "all-greedy attains max J_H",
        true,
        report.truncated_argmax.iter().any(|s| Some(s.index) == greedy_index),
    ));
    claims.push(Claim::flag(
        "every J_H maximizer has J = (H+1) - M",
        true,
        report.truncated_argmax.iter().all(|s| s.full == bonus.clone() - penalty.clone()),
    ));
    claims.push(Claim::exact("max J over the class", &S::zero(), &report.best_full));
    claims.push(Claim::flag(
        "all-patient attains max J",
        true,
        report.full_argmax.iter().any(|s| Some(s.index) == patient_index),
    ));
    claims.push(Claim::flag("J_H and J argmax sets intersect", false, report.argmax_intersect));
    Ok(report.scope.to_string())
}

/// Enumeration index of a stationary deterministic policy within `class`.
fn position_in<S: Scalar>(mdp: &TabularMdp<S>, policy: &Policy<S>, class: PolicyClass) -> Option<usize> {
    let choice: Vec<Option<usize>> =
        policy.table[0].iter().map(|cell| cell.as_ref().map(|d| d[0].0)).collect();
    let non_terminal: Vec<usize> = (0..mdp.num_states()).filter(|&s| !mdp.is_terminal(s)).collect();
    let rows = if class.stationary { 1 } else { mdp.horizon };
    let mut index: usize = 0;
    for _ in 0..rows {
        for &s in &non_terminal {
            index = index.checked_mul(mdp.actions[s].len())?.checked_add(choice[s]?)?;
        }
    }
    Some(index)
}
