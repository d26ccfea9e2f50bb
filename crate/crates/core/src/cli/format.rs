//! On-disk formats.
//!
//! MDPs, policies and observation models are TOML documents; datasets are
//! JSON. Every probability and reward is a `"p/q"` string. Unknown fields are
//! rejected, and parse errors carry a line and column.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::mdp::{Outcome, TabularMdp, Violation};
use crate::observation::{ObservationModel, Trajectory};
use crate::offline::OfflineDataset;
use crate::policy::{Policy, PolicyKind};
use crate::scalar::Scalar;

/// A positioned syntax or reference error. `line` and `column` are 1-based;
/// `offset` is the byte offset into the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    fn at(text: &str, offset: usize, message: impl Into<String>) -> Self {
        let offset = offset.min(text.len());
        let before = &text[..offset];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        Self { offset, line, column, message: message.into() }
    }

    fn spanned(text: &str, span: Range<usize>, message: impl Into<String>) -> Self {
        Self::at(text, span.start, message)
    }

    fn from_toml(text: &str, err: toml::de::Error) -> Self {
        let offset = err.span().map_or(0, |s| s.start);
        Self::at(text, offset, err.message().trim().to_string())
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormatError {
    Parse(ParseError),
    Validation(Vec<Violation>),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Parse(e) => write!(f, "parse error at {e}"),
            FormatError::Validation(v) => {
                write!(f, "validation failed:")?;
                for violation in v {
                    write!(f, "\n  {violation}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for FormatError {}

impl From<ParseError> for FormatError {
    fn from(e: ParseError) -> Self {
        FormatError::Parse(e)
    }
}

fn nonempty(text: &str) -> Result<(), ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::at(text, 0, "empty document"));
    }
    Ok(())
}

fn scalar<S: Scalar>(text: &str, value: &Spanned<String>, what: &str) -> Result<S, ParseError> {
    S::parse_ratio(value.get_ref()).ok_or_else(|| {
        ParseError::spanned(
            text,
            value.span(),
            format!("{what} {:?} is not a rational \"p/q\"", value.get_ref()),
        )
    })
}

fn lookup(text: &str, labels: &[String], value: &Spanned<String>, what: &str) -> Result<usize, ParseError> {
    labels.iter().position(|l| l == value.get_ref()).ok_or_else(|| {
        ParseError::spanned(text, value.span(), format!("unknown {what} {:?}", value.get_ref()))
    })
}

// ---------------------------------------------------------------- MDP

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpIn {
    horizon: usize,
    states: Vec<Spanned<String>>,
    #[serde(default)]
    terminal: Vec<Spanned<String>>,
    actions: BTreeMap<Spanned<String>, Vec<Spanned<String>>>,
    initial: BTreeMap<Spanned<String>, Spanned<String>>,
    #[serde(default)]
    transitions: Vec<TransitionIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionIn {
    state: Spanned<String>,
    action: Spanned<String>,
    next: Spanned<String>,
    prob: Spanned<String>,
    reward: Spanned<String>,
}

#[derive(Serialize)]
struct MdpOut {
    horizon: usize,
    states: Vec<String>,
    terminal: Vec<String>,
    actions: BTreeMap<String, Vec<String>>,
    initial: BTreeMap<String, String>,
    transitions: Vec<TransitionOut>,
}

#[derive(Serialize)]
struct TransitionOut {
    state: String,
    action: String,
    next: String,
    prob: String,
    reward: String,
}

/// Parses and validates an MDP document.
pub fn parse_mdp<S: Scalar>(text: &str) -> Result<TabularMdp<S>, FormatError> {
    let mdp = parse_mdp_unchecked(text)?;
    let violations = mdp.validate();
    if violations.is_empty() {
        Ok(mdp)
    } else {
        Err(FormatError::Validation(violations))
    }
}

fn parse_mdp_unchecked<S: Scalar>(text: &str) -> Result<TabularMdp<S>, ParseError> {
    nonempty(text)?;
    let doc: MdpIn = toml::from_str(text).map_err(|e| ParseError::from_toml(text, e))?;
    let mut states = Vec::with_capacity(doc.states.len());
    for s in &doc.states {
        if states.contains(s.get_ref()) {
            return Err(ParseError::spanned(text, s.span(), format!("duplicate state {:?}", s.get_ref())));
        }
        states.push(s.get_ref().clone());
    }
    let n = states.len();

    let mut actions = vec![Vec::new(); n];
    for (state, list) in &doc.actions {
        let s = lookup(text, &states, state, "state")?;
        for a in list {
            if actions[s].contains(a.get_ref()) {
                return Err(ParseError::spanned(
                    text,
                    a.span(),
                    format!("duplicate action {:?}", a.get_ref()),
                ));
            }
            actions[s].push(a.get_ref().clone());
        }
    }

    let mut transitions: Vec<Vec<Vec<Outcome<S>>>> =
        actions.iter().map(|a| vec![Vec::new(); a.len()]).collect();
    for tr in &doc.transitions {
        let s = lookup(text, &states, &tr.state, "state")?;
        let a = lookup(text, &actions[s], &tr.action, &format!("action of {}", states[s]))?;
        let next = lookup(text, &states, &tr.next, "state")?;
        let prob = scalar(text, &tr.prob, "probability")?;
        let reward = scalar(text, &tr.reward, "reward")?;
        transitions[s][a].push(Outcome { next, prob, reward });
    }

    let mut initial = vec![S::zero(); n];
    for (state, p) in &doc.initial {
        let s = lookup(text, &states, state, "state")?;
        initial[s] = scalar(text, p, "initial probability")?;
    }

    let mut terminal = BTreeSet::new();
    for t in &doc.terminal {
        terminal.insert(lookup(text, &states, t, "state")?);
    }

    Ok(TabularMdp { states, actions, transitions, horizon: doc.horizon, initial, terminal })
}

pub fn serialize_mdp<S: Scalar>(mdp: &TabularMdp<S>) -> String {
    let mut transitions = Vec::new();
    for (s, rows) in mdp.transitions.iter().enumerate() {
        for (a, outcomes) in rows.iter().enumerate() {
            for o in outcomes {
                transitions.push(TransitionOut {
                    state: mdp.states[s].clone(),
                    action: mdp.actions[s][a].clone(),
                    next: mdp.states[o.next].clone(),
                    prob: o.prob.canonical(),
                    reward: o.reward.canonical(),
                });
            }
        }
    }
    let doc = MdpOut {
        horizon: mdp.horizon,
        states: mdp.states.clone(),
        terminal: mdp.terminal.iter().map(|&t| mdp.states[t].clone()).collect(),
        actions: mdp.states.iter().cloned().zip(mdp.actions.iter().cloned()).collect(),
        initial: mdp
            .initial
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(s, p)| (mdp.states[s].clone(), p.canonical()))
            .collect(),
        transitions,
    };
    toml::to_string(&doc).expect("MDP documents always serialize")
}

// ---------------------------------------------------------------- policy

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyIn {
    #[serde(default)]
    name: Option<String>,
    horizon: usize,
    #[serde(default)]
    rule: Vec<RuleIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleIn {
    state: Spanned<String>,
    #[serde(default)]
    t: Option<Spanned<usize>>,
    #[serde(default)]
    action: Option<Spanned<String>>,
    #[serde(default)]
    probs: Option<BTreeMap<Spanned<String>, Spanned<String>>>,
}

/// Parses a policy document against `mdp`.
///
/// Rules without `t` apply at every time step; a rule with `t` overrides them
/// at that step. States with a single action default to it.
pub fn parse_policy<S: Scalar>(text: &str, mdp: &TabularMdp<S>) -> Result<Policy<S>, ParseError> {
    nonempty(text)?;
    let doc: PolicyIn = toml::from_str(text).map_err(|e| ParseError::from_toml(text, e))?;
    if doc.horizon != mdp.horizon {
        return Err(ParseError::at(
            text,
            0,
            format!("policy horizon {} does not match MDP horizon {}", doc.horizon, mdp.horizon),
        ));
    }
    let n = mdp.num_states();
    let default_row: Vec<Option<Vec<(usize, S)>>> = (0..n)
        .map(|s| (!mdp.is_terminal(s) && mdp.actions[s].len() == 1).then(|| vec![(0, S::one())]))
        .collect();
    let mut table = vec![default_row; mdp.horizon];
    let mut stochastic = false;
    let mut timed = false;

    // untimed rules first so timed ones override
    let mut rules: Vec<&RuleIn> = doc.rule.iter().collect();
    rules.sort_by_key(|r| r.t.is_some());
    for rule in rules {
        let s = lookup(text, &mdp.states, &rule.state, "state")?;
        let what = format!("action of {}", mdp.states[s]);
        let dist = match (&rule.action, &rule.probs) {
            (Some(a), None) => vec![(lookup(text, &mdp.actions[s], a, &what)?, S::one())],
            (None, Some(probs)) => {
                let mut dist: Vec<(usize, S)> = Vec::new();
                for (a, p) in probs {
                    dist.push((lookup(text, &mdp.actions[s], a, &what)?, scalar(text, p, "probability")?));
                }
                let support: usize = dist.iter().filter(|(_, p)| !p.is_zero()).count();
                stochastic |= support != 1;
                dist
            }
            _ => {
                return Err(ParseError::spanned(
                    text,
                    rule.state.span(),
                    "rule needs exactly one of `action` or `probs`",
                ))
            }
        };
        match &rule.t {
            Some(t) => {
                let step = *t.get_ref();
                if step >= mdp.horizon {
                    return Err(ParseError::spanned(
                        text,
                        t.span(),
                        format!("t = {step} is outside the horizon"),
                    ));
                }
                timed = true;
                table[step][s] = Some(dist);
            }
            None => table.iter_mut().for_each(|row| row[s] = Some(dist.clone())),
        }
    }
    if !timed {
        table.truncate(1);
    }
    Ok(Policy {
        name: doc.name.unwrap_or_else(|| "policy".to_string()),
        kind: if stochastic { PolicyKind::Stochastic } else { PolicyKind::Deterministic },
        stationary: !timed,
        horizon: doc.horizon,
        table,
    })
}

/// Writes a policy as one rule per defined `(t, state)` cell (untimed rules
/// when the policy is stationary).
pub fn serialize_policy<S: Scalar>(policy: &Policy<S>, mdp: &TabularMdp<S>) -> String {
    let mut out =
        format!("name = {}\nhorizon = {}\n", toml::Value::String(policy.name.clone()), policy.horizon);
    for (t, row) in policy.table.iter().enumerate() {
        for (s, cell) in row.iter().enumerate() {
            let Some(dist) = cell else { continue };
            out.push_str("\n[[rule]]\n");
            out.push_str(&format!("state = {}\n", toml::Value::String(mdp.states[s].clone())));
            if !policy.stationary {
                out.push_str(&format!("t = {t}\n"));
            }
            if let [(a, _)] = dist.as_slice() {
                out.push_str(&format!("action = {}\n", toml::Value::String(mdp.actions[s][*a].clone())));
            } else {
                let probs: Vec<String> = dist
                    .iter()
                    .map(|(a, p)| {
                        format!(
                            "{} = {}",
                            toml::Value::String(mdp.actions[s][*a].clone()),
                            toml::Value::String(p.canonical())
                        )
                    })
                    .collect();
                out.push_str(&format!("probs = {{ {} }}\n", probs.join(", ")));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- observation model

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationIn {
    window_length: usize,
    #[serde(default)]
    window_starts: Option<Vec<usize>>,
    #[serde(default = "yes")]
    observe_actions: bool,
    #[serde(default = "yes")]
    observe_rewards: bool,
    #[serde(default)]
    phi: BTreeMap<Spanned<String>, String>,
    /// Feature ids in order; defaults to first use in state order.
    #[serde(default)]
    features: Option<Spanned<Vec<String>>>,
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct ObservationOut {
    window_length: usize,
    window_starts: Vec<usize>,
    observe_actions: bool,
    observe_rewards: bool,
    features: Vec<String>,
    phi: BTreeMap<String, String>,
}

/// Parses an observation model. States missing from `phi` keep their own
/// label as feature; `window_starts` defaults to every valid start.
pub fn parse_observation<S: Scalar>(text: &str, mdp: &TabularMdp<S>) -> Result<ObservationModel, ParseError> {
    nonempty(text)?;
    let doc: ObservationIn = toml::from_str(text).map_err(|e| ParseError::from_toml(text, e))?;
    let mut labels = mdp.states.clone();
    for (state, feature) in &doc.phi {
        let s = lookup(text, &mdp.states, state, "state")?;
        labels[s] = feature.clone();
    }
    let mut model = ObservationModel::identity(mdp, doc.window_length)
        .with_feature_labels(labels)
        .with_actions(doc.observe_actions)
        .with_rewards(doc.observe_rewards);
    if let Some(order) = &doc.features {
        let mut sorted = order.get_ref().clone();
        sorted.sort();
        let mut used = model.features.clone();
        used.sort();
        if sorted != used {
            return Err(ParseError::at(
                text,
                order.span().start,
                format!("features must list each feature exactly once: {}", used.join(", ")),
            ));
        }
        let position: BTreeMap<&str, usize> =
            order.get_ref().iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        model.phi = model.phi.iter().map(|&f| position[model.features[f].as_str()]).collect();
        model.features = order.get_ref().clone();
    }
    if let Some(starts) = doc.window_starts {
        model = model.with_starts(starts);
    }
    Ok(model)
}

pub fn serialize_observation<S: Scalar>(model: &ObservationModel, mdp: &TabularMdp<S>) -> String {
    let phi = mdp
        .states
        .iter()
        .zip(model.feature_labels())
        .filter(|(s, f)| s.as_str() != *f)
        .map(|(s, f)| (s.clone(), f.to_string()))
        .collect();
    let doc = ObservationOut {
        window_length: model.window_length,
        window_starts: model.window_starts.iter().copied().collect(),
        observe_actions: model.observe_actions,
        observe_rewards: model.observe_rewards,
        features: model.features.clone(),
        phi,
    };
    toml::to_string(&doc).expect("observation documents always serialize")
}

// ---------------------------------------------------------------- dataset

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    behavior: String,
    seed: u64,
    n: usize,
    horizon: usize,
    trajectories: Vec<TrajectoryDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    states: Vec<String>,
    actions: Vec<String>,
    rewards: Vec<String>,
}

/// Canonical JSON: fixed key order, labels instead of indices, one
/// trajectory per line.
pub fn serialize_dataset<S: Scalar>(data: &OfflineDataset<S>, mdp: &TabularMdp<S>) -> String {
    let doc = DatasetDoc {
        behavior: data.behavior.clone(),
        seed: data.seed,
        n: data.len(),
        horizon: mdp.horizon,
        trajectories: data
            .trajectories
            .iter()
            .map(|t| TrajectoryDoc {
                states: t.states.iter().map(|&s| mdp.states[s].clone()).collect(),
                actions: t.actions.iter().zip(&t.states).map(|(&a, &s)| mdp.actions[s][a].clone()).collect(),
                rewards: t.rewards.iter().map(Scalar::canonical).collect(),
            })
            .collect(),
    };
    let mut out = String::new();
    out.push_str(&format!(
        "{{\"behavior\":{},\"seed\":{},\"n\":{},\"horizon\":{},\"trajectories\":[",
        serde_json::to_string(&doc.behavior).expect("string"),
        doc.seed,
        doc.n,
        doc.horizon
    ));
    for (i, t) in doc.trajectories.iter().enumerate() {
        out.push_str(if i == 0 { "\n" } else { ",\n" });
        out.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
    }
    out.push_str("\n]}\n");
    out
}

pub fn parse_dataset<S: Scalar>(text: &str, mdp: &TabularMdp<S>) -> Result<OfflineDataset<S>, ParseError> {
    nonempty(text)?;
    let doc: DatasetDoc = serde_json::from_str(text).map_err(|e| {
        let line_start: usize =
            text.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
        ParseError::at(text, line_start + e.column().saturating_sub(1), e.to_string())
    })?;
    if doc.n != doc.trajectories.len() {
        return Err(ParseError::at(
            text,
            0,
            format!("n = {} but {} trajectories", doc.n, doc.trajectories.len()),
        ));
    }
    if doc.horizon != mdp.horizon {
        return Err(ParseError::at(text, 0, "dataset horizon does not match the MDP"));
    }
    let mut trajectories = Vec::with_capacity(doc.n);
    for (i, t) in doc.trajectories.iter().enumerate() {
        let err = |msg: String| ParseError::at(text, 0, format!("trajectory {i}: {msg}"));
        let states = t
            .states
            .iter()
            .map(|s| mdp.state_index(s).ok_or_else(|| err(format!("unknown state {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let actions = t
            .actions
            .iter()
            .enumerate()
            .map(|(k, a)| {
                states
                    .get(k)
                    .and_then(|&s| mdp.action_index(s, a))
                    .ok_or_else(|| err(format!("unknown action {a:?} at t={k}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rewards = t
            .rewards
            .iter()
            .map(|r| S::parse_ratio(r).ok_or_else(|| err(format!("bad reward {r:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let traj = Trajectory { states, actions, rewards };
        traj.check_against(mdp).map_err(|e| err(e.to_string()))?;
        trajectories.push(traj);
    }
    Ok(OfflineDataset { behavior: doc.behavior, seed: doc.seed, trajectories })
}
