//! Tabular finite-horizon MDPs.
//!
//! States and actions are opaque labels; their position in the label lists is
//! the canonical index used everywhere else. Rewards are attached to
//! transitions, `r(s, a, s')`.

use std::collections::BTreeSet;
use std::fmt;

use crate::scalar::Scalar;

/// One successor of a `(state, action)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<S> {
    pub next: usize,
    pub prob: S,
    pub reward: S,
}

impl<S: Scalar> Outcome<S> {
    pub fn new(next: usize, prob: S, reward: S) -> Self {
        Self { next, prob, reward }
    }

    /// Probability-one transition.
    pub fn certain(next: usize, reward: S) -> Self {
        Self::new(next, S::one(), reward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<S> {
    pub states: Vec<String>,
    /// Available action labels, per state.
    pub actions: Vec<Vec<String>>,
    /// `transitions[state][action]` lists the outcomes of that pair.
    pub transitions: Vec<Vec<Vec<Outcome<S>>>>,
    /// Number of decision steps `T`.
    pub horizon: usize,
    /// Dense initial distribution, one entry per state.
    pub initial: Vec<S>,
    pub terminal: BTreeSet<usize>,
}

/// A single broken invariant, named by the offending labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroHorizon,
    NoActions { state: String },
    ShapeMismatch { state: String },
    ProbabilitySum { state: String, action: String, sum: String },
    NegativeProbability { state: String, action: String },
    NextOutOfRange { state: String, action: String, next: usize },
    TerminalNotAbsorbing { state: String },
    TerminalOutOfRange { index: usize },
    InitialLength { expected: usize, found: usize },
    InitialSum { sum: String },
    NegativeInitial { state: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroHorizon => write!(f, "horizon must be positive"),
            Violation::NoActions { state } => write!(f, "state {state} has no actions"),
            Violation::ShapeMismatch { state } => {
                write!(f, "state {state}: transition rows do not match its action list")
            }
            Violation::ProbabilitySum { state, action, sum } => {
                write!(f, "({state}, {action}): probabilities sum to {sum}, expected 1")
            }
            Violation::NegativeProbability { state, action } => {
                write!(f, "({state}, {action}): negative probability")
            }
            Violation::NextOutOfRange { state, action, next } => {
                write!(f, "({state}, {action}): next state index {next} out of range")
            }
            Violation::TerminalNotAbsorbing { state } => {
                write!(f, "terminal state {state} must have exactly one action that self-loops with reward 0")
            }
            Violation::TerminalOutOfRange { index } => {
                write!(f, "terminal state index {index} out of range")
            }
            Violation::InitialLength { expected, found } => {
                write!(f, "initial distribution has {found} entries, expected {expected}")
            }
            Violation::InitialSum { sum } => {
                write!(f, "initial distribution sums to {sum}, expected 1")
            }
            Violation::NegativeInitial { state } => {
                write!(f, "initial probability of {state} is negative")
            }
        }
    }
}

impl<S: Scalar> TabularMdp<S> {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn action_index(&self, state: usize, label: &str) -> Option<usize> {
        self.actions.get(state)?.iter().position(|a| a == label)
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal.contains(&state)
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Outcome<S>] {
        &self.transitions[state][action]
    }

    /// Every invariant violation; empty iff the MDP is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        validate_mdp(self)
    }

    /// Same MDP with every reward multiplied by `factor`.
    pub fn scale_rewards(&self, factor: &S) -> Self {
        let mut scaled = self.clone();
        for outcome in scaled.transitions.iter_mut().flatten().flatten() {
            outcome.reward = outcome.reward.clone() * factor.clone();
        }
        scaled
    }
}

/// Lists every violated invariant. Pure; calling it twice gives the same list.
pub fn validate_mdp<S: Scalar>(mdp: &TabularMdp<S>) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = mdp.states.len();
    let label = |i: usize| mdp.states.get(i).cloned().unwrap_or_else(|| format!("#{i}"));

    if mdp.horizon == 0 {
        out.push(Violation::ZeroHorizon);
    }

    for s in 0..n {
        let actions = mdp.actions.get(s).map(Vec::as_slice).unwrap_or(&[]);
        let rows = mdp.transitions.get(s).map(Vec::as_slice).unwrap_or(&[]);
        if actions.is_empty() {
            out.push(Violation::NoActions { state: label(s) });
            continue;
        }
        if rows.len() != actions.len() {
            out.push(Violation::ShapeMismatch { state: label(s) });
            continue;
        }
        for (a, outcomes) in rows.iter().enumerate() {
            let pair = || (label(s), actions[a].clone());
            let mut sum = S::zero();
            let mut negative = false;
            for o in outcomes {
                if o.next >= n {
                    let (state, action) = pair();
                    out.push(Violation::NextOutOfRange { state, action, next: o.next });
                }
                if o.prob.is_negative() {
                    negative = true;
                }
                sum = sum + o.prob.clone();
            }
            if negative {
                let (state, action) = pair();
                out.push(Violation::NegativeProbability { state, action });
            }
            if !sum.same(&S::one()) {
                let (state, action) = pair();
                out.push(Violation::ProbabilitySum { state, action, sum: sum.canonical() });
            }
        }
    }
    if mdp.actions.len() != n || mdp.transitions.len() != n {
        out.push(Violation::ShapeMismatch { state: "<state table>".into() });
    }

    for &t in &mdp.terminal {
        if t >= n {
            out.push(Violation::TerminalOutOfRange { index: t });
            continue;
        }
        let absorbing = match mdp.transitions.get(t).map(Vec::as_slice) {
            Some([only]) => {
                let mut sum = S::zero();
                let mut ok = true;
                for o in only {
                    if o.prob.is_zero() {
                        continue;
                    }
                    ok &= o.next == t && o.reward.is_zero();
                    sum = sum + o.prob.clone();
                }
                ok && sum.same(&S::one())
            }
            _ => false,
        };
        if !absorbing || mdp.actions.get(t).map_or(0, Vec::len) != 1 {
            out.push(Violation::TerminalNotAbsorbing { state: label(t) });
        }
    }

    if mdp.initial.len() != n {
        out.push(Violation::InitialLength { expected: n, found: mdp.initial.len() });
    } else {
        for (s, p) in mdp.initial.iter().enumerate() {
            if p.is_negative() {
                out.push(Violation::NegativeInitial { state: label(s) });
            }
        }
        let sum: S = mdp.initial.iter().cloned().sum();
        if !sum.same(&S::one()) {
            out.push(Violation::InitialSum { sum: sum.canonical() });
        }
    }
    out
}

/// Incremental constructor used by the generators and tests.
#[derive(Debug, Clone)]
pub struct MdpBuilder<S> {
    mdp: TabularMdp<S>,
}

impl<S: Scalar> MdpBuilder<S> {
    pub fn new(horizon: usize) -> Self {
        Self {
            mdp: TabularMdp {
                states: Vec::new(),
                actions: Vec::new(),
                transitions: Vec::new(),
                horizon,
                initial: Vec::new(),
                terminal: BTreeSet::new(),
            },
        }
    }

    pub fn state(&mut self, label: impl Into<String>) -> usize {
        self.mdp.states.push(label.into());
        self.mdp.actions.push(Vec::new());
        self.mdp.transitions.push(Vec::new());
        self.mdp.initial.push(S::zero());
        self.mdp.states.len() - 1
    }

    pub fn action(&mut self, state: usize, label: impl Into<String>, outcomes: Vec<Outcome<S>>) -> &mut Self {
        self.mdp.actions[state].push(label.into());
        self.mdp.transitions[state].push(outcomes);
        self
    }

    /// Absorbing zero-reward state with a single `stay` action.
    pub fn terminal(&mut self, label: impl Into<String>) -> usize {
        let s = self.state(label);
        self.action(s, "stay", vec![Outcome::certain(s, S::zero())]);
        self.mdp.terminal.insert(s);
        s
    }

    pub fn initial(&mut self, state: usize, prob: S) -> &mut Self {
        self.mdp.initial[state] = prob;
        self
    }

    pub fn build(self) -> TabularMdp<S> {
        self.mdp
    }
}
