//! Command-line front end.
//!
//! Every command prints one JSON report on stdout. Exit status: 0 on success,
//! 1 when a proposition check fails, 2 on usage, parse or validation errors.

pub mod format;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::counterexamples::{verify_proposition, CounterexampleSpec, Family};
use crate::eval::reward_profile;
use crate::mdp::TabularMdp;
use crate::observation::segment_distribution;
use crate::offline::sample_dataset;
use crate::policy::PolicyClass;
use crate::scalar::Scalar;
use crate::sufficiency::{check_h_sufficiency, check_objective_consistency};
use crate::Rational;

use format::{
    parse_mdp, parse_observation, parse_policy, serialize_dataset, serialize_mdp, serialize_observation,
};
use report::{content_hash, RunReport};

/// Environment variable holding the default policy-enumeration cap.
pub const CAP_ENV: &str = "HORIZON_AUDIT_CAP";
pub const DEFAULT_CAP: usize = 1_000_000;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "horizon-audit",
    version,
    about = "Exact checks of horizon-reduced learning interfaces on tabular MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ClassArgs {
    /// Enumerate time-indexed policies instead of stationary ones.
    #[arg(long)]
    pub nonstationary: bool,
    /// Maximum number of policies to enumerate (default from HORIZON_AUDIT_CAP, else 10^6).
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a counterexample MDP and its observation model.
    Gen {
        family: String,
        #[arg(long = "H")]
        window: usize,
        #[arg(long = "M")]
        penalty: Option<String>,
        /// MDP output path; the observation model goes next to it as `<stem>.obs.toml`.
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Exact full (and optionally truncated) return of a policy.
    Eval {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        truncate: Option<usize>,
    },
    /// Exact distribution of observed windows under a policy.
    Segdist {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        obs: PathBuf,
    },
    /// Decide H-sufficiency over an enumerated policy class.
    Check {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        obs: PathBuf,
        #[command(flatten)]
        class: ClassArgs,
    },
    /// Compare the truncated and full-horizon policy orderings.
    Ordering {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long = "h")]
        h: usize,
        #[command(flatten)]
        class: ClassArgs,
    },
    /// Generate a counterexample and check its proposition.
    Verify {
        #[arg(long = "prop")]
        prop: u8,
        #[arg(long = "H")]
        window: usize,
        #[arg(long = "M")]
        penalty: Option<String>,
        #[command(flatten)]
        class: ClassArgs,
    },
    /// Sample an offline dataset under a behavior policy.
    Sample {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        behavior: PathBuf,
        #[arg(long = "n")]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

/// Result of a command: report plus whether a verification failed.
pub struct Outcome {
    pub report: RunReport,
    pub failed: bool,
}

/// Parses `args` (including the program name), runs the command, and prints
/// the report or the error. Returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            // a closed pipe (e.g. `| head`) is not an error worth a panic
            let _ = writeln!(std::io::stdout().lock(), "{}", outcome.report.render());
            if outcome.failed {
                EXIT_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(message) => {
            eprintln!("error: {message}");
            EXIT_USAGE
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

fn cap_of(args: &ClassArgs) -> Result<usize, String> {
    if let Some(cap) = args.cap {
        return Ok(cap);
    }
    match std::env::var(CAP_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| format!("{CAP_ENV} must be a positive integer, got {v:?}")),
        Err(_) => Ok(DEFAULT_CAP),
    }
}

fn class_of(args: &ClassArgs) -> PolicyClass {
    PolicyClass { stationary: !args.nonstationary }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_mdp(path: &Path, report: &mut RunReport) -> Result<TabularMdp<Rational>, String> {
    let text = read(path)?;
    report.input("mdp", &text);
    parse_mdp(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn penalty_of(text: Option<&str>) -> Result<Option<Rational>, String> {
    text.map(|m| Rational::parse_ratio(m).ok_or_else(|| format!("M must be a rational \"p/q\", got {m:?}")))
        .transpose()
}

/// Path of the observation model written next to an MDP file.
pub fn observation_path(mdp_path: &Path) -> PathBuf {
    let name = mdp_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name.strip_suffix(".toml").unwrap_or(&name);
    mdp_path.with_file_name(format!("{stem}.obs.toml"))
}

fn s<T: Scalar>(v: &T) -> Value {
    Value::String(v.canonical())
}

/// Runs one command without printing.
pub fn execute(command: &Command) -> Result<Outcome, String> {
    match command {
        Command::Gen { family, window, penalty, out } => {
            let family: Family = family.parse().map_err(|e: crate::Error| e.to_string())?;
            let spec = CounterexampleSpec::new(family, *window, penalty_of(penalty.as_deref())?)
                .map_err(|e| e.to_string())?;
            let (mdp, model) = spec.generate().map_err(|e| e.to_string())?;
            let mdp_text = serialize_mdp(&mdp);
            let obs_text = serialize_observation(&model, &mdp);
            let obs_path = observation_path(out);
            write(out, &mdp_text)?;
            write(&obs_path, &obs_text)?;
            let mut report = RunReport::new("gen");
            report.set(
                "result",
                json!({
                    "family": family.to_string(),
                    "H": window,
                    "M": spec.penalty.as_ref().map(s),
                    "horizon": mdp.horizon,
                    "states": mdp.num_states(),
                    "mdp": { "path": out.display().to_string(), "sha256": content_hash(&mdp_text) },
                    "obs": { "path": obs_path.display().to_string(), "sha256": content_hash(&obs_text) },
                }),
            );
            Ok(Outcome { report, failed: false })
        }

        Command::Eval { mdp, policy, truncate } => {
            let mut report = RunReport::new("eval");
            let mdp = load_mdp(mdp, &mut report)?;
            let text = read(policy)?;
            report.input("policy", &text);
            let policy = parse_policy(&text, &mdp).map_err(|e| e.to_string())?;
            let profile = reward_profile(&mdp, &policy).map_err(|e| e.to_string())?;
            let mut result = json!({
                "policy": policy.name,
                "full_return": s(&profile.full()),
                "step_rewards": profile.step_rewards.iter().map(s).collect::<Vec<_>>(),
            });
            if let Some(h) = truncate {
                result["truncated_return"] = json!({ "h": h, "value": s(&profile.truncated(*h)) });
            }
            report.set("result", result);
            Ok(Outcome { report, failed: false })
        }

        Command::Segdist { mdp, policy, obs } => {
            let mut report = RunReport::new("segdist");
            let mdp = load_mdp(mdp, &mut report)?;
            let policy_text = read(policy)?;
            report.input("policy", &policy_text);
            let policy = parse_policy(&policy_text, &mdp).map_err(|e| e.to_string())?;
            let obs_text = read(obs)?;
            report.input("obs", &obs_text);
            let model = parse_observation(&obs_text, &mdp).map_err(|e| e.to_string())?;
            let law = segment_distribution(&mdp, &policy, &model).map_err(|e| e.to_string())?;
            let per_start: serde_json::Map<String, Value> = law
                .per_start
                .iter()
                .map(|(t, dist)| {
                    let rows: Vec<Value> = dist
                        .iter()
                        .map(|(seg, p)| json!({ "segment": seg.render(&model), "prob": s(p) }))
                        .collect();
                    (t.to_string(), Value::Array(rows))
                })
                .collect();
            report.set("result", json!({ "policy": policy.name, "per_start": per_start }));
            Ok(Outcome { report, failed: false })
        }

        Command::Check { mdp, obs, class } => {
            let mut report = RunReport::new("check");
            let mdp = load_mdp(mdp, &mut report)?;
            let obs_text = read(obs)?;
            report.input("obs", &obs_text);
            let model = parse_observation(&obs_text, &mdp).map_err(|e| e.to_string())?;
            let verdict = check_h_sufficiency(&mdp, &model, class_of(class), cap_of(class)?)
                .map_err(|e| e.to_string())?;
            let witness = verdict.witness.as_ref().map(|w| {
                json!({
                    "first": w.first.name,
                    "second": w.second.name,
                    "first_return": s(&w.first_return),
                    "second_return": s(&w.second_return),
                    "gap": s(&w.gap),
                })
            });
            report.set(
                "result",
                json!({
                    "verdict": if verdict.sufficient { "sufficient" } else { "not-sufficient" },
                    "witness": witness,
                }),
            );
            report.set("scope", Value::String(verdict.scope.to_string()));
            Ok(Outcome { report, failed: false })
        }

        Command::Ordering { mdp, h, class } => {
            let mut report = RunReport::new("ordering");
            let mdp = load_mdp(mdp, &mut report)?;
            let rep = check_objective_consistency(&mdp, *h, class_of(class), cap_of(class)?)
                .map_err(|e| e.to_string())?;
            let names = |set: &[crate::sufficiency::ScoredPolicy<Rational>]| {
                set.iter().map(|p| Value::String(p.name.clone())).collect::<Vec<_>>()
            };
            let discordant = rep.discordant.as_ref().map(|(a, b)| {
                json!([
                    { "policy": a.name, "truncated": s(&a.truncated), "full": s(&a.full) },
                    { "policy": b.name, "truncated": s(&b.truncated), "full": s(&b.full) },
                ])
            });
            report.set(
                "result",
                json!({
                    "h": h,
                    "max_truncated": s(&rep.best_truncated),
                    "max_full": s(&rep.best_full),
                    "truncated_argmax": names(&rep.truncated_argmax),
                    "full_argmax": names(&rep.full_argmax),
                    "argmax_intersect": rep.argmax_intersect,
                    "ordering_consistent": rep.ordering_consistent,
                    "consistent": rep.consistent(),
                    "discordant_pair": discordant,
                }),
            );
            report.set("scope", Value::String(rep.scope.to_string()));
            Ok(Outcome { report, failed: false })
        }

        Command::Verify { prop, window, penalty, class } => {
            let rep = verify_proposition(
                *prop,
                *window,
                penalty_of(penalty.as_deref())?,
                class_of(class),
                cap_of(class)?,
            )
            .map_err(|e| e.to_string())?;
            let mut report = RunReport::new("verify");
            report.set(
                "result",
                json!({
                    "proposition": rep.proposition,
                    "H": rep.window,
                    "M": rep.penalty,
                    "pass": rep.pass(),
                }),
            );
            report.set("scope", Value::String(rep.scope.clone()));
            report.set(
                "claims",
                Value::Array(
                    rep.claims
                        .iter()
                        .map(|c| {
                            json!({
                                "claim": c.description,
                                "expected": c.expected,
                                "computed": c.computed,
                                "pass": c.pass,
                            })
                        })
                        .collect(),
                ),
            );
            Ok(Outcome { report, failed: !rep.pass() })
        }

        Command::Sample { mdp, behavior, n, seed, out } => {
            let mut report = RunReport::new("sample");
            let mdp = load_mdp(mdp, &mut report)?;
            let text = read(behavior)?;
            report.input("behavior", &text);
            let mu = parse_policy(&text, &mdp).map_err(|e| e.to_string())?;
            let data = sample_dataset(&mdp, &mu, *n, *seed).map_err(|e| e.to_string())?;
            let json_text = serialize_dataset(&data, &mdp);
            write(out, &json_text)?;
            report.set(
                "result",
                json!({
                    "behavior": data.behavior,
                    "n": data.len(),
                    "seed": seed,
                    "rng": "ChaCha8, seed_from_u64(seed), stream = trajectory index",
                    "dataset": { "path": out.display().to_string(), "sha256": content_hash(&json_text) },
                }),
            );
            Ok(Outcome { report, failed: false })
        }
    }
}
