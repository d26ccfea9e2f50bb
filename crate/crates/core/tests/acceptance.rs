//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Criteria 1-3 and 7 drive the command-line binary.

mod support;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use horizon_audit::counterexamples::{gen_aliasing, gen_greedy, gen_prefix, policy_choosing};
use horizon_audit::eval::{full_return, truncated_return};
use horizon_audit::observation::{segment_distribution, ObservationModel};
use horizon_audit::offline::{empirical_segments, sample_dataset, tv_distance};
use horizon_audit::policy::{enumerate_deterministic_policies, Policy, PolicyClass};
use horizon_audit::{ExactPolicy, Mdp, Rational};
use num_traits::{One, Zero};
use serde_json::Value;
use support::r;

const BIN: &str = env!("CARGO_BIN_EXE_horizon-audit");
const ORACLE_CASES: u64 = 240;
const SAMPLING_SEED: u64 = 7;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

struct Cli<'a> {
    dir: &'a Path,
}

struct Run {
    code: Option<i32>,
    stdout: Vec<u8>,
    stderr: String,
    elapsed: Duration,
}

impl Run {
    fn json(&self) -> Result<Value, String> {
        serde_json::from_slice(&self.stdout)
            .map_err(|e| format!("report is not JSON: {e}; stderr: {}", self.stderr))
    }
}

impl Cli<'_> {
    fn run(&self, args: &[&str]) -> Run {
        let started = Instant::now();
        let out = Command::new(BIN)
            .current_dir(self.dir)
            .args(args)
            .env_remove("HORIZON_AUDIT_CAP")
            .output()
            .expect("binary runs");
        Run {
            code: out.status.code(),
            stdout: out.stdout,
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            elapsed: started.elapsed(),
        }
    }

    /// Runs and requires exit status 0.
    fn ok(&self, args: &[&str]) -> Result<Run, String> {
        let run = self.run(args);
        if run.code != Some(0) {
            return Err(format!("`{}` exited with {:?}: {}", args.join(" "), run.code, run.stderr.trim()));
        }
        Ok(run)
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn claims_pass(rep: &Value) -> Result<(), String> {
    for c in rep["claims"].as_array().ok_or("no claims in report")? {
        require(c["pass"] == true, || format!("claim failed: {c}"))?;
    }
    require(rep["result"]["pass"] == true, || "report does not pass".into())
}

fn witness_is(rep: &Value, first: &str, second: &str) -> Result<(), String> {
    require(rep["result"]["verdict"] == "not-sufficient", || {
        format!("verdict {}", rep["result"]["verdict"])
    })?;
    let w = &rep["result"]["witness"];
    require(w["first"] == first && w["second"] == second, || format!("witness {w}"))?;
    require(w["first_return"] == "1" && w["second_return"] == "0", || format!("witness returns {w}"))
}

fn prefix(cli: &Cli) -> Check {
    let mut slowest = Duration::ZERO;
    for h in [1, 2, 3, 4, 8] {
        let hs = h.to_string();
        let run = cli.ok(&["verify", "--prop", "1", "--H", &hs])?;
        claims_pass(&run.json()?).map_err(|e| format!("H = {h}: {e}"))?;
        slowest = slowest.max(run.elapsed);

        cli.ok(&["gen", "prefix", "--H", &hs, "-o", "prefix.toml"])?;
        let run = cli.ok(&["check", "--mdp", "prefix.toml", "--obs", "prefix.obs.toml"])?;
        witness_is(&run.json()?, "s0=L", "s0=R").map_err(|e| format!("H = {h}: {e}"))?;
        slowest = slowest.max(run.elapsed);

        // zero-tolerance equality straight from the library
        let (mdp, model) = gen_prefix::<Rational>(h).map_err(|e| e.to_string())?;
        let left = policy_choosing(&mdp, "pi_L", "L");
        let right = policy_choosing(&mdp, "pi_R", "R");
        let same = segment_distribution(&mdp, &left, &model)
            .unwrap()
            .same_law(&segment_distribution(&mdp, &right, &model).unwrap());
        require(same, || format!("H = {h}: window laws differ"))?;
        require(full_return(&mdp, &left).unwrap().is_one(), || format!("H = {h}: J(pi_L) != 1"))?;
        require(full_return(&mdp, &right).unwrap().is_zero(), || format!("H = {h}: J(pi_R) != 0"))?;
    }
    require(slowest < Duration::from_secs(1), || format!("slowest run took {slowest:?}"))?;
    Ok(format!("H in {{1,2,3,4,8}}; slowest run {} ms", slowest.as_millis()))
}

fn greedy(cli: &Cli) -> Check {
    for (h, m) in [(3usize, 10i64), (1, 3), (5, 100)] {
        let (hs, ms) = (h.to_string(), m.to_string());
        let run = cli.ok(&["verify", "--prop", "2", "--H", &hs, "--M", &ms])?;
        claims_pass(&run.json()?).map_err(|e| format!("(H, M) = ({h}, {m}): {e}"))?;

        cli.ok(&["gen", "greedy", "--H", &hs, "--M", &ms, "-o", "greedy.toml"])?;
        let rep = cli.ok(&["ordering", "--mdp", "greedy.toml", "--h", &hs])?.json()?;
        let res = &rep["result"];
        require(res["argmax_intersect"] == false, || format!("({h}, {m}): argmax sets intersect"))?;
        let best = (h + 1).to_string();
        require(res["max_truncated"].as_str() == Some(best.as_str()), || {
            format!("({h}, {m}): max J_H {}", res["max_truncated"])
        })?;
        require(res["max_full"] == "0", || format!("({h}, {m}): max J {}", res["max_full"]))?;

        let (mdp, _) = gen_greedy(h, r(m, 1)).map_err(|e| e.to_string())?;
        let g = policy_choosing(&mdp, "greedy", "greedy");
        let p = policy_choosing(&mdp, "patient", "patient");
        let hp1 = r(h as i64 + 1, 1);
        require(truncated_return(&mdp, &g, h).unwrap() == hp1, || format!("({h}, {m}): J_H(greedy)"))?;
        require(full_return(&mdp, &g).unwrap() == &hp1 - r(m, 1), || format!("({h}, {m}): J(greedy)"))?;
        require(full_return(&mdp, &p).unwrap().is_zero(), || format!("({h}, {m}): J(patient)"))?;
        let gap = full_return(&mdp, &p).unwrap() - full_return(&mdp, &g).unwrap();
        require(gap == r(m, 1) - &hp1, || format!("({h}, {m}): gap {gap}"))?;
    }
    Ok("(H, M) in {(3,10), (1,3), (5,100)}".into())
}

fn aliasing(cli: &Cli) -> Check {
    for h in [1usize, 3, 8] {
        let hs = h.to_string();
        let run = cli.ok(&["verify", "--prop", "3", "--H", &hs])?;
        let rep = run.json()?;
        claims_pass(&rep).map_err(|e| format!("H = {h}: {e}"))?;
        let control =
            rep["claims"].as_array().unwrap().iter().any(|c| {
                c["claim"].as_str().is_some_and(|s| s.contains("control")) && c["computed"] == "true"
            });
        require(control, || format!("H = {h}: identity control missing or not sufficient"))?;

        cli.ok(&["gen", "aliasing", "--H", &hs, "-o", "alias.toml"])?;
        let rep = cli.ok(&["check", "--mdp", "alias.toml", "--obs", "alias.obs.toml"])?.json()?;
        witness_is(&rep, "s0=L", "s0=R").map_err(|e| format!("H = {h}: {e}"))?;
    }
    Ok("H in {1,3,8}, identity control sufficient".into())
}

fn stochastic_even(mdp: &Mdp) -> ExactPolicy {
    let row = (0..mdp.states.len())
        .map(|s| {
            (!mdp.terminal.contains(&s)).then(|| {
                let k = mdp.actions[s].len() as i64;
                (0..mdp.actions[s].len()).map(|a| (a, r(1, k))).collect()
            })
        })
        .collect();
    Policy::stochastic("even", mdp.horizon, row)
}

fn degeneracy() -> Check {
    let mut generated: Vec<(Mdp, ObservationModel)> = Vec::new();
    for h in 1..=8 {
        generated.push(gen_prefix(h).unwrap());
        generated.push(gen_aliasing(h).unwrap());
        generated.push(gen_greedy(h, r(h as i64 + 2, 1)).unwrap());
    }
    for seed in 0..50 {
        let mut g = support::rng(10_000 + seed);
        let mdp = support::random_mdp(&mut g, 6, 4);
        let model = support::random_model(&mut g, &mdp);
        generated.push((mdp, model));
    }
    let mut checked = 0;
    for (mdp, model) in &generated {
        let identity = ObservationModel::identity(mdp, 1);
        let mut policies: Vec<ExactPolicy> =
            enumerate_deterministic_policies(mdp, PolicyClass::STATIONARY, 64)
                .filter_map(|p| p.ok())
                .collect();
        policies.push(stochastic_even(mdp));
        for policy in &policies {
            let full = full_return(mdp, policy).map_err(|e| e.to_string())?;
            for h in mdp.horizon - 1..mdp.horizon + 2 {
                require(truncated_return(mdp, policy, h).unwrap() == full, || {
                    format!("J_h != J at h = {h} for {} on a {}-state MDP", policy.name, mdp.states.len())
                })?;
            }
            for m in [model, &identity] {
                let dist = segment_distribution(mdp, policy, m).map_err(|e| e.to_string())?;
                require(dist.masses().values().all(One::is_one), || {
                    format!("window mass != 1 for {}", policy.name)
                })?;
            }
            checked += 1;
        }
    }
    Ok(format!("{} MDPs, {checked} policies", generated.len()))
}

fn oracle() -> Check {
    let started = Instant::now();
    for seed in 0..ORACLE_CASES {
        support::oracle_case(seed)?;
    }
    let elapsed = started.elapsed();
    require(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("{ORACLE_CASES} random MDPs in {:.1} s", elapsed.as_secs_f64()))
}

fn sampling() -> Check {
    let threshold = r(1, 20);
    let (mdp, bundled) = gen_prefix::<Rational>(3).unwrap();
    let mu = stochastic_even(&mdp);
    let model = ObservationModel::identity(&mdp, 3);
    let exact = segment_distribution(&mdp, &mu, &model).unwrap();
    let data = sample_dataset(&mdp, &mu, 10_000, SAMPLING_SEED).unwrap();
    let stats = empirical_segments(&mdp, &data, &model).unwrap();
    let worst = tv_distance(&stats, &exact).unwrap().into_values().max().unwrap();
    require(worst < threshold, || format!("TV {worst} at n = 10^4"))?;

    let left = policy_choosing(&mdp, "pi_L", "L");
    let right = policy_choosing(&mdp, "pi_R", "R");
    for n in [1, 10, 100, 1000, 10_000] {
        let a = empirical_segments(&mdp, &sample_dataset(&mdp, &left, n, SAMPLING_SEED).unwrap(), &bundled)
            .unwrap();
        let b = empirical_segments(&mdp, &sample_dataset(&mdp, &right, n, SAMPLING_SEED).unwrap(), &bundled)
            .unwrap();
        require(a == b, || format!("L-only and R-only statistics differ at n = {n}"))?;
    }
    Ok(format!("seed {SAMPLING_SEED}, TV {worst} < {threshold}; L/R identical for n up to 10^4"))
}

/// Every report the command-line criteria produce, concatenated.
fn suite_reports(dir: &Path) -> Result<Vec<u8>, String> {
    let cli = Cli { dir };
    let mut out = Vec::new();
    let mut runs: Vec<Vec<String>> = Vec::new();
    for h in ["1", "2", "3", "4", "8"] {
        runs.push(vec!["verify".into(), "--prop".into(), "1".into(), "--H".into(), h.into()]);
    }
    for (h, m) in [("3", "10"), ("1", "3"), ("5", "100")] {
        runs.push(["verify", "--prop", "2", "--H", h, "--M", m].map(String::from).to_vec());
        runs.push(["gen", "greedy", "--H", h, "--M", m, "-o", "g.toml"].map(String::from).to_vec());
        runs.push(["ordering", "--mdp", "g.toml", "--h", h].map(String::from).to_vec());
    }
    for h in ["1", "3", "8"] {
        runs.push(["verify", "--prop", "3", "--H", h].map(String::from).to_vec());
        runs.push(["gen", "aliasing", "--H", h, "-o", "a.toml"].map(String::from).to_vec());
        runs.push(["check", "--mdp", "a.toml", "--obs", "a.obs.toml"].map(String::from).to_vec());
    }
    for args in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        out.extend(cli.ok(&args)?.stdout);
    }
    Ok(out)
}

fn determinism() -> Check {
    let one = tempfile::tempdir().map_err(|e| e.to_string())?;
    let two = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = suite_reports(one.path())?;
    let b = suite_reports(two.path())?;
    require(a == b, || "reports differ between runs".into())?;
    Ok(format!("{} report bytes identical across two runs", a.len()))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let cli = Cli { dir: dir.path() };
    let criteria: Vec<Criterion> = vec![
        ("1 prefix windows hide the first action", Box::new(|| prefix(&cli))),
        ("2 truncated objective prefers the greedy policy", Box::new(|| greedy(&cli))),
        ("3 aliased features hide the branch", Box::new(|| aliasing(&cli))),
        ("4 degenerate truncation and unit window mass", Box::new(degeneracy)),
        ("5 agreement with the enumeration oracle", Box::new(oracle)),
        ("6 sampling consistency", Box::new(sampling)),
        ("7 byte-identical reports", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
