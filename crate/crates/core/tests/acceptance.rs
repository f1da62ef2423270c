//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria 1-4 and 8 are exact properties and fail the test. Criteria 5-7
//! are empirical orderings from full training runs; they are reported but
//! only fail the test when `PEAD_STRICT_ACCEPTANCE=1` is set.

mod common;

/// Prints past the test harness's output capture so the report shows up in
/// a plain `cargo test` run.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, $($arg)*);
        let _ = out.flush();
    }};
}

use std::time::{Duration, Instant};

use pead::agents::{ActionMode, Algorithm};
use pead::assembly_env::{
    contact_wrench, AssemblyEnv, ComplianceGains, EnvConfig, Geometry, Outcome, Pose, PoseRange, Wrench,
};
use pead::harness::config::{default_episodes, default_extension_scale, ExperimentConfig};
use pead::harness::eval::{corner_error, evaluate_policy, EvalReport, Policy};
use pead::harness::metrics::summarize_timing;
use pead::harness::{train, ExperimentResult};
use pead::mapping::MappingMatrix;
use pead::matrix::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const EVAL_SEEDS: u64 = 20;
const EVAL_JITTER: f64 = 0.1;
const SUITE_BUDGET: Duration = Duration::from_secs(45 * 60);

#[derive(Default)]
struct Report {
    hard_failures: Vec<String>,
    soft_failures: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: String, hard: bool) {
        say!("{} {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            let line = format!("{id}: {detail}");
            if hard {
                self.hard_failures.push(line);
            } else {
                self.soft_failures.push(line);
            }
        }
    }
}

fn max_abs(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b)
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let map = MappingMatrix::canonical();
    let f = map.f();
    let pinv = map.f_pinv();
    let id_err = max_abs(&pinv.matmul(f).unwrap(), &Matrix::identity(3));
    let gram = f.transpose().matmul(f).unwrap();
    let diag = Matrix::from_rows(&[&[0.5, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0 / 3.0]]);
    let gram_err = max_abs(&gram, &diag);
    let expected = Matrix::from_rows(&[
        &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
    ]);
    let exact = pinv == &expected;
    let elapsed = t.elapsed();
    r.check(
        "1 mapping algebra",
        id_err <= 1e-12 && gram_err <= 1e-12 && exact && elapsed < Duration::from_secs(1),
        format!(
            "|pinv*F - I| = {id_err:.1e}, |F'F - diag| = {gram_err:.1e} (tol 1e-12), pinv exact = {exact}, {:.3} s (< 1 s)",
            elapsed.as_secs_f64()
        ),
        true,
    );
}

fn criterion_2(r: &mut Report) {
    let t = Instant::now();
    let (ddpg, ppo) = common::surgery_errors(20, 1000);
    let elapsed = t.elapsed();
    let fast = elapsed < Duration::from_secs(10);
    r.check(
        "2 surgery exactness (ddpg)",
        ddpg.actor <= 1e-9 && ddpg.critic <= 1e-9 && fast,
        format!(
            "actor {:.1e}, critic {:.1e} (tol 1e-9), 20 inits x 1000 samples",
            ddpg.actor, ddpg.critic
        ),
        true,
    );
    r.check(
        "2 surgery exactness (ppo)",
        ppo.actor <= 1e-9 && ppo.log_std <= 1e-9 && ppo.critic_bit_identical && fast,
        format!(
            "mean {:.1e}, log-std {:.1e} (tol 1e-9), critic bit-identical = {}, {:.2} s (< 10 s)",
            ppo.actor,
            ppo.log_std,
            ppo.critic_bit_identical,
            elapsed.as_secs_f64()
        ),
        true,
    );
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let errors = common::all_architecture_gradient_errors();
    let elapsed = t.elapsed();
    let (worst_name, worst) = errors
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    r.check(
        "3 gradient correctness",
        worst <= 1e-4 && elapsed < Duration::from_secs(30),
        format!(
            "{} checks, worst {worst:.1e} on {worst_name} (tol 1e-4, abs 1e-7 below 1e-6), {:.2} s (< 30 s)",
            errors.len(),
            elapsed.as_secs_f64()
        ),
        true,
    );
}

fn wrench_norm(w: &Wrench) -> f64 {
    w.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn criterion_4(r: &mut Report) {
    let g = Geometry::default();
    let mut zero = 0.0_f64;
    for i in 0..=60 {
        let pose = Pose {
            z: 0.5 - i as f64 * 0.5,
            ..Pose::default()
        };
        zero = zero.max(wrench_norm(&contact_wrench(&pose, &g)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mirror = 0.0_f64;
    for _ in 0..2000 {
        let e = common::uniform(&mut rng, 6, 1.0);
        let r6 = PoseRange::standard().0;
        let depth = 15.0 + 15.0 * e[2];
        let pose = Pose {
            x: 1.5 * r6[0] * e[0],
            y: 1.5 * r6[1] * e[1],
            z: -depth,
            alpha: 1.5 * r6[3] * e[3],
            beta: 1.5 * r6[4] * e[4],
            gamma: 1.5 * r6[5] * e[5],
        };
        let a = contact_wrench(&pose, &g).mirror_y().to_array();
        let b = contact_wrench(&pose.mirror_y(), &g).to_array();
        for (u, v) in a.iter().zip(b) {
            mirror = mirror.max((u - v).abs());
        }
    }

    let cfg = EnvConfig::default();
    let rollout = |seed: u64| -> Vec<u64> {
        let mut env = AssemblyEnv::new(cfg.clone()).unwrap();
        env.reset(seed, &PoseRange::standard()).unwrap();
        let mut bits = Vec::new();
        while !env.state().done.is_terminal() {
            bits.push(env.step(&ComplianceGains::baseline()).unwrap().to_bits());
            bits.extend(env.state().pose.to_array().map(f64::to_bits));
            bits.extend(env.state().wrench.to_array().map(f64::to_bits));
        }
        bits
    };
    let deterministic = (0..20).all(|s| rollout(s) == rollout(s));

    let mut bounds_ok = true;
    let mut env = AssemblyEnv::new(cfg.clone()).unwrap();
    for seed in 0..200 {
        env.reset(seed, &PoseRange::standard()).unwrap();
        while !env.state().done.is_terminal() {
            env.step(&ComplianceGains::baseline()).unwrap();
        }
        let s = env.state();
        let deep = s.pose.depth() >= cfg.target_depth - 1e-9;
        bounds_ok &= s.step_index <= 100 && ((s.done == Outcome::Success) == deep);
    }

    env.reset_to_error(&[0.0; 6]);
    let mut steps = 0;
    while !env.state().done.is_terminal() {
        env.step(&ComplianceGains::baseline()).unwrap();
        steps += 1;
    }
    let aligned = steps == 50 && env.state().done == Outcome::Success;

    r.check(
        "4 environment physics",
        zero <= 1e-12 && mirror <= 1e-9 && deterministic && bounds_ok && aligned,
        format!(
            "aligned wrench {zero:.1e} N (tol 1e-12), mirror {mirror:.1e} (tol 1e-9), deterministic = {deterministic}, \
             bounds = {bounds_ok}, aligned episode {steps} steps ({:?})",
            env.state().done
        ),
        true,
    );
}

fn criterion_8(r: &mut Report) {
    let (early_rejected, at_sync_ok) = common::ppo_extension_timing();
    r.check(
        "8 ppo extension timing",
        early_rejected && at_sync_ok,
        format!("non-empty store rejected = {early_rejected}, extension after sync = {at_sync_ok}"),
        true,
    );
}

fn run(algo: Algorithm, mode: ActionMode) -> ExperimentResult {
    let mut cfg = ExperimentConfig::default();
    cfg.harness.algorithm = algo;
    cfg.harness.action_mode = mode;
    cfg.harness.seeds = SEEDS.to_vec();
    cfg.harness.episodes = Some(default_episodes(algo));
    if mode == ActionMode::Pead {
        cfg.harness.extension_scale = Some(default_extension_scale(algo));
    }
    let t = Instant::now();
    let result = train(&cfg).unwrap();
    say!(
        "  trained {} {} ({} episodes x {} seeds) in {:.1} s: final-50 {:.3}, episodes to threshold {:.1}, opt {:.3} s",
        algo.as_str(),
        mode.as_str(),
        cfg.episodes(),
        SEEDS.len(),
        t.elapsed().as_secs_f64(),
        result.mean_final_reward(),
        result.mean_episodes_to_threshold(),
        result.mean_opt_seconds()
    );
    result
}

fn criteria_5_6(r: &mut Report, algo: Algorithm, runs: &[ExperimentResult; 3]) {
    let [d3, d6, pead] = runs;
    let a = algo.as_str();
    let (e3, e6, ep) = (
        d3.mean_episodes_to_threshold(),
        d6.mean_episodes_to_threshold(),
        pead.mean_episodes_to_threshold(),
    );
    r.check(
        &format!("5a {a} data efficiency"),
        e3 < e6,
        format!("episodes to threshold dim3 {e3:.1} < dim6 {e6:.1}"),
        false,
    );
    r.check(
        &format!("5b {a} pead data efficiency"),
        ep <= 0.9 * e6,
        format!("episodes to threshold pead {ep:.1} <= 0.9 x dim6 = {:.1}", 0.9 * e6),
        false,
    );
    let (f3, f6, fp) = (d3.mean_final_reward(), d6.mean_final_reward(), pead.mean_final_reward());
    let floor = f6 - 0.05 * f6.abs();
    r.check(
        &format!("5c {a} pead final reward"),
        fp >= floor && fp > f3,
        format!("final-50 pead {fp:.3} >= dim6 - 5% = {floor:.3} and > dim3 {f3:.3}"),
        false,
    );

    let entries: Vec<_> = runs.iter().flat_map(|x| x.timing_entries()).collect();
    let table = summarize_timing(&entries);
    say!("{table}");
    let (t3, t6, tp) = (d3.mean_opt_seconds(), d6.mean_opt_seconds(), pead.mean_opt_seconds());
    r.check(
        &format!("6 {a} timing order"),
        t3 < tp && tp < t6,
        format!("optimizer time dim3 {t3:.3} s < pead {tp:.3} s < dim6 {t6:.3} s"),
        false,
    );
}

fn pooled(reports: &[EvalReport], policy: Policy, tag: Option<&str>) -> (f64, Option<f64>, f64) {
    let rows: Vec<_> = reports
        .iter()
        .filter(|rep| tag.is_none_or(|t| rep.tag == t))
        .flat_map(|rep| rep.rows.iter().filter(|row| row.policy == policy))
        .collect();
    let effort = |row: &&pead::harness::eval::EvalRow| row.record.force_sum + row.record.moment_sum;
    let ok: Vec<_> = rows
        .iter()
        .filter(|row| row.record.outcome == Outcome::Success)
        .collect();
    let rate = ok.len() as f64 / rows.len() as f64;
    let per_success = (!ok.is_empty()).then(|| ok.iter().map(|row| effort(row)).sum::<f64>() / ok.len() as f64);
    let per_episode = rows.iter().map(effort).sum::<f64>() / rows.len() as f64;
    (rate, per_success, per_episode)
}

fn criterion_7(r: &mut Report, algo: Algorithm, pead: &ExperimentResult) {
    let env = &pead.config.assembly_env;
    let seeds: Vec<u64> = (0..EVAL_SEEDS).collect();
    let mut reports = Vec::new();
    for run in &pead.runs {
        for sign in [-1.0, 1.0] {
            reports.push(evaluate_policy(&run.agent, env, &corner_error(sign), &seeds, EVAL_JITTER).unwrap());
        }
    }
    let a = algo.as_str();
    let (tr, te, _) = pooled(&reports, Policy::Trained, None);
    let (br, be, be_ep) = pooled(&reports, Policy::Baseline, None);
    let (tn, _, _) = pooled(&reports, Policy::Trained, Some("robustness"));
    let (bn, _, _) = pooled(&reports, Policy::Baseline, Some("robustness"));
    r.check(
        &format!("7 {a} success vs baseline"),
        tr >= br && tn > bn,
        format!("success trained {tr:.3} >= baseline {br:.3}; negative corner trained {tn:.3} > baseline {bn:.3}"),
        false,
    );
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
    // Without any baseline success, compare against its per-episode effort.
    let (reference, label) = match be {
        Some(v) => (v, "per successful episode"),
        None => (be_ep, "per episode (baseline never succeeds)"),
    };
    r.check(
        &format!("7 {a} effort vs baseline"),
        te.is_some_and(|t| t < reference),
        format!("sum |f| + |m| trained {} < baseline {reference:.1} {label}", fmt(te)),
        false,
    );
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let mut r = Report::default();
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_8(&mut r);

    for algo in [Algorithm::Ddpg, Algorithm::Ppo] {
        let runs = [ActionMode::Dim3, ActionMode::Dim6, ActionMode::Pead].map(|m| run(algo, m));
        criteria_5_6(&mut r, algo, &runs);
        criterion_7(&mut r, algo, &runs[2]);
    }
    let elapsed = start.elapsed();
    r.check(
        "5 suite runtime",
        elapsed < SUITE_BUDGET,
        format!("{:.1} min (< 45 min)", elapsed.as_secs_f64() / 60.0),
        false,
    );

    say!(
        "summary: {} exact failures, {} empirical failures",
        r.hard_failures.len(),
        r.soft_failures.len()
    );
    assert!(
        r.hard_failures.is_empty(),
        "exact criteria failed: {:#?}",
        r.hard_failures
    );
    if std::env::var("PEAD_STRICT_ACCEPTANCE").is_ok_and(|v| v == "1") {
        assert!(
            r.soft_failures.is_empty(),
            "empirical criteria failed: {:#?}",
            r.soft_failures
        );
    }
}
