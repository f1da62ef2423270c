//! Plain-text agent checkpoints.
//!
//! ```text
//! pead-agent v1
//! algorithm <ddpg|ppo>
//! mode <dim3|dim6|pead>
//! dims <obs_dim> <action_dim>
//! pending <0|1>
//! mapping <rows> <cols> <row-major values of F>
//! config_line <toml line>      (zero or more)
//! <networks, each in the dense_net text format>
//! [ddpg only] noise <decay> <sigma_min> <sigma...>
//! end
//! ```
//!
//! DDPG writes actor, critic, target actor, target critic; PPO writes the
//! online trunk, mean and log-std heads, the same three for the old actor
//! (with no optimizer state) and the critic. Replay buffers, rollout
//! stores and random-generator state are not saved; a loaded agent draws
//! from a fresh generator seeded by the caller.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ddpg::DdpgAgent;
use super::memory::{ReplayBuffer, RolloutStore};
use super::noise::NoiseProcess;
use super::ppo::{GaussianActor, PpoAgent};
use super::{ActionMode, Agent, Algorithm, Learner};
use crate::dense_net::{parse_f64s, parse_usize, read_net, write_net, LineReader, Mlp, Optimizer};
use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;
use crate::matrix::Matrix;

pub const MAGIC: &str = "pead-agent";
pub const VERSION: &str = "v1";

pub fn to_text(agent: &Agent) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    let _ = writeln!(out, "algorithm {}", agent.algorithm().as_str());
    let _ = writeln!(out, "mode {}", agent.mode.as_str());
    let _ = writeln!(out, "dims {} {}", agent.obs_dim(), agent.action_dim());
    let _ = writeln!(out, "pending {}", u8::from(agent.pending_extension));
    let f = agent.map.f();
    let _ = write!(out, "mapping {} {}", f.rows(), f.cols());
    for v in f.as_slice() {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
    let config = match &agent.learner {
        Learner::Ddpg(a) => toml::to_string(a.config()),
        Learner::Ppo(a) => toml::to_string(a.config()),
    }
    .expect("agent configs serialize");
    for line in config.lines().filter(|l| !l.trim().is_empty()) {
        let _ = writeln!(out, "config_line {line}");
    }
    match &agent.learner {
        Learner::Ddpg(a) => {
            write_net(&mut out, &a.actor, &a.actor_opt);
            write_net(&mut out, &a.critic, &a.critic_opt);
            write_net(&mut out, &a.target_actor, &Optimizer::Sgd);
            write_net(&mut out, &a.target_critic, &Optimizer::Sgd);
            let (decay, min) = a.noise.parts();
            let _ = write!(out, "noise {decay:e} {min:e}");
            for s in a.noise.sigma() {
                let _ = write!(out, " {s:e}");
            }
            out.push('\n');
        }
        Learner::Ppo(a) => {
            write_net(&mut out, &a.actor.trunk, &a.trunk_opt);
            write_net(&mut out, &a.actor.mean, &a.mean_opt);
            write_net(&mut out, &a.actor.log_std, &a.log_std_opt);
            write_net(&mut out, &a.old_actor.trunk, &Optimizer::Sgd);
            write_net(&mut out, &a.old_actor.mean, &Optimizer::Sgd);
            write_net(&mut out, &a.old_actor.log_std, &Optimizer::Sgd);
            write_net(&mut out, &a.critic, &a.critic_opt);
        }
    }
    out.push_str("end\n");
    out
}

fn single<'a>(reader: &mut LineReader<'a>, tag: &str) -> Result<&'a str> {
    let tokens = reader.next_tagged(tag)?;
    match tokens.as_slice() {
        [one] => Ok(one),
        _ => Err(Error::Checkpoint(format!("'{tag}' expects exactly one value"))),
    }
}

fn expect_dims(net: &Mlp, input: usize, output: usize, what: &str) -> Result<()> {
    if net.input_dim() != input || net.output_dim() != output {
        return Err(Error::Checkpoint(format!(
            "{what}: network is {}→{}, expected {input}→{output}",
            net.input_dim(),
            net.output_dim()
        )));
    }
    Ok(())
}

/// Parses a checkpoint; `seed` seeds the loaded agent's random generator.
pub fn from_text(text: &str, seed: u64) -> Result<Agent> {
    let mut r = LineReader::new(text);
    let header = r.next_tagged(MAGIC)?;
    if header.as_slice() != [VERSION] {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {header:?}")));
    }
    let algo: Algorithm = single(&mut r, "algorithm")?.parse()?;
    let mode: ActionMode = single(&mut r, "mode")?.parse()?;
    let dims = r.next_tagged("dims")?;
    let obs_dim = parse_usize(dims.first(), "obs_dim")?;
    let action_dim = parse_usize(dims.get(1), "action_dim")?;
    let pending = match single(&mut r, "pending")? {
        "0" => false,
        "1" => true,
        other => return Err(Error::Checkpoint(format!("bad pending flag '{other}'"))),
    };
    let m = r.next_tagged("mapping")?;
    let rows = parse_usize(m.first(), "mapping rows")?;
    let cols = parse_usize(m.get(1), "mapping cols")?;
    let values = parse_f64s(&m[2.min(m.len())..], rows * cols, "mapping")?;
    let map = MappingMatrix::new(Matrix::from_vec(rows, cols, values)?)?;
    if action_dim != map.full_dim() && action_dim != map.reduced_dim() {
        return Err(Error::Checkpoint(format!(
            "action_dim {action_dim} does not match the mapping"
        )));
    }

    let mut config = String::new();
    let mut rest = text
        .lines()
        .skip_while(|l| !l.starts_with("config_line") && !l.starts_with("net "));
    for line in rest.by_ref() {
        match line.strip_prefix("config_line") {
            Some(body) => {
                config.push_str(body.trim_start());
                config.push('\n');
            }
            None => break,
        }
    }
    let n_config = config.lines().count();
    for _ in 0..n_config {
        r.next_tagged("config_line")?;
    }

    let rng = ChaCha8Rng::seed_from_u64(seed);
    let learner = match algo {
        Algorithm::Ddpg => {
            let cfg: super::DdpgConfig =
                toml::from_str(&config).map_err(|e| Error::Checkpoint(format!("ddpg config: {e}")))?;
            let (actor, actor_opt) = read_net(&mut r)?;
            let (critic, critic_opt) = read_net(&mut r)?;
            let (target_actor, _) = read_net(&mut r)?;
            let (target_critic, _) = read_net(&mut r)?;
            expect_dims(&actor, obs_dim, action_dim, "actor")?;
            expect_dims(&critic, obs_dim + action_dim, 1, "critic")?;
            if !actor.same_architecture(&target_actor) || !critic.same_architecture(&target_critic) {
                return Err(Error::Checkpoint("target and online architectures differ".into()));
            }
            let noise = r.next_tagged("noise")?;
            let nv = parse_f64s(&noise, 2 + action_dim, "noise")?;
            Learner::Ddpg(DdpgAgent {
                buffer: ReplayBuffer::new(cfg.buffer_capacity),
                noise: NoiseProcess::from_parts(nv[2..].to_vec(), nv[0], nv[1]),
                cfg,
                obs_dim,
                action_dim,
                actor,
                critic,
                target_actor,
                target_critic,
                actor_opt,
                critic_opt,
                rng,
            })
        }
        Algorithm::Ppo => {
            let cfg: super::PpoConfig =
                toml::from_str(&config).map_err(|e| Error::Checkpoint(format!("ppo config: {e}")))?;
            let (trunk, trunk_opt) = read_net(&mut r)?;
            let (mean, mean_opt) = read_net(&mut r)?;
            let (log_std, log_std_opt) = read_net(&mut r)?;
            let old_actor = GaussianActor {
                trunk: read_net(&mut r)?.0,
                mean: read_net(&mut r)?.0,
                log_std: read_net(&mut r)?.0,
            };
            let (critic, critic_opt) = read_net(&mut r)?;
            let actor = GaussianActor { trunk, mean, log_std };
            expect_dims(&actor.trunk, obs_dim, actor.trunk.output_dim(), "trunk")?;
            for (net, what) in [(&actor.mean, "mean head"), (&actor.log_std, "log-std head")] {
                expect_dims(net, actor.trunk.output_dim(), action_dim, what)?;
            }
            expect_dims(&critic, obs_dim, 1, "critic")?;
            if !actor.trunk.same_architecture(&old_actor.trunk)
                || !actor.mean.same_architecture(&old_actor.mean)
                || !actor.log_std.same_architecture(&old_actor.log_std)
            {
                return Err(Error::Checkpoint("old and online actor architectures differ".into()));
            }
            Learner::Ppo(PpoAgent {
                store: RolloutStore::new(cfg.rollout_len),
                cfg,
                obs_dim,
                action_dim,
                actor,
                old_actor,
                critic,
                trunk_opt,
                mean_opt,
                log_std_opt,
                critic_opt,
                rng,
            })
        }
    };
    r.next_tagged("end")?;
    if !r.is_exhausted() {
        return Err(Error::Checkpoint("trailing content after 'end'".into()));
    }
    Ok(Agent {
        learner,
        mode,
        map,
        pending_extension: pending,
    })
}

pub fn save(agent: &Agent, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(agent)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path, seed: u64) -> Result<Agent> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentConfig;

    #[test]
    fn round_trip_preserves_networks_and_flags() {
        for algo in [Algorithm::Ddpg, Algorithm::Ppo] {
            for mode in ActionMode::ALL {
                let mut agent = Agent::new(algo, mode, 7, &AgentConfig::default(), 3).unwrap();
                if mode == ActionMode::Pead {
                    agent.request_extension().unwrap();
                }
                let text = to_text(&agent);
                let back = from_text(&text, 0).unwrap();
                assert_eq!(to_text(&back), text);
                assert_eq!(back.action_dim(), agent.action_dim());
                let s = [0.1, 0.2, -0.3, 0.0, 0.05, -0.1, 0.4];
                assert_eq!(back.greedy_action(&s).unwrap(), agent.greedy_action(&s).unwrap());
            }
        }
    }

    #[test]
    fn rejects_bad_header_and_truncation() {
        let agent = Agent::new(Algorithm::Ddpg, ActionMode::Dim3, 7, &AgentConfig::default(), 3).unwrap();
        let text = to_text(&agent);
        assert!(from_text(&text.replace("v1", "v9"), 0).is_err());
        assert!(from_text(&text[..text.len() / 2], 0).is_err());
        assert!(from_text(&text.replace("dims 7 3", "dims 7 6"), 0).is_err());
    }
}
