//! Checks shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use pead::agents::ppo::{ActorGradients, ActorTrace, GaussianActor};
use pead::agents::{DdpgAgent, DdpgConfig, PpoAgent, PpoConfig, RolloutStep};
use pead::dense_net::{GradientSet, Mlp};
use pead::mapping::MappingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OBS: usize = 7;
pub const FD_STEP: f64 = 1e-5;

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-half..=half)).collect()
}

/// Relative error with an absolute floor for tiny magnitudes.
pub fn gradient_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-6 {
        // Below 1e-6 the bound is absolute (1e-7); rescale to the 1e-4 budget.
        (analytic - numeric).abs() * 1e-4 / 1e-7
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Visits every scalar parameter of `net` as `(layer, is_bias, index)`.
fn params(net: &Mlp) -> Vec<(usize, bool, usize)> {
    let mut out = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        out.extend((0..layer.w.as_slice().len()).map(|i| (l, false, i)));
        out.extend((0..layer.b.len()).map(|i| (l, true, i)));
    }
    out
}

fn param_mut(net: &mut Mlp, (l, bias, i): (usize, bool, usize)) -> &mut f64 {
    let layer = &mut net.layers_mut()[l];
    if bias {
        &mut layer.b[i]
    } else {
        &mut layer.w.as_mut_slice()[i]
    }
}

fn grad_of(g: &GradientSet, (l, bias, i): (usize, bool, usize)) -> f64 {
    if bias {
        g.layers[l].db[i]
    } else {
        g.layers[l].dw.as_slice()[i]
    }
}

/// Worst error of `Mlp::backward` against central differences of
/// `u · net(x)`, over all parameters and inputs.
pub fn mlp_gradient_error(net: &Mlp, x: &[f64], u: &[f64]) -> f64 {
    let (grads, dx) = net.backward(x, u).unwrap();
    let f = |n: &Mlp, x: &[f64]| dot(u, &n.forward(x).unwrap());
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for p in params(net) {
        let orig = *param_mut(&mut probe, p);
        *param_mut(&mut probe, p) = orig + FD_STEP;
        let plus = f(&probe, x);
        *param_mut(&mut probe, p) = orig - FD_STEP;
        let minus = f(&probe, x);
        *param_mut(&mut probe, p) = orig;
        worst = worst.max(gradient_error(grad_of(&grads, p), (plus - minus) / (2.0 * FD_STEP)));
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += FD_STEP;
        let mut xm = x.to_vec();
        xm[i] -= FD_STEP;
        worst = worst.max(gradient_error(dx[i], (f(net, &xp) - f(net, &xm)) / (2.0 * FD_STEP)));
    }
    worst
}

fn part_mut(a: &mut GaussianActor, part: usize) -> &mut Mlp {
    match part {
        0 => &mut a.trunk,
        1 => &mut a.mean,
        _ => &mut a.log_std,
    }
}

/// Worst error of the Gaussian actor's log-prob gradient.
pub fn actor_gradient_error(actor: &GaussianActor, state: &[f64], raw: &[f64], bounds: (f64, f64)) -> f64 {
    let mut trace = ActorTrace::default();
    actor.log_prob_forward(state, raw, bounds, &mut trace).unwrap();
    let mut grads = ActorGradients::zeros_like(actor);
    actor.log_prob_backward(&trace, raw, bounds, 1.0, &mut grads).unwrap();
    let logp = |a: &GaussianActor| {
        let mut t = ActorTrace::default();
        a.log_prob_forward(state, raw, bounds, &mut t).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut probe = actor.clone();
    for part in 0..3 {
        let net = match part {
            0 => &actor.trunk,
            1 => &actor.mean,
            _ => &actor.log_std,
        };
        let g = match part {
            0 => &grads.trunk,
            1 => &grads.mean,
            _ => &grads.log_std,
        };
        for p in params(net) {
            let orig = *param_mut(part_mut(&mut probe, part), p);
            *param_mut(part_mut(&mut probe, part), p) = orig + FD_STEP;
            let plus = logp(&probe);
            *param_mut(part_mut(&mut probe, part), p) = orig - FD_STEP;
            let minus = logp(&probe);
            *param_mut(part_mut(&mut probe, part), p) = orig;
            worst = worst.max(gradient_error(grad_of(g, p), (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Gradient errors of every network architecture the agents build, for
/// both the 3- and 6-dimensional action spaces.
pub fn all_architecture_gradient_errors() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for dim in [3, 6] {
        for seed in 0..3 {
            let d = DdpgAgent::new(OBS, dim, DdpgConfig::default(), seed).unwrap();
            let p = PpoAgent::new(OBS, dim, PpoConfig::default(), seed).unwrap();
            let s = uniform(&mut rng, OBS, 1.0);
            let a = uniform(&mut rng, dim, 0.8);
            let sa: Vec<f64> = s.iter().chain(&a).copied().collect();
            let u = uniform(&mut rng, dim, 1.0);
            out.push((format!("ddpg actor {dim}-dim"), mlp_gradient_error(d.actor(), &s, &u)));
            out.push((
                format!("ddpg critic {dim}-dim"),
                mlp_gradient_error(d.critic(), &sa, &[1.0]),
            ));
            out.push((
                format!("ppo critic {dim}-dim"),
                mlp_gradient_error(p.critic(), &s, &[1.0]),
            ));
            let actor = p.actor();
            let bounds = (p.config().log_std_min, p.config().log_std_max);
            let raw = uniform(&mut rng, dim, 0.8);
            out.push((
                format!("ppo actor {dim}-dim"),
                actor_gradient_error(actor, &s, &raw, bounds),
            ));
            let tight = (-1.3, -1.1);
            out.push((
                format!("ppo actor {dim}-dim clamped"),
                actor_gradient_error(actor, &s, &raw, tight),
            ));
        }
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SurgeryErrors {
    pub actor: f64,
    pub critic: f64,
    pub log_std: f64,
    pub critic_bit_identical: bool,
}

/// Extends freshly initialized agents and compares outputs before and
/// after on random states and actions.
pub fn surgery_errors(inits: u64, samples: usize) -> (SurgeryErrors, SurgeryErrors) {
    let map = MappingMatrix::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ddpg = SurgeryErrors {
        critic_bit_identical: true,
        ..Default::default()
    };
    let mut ppo = SurgeryErrors {
        critic_bit_identical: true,
        ..Default::default()
    };
    let inf = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    for init in 0..inits {
        let before = DdpgAgent::new(OBS, 3, DdpgConfig::default(), 1000 + init).unwrap();
        let mut after = before.clone();
        after.extend(&map).unwrap();
        let pb = PpoAgent::new(OBS, 3, PpoConfig::default(), 2000 + init).unwrap();
        let mut pa = pb.clone();
        pa.extend(&map).unwrap();
        ppo.critic_bit_identical &= pb.critic().layers().iter().zip(pa.critic().layers()).all(|(x, y)| {
            x.w.as_slice()
                .iter()
                .zip(y.w.as_slice())
                .all(|(p, q)| p.to_bits() == q.to_bits())
                && x.b.iter().zip(&y.b).all(|(p, q)| p.to_bits() == q.to_bits())
        });

        for _ in 0..samples {
            let s = uniform(&mut rng, OBS, 1.0);
            let a = uniform(&mut rng, 3, 0.8);
            let lifted = map.lift(&a).unwrap();

            for (b, x) in [
                (before.actor(), after.actor()),
                (before.target_actor(), after.target_actor()),
            ] {
                let proj = map.project(&x.forward(&s).unwrap()).unwrap();
                ddpg.actor = ddpg.actor.max(inf(&proj, &b.forward(&s).unwrap()));
            }
            for (b, x) in [
                (before.critic(), after.critic()),
                (before.target_critic(), after.target_critic()),
            ] {
                let qb = b.forward(&[s.as_slice(), &a].concat()).unwrap()[0];
                let qa = x.forward(&[s.as_slice(), &lifted].concat()).unwrap()[0];
                ddpg.critic = ddpg.critic.max((qa - qb).abs());
            }

            for (b, x) in [(pb.actor(), pa.actor()), (pb.old_actor(), pa.old_actor())] {
                let (mb, lb) = b.distribution(&s).unwrap();
                let (ma, la) = x.distribution(&s).unwrap();
                ppo.actor = ppo.actor.max(inf(&map.project(&ma).unwrap(), &mb));
                ppo.log_std = ppo.log_std.max(inf(&map.project(&la).unwrap(), &lb));
            }
            let vb = pb.value(&s).unwrap();
            let va = pa.value(&s).unwrap();
            ppo.critic = ppo.critic.max((va - vb).abs());
        }
    }
    (ddpg, ppo)
}

/// Attempts a PPO extension with a non-empty store, then again right
/// after the old-actor sync. Returns (first failed, second succeeded).
pub fn ppo_extension_timing() -> (bool, bool) {
    let map = MappingMatrix::canonical();
    let mut agent = PpoAgent::new(OBS, 3, PpoConfig::default(), 3).unwrap();
    let state = vec![0.1; OBS];
    let sample = agent.act(&state).unwrap();
    agent
        .remember(RolloutStep {
            state: state.clone(),
            raw_action: sample.raw_action,
            log_prob: sample.log_prob,
            reward: 0.5,
            next_state: state,
            done: false,
            truncated: false,
        })
        .unwrap();
    let early = agent.extend(&map).is_err() && agent.action_dim() == 3;
    agent.sync_old_actor();
    let at_sync = agent.extend(&map).is_ok() && agent.action_dim() == 6;
    (early, at_sync)
}
