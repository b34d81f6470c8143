//! Rollout collection, the PPO update and the training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::dist::{ActionBounds, ActionSample, SquashedGaussian};
use super::loss::{sample_objective, LossWeights, SampleTerms};
use super::memory::{Transition, TrajectoryMemory};
use super::network::{PolicyOutput, PolicyParams};
use super::optimizer::Optimizer;
use super::PpoConfig;
use crate::env::{Env, EnvAction};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, stream_rng, SimRng};

const INIT_STREAM: u64 = 0;
const UPDATE_STREAM: u64 = 1;
const ACTOR_STREAM: u64 = 16;

pub fn policy_forward(state: &[f64], params: &PolicyParams) -> Result<PolicyOutput> {
    params.forward(state)
}

pub fn sample_action<R: Rng + ?Sized>(out: &PolicyOutput, bounds: &ActionBounds, rng: &mut R) -> (EnvAction, ActionSample) {
    let s = SquashedGaussian {
        mean: &out.mean,
        log_std: &out.log_std,
        bounds,
    }
    .sample(rng);
    (EnvAction::from_flat(&s.action), s)
}

/// Current parameters plus the behavior copy used for rollouts.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub params: PolicyParams,
    pub old_params: PolicyParams,
    optimizer: Optimizer,
}

impl PpoAgent {
    pub fn new(params: PolicyParams, cfg: &PpoConfig) -> Self {
        Self {
            optimizer: Optimizer::new(cfg.optimizer, cfg.learning_rate, params.n_params()),
            old_params: params.clone(),
            params,
        }
    }
}

/// One training sample as seen by the loss.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a [f64],
    pub raw: &'a [f64],
    pub logp_old: f64,
    pub adv: f64,
    pub ret: f64,
}

/// Mean per-sample objective over `batch` and its gradient.
pub fn objective_and_grad(
    params: &PolicyParams,
    batch: &[Sample],
    bounds: &ActionBounds,
    w: &LossWeights,
) -> Result<(f64, Vec<f64>, Vec<SampleTerms>)> {
    let mut grad = vec![0.0; params.n_params()];
    let mut terms = Vec::with_capacity(batch.len());
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    for s in batch {
        let (out, cache) = params.forward_cached(s.state)?;
        let (t, mut d_out) = sample_objective(&out, s.raw, s.logp_old, s.adv, s.ret, bounds, w);
        d_out.iter_mut().for_each(|d| *d *= scale);
        params.backward(&cache, &d_out, &mut grad);
        total += t.objective;
        terms.push(t);
    }
    Ok((total * scale, grad, terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub samples: usize,
    pub minibatches: usize,
    /// Share of evaluated samples whose ratio left `[1 - eps, 1 + eps]`.
    pub clip_fraction: f64,
    /// Mean of `logp_old - logp_new` over all evaluated samples.
    pub approx_kl: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub objective: f64,
}

/// Runs `epochs` passes of shuffled minibatch ascent, then syncs `old_params` and clears `memory`.
pub fn update(
    memory: &mut TrajectoryMemory,
    agent: &mut PpoAgent,
    cfg: &PpoConfig,
    bounds: &ActionBounds,
    rng: &mut SimRng,
) -> Result<UpdateStats> {
    let n = memory.len();
    let mut stats = UpdateStats {
        samples: n,
        ..Default::default()
    };
    if n == 0 {
        agent.old_params = agent.params.clone();
        return Ok(stats);
    }
    let (mut adv, ret) = memory.advantages(cfg.gamma, cfg.gae_lambda);
    if cfg.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
    }
    let w = cfg.loss_weights();
    let mb = cfg.minibatch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut evaluated = 0usize;
    let mut clipped = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (mi, chunk) in order.chunks(mb).enumerate() {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    let t = &memory.steps()[i];
                    Sample {
                        state: &t.state,
                        raw: &t.raw_action,
                        logp_old: t.log_prob,
                        adv: adv[i],
                        ret: ret[i],
                    }
                })
                .collect();
            let (obj, grad, terms) = objective_and_grad(&agent.params, &batch, bounds, &w)?;
            if !obj.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                let worst = terms.iter().find(|t| !t.objective.is_finite());
                return Err(Error::NonFiniteLoss {
                    epoch,
                    minibatch: mi,
                    detail: format!("objective {obj}, first bad sample {worst:?}"),
                });
            }
            for (t, s) in terms.iter().zip(&batch) {
                evaluated += 1;
                if (t.ratio - 1.0).abs() > cfg.clip {
                    clipped += 1;
                }
                stats.approx_kl += s.logp_old - t.log_prob;
                stats.surrogate += t.surrogate;
                stats.value_loss += t.value_loss;
                stats.entropy += t.entropy;
                stats.objective += t.objective;
            }
            agent.optimizer.ascend(&mut agent.params.theta, &grad);
            stats.minibatches += 1;
        }
    }
    let k = evaluated as f64;
    stats.clip_fraction = clipped as f64 / k;
    stats.approx_kl /= k;
    stats.surrogate /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.objective /= k;
    agent.old_params = agent.params.clone();
    memory.clear();
    Ok(stats)
}

struct Rollout {
    steps: Vec<Transition>,
    bootstrap: f64,
    total_reward: f64,
}

fn rollout(env: &mut Env, params: &PolicyParams, bounds: &ActionBounds, env_seed: u64, rng: &mut SimRng) -> Result<Rollout> {
    let mut state = env.reset(env_seed)?;
    let mut steps = Vec::with_capacity(env.network().n_slots);
    let mut total_reward = 0.0;
    loop {
        let out = params.forward(state.as_slice())?;
        let (action, s) = sample_action(&out, bounds, rng);
        let o = env.step(&action)?;
        total_reward += o.reward;
        steps.push(Transition {
            state: state.0,
            raw_action: s.raw,
            log_prob: s.log_prob,
            reward: o.reward,
            value: out.value,
            done: o.done,
        });
        state = o.next_state;
        if o.done {
            return Ok(Rollout {
                steps,
                bootstrap: 0.0,
                total_reward,
            });
        }
    }
}

/// Layout seed of actor `actor` in episode `episode`.
pub fn episode_seed(seed: u64, episode: usize, actor: usize) -> u64 {
    mix_seed(mix_seed(seed, episode as u64), actor as u64)
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: PolicyParams,
    /// Per episode, the cumulative reward averaged over actors.
    pub reward_curve: Vec<f64>,
    pub updates: Vec<UpdateStats>,
}

pub fn train<F>(env_factory: F, cfg: &PpoConfig, seed: u64) -> Result<TrainResult>
where
    F: Fn() -> Result<Env> + Sync,
{
    train_with(env_factory, cfg, seed, |_, _, _| {})
}

/// [`train`] with a callback after every episode's update.
pub fn train_with<F, C>(env_factory: F, cfg: &PpoConfig, seed: u64, mut on_episode: C) -> Result<TrainResult>
where
    F: Fn() -> Result<Env> + Sync,
    C: FnMut(usize, f64, &UpdateStats),
{
    cfg.validate()?;
    let mut envs: Vec<Env> = (0..cfg.actors).map(|_| env_factory()).collect::<Result<_>>()?;
    let bounds = envs[0].action_bounds();
    let params = PolicyParams::new(
        envs[0].state_dim(),
        bounds.dim(),
        &cfg.hidden,
        cfg.init_log_std,
        &mut stream_rng(seed, INIT_STREAM),
    );
    let mut agent = PpoAgent::new(params, cfg);
    let mut update_rng = stream_rng(seed, UPDATE_STREAM);
    let mut actor_rngs: Vec<SimRng> = (0..cfg.actors)
        .map(|a| stream_rng(seed, ACTOR_STREAM + a as u64))
        .collect();
    let mut memory = TrajectoryMemory::new();
    let mut reward_curve = Vec::with_capacity(cfg.episodes);
    let mut updates = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let behavior = &agent.old_params;
        let rollouts: Vec<Rollout> = envs
            .par_iter_mut()
            .zip(actor_rngs.par_iter_mut())
            .enumerate()
            .map(|(a, (env, rng))| rollout(env, behavior, &bounds, episode_seed(seed, episode, a), rng))
            .collect::<Result<_>>()?;
        let mean_reward = rollouts.iter().map(|r| r.total_reward).sum::<f64>() / rollouts.len() as f64;
        for r in rollouts {
            memory.push_rollout(r.steps, r.bootstrap);
        }
        let stats = update(&mut memory, &mut agent, cfg, &bounds, &mut update_rng)?;
        on_episode(episode, mean_reward, &stats);
        reward_curve.push(mean_reward);
        updates.push(stats);
    }
    Ok(TrainResult {
        params: agent.params,
        reward_curve,
        updates,
    })
}

/// Per-episode cumulative reward of a policy that draws actions uniformly
/// over the action box, on the same layouts `train` would see.
pub fn random_policy_rewards<F>(env_factory: F, episodes: usize, actors: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn() -> Result<Env> + Sync,
{
    let mut envs: Vec<Env> = (0..actors.max(1)).map(|_| env_factory()).collect::<Result<_>>()?;
    let mut rngs: Vec<SimRng> = (0..envs.len())
        .map(|a| stream_rng(mix_seed(seed, 0xBA5E), a as u64))
        .collect();
    let mut curve = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let totals: Vec<f64> = envs
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .enumerate()
            .map(|(a, (env, rng))| -> Result<f64> {
                let bounds = env.action_bounds();
                env.reset(episode_seed(seed, episode, a))?;
                let mut total = 0.0;
                loop {
                    let flat: Vec<f64> = bounds
                        .lo
                        .iter()
                        .zip(&bounds.hi)
                        .map(|(&l, &h)| rng.random_range(l..=h))
                        .collect();
                    let o = env.step(&EnvAction::from_flat(&flat))?;
                    total += o.reward;
                    if o.done {
                        return Ok(total);
                    }
                }
            })
            .collect::<Result<_>>()?;
        curve.push(totals.iter().sum::<f64>() / totals.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ExperimentConfig, NetworkConfig, PowerPolicy};
    use rand_distr::StandardNormal;

    fn toy_bounds() -> ActionBounds {
        ActionBounds {
            lo: vec![0.0, -1.0],
            hi: vec![5.0, 1.0],
        }
    }

    fn toy_memory(params: &PolicyParams, bounds: &ActionBounds, rng: &mut SimRng) -> TrajectoryMemory {
        let mut steps = Vec::new();
        for i in 0..4 {
            let state: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = params.forward(&state).unwrap();
            let (_, s) = sample_action(&out, bounds, rng);
            steps.push(Transition {
                state,
                raw_action: s.raw,
                log_prob: s.log_prob + rng.random_range(-0.1..0.1),
                reward: rng.random_range(-1.0..1.0),
                value: out.value,
                done: i == 3,
            });
        }
        let mut m = TrajectoryMemory::new();
        m.push_rollout(steps, 0.0);
        m
    }

    fn perturbed_toy(seed: u64) -> PolicyParams {
        let mut rng = stream_rng(seed, 0);
        let mut p = PolicyParams::new(3, 2, &[8], -0.3, &mut rng);
        for v in p.theta.iter_mut() {
            *v += 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
        p
    }

    fn fd_check(seed: u64) -> (usize, usize) {
        let params = perturbed_toy(seed);
        let bounds = toy_bounds();
        let mut rng = stream_rng(seed, 1);
        let mem = toy_memory(&params, &bounds, &mut rng);
        let (adv, ret) = mem.advantages(0.99, 0.95);
        let batch: Vec<Sample> = mem
            .steps()
            .iter()
            .enumerate()
            .map(|(i, t)| Sample {
                state: &t.state,
                raw: &t.raw_action,
                logp_old: t.log_prob,
                adv: adv[i],
                ret: ret[i],
            })
            .collect();
        let w = PpoConfig::default().loss_weights();
        let (_, grad, _) = objective_and_grad(&params, &batch, &bounds, &w).unwrap();
        let mut bad = 0;
        for t in 0..params.n_params() {
            let h = 1e-6;
            let mut a = params.clone();
            a.theta[t] += h;
            let mut b = params.clone();
            b.theta[t] -= h;
            let fa = objective_and_grad(&a, &batch, &bounds, &w).unwrap().0;
            let fb = objective_and_grad(&b, &batch, &bounds, &w).unwrap().0;
            let fd = (fa - fb) / (2.0 * h);
            if (fd - grad[t]).abs() > 1e-4 * fd.abs().max(grad[t].abs()) + 1e-8 {
                bad += 1;
            }
        }
        (bad, params.n_params())
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (bad, n) = fd_check(seed);
            assert_eq!(bad, 0, "seed {seed}: {bad}/{n} mismatches");
        }
    }

    #[test]
    fn zero_advantage_and_weights_leave_params() {
        let params = perturbed_toy(7);
        let bounds = toy_bounds();
        let mut rng = stream_rng(7, 1);
        let mut mem = toy_memory(&params, &bounds, &mut rng);
        let steps: Vec<Transition> = mem.steps().iter().cloned().map(|t| Transition { reward: 0.0, value: 0.0, ..t }).collect();
        mem.clear();
        mem.push_rollout(steps, 0.0);
        let cfg = PpoConfig {
            value_coef: 0.0,
            entropy_coef: 0.0,
            normalize_advantages: false,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(params.clone(), &cfg);
        update(&mut mem, &mut agent, &cfg, &bounds, &mut rng).unwrap();
        assert_eq!(agent.params, params);
        assert_eq!(agent.old_params, agent.params);
        assert!(mem.is_empty());
    }

    #[test]
    fn positive_advantage_raises_log_prob() {
        let params = perturbed_toy(9);
        let bounds = toy_bounds();
        let state = vec![0.3, -0.2, 0.5];
        let out = params.forward(&state).unwrap();
        let (_, s) = sample_action(&out, &bounds, &mut stream_rng(9, 2));
        let steps: Vec<Transition> = (0..8)
            .map(|_| Transition {
                state: state.clone(),
                raw_action: s.raw.clone(),
                log_prob: s.log_prob,
                reward: 1.0,
                value: 0.0,
                done: false,
            })
            .collect();
        let mut mem = TrajectoryMemory::new();
        mem.push_rollout(steps, 0.0);
        let cfg = PpoConfig {
            normalize_advantages: false,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let mut agent = PpoAgent::new(params.clone(), &cfg);
        let stats = update(&mut mem, &mut agent, &cfg, &bounds, &mut stream_rng(9, 3)).unwrap();
        let logp = |p: &PolicyParams| {
            let o = p.forward(&state).unwrap();
            SquashedGaussian {
                mean: &o.mean,
                log_std: &o.log_std,
                bounds: &bounds,
            }
            .log_prob_raw(&s.raw)
        };
        assert!(logp(&agent.params) >= logp(&params));
        assert!((0.0..=1.0).contains(&stats.clip_fraction));
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let params = perturbed_toy(4);
        let bounds = toy_bounds();
        let mut rng = stream_rng(4, 1);
        let mut mem = toy_memory(&params, &bounds, &mut rng);
        let mut steps = mem.steps().to_vec();
        steps[0].reward = f64::NAN;
        mem.clear();
        mem.push_rollout(steps, 0.0);
        let cfg = PpoConfig::default();
        let mut agent = PpoAgent::new(params, &cfg);
        let err = update(&mut mem, &mut agent, &cfg, &bounds, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, .. }));
    }

    fn tiny_env() -> Result<Env> {
        let mut c = ExperimentConfig::default();
        c.network = NetworkConfig::scaled();
        c.network.n_slots = 5;
        c.env.power_policy = PowerPolicy::FixedUniform;
        Env::new(&c)
    }

    fn tiny_cfg(episodes: usize) -> PpoConfig {
        PpoConfig {
            episodes,
            actors: 2,
            hidden: vec![8],
            ..PpoConfig::default()
        }
    }

    #[test]
    fn zero_episodes_returns_initial_params() {
        let r = train(tiny_env, &tiny_cfg(0), 3).unwrap();
        assert!(r.reward_curve.is_empty());
        let again = train(tiny_env, &tiny_cfg(0), 3).unwrap();
        assert_eq!(r.params, again.params);
        let env = tiny_env().unwrap();
        let init = PolicyParams::new(env.state_dim(), 4, &[8], -0.5, &mut stream_rng(3, INIT_STREAM));
        assert_eq!(r.params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(tiny_env, &tiny_cfg(4), 11).unwrap();
        let b = train(tiny_env, &tiny_cfg(4), 11).unwrap();
        assert_eq!(a.reward_curve.len(), 4);
        assert_eq!(
            a.reward_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.reward_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.params, b.params);
        let one = train(tiny_env, &PpoConfig { actors: 1, ..tiny_cfg(2) }, 11).unwrap();
        assert_eq!(one.reward_curve.len(), 2);
        let rnd = random_policy_rewards(tiny_env, 3, 2, 11).unwrap();
        assert_eq!(rnd, random_policy_rewards(tiny_env, 3, 2, 11).unwrap());
    }
}
