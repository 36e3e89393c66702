"""On-policy training: rollout collection, advantage estimation, clipped updates."""

import dataclasses
import time

import numpy as np

from . import nn, perception, policies, sim
from .bc import bc_batch_grads


@dataclasses.dataclass
class RlConfig:
    total_steps: int = 2_000_000
    n_envs: int = 256
    n_steps: int = 0  # 0 = one episode per rollout window
    lr: float = 3e-4
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    bc_coef: float = 0.1
    bc_batch: int = 32
    epochs: int = 10
    minibatch: int = 2048
    grad_clip: float = 5.0
    workers: int = 1
    eval_every: int = 10  # iterations between eval probes, 0 = never
    eval_episodes: int = 20
    stop_at: float = 0.0  # early stop once eval reaches this, 0 = run out the budget


def compute_gae(rewards, values, dones, last_values, gamma=0.99, lam=0.95):
    """Advantage recursion over a (T, N) rollout window; dones cut the tail."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    cont = 1.0 - np.asarray(dones, dtype=np.float64)
    last_values = np.asarray(last_values, dtype=np.float64)
    t_len, n = rewards.shape
    adv = np.zeros((t_len, n), dtype=np.float64)
    tail = np.zeros(n, dtype=np.float64)
    for t in reversed(range(t_len)):
        nextv = last_values if t == t_len - 1 else values[t + 1]
        delta = rewards[t] + gamma * nextv * cont[t] - values[t]
        tail = delta + gamma * lam * cont[t] * tail
        adv[t] = tail
    return adv, adv + values


def collect_rollouts(env, policy, n_steps, act_rng, obs_cfg=None, obs_rngs=None):
    """Fixed-length on-policy window from every env in the batch.

    Returns the buffers the update needs plus bootstrap values for the states
    left in the envs and the rewards of episodes that finished inside the
    window.
    """
    n = env.n
    state_mode = policy.kind == "state"
    if state_mode:
        obs_buf = np.zeros((n_steps, n, policy.in_dim), dtype=np.float32)
    else:
        cloud_buf = np.zeros((n_steps, n, obs_cfg.total, 2), dtype=np.float32)
        robot_buf = np.zeros((n_steps, n, 5), dtype=np.float32)
    actions = np.zeros((n_steps, n), dtype=np.int64)
    logp = np.zeros((n_steps, n), dtype=np.float32)
    values = np.zeros((n_steps, n), dtype=np.float32)
    rewards = np.zeros((n_steps, n), dtype=np.float32)
    dones = np.zeros((n_steps, n), dtype=np.float32)
    ep_acc = np.zeros(n, dtype=np.float64)
    episode_rewards = []
    for t in range(n_steps):
        if state_mode:
            obs_buf[t] = np.stack([policies.state_encode(env.scene, s)
                                   for s in env.states])
            logits, vals, _ = policy.forward(obs_buf[t])
        else:
            for i, s in enumerate(env.states):
                cloud_buf[t, i] = perception.observe(env.scene, s, obs_cfg, obs_rngs[i])
                robot_buf[t, i] = perception.robot_state_vec(s)
            logits, vals, _ = policy.forward(cloud_buf[t], robot_buf[t])
        cat = nn.Categorical(logits)
        acts = cat.sample(act_rng)
        actions[t] = acts
        logp[t] = cat.log_prob(acts)
        values[t] = vals
        r, d = env.step(acts)
        rewards[t] = r
        dones[t] = d
        ep_acc += r
        for i in np.flatnonzero(d):
            episode_rewards.append(float(ep_acc[i]))
            ep_acc[i] = 0.0
    if state_mode:
        obs = np.stack([policies.state_encode(env.scene, s) for s in env.states])
        _, last_values, _ = policy.forward(obs)
        data = {"obs": obs_buf}
    else:
        clouds = np.zeros((n, obs_cfg.total, 2), dtype=np.float32)
        robots = np.zeros((n, 5), dtype=np.float32)
        for i, s in enumerate(env.states):
            clouds[i] = perception.observe(env.scene, s, obs_cfg, obs_rngs[i])
            robots[i] = perception.robot_state_vec(s)
        _, last_values, _ = policy.forward(clouds, robots)
        data = {"clouds": cloud_buf, "robot": robot_buf}
    data.update(actions=actions, logp=logp, values=values, rewards=rewards,
                dones=dones, last_values=np.asarray(last_values, dtype=np.float32),
                episode_rewards=episode_rewards)
    return data


def ppo_minibatch_grads(policy, batch, cfg):
    """Clipped-surrogate and value losses with their gradients for one minibatch."""
    obs, actions, old_logp, adv, returns = batch
    if policy.kind == "state":
        logits, values, cache = policy.forward(obs)
    else:
        logits, values, cache = policy.forward(*obs)
    lp_all = nn.log_softmax(logits)
    b = len(actions)
    rows = np.arange(b)
    lp = lp_all[rows, actions]
    ratio = np.exp(lp - old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr1 = ratio * adv
    surr2 = clipped * adv
    pg_loss = -float(np.mean(np.minimum(surr1, surr2)))
    v_err = np.asarray(values, dtype=np.float64) - returns
    v_loss = float(np.mean(v_err ** 2))

    # the clip gradient is live where the unclipped branch wins or ratio is in band
    active = (surr1 <= surr2) | ((ratio >= 1.0 - cfg.clip) & (ratio <= 1.0 + cfg.clip))
    dlp = -(adv * ratio * active) / b
    dlogits = -np.exp(lp_all) * dlp[:, None]
    dlogits[rows, actions] += dlp
    dvalues = cfg.value_coef * 2.0 * v_err / b
    grads = policy.backward(cache, dlogits.astype(np.float32),
                            dvalues.astype(np.float32))
    return pg_loss, v_loss, grads


def ppo_bc_update(policy, opt, data, adv, returns, cfg, rng, demos=None):
    """Epochs of shuffled minibatch updates over one rollout window."""
    state_mode = policy.kind == "state"
    t_len, n = data["actions"].shape
    b = t_len * n
    if state_mode:
        flat_obs = data["obs"].reshape(b, -1)
    else:
        flat_clouds = data["clouds"].reshape(b, *data["clouds"].shape[2:])
        flat_robot = data["robot"].reshape(b, -1)
    flat_actions = data["actions"].reshape(b)
    flat_logp = data["logp"].reshape(b).astype(np.float64)
    flat_adv = adv.reshape(b)
    flat_ret = returns.reshape(b)
    pg_losses, v_losses, bc_losses = [], [], []
    for _ in range(cfg.epochs):
        perm = rng.permutation(b)
        for lo in range(0, b, cfg.minibatch):
            mb = perm[lo:lo + cfg.minibatch]
            a = flat_adv[mb]
            a = (a - a.mean()) / (a.std() + 1e-8)
            obs = flat_obs[mb] if state_mode else (flat_clouds[mb], flat_robot[mb])
            pg, vl, grads = ppo_minibatch_grads(
                policy, (obs, flat_actions[mb], flat_logp[mb], a, flat_ret[mb]), cfg)
            if cfg.bc_coef > 0.0 and demos is not None:
                bl, bg = bc_batch_grads(policy, demos.sample(cfg.bc_batch, rng))
                nn.accumulate(grads, bg, cfg.bc_coef)
                bc_losses.append(bl)
            nn.clip_grad_norm(grads, cfg.grad_clip)
            opt.step(grads)
            pg_losses.append(pg)
            v_losses.append(vl)
    return {"pg_loss": float(np.mean(pg_losses)),
            "v_loss": float(np.mean(v_losses)),
            "bc_loss": float(np.mean(bc_losses)) if bc_losses else None}


def eval_policy(scene, policy, n_episodes, seed, mode="sample", obs_cfg=None,
                base_index=0, stream=4):
    """Success rate over fresh randomized episodes.

    Default mode rolls out the stochastic policy itself (seeded, so results
    are reproducible). Greedy decoding of a discrete bang-bang policy can
    lock into two-action oscillation loops that the sampled policy escapes,
    so argmax success understates what the trained policy actually achieves.
    """
    ok = 0
    for i in range(n_episodes):
        rng = sim.env_rng(seed, base_index + i, stream=stream)
        state = sim.reset(scene, rng)
        while True:
            if policy.kind == "state":
                a, _, _ = policy.act(policies.state_encode(scene, state), mode, rng)
            else:
                cloud = perception.observe(scene, state, obs_cfg, rng)
                a, _, _ = policy.act(cloud, perception.robot_state_vec(state),
                                     mode, rng)
            state, reward, done = sim.step(scene, state, a)
            if done:
                ok += reward > 0
                break
    return ok / n_episodes


def train_rl(scene, policy, cfg, seed, demos=None, obs_cfg=None, log=None):
    """PPO with an optional cloning term on demos; returns the training curve.

    The policy is updated in place and finishes holding the parameters of its
    best evaluation probe. Every random stream derives from `seed`, so curves
    and final parameters are reproducible bit for bit (wall_seconds aside).
    """
    n_steps = cfg.n_steps or scene.episode_length
    if policy.kind == "obs" and obs_cfg is None:
        obs_cfg = perception.AugmentConfig.for_scene(scene)
    env = sim.EnvBatch(scene, cfg.n_envs, seed, workers=cfg.workers)
    act_rng = sim.env_rng(seed, 0, stream=1)
    upd_rng = sim.env_rng(seed, 0, stream=2)
    obs_rngs = None
    if policy.kind == "obs":
        obs_rngs = [sim.env_rng(seed, i, stream=3) for i in range(cfg.n_envs)]
    opt = nn.AdamW(policy.params(), lr=cfg.lr)
    iters = max(1, cfg.total_steps // (cfg.n_envs * n_steps))
    curve = []
    best_eval = -1.0
    best_params = None
    t0 = time.time()
    try:
        for it in range(iters):
            data = collect_rollouts(env, policy, n_steps, act_rng,
                                    obs_cfg=obs_cfg, obs_rngs=obs_rngs)
            adv, returns = compute_gae(data["rewards"], data["values"],
                                       data["dones"], data["last_values"],
                                       cfg.gamma, cfg.lam)
            ppo_bc_update(policy, opt, data, adv, returns, cfg, upd_rng, demos)
            ep = data["episode_rewards"]
            mean_ep = float(np.mean(ep)) if ep else 0.0
            eval_success = None
            last_iter = it == iters - 1
            if cfg.eval_every and ((it + 1) % cfg.eval_every == 0 or last_iter):
                eval_success = eval_policy(scene, policy, cfg.eval_episodes, seed,
                                           obs_cfg=obs_cfg,
                                           base_index=it * cfg.eval_episodes)
                if eval_success > best_eval:
                    best_eval = eval_success
                    best_params = policies.copy_params(policy)
            row = {"env_steps": (it + 1) * cfg.n_envs * n_steps,
                   "mean_episode_reward": mean_ep,
                   "eval_success": eval_success,
                   "wall_seconds": time.time() - t0}
            curve.append(row)
            if log:
                log(row)
            if cfg.stop_at and eval_success is not None and eval_success >= cfg.stop_at:
                break
    finally:
        env.close()
    if best_params is not None:
        policies.set_params(policy, best_params)
    return curve
