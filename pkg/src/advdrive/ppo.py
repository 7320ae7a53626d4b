"""Clipped-surrogate PPO with GAE, built on the dense-net core.

One trainer serves both the driving policy and the attack policy; only the
observation/action dimensions and hyperparameters differ. The environment
contract is minimal: ``reset() -> obs`` and
``step(action) -> (obs, reward, terminal, truncated)`` where ``terminal``
means no future value and ``truncated`` means the episode stops but the
state has a bootstrap value (time limit or trajectory clipping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PpoConfig
from .nn import AdamState, Mlp, adam_step, backward_params, init_mlp

LOG_2PI = math.log(2.0 * math.pi)


class GaussianPolicy:
    """Diagonal Gaussian over actions: state-dependent mean, global log-std.

    Executed actions are the raw samples clamped to the action box; log
    probabilities are taken pre-clamp.
    """

    def __init__(self, mean_net: Mlp, log_std: np.ndarray, action_low, action_high):
        self.mean_net = mean_net
        self.log_std = np.asarray(log_std, dtype=np.float64)
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)

    @property
    def action_dim(self) -> int:
        return self.log_std.shape[0]

    def parameters(self) -> list[np.ndarray]:
        return self.mean_net.parameters() + [self.log_std]

    def clamp(self, raw: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(raw, self.action_low), self.action_high)


def make_policy(obs_dim: int, action_dim: int, hidden_dims, log_std_init: float,
                rng: np.random.Generator, action_low=None, action_high=None) -> GaussianPolicy:
    low = np.full(action_dim, -1.0) if action_low is None else np.asarray(action_low, dtype=np.float64)
    high = np.full(action_dim, 1.0) if action_high is None else np.asarray(action_high, dtype=np.float64)
    net = init_mlp((obs_dim, *hidden_dims, action_dim), rng)
    return GaussianPolicy(net, np.full(action_dim, float(log_std_init)), low, high)


class ValueNet:
    def __init__(self, net: Mlp):
        self.net = net

    def value(self, obs) -> float:
        return float(self.net(np.asarray(obs, dtype=np.float64))[0])

    def values(self, obs_batch) -> np.ndarray:
        return self.net(np.asarray(obs_batch, dtype=np.float64))[:, 0]

    def parameters(self) -> list[np.ndarray]:
        return self.net.parameters()


def make_value_net(obs_dim: int, hidden_dims, rng: np.random.Generator) -> ValueNet:
    return ValueNet(init_mlp((obs_dim, *hidden_dims, 1), rng))


def gaussian_log_prob(raw: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """Pre-clamp diagonal Gaussian log density; batched over rows."""
    z = (raw - mean) / np.exp(log_std)
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(axis=-1)


def sample_action(policy: GaussianPolicy, obs, rng: np.random.Generator):
    """Draw raw ~ N(mean(obs), exp(log_std)); returns (raw, executed, log_prob)."""
    obs = np.asarray(obs, dtype=np.float64)
    mean = policy.mean_net(obs)
    std = np.exp(policy.log_std)
    raw = mean + std * rng.standard_normal(policy.action_dim)
    logp = float(gaussian_log_prob(raw, mean, policy.log_std))
    return raw, policy.clamp(raw), logp


def deterministic_action(policy: GaussianPolicy, obs) -> np.ndarray:
    """Density argmax of the Gaussian: the clamped mean."""
    return policy.clamp(policy.mean_net(np.asarray(obs, dtype=np.float64)))


def policy_entropy(log_std: np.ndarray) -> float:
    """Differential entropy of the diagonal Gaussian (state independent)."""
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


# ---------------------------------------------------------------------------
# Rollout storage and GAE
# ---------------------------------------------------------------------------


@dataclass
class RolloutBuffer:
    """Time-ordered transition store for one policy update.

    ``terminals`` marks true episode ends (no future value); ``boundaries``
    marks every point where the advantage recursion must stop, i.e.
    terminals plus truncations plus the rollout edge, with ``bootstraps``
    holding V(s_next) for the non-terminal boundaries.
    """

    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    terminals: list = field(default_factory=list)
    boundaries: list = field(default_factory=list)
    bootstraps: list = field(default_factory=list)
    closed: bool = False

    def add(self, obs, action, log_prob, reward, value, terminal, boundary, bootstrap=0.0):
        if self.closed:
            raise RuntimeError("buffer already closed")
        self.obs.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(np.asarray(action, dtype=np.float64))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.terminals.append(bool(terminal))
        self.boundaries.append(bool(boundary or terminal))
        self.bootstraps.append(float(bootstrap))

    def __len__(self) -> int:
        return len(self.rewards)

    def close(self) -> None:
        if len(self) and not self.boundaries[-1]:
            raise RuntimeError("rollout must end on an episode boundary or bootstrap point")
        self.closed = True


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float, normalize: bool = True):
    """Backward-recursive advantage estimates and value targets.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - terminal_t) - V(s_t), where
    V(s_{t+1}) is the stored bootstrap at boundaries; the recursion
    A_t = delta_t + gamma * lam * A_{t+1} stops at boundaries. Returns are
    A + V before normalization; advantages are then standardized per batch
    unless ``normalize`` is False.
    """
    if not buffer.closed:
        raise RuntimeError("close the buffer before computing advantages")
    n = len(buffer)
    rewards = np.asarray(buffer.rewards)
    values = np.asarray(buffer.values)
    terminals = np.asarray(buffer.terminals, dtype=bool)
    boundaries = np.asarray(buffer.boundaries, dtype=bool)
    bootstraps = np.asarray(buffer.bootstraps)
    adv = np.zeros(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        v_next = bootstraps[t] if boundaries[t] else values[t + 1]
        delta = rewards[t] + gamma * v_next * (0.0 if terminals[t] else 1.0) - values[t]
        last = delta if boundaries[t] else delta + gamma * lam * last
        adv[t] = last
    returns = adv + values
    if normalize and n > 1:
        std = adv.std()
        centered = adv - adv.mean()
        adv = centered / std if std > 1e-12 else centered
    return adv, returns


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------


@dataclass
class LossParts:
    total: float
    actor: float
    critic: float
    entropy: float


def ppo_loss(policy: GaussianPolicy, value_net: ValueNet, batch: dict, cfg: PpoConfig):
    """Total loss -actor + c1*critic - c2*entropy with exact gradients.

    ``batch`` holds obs (N,d), actions (N,a), old_log_probs (N),
    advantages (N), returns (N). Gradients align with
    policy.parameters() + value_net.parameters().
    """
    obs = np.asarray(batch["obs"], dtype=np.float64)
    actions = np.asarray(batch["actions"], dtype=np.float64)
    old_logp = np.asarray(batch["old_log_probs"], dtype=np.float64)
    adv = np.asarray(batch["advantages"], dtype=np.float64)
    returns = np.asarray(batch["returns"], dtype=np.float64)
    for name, arr in ("obs", obs), ("actions", actions), ("old_log_probs", old_logp), \
                     ("advantages", adv), ("returns", returns):
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in minibatch field '{name}'")
    n = obs.shape[0]
    eps = cfg.eps_clip

    mean, tape_p = policy.mean_net.forward(obs)
    log_std = policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    new_logp = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(new_logp - old_logp)

    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surr_raw = ratio * adv
    surr_clip = clipped * adv
    actor = float(np.minimum(surr_raw, surr_clip).mean())

    # d(actor)/d(ratio): the unclipped branch is active inside the trust
    # region or wherever it is the smaller term; otherwise the clip blocks
    # the gradient entirely.
    in_range = (ratio >= 1.0 - eps) & (ratio <= 1.0 + eps)
    active = in_range | (surr_raw <= surr_clip)
    dactor_dratio = np.where(active, adv, 0.0) / n
    # loss includes -actor; d(ratio)/d(new_logp) = ratio
    dloss_dlogp = -dactor_dratio * ratio

    dlogp_dmean = (actions - mean) * inv_var                     # (N, a)
    mean_grad = dloss_dlogp[:, None] * dlogp_dmean
    policy_grads = backward_params(policy.mean_net, tape_p, mean_grad)

    z2 = ((actions - mean) ** 2) * inv_var
    dlogp_dlogstd = z2 - 1.0                                     # (N, a)
    log_std_grad = (dloss_dlogp[:, None] * dlogp_dlogstd).sum(axis=0)
    log_std_grad -= cfg.c2  # entropy bonus: d(-c2 * sum(log_std + const))/dlog_std

    v_out, tape_v = value_net.net.forward(obs)
    v = v_out[:, 0]
    critic = float(np.mean((v - returns) ** 2))
    dloss_dv = cfg.c1 * 2.0 * (v - returns) / n
    value_grads = backward_params(value_net.net, tape_v, dloss_dv[:, None])

    entropy = policy_entropy(log_std)
    total = -actor + cfg.c1 * critic - cfg.c2 * entropy
    grads = policy_grads + [log_std_grad] + value_grads
    return total, grads, LossParts(total, actor, critic, entropy)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class UpdateRow:
    update_index: int
    env_steps: int
    mean_episode_reward: float
    actor_loss: float
    critic_loss: float
    entropy: float


@dataclass
class TrainingLog:
    updates: list[UpdateRow] = field(default_factory=list)
    episode_rewards: list[float] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("update_index,env_steps,mean_episode_reward,actor_loss,critic_loss,entropy\n")
            for r in self.updates:
                fh.write(f"{r.update_index},{r.env_steps},{r.mean_episode_reward!r},"
                         f"{r.actor_loss!r},{r.critic_loss!r},{r.entropy!r}\n")


def train(env, policy: GaussianPolicy, value_net: ValueNet, cfg: PpoConfig,
          rng: np.random.Generator) -> TrainingLog:
    """Alternate rollout collection and clipped-surrogate updates until
    cfg.total_steps environment steps are consumed."""
    cfg.validate()
    log = TrainingLog()
    params = policy.parameters() + value_net.parameters()
    opt = AdamState(params, cfg.learning_rate)
    steps_done = 0
    update_index = 0
    obs = None
    episode_reward = 0.0

    while steps_done < cfg.total_steps:
        horizon = min(cfg.rollout_horizon, cfg.total_steps - steps_done)
        buffer = RolloutBuffer()
        finished_rewards: list[float] = []
        if obs is None:
            obs = env.reset()
            episode_reward = 0.0
        for _ in range(horizon):
            raw, executed, logp = sample_action(policy, obs, rng)
            value = value_net.value(obs)
            next_obs, reward, terminal, truncated = env.step(executed)
            episode_reward += reward
            at_horizon = len(buffer) == horizon - 1
            if terminal:
                buffer.add(obs, raw, logp, reward, value, True, True)
            elif truncated or at_horizon:
                buffer.add(obs, raw, logp, reward, value, False, True,
                           bootstrap=value_net.value(next_obs))
            else:
                buffer.add(obs, raw, logp, reward, value, False, False)
            if terminal or truncated:
                finished_rewards.append(episode_reward)
                log.episode_rewards.append(episode_reward)
                obs = env.reset()
                episode_reward = 0.0
            else:
                obs = next_obs
        buffer.close()
        steps_done += horizon

        advantages, returns = compute_gae(buffer, cfg.gamma, cfg.lam)
        data = {
            "obs": np.stack(buffer.obs),
            "actions": np.stack(buffer.actions),
            "old_log_probs": np.asarray(buffer.log_probs),
            "advantages": advantages,
            "returns": returns,
        }
        n = len(buffer)
        actor_sum = critic_sum = entropy_sum = 0.0
        n_batches = 0
        for _ in range(cfg.epochs_per_update):
            order = rng.permutation(n)
            for start in range(0, n, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                batch = {k: v[idx] for k, v in data.items()}
                _, grads, parts = ppo_loss(policy, value_net, batch, cfg)
                adam_step(params, grads, opt)
                policy.mean_net.bump_version()
                value_net.net.bump_version()
                actor_sum += parts.actor
                critic_sum += parts.critic
                entropy_sum += parts.entropy
                n_batches += 1
        update_index += 1
        mean_ep = float(np.mean(finished_rewards)) if finished_rewards else math.nan
        log.updates.append(UpdateRow(update_index, steps_done, mean_ep,
                                     actor_sum / n_batches, critic_sum / n_batches,
                                     entropy_sum / n_batches))
    return log
