"""Training and serving the driving policy under attack.

The agent interface deliberately exposes just two things to the attack
stack: a deterministic action for any observation and the gradient of that
action's mean with respect to the observation. Any other policy
implementation offering the same pair could be plugged in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import (EnvConfig, PpoConfig, STREAM_INIT, STREAM_VICTIM_TRAIN,
                     child_seed)
from .nn import (CHECKPOINT_FORMAT_VERSION, backward_input, load_json,
                 mlp_from_dict, mlp_to_dict, save_json)
from .ppo import (GaussianPolicy, TrainingLog, ValueNet, deterministic_action,
                  make_policy, make_value_net, train)
from .sim import OBS_DIM, LeftTurnEnv


@dataclass
class VictimAgent:
    policy: GaussianPolicy          # 26 -> 1
    value_net: ValueNet
    env_config: EnvConfig
    ppo_config: PpoConfig


class _SimAdapter:
    """LeftTurnEnv exposed through the trainer's (obs, r, terminal, truncated)
    step contract; episodes draw seeds from the env's internal sequence."""

    def __init__(self, env: LeftTurnEnv):
        self.env = env

    def reset(self):
        return self.env.reset()

    def step(self, action):
        out = self.env.step(float(action[0]))
        terminal = out.collided or out.completed
        return out.observation, out.reward, terminal, out.truncated


def train_victim(env_config: EnvConfig, ppo_config: PpoConfig, seed: int):
    """PPO training of the driving policy; returns (agent, training log)."""
    env_config.validate()
    ppo_config.validate()
    init_rng = np.random.default_rng(child_seed(seed, STREAM_VICTIM_TRAIN, STREAM_INIT))
    policy = make_policy(OBS_DIM, 1, ppo_config.hidden_dims, ppo_config.log_std_init, init_rng)
    value_net = make_value_net(OBS_DIM, ppo_config.hidden_dims, init_rng)
    env = LeftTurnEnv(env_config, base_seed=child_seed(seed, STREAM_VICTIM_TRAIN))
    rng = np.random.default_rng(child_seed(seed, STREAM_VICTIM_TRAIN, 1))
    log = train(_SimAdapter(env), policy, value_net, ppo_config, rng)
    return VictimAgent(policy, value_net, env_config, ppo_config), log


def victim_action(agent: VictimAgent, obs) -> float:
    """Deterministic driving action (density argmax) for a 26-dim observation."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (OBS_DIM,):
        raise ValueError(f"observation shape {obs.shape} != ({OBS_DIM},)")
    return float(deterministic_action(agent.policy, obs)[0])


def victim_mean(agent: VictimAgent, obs) -> float:
    """Unclamped policy mean, the quantity the perturbation methods target."""
    return float(agent.policy.mean_net(np.asarray(obs, dtype=np.float64))[0])


def victim_action_gradient(agent: VictimAgent, obs) -> np.ndarray:
    """d(policy mean)/d(observation), length 26."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (OBS_DIM,):
        raise ValueError(f"observation shape {obs.shape} != ({OBS_DIM},)")
    _, tape = agent.policy.mean_net.forward(obs)
    return backward_input(agent.policy.mean_net, tape, np.ones(1))


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def victim_to_dict(agent: VictimAgent) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "victim",
        "obs_dim": OBS_DIM,
        "action_dim": 1,
        "action_low": agent.policy.action_low.tolist(),
        "action_high": agent.policy.action_high.tolist(),
        "policy_mean": mlp_to_dict(agent.policy.mean_net),
        "log_std": agent.policy.log_std.tolist(),
        "value": mlp_to_dict(agent.value_net.net),
    }


def victim_from_dict(d: dict, env_config: EnvConfig, ppo_config: PpoConfig) -> VictimAgent:
    if d.get("kind") != "victim":
        raise ValueError(f"checkpoint kind {d.get('kind')!r} is not 'victim'")
    policy = GaussianPolicy(mlp_from_dict(d["policy_mean"]), np.asarray(d["log_std"]),
                            d["action_low"], d["action_high"])
    return VictimAgent(policy, ValueNet(mlp_from_dict(d["value"])), env_config, ppo_config)


def save_victim(path, agent: VictimAgent) -> None:
    save_json(path, victim_to_dict(agent))


def load_victim(path, env_config: EnvConfig, ppo_config: PpoConfig) -> VictimAgent:
    return victim_from_dict(load_json(path), env_config, ppo_config)
