"""The budgeted attack MDP and its PPO adversary.

The adversary observes the victim's observation augmented with the
normalized remaining-attack counter and the victim's clean action, and
outputs a (switch, lure) pair. A launch (switch >= 0 with budget left)
spends one attack: the observation shown to the victim is perturbed toward
the lure, bounded in L-inf. The adversary is rewarded 1 on collision steps
and 0 otherwise. During training, episodes are cut when the budget hits
zero (trajectory clipping) so the rollout distribution is not dominated by
post-exhaustion steps; by default the cut is a truncation with a value
bootstrap, optionally a literal termination.

Variants sharing this machinery:
  ours - switch + lure, budget, gradient perturbation
  ama  - switch + lure, budget, but the lure directly overrides the action
  ua   - lure only, no budget, perturbs every step
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import (EnvConfig, PerturbConfig, PpoConfig,
                     STREAM_ADVERSARY_TRAIN, STREAM_INIT, child_seed)
from .nn import (CHECKPOINT_FORMAT_VERSION, load_json, mlp_from_dict,
                 mlp_to_dict)
from .perturb import generate
from .ppo import (GaussianPolicy, TrainingLog, ValueNet, deterministic_action,
                  make_policy, make_value_net, train)
from .records import AttackStepLog, EpisodeRecord
from .sim import OBS_DIM, EpisodeFinishedError, LeftTurnEnv
from .victim import VictimAgent, victim_action

ADV_OBS_DIM = OBS_DIM + 2   # ours / ama: obs ++ [remaining/budget, clean action]
UA_OBS_DIM = OBS_DIM + 1    # ua: obs ++ [clean action]

VARIANTS = ("ours", "ama", "ua")


def adversary_dims(variant: str) -> tuple[int, int]:
    """(observation dim, action dim) for an attack variant."""
    if variant == "ua":
        return UA_OBS_DIM, 1
    if variant in ("ours", "ama"):
        return ADV_OBS_DIM, 2
    raise ValueError(f"unknown adversary variant {variant!r}")


@dataclass
class AttackBudget:
    gamma_budget: int
    remaining: int

    def can_launch(self) -> bool:
        return self.remaining > 0

    def spend(self) -> None:
        if self.remaining <= 0:
            raise RuntimeError("attack budget already exhausted")
        self.remaining -= 1


class AdversaryEnv:
    """Attack MDP over a LeftTurnEnv and a fixed victim.

    Implements the trainer's step contract; additionally accumulates
    AttackStepLogs and finished EpisodeRecords (useful both for evaluation
    and for auditing training-time invariants).
    """

    def __init__(self, victim: VictimAgent, env_config: EnvConfig,
                 perturb_config: PerturbConfig, variant: str = "ours",
                 gamma_budget: int = 10, mode: str = "train",
                 grace_steps: int = 0, clip_terminal: bool = False,
                 base_seed: int = 0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown adversary variant {variant!r}")
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        self.victim = victim
        self.sim = LeftTurnEnv(env_config, base_seed=base_seed)
        self.perturb_config = perturb_config
        self.variant = variant
        self.gamma_budget = int(gamma_budget)
        self.mode = mode
        self.grace_steps = int(grace_steps)
        self.clip_terminal = clip_terminal
        self.budget = AttackBudget(self.gamma_budget, self.gamma_budget)
        self.episode_records: list[EpisodeRecord] = []
        self._finished = True
        self._clean_obs: np.ndarray | None = None
        self._clean_action = 0.0
        self._seed = 0
        self._t = 0
        self._exhausted_steps = 0
        self._speeds: list[float] = []
        self._victim_reward = 0.0
        self._logs: list[AttackStepLog] = []

    # -- trainer contract ----------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is None:
            obs = self.sim.reset()
            self._seed = -1
        else:
            obs = self.sim.reset(seed=seed)
            self._seed = int(seed)
        self.budget = AttackBudget(self.gamma_budget, self.gamma_budget)
        self._finished = False
        self._t = 0
        self._exhausted_steps = 0
        self._speeds = []
        self._victim_reward = 0.0
        self._logs = []
        self._cache_clean(obs)
        return self._adv_obs()

    def step(self, action):
        if self._finished:
            raise EpisodeFinishedError("attack episode already ended; call reset()")
        action = np.asarray(action, dtype=np.float64)
        s = self._clean_obs
        a_clean = self._clean_action
        if self.variant == "ua":
            p = 1.0
            lure = float(np.clip(action[0], -1.0, 1.0))
            launch = True
        else:
            p = float(np.clip(action[0], -1.0, 1.0))
            lure = float(np.clip(action[1], -1.0, 1.0))
            launch = p >= 0.0 and self.budget.can_launch()

        if launch:
            if self.variant != "ua":
                self.budget.spend()
            if self.variant == "ama":
                executed = lure
                delta_norm = 0.0
            else:
                pert = generate(self.victim, s, lure, self.perturb_config)
                executed = pert.achieved_action
                delta_norm = pert.linf
        else:
            executed = a_clean
            delta_norm = 0.0

        out = self.sim.step(executed)
        reward = 1.0 if out.collided else 0.0
        self._t += 1
        self._speeds.append(out.ego_speed)
        self._victim_reward += out.reward
        self._logs.append(AttackStepLog(
            step=self._t, launched=launch, p=p, lure=lure, delta_norm=delta_norm,
            victim_action=a_clean, executed_action=executed, collided=out.collided))

        terminal = out.collided or out.completed
        truncated = out.truncated
        if (not terminal and not truncated and self.mode == "train"
                and self.variant != "ua" and not self.budget.can_launch()):
            self._exhausted_steps += 1
            if self._exhausted_steps > self.grace_steps:
                if self.clip_terminal:
                    terminal = True
                else:
                    truncated = True

        self._cache_clean(out.observation)
        if terminal or truncated:
            self._finished = True
            self.episode_records.append(self._make_record(out))
        return self._adv_obs(), reward, terminal, truncated

    # -- helpers ---------------------------------------------------------------

    def _cache_clean(self, obs: np.ndarray) -> None:
        self._clean_obs = obs
        self._clean_action = victim_action(self.victim, obs)

    def _adv_obs(self) -> np.ndarray:
        if self.variant == "ua":
            return np.concatenate([self._clean_obs, [self._clean_action]])
        frac = self.budget.remaining / max(self.gamma_budget, 1)
        return np.concatenate([self._clean_obs, [frac, self._clean_action]])

    def _make_record(self, out) -> EpisodeRecord:
        if out.collided:
            outcome = "collided"
        elif out.completed:
            outcome = "completed"
        else:
            outcome = "truncated"
        return EpisodeRecord(
            seed=self._seed, outcome=outcome, steps=self._t,
            attack_count=sum(1 for lg in self._logs if lg.launched),
            speeds=list(self._speeds), victim_total_reward=self._victim_reward,
            step_logs=list(self._logs))


# ---------------------------------------------------------------------------
# Training and evaluation entry points
# ---------------------------------------------------------------------------


@dataclass
class AdversaryAgent:
    policy: GaussianPolicy
    value_net: ValueNet
    variant: str
    gamma_budget: int           # budget used during training (unused for ua)
    perturb_method: str | None  # None for ama


def train_adversary(victim: VictimAgent, env_config: EnvConfig,
                    ppo_config: PpoConfig, gamma_budget: int,
                    perturb_config: PerturbConfig, seed: int,
                    variant: str = "ours", grace_steps: int = 0,
                    clip_terminal: bool = False):
    """PPO over the attack MDP; returns (agent, log, training episode records)."""
    env_config.validate()
    ppo_config.validate()
    perturb_config.validate()
    obs_dim, act_dim = adversary_dims(variant)
    init_rng = np.random.default_rng(child_seed(seed, STREAM_ADVERSARY_TRAIN, STREAM_INIT))
    policy = make_policy(obs_dim, act_dim, ppo_config.hidden_dims,
                         ppo_config.log_std_init, init_rng)
    value_net = make_value_net(obs_dim, ppo_config.hidden_dims, init_rng)
    env = AdversaryEnv(victim, env_config, perturb_config, variant=variant,
                       gamma_budget=gamma_budget, mode="train",
                       grace_steps=grace_steps, clip_terminal=clip_terminal,
                       base_seed=child_seed(seed, STREAM_ADVERSARY_TRAIN))
    rng = np.random.default_rng(child_seed(seed, STREAM_ADVERSARY_TRAIN, 1))
    log = train(env, policy, value_net, ppo_config, rng)
    agent = AdversaryAgent(policy, value_net, variant, int(gamma_budget),
                           None if variant == "ama" else perturb_config.method)
    return agent, log, env.episode_records


def run_attack_episode(victim: VictimAgent, adversary: AdversaryAgent,
                       env_config: EnvConfig, gamma_test: int,
                       perturb_config: PerturbConfig, seed: int) -> EpisodeRecord:
    """One evaluation episode: deterministic adversary, budget gamma_test,
    no trajectory clipping (episodes run to their natural end)."""
    env = AdversaryEnv(victim, env_config, perturb_config,
                       variant=adversary.variant, gamma_budget=gamma_test,
                       mode="eval")
    obs = env.reset(seed=seed)
    while True:
        action = deterministic_action(adversary.policy, obs)
        obs, _, terminal, truncated = env.step(action)
        if terminal or truncated:
            break
    return env.episode_records[-1]


def run_clean_episode(victim: VictimAgent, env_config: EnvConfig, seed: int) -> EpisodeRecord:
    """No-attack evaluation episode with the deterministic victim."""
    env = LeftTurnEnv(env_config)
    obs = env.reset(seed=seed)
    speeds = []
    total = 0.0
    steps = 0
    while True:
        out = env.step(victim_action(victim, obs))
        steps += 1
        speeds.append(out.ego_speed)
        total += out.reward
        obs = out.observation
        if out.collided:
            outcome = "collided"
            break
        if out.completed:
            outcome = "completed"
            break
        if out.truncated:
            outcome = "truncated"
            break
    return EpisodeRecord(seed=int(seed), outcome=outcome, steps=steps,
                         attack_count=0, speeds=speeds,
                         victim_total_reward=total, step_logs=[])


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def adversary_to_dict(agent: AdversaryAgent) -> dict:
    obs_dim, act_dim = adversary_dims(agent.variant)
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": "adversary",
        "variant": agent.variant,
        "obs_dim": obs_dim,
        "action_dim": act_dim,
        "gamma_budget": agent.gamma_budget,
        "perturb_method": agent.perturb_method,
        "action_low": agent.policy.action_low.tolist(),
        "action_high": agent.policy.action_high.tolist(),
        "policy_mean": mlp_to_dict(agent.policy.mean_net),
        "log_std": agent.policy.log_std.tolist(),
        "value": mlp_to_dict(agent.value_net.net),
    }


def adversary_from_dict(d: dict) -> AdversaryAgent:
    if d.get("kind") != "adversary":
        raise ValueError(f"checkpoint kind {d.get('kind')!r} is not 'adversary'")
    policy = GaussianPolicy(mlp_from_dict(d["policy_mean"]), np.asarray(d["log_std"]),
                            d["action_low"], d["action_high"])
    return AdversaryAgent(policy, ValueNet(mlp_from_dict(d["value"])),
                          d["variant"], int(d["gamma_budget"]), d["perturb_method"])


def load_adversary(path) -> AdversaryAgent:
    return adversary_from_dict(load_json(path))
