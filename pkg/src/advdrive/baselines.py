"""Comparison attackers: random attack, unlimited attack, action modification.

RA perturbs every step toward a uniformly random lure and needs no
training. UA is the budgeted adversary stripped of the switch head and the
budget (it attacks every step). AMA keeps the switch and budget but writes
the lure directly into the executed action, bypassing perturbation
generation entirely; it upper-bounds what perfect perturbations could do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversary import AdversaryAgent, AdversaryEnv, train_adversary
from .config import (EnvConfig, PerturbConfig, PpoConfig, STREAM_RA, child_seed)
from .records import EpisodeRecord
from .sim import EpisodeFinishedError
from .victim import VictimAgent


@dataclass(frozen=True)
class BaselineKind:
    kind: str                 # "ra" | "ama" | "ua"
    perturb_method: str | None = None   # ra/ua only; ama bypasses perturbation

    def __post_init__(self):
        if self.kind not in ("ra", "ama", "ua"):
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "ama" and self.perturb_method is not None:
            raise ValueError("ama does not use a perturbation method")


def run_ra_episode(victim: VictimAgent, env_config: EnvConfig,
                   perturb_config: PerturbConfig, seed: int) -> EpisodeRecord:
    """Random attack: every step, perturb toward lure ~ Uniform[-1, 1]."""
    env = AdversaryEnv(victim, env_config, perturb_config, variant="ua",
                       mode="eval")
    obs = env.reset(seed=seed)
    lure_rng = np.random.default_rng(child_seed(seed, STREAM_RA))
    while True:
        lure = lure_rng.uniform(-1.0, 1.0)
        obs, _, terminal, truncated = env.step(np.array([lure]))
        if terminal or truncated:
            break
    return env.episode_records[-1]


def train_ua(victim: VictimAgent, env_config: EnvConfig, ppo_config: PpoConfig,
             perturb_config: PerturbConfig, seed: int):
    """Unlimited attack: lure-only PPO adversary, perturbation every step."""
    return train_adversary(victim, env_config, ppo_config, gamma_budget=0,
                           perturb_config=perturb_config, seed=seed, variant="ua")


def train_ama(victim: VictimAgent, env_config: EnvConfig, ppo_config: PpoConfig,
              gamma_budget: int, seed: int):
    """Action modification attack: budgeted switch/lure adversary whose lure
    is executed directly (no perturbation step)."""
    return train_adversary(victim, env_config, ppo_config, gamma_budget=gamma_budget,
                           perturb_config=PerturbConfig(), seed=seed, variant="ama")
