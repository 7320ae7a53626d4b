"""Targeted, L-inf bounded observation perturbations (FGSM and PGD).

Both methods descend the squared gap between the victim's policy mean and a
lure action. Perturbed observations are re-clipped to the valid [-1, 1]
box, and the stored delta is recomputed after clipping so the L-inf budget
holds for what is actually applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PerturbConfig
from .nn import backward_input
from .victim import VictimAgent, victim_action, victim_mean

OBS_LOW = -1.0
OBS_HIGH = 1.0


@dataclass
class Perturbation:
    delta: np.ndarray
    achieved_action: float
    target_action: float

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.delta))) if self.delta.size else 0.0


def targeted_loss(agent: VictimAgent, obs, target: float) -> float:
    """L = (policy_mean(obs) - target)^2."""
    gap = victim_mean(agent, obs) - float(target)
    return gap * gap


def targeted_loss_grad(agent: VictimAgent, obs, target: float):
    """(loss, d loss / d obs)."""
    obs = np.asarray(obs, dtype=np.float64)
    out, tape = agent.policy.mean_net.forward(obs)
    gap = float(out[0]) - float(target)
    grad = backward_input(agent.policy.mean_net, tape, np.array([2.0 * gap]))
    return gap * gap, grad


def _finish(agent: VictimAgent, obs: np.ndarray, perturbed: np.ndarray,
            target: float) -> Perturbation:
    delta = perturbed - obs
    return Perturbation(delta, victim_action(agent, perturbed), float(target))


def fgsm(agent: VictimAgent, obs, target: float, config: PerturbConfig) -> Perturbation:
    """Single signed-gradient step of size eps, then box clip."""
    obs = np.asarray(obs, dtype=np.float64)
    _, grad = targeted_loss_grad(agent, obs, target)
    stepped = obs - config.eps_pert * np.sign(grad)
    perturbed = np.clip(stepped, OBS_LOW, OBS_HIGH)
    return _finish(agent, obs, perturbed, target)


def pgd(agent: VictimAgent, obs, target: float, config: PerturbConfig) -> Perturbation:
    """Iterated signed-gradient descent projected to the eps ball and the
    observation box; returns the best iterate by targeted loss."""
    obs = np.asarray(obs, dtype=np.float64)
    eps = config.eps_pert
    alpha = config.alpha()
    x = obs.copy()
    best_x = None
    best_loss = np.inf
    for _ in range(config.pgd_steps):
        _, grad = targeted_loss_grad(agent, x, target)
        x = x - alpha * np.sign(grad)
        x = np.minimum(np.maximum(x, obs - eps), obs + eps)
        x = np.clip(x, OBS_LOW, OBS_HIGH)
        loss = targeted_loss(agent, x, target)
        if loss < best_loss:
            best_loss = loss
            best_x = x.copy()
    return _finish(agent, obs, best_x, target)


def generate(agent: VictimAgent, obs, target: float, config: PerturbConfig) -> Perturbation:
    if config.method == "fgsm":
        return fgsm(agent, obs, target, config)
    if config.method == "pgd":
        return pgd(agent, obs, target, config)
    raise ValueError(f"unknown perturbation method {config.method!r}")
