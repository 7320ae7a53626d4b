"""Desk-scale testbed for budget-constrained adversarial attacks on a DRL
left-turn driving policy.

Pipeline: train a PPO driving policy in a kinematic intersection simulator,
then train a PPO adversary that injects bounded observation perturbations at
learned critical moments, and evaluate with SR/CR/AS/AR/ANA/AE metrics.
"""

__version__ = "0.1.0"

from .config import EnvConfig, PpoConfig, PerturbConfig, ExperimentConfig, child_seed

__all__ = [
    "EnvConfig",
    "PpoConfig",
    "PerturbConfig",
    "ExperimentConfig",
    "child_seed",
    "__version__",
]
