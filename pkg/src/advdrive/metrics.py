"""Aggregation of episode records into SR/CR/AS/AR/ANA/AE reports.

SR and CR are completion and collision fractions; truncated episodes
without a collision count toward neither, so SR + CR <= 1. AS pools
per-step ego speeds across episodes, AR is the per-episode victim return,
ANA the per-episode attack count, and AE = CR * exp(-k * mean ANA) is the
single-number stealth-weighted effectiveness score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .records import EpisodeRecord


@dataclass
class MetricsReport:
    n_episodes: int
    sr: float
    cr: float
    as_mean: float
    as_std: float
    ar_mean: float
    ar_std: float
    ana_mean: float
    ana_std: float
    ae: float
    k: float
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "SR": self.sr,
            "CR": self.cr,
            "AS_mean": self.as_mean,
            "AS_std": self.as_std,
            "AR_mean": self.ar_mean,
            "AR_std": self.ar_std,
            "ANA_mean": self.ana_mean,
            "ANA_std": self.ana_std,
            "AE": self.ae,
            "k": self.k,
            "provenance": dict(sorted(self.provenance.items())),
        }


def attack_efficiency(cr: float, ana_mean: float, k: float) -> float:
    """AE = CR * exp(-k * ANA)."""
    return cr * math.exp(-k * ana_mean)


def aggregate(records: list[EpisodeRecord], k: float = 0.05,
              provenance: dict | None = None) -> MetricsReport:
    """Fold episode records into one report; order-independent."""
    if not records:
        raise ValueError("aggregate() needs at least one episode record")
    n = len(records)
    sr = sum(1 for r in records if r.completed) / n
    cr = sum(1 for r in records if r.collided) / n
    speeds = np.concatenate([np.asarray(r.speeds, dtype=np.float64)
                             for r in records if r.speeds]) \
        if any(r.speeds for r in records) else np.zeros(1)
    rewards = np.asarray([r.victim_total_reward for r in records])
    attacks = np.asarray([r.attack_count for r in records], dtype=np.float64)
    ana_mean = float(attacks.mean())
    return MetricsReport(
        n_episodes=n,
        sr=sr,
        cr=cr,
        as_mean=float(speeds.mean()),
        as_std=float(speeds.std()),
        ar_mean=float(rewards.mean()),
        ar_std=float(rewards.std()),
        ana_mean=ana_mean,
        ana_std=float(attacks.std()),
        ae=attack_efficiency(cr, ana_mean, k),
        k=float(k),
        provenance=dict(provenance or {}),
    )


REPORT_CSV_COLUMNS = (
    "method", "perturb_method", "n_episodes", "SR", "CR", "AS_mean", "AS_std",
    "AR_mean", "AR_std", "ANA_mean", "ANA_std", "AE",
)


def report_csv_header() -> str:
    return ",".join(REPORT_CSV_COLUMNS) + "\n"


def report_csv_row(report: MetricsReport, method: str,
                   perturb_method: str | None) -> str:
    """One table row; attack columns show '-' for the no-attack method."""
    no_attack = method == "none"
    vals: list[str] = [method, perturb_method if perturb_method else "-",
                       str(report.n_episodes), repr(report.sr), repr(report.cr),
                       repr(report.as_mean), repr(report.as_std),
                       repr(report.ar_mean), repr(report.ar_std)]
    if no_attack:
        vals += ["-", "-", "-"]
    else:
        vals += [repr(report.ana_mean), repr(report.ana_std), repr(report.ae)]
    return ",".join(vals) + "\n"
