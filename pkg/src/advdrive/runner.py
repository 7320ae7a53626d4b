"""Evaluation fan-out, method comparison, and parameter sweeps.

Episodes are seeded from one base seed through the documented fan-out, so
any row of any report can be reproduced in isolation. All methods share
the same per-episode seeds, which makes paired comparisons (e.g. a
gamma_test sweep against the no-attack baseline) exact rather than
statistical.
"""

from __future__ import annotations

import dataclasses

from .adversary import (AdversaryAgent, run_attack_episode, run_clean_episode,
                        train_adversary)
from .baselines import run_ra_episode, train_ua
from .config import (EnvConfig, ExperimentConfig, PerturbConfig, PpoConfig,
                     STREAM_EVAL, child_seed)
from .metrics import MetricsReport, aggregate, report_csv_header, report_csv_row
from .records import EpisodeRecord
from .victim import VictimAgent


def eval_episode_seeds(seed: int, episodes: int) -> list[int]:
    return [child_seed(seed, STREAM_EVAL, i) for i in range(episodes)]


def evaluate_no_attack(victim: VictimAgent, env_config: EnvConfig,
                       episodes: int, seed: int) -> list[EpisodeRecord]:
    return [run_clean_episode(victim, env_config, s)
            for s in eval_episode_seeds(seed, episodes)]


def evaluate_adversary(victim: VictimAgent, adversary: AdversaryAgent,
                       env_config: EnvConfig, perturb_config: PerturbConfig,
                       gamma_test: int, episodes: int, seed: int) -> list[EpisodeRecord]:
    return [run_attack_episode(victim, adversary, env_config, gamma_test,
                               perturb_config, s)
            for s in eval_episode_seeds(seed, episodes)]


def evaluate_ra(victim: VictimAgent, env_config: EnvConfig,
                perturb_config: PerturbConfig, episodes: int,
                seed: int) -> list[EpisodeRecord]:
    return [run_ra_episode(victim, env_config, perturb_config, s)
            for s in eval_episode_seeds(seed, episodes)]


# ---------------------------------------------------------------------------
# Comparison tables and sweeps
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class ComparisonRow:
    method: str                      # none | ra | ua | ama | ours
    perturb_method: str | None
    report: MetricsReport


_METHOD_ORDER = {"none": 0, "ama": 1, "ra": 2, "ua": 3, "ours": 4}


def compare_methods(victim: VictimAgent, attackers: dict[str, AdversaryAgent],
                    env_config: EnvConfig, perturb_config: PerturbConfig,
                    gamma_test: int, episodes: int, seed: int, k: float,
                    include_none: bool = True, include_ra: bool = False) -> list[ComparisonRow]:
    """Evaluate a set of methods on shared seeds; rows sorted by method then
    perturbation method."""
    rows: list[ComparisonRow] = []
    prov = {"gamma_test": gamma_test, "episodes": episodes, "seed": seed,
            "arrival_p": env_config.arrival_p}
    if include_none:
        recs = evaluate_no_attack(victim, env_config, episodes, seed)
        rows.append(ComparisonRow("none", None, aggregate(recs, k, {**prov, "method": "none"})))
    if include_ra:
        recs = evaluate_ra(victim, env_config, perturb_config, episodes, seed)
        rows.append(ComparisonRow("ra", perturb_config.method,
                                  aggregate(recs, k, {**prov, "method": "ra",
                                                      "perturb": perturb_config.method})))
    for name in sorted(attackers):
        agent = attackers[name]
        recs = evaluate_adversary(victim, agent, env_config, perturb_config,
                                  gamma_test, episodes, seed)
        rows.append(ComparisonRow(agent.variant, agent.perturb_method,
                                  aggregate(recs, k, {**prov, "method": agent.variant,
                                                      "perturb": agent.perturb_method})))
    rows.sort(key=lambda r: (_METHOD_ORDER.get(r.method, 99), r.perturb_method or ""))
    return rows


def comparison_csv(rows: list[ComparisonRow]) -> str:
    out = report_csv_header()
    for row in rows:
        out += report_csv_row(row.report, row.method, row.perturb_method)
    return out


def sweep_gamma(victim: VictimAgent, env_config: EnvConfig,
                adversary_ppo: PpoConfig, gamma_list, perturb_config: PerturbConfig,
                seeds, episodes: int, k: float) -> list[dict]:
    """Train one adversary per (budget, seed) and evaluate it at the same
    budget; one result row per budget, averaged over seeds."""
    rows = []
    for gamma in gamma_list:
        crs, ana_means, ana_stds = [], [], []
        for seed in seeds:
            agent, _, _ = train_adversary(victim, env_config, adversary_ppo,
                                          gamma, perturb_config, seed)
            recs = evaluate_adversary(victim, agent, env_config, perturb_config,
                                      gamma, episodes, seed)
            rep = aggregate(recs, k)
            crs.append(rep.cr)
            ana_means.append(rep.ana_mean)
            ana_stds.append(rep.ana_std)
        n = len(seeds)
        rows.append({"gamma": int(gamma),
                     "CR": sum(crs) / n,
                     "ANA_mean": sum(ana_means) / n,
                     "ANA_std": sum(ana_stds) / n})
    return rows


def sweep_gamma_test(victim: VictimAgent, adversary: AdversaryAgent,
                     env_config: EnvConfig, perturb_config: PerturbConfig,
                     gamma_test_list, episodes: int, seed: int, k: float) -> list[dict]:
    """Evaluate one trained adversary under different test-time budgets."""
    rows = []
    for gt in gamma_test_list:
        recs = evaluate_adversary(victim, adversary, env_config, perturb_config,
                                  int(gt), episodes, seed)
        rep = aggregate(recs, k)
        rows.append({"gamma_test": int(gt), "CR": rep.cr,
                     "ANA_mean": rep.ana_mean, "AE": rep.ae})
    return rows


def sweep_density(victim: VictimAgent, attackers: dict[str, AdversaryAgent],
                  env_config: EnvConfig, perturb_config: PerturbConfig,
                  density_list, gamma_test: int, episodes: int, seed: int,
                  k: float, include_ra: bool = True) -> list[dict]:
    """Cross-product of methods and traffic densities, shared seeds."""
    rows = []
    for p in density_list:
        cfg = dataclasses.replace(env_config, arrival_p=float(p))
        comparison = compare_methods(victim, attackers, cfg, perturb_config,
                                     gamma_test, episodes, seed, k,
                                     include_none=True, include_ra=include_ra)
        for row in comparison:
            rows.append({"method": row.method,
                         "perturb_method": row.perturb_method or "-",
                         "arrival_p": float(p),
                         "SR": row.report.sr, "CR": row.report.cr,
                         "ANA_mean": row.report.ana_mean,
                         "AE": row.report.ae})
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    """Deterministic CSV for a list of homogeneous dict rows."""
    if not rows:
        return "\n"
    cols = list(rows[0].keys())
    out = ",".join(cols) + "\n"
    for row in rows:
        cells = []
        for c in cols:
            v = row[c]
            cells.append(repr(v) if isinstance(v, float) else str(v))
        out += ",".join(cells) + "\n"
    return out
