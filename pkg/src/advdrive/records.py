"""Per-step and per-episode outcome records shared by all attack methods.

Every attack variant and the no-attack baseline produce the same episode
schema, so a single metrics pipeline serves all of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class AttackStepLog:
    step: int
    launched: bool
    p: float
    lure: float
    delta_norm: float        # L-inf of the applied observation perturbation
    victim_action: float     # clean deterministic action a_t
    executed_action: float   # action actually sent to the environment
    collided: bool


@dataclass
class EpisodeRecord:
    seed: int
    outcome: str             # "collided" | "completed" | "truncated"
    steps: int
    attack_count: int
    speeds: list[float] = field(default_factory=list)
    victim_total_reward: float = 0.0
    step_logs: list[AttackStepLog] = field(default_factory=list)

    @property
    def collided(self) -> bool:
        return self.outcome == "collided"

    @property
    def completed(self) -> bool:
        return self.outcome == "completed"


EPISODE_CSV_HEADER = "seed,outcome,steps,attack_count,victim_total_reward,mean_speed\n"


def episode_csv_row(rec: EpisodeRecord) -> str:
    mean_speed = sum(rec.speeds) / len(rec.speeds) if rec.speeds else 0.0
    return (f"{rec.seed},{rec.outcome},{rec.steps},{rec.attack_count},"
            f"{rec.victim_total_reward!r},{mean_speed!r}\n")


def write_episode_csv(path, records: list[EpisodeRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(EPISODE_CSV_HEADER)
        for rec in records:
            fh.write(episode_csv_row(rec))
