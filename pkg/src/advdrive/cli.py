"""Command-line entry point tying the modules into reproducible runs.

Every command writes its outputs plus a manifest embedding the fully
resolved configuration and seed, so re-running with identical inputs
reproduces identical bytes. Commands exit nonzero on any validation or
I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .adversary import (adversary_from_dict, adversary_to_dict, load_adversary,
                        train_adversary)
from .baselines import train_ua
from .config import (ConfigError, ExperimentConfig, config_to_flat_dict,
                     load_experiment_config)
from .metrics import aggregate, report_csv_header, report_csv_row
from .nn import load_json, save_json, sha256_file
from .records import write_episode_csv
from .runner import (compare_methods, comparison_csv, evaluate_adversary,
                     evaluate_no_attack, evaluate_ra, rows_to_csv, sweep_density,
                     sweep_gamma, sweep_gamma_test)
from .victim import load_victim, save_victim, train_victim

TRAIN_METHODS = ("ours", "ua", "ama")
EVAL_METHODS = ("ours", "ua", "ama", "ra", "none")


class CliError(RuntimeError):
    pass


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_experiment_config(getattr(args, "config", None))
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = (args.seed,)
    if getattr(args, "episodes", None) is not None:
        updates["eval_episodes"] = args.episodes
    if getattr(args, "gamma_test", None) is not None:
        updates["gamma_test"] = args.gamma_test
    if getattr(args, "perturb", None) is not None:
        updates["perturb"] = dataclasses.replace(cfg.perturb, method=args.perturb)
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    cfg.validate()
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg: ExperimentConfig, seed: int, **extra) -> dict:
    return {"format_version": 1, "seed": seed,
            "config": config_to_flat_dict(cfg), **extra}


def _load_victim(cfg: ExperimentConfig, path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"victim checkpoint not found: {path}")
    return load_victim(p, cfg.env, cfg.victim_ppo)


def _load_attacker(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"adversary checkpoint not found: {path}")
    return load_adversary(p)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train_victim(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed = cfg.seeds[0]
    agent, log = train_victim(cfg.env, cfg.victim_ppo, seed)
    ckpt = out / "victim_checkpoint.json"
    save_victim(ckpt, agent)
    log.to_csv(out / "victim_training_log.csv")
    save_json(out / "victim_manifest.json",
              _manifest(cfg, seed, role="victim", checkpoint_sha256=sha256_file(ckpt)))
    print(f"victim checkpoint: {ckpt}")
    return 0


def cmd_train_adversary(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed = cfg.seeds[0]
    victim = _load_victim(cfg, args.victim)
    method = args.method
    if method == "ours":
        agent, log, _ = train_adversary(victim, cfg.env, cfg.adversary_ppo,
                                        cfg.gamma_budget, cfg.perturb, seed)
    elif method == "ua":
        agent, log, _ = train_ua(victim, cfg.env, cfg.adversary_ppo, cfg.perturb, seed)
    elif method == "ama":
        agent, log, _ = train_adversary(victim, cfg.env, cfg.adversary_ppo,
                                        cfg.gamma_budget, cfg.perturb, seed,
                                        variant="ama")
    else:
        raise CliError(f"--method must be one of {TRAIN_METHODS}")
    ckpt = out / f"adversary_{method}_checkpoint.json"
    save_json(ckpt, adversary_to_dict(agent))
    log.to_csv(out / f"adversary_{method}_training_log.csv")
    manifest_extra = {
        "role": "adversary",
        "variant": method,
        "gamma_budget": cfg.gamma_budget if method != "ua" else None,
        "eps_pert": cfg.perturb.eps_pert if method != "ama" else None,
        "perturb_method": agent.perturb_method,
        "victim_sha256": sha256_file(args.victim),
        "checkpoint_sha256": sha256_file(ckpt),
    }
    save_json(out / f"adversary_{method}_manifest.json",
              _manifest(cfg, seed, **manifest_extra))
    print(f"adversary checkpoint: {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed = cfg.seeds[0]
    victim = _load_victim(cfg, args.victim)
    method = args.method
    episodes = cfg.eval_episodes
    gamma_test = cfg.resolved_gamma_test()
    if method == "none":
        records = evaluate_no_attack(victim, cfg.env, episodes, seed)
        perturb_method = None
    elif method == "ra":
        records = evaluate_ra(victim, cfg.env, cfg.perturb, episodes, seed)
        perturb_method = cfg.perturb.method
    else:
        if not args.attacker:
            raise CliError(f"--attacker is required for method {method!r}")
        attacker = _load_attacker(args.attacker)
        if attacker.variant != method:
            raise CliError(f"checkpoint variant {attacker.variant!r} does not match "
                           f"--method {method!r}")
        records = evaluate_adversary(victim, attacker, cfg.env, cfg.perturb,
                                     gamma_test, episodes, seed)
        perturb_method = attacker.perturb_method
    report = aggregate(records, cfg.metrics_k,
                       provenance={"method": method, "perturb": perturb_method,
                                   "gamma_test": gamma_test, "episodes": episodes,
                                   "seed": seed, "arrival_p": cfg.env.arrival_p,
                                   "eps_pert": cfg.perturb.eps_pert,
                                   "victim_sha256": sha256_file(args.victim)})
    save_json(out / f"metrics_{method}.json",
              _manifest(cfg, seed, report=report.to_dict()))
    with open(out / f"metrics_{method}.csv", "w", encoding="utf-8") as fh:
        fh.write(report_csv_header())
        fh.write(report_csv_row(report, method, perturb_method))
    write_episode_csv(out / f"episodes_{method}.csv", records)
    print(f"{method}: SR={report.sr:.2f} CR={report.cr:.2f} "
          f"ANA={report.ana_mean:.2f} AE={report.ae:.3f}")
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed = cfg.seeds[0]
    victim = _load_victim(cfg, args.victim)
    attackers = {}
    for path in args.attacker or []:
        agent = _load_attacker(path)
        attackers[f"{agent.variant}:{path}"] = agent
    rows = compare_methods(victim, attackers, cfg.env, cfg.perturb,
                           cfg.resolved_gamma_test(), cfg.eval_episodes, seed,
                           cfg.metrics_k, include_none=not args.no_none,
                           include_ra=args.with_ra)
    with open(out / "comparison.csv", "w", encoding="utf-8") as fh:
        fh.write(comparison_csv(rows))
    save_json(out / "comparison.json",
              _manifest(cfg, seed, rows=[
                  {"method": r.method, "perturb_method": r.perturb_method,
                   "report": r.report.to_dict()} for r in rows]))
    print((out / "comparison.csv").read_text(), end="")
    return 0


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.replace(",", " ").split()]


def cmd_sweep_gamma(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    victim = _load_victim(cfg, args.victim)
    rows = sweep_gamma(victim, cfg.env, cfg.adversary_ppo, _int_list(args.gammas),
                       cfg.perturb, cfg.seeds, cfg.eval_episodes, cfg.metrics_k)
    with open(out / "sweep_gamma.csv", "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    save_json(out / "sweep_gamma.json", _manifest(cfg, cfg.seeds[0], rows=rows))
    print(rows_to_csv(rows), end="")
    return 0


def cmd_sweep_gamma_test(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    victim = _load_victim(cfg, args.victim)
    attacker = _load_attacker(args.attacker)
    rows = sweep_gamma_test(victim, attacker, cfg.env, cfg.perturb,
                            _int_list(args.gammas_test), cfg.eval_episodes,
                            cfg.seeds[0], cfg.metrics_k)
    with open(out / "sweep_gamma_test.csv", "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    save_json(out / "sweep_gamma_test.json", _manifest(cfg, cfg.seeds[0], rows=rows))
    print(rows_to_csv(rows), end="")
    return 0


def cmd_sweep_density(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    victim = _load_victim(cfg, args.victim)
    attackers = {}
    for path in args.attacker or []:
        agent = _load_attacker(path)
        attackers[f"{agent.variant}:{path}"] = agent
    rows = sweep_density(victim, attackers, cfg.env, cfg.perturb,
                         _float_list(args.densities), cfg.resolved_gamma_test(),
                         cfg.eval_episodes, cfg.seeds[0], cfg.metrics_k,
                         include_ra=args.with_ra)
    with open(out / "sweep_density.csv", "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    save_json(out / "sweep_density.json", _manifest(cfg, cfg.seeds[0], rows=rows))
    print(rows_to_csv(rows), end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="global seed (overrides config seeds)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advdrive",
        description="train and attack a DRL left-turn driving policy")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-victim", help="train the driving policy")
    _add_common(p)
    p.set_defaults(func=cmd_train_victim)

    p = sub.add_parser("train-adversary", help="train an attack policy")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--method", choices=TRAIN_METHODS, default="ours")
    p.add_argument("--perturb", choices=("fgsm", "pgd"))
    p.set_defaults(func=cmd_train_adversary)

    p = sub.add_parser("evaluate", help="run evaluation episodes and report metrics")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--attacker", help="adversary checkpoint (ours/ua/ama)")
    p.add_argument("--method", choices=EVAL_METHODS, default="none")
    p.add_argument("--episodes", type=int)
    p.add_argument("--gamma-test", dest="gamma_test", type=int)
    p.add_argument("--perturb", choices=("fgsm", "pgd"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="evaluate several methods on shared seeds")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--attacker", action="append")
    p.add_argument("--with-ra", action="store_true")
    p.add_argument("--no-none", action="store_true")
    p.add_argument("--episodes", type=int)
    p.add_argument("--gamma-test", dest="gamma_test", type=int)
    p.add_argument("--perturb", choices=("fgsm", "pgd"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-gamma", help="train/evaluate adversaries across budgets")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--gammas", required=True, help="e.g. 5,6,7,8,9,10")
    p.add_argument("--episodes", type=int)
    p.set_defaults(func=cmd_sweep_gamma)

    p = sub.add_parser("sweep-gamma-test", help="evaluate one adversary across test budgets")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--attacker", required=True)
    p.add_argument("--gammas-test", dest="gammas_test", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--perturb", choices=("fgsm", "pgd"))
    p.set_defaults(func=cmd_sweep_gamma_test)

    p = sub.add_parser("sweep-density", help="evaluate methods across traffic densities")
    _add_common(p)
    p.add_argument("--victim", required=True)
    p.add_argument("--attacker", action="append")
    p.add_argument("--with-ra", action="store_true")
    p.add_argument("--densities", default="0.3,0.5,0.7")
    p.add_argument("--episodes", type=int)
    p.add_argument("--gamma-test", dest="gamma_test", type=int)
    p.set_defaults(func=cmd_sweep_density)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
