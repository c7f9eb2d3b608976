"""Command-line front end.

Subcommands::

    tugems validate --config cfg.yaml
    tugems learn    --config cfg.yaml --out runs/x [--seed N ...] [--traces]
    tugems sweep    --config cfg.yaml --out runs/x [--workers K]
    tugems eval     --config cfg.yaml --out runs/x --snapshots runs/x
                    [--baseline-snapshots DIR]
    tugems dp       --config cfg.yaml --out runs/x

Exit codes: 0 on success, 1 for configuration or argument problems, 2 for
runtime failures (missing snapshots, infeasible constraints, I/O).
Artifacts (CSV tables, Q-table snapshots, ``manifest.json``) carry no
timestamps, so rerunning a command over the same config reproduces them
byte for byte.  Output files are written atomically (temp file, then
rename) and the config file itself is never touched.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .dp import dp_baseline, dp_slack_energy_j
from .ensemble import EnsemblePolicy
from .experiment import (RunSetup, config_fingerprint, robustness_eval,
                         run_learning, sweep_weights, write_learning_curve_csv,
                         write_robustness_csv, write_sweep_csv, write_trace_csv)
from .qlearn import Agent, LearnerConfig, load_qtable, make_rng, save_qtable

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to the validation exit code."""

    def error(self, message: str) -> None:  # noqa: D401 (argparse contract)
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tugems",
                     description="Tabular Q-learning energy management for a "
                                 "series-hybrid towing tractor.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("--config", required=True, metavar="FILE",
                       help="YAML run configuration")
        if out:
            p.add_argument("--out", required=True, metavar="DIR",
                           help="directory for artifacts (created if missing)")

    p_learn = sub.add_parser("learn", help="train agents and write the "
                                           "learning curve and Q-table snapshots")
    common(p_learn)
    p_learn.add_argument("--seed", type=int, action="append", metavar="N",
                         help="override config seeds (repeatable)")
    p_learn.add_argument("--traces", action="store_true",
                         help="also write per-step traces of the final episode")

    p_sweep = sub.add_parser("sweep", help="sweep the weighted-combination "
                                           "proportion and write sweep.csv")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1, metavar="K",
                         help="parallel worker processes (default 1)")

    p_eval = sub.add_parser("eval", help="frozen-policy robustness table from "
                                         "trained snapshots")
    common(p_eval)
    p_eval.add_argument("--snapshots", required=True, metavar="DIR",
                        help="directory holding qtable_A.json (and qtable_B.json "
                             "for ensemble snapshots); multi-seed runs fall "
                             "back to the lowest _seedN snapshot")
    p_eval.add_argument("--baseline-snapshots", metavar="DIR",
                        help="directory holding the baseline qtable_A.json "
                             "(defaults to the ensemble's own agent A)")

    p_dp = sub.add_parser("dp", help="dynamic-programming reference cost for "
                                     "the configured cycle")
    common(p_dp)

    p_val = sub.add_parser("validate", help="check a config file and print "
                                            "its fingerprint")
    common(p_val, out=False)
    return parser


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="")
    tmp.replace(path)


def _write_manifest(out: Path, command: str, config: RunConfig,
                    artifacts: list[str], extra: dict | None = None) -> None:
    doc = {
        "tool": "tugems",
        "tool_version": __version__,
        "command": command,
        "label": config.label,
        "config_fingerprint": config_fingerprint(config.to_dict()),
        "config": config.to_dict(),
        "artifacts": sorted(artifacts),
    }
    if extra:
        doc.update(extra)
    _write_atomic(out / "manifest.json",
                  json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _prepare(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return config, out


def _cmd_learn(args: argparse.Namespace) -> int:
    config, out = _prepare(args)
    seeds = tuple(args.seed) if args.seed else config.seeds
    if len(set(seeds)) != len(seeds):
        raise ConfigError([f"--seed: duplicate seeds in {list(seeds)}"])
    grid, actions = config.build_grids()
    setup = RunSetup(cycle=config.build_cycle(), models=config.build_models(),
                     grid=grid, actions=actions, config_a=config.agent_a,
                     config_b=config.agent_b, policy=config.policy,
                     mode=config.mode, episodes=config.episodes,
                     initial_soc=config.initial_soc)
    artifacts: list[str] = []
    finals = {}
    for seed in seeds:
        result = run_learning(setup, seed, record_final_traces=args.traces)
        tag = f"_seed{seed}" if len(seeds) > 1 else ""
        curve = f"learning_curve{tag}.csv"
        _write_atomic(out / curve, write_learning_curve_csv(result.episodes))
        artifacts.append(curve)
        for name, agent in result.agents.items():
            snap = f"qtable_{name}{tag}.json"
            save_qtable(out / snap, agent.q, grid, actions,
                        schedule=agent.config.schedule,
                        extra={"label": config.label, "seed": seed,
                               "mode": config.mode})
            artifacts.append(snap)
        if args.traces and result.final_traces is not None:
            trace = f"trace{tag}.csv"
            _write_atomic(out / trace, write_trace_csv(result.final_traces))
            artifacts.append(trace)
        finals[str(seed)] = {
            "efficiency": result.final.energy_efficiency,
            "oec_j": result.final.oec_j,
            "end_soc": result.final.end_soc,
        }
        eff = result.final.energy_efficiency
        eff_txt = f"{eff:.4f}" if eff is not None else "n/a"
        print(f"seed {seed}: final efficiency {eff_txt}, "
              f"OEC {result.final.oec_j / 1e6:.2f} MJ, "
              f"end SoC {result.final.end_soc:.3f}")
    _write_manifest(out, "learn", config, artifacts,
                    extra={"seeds": list(seeds), "final_episode": finals})
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config, out = _prepare(args)
    grid, actions = config.build_grids()
    rows = sweep_weights(config.build_cycle(), config.build_models(), grid,
                         actions, config.agent_a, config.agent_b,
                         repeats=config.sweep_repeats,
                         episodes=config.sweep_episodes,
                         initial_soc=config.initial_soc,
                         base_seed=config.sweep_base_seed,
                         workers=args.workers)
    _write_atomic(out / "sweep.csv", write_sweep_csv(rows))
    best = max(rows, key=lambda r: r.mean_eff)
    print(f"best proportion mu={best.mu}: mean efficiency "
          f"{best.mean_eff:.4f} +/- {best.std_eff:.4f} over {best.repeats} repeats")
    _write_manifest(out, "sweep", config, ["sweep.csv"],
                    extra={"best_mu": best.mu, "best_mean_eff": best.mean_eff})
    return EXIT_OK


def _resolve_snapshot(snap_dir: Path, name: str) -> Path:
    """Prefer the unsuffixed snapshot; else the lowest-seed one."""
    plain = snap_dir / f"qtable_{name}.json"
    if plain.is_file():
        return plain
    seeded = []
    for candidate in snap_dir.glob(f"qtable_{name}_seed*.json"):
        suffix = candidate.stem.rsplit("_seed", 1)[1]
        try:
            seeded.append((int(suffix), candidate))
        except ValueError:
            continue
    if seeded:
        return min(seeded)[1]
    return plain


def _load_agent(path: Path, name: str, config: RunConfig,
                fallback: LearnerConfig) -> tuple[Agent, str]:
    """Rebuild a frozen agent from a snapshot; returns it with a method label."""
    if not path.is_file():
        raise FileNotFoundError(
            f"snapshot {path} not found; run 'tugems learn' first")
    grid, actions = config.build_grids()
    q, _, _, schedule = load_qtable(path, expect_grid=grid, expect_actions=actions)
    learner = fallback if schedule is None else LearnerConfig(
        learning_rate=fallback.learning_rate, discount=fallback.discount,
        schedule=schedule)
    agent = Agent(name=name, q=q, config=learner, rng=make_rng(0, 0))
    label = schedule.kind if schedule is not None else "baseline"
    return agent, label


def _cmd_eval(args: argparse.Namespace) -> int:
    config, out = _prepare(args)
    snap_dir = Path(args.snapshots)
    agent_a, label_a = _load_agent(_resolve_snapshot(snap_dir, "A"), "A",
                                   config, config.agent_a)
    ensemble = {"A": agent_a}
    path_b = _resolve_snapshot(snap_dir, "B")
    if path_b.is_file():
        agent_b, _ = _load_agent(path_b, "B", config, config.agent_b)
        ensemble["B"] = agent_b
    if args.baseline_snapshots:
        base_path = _resolve_snapshot(Path(args.baseline_snapshots), "A")
        baseline, base_label = _load_agent(base_path, "A", config, config.agent_a)
    else:
        baseline, base_label = agent_a, label_a
    grid, actions = config.build_grids()
    policy = config.policy if "B" in ensemble else EnsemblePolicy.weighted(1.0)
    rows = robustness_eval(ensemble, baseline, policy,
                           config.build_eval_cycles(),
                           list(config.eval_initial_socs),
                           config.build_models(), grid, actions,
                           baseline_method=base_label)
    _write_atomic(out / "robustness.csv", write_robustness_csv(rows))
    for row in rows:
        print(f"{row.cycle} @ SoC {row.init_soc:.0%} [{row.method}]: "
              f"OEC {row.oec_mj:.2f} MJ, end SoC {row.end_soc:.3f}, "
              f"savings {row.savings_pct:+.2f}%")
    _write_manifest(out, "eval", config, ["robustness.csv"],
                    extra={"snapshots": str(snap_dir),
                           "baseline": args.baseline_snapshots or str(snap_dir)})
    return EXIT_OK


def _cmd_dp(args: argparse.Namespace) -> int:
    config, out = _prepare(args)
    cycle = config.build_cycle()
    models = config.build_models()
    _, actions = config.build_grids()
    result = dp_baseline(cycle, actions, models, config.initial_soc,
                         soc_nodes=config.dp_soc_nodes)
    lines = ["t_s,p_egu_w\n"]
    for t, idx in zip(cycle.times(), result.actions):
        lines.append(f"{float(t)!r},{actions.level(idx)!r}\n")
    _write_atomic(out / "dp.csv", "".join(lines))
    slack = dp_slack_energy_j(models, result.soc_node_spacing)
    print(f"dp cost {result.cost_j / 1e6:.4f} MJ "
          f"(rollout {result.rollout_cost_j / 1e6:.4f} MJ, "
          f"end SoC {result.rollout_end_soc:.3f}, "
          f"node slack {slack / 1e6:.4f} MJ)")
    _write_manifest(out, "dp", config, ["dp.csv"],
                    extra={"cost_j": result.cost_j,
                           "rollout_cost_j": result.rollout_cost_j,
                           "rollout_end_soc": result.rollout_end_soc,
                           "slack_j": slack})
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"OK: {config.label} ({config_fingerprint(config.to_dict())})")
    return EXIT_OK


_COMMANDS = {
    "learn": _cmd_learn,
    "sweep": _cmd_sweep,
    "eval": _cmd_eval,
    "dp": _cmd_dp,
    "validate": _cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"tugems: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"tugems: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
