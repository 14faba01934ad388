"""Command-line entry point.

Subcommands: simulate, optimize, evaluate, validate-map, dump-guidance.
Every run writes its fully resolved config next to its outputs, under a
directory named from (command, map, algorithm, seed, timestamp).

Exit codes: 0 success, 1 runtime failure, 2 bad flags or config, 3
validation failure. Failures emit a JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from .gpibt import LnsConfig
from .grid import MapFormatError, parse_map
from .guidance import GuidanceGraph, uniform_guidance
from .harness import ALGORITHMS, SimConfig, batch_evaluate, run_simulation
from .maps import BUILTIN_MAPS, load_map
from .optimize import optimize_policy
from .policies import GuidancePolicy, static_forward
from .tasks import TaskConfig


class ValidationFailure(Exception):
    pass


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tasks", choices=["static", "dynamic"], default="static",
                   help="goal distribution: uniform or moving Gaussian mixture")
    p.add_argument("--task-sigma", type=float, default=1.0)
    p.add_argument("--task-modes", type=int, default=1,
                   help="number of Gaussian centers (dynamic only)")
    p.add_argument("--task-interval", type=int, default=200,
                   help="timesteps between Gaussian center moves")
    p.add_argument("--center-domain", choices=["auto", "endpoints", "any_free"],
                   default="auto")


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", required=True,
                   help=f"builtin name ({', '.join(BUILTIN_MAPS)}) or a .map file path")
    p.add_argument("--algo", required=True,
                   help=f"one of {', '.join(ALGORITHMS)}")
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--interval", type=int, default=20,
                   help="guidance update interval (m)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", type=str, default=None, help="policy theta JSON file")
    p.add_argument("--lns", action="store_true", help="refine guide paths each step")
    p.add_argument("--lns-iterations", type=int, default=10)
    p.add_argument("--lns-neighborhood", type=int, default=10)
    p.add_argument("--lns-time-limit", type=float, default=8.0)
    _add_task_flags(p)


def _task_config(args: argparse.Namespace) -> TaskConfig:
    if args.tasks == "static":
        return TaskConfig(kind="static_uniform")
    return TaskConfig(kind="dynamic_gaussian", sigma=args.task_sigma,
                      num_modes=args.task_modes, resample_interval=args.task_interval,
                      center_domain=args.center_domain)


def _sim_config(args: argparse.Namespace) -> SimConfig:
    grid = load_map(args.map)
    policy = GuidancePolicy.load(args.policy) if args.policy else None
    lns = None
    if args.lns:
        lns = LnsConfig(iterations=args.lns_iterations,
                        neighborhood=args.lns_neighborhood,
                        time_limit_s=args.lns_time_limit)
    return SimConfig(grid=grid, algorithm=args.algo, num_agents=args.agents,
                     num_steps=args.steps, update_interval=args.interval,
                     seed=args.seed, tasks=_task_config(args), policy=policy,
                     lns=lns, map_name=Path(args.map).stem)


def _run_dir(root: Path, command: str, map_name: str, algo: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    d = root / f"{command}-{Path(map_name).stem}-{algo}-s{seed}-{stamp}"
    k = 0
    while d.exists():
        k += 1
        d = root / f"{command}-{Path(map_name).stem}-{algo}-s{seed}-{stamp}-{k}"
    d.mkdir(parents=True)
    return d


def _write_config(out: Path, payload: dict) -> None:
    (out / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def cmd_simulate(args: argparse.Namespace, out_root: Path) -> int:
    cfg = _sim_config(args)
    out = _run_dir(out_root, "simulate", args.map, cfg.algorithm, cfg.seed)
    report = run_simulation(cfg)
    _write_config(out, cfg.resolved())
    report.save(out, include_timing=True)
    print(f"throughput {report.throughput:.4f}  goals {report.goals_finished}  "
          f"conflicts {report.conflicts_detected}  -> {out}")
    if report.conflicts_detected:
        raise ValidationFailure(f"{report.conflicts_detected} trajectory conflicts")
    return 0


def cmd_evaluate(args: argparse.Namespace, out_root: Path) -> int:
    cfg = _sim_config(args)
    seeds = [args.seed + i for i in range(args.seeds)]
    out = _run_dir(out_root, "evaluate", args.map, cfg.algorithm, cfg.seed)
    stats, _ = batch_evaluate(cfg, seeds, workers=args.workers)
    _write_config(out, {**cfg.resolved(), "seeds": seeds})
    payload = {"mean": stats.mean, "std": stats.std, "ci95": stats.ci95,
               "throughputs": stats.throughputs}
    (out / "evaluation.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"mean {stats.mean:.4f} +/- {stats.ci95:.4f} (95% CI, {len(seeds)} seeds) -> {out}")
    return 0


def cmd_optimize(args: argparse.Namespace, out_root: Path) -> int:
    cfg = _sim_config(args)
    out = _run_dir(out_root, "optimize", args.map, cfg.algorithm, cfg.seed)
    _write_config(out, {**cfg.resolved(), "arch": args.arch, "budget": args.budget,
                        "batch": args.batch, "ne": args.ne})
    result = optimize_policy(args.arch, cfg, n_eval=args.budget, batch=args.batch,
                             n_e=args.ne, master_seed=args.seed, workers=args.workers,
                             checkpoint_dir=out, checkpoint_every=args.checkpoint_every,
                             resume_from=args.resume)
    result.policy.save(out / "best_theta.json")
    (out / "history.csv").write_text(result.history_csv())
    print(f"best fitness {result.best_fitness:.4f} -> {out}")
    return 0


def cmd_validate_map(args: argparse.Namespace, out_root: Path) -> int:
    try:
        grid = load_map(args.map)
    except (MapFormatError, FileNotFoundError) as exc:
        raise ValidationFailure(str(exc)) from exc
    print(f"{args.map}: {grid.height}x{grid.width}, free={grid.free_count}, "
          f"endpoints={len(grid.endpoints)}, workstations={len(grid.workstations)}")
    return 0


def cmd_dump_guidance(args: argparse.Namespace, out_root: Path) -> int:
    grid = load_map(args.map)
    if args.policy:
        policy = GuidancePolicy.load(args.policy)
        g = GuidanceGraph(grid, with_wait=bool(policy.meta.get("with_wait", True)))
        g.set_all_weights(static_forward(policy, grid))
    else:
        g = uniform_guidance(grid, with_wait=not args.no_wait)
    text = g.to_csv()
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lmapf",
                                 description="lifelong multi-agent path finding runner")
    ap.add_argument("--out-root", default=None,
                    help="output root (default $LMAPF_OUT_ROOT or ./runs)")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                    help="parallel simulations where supported")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="run one config across many seeds")
    _add_sim_flags(p)
    p.add_argument("--seeds", type=int, default=50,
                   help="number of seeds, consecutive from --seed")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="optimize a guidance policy")
    _add_sim_flags(p)
    p.add_argument("--arch", required=True,
                   choices=["cnn", "wq", "windowed_quadratic", "reduced",
                            "reduced_quadratic", "static", "static_weights"])
    p.add_argument("--budget", type=int, required=True, help="candidate evaluations")
    p.add_argument("--batch", type=int, required=True)
    p.add_argument("--ne", type=int, default=2, help="simulations per candidate")
    p.add_argument("--checkpoint-every", type=int, default=10)
    p.add_argument("--resume", type=str, default=None, help="cmaes_state.npz to resume")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate-map", help="parse and check a map file")
    p.add_argument("--map", required=True)
    p.set_defaults(func=cmd_validate_map)

    p = sub.add_parser("dump-guidance", help="dump guidance weights as CSV")
    p.add_argument("--map", required=True)
    p.add_argument("--policy", type=str, default=None, help="static_weights theta file")
    p.add_argument("--no-wait", action="store_true", help="omit wait edges")
    p.add_argument("--output", type=str, default=None)
    p.set_defaults(func=cmd_dump_guidance)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    out_root = Path(args.out_root or os.environ.get("LMAPF_OUT_ROOT", "runs"))
    try:
        return args.func(args, out_root)
    except ValidationFailure as exc:
        json.dump({"error": str(exc), "kind": "validation"}, sys.stderr)
        sys.stderr.write("\n")
        return 3
    except (ValueError, FileNotFoundError, MapFormatError) as exc:
        json.dump({"error": str(exc), "kind": "config"}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        json.dump({"error": str(exc), "kind": "runtime"}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
