"""Command-line entry point: analytic experiments, training, evaluation, checks, diagnostics.

Exit status: 0 success, 1 a check or run failed, 2 bad arguments or config,
3 input/output failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
OUT_ENV = "COALA_OUT"


class UsageError(ValueError):
    pass


def _out_dir(args, default_name: str) -> str:
    if args.out:
        path = args.out
    else:
        path = os.path.join(os.environ.get(OUT_ENV, "runs"), default_name)
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path, overrides: dict | None = None, experiment: str | None = None, desk_scale: bool = False):
    """Resolve a training config: preset, then file values, then command-line overrides."""
    from .training.config import TrainConfig, apply_overrides, preset, read_config_file

    file_exp, flat = (None, {}) if path is None else read_config_file(path)
    name = experiment or file_exp
    cfg = preset(name, desk_scale) if name else TrainConfig()
    if desk_scale and not name:
        cfg = dataclasses.replace(cfg, meta_batch=max(1, cfg.meta_batch // 2), iterations=max(1, cfg.iterations // 2))
    cfg = apply_overrides(cfg, {**flat, **(overrides or {})})
    return name, cfg.validate()


def cmd_analytic(args) -> int:
    from .analytic.experiments import run_experiment, trace_rows
    from .training.metrics import MetricsWriter

    out = _out_dir(args, f"analytic_{args.experiment}")
    resolved = {"experiment": args.experiment, "seeds": args.seeds, "steps": args.steps, "seed": args.seed,
                "p_naive": args.p_naive, "lookahead": args.lookahead}
    _write_json(os.path.join(out, "config.json"), resolved)
    traces, summary = run_experiment(args.experiment, args.seeds, args.steps, args.seed, args.p_naive,
                                     args.lookahead)
    with MetricsWriter(os.path.join(out, "metrics.jsonl")) as w:
        for row in trace_rows(traces, args.seed):
            w.write(row)
    _write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, default=_json_default))
    return EXIT_OK


def cmd_train(args) -> int:
    from .training.config import to_dict
    from .training.loop import checkpoint_pool, train

    overrides = _parse_set(args.set)
    for key in ("seed", "workers", "iterations"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    name, cfg = load_config(args.config, overrides, args.experiment, args.desk_scale)
    out = _out_dir(args, f"train_{name or 'custom'}_seed{cfg.seed}")
    _write_json(os.path.join(out, "config.json"), {"experiment": name, "fingerprint": cfg.fingerprint(),
                                                   **to_dict(cfg)})
    ckpt = os.path.join(out, "checkpoints")
    result = train(cfg, metrics_path=os.path.join(out, "metrics.jsonl"), checkpoint_dir=ckpt)
    paths = checkpoint_pool(result.pool, ckpt, cfg, cfg.iterations)
    print(json.dumps({"out": out, "checkpoints": paths, "last": result.rows[-1] if result.rows else {}}))
    return EXIT_OK


def cmd_eval(args) -> int:
    from .training.loop import evaluate_pool, init_pool, load_pool_checkpoints
    from .training.metrics import MetricsWriter

    overrides = _parse_set(args.set)
    overrides["meta_population"] = max(len(args.checkpoint), 2) if len(args.checkpoint) > 1 else 1
    if len(args.checkpoint) == 1:
        overrides["p_naive"] = 1.0
    if args.seed is not None:
        overrides["seed"] = args.seed
    name, cfg = load_config(args.config, overrides, args.experiment, False)
    pool = init_pool(cfg)
    pool.meta = load_pool_checkpoints(args.checkpoint)
    out = _out_dir(args, "eval")
    rows = evaluate_pool(pool, cfg, episodes=args.episodes)
    with MetricsWriter(os.path.join(out, "eval.jsonl")) as w:
        for row in rows:
            w.write(row)
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_diagnose(args) -> int:
    from .training.diagnostics import BalanceConfig, balance_sweep

    try:
        sizes = tuple(int(x) for x in args.batch_sizes.split(","))
    except ValueError:
        raise UsageError(f"--batch-sizes expects comma-separated integers, got {args.batch_sizes!r}") from None
    cfg = BalanceConfig(units=args.units, seed=args.seed or 0)
    ratios = balance_sweep(sizes, cfg=cfg)
    out = _out_dir(args, "diagnose")
    payload = {"batch_sizes": list(sizes), "ratios": ratios, "config": dataclasses.asdict(cfg)}
    _write_json(os.path.join(out, "balance.json"), payload)
    for mode, values in ratios.items():
        print(mode, " ".join(f"{v:.4f}" for v in values))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .analytic.experiments import EXPERIMENTS
    from .training.config import PRESETS

    parser = argparse.ArgumentParser(prog="coala", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help=f"output directory (default under ${OUT_ENV} or ./runs)")

    p = sub.add_parser("analytic", help="exact-gradient IPD experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--p-naive", type=float, default=None)
    p.add_argument("--lookahead", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("train", help="population training with sequence policies")
    p.add_argument("--config", default=None, help="INI file with [run], [train] and [naive] sections")
    p.add_argument("--experiment", choices=sorted(PRESETS), default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--desk-scale", action="store_true", help="halve meta_batch and iterations")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpointed meta agents")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--experiment", choices=sorted(PRESETS), default=None)
    p.add_argument("--episodes", type=int, default=None, help="meta-episodes per agent and matchup")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run the fast oracle suites")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("diagnose", help="gradient-balance sweep over the inner batch size")
    p.add_argument("--batch-sizes", default="1,2,4,8,16")
    p.add_argument("--units", type=int, default=4096)
    common(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def run_command(argv=None) -> int:
    from .training.config import ConfigError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if getattr(args, "seed", None) is None and args.command == "analytic":
        args.seed = 0
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
