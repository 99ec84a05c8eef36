"""Command-line interface.

Subcommands: simulate-data, pilot, run, diagnose, sweep.  All numeric flags
mirror RunConfig fields; a config file supplies defaults that flags
override.  Exit code 0 on success, 1 with a one-line ``error: ...`` message
otherwise.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import models
from .harness import (
    RunConfig,
    read_config_file,
    run_experiment,
    summarize,
    sweep,
    write_key_value,
)
from .kdtree import save_entries
from .kernels import PilotResult, ProposalSpec, Trace, pilot_run
from .surrogate import save_whitening

_CONFIG_FLOATS = {"beta", "xi", "c", "epsilon", "e_target", "budget_seconds", "pilot_scale", "lam"}
_CONFIG_INTS = {"k", "b", "m", "n_iters", "max_expensive", "n_pilot", "truncate_obs", "data_seed", "seed", "expected_n"}
_CONFIG_STRS = {"model", "dataset", "sampler", "adapt_mode", "out"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file of key = value lines")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name in _CONFIG_FLOATS:
            p.add_argument(flag, type=float, default=None)
        elif f.name in _CONFIG_INTS:
            p.add_argument(flag, type=int, default=None)
        elif f.name in _CONFIG_STRS:
            p.add_argument(flag, type=str, default=None)


def _build_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = read_config_file(args.config, cfg)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    return cfg


def _cmd_simulate_data(args) -> int:
    ds = models.simulate_dataset(args.model, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    models.save_dataset(ds, out)
    print(f"wrote {len(ds.times)} observations to {out}")
    return 0


def _cmd_pilot(args) -> int:
    cfg = _build_config(args)
    if cfg.seed < 0:
        raise ValueError("--seed is required")
    from .harness import _load_dataset, _make_target

    dataset = _load_dataset(cfg)
    target, stochastic, default_lam, theta0 = _make_target(cfg, dataset)
    lam = cfg.lam if cfg.lam > 0 else default_lam
    seq = np.random.SeedSequence(cfg.seed)
    pilot_seed, _, tree_seed = (s.generate_state(1)[0] for s in seq.spawn(3))
    pilot = pilot_run(
        target,
        ProposalSpec(cfg.pilot_scale * np.eye(target.dim)),
        cfg.n_pilot,
        np.random.default_rng(pilot_seed),
        theta0,
        stochastic=stochastic,
        lam=lam,
        b=cfg.b,
        tree_seed=int(tree_seed),
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_whitening(pilot.transform, out / "whitening.csv")
    save_entries(pilot.tree, out / "tree.csv")
    np.savetxt(out / "v_fixed.csv", pilot.v_fixed, delimiter=",")
    write_key_value(
        out / "pilot_meta.txt",
        {
            "n_pilot": cfg.n_pilot,
            "alpha_ref": pilot.alpha_ref,
            "lambda_used": lam,
            "tree_entries": pilot.tree.entry_count,
            "seed": cfg.seed,
        },
    )
    print(f"pilot done: alpha_ref={pilot.alpha_ref:.4f}, tree={pilot.tree.entry_count} entries -> {out}")
    return 0


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    if cfg.seed < 0:
        raise ValueError("--seed is required for run")
    result = run_experiment(cfg)
    diag = result["diagnostics"]
    a1 = "-" if diag.alpha1 is None else f"{diag.alpha1:.4f}"
    a2 = "-" if diag.alpha2 is None else f"{diag.alpha2:.4f}"
    print(
        f"run done: {diag.n_iters} iters, {diag.expensive_evals} expensive, "
        f"mESS={diag.mess:.1f}, alpha1={a1}, alpha2={a2} -> {cfg.out}"
    )
    return 0


def _cmd_diagnose(args) -> int:
    trace = Trace.read_csv(args.trace)
    diag = summarize(trace)
    mapping = diag.to_mapping()
    for key, value in mapping.items():
        print(f"{key} = {value}")
    if args.out:
        write_key_value(args.out, mapping)
    return 0


def _parse_grid(text: str | None) -> list[float] | None:
    if not text:
        return None
    return [float(v) for v in text.split(",")]


def _cmd_sweep(args) -> int:
    cfg = _build_config(args)
    if cfg.seed < 0:
        raise ValueError("--seed is required for sweep")
    results = sweep(
        cfg,
        xi_grid=_parse_grid(args.xi_grid),
        c_grid=_parse_grid(args.c_grid),
        k_grid=[int(v) for v in _parse_grid(args.k_grid)] if args.k_grid else None,
        b_grid=[int(v) for v in _parse_grid(args.b_grid)] if args.b_grid else None,
    )
    for r in results:
        diag = r["diagnostics"]
        print(f"{r['paths']['trace'].parent.name}: mESS={diag.mess:.1f} expensive={diag.expensive_evals}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="damcmc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-data", help="regenerate a benchmark dataset")
    p.add_argument("--model", required=True, choices=["lv", "ar-d1", "ar-d2"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_simulate_data)

    p = sub.add_parser("pilot", help="run the preliminary fixed-kernel chain")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_pilot)

    p = sub.add_parser("run", help="pilot + main run with artifacts")
    _add_config_flags(p)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("diagnose", help="recompute diagnostics from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("sweep", help="grid of runs over xi/c/k/b")
    _add_config_flags(p)
    p.add_argument("--xi-grid")
    p.add_argument("--c-grid")
    p.add_argument("--k-grid")
    p.add_argument("--b-grid")
    p.set_defaults(fn=_cmd_sweep)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as err:  # one-line machine-parsable failure
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
