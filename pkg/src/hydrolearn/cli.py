"""Batch front end: simulate, learn, frontier, validate.

Driven by a preset name and/or a JSON config file, with dotted-key command
line overrides (``--set regress.lambda0=1e-4``).  All artifacts land under
``--out DIR`` together with a manifest of file hashes; the resolved
configuration is recorded in every output.  Exit codes: 0 success, 2 config
error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys

import numpy as np

from .errors import ConfigError, DataError, NumericsError
from .field_store import read_dataset, write_dataset
from .presets import (
    build_dataset,
    get_preset,
    prepare_problem,
    preset_names,
    run_frontier,
    run_refine_mu,
    run_validate,
)
from .sparse_regress import _solver_by_name

_KNOWN_TOP = {"simulate", "learn", "frontier", "validate", "refine_mu"}
_KNOWN_LEARN = {
    "target", "library", "scheme", "lambda0", "lambda2", "window",
    "smooth", "subsample", "solver", "seed",
}


def _validate_config(cfg):
    bad = set(cfg) - _KNOWN_TOP
    if bad:
        raise ConfigError(f"unknown config sections: {sorted(bad)}")
    for name, lc in cfg.get("learn", {}).items():
        extra = set(lc) - _KNOWN_LEARN
        if extra:
            raise ConfigError(f"unknown keys in learn.{name}: {sorted(extra)}")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def resolve_config(args):
    cfg = {}
    if args.preset:
        cfg = copy.deepcopy(get_preset(args.preset))
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config {args.config}: {exc}") from exc
        for key, val in file_cfg.items():
            cfg[key] = val
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        dotted, _, text = item.partition("=")
        _apply_override(cfg, dotted, _parse_value(text))
    if not cfg:
        raise ConfigError("no configuration: pass --preset and/or --config")
    _validate_config(cfg)
    return cfg


def _ensure_out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_manifest(out_dir):
    manifest = {}
    for name in sorted(os.listdir(out_dir)):
        if name == "manifest.json":
            continue
        path = os.path.join(out_dir, name)
        if os.path.isfile(path):
            with open(path, "rb") as fh:
                manifest[name] = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)


def _dump_json(out_dir, name, payload, cfg):
    payload = dict(payload)
    payload["config"] = cfg
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
    return path


def _load_data(args, cfg):
    if getattr(args, "data", None):
        return read_dataset(args.data)
    if "simulate" not in cfg:
        raise ConfigError("no dataset: pass --data PATH or a config with a simulate section")
    return build_dataset(cfg["simulate"])


def _select_learn(cfg, name):
    learns = cfg.get("learn", {})
    if not learns:
        raise ConfigError("config has no learn section")
    if name is None:
        if len(learns) == 1:
            return next(iter(learns.values()))
        if "default" in learns:
            return learns["default"]
        raise ConfigError(f"pick one of the learn configs {sorted(learns)} with --learn")
    if name not in learns:
        raise ConfigError(f"no learn config {name!r}; have {sorted(learns)}")
    return learns[name]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = resolve_config(args)
    if "simulate" not in cfg:
        raise ConfigError("simulate needs a simulate section (preset or config)")
    if args.dry_run:
        print(json.dumps({"plan": "simulate", "config": cfg["simulate"]}, indent=1))
        return 0
    out = _ensure_out(args)
    ds = build_dataset(cfg["simulate"])
    base = os.path.join(out, args.name)
    write_dataset(ds, base)
    _dump_json(out, f"{args.name}.run.json", {"fields": ds.names(), "meta": ds.meta}, cfg)
    _write_manifest(out)
    print(f"wrote dataset {base}.json ({ds.grid.nt} x {ds.grid.nx})")
    return 0


def cmd_learn(args):
    cfg = resolve_config(args)
    learn_cfg = _select_learn(cfg, args.learn)
    if args.dry_run:
        print(json.dumps({"plan": "learn", "config": learn_cfg}, indent=1))
        return 0
    ds = _load_data(args, cfg)
    refine = cfg.get("refine_mu")
    solver = args.solver or learn_cfg.get("solver", "brute_force")
    if refine and not args.no_refine:
        mu, pde = run_refine_mu(ds, learn_cfg, tuple(refine["bracket"]), solver=solver)
        extra = {"mu": mu}
    else:
        problem, _, _, _ = prepare_problem(ds, learn_cfg)
        kw = {}
        if solver == "cross_entropy":
            kw["seed"] = args.seed
        pde = _solver_by_name(solver)(problem, **kw)
        extra = {}
    print(pde.equation)
    out = _ensure_out(args)
    payload = pde.to_json_dict()
    payload.update(extra)
    payload["equation"] = pde.equation
    _dump_json(out, f"{args.name}.pde.json", payload, cfg)
    _write_manifest(out)
    return 0


def cmd_frontier(args):
    cfg = resolve_config(args)
    fr_cfg = cfg.get("frontier", {})
    learn_cfg = _select_learn(cfg, args.learn or fr_cfg.get("learn"))
    if args.dry_run:
        print(json.dumps({"plan": "frontier", "config": {**fr_cfg, **learn_cfg}}, indent=1))
        return 0
    ds = _load_data(args, cfg)
    frontier = run_frontier(
        ds,
        learn_cfg,
        lambda0_hi=float(fr_cfg.get("lambda0_hi", 1e-1)),
        lambda0_lo=float(fr_cfg.get("lambda0_lo", 1e-6)),
        per_decade=args.per_decade,
        solver=args.solver or "brute_force",
        threads=args.threads,
    )
    print(f"{'lambda0':>12} {'terms':>6} {'residual':>12}  equation")
    for l0, pde in frontier.entries:
        flag = " [overfit?]" if "potential-overfit" in pde.flags else ""
        print(f"{l0:12.3e} {pde.n_active:6d} {pde.residual:12.4e}  {pde.equation}{flag}")
    out = _ensure_out(args)
    _dump_json(out, f"{args.name}.frontier.json", frontier.to_json_dict(), cfg)
    _write_manifest(out)
    return 0


def cmd_validate(args):
    cfg = resolve_config(args)
    val_cfg = cfg.get("validate")
    if not val_cfg:
        raise ConfigError("config has no validate section")
    names = val_cfg.get("learn", "default")
    if isinstance(names, str):
        names = [names]
    learn_cfgs = [_select_learn(cfg, n) for n in names]
    if args.dry_run:
        print(json.dumps({"plan": "validate", "config": val_cfg}, indent=1))
        return 0
    ds = _load_data(args, cfg)
    report, pdes, prepared = run_validate(
        ds,
        learn_cfgs,
        scheme=val_cfg.get("scheme", "spectral"),
        boundary=val_cfg.get("boundary", "periodic"),
    )
    for pde in pdes:
        print(pde.equation)
    print(f"blowup_time: {report.blowup_time}")
    for name, err in (report.max_abs_error or {}).items():
        print(f"{name}: max_abs={err:.4e} rms={report.rms_error[name]:.4e}")
    out = _ensure_out(args)
    _dump_json(out, f"{args.name}.report.json", report.to_json_dict(), cfg)
    times = prepared.grid.times()
    with open(os.path.join(out, f"{args.name}.errors.csv"), "w") as fh:
        fields = sorted((report.per_time_error or {}).keys())
        fh.write("t," + ",".join(fields) + "\n")
        for i, t in enumerate(times):
            row = [f"{t:.17g}"] + [f"{report.per_time_error[f][i]:.17g}" for f in fields]
            fh.write(",".join(row) + "\n")
    _write_manifest(out)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hydrolearn",
        description="simulate quantum lattice dynamics and discover its hydrodynamic PDEs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--preset", choices=preset_names(), help="named experiment preset")
        p.add_argument("--config", help="JSON config file merged over the preset")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-key config override, value parsed as JSON")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--name", default="run", help="artifact base name")
        p.add_argument("--dry-run", action="store_true", help="validate config and print the plan")
        p.add_argument("--threads", type=int, default=1, help="worker pool size")
        p.add_argument("--seed", type=int, default=0, help="seed for stochastic solvers")

    p_sim = sub.add_parser("simulate", help="generate a dataset")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_learn = sub.add_parser("learn", help="discover a sparse PDE")
    common(p_learn)
    p_learn.add_argument("--data", help="dataset path (sidecar base) instead of simulating")
    p_learn.add_argument("--learn", help="which learn config of the preset")
    p_learn.add_argument("--solver", choices=["brute_force", "cross_entropy", "stridge"])
    p_learn.add_argument("--no-refine", action="store_true", help="skip the mu line search")
    p_learn.set_defaults(func=cmd_learn)

    p_front = sub.add_parser("frontier", help="scan the penalty frontier")
    common(p_front)
    p_front.add_argument("--data", help="dataset path instead of simulating")
    p_front.add_argument("--learn", help="which learn config of the preset")
    p_front.add_argument("--solver", choices=["brute_force", "cross_entropy", "stridge"])
    p_front.add_argument("--per-decade", type=int, default=8)
    p_front.set_defaults(func=cmd_frontier)

    p_val = sub.add_parser("validate", help="solve the discovered PDE against the data")
    common(p_val)
    p_val.add_argument("--data", help="dataset path instead of simulating")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericsError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
