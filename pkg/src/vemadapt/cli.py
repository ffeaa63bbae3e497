"""Command-line driver: ``vemadapt uniform ...`` and ``vemadapt adapt ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapt import AdaptConfig, run_adaptive, run_uniform
from .errors import VemError
from .mesh import HangingPolicy, write_mesh
from .meshgen import GENERATORS
from .problems import PROBLEMS, get_problem
from .report import summary_text, write_csv, write_svg

DEFAULTS = {
    "mesh": None,  # picked from the problem's domain
    "n": 4,
    "k": 1,
    "theta": 0.5,
    "max_dofs": 50_000,
    "max_iters": 100,
    "hanging": "unlimited",
    "tau1": 1.0,
    "tau0": 1.0,
    "seed": 0,
    "out": "run",
    "snapshots": None,
    "levels": 5,
}


def _snapshot_list(text: str):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("snapshots must be a comma-separated list of integers") from None
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("snapshot iterations must be non-negative")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vemadapt", description="Adaptive virtual element solver.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("uniform", "solve on a sequence of uniformly generated meshes"),
                           ("adapt", "run the solve-estimate-mark-refine loop")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--problem", required=True, choices=sorted(PROBLEMS))
        s.add_argument("--mesh", choices=sorted(GENERATORS))
        s.add_argument("--n", type=int, help="mesh size parameter of the generator")
        s.add_argument("--k", type=int, choices=(1, 2, 3))
        s.add_argument("--theta", type=float, help="marking parameter in (0, 1]")
        s.add_argument("--max-dofs", dest="max_dofs", type=int)
        s.add_argument("--max-iters", dest="max_iters", type=int)
        s.add_argument("--hanging", choices=[h.value for h in HangingPolicy])
        s.add_argument("--tau1", type=float)
        s.add_argument("--tau0", type=float)
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--snapshots", type=_snapshot_list,
                       help="iterations whose meshes are written (default: first, middle, last)")
        s.add_argument("--levels", type=int, help="number of uniform levels (uniform only)")
        s.add_argument("--config", help="JSON file with option values; flags take precedence")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    opts = dict(DEFAULTS)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            parser.error(f"unknown config keys: {sorted(unknown)}")
        opts.update({key.replace("-", "_"): v for key, v in cfg.items()})
        if isinstance(opts["snapshots"], list):
            opts["snapshots"] = tuple(int(v) for v in opts["snapshots"])
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            opts[key] = v

    problem = get_problem(args.problem)
    if opts["mesh"] is None:
        opts["mesh"] = "lshape" if problem.domain == "lshape" else "squares"
    if (opts["mesh"] == "lshape") != (problem.domain == "lshape"):
        parser.error(f"mesh {opts['mesh']!r} does not cover the domain of problem {args.problem!r}")
    if opts["n"] < 1:
        parser.error("--n must be positive")
    if opts["k"] not in (1, 2, 3):
        parser.error("--k must be 1, 2 or 3")
    if not 0.0 < opts["theta"] <= 1.0:
        parser.error("--theta must lie in (0, 1]")
    if opts["max_dofs"] < 1 or opts["max_iters"] < 1 or opts["levels"] < 1:
        parser.error("--max-dofs, --max-iters and --levels must be positive")
    try:
        HangingPolicy.parse(opts["hanging"])
    except ValueError as exc:
        parser.error(str(exc))
    opts["problem"] = problem
    return opts


def write_outputs(history, out: Path) -> None:
    meshes = out / "meshes"
    meshes.mkdir(parents=True, exist_ok=True)
    write_csv(history, out / "history.csv")
    for it, (mesh, ind) in sorted(history.snapshots.items()):
        write_svg(mesh, meshes / f"iter{it:03d}.svg", ind)
        write_mesh(mesh, meshes / f"iter{it:03d}.mesh")
    (out / "summary.txt").write_text(summary_text(history))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve(args, parser)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = AdaptConfig(k=opts["k"], theta=opts["theta"], max_dofs=opts["max_dofs"],
                      max_iters=opts["max_iters"], hanging_policy=opts["hanging"],
                      tau1=opts["tau1"], tau0=opts["tau0"], snapshots=opts["snapshots"])
    gen = GENERATORS[opts["mesh"]]
    seed = opts["seed"]
    problem = opts["problem"]
    out = Path(opts["out"])
    try:
        if args.command == "uniform":
            sizes = [opts["n"] * 2 ** i for i in range(opts["levels"])]
            history = run_uniform(problem, lambda n: gen(n, seed), sizes, cfg)
        else:
            history = run_adaptive(problem, gen(opts["n"], seed), cfg)
        write_outputs(history, out)
    except (VemError, OSError, ValueError) as exc:
        print(f"vemadapt: error: {exc}", file=sys.stderr)
        return 1
    print(summary_text(history), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
