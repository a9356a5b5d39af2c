"""Command line interface.

Every subcommand reads a JSON config (``--config``) and writes its outputs
into ``--out``.  Exit codes: 0 success, 1 runtime error, 2 failed check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .covering import build_covering, project
from .errors import FPOutflowError
from .experiments import StudySpec, run_convergence, run_invariant_suite
from .flow import transfer_exact_grid
from .generator import assemble
from .semigroup import EvolutionSpec, evolve, evolve_times
from .ulam import SamplingSpec, estimate

log = logging.getLogger("fpoutflow")

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def _load(args) -> dict:
    cfg = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _setup(cfg):
    spec = StudySpec.from_dict(cfg)
    n = cfg.get("boxes_per_axis", spec.levels[0])
    cov = build_covering(spec.space, [n] * spec.space.dim if np.isscalar(n) else n)
    return spec, cov


def _first_function(spec):
    if not spec.functions:
        raise FPOutflowError("config needs at least one entry in 'functions'")
    return spec.functions[0]


def cmd_covering(args, cfg, out):
    _, cov = _setup(cfg)
    io.covering_to_json(cov, out / "covering.json")
    print(f"{cov.n_active} active boxes of {cov.boxes_per_axis}")
    return EXIT_OK


def cmd_generator(args, cfg, out):
    spec, cov = _setup(cfg)
    G = assemble(spec.field, cov)
    io.matrix_to_csv(G.matrix, out / "generator.csv")
    io.matrix_to_mtx(G.matrix, out / "generator.mtx", comment=f"field={spec.field.name}")
    print(f"generator {G.dimension}x{G.dimension}, {G.matrix.nnz} nonzeros")
    return EXIT_OK


def cmd_evolve(args, cfg, out):
    spec, cov = _setup(cfg)
    G = assemble(spec.field, cov)
    u = project(cov, _first_function(spec))
    t = float(cfg.get("t", max(spec.times)))
    w = evolve(G, u, EvolutionSpec(t, cfg.get("method", "scaled-taylor"), spec.tolerance))
    io.density_to_csv(w, out / "density.csv")
    io.density_to_bin(w, out / "density.bin")
    times = [t * k / (spec.massloss_points - 1) for k in range(spec.massloss_points)]
    with open(out / "massloss.csv", "w") as fh:
        fh.write("t,mass\n")
        for s, ws in zip(times, evolve_times(G, u, times, tolerance=spec.tolerance)):
            fh.write(f"{s!r},{ws.mass()!r}\n")
    print(f"mass {u.mass():.6g} -> {w.mass():.6g} at t={t}")
    return EXIT_OK


def cmd_reference(args, cfg, out):
    spec, cov = _setup(cfg)
    t = float(cfg.get("t", max(spec.times)))
    ref = transfer_exact_grid(spec.field, _first_function(spec), cov, t, nodes_per_box=spec.nodes_per_box)
    io.density_to_csv(ref, out / "reference.csv")
    io.density_to_bin(ref, out / "reference.bin")
    print(f"reference mass {ref.mass():.6g} at t={t}")
    return EXIT_OK


def cmd_ulam(args, cfg, out):
    spec, cov = _setup(cfg)
    scfg = dict(cfg.get("sampling", {}))
    scfg.setdefault("seed", spec.seed)
    U = estimate(spec.field, cov, float(cfg.get("t", max(spec.times))), cfg.get("mode", "full"),
                 SamplingSpec(**scfg))
    io.matrix_to_csv(U.matrix, out / "ulam.csv")
    io.matrix_to_mtx(U.matrix, out / "ulam.mtx", comment=f"mode={U.mode} t={U.t}")
    io.write_json(U.metadata(), out / "ulam.json")
    print(f"ulam matrix {U.matrix.shape[0]}x{U.matrix.shape[1]}, mode {U.mode}")
    return EXIT_OK


def cmd_converge(args, cfg, out):
    spec = StudySpec.from_dict(cfg)
    report = run_convergence(spec, out, threads=args.threads)
    for r in report.rows:
        order = "" if r["order_hat"] is None else f"  order {r['order_hat']:.3f}"
        print(f"level {r['level']:>8}  t {r['t']:<8g} {r['function']:<14} e_l1 {r['e_l1']:.6e}{order}")
    if report.failures:
        return EXIT_ERROR
    if spec.assert_decreasing and not report.all_decreasing:
        print("errors are not strictly decreasing", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_check(args, cfg, out):
    spec = StudySpec.from_dict(cfg)
    report = run_invariant_suite(spec, quotient=cfg.get("quotient_check", True))
    io.write_json(report.to_dict(), out / "check.json")
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  level {c.level:>8}  {c.check:<20} margin {c.margin:.3e}  {c.detail}")
    return EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {
    "covering": cmd_covering,
    "generator": cmd_generator,
    "evolve": cmd_evolve,
    "reference": cmd_reference,
    "ulam": cmd_ulam,
    "converge": cmd_converge,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for refinement levels")
    common.add_argument("--seed", type=int, default=None, help="seed for sampled quantities")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="fpoutflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = _load(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (FPOutflowError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
