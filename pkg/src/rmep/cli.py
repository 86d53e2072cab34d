"""Command line front end.

Exit codes: 0 success, 1 malformed input, 2 solver failure (the instance is
not generic enough or too large).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fileio import (
    ProblemFile,
    ProblemFileError,
    dumps_problem,
    eigs_csv,
    grid_csv,
    load_problem,
    load_series,
    stationary_csv,
)
from .linalg import SingularProblemError, StaircaseError, ToleranceConfig
from .linear import RectPencil, solve_alg1, solve_alg2
from .macaulay import DegreeTooLowError, mac_size, mac_solve_small, nullspace_profile
from .models import (
    arma11_objective,
    contour_grid,
    lti2_objective,
    solve_arma11,
    solve_arma21_pipeline,
    solve_lti2,
)
from .poly import QUAD_EXPONENTS, QuadR2EP, q2ep_project, q2ep_rect_linearize, q2ep_vandermonde

log = logging.getLogger("rmep")

ARMA21_EXPONENTS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 2)]
QUAD_METHODS = {"project": q2ep_project, "rect": q2ep_rect_linearize, "vandermonde": q2ep_vandermonde}
MODELS = {
    "arma11": dict(solve=solve_arma11, objective=arma11_objective, names=("alpha", "gamma"),
                   xrange=(-1.0, 1.0), yrange=(-1.0, 1.0)),
    "lti2": dict(solve=solve_lti2, objective=lti2_objective, names=("a1", "a2"),
                 xrange=(-2.0, 2.0), yrange=(-1.0, 1.0)),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sibling(path, suffix: str, ext: str | None = None) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix + (path.suffix if ext is None else ext))


def _cfg(args) -> ToleranceConfig:
    try:
        return ToleranceConfig(rank_tol=args.tol_rank, stair_tol=args.tol_staircase)
    except ValueError as exc:
        raise ProblemFileError(str(exc)) from None


def _expect(p: ProblemFile, *kinds):
    if p.kind not in kinds:
        raise ProblemFileError(f"kind: expected {' or '.join(kinds)}, got {p.kind!r}")


def _filtered(eigs, cfg):
    keep = eigs.residuals <= cfg.rank_tol
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        log.warning("dropped %d eigenvalues with residual above %g", dropped, cfg.rank_tol)
    return eigs.subset(keep)


def _pencil(p: ProblemFile) -> RectPencil:
    return RectPencil(p.terms, p.k)


def cmd_solve_linear(args):
    p = load_problem(args.problem)
    _expect(p, "linear-rmep")
    cfg = _cfg(args)
    pencil = _pencil(p)
    if args.method == "alg1":
        eigs = solve_alg1(pencil, projections="select" if args.select else None, cfg=cfg, seed=args.seed)
    else:
        eigs = solve_alg2(pencil, cfg, seed=args.seed)
    _write(eigs_csv(_filtered(eigs, cfg)), args.out)


def cmd_solve_quadratic(args):
    p = load_problem(args.problem)
    _expect(p, "quad-r2ep")
    cfg = _cfg(args)
    q = QuadR2EP(*p.matrices(QUAD_EXPONENTS))
    eigs = QUAD_METHODS[args.method](q, cfg=cfg, seed=args.seed)
    _write(eigs_csv(_filtered(eigs, cfg)), args.out)


def _model(args, name):
    y = load_series(args.series)
    cfg = _cfg(args)
    model = MODELS[name]
    sol = model["solve"](y, cfg, seed=args.seed)
    eigs = _filtered(sol.eigs, cfg)
    kept = {tuple(v) for v in eigs.values}
    points = [s for s in sol.stationary if tuple(s.eigenvalue) in kept]
    text_e = eigs_csv(eigs, model["names"])
    text_s = stationary_csv(points, model["names"])
    if args.out is None:
        sys.stdout.write(text_e + "\n" + text_s)
    else:
        _write(text_e, args.out)
        _write(text_s, _sibling(args.out, "_stationary"))


def cmd_arma11(args):
    _model(args, "arma11")


def cmd_lti2(args):
    _model(args, "lti2")


def cmd_arma21(args):
    p = load_problem(args.problem)
    _expect(p, "arma21-matrices")
    cfg = _cfg(args)
    eigs = solve_arma21_pipeline(p.matrices(ARMA21_EXPONENTS), cfg, seed=args.seed)
    _write(eigs_csv(_filtered(eigs, cfg), ("a1", "a2", "gamma")), args.out)


def cmd_macaulay(args):
    if args.action == "size":
        rows, cols = mac_size(args.n, args.k, args.m)
        _write(f"rows,cols\n{rows},{cols}\n", args.out)
        return
    if args.problem is None:
        raise UsageError(f"macaulay {args.action}: a problem file is required")
    p = load_problem(args.problem)
    _expect(p, "linear-rmep", "quad-r2ep")
    cfg = _cfg(args)
    pencil = _pencil(p)
    if args.action == "profile":
        m_max = args.m if args.m is not None else 2 * pencil.n + 1 + pencil.degree
        prof = nullspace_profile(pencil, m_max, cfg.stair_tol)
        doc = dict(degrees=prof.degrees, nullities=prof.nullities, separated=prof.separated,
                   stable_degree=prof.stable_degree, count=prof.count)
        _write(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        if args.m is None:
            raise UsageError("macaulay solve: --m is required")
        eigs = mac_solve_small(pencil, args.m, cfg, seed=args.seed)
        _write(eigs_csv(_filtered(eigs, cfg)), args.out)


def generate(kind: str, n: int = 3, k: int = 2, N: int = 12, seed: int = 0) -> ProblemFile:
    """Random instance with standard normal entries."""
    rng = np.random.default_rng(seed)
    if kind in ("arma11", "lti2"):
        return ProblemFile(kind, y=rng.standard_normal(N))
    if kind == "linear-rmep":
        exps = [tuple(int(i == j) for i in range(k)) for j in range(-1, k)]
        rows = n + k - 1
    elif kind == "quad-r2ep":
        k, exps, rows = 2, list(QUAD_EXPONENTS), n + 1
    elif kind == "arma21-matrices":
        k, exps, rows = 3, ARMA21_EXPONENTS, n + 2
    else:
        raise ProblemFileError(f"kind: unknown kind {kind!r}")
    return ProblemFile(kind, k, n, {w: rng.standard_normal((rows, n)) for w in exps})


def cmd_gen(args):
    if args.n < 1 or args.k < 1 or args.N < 1:
        raise UsageError("gen: --n, --k and --N must be positive")
    _write(dumps_problem(generate(args.kind, args.n, args.k, args.N, args.seed)), args.out)


def cmd_grid(args):
    y = load_series(args.series)
    model = MODELS[args.model]
    xr = tuple(args.xrange) if args.xrange else model["xrange"]
    yr = tuple(args.yrange) if args.yrange else model["yrange"]
    if args.grid_steps < 2:
        raise UsageError("grid: --grid-steps must be at least 2")
    objective = model["objective"]
    grid = contour_grid(lambda a, b: objective(y, a, b), xr, yr, args.grid_steps)
    out = Path(args.out)
    out.write_text(grid_csv(grid.values))
    side = dict(model=args.model, x_name=model["names"][0], y_name=model["names"][1],
                x=[float(v) for v in grid.x], y=[float(v) for v in grid.y],
                values=out.name, layout="values[i][j] = objective(x[j], y[i])")
    _sibling(out, "", ".json").write_text(json.dumps(side, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--tol-rank", type=float, default=1e-10, help="relative rank-drop threshold")
    common.add_argument("--tol-staircase", type=float, default=1e-10, help="staircase rank threshold")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="rmep", description="Rectangular multiparameter eigenvalue solvers.")
    parser.add_argument("--version", action="version", version=f"rmep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve-linear", parents=[common], help="linear RMEP from a problem file")
    s.add_argument("problem")
    s.add_argument("--method", choices=("alg1", "alg2"), default="alg2")
    s.add_argument("--select", action="store_true", help="alg1 with row-selection projections")
    s.set_defaults(func=cmd_solve_linear)

    s = sub.add_parser("solve-quadratic", parents=[common], help="quadratic two-parameter RMEP")
    s.add_argument("problem")
    s.add_argument("--method", choices=tuple(QUAD_METHODS), default="vandermonde")
    s.set_defaults(func=cmd_solve_quadratic)

    for name, func in (("arma11", cmd_arma11), ("lti2", cmd_lti2)):
        s = sub.add_parser(name, parents=[common], help=f"{name} fit of a time series")
        s.add_argument("series", help="text file of numbers or a problem file with y")
        s.set_defaults(func=func)

    s = sub.add_parser("arma21", parents=[common], help="ARMA(2,1) solver on given matrices")
    s.add_argument("problem")
    s.set_defaults(func=cmd_arma21)

    s = sub.add_parser("macaulay", parents=[common], help="block Macaulay baseline")
    s.add_argument("action", choices=("size", "profile", "solve"))
    s.add_argument("problem", nargs="?")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--m", type=int, default=None, help="degree (size, solve) or maximal degree (profile)")
    s.set_defaults(func=cmd_macaulay)

    s = sub.add_parser("gen", parents=[common], help="seeded random problem file")
    s.add_argument("--kind", required=True, choices=("linear-rmep", "quad-r2ep", "arma21-matrices", "arma11", "lti2"))
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--N", type=int, default=12, help="series length for arma11/lti2")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("grid", parents=[common], help="objective values on a grid")
    s.add_argument("series")
    s.add_argument("--model", required=True, choices=tuple(MODELS))
    s.add_argument("--grid-steps", type=int, default=51)
    s.add_argument("--xrange", type=float, nargs=2, default=None)
    s.add_argument("--yrange", type=float, nargs=2, default=None)
    s.set_defaults(func=cmd_grid)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "grid" and args.out is None:
        print("grid: --out is required", file=sys.stderr)
        return 1
    if args.command == "macaulay" and args.action == "size" and args.m is None:
        print("macaulay size: --m is required", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except (ProblemFileError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return 1
    except (SingularProblemError, StaircaseError, DegreeTooLowError, MemoryError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
