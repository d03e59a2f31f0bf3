"""Command-line front end.

Exit codes: 0 success, 1 invalid input (bad flags, config or ranges),
2 a numerical certificate failed.

Config files for ``gamma`` are TOML::

    seed = 0
    energy = {family = "ogden", p = 2.0, s = 1.0}
    gradient = [[1.0, 0.1], [0.0, 1.0], [0.2, 0.0]]   # rows of the 3x2 matrix
    crack = [[0.0, 0.0], [1.0, 0.0]]                 # optional, straight
    jump = [0.0, 0.0, 0.2]                            # jump vector across it
    rho = [0.1, 0.01, 0.001]
    epsilon = 0.1
    delta = 0.02

    [envelope]
    depth = 1
    bracket = true

Without a crack the domain is ``rect = [x0, x1, y0, y1]`` (default the
unit square) meshed with ``cells`` squares per side. With a crack the
domain is a crack-aligned rectangle with ``cells`` mesh cells along the
crack and ``margin`` of padding. Other keys: ``band``, ``j``, ``n3``,
``tol3``. Unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .linalg import CertificateError, ContractError, Mat32

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str, count: int | None = None, what: str = "value") -> list:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ContractError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ContractError(f"{what}: expected {count} numbers, got {len(vals)}")
    return vals


def _matrix(text: str):
    """``A11,A12,A21,A22,A31,A32`` (row by row) -> 3x2 array.

    CSV files use the column order of their header instead."""
    return np.array(_floats(text, 6, "matrix")).reshape(3, 2)


def _read_matrices(path) -> list:
    """Matrices from a CSV file, one per row, six entries in the order
    ``A11,A21,A31,A12,A22,A32`` (as in the output tables).
    A header line and ``#`` comments are skipped."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                vals = [float(v) for v in row[:6]]
            except ValueError:
                if out:
                    raise ContractError(f"{path}: non-numeric row {row}") from None
                continue  # header
            out.append(Mat32.from_flat(vals).array)
    if not out:
        raise ContractError(f"{path}: no matrices")
    return out


def _collect_matrices(args) -> list:
    mats = [_matrix(m) for m in args.matrix or []]
    if args.input:
        mats += _read_matrices(args.input)
    if not mats:
        raise ContractError("give at least one --matrix or an --input file")
    return mats


def _flat(A) -> list:
    return [float(v) for v in np.asarray(A, dtype=float).T.ravel()]


def _write(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _threads(args) -> int:
    t = args.threads if args.threads is not None else (os.cpu_count() or 1)
    if t < 1:
        raise ContractError("--threads must be >= 1")
    return t


# subcommands -------------------------------------------------------------------


def cmd_w0(args) -> int:
    from .energy_density import ReducedDensity, parse_energy

    W0 = ReducedDensity(parse_energy(args.energy))
    mats = _collect_matrices(args)
    if len(mats) == 1 and not args.input:
        print(f"{float(W0(mats[0])):.6f}")
        return 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["A11", "A21", "A31", "A12", "A22", "A32", "W0"])
    for A, v in zip(mats, np.atleast_1d(W0(np.stack(mats)))):
        w.writerow([*map(repr, _flat(A)), repr(float(v))])
    _write(buf.getvalue(), args.out)
    return 0


def cmd_envelope(args) -> int:
    from .energy_density import ReducedDensity, parse_energy
    from .envelopes import COARSE, SearchBudget, convex_minorant, default_cloud, rank_one_envelope

    if args.depth < 1:
        raise ContractError("--depth must be >= 1")
    W0 = ReducedDensity(parse_energy(args.energy))
    budget = COARSE if args.budget == "coarse" else SearchBudget()
    mats = _collect_matrices(args)

    def job(A):
        r = rank_one_envelope(W0, A, args.depth, budget=budget)
        lb = convex_minorant(W0, A, default_cloud(A, r.tree, seed=args.seed))
        return float(W0(A)), float(r.value), r.depth_used, min(lb, float(r.value))

    with ThreadPoolExecutor(max_workers=_threads(args)) as ex:
        rows = list(ex.map(job, mats))
    buf = io.StringIO()
    buf.write(f"# seed={args.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["A11", "A21", "A31", "A12", "A22", "A32", "W0", "R_value", "depth", "lower_bound"])
    for A, (w0, rv, d, lb) in zip(mats, rows):
        w.writerow([*map(repr, _flat(A)), repr(w0), repr(rv), d, repr(lb)])
    _write(buf.getvalue(), args.out)
    return 0


def cmd_laminate(args) -> int:
    from .energy_density import ReducedDensity, parse_energy
    from .envelopes import COARSE, rank_one_envelope
    from .laminates import LaminateParams, energy_identity, laminate_energy, region_table_csv, two_point_limit

    W0 = ReducedDensity(parse_energy(args.energy))
    A = _matrix(args.matrix)
    if args.direction and args.amplitude:
        a = np.array(_floats(args.direction, 2, "--direction"))
        b = np.array(_floats(args.amplitude, 3, "--amplitude"))
        lam = args.lam if args.lam is not None else 0.5
    elif args.direction or args.amplitude:
        raise ContractError("--direction and --amplitude go together")
    else:
        # take the laminate from the root split of the envelope search
        r = rank_one_envelope(W0, A, args.depth, budget=COARSE)
        if r.tree.split is None:
            raise ContractError("no improving rank-one split at this matrix; give --direction/--amplitude")
        s = r.tree.split
        a, b = s.a, s.b
        lam = args.lam if args.lam is not None else s.lam
    P = LaminateParams(A, a, b, lam, args.n, args.ell)
    text = region_table_csv(W0, P)
    e = laminate_energy(W0, P)
    footer = (
        f"# energy={e.value!r} identity={energy_identity(W0, P)!r} two_point_limit={two_point_limit(W0, P)!r}\n"
        f"# a={list(map(float, P.a))} b={list(map(float, P.b_ell))} lambda={lam!r} n={P.n}\n"
    )
    _write(text + footer, args.out)
    if e.diagnostic:
        print(e.diagnostic, file=sys.stderr)
    return 0


def cmd_diffeo(args) -> int:
    from .crack_geometry import CrackPath, build_crack_diffeo, certify_bounds, dump_cells_csv, sup_distance_to_identity

    if not args.delta > 0:
        raise ContractError("--delta must be positive")
    cracks = []
    for text in args.crack:
        v = _floats(text, what="--crack")
        if len(v) % 2 or len(v) < 4:
            raise ContractError("--crack needs x0,y0,x1,y1[,x2,y2]")
        cracks.append(CrackPath(np.array(v).reshape(-1, 2)))
    m = build_crack_diffeo(cracks, args.delta)
    d0, d1 = sup_distance_to_identity(m)
    cert = certify_bounds(m)
    print(f"sup|Phi-Id|={d0!r} sup|DPhi-I|={d1!r}")
    print(f"|DPhi|+|DPhi^-1|={cert.norm_sum!r} det_min={cert.det_min!r} certified={cert.passed}")
    if args.dump_cells:
        Path(args.dump_cells).write_text(dump_cells_csv(m))
    return 0 if cert.passed else 2


_FUNCTIONS = {
    "paraboloid": (
        lambda x: np.column_stack([x[:, 0], x[:, 1], x[:, 0] ** 2]),
        lambda x: np.stack([np.column_stack([np.ones(len(x)), np.zeros(len(x)), 2 * x[:, 0]]),
                            np.column_stack([np.zeros(len(x)), np.ones(len(x)), np.zeros(len(x))])], axis=2),
    ),
    "saddle": (
        lambda x: np.column_stack([x[:, 0], x[:, 1], x[:, 0] * x[:, 1]]),
        lambda x: np.stack([np.column_stack([np.ones(len(x)), np.zeros(len(x)), x[:, 1]]),
                            np.column_stack([np.zeros(len(x)), np.ones(len(x)), x[:, 0]])], axis=2),
    ),
}


def cmd_discretize(args) -> int:
    from .pw_affine import aff_star_test, discretize_c1

    rect = tuple(_floats(args.rect, 4, "--rect"))
    if not args.sigma > 0:
        raise ContractError("--sigma must be positive")
    u, grad = _FUNCTIONS[args.function]
    m, rep = discretize_c1(u, grad, rect, args.sigma, seed=args.seed)
    print(f"cells={len(m.triangulation.cells)} value_error={rep.value_error!r} gradient_error={rep.gradient_error!r}")
    code = 0
    if args.eta is not None:
        cert = aff_star_test(m, args.eta)
        print(cert.summary())
        code = 0 if cert.passed else 2
    if args.out:
        m.dump(args.out)
    return code


_GAMMA_KEYS = {"seed", "energy", "gradient", "offset", "crack", "jump", "rect", "cells", "margin",
               "rho", "epsilon", "delta", "band", "j", "n3", "tol3", "envelope"}
_ENVELOPE_KEYS = {"depth", "bracket", "budget"}


def load_gamma_config(path) -> dict:
    """Read and validate a ``gamma`` config; returns plain Python values."""
    try:
        with open(path, "rb") as fh:
            cfg = tomllib.load(fh)
    except OSError as exc:
        raise ContractError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ContractError(f"config is not valid TOML: {exc}") from None
    extra = set(cfg) - _GAMMA_KEYS
    if extra:
        raise ContractError(f"unknown config keys {sorted(extra)}")
    env = cfg.get("envelope", {})
    if set(env) - _ENVELOPE_KEYS:
        raise ContractError(f"unknown [envelope] keys {sorted(set(env) - _ENVELOPE_KEYS)}")
    if "gradient" not in cfg or "rho" not in cfg:
        raise ContractError("config needs 'gradient' and 'rho'")
    G = np.asarray(cfg["gradient"], dtype=float)
    if G.shape != (3, 2):
        raise ContractError("gradient must be 3 rows of 2 numbers")
    rho = [float(r) for r in np.atleast_1d(cfg["rho"])]
    if any(not r > 0 for r in rho):
        raise ContractError("rho values must be positive")
    eps = float(cfg.get("epsilon", 0.1))
    if not 0 < eps < 0.5:
        raise ContractError("epsilon must lie in (0, 1/2)")
    delta = float(cfg.get("delta", 0.02))
    if not delta > 0:
        raise ContractError("delta must be positive")
    if "crack" in cfg and "jump" not in cfg:
        raise ContractError("a crack needs a 'jump' vector")
    depth = int(env.get("depth", 1))
    if depth < 1:
        raise ContractError("[envelope] depth must be >= 1")
    return {
        "seed": int(cfg.get("seed", 0)),
        "energy": cfg.get("energy", {"family": "ogden", "p": 2.0, "s": 1.0}),
        "gradient": G,
        "offset": np.asarray(cfg.get("offset", [0.0, 0.0, 0.0]), dtype=float),
        "crack": cfg.get("crack"),
        "jump": np.asarray(cfg["jump"], dtype=float) if "jump" in cfg else None,
        "rect": tuple(float(v) for v in cfg.get("rect", (0.0, 1.0, 0.0, 1.0))),
        "cells": int(cfg.get("cells", 4)),
        "margin": float(cfg.get("margin", 0.5)),
        "rho": sorted(rho, reverse=True),
        "epsilon": eps,
        "delta": delta,
        "band": float(cfg.get("band", 0.5)),
        "j": int(cfg.get("j", 1)),
        "n3": int(cfg["n3"]) if "n3" in cfg else None,
        "tol3": float(cfg.get("tol3", 1e-8)),
        "depth": depth,
        "bracket": bool(env.get("bracket", True)),
        "budget": str(env.get("budget", "coarse")),
    }


def cmd_gamma(args) -> int:
    from .energy_density import energy_from_config
    from .envelopes import COARSE, SearchBudget
    from .gamma_harness import (
        ThinFilmConfig,
        affine_membrane,
        cracked_membrane,
        gnuplot_script,
        rows_to_csv,
        run_convergence_experiment,
    )

    c = load_gamma_config(args.config)
    seed = args.seed if args.seed is not None else c["seed"]
    W = energy_from_config(dict(c["energy"]))
    if c["crack"] is not None:
        m = cracked_membrane(c["gradient"], c["crack"], c["jump"], cells_along=c["cells"], margin=c["margin"])
    else:
        m = affine_membrane(c["gradient"], c["rect"], c["cells"], c["offset"])
    cfg = ThinFilmConfig(c["rho"][0], c["epsilon"], c["delta"], c["n3"], c["tol3"], c["band"], c["j"])
    rows = run_convergence_experiment(
        m, W, c["rho"], cfg, seed=seed, threads=_threads(args), bracket=c["bracket"],
        envelope_depth=c["depth"], envelope_budget=COARSE if c["budget"] == "coarse" else SearchBudget(),
    )
    _write(rows_to_csv(rows, seed), args.out)
    if args.emit_plot == "gnuplot":
        if not args.out:
            raise ContractError("--emit-plot needs --out")
        Path(args.out).with_suffix(".gp").write_text(gnuplot_script(args.out))
    failed = [r for r in rows if not r.bound_pass]
    if failed:
        print(f"bound check failed at rho={[r.rho for r in failed]}", file=sys.stderr)
        return 2
    return 0


def cmd_check(args) -> int:
    from . import acceptance

    numbers = [int(v) for v in _floats(args.only, what="--only")] if args.only else None
    if numbers and set(numbers) - set(acceptance.CRITERIA):
        raise ContractError(f"unknown criteria {sorted(set(numbers) - set(acceptance.CRITERIA))}")
    results = acceptance.run(numbers)
    return 0 if all(r.passed for r in results) else 2


# parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help="worker threads (default: CPU count)")
    common.add_argument("--seed", type=int, default=None, help="seed for all sampling (default 0, or the config's)")

    p = _Parser(prog="brittle-membrane", description="Membrane relaxation and thin-film experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    s = add("w0", "reduced density at given matrices")
    s.add_argument("--energy", default="ogden:p=2,s=1")
    s.add_argument("--matrix", action="append", help="A11,A12,A21,A22,A31,A32, row by row (repeatable)")
    s.add_argument("--input", help="CSV file with one matrix per row")
    s.add_argument("--out")
    s.set_defaults(func=cmd_w0)

    s = add("envelope", "rank-one envelope bracket at given matrices")
    s.add_argument("--energy", default="ogden:p=2,s=1")
    s.add_argument("--matrix", action="append", help="row by row (repeatable)")
    s.add_argument("--input")
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--budget", choices=["coarse", "default"], default="coarse")
    s.add_argument("--out")
    s.set_defaults(func=cmd_envelope)

    s = add("laminate", "laminate region table and energy")
    s.add_argument("--energy", default="ogden:p=2,s=1")
    s.add_argument("--matrix", default="1,0.2,0,0.3,0,0", help="row by row")
    s.add_argument("--direction", help="lamination normal a1,a2")
    s.add_argument("--amplitude", help="rank-one amplitude b1,b2,b3")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--ell", type=int, default=1)
    s.add_argument("--depth", type=int, default=1, help="envelope depth used to pick the split")
    s.add_argument("--out")
    s.set_defaults(func=cmd_laminate)

    s = add("diffeo", "crack-opening map statistics")
    s.add_argument("--crack", action="append", required=True, help="x0,y0,x1,y1[,x2,y2] (repeatable)")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--dump-cells")
    s.set_defaults(func=cmd_diffeo)

    s = add("discretize", "piecewise-affine interpolation of a built-in surface")
    s.add_argument("--function", choices=sorted(_FUNCTIONS), default="paraboloid")
    s.add_argument("--rect", default="0,1,0,1")
    s.add_argument("--sigma", type=float, default=0.1)
    s.add_argument("--eta", type=float, help="also run the hull determinant test at this level")
    s.add_argument("--out", help="write the map in pwa format")
    s.set_defaults(func=cmd_discretize)

    s = add("gamma", "thin-film convergence experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--emit-plot", choices=["gnuplot"])
    s.set_defaults(func=cmd_gamma)

    s = add("check", "run the acceptance checks")
    s.add_argument("--only", help="comma-separated criterion numbers")
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        if args.seed is None and args.command != "gamma":
            args.seed = 0
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return 2


def run() -> None:
    sys.exit(main())


__all__ = ["build_parser", "load_gamma_config", "main"]
