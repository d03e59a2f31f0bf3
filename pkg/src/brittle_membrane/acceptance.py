"""Acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult`; ``run`` prints one
``PASS``/``FAIL`` line per check. The test suite and the ``check``
subcommand both go through here, so the two cannot drift apart.
"""
from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .crack_geometry import CrackPath, build_crack_diffeo, certify_bounds, sup_distance_to_identity
from .energy_density import BuiltinOgden, ReducedDensity
from .envelopes import COARSE, rank_one_envelope
from .gamma_harness import (
    ThinFilmConfig,
    affine_membrane,
    build_recovery,
    cracked_membrane,
    run_convergence_experiment,
    thin_film_energy,
)
from .laminates import LaminateParams, energy_identity, laminate_energy, sigma_lp_bound, sigma_lp_integral, two_point_limit
from .pw_affine import PwAffineMap, aff_star_test, compose_with_diffeo, grid_triangulation

OGDEN = BuiltinOgden(2, 1)
E12 = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
STRAIGHT = np.array([[0.0, 0.0], [1.0, 0.0]])
BENT = np.array([[0.0, 0.0], [0.5, 0.3], [1.0, 0.0]])
# membrane test case shared by the thin-film checks
CASE_A = np.array([[1.0, 0.1], [0.0, 1.0], [0.2, 0.0]])
CASE_JUMP = np.array([0.0, 0.0, 0.2])


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} [{self.number:2d}] {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _w0():
    return ReducedDensity(OGDEN)


def _grid_min_w0(A, n=81, rounds=4):
    """Brute-force ``min_xi W(A|xi)``: a 3-D grid, re-centred and shrunk
    around the best node a few times."""
    c, r = np.zeros(3), 2.0
    best = math.inf
    for _ in range(rounds):
        g = np.linspace(-r, r, n)
        X = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3) + c
        F = np.concatenate([np.broadcast_to(A, (len(X), 3, 2)), X[:, :, None]], axis=2)
        v = OGDEN.evaluate(F)
        k = int(np.argmin(v))
        best, c, r = float(v[k]), X[k], 4 * r / (n - 1)
    return best


def criterion_1() -> CriterionResult:
    want = 2 + 3 * 2 ** (-2 / 3)
    t = time.perf_counter()
    got = float(_w0()(E12))
    dt = time.perf_counter() - t
    grid = _grid_min_w0(E12)
    ok = abs(got - want) <= 1e-6 and abs(grid - want) <= 1e-4 and dt < 1.0
    return CriterionResult(1, "reduced density closed form", ok, f"W0={got:.10f} want={want:.10f} grid={grid:.8f} time={dt:.3f}s")


def criterion_2() -> CriterionResult:
    W0 = _w0()

    def At(t):
        return np.column_stack([E12[:, 0], E12[:, 1] * t + E12[:, 0] * (1 - t)])

    ts = 10.0 ** (-np.arange(0, 49) / 4)  # 1 down to 1e-12
    vals = np.array([float(W0(At(t))) for t in ts])
    above = np.nonzero(vals > 1e6)[0]
    cross = float(ts[above[0]]) if len(above) else 0.0
    at_zero = float(W0(At(0.0)))
    at_1e4 = float(W0(At(1e-4)))
    ok = cross >= 1e-4 and math.isinf(at_zero)
    return CriterionResult(
        2,
        "W0 blows up at parallel columns",
        ok,
        f"first t with W0>1e6: {cross:.3g} (need >= 1e-4); W0(t=1e-4)={at_1e4:.6g}; W0(t=0)={at_zero}",
    )


def criterion_3(count: int = 50, seed: int = 0) -> CriterionResult:
    W0 = _w0()
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(count):
        A = rng.normal(size=(3, 2))
        h = rank_one_envelope(W0, A, 3, tol=-math.inf, budget=COARSE).history
        for i in range(1, len(h) - 1):
            worst = max(worst, h[i + 1] - h[i])
    return CriterionResult(3, "envelope monotone in depth", worst <= 1e-9, f"max R_(i+1)-R_i over {count} matrices = {worst:.3g}")


def _random_with_norm(rng, r):
    M = rng.normal(size=(3, 2))
    return M * (r / np.linalg.norm(M))


def criterion_4(seed: int = 0, fit: int = 20, probe: int = 40) -> CriterionResult:
    W0 = _w0()
    rng = np.random.default_rng(seed)
    p = OGDEN.p

    def R(A):
        return float(rank_one_envelope(W0, A, 1, budget=COARSE).value)

    small = [_random_with_norm(rng, r) for r in rng.uniform(0.05, 1.0, fit)]
    C = max(R(A) / (1 + np.linalg.norm(A) ** p) for A in small)
    big = [_random_with_norm(rng, r) for r in rng.uniform(0.05, 8.0, probe)]
    excess = max(R(A) / (C * (1 + np.linalg.norm(A) ** p)) - 1 for A in big)
    return CriterionResult(4, "envelope growth bound", excess <= 0.01, f"C={C:.4g}, worst relative excess on |A|<=8: {excess:.3g}")


def criterion_5() -> CriterionResult:
    msgs, ok = [], True
    for name, crack in (("straight", STRAIGHT), ("bent", BENT)):
        c = CrackPath(crack)
        m = build_crack_diffeo([c], 0.05)
        x = np.random.default_rng(1).uniform(-0.5, 1.5, (10_000, 2))
        x = x[c.distance(x) > 1e-9]
        rt = float(np.max(np.linalg.norm(m.inverse(m(x)) - x, axis=1)))
        seq = [sup_distance_to_identity(build_crack_diffeo([c], 2.0**-k)) for k in range(1, 9)]
        dec = all(b[0] < a[0] and b[1] < a[1] for a, b in zip(seq, seq[1:]))
        cert = all(certify_bounds(build_crack_diffeo([c], d)).passed for d in (0.05, 0.02, 0.01, 1e-3))
        ok &= rt <= 1e-12 and dec and cert
        msgs.append(f"{name}: roundtrip={rt:.2g} decreasing={dec} certified={cert}")
    return CriterionResult(5, "crack diffeomorphism", ok, "; ".join(msgs))


def criterion_6() -> CriterionResult:
    bad, worst = 0, 0.0
    for p in (1.5, 2.0, 3.0):
        for lam in (0.25, 0.5, 0.75):
            for n in (4, 8, 16):
                I, B = sigma_lp_integral(n, lam, p), sigma_lp_bound(n, lam, p)
                bad += I > B
                worst = max(worst, I / B)
    return CriterionResult(6, "laminate Lp bound", bad == 0, f"violations={bad}, max integral/bound={worst:.4f}")


def criterion_7() -> CriterionResult:
    W0 = _w0()
    b = np.array([0.0, 0.0, 1.0])
    P = LaminateParams(E12, (1.0, 0.0), b, 0.5, 8)
    e = laminate_energy(W0, P)
    ident = energy_identity(W0, P)
    g = P.gradients()
    term = max(abs(e.tag_values[t] - float(W0(P.A + g[t]))) for t in e.tag_values)
    diff = abs(e.value - ident)
    res = [laminate_energy(W0, LaminateParams(E12, (1.0, 0.0), b, 0.5, n)).value - two_point_limit(W0, P) for n in (16, 32, 64)]
    ratios = [res[1] / res[0], res[2] / res[1]]
    ok = diff <= 1e-12 and term <= 1e-12 and all(0.4 <= r <= 0.6 for r in ratios)
    return CriterionResult(7, "laminate energy identity", ok, f"|energy-identity|={diff:.2g}, termwise={term:.2g}, residual ratios={ratios[0]:.4f},{ratios[1]:.4f}")


def criterion_8() -> CriterionResult:
    t = grid_triangulation((-0.5, 1.5, -0.5, 1.5), 6, 6)
    A = np.array([[1.0, 0.1], [0.0, 1.0], [0.3, 0.2]])
    w = PwAffineMap.from_vertex_values(t, t.vertices @ A.T)
    eta = aff_star_test(w, 0.0).min_gram_det
    u, _ = compose_with_diffeo(w, build_crack_diffeo([CrackPath(STRAIGHT)], 0.05), certify=False)
    cert = aff_star_test(u, eta / 8)
    return CriterionResult(8, "Aff* chain through the crack map", cert.passed, f"eta={eta:.6g}, composite min det={cert.min_gram_det:.6g} vs eta/8={eta / 8:.6g}")


def _cases():
    return {
        "crack-free": affine_membrane(CASE_A, n=4),
        "straight-crack": cracked_membrane(CASE_A, STRAIGHT, CASE_JUMP),
    }


def criterion_9() -> CriterionResult:
    t0 = time.perf_counter()
    cfg = ThinFilmConfig(epsilon=0.1, delta=0.02)
    msgs, ok = [], True
    for name, m in _cases().items():
        rows = run_convergence_experiment(m, OGDEN, [1e-1, 1e-2, 1e-3], cfg)
        H1 = m.crack_length()
        b = all(r.total <= r.bound_rhs + 1e-3 for r in rows)
        s = all(abs(r.surface - H1) <= 1e-12 for r in rows)
        ok &= b and s
        msgs.append(f"{name}: max total-rhs={max(r.total - r.bound_rhs for r in rows):.4g} surface=H1:{s}")
    dt = time.perf_counter() - t0
    ok &= dt < 600
    return CriterionResult(9, "limsup bound", ok, "; ".join(msgs))


def criterion_10() -> CriterionResult:
    m = affine_membrane(CASE_A, n=4)
    rec = build_recovery(m, ThinFilmConfig(epsilon=0.1, delta=0.02), OGDEN)
    target = m.area * float(_w0()(CASE_A))
    rhos = [0.1 / 2**k for k in range(5)]
    gaps = [abs(thin_film_energy(rec, r, OGDEN).total - target) for r in rhos]
    ratios = [b / a if a > 0 else math.nan for a, b in zip(gaps, gaps[1:])]
    ok = all(0.35 <= r <= 0.65 for r in ratios)
    return CriterionResult(
        10,
        "bulk gap halves with rho",
        ok,
        "gaps=" + ",".join(f"{g:.3g}" for g in gaps) + " ratios=" + ",".join(f"{r:.3g}" for r in ratios),
    )


DETERMINISM_CONFIG = """\
seed = 7
energy = {family = "ogden", p = 2.0, s = 1.0}
gradient = [[1.0, 0.1], [0.0, 1.0], [0.2, 0.0]]
crack = [[0.0, 0.0], [1.0, 0.0]]
jump = [0.0, 0.0, 0.2]
rho = [0.1, 0.01, 0.001]
epsilon = 0.1
delta = 0.02
"""


def criterion_11() -> CriterionResult:
    from .cli import main

    n = max(2, os.cpu_count() or 2)
    with tempfile.TemporaryDirectory() as d:
        cfgp = Path(d) / "case.toml"
        cfgp.write_text(DETERMINISM_CONFIG)
        outs = []
        for k, threads in enumerate((1, 1, n, n)):
            out = Path(d) / f"run{k}.csv"
            code = main(["gamma", "--config", str(cfgp), "--out", str(out), "--threads", str(threads)])
            if code != 0:
                return CriterionResult(11, "determinism", False, f"gamma exited {code}")
            outs.append(out.read_bytes())
    ok = all(o == outs[0] for o in outs)
    return CriterionResult(11, "determinism", ok, f"4 runs (threads 1,1,{n},{n}) byte-identical={ok}")


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}


def evaluate(number: int) -> CriterionResult:
    t = time.perf_counter()
    res = CRITERIA[number]()
    res.seconds = time.perf_counter() - t
    return res


def run(numbers=None, echo=print) -> list:
    """Evaluate the selected criteria (all by default), echoing one line each."""
    out = []
    for k in numbers or sorted(CRITERIA):
        r = evaluate(k)
        echo(r.line())
        out.append(r)
    return out
