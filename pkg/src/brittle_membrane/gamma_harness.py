"""Thin-film energies of recovery deformations and the membrane limit.

Given a cracked piecewise-affine membrane deformation ``u`` on a planar
domain, the recovery deformation of the film ``Sigma x (-1/2, 1/2)`` is

    u_rho(x, x3) = u(x) + rho x3 phi(Phi(x)),

where ``Phi`` opens the cracks, and ``phi`` is a continuous near-optimal
transverse field on the opened domain for the gradients of
``v = u o Phi^-1`` pulled back by ``Psi = DPhi(Phi^-1)``. Its rescaled
energy is ``int W(grad_a u_rho | d3 u_rho / rho) + int psi_rho(nu)`` over
the jump set, which is the crack set times the thickness with horizontal
normals (so ``psi_rho = 1`` there).

The index of the approximating sequence (sharper fields ``phi_j``) is
modelled by the blending band of the fiber field: ``band = band0 / j``.
The smoothing step for ``v`` is skipped; ``v`` is used as is, and the
energy bound is checked a posteriori.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crack_geometry import CrackDiffeo, CrackPath, build_crack_diffeo
from .energy_density import _QUAD_BARY, _QUAD_W, ReducedDensity, StoredEnergy, fiber_field
from .envelopes import COARSE, SearchBudget, convex_minorant, default_cloud, rank_one_envelope
from .geometry import point_in_polygon, point_segment_distance, segment_distance, signed_area
from .linalg import ContractError, append_column
from .pw_affine import PwAffineMap, Triangulation, aff_star_test, push_forward

CSV_COLUMNS = ["rho", "epsilon", "delta", "bulk", "surface", "total", "limit_low", "limit_high", "bound_rhs", "bound_pass"]


def surface_weight(nu, rho: float) -> float:
    """``|(nu1, nu2, nu3 / rho)|`` for a unit normal ``nu``."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (3,):
        raise ContractError("nu must be a 3-vector")
    if abs(float(np.linalg.norm(nu)) - 1.0) > 1e-12:
        raise ContractError("nu must be a unit vector")
    if not rho > 0:
        raise ContractError("rho must be positive")
    return float(np.linalg.norm([nu[0], nu[1], nu[2] / rho]))


# membranes --------------------------------------------------------------------


@dataclass
class MembraneDeformation:
    """Piecewise-affine ``u`` on polygon ``domain`` that may jump across
    ``cracks``. ``eta`` is the certified minimum of ``det(M^T M)`` over all
    Clarke hulls and ``delta0`` the largest admissible opening parameter
    (crack neighbourhoods stay inside the domain and apart)."""

    domain: np.ndarray
    cracks: list
    u: PwAffineMap
    eta: float = field(init=False)
    delta0: float = field(init=False)

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=float)
        self.cracks = [c if isinstance(c, CrackPath) else CrackPath(np.asarray(c, dtype=float)) for c in self.cracks]
        segs = [s for c in self.cracks for s in c.segments()]
        if not self.u.cuts:
            self.u.cuts = segs
        d0 = math.inf
        m = len(self.domain)
        for c in self.cracks:
            v = c.vertices
            if not np.all(point_in_polygon(self.domain, v)):
                raise ContractError("crack leaves the domain")
            for a, b in c.segments():
                for i in range(m):
                    p, q = self.domain[i], self.domain[(i + 1) % m]
                    d0 = min(d0, float(np.min(point_segment_distance(np.array([a, b]), p, q))),
                             float(np.min(point_segment_distance(np.array([p, q]), a, b))))
        for i in range(len(self.cracks)):
            for j in range(i + 1, len(self.cracks)):
                gap = min(segment_distance(a, b, c, d) for a, b in self.cracks[i].segments() for c, d in self.cracks[j].segments())
                d0 = min(d0, gap / 2)
        self.delta0 = d0
        cert = aff_star_test(self.u, 0.0)
        if not cert.min_gram_det > 0:
            raise ContractError(f"u is not of maximal rank: {cert.summary()}")
        self.eta = cert.min_gram_det

    @property
    def area(self) -> float:
        return abs(signed_area(self.domain))

    def crack_length(self) -> float:
        return float(sum(c.length() for c in self.cracks))


def affine_membrane(A, rect=(0.0, 1.0, 0.0, 1.0), n: int = 4, offset=(0.0, 0.0, 0.0)) -> MembraneDeformation:
    """``u(x) = A x + offset`` on a rectangle, no cracks."""
    from .pw_affine import grid_triangulation

    A = np.asarray(A, dtype=float)
    tri = grid_triangulation(rect, n, n)
    u = PwAffineMap.from_vertex_values(tri, tri.vertices @ A.T + np.asarray(offset, dtype=float))
    x0, x1, y0, y1 = rect
    return MembraneDeformation(np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]]), [], u)


def cracked_membrane(A, crack, jump, *, cells_along: int = 4, margin: float = 0.5) -> MembraneDeformation:
    """``u(x) = A x + s(x) jump`` on a crack-aligned rectangle around a
    straight crack, where ``s`` is the P1 function equal to ``+1/2`` on the
    upper lip, ``-1/2`` on the lower lip (at the interior grid nodes of the
    crack) and ``0`` at every other node. So ``u`` jumps by ``jump`` in
    the middle of the crack and is continuous at the tips."""
    A = np.asarray(A, dtype=float)
    jump = np.asarray(jump, dtype=float)
    crack = crack if isinstance(crack, CrackPath) else CrackPath(np.asarray(crack, dtype=float))
    if crack.kind != "straight":
        raise ContractError("cracked_membrane builds straight cracks only")
    p, q = crack.vertices
    L = float(np.linalg.norm(q - p))
    e1 = (q - p) / L
    R = np.column_stack([e1, [-e1[1], e1[0]]])
    h = L / cells_along
    k = max(1, math.ceil(margin / h))
    xs = h * np.arange(-k, cells_along + k + 1)
    ys = h * np.arange(-k, k + 1)
    nx, ny = len(xs), len(ys)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    local = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)
    cells = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            cells += [[a, b, c], [a, c, d]]
    cells = np.array(cells)
    # duplicate interior crack nodes for the cells below the crack
    j0 = k
    s_val = np.zeros(len(local))
    extra = []
    below = local[cells].mean(axis=1)[:, 1] < 0
    for i in range(k + 1, k + cells_along):
        top = idx[i, j0]
        s_val[top] = 0.5
        copy = len(local) + len(extra)
        extra.append(local[top])
        cells[below & np.any(cells == top, axis=1)] = np.where(
            cells[below & np.any(cells == top, axis=1)] == top, copy, cells[below & np.any(cells == top, axis=1)]
        )
    if extra:
        local = np.vstack([local, extra])
        s_val = np.concatenate([s_val, np.full(len(extra), -0.5)])
    world = local @ R.T + p
    tri = Triangulation(world, cells)
    values = world @ A.T + s_val[:, None] * jump
    u = PwAffineMap.from_vertex_values(tri, values, cuts=list(crack.segments()))
    corners = np.array([[xs[0], ys[0]], [xs[-1], ys[0]], [xs[-1], ys[-1]], [xs[0], ys[-1]]]) @ R.T + p
    return MembraneDeformation(corners, [crack], u)


# recovery -----------------------------------------------------------------------


@dataclass(frozen=True)
class ThinFilmConfig:
    rho: float = 0.1
    epsilon: float = 0.1
    delta: float = 0.02
    n3: int | None = None
    tol3: float = 1e-8
    band: float = 0.5
    j: int = 1

    def __post_init__(self):
        if not self.rho > 0:
            raise ContractError("rho must be positive")
        if not 0 < self.epsilon < 0.5:
            raise ContractError("epsilon must lie in (0, 1/2)")
        if not self.delta > 0:
            raise ContractError("delta must be positive")
        if self.j < 1:
            raise ContractError("j must be >= 1")


@dataclass
class Recovery:
    """Everything the thin-film quadrature needs, per refined fiber cell in
    the reference configuration: ``M0 = grad u``, ``M1 = grad (phi o Phi)``
    (coefficient of ``rho x3``), ``phi o Phi`` at the planar quadrature
    nodes and the cell area."""

    membrane: MembraneDeformation
    config: ThinFilmConfig
    phi: CrackDiffeo
    v: PwAffineMap
    Psi: np.ndarray
    field: object
    M0: np.ndarray
    M1: np.ndarray
    phi_q: np.ndarray
    weight: np.ndarray

    @property
    def facets(self):
        """Jump facets of the film: crack segments times the thickness, all
        with horizontal normals."""
        out = []
        for c in self.membrane.cracks:
            for a, b in c.segments():
                t = (b - a) / np.linalg.norm(b - a)
                out.append((float(np.linalg.norm(b - a)), np.array([-t[1], t[0], 0.0])))
        return out

    def __call__(self, x, x3, rho):
        """``u(x) + rho x3 phi(Phi(x))`` (NaN on the cracks)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = self.phi(x)
        base = self.membrane.u(x)
        out = np.full_like(base, np.nan)
        ok = ~np.isnan(y).any(axis=1)
        if ok.any():
            zeta = self.field(self.phi.inverse(y[ok])).reshape(-1, 3)
            out[ok] = base[ok] + rho * np.asarray(x3, dtype=float) * zeta
        return out


def build_recovery(m: MembraneDeformation, cfg: ThinFilmConfig, W: StoredEnergy) -> Recovery:
    """Open the cracks, push ``u`` forward, and build the fiber field.

    On every piece of ``v`` the pulled-back gradient ``grad v Psi`` equals
    ``grad u`` of the parent cell, so the field is built on the mesh of
    ``u`` (whose nodes are already split along the cracks) and transported
    by ``Phi``: ``phi = zeta o Phi^-1``. Building it on the overlay mesh of
    ``v`` instead puts the blending rims into the thin slivers next to the
    opened crack, where ``grad phi`` reaches the thousands.
    """
    if m.cracks and not cfg.delta < m.delta0:
        raise ContractError(f"delta={cfg.delta:g} not below the admissible {m.delta0:g} for this crack set")
    Pu = m.u.triangulation.points
    lo, hi = Pu.min(axis=(0, 1)), Pu.max(axis=(0, 1))
    box = np.array([lo[0], hi[0], lo[1], hi[1]])
    phi = build_crack_diffeo(m.cracks, cfg.delta, box=box) if m.cracks else CrackDiffeo([], 0.0, box)
    v, Psi = push_forward(m.u, phi)
    tri = m.u.triangulation
    ff = fiber_field(W, m.u.G, tri, np.eye(2), cfg.epsilon, band=cfg.band / cfg.j)
    cells = ff.cells
    RP = ff.vertices[cells]
    E = np.stack([RP[:, 1] - RP[:, 0], RP[:, 2] - RP[:, 0]], axis=2)
    vals = ff.values[cells]
    D = np.stack([vals[:, 1] - vals[:, 0], vals[:, 2] - vals[:, 0]], axis=2)
    M1 = D @ np.linalg.inv(E)
    M0 = m.u.G[ff.parent]
    phi_q = np.einsum("qk,ckd->cqd", _QUAD_BARY, vals)
    weight = 0.5 * np.abs(E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0])
    return Recovery(m, cfg, phi, v, Psi, ff, M0, M1, phi_q, weight)


# energies ------------------------------------------------------------------------


@dataclass
class EnergyBreakdown:
    bulk: float
    surface: float
    facets: list
    n3: int
    diagnostic: str = ""

    @property
    def total(self) -> float:
        return self.bulk + self.surface


def _bulk(rec: Recovery, rho: float, W: StoredEnergy, n3: int):
    z, w = np.polynomial.legendre.leggauss(n3)
    z, w = z / 2, w / 2
    F2 = rec.M0[:, None, None] + rho * z[None, :, None, None, None] * rec.M1[:, None, None]  # (c, n3, 1, 3, 2)
    F2 = np.broadcast_to(F2, (len(rec.M0), n3, len(_QUAD_W), 3, 2))
    xi = np.broadcast_to(rec.phi_q[:, None], (len(rec.M0), n3, len(_QUAD_W), 3))
    vals = W.evaluate(append_column(F2, xi))
    per_cell = np.einsum("ckq,k,q->c", vals, w, _QUAD_W) * rec.weight
    return per_cell


def thin_film_energy(rec: Recovery, rho: float, W: StoredEnergy, n3: int | None = None, tol: float = 1e-8) -> EnergyBreakdown:
    """Rescaled film energy of the recovery deformation at thickness ``rho``.

    Bulk: 7-point rule on every fiber cell times Gauss-Legendre in ``x3``
    (``n3`` nodes, or doubled from 2 until the change is below ``tol``
    relative). Surface: exact facet lengths times ``psi_rho``.
    """
    if not rho > 0:
        raise ContractError("rho must be positive")
    if n3 is not None:
        per_cell = _bulk(rec, rho, W, n3)
        used = n3
    else:
        used, per_cell = 2, _bulk(rec, rho, W, 2)
        while used < 128:
            nxt = _bulk(rec, rho, W, 2 * used)
            a, b = float(per_cell.sum()), float(nxt.sum())
            used, per_cell = 2 * used, nxt
            if math.isinf(b) or abs(b - a) <= tol * max(1.0, abs(b)):
                break
    diag = ""
    if not np.all(np.isfinite(per_cell)):
        bad = int(np.argmax(~np.isfinite(per_cell)))
        diag = f"infinite energy density on fiber cell {bad} (parent cell {int(rec.field.parent[bad])})"
        bulk = math.inf
    else:
        bulk = float(per_cell.sum())
    facets = [(length, nu, surface_weight(nu, rho)) for length, nu in rec.facets]
    surface = float(sum(length * psi for length, _, psi in facets))
    return EnergyBreakdown(bulk, surface, facets, used, diag)


def _cell_gradients(m: MembraneDeformation):
    """Distinct gradients of ``u`` with their total areas (sorted for
    reproducibility)."""
    groups = {}
    for G, a in zip(m.u.G, m.u.triangulation.areas):
        key = tuple(np.round(G, 12).ravel())
        if key in groups:
            groups[key][1] += a
        else:
            groups[key] = [G, a]
    return [groups[k] for k in sorted(groups)]


def g0w(m: MembraneDeformation, W: StoredEnergy) -> float:
    """``int W0(grad u) + H^1(J)``."""
    W0 = ReducedDensity(W)
    return float(sum(a * W0(G) for G, a in _cell_gradients(m))) + m.crack_length()


@dataclass
class LimitBracket:
    low: float
    high: float
    surface: float
    w0_value: float


def limit_energy(
    m: MembraneDeformation,
    W: StoredEnergy,
    *,
    depth: int = 1,
    budget: SearchBudget = COARSE,
    seed: int = 0,
) -> LimitBracket:
    """Bracket for the membrane limit energy: the relaxed density lies
    between the sampled convex minorant and the lamination upper bound of
    depth ``depth``; both include the crack length."""
    W0 = ReducedDensity(W)
    low = high = w0 = 0.0
    for G, a in _cell_gradients(m):
        res = rank_one_envelope(W0, G, depth, budget=budget)
        lb = convex_minorant(W0, G, default_cloud(G, res.tree, seed=seed))
        if not lb <= float(res.value) + 1e-9:
            warnings.warn(f"minorant {lb:.6g} above envelope {float(res.value):.6g}; bracket widened", stacklevel=2)
            lb = float(res.value)
        low += a * lb
        high += a * float(res.value)
        w0 += a * float(W0(G))
    s = m.crack_length()
    return LimitBracket(low + s, high + s, s, w0 + s)


# sweep ------------------------------------------------------------------------------


@dataclass
class SweepRow:
    rho: float
    epsilon: float
    delta: float
    bulk: float
    surface: float
    total: float
    limit_low: float
    limit_high: float
    bound_rhs: float
    bound_pass: bool
    error: str = ""


def run_convergence_experiment(
    m: MembraneDeformation,
    W: StoredEnergy,
    rhos,
    cfg: ThinFilmConfig,
    *,
    seed: int = 0,
    threads: int = 1,
    tol: float = 1e-3,
    bracket: bool = True,
    envelope_depth: int = 1,
    envelope_budget: SearchBudget = COARSE,
) -> list:
    """One row per ``rho``: film energy of the recovery, the limit bracket
    and the check ``total <= (1+eps)^2 G0w + 2 eps + tol``.

    The recovery does not depend on ``rho`` and is built once; the ``rho``
    jobs run on ``threads`` worker threads and rows come back in sweep
    order. A failing ``rho`` gives a row with ``nan`` entries and the error
    text; the sweep continues.
    """
    rhos = [float(r) for r in rhos]
    if any(r <= 0 for r in rhos) or any(b >= a for a, b in zip(rhos, rhos[1:])):
        raise ContractError("rho sweep must be positive and strictly decreasing")
    rec = build_recovery(m, cfg, W)
    g0 = g0w(m, W)
    rhs = (1 + cfg.epsilon) ** 2 * g0 + 2 * cfg.epsilon
    if bracket:
        br = limit_energy(m, W, depth=envelope_depth, budget=envelope_budget, seed=seed)
        low, high = br.low, br.high
    else:
        low = high = math.nan

    def job(rho):
        try:
            e = thin_film_energy(rec, rho, W, cfg.n3, cfg.tol3)
            return SweepRow(rho, cfg.epsilon, cfg.delta, e.bulk, e.surface, e.total, low, high, rhs, e.total <= rhs + tol, e.diagnostic)
        except Exception as exc:  # recorded, sweep continues
            nan = math.nan
            return SweepRow(rho, cfg.epsilon, cfg.delta, nan, nan, nan, low, high, rhs, False, f"{type(exc).__name__}: {exc}")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(job, rhos))
    else:
        rows = [job(r) for r in rhos]
    return rows


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return repr(float(v))


def rows_to_csv(rows, seed: int) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    for r in rows:
        if r.error:
            buf.write(f"# error rho={r.rho!r}: {r.error}\n")
    return buf.getvalue()


def gnuplot_script(csv_path) -> str:
    """Script plotting total energy, bound and limit bracket against rho."""
    name = Path(csv_path).name
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale x\n"
        "set xlabel 'rho'\n"
        "set ylabel 'energy'\n"
        f"plot '{name}' using 1:6 with linespoints title 'total', \\\n"
        f"     '{name}' using 1:9 with lines title 'bound', \\\n"
        f"     '{name}' using 1:7 with lines title 'limit low', \\\n"
        f"     '{name}' using 1:8 with lines title 'limit high'\n"
    )


__all__ = [
    "CSV_COLUMNS",
    "EnergyBreakdown",
    "LimitBracket",
    "MembraneDeformation",
    "Recovery",
    "SweepRow",
    "ThinFilmConfig",
    "affine_membrane",
    "build_recovery",
    "cracked_membrane",
    "g0w",
    "gnuplot_script",
    "limit_energy",
    "rows_to_csv",
    "run_convergence_experiment",
    "surface_weight",
    "thin_film_energy",
]
