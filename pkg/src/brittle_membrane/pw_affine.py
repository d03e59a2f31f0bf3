"""Piecewise-affine maps on triangulations.

Covers nodal interpolation of smooth maps with a-posteriori error control,
Clarke subdifferential hulls, the maximal-rank (``Aff*``) certificate, and
pull-back through a crack-opening map by exact polygon overlay.

Cells are located geometrically (bucket grid + barycentric test), so maps
on non-conforming meshes with hanging vertices work the same way; the
overlay produced by :func:`compose_with_diffeo` is of that kind.
"""
from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .geometry import barycentric, clip_convex, fan_triangulate, point_segment_distance, triangle_area
from .linalg import ContractError, CertificateError, gram_det

_BARY_TOL = 1e-12


class _Locator:
    """Uniform bucket grid over cell bounding boxes."""

    def __init__(self, tris: np.ndarray):
        self.tris = tris
        lo = tris.min(axis=(0, 1))
        hi = tris.max(axis=(0, 1))
        span = np.maximum(hi - lo, 1e-300)
        self.lo = lo
        self.g = int(np.clip(math.ceil(math.sqrt(len(tris))), 1, 256))
        self.cell = span / self.g
        blo = self._bin(tris.min(axis=1))
        bhi = self._bin(tris.max(axis=1))
        buckets = [[] for _ in range(self.g * self.g)]
        for c, (a, b) in enumerate(zip(blo, bhi)):
            for i in range(a[0], b[0] + 1):
                for j in range(a[1], b[1] + 1):
                    buckets[i * self.g + j].append(c)
        self.buckets = [np.asarray(b, dtype=int) for b in buckets]
        self.hi = hi

    def _bin(self, p):
        idx = np.floor((np.asarray(p) - self.lo) / self.cell).astype(int)
        return np.clip(idx, 0, self.g - 1)

    def containing(self, pts: np.ndarray, tol: float = _BARY_TOL) -> list:
        """For each point, the ids of all cells whose closure contains it."""
        pts = np.atleast_2d(pts)
        out = [np.empty(0, dtype=int)] * len(pts)
        # probe at +-eps so points on a bucket boundary see both buckets
        eps = 1e-12 * np.max(self.cell * self.g)
        bins = {}
        for k, p in enumerate(pts):
            keys = set()
            for dx, dy in ((-eps, -eps), (-eps, eps), (eps, -eps), (eps, eps)):
                b = self._bin(p + (dx, dy))
                keys.add(int(b[0] * self.g + b[1]))
            for key in keys:
                bins.setdefault(key, []).append(k)
        found = [[] for _ in range(len(pts))]
        for key, idx in bins.items():
            cand = self.buckets[key]
            if len(cand) == 0:
                continue
            lam = barycentric(self.tris[cand], pts[idx])
            hit = np.all(lam >= -tol, axis=2)
            for row, k in enumerate(idx):
                found[k].extend(cand[hit[row]].tolist())
        for k, f in enumerate(found):
            if f:
                out[k] = np.unique(np.asarray(f, dtype=int))
        return out


class Triangulation:
    """Planar triangulation; cells are re-oriented counter-clockwise.

    Conformity is not enforced (the overlay meshes have hanging vertices);
    :meth:`is_conforming` checks it when needed.
    """

    def __init__(self, vertices, cells):
        v = np.asarray(vertices, dtype=float)
        c = np.array(cells, dtype=int)
        if v.ndim != 2 or v.shape[1] != 2 or c.ndim != 2 or c.shape[1] != 3:
            raise ContractError("vertices must be (V, 2) and cells (C, 3)")
        if len(c) == 0:
            raise ContractError("empty triangulation")
        if c.min() < 0 or c.max() >= len(v):
            raise ContractError("cell references a missing vertex")
        area = triangle_area(v[c])
        scale = max(1.0, float(np.max(np.abs(v)))) ** 2
        if np.any(np.abs(area) <= 1e-15 * scale):
            raise ContractError("degenerate (zero-area) cell")
        flip = area < 0
        c[flip] = c[flip][:, [0, 2, 1]]
        self.vertices = v
        self.cells = c
        self.areas = np.abs(area)
        self._locator = None
        self._adjacency = None

    @property
    def points(self) -> np.ndarray:
        return self.vertices[self.cells]

    @property
    def adjacency(self) -> dict:
        """Edge (sorted vertex pair) -> list of cells."""
        if self._adjacency is None:
            adj = {}
            for k, (i, j, l) in enumerate(self.cells):
                for e in ((i, j), (j, l), (l, i)):
                    adj.setdefault((min(e), max(e)), []).append(k)
            self._adjacency = adj
        return self._adjacency

    def diameter(self) -> float:
        P = self.points
        d = np.linalg.norm(P[:, [0, 1, 2]] - P[:, [1, 2, 0]], axis=2)
        return float(d.max())

    def locator(self) -> _Locator:
        if self._locator is None:
            self._locator = _Locator(self.points)
        return self._locator

    def is_conforming(self) -> bool:
        if any(len(cs) > 2 for cs in self.adjacency.values()):
            return False
        # no vertex in the relative interior of another cell's edge
        P = self.points
        for a, b in ((0, 1), (1, 2), (2, 0)):
            pa, pb = P[:, a], P[:, b]
            for k in range(len(P)):
                d = point_segment_distance(self.vertices, pa[k], pb[k])
                near = d <= 1e-13 * max(1.0, self.diameter())
                tips = np.all(np.isclose(self.vertices, pa[k], atol=1e-14), axis=1) | np.all(
                    np.isclose(self.vertices, pb[k], atol=1e-14), axis=1
                )
                if np.any(near & ~tips):
                    return False
        return True

    def total_area(self) -> float:
        return float(self.areas.sum())


def grid_triangulation(rect, nx: int, ny: int) -> Triangulation:
    """Uniform grid on ``rect = (x0, x1, y0, y1)``, each square split along
    its rising diagonal."""
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    cells = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return Triangulation(verts, cells)


@dataclass
class PwAffineMap:
    """``u(x) = G_k x + o_k`` on cell ``k``.

    ``cuts`` are segments (pairs of points) where the map may jump; points
    on them are outside the domain of the map.
    """

    triangulation: Triangulation
    G: np.ndarray
    o: np.ndarray
    cuts: list = field(default_factory=list)

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.o = np.asarray(self.o, dtype=float)
        nc = len(self.triangulation.cells)
        if self.G.shape != (nc, 3, 2) or self.o.shape != (nc, 3):
            raise ContractError("need one 3x2 gradient and one offset per cell")

    @classmethod
    def from_vertex_values(cls, tri: Triangulation, values, cuts=()) -> "PwAffineMap":
        """Nodal (P1) interpolant of ``values`` (V, 3)."""
        U = np.asarray(values, dtype=float)[tri.cells]  # (C, 3 vertices, 3)
        P = tri.points
        E = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # (C, 2, 2)
        D = np.stack([U[:, 1] - U[:, 0], U[:, 2] - U[:, 0]], axis=2)  # (C, 3, 2)
        G = D @ np.linalg.inv(E)
        o = U[:, 0] - np.einsum("kij,kj->ki", G, P[:, 0])
        return cls(tri, G, o, list(cuts))

    def on_cut(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(len(x), dtype=bool)
        scale = max(1.0, self.triangulation.diameter())
        for a, b in self.cuts:
            out |= point_segment_distance(x, a, b) <= 1e-12 * scale
        return out

    def cells_at(self, x) -> list:
        return self.triangulation.locator().containing(np.atleast_2d(np.asarray(x, dtype=float)))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        found = self.cells_at(x)
        out = np.full((len(x), 3), np.nan)
        for k, cs in enumerate(found):
            if len(cs):
                c = cs[0]
                out[k] = self.G[c] @ x[k] + self.o[c]
        out[self.on_cut(x)] = np.nan
        return out

    def gradient(self, x) -> np.ndarray:
        """Gradient at points interior to a cell (NaN elsewhere)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full((len(x), 3, 2), np.nan)
        for k, cs in enumerate(self.cells_at(x)):
            if len(cs) == 1:
                out[k] = self.G[cs[0]]
        return out

    def continuity_residual(self) -> float:
        """Largest disagreement between the affine pieces of cells sharing a
        point, over all cell vertices not on a cut."""
        pts = _unique_points(self.triangulation.points.reshape(-1, 2))
        pts = pts[~self.on_cut(pts)]
        worst = 0.0
        for p, cs in zip(pts, self.cells_at(pts)):
            if len(cs) > 1:
                vals = self.G[cs] @ p + self.o[cs]
                worst = max(worst, float(np.max(np.ptp(vals, axis=0))))
        return worst

    def is_continuous(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.o))), float(np.max(np.abs(self.G))))
        return self.continuity_residual() <= tol * scale

    # plain-text format
    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write("pwa 1\n")
        for x, y in self.triangulation.vertices:
            buf.write(f"v {float(x)!r} {float(y)!r}\n")
        for (i, j, k), G, o in zip(self.triangulation.cells, self.G, self.o):
            g = " ".join(repr(float(t)) for t in G.T.ravel())  # column-major: g11 g21 g31 g12 g22 g32
            buf.write(f"c {i} {j} {k} {g} {' '.join(repr(float(t)) for t in o)}\n")
        return buf.getvalue()

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "PwAffineMap":
        lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != ["pwa", "1"]:
            raise ContractError("not a 'pwa 1' file")
        verts, cells, G, o = [], [], [], []
        for ln in lines[1:]:
            if ln[0] == "v" and len(ln) == 3:
                verts.append([float(ln[1]), float(ln[2])])
            elif ln[0] == "c" and len(ln) == 13:
                cells.append([int(t) for t in ln[1:4]])
                g = [float(t) for t in ln[4:10]]
                G.append(np.array(g).reshape(2, 3).T)
                o.append([float(t) for t in ln[10:13]])
            else:
                raise ContractError(f"bad line: {' '.join(ln)}")
        tri = Triangulation(np.array(verts), np.array(cells))
        # orientation fixes in Triangulation only permute vertices; affine data unchanged
        return cls(tri, np.array(G), np.array(o))

    @classmethod
    def load(cls, path) -> "PwAffineMap":
        return cls.loads(Path(path).read_text())


def _unique_points(pts, decimals=13):
    key = np.round(pts, decimals)
    _, idx = np.unique(key, axis=0, return_index=True)
    return pts[np.sort(idx)]


def _unique_mats(M, tol=1e-14):
    keep = []
    for m in M:
        if not any(np.max(np.abs(m - k)) <= tol for k in keep):
            keep.append(m)
    return np.array(keep)


@dataclass
class SubdifferentialHull:
    point: np.ndarray
    generators: np.ndarray

    def __len__(self):
        return len(self.generators)

    def combination(self, weights) -> np.ndarray:
        w = np.asarray(weights, dtype=float)
        return np.tensordot(w, self.generators, axes=(-1, 0))


def clarke_hull(m: PwAffineMap, x) -> SubdifferentialHull:
    """Gradients of every cell whose closure contains ``x`` (one per cell,
    duplicates kept so the count equals the number of incident cells)."""
    x = np.asarray(x, dtype=float)
    cs = m.cells_at(x)[0]
    if len(cs) == 0:
        raise ContractError(f"point {x.tolist()} is outside the triangulation")
    if m.on_cut(x)[0]:
        raise ContractError(f"point {x.tolist()} lies on a cut of the map")
    return SubdifferentialHull(x.copy(), m.G[cs].copy())


def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    out = []
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(total + parts - 2 - prev)
        out.append(row)
    return np.array(out, dtype=float)


_GRID_CACHE: dict = {}


def _bary_grid(m: int, resolution: int) -> np.ndarray:
    key = (m, resolution)
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = _compositions(resolution, m) / resolution
    return _GRID_CACHE[key]


def hull_min_gram(gens: np.ndarray, resolution: int = 16, polish: bool = True):
    """Minimum of ``gram_det`` over ``conv(gens)``: generators, barycentric
    grid at ``1/resolution``, then Nelder-Mead on softmax weights."""
    gens = _unique_mats(np.asarray(gens, dtype=float))
    m = len(gens)
    if m == 1:
        return float(gram_det(gens[0])), np.ones(1), gens[0]
    W = _bary_grid(m, resolution)
    M = np.tensordot(W, gens, axes=(1, 0))
    vals = gram_det(M)
    i = int(np.argmin(vals))
    best, w = float(vals[i]), W[i]
    if polish and best > 0:
        def obj(z):
            e = np.exp(z - z.max())
            return float(gram_det(np.tensordot(e / e.sum(), gens, axes=(0, 0))))

        z0 = np.log(np.maximum(w, 1e-6))
        res = minimize(obj, z0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 200 * m})
        if res.fun < best:
            e = np.exp(res.x - res.x.max())
            best, w = float(res.fun), e / e.sum()
    return best, w, np.tensordot(w, gens, axes=(0, 0))


def _gram_lipschitz_floor(gens: np.ndarray) -> float:
    """Rigorous lower bound of gram_det on conv(gens) from the ball around
    the centroid: ``|d gram_det| <= 4 |M|^3 |dM|`` (Frobenius norms)."""
    c = gens.mean(axis=0)
    r = float(np.max(np.linalg.norm((gens - c).reshape(len(gens), -1), axis=1)))
    R = float(np.linalg.norm(c)) + r
    return float(gram_det(c)) - 4.0 * R**3 * r


@dataclass
class AffStarCertificate:
    eta: float
    min_gram_det: float
    argmin_point: np.ndarray
    argmin_matrix: np.ndarray
    resolution: float
    points_checked: int
    grid_searched: int

    @property
    def passed(self) -> bool:
        return self.min_gram_det >= self.eta

    def summary(self) -> str:
        tag = "pass" if self.passed else "fail"
        return (
            f"aff* {tag}: min det(M^T M) = {self.min_gram_det:.6g} vs eta = {self.eta:.6g} "
            f"({self.points_checked} points, {self.grid_searched} hull grids at 1/{round(1 / self.resolution)})"
        )


def aff_star_test(m: PwAffineMap, eta: float, resolution: int = 16, points=None) -> AffStarCertificate:
    """Certify ``gram_det(M) >= eta`` for all ``M`` in all Clarke hulls.

    Hulls are largest at mesh vertices (every hull at an edge or interior
    point is contained in the hull at a vertex of the same cells), so the
    check runs over all cell vertices off the cuts plus cell centroids.
    Hulls whose rigorous Lipschitz floor already exceeds ``eta`` are only
    evaluated at their generators; the others get the full grid + polish.
    """
    if not eta >= 0:
        raise ContractError("eta must be >= 0")
    tri = m.triangulation
    if points is None:
        pts = _unique_points(tri.points.reshape(-1, 2))
        pts = np.vstack([pts, tri.points.mean(axis=1)])
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
    pts = pts[~m.on_cut(pts)]
    found = m.cells_at(pts)
    best = (math.inf, None, None)
    searched = 0
    seen = {}
    for p, cs in zip(pts, found):
        if len(cs) == 0:
            continue
        key = tuple(sorted(set(cs.tolist())))
        gens = m.G[list(key)]
        if key in seen:
            val, mat = seen[key]
        else:
            gvals = gram_det(gens)
            j = int(np.argmin(gvals))
            val, mat = float(gvals[j]), gens[j]
            if len(key) > 1 and _gram_lipschitz_floor(gens) < max(eta, 0.0) + 1e-300:
                searched += 1
                v2, _, m2 = hull_min_gram(gens, resolution)
                if v2 < val:
                    val, mat = v2, m2
            seen[key] = (val, mat)
        if val < best[0]:
            best = (val, p.copy(), mat)
    return AffStarCertificate(float(eta), best[0], best[1], best[2], 1.0 / resolution, len(pts), searched)


@dataclass
class DiscretizationReport:
    h: float
    value_error: float
    gradient_error: float
    hull_excess: float
    retries: int
    sigma: float

    @property
    def ok(self) -> bool:
        return max(self.value_error, self.gradient_error, self.hull_excess) <= self.sigma


def _modulus_estimate(grad, rect, rng, n=2000):
    x0, x1, y0, y1 = rect
    diam = math.hypot(x1 - x0, y1 - y0)
    p = rng.uniform([x0, y0], [x1, y1], (n, 2))
    step = 1e-3 * diam
    q = p + step * rng.standard_normal((n, 2)) / math.sqrt(2)
    q = np.clip(q, [x0, y0], [x1, y1])
    d = np.linalg.norm(q - p, axis=1)
    ok = d > 0
    gp, gq = grad(p[ok]), grad(q[ok])
    return float(np.max(np.linalg.norm((gp - gq).reshape(len(gp), -1), axis=1) / d[ok]))


def discretize_c1(u, grad, rect, sigma: float, *, samples: int = 10_000, max_retries: int = 8, seed: int = 0, h0=None):
    """Nodal interpolant ``u_sigma`` of a C^1 map on a rectangle with
    ``|u - u_sigma|``, ``|grad u - grad u_sigma|`` and the hull excess
    ``max dist(dv, grad u(x))`` all at most ``sigma`` on a dense sample.

    ``u`` maps (N, 2) points to (N, 3) values and ``grad`` to (N, 3, 2).
    The first mesh size comes from a sampled Lipschitz constant ``L`` of the
    gradient (P1 gradient error is about ``L h``); ``h`` is halved until the
    sampled bounds hold. Returns ``(map, report)``.
    """
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    rect = tuple(float(t) for t in rect)
    x0, x1, y0, y1 = rect
    if not (x1 > x0 and y1 > y0):
        raise ContractError("empty rectangle")
    rng = np.random.default_rng(seed)
    if h0 is None:
        L = _modulus_estimate(grad, rect, rng)
        h = sigma / (4.0 * max(L, 1e-12))
        h = min(h, max(x1 - x0, y1 - y0))
    else:
        h = float(h0)
    sample = rng.uniform([x0, y0], [x1, y1], (samples, 2))
    report = None
    for attempt in range(max_retries + 1):
        nx = max(1, math.ceil((x1 - x0) / h))
        ny = max(1, math.ceil((y1 - y0) / h))
        if nx * ny > 4_000_000:
            break
        tri = grid_triangulation(rect, nx, ny)
        w = PwAffineMap.from_vertex_values(tri, u(tri.vertices))
        # on a structured grid the containing cell is computed directly
        cells = _grid_cells(sample, rect, nx, ny)
        val = np.einsum("nij,nj->ni", w.G[cells], sample) + w.o[cells]
        verr = float(np.max(np.linalg.norm(val - u(sample), axis=1)))
        gerr = float(np.max(np.linalg.norm((w.G[cells] - grad(sample)).reshape(len(sample), -1), axis=1)))
        # hull excess at vertices: every incident cell gradient vs grad u(vertex)
        gv = grad(tri.vertices)
        hexc = 0.0
        for col in range(3):
            vid = tri.cells[:, col]
            hexc = max(hexc, float(np.max(np.linalg.norm((w.G - gv[vid]).reshape(len(vid), -1), axis=1))))
        report = DiscretizationReport(h, verr, gerr, hexc, attempt, sigma)
        if report.ok:
            return w, report
        h /= 2
    raise CertificateError(
        f"discretization did not reach sigma={sigma:g}: value error {report.value_error:.3g}, "
        f"gradient error {report.gradient_error:.3g}, hull excess {report.hull_excess:.3g} at h={report.h:.3g}"
    )


def _grid_cells(p, rect, nx, ny):
    x0, x1, y0, y1 = rect
    sx = (p[:, 0] - x0) / (x1 - x0) * nx
    sy = (p[:, 1] - y0) / (y1 - y0) * ny
    i = np.clip(np.floor(sx).astype(int), 0, nx - 1)
    j = np.clip(np.floor(sy).astype(int), 0, ny - 1)
    fx, fy = sx - i, sy - j
    sq = i * ny + j
    upper = fy > fx  # above the rising diagonal: second block
    return np.where(upper, nx * ny + sq, sq)


@dataclass
class CompositionReport:
    """Numbers behind the hull-determinant chain for ``w o Phi``.

    ``w_min`` is the certified minimum of ``gram_det`` over the hulls of
    ``w``; with ``eta = 2 w_min`` the chain promises ``eta/8`` for the
    composite provided ``Phi`` passes its bounds and the modulus slack
    ``omega`` stays below ``eta/8``.
    """

    w_min: float
    eta: float
    phi_norm_sum: float
    phi_det_min: float
    phi_passed: bool
    sigma: float
    omega_argument: float
    omega: float
    dropped_area: float
    composite: AffStarCertificate | None = None

    @property
    def target(self) -> float:
        return self.eta / 8

    @property
    def chain_holds(self) -> bool:
        return self.phi_passed and self.eta / 4 - self.omega >= self.eta / 8


def compose_with_diffeo(w: PwAffineMap, phi, *, certify: bool = True, resolution: int = 16):
    """Pull ``w`` back through a crack-opening map: ``x -> w(Phi(x))``.

    Every affine cell of ``Phi`` (moving cells and the identity pieces over
    the bounding box of ``w``) is pushed forward, intersected with every
    cell of ``w``, and the pieces are pulled back and fan-triangulated.
    Pieces below ``1e-12`` of the domain area are dropped and their total
    area reported. The crack segments become cuts of the result.
    """
    from .crack_geometry import certify_bounds

    tri_w = w.triangulation
    Pw = tri_w.points
    lo, hi = Pw.min(axis=(0, 1)), Pw.max(axis=(0, 1))
    box = (lo[0], hi[0], lo[1], hi[1])
    domain_area = tri_w.total_area()
    tol_area = 1e-12 * domain_area
    wl = tri_w.locator()
    verts, cells, G, o = [], [], [], []
    dropped = 0.0
    for tri, J, c in phi.cells(box):
        img = tri @ J.T + c
        ilo, ihi = img.min(axis=0), img.max(axis=0)
        bl, bh = wl._bin(ilo), wl._bin(ihi)
        cand = set()
        for i in range(bl[0], bh[0] + 1):
            for j in range(bl[1], bh[1] + 1):
                cand.update(wl.buckets[i * wl.g + j].tolist())
        Jinv = np.linalg.inv(J)
        for k in sorted(cand):
            piece = clip_convex(Pw[k], img)
            if len(piece) < 3:
                continue
            pre = (piece - c) @ Jinv.T
            for t in fan_triangulate(pre):
                a = abs(float(triangle_area(t)))
                if a < tol_area:
                    dropped += a
                    continue
                base = len(verts)
                verts.extend(t)
                cells.append([base, base + 1, base + 2])
                G.append(w.G[k] @ J)
                o.append(w.G[k] @ c + w.o[k])
    if not cells:
        raise ContractError("the crack map and w do not overlap")
    V, inv = _merge_vertices(np.array(verts))
    cells = inv[np.array(cells)]
    G, o = np.array(G), np.array(o)
    area = np.abs(triangle_area(V[cells]))
    keep = area >= tol_area
    dropped += float(area[~keep].sum())
    tri = Triangulation(V, cells[keep])
    G, o = G[keep], o[keep]
    cuts = [seg for crack in phi.cracks for seg in crack.segments()]
    out = PwAffineMap(tri, G, o, cuts)
    if not certify:
        return out, None
    wc = aff_star_test(w, 0.0, resolution)
    cert = certify_bounds(phi)
    sigma = max(_hull_diameter(w, p, cs) for p, cs in _vertex_hulls(w))
    gnorm = float(np.max(np.linalg.norm(w.G.reshape(len(w.G), -1), axis=1)))
    arg = 6 * sigma * gnorm + 18 * sigma
    R = 3 * gnorm
    omega = 4 * R**3 * arg
    comp = aff_star_test(out, wc.min_gram_det / 4, resolution)
    report = CompositionReport(
        wc.min_gram_det, 2 * wc.min_gram_det, cert.norm_sum, cert.det_min, cert.passed, sigma, arg, omega, dropped, comp
    )
    return out, report


def push_forward(u: PwAffineMap, phi):
    """``v = u o Phi^-1`` on the opened domain, by the same overlay as
    :func:`compose_with_diffeo` run in the other direction.

    Returns ``(v, Psi)`` with ``Psi[c]`` the (constant) Jacobian of
    ``Phi`` on the preimage of cell ``c``; then ``grad v[c] @ Psi[c]`` is
    the gradient of ``u`` there.
    """
    tri_u = u.triangulation
    Pu = tri_u.points
    lo, hi = Pu.min(axis=(0, 1)), Pu.max(axis=(0, 1))
    tol_area = 1e-12 * tri_u.total_area()
    ul = tri_u.locator()
    verts, cells, G, o, Psi = [], [], [], [], []
    for tri, J, c in phi.cells((lo[0], hi[0], lo[1], hi[1])):
        bl, bh = ul._bin(tri.min(axis=0)), ul._bin(tri.max(axis=0))
        cand = set()
        for i in range(bl[0], bh[0] + 1):
            for j in range(bl[1], bh[1] + 1):
                cand.update(ul.buckets[i * ul.g + j].tolist())
        Jinv = np.linalg.inv(J)
        for k in sorted(cand):
            piece = clip_convex(Pu[k], tri)
            if len(piece) < 3:
                continue
            for t in fan_triangulate(piece @ J.T + c):
                if abs(float(triangle_area(t))) < tol_area:
                    continue
                base = len(verts)
                verts.extend(t)
                cells.append([base, base + 1, base + 2])
                Gv = u.G[k] @ Jinv
                G.append(Gv)
                o.append(u.o[k] - Gv @ c)
                Psi.append(J)
    V, inv = _merge_vertices(np.array(verts))
    cells = inv[np.array(cells)]
    area = np.abs(triangle_area(V[cells]))
    keep = area >= tol_area
    v = PwAffineMap(Triangulation(V, cells[keep]), np.array(G)[keep], np.array(o)[keep])
    return v, np.array(Psi)[keep]


def _vertex_hulls(m: PwAffineMap):
    pts = _unique_points(m.triangulation.points.reshape(-1, 2))
    pts = pts[~m.on_cut(pts)]
    return zip(pts, m.cells_at(pts))


def _hull_diameter(m, p, cs):
    if len(cs) < 2:
        return 0.0
    g = m.G[cs].reshape(len(cs), -1)
    return float(np.max(np.linalg.norm(g[:, None] - g[None], axis=2)))


def _merge_vertices(V, decimals=13):
    key = np.round(V, decimals)
    uniq, idx, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return V[idx], inv.ravel()


__all__ = [
    "AffStarCertificate",
    "CompositionReport",
    "DiscretizationReport",
    "PwAffineMap",
    "SubdifferentialHull",
    "Triangulation",
    "aff_star_test",
    "clarke_hull",
    "compose_with_diffeo",
    "discretize_c1",
    "grid_triangulation",
    "hull_min_gram",
    "push_forward",
]
