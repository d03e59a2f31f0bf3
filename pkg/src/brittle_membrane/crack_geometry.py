"""Piecewise-affine maps that open a polygonal crack into a polygonal hole.

For a straight crack the map lifts the thin tent region sitting on the
crack, compressing it vertically by ``1/(1+delta)`` so the crack's upper lip
moves off the crack line; the uncovered triangle ``Delta`` becomes a hole
and the complement of the hole is a Lipschitz domain. A bent crack (two
segments) is first flattened onto its chord by an eight-triangle
homeomorphism ``Psi``, opened there by a tent map ``Theta``, and mapped back:
``Phi = Psi^-1 o Theta o Psi``.

All maps are the identity away from a ``delta``-neighbourhood of the crack,
are affine on finitely many triangles and come with exact inverses.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    barycentric,
    ccw,
    convex_difference,
    fan_triangulate,
    point_in_polygon,
    segment_distance,
)
from .linalg import ContractError, op_norm2

_TOL = 1e-12


@dataclass(frozen=True)
class CrackPath:
    """Straight (2 vertices) or bent (3 vertices, joint in the middle) crack."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) not in (2, 3):
            raise ContractError("a crack has 2 (straight) or 3 (bent) planar vertices")
        if not np.all(np.isfinite(v)):
            raise ContractError("crack vertices must be finite")
        for a, b in zip(v[:-1], v[1:]):
            if np.linalg.norm(b - a) <= _TOL:
                raise ContractError("crack segments must have positive length")
        if len(v) == 3:
            area = 0.5 * abs((v[1, 0] - v[0, 0]) * (v[2, 1] - v[0, 1]) - (v[2, 0] - v[0, 0]) * (v[1, 1] - v[0, 1]))
            if area <= _TOL * max(1.0, np.max(np.abs(v))) ** 2:
                raise ContractError("bent crack segments are collinear; the hull triangle is degenerate")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def kind(self) -> str:
        return "straight" if len(self.vertices) == 2 else "bent"

    def segments(self):
        v = self.vertices
        return [(v[i], v[i + 1]) for i in range(len(v) - 1)]

    def length(self) -> float:
        return float(sum(np.linalg.norm(b - a) for a, b in self.segments()))

    def distance(self, x) -> np.ndarray:
        from .geometry import point_segment_distance

        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.min([point_segment_distance(x, a, b) for a, b in self.segments()], axis=0)


@dataclass
class MovingCell:
    """Triangle on which a map is affine: ``x -> J x + c``."""

    triangle: np.ndarray
    J: np.ndarray
    c: np.ndarray


def affine_from_points(src, dst):
    """Affine ``(J, c)`` sending the three points ``src`` to ``dst``."""
    src, dst = np.asarray(src, dtype=float), np.asarray(dst, dtype=float)
    S = np.column_stack([src[1] - src[0], src[2] - src[0]])
    D = np.column_stack([dst[1] - dst[0], dst[2] - dst[0]])
    J = D @ np.linalg.inv(S)
    return J, dst[0] - J @ src[0]


def _frame(p, q):
    e1 = (q - p) / np.linalg.norm(q - p)
    R = np.column_stack([e1, [-e1[1], e1[0]]])
    return R


class TentMap:
    """Crack opening for a straight crack.

    In coordinates ``(s, t)`` along and across the crack (crack on
    ``t = 0``, ``0 <= s <= L``), with ``f`` the tent of height ``delta`` and
    apex abscissa ``z1``, points with ``0 < t < f(s)`` go to
    ``(s, t/(1+delta) + delta f(s)/(1+delta))``; everything else is fixed.
    The hole is the triangle over the crack with apex height
    ``delta^2/(1+delta)``.
    """

    def __init__(self, crack: CrackPath, delta: float, apex: float = 0.5):
        if crack.kind != "straight":
            raise ContractError("tent maps need a straight crack")
        if not delta > 0:
            raise ContractError("delta must be positive")
        if not 0 < apex < 1:
            raise ContractError("apex position must lie strictly inside the crack")
        self.crack = crack
        self.delta = float(delta)
        p, q = crack.vertices
        self.origin = p.copy()
        self.R = _frame(p, q)
        self.L = float(np.linalg.norm(q - p))
        self.z1 = apex * self.L
        d = self.delta
        self.slopes = (d / self.z1, -d / (self.L - self.z1))
        self.moving_cells = self._cells()
        self.hole = self.to_world(np.array([[0.0, 0.0], [self.L, 0.0], [self.z1, d * d / (1 + d)]]))

    # coordinates
    def to_local(self, x):
        return (np.asarray(x, dtype=float) - self.origin) @ self.R

    def to_world(self, u):
        return np.asarray(u, dtype=float) @ self.R.T + self.origin

    def f(self, s):
        s = np.asarray(s, dtype=float)
        left = self.delta * s / self.z1
        right = self.delta * (self.L - s) / (self.L - self.z1)
        out = np.where(s <= self.z1, left, right)
        return np.where((s > 0) & (s < self.L), out, 0.0)

    def fprime(self, s):
        return np.where(np.asarray(s) <= self.z1, self.slopes[0], self.slopes[1])

    def _local_jac(self, s):
        d = self.delta
        J = np.zeros(np.shape(s) + (2, 2))
        J[..., 0, 0] = 1.0
        J[..., 1, 0] = d * self.fprime(s) / (1 + d)
        J[..., 1, 1] = 1.0 / (1 + d)
        return J

    def _cells(self):
        d = self.delta
        apex = np.array([self.z1, d])
        foot = np.array([self.z1, 0.0])
        cells = []
        for tri in (np.array([[0.0, 0.0], foot, apex]), np.array([foot, [self.L, 0.0], apex])):
            s_mid = tri[:, 0].mean()
            fs = self.f(s_mid) + self.fprime(s_mid) * (tri[:, 0] - s_mid)  # affine branch on this cell
            img = np.column_stack([tri[:, 0], tri[:, 1] / (1 + d) + d * fs / (1 + d)])
            src, dst = self.to_world(tri), self.to_world(img)
            J, c = affine_from_points(src, dst)
            cells.append(MovingCell(src, J, c))
        return cells

    def on_crack(self, x):
        u = self.to_local(np.atleast_2d(x))
        return (np.abs(u[:, 1]) <= 1e-15 * max(1.0, self.L)) & (u[:, 0] >= 0) & (u[:, 0] <= self.L)

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = self.to_local(x)
        s, t = u[:, 0], u[:, 1]
        fs = self.f(s)
        d = self.delta
        move = (s > 0) & (s < self.L) & (t > 0) & (t < fs)
        v = u.copy()
        v[move, 1] = t[move] / (1 + d) + d * fs[move] / (1 + d)
        y = np.where(move[:, None], self.to_world(v), x)
        y[self.on_crack(x)] = np.nan
        return y

    def inverse(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        u = self.to_local(y)
        s, t = u[:, 0], u[:, 1]
        fs = self.f(s)
        d = self.delta
        inside = (s > 0) & (s < self.L)
        move = inside & (t > d * fs / (1 + d)) & (t < fs)
        hole = (s >= 0) & (s <= self.L) & (t >= 0) & (t <= d * fs / (1 + d))
        v = u.copy()
        v[move, 1] = (1 + d) * t[move] - d * fs[move]
        x = np.where(move[:, None], self.to_world(v), y)
        x[hole] = np.nan
        return x

    def jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = self.to_local(x)
        s, t = u[:, 0], u[:, 1]
        move = (s > 0) & (s < self.L) & (t > 0) & (t < self.f(s))
        J = np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy()
        Jl = self._local_jac(s[move])
        J[move] = self.R @ Jl @ self.R.T
        return J

    def inverse_jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        u = self.to_local(y)
        s, t = u[:, 0], u[:, 1]
        fs = self.f(s)
        d = self.delta
        move = (s > 0) & (s < self.L) & (t > d * fs / (1 + d)) & (t < fs)
        J = np.broadcast_to(np.eye(2), (len(y), 2, 2)).copy()
        Jl = np.zeros((int(move.sum()), 2, 2))
        Jl[:, 0, 0] = 1.0
        Jl[:, 1, 0] = -d * self.fprime(s[move])
        Jl[:, 1, 1] = 1.0 + d
        J[move] = self.R @ Jl @ self.R.T
        return J


class EightTriangleMap:
    """Bi-Lipschitz homeomorphism flattening a bent crack onto its chord.

    With the chord ``gamma`` from ``p1`` to ``p2``, the joint ``J`` at height
    ``h`` above it and its foot ``F0`` on the chord, the auxiliary points on
    the perpendicular through ``J`` are ``Jhat`` (height ``(1+margin) h``),
    ``Jm`` (``-lower h``), ``Jm2`` (midway between ``Jm`` and ``Jhatm``)
    and ``Jhatm`` (``-(1+margin) h``). The eight cells and their images:

    ===================  ===================
    (p1, J, Jhat)        (p1, F0, Jhat)
    (J, p2, Jhat)        (F0, p2, Jhat)
    (p1, F0, J)          (p1, Jm, F0)
    (F0, p2, J)          (Jm, p2, F0)
    (p1, Jm, F0)         (p1, Jm2, Jm)
    (Jm, p2, F0)         (Jm2, p2, Jm)
    (p1, Jhatm, Jm)      (p1, Jhatm, Jm2)
    (Jm, Jhatm, p2)      (Jm2, Jhatm, p2)
    ===================  ===================

    So the crack goes onto the chord, the hull triangle ``T`` goes into the
    thin triangle below the chord, and the map is the identity outside the
    kite ``(p1, Jhat, p2, Jhatm)``.
    """

    def __init__(self, crack: CrackPath, margin: float = 0.1, lower: float = 0.25):
        if crack.kind != "bent":
            raise ContractError("the flattening map needs a bent crack")
        if not (margin > 0 and 0 < lower < 1 + margin):
            raise ContractError("need margin > 0 and 0 < lower < 1 + margin")
        a, j, b = crack.vertices
        R = _frame(a, b)
        if ((j - a) @ R)[1] < 0:  # keep the joint on the left of the chord
            a, b = b, a
            R = _frame(a, b)
        self.crack = crack
        self.p1, self.p2, self.joint = a, b, j
        self.R = R
        L = float(np.linalg.norm(b - a))
        s, h = (j - a) @ R
        if not (_TOL * L < s < L * (1 - _TOL)):
            raise ContractError("the joint must project strictly inside the chord (acute base angles)")
        self.h = float(h)
        self.foot_s = float(s)

        def P(t):
            return a + R @ np.array([s, t])

        self.points = {
            "p1": a,
            "p2": b,
            "J": j.copy(),
            "F0": P(0.0),
            "Jhat": P((1 + margin) * h),
            "Jm": P(-lower * h),
            "Jm2": P(-0.5 * (lower + 1 + margin) * h),
            "Jhatm": P(-(1 + margin) * h),
        }
        names = [
            (("p1", "J", "Jhat"), ("p1", "F0", "Jhat")),
            (("J", "p2", "Jhat"), ("F0", "p2", "Jhat")),
            (("p1", "F0", "J"), ("p1", "Jm", "F0")),
            (("F0", "p2", "J"), ("Jm", "p2", "F0")),
            (("p1", "Jm", "F0"), ("p1", "Jm2", "Jm")),
            (("Jm", "p2", "F0"), ("Jm2", "p2", "Jm")),
            (("p1", "Jhatm", "Jm"), ("p1", "Jhatm", "Jm2")),
            (("Jm", "Jhatm", "p2"), ("Jm2", "Jhatm", "p2")),
        ]
        pt = self.points
        self.src = np.array([[pt[k] for k in s_] for s_, _ in names])
        self.dst = np.array([[pt[k] for k in d_] for _, d_ in names])
        fw = [affine_from_points(s_, d_) for s_, d_ in zip(self.src, self.dst)]
        self.J = np.array([f[0] for f in fw])
        self.c = np.array([f[1] for f in fw])
        self.Jinv = np.linalg.inv(self.J)
        self.cinv = -np.einsum("kij,kj->ki", self.Jinv, self.c)
        self.M = float(max(np.max(op_norm2(self.J)), np.max(op_norm2(self.Jinv))))
        self.T = np.array([a, b, j])

    def _locate(self, cells, x):
        lam = barycentric(cells, x)
        ok = np.all(lam >= -1e-12, axis=2)
        idx = np.where(ok.any(axis=1), np.argmax(ok, axis=1), -1)
        return idx

    def _apply(self, x, cells, J, c):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self._locate(cells, x)
        y = x.copy()
        m = idx >= 0
        y[m] = np.einsum("nij,nj->ni", J[idx[m]], x[m]) + c[idx[m]]
        return y, idx

    def forward(self, x):
        return self._apply(x, self.src, self.J, self.c)[0]

    def inverse(self, y):
        return self._apply(y, self.dst, self.Jinv, self.cinv)[0]

    def jacobian(self, x):
        idx = self._locate(self.src, np.atleast_2d(x))
        out = np.broadcast_to(np.eye(2), (len(idx), 2, 2)).copy()
        out[idx >= 0] = self.J[idx[idx >= 0]]
        return out

    def inverse_jacobian(self, y):
        idx = self._locate(self.dst, np.atleast_2d(y))
        out = np.broadcast_to(np.eye(2), (len(idx), 2, 2)).copy()
        out[idx >= 0] = self.Jinv[idx[idx >= 0]]
        return out


class BentMap:
    """``Phi = Psi^-1 o Theta o Psi`` for a bent crack.

    ``Theta`` is a tent map on the chord with parameter ``delta / M`` (``M``
    the Lipschitz constant of the flattening map) and its apex over the
    joint's foot, so each tent cell sits inside one affine cell of
    ``Psi^-1`` and the composite has exactly two moving cells.
    """

    def __init__(self, crack: CrackPath, delta: float, margin: float = 0.1, lower: float = 0.25):
        if not delta > 0:
            raise ContractError("delta must be positive")
        self.crack = crack
        self.delta = float(delta)
        self.psi = psi = EightTriangleMap(crack, margin, lower)
        self.theta_delta = self.delta / psi.M
        max_delta = psi.M * psi.h
        if not self.theta_delta < psi.h:
            raise ContractError(
                f"delta={delta:g} too large: the opening must stay inside the hull triangle; "
                f"maximal admissible delta is {max_delta:.6g}"
            )
        self.max_delta = max_delta
        L = float(np.linalg.norm(psi.p2 - psi.p1))
        chord = CrackPath(np.array([psi.p1, psi.p2]))
        self.theta = TentMap(chord, self.theta_delta, apex=psi.foot_s / L)
        self.moving_cells = self._cells()
        apex_hole = self.theta.hole[2]
        r = psi.inverse(apex_hole)[0]
        self.hole = ccw(np.array([psi.p1, psi.joint, psi.p2, r]))

    def _cells(self):
        psi = self.psi
        cells = []
        for k, tc in enumerate(self.theta.moving_cells):
            # tent cell k lies in image cell k of Psi (left/right of the foot)
            Jp, cp = psi.J[k], psi.c[k]
            Jpi, cpi = psi.Jinv[k], psi.cinv[k]
            J = Jpi @ tc.J @ Jp
            c = Jpi @ (tc.J @ cp + tc.c) + cpi
            tri = (tc.triangle - cp) @ np.linalg.inv(Jp).T
            cells.append(MovingCell(tri, J, c))
        return cells

    def forward(self, x):
        return self.psi.inverse(self.theta.forward(self.psi.forward(x)))

    def inverse(self, y):
        return self.psi.inverse(self.theta.inverse(self.psi.forward(y)))

    def jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = self.psi.forward(x)
        z = self.theta.forward(y)
        return self.psi.inverse_jacobian(z) @ self.theta.jacobian(y) @ self.psi.jacobian(x)

    def inverse_jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        u = self.psi.forward(y)
        v = self.theta.inverse(u)
        return self.psi.inverse_jacobian(v) @ self.theta.inverse_jacobian(u) @ self.psi.jacobian(y)


@dataclass
class BoundsCertificate:
    norm_forward: float
    norm_inverse: float
    det_min: float

    @property
    def norm_sum(self) -> float:
        return self.norm_forward + self.norm_inverse

    @property
    def passed(self) -> bool:
        return self.norm_sum <= 3.0 and self.det_min >= 0.5


@dataclass
class CrackDiffeo:
    """Crack-opening map for one or more cracks with disjoint
    ``delta``-neighbourhoods; identity away from them."""

    components: list
    delta: float
    box: np.ndarray = field(default=None)

    @property
    def cracks(self):
        return [c.crack for c in self.components]

    @property
    def moving_cells(self):
        return [m for c in self.components for m in c.moving_cells]

    @property
    def holes(self):
        return [c.hole for c in self.components]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = x.copy()
        for comp in self.components:
            yc = comp.forward(x)
            changed = np.any(yc != x, axis=1) | np.any(np.isnan(yc), axis=1)
            y[changed] = yc[changed]
        return y

    def inverse(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        x = y.copy()
        for comp in self.components:
            xc = comp.inverse(y)
            changed = np.any(xc != y, axis=1) | np.any(np.isnan(xc), axis=1)
            x[changed] = xc[changed]
        return x

    def jacobian(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy()
        for comp in self.components:
            J += comp.jacobian(x) - np.eye(2)
        return J

    def inverse_jacobian(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        J = np.broadcast_to(np.eye(2), (len(y), 2, 2)).copy()
        for comp in self.components:
            J += comp.inverse_jacobian(y) - np.eye(2)
        return J

    def in_hole(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros(len(y), dtype=bool)
        for h in self.holes:
            out |= point_in_polygon(h, y)
        return out

    def cells(self, box=None):
        """Triangles covering ``box`` (default: ``self.box``) with their
        affine data ``(triangle, J, c)``: the moving cells plus a fan
        triangulation of the identity region. The identity part is not
        conforming with the moving cells in general (hanging vertices)."""
        box = self.box if box is None else np.asarray(box, dtype=float)
        if box is None:
            raise ContractError("no bounding box for the cell decomposition")
        x0, x1, y0, y1 = box
        rect = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        pieces = [rect]
        out = []
        for m in self.moving_cells:
            out.append((m.triangle, m.J, m.c))
            nxt = []
            for p in pieces:
                nxt += convex_difference(p, m.triangle)
            pieces = nxt
        for p in pieces:
            for tri in fan_triangulate(p):
                out.append((tri, np.eye(2), np.zeros(2)))
        return out


def build_tent_map(crack: CrackPath, delta: float, apex: float = 0.5) -> TentMap:
    """Opening map of a straight crack (see :class:`TentMap`)."""
    if crack.length() <= 0:
        raise ContractError("zero-length crack")
    return TentMap(crack, delta, apex)


def build_bent_map(crack: CrackPath, delta: float, margin: float = 0.1, lower: float = 0.25) -> CrackDiffeo:
    """Opening map of a bent crack wrapped as a :class:`CrackDiffeo`.

    Raises ``ContractError`` (with the largest admissible ``delta``) when the
    opening would leave the hull triangle of the crack.
    """
    comp = BentMap(crack, delta, margin, lower)
    return CrackDiffeo([comp], float(delta), default_box([crack], delta))


def default_box(cracks, delta):
    pts = np.vstack([c.vertices for c in cracks])
    span = float(np.max(np.ptp(pts, axis=0)))
    pad = max(2 * delta, 0.25 * span, 1e-3)
    lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    return np.array([lo[0], hi[0], lo[1], hi[1]])


def build_crack_diffeo(cracks, delta: float, *, box=None, apex: float = 0.5, margin: float = 0.1, lower: float = 0.25) -> CrackDiffeo:
    """Opening map for several cracks at once.

    Cracks are :class:`CrackPath` objects or vertex lists. Their
    ``delta``-neighbourhoods must be pairwise disjoint.
    """
    if not delta > 0:
        raise ContractError("delta must be positive")
    paths = [c if isinstance(c, CrackPath) else CrackPath(np.asarray(c, dtype=float)) for c in cracks]
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            gap = min(segment_distance(a, b, c, d) for a, b in paths[i].segments() for c, d in paths[j].segments())
            if gap <= 2 * delta:
                raise ContractError(f"cracks {i} and {j} are {gap:.3g} apart; their delta-neighbourhoods overlap")
    comps = [TentMap(p, delta, apex) if p.kind == "straight" else BentMap(p, delta, margin, lower) for p in paths]
    if box is None:
        box = default_box(paths, delta) if paths else np.array([0.0, 1.0, 0.0, 1.0])
    return CrackDiffeo(comps, float(delta), np.asarray(box, dtype=float))


def identity_diffeo(box=(0.0, 1.0, 0.0, 1.0)) -> CrackDiffeo:
    return CrackDiffeo([], 0.0, np.asarray(box, dtype=float))


def _as_diffeo(m) -> CrackDiffeo:
    if isinstance(m, CrackDiffeo):
        return m
    return CrackDiffeo([m], m.delta, default_box([m.crack], m.delta))


def _norm(M, norm):
    if norm == "op":
        return op_norm2(M)
    if norm == "fro":
        return np.sqrt(np.sum(np.asarray(M) ** 2, axis=(-2, -1)))
    if norm == "max":
        return np.max(np.abs(M), axis=(-2, -1))
    raise ContractError(f"unknown norm {norm!r}")


def sup_distance_to_identity(m, norm: str = "op"):
    """``(sup |Phi - Id|, sup |DPhi - I|)`` over the moving cells.

    Both are exact: the displacement is affine on each cell so its sup is
    at a vertex (taken as a limit for vertices on the crack) and the
    Jacobian is constant per cell. ``norm`` picks the matrix norm: spectral
    (``op``), Frobenius (``fro``) or largest entry (``max``).
    """
    m = _as_diffeo(m)
    val, jac = 0.0, 0.0
    for cell in m.moving_cells:
        img = cell.triangle @ cell.J.T + cell.c
        val = max(val, float(np.max(np.linalg.norm(img - cell.triangle, axis=1))))
        jac = max(jac, float(_norm(cell.J - np.eye(2), norm)))
    return val, jac


def certify_bounds(m) -> BoundsCertificate:
    """Check ``|DPhi| + |DPhi^-1| <= 3`` and ``det DPhi >= 1/2`` over all
    cells (spectral norm; identity cells contribute 1 and 1)."""
    m = _as_diffeo(m)
    nf, ni, dmin = 1.0, 1.0, 1.0
    for cell in m.moving_cells:
        nf = max(nf, float(op_norm2(cell.J)))
        ni = max(ni, float(op_norm2(np.linalg.inv(cell.J))))
        dmin = min(dmin, float(np.linalg.det(cell.J)))
    return BoundsCertificate(nf, ni, dmin)


def dump_cells_csv(m, box=None) -> str:
    """Cell decomposition as CSV text:
    ``cell_id,v0x,v0y,v1x,v1y,v2x,v2y,J11,J12,J21,J22``."""
    m = _as_diffeo(m)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell_id", "v0x", "v0y", "v1x", "v1y", "v2x", "v2y", "J11", "J12", "J21", "J22"])
    for k, (tri, J, _) in enumerate(m.cells(box)):
        w.writerow([k, *(repr(float(v)) for v in tri.ravel()), *(repr(float(v)) for v in J.ravel())])
    return buf.getvalue()


def parse_crack_config(value):
    """Accept ``[[x0,y0],[x1,y1]]`` (one crack) or a list of such lists."""
    arr = value
    if len(arr) and isinstance(arr[0], (list, tuple)) and len(arr[0]) and isinstance(arr[0][0], (list, tuple)):
        return [CrackPath(np.asarray(c, dtype=float)) for c in arr]
    return [CrackPath(np.asarray(arr, dtype=float))]


__all__ = [
    "BentMap",
    "BoundsCertificate",
    "CrackDiffeo",
    "CrackPath",
    "EightTriangleMap",
    "MovingCell",
    "TentMap",
    "build_bent_map",
    "build_crack_diffeo",
    "build_tent_map",
    "certify_bounds",
    "dump_cells_csv",
    "identity_diffeo",
    "sup_distance_to_identity",
]
