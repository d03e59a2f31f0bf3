"""Explicit oscillating laminate fields on the unit square.

The profile ``sigma_n`` is a sawtooth across ``n`` vertical strips, slope
``-lambda`` on the left part of each strip and ``1 - lambda`` on the right,
cut off near the bottom and top edges by triangular transition layers of
height ``1/n`` so that it vanishes on the boundary. In each strip ``k``,

====  =======================================================  ====================
tag   region                                                   gradient of sigma
====  =======================================================  ====================
A-    k/n <= x <= (k+1-lam)/n, 1/n <= y <= 1-1/n               -lam e1
A+    (k+1-lam)/n <= x <= (k+1)/n, 1/n <= y <= 1-1/n           (1-lam) e1
B     x + y <= (k+1)/n, y <= 1/n                               0
B-    between x + y = (k+1)/n and x = (k+1)/n - lam y           -lam (e1 + e2)
B+    (k+1)/n - lam y <= x <= (k+1)/n, y <= 1/n                (1-lam) e1
C     y >= x + 1 - (k+1)/n                                     0
C-    between y - x = 1 - (k+1)/n and x = lam (y-1) + (k+1)/n    -lam (e1 - e2)
C+    lam (y-1) + (k+1)/n <= x <= (k+1)/n, y >= 1-1/n          (1-lam) e1
====  =======================================================  ====================

The vector field is ``theta = sigma_n(R x) b_ell`` where ``R`` rotates the
lamination normal ``a`` onto ``e1`` and ``b_ell`` is ``b`` pushed off the
image of ``A`` when needed; its gradients are ``b_ell (x) d`` with
``d`` in ``{-lam a, (1-lam) a, -lam (a + a_perp), -lam (a - a_perp), 0}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import clip_convex, point_in_polygon, point_segment_distance, signed_area
from .linalg import ContractError, as32, gram_det, outer, wedge_columns

REGIONS = ("A-", "A+", "B", "B-", "B+", "C", "C-", "C+")
GRADIENT_TAG = {"A-": "minus", "A+": "plus", "B": "zero", "B-": "bminus", "B+": "plus", "C": "zero", "C-": "cminus", "C+": "plus"}
TAU_SPAN = 1e-9


def perturbed_direction(A, b, ell: int, tau_span: float = TAU_SPAN) -> np.ndarray:
    """``b`` if it is off the image of ``A`` (distance > ``tau_span``),
    otherwise ``b + nu/ell`` with ``nu`` the unit normal ``A1 x A2 / |A1 x A2|``."""
    A = as32(A)
    if gram_det(A) <= 0:
        raise ContractError("A must have rank 2")
    if ell < 1:
        raise ContractError("ell must be >= 1")
    b = np.asarray(b, dtype=float)
    nu = wedge_columns(A)
    nu = nu / np.linalg.norm(nu)
    if abs(float(b @ nu)) > tau_span:
        return b.copy()
    return b + nu / ell


@dataclass(frozen=True)
class LaminateParams:
    """Data of one laminate field.

    ``a`` is normalized; ``rotation`` is the matrix taking ``a`` to ``e1``
    (the frame in which the regions above are defined).
    """

    A: np.ndarray
    a: np.ndarray
    b: np.ndarray
    lam: float
    n: int
    ell: int = 1
    tau_span: float = TAU_SPAN
    rotation: np.ndarray = field(init=False, repr=False)
    b_ell: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = as32(self.A).astype(float)
        if gram_det(A) <= 0:
            raise ContractError("A must have rank 2")
        a = np.asarray(self.a, dtype=float)
        na = float(np.linalg.norm(a))
        if a.shape != (2,) or na == 0:
            raise ContractError("a must be a nonzero 2-vector")
        a = a / na
        if not 0 <= self.lam <= 1:
            raise ContractError("lambda must lie in [0, 1]")
        if int(self.n) != self.n or self.n < 3:
            raise ContractError("n must be an integer >= 3")
        b = np.asarray(self.b, dtype=float)
        if b.shape != (3,):
            raise ContractError("b must be a 3-vector")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "rotation", np.array([[a[0], a[1]], [-a[1], a[0]]]))
        object.__setattr__(self, "b_ell", perturbed_direction(A, b, self.ell, self.tau_span))

    @property
    def a_perp(self) -> np.ndarray:
        return np.array([-self.a[1], self.a[0]])

    def directions(self) -> dict:
        """Gradient of ``sigma`` (in world coordinates) per tag."""
        lam, a, ap = self.lam, self.a, self.a_perp
        return {
            "minus": -lam * a,
            "plus": (1 - lam) * a,
            "bminus": -lam * (a + ap),
            "cminus": -lam * (a - ap),
            "zero": np.zeros(2),
        }

    def gradients(self) -> dict:
        """The five constant gradients of ``theta`` per tag."""
        return {k: outer(self.b_ell, d) for k, d in self.directions().items()}

    def to_canonical(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.rotation.T

    def to_world(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.rotation


# regions -------------------------------------------------------------------


def region_polygons(n: int, lam: float, k: int) -> dict:
    """Vertex lists of the eight regions of strip ``k`` (counter-clockwise;
    degenerate regions for ``lam`` in {0, 1} keep repeated vertices)."""
    x0, x1 = k / n, (k + 1) / n
    xm = (k + 1 - lam) / n
    h = 1 / n
    return {
        "A-": np.array([[x0, h], [xm, h], [xm, 1 - h], [x0, 1 - h]]),
        "A+": np.array([[xm, h], [x1, h], [x1, 1 - h], [xm, 1 - h]]),
        "B": np.array([[x0, 0.0], [x1, 0.0], [x0, h]]),
        "B-": np.array([[x1, 0.0], [xm, h], [x0, h]]),
        "B+": np.array([[x1, 0.0], [x1, h], [xm, h]]),
        "C": np.array([[x0, 1 - h], [x1, 1.0], [x0, 1.0]]),
        "C-": np.array([[x0, 1 - h], [xm, 1 - h], [x1, 1.0]]),
        "C+": np.array([[xm, 1 - h], [x1, 1 - h], [x1, 1.0]]),
    }


def region_areas(n: int, lam) -> dict:
    """Closed-form areas of the regions of one strip, as exact fractions
    (``lam`` is converted exactly, so float inputs are honoured bit-for-bit)."""
    L = Fraction(lam)
    n2 = Fraction(1, n * n)
    return {
        "A-": (1 - L) * (n - 2) * n2,
        "A+": L * (n - 2) * n2,
        "B": n2 / 2,
        "B-": (1 - L) * n2 / 2,
        "B+": L * n2 / 2,
        "C": n2 / 2,
        "C-": (1 - L) * n2 / 2,
        "C+": L * n2 / 2,
    }


def tag_areas(n: int, lam) -> dict:
    """Total area (over all strips) carrying each gradient tag."""
    out = {t: Fraction(0) for t in ("minus", "plus", "bminus", "cminus", "zero")}
    for r, area in region_areas(n, lam).items():
        out[GRADIENT_TAG[r]] += n * area
    return out


def classify_region(x, n: int, lam: float):
    """Region label ``(tag, k)`` of a point of the closed unit square.

    Inequalities are evaluated in exact rational arithmetic. Ties go to the
    region on the lower/left side: strips are ``[k/n, (k+1)/n)`` (the last
    one closed), the bands ``[0, 1/n)``, ``[1/n, 1-1/n)``, ``[1-1/n, 1]``,
    and inside a band a point on a slanted line belongs to the region to its
    right. So ``(0, 0)`` is in ``B`` of strip 0.
    """
    px, py = (Fraction(float(t)) for t in x)
    if not (0 <= px <= 1 and 0 <= py <= 1):
        raise ContractError(f"point {tuple(map(float, x))} is outside the unit square")
    if n < 3:
        raise ContractError("n must be >= 3")
    L = Fraction(float(lam))
    k = min(math.floor(px * n), n - 1)
    right = Fraction(k + 1, n)
    h = Fraction(1, n)
    if py < h:
        if px + py < right:
            return "B", k
        if px < right - L * py:
            return "B-", k
        return "B+", k
    if py < 1 - h:
        return ("A-", k) if px < Fraction(k, n) + (1 - L) * h else ("A+", k)
    if py > px + 1 - right:
        return "C", k
    if px < L * (py - 1) + right:
        return "C-", k
    return "C+", k


def _sigma_branch(tag, k, n, lam, x, y):
    if tag == "A-":
        return -lam * (x - k / n)
    if tag in ("A+", "B+", "C+"):
        return (1 - lam) * (x - (k + 1) / n)
    if tag == "B-":
        return -lam * (x + y - (k + 1) / n)
    if tag == "C-":
        return -lam * (x - y + 1 - (k + 1) / n)
    return 0.0 * x


def sigma_canonical(x, n: int, lam: float) -> float:
    """``sigma_n`` at a point of the unit square (lamination frame)."""
    tag, k = classify_region(x, n, lam)
    return float(_sigma_branch(tag, k, n, lam, float(x[0]), float(x[1])))


def sigma_batch(pts, n: int, lam: float) -> np.ndarray:
    """Vectorized ``sigma_n`` (float comparisons; same tie conventions)."""
    p = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = p[:, 0], p[:, 1]
    if np.any((p < 0) | (p > 1)):
        raise ContractError("points must lie in the unit square")
    k = np.minimum(np.floor(x * n), n - 1)
    right = (k + 1) / n
    h = 1 / n
    out = np.zeros(len(p))
    bot, mid, top = y < h, (y >= h) & (y < 1 - h), y >= 1 - h
    # bottom band
    bm = bot & (x + y >= right) & (x < right - lam * y)
    bp = bot & (x + y >= right) & ~bm
    out[bm] = -lam * (x[bm] + y[bm] - right[bm])
    out[bp] = (1 - lam) * (x[bp] - right[bp])
    am = mid & (x < k / n + (1 - lam) * h)
    ap = mid & ~am
    out[am] = -lam * (x[am] - k[am] / n)
    out[ap] = (1 - lam) * (x[ap] - right[ap])
    c_free = top & (y > x + 1 - right)
    cm = top & ~c_free & (x < lam * (y - 1) + right)
    cp = top & ~c_free & ~cm
    out[cm] = -lam * (x[cm] - y[cm] + 1 - right[cm])
    out[cp] = (1 - lam) * (x[cp] - right[cp])
    return out


def sigma_eval(params: LaminateParams, x) -> float:
    """``sigma_n`` at a world point ``x`` (must map into the unit square)."""
    return sigma_canonical(params.to_canonical(x), params.n, params.lam)


def theta_eval(params: LaminateParams, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = sigma_batch(params.to_canonical(x), params.n, params.lam)
    return s[:, None] * params.b_ell


def theta_gradient(params: LaminateParams, x) -> np.ndarray:
    """Gradient of ``theta`` at a point interior to its region; points on a
    region boundary raise (use the Clarke hull there)."""
    u = params.to_canonical(x)
    tag, k = classify_region(u, params.n, params.lam)
    poly = region_polygons(params.n, params.lam, k)[tag]
    m = len(poly)
    d = min(point_segment_distance(u, poly[i], poly[(i + 1) % m]) for i in range(m))
    if d <= 1e-13:
        raise ContractError("gradient is undefined on region boundaries")
    return params.gradients()[GRADIENT_TAG[tag]]


# energy ----------------------------------------------------------------------


@dataclass
class LaminateEnergy:
    value: float
    tag_values: dict
    tag_areas: dict
    diagnostic: str = ""


def _eval_density(f, M) -> float:
    v = float(f(M))
    if math.isnan(v):
        raise ContractError("density returned NaN")
    return v


def laminate_energy(f, params: LaminateParams) -> LaminateEnergy:
    """``int_Q f(A + grad theta)`` as the exact sum of region area times the
    density at the region's gradient.

    If ``f`` is ``+inf`` on a gradient carried by positive area the result
    is ``+inf`` and ``diagnostic`` names the offending tag.
    """
    areas = tag_areas(params.n, params.lam)
    grads = params.gradients()
    vals = {}
    total = 0.0
    bad = []
    for tag, area in areas.items():
        if area == 0:
            continue
        v = _eval_density(f, params.A + grads[tag])
        vals[tag] = v
        if math.isinf(v):
            bad.append(tag)
        else:
            total += float(area) * v
    if bad:
        return LaminateEnergy(math.inf, vals, areas, "infinite density on gradient(s): " + ", ".join(bad))
    return LaminateEnergy(total, vals, areas)


def energy_identity(f, params: LaminateParams) -> float:
    """The two-bracket form of the laminate energy, evaluated term by term:
    ``(1-2/n)[(1-lam) f_- + lam f_+] + (1/n)[lam f_+ + (1-lam)/2 (f_B + f_C) + f(A)]``."""
    n, lam = params.n, params.lam
    g = params.gradients()
    A = params.A
    fm, fp = float(f(A + g["minus"])), float(f(A + g["plus"]))
    fb, fc, f0 = float(f(A + g["bminus"])), float(f(A + g["cminus"])), float(f(A))
    return (1 - 2 / n) * ((1 - lam) * fm + lam * fp) + (1 / n) * (lam * fp + (1 - lam) / 2 * (fb + fc) + f0)


def two_point_limit(f, params: LaminateParams) -> float:
    """``(1-lam) f(A - lam b (x) a) + lam f(A + (1-lam) b (x) a)``, the
    large-``n`` limit of :func:`laminate_energy`."""
    g = params.gradients()
    return (1 - params.lam) * float(f(params.A + g["minus"])) + params.lam * float(f(params.A + g["plus"]))


def sigma_lp_integral(n: int, lam: float, p: float) -> float:
    """``int_Q |sigma_n|^p`` in closed form.

    ``|sigma_n|`` is affine on each region, peaks at ``m = lam(1-lam)/n``
    and vanishes on the opposite side: rectangles give ``area m^p/(p+1)``,
    the four transition triangles (zero on two vertices, ``m`` on the third)
    give ``2 area m^p / ((p+1)(p+2))``. Valid for every real ``p > 0``.
    """
    if not p > 0:
        raise ContractError("p must be positive")
    m = lam * (1 - lam) / n
    return m**p * ((1 - 2 / n) / (p + 1) + 2 / (n * (p + 1) * (p + 2)))


def sigma_lp_bound(n: int, lam: float, p: float) -> float:
    return (lam * (1 - lam)) ** p / n**p


# piecewise-affine view ---------------------------------------------------------


def laminate_cells(params: LaminateParams):
    """Conforming triangulation of the (rotated) unit square on which
    ``theta`` is affine. Returns ``(vertices, cells, tags)``; degenerate
    regions (``lam`` in {0, 1}) are skipped."""
    n, lam = params.n, params.lam
    tris, tags = [], []
    for k in range(n):
        for name, poly in region_polygons(n, lam, k).items():
            if abs(signed_area(poly)) <= 1e-15:
                continue
            if len(poly) == 4:
                tris += [poly[[0, 1, 2]], poly[[0, 2, 3]]]
                tags += [name, name]
            else:
                tris.append(poly)
                tags.append(name)
    P = np.array(tris).reshape(-1, 2)
    key = np.round(P, 13)
    uniq, idx, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    verts = params.to_world(P[idx])
    return verts, inv.reshape(-1, 3), tags


def laminate_map(params: LaminateParams):
    """``x -> A x + theta(x)`` as a :class:`~brittle_membrane.pw_affine.PwAffineMap`."""
    from .pw_affine import PwAffineMap, Triangulation

    verts, cells, _ = laminate_cells(params)
    u = params.to_canonical(verts)
    s = sigma_batch(np.clip(u, 0.0, 1.0), params.n, params.lam)
    values = verts @ params.A.T + s[:, None] * params.b_ell
    return PwAffineMap.from_vertex_values(Triangulation(verts, cells), values)


# plurirectangles -------------------------------------------------------------------


@dataclass
class Plurirectangle:
    """Disjoint squares ``r_m + rho_m Q`` (in the lamination frame)."""

    corners: np.ndarray
    sides: np.ndarray

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=float).reshape(-1, 2)
        self.sides = np.asarray(self.sides, dtype=float).ravel()
        c, s = self.corners, self.sides
        for i in range(len(s)):
            for j in range(i + 1, len(s)):
                ox = min(c[i, 0] + s[i], c[j, 0] + s[j]) - max(c[i, 0], c[j, 0])
                oy = min(c[i, 1] + s[i], c[j, 1] + s[j]) - max(c[i, 1], c[j, 1])
                if ox > 1e-15 and oy > 1e-15:
                    raise ContractError(f"squares {i} and {j} overlap")

    @property
    def area(self) -> float:
        return float(np.sum(self.sides**2))


def dyadic_packing(V, q: int, rotation=None) -> Plurirectangle:
    """All grid squares of side ``2^-q`` lying inside polygon ``V``.

    The grid lives in the frame given by ``rotation`` (world -> frame);
    squares are reported in that frame.
    """
    if q < 0:
        raise ContractError("q must be >= 0")
    R = np.eye(2) if rotation is None else np.asarray(rotation, dtype=float)
    P = np.asarray(V, dtype=float) @ R.T
    side = 2.0**-q
    lo = np.floor(P.min(axis=0) / side).astype(int)
    hi = np.ceil(P.max(axis=0) / side).astype(int)
    corners = []
    full = side * side
    for i in range(lo[0], hi[0]):
        for j in range(lo[1], hi[1]):
            c = np.array([i * side, j * side])
            sq = np.array([c, c + [side, 0], c + [side, side], c + [0, side]])
            if not point_in_polygon(P, (c + side / 2)[None])[0]:
                # center outside: the square cannot be inside
                continue
            inter = clip_convex(P, sq)
            if len(inter) >= 3 and abs(signed_area(inter)) >= full * (1 - 1e-12):
                corners.append(c)
    return Plurirectangle(np.array(corners).reshape(-1, 2), np.full(len(corners), side))


@dataclass
class AssembledLaminate:
    params: LaminateParams
    V: np.ndarray
    squares: Plurirectangle
    area_V: float

    @property
    def area_covered(self) -> float:
        return self.squares.area

    @property
    def area_rest(self) -> float:
        return self.area_V - self.area_covered

    def energy(self, f) -> dict:
        """``int_V f(A + grad phi)`` split as squares + remainder."""
        cell = laminate_energy(f, self.params).value
        fa = float(f(self.params.A))
        squares = float(np.sum(self.squares.sides**2)) * cell
        rest = self.area_rest * fa
        return {"squares": squares, "rest": rest, "total": squares + rest, "cell": cell}

    def lp_norm_p(self, p: float) -> float:
        """``int_V |phi|^p`` exactly (each square contributes
        ``rho^(p+2) |b_ell|^p int_Q |sigma|^p``)."""
        unit = sigma_lp_integral(self.params.n, self.params.lam, p)
        return float(np.sum(self.squares.sides ** (p + 2))) * float(np.linalg.norm(self.params.b_ell)) ** p * unit

    def lp_bound_p(self, p: float) -> float:
        pr = self.params
        return float(np.sum(self.squares.sides ** (p + 2))) * float(np.linalg.norm(pr.b_ell)) ** p * sigma_lp_bound(pr.n, pr.lam, p)

    def __call__(self, x) -> np.ndarray:
        """``phi(x) = rho theta((x - r)/rho)`` on each square, 0 elsewhere."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = self.params.to_canonical(x)
        out = np.zeros((len(x), 3))
        pr = self.params
        for r, rho in zip(self.squares.corners, self.squares.sides):
            z = (u - r) / rho
            inside = np.all((z >= 0) & (z <= 1), axis=1)
            if inside.any():
                s = sigma_batch(z[inside], pr.n, pr.lam)
                out[inside] = rho * s[:, None] * pr.b_ell
        return out


def assemble_plurirectangle(params: LaminateParams, V, q: int) -> AssembledLaminate:
    """Pack ``V`` with dyadic squares of side ``2^-q`` (in the lamination
    frame) and place a rescaled copy of the laminate in each."""
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2 or len(V) < 3:
        raise ContractError("V must be a polygon (k, 2)")
    squares = dyadic_packing(V, q, params.rotation)
    return AssembledLaminate(params, V, squares, abs(signed_area(V)))


def region_table_csv(f, params: LaminateParams) -> str:
    """Per-region CSV ``region,k,area,gradient_tag,f_value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["region", "k", "area", "gradient_tag", "f_value"])
    areas = region_areas(params.n, params.lam)
    grads = params.gradients()
    fvals = {t: float(f(params.A + g)) for t, g in grads.items()}
    for k in range(params.n):
        for r in REGIONS:
            t = GRADIENT_TAG[r]
            w.writerow([r, k, repr(float(areas[r])), t, repr(fvals[t])])
    return buf.getvalue()


__all__ = [
    "AssembledLaminate",
    "LaminateEnergy",
    "LaminateParams",
    "Plurirectangle",
    "REGIONS",
    "assemble_plurirectangle",
    "classify_region",
    "dyadic_packing",
    "energy_identity",
    "laminate_cells",
    "laminate_energy",
    "laminate_map",
    "perturbed_direction",
    "region_areas",
    "region_polygons",
    "region_table_csv",
    "sigma_batch",
    "sigma_canonical",
    "sigma_eval",
    "sigma_lp_bound",
    "sigma_lp_integral",
    "tag_areas",
    "theta_eval",
    "theta_gradient",
    "two_point_limit",
]
