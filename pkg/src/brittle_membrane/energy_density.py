"""Stored energies on 3x3 matrices and the reduced membrane density.

A stored energy ``W`` is extended-real valued, infinite on ``det F <= 0``,
frame indifferent, p-coercive and bounded on ``{det F >= delta}`` by
``c_delta (1 + |F|^p)``. The membrane density is obtained by optimizing out
the transverse column::

    W0(A) = inf_xi W(A | xi)

which is ``+inf`` exactly when the columns of ``A`` are parallel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .linalg import (
    INF,
    CertificateError,
    ContractError,
    ExtReal,
    append_column,
    as32,
    as33,
    det3,
    frob,
    random_rotations,
    wedge_columns,
)

TAU_WEDGE = 1e-10
DELTAS = (1e-2, 1e-1, 1.0)


class StoredEnergy:
    """A stored energy density together with its structural constants.

    Parameters
    ----------
    evaluator : callable
        Maps a 3x3 array (or a stack ``(..., 3, 3)`` when ``batched``) to
        energy values, ``inf`` allowed.
    p : float
        Growth exponent, ``p > 1``.
    C1 : float
        Coercivity constant: ``W(F) >= C1 |F|^p - 1/C1``.
    growth : callable
        ``delta -> c_delta`` with ``W(F) <= c_delta (1 + |F|^p)`` whenever
        ``det F >= delta``.
    batched : bool
        Whether ``evaluator`` accepts stacks directly.
    normal_fiber : bool
        Declares that ``W(A | xi)`` does not decrease when the part of ``xi``
        orthogonal to ``A1 x A2`` is removed. Lets the batched reduced density
        search the wedge direction only.
    """

    def __init__(
        self,
        evaluator: Callable,
        p: float,
        C1: float,
        growth: Callable[[float], float],
        *,
        batched: bool = False,
        normal_fiber: bool = False,
        name: str = "custom",
    ):
        if not p > 1:
            raise ContractError("exponent p must exceed 1")
        if not C1 > 0:
            raise ContractError("coercivity constant must be positive")
        self._evaluator = evaluator
        self.p = float(p)
        self.C1 = float(C1)
        self.growth = growth
        self.batched = batched
        self.normal_fiber = normal_fiber
        self.name = name

    def evaluate(self, F) -> np.ndarray:
        """Energy of a stack of 3x3 matrices; NaN is mapped to ``inf``."""
        f = as33(F)
        with np.errstate(all="ignore"):
            if self.batched:
                out = np.asarray(self._evaluator(f), dtype=float)
            else:
                flat = f.reshape(-1, 3, 3)
                out = np.array([float(self._evaluator(m)) for m in flat]).reshape(f.shape[:-2])
        return np.where(np.isnan(out), np.inf, out)

    def __call__(self, F) -> ExtReal:
        return ExtReal(float(self.evaluate(np.asarray(F, dtype=float))))

    def __repr__(self):
        return f"StoredEnergy({self.name}, p={self.p})"


class BuiltinOgden(StoredEnergy):
    """``W(F) = |F|^p + det(F)^(-s)`` for ``det F > 0`` and ``+inf`` otherwise.

    Satisfies the structural hypotheses with ``C1 = 1`` and
    ``c_delta = 1 + delta^(-s)``.
    """

    def __init__(self, p: float = 2.0, s: float = 1.0):
        if not s > 0:
            raise ContractError("barrier exponent s must be positive")
        self.s = float(s)
        super().__init__(
            self._ogden,
            p,
            1.0,
            lambda delta: 1.0 + delta ** (-self.s),
            batched=True,
            normal_fiber=True,
            name=f"ogden(p={p:g},s={s:g})",
        )

    def _ogden(self, F):
        d = det3(F)
        n = frob(F)
        safe = np.where(d > 0, d, 1.0)
        return np.where(d > 0, n**self.p + safe ** (-self.s), np.inf)

    def __repr__(self):
        return f"BuiltinOgden(p={self.p:g}, s={self.s:g})"


def energy_from_config(table: dict) -> StoredEnergy:
    """Build an energy from a config table such as
    ``{"family": "ogden", "p": 2.0, "s": 1.0}``.
    """
    family = table.get("family")
    if family != "ogden":
        raise ContractError(f"unknown energy family {family!r}")
    extra = set(table) - {"family", "p", "s"}
    if extra:
        raise ContractError(f"unknown energy keys {sorted(extra)}")
    return BuiltinOgden(p=float(table.get("p", 2.0)), s=float(table.get("s", 1.0)))


def parse_energy(text: str) -> StoredEnergy:
    """Parse the short form ``ogden:p=2,s=1`` used on the command line."""
    family, _, rest = text.partition(":")
    table: dict = {"family": family.strip()}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ContractError(f"malformed energy parameter {item!r}")
        try:
            table[key.strip()] = float(val)
        except ValueError:
            raise ContractError(f"energy parameter {key!r} is not a number") from None
    return energy_from_config(table)


# --------------------------------------------------------------------------
# hypothesis checks


@dataclass
class HypothesisReport:
    """Monte-Carlo check of the structural hypotheses on a sample.

    ``frame_residual`` is ``max |W(RF) - W(F)| / (1 + |W(F)|)`` over samples
    where both values are finite (a mismatch in finiteness counts as
    ``inf``). The relative scaling keeps the barrier term from swamping the
    residual near ``det F = 0``.
    """

    samples: int
    frame_residual: float
    coercivity_violations: int
    barrier_violations: int
    growth_violations: dict
    growth_checked: dict

    @property
    def ok(self) -> bool:
        return (
            self.frame_residual <= 1e-9
            and self.coercivity_violations == 0
            and self.barrier_violations == 0
            and not any(self.growth_violations.values())
        )


def check_hypotheses(W: StoredEnergy, sample_count: int, seed: int, rotations=None) -> HypothesisReport:
    """Sample matrices and count violations of each hypothesis.

    Half the samples have their third column flipped so both signs of the
    determinant are exercised. ``rotations`` overrides the random rotations
    used for the frame-indifference test (one per sample, or a single one).
    Never raises on a violation.
    """
    if sample_count < 1:
        raise ContractError("sample_count must be at least 1")
    rng = np.random.default_rng(seed)
    F = rng.uniform(-2.0, 2.0, size=(sample_count, 3, 3))
    F[1::2, :, 2] *= -1.0
    if rotations is None:
        R = random_rotations(rng, sample_count)
    else:
        R = np.broadcast_to(np.asarray(rotations, dtype=float), (sample_count, 3, 3))

    w = W.evaluate(F)
    wr = W.evaluate(np.einsum("nij,njk->nik", R, F))
    both = np.isfinite(w) & np.isfinite(wr)
    mismatch = np.isfinite(w) != np.isfinite(wr)
    with np.errstate(invalid="ignore"):
        resid = np.abs(wr[both] - w[both]) / (1.0 + np.abs(w[both]))
    frame = math.inf if mismatch.any() else float(resid.max(initial=0.0))

    d = det3(F)
    norm_p = frob(F) ** W.p
    coerc = int(np.sum(w < W.C1 * norm_p - 1.0 / W.C1 - 1e-12 * (1 + norm_p)))
    barrier = int(np.sum((d <= 0) & np.isfinite(w)))
    viol, checked = {}, {}
    for delta in DELTAS:
        mask = d >= delta
        bound = W.growth(delta) * (1.0 + norm_p)
        checked[delta] = int(mask.sum())
        viol[delta] = int(np.sum(mask & (w > bound * (1 + 1e-12))))
    return HypothesisReport(sample_count, frame, coerc, barrier, viol, checked)


# --------------------------------------------------------------------------
# reduced density


@dataclass(frozen=True)
class BetaBox:
    """Search box ``{|zeta| <= beta, det(A | zeta) >= 1/beta}`` valid on the
    set of ``A`` with ``|A1 x A2| >= alpha`` and ``|A| <= K``.
    """

    beta: float
    alpha: float
    K: float
    beta1: float = math.nan
    beta2: float = math.nan


@dataclass(frozen=True)
class FiberMinimum:
    value: ExtReal
    zeta: np.ndarray | None
    degenerate: bool = False
    evaluations: int = 0


def _objective(W: StoredEnergy, A: np.ndarray, box: BetaBox | None):
    w = wedge_columns(A)

    def f(xi):
        if box is not None:
            if xi @ xi > box.beta**2 or w @ xi < 1.0 / box.beta:
                return math.inf
        return float(W.evaluate(append_column(A, xi)))

    return f


def minimize_fiber(
    W: StoredEnergy,
    A,
    box: BetaBox | None = None,
    *,
    restarts: int = 8,
    tau_wedge: float = TAU_WEDGE,
) -> FiberMinimum:
    """Minimize ``xi -> W(A | xi)`` with a multistart simplex search.

    Starting points are ``t * n`` with ``n`` the unit normal ``A1 x A2 / |.|``
    and ``t`` spread geometrically around the best value of a coarse scan
    along ``n``. Each start runs Nelder-Mead; the winner is polished by one
    more run with a fresh simplex.
    """
    a = as32(A)
    if a.shape != (3, 2):
        raise ContractError("minimize_fiber takes a single 3x2 matrix; use reduced_density_batch for stacks")
    w = wedge_columns(a)
    nw = float(np.linalg.norm(w))
    if nw == 0.0 or (box is None and nw < tau_wedge):
        return FiberMinimum(INF, None, degenerate=True)
    if box is not None and nw < 1.0 / box.beta**2:
        # det(A|xi) <= |xi| |w| < 1/beta for every admissible xi
        return FiberMinimum(INF, None)
    n = w / nw
    f = _objective(W, a, box)

    ts = np.logspace(-6, 6, 49) / math.sqrt(nw)
    scan = [f(t * n) for t in ts]
    t0 = float(ts[int(np.argmin(scan))])
    evals = len(ts)
    best_x, best_f = t0 * n, min(scan)

    factors = 2.0 ** np.array([0, -1, 1, -2, 2, -3, 3, -4])[:restarts]
    opts = dict(xatol=1e-12, fatol=1e-15, maxiter=4000, maxfev=8000)
    for k in factors:
        x0 = t0 * k * n
        if not math.isfinite(f(x0)):
            continue
        h = 0.25 * max(t0 * k, 1e-8)
        simplex = np.vstack([x0, x0 + h * np.eye(3)])
        res = minimize(f, x0, method="Nelder-Mead", options={**opts, "initial_simplex": simplex})
        evals += res.nfev
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    if math.isfinite(best_f):
        h = 1e-3 * max(np.linalg.norm(best_x), 1e-8)
        simplex = np.vstack([best_x, best_x + h * np.eye(3)])
        res = minimize(f, best_x, method="Nelder-Mead", options={**opts, "initial_simplex": simplex})
        evals += res.nfev
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
    return FiberMinimum(ExtReal(best_f), np.asarray(best_x), evaluations=evals)


def reduced_density(W: StoredEnergy, A, box: BetaBox | None = None, **kw) -> ExtReal:
    """``W0(A) = inf_xi W(A | xi)``; ``+inf`` for parallel columns.

    Without a box, a wedge below ``tau_wedge`` is treated as degenerate (use
    :func:`minimize_fiber` to see the flag).
    """
    return minimize_fiber(W, A, box, **kw).value


_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def _golden(fun, lo, hi, iters):
    """Vectorized golden-section search; ``fun`` maps (N,) -> (N,)."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLD * (b - a)
    d = a + _GOLD * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc <= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new = np.where(left, b - _GOLD * (b - a), a + _GOLD * (b - a))
        fn = fun(new)
        c, d, fc, fd = (
            np.where(left, new, d),
            np.where(left, c, new),
            np.where(left, fn, fd),
            np.where(left, fc, fn),
        )
    pick = fc <= fd
    return np.where(pick, c, d), np.where(pick, fc, fd)


def reduced_density_batch(
    W: StoredEnergy, A, *, tau_wedge: float = TAU_WEDGE, chunk: int = 32768, polish: bool | None = None
) -> np.ndarray:
    """Vectorized ``W0`` over a stack of 3x2 matrices.

    Scans ``t -> W(A | t n)`` on a log grid, refines by golden section, and
    (unless the energy declares ``normal_fiber``) finishes with a compass
    search in all three directions. Used wherever thousands of values are
    needed; :func:`reduced_density` is the reference route.
    """
    a = as32(A)
    shape = a.shape[:-2]
    flat = a.reshape(-1, 3, 2)
    out = np.empty(flat.shape[0])
    do_polish = (not W.normal_fiber) if polish is None else polish
    for s in range(0, flat.shape[0], chunk):
        out[s : s + chunk] = _w0_chunk(W, flat[s : s + chunk], tau_wedge, do_polish)
    return out.reshape(shape)


_USCAN = np.linspace(-14.0, 14.0, 25)


def _w0_chunk(W, a, tau, do_polish):
    w = wedge_columns(a)
    nw = np.linalg.norm(w, axis=-1)
    ok = nw >= max(tau, 1e-300)
    res = np.full(a.shape[0], np.inf)
    if not ok.any():
        return res
    a, w, nw = a[ok], w[ok], nw[ok]
    n = w / nw[:, None]
    shift = -0.5 * np.log(nw)

    def h(u):
        return W.evaluate(append_column(a, np.exp(u)[:, None] * n))

    grid = W.evaluate(append_column(a[:, None], np.exp(_USCAN[None, :, None] + shift[:, None, None]) * n[:, None, :]))
    k = np.clip(np.argmin(grid, axis=1), 1, _USCAN.size - 2)
    lo = _USCAN[k - 1] + shift
    hi = _USCAN[k + 1] + shift
    u, val = _golden(h, lo, hi, 60)
    if do_polish:
        xi = np.exp(u)[:, None] * n
        val = _compass(W, a, xi, val, 0.25 * np.exp(u))
    res[ok] = val
    return res


def _compass(W, a, xi, val, step, iters=80):
    dirs = np.vstack([np.eye(3), -np.eye(3)])
    for _ in range(iters):
        trial = xi[:, None, :] + step[:, None, None] * dirs[None]
        ft = W.evaluate(append_column(a[:, None], trial))
        j = np.argmin(ft, axis=1)
        fbest = ft[np.arange(len(j)), j]
        better = fbest < val
        xi = np.where(better[:, None], trial[np.arange(len(j)), j], xi)
        val = np.where(better, fbest, val)
        step = np.where(better, step, 0.5 * step)
    return val


class ReducedDensity:
    """Callable ``W0`` for a fixed energy, batched over leading axes."""

    def __init__(self, W: StoredEnergy, tau_wedge: float = TAU_WEDGE):
        self.W = W
        self.tau_wedge = tau_wedge
        self.p = W.p
        self.C1 = W.C1

    def __call__(self, A) -> np.ndarray | float:
        out = reduced_density_batch(self.W, A, tau_wedge=self.tau_wedge)
        return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# search box


def _sample_lambda(alpha: float, K: float, count: int, seed: int) -> np.ndarray:
    """Quasi-random matrices with ``|A1 x A2| >= alpha`` and ``|A| <= K``.

    Singular values ``s1 >= s2`` are drawn with product ``m`` in
    ``[alpha, K^2/2]`` and ``s1^2 + s2^2`` in ``[2m, K^2]``; then random
    orthonormal frames are applied on both sides.
    """
    sob = qmc.Sobol(d=2, scramble=True, seed=seed).random(count)
    m = alpha + sob[:, 0] * (K * K / 2.0 - alpha)
    r2 = 2 * m + sob[:, 1] * (K * K - 2 * m)
    disc = np.sqrt(np.maximum(r2 * r2 - 4 * m * m, 0.0))
    s1 = np.sqrt((r2 + disc) / 2)
    s2 = m / s1
    rng = np.random.default_rng(seed)
    U = random_rotations(rng, count)[:, :, :2]
    th = rng.uniform(0, 2 * np.pi, count)
    V = np.stack([np.stack([np.cos(th), -np.sin(th)], -1), np.stack([np.sin(th), np.cos(th)], -1)], -2)
    S = np.zeros((count, 2, 2))
    S[:, 0, 0], S[:, 1, 1] = s1, s2
    return U @ S @ V


def _sublevel_extent(f, zeta, level, directions):
    """Walk from ``zeta`` along each direction to the boundary of
    ``{f <= level}`` and return the points reached.
    """
    pts = []
    for d in directions:
        lo, hi = 0.0, 1.0
        while f(zeta + hi * d) <= level and hi < 1e6:
            lo, hi = hi, 2 * hi
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if f(zeta + mid * d) <= level:
                lo = mid
            else:
                hi = mid
        pts.append(zeta + lo * d)
    return pts


def beta_box(W: StoredEnergy, alpha: float, K: float, *, samples: int = 64, seed: int = 0) -> BetaBox:
    """Certified-by-sampling search box for the transverse column.

    ``beta1 = (c_alpha K^p + 2 c_alpha + C1 + 1)^(1/p)`` bounds the size of
    near-minimizers through coercivity. ``beta2`` is calibrated: for each
    sampled ``A`` the minimizer is found and the sublevel set
    ``{W(A|.) <= W0(A) + 1}`` is probed along 14 rays; ``beta2`` is twice
    the worst ``|zeta|`` and ``1/det(A|zeta)`` seen. The result is
    ``max(beta1, beta2)``.
    """
    if not alpha > 0:
        raise ContractError("alpha must be positive")
    if K * K < 2 * alpha * (1 - 1e-12):
        raise ContractError(f"no matrix has |A1 x A2| >= {alpha} and |A| <= {K}")
    c = W.growth(alpha)
    beta1 = (c * K**W.p + 2 * c + W.C1 + 1) ** (1.0 / W.p)

    dirs = [s * e for e in np.eye(3) for s in (1.0, -1.0)]
    dirs += [np.array([i, j, k]) / math.sqrt(3) for i in (1, -1) for j in (1, -1) for k in (1, -1)]
    worst = 0.0
    for A in _sample_lambda(alpha, K, samples, seed):
        fm = minimize_fiber(W, A, restarts=4)
        if fm.zeta is None or not math.isfinite(fm.value):
            raise CertificateError("calibration hit a matrix with infinite reduced density")
        f = _objective(W, A, None)
        w = wedge_columns(A)
        for z in [fm.zeta] + _sublevel_extent(f, fm.zeta, fm.value + 1.0, dirs):
            dt = float(w @ z)
            if dt <= 0:
                raise CertificateError("calibration produced a non-positive determinant")
            worst = max(worst, float(np.linalg.norm(z)), 1.0 / dt)
    beta2 = 2.0 * worst
    if not math.isfinite(beta2):
        raise CertificateError("could not certify a finite beta")
    return BetaBox(max(beta1, beta2), alpha, K, beta1, beta2)


# --------------------------------------------------------------------------
# fiber fields on triangulated domains

# 7-point degree-5 rule on the reference triangle (barycentric, weights sum 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_QUAD_BARY = np.array(
    [[1 / 3, 1 / 3, 1 / 3], [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1], [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]]
)
_QUAD_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


@dataclass
class FiberCertificate:
    det_min: float
    det_floor: float
    beta_tilde: float
    energy: float
    energy_reduced: float
    energy_excess: float
    eps: float
    wedge_min: float

    @property
    def passed(self) -> bool:
        return self.det_min >= self.det_floor and self.energy_excess <= self.eps


@dataclass
class FiberField:
    """Continuous piecewise-affine transverse field on a refined mesh.

    ``values[k]`` is the field at refined vertex ``k``; ``parent[c]`` is the
    original cell containing refined cell ``c``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    values: np.ndarray
    parent: np.ndarray
    certificate: FiberCertificate = field(repr=False, default=None)

    def __call__(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full((len(pts), 3), np.nan)
        P = self.vertices[self.cells]
        for i, q in enumerate(pts):
            lam = _bary(P, q)
            inside = np.all(lam >= -1e-12, axis=1)
            if inside.any():
                c = int(np.argmax(inside))
                out[i] = lam[c] @ self.values[self.cells[c]]
        return out[0] if np.ndim(x) == 1 else out


def _bary(P, q):
    """Barycentric coordinates of point ``q`` in triangles ``P`` (M, 3, 2)."""
    v0, v1, v2 = P[:, 0], P[:, 1], P[:, 2]
    d = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])
    l1 = ((q[0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v2[:, 0] - v0[:, 0]) * (q[1] - v0[:, 1])) / d
    l2 = ((v1[:, 0] - v0[:, 0]) * (q[1] - v0[:, 1]) - (q[0] - v0[:, 0]) * (v1[:, 1] - v0[:, 1])) / d
    return np.stack([1 - l1 - l2, l1, l2], axis=1)


def fiber_field(
    W: StoredEnergy,
    G: Callable,
    mesh,
    Psi,
    eps: float,
    *,
    band: float = 0.05,
    box: BetaBox | None = None,
) -> FiberField:
    """Near-optimal continuous transverse field for ``G(x) Psi(x)``.

    Parameters
    ----------
    W : StoredEnergy
    G : callable or array (M, 3, 2)
        ``x (N, 2) -> (N, 3, 2)``, continuous with non-parallel columns, or
        one constant matrix per mesh cell (gradient of a piecewise-affine
        map; then ``G Psi`` may jump across cell edges).
    mesh : Triangulation
        Anything with ``vertices`` (V, 2) and ``cells`` (M, 3).
    Psi : array (M, 2, 2)
        Cellwise constant matrices with ``|det Psi - 1| <= eps``.
    eps : float
        Tolerance, ``0 <= eps < 1/2``.
    band : float
        Each cell is split into a core (the cell shrunk toward its centroid
        by ``band``) where the field is the cell's own minimizer, and a rim
        where it is blended linearly toward vertex averages.

    Returns
    -------
    FiberField
        With ``certificate`` filled in.

    Raises
    ------
    CertificateError
        If the blended field's determinant drops below ``1/(3 beta~)``.
    """
    if not 0 <= eps < 0.5:
        raise ContractError("eps must lie in [0, 1/2)")
    V = np.asarray(mesh.vertices, dtype=float)
    C = np.asarray(mesh.cells, dtype=int)
    Psi = np.broadcast_to(np.asarray(Psi, dtype=float), (len(C), 2, 2))
    dpsi = np.linalg.det(Psi)
    if np.max(np.abs(dpsi - 1.0)) > eps + 1e-14:
        raise ContractError("det Psi deviates from 1 by more than eps")

    P = V[C]
    cent = P.mean(axis=1)
    cellwise = not callable(G)
    if cellwise:
        Gc = as32(np.asarray(G, dtype=float))
        if Gc.shape != (len(C), 3, 2):
            raise ContractError("cellwise G needs one 3x2 matrix per cell")
        GPc = np.einsum("mij,mjk->mik", Gc, Psi)
        wedge_min = float(np.min(np.linalg.norm(wedge_columns(Gc), axis=-1)))
    else:
        GPc = np.einsum("mij,mjk->mik", as32(G(cent)), Psi)
        wedge_min = float(np.min(np.linalg.norm(wedge_columns(as32(G(V))), axis=-1)))
    wedge_min = min(wedge_min, float(np.min(np.linalg.norm(wedge_columns(GPc), axis=-1))))
    if wedge_min <= 0:
        raise ContractError("G has parallel columns somewhere on the mesh")

    zeta = np.empty((len(C), 3))
    solved = {}  # piecewise-affine inputs repeat the same matrix on many cells
    for i in range(len(C)):
        key = np.round(GPc[i], 13).tobytes()
        if key not in solved:
            fm = minimize_fiber(W, GPc[i], box)
            if fm.zeta is None:
                raise CertificateError(f"no admissible transverse vector on cell {i}")
            solved[key] = fm.zeta
        zeta[i] = solved[key]
    dets = np.einsum("mi,mi->m", wedge_columns(GPc), zeta)
    beta_t = float(max(np.max(np.linalg.norm(zeta, axis=1)), np.max(1.0 / dets)))
    if box is not None:
        beta_t = max(beta_t, box.beta)

    # vertex values: average of incident cell minimizers
    acc = np.zeros((len(V), 3))
    cnt = np.zeros(len(V))
    for k in range(3):
        np.add.at(acc, C[:, k], zeta)
        np.add.at(cnt, C[:, k], 1)
    vert_val = acc / cnt[:, None]

    # refined mesh: original vertices, then three core vertices per cell
    core = P + band * (cent[:, None, :] - P)
    rv = np.vstack([V, core.reshape(-1, 2)])
    rval = np.vstack([vert_val, np.repeat(zeta, 3, axis=0)])
    cells, parent = [], []
    nV = len(V)
    for i, (a, b, c) in enumerate(C):
        q = nV + 3 * i + np.arange(3)
        cells.append(q)
        parent.append(i)
        for (u, qu), (v, qv) in (((a, q[0]), (b, q[1])), ((b, q[1]), (c, q[2])), ((c, q[2]), (a, q[0]))):
            cells += [[u, v, qv], [u, qv, qu]]
            parent += [i, i]
    cells = np.asarray(cells)
    parent = np.asarray(parent)

    # quadrature and determinant samples on the refined cells
    RP = rv[cells]
    area = 0.5 * np.abs(
        (RP[:, 1, 0] - RP[:, 0, 0]) * (RP[:, 2, 1] - RP[:, 0, 1]) - (RP[:, 2, 0] - RP[:, 0, 0]) * (RP[:, 1, 1] - RP[:, 0, 1])
    )
    bary = np.vstack([_QUAD_BARY, np.eye(3)])
    X = np.einsum("qk,ckd->cqd", bary, RP)
    PHI = np.einsum("qk,ckd->cqd", bary, rval[cells])
    if cellwise:
        GX = np.broadcast_to(Gc[parent][:, None], (len(cells), len(bary), 3, 2))
    else:
        GX = as32(G(X.reshape(-1, 2))).reshape(len(cells), len(bary), 3, 2)
    GPX = np.einsum("cqij,cjk->cqik", GX, Psi[parent])
    dets_x = np.einsum("cqi,cqi->cq", wedge_columns(GPX), PHI)
    vals = W.evaluate(append_column(GPX, PHI))
    w0 = reduced_density_batch(W, GPX[:, :7])
    nq = len(_QUAD_W)
    energy = float(np.sum(area * (vals[:, :nq] @ _QUAD_W)))
    energy0 = float(np.sum(area * (w0 @ _QUAD_W)))
    cert = FiberCertificate(
        det_min=float(dets_x.min()),
        det_floor=1.0 / (3.0 * beta_t),
        beta_tilde=beta_t,
        energy=energy,
        energy_reduced=energy0,
        energy_excess=energy - energy0,
        eps=eps,
        wedge_min=wedge_min,
    )
    if cert.det_min < cert.det_floor:
        raise CertificateError(
            f"blended determinant {cert.det_min:.3g} below floor {cert.det_floor:.3g}; shrink the blending band"
        )
    return FiberField(rv, cells, rval, parent, cert)
