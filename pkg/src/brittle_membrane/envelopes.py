"""Rank-one convexification of a membrane density by lamination.

One lamination step replaces ``f(A)`` by the best two-point average

    (1 - lam) f(A - lam b (x) a) + lam f(A + (1 - lam) b (x) a)

over unit ``a`` in the plane, ``b`` in R^3 and ``lam`` in [0, 1]. Iterating
gives the decreasing sequence ``R_0 f = f >= R_1 f >= ...`` whose infimum is
the rank-one convex envelope. Values here are upper bounds obtained by a
finite search; a convex minorant built from sampled points gives the lower
end of a bracket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.stats import qmc

from .linalg import ContractError, ExtReal, as32, outer


@dataclass(frozen=True)
class LaminationSplit:
    a: np.ndarray
    b: np.ndarray
    lam: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if abs(np.linalg.norm(a) - 1.0) > 1e-12:
            raise ContractError("lamination normal must be a unit vector")
        if not 0.0 <= self.lam <= 1.0:
            raise ContractError("lamination weight must lie in [0, 1]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))

    def children(self, A):
        """The two matrices averaged by the split: ``A - lam b(x)a`` and
        ``A + (1 - lam) b(x)a``."""
        ba = outer(self.b, self.a)
        A = as32(A)
        return A - self.lam * ba, A + (1.0 - self.lam) * ba


@dataclass
class LaminationTree:
    """Binary tree of splits; leaves carry values of the base density."""

    matrix: np.ndarray
    depth: int
    value: float
    split: LaminationSplit | None = None
    children: tuple = ()

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    def leaves(self):
        """Leaf matrices with their weights; the weighted leaf average is the
        root matrix and the weighted leaf values average to the root value."""
        if self.is_leaf:
            return [(self.matrix, 1.0, self.value)]
        lam = self.split.lam
        out = [(m, (1 - lam) * w, v) for m, w, v in self.children[0].leaves()]
        out += [(m, lam * w, v) for m, w, v in self.children[1].leaves()]
        return out

    def translated(self, D, f) -> "LaminationTree":
        """Same splits rooted at ``matrix + D``; leaf values recomputed with
        ``f`` (one batched call)."""
        leaves = []

        def shift(node):
            m = node.matrix + D
            if node.is_leaf:
                leaves.append(m)
                return LaminationTree(m, 0, math.nan)
            return LaminationTree(m, node.depth, math.nan, node.split, tuple(shift(c) for c in node.children))

        root = shift(self)
        vals = iter(np.atleast_1d(f(np.stack(leaves))))

        def fill(node):
            if node.is_leaf:
                node.value = float(next(vals))
            else:
                for c in node.children:
                    fill(c)
                lam = node.split.lam
                node.value = _combine(node.children[0].value, node.children[1].value, lam)
            return node

        return fill(root)


def _combine(left, right, lam):
    if lam == 0.0:
        return left
    if lam == 1.0:
        return right
    return (1 - lam) * left + lam * right


@dataclass(frozen=True)
class SearchBudget:
    """Grid sizes for one lamination step.

    ``a`` takes ``angles`` values on the half circle (the sign is carried by
    ``b``); ``b`` takes ``directions`` quasi-uniform directions times
    ``radii`` lengths ``radius * 2^-j``; ``lam`` takes the interior points of
    a uniform grid with ``lambdas`` nodes. ``top_k`` is the number of
    screened candidates expanded recursively at depth two and beyond.
    """

    angles: int = 32
    directions: int = 64
    radii: int = 8
    radius: float = 8.0
    lambdas: int = 17
    polish: bool = True
    top_k: int = 4

    @property
    def size(self) -> int:
        return self.angles * self.directions * self.radii * max(self.lambdas - 2, 0)


NO_SEARCH = SearchBudget(0, 0, 0, 0.0, 0, False, 0)
COARSE = SearchBudget(angles=8, directions=16, radii=4, lambdas=9, polish=False, top_k=3)


def _sphere(n):
    """Fibonacci points on the unit sphere."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _grid(budget: SearchBudget):
    th = np.pi * np.arange(budget.angles) / budget.angles
    a = np.column_stack([np.cos(th), np.sin(th)])
    b = (budget.radius * 2.0 ** -np.arange(budget.radii))[:, None, None] * _sphere(budget.directions)[None]
    b = b.reshape(-1, 3)
    lam = np.linspace(0, 1, budget.lambdas)[1:-1]
    ia, ib, il = np.meshgrid(np.arange(len(a)), np.arange(len(b)), np.arange(len(lam)), indexing="ij")
    return a[ia.ravel()], b[ib.ravel()], lam[il.ravel()]


def batched(f: Callable) -> Callable:
    """Wrap a density so it accepts stacks ``(N, 3, 2)``."""
    if getattr(f, "_is_batched", False):
        return f

    def g(A):
        A = np.asarray(A, dtype=float)
        try:
            out = np.asarray(f(A), dtype=float)
            if out.shape == A.shape[:-2]:
                return out
        except Exception:
            pass
        flat = A.reshape(-1, 3, 2)
        return np.array([float(f(m)) for m in flat]).reshape(A.shape[:-2])

    g._is_batched = True
    return g


def _two_point(f, A, a, b, lam):
    ba = b[:, :, None] * a[:, None, :]
    lo = A[None] - lam[:, None, None] * ba
    hi = A[None] + (1 - lam)[:, None, None] * ba
    vals = f(np.concatenate([lo, hi]))
    n = len(lam)
    with np.errstate(invalid="ignore"):
        out = (1 - lam) * vals[:n] + lam * vals[n:]
    return np.where(np.isnan(out), np.inf, out)


def _screen(f, A, budget):
    a, b, lam = _grid(budget)
    return a, b, lam, _two_point(f, A, a, b, lam)


def _polish(f, A, split: LaminationSplit, value: float):
    a0, b0, l0 = split.a, split.b, split.lam
    th0 = math.atan2(a0[1], a0[0])
    x0 = np.array([th0, *b0, math.log(l0 / (1 - l0))])

    def unpack(x):
        a = np.array([math.cos(x[0]), math.sin(x[0])])
        lam = 1.0 / (1.0 + math.exp(-np.clip(x[4], -40, 40)))
        return a, x[1:4], lam

    def obj(x):
        a, b, lam = unpack(x)
        if not 0 < lam < 1:
            return math.inf
        return float(_two_point(f, A, a[None], b[None], np.array([lam]))[0])

    h = np.array([0.05, *(0.05 * max(np.linalg.norm(b0), 1e-3) * np.ones(3)), 0.5])
    simplex = np.vstack([x0, x0 + np.diag(h)])
    res = minimize(obj, x0, method="Nelder-Mead", options={"initial_simplex": simplex, "maxfev": 400, "xatol": 1e-9, "fatol": 1e-12})
    if res.fun < value:
        a, b, lam = unpack(res.x)
        return LaminationSplit(a, b, lam), float(res.fun)
    return split, value


def ks_step(f: Callable, A, budget: SearchBudget | int = SearchBudget()):
    """One lamination step at ``A``.

    Returns ``(value, split)``; ``split`` is None when no candidate beats
    ``f(A)`` (the ``lam = 0`` split). A budget of 0 skips the search.
    """
    fb = batched(f)
    A = as32(A)
    base = float(fb(A[None])[0])
    if isinstance(budget, int):
        if budget != 0:
            raise ContractError("integer budgets other than 0 are not meaningful")
        budget = NO_SEARCH
    if budget.size == 0:
        return ExtReal(base), None
    a, b, lam, vals = _screen(fb, A, budget)
    k = int(np.argmin(vals))
    if not vals[k] < base:
        return ExtReal(base), None
    split, value = LaminationSplit(a[k], b[k], float(lam[k])), float(vals[k])
    if budget.polish:
        split, value = _polish(fb, A, split, value)
    return ExtReal(value), split


@dataclass
class EnvelopeResult:
    value: ExtReal
    depth_used: int
    lower_bound: float
    tree: LaminationTree = field(repr=False)
    history: list = field(default_factory=list)


class _Recursion:
    """Memoized evaluation of ``R_i`` at arbitrary matrices.

    The memo is keyed on the matrix rounded to ``quantum``. A hit at a nearby
    but different matrix reuses the cached lamination tree translated to
    the query point, with leaf values recomputed, so every returned value is
    still an honest upper bound at the query matrix.
    """

    def __init__(self, f, root_budget, inner_budget, quantum=1e-4):
        self.f = f
        self.root_budget = root_budget
        self.inner_budget = inner_budget
        self.quantum = quantum
        self.memo: dict = {}

    def key(self, i, A):
        return (i, tuple(np.round(A.ravel() / self.quantum).astype(np.int64)))

    def __call__(self, i, A, root=False) -> LaminationTree:
        k = self.key(i, A)
        hit = self.memo.get(k)
        if hit is not None:
            if np.array_equal(hit.matrix, A):
                return hit
            moved = hit.translated(A - hit.matrix, self.f)
            if math.isfinite(moved.value):
                return moved
        node = self._compute(i, A, root)
        self.memo[k] = node
        return node

    def _compute(self, i, A, root):
        if i == 0:
            return LaminationTree(A, 0, float(self.f(A[None])[0]))
        base = self(i - 1, A, root)
        budget = self.root_budget if root else self.inner_budget
        if budget.size == 0:
            return base
        if i == 1:
            value, split = ks_step(self.f, A, budget)
            if split is None or not value < base.value:
                return base
            lo, hi = split.children(A)
            kids = (self(0, lo), self(0, hi))
            return LaminationTree(A, 1, _combine(kids[0].value, kids[1].value, split.lam), split, kids)

        a, b, lam, vals = _screen(self.f, A, budget)
        order = np.argsort(vals, kind="stable")[: budget.top_k]
        cands = [LaminationSplit(a[j], b[j], float(lam[j])) for j in order if math.isfinite(vals[j])]
        if base.split is not None:
            cands.append(base.split)
        best = base
        for split in cands:
            lo, hi = split.children(A)
            kids = (self(i - 1, lo), self(i - 1, hi))
            v = _combine(kids[0].value, kids[1].value, split.lam)
            if v < best.value:
                best = LaminationTree(A, i, v, split, kids)
        return best


def rank_one_envelope(
    W0: Callable,
    A,
    max_depth: int,
    tol: float = 0.0,
    *,
    budget: SearchBudget = SearchBudget(),
    inner_budget: SearchBudget = COARSE,
    cloud=None,
) -> EnvelopeResult:
    """Upper bound for the rank-one envelope of ``W0`` at ``A``.

    Depth ``i`` values are computed for ``i = 1 .. max_depth`` and each is
    at most the previous one. The loop stops early once an iteration
    improves by ``tol`` or less. Children of a split are evaluated at depth
    ``i - 1`` with ``inner_budget``; at depth two and beyond the candidate
    splits are pre-screened with ``W0`` itself and only the best
    ``top_k`` are expanded.

    ``lower_bound`` is :func:`convex_minorant` over a default cloud around
    ``A`` together with the leaves of the lamination tree, so it never
    exceeds ``value``.
    """
    if max_depth < 1:
        raise ContractError("max_depth must be at least 1")
    f = batched(W0)
    A = as32(A).copy()
    rec = _Recursion(f, budget, inner_budget)
    prev = rec(0, A, root=True)
    history = [prev.value]
    used = 0
    for i in range(1, max_depth + 1):
        node = rec(i, A, root=True)
        history.append(node.value)
        used = i
        improved = prev.value - node.value if math.isfinite(prev.value) else math.inf
        prev = node
        if not improved > tol:
            break
    lower = convex_minorant(f, A, default_cloud(A, prev))
    return EnvelopeResult(ExtReal(prev.value), used, lower, prev, history)


def default_cloud(A, tree: LaminationTree | None = None, count: int = 128, seed: int = 0):
    """``A``, a scrambled Sobol cloud in the box ``A +- (0.5 + 0.25|A|)``
    and (if given) the leaves of a lamination tree."""
    A = as32(A)
    r = 0.5 + 0.25 * float(np.linalg.norm(A))
    u = qmc.Sobol(d=6, scramble=True, seed=seed).random(count)
    pts = A[None] + r * (2 * u - 1).reshape(-1, 2, 3).transpose(0, 2, 1)
    parts = [A[None], pts]
    if tree is not None:
        parts.append(np.stack([m for m, _, _ in tree.leaves()]))
    return np.concatenate(parts)


def convex_minorant(W0: Callable, A, sample_cloud) -> float:
    """Lower convex hull of the sampled graph of ``W0``, evaluated at ``A``.

    Solves ``min sum mu_k W0(M_k)`` over ``mu >= 0``, ``sum mu_k = 1``,
    ``sum mu_k M_k = A`` with HiGHS. Points where ``W0`` is infinite are
    dropped. Raises ``ContractError`` if the finite points do not span an
    affine 6-dimensional set or ``A`` is outside their hull.
    """
    A = as32(A)
    M = as32(sample_cloud).reshape(-1, 3, 2)
    vals = batched(W0)(M)
    keep = np.isfinite(vals)
    M, vals = M[keep], vals[keep]
    if len(M) < 7:
        raise ContractError("sample cloud too small for a 6-dimensional hull")
    X = M.reshape(len(M), 6)
    if np.linalg.matrix_rank(X[1:] - X[0], tol=1e-10) < 6:
        raise ContractError("sample cloud is affinely degenerate")
    A_eq = np.vstack([X.T, np.ones(len(X))])
    b_eq = np.concatenate([A.reshape(6), [1.0]])
    res = linprog(vals, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ContractError(f"matrix is not inside the sample hull ({res.message})")
    return float(res.fun)
