import math

import numpy as np
import pytest
from scipy.optimize import minimize, minimize_scalar

from brittle_membrane.energy_density import BuiltinOgden, ReducedDensity, reduced_density
from brittle_membrane.envelopes import (
    COARSE,
    LaminationSplit,
    SearchBudget,
    convex_minorant,
    default_cloud,
    ks_step,
    rank_one_envelope,
)
from brittle_membrane.linalg import ContractError, random_rotations, wedge_columns

E1, E2, E3 = np.eye(3)
OGDEN = BuiltinOgden(2.0, 1.0)
W0 = ReducedDensity(OGDEN)
KAPPA = 3 * 2 ** (-2 / 3)
SMALL = SearchBudget(angles=16, directions=32, radii=6, lambdas=9, polish=True)


def w0_closed(M):
    """For p=2, s=1 the transverse minimization is explicit:
    W0(M) = |M|^2 + 3 2^(-2/3) |M1 x M2|^(-2/3)."""
    M = np.asarray(M)
    w = np.linalg.norm(wedge_columns(M), axis=-1)
    with np.errstate(divide="ignore"):
        return np.sum(M * M, axis=(-2, -1)) + KAPPA * w ** (-2 / 3)


def test_closed_form_agrees_with_w0():
    A = np.random.default_rng(0).normal(size=(30, 3, 2))
    assert np.allclose(W0(A), w0_closed(A), rtol=1e-10)


def test_budget_zero_returns_f():
    A = np.column_stack([E1, 0.3 * E2 + 0.2 * E3])
    v, split = ks_step(W0, A, 0)
    assert v == W0(A) and split is None


def test_affine_density_no_gain():
    f = lambda M: np.sum(np.asarray(M) * np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]]), axis=(-2, -1)) + 7.0
    A = np.column_stack([E1, E2])
    v, split = ks_step(f, A, SMALL)
    assert v == pytest.approx(f(A), abs=1e-12)


def test_thin_strip_matches_chord_oracle():
    # At A=(e1, eps e2) the second column can be split along chords of the
    # circle |c| = r in the (e2, e3) plane, so one lamination reaches
    # min_r 1 + r^2 + kappa r^(-2/3) = 1 + 2 sqrt 2.
    A = np.column_stack([E1, 0.1 * E2])
    oracle = minimize_scalar(lambda r: 1 + r * r + KAPPA * r ** (-2 / 3), bounds=(0.1, 3), method="bounded").fun
    assert oracle == pytest.approx(1 + 2 * math.sqrt(2), abs=1e-9)
    v, _ = ks_step(W0, A)
    assert abs(v - oracle) <= 1e-3


def test_parallel_columns_finite_after_one_step():
    A = np.column_stack([E1, 2 * E1])
    assert W0(A) == math.inf
    # oracle: for A=(e1,2e1) a split b(x)a with b orthogonal to e1 gives
    # |A|^2 + lam(1-lam)|b|^2 + kappa |b sqrt5|^(-2/3) [(1-lam) lam^(-2/3) + lam (1-lam)^(-2/3)]
    def two_point(x):
        lam, beta = x
        if not (0 < lam < 1 and beta > 0):
            return math.inf
        c = math.sqrt(5) * beta
        return 5 + lam * (1 - lam) * beta**2 + KAPPA * ((1 - lam) * (lam * c) ** (-2 / 3) + lam * ((1 - lam) * c) ** (-2 / 3))

    oracle = min(minimize(two_point, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12}).fun for x0 in ([0.5, 1.0], [0.3, 2.0]))
    v, split = ks_step(W0, A)
    assert math.isfinite(v)
    assert abs(v - oracle) <= 5e-3


def test_split_children_average():
    s = LaminationSplit(np.array([0.6, 0.8]), np.array([1.0, -2.0, 0.5]), 0.3)
    A = np.arange(6.0).reshape(3, 2)
    lo, hi = s.children(A)
    assert np.allclose(0.7 * lo + 0.3 * hi, A)
    assert np.linalg.matrix_rank(hi - lo) == 1
    with pytest.raises(ContractError):
        LaminationSplit(np.array([1.0, 1.0]), np.zeros(3), 0.5)


def test_depth_one_below_w0():
    A = np.column_stack([E1 + 0.2 * E3, 0.3 * E2])
    r = rank_one_envelope(W0, A, 1, budget=SMALL)
    assert r.value <= W0(A)
    assert r.lower_bound <= r.value + 1e-12


def test_tree_invariant():
    A = np.column_stack([E1, 0.1 * E2])
    r = rank_one_envelope(W0, A, 2, tol=-1, budget=COARSE)

    def check(node):
        if node.is_leaf:
            assert node.value == pytest.approx(float(W0(node.matrix)), rel=1e-12)
            return
        l, h = node.children
        assert node.value == pytest.approx((1 - node.split.lam) * l.value + node.split.lam * h.value, rel=1e-12)
        check(l)
        check(h)

    check(r.tree)
    leaves = r.tree.leaves()
    assert sum(w for _, w, _ in leaves) == pytest.approx(1.0)
    assert np.allclose(sum(w * m for m, w, _ in leaves), A, atol=1e-12)


def test_monotone_in_depth_independent_runs():
    rng = np.random.default_rng(21)
    for _ in range(3):
        A = rng.normal(size=(3, 2))
        vals = [rank_one_envelope(W0, A, d, tol=-1, budget=COARSE).value for d in (1, 2, 3)]
        assert vals[1] <= vals[0] + 1e-9 and vals[2] <= vals[1] + 1e-9


def test_dominance_and_coercivity_on_sample():
    rng = np.random.default_rng(22)
    for _ in range(8):
        A = rng.normal(size=(3, 2))
        r = rank_one_envelope(W0, A, 1, budget=COARSE)
        assert r.lower_bound <= r.value + 1e-12
        assert r.value <= W0(A)
        assert r.value >= OGDEN.C1 * np.sum(A * A) ** (OGDEN.p / 2) - 1 / OGDEN.C1


def test_frame_indifference_of_envelope():
    A = np.column_stack([E1, 0.1 * E2])
    R = random_rotations(np.random.default_rng(3), 2)
    base = ks_step(W0, A)[0]
    for Q in R:
        assert abs(ks_step(W0, Q @ A)[0] - base) <= 2e-3


def test_convex_minorant_convex_regime():
    A = 5 * np.column_stack([E1, E2])
    v = convex_minorant(W0, A, default_cloud(A))
    assert abs(v - W0(A)) <= 1e-2
    assert v <= W0(A) + 1e-9


def test_convex_minorant_degenerate_cloud():
    A = np.column_stack([E1, E2])
    with pytest.raises(ContractError):
        convex_minorant(W0, A, A[None])
    # cloud on a line through A is affinely degenerate too
    line = A[None] + np.linspace(-1, 1, 20)[:, None, None] * np.column_stack([E3, E3])[None]
    with pytest.raises(ContractError):
        convex_minorant(W0, A, line)


def test_scalar_density_accepted():
    # envelopes accept a non-batched density
    f = lambda M: reduced_density(OGDEN, M)
    A = np.column_stack([E1, E2])
    v, _ = ks_step(f, A, SearchBudget(angles=2, directions=4, radii=1, lambdas=3, polish=False))
    assert v == pytest.approx(W0(A), abs=1e-8)


def test_requires_positive_depth():
    with pytest.raises(ContractError):
        rank_one_envelope(W0, np.column_stack([E1, E2]), 0)
