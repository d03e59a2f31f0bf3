import math
import types

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from brittle_membrane.energy_density import (
    BuiltinOgden,
    StoredEnergy,
    beta_box,
    check_hypotheses,
    energy_from_config,
    fiber_field,
    minimize_fiber,
    parse_energy,
    reduced_density,
    reduced_density_batch,
)
from brittle_membrane.linalg import (
    ContractError,
    append_column,
    det3,
    frob,
    random_rotations,
    wedge_columns,
)

E1, E2, E3 = np.eye(3)
ID32 = np.column_stack([E1, E2])
OGDEN = BuiltinOgden(2.0, 1.0)
W0_IDENTITY = 2.0 + 3.0 * 2.0 ** (-2.0 / 3.0)  # 3.8898815748423097


def ogden_w0_oracle(A, p=2.0, s=1.0):
    """Independent route for the built-in family: the optimal transverse
    vector is parallel to the wedge, so W0 is a 1-D convex minimization."""
    a2 = float(np.sum(np.asarray(A) ** 2))
    w = float(np.linalg.norm(wedge_columns(A)))
    res = minimize_scalar(
        lambda u: (a2 + math.exp(2 * u)) ** (p / 2) + (math.exp(u) * w) ** (-s),
        bracket=(-3.0, 0.0, 3.0),
        tol=1e-12,
    )
    return res.fun


def test_closed_form_value():
    assert ogden_w0_oracle(ID32) == pytest.approx(W0_IDENTITY, abs=1e-12)
    assert reduced_density(OGDEN, ID32) == pytest.approx(W0_IDENTITY, abs=1e-9)


def test_closed_form_grid_cross_check():
    g = np.linspace(-3, 3, 61)
    X = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    vals = OGDEN.evaluate(append_column(ID32[None], X))
    # the grid never beats the minimum and gets within grid resolution of it
    assert vals.min() >= W0_IDENTITY - 1e-12
    assert vals.min() - W0_IDENTITY < 0.05


def test_parallel_columns_infinite():
    fm = minimize_fiber(OGDEN, np.column_stack([E1, 2 * E1]))
    assert fm.value == math.inf and fm.degenerate
    assert minimize_fiber(OGDEN, np.column_stack([E1, E1 + 1e-12 * E2])).degenerate


def test_frame_indifference_of_w0():
    rng = np.random.default_rng(5)
    R = random_rotations(rng, 5)
    for k in range(5):
        A = rng.normal(size=(3, 2))
        assert reduced_density(OGDEN, R[k] @ A) == pytest.approx(reduced_density(OGDEN, A), abs=1e-8)


def test_scalar_and_batch_routes_agree_with_oracle():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(20, 3, 2))
    batch = reduced_density_batch(OGDEN, A)
    for k in range(20):
        ref = ogden_w0_oracle(A[k])
        assert batch[k] == pytest.approx(ref, rel=1e-10)
        assert reduced_density(OGDEN, A[k]) == pytest.approx(ref, rel=1e-8)


def test_batch_generic_polish_route():
    # same energy without the normal-fiber hint forces the compass polish
    generic = StoredEnergy(OGDEN._ogden, 2.0, 1.0, OGDEN.growth, batched=True)
    A = np.random.default_rng(8).normal(size=(10, 3, 2))
    assert np.allclose(reduced_density_batch(generic, A), reduced_density_batch(OGDEN, A), rtol=1e-8)


def test_w0_is_infimum_over_box_samples():
    rng = np.random.default_rng(9)
    for _ in range(5):
        A = rng.normal(size=(3, 2))
        v = reduced_density(OGDEN, A)
        xi = rng.normal(size=(2000, 3)) * 2
        assert np.all(OGDEN.evaluate(append_column(A[None], xi)) >= v - 1e-9)


def test_w0_coercive_and_growth():
    rng = np.random.default_rng(10)
    A = rng.normal(size=(200, 3, 2)) * 2
    v = reduced_density_batch(OGDEN, A)
    n = frob(A) ** OGDEN.p
    assert np.all(v >= OGDEN.C1 * n - 1 / OGDEN.C1)
    wn = np.linalg.norm(wedge_columns(A), axis=1)
    for delta in (1e-2, 1e-1, 1.0):
        m = wn >= delta
        assert np.all(v[m] <= OGDEN.growth(delta) * (1 + n[m]))


def test_check_hypotheses_ogden_clean():
    rep = check_hypotheses(OGDEN, 1000, seed=0)
    assert rep.ok
    assert rep.coercivity_violations == rep.barrier_violations == 0
    assert all(v == 0 for v in rep.growth_violations.values())
    assert all(c > 0 for c in rep.growth_checked.values())


def test_check_hypotheses_no_barrier():
    quad = StoredEnergy(lambda F: float(np.sum(F * F)), 2.0, 1.0, lambda d: 1.0)
    rep = check_hypotheses(quad, 1000, seed=0)
    assert rep.barrier_violations > 0


def test_check_hypotheses_identity_rotation():
    rep = check_hypotheses(OGDEN, 200, seed=1, rotations=np.eye(3))
    assert rep.frame_residual == 0.0


def test_check_hypotheses_rejects_zero_samples():
    with pytest.raises(ContractError):
        check_hypotheses(OGDEN, 0, seed=0)


def test_energy_config_grammar():
    W = energy_from_config({"family": "ogden", "p": 2.0, "s": 1.0})
    assert W.p == 2.0 and W.s == 1.0
    assert parse_energy("ogden:p=3,s=0.5").s == 0.5
    with pytest.raises(ContractError):
        energy_from_config({"family": "neo"})
    with pytest.raises(ContractError):
        parse_energy("ogden:p")


def test_ogden_values():
    assert OGDEN(np.eye(3)) == pytest.approx(4.0)
    assert OGDEN(np.diag([1, 1, -1])) == math.inf
    assert OGDEN(np.zeros((3, 3))) == math.inf


@pytest.fixture(scope="module")
def box_unit():
    return beta_box(OGDEN, 1.0, math.sqrt(2.0))


def test_beta_box_closed_form_part(box_unit):
    assert box_unit.beta1 == pytest.approx(math.sqrt(10.0), abs=1e-12)
    assert box_unit.beta >= math.sqrt(10.0)


def test_beta_box_covers_near_minimizers(box_unit):
    # A in the set: isometric immersions; probe the sublevel set W0 + 1
    rng = np.random.default_rng(4)
    R = random_rotations(rng, 4)
    for k in range(4):
        A = R[k][:, :2]
        v = reduced_density(OGDEN, A)
        xi = rng.normal(size=(20000, 3)) * 2.5
        F = append_column(A[None], xi)
        near = OGDEN.evaluate(F) <= v + 1
        assert near.any()
        assert np.all(np.linalg.norm(xi[near], axis=1) <= box_unit.beta)
        assert np.all(det3(F[near]) >= 1 / box_unit.beta)


def test_beta_box_empty_set():
    with pytest.raises(ContractError):
        beta_box(OGDEN, 1.0, 1.0)


def test_beta_monotone_in_alpha():
    betas = [beta_box(OGDEN, a, 2.0, samples=16).beta for a in (0.25, 0.5, 1.0, 2.0)]
    assert all(b1 >= b2 for b1, b2 in zip(betas, betas[1:]))


def test_w0_in_box_matches_unconstrained(box_unit):
    assert reduced_density(OGDEN, ID32, box_unit) == pytest.approx(W0_IDENTITY, abs=1e-9)


def _square(n=1):
    g = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    V = np.column_stack([X.ravel(), Y.ravel()])
    cells = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = i * (n + 1) + j, (i + 1) * (n + 1) + j, (i + 1) * (n + 1) + j + 1, i * (n + 1) + j + 1
            cells += [[a, b, c], [a, c, d]]
    return types.SimpleNamespace(vertices=V, cells=np.array(cells))


def const_field(A):
    return lambda x: np.broadcast_to(A, (len(x), 3, 2))


def test_fiber_field_single_matrix():
    mesh = _square(1)
    ff = fiber_field(OGDEN, const_field(ID32), mesh, np.eye(2), 0.0)
    zeta = minimize_fiber(OGDEN, ID32).zeta
    assert np.allclose(ff.values, zeta, atol=1e-7)
    assert abs(ff.certificate.energy_excess) < 1e-9
    assert np.allclose(ff([0.3, 0.6]), zeta, atol=1e-7)


def test_fiber_field_two_cells_det_floor():
    eps = 0.05
    mesh = _square(1)
    Psi = np.array([np.diag([1 + eps, 1.0]), np.diag([1 - eps, 1.0])])
    ff = fiber_field(OGDEN, const_field(ID32), mesh, Psi, eps)
    c = ff.certificate
    assert c.passed
    assert c.det_min >= (1 - eps) / ((1 + eps) * c.beta_tilde)
    assert c.det_min >= 1 / (3 * c.beta_tilde)


def test_fiber_field_energy_excess_four_cells():
    eps = 0.05
    mesh = _square(1)
    # split into four triangles around the centre
    mesh = types.SimpleNamespace(
        vertices=np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]),
        cells=np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]),
    )
    Psi = np.array([np.diag([1 + eps, 1]), np.diag([1, 1 - eps]), [[1, eps], [0, 1]], np.diag([1 - eps, 1 + eps])])
    A = np.array([[1.0, 0.2], [0.1, 0.9], [0.3, 0.0]])
    ff = fiber_field(OGDEN, const_field(A), mesh, Psi, eps)
    # oracle: per-cell W0 from the scalar route times cell area (0.25 each)
    oracle = sum(0.25 * reduced_density(OGDEN, A @ P) for P in Psi)
    assert ff.certificate.energy_reduced == pytest.approx(oracle, rel=1e-8)
    assert 0 <= ff.certificate.energy - oracle <= eps
    assert ff.certificate.passed


def test_fiber_field_continuous():
    eps = 0.04
    mesh = _square(2)
    rng = np.random.default_rng(2)
    Psi = np.eye(2) + rng.uniform(-0.01, 0.01, size=(len(mesh.cells), 2, 2))

    def G(x):
        x = np.asarray(x)
        out = np.zeros((len(x), 3, 2))
        out[:, 0, 0] = 1 + 0.1 * x[:, 0]
        out[:, 1, 1] = 1
        out[:, 2, 0] = 0.2 * x[:, 1]
        return out

    ff = fiber_field(OGDEN, G, mesh, Psi, eps)
    # field values on both sides of a shared edge agree
    p = np.array([0.25, 0.25]) + 1e-9 * np.array([1, -1])
    q = np.array([0.25, 0.25]) - 1e-9 * np.array([1, -1])
    assert np.allclose(ff(p), ff(q), atol=1e-6)


def test_fiber_field_rejects_large_eps():
    with pytest.raises(ContractError):
        fiber_field(OGDEN, const_field(ID32), _square(1), np.eye(2), 0.6)
    with pytest.raises(ContractError):
        fiber_field(OGDEN, const_field(ID32), _square(1), 1.2 * np.eye(2), 0.1)
