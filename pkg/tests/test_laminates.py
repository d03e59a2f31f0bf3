from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brittle_membrane.geometry import signed_area
from brittle_membrane.laminates import (
    REGIONS,
    LaminateParams,
    assemble_plurirectangle,
    classify_region,
    energy_identity,
    laminate_cells,
    laminate_energy,
    laminate_map,
    perturbed_direction,
    region_areas,
    region_polygons,
    region_table_csv,
    sigma_batch,
    sigma_canonical,
    sigma_eval,
    sigma_lp_bound,
    sigma_lp_integral,
    tag_areas,
    theta_eval,
    theta_gradient,
    two_point_limit,
)
from brittle_membrane.linalg import ContractError, gram_det
from brittle_membrane.pw_affine import aff_star_test, clarke_hull

KAPPA = 3 * 2 ** (-2 / 3)
A0 = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


def cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def w0_closed(M):
    g = gram_det(M)
    return float(np.sum(np.asarray(M) ** 2) + KAPPA * g ** (-1 / 3)) if g > 0 else np.inf


def test_classify_examples():
    assert classify_region((0.3, 0.5), 4, 0.5) == ("A-", 1)
    assert classify_region((0.0, 0.0), 4, 0.5) == ("B", 0)
    assert classify_region((0.3, 0.01), 4, 0.5) == ("B", 1)
    assert classify_region((1.0, 1.0), 4, 0.5)[1] == 3
    with pytest.raises(ContractError):
        classify_region((1.2, 0.5), 4, 0.5)


def test_sigma_examples():
    p = LaminateParams(A0, (1, 0), (0, 0, 1), 0.5, 4)
    assert sigma_eval(p, (0.3, 0.5)) == pytest.approx(-0.025, abs=1e-15)
    assert sigma_canonical((0.3, 0.01), 4, 0.5) == 0.0
    assert sigma_canonical((0.05, 0.99), 4, 0.5) == 0.0


@pytest.mark.parametrize("n,lam", [(3, 0.5), (4, 0.25), (8, 0.7), (5, 0.0), (5, 1.0)])
def test_areas_sum_to_one_exactly(n, lam):
    areas = region_areas(n, lam)
    assert n * sum(areas.values()) == 1
    assert sum(tag_areas(n, lam).values()) == Fraction(1)


@pytest.mark.parametrize("n,lam", [(4, 0.25), (7, 0.6)])
def test_area_formulas_match_polygons(n, lam):
    areas = region_areas(n, lam)
    for k in range(n):
        for r, poly in region_polygons(n, lam, k).items():
            assert abs(signed_area(poly)) == pytest.approx(float(areas[r]), abs=1e-15)


def test_classification_agrees_with_polygons():
    rng = np.random.default_rng(1)
    n, lam = 5, 0.35
    for x in rng.uniform(0, 1, (400, 2)):
        tag, k = classify_region(x, n, lam)
        poly = region_polygons(n, lam, k)[tag]
        # inside the closed polygon: all edge cross products >= 0 (ccw)
        m = len(poly)
        cr = [cross2(poly[(i + 1) % m] - poly[i], x - poly[i]) for i in range(m)]
        assert min(cr) >= -1e-15


def test_sigma_batch_matches_exact_classification():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (500, 2))
    got = sigma_batch(pts, 6, 0.4)
    want = [sigma_canonical(p, 6, 0.4) for p in pts]
    np.testing.assert_allclose(got, want, atol=1e-15)


def test_sigma_continuous_on_shared_boundaries():
    n, lam = 6, 0.3
    rng = np.random.default_rng(3)
    worst = 0.0
    for k in range(n):
        polys = region_polygons(n, lam, k)
        for r, poly in polys.items():
            m = len(poly)
            for i in range(m):
                a, b = poly[i], poly[(i + 1) % m]
                t = rng.uniform(0, 1, 25)[:, None]
                pts = a + t * (b - a)
                pts = np.clip(pts, 0, 1)
                # both one-sided branches: evaluate at tiny offsets on each side of the edge
                nrm = np.array([-(b - a)[1], (b - a)[0]])
                nrm /= np.linalg.norm(nrm)
                for p in pts:
                    vals = []
                    for s in (-1e-14, 1e-14):
                        q = np.clip(p + s * nrm, 0, 1)
                        vals.append(sigma_canonical(q, n, lam))
                    worst = max(worst, abs(vals[0] - vals[1]))
    assert worst <= 1e-13


def test_sigma_sup_bound():
    n, lam = 8, 0.3
    pts = np.random.default_rng(4).uniform(0, 1, (20_000, 2))
    assert np.max(np.abs(sigma_batch(pts, n, lam))) <= lam * (1 - lam) / n + 1e-16


def test_theta_vanishes_on_boundary():
    p = LaminateParams(A0, (1, 0), (0.2, 0.1, 1.0), 0.4, 7)
    t = np.linspace(0, 1, 101)
    edges = np.vstack([np.column_stack([t, 0 * t]), np.column_stack([t, 1 + 0 * t]),
                       np.column_stack([0 * t, t]), np.column_stack([1 + 0 * t, t])])
    assert np.max(np.abs(theta_eval(p, edges))) <= 1e-16


def test_perturbed_direction():
    np.testing.assert_array_equal(perturbed_direction(A0, [0, 0, 1], 5), [0, 0, 1])
    np.testing.assert_allclose(perturbed_direction(A0, [1, 0, 0], 10), [1, 0, 0.1])


def test_theta_gradient_table():
    p = LaminateParams(A0, (1, 0), (0.0, 0.0, 1.0), 0.5, 4)
    g = theta_gradient(p, (0.45, 0.5))  # A+ of strip 1
    np.testing.assert_allclose(g, 0.5 * np.outer([0, 0, 1], [1, 0]))
    np.testing.assert_array_equal(theta_gradient(p, (0.3, 0.01)), np.zeros((3, 2)))
    with pytest.raises(ContractError):
        theta_gradient(p, (0.375, 0.5))  # A-/A+ interface


def test_gradient_integral_vanishes():
    p = LaminateParams(A0, (0.6, 0.8), (0.3, -0.2, 1.0), 0.35, 9)
    grads = p.gradients()
    total = sum(float(a) * grads[t] for t, a in tag_areas(p.n, p.lam).items())
    assert np.max(np.abs(total)) <= 1e-14


def test_energy_constant_density():
    for n, lam in [(3, 0.1), (10, 0.5), (17, 0.9)]:
        p = LaminateParams(A0, (1, 0), (0, 0, 1), lam, n)
        assert laminate_energy(lambda M: 1.0, p).value == pytest.approx(1.0, abs=1e-15)


def test_energy_identity_termwise():
    p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, 8)
    assert abs(laminate_energy(w0_closed, p).value - energy_identity(w0_closed, p)) <= 1e-12


def test_energy_converges_like_one_over_n():
    res = []
    for n in (8, 16, 32, 64):
        p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, n)
        res.append(laminate_energy(w0_closed, p).value - two_point_limit(w0_closed, p))
    ratios = [b / a for a, b in zip(res, res[1:])]
    assert all(abs(r - 0.5) < 1e-9 for r in ratios)


def test_energy_infinite_density_reported():
    p = LaminateParams(A0, (1, 0), (-1.0, 0.0, 0.0), 0.5, 4)
    grads = p.gradients()

    def f(M):
        return np.inf if np.allclose(M, p.A + grads["minus"]) else 1.0

    e = laminate_energy(f, p)
    assert e.value == np.inf and "minus" in e.diagnostic


@pytest.mark.parametrize("p_exp", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("n", [4, 8, 16])
def test_lp_integral_closed_form_vs_quadrature(p_exp, n):
    lam = 0.35
    # independent route: 7-point rule on each region triangle (exact for the
    # polynomial cases p = 2, 3; sigma <= 0 so |sigma|^p is a polynomial),
    # approximate for p = 1.5
    from brittle_membrane.energy_density import _QUAD_BARY as bary, _QUAD_W as wts

    total = 0.0
    P = LaminateParams(A0, (1, 0), (0, 0, 1), lam, n)
    verts, cells, _ = laminate_cells(P)
    for tri in verts[cells]:
        area = 0.5 * abs(cross2(tri[1] - tri[0], tri[2] - tri[0]))
        q = bary @ tri
        total += area * np.sum(wts * np.abs(sigma_batch(np.clip(q, 0, 1), n, lam)) ** p_exp)
    exact = sigma_lp_integral(n, lam, p_exp)
    tol = 1e-12 if p_exp in (2.0, 3.0) else 2e-3
    assert total == pytest.approx(exact, rel=tol)
    assert exact <= sigma_lp_bound(n, lam, p_exp)


def test_laminate_map_is_aff_star():
    for n, ell in [(4, 1), (8, 3), (16, 10)]:
        p = LaminateParams(A0, (0.6, 0.8), (1.0, 0.0, 0.0), 0.4, n, ell=ell)
        m = laminate_map(p)
        assert m.is_continuous()
        assert m.triangulation.is_conforming()
        assert aff_star_test(m, 1e-6).passed


def test_clarke_hull_on_strip_boundary():
    p = LaminateParams(A0, (1, 0), (0.0, 0.0, 1.0), 0.5, 4)
    m = laminate_map(p)
    h = clarke_hull(m, (0.375, 0.5))
    g = p.gradients()
    for G in h.generators:
        assert any(np.allclose(G - A0, g[t]) for t in ("minus", "plus"))


def test_plurirectangle_single_square_reduces():
    p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, 8)
    asm = assemble_plurirectangle(p, np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), 0)
    assert len(asm.squares.sides) == 1 and asm.area_rest == pytest.approx(0.0)
    assert asm.energy(w0_closed)["total"] == pytest.approx(laminate_energy(w0_closed, p).value, abs=1e-14)


def test_plurirectangle_convergence_and_lp():
    p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, 8)
    V = np.array([[0, 0], [1, 0], [0.4, 0.9]])
    rests = []
    for q in (2, 3, 4, 5):
        asm = assemble_plurirectangle(p, V, q)
        e = asm.energy(w0_closed)
        cell = laminate_energy(w0_closed, p).value
        assert e["total"] == pytest.approx(asm.area_covered * cell + asm.area_rest * w0_closed(A0), rel=1e-14)
        rests.append(asm.area_rest)
        for pe in (1.5, 2, 3):
            assert asm.lp_norm_p(pe) <= asm.lp_bound_p(pe)
    assert all(b < a for a, b in zip(rests, rests[1:]))


def test_plurirectangle_field_matches_rescaling():
    p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, 5)
    asm = assemble_plurirectangle(p, np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), 1)
    x = np.array([[0.6, 0.3]])
    r = np.array([0.5, 0.0])
    want = 0.5 * sigma_canonical((x[0] - r) / 0.5, 5, 0.3) * p.b_ell
    np.testing.assert_allclose(asm(x)[0], want, atol=1e-16)


def test_plurirectangle_overlap_rejected():
    from brittle_membrane.laminates import Plurirectangle

    with pytest.raises(ContractError):
        Plurirectangle([[0, 0], [0.5, 0.5]], [1.0, 1.0])


def test_region_csv():
    p = LaminateParams(A0, (1, 0), (0.3, 0.1, 0.5), 0.3, 4)
    rows = region_table_csv(w0_closed, p).splitlines()
    assert rows[0] == "region,k,area,gradient_tag,f_value"
    assert len(rows) == 1 + 4 * len(REGIONS)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(3, 20), lam=st.floats(0.0, 1.0), x=st.floats(0, 1), y=st.floats(0, 1))
def test_sigma_bounds_property(n, lam, x, y):
    s = sigma_canonical((x, y), n, lam)
    assert -lam * (1 - lam) / n - 1e-15 <= s <= 1e-15
