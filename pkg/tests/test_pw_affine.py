import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from brittle_membrane.crack_geometry import CrackPath, build_crack_diffeo, identity_diffeo
from brittle_membrane.linalg import CertificateError, ContractError, gram_det
from brittle_membrane.pw_affine import (
    PwAffineMap,
    Triangulation,
    aff_star_test,
    clarke_hull,
    compose_with_diffeo,
    discretize_c1,
    grid_triangulation,
    hull_min_gram,
)

E12 = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


def affine_map(tri, G, o=(0.0, 0.0, 0.0)):
    return PwAffineMap.from_vertex_values(tri, tri.vertices @ np.asarray(G).T + np.asarray(o))


def paraboloid(x):
    return np.column_stack([x[:, 0], x[:, 1], x[:, 0] ** 2])


def paraboloid_grad(x):
    g = np.zeros((len(x), 3, 2))
    g[:, 0, 0] = 1
    g[:, 1, 1] = 1
    g[:, 2, 0] = 2 * x[:, 0]
    return g


def test_triangulation_orients_and_rejects_degenerate():
    t = Triangulation([[0, 0], [0, 1], [1, 0]], [[0, 1, 2]])
    assert t.areas[0] == pytest.approx(0.5)
    with pytest.raises(ContractError):
        Triangulation([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])


def test_grid_is_conforming():
    t = grid_triangulation((0, 1, 0, 2), 3, 4)
    assert t.is_conforming()
    assert t.total_area() == pytest.approx(2.0)
    assert all(len(c) <= 2 for c in t.adjacency.values())


def test_interpolation_exact_on_affine():
    t = grid_triangulation((0, 1, 0, 1), 5, 5)
    G = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
    m = affine_map(t, G, (1, 2, 3))
    np.testing.assert_allclose(m.G, np.broadcast_to(G, m.G.shape), atol=1e-13)
    x = np.random.default_rng(0).uniform(0, 1, (100, 2))
    np.testing.assert_allclose(m(x), x @ G.T + [1, 2, 3], atol=1e-13)
    assert m.is_continuous()


def test_dump_load_round_trip(tmp_path):
    t = grid_triangulation((0, 1, 0, 1), 2, 2)
    m = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    path = tmp_path / "map.pwa"
    m.dump(path)
    text = path.read_text().splitlines()
    assert text[0] == "pwa 1" and text[1].startswith("v ") and text[-1].startswith("c ")
    back = PwAffineMap.load(path)
    np.testing.assert_array_equal(back.G, m.G)
    np.testing.assert_array_equal(back.o, m.o)
    with pytest.raises(ContractError):
        PwAffineMap.loads("pwa 2\n")


def test_clarke_hull_counts_match_connectivity():
    t = grid_triangulation((0, 1, 0, 1), 4, 4)
    m = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    incident = np.bincount(t.cells.ravel(), minlength=len(t.vertices))
    for v in range(len(t.vertices)):
        assert len(clarke_hull(m, t.vertices[v])) == incident[v]
    # interior vertex of this diagonal grid touches 6 cells
    assert len(clarke_hull(m, (0.5, 0.5))) == 6
    assert len(clarke_hull(m, (0.1, 0.05))) == 1
    with pytest.raises(ContractError):
        clarke_hull(m, (2.0, 2.0))


def test_aff_star_single_cell():
    t = Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    m = affine_map(t, E12)
    c = aff_star_test(m, 1.0)
    assert c.min_gram_det == pytest.approx(1.0) and c.passed
    assert not aff_star_test(m, 1.01).passed


def test_aff_star_fold_fails():
    # two cells with gradients (e1, e2) and (e1, -e2): the hull contains (e1, 0)
    t = Triangulation([[0, 0], [1, 0], [0, 1], [0, -1]], [[0, 1, 2], [0, 3, 1]])
    G = np.array([E12, np.array([[1.0, 0], [0, -1], [0, 0]])])
    m = PwAffineMap(t, G, np.zeros((2, 3)))
    c = aff_star_test(m, 1e-6)
    assert not c.passed and c.min_gram_det <= 1e-12


def test_hull_min_matches_dense_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        gens = rng.normal(size=(3, 3, 2))
        val, w, M = hull_min_gram(gens)
        # oracle: dense barycentric grid at 1/120
        N = 120
        best = np.inf
        for i in range(N + 1):
            for j in range(N + 1 - i):
                ww = np.array([i, j, N - i - j]) / N
                best = min(best, gram_det(np.tensordot(ww, gens, axes=(0, 0))))
        assert val <= best + 1e-9
        assert val == pytest.approx(gram_det(M), abs=1e-14)


def test_aff_star_monotone_under_refinement():
    t = grid_triangulation((0, 1, 0, 1), 3, 3)
    m = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    tf = grid_triangulation((0, 1, 0, 1), 6, 6)
    mf = PwAffineMap.from_vertex_values(tf, m(tf.vertices))
    eta = 0.9 * aff_star_test(m, 0.0).min_gram_det
    assert aff_star_test(m, eta).passed
    assert aff_star_test(mf, eta).passed


def test_discretize_affine_exact():
    G = np.array([[1.0, 0.2], [0.0, 1.0], [0.3, -0.4]])
    w, rep = discretize_c1(lambda x: x @ G.T, lambda x: np.broadcast_to(G, (len(x), 3, 2)), (0, 1, 0, 1), 0.1, h0=0.5)
    assert rep.value_error <= 1e-14 and rep.gradient_error <= 1e-14
    np.testing.assert_allclose(w.G, np.broadcast_to(G, w.G.shape), atol=1e-14)


def test_discretize_paraboloid():
    w, rep = discretize_c1(paraboloid, paraboloid_grad, (0, 1, 0, 1), 0.1)
    assert rep.ok
    # independent check on fresh samples
    x = np.random.default_rng(11).uniform(0, 1, (10_000, 2))
    assert np.max(np.linalg.norm(w(x) - paraboloid(x), axis=1)) <= 0.1
    g = w.gradient(x)
    ok = ~np.isnan(g).any(axis=(1, 2))
    assert np.max(np.linalg.norm((g[ok] - paraboloid_grad(x[ok])).reshape(ok.sum(), -1), axis=1)) <= 0.1
    assert aff_star_test(w, 0.5).passed


def test_discretize_retries_exhausted():
    with pytest.raises(CertificateError, match="gradient error"):
        discretize_c1(paraboloid, paraboloid_grad, (0, 1, 0, 1), 1e-3, h0=1.0, max_retries=1)


def test_compose_identity_keeps_gradients():
    t = grid_triangulation((0, 1, 0, 1), 3, 3)
    w = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    u, _ = compose_with_diffeo(w, identity_diffeo((0, 1, 0, 1)), certify=False)
    x = np.random.default_rng(2).uniform(0, 1, (300, 2))
    np.testing.assert_allclose(u(x), w(x), atol=1e-14)
    assert u.triangulation.total_area() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize(
    "crack",
    [np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([[0.0, 0.0], [0.5, 0.3], [1.0, 0.0]])],
    ids=["straight", "bent"],
)
def test_compose_with_crack(crack):
    t = grid_triangulation((-0.5, 1.5, -0.5, 1.5), 6, 6)
    A = np.array([[1.0, 0.1], [0.0, 1.0], [0.3, 0.2]])
    w = affine_map(t, A)
    phi = build_crack_diffeo([CrackPath(crack)], 0.05)
    u, rep = compose_with_diffeo(w, phi)
    x = np.random.default_rng(4).uniform(-0.4, 1.4, (2000, 2))
    np.testing.assert_allclose(u(x), w(phi(x)), atol=1e-12)
    assert u.is_continuous()
    assert rep.phi_passed and rep.chain_holds
    assert rep.composite.passed
    assert rep.composite.eta == pytest.approx(rep.target)


def test_compose_gradient_chain_rule():
    t = grid_triangulation((-0.5, 1.5, -0.5, 1.5), 4, 4)
    w = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    phi = build_crack_diffeo([CrackPath(np.array([[0.0, 0.0], [1.0, 0.0]]))], 0.1)
    u, _ = compose_with_diffeo(w, phi, certify=False)
    x = np.array([[0.5, 0.05], [0.2, 0.02], [0.9, -0.3]])
    gu = u.gradient(x)
    want = np.einsum("nij,njk->nik", w.gradient(phi(x)), phi.jacobian(x))
    np.testing.assert_allclose(gu, want, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2), d=st.floats(-2, 2), e=st.floats(-2, 2), f=st.floats(-2, 2)
)
def test_single_gradient_hull_is_the_gradient(a, b, c, d, e, f):
    G = np.array([[a, d], [b, e], [c, f]])
    t = Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    m = affine_map(t, G)
    assert aff_star_test(m, 0.0).min_gram_det == pytest.approx(float(gram_det(G)), abs=1e-12)


def test_push_forward_inverts_the_crack_map():
    from brittle_membrane.pw_affine import push_forward

    t = grid_triangulation((-0.5, 1.5, -0.5, 1.5), 4, 4)
    u = PwAffineMap.from_vertex_values(t, paraboloid(t.vertices))
    phi = build_crack_diffeo([CrackPath(np.array([[0.0, 0.0], [1.0, 0.0]]))], 0.1)
    v, Psi = push_forward(u, phi)
    x = np.random.default_rng(8).uniform(-0.4, 1.4, (2000, 2))
    x = x[np.abs(x[:, 1]) > 1e-6]
    np.testing.assert_allclose(v(phi(x)), u(x), atol=1e-12)
    # grad v Psi recovers grad u cell by cell
    y = v.triangulation.points.mean(axis=1)
    back = np.einsum("cij,cjk->cik", v.G, Psi)
    np.testing.assert_allclose(back, u.gradient(phi.inverse(y)), atol=1e-12)
    assert v.triangulation.total_area() == pytest.approx(4.0 - 0.1**2 / 1.1 / 2, abs=1e-9)
