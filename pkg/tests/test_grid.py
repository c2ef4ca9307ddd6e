import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hat
from pecem.assembly import p1_geometry
from pecem.grid import StructuredGrid, build_grid_pair, coarse_hat_functions


def test_example_sizes():
    gp = build_grid_pair(10, 10)
    assert (gp.fine.n_x, gp.fine.n_y) == (100, 100)
    assert (gp.coarse.n_x, gp.coarse.n_y) == (10, 10)
    assert gp.H == pytest.approx(0.1)


def test_smallest_pair_counts():
    gp = build_grid_pair(2, 2)
    assert gp.fine.n_x == 4
    assert gp.fine.n_nodes == 25
    assert gp.fine.n_triangles == 32
    assert gp.fine.triangles.shape == (32, 3)


def test_coarse_edges_are_unions_of_fine_edges():
    gp = build_grid_pair(3, 4)
    assert gp.fine.n_x == 12
    g = gp.fine
    edges = {tuple(sorted(e)) for t in g.triangles for e in ((t[0], t[1]), (t[1], t[2]), (t[0], t[2]))}
    X = g.nodes
    H = gp.H
    for horizontal in (True, False):
        for line in range(4):
            for seg in range(3):
                on = []
                for a, b in edges:
                    pa, pb = X[a], X[b]
                    fixed, free = (1, 0) if horizontal else (0, 1)
                    if (np.isclose(pa[fixed], line * H) and np.isclose(pb[fixed], line * H)
                            and seg * H - 1e-12 <= min(pa[free], pb[free])
                            and max(pa[free], pb[free]) <= (seg + 1) * H + 1e-12):
                        on.append(abs(pa[free] - pb[free]))
                assert len(on) == 4
                assert sum(on) == pytest.approx(H)


@pytest.mark.parametrize("n", [(1, 1), (3, 5), (7, 2)])
def test_positive_areas(n):
    g = StructuredGrid(*n)
    assert np.all(g.signed_areas() > 0)
    assert g.n_nodes == (n[0] + 1) * (n[1] + 1)


@pytest.mark.parametrize("args", [(1, 4), (4, 1), (0, 3), (3, -2)])
def test_rejects_small_sizes(args):
    with pytest.raises(ValueError):
        build_grid_pair(*args)


def test_oversample_interior_block():
    gp = build_grid_pair(10, 2)
    i = 5 * 10 + 5
    os = gp.oversample(i, 1)
    expect = sorted((5 + dy) * 10 + 5 + dx for dy in (-1, 0, 1) for dx in (-1, 0, 1))
    assert list(os.elements) == expect


def test_oversample_corner_clipped():
    gp = build_grid_pair(10, 2)
    os = gp.oversample(0, 2)
    assert list(os.elements) == sorted(y * 10 + x for y in range(3) for x in range(3))


def test_oversample_zero_layers_is_element():
    gp = build_grid_pair(4, 3)
    os = gp.oversample(6, 0)
    assert list(os.elements) == [6]
    # interior fine nodes of a single element: (r-1)^2
    assert os.node_set.size == (3 - 1) ** 2


def test_oversample_whole_domain():
    gp = build_grid_pair(4, 3)
    os = gp.oversample(5, 10)
    assert list(os.elements) == list(range(16))
    assert np.array_equal(os.node_set, gp.fine.interior_nodes)


def test_oversample_monotone():
    gp = build_grid_pair(6, 2)
    prev = gp.oversample(14, 0).node_set
    for ell in range(1, 8):
        cur = gp.oversample(14, ell).node_set
        assert set(prev) <= set(cur)
        if prev.size == gp.fine.interior_nodes.size:
            assert cur.size == prev.size
        else:
            assert cur.size > prev.size
        prev = cur


def test_oversample_bad_index():
    gp = build_grid_pair(3, 2)
    with pytest.raises(IndexError):
        gp.oversample(9, 1)
    with pytest.raises(ValueError):
        gp.oversample(0, -1)


def test_hats_lagrange_property():
    gp = build_grid_pair(4, 3)
    chi = coarse_hat_functions(gp).toarray()
    c = gp.coarse
    for k in range(c.n_nodes):
        x, y = c.nodes[k]
        f = gp.fine.node_index(round(x * gp.fine.n_x), round(y * gp.fine.n_y))
        row = chi[f]
        assert row[k] == pytest.approx(1.0)
        assert np.count_nonzero(np.abs(row) > 1e-14) == 1


def test_hats_partition_of_unity_and_bounds(rng):
    gp = build_grid_pair(5, 4)
    chi = coarse_hat_functions(gp)
    nodes = rng.choice(gp.fine.n_nodes, 20, replace=False)
    assert np.allclose(np.asarray(chi[nodes].sum(axis=1)).ravel(), 1.0, atol=1e-12)
    d = chi.toarray()
    assert d.min() >= -1e-15 and d.max() <= 1 + 1e-15


def test_hats_match_analytic_hat():
    gp = build_grid_pair(3, 4)
    chi = coarse_hat_functions(gp).toarray()
    X = gp.fine.nodes
    for k, (xc, yc) in enumerate(gp.coarse.nodes):
        assert np.allclose(chi[:, k], hat(xc, yc, gp.H)(X[:, 0], X[:, 1]), atol=1e-14)


def test_hat_gradient_bound():
    gp = build_grid_pair(4, 4)
    chi = coarse_hat_functions(gp).toarray()
    _, G = p1_geometry(gp.fine)
    tri = gp.fine.triangles
    grads = np.einsum("tad,tak->tkd", G, chi[tri])
    mag = np.linalg.norm(grads, axis=2)
    assert mag.max() <= math.sqrt(2) / gp.H * (1 + 1e-12)
    assert mag.max() > 0.99 / gp.H


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 5), st.integers(0, 2 ** 31))
def test_nested_restriction_is_identity(cn, r, seed):
    gp = build_grid_pair(cn, r)
    vals = np.random.default_rng(seed).normal(size=gp.coarse.n_nodes)
    fine = gp.prolongation() @ vals
    c = gp.coarse
    idx = gp.fine.node_index(np.rint(c.nodes[:, 0] * gp.fine.n_x).astype(int),
                             np.rint(c.nodes[:, 1] * gp.fine.n_y).astype(int))
    assert np.allclose(fine[idx], vals, atol=1e-13)
    assert np.allclose(gp.prolongation() @ np.ones(c.n_nodes), 1.0, atol=1e-13)


def test_element_patches():
    gp = build_grid_pair(3, 4)
    # interior element: all (r+1)^2 closed-patch nodes are free
    assert gp.element_nodes(4).size == 25
    # corner element loses the two boundary sides
    assert gp.element_nodes(0).size == 16
    assert gp.element_triangles(4).size == 2 * 16
    assert np.bincount(gp.triangle_element).tolist() == [32] * 9
