import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgk.topology import (
    Q0,
    Q1,
    Q2,
    DepthCapError,
    GasketDomainError,
    Point,
    affine_map_of_word,
    build_level_graph,
    cell_reflection,
    cell_rotation,
    cell_vertex_triple,
    format_word,
    gasket_params,
    parse_word,
    vertex_census,
)


def _oracle_graph(params, m):
    """Vertices and edges from the affine maps directly, keyed by Cartesian coordinates."""
    verts = set()
    edges = set()
    for w in params.words(m):
        f = affine_map_of_word(params, w)
        tri = [f(q) for q in (Q0, Q1, Q2)]
        keys = [(p.x, p.y_sqrt3) for p in tri]
        verts.update(keys)
        for i in range(3):
            for j in range(i + 1, 3):
                edges.add(frozenset((keys[i], keys[j])))
    return verts, edges


def test_params_k2():
    p = gasket_params(2)
    assert p.d == 3
    assert p.hausdorff_dim == pytest.approx(math.log(3) / math.log(2), abs=1e-12)


def test_params_k3():
    p = gasket_params(3)
    assert p.d == 6
    assert p.hausdorff_dim == pytest.approx(1 + math.log(2) / math.log(3), abs=1e-12)


@pytest.mark.parametrize("k", [1, 0, -3])
def test_params_reject_small_k(k):
    with pytest.raises(GasketDomainError):
        gasket_params(k)


@pytest.mark.parametrize("k", range(2, 7))
def test_corner_cells(k):
    p = gasket_params(k)
    assert affine_map_of_word(p, (0,))(Q0) == Q0
    assert affine_map_of_word(p, (k - 1,))(Q1) == Q1
    assert affine_map_of_word(p, (p.d - 1,))(Q2) == Q2


def test_affine_maps():
    p = gasket_params(2)
    assert affine_map_of_word(p, ())(Q1) == Q1
    assert affine_map_of_word(p, (0, 1))(Q0).cartesian() == (0.25, 0.0)
    with pytest.raises(GasketDomainError):
        affine_map_of_word(p, (3,))


def test_translations_are_upward_subtriangles():
    p = gasket_params(3)
    for n, t in enumerate(p.translations):
        f = affine_map_of_word(p, (n,))
        assert f(Q0) == t
        assert f.scale == Fraction(1, 3)


def test_graph_k2_m1():
    g = build_level_graph(gasket_params(2), 1)
    assert g.n_vertices == 6 and len(g.edges) == 9
    assert sorted(g.degree) == [2, 2, 2, 4, 4, 4]


def test_graph_k3_m1():
    g = build_level_graph(gasket_params(3), 1)
    assert g.n_vertices == 10 and len(g.edges) == 18
    assert g.degree.count(6) == 1
    centre = g.degree.index(6)
    assert g.point(centre) == Point(Fraction(1, 3), Fraction(1, 3))


@pytest.mark.parametrize("k", range(2, 7))
def test_graph_m0(k):
    g = build_level_graph(gasket_params(k), 0)
    assert g.n_vertices == 3 and g.degree == [2, 2, 2]


def test_census_examples():
    assert vertex_census(gasket_params(2), 2) == 15
    assert vertex_census(gasket_params(3), 1) == 10
    assert vertex_census(gasket_params(2), 0) == 3


@pytest.mark.parametrize("k,m", [(k, m) for k in range(2, 6) for m in range(0, 4)])
def test_graph_matches_oracle(k, m):
    p = gasket_params(k)
    g = build_level_graph(p, m)
    verts, edges = _oracle_graph(p, m)
    assert {(g.point(i).x, g.point(i).y_sqrt3) for i in range(g.n_vertices)} == verts
    got = {frozenset(((g.point(u).x, g.point(u).y_sqrt3), (g.point(v).x, g.point(v).y_sqrt3))) for u, v in g.edges}
    assert got == edges
    assert g.n_vertices == vertex_census(p, m)
    assert len(g.edges) == 3 * p.d**m
    assert set(g.degree) <= {2, 4, 6}
    assert g.degree.count(2) == 3 and g.degree[:3] == [2, 2, 2]
    # degree is twice the number of cells at the vertex
    count = [0] * g.n_vertices
    for tri in g.cells:
        for x in tri:
            count[x] += 1
    assert g.degree == [2 * c for c in count]


def test_cell_triples():
    g = build_level_graph(gasket_params(2), 1)
    t = cell_vertex_triple(g, (0,))
    assert g.point(t[0]) == Q0
    assert g.point(t[1]).cartesian() == (0.5, 0.0)
    assert g.point(t[2]) == Point(Fraction(0), Fraction(1, 2))
    g3 = build_level_graph(gasket_params(3), 1)
    assert g3.point(cell_vertex_triple(g3, (1,))[0]).cartesian() == (1 / 3, 0.0)
    with pytest.raises(GasketDomainError):
        cell_vertex_triple(g, (0, 0))


def test_depth_cap():
    with pytest.raises(DepthCapError):
        build_level_graph(gasket_params(3), 7)
    assert gasket_params(2).default_cap() == 10


def test_vertex_lookup_rejects_non_vertex():
    g = build_level_graph(gasket_params(2), 1)
    with pytest.raises(GasketDomainError):
        g.vertex_of(Point(Fraction(1, 4), Fraction(0)))


@pytest.mark.parametrize("k", range(2, 7))
def test_symmetry_permutations(k):
    p = gasket_params(k)
    rot = cell_rotation(p)
    assert sorted(rot) == list(range(p.d))
    assert all(rot[rot[rot[n]]] == n for n in range(p.d))
    assert rot[0] == k - 1 and rot[k - 1] == p.d - 1
    ref = cell_reflection(p)
    assert all(ref[ref[n]] == n for n in range(p.d))


def test_graph_json():
    doc = build_level_graph(gasket_params(2), 1).to_json()
    assert doc["schema"] == 1
    assert doc["vertices"][1] == {"x": "1", "y_sqrt3": "0"}
    assert doc["vertices"][2] == {"x": "1/2", "y_sqrt3": "1/2"}
    assert len(doc["edges"]) == 9


@given(st.integers(2, 5), st.lists(st.integers(0, 100), max_size=6), st.lists(st.integers(0, 100), max_size=6))
def test_word_composition_is_associative(k, u, v):
    p = gasket_params(k)
    u = tuple(s % p.d for s in u)
    v = tuple(s % p.d for s in v)
    fu, fv, fuv = affine_map_of_word(p, u), affine_map_of_word(p, v), affine_map_of_word(p, u + v)
    assert fu.compose(fv) == fuv
    assert fuv.scale == Fraction(1, k ** (len(u) + len(v)))


@given(st.integers(2, 20), st.lists(st.integers(0, 500), max_size=8))
def test_word_parse_roundtrip(k, w):
    d = k * (k + 1) // 2
    w = tuple(s % d for s in w)
    assert parse_word(format_word(w, d), d) == w
