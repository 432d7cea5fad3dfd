from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgk.harmonic import GRAM0, extend_harmonic, harmonic_structure
from sgk.measures import (
    cell_vector_table,
    cylinder_probabilities,
    decay_scan,
    energy_cell_vector,
    energy_cell_vector_bruteforce,
    energy_orthobasis,
    iter_cell_vectors,
    kusuoka_cylinder,
    measure_table_csv,
    partition_identity_check,
    radon_nikodym_approx,
    word_products,
)
from sgk.topology import DepthCapError, build_level_graph, cell_rotation


def _edge_energy_blocks(hs, level):
    """Oracle: per-cell edge energies of h_0, h_1, h_2 on Gamma_level, renormalized."""
    g = build_level_graph(hs.params, level)
    hj = [extend_harmonic(hs, [int(i == j) for i in range(3)], level, graph=g) for j in range(3)]
    out = []
    for x, y, z in g.cells:
        out.append(tuple(((h[x] - h[y]) ** 2 + (h[x] - h[z]) ** 2 + (h[y] - h[z]) ** 2) / hs.r**level for h in hj))
    return out


def test_examples(hs2):
    assert energy_cell_vector(hs2, (0,)).nu == (Fraction(6, 5), Fraction(2, 5), Fraction(2, 5))
    for k in (2, 3, 5):
        mv = energy_cell_vector(harmonic_structure(k), ())
        assert mv.nu == (2, 2, 2) and mv.total_std == 6 and mv.prob == 1 and mv.total_prime == 2
    assert energy_cell_vector(hs2, (0, 0)).total_std == 6 * Fraction(41, 225)
    assert energy_cell_vector(hs2, (0, 0)).prob == Fraction(41, 225)
    assert energy_cell_vector(hs2, (0, 1)).prob == Fraction(17, 225)
    assert energy_cell_vector(hs2, (0, 2)).prob == Fraction(17, 225)


def test_radon_nikodym_examples(hs2):
    assert radon_nikodym_approx(hs2, (0,)) == (Fraction(3, 5), Fraction(1, 5), Fraction(1, 5))
    assert radon_nikodym_approx(hs2, ()) == (Fraction(1, 3),) * 3


@pytest.mark.parametrize("k,level", [(2, 4), (3, 4)])
def test_matches_edge_energy_oracle(k, level):
    hs = harmonic_structure(k)
    blocks = _edge_energy_blocks(hs, level)
    for mv in iter_cell_vectors(hs, level):
        span = hs.d ** (level - len(mv.word))
        lo = 0
        for s in mv.word:
            lo = lo * hs.d + s
        lo *= span
        ref = tuple(sum((b[j] for b in blocks[lo : lo + span]), Fraction(0)) for j in range(3))
        assert mv.nu == ref


def test_bruteforce_helper(hs3):
    assert energy_cell_vector_bruteforce(hs3, (0, 5)) == energy_cell_vector(hs3, (0, 5))
    assert energy_cell_vector_bruteforce(hs3, (4,), level=3).nu == energy_cell_vector(hs3, (4,)).nu
    with pytest.raises(ValueError):
        energy_cell_vector_bruteforce(hs3, (0, 1), level=1)


@pytest.mark.parametrize("k,depth", [(2, 6), (3, 3), (4, 2)])
def test_additivity_and_positivity(k, depth):
    hs = harmonic_structure(k)
    table = cell_vector_table(hs, depth)
    for w, mv in table.items():
        assert min(mv.nu) >= 0
        assert sum(mv.radon_nikodym()) == 1
        if len(w) < depth:
            kids = [table[w + (s,)].nu for s in range(hs.d)]
            assert tuple(sum(c[i] for c in kids) for i in range(3)) == mv.nu


def test_depth_cap(hs3):
    with pytest.raises(DepthCapError):
        energy_cell_vector(hs3, (0,) * 7)
    assert energy_cell_vector(hs3, (0,) * 7, cap=7).prob > 0


def test_kusuoka_cylinder_examples(ec2):
    assert kusuoka_cylinder(ec2, (0,)) == pytest.approx(1 / 3, abs=1e-15)
    assert kusuoka_cylinder(ec2, (0, 0)) == pytest.approx(41 / 225, abs=1e-15)
    assert kusuoka_cylinder(ec2, (0, 1)) == pytest.approx(17 / 225, abs=1e-15)


def test_cross_route_depth8(hs2, ec2):
    fl = cylinder_probabilities(ec2, 8)
    ex = np.array([float(mv.prob) for mv in iter_cell_vectors(hs2, 8, 8)])
    assert np.max(np.abs(fl - ex)) < 1e-10
    assert fl.sum() == pytest.approx(1, abs=1e-12)


def test_orthobasis(hs2, ec2):
    b = ec2.basis
    g = np.array(GRAM0, dtype=float)
    assert np.allclose(b @ g @ b.T, np.eye(2), atol=1e-14)
    assert np.allclose(b.sum(axis=1), 0, atol=1e-14)
    # orientation: u_1 proportional to h_1 - h_2 with positive leading entry
    assert ec2.basis_exact[0] == (0, 1, -1)
    for a in ec2.A:
        assert np.allclose(sorted(np.linalg.svd(a, compute_uv=False) * np.sqrt(15)), [1, 3], atol=1e-12)
    assert np.allclose(np.einsum("nji,njk->ik", ec2.A, ec2.A), np.eye(2), atol=1e-12)


def _rotation_on_energy_coords(ec):
    # h -> h o rho^-1 where rho cycles q0 -> q1 -> q2; in values, h'(q_i) = h(q_{i-1})
    perm = np.zeros((3, 3))
    for i in range(3):
        perm[i, (i - 1) % 3] = 1
    u = ec.basis
    g = np.array(GRAM0, dtype=float)
    return u @ g @ perm @ u.T


@pytest.mark.parametrize("k", [2, 3, 4])
def test_cell_matrices_are_rotation_conjugates(k):
    ec = energy_orthobasis(harmonic_structure(k))
    rot = cell_rotation(ec.hs.params)
    R = _rotation_on_energy_coords(ec)
    assert np.allclose(R @ R.T, np.eye(2), atol=1e-13)
    assert np.allclose(np.linalg.matrix_power(R, 3), np.eye(2), atol=1e-13)
    for n in range(ec.hs.d):
        a, b = ec.A[n], ec.A[rot[n]]
        assert np.allclose(b, R @ a @ R.T, atol=1e-13) or np.allclose(b, R.T @ a @ R, atol=1e-13)


def test_partition_identity(ec2, ec3):
    assert partition_identity_check(ec2, 1) < 1e-13
    for m in range(7):
        assert partition_identity_check(ec2, m) < 1e-12
    for m in range(4):
        assert partition_identity_check(ec3, m) < 1e-12


def test_word_products_order(ec2):
    prods = word_products(ec2, 3)
    w = (2, 0, 1)
    idx = 2 * 9 + 0 * 3 + 1
    assert np.allclose(prods[idx], ec2.A[1] @ ec2.A[0] @ ec2.A[2])
    assert np.allclose(prods[idx], ec2.word_matrix(w))


def test_decay_scan(hs2):
    rows = decay_scan(hs2, 12)
    assert rows[0].max_prob == Fraction(1, 3) and rows[0].scaled == Fraction(5, 9)
    for row in rows:
        assert row.scaled == Fraction(1, 2) * (1 + Fraction(1, 9**row.m))
        assert len(set(row.argmax)) == 1
        assert row.max_prob <= Fraction(3, 5) ** row.m
        assert not row.exploratory
    assert all(a.scaled > b.scaled for a, b in zip(rows, rows[1:]))


def test_decay_scan_other_k_flagged(hs3):
    assert all(r.exploratory for r in decay_scan(hs3, 2))


def test_measure_table_csv(hs2):
    text = measure_table_csv(hs2, 2)
    lines = text.strip().splitlines()
    assert lines[0] == "word,nu0,nu1,nu2,prob"
    assert len(lines) == 1 + 1 + 3 + 9
    assert "00,18/25,14/75,14/75,41/225" in lines


@given(st.lists(st.integers(0, 2), max_size=7))
def test_float_route_matches_exact(w):
    hs = harmonic_structure(2)
    ec = energy_orthobasis(hs)
    assert abs(kusuoka_cylinder(ec, w) - float(energy_cell_vector(hs, w).prob)) < 1e-10


@given(st.lists(st.integers(0, 5), max_size=4), st.integers(0, 5))
def test_children_sum_k3(w, _):
    hs = harmonic_structure(3)
    parent = energy_cell_vector(hs, w)
    kids = [energy_cell_vector(hs, tuple(w) + (s,), cap=len(w) + 1) for s in range(6)]
    assert tuple(sum(c.nu[i] for c in kids) for i in range(3)) == parent.nu
