from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgk.harmonic import extend_harmonic, harmonic_structure
from sgk.measures import cell_vector_table, energy_cell_vector
from sgk.selfsim import (
    SG3_PRINTED_ORDER,
    SG3_PRINTED_NUMERATORS,
    IdentityViolation,
    MMatrixFamily,
    grouped_order,
    laplacian_scaling_experiment,
    m_matrices,
    middle_cell,
    q_word_product,
    relabel,
    rotation_groups,
    verify_vector_identity,
    weighted_identity_check,
    weights_Q,
)
from sgk.topology import build_level_graph, cell_rotation, gasket_params

F = Fraction


def test_m0_k2(mm2):
    assert mm2.M[0] == [
        [F(3, 5), 0, 0],
        [F(2, 15), F(2, 15), F(-1, 15)],
        [F(2, 15), F(-1, 15), F(2, 15)],
    ]
    assert mm2.S[0] == (F(13, 15), F(1, 15), F(1, 15))


def test_sg3_printed_matrices(mm3, hs3):
    assert tuple(grouped_order(hs3.params)) == SG3_PRINTED_ORDER
    for m, ref in zip(relabel(mm3, SG3_PRINTED_ORDER), SG3_PRINTED_NUMERATORS):
        assert m == [[F(x, 105) for x in row] for row in ref]


def test_sg3_examples(mm3):
    assert mm3.M[0] == [[F(x, 105) for x in row] for row in ((49, 0, 0), (12, 4, -3), (12, -3, 4))]
    printed3 = SG3_PRINTED_ORDER[3]
    assert mm3.M[printed3] == [[F(x, 105) for x in row] for row in ((4, 0, 0), (-3, 12, 4), (-3, 4, 12))]


@pytest.mark.parametrize("k", range(2, 7))
def test_row_sum_eigenvector(k):
    mm = m_matrices(harmonic_structure(k))
    for i in range(3):
        assert sum(m[i][j] for m in mm.M for j in range(3)) == 1


@pytest.mark.parametrize("k", range(2, 6))
def test_rotational_covariance(k):
    mm = m_matrices(harmonic_structure(k))
    rot = cell_rotation(mm.hs.params)
    for n in range(mm.hs.d):
        a, b = mm.M[n], mm.M[rot[n]]
        for i in range(3):
            for j in range(3):
                assert b[i][j] == a[(i - 1) % 3][(j - 1) % 3]


def test_rotation_groups():
    assert rotation_groups(gasket_params(3)) == [(0, 2, 5), (4, 3, 1)]
    groups4 = rotation_groups(gasket_params(4))
    assert groups4[-1] == (5,) and middle_cell(gasket_params(4)) == 5
    assert middle_cell(gasket_params(3)) is None


@pytest.mark.parametrize("k,depth", [(2, 3), (3, 3), (4, 3)])
def test_vector_identity(k, depth):
    hs = harmonic_structure(k)
    rep = verify_vector_identity(hs, m_matrices(hs), depth)
    assert rep.checked == sum(hs.d**m for m in range(depth + 1)) * hs.d
    assert rep.max_deviation == 0


def test_vector_identity_detects_tampering(hs2, mm2):
    bad = [row[:] for row in mm2.M[1]]
    bad[0][0] += F(1, 1000)
    tampered = MMatrixFamily(hs2, (mm2.M[0], bad, mm2.M[2]))
    with pytest.raises(IdentityViolation) as info:
        verify_vector_identity(hs2, tampered, 1)
    assert info.value.witness[0] == (1,)


def test_vector_identity_on_whole_space(hs2, mm2):
    assert [sum(mm2.M[0][i][j] * 2 for j in range(3)) for i in range(3)] == list(energy_cell_vector(hs2, (0,)).nu)


def test_weights_Q(mm2, mm3):
    q = weights_Q(mm2, (F(3, 5), F(1, 5), F(1, 5)))
    assert q[0] == F(1, 15) + F(12, 15) * F(3, 5) == F(41, 75)
    assert weights_Q(mm2, (F(1, 3),) * 3) == [F(1, 3)] * 3
    with pytest.raises(ValueError):
        weights_Q(mm2, (F(1, 2), F(1, 2), F(1, 2)))


@given(st.fractions(0, 1, max_denominator=50), st.fractions(0, 1, max_denominator=50))
def test_sg3_q_formulas(a, b):
    if a + b > 1:
        return
    rn = (a, b, 1 - a - b)
    mm = m_matrices(harmonic_structure(3))
    q = weights_Q(mm, rn)
    printed = [q[n] for n in SG3_PRINTED_ORDER]
    for j in range(3):
        assert printed[j] == (1 + 72 * rn[j]) / 105
        assert printed[3 + j] == (16 - 18 * rn[j]) / 105
    assert sum(q) == 1


@given(st.integers(2, 5), st.fractions(0, 1, max_denominator=30), st.fractions(0, 1, max_denominator=30))
def test_q_sums_to_one(k, a, b):
    if a + b > 1:
        return
    q = weights_Q(m_matrices(harmonic_structure(k)), (a, b, 1 - a - b))
    assert sum(q) == 1


@pytest.mark.parametrize("k,depth", [(2, 3), (3, 3), (3, 2)])
def test_weighted_identity(k, depth):
    hs = harmonic_structure(k)
    assert weighted_identity_check(hs, m_matrices(hs), depth).checked > 0


def test_weighted_identity_example(hs2, mm2):
    ratio = energy_cell_vector(hs2, (0, 0)).prob / energy_cell_vector(hs2, (0,)).prob
    assert ratio == F(41, 75) == weights_Q(mm2, energy_cell_vector(hs2, (0,)).radon_nikodym())[0]


def test_q_word_product(hs2, mm2):
    assert q_word_product(hs2, mm2, (0, 0)) == F(41, 225)
    assert q_word_product(hs2, mm2, (0,), (0,)) == F(41, 75)
    with pytest.raises(ValueError):
        q_word_product(hs2, mm2, ())


def test_q_word_product_telescopes(hs2, mm2):
    table = cell_vector_table(hs2, 4)
    for w in table:
        for split in range(1, len(w) + 1):
            head, tail = w[:split], w[split:]
            got = q_word_product(hs2, mm2, head, tail)
            assert got == table[w].total_std / table[tail].total_std
            if split > 1:
                # Q_{w w'} at u = Q_{w'} at u times Q_w at w'u
                a, b = head[:1], head[1:]
                assert got == q_word_product(hs2, mm2, b, tail) * q_word_product(hs2, mm2, a, b + tail)


def test_scaling_k2_converges(hs2, mm2):
    rep = laplacian_scaling_experiment(hs2, mm2, 0, 7)
    assert rep.estimate == rep.spline_reference
    dev = rep.deviations
    assert all(b < a for a, b in zip(dev, dev[1:]))
    assert dev[-1] < 1e-6
    assert rep.middle_constant is None


def test_scaling_middle_cell_k4(hs4):
    mm = m_matrices(hs4)
    c = middle_cell(hs4.params)
    assert len(set(mm.S[c])) == 1
    rep = laplacian_scaling_experiment(hs4, mm, c, 2)
    assert rep.middle_deviations() == [0, 0]
    # oracle: level-1 edge energy of the standard h_1 on the middle cell
    g = build_level_graph(hs4.params, 1)
    h1 = extend_harmonic(hs4, (0, 1, 0), 1, graph=g)
    x, y, z = g.cells[c]
    energy = (h1[x] - h1[y]) ** 2 + (h1[x] - h1[z]) ** 2 + (h1[y] - h1[z]) ** 2
    assert rep.middle_constant == energy / 2
    assert rep.estimate[0] == energy == 2 * hs4.r * mm.S[c][0]


def test_scaling_rejects_bad_cell(hs2, mm2):
    with pytest.raises(ValueError):
        laplacian_scaling_experiment(hs2, mm2, 3, 2)


def test_to_json(mm3):
    doc = mm3.to_json()
    assert doc["schema"] == 1 and doc["M"][0][0] == ["7/15", "0", "0"]
