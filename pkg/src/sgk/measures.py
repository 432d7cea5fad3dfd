"""Energy measures of cells and the Kusuoka measure.

Word convention: ``w = (w_1, ..., w_m)`` names the cell ``F_{w_1} o ... o F_{w_m}(K)``.
Its restriction matrix is ``B_w = B_{w_m} ... B_{w_1}`` and its energy matrix
``A_w = A_{w_m} ... A_{w_1}``; appending a symbol left-multiplies.

Three normalizations of the Kusuoka measure appear below:

* ``nu_std = nu_0 + nu_1 + nu_2`` (standard basis, total mass 6),
* ``nu_prime = nu_std / 3`` (any energy-orthonormal pair, mass 2),
* ``prob = nu_std / 6`` (probability measure).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .exact import quad_form
from .harmonic import GRAM0, HarmonicStructure, extend_harmonic, harmonic_structure
from .topology import DepthCapError, Word, build_level_graph, format_word


@dataclass(frozen=True)
class MeasureVector:
    word: Word
    nu: tuple[Fraction, Fraction, Fraction]

    @property
    def total_std(self) -> Fraction:
        return sum(self.nu, Fraction(0))

    @property
    def total_prime(self) -> Fraction:
        return self.total_std / 3

    @property
    def prob(self) -> Fraction:
        return self.total_std / 6

    def radon_nikodym(self) -> tuple[Fraction, Fraction, Fraction]:
        t = self.total_std
        return tuple(x / t for x in self.nu)


def _edge_energy(c0: int, c1: int, c2: int) -> int:
    return (c0 - c1) ** 2 + (c0 - c2) ** 2 + (c1 - c2) ** 2


def _check_depth(hs: HarmonicStructure, m: int, cap: int | None) -> None:
    limit = hs.params.default_cap() if cap is None else cap
    if m > limit:
        raise DepthCapError(f"depth {m} exceeds the cap {limit} for k={hs.k}")


def _word_matrix_int(hs: HarmonicStructure, w: Sequence[int]) -> list[list[int]]:
    _, nB = hs.integer_B()
    acc = [[int(i == j) for j in range(3)] for i in range(3)]
    for s in w:
        bn = nB[s]
        acc = [[sum(bn[i][t] * acc[t][j] for t in range(3)) for j in range(3)] for i in range(3)]
    return acc


def _vector_from_int(hs: HarmonicStructure, nw: list[list[int]], m: int) -> tuple[Fraction, ...]:
    scale = Fraction(1, hs.denominator ** (2 * m)) / hs.r**m
    return tuple(scale * _edge_energy(nw[0][j], nw[1][j], nw[2][j]) for j in range(3))


def energy_cell_vector(hs: HarmonicStructure, w: Sequence[int], cap: int | None = None) -> MeasureVector:
    """``(nu_0, nu_1, nu_2)(F_w K)`` exactly: ``r^-m (B_w e_j)^T G (B_w e_j)``."""
    w = hs.params.check_word(w)
    _check_depth(hs, len(w), cap)
    return MeasureVector(w, _vector_from_int(hs, _word_matrix_int(hs, w), len(w)))


def iter_cell_vectors(hs: HarmonicStructure, depth: int, min_depth: int = 0) -> Iterator[MeasureVector]:
    """All cell vectors with ``min_depth <= |w| <= depth``, by depth then lexicographically."""
    _, nB = hs.integer_B()
    level: list[tuple[Word, list[list[int]]]] = [((), [[int(i == j) for j in range(3)] for i in range(3)])]
    for m in range(depth + 1):
        if m >= min_depth:
            for w, nw in level:
                yield MeasureVector(w, _vector_from_int(hs, nw, m))
        if m == depth:
            break
        nxt = []
        for w, nw in level:
            for s, bn in enumerate(nB):
                nxt.append((w + (s,), [[sum(bn[i][t] * nw[t][j] for t in range(3)) for j in range(3)] for i in range(3)]))
        level = nxt


def cell_vector_table(hs: HarmonicStructure, depth: int) -> dict[Word, MeasureVector]:
    return {mv.word: mv for mv in iter_cell_vectors(hs, depth)}


def energy_cell_vector_bruteforce(hs: HarmonicStructure, w: Sequence[int], level: int | None = None) -> MeasureVector:
    """Cell energies summed edge by edge on ``Gamma_L`` (``L = |w|`` by default).

    Independent of the matrix products: the standard harmonic functions are
    extended to ``V_L`` and the squared differences over every level-``L``
    edge inside ``F_w K`` are renormalized by ``r^-L``.
    """
    w = hs.params.check_word(w)
    lev = len(w) if level is None else level
    if lev < len(w):
        raise ValueError("refinement level must be at least the word length")
    g = build_level_graph(hs.params, lev)
    hj = [extend_harmonic(hs, [int(i == j) for i in range(3)], lev, graph=g) for j in range(3)]
    d = hs.d
    lo = 0
    for s in w:
        lo = lo * d + s
    span = d ** (lev - len(w))
    lo *= span
    out = []
    for h in hj:
        tot = Fraction(0)
        for x, y, z in g.cells[lo : lo + span]:
            tot += (h[x] - h[y]) ** 2 + (h[x] - h[z]) ** 2 + (h[y] - h[z]) ** 2
        out.append(tot / hs.r**lev)
    return MeasureVector(w, tuple(out))


def radon_nikodym_approx(hs: HarmonicStructure, w: Sequence[int]) -> tuple[Fraction, Fraction, Fraction]:
    """Cylinder approximant ``nu_i(F_wK) / nu_std(F_wK)`` of ``d nu_i / d nu``."""
    return energy_cell_vector(hs, w).radon_nikodym()


@dataclass(frozen=True)
class EnergyCoordinates:
    """Cell maps acting on harmonic functions modulo constants.

    ``basis_exact`` holds the unnormalized rational vectors ``v_1, v_2`` and
    ``norms`` their energies, so ``u_i = v_i / sqrt(norms[i])``.  ``T[n]`` is
    the rational matrix of ``h -> h o F_n`` in the ``v`` basis and
    ``A[n] = P T[n] P^-1 / sqrt(r)`` with ``P = diag(sqrt(norms))``.
    """

    hs: HarmonicStructure
    basis_exact: tuple[tuple[Fraction, ...], tuple[Fraction, ...]]
    norms: tuple[Fraction, Fraction]
    T: tuple[tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]], ...]
    A: np.ndarray

    @property
    def k(self) -> int:
        return self.hs.k

    @property
    def basis(self) -> np.ndarray:
        return np.array(
            [[float(x) / math.sqrt(float(n)) for x in v] for v, n in zip(self.basis_exact, self.norms)]
        )

    def word_matrix(self, w: Sequence[int]) -> np.ndarray:
        acc = np.eye(2)
        for s in w:
            acc = self.A[s] @ acc
        return acc


def _gram_schmidt(vectors, gram) -> list[list[Fraction]]:
    out: list[list[Fraction]] = []
    for v in vectors:
        v = [Fraction(x) for x in v]
        for u in out:
            c = quad_form(u, gram, v) / quad_form(u, gram)
            v = [a - c * b for a, b in zip(v, u)]
        out.append(v)
    return out


@lru_cache(maxsize=None)
def _orthobasis(k: int) -> EnergyCoordinates:
    hs = harmonic_structure(k)
    h0, h1, h2 = ([Fraction(int(i == j)) for i in range(3)] for j in range(3))
    v1 = [a - b for a, b in zip(h1, h2)]
    v2 = [a + b - 2 * c for a, b, c in zip(h1, h2, h0)]
    v1, v2 = _gram_schmidt([v1, v2], GRAM0)
    lead = next(x for x in v1 if x != 0)
    if lead < 0:
        v1 = [-x for x in v1]
    norms = (quad_form(v1, GRAM0), quad_form(v2, GRAM0))
    basis = (v1, v2)
    T = []
    for bn in hs.B:
        cols = []
        for v in basis:
            img = [sum((bn[i][t] * v[t] for t in range(3)), Fraction(0)) for i in range(3)]
            cols.append([quad_form(u, GRAM0, img) / n for u, n in zip(basis, norms)])
        T.append(tuple(tuple(cols[l][i] for l in range(2)) for i in range(2)))
    sq = [math.sqrt(float(n)) for n in norms]
    sr = math.sqrt(float(hs.r))
    A = np.array(
        [[[sq[i] * float(t[i][l]) / sq[l] / sr for l in range(2)] for i in range(2)] for t in T]
    )
    ec = EnergyCoordinates(hs=hs, basis_exact=(tuple(v1), tuple(v2)), norms=norms, T=tuple(T), A=A)
    dev = np.linalg.norm(np.einsum("nji,njk->ik", A, A) - np.eye(2))
    if dev > 1e-12:
        raise AssertionError(f"cell energy matrices do not resolve the identity (deviation {dev:.3e})")
    return ec


def energy_orthobasis(hs: HarmonicStructure) -> EnergyCoordinates:
    return _orthobasis(hs.k)


def word_products(ec: EnergyCoordinates, m: int) -> np.ndarray:
    """``A_w`` for all words of length ``m`` in lexicographic order, shape ``(d**m, 2, 2)``."""
    acc = np.eye(2)[None]
    for _ in range(m):
        acc = np.einsum("nij,wjk->wnik", ec.A, acc).reshape(-1, 2, 2)
    return acc


def kusuoka_cylinder(ec: EnergyCoordinates, w: Sequence[int]) -> float:
    """Probability-normalized Kusuoka measure ``||A_w||_F^2 / 2`` (float route)."""
    a = ec.word_matrix(ec.hs.params.check_word(w))
    return float(np.sum(a * a) / 2)


def cylinder_probabilities(ec: EnergyCoordinates, m: int) -> np.ndarray:
    a = word_products(ec, m)
    return np.einsum("wij,wij->w", a, a) / 2


def partition_identity_check(ec: EnergyCoordinates, m: int) -> float:
    """Frobenius deviation of ``sum_{|w|=m} A_w^T A_w`` from the identity."""
    a = word_products(ec, m)
    return float(np.linalg.norm(np.einsum("wji,wjk->ik", a, a) - np.eye(2)))


@dataclass(frozen=True)
class DecayRow:
    m: int
    max_prob: Fraction
    scaled: Fraction
    argmax: Word
    exploratory: bool


def decay_scan(hs: HarmonicStructure, m_max: int, ec: EnergyCoordinates | None = None) -> list[DecayRow]:
    """Largest cylinder probability at each depth, scaled by ``r^-m``.

    For ``k = 2`` the scale is ``(5/3)^m``.  Candidates are located with the
    float route and the maximum is then taken exactly over every word within
    a relative ``1e-9`` of the float maximum.
    """
    ec = ec or energy_orthobasis(hs)
    rows = []
    d = hs.d
    acc = np.eye(2)[None]
    for m in range(1, m_max + 1):
        acc = np.einsum("nij,wjk->wnik", ec.A, acc).reshape(-1, 2, 2)
        probs = np.einsum("wij,wij->w", acc, acc) / 2
        top = probs.max()
        best = None
        for idx in np.flatnonzero(probs >= top * (1 - 1e-9)):
            w = []
            for _ in range(m):
                idx, s = divmod(int(idx), d)
                w.append(s)
            w = tuple(reversed(w))
            p = energy_cell_vector(hs, w, cap=m).prob
            if best is None or p > best[0]:
                best = (p, w)
        rows.append(DecayRow(m, best[0], best[0] / hs.r**m, best[1], hs.k != 2))
    return rows


def measure_table_csv(hs: HarmonicStructure, depth: int, min_depth: int = 0) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["word", "nu0", "nu1", "nu2", "prob"])
    for mv in iter_cell_vectors(hs, depth, min_depth):
        wr.writerow([format_word(mv.word, hs.d), *(str(x) for x in mv.nu), str(mv.prob)])
    return buf.getvalue()
