"""Graph Laplacians, spline integrals and pointwise Laplacian estimators.

The energy Laplacian is taken with respect to ``nu_prime`` (mass 2), the
Kusuoka measure built from an energy-orthonormal pair ``h_1, h_2``.  With
this choice ``Delta(h_1^2 + h_2^2) = 2``.  For another normalization use
``Delta_{c nu} = Delta_nu / c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exact import nullspace, solve_sparse
from .harmonic import GRAM0, HarmonicStructure, cell_boundary_values, expected_hitting_time, extend_harmonic
from .measures import EnergyCoordinates, energy_orthobasis
from .topology import (
    GasketDomainError,
    GasketParams,
    LevelGraph,
    Point,
    affine_map_of_word,
    build_level_graph,
    CORNERS,
)


@dataclass
class GridFunction:
    graph: LevelGraph
    values: list
    provenance: str = "explicit-formula"

    @property
    def level(self) -> int:
        return self.graph.level

    def __getitem__(self, i):
        return self.values[i]

    def restrict(self, coarse: LevelGraph) -> "GridFunction":
        """Values on ``V_j`` for ``j <= level`` (``V_j`` is a subset of ``V_level``)."""
        if coarse.level > self.level:
            raise ValueError("can only restrict to a coarser level")
        f = self.graph.params.k ** (self.level - coarse.level)
        idx = self.graph.index
        return GridFunction(coarse, [self.values[idx[(a * f, b * f)]] for a, b in coarse.keys], self.provenance)


@dataclass
class GridFamily:
    """A function known on every level graph.

    ``nu_laplacian`` is the constant value of the energy Laplacian when it
    is constant (``None`` otherwise).
    """

    name: str
    build: Callable[[LevelGraph], list]
    nu_laplacian: Fraction | None = None
    provenance: str = "explicit-formula"

    def at(self, g: LevelGraph) -> GridFunction:
        return GridFunction(g, self.build(g), self.provenance)

    @classmethod
    def from_grid(cls, name: str, gf: GridFunction) -> "GridFamily":
        return cls(name, lambda g: gf.restrict(g).values, provenance=gf.provenance)


def harmonic_family(hs: HarmonicStructure, boundary: Sequence) -> GridFamily:
    bnd = [Fraction(x) for x in boundary]
    return GridFamily(
        f"harmonic{tuple(str(x) for x in bnd)}",
        lambda g: extend_harmonic(hs, bnd, g.level, graph=g),
        nu_laplacian=Fraction(0),
        provenance="harmonic-extension",
    )


def _square_sum(hs: HarmonicStructure, pairs, g: LevelGraph) -> list[Fraction]:
    total = [Fraction(0)] * g.n_vertices
    for vec, weight in pairs:
        h = extend_harmonic(hs, vec, g.level, graph=g)
        total = [t + weight * x * x for t, x in zip(total, h)]
    return total


def square_sum_family(hs: HarmonicStructure, ec: EnergyCoordinates | None = None) -> GridFamily:
    """``h_1^2 + h_2^2`` for the energy-orthonormal pair; its energy Laplacian is 2."""
    ec = ec or energy_orthobasis(hs)
    pairs = [(v, 1 / n) for v, n in zip(ec.basis_exact, ec.norms)]
    return GridFamily("h1^2+h2^2", lambda g: _square_sum(hs, pairs, g), nu_laplacian=Fraction(2))


def harmonic_square_family(hs: HarmonicStructure, j: int) -> GridFamily:
    """``h_j^2`` for the standard harmonic function ``h_j``."""
    vec = [Fraction(int(i == j)) for i in range(3)]
    return GridFamily(f"h{j}^2", lambda g: _square_sum(hs, [(vec, Fraction(1))], g))


def composed_square_sum_family(hs: HarmonicStructure, ec: EnergyCoordinates, cell: int) -> GridFamily:
    """``(h_1^2 + h_2^2) o F_cell``: a sum of squares of harmonic functions."""
    bn = hs.B[cell]
    pairs = []
    for v, n in zip(ec.basis_exact, ec.norms):
        pairs.append(([sum((bn[i][t] * v[t] for t in range(3)), Fraction(0)) for i in range(3)], 1 / n))
    return GridFamily(f"(h1^2+h2^2)oF_{cell}", lambda g: _square_sum(hs, pairs, g))


def _laplacian_at(g: LevelGraph, values: Sequence, x: int):
    nb = g.adjacency[x]
    ux = values[x]
    return sum((values[y] - ux for y in nb), 0 * ux) / len(nb)


def graph_laplacian_value(g: LevelGraph, u, x: int):
    """``Delta_m u(x) = (1/deg x) sum_{y ~ x} (u(y) - u(x))`` at a junction ``x``."""
    if g.is_boundary(x):
        raise GasketDomainError("graph Laplacian is only defined at junction points")
    values = u.values if isinstance(u, GridFunction) else u
    return _laplacian_at(g, values, x)


def spline_integral_mu(g: LevelGraph, x: int) -> Fraction:
    """``int psi_x dmu = (1/3)(deg x / 2)(2 / (k(k+1)))^m``."""
    k = g.params.k
    return Fraction(1, 3) * Fraction(len(g.adjacency[x]), 2) * Fraction(2, k * (k + 1)) ** g.level


def _normal_derivative_square_sum(ec: EnergyCoordinates) -> list[Fraction]:
    # d_n(h^2)(q_i) = 2 h(q_i) d_n h(q_i), and d_n h = G h for harmonic h
    out = []
    for i in range(3):
        s = Fraction(0)
        for v, n in zip(ec.basis_exact, ec.norms):
            gv = sum((GRAM0[i][t] * v[t] for t in range(3)), Fraction(0))
            s += 2 * v[i] * gv / n
        out.append(s)
    return out


def spline_integral_nu(hs: HarmonicStructure, ec: EnergyCoordinates, g: LevelGraph, x: int, square_sum=None) -> Fraction:
    """``int psi_x dnu_prime = (1/2) r^-m deg(x) Delta_m(h_1^2 + h_2^2)(x)``.

    At a boundary vertex the Gauss-Green boundary term ``d_n(h_1^2 + h_2^2)``
    is added inside the bracket.
    """
    hsq = square_sum if square_sum is not None else square_sum_family(hs, ec).build(g)
    deg = len(g.adjacency[x])
    val = hs.r ** (-g.level) * deg * _laplacian_at(g, hsq, x)
    if g.is_boundary(x):
        val += _normal_derivative_square_sum(ec)[x]
    return val / 2


@lru_cache(maxsize=None)
def _spline_moments(k: int):
    from .harmonic import harmonic_structure

    hs = harmonic_structure(k)
    pairs = [(a, b) for a in range(3) for b in range(a, 3)]
    nvar = 18

    def var(i, a, b):
        a, b = min(a, b), max(a, b)
        return 6 * i + pairs.index((a, b))

    B = hs.B
    rows = []
    # J_i = r^-1 sum_n sum_l p[n][l][i] B_n^T J_l B_n
    for i in range(3):
        for a, b in pairs:
            row = [Fraction(0)] * nvar
            row[var(i, a, b)] += 1
            for n in range(hs.d):
                bn = B[n]
                for l in range(3):
                    w = bn[l][i] / hs.r
                    if not w:
                        continue
                    for s in range(3):
                        for t in range(3):
                            c = bn[s][a] * bn[t][b]
                            if c:
                                row[var(l, s, t)] -= w * c
            rows.append(row)
    # energy measures ignore constants: J_i 1 = 0
    for i in range(3):
        for a in range(3):
            row = [Fraction(0)] * nvar
            for b in range(3):
                row[var(i, a, b)] += 1
            rows.append(row)
    basis = nullspace(rows)
    # normalisation: sum_i J_i = GRAM0
    norm_rows = []
    rhs = []
    for a, b in pairs:
        norm_rows.append([sum((vec[var(i, a, b)] for i in range(3)), Fraction(0)) for vec in basis])
        rhs.append(GRAM0[a][b])
    coeff = _least_exact(norm_rows, rhs)
    sol = [sum((c * vec[j] for c, vec in zip(coeff, basis)), Fraction(0)) for j in range(nvar)]
    return tuple(
        tuple(tuple(sol[var(i, a, b)] for b in range(3)) for a in range(3)) for i in range(3)
    )


def _least_exact(rows, rhs):
    """Unique exact solution of an overdetermined consistent system."""
    n = len(rows[0])
    if n == 0:
        raise ValueError("empty moment nullspace")
    null = nullspace(rows)
    if null:
        raise ValueError("moment normalisation does not fix a unique solution")
    # normal equations are exact and nonsingular when the columns are independent
    ata = [[sum((r[i] * r[j] for r in rows), Fraction(0)) for j in range(n)] for i in range(n)]
    atb = [sum((r[i] * y for r, y in zip(rows, rhs)), Fraction(0)) for i in range(n)]
    x = solve_sparse([{j: v for j, v in enumerate(row) if v} for row in ata], atb)
    for r, y in zip(rows, rhs):
        if sum((a * b for a, b in zip(r, x)), Fraction(0)) != y:
            raise ValueError("moment normalisation is inconsistent")
    return x


def spline_moment_matrices(hs: HarmonicStructure):
    """Matrices ``J_i`` with ``int_K h_i dnu_g = g^T J_i g`` for harmonic ``g``.

    Solved exactly from the self-similarity of energy measures together
    with ``sum_i J_i = G`` (because ``sum_i h_i = 1``).
    """
    return _spline_moments(hs.k)


def spline_integral_nu_cells(hs: HarmonicStructure, ec: EnergyCoordinates, g: LevelGraph, x: int) -> Fraction:
    """``int psi_x dnu_prime`` summed cell by cell through the moment matrices.

    Independent of graph Laplacians: on a cell ``F_w K`` with ``x = F_w(q_i)``
    the spline is ``h_i o F_w^-1`` and the contribution is
    ``r^-m sum_l (B_w v_l)^T J_i (B_w v_l) / |v_l|^2``.
    """
    J = spline_moment_matrices(hs)
    tables = [cell_boundary_values(hs, v, g.level) for v in ec.basis_exact]
    total = Fraction(0)
    for n, tri in enumerate(g.cells):
        if x not in tri:
            continue
        i = tri.index(x)
        for (den, rows), norm in zip(tables, ec.norms):
            vals = rows[n]
            q = sum((vals[a] * J[i][a][b] * vals[b] for a in range(3) for b in range(3)), Fraction(0))
            total += q / (den * den) / norm
    return total / hs.r**g.level


@dataclass
class LaplacianSequence:
    point: Point
    method: str
    levels: list[int]
    raw: list
    estimates: list
    diffs: list = field(default_factory=list)
    remainders: list | None = None

    def rows(self) -> list[tuple]:
        return [
            (m, raw, est, diff)
            for m, raw, est, diff in zip(self.levels, self.raw, self.estimates, [None] + self.diffs)
        ]


def junction_point(params: GasketParams, w: Sequence[int], corner: int) -> Point:
    """The point ``F_w(q_corner)``."""
    a, b = CORNERS[corner]
    return affine_map_of_word(params, w)(Point(Fraction(a), Fraction(b)))


def first_level(g_params: GasketParams, x: Point) -> int:
    """Smallest ``m`` with ``x`` in ``V_m``."""
    m = 0
    while True:
        s = g_params.k**m
        if (x.a * s).denominator == 1 and (x.b * s).denominator == 1:
            return m
        m += 1


def _levels(params: GasketParams, x: Point, m_max: int, m_min: int | None):
    m0 = first_level(params, x)
    if m0 == 0:
        raise GasketDomainError("pointwise estimates need a junction point, not a boundary vertex")
    start = m0 if m_min is None else max(m0, m_min)
    return list(range(start, m_max + 1))


def _diffs(est):
    return [b - a for a, b in zip(est, est[1:])]


def delta_mu_estimate(params: GasketParams, u: GridFamily, x: Point, m_max: int, m_min: int | None = None) -> LaplacianSequence:
    """``6 (H/2)^m Delta_m u(x)`` with ``H = H(q1, q2)`` on ``Gamma_1``."""
    factor = expected_hitting_time(params, 1) / 2
    levels = _levels(params, x, m_max, m_min)
    raw, est = [], []
    for m in levels:
        g = build_level_graph(params, m)
        val = graph_laplacian_value(g, u.at(g), g.vertex_of(x))
        raw.append(val)
        est.append(6 * factor**m * val)
    return LaplacianSequence(x, "standard", levels, raw, est, _diffs(est))


def delta_nu_estimate(
    hs: HarmonicStructure, ec: EnergyCoordinates, u: GridFamily, x: Point, m_max: int, m_min: int | None = None
) -> LaplacianSequence:
    """``2 Delta_m u(x) / Delta_m(h_1^2 + h_2^2)(x)`` level by level."""
    hsq = square_sum_family(hs, ec)
    levels = _levels(hs.params, x, m_max, m_min)
    raw, est = [], []
    rem = [] if u.nu_laplacian is not None else None
    for m in levels:
        g = build_level_graph(hs.params, m)
        i = g.vertex_of(x)
        num = graph_laplacian_value(g, u.at(g), i)
        den = graph_laplacian_value(g, hsq.at(g), i)
        if den <= 0:
            raise ArithmeticError(f"non-positive denominator at level {m}")
        raw.append(num)
        est.append(2 * num / den)
        if rem is not None:
            rem.append(u.nu_laplacian - est[-1])
    return LaplacianSequence(x, "energy", levels, raw, est, _diffs(est), rem)


def lemma28_remainder(
    hs: HarmonicStructure, ec: EnergyCoordinates, u: GridFamily, x: Point, m: int, reference=None
):
    """``Delta_nu u(x) - 2 Delta_m u(x) / Delta_m(h_1^2 + h_2^2)(x)``.

    ``reference`` supplies ``Delta_nu u(x)`` when the family does not carry
    a constant energy Laplacian.
    """
    ref = u.nu_laplacian if reference is None else reference
    if ref is None:
        raise ValueError("no reference value for the energy Laplacian")
    g = build_level_graph(hs.params, m)
    i = g.vertex_of(x)
    num = graph_laplacian_value(g, u.at(g), i)
    den = graph_laplacian_value(g, square_sum_family(hs, ec).at(g), i)
    return ref - 2 * num / den


def discrete_poisson_solve(
    g: LevelGraph, f, scaling=1, boundary: Sequence | None = None
) -> GridFunction:
    """Solve ``Delta_m u = scaling * f`` at junctions with ``u`` fixed on ``V_0``.

    Exact when ``f``, ``scaling`` and ``boundary`` are rational; floats go
    through a sparse LU factorization.
    """
    fv = f.values if isinstance(f, GridFunction) else list(f)
    bnd = [0, 0, 0] if boundary is None else list(boundary)
    exact = all(isinstance(v, (int, Fraction)) for v in [*fv, scaling, *bnd])
    free = list(g.junctions())
    pos = {x: i for i, x in enumerate(free)}
    if exact:
        bnd = [Fraction(v) for v in bnd]
        scaling = Fraction(scaling)
        rows, rhs = [], []
        for x in free:
            nb = g.adjacency[x]
            row = {pos[x]: Fraction(len(nb))}
            b = -len(nb) * scaling * Fraction(fv[x])
            for y in nb:
                if y in pos:
                    row[pos[y]] = row.get(pos[y], 0) - 1
                else:
                    b += bnd[y]
            rows.append(row)
            rhs.append(b)
        sol = solve_sparse(rows, rhs) if free else []
        values = bnd + list(sol)
    else:
        ri, ci, data = [], [], []
        rhs = np.zeros(len(free))
        for x in free:
            nb = g.adjacency[x]
            ri.append(pos[x]); ci.append(pos[x]); data.append(float(len(nb)))
            rhs[pos[x]] = -len(nb) * float(scaling) * float(fv[x])
            for y in nb:
                if y in pos:
                    ri.append(pos[x]); ci.append(pos[y]); data.append(-1.0)
                else:
                    rhs[pos[x]] += float(bnd[y])
        mat = sp.csc_matrix((data, (ri, ci)), shape=(len(free), len(free)))
        sol = spla.spsolve(mat, rhs) if free else []
        values = [float(v) for v in bnd] + [float(v) for v in sol]
    return GridFunction(g, values, "discrete-solve")


def poisson_family(params: GasketParams, level: int, exact: bool = True) -> GridFamily:
    """Discrete solution of ``Delta_mu u = 1`` with zero boundary values, solved at ``level``.

    The graph equation uses the standard-Laplacian scaling
    ``Delta_level u = (6 (H/2)^level)^-1``; coarser levels see the restriction.
    """
    g = build_level_graph(params, level)
    factor = 6 * (expected_hitting_time(params, 1) / 2) ** level
    one = [Fraction(1)] * g.n_vertices if exact else [1.0] * g.n_vertices
    gf = discrete_poisson_solve(g, one, 1 / factor if exact else float(1 / factor))
    return GridFamily.from_grid(f"poisson@{level}", gf)


def energy_vs_standard_diagnostic(
    hs: HarmonicStructure, ec: EnergyCoordinates, x: Point, level: int
) -> LaplacianSequence:
    """Energy-Laplacian sequence of the standard Poisson solution (report only).

    A function with a finite standard Laplacian should give a sequence that
    does not settle on a nonzero finite value.
    """
    return delta_nu_estimate(hs, ec, poisson_family(hs.params, level), x, level)
