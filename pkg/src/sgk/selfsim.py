"""Matrices transporting energy-measure vectors under the cell maps.

For every cell ``n`` the rational matrix ``M_n`` satisfies
``nu(F_n C) = M_n nu(C)`` for every cell ``C``, where ``nu`` is the vector
``(nu_0, nu_1, nu_2)`` of energy measures of the standard harmonic basis.
Column sums of ``M_n`` give the variable weights ``Q_n = sum_i S_i^n R_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .exact import Matrix, matvec
from .harmonic import HarmonicStructure
from .measures import cell_vector_table, energy_cell_vector
from .topology import GasketParams, Word, cell_rotation

#: The SG_3 matrices as printed in the literature (numerators over 105), in
#: the printed cell order: the three corner cells, then one rotation orbit.
SG3_PRINTED_NUMERATORS: tuple[tuple[tuple[int, ...], ...], ...] = (
    ((49, 0, 0), (12, 4, -3), (12, -3, 4)),
    ((4, 12, -3), (0, 49, 0), (-3, 12, 4)),
    ((4, -3, 12), (-3, 4, 12), (0, 0, 49)),
    ((4, 0, 0), (-3, 12, 4), (-3, 4, 12)),
    ((12, -3, 4), (0, 4, 0), (4, -3, 12)),
    ((12, 4, -3), (4, 12, -3), (0, 0, 4)),
)


class IdentityViolation(AssertionError):
    def __init__(self, message: str, witness):
        super().__init__(f"{message}: witness {witness!r}")
        self.witness = witness


@dataclass(frozen=True)
class MMatrixFamily:
    hs: HarmonicStructure
    M: tuple[Matrix, ...]
    S: tuple[tuple[Fraction, Fraction, Fraction], ...] = field(init=False)

    def __post_init__(self):
        sums = tuple(tuple(sum((m[j][i] for j in range(3)), Fraction(0)) for i in range(3)) for m in self.M)
        object.__setattr__(self, "S", sums)

    @property
    def k(self) -> int:
        return self.hs.k

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "k": self.k,
            "M": [[[str(x) for x in row] for row in m] for m in self.M],
            "S": [[str(x) for x in s] for s in self.S],
        }


def m_matrices(hs: HarmonicStructure) -> MMatrixFamily:
    """Assemble ``M_n = [mu^n_{ji}]`` from the extension probabilities and ``1/r``."""
    inv_r = 1 / hs.r
    mats = []
    for pn in hs.p:
        rows = []
        for j in range(3):
            a, b, c = pn[0][j], pn[1][j], pn[2][j]
            rows.append([
                inv_r * (a * a - a * b - a * c + b * c),
                inv_r * (b * b - a * b + a * c - b * c),
                inv_r * (c * c + a * b - a * c - b * c),
            ])
        mats.append(rows)
    return MMatrixFamily(hs, tuple(mats))


def rotation_groups(params: GasketParams) -> list[tuple[int, ...]]:
    """Cells grouped into orbits of the rotation ``q0 -> q1 -> q2``.

    The corner orbit comes first and starts at cell 0; every other orbit
    starts at its largest index.  A rotation-fixed middle cell (when
    ``k = 3l + 1``) forms a group of one, placed last.
    """
    rot = cell_rotation(params)
    seen: set[int] = set()
    groups = []
    fixed = []
    for n in [0] + sorted(range(params.d), reverse=True):
        if n in seen:
            continue
        orbit = [n]
        while rot[orbit[-1]] != n:
            orbit.append(rot[orbit[-1]])
        seen.update(orbit)
        (groups if len(orbit) == 3 else fixed).append(tuple(orbit))
    return groups + fixed


def grouped_order(params: GasketParams) -> list[int]:
    """Relabeling from printed (grouped) order to row-major cell indices."""
    return [n for grp in rotation_groups(params) for n in grp]


#: printed SG_3 index -> row-major cell index
SG3_PRINTED_ORDER: tuple[int, ...] = (0, 2, 5, 4, 3, 1)


def relabel(mm: MMatrixFamily, order: Sequence[int]) -> list[Matrix]:
    return [mm.M[n] for n in order]


def middle_cell(params: GasketParams) -> int | None:
    rot = cell_rotation(params)
    fixed = [n for n in range(params.d) if rot[n] == n]
    return fixed[0] if fixed else None


@dataclass(frozen=True)
class CheckReport:
    checked: int
    max_deviation: Fraction


def verify_vector_identity(hs: HarmonicStructure, mm: MMatrixFamily, depth: int) -> CheckReport:
    """Check ``nu(i.w) == M_i nu(w)`` exactly for all ``|w| <= depth`` and all cells ``i``."""
    table = cell_vector_table(hs, depth + 1)
    checked = 0
    for w, mv in table.items():
        if len(w) > depth:
            continue
        for i in range(hs.d):
            lhs = table[(i,) + w].nu
            rhs = matvec(mm.M[i], mv.nu)
            if tuple(lhs) != tuple(rhs):
                raise IdentityViolation("vector identity fails", ((i,), w))
            checked += 1
    return CheckReport(checked, Fraction(0))


def weights_Q(mm: MMatrixFamily, rn: Sequence) -> list[Fraction]:
    """``Q_j = sum_i S_i^j R_i`` for a probability vector ``rn``."""
    rn = [Fraction(x) for x in rn]
    if sum(rn) != 1:
        raise ValueError("Radon-Nikodym vector must sum to 1")
    return [sum((s * r for s, r in zip(sn, rn)), Fraction(0)) for sn in mm.S]


def weighted_identity_check(hs: HarmonicStructure, mm: MMatrixFamily, depth: int) -> CheckReport:
    """Check ``nu_std(F_n F_u K) == Q_n(R(u)) nu_std(F_u K)`` for all ``|u| <= depth``."""
    table = cell_vector_table(hs, depth + 1)
    checked = 0
    for u, mv in table.items():
        if len(u) > depth:
            continue
        q = weights_Q(mm, mv.radon_nikodym())
        for n in range(hs.d):
            lhs = table[(n,) + u].total_std
            if lhs != q[n] * mv.total_std:
                raise IdentityViolation("weighted identity fails", ((n,), u))
            checked += 1
    return CheckReport(checked, Fraction(0))


def q_word_product(hs: HarmonicStructure, mm: MMatrixFamily, w: Sequence[int], u: Sequence[int] = ()) -> Fraction:
    """``Q_w`` at the cell ``u``: ``Q_{w_m}(u) Q_{w_{m-1}}(w_m u) ... Q_{w_1}(w_2...w_m u)``.

    Telescopes to ``nu_std(F_w F_u K) / nu_std(F_u K)``.
    """
    w = hs.params.check_word(w)
    u = hs.params.check_word(u)
    if not w:
        raise ValueError("w must be nonempty")
    acc = Fraction(1)
    tail: Word = u
    for s in reversed(w):
        q = weights_Q(mm, energy_cell_vector(hs, tail, cap=len(tail)).radon_nikodym())
        acc *= q[s]
        tail = (s,) + tail
    return acc


@dataclass
class ScalingReport:
    """Pointwise check of ``Delta_nu(u o F_j) = r Q_j (Delta_nu u) o F_j`` for ``u = h_1^2 + h_2^2``.

    Per level ``m``: ``estimate`` is the energy-Laplacian estimate of
    ``u o F_j`` at the junction, ``spline_reference`` the right side with
    ``Q_j`` averaged against the level-``m`` spline at the junction (equal to
    the estimate exactly), and ``cylinder_reference`` the right side with
    ``Q_j`` built from the level-``m`` cells containing the junction.  For a
    rotation-fixed middle cell ``Q_c`` is constant and ``middle_constant``
    holds ``E(h_1 o F_c) / 2`` with ``h_1`` the standard harmonic function.
    """

    cell: int
    point: object
    levels: list[int]
    estimate: list[Fraction]
    spline_reference: list[Fraction]
    cylinder_reference: list[Fraction]
    middle_constant: Fraction | None = None

    def middle_deviations(self) -> list[Fraction] | None:
        """Exact deviation of the estimate from ``middle_constant * Delta_nu u`` (middle cell only)."""
        if self.middle_constant is None:
            return None
        return [abs(e - 2 * self.middle_constant) for e in self.estimate]

    @property
    def deviations(self) -> list[float]:
        return [abs(float(a - b)) for a, b in zip(self.estimate, self.cylinder_reference)]


def laplacian_scaling_experiment(hs: HarmonicStructure, mm: MMatrixFamily, j: int, max_level: int, point=None) -> ScalingReport:
    from .laplacian import (
        _laplacian_at,
        composed_square_sum_family,
        first_level,
        harmonic_square_family,
        junction_point,
        square_sum_family,
    )
    from .measures import energy_orthobasis
    from .topology import build_level_graph

    if not 0 <= j < hs.d:
        raise ValueError(f"cell {j} outside 0..{hs.d - 1}")
    ec = energy_orthobasis(hs)
    x = point if point is not None else junction_point(hs.params, (0,), 1)
    lhs_family = composed_square_sum_family(hs, ec, j)
    denom_family = square_sum_family(hs, ec)
    squares = [harmonic_square_family(hs, i) for i in range(3)]
    report = ScalingReport(j, x, [], [], [], [])
    for m in range(max(first_level(hs.params, x), 1), max_level + 1):
        g = build_level_graph(hs.params, m)
        y = g.vertex_of(x)
        est = 2 * _laplacian_at(g, lhs_family.build(g), y) / _laplacian_at(g, denom_family.build(g), y)
        lap_sq = [_laplacian_at(g, f.build(g), y) for f in squares]
        tot = sum(lap_sq, Fraction(0))
        spline_q = weights_Q(mm, [v / tot for v in lap_sq])[j]
        nu = [Fraction(0)] * 3
        for n, tri in enumerate(g.cells):
            if y in tri:
                w = []
                idx = n
                for _ in range(m):
                    idx, s = divmod(idx, hs.d)
                    w.append(s)
                mv = energy_cell_vector(hs, tuple(reversed(w)), cap=m)
                nu = [a + b for a, b in zip(nu, mv.nu)]
        cyl_q = weights_Q(mm, [v / sum(nu) for v in nu])[j]
        report.levels.append(m)
        report.estimate.append(est)
        report.spline_reference.append(2 * hs.r * spline_q)
        report.cylinder_reference.append(2 * hs.r * cyl_q)
    c = middle_cell(hs.params)
    if c is not None and j == c:
        report.middle_constant = middle_cell_energy(hs, c) / 2
    return report


def middle_cell_energy(hs: HarmonicStructure, c: int) -> Fraction:
    """``E(h_1 o F_c)`` for the standard harmonic function ``h_1`` (values ``(0, 1, 0)``, energy 2)."""
    from .exact import quad_form
    from .harmonic import GRAM0

    img = [hs.B[c][i][1] for i in range(3)]
    return quad_form(img, GRAM0)
