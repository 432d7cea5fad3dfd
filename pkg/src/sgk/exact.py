"""Small exact-arithmetic toolkit built on :class:`fractions.Fraction`.

Matrices are plain lists of rows.  Nothing here is clever; the systems that
show up on the level graphs are sparse, symmetric and diagonally dominant,
so straightforward elimination is enough.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Matrix = list[list[Fraction]]


class SingularSystemError(ValueError):
    """Raised when a linear system has no unique solution."""


def frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def identity(n: int) -> Matrix:
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def matmul(a: Sequence[Sequence], b: Sequence[Sequence]) -> Matrix:
    bt = list(zip(*b))
    return [[sum((x * y for x, y in zip(row, col)), Fraction(0)) for col in bt] for row in a]


def matvec(a: Sequence[Sequence], v: Sequence) -> list[Fraction]:
    return [sum((x * y for x, y in zip(row, v)), Fraction(0)) for row in a]


def transpose(a: Sequence[Sequence]) -> Matrix:
    return [list(col) for col in zip(*a)]


def quad_form(v: Sequence, a: Sequence[Sequence], w: Sequence | None = None) -> Fraction:
    """Return ``v^T a w`` (``w`` defaults to ``v``)."""
    if w is None:
        w = v
    return sum((x * y for x, y in zip(v, matvec(a, w))), Fraction(0))


def as_float(a: Sequence[Sequence]) -> list[list[float]]:
    return [[float(x) for x in row] for row in a]


def solve_sparse(rows: Sequence[dict[int, Fraction]], rhs: Sequence, *, columns: int | None = None):
    """Solve ``A x = b`` by Gaussian elimination on dict-of-rows storage.

    ``rows[i]`` maps column index to the nonzero entry ``A[i][j]``.  ``rhs``
    may hold scalars or equal-length lists (several right-hand sides at once).
    Pivots are taken on the diagonal when possible and searched for below it
    otherwise, so the routine is exact for any nonsingular rational system.
    """
    n = len(rows)
    if columns is not None and columns != n:
        raise SingularSystemError("system is not square")
    a = [dict(r) for r in rows]
    multi = n > 0 and isinstance(rhs[0], (list, tuple))
    b = [list(x) for x in rhs] if multi else [[x] for x in rhs]

    col_rows: list[set[int]] = [set() for _ in range(n)]
    for i, r in enumerate(a):
        for j in r:
            col_rows[j].add(i)

    for p in range(n):
        if not a[p].get(p):
            below = sorted(q for q in col_rows[p] if q > p)
            if not below:
                raise SingularSystemError(f"no pivot in column {p}")
            q = below[0]
            for j in a[p]:
                col_rows[j].discard(p)
            for j in a[q]:
                col_rows[j].discard(q)
            a[p], a[q] = a[q], a[p]
            b[p], b[q] = b[q], b[p]
            for j in a[p]:
                col_rows[j].add(p)
            for j in a[q]:
                col_rows[j].add(q)
        prow = a[p]
        piv = prow[p]
        for q in sorted(q for q in col_rows[p] if q > p):
            row = a[q]
            f = row[p] / piv
            for c, v in prow.items():
                nv = row.get(c, 0) - f * v
                if nv:
                    if c not in row:
                        col_rows[c].add(q)
                    row[c] = nv
                elif c in row:
                    del row[c]
                    col_rows[c].discard(q)
            bp = b[p]
            b[q] = [x - f * y for x, y in zip(b[q], bp)]

    x: list = [None] * n
    for p in range(n - 1, -1, -1):
        acc = list(b[p])
        for c, v in a[p].items():
            if c != p:
                acc = [s - v * t for s, t in zip(acc, x[c])]
        x[p] = [s / a[p][p] for s in acc]
    return x if multi else [v[0] for v in x]


def solve_dense(a: Sequence[Sequence], b: Sequence) -> list:
    rows = [{j: frac(v) for j, v in enumerate(r) if v} for r in a]
    return solve_sparse(rows, [frac(v) if not isinstance(v, (list, tuple)) else [frac(t) for t in v] for v in b])


def nullspace(a: Sequence[Sequence]) -> Matrix:
    """Basis of the right nullspace of ``a`` via reduced row echelon form."""
    m = [[frac(x) for x in row] for row in a]
    nrows = len(m)
    ncols = len(m[0]) if m else 0
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, nrows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(nrows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -m[i][fc]
        basis.append(v)
    return basis


def charpoly3(a: Sequence[Sequence]) -> tuple[Fraction, Fraction, Fraction]:
    """Coefficients ``(c2, c1, c0)`` of ``det(tI - a) = t^3 + c2 t^2 + c1 t + c0``."""
    a = [[frac(x) for x in row] for row in a]
    tr = a[0][0] + a[1][1] + a[2][2]
    minors = (
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
        + a[0][0] * a[2][2] - a[0][2] * a[2][0]
        + a[1][1] * a[2][2] - a[1][2] * a[2][1]
    )
    det = (
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    )
    return -tr, minors, -det


def format_fraction(x: Fraction) -> str:
    return str(frac(x))


def parse_fraction(s: str) -> Fraction:
    return Fraction(s)


def fractions_to_str(values: Iterable) -> list:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.append(fractions_to_str(v))
        else:
            out.append(format_fraction(v))
    return out
