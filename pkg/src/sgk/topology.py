"""Addresses, cell maps and graph approximations of the level-k gaskets.

Points are stored in lattice coordinates ``(a, b)`` meaning ``a*q1 + b*q2``
with ``q0 = (0, 0)``, ``q1 = (1, 0)`` and ``q2 = (1/2, sqrt(3)/2)``.  In these
coordinates every vertex of the level-``m`` graph has denominator ``k**m``,
so vertex identification is exact integer comparison.  The Cartesian form
``(a + b/2, (b/2)*sqrt(3))`` is exposed through :class:`Point`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

Word = tuple[int, ...]

#: Lattice coordinates of the boundary points q0, q1, q2.
CORNERS: tuple[tuple[int, int], ...] = ((0, 0), (1, 0), (0, 1))

_DEFAULT_CAPS = {2: 10, 3: 6}
_CELL_BUDGET = 250_000


class GasketDomainError(ValueError):
    """Invalid level, symbol, word length or vertex."""


class DepthCapError(ValueError):
    """Requested depth exceeds the configured cap."""


@dataclass(frozen=True, order=True)
class Point:
    """A point of the plane in lattice coordinates ``a*q1 + b*q2``."""

    a: Fraction
    b: Fraction

    @property
    def x(self) -> Fraction:
        return self.a + self.b / 2

    @property
    def y_sqrt3(self) -> Fraction:
        """Coefficient of sqrt(3) in the y coordinate."""
        return self.b / 2

    def cartesian(self) -> tuple[float, float]:
        return float(self.x), float(self.y_sqrt3) * math.sqrt(3.0)

    def to_json(self) -> dict:
        return {"x": str(self.x), "y_sqrt3": str(self.y_sqrt3)}

    @classmethod
    def from_cartesian(cls, x, y_sqrt3) -> "Point":
        b = 2 * Fraction(y_sqrt3)
        return cls(Fraction(x) - b / 2, b)


Q0 = Point(Fraction(0), Fraction(0))
Q1 = Point(Fraction(1), Fraction(0))
Q2 = Point(Fraction(0), Fraction(1))


@dataclass(frozen=True)
class GasketParams:
    k: int
    d: int
    offsets: tuple[tuple[int, int], ...]
    hausdorff_dim: float

    @property
    def translations(self) -> list[Point]:
        """The translation vectors ``b_i`` of the contractions ``x/k + b_i``."""
        return [Point(Fraction(c, self.k), Fraction(r, self.k)) for c, r in self.offsets]

    def cell_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.k and 0 <= col < self.k - row):
            raise GasketDomainError(f"no upward cell at row {row}, column {col}")
        return sum(self.k - i for i in range(row)) + col

    def check_word(self, w: Sequence[int]) -> Word:
        w = tuple(int(s) for s in w)
        for s in w:
            if not 0 <= s < self.d:
                raise GasketDomainError(f"symbol {s} outside 0..{self.d - 1}")
        return w

    def default_cap(self) -> int:
        if self.k in _DEFAULT_CAPS:
            return _DEFAULT_CAPS[self.k]
        return max(1, int(math.log(_CELL_BUDGET) / math.log(self.d)))

    def words(self, m: int) -> Iterator[Word]:
        return itertools.product(range(self.d), repeat=m)


def gasket_params(k: int) -> GasketParams:
    """Contraction data of ``SG_k``.

    Cells are enumerated row by row from the bottom, left to right, so cell
    ``0`` holds ``q0``, cell ``k-1`` holds ``q1`` and cell ``d-1`` holds ``q2``.
    """
    if not isinstance(k, int) or k < 2:
        raise GasketDomainError(f"level k must be an integer >= 2, got {k!r}")
    offsets = tuple((c, r) for r in range(k) for c in range(k - r))
    s = 1 + (math.log(k + 1) - math.log(2)) / math.log(k)
    return GasketParams(k=k, d=k * (k + 1) // 2, offsets=offsets, hausdorff_dim=s)


@dataclass(frozen=True)
class AffineMap:
    """``p -> scale * p + shift`` acting on lattice coordinates."""

    scale: Fraction
    shift: Point

    def __call__(self, p: Point) -> Point:
        return Point(self.scale * p.a + self.shift.a, self.scale * p.b + self.shift.b)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """Return ``self o inner``."""
        return AffineMap(self.scale * inner.scale, self(inner.shift))


IDENTITY_MAP = AffineMap(Fraction(1), Q0)


def affine_map_of_word(params: GasketParams, w: Sequence[int]) -> AffineMap:
    """``F_w = F_{w_1} o ... o F_{w_m}``; the empty word gives the identity."""
    w = params.check_word(w)
    f = IDENTITY_MAP
    for s in w:
        c, r = params.offsets[s]
        f = f.compose(AffineMap(Fraction(1, params.k), Point(Fraction(c, params.k), Fraction(r, params.k))))
    return f


def vertex_census(params: GasketParams, m: int) -> int:
    if m < 0:
        raise GasketDomainError("level must be non-negative")
    k = params.k
    num = params.d**m * (k + 4) + 2 * (k + 1)
    assert num % (k + 2) == 0
    return num // (k + 2)


def _word_bases(params: GasketParams, m: int) -> list[tuple[int, int]]:
    """Scaled translations ``k**m * F_w(q0)`` for all words in lexicographic order."""
    bases = [(0, 0)]
    k = params.k
    for _ in range(m):
        bases = [(k * a + c, k * b + r) for a, b in bases for c, r in params.offsets]
    return bases


@dataclass(frozen=True, eq=False)
class LevelGraph:
    """The graph ``Gamma_m``.

    ``keys[i]`` is vertex ``i`` in lattice coordinates scaled by ``k**level``.
    Vertices 0, 1, 2 are always ``q0, q1, q2``; the remaining vertices are
    sorted by row then column.  ``cells[n]`` is the vertex triple
    ``(F_w(q0), F_w(q1), F_w(q2))`` of the ``n``-th word in lexicographic order.
    """

    params: GasketParams
    level: int
    keys: tuple[tuple[int, int], ...]
    cells: tuple[tuple[int, int, int], ...]
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...]
    index: dict = field(repr=False)

    boundary = (0, 1, 2)

    @property
    def n_vertices(self) -> int:
        return len(self.keys)

    @property
    def degree(self) -> list[int]:
        return [len(nb) for nb in self.adjacency]

    @property
    def scale(self) -> int:
        return self.params.k**self.level

    def point(self, i: int) -> Point:
        a, b = self.keys[i]
        return Point(Fraction(a, self.scale), Fraction(b, self.scale))

    def vertex_of(self, p: Point) -> int:
        """Index of the vertex at ``p``; raises if ``p`` is not in ``V_m``."""
        s = self.scale
        a, b = p.a * s, p.b * s
        if a.denominator != 1 or b.denominator != 1 or (a.numerator, b.numerator) not in self.index:
            raise GasketDomainError(f"{p} is not a vertex of level {self.level}")
        return self.index[(a.numerator, b.numerator)]

    def is_boundary(self, i: int) -> bool:
        return i < 3

    def junctions(self) -> range:
        return range(3, self.n_vertices)

    def word_index(self, w: Sequence[int]) -> int:
        w = self.params.check_word(w)
        if len(w) != self.level:
            raise GasketDomainError(f"word of length {len(w)} on a level-{self.level} graph")
        n = 0
        for s in w:
            n = n * self.params.d + s
        return n

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "k": self.params.k,
            "level": self.level,
            "vertices": [self.point(i).to_json() for i in range(self.n_vertices)],
            "edges": [list(e) for e in self.edges],
            "degree": self.degree,
            "boundary": list(self.boundary),
        }


def cell_vertex_triple(g: LevelGraph, w: Sequence[int]) -> tuple[int, int, int]:
    return g.cells[g.word_index(w)]


def build_level_graph(params: GasketParams, m: int, max_level: int | None = None) -> LevelGraph:
    if m < 0:
        raise GasketDomainError("level must be non-negative")
    cap = params.default_cap() if max_level is None else max_level
    if m > cap:
        raise DepthCapError(f"level {m} exceeds the cap {cap} for k={params.k}")
    bases = _word_bases(params, m)
    scale = params.k**m
    top = [(0, 0), (scale, 0), (0, scale)]

    seen: set[tuple[int, int]] = set(top)
    raw_cells = []
    for a, b in bases:
        tri = ((a, b), (a + 1, b), (a, b + 1))
        seen.update(tri)
        raw_cells.append(tri)
    rest = sorted((key for key in seen if key not in top), key=lambda t: (t[1], t[0]))
    keys = tuple(top + rest)
    index = {key: i for i, key in enumerate(keys)}

    cells = tuple((index[t0], index[t1], index[t2]) for t0, t1, t2 in raw_cells)
    adj: list[set[int]] = [set() for _ in keys]
    edges = set()
    for x, y, z in cells:
        for u, v in ((x, y), (x, z), (y, z)):
            adj[u].add(v)
            adj[v].add(u)
            edges.add((min(u, v), max(u, v)))
    return LevelGraph(
        params=params,
        level=m,
        keys=keys,
        cells=cells,
        edges=tuple(sorted(edges)),
        adjacency=tuple(tuple(sorted(s)) for s in adj),
        index=index,
    )


def rotate_point(p: Point) -> Point:
    """Counterclockwise rotation by 2*pi/3 about the centroid (q0 -> q1 -> q2 -> q0)."""
    return Point(1 - p.a - p.b, p.a)


def reflect_point(p: Point) -> Point:
    """Reflection in the axis through q0 (swaps q1 and q2)."""
    return Point(p.b, p.a)


def _cell_image(params: GasketParams, n: int, sym) -> int:
    f = affine_map_of_word(params, (n,))
    # centroid of the image triangle identifies the cell
    pts = [sym(f(q)) for q in (Q0, Q1, Q2)]
    ca = sum((p.a for p in pts), Fraction(0)) / 3
    cb = sum((p.b for p in pts), Fraction(0)) / 3
    k = params.k
    col = math.floor(ca * k - Fraction(1, 3))
    row = math.floor(cb * k - Fraction(1, 3))
    return params.cell_index(row, col)


def cell_rotation(params: GasketParams) -> list[int]:
    """Permutation ``n -> n'`` with ``F_{n'}K`` the rotated image of ``F_nK``."""
    return [_cell_image(params, n, rotate_point) for n in range(params.d)]


def cell_reflection(params: GasketParams) -> list[int]:
    return [_cell_image(params, n, reflect_point) for n in range(params.d)]


def parse_word(text: str, d: int) -> Word:
    """Parse a word: digit string when ``d <= 10``, comma-separated otherwise."""
    text = text.strip()
    if not text:
        return ()
    if "," in text or d > 10:
        parts = [t for t in text.split(",") if t.strip()]
        w = tuple(int(t) for t in parts)
    else:
        if not text.isdigit():
            raise GasketDomainError(f"cannot parse word {text!r}")
        w = tuple(int(c) for c in text)
    for s in w:
        if not 0 <= s < d:
            raise GasketDomainError(f"symbol {s} outside 0..{d - 1}")
    return w


def format_word(w: Sequence[int], d: int) -> str:
    if d <= 10:
        return "".join(str(s) for s in w)
    return ",".join(str(s) for s in w)
