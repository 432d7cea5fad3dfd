"""Exact harmonic structure of ``SG_k`` and random-walk oracles on ``Gamma_1``."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .exact import Matrix, SingularSystemError, quad_form, solve_sparse
from .topology import GasketParams, LevelGraph, build_level_graph, gasket_params

GRAM0: tuple[tuple[Fraction, ...], ...] = tuple(
    tuple(Fraction(2 if i == j else -1) for j in range(3)) for i in range(3)
)

METHODS = ("energy-ratio", "corner-eigenvalue", "resistance", "hitting-time")


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class HarmonicStructure:
    """Extension data of ``SG_k``.

    ``p[n][i][j]`` is the value of the standard harmonic function ``h_j`` at
    ``F_n(q_i)``; read as a matrix for fixed ``n`` it is ``B_n``, so that the
    boundary values of ``h o F_n`` are ``B_n @ h``.
    """

    params: GasketParams
    r: Fraction
    p: tuple[tuple[tuple[Fraction, ...], ...], ...]
    gram0: tuple[tuple[Fraction, ...], ...] = GRAM0

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def B(self) -> list[Matrix]:
        return [[list(row) for row in bn] for bn in self.p]

    @property
    def denominator(self) -> int:
        """Least common denominator of all extension probabilities."""
        den = 1
        for bn in self.p:
            for row in bn:
                for x in row:
                    den = math.lcm(den, x.denominator)
        return den

    def integer_B(self) -> tuple[int, list[list[list[int]]]]:
        den = self.denominator
        return den, [[[int(x * den) for x in row] for row in bn] for bn in self.p]


def _check_connected(g: LevelGraph) -> None:
    seen = {0}
    stack = [0]
    while stack:
        x = stack.pop()
        for y in g.adjacency[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    if len(seen) != g.n_vertices:
        raise DisconnectedGraphError("graph is not connected")


def _dirichlet(g: LevelGraph, fixed: Mapping[int, Sequence[Fraction]], nrhs: int):
    """Harmonic extension of several boundary data at once."""
    if not fixed:
        raise ValueError("boundary set must be nonempty")
    _check_connected(g)
    free = [x for x in range(g.n_vertices) if x not in fixed]
    pos = {x: i for i, x in enumerate(free)}
    rows = []
    rhs = []
    for x in free:
        nb = g.adjacency[x]
        row = {pos[x]: Fraction(len(nb))}
        b = [Fraction(0)] * nrhs
        for y in nb:
            if y in pos:
                row[pos[y]] = row.get(pos[y], 0) - 1
            else:
                b = [s + t for s, t in zip(b, fixed[y])]
        rows.append(row)
        rhs.append(b)
    sol = solve_sparse(rows, rhs) if free else []
    out = [None] * g.n_vertices
    for x, v in fixed.items():
        out[x] = [Fraction(t) for t in v]
    for x, v in zip(free, sol):
        out[x] = v
    return out


def solve_dirichlet(g: LevelGraph, boundary_values: Mapping[int, Fraction]) -> list[Fraction]:
    """Graph-harmonic function on ``g`` with prescribed values on a vertex set.

    Exact rational Gaussian elimination on the mean-value equations
    ``deg(x) u(x) = sum_{y ~ x} u(y)`` at every free vertex.
    """
    vals = _dirichlet(g, {x: [Fraction(v)] for x, v in boundary_values.items()}, 1)
    return [v[0] for v in vals]


@lru_cache(maxsize=None)
def _level_one(k: int) -> LevelGraph:
    return build_level_graph(gasket_params(k), 1)


def _standard_harmonic_level_one(params: GasketParams):
    g = _level_one(params.k)
    fixed = {q: [Fraction(int(q == j)) for j in range(3)] for q in range(3)}
    return g, _dirichlet(g, fixed, 3)


def raw_energy(g: LevelGraph, values: Sequence) -> Fraction:
    return sum(((values[x] - values[y]) ** 2 for x, y in g.edges), Fraction(0))


def energy_ratio(params: GasketParams, boundary: Sequence) -> Fraction:
    """``E_1^raw(extension) / E_0^raw(boundary)`` on ``Gamma_1``."""
    g = _level_one(params.k)
    h = solve_dirichlet(g, {q: Fraction(boundary[q]) for q in range(3)})
    e0 = quad_form([Fraction(t) for t in boundary], GRAM0)
    if e0 == 0:
        raise ValueError("boundary data must be non-constant")
    return raw_energy(g, h) / e0


def schur_complement(g: LevelGraph, keep: Sequence[int]) -> Matrix:
    """Exact Schur complement of the unit-conductance Laplacian onto ``keep``."""
    keep = list(keep)
    kpos = {x: i for i, x in enumerate(keep)}
    elim = [x for x in range(g.n_vertices) if x not in kpos]
    epos = {x: i for i, x in enumerate(elim)}
    n = len(keep)
    # L_kk - L_ke L_ee^{-1} L_ek
    lkk = [[Fraction(0)] * n for _ in range(n)]
    for x in keep:
        lkk[kpos[x]][kpos[x]] = Fraction(len(g.adjacency[x]))
        for y in g.adjacency[x]:
            if y in kpos:
                lkk[kpos[x]][kpos[y]] -= 1
    if not elim:
        return lkk
    rows = []
    rhs = []
    for x in elim:
        row = {epos[x]: Fraction(len(g.adjacency[x]))}
        b = [Fraction(0)] * n
        for y in g.adjacency[x]:
            if y in epos:
                row[epos[y]] = row.get(epos[y], 0) - 1
            else:
                b[kpos[y]] -= 1  # column of L_ek
        rows.append(row)
        rhs.append(b)
    x_sol = solve_sparse(rows, rhs)  # L_ee^{-1} L_ek
    for x in keep:
        for y in g.adjacency[x]:
            if y in epos:
                # L_ke[x, y] = -1
                for c in range(n):
                    lkk[kpos[x]][c] += x_sol[epos[y]][c]
    return lkk


def effective_resistance(g: LevelGraph, a: int, b: int) -> Fraction:
    """Effective resistance between boundary vertices through the V_0 Schur complement."""
    keep = sorted({0, 1, 2} | {a, b})
    s = schur_complement(g, keep)
    pos = {x: i for i, x in enumerate(keep)}
    # ground b and inject unit current at a
    free = [x for x in keep if x != b]
    rows = [{j: s[pos[x]][pos[y]] for j, y in enumerate(free) if s[pos[x]][pos[y]]} for x in free]
    rhs = [Fraction(int(x == a)) for x in free]
    v = solve_sparse(rows, rhs)
    return v[free.index(a)]


def expected_hitting_time(params: GasketParams, m: int = 1, source: int = 1, target: int = 2) -> Fraction:
    """Expected number of steps of the simple walk on ``Gamma_m`` from ``source`` to ``target``."""
    g = _level_one(params.k) if m == 1 else build_level_graph(params, m)
    free = [x for x in range(g.n_vertices) if x != target]
    pos = {x: i for i, x in enumerate(free)}
    rows = []
    for x in free:
        nb = g.adjacency[x]
        row = {pos[x]: Fraction(1)}
        for y in nb:
            if y != target:
                row[pos[y]] = row.get(pos[y], 0) - Fraction(1, len(nb))
        rows.append(row)
    t = solve_sparse(rows, [Fraction(1)] * len(free))
    return t[pos[source]]


def return_probability(params: GasketParams) -> Fraction:
    """Probability that the walk from ``q0`` on ``Gamma_1`` returns before hitting ``q1`` or ``q2``.

    Solved as an absorbing chain: transient states are the junctions of
    ``Gamma_1``, absorbing states are ``V_0``.
    """
    g = _level_one(params.k)
    transient = list(range(3, g.n_vertices))
    pos = {x: i for i, x in enumerate(transient)}
    rows = []
    rhs = []
    for x in transient:
        nb = g.adjacency[x]
        step = Fraction(1, len(nb))
        row = {pos[x]: Fraction(1)}
        absorbed = Fraction(0)
        for y in nb:
            if y in pos:
                row[pos[y]] = row.get(pos[y], 0) - step
            elif y == 0:
                absorbed += step
        rows.append(row)
        rhs.append(absorbed)
    hit = solve_sparse(rows, rhs)
    first = g.adjacency[0]
    return sum((hit[pos[y]] if y in pos else Fraction(int(y == 0)) for y in first), Fraction(0)) / len(first)


def renormalization_constant(params: GasketParams, method: str = "energy-ratio") -> Fraction:
    if method == "energy-ratio":
        return energy_ratio(params, (1, 0, 0))
    if method == "corner-eigenvalue":
        g, h = _standard_harmonic_level_one(params)
        x, y = g.cells[0][1], g.cells[0][2]
        px, py = h[x], h[y]
        if not (px[0] == py[0] and px[1] == py[2] and px[2] == py[1]):
            raise AssertionError("corner extension matrix lacks the reflection symmetry")
        # eigenvalues of the corner matrix are 1, p1 + p2 and p1 - p2
        return px[1] + px[2]
    if method == "resistance":
        g = _level_one(params.k)
        return Fraction(2) / (3 * effective_resistance(g, 1, 2))
    if method == "hitting-time":
        return Fraction(2 * params.d) / expected_hitting_time(params, 1)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


@lru_cache(maxsize=None)
def _structure(k: int) -> HarmonicStructure:
    params = gasket_params(k)
    g, h = _standard_harmonic_level_one(params)
    p = tuple(tuple(tuple(h[v]) for v in g.cells[n]) for n in range(params.d))
    for bn in p:
        for row in bn:
            if sum(row) != 1 or min(row) < 0:
                raise AssertionError("extension probabilities are not row-stochastic")
    return HarmonicStructure(params=params, r=renormalization_constant(params), p=p)


def extension_tensor(params: GasketParams) -> HarmonicStructure:
    return _structure(params.k)


def harmonic_structure(k: int) -> HarmonicStructure:
    return _structure(k)


def cell_boundary_values(hs: HarmonicStructure, boundary: Sequence, m: int) -> tuple[int, list[tuple[int, int, int]]]:
    """Boundary values of ``h o F_w`` for every level-``m`` word, as integers.

    Returns ``(den, rows)`` with ``rows[n][i] / den`` the value of the
    harmonic extension at ``F_w(q_i)`` for the ``n``-th word.
    """
    bfr = [Fraction(t) for t in boundary]
    den0 = math.lcm(*(t.denominator for t in bfr))
    vec = tuple(int(t * den0) for t in bfr)
    dB, nB = hs.integer_B()
    level = [vec]
    for _ in range(m):
        nxt = []
        for v0, v1, v2 in level:
            for bn in nB:
                nxt.append(tuple(r[0] * v0 + r[1] * v1 + r[2] * v2 for r in bn))
        level = nxt
    return den0 * dB**m, level


def extend_harmonic(hs: HarmonicStructure, boundary: Sequence, m: int, graph: LevelGraph | None = None) -> list[Fraction]:
    """Harmonic extension of boundary data to ``V_m`` by iterating the cell matrices."""
    g = graph if graph is not None else build_level_graph(hs.params, m)
    if g.level != m:
        raise ValueError("graph level does not match m")
    den, rows = cell_boundary_values(hs, boundary, m)
    num: list[int | None] = [None] * g.n_vertices
    for tri, vals in zip(g.cells, rows):
        for x, v in zip(tri, vals):
            num[x] = v
    cache: dict[int, Fraction] = {}
    return [cache.setdefault(v, Fraction(v, den)) for v in num]


def renormalized_energy(hs: HarmonicStructure, g: LevelGraph, values: Sequence) -> Fraction:
    return raw_energy(g, values) / hs.r**g.level


@dataclass(frozen=True)
class WalkStats:
    estimate: float
    standard_error: float
    samples: int
    seed: int


_BLOCK = 1 << 16


def _neighbour_table(g: LevelGraph) -> tuple[np.ndarray, np.ndarray]:
    deg = np.array([len(nb) for nb in g.adjacency], dtype=np.int64)
    table = np.zeros((g.n_vertices, int(deg.max())), dtype=np.int64)
    for x, nb in enumerate(g.adjacency):
        table[x, : len(nb)] = nb
    return table, deg


def _block_rng(seed: int, block: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, block); independent of scheduling
    return np.random.Generator(np.random.Philox(key=(int(seed) & (2**64 - 1)) | (block << 64)))


def _walk_block(table, deg, target: str, n: int, rng: np.random.Generator) -> np.ndarray:
    def step(pos):
        j = (rng.random(pos.size) * deg[pos]).astype(np.int64)
        return table[pos, j]

    if target == "return-prob":
        pos = step(np.zeros(n, dtype=np.int64))
        active = np.flatnonzero(pos >= 3)
        while active.size:
            pos[active] = step(pos[active])
            active = active[pos[active] >= 3]
        return (pos == 0).astype(np.float64)
    if target == "hitting-time":
        pos = np.ones(n, dtype=np.int64)
        steps = np.zeros(n, dtype=np.float64)
        active = np.arange(n)
        while active.size:
            pos[active] = step(pos[active])
            steps[active] += 1
            active = active[pos[active] != 2]
        return steps
    raise ValueError(f"unknown walk target {target!r}")


def monte_carlo_walk(params: GasketParams, target: str, samples: int, seed: int, threads: int = 1) -> WalkStats:
    """Monte Carlo estimate of the return probability or of ``H(q1, q2)`` on ``Gamma_1``.

    Samples are processed in fixed blocks of 65536; block ``b`` draws from a
    Philox stream keyed by ``(seed, b)``, so the result does not depend on
    ``threads``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if target not in ("return-prob", "hitting-time"):
        raise ValueError(f"unknown walk target {target!r}")
    table, deg = _neighbour_table(_level_one(params.k))
    sizes = [min(_BLOCK, samples - s) for s in range(0, samples, _BLOCK)]

    def run(b):
        return _walk_block(table, deg, target, sizes[b], _block_rng(seed, b))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    x = np.concatenate(parts)
    se = float(x.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("nan")
    return WalkStats(estimate=float(x.mean()), standard_error=se, samples=samples, seed=seed)


__all__ = [
    "GRAM0",
    "METHODS",
    "DisconnectedGraphError",
    "HarmonicStructure",
    "SingularSystemError",
    "WalkStats",
    "cell_boundary_values",
    "effective_resistance",
    "energy_ratio",
    "expected_hitting_time",
    "extend_harmonic",
    "extension_tensor",
    "harmonic_structure",
    "monte_carlo_walk",
    "raw_energy",
    "renormalization_constant",
    "renormalized_energy",
    "return_probability",
    "schur_complement",
    "solve_dirichlet",
]
