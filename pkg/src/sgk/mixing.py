"""Symbolic dynamics of the Kusuoka measure.

Cylinders ``[w]`` of the one-sided shift on ``d`` symbols carry the
probability ``||A_w||_F^2 / 2`` with ``A_w = A_{w_m} ... A_{w_1}``.  The
operator ``M(B) = sum_s A_s B A_s^T`` on symmetric 2x2 matrices fixes the
identity and preserves the trace; its second eigenvalue is the exponential
mixing rate of the shift.

Symmetric matrices ``[[a, b], [b, c]]`` are handled in coordinates
``(a, b, c)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exact import Matrix, charpoly3, matmul, transpose
from .measures import EnergyCoordinates, energy_cell_vector, word_products
from .topology import Word

CORRELATION_METHODS = ("brute", "operator", "exact")

_BRUTE_BLOCK = 3**7


def word_matrix(ec: EnergyCoordinates, w: Sequence[int]) -> np.ndarray:
    """``A_w = A_{w_m} ... A_{w_1}``; the empty word gives the identity."""
    return ec.word_matrix(ec.hs.params.check_word(w))


def _sym_coords(b: np.ndarray) -> np.ndarray:
    return np.array([b[0, 0], b[0, 1], b[1, 1]])


def _sym_matrix(v: Sequence) -> np.ndarray:
    return np.array([[v[0], v[1]], [v[1], v[2]]], dtype=float)


def _sym_matrix_exact(v: Sequence[Fraction]) -> Matrix:
    return [[v[0], v[1]], [v[1], v[2]]]


@dataclass(frozen=True)
class SymOperator:
    """``M`` acting on ``(a, b, c)`` coordinates.

    ``rep`` is the float matrix built from the ``A_n``.  ``rep_exact`` is the
    same matrix in rationals, available whenever the off-diagonal coordinate
    decouples from the diagonal ones (it does for every ``k`` by reflection
    symmetry).  ``charpoly`` holds ``(c2, c1, c0)`` of ``t^3 + c2 t^2 + c1 t + c0``.
    """

    k: int
    rep: np.ndarray
    rep_exact: tuple[tuple[Fraction, ...], ...] | None
    charpoly: tuple[Fraction, Fraction, Fraction] | None
    spectrum_exact: tuple[Fraction, ...] | None

    @property
    def spectrum(self) -> np.ndarray:
        """Eigenvalues sorted by decreasing modulus."""
        ev = np.linalg.eigvals(self.rep)
        ev = np.real_if_close(ev, tol=1e6)
        return ev[np.argsort(-np.abs(ev), kind="stable")]

    @property
    def second_eigenvalue(self) -> float:
        if self.spectrum_exact is not None:
            return float(max(self.spectrum_exact[1:], key=abs))
        return float(self.spectrum[1])

    def apply(self, b: np.ndarray) -> np.ndarray:
        return _sym_matrix(self.rep @ _sym_coords(np.asarray(b, dtype=float)))

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.rep, n)

    def to_json(self) -> dict:
        out = {
            "schema": 1,
            "k": self.k,
            "rep": self.rep.tolist(),
            "spectrum": [float(np.real(x)) for x in self.spectrum],
        }
        if self.rep_exact is not None:
            out["rep_exact"] = [[str(x) for x in row] for row in self.rep_exact]
            out["charpoly"] = [str(x) for x in self.charpoly]
            out["spectrum_exact"] = [str(x) for x in self.spectrum_exact]
        return out


def _scaled_map(T: Sequence, r: Fraction, n1: Fraction, n2: Fraction) -> list[list[Fraction]]:
    """``B' -> sum_n T_n B' T_n^T / r`` in ``(a', b', c')`` coordinates, where
    ``B = P B' P`` and ``P = diag(sqrt(n1), sqrt(n2))``; then conjugated back to
    ``(a, b, c)`` on the diagonal coordinates."""
    cols = []
    for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
        bp = _sym_matrix_exact([Fraction(x) for x in e])
        acc = [[Fraction(0)] * 2 for _ in range(2)]
        for t in T:
            img = matmul(matmul(t, bp), transpose(t))
            acc = [[x + y / r for x, y in zip(ra, rb)] for ra, rb in zip(acc, img)]
        cols.append([acc[0][0], acc[0][1], acc[1][1]])
    rt = [[cols[j][i] for j in range(3)] for i in range(3)]
    # a = n1 a', c = n2 c'; the b block is untouched by the diagonal scaling
    s = [n1, None, n2]
    out = [row[:] for row in rt]
    for i in (0, 2):
        for j in (0, 2):
            out[i][j] = s[i] * rt[i][j] / s[j]
    return out


def transfer_operator_matrix(ec: EnergyCoordinates) -> SymOperator:
    rep = np.zeros((3, 3))
    for j, e in enumerate(np.eye(3)):
        b = _sym_matrix(e)
        rep[:, j] = _sym_coords(np.einsum("nij,jk,nlk->il", ec.A, b, ec.A))
    n1, n2 = ec.norms
    scaled = _scaled_map(ec.T, ec.hs.r, n1, n2)
    rep_exact = charpoly = spec = None
    if all(scaled[i][1] == 0 and scaled[1][i] == 0 for i in (0, 2)):
        rep_exact = tuple(tuple(row) for row in scaled)
        charpoly = charpoly3(scaled)
        # trace preservation gives the eigenvalue 1 on the diagonal block;
        # the other diagonal eigenvalue follows from the block trace
        lam_ac = scaled[0][0] + scaled[2][2] - 1
        lam_b = scaled[1][1]
        spec = (Fraction(1),) + tuple(sorted((lam_ac, lam_b), key=lambda x: -abs(x)))
        if 1 + sum(charpoly) != 0:
            raise AssertionError("eigenvalue 1 missing from the exact operator")
    return SymOperator(ec.k, rep, rep_exact, charpoly, spec)


@dataclass
class SvdTail:
    """SVD of ``A_{[x]_n}`` along a prefix.

    With ``A = V D U^T`` and ``E = D / ||D||_F`` the factor is ``Q = E U^T``;
    ``projectors[n] = Q^T Q = A^T A / ||A||_F^2`` removes the sign and order
    ambiguity of the singular vectors.  ``det_errors`` compares the product of
    singular values with the product of determinants; its size grows with the
    condition number of the product.
    """

    prefix: Word
    singular_values: np.ndarray
    projectors: np.ndarray
    distances: np.ndarray
    det_errors: np.ndarray

    def rows(self) -> list[tuple]:
        return [
            (n + 1, *self.singular_values[n], self.distances[n]) for n in range(len(self.prefix))
        ]


def svd_tail(ec: EnergyCoordinates, x_prefix: Sequence[int]) -> SvdTail:
    x = ec.hs.params.check_word(x_prefix)
    if not x:
        raise ValueError("prefix must have length at least 1")
    dets = [float(np.linalg.det(a)) for a in ec.A]
    acc = np.eye(2)
    det = 1.0
    sv, proj, derr = [], [], []
    for s in x:
        acc = ec.A[s] @ acc
        det *= dets[s]
        _, d, vh = np.linalg.svd(acc)
        e = d / np.linalg.norm(d)
        q = e[:, None] * vh
        sv.append(d)
        proj.append(q.T @ q)
        derr.append(abs(d[0] * d[1] - abs(det)) / max(d[0] * d[1], abs(det), 1e-300))
    proj = np.array(proj)
    dist = np.linalg.norm(proj - proj[-1], axis=(1, 2))
    return SvdTail(x, np.array(sv), proj, dist, np.array(derr))


def g_vector(ec: EnergyCoordinates, x_prefix: Sequence[int]) -> np.ndarray:
    """``nu(s | [x]_n)`` for every symbol ``s`` and ``n = 0..len(x)``, shape ``(len+1, d)``."""
    x = ec.hs.params.check_word(x_prefix)
    out = []
    acc = np.eye(2)
    for n in range(len(x) + 1):
        if n:
            acc = ec.A[x[n - 1]] @ acc
        # normalize the running product to keep it in range
        acc = acc / np.linalg.norm(acc)
        prods = np.einsum("ij,sjk->sik", acc, ec.A)
        out.append(np.einsum("sij,sij->s", prods, prods))
    return np.array(out)


def g_function_estimate(ec: EnergyCoordinates, s: int, x_prefix: Sequence[int]) -> np.ndarray:
    """``n -> nu(s | [x]_n) = ||A_{[x]_n} A_s||^2 / ||A_{[x]_n}||^2``."""
    (s,) = ec.hs.params.check_word((s,))
    return g_vector(ec, x_prefix)[:, s]


def conditional_measure(ec: EnergyCoordinates, w: Sequence[int], u: Sequence[int]) -> float:
    """``nu([w u]) / nu([u]) = ||A_u A_w||^2 / ||A_u||^2``."""
    au = word_matrix(ec, u)
    p = au @ word_matrix(ec, w)
    return float(np.sum(p * p) / np.sum(au * au))


def conditional_measure_exact(ec: EnergyCoordinates, w: Sequence[int], u: Sequence[int]) -> Fraction:
    w = ec.hs.params.check_word(w)
    u = ec.hs.params.check_word(u)
    num = energy_cell_vector(ec.hs, w + u, cap=len(w) + len(u)).prob
    den = energy_cell_vector(ec.hs, u, cap=len(u)).prob
    return num / den


def _gap(a: Word, b: Word, n: int) -> int:
    if n < 0:
        raise ValueError("n must be non-negative")
    g = n + len(a) - len(b)
    if g < 0:
        raise ValueError(f"negative gap {g}: need |b| <= n + |a|")
    return g


def _brute_sum(ec: EnergyCoordinates, aa: np.ndarray, ab: np.ndarray, gap: int, threads: int) -> float:
    d = ec.hs.d
    if d**gap <= _BRUTE_BLOCK:
        au = word_products(ec, gap)
        p = np.einsum("ij,wjk,kl->wil", aa, au, ab)
        return float(np.sum(p * p))
    # split off a prefix of the gap word so every block has the same size;
    # blocks are summed in a fixed order regardless of thread count
    tail_len = max(0, gap - int(math.log(_BRUTE_BLOCK, d)))
    head_len = gap - tail_len
    heads = word_products(ec, head_len)
    tails = word_products(ec, tail_len)

    def block(i: int) -> float:
        # u = (head, tail): A_u = A_tail A_head
        p = np.einsum("ij,wjk,kl,lm->wim", aa, tails, heads[i], ab)
        return float(np.sum(p * p))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, range(len(heads))))
    else:
        parts = [block(i) for i in range(len(heads))]
    return math.fsum(parts)


def _exact_correlation(ec: EnergyCoordinates, a: Word, b: Word, gap: int) -> Fraction:
    op = transfer_operator_matrix(ec)
    if op.rep_exact is None:
        raise ValueError("exact correlations need a rational operator representation")
    n1, n2 = ec.norms
    r = ec.hs.r
    pinv2 = [[1 / n1, Fraction(0)], [Fraction(0), 1 / n2]]
    p2 = [[n1, Fraction(0)], [Fraction(0), n2]]

    def t_word(w):
        acc = [[Fraction(int(i == j)) for j in range(2)] for i in range(2)]
        for s in w:
            acc = matmul([list(row) for row in ec.T[s]], acc)
        return acc

    tb = t_word(b)
    # X' = P^-1 A_b A_b^T P^-1 = T_b P^-2 T_b^T / r^|b|
    xp = matmul(matmul(tb, pinv2), transpose(tb))
    xp = [[v / r ** len(b) for v in row] for row in xp]
    # rep_exact acts on (a, b, c) = (n1 a', b, n2 c'); the b entry is
    # rescaled by sqrt(n1 n2), which cancels because it is an eigen-coordinate
    v = [n1 * xp[0][0], xp[0][1], n2 * xp[1][1]]
    rep = op.rep_exact
    for _ in range(gap):
        v = [sum((rep[i][j] * v[j] for j in range(3)), Fraction(0)) for i in range(3)]
    yp = [[v[0] / n1, v[1]], [v[1], v[2] / n2]]
    ta = t_word(a)
    inner = matmul(matmul(ta, yp), transpose(ta))
    tr = sum((p2[i][i] * inner[i][i] for i in range(2)), Fraction(0)) / r ** len(a)
    nu_a = energy_cell_vector(ec.hs, a, cap=len(a)).prob
    nu_b = energy_cell_vector(ec.hs, b, cap=len(b)).prob
    return tr / 2 - nu_a * nu_b


def correlation_exact(
    ec: EnergyCoordinates,
    a: Sequence[int],
    b: Sequence[int],
    n: int,
    method: str = "operator",
    threads: int = 1,
):
    """``nu(T^-(n+|a|)[a] & [b]) - nu([a]) nu([b])``.

    The joint event is the union of cylinders ``[b u a]`` over gap words ``u``
    of length ``n + |a| - |b|``.  ``brute`` sums those cylinders, ``operator``
    evaluates ``Tr(A_a M^gap(A_b A_b^T) A_a^T) / 2`` and ``exact`` does the
    same in rationals (returning a :class:`~fractions.Fraction`).
    """
    a = ec.hs.params.check_word(a)
    b = ec.hs.params.check_word(b)
    gap = _gap(a, b, n)
    if method == "exact":
        return _exact_correlation(ec, a, b, gap)
    aa = word_matrix(ec, a)
    ab = word_matrix(ec, b)
    nu_a = float(np.sum(aa * aa) / 2)
    nu_b = float(np.sum(ab * ab) / 2)
    if method == "brute":
        joint = _brute_sum(ec, aa, ab, gap, threads) / 2
    elif method == "operator":
        op = transfer_operator_matrix(ec)
        y = _sym_matrix(op.power(gap) @ _sym_coords(ab @ ab.T))
        joint = float(np.trace(aa @ y @ aa.T) / 2)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {CORRELATION_METHODS}")
    return joint - nu_a * nu_b


@dataclass(frozen=True)
class RateFit:
    ns: tuple[int, ...]
    correlations: tuple[float, ...]
    rate: float
    constant: float
    reference_rate: float
    exactly_mixing: bool

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "n": list(self.ns),
            "correlation": list(self.correlations),
            "rate": self.rate,
            "constant": self.constant,
            "reference_rate": self.reference_rate,
            "exactly_mixing": self.exactly_mixing,
        }


def mixing_rate_fit(
    ec: EnergyCoordinates,
    a: Sequence[int],
    b: Sequence[int],
    n_range: Sequence[int],
    method: str = "operator",
    reference_rate: float = 0.8,
    threads: int = 1,
    zero_tol: float = 1e-14,
) -> RateFit:
    """Fit ``|corr(n)| ~ C rate^n`` by least squares on ``log|corr|``.

    ``constant`` is the empirical ``sup_n |corr(n)| / reference_rate^n``.
    Correlations below ``zero_tol`` count as zero (round-off of an exactly
    mixing pair).
    """
    ns = tuple(int(n) for n in n_range)
    if len(ns) < 2:
        raise ValueError("need at least two values of n")
    corr = [float(correlation_exact(ec, a, b, n, method, threads)) for n in ns]
    mags = np.abs(np.array(corr))
    mags[mags < zero_tol] = 0.0
    if np.all(mags == 0):
        return RateFit(ns, tuple(corr), 0.0, 0.0, reference_rate, True)
    if np.any(mags == 0):
        raise ValueError("correlations vanish at some but not all n; the log-linear fit is undefined")
    slope = np.polyfit(np.array(ns, dtype=float), np.log(mags), 1)[0]
    const = float(np.max(mags / reference_rate ** np.array(ns, dtype=float)))
    return RateFit(ns, tuple(corr), float(math.exp(slope)), const, reference_rate, False)


def trace_preservation_error(op: SymOperator, samples: int, seed: int) -> float:
    """Largest ``|tr M(B) - tr B|`` over seeded random symmetric ``B``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        g = rng.standard_normal((2, 2))
        b = g + g.T
        worst = max(worst, abs(np.trace(op.apply(b)) - np.trace(b)))
    return worst
