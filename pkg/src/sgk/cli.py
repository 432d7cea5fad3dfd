"""Command-line entry point.

Every subcommand writes JSON (``"schema": 1``, rationals as ``"num/den"``
strings), CSV or an aligned text table.  Exit codes: 0 success, 1 failed
verification, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import harmonic, laplacian, measures, mixing, selfsim
from .topology import DepthCapError, GasketDomainError, build_level_graph, format_word, gasket_params, parse_word, vertex_census

SUITES = ("all", "harmonic", "measures", "selfsim", "laplacian", "mixing")
FORMATS = ("json", "csv", "pretty")


class UsageError(Exception):
    pass


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Report:
    """A result: a JSON document plus an optional table for CSV/pretty output."""

    def __init__(self, doc: dict, header: Sequence[str] | None = None, rows: Sequence[Sequence] | None = None):
        self.doc = {"schema": 1, **doc}
        self.header = list(header) if header else None
        self.rows = [list(r) for r in rows] if rows is not None else None

    def _table(self):
        if self.header is not None:
            return self.header, self.rows
        flat = []
        for k, v in self.doc.items():
            flat.append([k, json.dumps(_jsonable(v)) if isinstance(v, (dict, list, tuple)) else _cell(v)])
        return ["key", "value"], flat

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(_jsonable(self.doc), indent=2) + "\n"
        header, rows = self._table()
        if fmt == "csv":
            buf = io.StringIO()
            wr = csv.writer(buf, lineterminator="\n")
            wr.writerow(header)
            for r in rows:
                wr.writerow([_cell(x) for x in r])
            return buf.getvalue()
        cells = [header] + [[_cell(x) for x in r] for r in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in cells)


def _params(args):
    try:
        return gasket_params(args.k)
    except GasketDomainError as exc:
        raise UsageError(str(exc)) from None


def _structure(args):
    _params(args)
    return harmonic.harmonic_structure(args.k)


# --- info -------------------------------------------------------------------


def cmd_info(args) -> tuple[Report, int]:
    params = _params(args)
    hs = harmonic.harmonic_structure(args.k)
    methods = harmonic.METHODS if args.method is None else (args.method,)
    r = {m: harmonic.renormalization_constant(params, m) for m in methods}
    depth = 4 if args.depth is None else args.depth
    census = [{"m": m, "vertices": vertex_census(params, m)} for m in range(depth + 1)]
    doc = {
        "k": args.k,
        "d": params.d,
        "hausdorff_dim": params.hausdorff_dim,
        "r": r[methods[0]],
        "r_methods": r,
        "p": harmonic.return_probability(params),
        "H": harmonic.expected_hitting_time(params, 1),
        "extension_tensor": [[list(row) for row in bn] for bn in hs.p],
        "vertex_census": census,
    }
    if args.samples:
        st = harmonic.monte_carlo_walk(params, "return-prob", args.samples, args.seed, args.threads)
        doc["monte_carlo_return"] = {"estimate": st.estimate, "standard_error": st.standard_error, "samples": st.samples, "seed": st.seed}
    rows = [["d", params.d], ["hausdorff_dim", params.hausdorff_dim]]
    rows += [[f"r[{m}]", v] for m, v in r.items()]
    rows += [["p", doc["p"]], ["H", doc["H"]]]
    rows += [[f"|V_{c['m']}|", c["vertices"]] for c in census]
    if args.samples:
        mc = doc["monte_carlo_return"]
        rows += [["mc_return", mc["estimate"]], ["mc_stderr", mc["standard_error"]]]
    return Report(doc, ["quantity", "value"], rows), 0


# --- graph ------------------------------------------------------------------


def cmd_graph(args) -> tuple[Report, int]:
    params = _params(args)
    g = build_level_graph(params, args.level)
    doc = g.to_json()
    doc.pop("schema")
    rows = [[u, v] for u, v in g.edges]
    return Report(doc, ["u", "v"], rows), 0


# --- measure ----------------------------------------------------------------


def cmd_measure(args) -> tuple[Report, int]:
    hs = _structure(args)
    if args.table:
        depth = 2 if args.depth is None else args.depth
        rows = []
        for mv in measures.iter_cell_vectors(hs, depth):
            rows.append([format_word(mv.word, hs.d), *mv.nu, mv.prob])
        doc = {
            "k": args.k,
            "depth": depth,
            "cells": [{"word": r[0], "nu": r[1:4], "prob": r[4]} for r in rows],
        }
        return Report(doc, ["word", "nu0", "nu1", "nu2", "prob"], rows), 0
    w = parse_word(args.word, hs.d)
    mv = measures.energy_cell_vector(hs, w, cap=args.depth)
    children = [measures.energy_cell_vector(hs, w + (s,), cap=len(w) + 1) for s in range(hs.d)]
    summed = tuple(sum((c.nu[i] for c in children), Fraction(0)) for i in range(3))
    check = "ok" if summed == mv.nu else "fail"
    ec = measures.energy_orthobasis(hs)
    doc = {
        "k": args.k,
        "word": format_word(w, hs.d),
        "nu": list(mv.nu),
        "nu_std": mv.total_std,
        "nu_prime": mv.total_prime,
        "prob": mv.prob,
        "radon_nikodym": list(mv.radon_nikodym()),
        "prob_float": measures.kusuoka_cylinder(ec, w),
        "additivity": check,
    }
    rows = [["word", doc["word"]], ["nu0", mv.nu[0]], ["nu1", mv.nu[1]], ["nu2", mv.nu[2]], ["prob", mv.prob]]
    rows += [[f"R{i}", x] for i, x in enumerate(doc["radon_nikodym"])]
    rows += [["prob_float", doc["prob_float"]], ["additivity", check]]
    return Report(doc, ["quantity", "value"], rows), 0 if check == "ok" else 1


# --- selfsim ----------------------------------------------------------------


def cmd_selfsim(args) -> tuple[Report, int]:
    hs = _structure(args)
    mm = selfsim.m_matrices(hs)
    doc: dict = {"k": args.k}
    rows = []
    status = 0
    if args.print_matrices or not (args.verify or args.scaling is not None):
        doc.update({k: v for k, v in mm.to_json().items() if k != "schema"})
        doc["printed_order"] = selfsim.grouped_order(hs.params)
        for n, m in enumerate(mm.M):
            for i, row in enumerate(m):
                rows.append([n, i, *row])
    if args.verify:
        depth = 3 if args.depth is None else args.depth
        checks = _selfsim_checks(hs, mm, depth)
        doc["checks"] = checks
        status = 0 if all(c["ok"] for c in checks) else 1
        rows = [[c["name"], c["ok"], c.get("detail", "")] for c in checks]
        return Report(doc, ["check", "ok", "detail"], rows), status
    if args.scaling is not None:
        levels = 4 if args.levels is None else args.levels
        rep = selfsim.laplacian_scaling_experiment(hs, mm, args.scaling, levels)
        doc["scaling"] = {
            "cell": rep.cell,
            "point": rep.point.to_json(),
            "levels": rep.levels,
            "estimate": rep.estimate,
            "cylinder_reference": rep.cylinder_reference,
            "deviation": rep.deviations,
            "middle_constant": rep.middle_constant,
        }
        rows = [
            [m, e, c, dv]
            for m, e, c, dv in zip(rep.levels, rep.estimate, rep.cylinder_reference, rep.deviations)
        ]
        return Report(doc, ["level", "estimate", "cylinder_reference", "deviation"], rows), status
    return Report(doc, ["cell", "row", "c0", "c1", "c2"], rows), status


def _run_check(name: str, fn: Callable[[], object]) -> dict:
    try:
        detail = fn()
    except AssertionError as exc:
        out = {"name": name, "ok": False, "detail": str(exc)}
        if getattr(exc, "witness", None) is not None:
            out["witness"] = _jsonable(exc.witness)
        return out
    return {"name": name, "ok": True, "detail": "" if detail is None else detail}


def _expect(cond: bool, message: str, witness=None):
    if not cond:
        exc = AssertionError(message)
        exc.witness = witness
        raise exc


def _selfsim_checks(hs, mm, depth) -> list[dict]:
    def vector():
        return f"{selfsim.verify_vector_identity(hs, mm, depth).checked} cases"

    def weighted():
        return f"{selfsim.weighted_identity_check(hs, mm, depth).checked} cases"

    def row_sum():
        tot = [[sum((m[i][j] for m in mm.M), Fraction(0)) for j in range(3)] for i in range(3)]
        v = [sum(row, Fraction(0)) for row in tot]
        _expect(v == [1, 1, 1], "sum_n M_n does not fix (1, 1, 1)", [str(x) for x in v])

    checks = [_run_check("vector-identity", vector), _run_check("weighted-identity", weighted), _run_check("row-sum-eigenvector", row_sum)]
    if hs.k == 3:

        def printed():
            got = selfsim.relabel(mm, selfsim.SG3_PRINTED_ORDER)
            for i, (m, ref) in enumerate(zip(got, selfsim.SG3_PRINTED_NUMERATORS)):
                want = [[Fraction(x, 105) for x in row] for row in ref]
                _expect(m == want, "printed matrix mismatch", i)

        checks.append(_run_check("printed-matrices", printed))
    return checks


# --- laplacian --------------------------------------------------------------


def _parse_point(text: str, params):
    if ":" not in text:
        raise UsageError("--point must look like WORD:CORNER, e.g. 0:1 for F_0(q1)")
    w, i = text.rsplit(":", 1)
    try:
        corner = int(i)
    except ValueError:
        raise UsageError(f"bad corner {i!r}") from None
    if corner not in (0, 1, 2):
        raise UsageError("corner must be 0, 1 or 2")
    return laplacian.junction_point(params, parse_word(w, params.d), corner)


def cmd_laplacian(args) -> tuple[Report, int]:
    hs = _structure(args)
    x = _parse_point(args.point, hs.params)
    levels = 4 if args.levels is None else args.levels
    fn = args.function or ("poisson" if args.method == "standard" else "square-sum")
    ec = measures.energy_orthobasis(hs)
    if fn == "square-sum":
        fam = laplacian.square_sum_family(hs, ec)
    elif fn in ("h0sq", "h1sq", "h2sq"):
        fam = laplacian.harmonic_square_family(hs, int(fn[1]))
    elif fn == "harmonic":
        fam = laplacian.harmonic_family(hs, (1, 0, 0))
    elif fn == "poisson":
        fam = laplacian.poisson_family(hs.params, levels)
    else:
        raise UsageError(f"unknown function {fn!r}")
    if args.method == "standard":
        seq = laplacian.delta_mu_estimate(hs.params, fam, x, levels)
    else:
        seq = laplacian.delta_nu_estimate(hs, ec, fam, x, levels)
    doc = {
        "k": args.k,
        "point": x.to_json(),
        "method": seq.method,
        "function": fn,
        "levels": seq.levels,
        "raw": seq.raw,
        "estimate": seq.estimates,
        "difference": seq.diffs,
    }
    return Report(doc, ["level", "raw", "estimate", "difference"], seq.rows()), 0


# --- mixing -----------------------------------------------------------------


def cmd_mixing(args) -> tuple[Report, int]:
    hs = _structure(args)
    ec = measures.energy_orthobasis(hs)
    a = parse_word(args.a, hs.d)
    b = parse_word(args.b, hs.d)
    n_max = 25 if args.n is None else args.n
    ns = list(range(args.n_min, n_max + 1))
    if not ns:
        raise UsageError("--n must be at least --n-min")
    corr = [mixing.correlation_exact(ec, a, b, n, args.method, args.threads) for n in ns]
    ratio = [None]
    for prev, cur in zip(corr, corr[1:]):
        ratio.append(math.log(abs(cur / prev)) if prev and cur else None)
    op = mixing.transfer_operator_matrix(ec)
    doc = {
        "k": args.k,
        "a": format_word(a, hs.d),
        "b": format_word(b, hs.d),
        "method": args.method,
        "n": ns,
        "correlation": corr,
        "log_ratio": ratio,
        "operator": {k: v for k, v in op.to_json().items() if k != "schema"},
    }
    rows = [[n, c, lr] for n, c, lr in zip(ns, corr, ratio)]
    header = ["n", "correlation", "log_ratio"]
    if args.fit:
        fit = mixing.mixing_rate_fit(ec, a, b, ns, args.method, threads=args.threads)
        doc["rate"] = fit.rate
        doc["constant"] = fit.constant
        doc["exactly_mixing"] = fit.exactly_mixing
        header += ["rate", "constant"]
        rows = [r + [fit.rate, fit.constant] for r in rows]
    return Report(doc, header, rows), 0


# --- verify -----------------------------------------------------------------


def _harmonic_checks(args, params) -> list[dict]:
    k = params.k

    def methods():
        vals = {m: harmonic.renormalization_constant(params, m) for m in harmonic.METHODS}
        _expect(len(set(vals.values())) == 1, "renormalization methods disagree", {m: str(v) for m, v in vals.items()})
        return str(vals["energy-ratio"])

    def lower_bound():
        r = harmonic.renormalization_constant(params)
        _expect(r > Fraction(2, 3 * k), "r_k <= 2/(3k)", str(r))

    def return_prob():
        r = harmonic.renormalization_constant(params)
        p = harmonic.return_probability(params)
        _expect(p == 1 - r, "return probability differs from 1 - r", str(p))
        st = harmonic.monte_carlo_walk(params, "return-prob", args.samples or 200_000, args.seed, args.threads)
        z = abs(st.estimate - float(p)) / st.standard_error
        _expect(z < 4, "Monte Carlo estimate more than 4 standard errors away", {"estimate": st.estimate, "z": z})
        return f"estimate {st.estimate:.6f}, z = {z:.2f}"

    return [_run_check("renormalization-methods", methods), _run_check("lower-bound", lower_bound), _run_check("return-probability", return_prob)]


def _measure_checks(args, hs, depth) -> list[dict]:
    ec = measures.energy_orthobasis(hs)

    def additivity():
        table = measures.cell_vector_table(hs, depth + 1)
        for w, mv in table.items():
            if len(w) > depth:
                continue
            tot = tuple(sum((table[w + (s,)].nu[i] for s in range(hs.d)), Fraction(0)) for i in range(3))
            _expect(tot == mv.nu, "measure vectors are not additive", format_word(w, hs.d))

    def cross_route():
        worst = 0.0
        for m in range(depth + 1):
            fl = measures.cylinder_probabilities(ec, m)
            for i, mv in enumerate(measures.iter_cell_vectors(hs, m, m)):
                worst = max(worst, abs(fl[i] - float(mv.prob)))
        _expect(worst < 1e-10, "float and rational cylinder measures disagree", worst)
        return f"max deviation {worst:.2e}"

    def partition():
        dev = max(measures.partition_identity_check(ec, m) for m in range(depth + 1))
        _expect(dev < 1e-12, "sum of A_w^T A_w differs from the identity", dev)
        return f"max deviation {dev:.2e}"

    def brute():
        for w in hs.params.words(min(depth, 2)):
            a = measures.energy_cell_vector(hs, w)
            b = measures.energy_cell_vector_bruteforce(hs, w)
            _expect(a.nu == b.nu, "matrix route differs from edge sums", format_word(w, hs.d))

    return [
        _run_check("additivity", additivity),
        _run_check("float-vs-rational", cross_route),
        _run_check("partition-identity", partition),
        _run_check("edge-sum-oracle", brute),
    ]


def _laplacian_checks(args, hs, depth) -> list[dict]:
    ec = measures.energy_orthobasis(hs)
    levels = min(depth, 3 if hs.k == 2 else 2)

    def square_sum():
        fam = laplacian.square_sum_family(hs, ec)
        har = laplacian.harmonic_family(hs, (1, 0, 0))
        hsq = laplacian.square_sum_family(hs, ec)
        for m in range(1, levels + 1):
            g = build_level_graph(hs.params, m)
            u, h, den = fam.at(g), har.at(g), hsq.at(g)
            for x in g.junctions():
                d = laplacian.graph_laplacian_value(g, den, x)
                _expect(2 * laplacian.graph_laplacian_value(g, u, x) / d == 2, "energy Laplacian of h1^2+h2^2 is not 2", (m, x))
                _expect(laplacian.graph_laplacian_value(g, h, x) == 0, "harmonic input has nonzero Laplacian", (m, x))

    def splines():
        for m in range(levels + 1):
            g = build_level_graph(hs.params, m)
            smu = sum((laplacian.spline_integral_mu(g, x) for x in range(g.n_vertices)), Fraction(0))
            _expect(smu == 1, "spline integrals against mu do not sum to 1", (m, str(smu)))
            snu = sum((laplacian.spline_integral_nu(hs, ec, g, x) for x in range(g.n_vertices)), Fraction(0))
            _expect(snu == 2, "spline integrals against nu' do not sum to 2", (m, str(snu)))

    return [_run_check("energy-laplacian", square_sum), _run_check("spline-integrals", splines)]


def _mixing_checks(args, hs, depth) -> list[dict]:
    ec = measures.energy_orthobasis(hs)
    op = mixing.transfer_operator_matrix(ec)

    def fixed_point():
        err = float(np.abs(op.apply(np.eye(2)) - np.eye(2)).max())
        _expect(err < 1e-12, "M(I) != I", err)

    def trace():
        err = mixing.trace_preservation_error(op, 100, args.seed)
        _expect(err < 1e-12, "trace not preserved", err)

    def brute():
        worst = 0.0
        for n in range(min(depth, 6) + 1):
            x = mixing.correlation_exact(ec, (0,), (0,), n, "brute", args.threads)
            y = mixing.correlation_exact(ec, (0,), (0,), n, "operator")
            worst = max(worst, abs(x - y))
        _expect(worst < 1e-12, "brute force and operator correlations differ", worst)

    def rate():
        fit = mixing.mixing_rate_fit(ec, (0,), (0,), range(5, 26))
        lam = abs(op.second_eigenvalue)
        _expect(abs(fit.rate - lam) <= 0.02 * lam, "fitted rate differs from the second eigenvalue", fit.rate)
        return f"rate {fit.rate:.6f}, second eigenvalue {lam:.6f}, constant {fit.constant:.6f}"

    def g_prob():
        rng = np.random.default_rng(args.seed)
        x = rng.integers(0, hs.d, 20)
        g = mixing.g_vector(ec, x)
        _expect(np.abs(g.sum(axis=1) - 1).max() < 1e-12 and g.min() >= -1e-12, "g-estimates are not probability vectors")

    return [
        _run_check("fixed-point", fixed_point),
        _run_check("trace-preservation", trace),
        _run_check("brute-vs-operator", brute),
        _run_check("mixing-rate", rate),
        _run_check("g-probability", g_prob),
    ]


def cmd_verify(args) -> tuple[Report, int]:
    params = _params(args)
    hs = harmonic.harmonic_structure(args.k)
    depth = 2 if args.depth is None else args.depth
    suites = SUITES[1:] if args.suite == "all" else (args.suite,)
    checks = []
    for s in suites:
        if s == "harmonic":
            found = _harmonic_checks(args, params)
        elif s == "measures":
            found = _measure_checks(args, hs, depth)
        elif s == "selfsim":
            found = _selfsim_checks(hs, selfsim.m_matrices(hs), depth)
        elif s == "laplacian":
            found = _laplacian_checks(args, hs, depth)
        else:
            found = _mixing_checks(args, hs, depth)
        checks += [{"suite": s, **c} for c in found]
    ok = all(c["ok"] for c in checks)
    doc = {"k": args.k, "suite": args.suite, "depth": depth, "ok": ok, "checks": checks}
    rows = [[c["suite"], c["name"], "ok" if c["ok"] else "FAIL", c["detail"]] for c in checks]
    return Report(doc, ["suite", "check", "status", "detail"], rows), 0 if ok else 1


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, default=2, help="gasket level (default 2)")
    common.add_argument("--depth", type=int, default=None, help="word depth / refinement depth")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=FORMATS, default=None)
    common.add_argument("--out", default=None, help="write output to this file")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="sgk", description="Harmonic analysis and energy measures on level-k Sierpinski gaskets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("info", parents=[common], help="constants of SG_k")
    p.add_argument("--method", choices=harmonic.METHODS, default=None)
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo samples for the return probability")
    p.set_defaults(func=cmd_info, default_format="json")

    p = sub.add_parser("graph", parents=[common], help="level-m graph approximation")
    p.add_argument("--level", type=int, default=1)
    p.set_defaults(func=cmd_graph, default_format="json")

    p = sub.add_parser("measure", parents=[common], help="energy measures of a cell")
    p.add_argument("--word", default="")
    p.add_argument("--table", action="store_true", help="every cell up to --depth")
    p.set_defaults(func=cmd_measure, default_format="json")

    p = sub.add_parser("selfsim", parents=[common], help="M_n matrices and their identities")
    p.add_argument("--print-matrices", action="store_true")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--scaling", type=int, default=None, metavar="CELL", help="Laplacian scaling report for CELL")
    p.add_argument("--levels", type=int, default=None)
    p.set_defaults(func=cmd_selfsim, default_format="json")

    p = sub.add_parser("laplacian", parents=[common], help="pointwise Laplacian estimates")
    p.add_argument("--point", required=True, help="junction F_w(q_i) as WORD:i")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--method", choices=("energy", "standard"), default="energy")
    p.add_argument("--function", choices=("square-sum", "h0sq", "h1sq", "h2sq", "harmonic", "poisson"), default=None)
    p.set_defaults(func=cmd_laplacian, default_format="csv")

    p = sub.add_parser("mixing", parents=[common], help="correlations of the shift")
    p.add_argument("--a", default="0")
    p.add_argument("--b", default="0")
    p.add_argument("--n", type=int, default=None, help="largest n (default 25)")
    p.add_argument("--n-min", type=int, default=0)
    p.add_argument("--method", choices=mixing.CORRELATION_METHODS, default="operator")
    p.add_argument("--fit", action="store_true")
    p.set_defaults(func=cmd_mixing, default_format="csv")

    p = sub.add_parser("verify", parents=[common], help="run invariant suites")
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--samples", type=int, default=0)
    p.set_defaults(func=cmd_verify, default_format="pretty")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.depth is not None and args.depth < 0:
        parser.error("--depth must be non-negative")
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        report, status = args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GasketDomainError, DepthCapError, ValueError) as exc:
        print(f"sgk {args.command}: error: {exc}", file=sys.stderr)
        return 2
    text = report.render(args.format or args.default_format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
