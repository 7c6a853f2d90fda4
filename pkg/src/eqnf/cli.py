"""Command-line front end.

Subcommands: decompose | normal-form | reduce | periodic | verify.
Problem files are JSON; closed-form maps are available as builtins only.
Exit codes: 0 success, 1 invariant failure, 2 parse error, 3 numerical
failure.  Output is deterministic: no timestamps, floats printed via repr.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import corpus
from .errors import (EqnfError, InvariantViolation, NotEquivariant)
from .groups import (GroupData, invariant_inner_product,
                     is_chi_equivariant_linear, is_chi_equivariant_map,
                     validate_group)
from .linalg import jordan_chevalley, su_decomposition
from .normalform import nilpotent_nf, semisimple_nf
from .polymap import AffineMapFamily, MapFamily, TruncatedMap
from .reduction import (build_lift, find_periodic, ghat_vstar_identity_check,
                        make_reduced, reduced_map, solve_vstar, xstar)

DEFAULT_TOL = 1e-9


class ParseFailure(Exception):
    """Problem-file or flag error; maps to exit code 2."""


@dataclass
class Problem:
    n: int
    order: int
    q: int
    family: object
    gd: GroupData
    lambda_grid: list
    search_box: float
    tol: float
    radius: float
    mode: str | None


def _terms_to_map(n: int, order: int, terms) -> TruncatedMap:
    recs = []
    for i, t in enumerate(terms):
        try:
            recs.append({"component": int(t["component"]),
                         "exponents": tuple(int(e) for e in t["exponents"]),
                         "coefficient": float(t["coefficient"])})
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseFailure(f"map.terms[{i}]: {exc}") from exc
    try:
        return TruncatedMap.from_terms(n, order, recs)
    except EqnfError as exc:
        raise ParseFailure(f"map.terms: {exc}") from exc


def load_problem(path: str, args) -> Problem:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseFailure(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseFailure(f"{path}: top level must be an object")

    map_spec = doc.get("map")
    if map_spec is None:
        raise ParseFailure("missing field: map")

    order = int(args.order if args.order is not None else doc.get("order", 3))
    if order < 1:
        raise ParseFailure("order must be >= 1")

    builtin = map_spec.get("builtin") if isinstance(map_spec, dict) else None
    if builtin is not None:
        if builtin != "binomial-shear":
            raise ParseFailure(f"unknown builtin map {builtin!r}")
        n = 2
        family = corpus.binomial_shear_family(order)
        gd = corpus.binomial_shear_group()
        default_q = 1
    else:
        try:
            n = int(doc["dimension"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseFailure(f"dimension: {exc}") from exc
        base = _terms_to_map(n, order, map_spec.get("terms", []))
        slopes = [_terms_to_map(n, order, s)
                  for s in map_spec.get("parameter_slopes", [])]
        family = AffineMapFamily(base, slopes)
        group_spec = doc.get("group")
        if not isinstance(group_spec, dict):
            raise ParseFailure("missing field: group")
        try:
            gens = [np.array(g, dtype=float) for g in group_spec["generators"]]
            chars = [float(c) for c in group_spec["characters"]]
            for g in gens:
                if g.shape != (n, n):
                    raise ParseFailure(
                        f"group generator shape {g.shape} != ({n}, {n})")
            gd = GroupData.from_generators(gens, chars)
        except (KeyError, TypeError, ValueError, EqnfError) as exc:
            raise ParseFailure(f"group: {exc}") from exc
        default_q = 1

    q = int(args.period if args.period is not None else doc.get("q", default_q))
    if q < 1:
        raise ParseFailure("q must be >= 1")

    if args.lambda_grid is not None:
        grid = parse_lambda_grid(args.lambda_grid)
    else:
        grid = [list(np.atleast_1d(np.asarray(v, dtype=float)))
                for v in doc.get("lambda_grid", [[0.0]])]
    nparams = getattr(family, "nparams", 1)
    for g in grid:
        if len(g) != nparams:
            raise ParseFailure(
                f"lambda grid entry {g} has {len(g)} values, expected {nparams}")

    tol = float(args.tol if args.tol is not None else doc.get("tol", DEFAULT_TOL))
    radius = float(args.radius if args.radius is not None
                   else doc.get("radius", 0.1))
    box = float(doc.get("search_box", 0.05))
    mode = doc.get("mode")
    if mode not in (None, "nilpotent", "semisimple"):
        raise ParseFailure(f"mode must be nilpotent or semisimple, got {mode!r}")
    return Problem(n=n, order=order, q=q, family=family, gd=gd,
                   lambda_grid=grid, search_box=box, tol=tol, radius=radius,
                   mode=mode)


def parse_lambda_grid(spec: str):
    try:
        if ":" in spec:
            start, stop, count = spec.split(":")
            return [[v] for v in np.linspace(float(start), float(stop),
                                             int(count))]
        return [[float(v)] for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ParseFailure(f"--lambda-grid {spec!r}: {exc}") from exc


def _fmt(x) -> str:
    return repr(float(x))


def _matrix_obj(M):
    return [[float(v) for v in row] for row in np.atleast_2d(M)]


def _map_terms_obj(F: TruncatedMap, tol: float = 1e-12):
    return [{"component": int(t["component"]),
             "exponents": [int(e) for e in t["exponents"]],
             "coefficient": float(t["coefficient"])}
            for t in F.to_terms(tol)]


def _emit(doc: dict, args) -> None:
    if args.format == "machine":
        text = json.dumps(doc, sort_keys=True, indent=2)
    else:
        text = _render_text(doc)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _render_lines(value, indent=""):
    lines = []
    if isinstance(value, dict):
        for key in value:
            v = value[key]
            if isinstance(v, (dict, list)):
                lines.append(f"{indent}{key}:")
                lines.extend(_render_lines(v, indent + "  "))
            else:
                lines.append(f"{indent}{key}: {_scalar_str(v)}")
    elif isinstance(value, list):
        for v in value:
            if isinstance(v, (dict, list)):
                lines.append(f"{indent}-")
                lines.extend(_render_lines(v, indent + "  "))
            else:
                lines.append(f"{indent}- {_scalar_str(v)}")
    else:
        lines.append(f"{indent}{_scalar_str(value)}")
    return lines


def _scalar_str(v):
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def _render_text(doc: dict) -> str:
    return "\n".join(_render_lines(doc))


def _decomposition(problem: Problem):
    psi0 = problem.family.at(problem.lambda_grid[0])
    A = psi0.linear()
    jc = jordan_chevalley(A)
    su = su_decomposition(A)
    return psi0, A, jc, su


def cmd_decompose(problem: Problem, args) -> int:
    _, A, jc, su = _decomposition(problem)
    res_sum = float(np.max(np.abs(A - jc.S - jc.N)))
    res_comm = float(np.max(np.abs(jc.S @ jc.N - jc.N @ jc.S)))
    import scipy.linalg as sla
    res_su = float(np.max(np.abs(A - su.S @ sla.expm(su.nil_log))))
    doc = {
        "command": "decompose",
        "A": _matrix_obj(A),
        "S": _matrix_obj(jc.S),
        "N": _matrix_obj(jc.N),
        "nil_log": _matrix_obj(su.nil_log),
        "residual_sum": res_sum,
        "residual_commute": res_comm,
        "residual_su": res_su,
    }
    _emit(doc, args)
    ok = max(res_sum, res_comm, res_su) <= max(problem.tol, 1e-10)
    return 0 if ok else 1


def _run_nf(problem: Problem):
    psi0, A, jc, su = _decomposition(problem)
    ip = invariant_inner_product(su.S, problem.gd)
    mode = problem.mode
    if mode is None:
        mode = "semisimple" if np.max(np.abs(su.nil_log)) <= 1e-12 else "nilpotent"
    runner = semisimple_nf if mode == "semisimple" else nilpotent_nf
    result = runner(problem.family, A, problem.gd, ip, problem.order,
                    lambdas=problem.lambda_grid)
    return result, mode


def cmd_normal_form(problem: Problem, args) -> int:
    result, mode = _run_nf(problem)
    samples = []
    for i, lam in enumerate(result.lambdas):
        W = result.exponents[i]
        adm_coords = {}
        for j, B in result.admissible.items():
            if B.shape[1]:
                coords = B.T @ W.layer(j).reshape(-1)
                adm_coords[str(j)] = [float(c) for c in coords]
            else:
                adm_coords[str(j)] = []
        samples.append({
            "lambda": [float(v) for v in lam],
            "residual": float(result.residuals[i]),
            "admissible_coords": adm_coords,
            "exponent_terms": _map_terms_obj(W),
            "transform_terms": _map_terms_obj(result.transforms[i]),
        })
    doc = {
        "command": "normal-form",
        "mode": mode,
        "order": result.order,
        "S0": _matrix_obj(result.S0),
        "N0": _matrix_obj(result.N0),
        "admissible_dims": {str(j): int(B.shape[1])
                            for j, B in result.admissible.items()},
        "samples": samples,
        "diagnostics": _jsonable(result.diagnostics),
    }
    _emit(doc, args)
    return 0 if result.residual <= problem.tol else 1


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if value is None or isinstance(value, (str, bool)):
        return value
    return str(value)


def _build_ctx(problem: Problem):
    _, A, jc, su = _decomposition(problem)
    return build_lift(A, su.S, problem.gd, problem.q, radius=problem.radius)


def cmd_reduce(problem: Problem, args) -> int:
    ctx = _build_ctx(problem)
    lam0 = problem.lambda_grid[0]
    m = ctx.dim_u
    v0 = solve_vstar(problem.family, ctx, np.zeros(ctx.n), lam0)
    pr0 = reduced_map(problem.family, ctx, np.zeros(ctx.n), lam0)
    h = 1e-6
    Ub = ctx.U_basis
    J = np.zeros((m, m))
    for i in range(m):
        e = Ub[:, i] * h
        J[:, i] = Ub.T @ (reduced_map(problem.family, ctx, e, lam0)
                          - reduced_map(problem.family, ctx, -e, lam0)) / (2 * h)
    AU = Ub.T @ ctx.A0 @ Ub
    doc = {
        "command": "reduce",
        "q": ctx.q,
        "dim_U": m,
        "dim_complement": int(ctx.complement_basis.shape[1]),
        "vstar_at_zero": float(np.max(np.abs(v0), initial=0.0)),
        "reduced_at_zero": float(np.max(np.abs(pr0), initial=0.0)),
        "linearization_defect": float(np.max(np.abs(J - AU), initial=0.0)),
        "U_basis": _matrix_obj(ctx.U_basis) if m else [],
    }
    _emit(doc, args)
    ok = (doc["vstar_at_zero"] <= problem.tol
          and doc["reduced_at_zero"] <= problem.tol
          and doc["linearization_defect"] <= 1e-4)
    return 0 if ok else 1


def cmd_periodic(problem: Problem, args) -> int:
    ctx = _build_ctx(problem)
    points = find_periodic(problem.family, ctx, problem.lambda_grid,
                           problem.search_box)
    entries = []
    for p in points:
        entries.append({
            "lambda": [float(v) for v in p.lam],
            "u": [float(v) for v in p.u],
            "xstar": [float(v) for v in p.xstar],
            "orbit": _matrix_obj(p.orbit),
            "residual_reduced": float(p.residual_reduced),
            "residual_full": float(p.residual_full),
            "isolated": bool(p.isolated),
            "jacobian_smin": float(p.jacobian_smin),
        })
    doc = {
        "command": "periodic",
        "q": ctx.q,
        "count": len(entries),
        "non_isolated_families_detected": any(not e["isolated"] for e in entries),
        "points": entries,
    }
    _emit(doc, args)
    return 0


def cmd_verify(problem: Problem, args) -> int:
    checks = []

    def record(name, defect, tol):
        checks.append({"name": name, "defect": float(defect),
                       "tol": float(tol), "pass": bool(defect <= tol)})

    problems = validate_group(problem.gd)
    record("group closure/character", 0.0 if not problems else 1.0, 0.5)

    psi0, A, jc, su = _decomposition(problem)
    record("jordan-chevalley sum", float(np.max(np.abs(A - jc.S - jc.N))), 1e-10)
    record("jordan-chevalley commute",
           float(np.max(np.abs(jc.S @ jc.N - jc.N @ jc.S))), 1e-10)
    record("linear equivariance",
           0.0 if is_chi_equivariant_linear(A, problem.gd) else 1.0, 0.5)
    record("map equivariance",
           0.0 if is_chi_equivariant_map(psi0, problem.gd) else 1.0, 0.5)

    ip = invariant_inner_product(su.S, problem.gd)
    Sstar = ip.adjoint(su.S)
    record("S0 normal wrt adapted product",
           float(np.max(np.abs(su.S @ Sstar - Sstar @ su.S))), 1e-10)

    try:
        ctx = _build_ctx(problem)
        record("lift identities", 0.0, 0.5)
        lam0 = problem.lambda_grid[0]
        rng = np.random.default_rng(0)
        m = ctx.dim_u
        worst_s0 = worst_g = worst_vs = worst_gv = 0.0
        for _ in range(3):
            c = rng.standard_normal(m)
            u = ctx.U_basis @ (1e-2 * c / max(1.0, np.linalg.norm(c)))
            pr_s = reduced_map(problem.family, ctx, ctx.S0 @ u, lam0)
            pr = reduced_map(problem.family, ctx, u, lam0)
            worst_s0 = max(worst_s0, float(np.max(np.abs(pr_s - ctx.S0 @ pr))))
            v_s = solve_vstar(problem.family, ctx, ctx.S0 @ u, lam0)
            v = solve_vstar(problem.family, ctx, u, lam0)
            worst_vs = max(worst_vs, float(np.max(np.abs(v_s - ctx.sigma @ v))))
            for gi in range(problem.gd.order):
                worst_gv = max(worst_gv, ghat_vstar_identity_check(
                    problem.family, ctx, u, lam0, gi))
        record("reduced map S0-equivariance", worst_s0, 1e-8)
        record("vstar shift equivariance", worst_vs, 1e-8)
        record("ghat vstar identity", worst_gv, 1e-8)
    except InvariantViolation as exc:
        checks.append({"name": f"lift identities ({exc})", "defect": 1.0,
                       "tol": 0.5, "pass": False})

    doc = {
        "command": "verify",
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
    _emit(doc, args)
    return 0 if doc["all_pass"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqnf",
        description="Equivariant normal forms and Lyapunov-Schmidt reduction "
                    "for families of local diffeomorphisms.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("decompose", "normal-form", "reduce", "periodic", "verify"):
        p = sub.add_parser(name)
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--order", type=int, default=None,
                       help="truncation order k")
        p.add_argument("--period", type=int, default=None, help="period q")
        p.add_argument("--tol", type=float, default=None,
                       help="acceptance tolerance")
        p.add_argument("--radius", type=float, default=None,
                       help="trust radius for v* Newton")
        p.add_argument("--lambda-grid", dest="lambda_grid", default=None,
                       help="comma list or start:stop:count")
        p.add_argument("--output", default=None, help="write report to file")
        p.add_argument("--format", choices=("text", "machine"),
                       default="text", help="report format")
    return parser


_DISPATCH = {
    "decompose": cmd_decompose,
    "normal-form": cmd_normal_form,
    "reduce": cmd_reduce,
    "periodic": cmd_periodic,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        problem = load_problem(args.problem, args)
    except ParseFailure as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    try:
        return _DISPATCH[args.command](problem, args)
    except (InvariantViolation, NotEquivariant) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1
    except EqnfError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
