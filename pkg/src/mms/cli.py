"""Command line entry point ``mms``.

Exit codes: 0 ok, 2 invariant violation (a check that must hold failed),
3 input error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .errors import DisconnectedError, InadmissibleSequenceError, InputError, InvariantViolation, MMSError
from .space import Space

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_INPUT = 3


# --------------------------------------------------------------------------
# input helpers


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from None


def _vertex_field(space: Space, path) -> np.ndarray:
    """``{vertexId: value}`` or a list in vertex order."""
    data = _load_json(path)
    if isinstance(data, list):
        u = np.asarray(data, dtype=float)
        if u.shape != (space.n_vertices,):
            raise InputError("vertex field list has the wrong length")
        return u
    if not isinstance(data, dict):
        raise InputError("vertex field must be an object or a list")
    u = np.full(space.n_vertices, np.nan)
    for k, v in data.items():
        u[space.index(k)] = float(v)
    if np.isnan(u).any():
        raise InputError("vertex field misses some vertices")
    return u


def _edge_field(space: Space, data) -> np.ndarray:
    """``{edgeKey: value}`` (keys as written in reports) or a list in edge order."""
    if isinstance(data, list):
        g = np.asarray(data, dtype=float)
        if g.shape != (space.n_edges,):
            raise InputError("edge field list has the wrong length")
        return g
    if not isinstance(data, dict):
        raise InputError("edge field must be an object or a list")
    keys = {space.edge_key(e): e for e in range(space.n_edges)}
    g = np.zeros(space.n_edges)
    for k, v in data.items():
        if k not in keys:
            raise InputError(f"unknown edge key {k!r}")
        g[keys[k]] = float(v)
    return g


def _params(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise InputError(f"parameter {item!r} must look like key=value")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _random_count(text: str, what: str) -> int:
    kind, _, n = text.partition(":")
    if kind != "random" or not n.isdigit():
        raise InputError(f"{what} must look like random:k")
    return int(n)


def _emit(obj, out=None):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --------------------------------------------------------------------------
# commands


def cmd_gen(args):
    from .generators import generate

    space = generate(args.name, _params(args.param))
    _emit(space.to_dict(), args.output)
    return EXIT_OK


def cmd_modulus(args):
    from .curves import Curve, CurveFamily
    from .modulus import mod_inf, mod_p

    space = Space.from_json(args.space)
    if args.family:
        data = _load_json(args.family)
        paths = data.get("curves") if isinstance(data, dict) else data
        if not isinstance(paths, list):
            raise InputError("family JSON needs a list of vertex paths")
        fam = CurveFamily([Curve.from_vertices(space, p) for p in paths])
    elif args.x is not None and args.y is not None:
        fam = CurveFamily.implicit(space.index(args.x), space.index(args.y), args.C, args.max_count)
    else:
        raise InputError("give --family or both --x and --y")
    weight = _edge_field(space, _load_json(args.weight)) if args.weight else None
    if args.p == "inf":
        res = mod_inf(space, fam, tol_sep=args.tol_sep)
    else:
        p = float(args.p)
        if p < 1:
            raise InputError("p must be at least 1")
        res = mod_p(space, fam, p, weight, tol_sep=args.tol_sep, gap_tol=args.gap_tol)
    _emit(res.to_dict(space), args.output)
    return EXIT_OK


def cmd_am_vertical(args):
    from .am import vertical_segment_suite

    deltas = [float(d) for d in args.deltas.split(",")] if args.deltas else (0.5, 0.25, 0.125)
    rep = vertical_segment_suite(args.n, deltas, args.horizon)
    _emit(rep, args.output)
    return EXIT_OK


def cmd_pencil_build(args):
    from .pencil import build_pencil

    space = Space.from_json(args.space)
    P = build_pencil(space, args.x, args.y, args.C)
    _emit(P.to_dict(space), args.output)
    return EXIT_OK


def cmd_pencil_verify(args):
    from .pencil import Pencil, random_edge_sets, verify_pencil

    space = Space.from_json(args.space)
    P = Pencil.from_dict(space, _load_json(args.pencil))
    sets = random_edge_sets(space, _random_count(args.sets, "--sets"), args.seed)
    audit = verify_pencil(space, P, sets)
    _emit(audit.to_dict(), args.output)
    return EXIT_OK if audit.passes else EXIT_INVARIANT


def _functions(space, args):
    from .poincare import default_functions

    if getattr(args, "u", None):
        return np.array([_vertex_field(space, args.u)])
    return np.array(default_functions(space, _random_count(args.functions, "--functions"), args.seed))


def cmd_pi_measure(args):
    from .poincare import default_balls, pi_constant

    space = Space.from_json(args.space)
    U = _functions(space, args)
    rep = pi_constant(space, U, default_balls(space, args.max_centers, args.seed), args.lam)
    _emit(rep.to_dict(), args.output)
    return EXIT_OK


def cmd_pi_derive(args):
    from .poincare import default_balls, pencil_to_pi, pi_constant, sample_pairs

    space = Space.from_json(args.space)
    U = _functions(space, args)
    pairs = sample_pairs(space, _random_count(args.pairs, "--pairs"), args.seed)
    balls = default_balls(space, args.max_centers, args.seed)
    rep = pencil_to_pi(space, U, None, pairs, balls, C=args.C, lam=args.lam)
    direct = pi_constant(space, U, balls, rep.lam)
    out = rep.to_dict()
    out["direct"] = direct.constant
    out["dominates_direct"] = bool(rep.constant >= direct.constant - 1e-9)
    _emit(out, args.output)
    ok = out["dominates_direct"] and rep.stages["pencil_bound_holds"]
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_bv_tv(args):
    from .bv import total_variation

    space = Space.from_json(args.space)
    res = total_variation(space, _vertex_field(space, args.u), args.method)
    _emit({"value": res.value, "method": res.method, "ladder": res.ladder, "error_bound": res.error_bound},
          args.output)
    return EXIT_OK


def _sequence(space, path):
    from .am import DensitySequence

    data = _load_json(path)
    terms = data.get("terms") if isinstance(data, dict) else data
    if not isinstance(terms, list) or not terms:
        raise InputError("sequence JSON needs a non-empty list of edge fields under 'terms'")
    return DensitySequence.from_terms([_edge_field(space, t) for t in terms], name=str(path))


def cmd_bv_audit(args):
    from .bv import audit_bvam

    space = Space.from_json(args.space)
    cert = audit_bvam(space, _vertex_field(space, args.u), _sequence(space, args.sequence), horizon=args.horizon)
    _emit(cert.to_dict(), args.output)
    return EXIT_OK if cert.valid else EXIT_INVARIANT


def cmd_bv_smooth(args):
    from .bv import discrete_convolution

    space = Space.from_json(args.space)
    u = _vertex_field(space, args.u)
    u_eps, _, rep = discrete_convolution(space, u, args.eps)
    out = rep.to_dict()
    out["u_eps"] = {space.ids[i]: float(v) for i, v in enumerate(u_eps)}
    _emit(out, args.output)
    return EXIT_OK


def cmd_bv_counterexample(args):
    from .bv import counterexample_space

    _, _, rep = counterexample_space(args.n)
    _emit(rep, args.output)
    return EXIT_OK


def cmd_suite_equivalence(args):
    from .suite import equivalence_suite, report_csv, report_json

    spec = _load_json(args.spec)
    if not isinstance(spec, dict):
        raise InputError("spec must be a JSON object")
    rep = equivalence_suite(spec)
    text = report_json(_jsonable(rep))
    out = args.output or spec.get("output")
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report_csv(rep))
    return EXIT_OK if rep["coherent"] else EXIT_INVARIANT


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    from .modulus import GAP_TOL, TOL_SEP

    ap = argparse.ArgumentParser(prog="mms", description="Curve modulus, pencils, Poincaré and BV diagnostics.")
    sub = ap.add_subparsers(dest="command", required=True)

    def leaf(parent, name, fn, help_):
        p = parent.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("-o", "--output", help="write JSON here instead of stdout")
        return p

    def group(name, help_):
        p = sub.add_parser(name, help=help_)
        return p.add_subparsers(dest="action", required=True)

    p = leaf(sub, "gen", cmd_gen, "generate a space")
    p.add_argument("name")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")

    p = leaf(sub, "modulus", cmd_modulus, "Mod_p of a curve family")
    p.add_argument("--space", required=True)
    p.add_argument("--family", help="JSON list of vertex paths")
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--max-count", type=int, default=None)
    p.add_argument("--p", default="1", help="exponent >= 1 or 'inf'")
    p.add_argument("--weight", help="edge weight field JSON")
    p.add_argument("--tol-sep", type=float, default=TOL_SEP)
    p.add_argument("--gap-tol", type=float, default=GAP_TOL)

    am = group("am", "AM modulus experiments")
    p = leaf(am, "ex31", cmd_am_vertical, "vertical segments in the unit square")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--deltas", help="comma separated, default 0.5,0.25,0.125")
    p.add_argument("--horizon", type=int, default=16)

    pen = group("pencil", "pencils of curves")
    p = leaf(pen, "build", cmd_pencil_build, "build a pencil for a pair")
    p.add_argument("--space", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--C", type=float, default=None)
    p = leaf(pen, "verify", cmd_pencil_verify, "check the pencil bound on random edge sets")
    p.add_argument("--space", required=True)
    p.add_argument("--pencil", required=True)
    p.add_argument("--sets", default="random:1000")
    p.add_argument("--seed", type=int, default=0)

    pi = group("pi", "Poincaré inequalities")
    for name, fn, help_ in (("measure", cmd_pi_measure, "measure the PI constant"),
                            ("derive", cmd_pi_derive, "derive a PI constant from pencils")):
        p = leaf(pi, name, fn, help_)
        p.add_argument("--space", required=True)
        p.add_argument("--functions", default="random:20")
        p.add_argument("--u", help="single vertex field JSON instead of random functions")
        p.add_argument("--max-centers", type=int, default=256)
        p.add_argument("--seed", type=int, default=0)
        if name == "measure":
            p.add_argument("--lambda", dest="lam", type=float, default=1.0)
        else:
            p.add_argument("--lambda", dest="lam", type=float, default=None, help="default 1 + 2C")
            p.add_argument("--pairs", default="random:20")
            p.add_argument("--C", type=float, default=2.0)

    bv = group("bv", "total variation")
    p = leaf(bv, "tv", cmd_bv_tv, "total variation of a vertex field")
    p.add_argument("--space", required=True)
    p.add_argument("--u", required=True)
    p.add_argument("--method", choices=("direct", "relaxation"), default="direct")
    p = leaf(bv, "audit", cmd_bv_audit, "audit a density sequence as a BV_AM upper bound")
    p.add_argument("--space", required=True)
    p.add_argument("--u", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--horizon", type=int, default=16)
    p = leaf(bv, "smooth", cmd_bv_smooth, "partition-of-unity smoothing")
    p.add_argument("--space", required=True)
    p.add_argument("--u", required=True)
    p.add_argument("--eps", type=float, required=True)
    p = leaf(bv, "counterexample", cmd_bv_counterexample, "disk indicator on the circle-weighted lattice")
    p.add_argument("--n", type=int, default=128)

    st = group("suite", "experiment suites")
    p = leaf(st, "equivalence", cmd_suite_equivalence, "refinement-ladder equivalence suite")
    p.add_argument("--spec", required=True)
    p.add_argument("--csv", help="also write the level table as CSV")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (InvariantViolation, InadmissibleSequenceError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, DisconnectedError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MMSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
