"""Command-line front end: definition files in, JSON reports out.

Exit codes: 0 all requested checks passed, 1 a check failed, 2 parse or usage
error, 3 domain error (evaluation outside an expression's domain, or a
non-real spectrum), 4 inconclusive verdict.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from . import harness, integrability, spectral
from . import torsion as ts
from .exprdsl import DomainError, ExprError, parse
from .fields import OperatorField, VectorField

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_DOMAIN, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4

TENSORS = ("nijenhuis", "haantjes", "fn", "binary", "binary-level", "tau", "tau-closed", "delta")
BINARY_TENSORS = ("fn", "binary", "binary-level", "delta")
EXAMPLES = {"golden": "golden_example.json"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- definition files


@dataclass
class Definition:
    dim: int
    operators: dict
    vectors: dict = field(default_factory=dict)
    frames: dict = field(default_factory=dict)
    points: np.ndarray | None = None
    tolerances: dict = field(default_factory=dict)
    digest: str = ""
    source: str = "<inline>"


def _line_of(text: str, needle: str) -> int:
    pos = text.find(json.dumps(needle))
    return text.count("\n", 0, pos) + 1 if pos >= 0 else 0


def _points_from_spec(spec, dim: int) -> np.ndarray:
    if spec is None:
        return None
    if isinstance(spec, dict):
        parts = []
        if "explicit" in spec:
            parts.append(np.asarray(spec["explicit"], dtype=float).reshape(-1, dim))
        if "random" in spec:
            r = spec["random"]
            box = float(r.get("box", 1.0))
            rng = np.random.default_rng(int(r.get("seed", 0)))
            parts.append(rng.uniform(-box, box, (int(r.get("count", 10)), dim)))
        if not parts:
            raise UsageError("points object needs 'explicit' and/or 'random'")
        return np.vstack(parts)
    pts = np.asarray(spec, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise UsageError(f"points must be a list of {dim}-vectors")
    return pts


def parse_definition(text: str, source: str = "<inline>") -> Definition:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or "dim" not in doc:
        raise UsageError(f"{source}: definition needs a top-level 'dim'")
    dim = doc["dim"]
    if not isinstance(dim, int) or dim < 1:
        raise UsageError(f"{source}: 'dim' must be a positive integer")
    ops = {}
    for name, rows in doc.get("operators", {}).items():
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise UsageError(f"{source}: operator {name!r} must be {dim}x{dim}")
        parsed = []
        for i, row in enumerate(rows):
            parsed.append([])
            for j, entry in enumerate(row):
                try:
                    parsed[-1].append(parse(str(entry), dim))
                except ExprError as exc:
                    line = _line_of(text, entry)
                    raise UsageError(f"{source}:{line}: operator {name!r} entry ({i + 1},{j + 1}): {exc}") from exc
        ops[name] = OperatorField.from_rows(parsed, dim)
    vecs = {}
    for name, comps in doc.get("vectors", {}).items():
        if len(comps) != dim:
            raise UsageError(f"{source}: vector {name!r} must have {dim} components")
        try:
            vecs[name] = VectorField(dim, tuple(str(c) for c in comps))
        except ExprError as exc:
            raise UsageError(f"{source}:{_line_of(text, name)}: vector {name!r}: {exc}") from exc
    frames = {}
    for op, table in doc.get("frames", {}).items():
        frames[op] = {}
        for idx, names in table.items():
            missing = [v for v in names if v not in vecs]
            if missing:
                raise UsageError(f"{source}: frame for {op!r} cluster {idx} names unknown vectors {missing}")
            frames[op][int(idx)] = [vecs[v] for v in names]
    return Definition(
        dim=dim,
        operators=ops,
        vectors=vecs,
        frames=frames,
        points=_points_from_spec(doc.get("points"), dim),
        tolerances=dict(doc.get("tolerances", {})),
        digest=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        source=source,
    )


def load_definition(path: str | None = None, example: str | None = None) -> Definition:
    if example is not None:
        if example not in EXAMPLES:
            raise UsageError(f"unknown example {example!r}; available: {sorted(EXAMPLES)}")
        text = resources.files("haantjes").joinpath("data", EXAMPLES[example]).read_text("utf-8")
        return parse_definition(text, f"example:{example}")
    if path is None:
        raise UsageError("--file or --example is required")
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_definition(text, path)


# ---------------------------------------------------------------- helpers


def _points(args, dim: int, default: np.ndarray | None) -> np.ndarray:
    spec = getattr(args, "points", None)
    if spec is None:
        if default is not None:
            return default
        return np.random.default_rng(args.seed).uniform(-1, 1, (10, dim))
    spec = spec.strip()
    if spec.startswith("["):
        try:
            return _points_from_spec(json.loads(spec), dim)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--points: invalid JSON: {exc.msg}") from exc
    try:
        count = int(spec)
    except ValueError as exc:
        raise UsageError("--points takes a count or a JSON list of points") from exc
    if count < 1:
        raise UsageError("--points count must be positive")
    return np.random.default_rng(args.seed).uniform(-1, 1, (count, dim))


def _tol(args, d: Definition | None, key="tol", default=1e-8) -> float:
    if getattr(args, "tol", None) is not None and key == "tol":
        return float(args.tol)
    if d is not None and key in d.tolerances:
        return float(d.tolerances[key])
    return default


def _operator(d: Definition, name: str | None, flag: str) -> OperatorField:
    if name is None:
        if len(d.operators) == 1:
            return next(iter(d.operators.values()))
        raise UsageError(f"{flag} is required (operators: {sorted(d.operators)})")
    if name not in d.operators:
        raise UsageError(f"unknown operator {name!r} for {flag}; available: {sorted(d.operators)}")
    return d.operators[name]


def _components(T) -> list:
    """Independent components c^i_{jk} (j < k), 1-based keys, one dict per point."""
    comps = T.comps.reshape((-1,) + T.comps.shape[-3:])
    n = T.dim
    out = []
    for c in comps:
        out.append({f"{i + 1},{j + 1},{k + 1}": float(c[i, j, k])
                    for i in range(n) for j in range(n) for k in range(j + 1, n)})
    return out


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


# ---------------------------------------------------------------- commands


def cmd_eval(args) -> tuple:
    d = load_definition(args.file, args.example)
    if args.tensor not in TENSORS:
        raise UsageError(f"unknown tensor {args.tensor!r}")
    A = _operator(d, args.op, "--op")
    B = None
    if args.tensor in BINARY_TENSORS:
        if args.op2 is None:
            raise UsageError(f"tensor {args.tensor!r} needs a second operator (--op2)")
        B = _operator(d, args.op2, "--op2")
    elif args.op2 is not None:
        raise UsageError(f"tensor {args.tensor!r} takes a single operator")
    needs_level = args.tensor in ("binary-level", "tau", "tau-closed")
    if needs_level and args.level is None:
        raise UsageError(f"tensor {args.tensor!r} needs --level")
    pts = _points(args, d.dim, d.points)
    tol = _tol(args, d)
    m = args.level
    T = {
        "nijenhuis": lambda: ts.nijenhuis(A, pts),
        "haantjes": lambda: ts.haantjes(A, pts),
        "fn": lambda: ts.fn_bracket(A, B, pts),
        "binary": lambda: ts.binary_haantjes(A, B, pts),
        "binary-level": lambda: ts.binary_level(A, B, m, pts),
        "tau": lambda: ts.tau_level(A, m, pts),
        "tau-closed": lambda: ts.tau_closed_form(A, m, pts),
        "delta": lambda: ts.delta_tensor(A, B, pts),
    }[args.tensor]()
    v = integrability.tensor_vanishes(T, tol)
    result = {
        "tensor": args.tensor,
        "level": m,
        "operators": [args.op] + ([args.op2] if B is not None else []),
        "components": _components(T),
        "max_abs": v.max_residual,
        "scale": v.scale,
        "vanishes": v.vanishes,
    }
    code = EXIT_OK
    if args.expect_zero and not v.vanishes:
        code = EXIT_FAILED
    summary = f"{args.tensor}: max |c| = {v.max_residual:.3e}, scale = {v.scale:.3e}, vanishes = {v.vanishes}"
    return _report("eval", d, pts, {"tol": tol}, result), code, summary


def cmd_spectrum(args) -> tuple:
    d = load_definition(args.file, args.example)
    A = _operator(d, args.op, "--op")
    pts = _points(args, d.dim, d.points)
    tol_rank = _tol(args, d, "tol_rank")
    tol_eig = d.tolerances.get("tol_eig")
    scan = spectral.spectrum_scan(A, pts, tol_eig, tol_rank)
    result = {
        "reports": [r.as_dict() for r in scan.reports],
        "consistent": scan.consistent,
        "warnings": list(scan.warnings),
        "flags": [spectral.null_flag(A, p, tol_rank).as_dict() for p in pts],
    }
    sig = scan.reports[0].signature if scan.reports else ()
    summary = "clusters (multiplicity, riesz index): " + ", ".join(f"({a}, {b})" for a, b in sig)
    if not scan.consistent:
        summary += " [structure varies across points]"
    return _report("spectrum", d, pts, {"tol_rank": tol_rank, "tol_eig": tol_eig}, result), EXIT_OK, summary


def cmd_integrability(args) -> tuple:
    d = load_definition(args.file, args.example)
    A = _operator(d, args.op, "--op")
    name = args.op or next(iter(d.operators))
    pts = _points(args, d.dim, d.points)
    tol = _tol(args, d)
    tol_rank = _tol(args, d, "tol_rank")
    v = integrability.integrability_report(A, pts, args.m_max, tol, tol_rank, d.frames.get(name))
    result = v.as_dict()
    if v.contradiction:
        code = EXIT_FAILED
    elif v.scan.smallest_m is None:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK
    summary = (f"smallest vanishing level: {v.scan.smallest_m} (m_max {v.scan.m_max}); "
               f"verdict: {v.scan.verdict}")
    return _report("integrability", d, pts, {"tol": tol, "tol_rank": tol_rank}, result), code, summary


def cmd_suite(args) -> tuple:
    dims = tuple(int(k) for k in args.dims.split(","))
    n_points = int(args.points) if args.points else 20
    tol = args.tol if args.tol is not None else 1e-8
    rep = harness.identity_suite(trials=args.trials, seed=args.seed, dims=dims, n_points=n_points, tol=tol)
    fails = rep.failures()
    summary = f"{len(rep.records) - len(fails)}/{len(rep.records)} identity checks passed"
    if fails:
        summary += "; failing: " + ", ".join(f"{r.name}(n={r.dim})" for r in fails)
    return _report("suite", None, None, {"tol": tol}, rep.as_dict()), (EXIT_OK if rep.passed else EXIT_FAILED), summary


def cmd_probe(args) -> tuple:
    n_points = int(args.points) if args.points else 20
    tol = args.tol if args.tol is not None else 1e-8
    kind = args.kind or "commuting_nilpotent_pair"
    spec_kind = kind if kind in harness.KINDS else "commuting_nilpotent_pair"
    spec = harness.GeneratorSpec(spec_kind, args.dim, args.degree, 1.0, args.seed)
    if args.conjecture == 1:
        rep = harness.conjecture1_probe(spec, args.trials, n_points, tol, args.band, kind=kind)
    else:
        rep = harness.conjecture2_probe(spec, args.trials, n_points, tol, args.band)
    summary = (f"conjecture {args.conjecture}: {rep.qualifying} qualifying trials, "
               f"{rep.discarded} discarded, {len(rep.candidates)} counterexample candidates")
    return _report("probe", None, None, {"tol": tol, "band": args.band}, rep.as_dict()), EXIT_OK, summary


def _report(command: str, d: Definition | None, pts, tolerances: dict, result: dict) -> dict:
    rep = {
        "tool": "haantjes",
        "version": __version__,
        "command": command,
        "tolerances": tolerances,
        "result": result,
    }
    if d is not None:
        rep["input"] = {"source": d.source, "digest": d.digest}
    if pts is not None:
        rep["points"] = np.asarray(pts).tolist()
    return rep


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="haantjes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_file=True):
        if needs_file:
            src = sp.add_mutually_exclusive_group()
            src.add_argument("--file", help="JSON definition file")
            src.add_argument("--example", choices=sorted(EXAMPLES), help="bundled definition file")
        sp.add_argument("--points", help="sample count, or a JSON list of points")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        sp.add_argument("--timing", action="store_true", help="include wall-clock timing (breaks byte-stability)")

    e = sub.add_parser("eval", help="evaluate a torsion-type tensor")
    common(e)
    e.add_argument("--op")
    e.add_argument("--op2")
    e.add_argument("--tensor", required=True, choices=TENSORS)
    e.add_argument("--level", type=int)
    e.add_argument("--expect-zero", action="store_true", help="fail (exit 1) unless the tensor vanishes")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("spectrum", help="clustered spectrum, Riesz indices and kernel flags")
    common(s)
    s.add_argument("--op")
    s.set_defaults(func=cmd_spectrum)

    i = sub.add_parser("integrability", help="level scan plus eigen-distribution involutivity")
    common(i)
    i.add_argument("--op")
    i.add_argument("--m-max", type=int, dest="m_max")
    i.set_defaults(func=cmd_integrability)

    u = sub.add_parser("suite", help="identity regression suite")
    common(u, needs_file=False)
    u.add_argument("--trials", type=int, default=20)
    u.add_argument("--dims", default="2,3,4")
    u.set_defaults(func=cmd_suite)

    r = sub.add_parser("probe", help="falsification probe for a conjecture")
    common(r, needs_file=False)
    r.add_argument("--conjecture", type=int, choices=(1, 2), required=True)
    r.add_argument("--kind", choices=("diagonal", "commuting_nilpotent_pair", "identical"))
    r.add_argument("--dim", type=int, default=3)
    r.add_argument("--degree", type=int, default=2)
    r.add_argument("--trials", type=int, default=50)
    r.add_argument("--band", type=float, default=100.0)
    r.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    start = time.perf_counter()
    try:
        report, code, summary = args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, spectral.UnsupportedSpectrumError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ExprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report["exit_code"] = code
    report["seed"] = args.seed
    if args.timing:
        report["timing_seconds"] = time.perf_counter() - start
    text = json.dumps(report, sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    else:
        sys.stdout.write(text)
    print(summary, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
