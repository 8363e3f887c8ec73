"""Command-line harness: ``python -m taskeig <command> ...``.

Exit codes: 0 pass, 1 verification failure, 2 non-convergence, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import re
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import io
from .eigvec import backtransform, solve_eigenvectors
from .generators import KINDS, ProblemSpec, generate, parse_spectrum
from .hessenberg import hessenberg_reduce
from .reorder import PREDICATES, reorder_schur, select_eigenvalues
from .runtime import Engine, default_workers
from .schur import ConvergenceError, SchurOptions, schur_reduce
from .tiled import from_dense
from .verify import EPS, verify_decomposition

EXIT_OK, EXIT_FAIL, EXIT_NOCONV, EXIT_USAGE = 0, 1, 2, 64


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    n: Optional[int] = None
    seed: Optional[int] = None
    tile_size: Optional[int] = None
    workers: int = 1
    deflation: str = "norm-stable"
    select: Optional[str] = None
    tol_backward: Optional[float] = None
    tol_orth: Optional[float] = None
    trace: Optional[str] = None
    format: str = "teig"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tile-size", type=int, default=None)
    p.add_argument("--workers", type=int, default=None, help="default: $TASKEIG_WORKERS or 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deflation", choices=("classic", "norm-stable"), default="norm-stable")
    p.add_argument("--tol-backward", type=float, default=None)
    p.add_argument("--tol-orth", type=float, default=None)
    p.add_argument("--trace", metavar="OUT.json", default=None)
    p.add_argument("--format", choices=("teig", "matrixmarket"), default="teig")
    p.add_argument("--report", metavar="PATH", default=None, help="write the JSON report here (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taskeig", description="Task-parallel nonsymmetric eigensolver")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded test matrix")
    g.add_argument("--kind", choices=KINDS, default="random-uniform")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--spectrum", default=None, help="comma separated, e.g. 1,2,3+1j,3-1j")
    g.add_argument("--out", required=True)
    _common(g)

    h = sub.add_parser("hessenberg", help="reduce to Hessenberg form")
    h.add_argument("input")
    h.add_argument("--out", required=True, help="output prefix; writes PREFIX.H and PREFIX.Q")
    _common(h)

    s = sub.add_parser("schur", help="reduce a Hessenberg matrix to Schur form")
    s.add_argument("input")
    s.add_argument("--q", default=None, help="orthogonal factor to accumulate into")
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.S and PREFIX.Q")
    _common(s)

    r = sub.add_parser("reorder", help="move selected eigenvalues to the top")
    r.add_argument("schur")
    r.add_argument("--q", default=None)
    r.add_argument("--select", required=True)
    r.add_argument("--out", required=True)
    _common(r)

    e = sub.add_parser("eigvec", help="eigenvectors from a Schur form")
    e.add_argument("schur")
    e.add_argument("--q", default=None, help="back-transform with this factor")
    e.add_argument("--select", default="all")
    e.add_argument("--out", required=True, help="output prefix; writes PREFIX.V and PREFIX.V.json")
    _common(e)

    p = sub.add_parser("pipeline", help="hessenberg, schur, optional reorder, eigvec, verify")
    p.add_argument("input")
    p.add_argument("--select", default=None, help="reorder selection (reordering skipped if absent)")
    p.add_argument("--eig-select", default="all", help="eigenvalues whose vectors are computed")
    p.add_argument("--out", default=None, help="optional output prefix for S, Q and vectors")
    _common(p)

    v = sub.add_parser("verify", help="check a decomposition independently")
    v.add_argument("input")
    v.add_argument("--s", required=True)
    v.add_argument("--q", required=True)
    v.add_argument("--vectors", default=None, help="vectors file with its .json sidecar")
    _common(v)

    t = sub.add_parser("trace-dump", help="summarize a trace file")
    t.add_argument("trace_file")
    t.add_argument("--report", default=None)
    return parser


# ---------------------------------------------------------------------------


def _engine(args) -> Engine:
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise UsageError("--workers must be >= 1")
    return Engine(workers, seed=args.seed, trace=bool(args.trace))


def _config(args, **extra) -> RunConfig:
    return RunConfig(
        command=args.command, n=extra.pop("n", None), seed=args.seed, tile_size=args.tile_size,
        workers=args.workers if args.workers is not None else default_workers(), deflation=args.deflation,
        select=getattr(args, "select", None), tol_backward=args.tol_backward, tol_orth=args.tol_orth,
        trace=args.trace, format=args.format, **extra,
    )


def _finite(x):
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _emit(report: dict, args) -> None:
    text = json.dumps(_finite(report), indent=2)
    if getattr(args, "report", None):
        Path(args.report).write_text(text + "\n")
    else:
        print(text)


def _write_trace(engine: Engine, args) -> None:
    if args.trace:
        Path(args.trace).write_text(json.dumps({"workers": engine.workers, "tasks": engine.trace_records()}))


def _load(path: str, args) -> np.ndarray:
    try:
        return io.read_matrix(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _ext(args) -> str:
    return ".mtx" if args.format == "matrixmarket" else ".teig"


def _selection(text: Optional[str], s_dense: np.ndarray):
    if text is None or text == "all":
        return None
    try:
        parts = dict(p.split("=", 1) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--select: cannot parse {text!r}")
    if "frac" in parts:
        return select_eigenvalues(s_dense, fraction=float(parts["frac"]), seed=int(parts.get("seed", 0)))
    if "pred" in parts:
        if parts["pred"] not in PREDICATES:
            raise UsageError(f"--select: unknown predicate {parts['pred']!r}")
        k = int(parts["k"]) if "k" in parts else None
        return select_eigenvalues(s_dense, predicate=parts["pred"], k=k)
    if "file" in parts:
        idx = [int(line) for line in Path(parts["file"]).read_text().split()]
        from .kernels import block_starts

        nb = len(block_starts(s_dense))
        if any(i < 0 or i >= nb for i in idx):
            raise UsageError(f"--select: block index out of range 0..{nb - 1}")
        return select_eigenvalues(s_dense, flags=[i in set(idx) for i in range(nb)])
    raise UsageError(f"--select: expected frac=F,seed=S | pred=NAME | file=PATH, got {text!r}")


def _eigs_json(eigs) -> List[List[float]]:
    return [[float(z.real), float(z.imag)] for z in eigs]


def cmd_generate(args) -> int:
    spectrum = None
    if args.spectrum is not None:
        try:
            spectrum = parse_spectrum(args.spectrum)
        except ValueError as exc:
            raise UsageError(f"--spectrum: {exc}") from exc
    try:
        spec = ProblemSpec(args.kind, args.n, args.seed, spectrum)
        a, truth = generate(spec)
    except ValueError as exc:
        flag = "--spectrum" if spectrum is not None else "--n"
        raise UsageError(f"{flag}: {exc}") from exc
    io.write_matrix(args.out, a, args.format)
    side = {"spec": json.loads(spec.to_json())}
    if truth is not None:
        side["spectrum"] = _eigs_json(truth["spectrum"])
        if "shifts" in truth:
            side["shifts"] = _eigs_json(truth["shifts"])
    Path(args.out + ".json").write_text(json.dumps(side, indent=2) + "\n")
    _emit({"config": asdict(_config(args, n=args.n, outputs={"matrix": args.out, "sidecar": args.out + ".json"})),
           "passed": True}, args)
    return EXIT_OK


def cmd_hessenberg(args) -> int:
    a = _load(args.input, args)
    engine = _engine(args)
    t0 = time.perf_counter()
    h, q = hessenberg_reduce(from_dense(a, tile_size=args.tile_size), engine=engine)
    dt = time.perf_counter() - t0
    hp, qp = args.out + ".H" + _ext(args), args.out + ".Q" + _ext(args)
    io.write_matrix(hp, h.data, args.format)
    io.write_matrix(qp, q.data, args.format)
    rep = verify_decomposition(a, h.data, q.data, tol_backward=args.tol_backward, tol_orth=args.tol_orth)
    _write_trace(engine, args)
    _emit({"config": asdict(_config(args, n=a.shape[0], inputs={"matrix": args.input}, outputs={"H": hp, "Q": qp})),
           "phases": {"hessenberg": {"seconds": dt}}, **rep.to_dict()}, args)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_schur(args) -> int:
    h = _load(args.input, args)
    q = _load(args.q, args) if args.q else None
    engine = _engine(args)
    ts = args.tile_size
    t0 = time.perf_counter()
    hm = from_dense(h, tile_size=ts)
    try:
        dec = schur_reduce(hm, from_dense(q, tile_size=hm.tile_size) if q is not None else None,
                           SchurOptions(deflation=args.deflation), engine)
        code = EXIT_OK
    except ConvergenceError as exc:
        dec, code = exc.partial, EXIT_NOCONV
    dt = time.perf_counter() - t0
    sp, qp = args.out + ".S" + _ext(args), args.out + ".Q" + _ext(args)
    io.write_matrix(sp, dec.S.data, args.format)
    io.write_matrix(qp, dec.Q.data, args.format)
    a_ref = h if q is None else q @ h @ q.T
    rep = verify_decomposition(a_ref, dec.S.data, dec.Q.data, tol_backward=args.tol_backward, tol_orth=args.tol_orth)
    _write_trace(engine, args)
    _emit({"config": asdict(_config(args, n=h.shape[0], inputs={"matrix": args.input, "q": args.q},
                                    outputs={"S": sp, "Q": qp})),
           "phases": {"schur": {"seconds": dt, "iterations": dec.iterations, "sweeps": dec.sweeps}},
           "eigenvalues": _eigs_json(dec.eigenvalues), "converged": code == EXIT_OK, **rep.to_dict()}, args)
    if code != EXIT_OK:
        return code
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_reorder(args) -> int:
    s = _load(args.schur, args)
    q = _load(args.q, args) if args.q else None
    sel = _selection(args.select, s)
    if sel is None:
        sel = select_eigenvalues(s, predicate=lambda z: True)
    engine = _engine(args)
    sm = from_dense(s, tile_size=args.tile_size)
    t0 = time.perf_counter()
    res = reorder_schur(sm, from_dense(q, tile_size=sm.tile_size) if q is not None else None, sel, engine)
    dt = time.perf_counter() - t0
    sp = args.out + ".S" + _ext(args)
    io.write_matrix(sp, res.S.data, args.format)
    outs = {"S": sp}
    if res.Q is not None:
        outs["Q"] = args.out + ".Q" + _ext(args)
        io.write_matrix(outs["Q"], res.Q.data, args.format)
        a_ref = q @ s @ q.T
        rep = verify_decomposition(a_ref, res.S.data, res.Q.data, tol_backward=args.tol_backward,
                                   tol_orth=args.tol_orth).to_dict()
    else:
        rep = {"passed": True}
    _write_trace(engine, args)
    _emit({"config": asdict(_config(args, n=s.shape[0], inputs={"S": args.schur, "q": args.q}, outputs=outs)),
           "phases": {"reorder": {"seconds": dt}}, "status": res.status,
           "rejected_swaps": [list(r) for r in res.rejected], "permutation": [list(p) for p in res.permutation],
           **rep}, args)
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def _write_vectors(prefix: str, ys, args) -> Dict[str, str]:
    vp = prefix + ".V" + _ext(args)
    io.write_matrix(vp, ys.vectors, args.format)
    Path(vp + ".json").write_text(json.dumps(ys.sidecar(), indent=2) + "\n")
    return {"vectors": vp, "sidecar": vp + ".json"}


def cmd_eigvec(args) -> int:
    s = _load(args.schur, args)
    sel = _selection(args.select, s)
    engine = _engine(args)
    t0 = time.perf_counter()
    ys = solve_eigenvectors(from_dense(s, tile_size=args.tile_size), sel, engine)
    ref = s
    if args.q:
        q = _load(args.q, args)
        ys = backtransform(ys, q)
        ref = q @ s @ q.T
    dt = time.perf_counter() - t0
    outs = _write_vectors(args.out, ys, args)
    rep = verify_decomposition(ref, eigenvalues=ys.eigenvalues, vectors=ys.vectors, columns=ys.columns)
    _write_trace(engine, args)
    _emit({"config": asdict(_config(args, n=s.shape[0], inputs={"S": args.schur, "q": args.q}, outputs=outs)),
           "phases": {"eigvec": {"seconds": dt}}, "flagged": [bool(f) for f in ys.flagged], **rep.to_dict()}, args)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_pipeline(args) -> int:
    a = _load(args.input, args)
    n = a.shape[0]
    engine = _engine(args)
    phases = {}
    t0 = time.perf_counter()
    am = from_dense(a, tile_size=args.tile_size)
    h, q = hessenberg_reduce(am, engine=engine)
    phases["hessenberg"] = {"seconds": time.perf_counter() - t0}
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        dec = schur_reduce(h, q, SchurOptions(deflation=args.deflation), engine)
    except ConvergenceError as exc:
        dec, code = exc.partial, EXIT_NOCONV
    phases["schur"] = {"seconds": time.perf_counter() - t0, "iterations": dec.iterations, "sweeps": dec.sweeps}
    s, qq, eigs = dec.S, dec.Q, dec.eigenvalues
    extra = {}
    if code == EXIT_OK and args.select:
        sel = _selection(args.select, s.data)
        if sel is not None:
            t0 = time.perf_counter()
            res = reorder_schur(s, qq, sel, engine)
            phases["reorder"] = {"seconds": time.perf_counter() - t0}
            s, qq = res.S, res.Q
            from .kernels import schur_eigenvalues

            eigs = schur_eigenvalues(s.data)
            extra = {"reorder_status": res.status, "rejected_swaps": len(res.rejected)}
    vec_info = {}
    ys = None
    if code == EXIT_OK:
        t0 = time.perf_counter()
        ys = backtransform(solve_eigenvectors(s, _selection(args.eig_select, s.data), engine), qq, engine)
        phases["eigvec"] = {"seconds": time.perf_counter() - t0}
    rep = verify_decomposition(a, s.data, qq.data, eigenvalues=ys.eigenvalues if ys else None,
                               vectors=ys.vectors if ys else None, columns=ys.columns if ys else None,
                               tol_backward=args.tol_backward, tol_orth=args.tol_orth)
    outs = {}
    if args.out:
        outs["S"] = args.out + ".S" + _ext(args)
        outs["Q"] = args.out + ".Q" + _ext(args)
        io.write_matrix(outs["S"], s.data, args.format)
        io.write_matrix(outs["Q"], qq.data, args.format)
        if ys is not None:
            outs.update(_write_vectors(args.out, ys, args))
    _write_trace(engine, args)
    report = {"config": asdict(_config(args, n=n, inputs={"matrix": args.input}, outputs=outs)),
              "workers": engine.workers, "phases": phases, "eigenvalues": _eigs_json(eigs),
              "converged": code == EXIT_OK, **extra, **rep.to_dict()}
    if ys is not None:
        report["flagged"] = [bool(f) for f in ys.flagged]
    _emit(report, args)
    if code != EXIT_OK:
        return code
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    a = _load(args.input, args)
    s = _load(args.s, args)
    q = _load(args.q, args)
    if s.shape != a.shape or q.shape != a.shape:
        raise UsageError("matrix, S and Q must have the same shape")
    kw = {}
    if args.vectors:
        side = json.loads(Path(args.vectors + ".json").read_text())
        kw = dict(vectors=_load(args.vectors, args), eigenvalues=[complex(*e["eigenvalue"]) for e in side],
                  columns=[tuple(e["columns"]) for e in side])
    rep = verify_decomposition(a, s, q, tol_backward=args.tol_backward, tol_orth=args.tol_orth, **kw)
    _emit({"config": asdict(_config(args, n=a.shape[0], inputs={"matrix": args.input, "S": args.s, "Q": args.q,
                                                                 "vectors": args.vectors})),
           "failing": rep.failures, **rep.to_dict()}, args)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_trace_dump(args) -> int:
    try:
        data = json.loads(Path(args.trace_file).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read trace {args.trace_file}: {exc}") from exc
    tasks = data.get("tasks", [])
    kinds: Dict[str, int] = {}
    busy: Dict[int, int] = {}
    for t in tasks:
        kind = re.sub(r"\[[^\]]*\]", "", t["label"])
        kinds[kind] = kinds.get(kind, 0) + 1
        busy[t["worker"]] = busy.get(t["worker"], 0) + t["end_ns"] - t["start_ns"]
    report = {"tasks": len(tasks), "graphs": len({t["graph"] for t in tasks}), "by_kind": kinds,
              "busy_seconds": {str(w): ns / 1e9 for w, ns in sorted(busy.items())}}
    text = json.dumps(report, indent=2)
    if args.report:
        Path(args.report).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "hessenberg": cmd_hessenberg, "schur": cmd_schur, "reorder": cmd_reorder,
            "eigvec": cmd_eigvec, "pipeline": cmd_pipeline, "verify": cmd_verify, "trace-dump": cmd_trace_dump}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"taskeig {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
