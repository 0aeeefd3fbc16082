"""Command-line interface: ``adapted-ot <command> ...``.

Exit codes: 0 success, 1 invalid input or failed check, 2 solver failure,
64 usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional, Sequence

import numpy as np

from .couplings import check_coupling, coupling_to_json
from .experiments import METRICS, ExperimentConfig, run_convergence_experiment
from .generators import FAMILIES
from .measures import DiscreteMeasure, measure_to_json
from .metrics import aw_dist, aw_dist_lp_oracle, cw_dist, scw_dist, w_dist
from .process import (
    ProcessTree,
    hellwig_statistic,
    hk_quotient,
    is_n_markov,
    markov_statistic,
    plainify,
    prediction_process,
)
from .serialization import DocumentError, dump_json, load_document, tree_to_json
from .weak import v_dist, v_sym

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2, 64

DIST_METRICS = ("w", "cw", "scw", "aw", "aw-lp", "vsym", "v")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="adapted-ot", description="Adapted optimal transport on finite process trees.")
    ap.add_argument("--exact", action="store_true", help="rational arithmetic (same as ADAPTED_OT_RATIONAL=1)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("dist", help="distance between two trees or measures")
    d.add_argument("--metric", choices=DIST_METRICS, default="aw")
    d.add_argument("--p", type=float, default=1.0)
    d.add_argument("--json", action="store_true", help="print a JSON report with the coupling")
    d.add_argument("left")
    d.add_argument("right")

    c = sub.add_parser("check", help="run invariant checks on one or more trees")
    c.add_argument("--p", type=float, default=1.0)
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("files", nargs="+")

    q = sub.add_parser("quotient", help="Hoover-Keisler quotient or plain version of a tree")
    q.add_argument("--mode", choices=("hk", "plain"), default="hk")
    q.add_argument("--tol", type=float, default=1e-9)
    q.add_argument("file")

    s = sub.add_parser("stats", help="prediction, Hellwig or Markov statistics of a tree")
    s.add_argument("--kind", choices=("prediction", "hellwig", "markov"), default="prediction")
    s.add_argument("--rank", type=int, default=1)
    s.add_argument("--t", type=int, default=1)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("file")

    v = sub.add_parser("converge", help="run a convergence experiment")
    v.add_argument("config", nargs="?", help="experiment config JSON")
    v.add_argument("--family", choices=FAMILIES)
    v.add_argument("--grid", type=int, nargs="+")
    v.add_argument("--metrics", choices=METRICS, nargs="+")
    v.add_argument("--limits", nargs="+")
    v.add_argument("--p", type=float)
    v.add_argument("--threshold", type=float)
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="write OUT.csv and OUT.json")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--timing", action="store_true", help="record wall-clock runtime_ms")

    val = sub.add_parser("validate", help="schema-check JSON files")
    val.add_argument("--kind", choices=("tree", "measure", "config"))
    val.add_argument("files", nargs="+")
    return ap


def _fmt(v) -> str:
    return repr(float(v))


def _as_measure(obj) -> DiscreteMeasure:
    if isinstance(obj, DiscreteMeasure):
        return obj
    from .experiments import _flat_law

    return _flat_law(obj)


def _cmd_dist(args, exact) -> int:
    _, a = load_document(args.left, exact=exact)
    _, b = load_document(args.right, exact=exact)
    m, p = args.metric, args.p
    if m in ("vsym", "v"):
        P, Q = _as_measure(a), _as_measure(b)
        if m == "vsym":
            value, extra = v_sym(P, Q, p), {}
        else:
            rep = v_dist(P, Q, p)
            value = rep.value
            extra = {"coupling": rep.coupling, "pushforward": measure_to_json(rep.pushforward),
                     "gap": rep.gap}
    else:
        if not (isinstance(a, ProcessTree) and isinstance(b, ProcessTree)):
            raise DocumentError(f"metric {m!r} needs two trees")
        if m == "scw":
            value, extra = scw_dist(a, b, p, exact), {}
        else:
            fn = {"w": w_dist, "cw": cw_dist, "aw": aw_dist, "aw-lp": aw_dist_lp_oracle}[m]
            rep = fn(a, b, p, exact)
            value = rep.value
            extra = {"method": rep.method, "coupling": coupling_to_json(rep.coupling),
                     "stats": {k: v for k, v in rep.stats.items() if k != "seconds"}}
    if args.json:
        print(dump_json({"metric": m, "p": p, "value": float(value), **extra}))
    else:
        print(_fmt(value))
    return EXIT_OK


def _cmd_check(args, exact) -> int:
    trees = []
    for f in args.files:
        kind, obj = load_document(f, "tree", exact)
        trees.append((f, obj))
    ok = True

    def report(name, passed, detail=""):
        nonlocal ok
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}{': ' + detail if detail else ''}")

    for f, x in trees:
        orders = [n for n in range(1, x.N)] + [math.inf]
        flags = {n: is_n_markov(x, n) for n in orders}
        print(f"{f}: n-Markov " + ", ".join(f"n={n}:{flags[n]}" for n in orders))
        report(f"{f} Markov orders nested",
               all(flags[a] <= flags[b] for a, b in zip(orders, orders[1:])))
    for i in range(len(trees)):
        for j in range(i + 1, len(trees)):
            (fa, x), (fb, y) = trees[i], trees[j]
            w = w_dist(x, y, args.p, exact)
            cw = cw_dist(x, y, args.p, exact)
            scw = scw_dist(x, y, args.p, exact)
            aw = aw_dist(x, y, args.p, exact)
            vals = [float(w.value), float(cw.value), float(scw), float(aw.value)]
            print(f"{fa} vs {fb}: w={vals[0]!r} cw={vals[1]!r} scw={vals[2]!r} aw={vals[3]!r}")
            report("metric chain w <= cw <= scw <= aw",
                   all(b >= a - args.tol for a, b in zip(vals, vals[1:])))
            report("w coupling", check_coupling(w.coupling, "marginal", args.tol))
            report("cw coupling causal", check_coupling(cw.coupling, "causal", args.tol))
            report("aw coupling bicausal", check_coupling(aw.coupling, "bicausal", args.tol))
    return EXIT_OK if ok else EXIT_INVALID


def _cmd_quotient(args, exact) -> int:
    x = load_document(args.file, "tree", exact)[1]
    out = hk_quotient(x, args.tol) if args.mode == "hk" else plainify(x, args.tol)
    print(dump_json(tree_to_json(out)))
    return EXIT_OK


def _cmd_stats(args, exact) -> int:
    x = load_document(args.file, "tree", exact)[1]
    if args.kind == "prediction":
        law = prediction_process(x, args.rank)
    elif args.kind == "hellwig":
        law = hellwig_statistic(x, args.t)
    else:
        law = markov_statistic(x, args.n, args.t).law
    print(dump_json(measure_to_json(law)))
    return EXIT_OK


def _cmd_converge(args, exact) -> int:
    doc = {}
    if args.config:
        doc = dict(load_document(args.config, "config", exact)[1])
    for key, val in (("family", args.family), ("grid", args.grid), ("metrics", args.metrics),
                     ("limits", args.limits), ("p", args.p), ("threshold", args.threshold),
                     ("seed", args.seed), ("output", args.out)):
        if val is not None:
            doc[key] = val
    if args.timing:
        doc["timing"] = True
    if "family" not in doc:
        raise UsageError("converge needs a config file or --family")
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except (TypeError, ValueError) as err:
        raise DocumentError(f"invalid experiment config: {err}") from None
    report = run_convergence_experiment(cfg, jobs=max(1, args.jobs))
    if not cfg.output:
        sys.stdout.write(report.to_csv())
    print(report.summary)
    return EXIT_OK


def _cmd_validate(args, exact) -> int:
    ok = True
    for f in args.files:
        try:
            kind, _ = load_document(f, args.kind, exact)
            print(f"{f}: valid {kind}")
        except DocumentError as err:
            ok = False
            print(f"error: {err}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_INVALID


_COMMANDS = {"dist": _cmd_dist, "check": _cmd_check, "quotient": _cmd_quotient,
             "stats": _cmd_stats, "converge": _cmd_converge, "validate": _cmd_validate}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code."""
    try:
        args = _parser().parse_args(argv)
    except UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    exact = True if args.exact else None
    np.set_printoptions(precision=17)
    try:
        return _COMMANDS[args.command](args, exact)
    except UsageError as err:
        print(f"adapted-ot: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DocumentError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
