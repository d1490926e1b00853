"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 a reproduced value missed its target.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from importlib import metadata

from .distributions import parse_distribution
from .errors import CertificationError, CharacterizationOpenError, NotRegularError, SolverError, StructuralError
from .evaluation import evaluate, evaluate_priority
from .mechanism import (
    MAX_PROFILES,
    PrioritySpec,
    ThresholdVector,
    build_game,
    mechanism_from_json,
    mechanism_to_json,
)
from .oracle import certificate_json, certify_2bidder_optimality
from .profit import solve_profit_optimal
from .reproduction import HEADER, TABLES, reproduce
from .sequential import (
    backward_induction_best_response,
    evaluate_sequential,
    flatten_to_simultaneous,
    num_bidders,
    strategies_from_json,
    strategies_to_json,
    tree_from_json,
)
from .solver import quantile_mechanism, solve_n_bidder_welfare_2bid, solve_welfare_2bidder

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def version():
    try:
        return metadata.version("boundedauction")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def fmt(x):
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, (int, float)):
        return f"{x:.12g}"
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _dists(args, n=None):
    specs = args.dist or ["uniform:0,1"]
    try:
        ds = [parse_distribution(s) for s in specs]
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    n = n or len(ds)
    if len(ds) == 1:
        ds = ds * n
    if len(ds) != n:
        raise UsageError(f"{len(ds)} --dist values for {n} bidders; give one or {n}")
    return ds


def _v0(args, dists):
    return float(args.v0) if args.v0 is not None else min(d.support_lo for d in dists)


def _spec_doc(spec: PrioritySpec):
    return {
        "n": spec.n,
        "bid_sizes": [spec.k] * spec.n,
        "v0": spec.v0,
        "priority": {
            "order": list(spec.priority_order),
            "modified": spec.modified,
            "thresholds": [list(t.cuts) for t in spec.thresholds],
        },
    }


def _spec_from_doc(doc):
    pr = doc["priority"]
    return PrioritySpec(tuple(pr["order"]), tuple(ThresholdVector(t) for t in pr["thresholds"]),
                        bool(pr["modified"]), float(doc.get("v0", 0.0)))


def _mechanism_text(spec: PrioritySpec):
    """Full table when it fits, otherwise the priority description alone."""
    if spec.k ** spec.n <= MAX_PROFILES:
        return mechanism_to_json(build_game(spec))
    return json.dumps(_spec_doc(spec), indent=1)


def _write(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ------------------------------------------------------------------ commands

def cmd_solve(args):
    n, k = args.n, args.k
    dists = _dists(args, n)
    v0 = _v0(args, dists)
    note = ""
    try:
        if args.objective == "profit":
            sol = solve_profit_optimal(dists, n, k, v0)
            spec, value, branch = sol.spec, sol.value, sol.branch
        elif n == 2:
            sol = solve_welfare_2bidder(dists[0], dists[1], k, v0)
            spec, value, branch = sol.spec, sol.value, sol.branch
        elif k == 2 and all(d == dists[0] for d in dists):
            sol = solve_n_bidder_welfare_2bid(dists[0], n, v0)
            spec, value, branch = sol.spec, sol.value, sol.branch
        else:
            raise CharacterizationOpenError(f"no optimal-mechanism characterization for welfare with n={n}, k={k}")
    except CharacterizationOpenError as exc:
        if not args.fallback:
            raise UsageError(f"{exc}; pass --fallback for the quantile mechanism") from None
        spec = quantile_mechanism(dists, k, v0)
        value = evaluate_priority(spec, dists, v0, benchmarks=False).as_dict()[
            "expected_welfare" if args.objective == "welfare" else "expected_profit"]
        branch, note = "quantile", "fallback"
    if args.mechanism_out:
        _write(args.mechanism_out, _mechanism_text(spec))
    if args.json:
        return json.dumps({
            "objective": args.objective, "branch": branch, "value": value, "note": note,
            "mechanism": _spec_doc(spec)["priority"],
        }, indent=1) + "\n"
    rows = []
    for i, t in enumerate(spec.thresholds):
        for j, c in enumerate(t.interior, start=1):
            rows.append((i, spec.rank[i], j, c))
    text = csv_text(("bidder", "priority_rank", "cut_index", "cut"), rows)
    return text + csv_text(("objective", "branch", "value", "modified"),
                           [(args.objective, branch, value, spec.modified)])


def _load_mechanism(path):
    text = _read(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if "allocation" not in doc:
        if "priority" not in doc:
            raise UsageError(f"{path}: needs an allocation table or a priority block")
        return None, _spec_from_doc(doc)
    try:
        m = mechanism_from_json(text)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return m, m.priority


def cmd_eval(args):
    m, spec = _load_mechanism(args.mechanism)
    n = m.n if m is not None else spec.n
    dists = _dists(args, n)
    v0 = args.v0
    if args.strategies:
        try:
            s = [ThresholdVector(c) for c in json.loads(_read(args.strategies))]
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise UsageError(f"{args.strategies}: bad strategy list ({exc})") from None
    elif spec is not None:
        s = list(spec.thresholds)
    else:
        raise UsageError("the mechanism carries no cuts; pass --strategies")
    if m is None:
        if args.method == "mc":
            raise UsageError("Monte-Carlo evaluation needs a tabulated mechanism")
        rep = evaluate_priority(spec.with_thresholds(tuple(s)), dists, v0)
    else:
        if args.method == "mc" and args.seed is None:
            raise UsageError("--seed is required with --method mc")
        rep = evaluate(m, s, dists, v0, args.method, args.samples, args.seed, args.workers)
    return rep.to_json() + "\n" if args.json else rep.to_csv()


def cmd_certify(args):
    dists = _dists(args, 2)
    v0 = _v0(args, dists)
    try:
        cert = certify_2bidder_optimality(args.k, dists, v0, args.objective, restarts=args.restarts,
                                          seed=args.seed or 0)
    except CertificationError as exc:
        sys.stderr.write(f"certification failed: {exc}\n")
        args._status = EXIT_NUMERIC
        cert = exc.certificate
    if args.json:
        return certificate_json(cert) + "\n"
    rows = [(e["allocation_id"], e["label"], e["priority"] or "", e["optimal_value"],
             ";".join(" ".join(fmt(c) for c in cuts) for cuts in e["optimal_cuts"]),
             e["allocation_id"] == cert["argmax"]) for e in cert["entries"]]
    return csv_text(("allocation_id", "label", "priority", "optimal_value", "cuts", "argmax"), rows)


def _tree_and_strategies(args):
    try:
        tree = tree_from_json(_read(args.tree))
    except (ValueError, StructuralError) as exc:
        raise UsageError(f"{args.tree}: {exc}") from None
    dists = _dists(args, args.n or num_bidders(tree))
    if args.strategies:
        s = strategies_from_json(_read(args.strategies))
    else:
        s = backward_induction_best_response(tree, dists, _v0(args, dists))
    return tree, s, dists


def cmd_sequential_eval(args):
    tree, s, dists = _tree_and_strategies(args)
    v0 = _v0(args, dists)
    rep = evaluate_sequential(tree, s, dists, v0)
    if args.json:
        return json.dumps({"expected_welfare": rep.expected_welfare, "expected_profit": rep.expected_profit,
                           "strategies": json.loads(strategies_to_json(s))}, indent=1) + "\n"
    rows = [(",".join(map(str, p)) or "root", ";".join(fmt(c) for c in t.interior)) for p, t in sorted(s.items())]
    return (csv_text(("welfare", "profit"), [(rep.expected_welfare, rep.expected_profit)])
            + csv_text(("history", "cuts"), rows))


def cmd_flatten(args):
    tree, s, dists = _tree_and_strategies(args)
    v0 = _v0(args, dists)
    res = flatten_to_simultaneous(tree, s, dists, v0, monotone=args.monotone)
    if args.mechanism_out:
        _write(args.mechanism_out, mechanism_to_json(res.mechanism))
    rows = [(i, c, b, bound, ";".join(fmt(x) for x in t.interior))
            for i, (c, b, bound, t) in enumerate(zip(res.message_counts, res.bits, res.per_bidder_bounds,
                                                     res.strategies))]
    if args.json:
        return json.dumps({
            "message_counts": res.message_counts, "bits": res.bits, "total_bits": res.total_bits,
            "bit_bound": res.bit_bound, "communication_requirement": res.communication_requirement,
            "within_bound": res.within_bound, "cuts": [list(t.interior) for t in res.strategies],
        }, indent=1) + "\n"
    return (csv_text(("bidder", "messages", "bits", "message_bound", "cuts"), rows)
            + csv_text(("total_bits", "bit_bound", "communication_requirement", "within_bound"),
                       [(res.total_bits, res.bit_bound, res.communication_requirement, res.within_bound)]))


def cmd_reproduce(args):
    if args.table not in TABLES:
        raise UsageError(f"unknown table {args.table!r}; available: {', '.join(TABLES)}")
    rows = reproduce(args.table, kmax=args.kmax, nmax=args.nmax)
    if not all(r.ok for r in rows):
        args._status = EXIT_MISMATCH
        for r in rows:
            if not r.ok:
                sys.stderr.write(f"mismatch: {r.table} {r.quantity}: {r.computed!r} vs {r.target!r}\n")
    if args.json:
        return json.dumps([dict(zip(HEADER, r.cells())) for r in rows], indent=1) + "\n"
    return csv_text(HEADER, [r.cells() for r in rows])


# ------------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="boundedauction", description="Single-item auctions with a few bits per bidder.")
    p.add_argument("--version", action="version", version=version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model=True):
        if model:
            sp.add_argument("--objective", choices=("welfare", "profit"), default="welfare")
            sp.add_argument("--n", type=int, default=None, help="number of bidders")
            sp.add_argument("--k", type=int, default=2, help="bids per bidder")
            sp.add_argument("--dist", action="append", metavar="SPEC",
                            help="uniform:a,b or table:path; repeat once per bidder")
            sp.add_argument("--v0", type=float, default=None, help="seller's value (default: lowest support point)")
            sp.add_argument("--method", choices=("exact", "mc"), default="exact")
            sp.add_argument("--samples", type=int, default=1_000_000)
            sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="write the result here instead of stdout")
        sp.add_argument("--json", action="store_true", help="JSON instead of CSV")
        sp.add_argument("--manifest", help="write a run manifest (arguments, version, output checksum)")

    s = sub.add_parser("solve", help="optimal (modified) priority game")
    common(s)
    s.add_argument("--mechanism-out", help="write the mechanism JSON here")
    s.add_argument("--fallback", action="store_true", help="use the quantile mechanism when no optimum is known")
    s.set_defaults(func=cmd_solve, n=2)

    e = sub.add_parser("eval", help="evaluate a mechanism JSON")
    common(e)
    e.add_argument("--mechanism", required=True)
    e.add_argument("--strategies", help="JSON list of cut vectors, one per bidder")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("certify", help="exhaustive two-bidder optimality check (k <= 3)")
    common(c)
    c.add_argument("--restarts", type=int, default=8)
    c.set_defaults(func=cmd_certify)

    for name, func, helptext in (("sequential-eval", cmd_sequential_eval, "evaluate a sequential tree"),
                                 ("flatten", cmd_flatten, "flatten a sequential tree")):
        q = sub.add_parser(name, help=helptext)
        common(q)
        q.add_argument("--tree", required=True)
        q.add_argument("--strategies", help="strategy JSON keyed by history; default: backward induction")
        if name == "flatten":
            q.add_argument("--monotone", action="store_true")
            q.add_argument("--mechanism-out", help="write the flattened mechanism JSON here")
        q.set_defaults(func=func)

    r = sub.add_parser("reproduce", help="reference numbers next to computed values")
    common(r, model=False)
    r.add_argument("table", help="one of: " + ", ".join(TABLES))
    r.add_argument("--kmax", type=int, default=12)
    r.add_argument("--nmax", type=int, default=100)
    r.set_defaults(func=cmd_reproduce)
    return p


def _manifest(args, argv, output):
    record = {k: v for k, v in vars(args).items() if k not in ("func", "_status")}
    return {
        "command": args.command,
        "argv": list(argv),
        "args": record,
        "seed": getattr(args, "seed", None),
        "version": version(),
        "output_sha256": hashlib.sha256(output.encode("utf-8")).hexdigest(),
    }


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args._status = EXIT_OK
    try:
        output = args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (NotRegularError, StructuralError, CharacterizationOpenError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (SolverError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    if args.out:
        _write(args.out, output)
    else:
        sys.stdout.write(output)
    if args.manifest:
        _write(args.manifest, json.dumps(_manifest(args, argv, output), indent=1, sort_keys=True) + "\n")
    return args._status


if __name__ == "__main__":
    sys.exit(main())
