"""Command-line entry point: ``rigidlab <command> [flags]``.

Exit codes: 0 ok, 2 usage or bad input, 3 a cap was hit, 4 an invariant failed.
Reports are JSON or CSV. Numbers are exact integers, rationals written "p/q",
or reals carried as {"value": ..., "formula": ...}. Without ``--timing`` the
elapsed_ms field is 0 so identical flags give byte-identical reports.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import random
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .commsim import (
    MACHINES,
    all_matrices,
    bias,
    cell_sample,
    count_low_rank,
    majority_flip,
    message_bits,
    moment,
    moment_bound,
    moment_bound_check,
    per_matrix_success,
    rank_distribution,
    run_protocol,
)
from .gf2core import (
    BitMatrix,
    BitVector,
    FormatError,
    Subspace,
    distance_to_subspace,
    enumerate_subspaces,
    load_subspace,
    mat,
    random_subspace,
    rank,
    vec,
)
from .limits import CapExceeded, InvariantViolation, check_cap, use_caps
from .querysets import four_query_identity, format_vectors, resolve_queries, upsilon_sizes
from .rigidity import find_far_rank_one, fold_set, rigidity_value, strong_rigidity_value
from .sysds import build_plan, t_direct, verify_exhaustive


class UsageError(ValueError):
    pass


def ratio(x: Fraction | int) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def real(value: float, formula: str) -> dict:
    return {"value": round(value, 12), "formula": formula}


def basis_rows(u: Subspace) -> list[str]:
    return [str(v) for v in u.basis_vectors()]


# --------------------------------------------------------------------------
# Commands. Each returns (result dict, csv rows or None, ok flag).


def cmd_rigidity(args):
    q = resolve_queries(args.queries)
    if args.n is not None and args.n != q.n:
        raise UsageError(f"--n {args.n} but the query set lives in F_2^{q.n}")
    rep = rigidity_value(q, args.r, workers=args.workers)
    result = {
        "n": q.n,
        "r": args.r,
        "m": q.m,
        "value": rep.value,
        "witness_basis": basis_rows(rep.witness),
        "argmax_query": str(rep.argmax_query) if rep.argmax_query is not None else None,
        "subspace_count_scanned": rep.subspaces_scanned,
    }
    return result, None, True


def _equivalence_sets(args):
    sets = [(ref, resolve_queries(ref)) for ref in args.queries]
    if args.random_sets:
        if args.n is None:
            raise UsageError("--random-sets needs --n")
        rng = random.Random(args.seed)
        for i in range(args.random_sets):
            m = rng.randint(1, min(2**args.n, 2 * args.n))
            ref = f"builtin:random:{args.n}:{m}:{args.seed * 1000 + i}"
            sets.append((ref, resolve_queries(ref)))
    if not sets:
        raise UsageError("give --queries and/or --random-sets")
    for ref, q in sets:
        if args.n is not None and q.n != args.n:
            raise UsageError(f"{ref} lives in F_2^{q.n}, not F_2^{args.n}")
    return sets


def cmd_equivalence(args):
    rows = []
    ok = True
    for ref, q in _equivalence_sets(args):
        rep = rigidity_value(q, args.r, workers=args.workers)
        td = t_direct(q, args.r)
        ds = build_plan(q, rep.witness)
        verified = bool(verify_exhaustive(ds, q))
        equal = td == rep.value and ds.time == rep.value and verified
        ok &= equal
        rows.append(
            {
                "set_id": ref,
                "n": q.n,
                "r": args.r,
                "rig_value": rep.value,
                "t_direct": td,
                "plan_time": ds.time,
                "plan_verified": verified,
                "equal": equal,
            }
        )
    return {"sets": len(rows), "all_equal": ok}, rows, ok


def cmd_fold(args):
    s = resolve_queries(args.queries)
    folded = fold_set(s, args.r)
    result = {
        "n": s.n,
        "r": args.r,
        "m": s.m,
        "folded_n": folded.n,
        "folded_m": folded.m,
        "size_bound": s.m * math.ceil(s.n / (2 * args.r)),
        "folded": [str(v) for v in folded.vectors],
    }
    ok = True
    if args.check:
        rig = rigidity_value(s, args.r).value
        rig_folded = rigidity_value(folded, args.r).value
        needed = math.ceil(Fraction(rig * args.r, s.n))
        ok = rig_folded >= needed
        result.update({"rig": rig, "rig_folded": rig_folded, "required": needed, "holds": ok})
    return result, None, ok


def cmd_far_rank_one(args):
    if args.subspace:
        v_space = load_subspace(args.subspace, args.n)
    else:
        if args.n is None or args.dim is None:
            raise UsageError("far-rank-one needs --subspace or both --n and --dim")
        v_space = random_subspace(args.n, args.dim, random.Random(args.seed))
    res = find_far_rank_one(v_space)
    recomputed = distance_to_subspace(vec(BitMatrix.outer(res.a, res.b)), v_space)
    ok = recomputed == res.certified and res.certified >= res.bound
    result = {
        "n": v_space.ambient_dim,
        "dim": v_space.dim,
        "subspace_basis": basis_rows(v_space),
        "r_prime": res.r_prime,
        "block": str(res.block),
        "block_distances": list(res.block_distances),
        "tiled_rank": res.rank,
        "a": str(res.a),
        "b": str(res.b),
        "certified": res.certified,
        "recomputed": recomputed,
        "bound": res.bound,
        "bound_formula": "ceil(sum(block_distances) * sqrt(n) / (2 r'))",
        "holds": ok,
    }
    return result, None, ok


def cmd_strong_rigidity(args):
    q = resolve_queries(args.queries)
    value, witness = strong_rigidity_value(q, args.r, workers=args.workers)
    rig = rigidity_value(q, args.r, workers=args.workers).value
    ok = value <= rig
    result = {
        "n": q.n,
        "r": args.r,
        "m": q.m,
        "strong_value": ratio(value),
        "witness_basis": basis_rows(witness),
        "rigidity_value": rig,
        "average_le_max": ok,
    }
    return result, None, ok


def cmd_gen_queryset(args):
    q = resolve_queries(args.uri)
    result = {"n": q.n, "m": q.m, "vectors": [str(v) for v in q.vectors]}
    if args.uri.startswith("builtin:upsilon:"):
        actual, closed = upsilon_sizes(int(args.uri.rsplit(":", 1)[1]))
        result["upsilon_size_with_zero"] = actual
        result["upsilon_size_closed_form"] = closed
    return result, None, True


def cmd_protocol_sim(args):
    root = args.root
    ds = MACHINES[args.machine](root)
    if args.flip:
        ds = majority_flip(ds)
    size = ds.s if args.sample_size is None else args.sample_size
    if not 0 <= size <= ds.s:
        raise UsageError(f"--sample-size must lie in 0..{ds.s}")
    if args.matrices is None and 2 ** (root * root) <= 4096:
        mats = list(all_matrices(root))
    else:
        count = args.matrices or 200
        rng = random.Random(args.seed)
        mats = [mat(BitVector(root * root, rng.getrandbits(root * root))) for _ in range(count)]
    exact_bits, bound_bits = message_bits(ds.s, ds.w, size)
    per_m = []
    ok = True
    for idx, m in enumerate(mats):
        sample = cell_sample(ds, m, size, args.trials, args.seed * 1_000_003 + idx)
        run = run_protocol(ds, m, sample)
        ok &= run.success == run.accounting and run.message.total_bits == exact_bits
        per_m.append(
            {
                "M": str(vec(m)),
                "advantage": ratio(sample.advantage),
                "ds_success": ratio(per_matrix_success(ds, m)),
                "sample": {"S": sorted(sample.S), "margin": ratio(sample.margin)},
                "b": run.message.b,
                "success": ratio(run.success),
                "accounting": ratio(run.accounting),
            }
        )
    advs = [Fraction(e["advantage"]) for e in per_m]
    succ = [Fraction(e["success"]) for e in per_m]
    result = {
        "root": root,
        "machine": ds.name,
        "s": ds.s,
        "w": ds.w,
        "t": ds.t,
        "sample_size": size,
        "trials": args.trials,
        "matrices": len(mats),
        "per_M": per_m,
        "global_advantage": ratio(sum(advs, Fraction(0)) / len(advs)),
        "sample": [{"M": e["M"], **e["sample"]} for e in per_m],
        "message_bits": {
            "exact": exact_bits,
            "bound": real(bound_bits, "1 + size*w + size*log2(e*s/size)"),
            "n_over_10": real(root * root / 10, "n/10"),
        },
        "success": ratio(sum(succ, Fraction(0)) / len(succ)),
        "accounting_matches": ok,
    }
    rows = [
        {"M": e["M"], "advantage": e["advantage"], "S": " ".join(map(str, e["sample"]["S"])),
         "margin": e["sample"]["margin"], "b": e["b"], "success": e["success"], "accounting": e["accounting"]}
        for e in per_m
    ]
    return result, rows, ok


def cmd_discrepancy(args):
    root, k = args.root, args.k
    check_cap("matrices", 2 ** (root * root), "matrix space")
    mom = moment(root, k)
    ok = moment_bound_check(root, k)
    low = count_low_rank(root, k)
    result = {
        "root": root,
        "k": k,
        "rank_distribution": list(rank_distribution(root)),
        "moment": ratio(mom),
        "bound": real(moment_bound(root, k), "2*2^(-9*k*root/20)"),
        "pass": ok,
        "count_low_rank": low,
        "count_low_rank_bound": 2 ** (2 * k * root),
        "count_pass": low <= 2 ** (2 * k * root),
    }
    return result, None, ok and result["count_pass"]


def cmd_identity_checks(args):
    root = args.root
    n = root * root
    checks = []

    def record(name, cases, failures):
        checks.append({"check": name, "cases": cases, "failures": failures, "pass": failures == 0})

    check_cap("matrices", 2**n, "matrix space")
    mats = list(all_matrices(root))
    record("vec_mat_roundtrip", len(mats), sum(mat(vec(m)) != m for m in mats))
    fails = cases = 0
    for m in mats:
        for ub in range(1 << root):
            for vb in range(1 << root):
                for i in range(1, root + 1):
                    for j in range(1, root + 1):
                        cases += 1
                        fails += not four_query_identity(m, BitVector(root, ub), BitVector(root, vb), i, j)
    record("four_query_identity", cases, fails)
    record("bias_equals_two_to_minus_rank", len(mats), sum(bias(m) != Fraction(1, 2 ** rank(m)) for m in mats))
    # subadditivity over every subspace of F_2^sub_n
    sub_n = args.n
    check_cap("input_space", 1 << (2 * sub_n), "pair space")
    fails = cases = 0
    for d in range(sub_n + 1):
        for u in enumerate_subspaces(sub_n, d):
            dist = [distance_to_subspace(BitVector(sub_n, x), u) for x in range(1 << sub_n)]
            for x in range(1 << sub_n):
                for y in range(1 << sub_n):
                    cases += 1
                    fails += dist[x ^ y] > dist[x] + dist[y]
    record("distance_subadditivity", cases, fails)
    ok = all(c["pass"] for c in checks)
    return {"root": root, "subadditivity_n": sub_n, "checks": checks, "all_pass": ok}, checks, ok


# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=["json", "csv"], default=default_format)
    p.add_argument("--cap-subspaces", type=int)
    p.add_argument("--cap-input-space", type=int)
    p.add_argument("--cap-coset-dim", type=int)
    p.add_argument("--cap-matrices", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="record real elapsed_ms (reports stop being byte-stable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rigidlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rigidity", help="exact RIG(Q, r) with witness subspace")
    p.add_argument("--queries", required=True, help="file or builtin:<kind>:<args>")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--n", type=int)
    _common(p)
    p.set_defaults(func=cmd_rigidity)

    p = sub.add_parser("equivalence-check", help="RIG(Q, r) versus direct optimal probe count")
    p.add_argument("--queries", action="append", default=[])
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--random-sets", type=int, default=0)
    _common(p, "csv")
    p.set_defaults(func=cmd_equivalence)

    p = sub.add_parser("fold", help="fold a query set into F_2^(2r)")
    p.add_argument("--queries", required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--check", action="store_true", help="also compute both rigidity values")
    _common(p)
    p.set_defaults(func=cmd_fold)

    p = sub.add_parser("far-rank-one", help="rank-one matrix far from a subspace")
    p.add_argument("--n", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--subspace", help="basis file; default is a seeded random subspace")
    _common(p)
    p.set_defaults(func=cmd_far_rank_one)

    p = sub.add_parser("strong-rigidity", help="minimum average distance over dim <= r subspaces")
    p.add_argument("--queries", required=True)
    p.add_argument("--r", type=int, required=True)
    _common(p)
    p.set_defaults(func=cmd_strong_rigidity)

    p = sub.add_parser("gen-queryset", help="write a builtin query set to a vector file")
    p.add_argument("uri")
    _common(p)
    p.set_defaults(func=cmd_gen_queryset)

    p = sub.add_parser("protocol-sim", help="cell sampling and the one-way protocol")
    p.add_argument("--root", type=int, required=True)
    p.add_argument("--machine", choices=sorted(MACHINES), default="row-store")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--matrices", type=int, help="number of seeded matrices (default: all when <= 4096)")
    p.add_argument("--flip", action="store_true", help="wrap the machine with the majority-flip bit")
    _common(p)
    p.set_defaults(func=cmd_protocol_sim)

    p = sub.add_parser("discrepancy", help="bias moments and the low-rank count")
    p.add_argument("--root", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    _common(p)
    p.set_defaults(func=cmd_discrepancy)

    p = sub.add_parser("identity-checks", help="exhaustive small identities")
    p.add_argument("--root", type=int, default=2)
    p.add_argument("--n", type=int, default=4, help="ambient dimension for the subadditivity sweep")
    _common(p)
    p.set_defaults(func=cmd_identity_checks)
    return parser


_SKIP_FLAGS = {"func", "out", "format", "timing", "command"}


def render(report: dict, rows: list[dict] | None, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    buf = io.StringIO()
    for key, value in report.items():
        if key == "per_M" or key == "checks":
            continue
        buf.write(f"# {key}: {json.dumps(value)}\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (str(v).lower() if isinstance(v, bool) else v) for k, v in row.items()})
    return buf.getvalue()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    caps = {
        name: getattr(args, f"cap_{name}")
        for name in ("subspaces", "input_space", "coset_dim", "matrices")
        if getattr(args, f"cap_{name}", None) is not None
    }
    start = time.perf_counter()
    try:
        with use_caps(**caps):
            result, rows, ok = args.func(args)
    except CapExceeded as exc:
        print(f"rigidlab: cap {exc.cap} exceeded: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"rigidlab: invariant violated: {exc}", file=sys.stderr)
        return 4
    except (UsageError, FormatError, ValueError, FileNotFoundError) as exc:
        parser.print_usage(sys.stderr)
        print(f"rigidlab: error: {exc}", file=sys.stderr)
        return 2
    elapsed = round((time.perf_counter() - start) * 1000) if args.timing else 0
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in _SKIP_FLAGS}
    report = {
        "command": args.command,
        "version": __version__,
        "flags": flags,
        "seed": args.seed,
        "elapsed_ms": elapsed,
        **result,
    }
    if args.command == "gen-queryset" and args.out:
        header = json.dumps({k: report[k] for k in ("command", "version", "flags", "seed", "elapsed_ms")})
        q_vectors = [BitVector.from_str(s) for s in result["vectors"]]
        Path(args.out).write_text(format_vectors(q_vectors, header))
    else:
        text = render(report, rows, args.format)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    if not ok:
        print("rigidlab: a checked property failed; see report", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
