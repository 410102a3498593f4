"""Command-line front end:
gen | decompose | build | refute | oracle | sweep | verify.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 I/O error.
Every output file embeds the tool version, the echoed config, and the
master seed; timestamps live in a separate "meta" block so re-runs are
byte-identical outside it.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from ._version import __version__
from .decompose import compute_thresholds, decompose, dump_decomposition, \
    recombination_check, verify_decomposition
from .graphs import quadratic_form
from .instances import (
    OracleLimitExceeded,
    XorInstance,
    brute_force_val,
    dump_instance,
    expected_val,
    generate_planted_linear_instance,
    generate_random_matching_instance,
    load_instance,
)
from .refute import dump_certificate, load_certificate, refute_full

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_IO = 3


class ConfigError(ValueError):
    pass


def _meta(config: dict, seed) -> dict:
    return {
        "tool_version": __version__,
        "config": config,
        "master_seed": seed,
    }


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, args.threads)
    env = os.environ.get("KIKUCHI_THREADS")
    return max(1, int(env)) if env else 1


def cmd_gen(args) -> int:
    config = {
        "n": args.n, "q": args.q, "k": args.k, "delta": args.delta,
        "planted": args.planted, "seed": args.seed,
    }
    if args.planted:
        inst, code = generate_planted_linear_instance(
            args.n, args.q, args.k, args.delta, args.seed
        )
    else:
        inst = generate_random_matching_instance(
            args.n, args.q, args.k, args.delta, args.seed
        )
        code = None
    extra = _meta(config, args.seed)
    extra["meta"] = {"created_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    dump_instance(inst, args.out, extra=extra)
    if code is not None:
        sidecar = os.path.splitext(args.out)[0] + ".generator.json"
        with open(sidecar, "w") as fh:
            json.dump(code.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        print(f"generator sidecar: {sidecar}")
    sizes = inst.edge_counts
    print(
        f"wrote {args.out}: n={inst.n} k={inst.k} q={inst.q} "
        f"sizes={list(sizes)} measured_delta={float(inst.measured_delta()):.4f}"
    )
    return EXIT_OK


def cmd_decompose(args) -> int:
    inst = load_instance(args.inp)
    if not isinstance(inst, XorInstance):
        raise ConfigError("decompose expects a q-uniform instance file")
    thr = compute_thresholds(
        inst.n, inst.k, inst.q, inst.measured_delta(), ell_override=args.ell
    )
    dec = decompose(inst, thr)
    report = verify_decomposition(dec)
    if not report["ok"]:
        for v in report["violations"]:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VERIFY
    extra = _meta({"in": args.inp, "ell": args.ell}, seed=None)
    extra["meta"] = {"created_at": time.strftime("%Y-%m-%dT%H:%M:%S")}
    dump_decomposition(dec, args.out, extra=extra)
    print(
        f"wrote {args.out}: leftover={dec.leftover.total_edges} edges, "
        f"pieces={{{', '.join(f'{s}: {p.total_edges}' for s, p in sorted(dec.pieces.items()))}}}"
    )
    return EXIT_OK


def cmd_refute(args) -> int:
    inst = load_instance(args.inp)
    if not isinstance(inst, XorInstance):
        raise ConfigError("refute expects a q-uniform instance file")
    config = {
        "in": args.inp, "epsilon": args.epsilon, "gamma": args.gamma,
        "trials": args.trials, "seed": args.seed, "ell": args.ell,
        "partitions": args.partitions,
    }
    run = refute_full(
        inst, epsilon=args.epsilon, gamma=args.gamma, trials=args.trials,
        seed=args.seed, ell=args.ell, n_partitions=args.partitions,
        threads=_threads(args),
    )
    cert = dict(run.certificate)
    cert.update(_meta(config, args.seed))
    if args.soundness:
        try:
            log = run.soundness_check()
            cert["soundness_log"] = log
            bad = [e for e in log if not e["ok"]]
            if bad:
                print(f"soundness violations: {len(bad)}", file=sys.stderr)
                dump_certificate(cert, args.out, extra_meta=_now())
                return EXIT_VERIFY
        except OracleLimitExceeded as exc:
            print(f"soundness check skipped: {exc}", file=sys.stderr)
    dump_certificate(cert, args.out, extra_meta=_now())
    print(
        f"wrote {args.out}: combined bound {cert['combined_bound']:.4f} "
        f"vs eps*delta*n*k = {cert['eps_delta_nk']:.4f} -> {cert['verdict']}"
    )
    return EXIT_OK


def _now() -> dict:
    return {"created_at": time.strftime("%Y-%m-%dT%H:%M:%S")}


def cmd_build(args) -> int:
    from .graphs import assemble_basic, assemble_bipartite, assemble_regular_cs, \
        dump_graph
    from .instances import BipartiteXorInstance

    inst = load_instance(args.inp)
    if isinstance(inst, BipartiteXorInstance):
        g = assemble_bipartite(inst, args.ell)
    elif args.variant == "regular_cs":
        g = assemble_regular_cs(inst, args.ell)
    elif args.variant in ("basic_even", "naive_odd"):
        g = assemble_basic(inst, args.ell, variant=args.variant)
    elif args.variant == "auto":
        g = assemble_basic(inst, args.ell)
    else:
        raise ConfigError(f"unknown variant {args.variant}")
    dump_graph(g, args.out)
    print(
        f"wrote {args.out}: variant={g.variant} labels={g.n_labels} "
        f"edges={g.n_edges} D={g.D} shape={g.shape}"
    )
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_instance(args.inp)
    out: dict = {"tool_version": __version__, "in": args.inp}
    signs = None
    if args.signs:
        signs = [int(s) for s in args.signs.split(",")]
    elif inst.signs is not None:
        signs = list(inst.signs)  # fixed signs stored with the instance
    if signs is not None:
        val, x, y = brute_force_val(inst, signs, limit=args.limit)
        out.update({"signs": signs, "val": val, "argmax_x": x, "argmax_y": y})
    else:
        mean, stderr = expected_val(
            inst, trials=args.trials, seed=args.seed, limit=args.limit
        )
        out.update({"expected_val": mean, "stderr": stderr})
    text = json.dumps(out, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    ks = [int(x) for x in args.k_list.split(",")]
    seeds = list(range(args.seeds))
    rows = []
    for k in ks:
        for sd in seeds:
            try:
                if args.planted:
                    inst, _ = generate_planted_linear_instance(
                        args.n, args.q, k, args.delta, seed=sd
                    )
                else:
                    inst = generate_random_matching_instance(
                        args.n, args.q, k, args.delta, seed=sd
                    )
                run = refute_full(
                    inst, epsilon=args.epsilon, gamma=args.gamma,
                    trials=args.trials, seed=sd, ell=args.ell,
                    threads=_threads(args),
                )
                c = run.certificate
                dnk = c["delta_n_measured"] * k
                rows.append({
                    "k": k, "seed": sd,
                    "combined_bound": c["combined_bound"],
                    "eps_delta_nk": c["eps_delta_nk"],
                    "ratio": c["combined_bound"] / dnk if dnk else "",
                    "verdict": c["verdict"],
                    "error": "",
                })
            except Exception as exc:  # per-row failures recorded, sweep continues
                rows.append({
                    "k": k, "seed": sd, "combined_bound": "",
                    "eps_delta_nk": "", "ratio": "", "verdict": "",
                    "error": str(exc),
                })
    fields = ["k", "seed", "combined_bound", "eps_delta_nk", "ratio",
              "verdict", "error"]
    config = (
        f"n={args.n} q={args.q} delta={args.delta} k_list={args.k_list} "
        f"seeds={args.seeds} epsilon={args.epsilon} gamma={args.gamma} "
        f"ell={args.ell} planted={args.planted}"
    )
    with open(args.out, "w", newline="") as fh:
        fh.write(f"# kikuchi {__version__} {config}\n")
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {args.out}: {len(rows)} rows")
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = load_instance(args.inp)
    cert = load_certificate(args.cert)
    params = cert["params"]
    failures = []

    thr = compute_thresholds(
        inst.n, inst.k, inst.q, inst.measured_delta(),
        ell_override=params.get("ell"),
    )
    dec = decompose(inst, thr)
    report = verify_decomposition(dec)
    if not report["ok"]:
        failures.extend(report["violations"])

    import numpy as np

    rng = np.random.default_rng(params.get("seed", 0))
    for _ in range(20):
        b = (1 - 2 * rng.integers(0, 2, size=inst.k)).tolist()
        x = (1 - 2 * rng.integers(0, 2, size=inst.n)).tolist()
        if not recombination_check(dec, b, x):
            failures.append("recombination identity violated")
            break

    run = refute_full(
        inst, epsilon=params["epsilon"], gamma=params["gamma"],
        trials=params["trials"], seed=params["seed"],
        ell=params.get("ell"), n_partitions=params.get("n_partitions", 4),
        threads=_threads(args),
    )
    fresh = run.certificate
    if abs(fresh["combined_bound"] - cert["combined_bound"]) > 1e-9 * max(
        1.0, abs(cert["combined_bound"])
    ):
        failures.append(
            f"certificate bound mismatch: stored {cert['combined_bound']}, "
            f"recomputed {fresh['combined_bound']}"
        )
    if fresh["verdict"] != cert["verdict"]:
        failures.append("verdict mismatch")

    # edge-count and quadratic-form re-verification on one piece graph
    from .graphs import assemble_regular_cs, reverify_edges

    g = assemble_regular_cs(dec.leftover, thr.ell) if dec.leftover.total_edges else None
    if g is not None and g.n_labels and not g.verify_label_counts():
        failures.append("per-label edge counts unequal")
    if g is not None and g.n_labels and not reverify_edges(g):
        failures.append("edge predicate re-verification failed")
    if g is not None and g.n_labels:
        from .refute import eval_full_pairs

        for _ in range(5):
            b = (1 - 2 * rng.integers(0, 2, size=inst.k)).tolist()
            x = (1 - 2 * rng.integers(0, 2, size=inst.n)).tolist()
            form, _ = quadratic_form(g, b, x)
            if form != g.D * eval_full_pairs(dec.leftover, b, x):
                failures.append("quadratic form identity violated")
                break

    try:
        if args.exhaustive_b:
            log = run.soundness_check()
        else:
            signs = [
                (1 - 2 * rng.integers(0, 2, size=inst.k)).tolist()
                for _ in range(min(16, 1 << inst.k))
            ]
            log = run.soundness_check(signs)
        bad = [e for e in log if not e["ok"]]
        if bad:
            failures.append(f"soundness violated for {len(bad)} sign vectors")
    except OracleLimitExceeded as exc:
        print(f"note: oracle infeasible, soundness skipped ({exc})")

    if failures:
        print(f"FAIL: {failures[0]}", file=sys.stderr)
        for f in failures[1:]:
            print(f"      {f}", file=sys.stderr)
        return EXIT_VERIFY
    print("verify: all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kikuchi",
        description="Spectral refutation certificates for matching XOR instances",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random or planted instance")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--q", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--delta", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--planted", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    d = sub.add_parser("decompose", help="heavy-set decomposition of an instance")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--ell", type=int, default=None,
                   help="override the formula value of ell")
    d.set_defaults(fn=cmd_decompose)

    r = sub.add_parser("refute", help="produce a combined refutation certificate")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--epsilon", type=float, default=0.1)
    r.add_argument("--gamma", type=float, default=8.0)
    r.add_argument("--trials", type=int, default=200)
    r.add_argument("--seed", type=int, default=7)
    r.add_argument("--ell", type=int, default=None)
    r.add_argument("--partitions", type=int, default=4)
    r.add_argument("--soundness", action="store_true",
                   help="embed an exhaustive per-b soundness log")
    r.add_argument("--threads", type=int, default=None)
    r.set_defaults(fn=cmd_refute)

    b = sub.add_parser("build", help="assemble a Kikuchi graph and dump its edges")
    b.add_argument("--in", dest="inp", required=True)
    b.add_argument("--variant", default="auto",
                   choices=["auto", "basic_even", "naive_odd", "regular_cs"],
                   help="ignored for bipartite instance files")
    b.add_argument("--ell", type=int, required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(fn=cmd_build)

    o = sub.add_parser("oracle", help="brute-force value / expected value")
    o.add_argument("--in", dest="inp", required=True)
    o.add_argument("--signs", default=None,
                   help="comma-separated +-1 vector; omit for E_b")
    o.add_argument("--trials", type=int, default=200)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--limit", type=int, default=24)
    o.add_argument("--out", default=None)
    o.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("sweep", help="CSV of combined bounds across a k range")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--k-list", required=True, help="comma-separated k values")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--epsilon", type=float, default=0.1)
    s.add_argument("--gamma", type=float, default=8.0)
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--ell", type=int, default=None)
    s.add_argument("--planted", action="store_true")
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_sweep)

    v = sub.add_parser("verify", help="re-verify an instance + certificate pair")
    v.add_argument("--in", dest="inp", required=True)
    v.add_argument("--cert", required=True)
    v.add_argument("--exhaustive-b", action="store_true")
    v.add_argument("--threads", type=int, default=None)
    v.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
