"""Command line interface: ``lipdev {validate,run,martingale-check,bounds-only}``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
3 some unclipped bound failed to dominate its empirical tail.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, load_config
from .experiment import emit_reports, run_experiment
from .martingale import check_martingale_property, decompose_batch, prop21_violations, telescoping_gap

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_DOMINATION = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="lipdev", description="Deviation bounds for contracting Markov chains.")
    sub = p.add_subparsers(dest="verb", required=True)

    v = sub.add_parser("validate", help="check a config and print its contraction certificate")
    v.add_argument("config")

    for name, helptext in (("run", "simulate and compare every bound against Monte Carlo"),
                           ("bounds-only", "evaluate bounds without the tail simulation")):
        r = sub.add_parser(name, help=helptext)
        r.add_argument("config")
        r.add_argument("--seed", type=int, help="override the master seed")
        r.add_argument("--out", help="output directory (default: config output.dir)")
        r.add_argument("--workers", type=int, help="worker threads")
        if name == "run":
            r.add_argument("--replications", type=int, help="override the replication count")

    m = sub.add_parser("martingale-check", help="verify the martingale decomposition and its domination")
    m.add_argument("config")
    m.add_argument("--seed", type=int)
    m.add_argument("--out")
    return p


def _load(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return None
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return None


def _validate(args):
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    cert = cfg.model.certificate
    print(f"ok: {cfg.model.family} rho={cert.rho:.6g} ({cert.derivation})")
    return EXIT_OK


def _run(args, simulate):
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    out = args.out or cfg.output_dir
    try:
        bundle = run_experiment(cfg, seed=args.seed, replications=getattr(args, "replications", None),
                                workers=args.workers, simulate=simulate)
        files = emit_reports(bundle, out)
    except (RuntimeError, OSError, ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for a in bundle.annotations:
        print(f"note: n={a['n']} {a['bound']}: {a['message']}", file=sys.stderr)
    print(f"wrote {len(bundle.rows)} rows to {files[0]}")
    failures = bundle.domination_failures
    if simulate and failures:
        print(f"{len(failures)} unclipped rows not dominated", file=sys.stderr)
        return EXIT_DOMINATION
    return EXIT_OK


def _martingale(args):
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_CONFIG
    mc = cfg.martingale
    seed = cfg.master_seed if args.seed is None else args.seed
    try:
        batch = decompose_batch(cfg.model, cfg.functional, mc["n"], mc["replications"], mc["m_future"], seed,
                                m_inner=cfg.m_inner)
        viol = prop21_violations(batch)
        report = {
            "n": mc["n"],
            "replications": mc["replications"],
            "exact": batch.exact,
            "violations": viol,
            "telescoping_gap": telescoping_gap(batch),
            "martingale_property": check_martingale_property(batch),
        }
    except (RuntimeError, ValueError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    total = viol["m1"] + sum(viol["per_k"].values())
    print(f"violations={total} telescoping_gap={report['telescoping_gap']:.3g} "
          f"martingale_property={'pass' if report['martingale_property']['passed'] else 'fail'}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "martingale.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return EXIT_DOMINATION if total else EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.verb == "validate":
        return _validate(args)
    if args.verb == "run":
        return _run(args, simulate=True)
    if args.verb == "bounds-only":
        return _run(args, simulate=False)
    return _martingale(args)


if __name__ == "__main__":
    sys.exit(main())
