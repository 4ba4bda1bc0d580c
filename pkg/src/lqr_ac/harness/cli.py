"""``lqr-ac`` command line: ``solve``, ``run`` and ``check``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 property-suite failure.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalError
from ..oracle import evaluate_policy
from ..records import aggregate
from ..symlin import dare_residual
from . import csvio
from .checks import run_checks
from .config import load_config
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4


def _matrix_str(M):
    return np.array2string(np.asarray(M), precision=6, suppress_small=True, max_line_width=120)


def cmd_solve(args):
    cfg = load_config(args.config)
    prob = cfg.problem
    P, K = prob.optimal
    ev = evaluate_policy(prob, K)
    print(f"P* =\n{_matrix_str(P)}")
    print(f"K* =\n{_matrix_str(K)}")
    print(f"J(K*) = {ev.J:.10g}")
    print(f"rho(A - BK*) = {ev.rho:.10g}")
    print(f"ARE residual = {dare_residual(prob.A, prob.B, prob.Q, prob.R, P):.3e}")
    return EXIT_OK


def cmd_run(args):
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output or "lqr-ac-out")
    records = run_experiment(cfg, workers=args.workers)
    for rec in records:
        csvio.write_run(out / csvio.run_filename(rec), rec)
        note = f" ({rec.message})" if rec.message else ""
        print(f"seed {rec.seed}: {rec.status}, {rec.rows.shape[0]} rows{note}")
    agg = aggregate(records)
    csvio.write_aggregate(out / "aggregate.csv", agg, cfg.config_hash)
    print(f"config {cfg.config_hash}: {agg.n_runs} runs aggregated, {agg.n_excluded} excluded -> {out}")
    return EXIT_OK if agg.n_runs > 0 else EXIT_NUMERICAL


def cmd_check(args):
    cfg = load_config(args.config)
    results = run_checks(cfg.problem, n_gains=args.gains, mc_samples=args.mc_samples, seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lqr-ac", description="Actor-critic experiments on the noisy LQR.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact Riccati solution of the configured problem")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run the configured algorithm over all seeds and write CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: config 'output' or ./lqr-ac-out)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: available CPUs)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run the oracle identity and Monte-Carlo property suite")
    p.add_argument("--config", required=True)
    p.add_argument("--mc-samples", type=int, default=1_000_000)
    p.add_argument("--gains", type=int, default=20, help="random stabilizing gains per identity check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
