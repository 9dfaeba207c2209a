import argparse
import logging
import sys
import time
import warnings
from dataclasses import replace

from covrankpy import utils
from covrankpy.bench import ScenarioConfig, load_scenario, run_scenario, write_table
from covrankpy.bootstrap import BootstrapConfig
from covrankpy.fit import scree_elbow, scree_sequence
from covrankpy.io import load_dataset, load_model_spec, write_dataset, write_report
from covrankpy.linalg import empirical_covariance
from covrankpy.rank_test import sequential_rank_test
from covrankpy.simmodels import generate_model
from covrankpy.utils import DataError, NumericalError

logger = logging.getLogger(__name__)

EXIT_OK        = 0
EXIT_USAGE     = 1
EXIT_DATA      = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(prog="covrankpy", description="Rank tests for the covariance of noisy functional data")

    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log errors")

    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    # rank-test
    p = sub.add_parser("rank-test", help="stepwise bootstrap test of the covariance rank")
    p.add_argument("data", help="CSV file with one curve per row")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--d", type=int, default=None, help="hypothesis boundary, default floor((L-1)/2)")
    p.add_argument("--B", type=int, default=500, help="bootstrap replicates")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--M", type=int, default=None, help="fixed noise-estimation rank instead of the data-driven rule")
    p.add_argument("--homoskedastic", action="store_true")
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="JSON report path")

    # scree
    p = sub.add_parser("scree", help="off-diagonal scree table")
    p.add_argument("data")
    p.add_argument("--qmax", type=int, default=None, help="largest rank, default floor((L-1)/2)")
    p.add_argument("--no-center", action="store_true")
    p.add_argument("--out", default=None, help="CSV path, standard output when omitted")

    # simulate
    p = sub.add_parser("simulate", help="simulate a dataset from a model")
    p.add_argument("--model", required=True, help="registered model name or model JSON file")
    p.add_argument("--noise", default=None, help="noise profile override")
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--L", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    # bench
    p = sub.add_parser("bench", help="distribution of the estimated rank over repeated simulations")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--reps", type=int, default=None, help="override the scenario's replication count")
    p.add_argument("--out", required=True)

    return parser


def _rank_test(args):
    sample = load_dataset(args.data)

    cfg = BootstrapConfig(
        B             = args.B,
        epsilon       = args.epsilon,
        d             = args.d,
        homoskedastic = args.homoskedastic,
        seed          = args.seed,
        M             = args.M,
        center        = not args.no_center,
        threads       = args.threads
        )

    start  = time.perf_counter()
    report = sequential_rank_test(sample, args.alpha, cfg)
    wall   = time.perf_counter() - start

    r_hat = report.r_hat if report.r_hat is not None else f">= {report.d + 1}"
    print(f"Estimated rank: {r_hat}")

    for s in report.per_q:
        if s.tested:
            print(f"  q={s.q}: T_q={s.statistic:.6g}, p={s.p_value:.4f}, M={s.M_used}")

    if args.out:
        write_report(report, args.out, wall_clock=wall)

    return EXIT_OK


def _scree(args):
    sample = load_dataset(args.data)
    cap    = (sample.L - 1) // 2
    q_max  = args.qmax if args.qmax is not None else cap

    if q_max > cap:
        warnings.warn(f"--qmax {q_max} exceeds floor((L-1)/2) = {cap}; using {cap}")
        q_max = cap

    if q_max < 1:
        raise DataError(f"Grid of size {sample.L} is too small for a scree table")

    K     = empirical_covariance(sample, center=not args.no_center)
    scree = scree_sequence(K, q_max)
    elbow = scree_elbow(scree)

    if args.out:
        scree.to_csv(args.out, index=False)
    else:
        scree.to_csv(sys.stdout, index=False)

    if elbow is not None:
        print(f"Scree levels off at q={elbow}", file=sys.stderr)

    return EXIT_OK


def _simulate(args):
    spec = load_model_spec(args.model)

    if args.noise is not None:
        spec = replace(spec, noise=args.noise)

    sim = generate_model(spec, args.n, args.L, args.seed)

    write_dataset(sim.sample, args.out)

    return EXIT_OK


def _bench(args):
    cfg = load_scenario(args.scenario)

    if args.reps is not None:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "reps": args.reps})

    result    = run_scenario(cfg)
    meta_path = write_table(result, args.out)

    print(result.table.to_string(index=False))
    print(f"Metadata written to {meta_path}", file=sys.stderr)

    return EXIT_OK


_COMMANDS = {
    "rank-test": _rank_test,
    "scree":     _scree,
    "simulate":  _simulate,
    "bench":     _bench,
    }


def main(
    argv = None
    ):
    """Command line entry point

    Args:
        argv (list, optional): arguments without the program name. Defaults to None, i.e. sys.argv[1:].

    Returns:
        int: 0 on success, 1 for usage errors, 2 for data errors, 3 for numerical failures
    """

    parser = _build_parser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    level = logging.ERROR if args.quiet else logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")

    try:
        return _COMMANDS[args.command](args)

    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA

    except (NumericalError, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL

    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA

    except utils.CovRankError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
