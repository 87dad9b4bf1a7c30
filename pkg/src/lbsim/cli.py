"""Command line front end.

Four subcommands: `run` executes one experiment, `maxrate` searches the
highest lossless rate, `sweep` runs a grid of experiments, `figures`
renders the standard figure set.  Every experiment flag can also come
from a flat key/value config file (--config); explicit flags win over
the file, the file wins over defaults.
"""

from __future__ import annotations

import argparse
import sys

from .errors import LbSimError
from .harness import (
    ExperimentConfig,
    find_max_lossless_rate,
    load_config_file,
    run_experiment,
    sweep,
    write_reports_csv,
)


def _int_value(text: str) -> int:
    """Integer argument that tolerates 12_000_000 and 12e6 spellings."""
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if value != int(value):
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
        return int(value)


def _int_list(text: str) -> list[int]:
    return [_int_value(part) for part in text.split(",") if part.strip()]


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("experiment")
    group.add_argument("--mode", choices=("slb", "hnlb"),
                       help="balancer variant (default slb)")
    group.add_argument("--nb-conn", type=_int_value, dest="nb_conn",
                       help="concurrent connections")
    group.add_argument("--pkt-size", type=_int_value, dest="pkt_size",
                       help="packet size in bytes [64, 1518]")
    group.add_argument("--rate", type=_int_value,
                       help="offered rate, packets per second (0 = idle run)")
    group.add_argument("--n-packets", type=_int_value, dest="n_packets",
                       help="packets in the measured stream")
    group.add_argument("--queues", type=_int_value,
                       help="backend receive queues (the default queue is extra)")
    group.add_argument("--n-dips", type=_int_value, dest="n_dips",
                       help="backends behind the VIP (default: one per queue)")
    group.add_argument("--fd-capacity", type=_int_value, dest="fd_capacity",
                       help="NIC match table capacity [2000, 8000]")
    group.add_argument("--seed", type=_int_value, help="workload RNG seed")
    group.add_argument("--scheduler", choices=("random", "round_robin"),
                       help="how packets are spread over connections")
    group.add_argument("--cost-preset", choices=("calibrated", "raw"),
                       dest="cost_preset", help="cycle cost preset")
    group.add_argument("--no-warmup", action="store_true",
                       help="skip the connection-establishment warmup pass")
    group.add_argument("--config", help="flat key = value config file")
    group.add_argument("--out", help="write a CSV report to this path")


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    mapping: dict = {}
    if args.config:
        mapping.update(load_config_file(args.config))
    for key in ("mode", "nb_conn", "pkt_size", "rate", "n_packets", "queues",
                "n_dips", "fd_capacity", "seed", "scheduler", "cost_preset"):
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    if getattr(args, "no_warmup", False):
        mapping["warmup"] = False
    return ExperimentConfig.from_mapping(mapping)


def _print_report(report) -> None:
    cfg = report.config
    print(f"mode={cfg.mode} nb_conn={cfg.nb_conn} pkt_size={cfg.pkt_size} "
          f"offered_pps={report.offered_pps} forwarded={report.forwarded} "
          f"dropped={report.dropped} loss={report.loss_fraction:.6f} "
          f"achieved_pps={report.achieved_pps:.0f} "
          f"util={report.util:.4f} util_plus={report.util_plus:.4f}")


def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    report = run_experiment(config)
    _print_report(report)
    if args.out:
        write_reports_csv(args.out, [report])
        print(f"report written to {args.out}")
    return 0


def _cmd_maxrate(args: argparse.Namespace) -> int:
    config = _build_config(args)
    result = find_max_lossless_rate(config, args.lo, args.hi,
                                    tolerance=args.tolerance)
    print(f"max lossless rate: {result.rate_pps} pps "
          f"({result.rate_pps / 1e6:.3f} Mpps) after {len(result.probes)} probes")
    _print_report(result.report)
    if args.out:
        write_reports_csv(args.out, [result.report])
        print(f"report written to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    reports = sweep(config, rates=args.rates, nb_connections=args.nb_conns,
                    pkt_sizes=args.pkt_sizes)
    for report in reports:
        _print_report(report)
    if args.out:
        write_reports_csv(args.out, reports, base_config=config)
        print(f"{len(reports)} rows written to {args.out}")
    return 0


def _cmd_figures(args: argparse.Namespace) -> int:
    # matplotlib import is deferred so the other subcommands stay light
    from .figures import FigureParams, render_figures

    config = _build_config(args)
    params = FigureParams.quick() if args.quick else FigureParams()
    written = render_figures(args.outdir, config, params)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbsim",
        description="Cycle-driven simulator of a stateful L4 load balancer "
                    "with optional NIC offload of established connections.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_experiment_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_max = sub.add_parser("maxrate", help="find the max lossless rate")
    _add_experiment_flags(p_max)
    p_max.add_argument("--lo", type=_int_value, default=1_000_000,
                       help="lower search bound, pps (must be lossless)")
    p_max.add_argument("--hi", type=_int_value, default=20_000_000,
                       help="upper search bound, pps")
    p_max.add_argument("--tolerance", type=float, default=0.01,
                       help="relative convergence tolerance")
    p_max.set_defaults(func=_cmd_maxrate)

    p_sweep = sub.add_parser("sweep", help="run a grid of experiments")
    _add_experiment_flags(p_sweep)
    p_sweep.add_argument("--rates", type=_int_list, required=True,
                         help="comma-separated offered rates, pps")
    p_sweep.add_argument("--nb-conns", type=_int_list, dest="nb_conns",
                         help="comma-separated connection counts")
    p_sweep.add_argument("--pkt-sizes", type=_int_list, dest="pkt_sizes",
                         help="comma-separated packet sizes")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_fig = sub.add_parser("figures", help="render the standard figure set")
    _add_experiment_flags(p_fig)
    p_fig.add_argument("--outdir", default="figures",
                       help="directory for CSV and PNG outputs")
    p_fig.add_argument("--quick", action="store_true",
                       help="smaller grids and probe sizes, for smoke tests")
    p_fig.set_defaults(func=_cmd_figures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LbSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
