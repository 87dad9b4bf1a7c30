"""Report figures: saturation and utilization studies rendered to disk.

Each figure is a pair of files with the same stem: a CSV carrying the
data points (with the effective configuration embedded as '#' comment
lines) and a PNG rendering of the same data.  All studies derive from
the same primitives: saturation searches per connection count and rate
sweeps below saturation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .harness import ExperimentConfig, ExperimentReport, find_max_lossless_rate, run_experiment

MODES = ("slb", "hnlb")

FULL_NB_GRID = (1, 100, 1000, 8000)
QUICK_NB_GRID = (1, 100)

FULL_SIZES = (64, 512, 1518)
QUICK_SIZES = (64, 1518)

RATE_FRACTIONS = tuple(f / 10 for f in range(1, 10))

_SEARCH_LO = 1_000_000
_SEARCH_HI = 20_000_000


@dataclass
class FigureParams:
    """Knobs for figure generation cost; quick() trades resolution for
    runtime and is meant for smoke tests."""

    nb_grid: tuple[int, ...] = FULL_NB_GRID
    sizes: tuple[int, ...] = FULL_SIZES
    util_nb_grid: tuple[int, ...] = (100, 1000)
    size_study_nb: int = 1000
    n_packets: int = 200_000
    tolerance: float = 5e-3

    @classmethod
    def quick(cls) -> FigureParams:
        return cls(nb_grid=QUICK_NB_GRID, sizes=QUICK_SIZES,
                   util_nb_grid=(100,), size_study_nb=100,
                   n_packets=20_000, tolerance=5e-2)


def _write_csv(path: Path, config: ExperimentConfig, columns: list[str],
               rows: list[list]) -> None:
    with open(path, "w") as fh:
        for key, value in config.as_items():
            fh.write(f"# {key} = {value}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _saturation_grid(base: ExperimentConfig, nb_grid: tuple[int, ...],
                     n_packets: int, tolerance: float):
    """Max lossless rate for every (mode, nb_conn) point of the grid."""
    results: dict[tuple[str, int], ExperimentReport] = {}
    rates: dict[tuple[str, int], int] = {}
    for mode in MODES:
        for nb in nb_grid:
            cfg = replace(base, mode=mode, nb_conn=nb, n_packets=n_packets)
            found = find_max_lossless_rate(cfg, _SEARCH_LO, _SEARCH_HI,
                                           tolerance=tolerance)
            rates[(mode, nb)] = found.rate_pps
            results[(mode, nb)] = found.report
    return rates, results


def render_figures(out_dir: str | Path, base: ExperimentConfig | None = None,
                   params: FigureParams | None = None) -> list[Path]:
    """Produce all four figure CSV+PNG pairs under out_dir; returns the
    paths written."""
    base = base if base is not None else ExperimentConfig()
    params = params if params is not None else FigureParams()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    rates, reports = _saturation_grid(base, params.nb_grid,
                                      params.n_packets, params.tolerance)

    written += _fig_best_case(out, base, params, rates, reports)
    written += _fig_throughput_vs_connections(out, base, params, rates)
    written += _fig_util_vs_rate_by_connections(out, base, params, rates)
    written += _fig_util_vs_rate_by_size(out, base, params, rates)
    return written


def _fig_best_case(out: Path, base: ExperimentConfig, params: FigureParams,
                   rates, reports) -> list[Path]:
    nb = params.nb_grid[0]
    columns = ["mode", "nb_conn", "pkt_size", "max_lossless_pps", "util", "util_plus"]
    rows = []
    for mode in MODES:
        report = reports[(mode, nb)]
        rows.append([mode, nb, base.pkt_size, rates[(mode, nb)],
                     report.util, report.util_plus])

    csv_path = out / "best_case_throughput.csv"
    _write_csv(csv_path, base, columns, rows)

    fig, ax = plt.subplots(figsize=(5, 4))
    labels = [mode.upper() for mode in MODES]
    values = [rates[(mode, nb)] / 1e6 for mode in MODES]
    bars = ax.bar(labels, values, color=["#4878b0", "#d1605e"], width=0.6)
    ax.bar_label(bars, fmt="%.2f")
    ax.set_ylabel("max lossless rate (Mpps)")
    ax.set_title(f"Best case, {nb} connection(s), {base.pkt_size} B")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    png_path = out / "best_case_throughput.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _fig_throughput_vs_connections(out: Path, base: ExperimentConfig,
                                   params: FigureParams, rates) -> list[Path]:
    columns = ["mode", "nb_conn", "pkt_size", "max_lossless_pps"]
    rows = [[mode, nb, base.pkt_size, rates[(mode, nb)]]
            for mode in MODES for nb in params.nb_grid]

    csv_path = out / "throughput_vs_connections.csv"
    _write_csv(csv_path, base, columns, rows)

    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, marker in zip(MODES, ("o", "s")):
        ys = [rates[(mode, nb)] / 1e6 for nb in params.nb_grid]
        ax.plot(params.nb_grid, ys, marker=marker, label=mode.upper())
    ax.set_xscale("log")
    ax.set_xlabel("concurrent connections")
    ax.set_ylabel("max lossless rate (Mpps)")
    ax.set_title(f"Saturation vs table size, {base.pkt_size} B")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    png_path = out / "throughput_vs_connections.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _rate_sweep_rows(base: ExperimentConfig, mode: str, nb: int, size: int,
                     saturation_pps: int, n_packets: int) -> list[list]:
    rows = []
    for fraction in RATE_FRACTIONS:
        rate = int(saturation_pps * fraction)
        report = run_experiment(replace(base, mode=mode, nb_conn=nb,
                                        pkt_size=size, rate=rate,
                                        n_packets=n_packets))
        rows.append([mode, nb, size, rate, fraction, report.util,
                     report.util_plus])
    return rows


def _fig_util_vs_rate_by_connections(out: Path, base: ExperimentConfig,
                                     params: FigureParams, rates) -> list[Path]:
    columns = ["mode", "nb_conn", "pkt_size", "offered_pps", "rate_fraction",
               "util", "util_plus"]
    rows = []
    for mode in MODES:
        for nb in params.util_nb_grid:
            saturation = rates.get((mode, nb))
            if saturation is None:
                continue
            rows += _rate_sweep_rows(base, mode, nb, base.pkt_size,
                                     saturation, params.n_packets)

    csv_path = out / "util_vs_rate_by_connections.csv"
    _write_csv(csv_path, base, columns, rows)

    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, marker in zip(MODES, ("o", "s")):
        for nb in params.util_nb_grid:
            pts = [(r[3] / 1e6, r[6]) for r in rows if r[0] == mode and r[1] == nb]
            if pts:
                ax.plot(*zip(*pts), marker=marker,
                        label=f"{mode.upper()}, {nb} conn")
    ax.set_xlabel("offered rate (Mpps)")
    ax.set_ylabel("util+")
    ax.set_title("Utilization vs offered rate")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    png_path = out / "util_vs_rate_by_connections.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _fig_util_vs_rate_by_size(out: Path, base: ExperimentConfig,
                              params: FigureParams, rates) -> list[Path]:
    columns = ["mode", "nb_conn", "pkt_size", "offered_pps", "rate_fraction",
               "util", "util_plus"]
    rows = []
    for mode in MODES:
        nb = params.size_study_nb
        saturation = rates.get((mode, nb))
        if saturation is None:
            # size study nb not in the searched grid; fall back to the
            # largest searched population
            nb = max(n for m, n in rates if m == mode)
            saturation = rates[(mode, nb)]
        for size in params.sizes:
            rows += _rate_sweep_rows(base, mode, nb, size, saturation,
                                     params.n_packets)

    csv_path = out / "util_vs_rate_by_size.csv"
    _write_csv(csv_path, base, columns, rows)

    fig, ax = plt.subplots(figsize=(6, 4))
    for mode, style in zip(MODES, ("-", "--")):
        for size in params.sizes:
            pts = [(r[3] / 1e6, r[6]) for r in rows
                   if r[0] == mode and r[2] == size]
            if pts:
                ax.plot(*zip(*pts), style, marker=".",
                        label=f"{mode.upper()}, {size} B")
    ax.set_xlabel("offered rate (Mpps)")
    ax.set_ylabel("util+")
    ax.set_title("Utilization vs offered rate by packet size")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    png_path = out / "util_vs_rate_by_size.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]
