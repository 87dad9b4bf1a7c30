"""Experiment harness: configured runs, saturation search, sweeps, CSV.

An experiment is one balancer instance fed one synthetic workload.  By
default a run starts with a warmup pass that establishes every
connection at a gentle rate and waits out rule activation, so the
measured window observes the steady state instead of the connection
setup transient.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .core import MAX_PACKET_SIZE, MIN_PACKET_SIZE, Dip, Vip, VipTable, ip_to_int
from .costs import DEFAULT_FREQUENCY_HZ, CostModel
from .errors import ConfigError, SearchRangeError
from .nic import MAX_MATCH_TABLE_CAPACITY, MIN_MATCH_TABLE_CAPACITY
from .pipeline import LoopState, PipelineConfig, RunStats, run_receiving_loop
from .traffic import SCHEDULERS, WorkloadSpec, generate

COST_PRESETS = ("calibrated", "raw")

_WARMUP_RATE_PPS = 500_000
# measured traffic starts this long after warmup so every rule installed
# during warmup (install latency <= 105 us) is active
_ACTIVATION_SLACK_NS = 110_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of one experiment; every field maps one-to-one
    to a config-file key and (where exposed) a CLI flag.

    rate is packets per second as an integer; 0 means an idle run that
    just busy-polls for idle_duration_s.  n_dips defaults to one backend
    per backend queue.
    """

    mode: str = "slb"
    nb_conn: int = 1
    rate: int = 1_000_000
    pkt_size: int = MIN_PACKET_SIZE
    n_packets: int = 100_000
    queues: int = 10
    n_dips: int | None = None
    fd_capacity: int = 8000
    seed: int = 0
    scheduler: str = "random"
    cost_preset: str = "calibrated"
    frequency_hz: int = DEFAULT_FREQUENCY_HZ
    warmup: bool = True
    idle_duration_s: float = 0.01
    vip: str = "42.3.4.5:443"
    dip_base_ip: str = "10.0.0.1"
    dip_port: int = 335

    def __post_init__(self):
        if self.mode not in ("slb", "hnlb"):
            raise ConfigError(f"mode must be slb or hnlb, got {self.mode!r}")
        if self.nb_conn < 1:
            raise ConfigError(f"nb_conn {self.nb_conn} < 1")
        if not isinstance(self.rate, int) or self.rate < 0:
            raise ConfigError(f"rate must be a non-negative integer of "
                              f"packets per second, got {self.rate!r}")
        if not MIN_PACKET_SIZE <= self.pkt_size <= MAX_PACKET_SIZE:
            raise ConfigError(f"pkt_size {self.pkt_size} outside "
                              f"[{MIN_PACKET_SIZE}, {MAX_PACKET_SIZE}]")
        if self.n_packets < 0:
            raise ConfigError(f"n_packets {self.n_packets} < 0")
        if self.queues < 1:
            raise ConfigError(f"queues {self.queues} < 1")
        if self.n_dips is not None and not 1 <= self.n_dips <= self.queues:
            raise ConfigError(f"n_dips {self.n_dips} outside [1, {self.queues}]")
        if not MIN_MATCH_TABLE_CAPACITY <= self.fd_capacity <= MAX_MATCH_TABLE_CAPACITY:
            raise ConfigError(f"fd_capacity {self.fd_capacity} outside "
                              f"[{MIN_MATCH_TABLE_CAPACITY}, {MAX_MATCH_TABLE_CAPACITY}]")
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"scheduler {self.scheduler!r} not in {SCHEDULERS}")
        if self.cost_preset not in COST_PRESETS:
            raise ConfigError(f"cost_preset {self.cost_preset!r} not in {COST_PRESETS}")
        if self.frequency_hz < 1:
            raise ConfigError(f"frequency_hz {self.frequency_hz} < 1")
        if self.idle_duration_s <= 0:
            raise ConfigError(f"idle_duration_s {self.idle_duration_s} <= 0")

    @property
    def effective_dips(self) -> int:
        return self.queues if self.n_dips is None else self.n_dips

    def cost_model(self) -> CostModel:
        return CostModel.calibrated() if self.cost_preset == "calibrated" else CostModel()

    def vip_address(self) -> Vip:
        return Vip.parse(self.vip)

    def make_vip_table(self) -> VipTable:
        base = ip_to_int(self.dip_base_ip)
        table = VipTable()
        table.add_vip(self.vip_address(),
                      [Dip(base + k, self.dip_port) for k in range(self.effective_dips)])
        return table

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            mode=self.mode,
            vip_table=self.make_vip_table(),
            n_queues=self.queues,
            fd_capacity=self.fd_capacity,
            cost_model=self.cost_model(),
            frequency_hz=self.frequency_hz,
        )

    def workload(self) -> WorkloadSpec:
        return WorkloadSpec(
            nb_connections=self.nb_conn,
            rate_pps=self.rate,
            n_packets=self.n_packets,
            pkt_size=self.pkt_size,
            seed=self.seed,
            vip=self.vip_address(),
            scheduler=self.scheduler,
        )

    def as_items(self) -> list[tuple[str, str]]:
        """Flat key/value view of the full effective configuration,
        cost constants included, for embedding in report files."""
        items = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                value = ""
            elif isinstance(value, bool):
                value = "true" if value else "false"
            items.append((f.name, str(value)))
        for f in fields(CostModel):
            items.append((f.name, str(getattr(self.cost_model(), f.name))))
        items.append(("effective_dips", str(self.effective_dips)))
        return items

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> ExperimentConfig:
        """Build a config from string key/value pairs (config file or CLI
        overrides), coercing each value to the field's type."""
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            f = known.get(key)
            if f is None:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(f, raw)
        return cls(**kwargs)


def _coerce(f: dataclasses.Field, raw: str):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if f.name == "n_dips":
        return None if text.lower() in ("", "none") else int(text)
    if f.type in ("int", int):
        return int(text)
    if f.type in ("float", float):
        return float(text)
    if f.type in ("bool", bool):
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{f.name}: cannot parse boolean from {text!r}")
    return text


def load_config_file(path: str | Path) -> dict[str, str]:
    """Parse a flat key/value config file: one `key = value` per line,
    '#' starts a comment, blank lines are skipped."""
    mapping: dict[str, str] = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {line_no}: expected key = value, "
                                  f"got {raw.strip()!r}")
            key, _, value = line.partition("=")
            mapping[key.strip()] = value.strip()
    return mapping


@dataclass
class ExperimentReport:
    """Results of one experiment, with the phase split made explicit:
    warmup counters cover connection setup, everything else covers the
    measured window only."""

    config: ExperimentConfig
    offered_pps: int
    generated: int
    forwarded: int
    dropped: int
    loss_fraction: float
    duration_s: float
    achieved_pps: float
    util: float
    util_plus: float
    ref_cycles: int
    ops_cycles: int
    polled_packets: int
    polled_bursts: int
    new_connections: int
    hw_rules: int
    hw_rejected: int
    warmup_generated: int = 0
    warmup_dropped: int = 0

    ROW_FIELDS = ("mode", "nb_conn", "pkt_size", "offered_pps", "generated",
                  "forwarded", "dropped", "loss_fraction", "duration_s",
                  "achieved_pps", "util", "util_plus", "ref_cycles",
                  "ops_cycles", "polled_packets", "polled_bursts",
                  "new_connections", "hw_rules", "hw_rejected",
                  "warmup_generated", "warmup_dropped")

    def row(self) -> list[str]:
        values = {
            "mode": self.config.mode,
            "nb_conn": self.config.nb_conn,
            "pkt_size": self.config.pkt_size,
        }
        for name in self.ROW_FIELDS:
            if name not in values:
                values[name] = getattr(self, name)
        return [_format_value(values[name]) for name in self.ROW_FIELDS]


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _report_from_stats(config: ExperimentConfig, stats: RunStats,
                       warmup_generated: int = 0,
                       warmup_dropped: int = 0) -> ExperimentReport:
    return ExperimentReport(
        config=config,
        offered_pps=config.rate,
        generated=stats.generated,
        forwarded=stats.forwarded,
        dropped=stats.dropped,
        loss_fraction=stats.loss_fraction,
        duration_s=stats.duration_s,
        achieved_pps=stats.achieved_pps,
        util=stats.util,
        util_plus=stats.util_plus,
        ref_cycles=stats.counters.ref_cycles,
        ops_cycles=stats.counters.ops_cycles,
        polled_packets=stats.counters.n_packets,
        polled_bursts=stats.counters.n_bursts,
        new_connections=stats.new_connections,
        hw_rules=stats.hw_rules,
        hw_rejected=stats.hw_rejected,
        warmup_generated=warmup_generated,
        warmup_dropped=warmup_dropped,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run one experiment and report the measured window.

    rate 0 runs the loop idle for idle_duration_s: reference cycles
    accumulate, no packet work happens.  With warmup enabled, every
    connection sends one packet at a gentle rate first and the measured
    stream starts only after all NIC rules installed during warmup are
    active.
    """
    pc = config.pipeline_config()
    state = LoopState(pc)

    if config.rate == 0:
        idle_cycles = max(1, round(config.idle_duration_s * config.frequency_hz))
        stats = run_receiving_loop(
            pc, (), state, run_until_cycles=state.clock.cycles + idle_cycles)
        return _report_from_stats(config, stats)

    warmup_generated = warmup_dropped = 0
    start_ns = 0
    if config.warmup and config.n_packets > 0:
        warm_spec = WorkloadSpec(
            nb_connections=config.nb_conn,
            rate_pps=_WARMUP_RATE_PPS,
            n_packets=config.nb_conn,
            pkt_size=config.pkt_size,
            seed=config.seed,
            vip=config.vip_address(),
            scheduler="round_robin",
        )
        warm_stats = run_receiving_loop(pc, generate(warm_spec), state)
        warmup_generated = warm_stats.generated
        warmup_dropped = warm_stats.dropped
        start_ns = state.clock.cycles_to_ns(state.clock.cycles) + _ACTIVATION_SLACK_NS

    stats = run_receiving_loop(pc, generate(config.workload(), start_ns), state)
    return _report_from_stats(config, stats, warmup_generated, warmup_dropped)


@dataclass
class MaxRateResult:
    """Outcome of a saturation search: the highest probed rate with zero
    measured loss, its full report, and the probe history."""

    rate_pps: int
    report: ExperimentReport
    probes: list[tuple[int, float]] = field(default_factory=list)


def find_max_lossless_rate(config: ExperimentConfig, lo_pps: int, hi_pps: int,
                           tolerance: float = 0.01) -> MaxRateResult:
    """Binary-search the highest lossless rate in [lo_pps, hi_pps].

    Rates are integer packets per second.  The lower bound must be
    lossless; if the upper bound is lossless too it is returned as-is.
    The search stops when the bracket is within tolerance (relative to
    the lossless bound) and returns that bound.
    """
    if not 0 < lo_pps <= hi_pps:
        raise SearchRangeError(f"need 0 < lo <= hi, got [{lo_pps}, {hi_pps}]")
    if tolerance <= 0:
        raise SearchRangeError(f"tolerance {tolerance} <= 0")

    probes: list[tuple[int, float]] = []

    def probe(rate: int) -> ExperimentReport:
        report = run_experiment(replace(config, rate=rate))
        probes.append((rate, report.loss_fraction))
        return report

    lo_report = probe(lo_pps)
    if lo_report.dropped:
        raise SearchRangeError(
            f"lower bound {lo_pps} pps already drops "
            f"{lo_report.dropped}/{lo_report.generated} packets")
    if lo_pps == hi_pps:
        return MaxRateResult(lo_pps, lo_report, probes)

    hi_report = probe(hi_pps)
    if not hi_report.dropped:
        return MaxRateResult(hi_pps, hi_report, probes)

    lo, hi = lo_pps, hi_pps
    best = lo_report
    while hi - lo > max(1, int(tolerance * lo)):
        mid = (lo + hi) // 2
        report = probe(mid)
        if report.dropped:
            hi = mid
        else:
            lo = mid
            best = report
    return MaxRateResult(lo, best, probes)


def sweep(config: ExperimentConfig, rates: list[int],
          nb_connections: list[int] | None = None,
          pkt_sizes: list[int] | None = None) -> list[ExperimentReport]:
    """Run the cartesian product of the given axes over a base config,
    in deterministic order (connections, then sizes, then rates)."""
    if not rates:
        raise ConfigError("sweep needs at least one rate")
    nbs = nb_connections if nb_connections else [config.nb_conn]
    sizes = pkt_sizes if pkt_sizes else [config.pkt_size]
    reports = []
    for nb in nbs:
        for size in sizes:
            for rate in rates:
                reports.append(run_experiment(
                    replace(config, nb_conn=nb, pkt_size=size, rate=rate)))
    return reports


def write_reports_csv(path: str | Path, reports: list[ExperimentReport],
                      base_config: ExperimentConfig | None = None) -> None:
    """Write reports as CSV with the effective configuration embedded as
    '#'-prefixed header lines, so a result file is self-describing."""
    if base_config is None and reports:
        base_config = reports[0].config
    with open(path, "w") as fh:
        if base_config is not None:
            for key, value in base_config.as_items():
                fh.write(f"# {key} = {value}\n")
        fh.write(",".join(ExperimentReport.ROW_FIELDS) + "\n")
        for report in reports:
            fh.write(",".join(report.row()) + "\n")
