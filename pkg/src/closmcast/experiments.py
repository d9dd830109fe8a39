"""Experiment sweeps that write the CSV outputs.

Every output starts with one ``#`` comment line naming the package version,
topology parameters, experiment and seed. Rows are emitted in a fixed
order, so rerunning a config with the same seed reproduces the files byte
for byte.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .analytics import (
    DOWNSTREAM_FABRIC,
    UPSTREAM_FABRIC,
    et_report,
    group_seed,
    link_loads,
    path_mean,
)
from .clustering import kmeans_hamming
from .encoder import downstream_bits, encode_bert, encode_elmo, header_bits
from .forwarding import simulate_delivery
from .groups import (
    MulticastGroup,
    destination_pods,
    generate_group,
    load_groups,
    occupancy,
)
from .topology import PRESETS, Topology, TopologyParams, build_topology

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig3", "fig4", "fig5", "fig67", "custom")

DEFAULTS = {
    "fig3": {"d": [100, 200, 300, 400, 500], "k": [2, 4, 6, 8, 10, 12]},
    "fig4": {"d": [100, 200, 300, 400, 500], "k": [5]},
    "fig5": {"d": [2000], "k": list(range(1, 13))},
    "fig67": {"d": [2000], "k": list(range(1, 13))},
    "custom": {"d": [], "k": []},
}

ET_COLUMNS = ["seed", "group_id", "d", "k", "et_elmo", "et_bert", "savings"]
HEADER_COLUMNS = [
    "seed", "group_id", "d", "k", "elmo_bits", "bert_mean_bits", "bert_total_bits", "reduction",
]
LINKLOAD_COLUMNS = ["seed", "group_id", "d", "k", "scheme", "layer", "direction", "mean", "std", "max"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: TopologyParams
    experiment: str = "custom"
    d: tuple[int, ...] = ()
    k: tuple[int, ...] = ()
    n_groups: int = 100
    flow_pkts: int = 1000
    seed: int = 0
    out: Path = Path("out")
    preset: str | None = None
    restarts: int = 10
    verbose: bool = False
    groups_file: Path | None = None

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.k:
            raise ConfigError("k list is empty")
        if not self.d and self.groups_file is None:
            raise ConfigError("d list is empty")
        if any(k < 1 for k in self.k):
            raise ConfigError("every k must be >= 1")
        if self.n_groups < 1:
            raise ConfigError("n_groups must be >= 1")
        if self.flow_pkts < 1:
            raise ConfigError("flow_pkts must be >= 1")

    def banner(self) -> str:
        return (
            f"# closmcast v{__version__} {self.params.describe()} "
            f"experiment={self.experiment} seed={self.seed} groups={self.n_groups}"
        )


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        try:
            return tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"not an integer list: {value!r}") from exc
    return tuple(int(v) for v in value)


def read_config_file(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines (``#`` comments allowed, no sections)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[config]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return {k.replace("-", "_"): v for k, v in parser["config"].items()}


def make_config(experiment: str, settings: dict) -> ExperimentConfig:
    """Build a config from merged settings (file values overridden by flags)."""
    known = {
        "n", "m", "l", "s", "u", "preset", "d", "k", "groups", "n_groups", "flow_pkts",
        "seed", "out", "restarts", "verbose", "groups_file",
    }
    unknown = set(settings) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    preset = settings.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    base = PRESETS[preset or "paper"]().as_dict()
    for key in ("n", "m", "l", "s", "u"):
        if settings.get(key) is not None:
            base[key] = int(settings[key])
    params = TopologyParams(**base)

    defaults = DEFAULTS[experiment]
    d = _int_list(settings["d"]) if settings.get("d") is not None else tuple(defaults["d"])
    k = _int_list(settings["k"]) if settings.get("k") is not None else tuple(defaults["k"])
    if experiment == "fig4" and k != (5,):
        log.info("fig4 fixes k=5; ignoring k=%s", k)
        k = (5,)
    n_groups = settings.get("n_groups", settings.get("groups"))
    verbose = settings.get("verbose", False)
    if isinstance(verbose, str):
        verbose = verbose.strip().lower() in ("1", "true", "yes", "on")
    groups_file = settings.get("groups_file")
    return ExperimentConfig(
        params=params,
        experiment=experiment,
        d=d,
        k=k,
        n_groups=int(n_groups) if n_groups is not None else 100,
        flow_pkts=int(settings.get("flow_pkts") or 1000),
        seed=int(settings.get("seed") or 0),
        out=Path(settings.get("out") or "out"),
        preset=preset,
        restarts=int(settings.get("restarts") or 10),
        verbose=bool(verbose),
        groups_file=Path(groups_file) if groups_file else None,
    )


# -- shared helpers --------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        if np.isnan(value):
            return ""
        return f"{float(value):.6f}"
    return str(value)


class _Table:
    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        self.rows: list[list[str]] = []

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append([_fmt(v) for v in values])

    def render(self, banner: str) -> str:
        buf = io.StringIO()
        buf.write(banner + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()


def _write(cfg: ExperimentConfig, name: str, table: _Table) -> Path:
    path = cfg.out / name
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        path.write_text(table.render(cfg.banner()))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _groups(cfg: ExperimentConfig, topo: Topology, d: int) -> list[MulticastGroup]:
    return [
        generate_group(topo, d, group_seed(cfg.seed, d, g), g) for g in range(cfg.n_groups)
    ]


def _group_sets(cfg: ExperimentConfig, topo: Topology) -> list[tuple[int, list[MulticastGroup]]]:
    if cfg.groups_file is not None:
        try:
            pinned = load_groups(cfg.groups_file.read_text())
        except OSError as exc:
            raise OSError(f"cannot read {cfg.groups_file}: {exc.strerror}") from exc
        for grp in pinned:
            grp.check(topo)
        by_d: dict[int, list[MulticastGroup]] = {}
        for grp in pinned:
            by_d.setdefault(grp.d, []).append(grp)
        return sorted(by_d.items())
    return [(d, _groups(cfg, topo, d)) for d in cfg.d]


def _assignment_column(asg) -> str:
    if asg is None:
        return ""
    return ";".join(f"{p}:{c}" for p, c in sorted(asg.assignment.items()))


def _cluster(cfg: ExperimentConfig, topo: Topology, grp: MulticastGroup, d: int, k: int):
    occ = occupancy(topo, grp)
    dest = destination_pods(topo, grp)
    vectors = {p: occ[p].reshape(-1) for p in dest}
    if not vectors:
        return None
    asg = kmeans_hamming(vectors, k, group_seed(cfg.seed, d, grp.group_id, k), restarts=cfg.restarts)
    if asg.k_effective < k:
        log.info("group %d: k=%d clamped to %d destination pods", grp.group_id, k, asg.k_effective)
    return asg


# -- experiments -----------------------------------------------------------


@dataclass
class EtResult:
    per_group: _Table
    summary: _Table
    means: dict[tuple[int, int], float]  # (d, k) -> mean savings


def sweep_et(cfg: ExperimentConfig) -> EtResult:
    topo = build_topology(cfg.params)
    columns = ET_COLUMNS + (["clusters"] if cfg.verbose else [])
    per_group = _Table(columns)
    summary = _Table(["d", "k", "scheme", "mean_et", "mean_savings", "groups"])
    means: dict[tuple[int, int], float] = {}
    for d, groups in _group_sets(cfg, topo):
        elmo_ets: list[int] = []
        bert_rows = []
        for k in cfg.k:
            ets, savings = [], []
            for grp in groups:
                rep, asg = et_report(
                    topo, grp, k, group_seed(cfg.seed, d, grp.group_id, k), cfg.restarts
                )
                row = [cfg.seed, grp.group_id, d, k, rep.et_elmo, rep.et_bert, rep.savings]
                if cfg.verbose:
                    row.append(_assignment_column(asg))
                per_group.add(*row)
                ets.append(rep.et_bert)
                if rep.savings is None:
                    log.info("group %d (d=%d): Elmo has no extra transmissions", grp.group_id, d)
                else:
                    savings.append(rep.savings)
                if k == cfg.k[0]:
                    elmo_ets.append(rep.et_elmo)
            mean_sav = float(np.mean(savings)) if savings else float("nan")
            means[(d, k)] = mean_sav
            bert_rows.append((d, k, "bert", float(np.mean(ets)), mean_sav, len(groups)))
        summary.add(d, None, "elmo", float(np.mean(elmo_ets)), None, len(groups))
        for row in bert_rows:
            summary.add(*row)
    return EtResult(per_group, summary, means)


def run_fig3(cfg: ExperimentConfig) -> list[Path]:
    res = sweep_et(cfg)
    return [_write(cfg, "et.csv", res.per_group), _write(cfg, "et_summary.csv", res.summary)]


def run_fig4(cfg: ExperimentConfig) -> list[Path]:
    return run_fig3(replace(cfg, k=(5,)))


@dataclass
class HeaderResult:
    per_group: _Table
    summary: _Table
    ratios: dict[tuple[int, int], float]  # (d, k) -> mean Bert/Elmo per-packet bits


def sweep_headers(cfg: ExperimentConfig) -> HeaderResult:
    """Downstream (core, spine and leaf) header bits, Elmo vs Bert."""
    topo = build_topology(cfg.params)
    per_group = _Table(HEADER_COLUMNS)
    summary = _Table(["d", "k", "elmo_bits", "bert_mean_bits", "bert_total_bits", "ratio"])
    ratios: dict[tuple[int, int], float] = {}
    for d, groups in _group_sets(cfg, topo):
        elmo_bits = [downstream_bits(encode_elmo(topo, grp), topo) for grp in groups]
        for k in cfg.k:
            means, totals = [], []
            for grp, elmo in zip(groups, elmo_bits):
                asg = _cluster(cfg, topo, grp, d, k)
                headers = [encode_elmo(topo, grp)] if asg is None else encode_bert(topo, grp, asg)
                per_copy = [downstream_bits(h, topo) for h in headers]
                mean = sum(per_copy) / len(per_copy)
                reduction = 1.0 - mean / elmo if elmo else None
                per_group.add(cfg.seed, grp.group_id, d, k, elmo, mean, sum(per_copy), reduction)
                means.append(mean)
                totals.append(sum(per_copy))
            elmo_mean = float(np.mean(elmo_bits))
            ratio = float(np.mean(means)) / elmo_mean if elmo_mean else float("nan")
            ratios[(d, k)] = ratio
            summary.add(d, k, elmo_mean, float(np.mean(means)), float(np.mean(totals)), ratio)
    return HeaderResult(per_group, summary, ratios)


def run_fig5(cfg: ExperimentConfig) -> list[Path]:
    res = sweep_headers(cfg)
    return [_write(cfg, "header.csv", res.per_group), _write(cfg, "header_summary.csv", res.summary)]


@dataclass
class LoadResult:
    per_group: _Table
    summary: _Table
    trace: _Table | None
    # (d, k) -> (upstream, downstream) mean link load; k=0 is Elmo
    means: dict[tuple[int, int], tuple[float, float]]


def _load_rows(table, cfg, grp, d, k, scheme, loads) -> None:
    for (layer, direction), stat in loads.items():
        table.add(cfg.seed, grp.group_id, d, k, scheme, layer.value, direction.value,
                  stat.mean, stat.std, stat.max)


def _trace_rows(table, grp, k, scheme, report) -> None:
    for (layer, direction), pkts in report.link_packets.items():
        for idx in np.flatnonzero(pkts):
            table.add(grp.group_id, k, scheme, f"{layer.value}/{direction.value}/{idx}",
                      layer.value, direction.value, int(pkts[idx]))


def sweep_loads(cfg: ExperimentConfig) -> LoadResult:
    """Unit-traffic link loads for Elmo and Bert at each k."""
    topo = build_topology(cfg.params)
    per_group = _Table(LINKLOAD_COLUMNS)
    summary = _Table(["d", "k", "scheme", "upstream_mean", "downstream_mean", "groups"])
    trace = (
        _Table(["group_id", "k", "scheme", "link_id", "layer", "direction", "packets"])
        if cfg.verbose else None
    )
    means: dict[tuple[int, int], tuple[float, float]] = {}
    for d, groups in _group_sets(cfg, topo):
        acc: dict[int, list[tuple[float, float]]] = {}
        for grp in groups:
            elmo = encode_elmo(topo, grp)
            base = header_bits(elmo, topo)
            report = simulate_delivery(topo, [elmo], grp.source, cfg.seed)
            loads = link_loads(report, topo, cfg.flow_pkts, [elmo], base)
            _load_rows(per_group, cfg, grp, d, None, "elmo", loads)
            if trace is not None:
                _trace_rows(trace, grp, None, "elmo", report)
            acc.setdefault(0, []).append(
                (path_mean(loads, UPSTREAM_FABRIC), path_mean(loads, DOWNSTREAM_FABRIC))
            )
            for k in cfg.k:
                asg = _cluster(cfg, topo, grp, d, k)
                headers = [elmo] if asg is None else encode_bert(topo, grp, asg)
                report = simulate_delivery(topo, headers, grp.source, cfg.seed)
                loads = link_loads(report, topo, cfg.flow_pkts, headers, base)
                _load_rows(per_group, cfg, grp, d, k, "bert", loads)
                if trace is not None:
                    _trace_rows(trace, grp, k, "bert", report)
                acc.setdefault(k, []).append(
                    (path_mean(loads, UPSTREAM_FABRIC), path_mean(loads, DOWNSTREAM_FABRIC))
                )
        for k in [0, *cfg.k]:
            up, down = np.mean(acc[k], axis=0)
            means[(d, k)] = (float(up), float(down))
            summary.add(d, k or None, "elmo" if k == 0 else "bert", up, down, len(groups))
    return LoadResult(per_group, summary, trace, means)


def run_fig67(cfg: ExperimentConfig) -> list[Path]:
    res = sweep_loads(cfg)
    paths = [
        _write(cfg, "linkload.csv", res.per_group),
        _write(cfg, "linkload_summary.csv", res.summary),
    ]
    if res.trace is not None:
        paths.append(_write(cfg, "trace.csv", res.trace))
    return paths


def run_custom(cfg: ExperimentConfig) -> list[Path]:
    return run_fig3(cfg) + run_fig5(cfg) + run_fig67(cfg)


RUNNERS = {
    "fig3": run_fig3,
    "fig4": run_fig4,
    "fig5": run_fig5,
    "fig67": run_fig67,
    "custom": run_custom,
}


def run(cfg: ExperimentConfig) -> list[Path]:
    return RUNNERS[cfg.experiment](cfg)


def summarize(paths: Iterable[Path]) -> str:
    return "\n".join(f"wrote {p}" for p in paths)


# -- worked example ---------------------------------------------------------

FIG1_SOURCE = 1  # 1-based host labels as printed in the figure
FIG1_MEMBERS = (4, 14, 15, 19, 25, 26, 29)
FIG1_STATED_RULE = "1111"


def fig1_group() -> MulticastGroup:
    return MulticastGroup(1, FIG1_SOURCE - 1, tuple(h - 1 for h in FIG1_MEMBERS))


def replay_fig1(seed: int = 0) -> dict[str, object]:
    """Replay the four-pod example with two clusters.

    Returns the extra-transmission counts (closed form and simulated), the
    per-layer upstream packet counts and the header sizes of both schemes.
    """
    from .analytics import et_bert, et_elmo
    from .groups import from_str
    from .topology import Direction, Layer, fig1_preset

    topo = build_topology(fig1_preset())
    grp = fig1_group()
    occ = occupancy(topo, grp)
    dest = destination_pods(topo, grp)
    asg = kmeans_hamming({p: occ[p].reshape(-1) for p in dest}, 2, seed)
    stated = from_str(FIG1_STATED_RULE)

    elmo = encode_elmo(topo, grp)
    elmo_stated = encode_elmo(topo, grp, compact_bitmap=stated)
    bert = encode_bert(topo, grp, asg)
    rep_elmo = simulate_delivery(topo, [elmo_stated], grp.source, seed)
    rep_bert = simulate_delivery(topo, bert, grp.source, seed)

    upstream = [
        (Layer.HOST_LEAF, Direction.UP),
        (Layer.LEAF_SPINE, Direction.UP),
        (Layer.SPINE_CORE, Direction.UP),
    ]
    et_totals_elmo, et_totals_bert = rep_elmo.layer_totals(), rep_bert.layer_totals()
    return {
        "clusters": [[p + 1 for p in c] for c in asg.clusters()],
        "et_elmo_or": et_elmo(grp, topo),
        "et_elmo_stated": et_elmo(grp, topo, rule=stated),
        "et_bert": et_bert(grp, topo, asg),
        "sim_elmo_stated": rep_elmo.non_member_deliveries(grp),
        "sim_bert": rep_bert.non_member_deliveries(grp),
        "upstream_extra": [et_totals_bert[key] - et_totals_elmo[key] for key in upstream],
        "elmo_bits": header_bits(elmo, topo),
        "bert_bits": [header_bits(h, topo) for h in bert],
        "elmo_rules": [str(r) for r in elmo.rules],
        "bert_rules": [[str(r) for r in h.rules] for h in bert],
    }
