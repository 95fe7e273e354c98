"""Scenario files.

A scenario is a YAML document::

    seed: 7                      # unsigned 64-bit
    until: 100000                # cycles to simulate
    topology:
      torus_dims: [2, 2, 2]
      wafers: 1
      fpgas_per_wafer: 48
      concentrators_per_wafer: 8
      fpgas_per_concentrator: 6
      hop_latency: 20
      link_bandwidth: 100.8e9    # bits/s per torus link
      nic_links: 7
      placement: [[0, 0, 0], ...]  # optional, one coordinate per concentrator
    buckets:
      count: 8
      capacity: 124
      drain_rate: 4              # events per cycle, or "instant"
      flush_lead: 0              # cycles of look-ahead on deadline checks
    ring:
      enabled: true
      size: 65536
      notification_latency: 100
      notify_batch: 1
    traffic:
      kind: poisson              # or "trace"
      rate: 0.5                  # events/cycle per FPGA
      deadline_slack: 1000
      destinations: uniform      # or {0x0001: 3, 0x0002: 1}
      sources: [0, 1]            # optional
      trace: path/to/trace.txt   # kind: trace only
    tables:                      # one table file per FPGA
      - {fpga: 0, path: tables/fpga0.txt}
    output:
      delivery_log: deliveries.txt   # optional

Relative paths are resolved against the scenario file's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from ..errors import ConfigError
from ..routing import DestRoutingTable, SourceRoutingTable, TableError, load_tables
from .kernel import SimConfig
from .topology import TopologySpec
from .traffic import TrafficSpec, parse_trace


class _LineDict(dict):
    lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    out.lines[None] = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass
class Scenario:
    topology: TopologySpec
    traffic: TrafficSpec
    config: SimConfig
    tables: dict[int, tuple[SourceRoutingTable, DestRoutingTable]] = field(default_factory=dict)
    seed: int = 0
    until: int = 10_000
    delivery_log: Optional[str] = None
    path: Optional[str] = None


class _Section:
    """Typed access to one mapping with file:line error messages."""

    def __init__(self, data, path: str, name: str):
        if data is None:
            data = _LineDict()
            data.lines = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: section {name!r} must be a mapping")
        self.data = data
        self.path = path
        self.name = name
        self.used = set()

    def where(self, key=None) -> str:
        lines = getattr(self.data, "lines", {})
        line = lines.get(key, lines.get(None))
        return f"{self.path}:{line}" if line else self.path

    def get(self, key, default, kind=None):
        self.used.add(key)
        if key not in self.data:
            return default
        value = self.data[key]
        if kind is None:
            return value
        try:
            if kind is int and isinstance(value, str):
                return int(value, 0)
            if kind is bool and not isinstance(value, bool):
                raise TypeError
            return kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{self.where(key)}: {self.name}.{key} must be {kind.__name__}, got {value!r}") from None

    def reject_unknown(self) -> None:
        for key in self.data:
            if key not in self.used:
                raise ConfigError(f"{self.where(key)}: unknown key {self.name}.{key}")


def _int_key(value, where: str) -> int:
    try:
        return int(value, 0) if isinstance(value, str) else int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: {value!r} is not an integer") from None


def _resolve(base: str, p: str) -> str:
    return p if os.path.isabs(p) else os.path.join(base, p)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{path}{line}: YAML error: {getattr(exc, 'problem', exc)}") from None
    return scenario_from_dict(doc, path)


def scenario_from_dict(doc: Any, path: str = "<scenario>") -> Scenario:
    base = os.path.dirname(os.path.abspath(path)) if path and not path.startswith("<") else os.getcwd()
    top = _Section(doc, path, "scenario")
    seed = top.get("seed", 0, int)
    until = top.get("until", 10_000, int)
    if until < 0:
        raise ConfigError(f"{top.where('until')}: until must be non-negative")

    t = _Section(top.get("topology", None), path, "topology")
    dims = t.get("torus_dims", [2, 2, 2])
    if not isinstance(dims, list) or len(dims) != 3:
        raise ConfigError(f"{t.where('torus_dims')}: torus_dims must be a list of three sizes")
    placement = t.get("placement", None)
    if placement is not None:
        if not isinstance(placement, list) or not all(isinstance(c, list) and len(c) == 3 for c in placement):
            raise ConfigError(f"{t.where('placement')}: placement must be a list of [x, y, z]")
        placement = [tuple(int(v) for v in c) for c in placement]
    topo = TopologySpec(
        torus_dims=tuple(_int_key(d, t.where("torus_dims")) for d in dims),
        wafers=t.get("wafers", 1, int),
        fpgas_per_wafer=t.get("fpgas_per_wafer", 48, int),
        concentrators_per_wafer=t.get("concentrators_per_wafer", 8, int),
        fpgas_per_concentrator=t.get("fpgas_per_concentrator", 6, int),
        hicanns_per_fpga=t.get("hicanns_per_fpga", 8, int),
        link_bandwidth=t.get("link_bandwidth", 12 * 8.4e9, float),
        hicann_link_bandwidth=t.get("hicann_link_bandwidth", 1e9, float),
        nic_links=t.get("nic_links", 7, int),
        clock_hz=t.get("clock_hz", 210e6, float),
        hop_latency=t.get("hop_latency", 20, int),
        fpga_words_per_cycle=t.get("fpga_words_per_cycle", 1.0, float),
        placement=placement,
    )
    t.reject_unknown()
    try:
        topo.validate()
    except ConfigError as exc:
        raise ConfigError(f"{t.where()}: {exc}") from None

    b = _Section(top.get("buckets", None), path, "buckets")
    drain = b.get("drain_rate", 4)
    if drain == "instant":
        drain = None
    elif not isinstance(drain, int) or drain < 1:
        raise ConfigError(f"{b.where('drain_rate')}: drain_rate must be a positive integer or 'instant'")
    r = _Section(top.get("ring", None), path, "ring")
    config = SimConfig(
        pool_size=b.get("count", 8, int),
        capacity=b.get("capacity", 124, int),
        drain_rate=drain,
        flush_lead=b.get("flush_lead", 0, int),
        ring_enabled=r.get("enabled", True, bool),
        ring_size=r.get("size", 1 << 16, int),
        notification_latency=r.get("notification_latency", 100, int),
        notify_batch=r.get("notify_batch", 1, int),
    )
    b.reject_unknown()
    r.reject_unknown()
    if config.pool_size < 1:
        raise ConfigError(f"{b.where('count')}: bucket count must be at least 1")
    if not 1 <= config.capacity <= 124:
        raise ConfigError(f"{b.where('capacity')}: bucket capacity must be in 1..124")
    if config.ring_size <= 0 or config.ring_size & (config.ring_size - 1):
        raise ConfigError(f"{r.where('size')}: ring size must be a power of two")
    if config.flush_lead < 0:
        raise ConfigError(f"{b.where('flush_lead')}: flush_lead must be non-negative")
    if config.notification_latency < 0 or config.notify_batch < 1:
        raise ConfigError(f"{r.where()}: need notification_latency >= 0 and notify_batch >= 1")

    tr = _Section(top.get("traffic", None), path, "traffic")
    dests = tr.get("destinations", "uniform")
    if isinstance(dests, dict):
        dests = {_int_key(k, tr.where("destinations")): float(v) for k, v in dests.items()}
    sources = tr.get("sources", None)
    traffic = TrafficSpec(
        kind=tr.get("kind", "poisson", str),
        rate=tr.get("rate", 0.0, float),
        destinations=dests,
        deadline_slack=tr.get("deadline_slack", 1000, int),
        seed=seed,
        sources=None if sources is None else [_int_key(s, tr.where("sources")) for s in sources],
    )
    trace_path = tr.get("trace", None)
    tr.reject_unknown()
    if traffic.kind == "trace":
        if trace_path is None:
            raise ConfigError(f"{tr.where('kind')}: trace traffic needs a 'trace' path")
        full = _resolve(base, str(trace_path))
        try:
            with open(full) as fh:
                traffic.trace = parse_trace(fh.read(), full)
        except OSError:
            raise ConfigError(f"{tr.where('trace')}: cannot read trace file {full}") from None
        traffic.trace_path = full
    try:
        traffic.validate()
    except ConfigError as exc:
        raise ConfigError(f"{tr.where()}: {exc}") from None

    tables = {}
    entries = top.get("tables", []) or []
    if not isinstance(entries, list):
        raise ConfigError(f"{top.where('tables')}: tables must be a list of {{fpga, path}}")
    for entry in entries:
        e = _Section(entry, path, "tables[]")
        fid = e.get("fpga", None, int)
        tpath = e.get("path", None, str)
        e.reject_unknown()
        if fid is None or tpath is None:
            raise ConfigError(f"{e.where()}: table entry needs fpga and path")
        if not 0 <= fid < topo.fpga_count:
            raise ConfigError(f"{e.where('fpga')}: no FPGA {fid} in this topology")
        if fid in tables:
            raise ConfigError(f"{e.where('fpga')}: tables for FPGA {fid} given twice")
        full = _resolve(base, tpath)
        try:
            with open(full) as fh:
                text = fh.read()
        except OSError:
            raise ConfigError(f"{e.where('path')}: cannot read table file {full}") from None
        try:
            tables[fid] = load_tables(text, full)
        except TableError as exc:
            raise ConfigError(str(exc)) from None

    out = _Section(top.get("output", None), path, "output")
    log_path = out.get("delivery_log", None)
    out.reject_unknown()
    top.reject_unknown()
    return Scenario(
        topology=topo,
        traffic=traffic,
        config=config,
        tables=tables,
        seed=seed,
        until=until,
        delivery_log=None if log_path is None else _resolve(base, str(log_path)),
        path=path,
    )
