"""Traffic sources and the trace / delivery-log line format.

Trace and delivery logs share one line format::

    <cycle> <fpga_id> <hicann_link> <pulse_address> <timestamp>

Integers accept any Python literal prefix (``0x``); the writer emits the
pulse address in hex and the rest in decimal. ``#`` starts a comment.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Union

from ..errors import ConfigError
from ..event_model import HICANN_LINKS, TIMESTAMP_MODULUS, HALF_WINDOW, timestamp_of_clock
from ..routing import DestRoutingTable, SourceKey, SourceRoutingTable


class TraceEvent(NamedTuple):
    cycle: int
    fpga_id: int
    hicann_link: int
    pulse_address: int
    timestamp: int


def format_trace_line(ev: TraceEvent) -> str:
    return f"{ev.cycle} {ev.fpga_id} {ev.hicann_link} {ev.pulse_address:#05x} {ev.timestamp}"


def parse_trace(text: str, source: str = "<trace>") -> list[TraceEvent]:
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ConfigError(f"{source}:{lineno}: expected 5 fields, got {len(parts)}")
        try:
            ev = TraceEvent(*(int(p, 0) for p in parts))
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: non-integer field in {line!r}") from None
        if ev.cycle < 0 or ev.fpga_id < 0:
            raise ConfigError(f"{source}:{lineno}: negative cycle or fpga id")
        if not 0 <= ev.hicann_link < HICANN_LINKS or not 0 <= ev.pulse_address < 4096:
            raise ConfigError(f"{source}:{lineno}: hicann link or pulse address out of range")
        if not 0 <= ev.timestamp < TIMESTAMP_MODULUS:
            raise ConfigError(f"{source}:{lineno}: timestamp exceeds 15 bits")
        events.append(ev)
    events.sort(key=lambda e: e.cycle)
    return events


@dataclass
class TrafficSpec:
    """Poisson (Bernoulli per cycle) injection or replay of a trace.

    ``destinations`` is ``"uniform"`` over the source-table keys of each
    FPGA, or a mapping ``dest -> weight``. ``sources`` restricts which FPGAs
    inject; ``None`` means all.
    """

    kind: str = "poisson"
    rate: float = 0.0
    destinations: Union[str, Mapping[int, float]] = "uniform"
    deadline_slack: int = 1000
    seed: int = 0
    sources: Optional[list[int]] = None
    trace: list[TraceEvent] = field(default_factory=list)
    trace_path: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in ("poisson", "trace"):
            raise ConfigError(f"unknown traffic kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"rate {self.rate} must be within [0, 1] events/cycle")
        if not 0 <= self.deadline_slack < HALF_WINDOW:
            raise ConfigError(f"deadline slack {self.deadline_slack} must be in [0, {HALF_WINDOW})")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be an unsigned 64-bit value")
        if isinstance(self.destinations, str) and self.destinations != "uniform":
            raise ConfigError(f"unknown destination distribution {self.destinations!r}")


class PoissonSource:
    """At most one event per cycle with probability ``rate``."""

    def __init__(self, fpga_id: int, table: SourceRoutingTable, spec: TrafficSpec):
        self.fpga_id = fpga_id
        self.rate = spec.rate
        self.slack = spec.deadline_slack
        self.rng = random.Random((spec.seed << 20) ^ fpga_id)
        keys = sorted(table.entries)
        if isinstance(spec.destinations, str):
            self.groups = [keys]
            self.weights = [1.0]
        else:
            by_dest = defaultdict(list)
            for key in keys:
                by_dest[table.entries[key][0]].append(key)
            chosen = sorted(d for d, w in spec.destinations.items() if w > 0 and d in by_dest)
            self.groups = [by_dest[d] for d in chosen]
            self.weights = [spec.destinations[d] for d in chosen]

    def events_at(self, now: int) -> list[tuple[SourceKey, int]]:
        if self.rate <= 0.0 or self.rng.random() >= self.rate:
            return []
        timestamp = timestamp_of_clock(now + self.slack)
        if not self.groups or not self.groups[0]:
            # nothing configured: the event is drawn from the whole key space and will miss
            key = SourceKey(self.rng.randrange(HICANN_LINKS), self.rng.randrange(4096))
            return [(key, timestamp)]
        group = self.groups[0] if len(self.groups) == 1 else self.rng.choices(self.groups, self.weights)[0]
        return [(group[self.rng.randrange(len(group))], timestamp)]


class TraceSource:
    def __init__(self, fpga_id: int, events: Iterable[TraceEvent]):
        self.fpga_id = fpga_id
        self.by_cycle = defaultdict(list)
        for ev in events:
            if ev.fpga_id == fpga_id:
                self.by_cycle[ev.cycle].append((SourceKey(ev.hicann_link, ev.pulse_address), ev.timestamp))

    def events_at(self, now: int) -> list[tuple[SourceKey, int]]:
        return self.by_cycle.pop(now, [])


def random_tables(
    addresses: list[int],
    entries_per_fpga: int,
    seed: int = 0,
    max_fanout: int = 8,
    dests: Optional[list[int]] = None,
) -> dict[int, tuple[SourceRoutingTable, DestRoutingTable]]:
    """Consistent random tables for FPGAs at ``addresses`` (indexed by position).

    Every source entry gets a fresh GUID that is registered at its
    destination with a random nonzero mask, so the result has no dangling
    entries by construction.
    """
    rng = random.Random(seed)
    targets = dests if dests is not None else addresses
    src = {i: {} for i in range(len(addresses))}
    dst = {a: {} for a in addresses}
    guid = 0
    for i in range(len(addresses)):
        keys = rng.sample(range(HICANN_LINKS * 4096), entries_per_fpga)
        for k in keys:
            dest = rng.choice(targets)
            guid += 1
            mask = 0
            while mask == 0:
                mask = sum(1 << b for b in rng.sample(range(HICANN_LINKS), rng.randint(1, max_fanout)))
            src[i][SourceKey(k >> 12, k & 0xFFF)] = (dest, guid)
            dst.setdefault(dest, {})[guid] = mask
    return {
        i: (SourceRoutingTable(src[i]), DestRoutingTable(dst[addresses[i]])) for i in range(len(addresses))
    }
