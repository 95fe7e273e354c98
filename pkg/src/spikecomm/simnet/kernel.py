"""Cycle-based simulation kernel.

One loop iteration is one FPGA clock cycle. Within a cycle the order is
fixed: packet arrivals, host ring polling, FPGA injection and bucket
ticks, then link arbitration. Links are store-and-forward at packet
granularity: a packet of ``w`` words holds a link for ``ceil(w / rate)``
cycles and reaches the far end ``latency`` cycles after that.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from dataclasses import dataclass
from typing import Optional, TextIO

from ..aggregation import BucketManager, FlushRecord
from ..errors import ConfigError, InvariantError
from ..event_model import SpikeEvent, absolute_deadline
from ..hostcomm import RingChannel
from ..packetizer import WORD_BYTES, decode_packet, encode_packet
from ..routing import DestRoutingTable, MissCounter, SourceRoutingTable, fan_out, route_dest, route_source
from .stats import SimStats
from .topology import Network, TorusCoord, link_name, next_hop, torus_route
from .traffic import PoissonSource, TraceEvent, TraceSource, TrafficSpec, format_trace_line

IN_FLIGHT, DROPPED_SOURCE, DROPPED_DEST, UNROUTABLE, DELIVERED = range(5)


@dataclass
class SimConfig:
    pool_size: int = 8
    capacity: int = 124
    drain_rate: Optional[int] = 4
    flush_lead: int = 0
    ring_enabled: bool = True
    ring_size: int = 1 << 16
    notification_latency: int = 100
    notify_batch: int = 1
    check_invariants: bool = False


class _Packet:
    __slots__ = ("data", "words", "src", "dest", "uids")

    def __init__(self, data: bytes, src: int, dest: int, uids: tuple):
        self.data = data
        self.words = len(data) // WORD_BYTES
        self.src = src
        self.dest = dest
        self.uids = uids


class _Link:
    __slots__ = (
        "index", "name", "rate", "latency", "target", "tap", "busy_until", "busy_cycles", "queues", "order", "rr",
    )

    def __init__(self, index, name, rate, latency, target, tap=None):
        self.index = index
        self.tap = tap  # FPGA whose host ring mirrors everything sent here
        self.name = name
        self.rate = rate
        self.latency = latency
        self.target = target  # ("node", coord) or ("fpga", fid)
        self.busy_until = 0
        self.busy_cycles = 0
        self.queues = {}
        self.order = []
        self.rr = 0

    def push(self, source, pkt) -> None:
        q = self.queues.get(source)
        if q is None:
            q = self.queues[source] = deque()
            self.order.append(source)
        q.append(pkt)

    def has_work(self) -> bool:
        return any(self.queues.values())

    def head(self):
        """Round-robin choice among non-empty input queues: (source, packet)."""
        n = len(self.order)
        for i in range(n):
            source = self.order[(self.rr + i) % n]
            q = self.queues[source]
            if q:
                return source, q[0]
        return None

    def pop(self, source) -> "_Packet":
        self.rr = (self.order.index(source) + 1) % len(self.order)
        return self.queues[source].popleft()

    def occupancy(self, words: int) -> int:
        return max(1, math.ceil(round(words / self.rate, 9)))


class _FpgaState:
    def __init__(self, fpga, network: Network, config: SimConfig):
        self.fpga = fpga
        self.src_table = network.source_tables.get(fpga.fpga_id)
        self.dst_table = network.dest_tables.get(fpga.fpga_id)
        self.manager = BucketManager(config.pool_size, config.capacity, config.drain_rate, config.flush_lead)
        self.source_misses = MissCounter(f"fpga{fpga.fpga_id} source")
        self.dest_misses = MissCounter(f"fpga{fpga.fpga_id} dest")
        self.ring = (
            RingChannel(config.ring_size, config.notification_latency, config.notify_batch)
            if config.ring_enabled
            else None
        )
        self.traffic = None


class Simulation:
    def __init__(
        self,
        network: Network,
        traffic: TrafficSpec,
        config: Optional[SimConfig] = None,
        delivery_log: Optional[TextIO] = None,
    ):
        traffic.validate()
        self.net = network
        self.traffic = traffic
        self.config = config or SimConfig()
        self.delivery_log = delivery_log
        self.dims = network.spec.torus_dims
        self.now = 0

        self.fpgas = []
        for f in network.fpgas:
            st = _FpgaState(f, network, self.config)
            if st.src_table is None:
                st.src_table = SourceRoutingTable()
            if st.dst_table is None:
                st.dst_table = DestRoutingTable()
            self.fpgas.append(st)
        self._attach_traffic()

        self.links: list[_Link] = []
        self.up = {}
        self.down = {}
        self.torus = {}
        spec = network.spec
        for f in network.fpgas:
            self.up[f.fpga_id] = self._add_link(
                f"fpga{f.fpga_id}.up", spec.fpga_words_per_cycle, 0, ("node", f.node), tap=f.fpga_id
            )
            self.down[f.fpga_id] = self._add_link(
                f"fpga{f.fpga_id}.down", spec.fpga_words_per_cycle, 0, ("fpga", f.fpga_id)
            )
        for coord, node in sorted(network.nodes.items()):
            for hop in node.links:
                self.torus[(coord, hop.dim, hop.step)] = self._add_link(
                    link_name(coord, hop), spec.torus_words_per_cycle, spec.hop_latency, ("node", hop.to)
                )

        self._active: set[int] = set()
        self._arrivals: list = []
        self._seq = 0
        self._hop_cache = {}

        self.inject_cycle: list[int] = []
        self.deadline: list[int] = []
        self.origin: list[int] = []
        self.status: list[int] = []

        self.stats = SimStats(seed=traffic.seed, consistency_violations=len(network.consistency_violations))
        self.latency_hist: Counter = Counter()
        self.latency_sum = 0

    def _add_link(self, name, rate, latency, target, tap=None) -> _Link:
        link = _Link(len(self.links), name, rate, latency, target, tap)
        self.links.append(link)
        return link

    def _attach_traffic(self) -> None:
        t = self.traffic
        wanted = set(range(len(self.fpgas))) if t.sources is None else set(t.sources)
        unknown = wanted - set(range(len(self.fpgas)))
        if unknown:
            raise ConfigError(f"traffic sources {sorted(unknown)} are not FPGAs of this network")
        if t.kind == "trace":
            bad = {ev.fpga_id for ev in t.trace} - set(range(len(self.fpgas)))
            if bad:
                raise ConfigError(f"trace references unknown FPGAs {sorted(bad)}")
        for st in self.fpgas:
            fid = st.fpga.fpga_id
            if fid not in wanted:
                continue
            if t.kind == "trace":
                st.traffic = TraceSource(fid, t.trace)
            elif t.rate > 0:
                st.traffic = PoissonSource(fid, st.src_table, t)

    # ------------------------------------------------------------------

    def run(self, until: int) -> SimStats:
        if until < self.now:
            raise ValueError("cannot run backwards")
        check = self.config.check_invariants
        for now in range(self.now, until):
            self.now = now
            arrivals = self._arrivals
            while arrivals and arrivals[0][0] <= now:
                _, _, link_idx, pkt = heapq.heappop(arrivals)
                self._arrive(self.links[link_idx], pkt, now)
            for st in self.fpgas:
                ring = st.ring
                if ring is not None and ring.to_host:
                    data = ring.consumer_poll(now)
                    if data:
                        ring.consumer_credit(len(data), now)
            for st in self.fpgas:
                if st.traffic is None and not st.manager.map_table:
                    continue
                self._step_fpga(st, now)
                if check:
                    st.manager.check_invariants()
                    if st.ring is not None:
                        st.ring.check_invariants()
            if self._active:
                self._step_links(now)
        self.now = until
        return self._finalize(until)

    def _step_fpga(self, st: _FpgaState, now: int) -> None:
        records = []
        if st.traffic is not None:
            for key, stamp in st.traffic.events_at(now):
                uid = len(self.status)
                self.inject_cycle.append(now)
                self.deadline.append(absolute_deadline(stamp, now))
                self.origin.append(st.fpga.fpga_id)
                self.status.append(IN_FLIGHT)
                ev = route_source(st.src_table, key, SpikeEvent(key.pulse_address, stamp), None, uid)
                if ev is None:
                    st.source_misses.record(key, now)
                    self.status[uid] = DROPPED_SOURCE
                    continue
                records.extend(st.manager.submit(ev, now))
        if st.manager.map_table:
            records.extend(st.manager.tick(now))
        for rec in records:
            self._emit(st, rec, now)

    def _emit(self, st: _FpgaState, rec: FlushRecord, now: int) -> None:
        target = self.net.fpga_at(rec.dest)
        if target is None:
            for uid in rec.uids:
                self.status[uid] = UNROUTABLE
            return
        data = encode_packet(rec.dest, st.fpga.address, rec.events)
        pkt = _Packet(data, st.fpga.fpga_id, target.fpga_id, rec.uids)
        link = self.up[st.fpga.fpga_id]
        link.push(st.fpga.fpga_id, pkt)
        self._active.add(link.index)
        self.stats.packets_sent += 1

    def _step_links(self, now: int) -> None:
        done = []
        for idx in sorted(self._active):
            link = self.links[idx]
            if link.busy_until > now:
                continue
            choice = link.head()
            if choice is None:
                done.append(idx)
                continue
            source, pkt = choice
            if link.tap is not None:
                ring = self.fpgas[link.tap].ring
                if ring is not None and not ring.producer_put(pkt.data, now):
                    self.stats.ring_stall_cycles += 1
                    continue
            link.pop(source)
            occ = link.occupancy(pkt.words)
            link.busy_until = now + occ
            link.busy_cycles += occ
            self._seq += 1
            heapq.heappush(self._arrivals, (now + occ + link.latency, self._seq, idx, pkt))
            if not link.has_work():
                done.append(idx)
        for idx in done:
            self._active.discard(idx)

    def _arrive(self, link: _Link, pkt: _Packet, now: int) -> None:
        kind, where = link.target
        if kind == "fpga":
            self._deliver(self.fpgas[where], pkt, now)
            return
        dest_node = self.net.fpgas[pkt.dest].node
        hop = next_hop(where, dest_node, self.dims)
        nxt = self.down[pkt.dest] if hop is None else self.torus[(where, hop.dim, hop.step)]
        nxt.push(link.index, pkt)
        self._active.add(nxt.index)

    def _deliver(self, st: _FpgaState, pkt: _Packet, now: int) -> None:
        header, events = decode_packet(pkt.data)
        if header.dest != st.fpga.address:
            raise InvariantError(f"packet for {header.dest:#06x} delivered to {st.fpga.address:#06x}")
        self.stats.packets_delivered += 1
        bound = self._hops(pkt.src, pkt.dest) * self.net.spec.hop_latency + 2 * pkt.words
        fid = st.fpga.fpga_id
        for ev, uid in zip(events, pkt.uids):
            if self.status[uid] != IN_FLIGHT:
                raise InvariantError(f"event {uid} arrived twice")
            mask = route_dest(st.dst_table, ev.guid)
            if mask is None:
                st.dest_misses.record(ev.guid, now)
                self.status[uid] = DROPPED_DEST
                continue
            links = fan_out(mask)
            self.status[uid] = DELIVERED
            self.stats.events_delivered += len(links)
            self.stats.events_delivered_unique += 1
            latency = now - self.inject_cycle[uid]
            self.latency_hist[latency] += 1
            self.latency_sum += latency
            if latency < bound:
                self.stats.latency_bound_violations += 1
            if now > self.deadline[uid]:
                self.stats.deadline_misses += 1
            if self.delivery_log is not None:
                for hicann in links:
                    line = format_trace_line(TraceEvent(now, fid, hicann, ev.guid & 0xFFF, ev.timestamp))
                    self.delivery_log.write(line + "\n")

    def _hops(self, src: int, dest: int) -> int:
        key = (self.net.fpgas[src].node, self.net.fpgas[dest].node)
        hops = self._hop_cache.get(key)
        if hops is None:
            hops = self._hop_cache[key] = len(torus_route(key[0], key[1], self.dims))
        return hops

    # ------------------------------------------------------------------

    def in_flight_uids(self) -> list[int]:
        """Every event id currently buffered in a bucket, queue or link."""
        uids = []
        for st in self.fpgas:
            for _, _, ids in st.manager.pending():
                uids.extend(ids)
        for link in self.links:
            for q in link.queues.values():
                for pkt in q:
                    uids.extend(pkt.uids)
        for *_, pkt in self._arrivals:
            uids.extend(pkt.uids)
        return uids

    def check_conservation(self) -> None:
        located = self.in_flight_uids()
        if len(located) != len(set(located)):
            raise InvariantError("an event is buffered in two places at once")
        expected = {uid for uid, s in enumerate(self.status) if s == IN_FLIGHT}
        if set(located) != expected:
            raise InvariantError(
                f"in-flight bookkeeping mismatch: {len(expected)} expected, {len(located)} located"
            )

    def _finalize(self, until: int) -> SimStats:
        s = self.stats
        s.until = until
        counts = Counter(self.status)
        s.events_injected = len(self.status)
        s.events_dropped_source = counts[DROPPED_SOURCE]
        s.events_dropped_dest = counts[DROPPED_DEST]
        s.events_unroutable = counts[UNROUTABLE]
        s.events_dropped = s.events_dropped_source + s.events_dropped_dest + s.events_unroutable
        s.events_in_flight = counts[IN_FLIGHT]
        if counts[DELIVERED] != s.events_delivered_unique:
            raise InvariantError("delivered count disagrees with event states")
        self.check_conservation()

        s.throughput = s.events_delivered_unique / until if until else 0.0
        s.latency_histogram = dict(self.latency_hist)
        s.latency_mean = self.latency_sum / s.events_delivered_unique if s.events_delivered_unique else 0.0
        s.latency_max = max(self.latency_hist, default=0)
        s.link_utilization = {
            link.name: (link.busy_cycles - max(0, link.busy_until - until)) / until if until else 0.0
            for link in self.links
        }
        flushes = Counter()
        occupancy = Counter()
        s.forced_drains = 0
        for st in self.fpgas:
            flushes.update({t.value: n for t, n in st.manager.flushes.items()})
            occupancy.update(st.manager.occupancy)
            s.forced_drains += st.manager.forced_drains
            if st.ring is not None:
                s.ring_high_water = max(s.ring_high_water, st.ring.high_water)
        s.flushes = dict(flushes)
        s.packet_occupancy = dict(occupancy)
        total = sum(occupancy.values())
        s.mean_packet_occupancy = sum(k * v for k, v in occupancy.items()) / total if total else 0.0
        for link, util in s.link_utilization.items():
            if util > 1.0 + 1e-12:
                raise InvariantError(f"link {link} utilization {util} exceeds 1")
        return s


def run(network: Network, traffic: TrafficSpec, until: int, config: Optional[SimConfig] = None, **kw) -> SimStats:
    return Simulation(network, traffic, config, **kw).run(until)
