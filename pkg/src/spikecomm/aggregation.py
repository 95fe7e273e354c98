"""Destination-keyed event buckets with renaming.

A fixed pool of buckets is mapped onto the 16-bit destination space through
a map table and a free list, in the same way a register file is renamed.
Each bucket keeps two counters: one counts events arriving into the filling
half, the other counts events still to be shifted out of the flushing half.
A flush swaps them, so a bucket keeps accepting events while it drains.
"""

from __future__ import annotations

import enum
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvariantError
from .event_model import (
    HALF_WINDOW,
    RoutedEvent,
    WireEvent,
    deadline_exceeded,
    deadline_order,
    earlier,
    timestamp_of_clock,
)

MAX_EVENTS_PER_PACKET = 124
DEFAULT_POOL_SIZE = 8
DEFAULT_DRAIN_RATE = 4


class Trigger(enum.Enum):
    DEADLINE_EXCEEDED = "deadline"
    BUCKET_FULL = "full"
    EVICTED = "evicted"
    EXTERNAL = "external"


class BucketState(enum.Enum):
    IDLE = "idle"
    FILLING = "filling"
    DRAINING = "draining"


@dataclass(frozen=True)
class FlushRecord:
    dest: int
    events: tuple[WireEvent, ...]
    trigger: Trigger
    flush_cycle: int
    # simulator event ids, parallel to ``events``; not part of the wire format
    uids: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.events:
            raise ValueError("a flush carries at least one event")


@dataclass
class Bucket:
    index: int
    capacity: int = MAX_EVENTS_PER_PACKET
    dest: Optional[int] = None
    slots: list = field(default_factory=list)
    uids: list = field(default_factory=list)
    fill_counter: int = 0
    drain_counter: int = 0
    most_urgent: Optional[int] = None
    state: BucketState = BucketState.IDLE

    def append(self, ev: RoutedEvent) -> None:
        self.slots.append(ev.wire)
        self.uids.append(ev.uid)
        self.fill_counter += 1
        self.most_urgent = ev.timestamp if self.most_urgent is None else earlier(self.most_urgent, ev.timestamp)
        if self.state is BucketState.IDLE:
            self.state = BucketState.FILLING

    @property
    def buffered(self) -> int:
        return self.fill_counter + self.drain_counter


class BucketManager:
    """Pool of ``pool_size`` buckets shared by all destinations.

    ``drain_rate`` is events shifted out per tick; ``None`` drains a flushed
    half instantly. ``lead`` makes deadline checks look that many cycles
    ahead, so a bucket can be flushed before its events are late.

    Deadline flushes in one tick are initiated in ascending bucket index.
    """

    def __init__(
        self,
        pool_size: int = DEFAULT_POOL_SIZE,
        capacity: int = MAX_EVENTS_PER_PACKET,
        drain_rate: Optional[int] = DEFAULT_DRAIN_RATE,
        lead: int = 0,
    ):
        if pool_size < 1:
            raise ValueError("need at least one bucket")
        if not 1 <= capacity <= MAX_EVENTS_PER_PACKET:
            raise ValueError(f"bucket capacity must be in 1..{MAX_EVENTS_PER_PACKET}")
        if drain_rate is not None and drain_rate < 1:
            raise ValueError("drain_rate must be positive or None")
        if not 0 <= lead < HALF_WINDOW:
            raise ValueError(f"flush lead must be in 0..{HALF_WINDOW - 1} cycles")
        self.capacity = capacity
        self.drain_rate = drain_rate
        self.lead = lead
        self.buckets = [Bucket(i, capacity) for i in range(pool_size)]
        self.map_table: dict[int, int] = {}
        self.free_list: deque[int] = deque(range(pool_size))
        self.flushes: Counter = Counter()
        self.occupancy: Counter = Counter()
        self.forced_drains = 0

    @property
    def pool_size(self) -> int:
        return len(self.buckets)

    def bucket_for(self, dest: int) -> Optional[Bucket]:
        idx = self.map_table.get(dest)
        return None if idx is None else self.buckets[idx]

    def buffered_events(self) -> int:
        return sum(b.fill_counter for b in self.buckets)

    def pending(self) -> list[tuple[int, tuple[WireEvent, ...], tuple]]:
        """Events still waiting in filling halves, per mapped destination."""
        out = []
        for dest, idx in self.map_table.items():
            b = self.buckets[idx]
            if b.fill_counter:
                out.append((dest, tuple(b.slots), tuple(b.uids)))
        return out

    def submit(self, ev: RoutedEvent, now: int) -> list[FlushRecord]:
        records = []
        idx = self.map_table.get(ev.dest)
        if idx is None:
            if self.free_list:
                idx = self.free_list.popleft()
            else:
                idx = self._victim()
                records.extend(self._evict(self.buckets[idx], now))
            bucket = self.buckets[idx]
            bucket.dest = ev.dest
            self.map_table[ev.dest] = idx
        else:
            bucket = self.buckets[idx]
            if bucket.state is BucketState.DRAINING and bucket.buffered >= self.capacity:
                # bucket memory is full mid-drain: finish the drain before accepting
                self._force_drain(bucket)

        bucket.append(ev)
        if bucket.state is BucketState.FILLING and bucket.fill_counter >= self.capacity:
            records.append(self._initiate(bucket, Trigger.BUCKET_FULL, now))
        return records

    def tick(self, now: int) -> list[FlushRecord]:
        active = sorted(self.map_table.values())
        for idx in active:
            b = self.buckets[idx]
            if b.state is BucketState.DRAINING:
                b.drain_counter -= min(self.drain_rate, b.drain_counter)
                if b.drain_counter == 0:
                    self._drain_done(b)

        records = []
        stamp = timestamp_of_clock(now + self.lead)
        for idx in active:
            b = self.buckets[idx]
            if b.state is BucketState.FILLING and deadline_exceeded(b.most_urgent, stamp):
                records.append(self._initiate(b, Trigger.DEADLINE_EXCEEDED, now))
        return records

    def external_flush(self, dest: int, now: int) -> Optional[FlushRecord]:
        b = self.bucket_for(dest)
        if b is None or b.state is not BucketState.FILLING or not b.fill_counter:
            return None
        return self._initiate(b, Trigger.EXTERNAL, now)

    def flush_all(self, now: int) -> list[FlushRecord]:
        records = []
        for idx in sorted(self.map_table.values()):
            rec = self.external_flush(self.buckets[idx].dest, now)
            if rec is not None:
                records.append(rec)
        return records

    def arbiter_select(self) -> int:
        """Index of the Filling bucket with the most urgent deadline.

        Ties go to the lowest index.
        """
        best = None
        for idx in sorted(self.map_table.values()):
            b = self.buckets[idx]
            if b.state is not BucketState.FILLING or not b.fill_counter:
                continue
            if best is None or deadline_order(b.most_urgent, self.buckets[best].most_urgent) < 0:
                best = idx
        if best is None:
            raise LookupError("no filling bucket to arbitrate")
        return best

    def initiate_flush(self, bucket: Bucket, trigger: Trigger, now: int) -> Optional[FlushRecord]:
        """Swap the counters of ``bucket``; a no-op while it is draining."""
        if bucket.state is BucketState.DRAINING or not bucket.fill_counter:
            return None
        return self._initiate(bucket, trigger, now)

    def _initiate(self, b: Bucket, trigger: Trigger, now: int, release: bool = True) -> FlushRecord:
        rec = FlushRecord(b.dest, tuple(b.slots), trigger, now, tuple(b.uids))
        b.slots = []
        b.uids = []
        b.drain_counter, b.fill_counter = b.fill_counter, 0
        b.most_urgent = None
        b.state = BucketState.DRAINING
        self.flushes[trigger] += 1
        self.occupancy[len(rec.events)] += 1
        if self.drain_rate is None:
            b.drain_counter = 0
            if release:
                self._drain_done(b)
        return rec

    def _drain_done(self, b: Bucket) -> None:
        if b.fill_counter:
            b.state = BucketState.FILLING
        else:
            self._release(b)

    def _release(self, b: Bucket) -> None:
        del self.map_table[b.dest]
        b.dest = None
        b.state = BucketState.IDLE
        self.free_list.append(b.index)

    def _force_drain(self, b: Bucket) -> None:
        if b.drain_counter:
            self.forced_drains += 1
        b.drain_counter = 0
        b.state = BucketState.FILLING if b.fill_counter else BucketState.IDLE

    def _victim(self) -> int:
        try:
            return self.arbiter_select()
        except LookupError:
            pass
        # every mapped bucket is draining: take the one closest to empty
        return min(self.map_table.values(), key=lambda i: (self.buckets[i].drain_counter, i))

    def _evict(self, b: Bucket, now: int) -> list[FlushRecord]:
        """Flush ``b`` with an instant drain and unmap it for reassignment."""
        records = []
        self._force_drain(b)
        if b.fill_counter:
            records.append(self._initiate(b, Trigger.EVICTED, now, release=False))
        b.drain_counter = 0
        b.state = BucketState.IDLE
        del self.map_table[b.dest]
        b.dest = None
        return records

    def check_invariants(self) -> None:
        mapped = set(self.map_table.values())
        free = set(self.free_list)
        if mapped & free or len(mapped) + len(free) != self.pool_size or len(self.free_list) != len(free):
            raise InvariantError("map table and free list do not partition the bucket pool")
        if len(set(self.map_table)) != len(self.map_table):
            raise InvariantError("duplicate destination in map table")
        for b in self.buckets:
            if b.buffered > self.capacity:
                raise InvariantError(f"bucket {b.index} holds {b.buffered} > {self.capacity}")
            if b.state is BucketState.IDLE and b.buffered:
                raise InvariantError(f"idle bucket {b.index} is not empty")
            if b.fill_counter != len(b.slots):
                raise InvariantError(f"bucket {b.index} fill counter disagrees with its slots")
            if (b.index in mapped) != (b.dest is not None):
                raise InvariantError(f"bucket {b.index} mapping is inconsistent")
