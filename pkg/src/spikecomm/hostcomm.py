"""FPGA to host ring-buffer channel with notification credits.

The FPGA side owns the write pointer and a space register. It writes into a
fixed ring in host memory without asking first, as long as its space
register allows. The host learns about new data from DataWritten
notifications and hands space back with DataConsumed notifications. Both
notification queues are ordered and have a fixed latency.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass

from .errors import InvariantError


class PayloadTooLarge(ValueError):
    pass


class OverCredit(RuntimeError):
    """The host returned more space than it has consumed."""


class NotificationKind(enum.Enum):
    DATA_WRITTEN = "written"
    DATA_CONSUMED = "consumed"


@dataclass(frozen=True)
class Notification:
    kind: NotificationKind
    amount: int
    issue_cycle: int

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("notification amount must be positive")


class RingChannel:
    """Single-producer, single-consumer ring in host memory.

    ``notify_batch`` puts are announced by one DataWritten notification;
    call :meth:`flush_notifications` to announce a partial batch.
    """

    def __init__(self, size: int = 1 << 16, notification_latency: int = 0, notify_batch: int = 1):
        if size <= 0 or size & (size - 1):
            raise ValueError(f"ring size {size} must be a power of two")
        if notification_latency < 0:
            raise ValueError("notification latency must be non-negative")
        if notify_batch < 1:
            raise ValueError("notify_batch must be at least 1")
        self.size = size
        self.notification_latency = notification_latency
        self.notify_batch = notify_batch
        self.memory = bytearray(size)
        self.write_ptr = 0
        self.read_ptr = 0
        self.space = size

        self.to_host: deque[Notification] = deque()
        self.to_fpga: deque[Notification] = deque()
        self._unannounced = 0
        self._puts_since_notify = 0

        self.bytes_written = 0
        self.bytes_delivered = 0
        self.bytes_credited = 0
        self.stalls = 0
        self.high_water = 0

    # producer (FPGA) side

    def producer_put(self, payload: bytes, now: int) -> bool:
        """Write ``payload`` if the space register allows; False means stalled."""
        n = len(payload)
        if n > self.size:
            raise PayloadTooLarge(f"{n}-byte payload exceeds {self.size}-byte ring")
        self.receive_credits(now)
        if n > self.space:
            self.stalls += 1
            return False
        if n == 0:
            return True
        first = min(n, self.size - self.write_ptr)
        self.memory[self.write_ptr : self.write_ptr + first] = payload[:first]
        if first < n:
            self.memory[: n - first] = payload[first:]
        self.write_ptr = (self.write_ptr + n) % self.size
        self.space -= n
        self.bytes_written += n
        self.high_water = max(self.high_water, self.size - self.space)

        self._unannounced += n
        self._puts_since_notify += 1
        if self._puts_since_notify >= self.notify_batch:
            self.flush_notifications(now)
        return True

    def flush_notifications(self, now: int) -> None:
        if self._unannounced:
            self.to_host.append(Notification(NotificationKind.DATA_WRITTEN, self._unannounced, now))
        self._unannounced = 0
        self._puts_since_notify = 0

    def receive_credits(self, now: int) -> int:
        """Apply every DataConsumed notification that has arrived by ``now``."""
        gained = 0
        while self.to_fpga and self.to_fpga[0].issue_cycle + self.notification_latency <= now:
            gained += self.to_fpga.popleft().amount
        self.space += gained
        return gained

    # consumer (host) side

    def consumer_poll(self, now: int) -> bytes:
        amount = 0
        while self.to_host and self.to_host[0].issue_cycle + self.notification_latency <= now:
            amount += self.to_host.popleft().amount
        if not amount:
            return b""
        start = self.read_ptr
        first = min(amount, self.size - start)
        data = bytes(self.memory[start : start + first]) + bytes(self.memory[: amount - first])
        self.read_ptr = (start + amount) % self.size
        self.bytes_delivered += amount
        return data

    def consumer_credit(self, amount: int, now: int) -> None:
        if amount <= 0:
            raise ValueError("credit amount must be positive")
        if amount > self.bytes_delivered - self.bytes_credited:
            raise OverCredit(
                f"credit of {amount} B exceeds {self.bytes_delivered - self.bytes_credited} B consumed but uncredited"
            )
        self.bytes_credited += amount
        self.to_fpga.append(Notification(NotificationKind.DATA_CONSUMED, amount, now))

    # bookkeeping

    @property
    def in_flight_credit(self) -> int:
        return sum(n.amount for n in self.to_fpga)

    @property
    def occupancy(self) -> int:
        """Bytes the producer still considers used."""
        return self.size - self.space

    def check_invariants(self) -> None:
        uncredited = self.bytes_written - self.bytes_credited
        if not 0 <= self.space <= self.size:
            raise InvariantError(f"space register {self.space} outside 0..{self.size}")
        if self.space + self.in_flight_credit + uncredited != self.size:
            raise InvariantError("credit conservation violated")
        if self.write_ptr != self.bytes_written % self.size or self.read_ptr != self.bytes_delivered % self.size:
            raise InvariantError("ring pointers disagree with byte counts")


class HostSink:
    """Host to FPGA direction: data is consumed on arrival, up to a rate limit."""

    def __init__(self, bytes_per_cycle: int = 16):
        if bytes_per_cycle <= 0:
            raise ValueError("rate limit must be positive")
        self.bytes_per_cycle = bytes_per_cycle
        self._cycle = None
        self._used = 0
        self.consumed = 0

    def accept(self, nbytes: int, now: int) -> bool:
        if now != self._cycle:
            self._cycle = now
            self._used = 0
        if self._used + nbytes > self.bytes_per_cycle:
            return False
        self._used += nbytes
        self.consumed += nbytes
        return True
