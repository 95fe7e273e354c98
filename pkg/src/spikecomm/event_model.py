"""Spike events, addresses and wrap-around deadline arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

PULSE_ADDRESS_BITS = 12
TIMESTAMP_BITS = 15
GUID_BITS = 17
ADDRESS_BITS = 16
HICANN_LINKS = 8

TIMESTAMP_MODULUS = 1 << TIMESTAMP_BITS
HALF_WINDOW = TIMESTAMP_MODULUS >> 1

FPGA_CLOCK_HZ = 210e6


def _check_width(name: str, value: int, bits: int) -> None:
    if value.__class__ is not int:
        raise TypeError(f"{name} must be an int, got {type(value).__name__}")
    if not 0 <= value < (1 << bits):
        raise ValueError(f"{name}={value} does not fit in {bits} bits")


def check_guid(value: int) -> int:
    _check_width("guid", value, GUID_BITS)
    return value


def check_address(value: int) -> int:
    _check_width("network address", value, ADDRESS_BITS)
    return value


def check_timestamp(value: int) -> int:
    _check_width("timestamp", value, TIMESTAMP_BITS)
    return value


@dataclass(frozen=True)
class SpikeEvent:
    """An event as it leaves a HICANN chip: source pulse address plus deadline."""

    pulse_address: int
    timestamp: int

    def __post_init__(self):
        _check_width("pulse_address", self.pulse_address, PULSE_ADDRESS_BITS)
        check_timestamp(self.timestamp)


@dataclass(frozen=True)
class RoutedEvent:
    """A spike event after the source lookup.

    ``uid`` is simulator bookkeeping only; it never goes on the wire and is
    excluded from equality.
    """

    dest: int
    guid: int
    timestamp: int
    uid: Optional[int] = None

    def __post_init__(self):
        check_address(self.dest)
        check_guid(self.guid)
        check_timestamp(self.timestamp)

    def __eq__(self, other):
        if not isinstance(other, RoutedEvent):
            return NotImplemented
        return (self.dest, self.guid, self.timestamp) == (other.dest, other.guid, other.timestamp)

    def __hash__(self):
        return hash((self.dest, self.guid, self.timestamp))

    @property
    def wire(self) -> "WireEvent":
        return WireEvent(self.guid, self.timestamp)


@dataclass(frozen=True)
class WireEvent:
    """32-bit on-wire event: timestamp in bits [31:17], guid in bits [16:0]."""

    guid: int
    timestamp: int

    def __post_init__(self):
        check_guid(self.guid)
        check_timestamp(self.timestamp)

    def to_word(self) -> int:
        return (self.timestamp << GUID_BITS) | self.guid

    @classmethod
    def from_word(cls, word: int) -> "WireEvent":
        # masking guarantees the field widths, so skip re-validation
        ev = object.__new__(cls)
        object.__setattr__(ev, "guid", word & ((1 << GUID_BITS) - 1))
        object.__setattr__(ev, "timestamp", (word >> GUID_BITS) & (TIMESTAMP_MODULUS - 1))
        return ev


@dataclass
class SystemClock:
    """Unbounded cycle counter; 15-bit timestamps are a projection of it."""

    now: int = 0
    frequency: float = FPGA_CLOCK_HZ

    def advance(self, cycles: int = 1) -> int:
        if cycles < 0:
            raise ValueError("clock cannot run backwards")
        self.now += cycles
        return self.now

    @property
    def timestamp(self) -> int:
        return timestamp_of_clock(self.now)


def timestamp_of_clock(now: int) -> int:
    return now % TIMESTAMP_MODULUS


def deadline_exceeded(deadline: int, now: int, modulus: int = TIMESTAMP_MODULUS) -> bool:
    """True iff ``now`` lies strictly after ``deadline`` within half a period."""
    diff = (now - deadline) % modulus
    return 0 < diff < modulus // 2


def deadline_order(a: int, b: int, modulus: int = TIMESTAMP_MODULUS) -> int:
    """Compare two deadlines under wrap-around.

    Returns -1 if ``a`` precedes ``b``, 0 if equal, 1 otherwise. Only a
    total order on sets spanning less than half the timestamp period.
    """
    if a == b:
        return 0
    diff = (b - a) % modulus
    return -1 if 0 < diff < modulus // 2 else 1


def earlier(a: int, b: int) -> int:
    """The more urgent of two deadlines; ``a`` on ties."""
    return b if deadline_order(b, a) < 0 else a


def absolute_deadline(timestamp: int, reference_cycle: int) -> int:
    """Lift a 15-bit deadline onto the unbounded clock near ``reference_cycle``.

    Deadlines within the half window behind the reference map into the past.
    """
    diff = (timestamp - timestamp_of_clock(reference_cycle)) % TIMESTAMP_MODULUS
    if diff >= HALF_WINDOW:
        diff -= TIMESTAMP_MODULUS
    return reference_cycle + diff
