"""Byte format of aggregated spike packets.

A packet is a sequence of 128-bit network words. Word 0 is the header::

    bytes 0-1   dest          little-endian u16
    bytes 2-3   source        little-endian u16
    byte  4     event_count   7 bits, 1..124
    byte  5     msg_type      low nibble, 0 = spike events
    bytes 6-15  reserved      zero

Payload words follow, four 32-bit little-endian event slots each, earliest
event in the lowest slot. Unused slots of the last word are zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

from .event_model import WireEvent, check_address

WORD_BYTES = 16
EVENT_BYTES = 4
EVENTS_PER_WORD = WORD_BYTES // EVENT_BYTES
MAX_EVENTS = 124
MAX_PAYLOAD_BYTES = MAX_EVENTS * EVENT_BYTES
MSG_SPIKE_EVENTS = 0

_HEADER = struct.Struct("<HHBB10x")


class CodecError(ValueError):
    pass


class EmptyPayload(CodecError):
    pass


class Overflow(CodecError):
    pass


class BadLength(CodecError):
    pass


class BadType(CodecError):
    pass


class BadCount(CodecError):
    pass


@dataclass(frozen=True)
class PacketHeader:
    dest: int
    source: int
    event_count: int
    msg_type: int = MSG_SPIKE_EVENTS

    def pack(self) -> bytes:
        return _HEADER.pack(self.dest, self.source, self.event_count, self.msg_type & 0xF)


def payload_words(event_count: int) -> int:
    return -(-event_count // EVENTS_PER_WORD)


def packet_bytes(event_count: int) -> int:
    return WORD_BYTES * (1 + payload_words(event_count))


def encode_packet(dest: int, source: int, events: Sequence[WireEvent]) -> bytes:
    check_address(dest)
    check_address(source)
    n = len(events)
    if n == 0:
        raise EmptyPayload("a packet needs at least one event")
    if n > MAX_EVENTS:
        raise Overflow(f"{n} events exceed the {MAX_EVENTS}-event ({MAX_PAYLOAD_BYTES} B) payload limit")
    words = [ev.to_word() for ev in events]
    words += [0] * (payload_words(n) * EVENTS_PER_WORD - n)
    return PacketHeader(dest, source, n).pack() + struct.pack(f"<{len(words)}I", *words)


def decode_packet(data: bytes) -> tuple[PacketHeader, list[WireEvent]]:
    if not data or len(data) % WORD_BYTES:
        raise BadLength(f"packet length {len(data)} is not a positive multiple of {WORD_BYTES}")
    dest, source, count, type_byte = _HEADER.unpack_from(data)
    msg_type = type_byte & 0xF
    if msg_type != MSG_SPIKE_EVENTS:
        raise BadType(f"unsupported message type {msg_type}")
    if count & 0x80 or not 1 <= count <= MAX_EVENTS:
        raise BadCount(f"event count {count} outside 1..{MAX_EVENTS}")
    if len(data) != packet_bytes(count):
        raise BadLength(f"{len(data)} bytes inconsistent with event count {count} (expected {packet_bytes(count)})")
    words = struct.unpack_from(f"<{count}I", data, WORD_BYTES)
    return PacketHeader(dest, source, count, msg_type), [WireEvent.from_word(w) for w in words]


def message_cycles(event_count: int) -> int:
    """Cycles to shift a packet out at one network word per cycle."""
    if not 1 <= event_count <= MAX_EVENTS:
        raise ValueError(f"event count {event_count} outside 1..{MAX_EVENTS}")
    return 1 + payload_words(event_count)
