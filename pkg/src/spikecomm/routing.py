"""Source-side and destination-side lookup tables.

Table file format, one entry per line, ``#`` starts a comment::

    src <hicann_link:0-7> <pulse_address:hex> <dest:hex> <guid:hex>
    dst <guid:hex> <mask:8-bit binary>
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, Optional

from .event_model import (
    GUID_BITS,
    HICANN_LINKS,
    PULSE_ADDRESS_BITS,
    RoutedEvent,
    SpikeEvent,
    check_address,
    check_guid,
)

log = logging.getLogger(__name__)


class TableError(ValueError):
    def __init__(self, message: str, lineno: Optional[int] = None, source: Optional[str] = None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class SourceKey(NamedTuple):
    hicann_link: int
    pulse_address: int

    @classmethod
    def make(cls, hicann_link: int, pulse_address: int) -> "SourceKey":
        if not 0 <= hicann_link < HICANN_LINKS:
            raise ValueError(f"hicann_link={hicann_link} out of range 0..{HICANN_LINKS - 1}")
        if not 0 <= pulse_address < (1 << PULSE_ADDRESS_BITS):
            raise ValueError(f"pulse_address={pulse_address:#x} exceeds 12 bits")
        return cls(hicann_link, pulse_address)


class SourceRoutingTable:
    """Immutable map (hicann_link, pulse_address) -> (dest, guid)."""

    def __init__(self, entries: Mapping[SourceKey, tuple[int, int]] = ()):
        checked = {}
        for key, (dest, guid) in dict(entries).items():
            key = SourceKey.make(*key)
            checked[key] = (check_address(dest), check_guid(guid))
        self._entries = MappingProxyType(checked)

    @property
    def entries(self) -> Mapping[SourceKey, tuple[int, int]]:
        return self._entries

    def lookup(self, key: SourceKey) -> Optional[tuple[int, int]]:
        return self._entries.get(key)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, key):
        return key in self._entries

    def __eq__(self, other):
        return isinstance(other, SourceRoutingTable) and dict(self._entries) == dict(other._entries)


class DestRoutingTable:
    """Immutable map guid -> nonzero 8-bit multicast mask."""

    def __init__(self, entries: Mapping[int, int] = ()):
        checked = {}
        for guid, mask in dict(entries).items():
            check_guid(guid)
            if not 0 < mask < (1 << HICANN_LINKS):
                raise ValueError(f"multicast mask {mask:#x} for guid {guid:#x} must be a nonzero 8-bit value")
            checked[guid] = mask
        self._entries = MappingProxyType(checked)

    @property
    def entries(self) -> Mapping[int, int]:
        return self._entries

    def lookup(self, guid: int) -> Optional[int]:
        return self._entries.get(guid)

    def __len__(self):
        return len(self._entries)

    def __contains__(self, guid):
        return guid in self._entries

    def __eq__(self, other):
        return isinstance(other, DestRoutingTable) and dict(self._entries) == dict(other._entries)


@dataclass
class MissCounter:
    """Per-node drop counter; logs the first miss of every key once."""

    name: str = "lookup"
    count: int = 0
    first_seen: dict = field(default_factory=dict)

    def record(self, key, cycle: Optional[int] = None) -> None:
        self.count += 1
        if key not in self.first_seen:
            self.first_seen[key] = cycle
            log.warning("%s miss for %r (cycle %s)", self.name, key, cycle)


def route_source(
    table: SourceRoutingTable,
    key: SourceKey,
    event: SpikeEvent,
    misses: Optional[MissCounter] = None,
    uid: Optional[int] = None,
) -> Optional[RoutedEvent]:
    """Look up the network destination and GUID; ``None`` on a miss."""
    if key.pulse_address != event.pulse_address:
        raise ValueError("source key and event disagree on pulse address")
    hit = table.lookup(key)
    if hit is None:
        if misses is not None:
            misses.record(key)
        return None
    dest, guid = hit
    return RoutedEvent(dest, guid, event.timestamp, uid)


def route_dest(table: DestRoutingTable, guid: int, misses: Optional[MissCounter] = None) -> Optional[int]:
    mask = table.lookup(guid)
    if mask is None and misses is not None:
        misses.record(guid)
    return mask


def fan_out(mask: int) -> list[int]:
    """HICANN link indices selected by a multicast mask."""
    return [link for link in range(HICANN_LINKS) if mask >> link & 1]


def _parse_hex(token: str, bits: int, what: str, lineno: int, source) -> int:
    try:
        value = int(token, 16)
    except ValueError:
        raise TableError(f"bad hex {what} {token!r}", lineno, source) from None
    if not 0 <= value < (1 << bits):
        raise TableError(f"{what} {token!r} exceeds {bits} bits", lineno, source)
    return value


def load_tables(text: str, source: Optional[str] = None) -> tuple[SourceRoutingTable, DestRoutingTable]:
    src: dict[SourceKey, tuple[int, int]] = {}
    dst: dict[int, int] = {}
    seen_src: dict[SourceKey, int] = {}
    seen_dst: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "src":
            if len(parts) != 5:
                raise TableError("src line needs 4 fields: link pulse_address dest guid", lineno, source)
            try:
                link = int(parts[1], 10)
            except ValueError:
                raise TableError(f"bad hicann link {parts[1]!r}", lineno, source) from None
            if not 0 <= link < HICANN_LINKS:
                raise TableError(f"hicann link {link} out of range 0..7", lineno, source)
            key = SourceKey(link, _parse_hex(parts[2], PULSE_ADDRESS_BITS, "pulse address", lineno, source))
            dest = _parse_hex(parts[3], 16, "dest", lineno, source)
            guid = _parse_hex(parts[4], GUID_BITS, "guid", lineno, source)
            if key in seen_src:
                raise TableError(
                    f"duplicate source key link={key.hicann_link} pulse={key.pulse_address:#05x} "
                    f"(first defined on line {seen_src[key]})",
                    lineno,
                    source,
                )
            seen_src[key] = lineno
            src[key] = (dest, guid)
        elif kind == "dst":
            if len(parts) != 3:
                raise TableError("dst line needs 2 fields: guid mask", lineno, source)
            guid = _parse_hex(parts[1], GUID_BITS, "guid", lineno, source)
            token = parts[2]
            if token.startswith("0b"):
                token = token[2:]
            if len(token) != HICANN_LINKS or set(token) - {"0", "1"}:
                raise TableError(f"mask {parts[2]!r} must be 8 binary digits", lineno, source)
            mask = int(token, 2)
            if mask == 0:
                raise TableError(f"zero multicast mask for guid {guid:#x}", lineno, source)
            if guid in seen_dst:
                raise TableError(f"duplicate guid {guid:#x} (first defined on line {seen_dst[guid]})", lineno, source)
            seen_dst[guid] = lineno
            dst[guid] = mask
        else:
            raise TableError(f"unknown record type {kind!r}", lineno, source)
    return SourceRoutingTable(src), DestRoutingTable(dst)


def save_tables(src: SourceRoutingTable, dst: DestRoutingTable) -> str:
    """Canonical text form: src lines sorted by key, then dst lines by guid."""
    lines = [
        f"src {key.hicann_link} {key.pulse_address:03x} {dest:04x} {guid:05x}"
        for key, (dest, guid) in sorted(src.entries.items())
    ]
    lines += [f"dst {guid:05x} {mask:08b}" for guid, mask in sorted(dst.entries.items())]
    return "".join(line + "\n" for line in lines)


def dangling_entries(
    src: SourceRoutingTable, dst_by_node: Mapping[int, DestRoutingTable]
) -> list[tuple[SourceKey, int, int]]:
    """Source entries whose (dest, guid) has no destination-table match.

    Returns ``(key, dest, guid)`` triples sorted by key.
    """
    missing = []
    for key, (dest, guid) in sorted(src.entries.items()):
        table = dst_by_node.get(dest)
        if table is None or guid not in table:
            missing.append((key, dest, guid))
    return missing

