"""Torus of concentrator nodes with FPGA leaves."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from ..errors import ConfigError
from ..event_model import ADDRESS_BITS, FPGA_CLOCK_HZ
from ..packetizer import WORD_BYTES
from ..routing import DestRoutingTable, SourceRoutingTable, dangling_entries

log = logging.getLogger(__name__)

WORD_BITS = WORD_BYTES * 8
MAX_ADDRESSES = 1 << ADDRESS_BITS


class TorusCoord(NamedTuple):
    x: int
    y: int
    z: int


class Hop(NamedTuple):
    dim: int
    step: int  # +1 or -1
    to: TorusCoord


@dataclass
class TopologySpec:
    torus_dims: tuple[int, int, int] = (2, 2, 2)
    wafers: int = 1
    fpgas_per_wafer: int = 48
    concentrators_per_wafer: int = 8
    fpgas_per_concentrator: int = 6
    hicanns_per_fpga: int = 8
    link_bandwidth: float = 12 * 8.4e9
    hicann_link_bandwidth: float = 1e9
    nic_links: int = 7
    clock_hz: float = FPGA_CLOCK_HZ
    hop_latency: int = 20
    fpga_words_per_cycle: float = 1.0
    # torus coordinate of every concentrator, in global concentrator order
    placement: Optional[list[tuple[int, int, int]]] = None

    def __post_init__(self):
        self.torus_dims = tuple(int(d) for d in self.torus_dims)

    @property
    def node_count(self) -> int:
        x, y, z = self.torus_dims
        return x * y * z

    @property
    def concentrator_count(self) -> int:
        return self.wafers * self.concentrators_per_wafer

    @property
    def fpga_count(self) -> int:
        return self.wafers * self.fpgas_per_wafer

    @property
    def torus_words_per_cycle(self) -> float:
        return self.link_bandwidth / (WORD_BITS * self.clock_hz)

    def validate(self) -> None:
        if len(self.torus_dims) != 3 or min(self.torus_dims) < 1:
            raise ConfigError(f"torus_dims {self.torus_dims} must be three positive sizes")
        if self.fpgas_per_concentrator * self.concentrators_per_wafer != self.fpgas_per_wafer:
            raise ConfigError(
                f"{self.fpgas_per_concentrator} FPGAs x {self.concentrators_per_wafer} concentrators "
                f"!= {self.fpgas_per_wafer} FPGAs per wafer"
            )
        if self.wafers < 0:
            raise ConfigError("wafer count must be non-negative")
        if self.node_count > MAX_ADDRESSES:
            raise ConfigError(f"address exhaustion: {self.node_count} torus nodes exceed {MAX_ADDRESSES} addresses")
        if self.fpga_count > MAX_ADDRESSES:
            raise ConfigError(f"address exhaustion: {self.fpga_count} FPGAs exceed {MAX_ADDRESSES} addresses")
        if self.placement is None and self.concentrator_count > self.node_count:
            raise ConfigError(
                f"{self.concentrator_count} concentrators do not fit on {self.node_count} torus nodes"
            )
        if self.hop_latency < 0:
            raise ConfigError("hop latency must be non-negative")
        if self.fpga_words_per_cycle <= 0 or self.link_bandwidth <= 0:
            raise ConfigError("link rates must be positive")


@dataclass
class TorusNode:
    address: int
    coord: TorusCoord
    concentrator: Optional[int] = None
    fpgas: list[int] = field(default_factory=list)
    links: list[Hop] = field(default_factory=list)

    @property
    def degree(self) -> int:
        return len(self.links) + (1 if self.fpgas else 0)


@dataclass
class Fpga:
    fpga_id: int
    address: int
    wafer: int
    concentrator: int
    slot: int
    node: TorusCoord


@dataclass
class Network:
    spec: TopologySpec
    nodes: dict[TorusCoord, TorusNode]
    fpgas: list[Fpga]
    source_tables: dict[int, SourceRoutingTable] = field(default_factory=dict)
    dest_tables: dict[int, DestRoutingTable] = field(default_factory=dict)
    consistency_violations: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.by_address = {f.address: f for f in self.fpgas}

    def fpga_at(self, address: int) -> Optional[Fpga]:
        return self.by_address.get(address)

    def install_tables(self, fpga_id: int, src: SourceRoutingTable, dst: DestRoutingTable) -> None:
        if not 0 <= fpga_id < len(self.fpgas):
            raise ConfigError(f"no FPGA with id {fpga_id}")
        self.source_tables[fpga_id] = src
        self.dest_tables[fpga_id] = dst

    def check_consistency(self) -> list[tuple]:
        """Every (dest, guid) a source table emits must resolve at ``dest``.

        Returns ``(fpga_id, key, dest, guid)`` for each dangling entry.
        """
        dst_by_addr = {self.fpgas[fid].address: t for fid, t in self.dest_tables.items()}
        problems = []
        for fid in sorted(self.source_tables):
            for key, dest, guid in dangling_entries(self.source_tables[fid], dst_by_addr):
                problems.append((fid, key, dest, guid))
        for fid, key, dest, guid in problems:
            log.warning("fpga %d: %r emits guid %#x to %#06x with no destination entry", fid, key, guid, dest)
        self.consistency_violations = problems
        return problems


def coord_of(index: int, dims: Sequence[int]) -> TorusCoord:
    x, y, _ = dims
    return TorusCoord(index % x, index // x % y, index // (x * y))


def index_of(coord: TorusCoord, dims: Sequence[int]) -> int:
    x, y, _ = dims
    return coord.x + x * (coord.y + y * coord.z)


def _step(coord: TorusCoord, dim: int, step: int, dims: Sequence[int]) -> TorusCoord:
    c = list(coord)
    c[dim] = (c[dim] + step) % dims[dim]
    return TorusCoord(*c)


def dim_step(src: int, dst: int, size: int) -> tuple[int, int]:
    """(direction, hop count) along one ring; ties go toward increasing index."""
    forward = (dst - src) % size
    backward = (src - dst) % size
    if forward == 0:
        return 0, 0
    if forward <= backward:
        return 1, forward
    return -1, backward


def next_hop(src: TorusCoord, dst: TorusCoord, dims: Sequence[int]) -> Optional[Hop]:
    for dim in range(3):
        step, count = dim_step(src[dim], dst[dim], dims[dim])
        if count:
            return Hop(dim, step, _step(src, dim, step, dims))
    return None


def torus_route(src: TorusCoord, dst: TorusCoord, dims: Sequence[int]) -> list[Hop]:
    """Dimension-ordered minimal path, X then Y then Z."""
    for dim, (a, b) in enumerate(zip(src, dst)):
        if not (0 <= a < dims[dim] and 0 <= b < dims[dim]):
            raise ValueError(f"coordinate outside torus {tuple(dims)}")
    path = []
    here = TorusCoord(*src)
    for dim in range(3):
        step, count = dim_step(here[dim], dst[dim], dims[dim])
        for _ in range(count):
            here = _step(here, dim, step, dims)
            path.append(Hop(dim, step, here))
    return path


def _torus_links(coord: TorusCoord, dims: Sequence[int]) -> list[Hop]:
    links = []
    for dim in range(3):
        if dims[dim] == 1:
            continue  # a size-1 ring only has a self-loop, which carries no traffic
        for step in (1, -1):
            links.append(Hop(dim, step, _step(coord, dim, step, dims)))
    return links


def build_topology(
    spec: TopologySpec,
    tables: Optional[dict[int, tuple[SourceRoutingTable, DestRoutingTable]]] = None,
) -> Network:
    spec.validate()
    dims = spec.torus_dims
    nodes = {}
    for idx in range(spec.node_count):
        c = coord_of(idx, dims)
        nodes[c] = TorusNode(idx, c, links=_torus_links(c, dims))

    placement = spec.placement
    if placement is None:
        placement = [coord_of(k, dims) for k in range(spec.concentrator_count)]
    elif len(placement) != spec.concentrator_count:
        raise ConfigError(f"placement lists {len(placement)} nodes for {spec.concentrator_count} concentrators")

    fpgas = []
    for conc, where in enumerate(placement):
        coord = TorusCoord(*where)
        node = nodes.get(coord)
        if node is None:
            raise ConfigError(f"concentrator {conc} placed at {tuple(coord)}, outside torus {dims}")
        if node.concentrator is not None:
            raise ConfigError(f"concentrators {node.concentrator} and {conc} share torus node {tuple(coord)}")
        node.concentrator = conc
        wafer = conc // spec.concentrators_per_wafer
        for slot in range(spec.fpgas_per_concentrator):
            fid = len(fpgas)
            fpgas.append(Fpga(fid, fid, wafer, conc, slot, coord))
            node.fpgas.append(fid)

    for node in nodes.values():
        if node.degree > spec.nic_links:
            raise ConfigError(
                f"degree violation: node {tuple(node.coord)} uses {node.degree} links, NIC has {spec.nic_links}"
            )

    net = Network(spec, nodes, fpgas)
    for fid, (src, dst) in (tables or {}).items():
        net.install_tables(fid, src, dst)
    if tables:
        net.check_consistency()
    return net


def iter_links(net: Network) -> Iterable[tuple[str, float, int]]:
    """(name, words per cycle, latency) for every directed link."""
    spec = net.spec
    for f in net.fpgas:
        yield f"fpga{f.fpga_id}.up", spec.fpga_words_per_cycle, 0
        yield f"fpga{f.fpga_id}.down", spec.fpga_words_per_cycle, 0
    for coord, node in sorted(net.nodes.items()):
        for hop in node.links:
            yield link_name(coord, hop), spec.torus_words_per_cycle, spec.hop_latency


def link_name(coord: TorusCoord, hop: Hop) -> str:
    sign = "+" if hop.step > 0 else "-"
    return f"node{coord.x}.{coord.y}.{coord.z}{sign}{'xyz'[hop.dim]}"
