"""Command-line entry point.

Exit codes: 0 success, 1 user or configuration error, 2 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import ExitStack
from typing import Optional, Sequence

from .errors import ConfigError, InvariantError
from .event_model import WireEvent
from .packetizer import CodecError, decode_packet, encode_packet
from .routing import TableError, dangling_entries, load_tables

EXIT_OK, EXIT_USER, EXIT_BUG = 0, 1, 2


def _read(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


def cmd_run(args) -> int:
    from .simnet import Simulation, build_topology, load_scenario

    sc = load_scenario(args.scenario)
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError("--seed must be an unsigned 64-bit value")
        sc.seed = sc.traffic.seed = args.seed
    if args.until is not None:
        if args.until < 0:
            raise ConfigError("--until must be non-negative")
        sc.until = args.until
    net = build_topology(sc.topology, sc.tables)
    with ExitStack() as stack:
        log = None
        if sc.delivery_log:
            try:
                log = stack.enter_context(open(sc.delivery_log, "w"))
            except OSError as exc:
                raise ConfigError(f"cannot write delivery log {sc.delivery_log}: {exc.strerror}") from None
        stats = Simulation(net, sc.traffic, sc.config, delivery_log=log).run(sc.until)
    text = stats.to_csv() if args.format == "csv" else stats.to_json()
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {args.out}: {exc.strerror}") from None
        print(stats.summary())
    else:
        sys.stdout.write(text)
        print(stats.summary(), file=sys.stderr)
    return EXIT_OK


def cmd_validate_tables(args) -> int:
    src, _ = _load_table_file(args.src)
    dst_by_node = {}
    for entry in args.dst:
        addr, sep, path = entry.partition("=")
        if not sep:
            raise ConfigError(f"--dst expects ADDR=PATH, got {entry!r}")
        try:
            address = int(addr, 0)
        except ValueError:
            raise ConfigError(f"bad destination address {addr!r}") from None
        if address in dst_by_node:
            raise ConfigError(f"destination {address:#06x} given twice")
        dst_by_node[address] = _load_table_file(path)[1]
    missing = dangling_entries(src, dst_by_node)
    for key, dest, guid in missing:
        print(f"dangling link={key.hicann_link} pulse={key.pulse_address:#05x} dest={dest:#06x} guid={guid:#07x}")
    if missing:
        print(f"{len(missing)} dangling entr{'y' if len(missing) == 1 else 'ies'}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


def _load_table_file(path: str):
    return load_tables(_read(path), path)


def _int(token: str, what: str) -> int:
    try:
        return int(token, 0)
    except ValueError:
        raise ConfigError(f"bad {what} {token!r}") from None


def parse_listing(text: str):
    """Read ``dest``/``source`` header lines and ``<guid> <timestamp>`` event lines."""
    header = {}
    events = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] in ("dest", "source", "count", "type") and len(parts) == 2:
            header[parts[0]] = _int(parts[1], parts[0])
            continue
        if len(parts) != 2:
            raise ConfigError(f"line {lineno}: expected '<guid> <timestamp>'")
        try:
            events.append(WireEvent(_int(parts[0], "guid"), _int(parts[1], "timestamp")))
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return header, events


def format_listing(header, events) -> str:
    lines = [
        f"dest {header.dest:#06x}",
        f"source {header.source:#06x}",
        f"count {header.event_count}",
        f"type {header.msg_type}",
    ]
    lines += [f"{ev.guid:#07x} {ev.timestamp}" for ev in events]
    return "\n".join(lines) + "\n"


def cmd_packet_encode(args) -> int:
    text = _read(args.events) if args.events and args.events != "-" else sys.stdin.read()
    header, events = parse_listing(text)
    dest = args.dest if args.dest is not None else header.get("dest")
    source = args.source if args.source is not None else header.get("source", 0)
    if dest is None:
        raise ConfigError("no destination: pass --dest or a 'dest' line")
    try:
        data = encode_packet(dest, source, events)
    except ValueError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    print(data.hex())
    return EXIT_OK


def cmd_packet_decode(args) -> int:
    text = args.hex if args.hex not in (None, "-") else sys.stdin.read()
    try:
        data = bytes.fromhex("".join(text.split()))
    except ValueError:
        raise ConfigError("input is not valid hex") from None
    try:
        header, events = decode_packet(data)
    except CodecError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from None
    sys.stdout.write(format_listing(header, events))
    return EXIT_OK


def cmd_show_topology(args) -> int:
    from .simnet import build_topology, load_scenario

    sc = load_scenario(args.scenario)
    net = build_topology(sc.topology, sc.tables)
    spec = net.spec
    print(f"torus {'x'.join(map(str, spec.torus_dims))}: {len(net.nodes)} nodes, {len(net.fpgas)} FPGAs")
    print(f"torus link rate {spec.torus_words_per_cycle:.3f} words/cycle, hop latency {spec.hop_latency} cycles")
    for node in sorted(net.nodes.values(), key=lambda n: n.address):
        coord = node.coord
        fpgas = ",".join(str(f) for f in node.fpgas) or "-"
        conc = "-" if node.concentrator is None else node.concentrator
        print(f"node {node.address:#06x} at {tuple(coord)} concentrator={conc} degree={node.degree} fpgas={fpgas}")
    if net.consistency_violations:
        print(f"{len(net.consistency_violations)} routing-table inconsistencies")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikecomm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and emit statistics")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--until", type=lambda s: int(s, 0))
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-tables", help="check that source entries resolve at their destinations")
    p.add_argument("src")
    p.add_argument("--dst", action="append", default=[], metavar="ADDR=PATH")
    p.set_defaults(func=cmd_validate_tables)

    p = sub.add_parser("packet-encode", help="encode '<guid> <timestamp>' lines into packet hex")
    p.add_argument("--dest", type=lambda s: int(s, 0))
    p.add_argument("--source", type=lambda s: int(s, 0))
    p.add_argument("--events", help="event listing file, '-' for stdin")
    p.set_defaults(func=cmd_packet_encode)

    p = sub.add_parser("packet-decode", help="decode packet hex into a listing")
    p.add_argument("hex", nargs="?")
    p.set_defaults(func=cmd_packet_decode)

    p = sub.add_parser("show-topology", help="print the network built from a scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_show_topology)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TableError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_BUG


if __name__ == "__main__":
    sys.exit(main())
