import math
import os
import random
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from reference_manager import ReferenceManager  # noqa: E402

from spikecomm.aggregation import BucketManager  # noqa: E402
from spikecomm.event_model import TIMESTAMP_MODULUS, RoutedEvent, deadline_exceeded  # noqa: E402
from spikecomm.routing import DestRoutingTable, SourceKey, SourceRoutingTable  # noqa: E402
from spikecomm.simnet import TopologySpec, build_topology  # noqa: E402

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def random_trace(rng, max_events=1000, max_dests=16):
    """Ops for a bucket manager: ('submit', dest, guid, ts), ('tick',), ('external', dest).

    The clock starts a little before a 15-bit wrap so deadlines straddle it.
    """
    n_events = rng.randint(1, max_events)
    dests = rng.sample(range(1 << 16), rng.randint(1, max_dests))
    start = rng.randrange(1, 4) * TIMESTAMP_MODULUS - rng.randint(0, 600)
    slack = rng.choice([0, 3, 40, 300])
    ops = []
    now = start
    sent = 0
    while sent < n_events:
        for _ in range(rng.choice([0, 1, 1, 2, 3])):
            if sent == n_events:
                break
            ops.append(("submit", now, rng.choice(dests), rng.randrange(1 << 17), (now + rng.randint(0, slack)) % TIMESTAMP_MODULUS))
            sent += 1
        if rng.random() < 0.03:
            ops.append(("external", now, rng.choice(dests)))
        ops.append(("tick", now))
        now += 1
    # let every deadline expire and every drain finish
    for _ in range(slack + 200):
        ops.append(("tick", now))
        now += 1
    return ops


def run_primary(ops, pool_size, capacity, drain_rate, check=True):
    mgr = BucketManager(pool_size, capacity, drain_rate)
    out = []
    uid = 0
    for op in ops:
        kind, now = op[0], op[1]
        if kind == "submit":
            recs = mgr.submit(RoutedEvent(op[2], op[3], op[4], uid), now)
            uid += 1
        elif kind == "tick":
            recs = mgr.tick(now)
        else:
            rec = mgr.external_flush(op[2], now)
            recs = [rec] if rec else []
        for r in recs:
            out.append((r.dest, tuple((e.guid, e.timestamp) for e in r.events), r.trigger.value, r.flush_cycle, r.uids))
        if check:
            mgr.check_invariants()
    return out, mgr


def run_reference(ops, pool_size, capacity, drain_rate):
    ref = ReferenceManager(pool_size, capacity, drain_rate)
    uid = 0
    for op in ops:
        kind, now = op[0], op[1]
        if kind == "submit":
            ref.submit(op[2], op[3], op[4], uid, now)
            uid += 1
        elif kind == "tick":
            ref.tick(now)
        else:
            ref.external_flush(op[2], now)
    return ref.out, ref


def liveness_violations(ops, records, slack_ticks=0):
    """Events flushed later than the first tick at which their deadline is exceeded.

    ``slack_ticks`` extra ticks are tolerated (drain in progress).
    """
    flushed_at = {}
    for rec in records:
        for u in rec[4]:
            flushed_at[u] = rec[3]
    pending = {}
    uid = 0
    late = []
    for op in ops:
        if op[0] == "submit":
            pending[uid] = op[4]
            uid += 1
        elif op[0] == "tick":
            now = op[1]
            for u, dl in list(pending.items()):
                if deadline_exceeded(dl, now % TIMESTAMP_MODULUS):
                    limit = now + slack_ticks
                    if u not in flushed_at or flushed_at[u] > limit:
                        late.append(u)
                    del pending[u]
    return late


def drain_slack(capacity, drain_rate):
    return 0 if drain_rate is None else math.ceil(capacity / drain_rate)


@pytest.fixture
def rng():
    return random.Random(1234)


def pair_topology(same_node=True):
    """Two FPGAs, either on one concentrator or on two neighbouring torus nodes."""
    if same_node:
        return TopologySpec(
            torus_dims=(1, 1, 1), wafers=1, fpgas_per_wafer=2, concentrators_per_wafer=1, fpgas_per_concentrator=2
        )
    return TopologySpec(
        torus_dims=(2, 1, 1), wafers=1, fpgas_per_wafer=2, concentrators_per_wafer=2, fpgas_per_concentrator=1
    )


def pair_network(same_node=True, mask=0b1, entries=1):
    """FPGA 0 sends to FPGA 1 (address 1) through ``entries`` source keys."""
    src = {SourceKey(k % 8, k // 8): (1, 100 + k) for k in range(entries)}
    dst = {100 + k: mask for k in range(entries)}
    tables = {0: (SourceRoutingTable(src), DestRoutingTable()), 1: (SourceRoutingTable(), DestRoutingTable(dst))}
    return build_topology(pair_topology(same_node), tables)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
