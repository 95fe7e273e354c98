import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import drain_slack, liveness_violations, random_trace, run_primary, run_reference
from reference_manager import precedes
from spikecomm.aggregation import BucketManager, BucketState, Trigger
from spikecomm.event_model import RoutedEvent


def ev(dest, ts, guid=1, uid=None):
    return RoutedEvent(dest, guid, ts, uid)


def test_first_assignment():
    mgr = BucketManager(pool_size=2)
    assert mgr.submit(ev(5, 100), 0) == []
    assert mgr.map_table == {5: 0}
    assert list(mgr.free_list) == [1]
    assert mgr.buckets[0].fill_counter == 1
    assert mgr.buckets[0].state is BucketState.FILLING


def test_124th_event_fills_the_bucket():
    mgr = BucketManager()
    for i in range(123):
        assert mgr.submit(ev(5, 1000, guid=i), i) == []
    (rec,) = mgr.submit(ev(5, 1000, guid=123), 123)
    assert rec.trigger is Trigger.BUCKET_FULL
    assert rec.dest == 5
    assert len(rec.events) == 124
    assert [e.guid for e in rec.events] == list(range(124))


def test_eviction_takes_most_urgent_bucket():
    mgr = BucketManager(pool_size=2)
    mgr.submit(ev(5, 300), 0)
    mgr.submit(ev(9, 200), 0)
    (rec,) = mgr.submit(ev(7, 400), 1)
    assert rec.trigger is Trigger.EVICTED
    assert rec.dest == 9
    assert mgr.map_table == {5: 0, 7: 1}


def test_eviction_matches_linear_scan_oracle():
    rng = random.Random(11)
    for _ in range(200):
        mgr = BucketManager(pool_size=2, drain_rate=None)
        base = rng.randrange(1 << 15)
        stamps = {}
        for dest in (5, 9):
            stamps[dest] = []
            for _ in range(rng.randint(1, 5)):
                t = (base + rng.randrange(2000)) % (1 << 15)
                stamps[dest].append(t)
                mgr.submit(ev(dest, t), 0)

        def urgency(ts_list):
            best = ts_list[0]
            for t in ts_list[1:]:
                if precedes(t, best):
                    best = t
            return best

        u5, u9 = urgency(stamps[5]), urgency(stamps[9])
        expected = 9 if precedes(u9, u5) else 5
        (rec,) = mgr.submit(ev(7, base), 1)
        assert rec.dest == expected
        assert mgr.map_table[7] == (0 if expected == 5 else 1)


def test_deadline_flush_just_past():
    mgr = BucketManager()
    for _ in range(3):
        mgr.submit(ev(5, 100), 0)
    assert mgr.tick(100) == []
    (rec,) = mgr.tick(101)
    assert rec.trigger is Trigger.DEADLINE_EXCEEDED
    assert len(rec.events) == 3


def test_drain_of_full_bucket_takes_31_ticks():
    mgr = BucketManager()
    for i in range(124):
        mgr.submit(ev(5, 10_000), i)
    b = mgr.buckets[0]
    assert b.state is BucketState.DRAINING and b.drain_counter == 124
    for t in range(30):
        mgr.tick(124 + t)
        assert b.state is BucketState.DRAINING
    mgr.tick(154)
    assert b.state is BucketState.IDLE
    assert 5 not in mgr.map_table
    assert list(mgr.free_list) == list(range(1, 8)) + [0]


def test_external_flush():
    mgr = BucketManager()
    for _ in range(10):
        mgr.submit(ev(5, 500), 0)
    rec = mgr.external_flush(5, 1)
    assert rec.trigger is Trigger.EXTERNAL and len(rec.events) == 10
    assert mgr.external_flush(6, 1) is None


def test_external_flush_during_drain_is_noop():
    mgr = BucketManager()
    for _ in range(10):
        mgr.submit(ev(5, 500), 0)
    mgr.external_flush(5, 0)
    mgr.submit(ev(5, 500, guid=2), 1)
    assert mgr.external_flush(5, 1) is None
    assert mgr.initiate_flush(mgr.buckets[0], Trigger.EXTERNAL, 1) is None
    mgr.tick(1)
    mgr.tick(2)
    mgr.tick(3)
    b = mgr.buckets[0]
    assert b.state is BucketState.FILLING
    (rec,) = mgr.tick(501)
    assert [e.guid for e in rec.events] == [2]
    assert rec.trigger is Trigger.DEADLINE_EXCEEDED


def test_counter_swap_and_concurrent_fill():
    mgr = BucketManager(drain_rate=1)
    for _ in range(10):
        mgr.submit(ev(5, 500), 0)
    b = mgr.buckets[0]
    mgr.external_flush(5, 0)
    assert (b.fill_counter, b.drain_counter) == (0, 10)
    for t in range(3):
        mgr.submit(ev(5, 500), t + 1)
        mgr.tick(t + 1)
        assert b.fill_counter == t + 1
        assert b.drain_counter == 10 - (t + 1)
        assert len(b.slots) == b.fill_counter


def test_capacity_never_exceeded_at_one_event_per_cycle():
    mgr = BucketManager()
    for now in range(5000):
        mgr.submit(ev(5, (now + 10_000) % (1 << 15)), now)
        mgr.tick(now)
        b = mgr.bucket_for(5)
        assert b.fill_counter + b.drain_counter <= 124
    assert mgr.forced_drains == 0


def test_full_bucket_mid_drain_forces_drain():
    mgr = BucketManager(capacity=4, drain_rate=1)
    for _ in range(4):
        mgr.submit(ev(5, 500), 0)
    b = mgr.buckets[0]
    assert b.drain_counter == 4
    recs = []
    for _ in range(5):
        recs += mgr.submit(ev(5, 500), 0)
        mgr.check_invariants()
    # events 1-4 force the first drain and refill the bucket; event 5 hits the second drain
    assert mgr.forced_drains == 2
    assert [r.trigger for r in recs] == [Trigger.BUCKET_FULL]


def test_arbiter():
    mgr = BucketManager(pool_size=3)
    mgr.submit(ev(1, 200), 0)
    mgr.submit(ev(2, 150), 0)
    assert mgr.arbiter_select() == 1
    mgr.submit(ev(3, 150), 0)
    assert mgr.arbiter_select() == 1  # tie goes to the lower index
    mgr2 = BucketManager(pool_size=3)
    mgr2.submit(ev(1, 150), 0)
    mgr2.submit(ev(2, 300), 0)
    mgr2.submit(ev(3, 150), 0)
    assert mgr2.arbiter_select() == 0


def test_arbiter_without_candidates():
    with pytest.raises(LookupError):
        BucketManager().arbiter_select()


def test_arbiter_across_wrap_matches_scan():
    rng = random.Random(5)
    for _ in range(300):
        mgr = BucketManager(pool_size=8)
        base = (1 << 15) - rng.randrange(100)
        urg = []
        for dest in range(8):
            t = (base + rng.randrange(200)) % (1 << 15)
            urg.append(t)
            mgr.submit(ev(dest, t), 0)
        best = 0
        for i in range(1, 8):
            if precedes(urg[i], urg[best]):
                best = i
        assert mgr.arbiter_select() == best


def test_all_draining_eviction():
    mgr = BucketManager(pool_size=1, capacity=1)
    (r1,) = mgr.submit(ev(5, 10), 0)
    assert mgr.buckets[0].state is BucketState.DRAINING
    (r2,) = mgr.submit(ev(7, 10), 0)
    # the draining victim had an empty filling half, so only dest 7's own full flush appears
    assert (r1.dest, r2.dest) == (5, 7)
    assert r2.trigger is Trigger.BUCKET_FULL
    assert mgr.map_table == {7: 0}
    mgr.check_invariants()


def test_flush_all_sweeps_every_filling_bucket():
    mgr = BucketManager(pool_size=4)
    for d in range(3):
        mgr.submit(ev(d, 100), 0)
    recs = mgr.flush_all(0)
    assert [r.dest for r in recs] == [0, 1, 2]
    assert all(r.trigger is Trigger.EXTERNAL for r in recs)


@pytest.mark.parametrize("seed", range(20))
def test_oracle_equivalence_small(seed):
    rng = random.Random(seed)
    ops = random_trace(rng, max_events=300)
    pool, cap, rate = rng.choice([1, 2, 4]), rng.choice([1, 3, 8, 124]), rng.choice([None, 1, 4])
    got, _ = run_primary(ops, pool, cap, rate)
    want, _ = run_reference(ops, pool, cap, rate)
    assert got == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([1, 2, 4]), st.sampled_from([1, 5, 124]), st.sampled_from([None, 4]))
def test_conservation_and_order(seed, pool, cap, rate):
    rng = random.Random(seed)
    ops = random_trace(rng, max_events=200)
    records, mgr = run_primary(ops, pool, cap, rate)
    flushed = [u for r in records for u in r[4]]
    buffered = [u for _, _, uids in mgr.pending() for u in uids]
    submitted = sum(op[0] == "submit" for op in ops)
    assert sorted(flushed + buffered) == list(range(submitted))
    # per destination, uids come out in submission order
    per_dest = {}
    for r in records:
        per_dest.setdefault(r[0], []).extend(r[4])
        assert 1 <= len(r[1]) <= cap
    for uids in per_dest.values():
        assert uids == sorted(uids)
    # the tail of every trace lets all deadlines pass
    assert buffered == []


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([1, 2, 4]), st.sampled_from([1, 5, 124]))
def test_deadline_liveness_instant_drain(seed, pool, cap):
    rng = random.Random(seed)
    ops = random_trace(rng, max_events=200)
    records, _ = run_primary(ops, pool, cap, None)
    assert liveness_violations(ops, records) == []


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([1, 4]))
def test_deadline_liveness_timed_drain_bounded(seed, rate):
    rng = random.Random(seed)
    ops = random_trace(rng, max_events=200)
    records, _ = run_primary(ops, 2, 124, rate)
    assert liveness_violations(ops, records, drain_slack(124, rate)) == []


def test_statistics():
    mgr = BucketManager(capacity=2, drain_rate=None)
    mgr.submit(ev(1, 5), 0)
    mgr.submit(ev(1, 5), 0)
    mgr.submit(ev(2, 5), 0)
    mgr.tick(6)
    assert mgr.flushes == Counter({Trigger.BUCKET_FULL: 1, Trigger.DEADLINE_EXCEEDED: 1})
    assert mgr.occupancy == Counter({2: 1, 1: 1})


def test_bad_parameters():
    with pytest.raises(ValueError):
        BucketManager(pool_size=0)
    with pytest.raises(ValueError):
        BucketManager(capacity=125)
    with pytest.raises(ValueError):
        BucketManager(drain_rate=0)
