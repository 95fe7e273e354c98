import random

import pytest

from ring_oracle import random_ring_schedule
from spikecomm.errors import InvariantError
from spikecomm.hostcomm import HostSink, NotificationKind, OverCredit, PayloadTooLarge, RingChannel


def test_first_put():
    ch = RingChannel(64)
    assert ch.producer_put(bytes(range(16)), 0)
    assert (ch.space, ch.write_ptr) == (48, 16)
    (note,) = ch.to_host
    assert note.kind is NotificationKind.DATA_WRITTEN and note.amount == 16


def test_stall_leaves_state_unchanged():
    ch = RingChannel(64)
    ch.producer_put(bytes(56), 0)
    assert ch.space == 8
    snapshot = (ch.write_ptr, ch.space, len(ch.to_host), bytes(ch.memory))
    assert not ch.producer_put(bytes(16), 1)
    assert (ch.write_ptr, ch.space, len(ch.to_host), bytes(ch.memory)) == snapshot
    assert ch.stalls == 1


def test_write_wraps_around():
    ch = RingChannel(64)
    ch.producer_put(bytes(56), 0)
    ch.receive_credits(0)
    ch.consumer_poll(0)
    ch.consumer_credit(56, 0)
    payload = bytes(range(100, 116))
    assert ch.producer_put(payload, 0)
    assert ch.write_ptr == 8
    assert bytes(ch.memory[56:64]) == payload[:8]
    assert bytes(ch.memory[0:8]) == payload[8:]
    assert ch.consumer_poll(0) == payload


def test_too_large():
    with pytest.raises(PayloadTooLarge):
        RingChannel(64).producer_put(bytes(65), 0)


def test_notification_latency():
    ch = RingChannel(64, notification_latency=10)
    ch.producer_put(b"x" * 16, 0)
    assert ch.consumer_poll(5) == b""
    assert ch.consumer_poll(10) == b"x" * 16


def test_credit_restores_space_after_latency():
    ch = RingChannel(64, notification_latency=10)
    ch.producer_put(bytes(16), 0)
    ch.consumer_poll(10)
    ch.consumer_credit(16, 10)
    ch.receive_credits(19)
    assert ch.space == 48
    ch.receive_credits(20)
    assert ch.space == 64


def test_over_credit():
    ch = RingChannel(64)
    ch.producer_put(bytes(8), 0)
    ch.consumer_poll(0)
    with pytest.raises(OverCredit):
        ch.consumer_credit(16, 0)


def test_split_credits():
    ch = RingChannel(64, notification_latency=3)
    ch.producer_put(bytes(16), 0)
    ch.consumer_poll(3)
    ch.consumer_credit(10, 3)
    ch.consumer_credit(6, 4)
    assert ch.in_flight_credit == 16
    ch.receive_credits(7)
    assert ch.space == 64


def test_put_needs_no_consumer_round_trip():
    ch = RingChannel(256, notification_latency=1000)
    for i in range(16):
        assert ch.producer_put(bytes(16), i)
    assert ch.space == 0


def test_batched_notifications():
    ch = RingChannel(256, notify_batch=3)
    ch.producer_put(bytes(4), 0)
    ch.producer_put(bytes(4), 0)
    assert not ch.to_host
    ch.producer_put(bytes(4), 0)
    assert [n.amount for n in ch.to_host] == [12]
    ch.producer_put(bytes(4), 1)
    ch.flush_notifications(1)
    assert [n.amount for n in ch.to_host] == [12, 4]


def test_bad_construction():
    for kwargs in ({"size": 48}, {"notification_latency": -1}, {"notify_batch": 0}):
        with pytest.raises(ValueError):
            RingChannel(**kwargs)


def test_invariant_check_catches_tampering():
    ch = RingChannel(64)
    ch.producer_put(bytes(16), 0)
    ch.space += 1
    with pytest.raises(InvariantError):
        ch.check_invariants()


@pytest.mark.parametrize("seed", range(200))
def test_random_schedules(seed):
    random_ring_schedule(random.Random(seed))


def test_host_sink_rate_limit():
    sink = HostSink(32)
    assert sink.accept(16, 0) and sink.accept(16, 0)
    assert not sink.accept(1, 0)
    assert sink.accept(32, 1)
    assert sink.consumed == 64
    with pytest.raises(ValueError):
        HostSink(0)
