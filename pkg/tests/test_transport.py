import socket
import threading
import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from secfb.clock import VirtualClock
from secfb.transport.channels import ChannelFault, ChannelId, SubscriptionError
from secfb.transport.frame import MsgType, WireFrame
from secfb.transport.loopback import LatencyModel, loopback_network
from secfb.transport.multicast import MulticastTransport

CH = "239.0.0.1:61000"


def frame(seq=0):
    return WireFrame(MsgType.DATA, 1, 1, 0, seq, bytes(16))


def run(clock, until):
    while (due := clock.next_due()) is not None and due <= until:
        clock.advance_to(due)
        clock.fire_due()
    clock.advance_to(max(until, clock.now()))


def recorder(clock, log, name="rx"):
    def handler(f):
        log.append((clock.now(), name, f.seq))
        return True

    return handler


def test_channel_id():
    cid = ChannelId.parse(" 239.1.2.3:6000 ")
    assert (cid.group, cid.port, str(cid)) == ("239.1.2.3", 6000, "239.1.2.3:6000")
    for bad in ["10.0.0.1:6000", "239.0.0.1:80", "239.0.0.1", "239.0.0.1:x"]:
        with pytest.raises(ValueError):
            ChannelId.parse(bad)


def test_latency_model():
    m = LatencyModel(3.0, {("A", "B"): 7.0})
    assert (m.base("A", "A"), m.base("A", "B"), m.base("B", "A")) == (0.0, 7.0, 3.0)
    with pytest.raises(ValueError):
        LatencyModel(-1.0)


def test_delay_and_zero_delay_is_deferred():
    clock = VirtualClock()
    fabric = loopback_network(3.0, clock)
    a, b = fabric.attach("A"), fabric.attach("B")
    log = []
    b.subscribe(CH, recorder(clock, log, "B"), "rx")
    a.subscribe(CH, recorder(clock, log, "A"), "rx")
    a.publish(CH, frame(1))
    assert log == []  # nothing is delivered inside the publishing step
    run(clock, 10)
    assert log == [(0.0, "A", 1), (3.0, "B", 1)]
    assert fabric.stats(CH).as_dict() == {"sent": 1, "received": 2, "dropped": 0, "decode_errors": 0}


def test_subscription_resolved_on_arrival():
    clock = VirtualClock()
    fabric = loopback_network(5.0, clock)
    a, b = fabric.attach("A"), fabric.attach("B")
    log = []
    a.publish(CH, frame(1))
    run(clock, 2)
    b.subscribe(CH, recorder(clock, log), "late")
    run(clock, 10)
    assert log == [(5.0, "rx", 1)]


@given(st.lists(st.floats(0, 50), min_size=1, max_size=30), st.integers(0, 100))
def test_jitter_never_reorders(gaps, seed):
    clock = VirtualClock()
    fabric = loopback_network(2.0, clock, jitter_ms=10.0, seed=seed)
    a, b = fabric.attach("A"), fabric.attach("B")
    log = []
    b.subscribe(CH, recorder(clock, log), "rx")
    t = 0.0
    for i, gap in enumerate(gaps):
        t += gap
        clock.call_at(t, lambda i=i: a.publish(CH, frame(i)))
    run(clock, t + 100)
    assert [s for _, _, s in log] == list(range(len(gaps)))
    assert all(t1 <= t2 for (t1, _, _), (t2, _, _) in zip(log, log[1:]))


def test_jitter_is_seeded():
    def arrivals(seed):
        clock = VirtualClock()
        fabric = loopback_network(1.0, clock, jitter_ms=4.0, seed=seed)
        a, b = fabric.attach("A"), fabric.attach("B")
        log = []
        b.subscribe(CH, recorder(clock, log), "rx")
        for i in range(10):
            clock.call_at(10 * i, lambda i=i: a.publish(CH, frame(i)))
        run(clock, 200)
        return log

    assert arrivals(1) == arrivals(1)
    assert arrivals(1) != arrivals(2)


def test_closed_channel_and_duplicate_subscription():
    clock = VirtualClock()
    fabric = loopback_network(0.0, clock)
    a = fabric.attach("A")
    a.subscribe(CH, lambda f: True, "x")
    with pytest.raises(SubscriptionError):
        a.subscribe(CH, lambda f: True, "x")
    fabric.close(CH)
    with pytest.raises(ChannelFault):
        a.publish(CH, frame())
    fabric.reopen(CH)
    a.publish(CH, frame())


def test_unsubscribe_and_drop_accounting():
    clock = VirtualClock()
    fabric = loopback_network(0.0, clock)
    a = fabric.attach("A")
    handle = a.subscribe(CH, lambda f: False, "x")
    a.publish(CH, frame())
    run(clock, 1)
    a.unsubscribe(handle)
    a.publish(CH, frame())
    run(clock, 2)
    assert fabric.stats(CH).as_dict() == {"sent": 2, "received": 0, "dropped": 1, "decode_errors": 0}


def test_garbage_counts_as_decode_error():
    clock = VirtualClock()
    fabric = loopback_network(0.0, clock)
    fabric.attach("A").subscribe(CH, lambda f: True, "x")
    fabric.publish_raw(CH, b"\x00garbage", "A")
    run(clock, 1)
    assert fabric.stats(CH).decode_errors == 1


def _multicast_available() -> bool:
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM, socket.IPPROTO_UDP)
        sock.setsockopt(socket.IPPROTO_IP, socket.IP_ADD_MEMBERSHIP, socket.inet_aton("239.0.0.9") + socket.inet_aton("0.0.0.0"))
        sock.close()
        return True
    except OSError:
        return False


@pytest.mark.skipif(not _multicast_available(), reason="no multicast-capable interface")
def test_multicast_round_trip():
    channel = "239.0.0.9:61990"
    tx, rx = MulticastTransport("A"), MulticastTransport("B")
    got = []
    arrived = threading.Event()

    def handler(f):
        got.append(f)
        arrived.set()
        return True

    try:
        rx.subscribe(channel, handler, "rx")
        with pytest.raises(SubscriptionError):
            rx.subscribe(channel, handler, "rx")
        deadline = time.time() + 3
        while not arrived.is_set() and time.time() < deadline:
            tx.publish(channel, frame(7))
            arrived.wait(0.1)
        if not got:
            pytest.skip("multicast loopback delivers nothing on this host")
        assert got[0] == frame(7)
        assert tx.stats(channel).sent >= 1
    finally:
        tx.close()
        rx.close()
    with pytest.raises(ChannelFault):
        tx.publish(channel, frame())
