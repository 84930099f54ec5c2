import asyncio

import pytest
from hypothesis import given, strategies as st

from dumbo_ng.crypto import keygen
from dumbo_ng.engine import Node
from dumbo_ng.harness.verify import verify_logs
from dumbo_ng.harness.runner import _free_ports
from dumbo_ng.net.framing import ACK, HELLO, FrameError, OutBuffer, frame, read_frame, unframe
from dumbo_ng.net.tcp import OutItem, TcpNet
from dumbo_ng.types import ProtocolConfig


@given(st.integers(0, 0xFD), st.binary(max_size=300), st.binary(max_size=20))
def test_frame_round_trip(tag, payload, tail):
    got = unframe(frame(tag, payload) + tail)
    assert got == (tag, payload, tail)


def test_frame_layout():
    assert frame(3, b"") == b"\x00\x00\x00\x00\x03"
    assert frame(1, b"ab") == b"\x00\x00\x00\x02\x01ab"
    assert unframe(b"\x00\x00\x00\x02\x01a") is None
    assert unframe(b"\x00\x00") is None
    with pytest.raises(FrameError):
        frame(256, b"")
    assert {ACK, HELLO} == {0xFE, 0xFF}


def test_read_frame_limit():
    async def go(limit):
        r = asyncio.StreamReader()
        r.feed_data(frame(5, b"x" * 10))
        r.feed_eof()
        return await read_frame(r, limit)
    assert asyncio.run(go(100)) == (5, b"x" * 10)
    with pytest.raises(FrameError):
        asyncio.run(go(9))


def test_outbuffer_evicts_stale_first():
    buf = OutBuffer(3, is_stale=lambda it: it[1] < 5)
    for item in [("a", 7), ("b", 2), ("c", 9)]:
        buf.push(item)
    buf.push(("d", 9))
    assert list(buf.items) == [("a", 7), ("c", 9), ("d", 9)]
    buf.push(("e", 9))
    assert list(buf.items) == [("c", 9), ("d", 9), ("e", 9)]
    assert buf.evicted == 2 and buf.pop() == ("c", 9)
    with pytest.raises(ValueError):
        OutBuffer(0)


def test_four_nodes_over_loopback():
    cfg = ProtocolConfig(4, 1, 2, 32)
    ports = _free_ports(4)
    addrs = {j: ("127.0.0.1", ports[j - 1]) for j in cfg.nodes()}
    keys = keygen(cfg, 9)
    nets = [TcpNet(k.node, addrs, jitter=(0.0, 0.002), seed=9) for k in keys]
    nodes = [Node(cfg, k, net) for k, net in zip(keys, nets)]

    async def go():
        done = lambda: all(x.epoch > 5 for x in nodes)
        await asyncio.wait_for(asyncio.gather(*(net.run(x, done) for net, x in zip(nets, nodes))), 60)

    asyncio.run(go())
    assert not verify_logs([x.log for x in nodes])
    assert all(net.malformed == 0 for net in nets)


def test_stale_frames_go_first():
    class Stub:
        epoch = 4
    net = TcpNet(1, {1: ("h", 1), 2: ("h", 2)}, buffer_cap=2)
    net.node = Stub()
    from dumbo_ng.net.tcp import _Peer

    async def go():
        p = _Peer(net, 2, ("h", 2))
        for e in (5, 3, 6):
            p.push(OutItem(1, b"", e))
        return [it.epoch for it in p.pending.items]
    assert asyncio.run(go()) == [5, 6]
