"""TCP transport: one process per node, one persistent connection per
ordered pair (data one way, cumulative ACKs the other).

Frames not yet acknowledged are re-sent after a reconnect; the receiver's
HELLO reply says how many frames it already has, so nothing is delivered
twice.
"""
import asyncio
import json
import random
import struct
import time
from collections import deque, namedtuple

from ..codec import MalformedEncoding
from ..messages import encode_msg, decode_msg
from .framing import ACK, HELLO, FrameError, OutBuffer, frame, read_frame

_U64 = struct.Struct(">Q")
OutItem = namedtuple("OutItem", "tag payload epoch")


def load_setup(path):
    with open(path) as fp:
        setup = json.load(fp)
    setup["addresses"] = {int(k): tuple(v) for k, v in setup["addresses"].items()}
    return setup


class _Peer:
    RETRY = 0.1

    def __init__(self, net, dst, addr):
        self.net = net
        self.dst = dst
        self.addr = addr
        self.pending = OutBuffer(net.buffer_cap, self._stale)
        self.unacked = deque()
        self.next_index = 0
        self.wake = asyncio.Event()

    def _stale(self, item):
        node = self.net.node
        return item.epoch is not None and node is not None and item.epoch < node.epoch

    def push(self, item):
        self.pending.push(item)
        self.wake.set()

    def _acked(self, count):
        while self.unacked and self.unacked[0][0] < count:
            self.unacked.popleft()

    async def _read_acks(self, reader):
        while True:
            tag, payload = await read_frame(reader)
            if tag != ACK or len(payload) != 8:
                raise FrameError("expected ACK")
            self._acked(_U64.unpack(payload)[0])

    async def run(self):
        while True:
            acks = writer = None
            try:
                reader, writer = await asyncio.open_connection(*self.addr)
                writer.write(frame(HELLO, _U64.pack(self.net.me)))
                tag, payload = await read_frame(reader)
                if tag != HELLO or len(payload) != 8:
                    raise FrameError("expected HELLO")
                self._acked(_U64.unpack(payload)[0])
                for _, t, p in self.unacked:
                    writer.write(frame(t, p))
                await writer.drain()
                acks = asyncio.ensure_future(self._read_acks(reader))
                while True:
                    while not len(self.pending):
                        self.wake.clear()
                        waiter = asyncio.ensure_future(self.wake.wait())
                        done, _ = await asyncio.wait({waiter, acks}, return_when=asyncio.FIRST_COMPLETED)
                        if acks in done:
                            waiter.cancel()
                            raise ConnectionError("ack stream closed")
                    item = self.pending.pop()
                    if self.net.jitter[1] > 0:
                        await asyncio.sleep(self.net.rng.uniform(*self.net.jitter))
                    self.unacked.append((self.next_index, item.tag, item.payload))
                    self.next_index += 1
                    writer.write(frame(item.tag, item.payload))
                    await writer.drain()
            except (OSError, asyncio.IncompleteReadError, FrameError, ConnectionError):
                pass
            finally:
                if acks is not None:
                    acks.cancel()
                if writer is not None:
                    writer.close()
            await asyncio.sleep(self.RETRY)


class TcpNet:
    """Transport handed to a :class:`~dumbo_ng.engine.Node`."""

    def __init__(self, me, addresses, jitter=(0.0, 0.0), seed=0, t0=None, buffer_cap=1 << 16):
        self.me = me
        self.addresses = addresses
        self.jitter = jitter
        self.rng = random.Random(seed * 1000 + me)
        self.t0 = time.time() if t0 is None else t0
        self.buffer_cap = buffer_cap
        self.node = None
        self.inbox = None
        self.recv_count = {j: 0 for j in addresses}
        self.peers = {}
        self.malformed = 0

    def now(self):
        return time.time() - self.t0

    def send(self, src, dst, msg):
        if dst == self.me:
            self.inbox.put_nowait((self.me, msg))
            return
        tag, payload = encode_msg(msg)
        self.peers[dst].push(OutItem(tag, payload, getattr(msg, "epoch", None)))

    def multicast(self, src, msg):
        tag, payload = encode_msg(msg)
        item = OutItem(tag, payload, getattr(msg, "epoch", None))
        for dst, peer in self.peers.items():
            peer.push(item)
        self.inbox.put_nowait((self.me, msg))

    async def _serve(self, reader, writer):
        try:
            tag, payload = await read_frame(reader)
            if tag != HELLO or len(payload) != 8:
                raise FrameError("expected HELLO")
            src = _U64.unpack(payload)[0]
            if src not in self.recv_count or src == self.me:
                raise FrameError(f"unknown peer {src}")
            writer.write(frame(HELLO, _U64.pack(self.recv_count[src])))
            await writer.drain()
            while True:
                tag, payload = await read_frame(reader)
                try:
                    msg = decode_msg(tag, payload)
                except (MalformedEncoding, KeyError, TypeError, ValueError) as exc:
                    self.malformed += 1
                    raise FrameError("malformed payload") from exc
                self.recv_count[src] += 1
                self.inbox.put_nowait((src, msg))
                writer.write(frame(ACK, _U64.pack(self.recv_count[src])))
                await writer.drain()
        except (OSError, asyncio.IncompleteReadError, FrameError, ConnectionError):
            pass
        finally:
            writer.close()

    async def run(self, node, until=None):
        """Serve ``node`` until ``until()`` holds (forever if None)."""
        self.node = node
        self.inbox = asyncio.Queue()
        host, port = self.addresses[self.me]
        server = await asyncio.start_server(self._serve, host, port)
        tasks = []
        for dst, addr in self.addresses.items():
            if dst != self.me:
                self.peers[dst] = _Peer(self, dst, addr)
                tasks.append(asyncio.ensure_future(self.peers[dst].run()))
        node.start()
        try:
            while until is None or not until():
                try:
                    src, msg = await asyncio.wait_for(self.inbox.get(), 0.5)
                except asyncio.TimeoutError:
                    continue
                node.deliver(src, msg)
        finally:
            for t in tasks:
                t.cancel()
            server.close()
