"""Wire framing: 4-byte big-endian payload length, 1-byte type tag, payload.

Tags 0xFE (ACK) and 0xFF (HELLO) are transport control frames and never
reach a node.
"""
import struct
from collections import deque

HEADER = struct.Struct(">IB")
MAX_PAYLOAD = (1 << 32) - 1
ACK = 0xFE
HELLO = 0xFF


class FrameError(ValueError):
    pass


def frame(type_tag: int, payload: bytes) -> bytes:
    if not 0 <= type_tag <= 0xFF:
        raise FrameError("type tag must fit one byte")
    if len(payload) > MAX_PAYLOAD:
        raise FrameError("payload too large")
    return HEADER.pack(len(payload), type_tag) + payload


def unframe(buf: bytes):
    """Split one frame off the front of ``buf``.

    Returns ``(type_tag, payload, rest)`` or ``None`` when more bytes are
    needed.
    """
    if len(buf) < HEADER.size:
        return None
    size, tag = HEADER.unpack_from(buf)
    end = HEADER.size + size
    if len(buf) < end:
        return None
    return tag, bytes(buf[HEADER.size:end]), buf[end:]


async def read_frame(reader, limit=64 << 20):
    head = await reader.readexactly(HEADER.size)
    size, tag = HEADER.unpack(head)
    if size > limit:
        raise FrameError(f"frame of {size} bytes exceeds limit")
    return tag, await reader.readexactly(size)


class OutBuffer:
    """Bounded queue of not-yet-written frames.

    When full, the oldest frame judged stale by ``is_stale`` is evicted
    first; only if none is stale does the oldest frame go.
    """

    def __init__(self, cap, is_stale=lambda item: False):
        if cap < 1:
            raise ValueError("cap must be positive")
        self.cap = cap
        self.is_stale = is_stale
        self.items = deque()
        self.evicted = 0

    def __len__(self):
        return len(self.items)

    def push(self, item):
        if len(self.items) >= self.cap:
            for i, old in enumerate(self.items):
                if self.is_stale(old):
                    del self.items[i]
                    break
            else:
                self.items.popleft()
            self.evicted += 1
        self.items.append(item)

    def pop(self):
        return self.items.popleft()
