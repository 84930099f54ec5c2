"""Deterministic discrete-event network with an adversarial scheduler.

All nodes live on one event loop; a handler runs to completion before the
next event is popped.  Ties are broken by (time, seq, src, dst) where seq is
a global send counter, so one seed fixes the whole run.
"""
import hashlib
import heapq
import math
import random
import struct
from dataclasses import dataclass, field

from ..messages import CONSENSUS_TAGS, encode_msg


@dataclass(frozen=True)
class Envelope:
    src: int
    dst: int
    type_tag: int
    payload: bytes
    seq: int


class UniformDelay:
    def __init__(self, lo, hi):
        if not 0 <= lo <= hi or not math.isfinite(hi):
            raise ValueError("need 0 <= lo <= hi < inf")
        self.lo, self.hi = lo, hi

    def sample(self, rng, src, dst, nbytes, now):
        return rng.uniform(self.lo, self.hi)

    def __repr__(self):
        return f"uniform:{self.lo},{self.hi}"


class LogNormalDelay:
    def __init__(self, mu, sigma, cap=3600.0):
        self.mu, self.sigma, self.cap = mu, sigma, cap

    def sample(self, rng, src, dst, nbytes, now):
        return min(rng.lognormvariate(self.mu, self.sigma), self.cap)

    def __repr__(self):
        return f"lognormal:{self.mu},{self.sigma}"


class BandwidthDelay:
    """Each node owns an uplink of ``w`` bytes/s; a message waits for the
    uplink, takes bytes/w to serialize, then ``tau`` (plus optional uniform
    jitter) to propagate.

    With ``lanes`` the uplink is split into independent broadcast and
    agreement queues, each at full rate ``w``.
    """

    def __init__(self, w, tau, jitter=0.0, lanes=False):
        if w <= 0 or tau < 0:
            raise ValueError("w must be positive and tau non-negative")
        self.w, self.tau, self.jitter, self.lanes = w, tau, jitter, lanes
        self._free = {}

    def sample(self, rng, src, dst, nbytes, now, tag=0):
        lane = (src, self.lanes and tag in CONSENSUS_TAGS)
        start = max(now, self._free.get(lane, 0.0))
        done = start + nbytes / self.w
        self._free[lane] = done
        extra = rng.uniform(0, self.jitter) if self.jitter else 0.0
        return done - now + self.tau + extra

    def __repr__(self):
        return f"bandwidth:{self.w},{self.tau},{self.jitter},{int(self.lanes)}"


@dataclass
class AdversaryPolicy:
    """Scheduler-side adversary: slows victims, agreement traffic or
    everything except a set of fast nodes; all factors stay finite."""
    victims: tuple = ()
    D: float = 1.0
    incoming: bool = False
    consensus_factor: float = 1.0
    fast: tuple = ()
    fast_factor: float = 1.0
    reorder: bool = True

    def __post_init__(self):
        for x in (self.D, self.consensus_factor, self.fast_factor):
            if not (0 < x < math.inf):
                raise ValueError("delay factors must be positive and finite")

    def factor(self, src, dst, tag):
        k = 1.0
        if (dst if self.incoming else src) in self.victims:
            k *= self.D
        if tag in CONSENSUS_TAGS:
            k *= self.consensus_factor
        if src in self.fast:
            k *= self.fast_factor
        return k


class Quiescent(Exception):
    pass


@dataclass
class Simulator:
    delay: object
    adversary: AdversaryPolicy = field(default_factory=AdversaryPolicy)
    seed: int = 0
    keep_trace: bool = False

    def __post_init__(self):
        self.rng = random.Random(self.seed)
        self.nodes = {}
        self.time = 0.0
        self._queue = []
        self._seq = 0
        self._pair_seq = {}
        self._fifo = {}
        self._hash = hashlib.sha256(struct.pack(">Q", self.seed))
        self.trace = [] if self.keep_trace else None
        self.sent = 0
        self.delivered = 0
        self.bytes_sent = 0
        self.bytes_by_tag = {}

    def add(self, node):
        self.nodes[node.me] = node

    def now(self):
        return self.time

    # -- sending --------------------------------------------------------
    def send(self, src, dst, msg):
        tag, payload = encode_msg(msg)
        self._schedule(src, dst, tag, payload, msg)

    def multicast(self, src, msg):
        tag, payload = encode_msg(msg)
        for dst in sorted(self.nodes):
            self._schedule(src, dst, tag, payload, msg)

    def _schedule(self, src, dst, tag, payload, msg):
        pair = (src, dst)
        pseq = self._pair_seq.get(pair, 0)
        self._pair_seq[pair] = pseq + 1
        env = Envelope(src, dst, tag, payload, pseq)
        if src == dst:
            at = self.time
        else:
            if isinstance(self.delay, BandwidthDelay):
                base = self.delay.sample(self.rng, src, dst, len(payload) + 5, self.time, tag)
            else:
                base = self.delay.sample(self.rng, src, dst, len(payload) + 5, self.time)
            at = self.time + base * self.adversary.factor(src, dst, tag)
            if not self.adversary.reorder:
                at = max(at, self._fifo.get(pair, 0.0))
                self._fifo[pair] = at
            self.bytes_sent += len(payload) + 5
            self.bytes_by_tag[tag] = self.bytes_by_tag.get(tag, 0) + len(payload) + 5
        self._seq += 1
        self.sent += 1
        heapq.heappush(self._queue, (at, self._seq, src, dst, env, msg))

    # -- running --------------------------------------------------------
    def start(self):
        for j in sorted(self.nodes):
            self.nodes[j].start()

    def step(self):
        if not self._queue:
            raise Quiescent()
        at, seq, src, dst, env, msg = heapq.heappop(self._queue)
        self.time = at
        self.delivered += 1
        self._hash.update(struct.pack(">dQQQBQ", at, seq, src, dst, env.type_tag, len(env.payload)))
        self._hash.update(env.payload)
        if self.trace is not None:
            self.trace.append((at, env))
        node = self.nodes.get(dst)
        if node is not None:
            node.deliver(src, msg)
        return at, env

    def run(self, until=None, max_time=math.inf, max_events=None):
        """Step until ``until()`` holds, time passes ``max_time``, the event
        budget runs out or the queue drains.  Returns the stop reason."""
        events = 0
        while True:
            if until is not None and until():
                return "done"
            if not self._queue:
                return "quiescent"
            if self._queue[0][0] > max_time:
                return "time"
            if max_events is not None and events >= max_events:
                return "events"
            self.step()
            events += 1

    def trace_digest(self) -> str:
        return self._hash.hexdigest()
