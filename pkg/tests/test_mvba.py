import random

from dumbo_ng import crypto
from dumbo_ng.messages import DecideCert, Justification, PbAck, PbSend
from dumbo_ng.mvba import MVBA, CertCache, _View, evaluate_Q, pb_tag, skip_tag, verify_decision
from dumbo_ng.net.sim import AdversaryPolicy, LogNormalDelay, Simulator, UniformDelay
from dumbo_ng.types import AggregateSig, CertVector, QuorumCert, digest_value
from support import Ctx, certify, make_batch, setup


def vector(cfg, keys, slots, salt=0):
    entries = []
    for j, s in enumerate(slots, 1):
        entries.append(QuorumCert.genesis(j) if s == 0 else certify(cfg, keys, make_batch(cfg, j, s, salt=salt)))
    return CertVector(tuple(entries))


class Host:
    """Runs one MVBA instance on the simulator."""

    def __init__(self, cfg, keys, net, value, ordered, crash_after=None):
        self.cfg, self.keys, self.registry, self.net = cfg, keys, keys.registry, net
        self.me = keys.node
        self.decision = None
        self.crash_after = crash_after
        self.events = 0
        cache = CertCache(self.registry)
        self.mvba = MVBA(self, 1, ordered, value, self._decide,
                         lambda v: evaluate_Q(ordered, v, self.registry, cfg, cache))

    def _decide(self, dc):
        self.decision = dc

    def send(self, dst, msg):
        self.net.send(self.me, dst, msg)

    def multicast(self, msg):
        self.net.multicast(self.me, msg)

    def start(self):
        if self.crash_after != 0:
            self.mvba.start()

    def deliver(self, src, msg):
        self.events += 1
        if self.crash_after is not None and self.events > self.crash_after:
            return
        self.mvba.handle(src, msg)


def run_instance(n, f, seed, inputs=None, crashed=(), delay=None, policy=None):
    # fresh keys per seed so the elected leaders vary between runs
    cfg, keys = setup(n, f, seed=seed if inputs is None else 0)
    rng = random.Random(seed)
    ordered = (0,) * n
    sim = Simulator(delay or UniformDelay(0.001, 0.1), policy or AdversaryPolicy(), seed=seed)
    hosts = {}
    for k in keys:
        j = k.node
        if inputs is None:
            slots = [rng.randint(1, 3) for _ in range(n)]
            for z in rng.sample(range(n), f):
                slots[z] = 0
            value = vector(cfg, keys, slots, salt=0)
        else:
            value = inputs[j - 1]
        hosts[j] = Host(cfg, k, sim, value, ordered, crash_after=(rng.choice([0, rng.randrange(60)]) if j in crashed else None))
        sim.add(hosts[j])
    sim.start()
    live = [h for j, h in hosts.items() if j not in crashed]
    sim.run(until=lambda: all(h.decision is not None for h in live), max_events=2_000_000)
    return cfg, keys, hosts, live


def test_predicate_examples():
    cfg, keys = setup()
    reg = keys[0].registry
    z = (0, 0, 0, 0)
    assert evaluate_Q(z, vector(cfg, keys, [1, 1, 1, 0]), reg, cfg)
    assert not evaluate_Q(z, vector(cfg, keys, [1, 1, 0, 0]), reg, cfg)
    assert not evaluate_Q((2, 0, 0, 0), vector(cfg, keys, [1, 1, 1, 1]), reg, cfg)


def test_predicate_rejects_bad_certificates_and_shapes():
    cfg, keys = setup()
    reg = keys[0].registry
    v = vector(cfg, keys, [1, 1, 1, 0])
    bad = QuorumCert(2, 1, v[2].digest[::-1], v[2].agg)
    assert not evaluate_Q((0,) * 4, CertVector((v[1], bad, v[3], v[4])), reg, cfg)
    assert not evaluate_Q((0,) * 4, CertVector((v[2], v[1], v[3], v[4])), reg, cfg)
    assert not evaluate_Q((0,) * 4, CertVector(v.entries[:3]), reg, cfg)
    assert not evaluate_Q((0,) * 4, CertVector((QuorumCert(1, 0, b"x"),) + v.entries[1:]), reg, cfg)


def _participants(cfg, keys, ordered=(0, 0, 0, 0)):
    out = {}
    for j in cfg.nodes():
        ctx = Ctx(cfg, keys, j)
        cache = CertCache(ctx.registry)
        out[j] = (ctx, MVBA(ctx, 1, ordered, None, lambda dc: None,
                            lambda v: evaluate_Q(ordered, v, ctx.registry, cfg, cache)))
        out[j][1].view = 1
        out[j][1].views[1] = _View()
    return out


def test_invalid_value_gets_no_ack():
    cfg, keys = setup()
    (ctx, m) = _participants(cfg, keys)[2]
    m.handle(1, PbSend(1, 1, 1, vector(cfg, keys, [1, 0, 0, 0])))
    assert not ctx.sent
    m.handle(1, PbSend(1, 1, 1, vector(cfg, keys, [1, 1, 1, 0])))
    assert len(ctx.take(PbAck)) == 1


def test_later_view_needs_skip_certificates():
    cfg, keys = setup()
    ctx, m = _participants(cfg, keys)[2]
    m.view = 2
    m.views[2] = m.views[1]
    m.leaders[1] = 3
    m.handle(1, PbSend(1, 2, 1, vector(cfg, keys, [1, 1, 1, 0])))
    assert not ctx.sent
    skip = crypto.combine([crypto.share_sign(keys[i], skip_tag(1, 1)) for i in range(3)], cfg)
    m.handle(1, PbSend(1, 2, 1, vector(cfg, keys, [1, 1, 1, 0]), Justification(0, skips=(skip,))))
    assert len(ctx.take(PbAck)) == 1


def test_two_locks_never_form_for_one_sender():
    cfg, keys = setup()
    reg = keys[0].registry
    a, b = vector(cfg, keys, [1, 1, 1, 0]), vector(cfg, keys, [2, 1, 1, 1])
    ha, hb = digest_value(a), digest_value(b)
    rng = random.Random(9)
    for trial in range(10_000):
        parts = _participants(cfg, keys) if trial % 500 == 0 else parts
        for j in (2, 3, 4):
            ctx, m = parts[j]
            m.views[1].acked1.clear()
            ctx.sent.clear()
        shares = {ha: [crypto.share_sign(keys[0], pb_tag(1, 1, 1, 1, ha))],
                  hb: [crypto.share_sign(keys[0], pb_tag(1, 1, 1, 1, hb))]}
        for j in (2, 3, 4):
            ctx, m = parts[j]
            for v in rng.sample([a, b], 2):
                m.handle(1, PbSend(1, 1, 1, v))
            for _, ack in ctx.sent:
                shares[ha if ack.share.tag.endswith(ha) else hb].append(ack.share)
        shares[hb].append(crypto.PartialSig(rng.choice([2, 3, 4]), pb_tag(1, 1, 1, 1, hb), rng.randbytes(32)))
        ok = []
        for h, s in shares.items():
            try:
                ok.append(crypto.sig_verify(reg, pb_tag(1, 1, 1, 1, h), crypto.combine(s, cfg)))
            except crypto.InsufficientShares:
                ok.append(False)
        assert not all(ok)


def test_same_input_everywhere_is_decided():
    cfg, keys = setup()
    v = vector(cfg, keys, [1, 2, 1, 0])
    _, _, hosts, live = run_instance(4, 1, 1, inputs=[v] * 4)
    assert all(h.decision.value == v for h in live)


def test_honest_sender_gets_a_lock_and_everyone_outputs():
    cfg, keys, hosts, live = run_instance(4, 1, 2)
    for h in live:
        vs = h.mvba.views[1]
        if vs.lock1 is not None:
            assert crypto.sig_verify(keys[0].registry, pb_tag(1, 1, 1, h.me, vs.my_h), vs.lock1)
    assert sum(h.mvba.views[1].lock1 is not None for h in live) >= 3


def _check(cfg, keys, live):
    values = {h.decision.value for h in live}
    assert len(values) == 1
    (v,) = values
    assert evaluate_Q((0,) * cfg.n, v, keys[0].registry, cfg)
    assert all(verify_decision(keys[0].registry, h.decision) for h in live)


def test_crash_faults_over_many_seeds():
    for seed in range(100):
        n, f = ((4, 1), (7, 2))[seed % 2]
        cfg, keys, hosts, live = run_instance(n, f, seed, crashed=tuple(range(1, f + 1)))
        assert all(h.decision is not None for h in live), seed
        _check(cfg, keys, live)


def test_staggered_halts_and_views():
    views = []
    for seed in range(100, 160):
        pol = AdversaryPolicy(victims=(seed % 4 + 1,), D=30.0)
        cfg, keys, hosts, live = run_instance(4, 1, seed, delay=LogNormalDelay(-3.0, 1.2), policy=pol)
        assert all(h.decision is not None for h in live)
        _check(cfg, keys, live)
        views.extend(h.mvba.view for h in live)
    assert sum(views) / len(views) <= 3


def test_decision_certificate_checks():
    cfg, keys = setup()
    v = vector(cfg, keys, [1, 1, 1, 0])
    _, _, hosts, live = run_instance(4, 1, 3, inputs=[v] * 4)
    dc = live[0].decision
    ctx = Ctx(cfg, keys, 2)
    got = []
    m = MVBA(ctx, 1, (0,) * 4, v, got.append, lambda x: True)
    m.handle(1, DecideCert(1, dc.view, v, AggregateSig(dc.cert.parts[:2])))
    m.handle(1, DecideCert(1, dc.view + 1, v, dc.cert))
    assert not got
    m.handle(1, dc)
    m.handle(3, dc)
    assert got == [dc]
