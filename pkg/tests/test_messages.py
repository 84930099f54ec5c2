import pytest
from hypothesis import given, settings, strategies as st

from dumbo_ng.codec import MalformedEncoding
from dumbo_ng.messages import (BY_TAG, CallHelp, DecidePull, LockDiffuse, PbSend, Proposal, decode_msg,
                               encode_msg)
from dumbo_ng.types import CertVector, TxBatch


def test_tags_are_the_wire_values():
    assert {t: c.__name__ for t, c in BY_TAG.items()} == {
        1: "Proposal", 2: "Vote", 3: "CallHelp", 4: "Help", 5: "PbSend", 6: "PbAck", 7: "LockDiffuse",
        8: "ElectShare", 9: "CommitShare", 10: "DecideCert", 11: "DecidePull"}


@pytest.mark.parametrize("msg", [
    Proposal(1, 1, TxBatch(1, 1, (b"a",), 0.25)),
    CallHelp(2, 3),
    PbSend(1, 2, 1, CertVector.genesis(4)),
    LockDiffuse(1, 1, 1, 3, None),
    DecidePull(9),
])
def test_round_trip(msg):
    tag, payload = encode_msg(msg)
    assert tag == msg.TAG and decode_msg(tag, payload) == msg


def test_unknown_tag():
    with pytest.raises(ValueError):
        decode_msg(0x42, b"")


@settings(max_examples=200)
@given(st.integers(1, 11), st.binary(max_size=80))
def test_random_payloads_fail_cleanly(tag, blob):
    try:
        decode_msg(tag, blob)
    except (MalformedEncoding, UnicodeDecodeError):
        pass
