from dataclasses import dataclass

import pytest
from hypothesis import given, settings, strategies as st

from dumbo_ng.codec import MalformedEncoding, decode, encode, encode_as
from dumbo_ng.types import (AggregateSig, CertVector, PartialSig, QuorumCert, TxBatch)


@dataclass(frozen=True)
class Sample:
    a: int
    b: bytes
    c: tuple[int, ...]
    d: str | None = None
    e: float = 0.5


def test_int_is_fixed_width_big_endian():
    assert encode_as(int, 258) == bytes(6) + b"\x01\x02"


def test_sample_layout_is_frozen():
    # u64 a | u32 len + b | u32 count + u64 items | option flag | f64
    blob = encode(Sample(1, b"xy", (7,), None, 0.5))
    assert blob.hex() == ("0000000000000001" "00000002" "7879" "00000001" "0000000000000007" "00" "3fe0000000000000")


def test_negative_int_rejected():
    with pytest.raises(TypeError):
        encode_as(int, -1)


def test_trailing_and_truncated_bytes_rejected():
    blob = encode(Sample(1, b"x", ()))
    with pytest.raises(MalformedEncoding):
        decode(Sample, blob + b"\0")
    with pytest.raises(MalformedEncoding):
        decode(Sample, blob[:-1])


def test_genesis_cert_round_trip():
    qc = QuorumCert.genesis(3)
    assert decode(QuorumCert, encode(qc)) == qc


parts = st.builds(PartialSig, st.integers(1, 10), st.binary(max_size=40), st.binary(max_size=32))
certs = st.builds(QuorumCert, st.integers(1, 10), st.integers(0, 2 ** 40), st.binary(max_size=32),
                  st.builds(AggregateSig, st.lists(parts, max_size=4).map(tuple)))


@settings(max_examples=300)
@given(st.lists(certs, max_size=7).map(tuple))
def test_cert_vectors_round_trip(entries):
    v = CertVector(entries)
    blob = encode(v)
    assert decode(CertVector, blob) == v
    assert encode(decode(CertVector, blob)) == blob


@settings(max_examples=300)
@given(certs, certs)
def test_encoding_is_injective(a, b):
    if a != b:
        assert encode(a) != encode(b)


@given(st.binary(max_size=64))
def test_garbage_never_crashes_decoder(blob):
    try:
        decode(TxBatch, blob)
    except MalformedEncoding:
        pass
