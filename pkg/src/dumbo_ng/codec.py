"""Canonical, platform-independent byte encoding.

Every wire message and every persisted record is a frozen dataclass whose
fields are annotated with one of: ``int`` (u64), ``float`` (f64), ``bool``,
``bytes``, ``str``, ``tuple[X, ...]``, a fixed ``tuple[X, Y]``,
``Optional[X]`` or another dataclass.  Integers are fixed-width big-endian
and every variable-length item is length-prefixed, so the encoding is
injective per type and ``decode(cls, encode(x)) == x``.
"""
import dataclasses
import struct
import types
import typing

_U64 = struct.Struct(">Q")
_U32 = struct.Struct(">I")
_F64 = struct.Struct(">d")


class MalformedEncoding(ValueError):
    pass


def _need(buf, pos, size):
    if pos + size > len(buf):
        raise MalformedEncoding("truncated input")


def _int_plan():
    def enc(v, out):
        if v.__class__ is not int or v < 0:
            raise TypeError(f"expected non-negative int, got {v!r}")
        out += _U64.pack(v)

    def dec(buf, pos):
        _need(buf, pos, 8)
        return _U64.unpack_from(buf, pos)[0], pos + 8

    return enc, dec


def _float_plan():
    def enc(v, out):
        out += _F64.pack(float(v))

    def dec(buf, pos):
        _need(buf, pos, 8)
        return _F64.unpack_from(buf, pos)[0], pos + 8

    return enc, dec


def _bool_plan():
    def enc(v, out):
        out.append(1 if v else 0)

    def dec(buf, pos):
        _need(buf, pos, 1)
        b = buf[pos]
        if b > 1:
            raise MalformedEncoding("bad bool byte")
        return b == 1, pos + 1

    return enc, dec


def _bytes_plan():
    def enc(v, out):
        out += _U32.pack(len(v))
        out += v

    def dec(buf, pos):
        _need(buf, pos, 4)
        size = _U32.unpack_from(buf, pos)[0]
        pos += 4
        _need(buf, pos, size)
        return bytes(buf[pos:pos + size]), pos + size

    return enc, dec


def _str_plan():
    benc, bdec = _bytes_plan()

    def enc(v, out):
        benc(v.encode("utf-8"), out)

    def dec(buf, pos):
        raw, pos = bdec(buf, pos)
        try:
            return raw.decode("utf-8"), pos
        except UnicodeDecodeError as exc:
            raise MalformedEncoding(str(exc)) from None

    return enc, dec


def _seq_plan(item):
    ienc, idec = plan_for(item)

    def enc(v, out):
        out += _U32.pack(len(v))
        for x in v:
            ienc(x, out)

    def dec(buf, pos):
        _need(buf, pos, 4)
        count = _U32.unpack_from(buf, pos)[0]
        pos += 4
        # every item takes at least one byte; reject absurd counts early
        if count > len(buf) - pos:
            raise MalformedEncoding("sequence count exceeds input")
        items = []
        for _ in range(count):
            x, pos = idec(buf, pos)
            items.append(x)
        return tuple(items), pos

    return enc, dec


def _fixed_tuple_plan(items):
    plans = [plan_for(t) for t in items]

    def enc(v, out):
        if len(v) != len(plans):
            raise TypeError("tuple arity mismatch")
        for (e, _), x in zip(plans, v):
            e(x, out)

    def dec(buf, pos):
        vals = []
        for _, d in plans:
            x, pos = d(buf, pos)
            vals.append(x)
        return tuple(vals), pos

    return enc, dec


def _optional_plan(inner):
    ienc, idec = plan_for(inner)

    def enc(v, out):
        if v is None:
            out.append(0)
        else:
            out.append(1)
            ienc(v, out)

    def dec(buf, pos):
        _need(buf, pos, 1)
        flag = buf[pos]
        if flag == 0:
            return None, pos + 1
        if flag != 1:
            raise MalformedEncoding("bad option flag")
        return idec(buf, pos + 1)

    return enc, dec


def _dataclass_plan(cls):
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    # placeholder so recursive types resolve to the finished plan lazily
    fields = []

    def enc(v, out):
        if v.__class__ is not cls:
            raise TypeError(f"expected {cls.__name__}, got {type(v).__name__}")
        for name, e, _ in fields:
            e(getattr(v, name), out)

    def dec(buf, pos):
        kwargs = {}
        for name, _, d in fields:
            kwargs[name], pos = d(buf, pos)
        return cls(**kwargs), pos

    _PLANS[cls] = (enc, dec)
    for name in names:
        e, d = plan_for(hints[name])
        fields.append((name, e, d))
    return enc, dec


_PLANS = {}
_PRIMITIVES = {int: _int_plan, float: _float_plan, bool: _bool_plan,
               bytes: _bytes_plan, str: _str_plan}


def plan_for(tp):
    cached = _PLANS.get(tp)
    if cached is not None:
        return cached
    if tp in _PRIMITIVES:
        plan = _PRIMITIVES[tp]()
    elif dataclasses.is_dataclass(tp):
        return _dataclass_plan(tp)
    else:
        origin = typing.get_origin(tp)
        args = typing.get_args(tp)
        if origin is tuple and len(args) == 2 and args[1] is Ellipsis:
            plan = _seq_plan(args[0])
        elif origin is tuple:
            plan = _fixed_tuple_plan(args)
        elif origin in (typing.Union, types.UnionType) and len(args) == 2 and type(None) in args:
            plan = _optional_plan(args[0] if args[1] is type(None) else args[1])
        else:
            raise TypeError(f"no canonical encoding for {tp!r}")
    _PLANS[tp] = plan
    return plan


def encode(value) -> bytes:
    out = bytearray()
    plan_for(type(value))[0](value, out)
    return bytes(out)


def encode_as(tp, value) -> bytes:
    out = bytearray()
    plan_for(tp)[0](value, out)
    return bytes(out)


def decode(tp, data: bytes):
    value, pos = plan_for(tp)[1](memoryview(data), 0)
    if pos != len(data):
        raise MalformedEncoding(f"{len(data) - pos} trailing bytes")
    return value
