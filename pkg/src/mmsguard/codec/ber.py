"""Minimal BER tag-length-value reader and writer.

Only the subset MMS stacks actually put on the wire is accepted: single or
multi-byte identifiers, short-form lengths and the two long forms 0x81 / 0x82.
Indefinite lengths and longer length prefixes are rejected.
"""

from __future__ import annotations

from typing import Iterator, List, NamedTuple, Tuple

MAX_DEPTH = 32
MAX_TAG_BYTES = 4


class MalformedTlv(ValueError):
    """A TLV could not be decoded at ``position``.

    ``path`` names the structural context, e.g.
    ``confirmedServiceRequest/read/variableAccessSpecification``.
    """

    def __init__(self, reason: str, position: int, path: str = ""):
        self.reason = reason
        self.position = position
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"{reason} (offset {position}){where}")

    def within(self, outer: str) -> "MalformedTlv":
        return type(self)(self.reason, self.position, f"{outer}/{self.path}" if self.path else outer)


class Tlv(NamedTuple):
    tag: int
    head: int  # offset of the identifier byte
    start: int  # first content byte
    end: int  # one past the content

    @property
    def constructed(self) -> bool:
        return bool(first_tag_byte(self.tag) & 0x20)


def first_tag_byte(tag: int) -> int:
    while tag > 0xFF:
        tag >>= 8
    return tag


def tag_number(tag: int) -> int:
    """Return the tag number without class and constructed bits."""
    if tag <= 0xFF:
        return tag & 0x1F
    raw = tag.to_bytes((tag.bit_length() + 7) // 8, "big")
    number = 0
    for b in raw[1:]:
        number = (number << 7) | (b & 0x7F)
    return number


def decode_tlv(data: bytes, cursor: int = 0, limit: int | None = None) -> Tuple[int, range, int]:
    """Decode one TLV at ``cursor``.

    Returns ``(tag, content_range, next_cursor)``. ``limit`` bounds the
    enclosing element; it defaults to ``len(data)``.
    """
    tlv = read_tlv(data, cursor, limit)
    return tlv.tag, range(tlv.start, tlv.end), tlv.end


def read_tlv(data: bytes, cursor: int = 0, limit: int | None = None) -> Tlv:
    end_of_buffer = len(data) if limit is None else limit
    if cursor + 2 > end_of_buffer:
        raise MalformedTlv("fewer than 2 bytes left for a TLV", cursor)
    pos = cursor
    tag = data[pos]
    pos += 1
    if tag & 0x1F == 0x1F:
        count = 1
        while True:
            if pos >= end_of_buffer:
                raise MalformedTlv("truncated multi-byte tag", cursor)
            b = data[pos]
            tag = (tag << 8) | b
            pos += 1
            count += 1
            if count > MAX_TAG_BYTES:
                raise MalformedTlv("tag identifier too long", cursor)
            if not b & 0x80:
                break
        if pos >= end_of_buffer:
            raise MalformedTlv("missing length after tag", cursor)
    first = data[pos]
    pos += 1
    if first < 0x80:
        length = first
    elif first == 0x81:
        if pos + 1 > end_of_buffer:
            raise MalformedTlv("truncated long-form length", cursor)
        length = data[pos]
        pos += 1
    elif first == 0x82:
        if pos + 2 > end_of_buffer:
            raise MalformedTlv("truncated long-form length", cursor)
        length = (data[pos] << 8) | data[pos + 1]
        pos += 2
    else:
        raise MalformedTlv(f"unsupported length prefix 0x{first:02x}", cursor)
    end = pos + length
    if end > end_of_buffer:
        raise MalformedTlv(f"length {length} overruns buffer", cursor)
    return Tlv(tag, cursor, pos, end)


def iter_tlvs(data: bytes, start: int, end: int) -> Iterator[Tlv]:
    pos = start
    while pos < end:
        tlv = read_tlv(data, pos, end)
        yield tlv
        pos = tlv.end


def children(data: bytes, parent: Tlv) -> List[Tlv]:
    return list(iter_tlvs(data, parent.start, parent.end))


class Node(NamedTuple):
    tag: int
    value: bytes | tuple  # bytes for primitives, tuple of Node for constructed


def parse_tree(data: bytes) -> tuple:
    """Parse ``data`` as a sequence of TLVs, recursing into constructed ones.

    Nesting deeper than ``MAX_DEPTH`` raises ``MalformedTlv``.
    """
    return _parse_range(data, 0, len(data), 0)


def _parse_range(data: bytes, start: int, end: int, depth: int) -> tuple:
    if depth > MAX_DEPTH:
        raise MalformedTlv(f"nesting depth exceeds {MAX_DEPTH}", start)
    nodes = []
    for tlv in iter_tlvs(data, start, end):
        if tlv.constructed:
            nodes.append(Node(tlv.tag, _parse_range(data, tlv.start, tlv.end, depth + 1)))
        else:
            nodes.append(Node(tlv.tag, bytes(data[tlv.start:tlv.end])))
    return tuple(nodes)


# -- encoding ---------------------------------------------------------------


def encode_length(n: int) -> bytes:
    if n < 0x80:
        return bytes((n,))
    if n <= 0xFF:
        return bytes((0x81, n))
    if n <= 0xFFFF:
        return bytes((0x82, n >> 8, n & 0xFF))
    raise ValueError(f"content length {n} exceeds the 0x82 long form")


def tlv(tag: int, content: bytes) -> bytes:
    if tag <= 0xFF:
        head = bytes((tag,))
    else:
        head = tag.to_bytes((tag.bit_length() + 7) // 8, "big")
    return head + encode_length(len(content)) + content


def encode_unsigned(value: int) -> bytes:
    """Minimal two's-complement body for a non-negative integer."""
    if value < 0:
        raise ValueError("negative value for unsigned encoding")
    n = value.bit_length() // 8 + 1
    return value.to_bytes(n, "big")


def encode_signed(value: int) -> bytes:
    n = max(1, (value + (value < 0)).bit_length() // 8 + 1)
    return value.to_bytes(n, "big", signed=True)


def decode_signed(body: bytes) -> int:
    if not body:
        raise ValueError("empty integer body")
    return int.from_bytes(body, "big", signed=True)
