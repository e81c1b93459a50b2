"""MMS PDU model with a BER decoder and encoder.

The decoder understands the confirmed services the detection pipeline cares
about (Read, Write, GetVariableAccessAttributes,
GetNamedVariableListAttributes) and keeps everything else as opaque bytes.
Write data is matched against the IEC 61850 ``Oper`` structure layout:

    ctlVal, operTm, origin{orCat, orIdent}, ctlNum, T, Test, Check
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .ber import MalformedTlv, Tlv, children, encode_unsigned, encode_signed, read_tlv, tag_number, tlv

# Data CHOICE tags (context-specific).
TAG_STRUCTURE = 0xA2
TAG_BOOLEAN = 0x83
TAG_BIT_STRING = 0x84
TAG_INTEGER = 0x85
TAG_UNSIGNED = 0x86
TAG_OCTET_STRING = 0x89
TAG_UTC_TIME = 0x91
TAG_VISIBLE_STRING = 0x1A

OR_CAT_MAX = 8
ORIDENT_ZERO64 = bytes(64)


class Service(enum.IntEnum):
    GET_NAME_LIST = 1
    READ = 4
    WRITE = 5
    GET_VARIABLE_ACCESS_ATTRIBUTES = 6
    GET_NAMED_VARIABLE_LIST_ATTRIBUTES = 12


_SERVICE_NAMES = {
    Service.GET_NAME_LIST: "GetNameList",
    Service.READ: "Read",
    Service.WRITE: "Write",
    Service.GET_VARIABLE_ACCESS_ATTRIBUTES: "GetVariableAccessAttributes",
    Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES: "GetNamedVariableListAttributes",
}
_NAME_TO_SERVICE = {v: k for k, v in _SERVICE_NAMES.items()}


def service_name(tag: int) -> str:
    try:
        return _SERVICE_NAMES[Service(tag)]
    except ValueError:
        return f"Other({tag})"


def service_from_name(name: str) -> int:
    if name in _NAME_TO_SERVICE:
        return int(_NAME_TO_SERVICE[name])
    if name.startswith("Other(") and name.endswith(")"):
        return int(name[6:-1])
    return int(name)


def as_service(tag: int) -> int:
    """Return the ``Service`` member for known tags, the bare int otherwise."""
    try:
        return Service(tag)
    except ValueError:
        return tag


class PduKind(str, enum.Enum):
    CONFIRMED_REQUEST = "ConfirmedRequest"
    CONFIRMED_RESPONSE = "ConfirmedResponse"
    INITIATE_REQUEST = "InitiateRequest"
    INITIATE_RESPONSE = "InitiateResponse"
    OTHER = "Other"


_KIND_BY_TAG = {
    0xA0: PduKind.CONFIRMED_REQUEST,
    0xA1: PduKind.CONFIRMED_RESPONSE,
    0xA8: PduKind.INITIATE_REQUEST,
    0xA9: PduKind.INITIATE_RESPONSE,
}


class Unencodable(ValueError):
    pass


def valid_identifier(text: str) -> bool:
    return bool(text) and all(0x20 <= ord(c) <= 0x7E and c != "/" for c in text)


@dataclass(frozen=True, order=True)
class ObjectName:
    domain_id: str
    item_id: str

    def __str__(self) -> str:
        return f"{self.domain_id}/{self.item_id}"

    @classmethod
    def parse(cls, path: str) -> "ObjectName":
        domain, sep, item = path.partition("/")
        if not sep:
            raise ValueError(f"expected 'domain/item', got {path!r}")
        return cls(domain, item)

    @property
    def logical_node(self) -> str:
        return self.item_id.split("$", 1)[0]


@dataclass(frozen=True)
class UtcTimestamp:
    seconds: int
    fraction: int = 0
    quality: int = 0

    def to_bytes(self) -> bytes:
        return (
            self.seconds.to_bytes(4, "big")
            + self.fraction.to_bytes(3, "big")
            + bytes((self.quality,))
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "UtcTimestamp":
        if len(raw) != 8:
            raise ValueError("UtcTime is exactly 8 bytes")
        return cls(int.from_bytes(raw[:4], "big"), int.from_bytes(raw[4:7], "big"), raw[7])


@dataclass(frozen=True)
class OperPayload:
    ctl_val: bool
    oper_tm: UtcTimestamp
    or_cat: int
    or_ident: Optional[bytes]
    ctl_num: int
    t: UtcTimestamp
    test: bool = False
    check: int = 0

    @property
    def or_cat_valid(self) -> bool:
        return 0 <= self.or_cat <= OR_CAT_MAX

    def time_accuracy(self) -> Tuple[int, int]:
        return extract_time_accuracy(self)


def extract_time_accuracy(oper: OperPayload) -> Tuple[int, int]:
    """Quality byte of ``operTm`` and of ``T``, in that order."""
    return oper.oper_tm.quality, oper.t.quality


@dataclass(frozen=True)
class WriteItem:
    name: ObjectName
    oper: Optional[OperPayload]
    raw: bytes

    @classmethod
    def from_oper(cls, name: ObjectName, oper: OperPayload) -> "WriteItem":
        return cls(name, oper, encode_oper(oper))


@dataclass(frozen=True)
class MmsMessage:
    kind: PduKind
    invoke_id: Optional[int] = None
    service: Optional[int] = None
    # Names referenced by Read, GetVariableAccessAttributes and
    # GetNamedVariableListAttributes requests.
    reads: Tuple[ObjectName, ...] = ()
    writes: Tuple[WriteItem, ...] = ()
    # Variables listed in a GetNamedVariableListAttributes response.
    listed: Tuple[ObjectName, ...] = ()
    # Raw service element for responses and unmodelled requests; raw content
    # for Initiate PDUs.
    payload: bytes = field(default=b"", repr=False)


# -- decoding ---------------------------------------------------------------


def decode_mms(pdu: bytes) -> MmsMessage:
    top = read_tlv(pdu, 0)
    if top.end != len(pdu):
        raise MalformedTlv("trailing bytes after MMS PDU", top.end)
    kind = _KIND_BY_TAG.get(top.tag, PduKind.OTHER)
    if kind is PduKind.CONFIRMED_REQUEST:
        return _decode_request(pdu, top)
    if kind is PduKind.CONFIRMED_RESPONSE:
        return _decode_response(pdu, top)
    return MmsMessage(kind=kind, payload=bytes(pdu[top.start:top.end]))


def _invoke_id(data: bytes, node: Tlv, path: str) -> int:
    if node.tag != 0x02 or node.end == node.start or node.end - node.start > 5:
        raise MalformedTlv("expected invokeID INTEGER", node.start, path)
    value = int.from_bytes(data[node.start:node.end], "big", signed=True)
    if not 0 <= value <= 0xFFFFFFFF:
        raise MalformedTlv("invokeID out of Unsigned32 range", node.start, path)
    return value


def _split_service(data: bytes, top: Tlv, path: str) -> Tuple[int, Tlv]:
    try:
        parts = children(data, top)
    except MalformedTlv as exc:
        raise exc.within(path) from None
    if len(parts) < 2:
        raise MalformedTlv("PDU lacks invokeID or service", top.start, path)
    invoke = _invoke_id(data, parts[0], path + "/invokeID")
    svc = parts[1]
    if svc.tag == 0x30 and len(parts) > 2:  # listOfModifier
        svc = parts[2]
    return invoke, svc


def _decode_request(data: bytes, top: Tlv) -> MmsMessage:
    path = "confirmedRequestPDU"
    invoke, svc = _split_service(data, top, path)
    number = tag_number(svc.tag)
    path = "confirmedServiceRequest"
    reads: Tuple[ObjectName, ...] = ()
    writes: Tuple[WriteItem, ...] = ()
    payload = b""
    try:
        if number == Service.READ and svc.constructed:
            reads = _decode_read(data, svc)
        elif number == Service.WRITE and svc.constructed:
            writes = _decode_write(data, svc)
        elif number == Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES and svc.constructed:
            inner = _single_child(data, svc, "getNamedVariableListAttributes")
            reads = (_object_name(data, inner, "getNamedVariableListAttributes"),)
        elif number == Service.GET_VARIABLE_ACCESS_ATTRIBUTES and svc.constructed:
            reads = _decode_gvaa(data, svc)
            payload = b"" if reads else bytes(data[svc.head:svc.end])
        else:
            payload = bytes(data[svc.head:svc.end])
    except MalformedTlv as exc:
        raise exc.within(path) from None
    return MmsMessage(
        kind=PduKind.CONFIRMED_REQUEST,
        invoke_id=invoke,
        service=as_service(number),
        reads=reads,
        writes=writes,
        payload=payload,
    )


def _decode_response(data: bytes, top: Tlv) -> MmsMessage:
    path = "confirmedResponsePDU"
    invoke, svc = _split_service(data, top, path)
    number = tag_number(svc.tag)
    listed: Tuple[ObjectName, ...] = ()
    if number == Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES and svc.constructed:
        try:
            listed = _decode_gnvla_response(data, svc)
        except MalformedTlv as exc:
            raise exc.within(path + "/getNamedVariableListAttributes") from None
    return MmsMessage(
        kind=PduKind.CONFIRMED_RESPONSE,
        invoke_id=invoke,
        service=as_service(number),
        listed=listed,
        payload=bytes(data[svc.head:svc.end]),
    )


def _single_child(data: bytes, node: Tlv, path: str) -> Tlv:
    parts = children(data, node)
    if len(parts) != 1:
        raise MalformedTlv(f"expected one element, found {len(parts)}", node.start, path)
    return parts[0]


def _identifier(data: bytes, node: Tlv, path: str) -> str:
    if node.tag != TAG_VISIBLE_STRING:
        raise MalformedTlv(f"expected VisibleString, found tag 0x{node.tag:02x}", node.start, path)
    text = bytes(data[node.start:node.end]).decode("latin-1")
    if not valid_identifier(text):
        raise MalformedTlv("identifier outside the accepted charset", node.start, path)
    return text


def _object_name(data: bytes, node: Tlv, path: str) -> ObjectName:
    """Decode a domain-specific ObjectName ([1] SEQUENCE{domainId, itemId})."""
    if node.tag != 0xA1:
        raise MalformedTlv(f"unsupported ObjectName form 0x{node.tag:02x}", node.start, path)
    parts = children(data, node)
    if len(parts) != 2:
        raise MalformedTlv("domain-specific name needs domainId and itemId", node.start, path)
    return ObjectName(
        _identifier(data, parts[0], path + "/domainId"),
        _identifier(data, parts[1], path + "/itemId"),
    )


def _variable_access(data: bytes, node: Tlv, path: str) -> Tuple[ObjectName, ...]:
    if node.tag == 0xA0:  # listOfVariable
        names = []
        for entry in children(data, node):
            if entry.tag != 0x30:
                raise MalformedTlv("listOfVariable entry is not a SEQUENCE", entry.start, path)
            spec = children(data, entry)
            if not spec or spec[0].tag != 0xA0:
                raise MalformedTlv("variableSpecification is not a name", entry.start, path)
            names.append(_object_name(data, _single_child(data, spec[0], path), path + "/name"))
        return tuple(names)
    if node.tag == 0xA1:  # variableListName
        return (_object_name(data, _single_child(data, node, path), path + "/variableListName"),)
    raise MalformedTlv(f"unknown variableAccessSpecification 0x{node.tag:02x}", node.start, path)


def _decode_read(data: bytes, svc: Tlv) -> Tuple[ObjectName, ...]:
    path = "read/variableAccessSpecification"
    for part in children(data, svc):
        if part.tag == 0xA1:
            names = _variable_access(data, _single_child(data, part, path), path)
            if not names:
                raise MalformedTlv("read names no variables", part.start, path)
            return names
    raise MalformedTlv("read lacks variableAccessSpecification", svc.start, path)


def _decode_write(data: bytes, svc: Tlv) -> Tuple[WriteItem, ...]:
    parts = children(data, svc)
    if len(parts) != 2 or parts[1].tag != 0xA0:
        raise MalformedTlv("write needs variableAccessSpecification and listOfData", svc.start, "write")
    names = _variable_access(data, parts[0], "write/variableAccessSpecification")
    values = children(data, parts[1])
    if not names:
        raise MalformedTlv("write names no variables", svc.start, "write")
    if parts[0].tag == 0xA1:  # variableListName: the whole list is one value
        raw = bytes(data[parts[1].start:parts[1].end])
        return (WriteItem(names[0], None, raw),)
    if len(values) != len(names):
        raise MalformedTlv(
            f"{len(names)} variables but {len(values)} data values", parts[1].start, "write/listOfData"
        )
    items = []
    for name, value in zip(names, values):
        raw = bytes(data[value.head:value.end])
        items.append(WriteItem(name, match_oper(raw), raw))
    return tuple(items)


def _decode_gvaa(data: bytes, svc: Tlv) -> Tuple[ObjectName, ...]:
    inner = _single_child(data, svc, "getVariableAccessAttributes")
    if inner.tag != 0xA0:  # address form is not modelled
        return ()
    return (_object_name(data, _single_child(data, inner, "name"), "getVariableAccessAttributes/name"),)


def _decode_gnvla_response(data: bytes, svc: Tlv) -> Tuple[ObjectName, ...]:
    names: List[ObjectName] = []
    for part in children(data, svc):
        if part.tag == 0xA1:  # listOfVariable
            for entry in children(data, part):
                spec = children(data, entry)
                if spec and spec[0].tag == 0xA0:
                    names.append(_object_name(data, _single_child(data, spec[0], "name"), "listOfVariable"))
    return tuple(names)


_OPER_LAYOUT = (TAG_BOOLEAN, TAG_UTC_TIME, TAG_STRUCTURE, TAG_UNSIGNED, TAG_UTC_TIME, TAG_BOOLEAN, TAG_BIT_STRING)


def match_oper(raw: bytes) -> Optional[OperPayload]:
    """Return the Oper structure encoded in one Data TLV, or None."""
    try:
        top = read_tlv(raw, 0)
        if top.tag != TAG_STRUCTURE or top.end != len(raw):
            return None
        parts = children(raw, top)
        if tuple(p.tag for p in parts) != _OPER_LAYOUT:
            return None
        body = [raw[p.start:p.end] for p in parts]
        ctl_val, oper_tm, _, ctl_num, t, test, check = body
        if len(ctl_val) != 1 or len(test) != 1 or len(oper_tm) != 8 or len(t) != 8:
            return None
        origin = children(raw, parts[2])
        if not origin or origin[0].tag != TAG_INTEGER or origin[0].end == origin[0].start:
            return None
        if len(origin) == 1:
            or_ident = None
        elif len(origin) == 2 and origin[1].tag == TAG_OCTET_STRING:
            or_ident = bytes(raw[origin[1].start:origin[1].end])
        else:
            return None
        or_cat = int.from_bytes(raw[origin[0].start:origin[0].end], "big", signed=True)
        num = int.from_bytes(ctl_num, "big", signed=True) if ctl_num else -1
        if not 0 <= num <= 0xFF:
            return None
        if len(check) != 2 or check[0] != 6 or check[1] & 0x3F:
            return None
    except MalformedTlv:
        return None
    return OperPayload(
        ctl_val=ctl_val[0] != 0,
        oper_tm=UtcTimestamp.from_bytes(oper_tm),
        or_cat=or_cat,
        or_ident=or_ident,
        ctl_num=num,
        t=UtcTimestamp.from_bytes(t),
        test=test[0] != 0,
        check=check[1] >> 6,
    )


# -- encoding ---------------------------------------------------------------


def _encode_identifier(text: str) -> bytes:
    if not isinstance(text, str) or not valid_identifier(text):
        raise Unencodable(f"identifier {text!r} outside the accepted charset")
    return tlv(TAG_VISIBLE_STRING, text.encode("ascii"))


def encode_object_name(name: ObjectName) -> bytes:
    return tlv(0xA1, _encode_identifier(name.domain_id) + _encode_identifier(name.item_id))


def _list_of_variable(names: Sequence[ObjectName]) -> bytes:
    return tlv(0xA0, b"".join(tlv(0x30, tlv(0xA0, encode_object_name(n))) for n in names))


def encode_oper(oper: OperPayload) -> bytes:
    if not 0 <= oper.ctl_num <= 0xFF:
        raise Unencodable("ctlNum must fit in 8 bits")
    if not 0 <= oper.check <= 3:
        raise Unencodable("Check is a 2-bit bitstring")
    origin = tlv(TAG_INTEGER, encode_signed(oper.or_cat))
    if oper.or_ident is not None:
        origin += tlv(TAG_OCTET_STRING, oper.or_ident)
    return tlv(
        TAG_STRUCTURE,
        tlv(TAG_BOOLEAN, b"\x01" if oper.ctl_val else b"\x00")
        + tlv(TAG_UTC_TIME, oper.oper_tm.to_bytes())
        + tlv(TAG_STRUCTURE, origin)
        + tlv(TAG_UNSIGNED, encode_unsigned(oper.ctl_num))
        + tlv(TAG_UTC_TIME, oper.t.to_bytes())
        + tlv(TAG_BOOLEAN, b"\x01" if oper.test else b"\x00")
        + tlv(TAG_BIT_STRING, bytes((6, oper.check << 6))),
    )


def encode_mms(msg: MmsMessage) -> bytes:
    """Encode ``msg``; the inverse of :func:`decode_mms` on the supported subset.

    A write item with an Oper payload is emitted from the Oper fields; one
    without is emitted from its raw Data bytes.
    """
    kind = msg.kind
    if kind is PduKind.CONFIRMED_REQUEST:
        return _encode_request(msg)
    if kind is PduKind.CONFIRMED_RESPONSE:
        if msg.invoke_id is None or not msg.payload:
            raise Unencodable("response needs invoke_id and a service payload")
        return tlv(0xA1, tlv(0x02, encode_unsigned(msg.invoke_id)) + msg.payload)
    if kind is PduKind.INITIATE_REQUEST:
        return tlv(0xA8, msg.payload)
    if kind is PduKind.INITIATE_RESPONSE:
        return tlv(0xA9, msg.payload)
    raise Unencodable(f"cannot encode PDU kind {kind.value}")


def _encode_request(msg: MmsMessage) -> bytes:
    if msg.invoke_id is None or msg.service is None:
        raise Unencodable("confirmed request needs invoke_id and service")
    if not 0 <= msg.invoke_id <= 0xFFFFFFFF:
        raise Unencodable("invoke_id out of Unsigned32 range")
    svc = msg.service
    if svc == Service.READ:
        if not msg.reads:
            raise Unencodable("read needs at least one name")
        body = tlv(0xA4, tlv(0xA1, _list_of_variable(msg.reads)))
    elif svc == Service.WRITE:
        if not msg.writes:
            raise Unencodable("write needs at least one item")
        data = b"".join(encode_oper(w.oper) if w.oper is not None else w.raw for w in msg.writes)
        body = tlv(0xA5, _list_of_variable([w.name for w in msg.writes]) + tlv(0xA0, data))
    elif svc == Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES and msg.reads:
        body = tlv(0xAC, encode_object_name(msg.reads[0]))
    elif svc == Service.GET_VARIABLE_ACCESS_ATTRIBUTES and msg.reads:
        body = tlv(0xA6, tlv(0xA0, encode_object_name(msg.reads[0])))
    elif msg.payload:
        body = msg.payload
    else:
        raise Unencodable(f"no encoder for service {service_name(svc)} without payload")
    return tlv(0xA0, tlv(0x02, encode_unsigned(msg.invoke_id)) + body)


# -- builders used by the synthesizer and tests -----------------------------


def read_request(invoke_id: int, names: Sequence[ObjectName]) -> MmsMessage:
    return MmsMessage(PduKind.CONFIRMED_REQUEST, invoke_id, Service.READ, reads=tuple(names))


def write_request(invoke_id: int, items: Sequence[WriteItem]) -> MmsMessage:
    return MmsMessage(PduKind.CONFIRMED_REQUEST, invoke_id, Service.WRITE, writes=tuple(items))


def dataset_directory_request(invoke_id: int, dataset: ObjectName) -> MmsMessage:
    return MmsMessage(
        PduKind.CONFIRMED_REQUEST, invoke_id, Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES, reads=(dataset,)
    )


def dataset_directory_response(invoke_id: int, members: Sequence[ObjectName]) -> MmsMessage:
    entries = b"".join(tlv(0x30, tlv(0xA0, encode_object_name(m))) for m in members)
    payload = tlv(0xAC, tlv(0x80, b"\x00") + tlv(0xA1, entries))
    return MmsMessage(
        PduKind.CONFIRMED_RESPONSE,
        invoke_id,
        Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES,
        listed=tuple(members),
        payload=payload,
    )


def read_response(invoke_id: int, values: int = 1) -> MmsMessage:
    # listOfAccessResult with placeholder boolean data
    results = tlv(0x83, b"\x00") * values
    return MmsMessage(PduKind.CONFIRMED_RESPONSE, invoke_id, Service.READ, payload=tlv(0xA4, tlv(0xA1, results)))


def write_response(invoke_id: int, items: int = 1) -> MmsMessage:
    return MmsMessage(PduKind.CONFIRMED_RESPONSE, invoke_id, Service.WRITE, payload=tlv(0xA5, b"\x81\x00" * items))


# localDetailCalling 65000, max outstanding 5/5, nesting 10, init-request
# detail with version 1, parameter CBB and the usual services bitmap.
INITIATE_REQUEST_BODY = bytes.fromhex(
    "800300fde8" "810105" "820105" "83010a" "a416800101810305f100820c03ee1c00000408000079ef18"
)
INITIATE_RESPONSE_BODY = INITIATE_REQUEST_BODY


def initiate_request() -> MmsMessage:
    return MmsMessage(PduKind.INITIATE_REQUEST, payload=INITIATE_REQUEST_BODY)


def initiate_response() -> MmsMessage:
    return MmsMessage(PduKind.INITIATE_RESPONSE, payload=INITIATE_RESPONSE_BODY)
