"""ISO-on-TCP envelope: TPKT (RFC 1006), COTP DT, session and presentation.

Session and presentation are skimmed. The common data-transfer skeleton
(``01 00 01 00`` + fully-encoded user data) is taken on a fast path; anything
else (connect/accept SPDUs, unusual stacks) is scanned for the PDV-list that
carries the MMS PDU.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from ..pcapio import StreamChunk
from .ber import MalformedTlv, iter_tlvs, read_tlv, tlv

TPKT_VERSION = 0x03
COTP_DT = 0xF0
COTP_CR = 0xE0
COTP_CC = 0xD0
SESSION_DATA = b"\x01\x00\x01\x00"
MMS_PDU_TAGS = frozenset((0xA0, 0xA1, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xAB, 0xAC, 0xAD))
MMS_CONTEXT_ID = 3


@dataclass(frozen=True)
class MmsUnit:
    """One MMS PDU located in a flow, with the frame that completed it."""

    timestamp: float
    pdu: bytes
    frame_index: int
    offset: int  # stream offset of the TPKT header


@dataclass
class EnvelopeStats:
    tpkts: int = 0
    resyncs: int = 0
    not_mms: int = 0
    partial_tail: int = 0
    frames_not_mms: List[int] = field(default_factory=list)
    frames_desync: List[int] = field(default_factory=list)


def decode_envelope(stream: Sequence[StreamChunk] | bytes, stats: Optional[EnvelopeStats] = None) -> List[MmsUnit]:
    """Split one direction of a flow into MMS PDUs.

    ``stream`` is the ordered, gap-free chunk list of one flow direction, or
    plain bytes (timestamps then default to 0 and frame indices to -1).
    """
    stats = stats if stats is not None else EnvelopeStats()
    if isinstance(stream, (bytes, bytearray, memoryview)):
        data = bytes(stream)
        ends = [len(data)]
        stamps = [0.0]
        owners = [-1]
    else:
        data = b"".join(c.payload for c in stream)
        ends, stamps, owners = [], [], []
        total = 0
        for c in stream:
            total += len(c.payload)
            ends.append(total)
            stamps.append(c.timestamp)
            owners.append(c.frame_index)

    def locate(last_byte: int) -> int:
        return min(bisect_right(ends, last_byte), len(ends) - 1)

    units: List[MmsUnit] = []
    cotp_buffer = b""
    cotp_start = 0
    pos = 0
    n = len(data)
    while pos + 4 <= n:
        length = (data[pos + 2] << 8) | data[pos + 3]
        if data[pos] != TPKT_VERSION or data[pos + 1] != 0 or length < 4:
            nxt = data.find(b"\x03\x00", pos + 1)
            stats.resyncs += 1
            stats.frames_desync.append(owners[locate(pos)])
            if nxt < 0:
                pos = n
                break
            pos = nxt
            continue
        if pos + length > n:
            stats.partial_tail += 1
            break
        stats.tpkts += 1
        end = pos + length
        where = locate(end - 1)
        body = data[pos + 4:end]
        if body:
            if len(body) < 2 or body[0] + 1 > len(body):
                stats.not_mms += 1
                stats.frames_not_mms.append(owners[where])
            elif body[1] & 0xF0 != COTP_DT:
                stats.not_mms += 1
                stats.frames_not_mms.append(owners[where])
            else:
                eot = len(body) > 2 and body[2] & 0x80
                if not cotp_buffer:
                    cotp_start = pos
                cotp_buffer += body[body[0] + 1:]
                if eot:
                    pdu = locate_mms(cotp_buffer)
                    if pdu is None:
                        stats.not_mms += 1
                        stats.frames_not_mms.append(owners[where])
                    else:
                        units.append(MmsUnit(stamps[where], pdu, owners[where], cotp_start))
                    cotp_buffer = b""
        pos = end
    return units


def locate_mms(spdu: bytes) -> Optional[bytes]:
    """Return the MMS PDU inside session+presentation bytes, if any."""
    if spdu[:4] == SESSION_DATA and len(spdu) > 4 and spdu[4] == 0x61:
        try:
            found = _fully_encoded(spdu, 4)
        except MalformedTlv:
            found = None
        if found is not None:
            return found
    return _scan_pdv(spdu)


def _fully_encoded(data: bytes, pos: int) -> Optional[bytes]:
    user = read_tlv(data, pos)
    for pdv in iter_tlvs(data, user.start, user.end):
        if pdv.tag == 0x30:
            found = _pdv_mms(data, pdv)
            if found is not None:
                return found
    return None


def _pdv_mms(data: bytes, pdv) -> Optional[bytes]:
    parts = list(iter_tlvs(data, pdv.start, pdv.end))
    tags = [p.tag for p in parts]
    if tags[-1:] != [0xA0] or 0x02 not in tags:
        return None
    value = parts[-1]
    inner = read_tlv(data, value.start, value.end)
    if inner.end != value.end or inner.tag not in MMS_PDU_TAGS:
        return None
    return bytes(data[inner.head:inner.end])


def _scan_pdv(data: bytes) -> Optional[bytes]:
    pos = data.find(b"\x30")
    while pos >= 0:
        try:
            pdv = read_tlv(data, pos)
            found = _pdv_mms(data, pdv)
        except MalformedTlv:
            found = None
        if found is not None:
            return found
        pos = data.find(b"\x30", pos + 1)
    return None


# -- encoding ---------------------------------------------------------------


def wrap_presentation(mms_pdu: bytes, context_id: int = MMS_CONTEXT_ID) -> bytes:
    pdv = tlv(0x30, tlv(0x02, bytes((context_id,))) + tlv(0xA0, mms_pdu))
    return tlv(0x61, pdv)


def tpkt(payload: bytes) -> bytes:
    n = len(payload) + 4
    if n > 0xFFFF:
        raise ValueError("TPKT payload too large")
    return bytes((TPKT_VERSION, 0, n >> 8, n & 0xFF)) + payload


def cotp_dt(payload: bytes, eot: bool = True) -> bytes:
    return bytes((0x02, COTP_DT, 0x80 if eot else 0x00)) + payload


def encode_data_envelope(mms_pdu: bytes) -> bytes:
    """TPKT + COTP DT + session give-tokens/data + presentation around a PDU."""
    return tpkt(cotp_dt(SESSION_DATA + wrap_presentation(mms_pdu)))


def encode_cotp_cr() -> bytes:
    return tpkt(bytes.fromhex("11e00000000100c0010ac1020001c2020001"))


def encode_cotp_cc() -> bytes:
    return tpkt(bytes.fromhex("11d00001000100c0010ac1020001c2020001"))


def encode_connect_envelope(mms_pdu: bytes, accept: bool = False) -> bytes:
    """Session CONNECT (or ACCEPT) carrying a presentation CP/CPA with ``mms_pdu``."""
    user_data = tlv(0x61, tlv(0x30, tlv(0x02, b"\x03") + tlv(0xA0, mms_pdu)))
    mode = tlv(0xA0, tlv(0x80, b"\x01"))
    normal = tlv(0xA2, tlv(0x81, b"\x00\x00\x00\x01") + tlv(0x82, b"\x00\x00\x00\x01") + user_data)
    ppdu = tlv(0x31, mode + normal)
    # protocol options + version number, then user data (PGI 0xC1)
    params = bytes.fromhex("0506130100160102") + bytes((0xC1, len(ppdu))) + ppdu
    if len(ppdu) >= 0xFF or len(params) >= 0xFF:
        raise ValueError("connect user data too long for single-byte SPDU lengths")
    spdu = bytes((0x0E if accept else 0x0D, len(params))) + params
    return tpkt(cotp_dt(spdu))
