"""Classic pcap I/O and per-direction TCP byte-stream reassembly."""

from __future__ import annotations

import ipaddress
import logging
import os
import struct
import tempfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

log = logging.getLogger(__name__)

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
PCAPNG_MAGIC = 0x0A0D0D0A
LINKTYPE_ETHERNET = 1
GLOBAL_HEADER = struct.Struct("<IHHiIII")
RECORD_HEADER_LEN = 16
MAX_FRAME = 65535

ETH_IPV4 = 0x0800
ETH_IPV6 = 0x86DD
ETH_VLAN = (0x8100, 0x88A8)
IPPROTO_TCP = 6


class UnsupportedFormat(ValueError):
    pass


class TruncatedFile(ValueError):
    def __init__(self, message: str, frames_read: int):
        super().__init__(f"{message} after {frames_read} complete frames")
        self.frames_read = frames_read


@dataclass(frozen=True)
class RawFrame:
    ts_sec: int
    ts_usec: int
    data: bytes

    @property
    def timestamp(self) -> float:
        return self.ts_sec + self.ts_usec / 1_000_000

    @classmethod
    def at(cls, timestamp_us: int, data: bytes) -> "RawFrame":
        return cls(timestamp_us // 1_000_000, timestamp_us % 1_000_000, data)


def read_pcap(path: str | os.PathLike) -> List[RawFrame]:
    """Read every frame of a classic Ethernet pcap, in file order."""
    blob = Path(path).read_bytes()
    return parse_pcap(blob)


def parse_pcap(blob: bytes) -> List[RawFrame]:
    if len(blob) < 4:
        raise TruncatedFile("file shorter than the pcap magic", 0)
    magic_le = struct.unpack_from("<I", blob)[0]
    magic_be = struct.unpack_from(">I", blob)[0]
    if magic_le == PCAPNG_MAGIC:
        raise UnsupportedFormat("pcapng is not supported; convert with `editcap -F pcap in.pcapng out.pcap`")
    if magic_le == MAGIC_USEC:
        endian = "<"
    elif magic_be == MAGIC_USEC:
        endian = ">"
    elif MAGIC_NSEC in (magic_le, magic_be):
        raise UnsupportedFormat("nanosecond-resolution pcap is not supported; rewrite with microsecond timestamps")
    else:
        raise UnsupportedFormat(f"not a classic pcap file (magic 0x{magic_le:08x})")
    if len(blob) < GLOBAL_HEADER.size:
        raise TruncatedFile("file shorter than the pcap global header", 0)
    _, major, minor, _, _, _, linktype = struct.unpack_from(endian + "IHHiIII", blob)
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedFormat(f"link type {linktype} is not Ethernet (1)")
    record = struct.Struct(endian + "IIII")
    frames: List[RawFrame] = []
    pos = GLOBAL_HEADER.size
    end = len(blob)
    while pos < end:
        if pos + RECORD_HEADER_LEN > end:
            raise TruncatedFile("partial record header", len(frames))
        ts_sec, ts_usec, incl, _orig = record.unpack_from(blob, pos)
        pos += RECORD_HEADER_LEN
        if pos + incl > end:
            raise TruncatedFile("partial record body", len(frames))
        frames.append(RawFrame(ts_sec, ts_usec, blob[pos:pos + incl]))
        pos += incl
    return frames


def pcap_bytes(frames: Sequence[RawFrame]) -> bytes:
    snaplen = max([MAX_FRAME] + [len(f.data) for f in frames])
    parts = [GLOBAL_HEADER.pack(MAGIC_USEC, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    pack = struct.Struct("<IIII").pack
    for f in frames:
        if len(f.data) > MAX_FRAME:
            raise ValueError(f"frame of {len(f.data)} bytes exceeds {MAX_FRAME}")
        parts.append(pack(f.ts_sec, f.ts_usec, len(f.data), len(f.data)))
        parts.append(f.data)
    return b"".join(parts)


def write_pcap(path: str | os.PathLike, frames: Sequence[RawFrame]) -> None:
    """Write ``frames`` as a little-endian classic pcap, atomically."""
    atomic_write(path, pcap_bytes(frames))


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- Ethernet / IPv4 / TCP --------------------------------------------------


class FlowKey(NamedTuple):
    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int

    def reverse(self) -> "FlowKey":
        return FlowKey(self.dst_ip, self.dst_port, self.src_ip, self.src_port)

    def __str__(self) -> str:
        return f"{self.src_ip}:{self.src_port}->{self.dst_ip}:{self.dst_port}"


class TcpSegment(NamedTuple):
    flow: FlowKey
    seq: int
    flags: int
    payload: bytes


# Parse outcomes other than a segment.
NOT_TCP = "non_tcp"
IPV6 = "ipv6"
VLAN = "vlan"
MALFORMED = "malformed"

_ip_cache: Dict[bytes, str] = {}


def _ip(raw: bytes) -> str:
    text = _ip_cache.get(raw)
    if text is None:
        text = str(ipaddress.IPv4Address(raw))
        _ip_cache[raw] = text
    return text


def parse_tcp(data: bytes) -> TcpSegment | str:
    """Decode an Ethernet/IPv4/TCP frame, or return why it was skipped."""
    if len(data) < 14:
        return MALFORMED
    ethertype = (data[12] << 8) | data[13]
    if ethertype != ETH_IPV4:
        if ethertype == ETH_IPV6:
            return IPV6
        if ethertype in ETH_VLAN:
            return VLAN
        return NOT_TCP
    if len(data) < 34 or data[14] >> 4 != 4:
        return MALFORMED
    ihl = (data[14] & 0x0F) * 4
    total_len = (data[16] << 8) | data[17]
    if ihl < 20 or total_len < ihl or 14 + total_len > len(data):
        return MALFORMED
    if data[23] != IPPROTO_TCP:
        return NOT_TCP
    if (data[20] & 0x3F) or data[21]:  # MF flag or fragment offset
        return NOT_TCP
    tcp = 14 + ihl
    ip_end = 14 + total_len
    if tcp + 20 > ip_end:
        return MALFORMED
    doff = (data[tcp + 12] >> 4) * 4
    if doff < 20 or tcp + doff > ip_end:
        return MALFORMED
    sport, dport, seq = struct.unpack_from("!HHI", data, tcp)
    flow = FlowKey(_ip(data[26:30]), sport, _ip(data[30:34]), dport)
    return TcpSegment(flow, seq, data[tcp + 13], data[tcp + doff:ip_end])


# -- reassembly -------------------------------------------------------------


@dataclass(frozen=True)
class StreamChunk:
    flow: FlowKey
    offset: int
    payload: bytes
    timestamp: float
    frame_index: int  # frame that carried these bytes


@dataclass(frozen=True)
class GapWarning:
    flow: FlowKey
    offset: int
    discarded_bytes: int


@dataclass
class ReassemblyStats:
    frames: int = 0
    tcp_segments: int = 0
    skipped: Counter = field(default_factory=Counter)
    duplicates: int = 0
    gaps: List[GapWarning] = field(default_factory=list)


def _rel(seq: int, base: int) -> int:
    """Signed 32-bit distance from ``base`` to ``seq``."""
    d = (seq - base) & 0xFFFFFFFF
    return d - (1 << 32) if d >= 1 << 31 else d


def reassemble(
    frames: Sequence[RawFrame], stats: Optional[ReassemblyStats] = None
) -> Dict[FlowKey, List[StreamChunk]]:
    """Rebuild each TCP direction's byte stream from ``frames``.

    Offsets are relative to the lowest sequence number seen on the flow.
    SYN/FIN/RST carry no special meaning. Bytes behind a hole that never
    fills are dropped and reported as a :class:`GapWarning`.
    """
    stats = stats if stats is not None else ReassemblyStats()
    segments: Dict[FlowKey, List[Tuple[int, int, float, bytes]]] = {}
    for index, frame in enumerate(frames):
        stats.frames += 1
        seg = parse_tcp(frame.data)
        if isinstance(seg, str):
            stats.skipped[seg] += 1
            if seg == VLAN:
                log.warning("frame %d: VLAN-tagged frame skipped", index)
            continue
        stats.tcp_segments += 1
        if seg.payload:
            segments.setdefault(seg.flow, []).append((seg.seq, index, frame.timestamp, seg.payload))

    result: Dict[FlowKey, List[StreamChunk]] = {}
    for flow, segs in segments.items():
        first = segs[0][0]
        base = first + min(_rel(s[0], first) for s in segs)
        result[flow] = _assemble_flow(flow, segs, base, stats)
    return result


def _assemble_flow(flow: FlowKey, segs, base: int, stats: ReassemblyStats) -> List[StreamChunk]:
    chunks: List[StreamChunk] = []
    expected = 0
    pending: Dict[int, Tuple[int, float, bytes]] = {}
    for seq, index, ts, payload in segs:
        off = _rel(seq, base)
        end = off + len(payload)
        if end <= expected:
            stats.duplicates += 1
            continue
        if off > expected:
            prev = pending.get(off)
            if prev is None or len(prev[2]) < len(payload):
                pending[off] = (index, ts, payload)
            else:
                stats.duplicates += 1
            continue
        chunks.append(StreamChunk(flow, expected, payload[expected - off:], ts, index))
        expected = end
        # Drain buffered segments that are now contiguous.
        while pending:
            ready = [o for o in pending if o <= expected]
            if not ready:
                break
            for o in sorted(ready):
                carrier, _, p = pending.pop(o)
                if o + len(p) <= expected:
                    stats.duplicates += 1
                    continue
                chunks.append(StreamChunk(flow, expected, p[expected - o:], ts, carrier))
                expected = o + len(p)
    if pending:
        lost = sum(len(p) for _, _, p in pending.values())
        gap = GapWarning(flow, expected, lost)
        stats.gaps.append(gap)
        log.warning("flow %s: gap at offset %d never filled, %d bytes discarded", flow, expected, lost)
    return chunks


def flow_streams(frames: Iterable[RawFrame]) -> Dict[FlowKey, bytes]:
    """Convenience: the reassembled byte stream of every flow direction."""
    return {k: b"".join(c.payload for c in v) for k, v in reassemble(list(frames)).items()}
