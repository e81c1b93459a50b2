"""Flatten decoded MMS traffic into per-request, per-name records."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .codec.ber import MalformedTlv
from .codec.envelope import EnvelopeStats, decode_envelope
from .codec.mms import MmsMessage, PduKind, Service, as_service, decode_mms, service_from_name, service_name
from .pcapio import FlowKey, RawFrame, ReassemblyStats, reassemble

log = logging.getLogger(__name__)

ABSENT = "ABSENT"
EMPTY = "EMPTY"


def canonical_or_ident(value: Optional[bytes]) -> str:
    """ABSENT, EMPTY, or the lowercase hex of the orIdent bytes."""
    if value is None:
        return ABSENT
    if not value:
        return EMPTY
    return value.hex()


def or_ident_from_canonical(text: str) -> Optional[bytes]:
    if text == ABSENT:
        return None
    if text == EMPTY:
        return b""
    return bytes.fromhex(text)


@dataclass(frozen=True)
class ExtractedRecord:
    timestamp: float
    src_ip: str
    dst_ip: str
    service: int
    domain_id: str
    item_id: str
    time_acc: Optional[Tuple[int, int]] = None
    or_ident: Optional[bytes] = None
    or_cat: Optional[int] = None
    frame_index: int = -1

    @property
    def or_ident_canonical(self) -> str:
        return canonical_or_ident(self.or_ident)

    @property
    def is_read(self) -> bool:
        return self.service == Service.READ

    @property
    def is_write(self) -> bool:
        return self.service == Service.WRITE


@dataclass
class ExtractionReport:
    total_frames: int = 0
    mms_pdus: int = 0
    service_counts: Dict[int, int] = field(default_factory=dict)
    initiate_requests: int = 0
    responses: int = 0
    records: int = 0
    decode_errors: int = 0
    not_mms: int = 0
    resyncs: int = 0
    gaps: int = 0
    skipped_frames: Dict[str, int] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "total_frames": self.total_frames,
            "mms_pdus": self.mms_pdus,
            "service_requests": {service_name(k): v for k, v in sorted(self.service_counts.items())},
            "initiate_requests": self.initiate_requests,
            "responses": self.responses,
            "records": self.records,
            "decode_errors": self.decode_errors,
            "not_mms": self.not_mms,
            "resyncs": self.resyncs,
            "gaps": self.gaps,
            "skipped_frames": dict(sorted(self.skipped_frames.items())),
        }


@dataclass(frozen=True)
class DecodedPdu:
    flow: FlowKey
    timestamp: float
    frame_index: int
    offset: int
    message: MmsMessage


@dataclass
class Capture:
    """Every MMS PDU of a capture, in time order, plus bookkeeping."""

    pdus: List[DecodedPdu]
    report: ExtractionReport
    error_frames: Set[int]


def decode_capture(frames: Sequence[RawFrame]) -> Capture:
    rstats = ReassemblyStats()
    streams = reassemble(frames, rstats)
    estats = EnvelopeStats()
    report = ExtractionReport(total_frames=len(frames))
    pdus: List[DecodedPdu] = []
    error_frames: Set[int] = set()
    for flow, chunks in streams.items():
        for unit in decode_envelope(chunks, estats):
            try:
                msg = decode_mms(unit.pdu)
            except MalformedTlv as exc:
                report.decode_errors += 1
                error_frames.add(unit.frame_index)
                log.debug("frame %d: undecodable MMS PDU: %s", unit.frame_index, exc)
                continue
            pdus.append(DecodedPdu(flow, unit.timestamp, unit.frame_index, unit.offset, msg))
    pdus.sort(key=lambda p: (p.timestamp, p.frame_index, p.offset))

    counts: Counter = Counter()
    for p in pdus:
        kind = p.message.kind
        if kind is PduKind.CONFIRMED_REQUEST:
            counts[p.message.service] += 1
        elif kind is PduKind.CONFIRMED_RESPONSE:
            report.responses += 1
        elif kind is PduKind.INITIATE_REQUEST:
            report.initiate_requests += 1
    report.mms_pdus = len(pdus)
    report.service_counts = {as_service(k): v for k, v in sorted(counts.items())}
    report.not_mms = estats.not_mms
    report.resyncs = estats.resyncs
    report.gaps = len(rstats.gaps)
    report.skipped_frames = dict(rstats.skipped)
    error_frames.update(estats.frames_desync)
    return Capture(pdus, report, error_frames)


def records_from_pdu(pdu: DecodedPdu) -> List[ExtractedRecord]:
    msg = pdu.message
    if msg.kind is not PduKind.CONFIRMED_REQUEST:
        return []
    src, dst = pdu.flow.src_ip, pdu.flow.dst_ip
    out: List[ExtractedRecord] = []
    if msg.service == Service.WRITE:
        for item in msg.writes:
            oper = item.oper
            out.append(
                ExtractedRecord(
                    pdu.timestamp,
                    src,
                    dst,
                    msg.service,
                    item.name.domain_id,
                    item.name.item_id,
                    time_acc=oper.time_accuracy() if oper else None,
                    or_ident=oper.or_ident if oper else None,
                    or_cat=oper.or_cat if oper else None,
                    frame_index=pdu.frame_index,
                )
            )
    else:
        for name in msg.reads:
            out.append(
                ExtractedRecord(
                    pdu.timestamp, src, dst, msg.service, name.domain_id, name.item_id, frame_index=pdu.frame_index
                )
            )
    return out


def records_from_capture(capture: Capture) -> List[ExtractedRecord]:
    records = [r for p in capture.pdus for r in records_from_pdu(p)]
    capture.report.records = len(records)
    return records


def extract(frames: Sequence[RawFrame]) -> Tuple[List[ExtractedRecord], ExtractionReport]:
    """Records for every MMS request in ``frames``, ordered by timestamp."""
    capture = decode_capture(frames)
    return records_from_capture(capture), capture.report


# -- CSV --------------------------------------------------------------------

CSV_HEADER = ["ts", "src", "dst", "service", "domain", "item", "acc1", "acc2", "orident", "orcat"]


def records_to_csv(records: Iterable[ExtractedRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        acc1, acc2 = (f"0x{r.time_acc[0]:02x}", f"0x{r.time_acc[1]:02x}") if r.time_acc else ("", "")
        orident = "" if r.or_ident is None else canonical_or_ident(r.or_ident)
        writer.writerow(
            [
                f"{r.timestamp:.6f}",
                r.src_ip,
                r.dst_ip,
                service_name(r.service),
                r.domain_id,
                r.item_id,
                acc1,
                acc2,
                orident,
                "" if r.or_cat is None else r.or_cat,
            ]
        )
    return buf.getvalue()


def records_from_csv(text: str) -> List[ExtractedRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        acc = (int(row["acc1"], 16), int(row["acc2"], 16)) if row["acc1"] else None
        out.append(
            ExtractedRecord(
                float(row["ts"]),
                row["src"],
                row["dst"],
                as_service(service_from_name(row["service"])),
                row["domain"],
                row["item"],
                time_acc=acc,
                or_ident=None if row["orident"] == "" else or_ident_from_canonical(row["orident"]),
                or_cat=int(row["orcat"]) if row["orcat"] else None,
            )
        )
    return out
