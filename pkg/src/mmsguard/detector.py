"""Apply a baseline and attack signatures to unseen traffic."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

from .baseline import BLOCKING, MONITOR, AttackSignature, Baseline, read_key, write_key
from .codec.mms import Service, as_service, service_from_name, service_name
from .extract import ExtractedRecord, canonical_or_ident, or_ident_from_canonical

READ_UNKNOWN = "read pair unknown"
WRITE_UNKNOWN = "write tuple unknown"


@dataclass(frozen=True)
class AttackPath:
    timestamp: float
    origin_ip: str
    target_ip: str
    operation: int
    domain_id: str
    item_id: str
    component: Optional[str]
    signature_id: str
    severity: str
    frame_index: int = -1


@dataclass(frozen=True)
class NovelCandidate:
    record: ExtractedRecord
    reason: str


@dataclass
class DetectionStats:
    scanned: int = 0
    matched: int = 0
    whitelisted: int = 0
    novel: int = 0
    ignored: int = 0


@dataclass
class Detection:
    paths: List[AttackPath] = field(default_factory=list)
    novel_candidates: List[NovelCandidate] = field(default_factory=list)
    stats: DetectionStats = field(default_factory=DetectionStats)

    @property
    def blocking(self) -> List[AttackPath]:
        return [p for p in self.paths if p.severity == BLOCKING]


class _Index:
    """Signatures bucketed by service, each bucket in id order."""

    def __init__(self, signatures: Sequence[AttackSignature]):
        self.by_service: Dict[int, List[AttackSignature]] = {}
        for sig in sorted(signatures, key=lambda s: s.id):
            self.by_service.setdefault(int(sig.service), []).append(sig)

    def first_match(self, record: ExtractedRecord) -> Optional[AttackSignature]:
        for sig in self.by_service.get(int(record.service), ()):
            if sig.matches(record):
                return sig
        return None


def component_for(item_id: str, ggio_map) -> Optional[str]:
    return ggio_map.get(item_id.split("$", 1)[0]) if ggio_map else None


def detect(
    records: Sequence[ExtractedRecord],
    baseline: Baseline,
    signatures: Sequence[AttackSignature],
) -> Detection:
    """Classify each record as matched, whitelisted, novel or ignored.

    A signature hit wins over whitelist membership. When several
    signatures match, the smallest id is reported.
    """
    index = _Index(signatures)
    out = Detection()
    st = out.stats
    reads = baseline.read_whitelist
    writes = baseline.write_whitelist
    for r in records:
        st.scanned += 1
        sig = index.first_match(r)
        if sig is not None:
            st.matched += 1
            out.paths.append(
                AttackPath(
                    r.timestamp,
                    r.src_ip,
                    r.dst_ip,
                    r.service,
                    r.domain_id,
                    r.item_id,
                    component_for(r.item_id, baseline.ggio_map),
                    sig.id,
                    sig.severity,
                    r.frame_index,
                )
            )
        elif r.is_read:
            if read_key(r) in reads:
                st.whitelisted += 1
            else:
                st.novel += 1
                out.novel_candidates.append(NovelCandidate(r, READ_UNKNOWN))
        elif r.is_write:
            if write_key(r) in writes:
                st.whitelisted += 1
            else:
                st.novel += 1
                out.novel_candidates.append(NovelCandidate(r, WRITE_UNKNOWN))
        else:
            st.ignored += 1
    return out


# -- rendering --------------------------------------------------------------

TEXT_HEADER = "# ts origin -> target [service] domain/item (component) sig=id"
CSV_COLUMNS = ["ts", "origin", "target", "service", "domain", "item", "component", "signature", "severity", "frame"]


def format_path(p: AttackPath) -> str:
    return (
        f"{p.timestamp:.6f} {p.origin_ip} -> {p.target_ip} [{service_name(p.operation)}] "
        f"{p.domain_id}/{p.item_id} ({p.component or '-'}) sig={p.signature_id}"
    )


def _path_dict(p: AttackPath) -> dict:
    d = asdict(p)
    d["operation"] = service_name(p.operation)
    return d


def _record_dict(r: ExtractedRecord) -> dict:
    return {
        "timestamp": r.timestamp,
        "src_ip": r.src_ip,
        "dst_ip": r.dst_ip,
        "service": service_name(r.service),
        "domain_id": r.domain_id,
        "item_id": r.item_id,
        "time_acc": None if r.time_acc is None else [f"0x{b:02x}" for b in r.time_acc],
        "or_ident": None if r.or_ident is None else canonical_or_ident(r.or_ident),
        "or_cat": r.or_cat,
        "frame_index": r.frame_index,
    }


def render_report(d: Detection, fmt: str = "text") -> bytes:
    if fmt == "text":
        lines = [TEXT_HEADER] + [format_path(p) for p in d.paths]
        return ("\n".join(lines) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in d.paths:
            w.writerow(
                [f"{p.timestamp:.6f}", p.origin_ip, p.target_ip, service_name(p.operation), p.domain_id,
                 p.item_id, p.component or "", p.signature_id, p.severity, p.frame_index]
            )
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {
            "paths": [_path_dict(p) for p in d.paths],
            "novel_candidates": [dict(_record_dict(c.record), reason=c.reason) for c in d.novel_candidates],
            "stats": asdict(d.stats),
        }
        return (json.dumps(doc, indent=2) + "\n").encode()
    raise ValueError(f"unknown report format {fmt!r}")


def detection_from_json(data: bytes | str) -> Detection:
    doc = json.loads(data)
    paths = []
    for p in doc["paths"]:
        p = dict(p)
        p["operation"] = as_service(service_from_name(p["operation"]))
        paths.append(AttackPath(**p))
    novel = []
    for c in doc["novel_candidates"]:
        acc = c["time_acc"]
        rec = ExtractedRecord(
            c["timestamp"],
            c["src_ip"],
            c["dst_ip"],
            as_service(service_from_name(c["service"])),
            c["domain_id"],
            c["item_id"],
            None if acc is None else (int(acc[0], 16), int(acc[1], 16)),
            None if c["or_ident"] is None else or_ident_from_canonical(c["or_ident"]),
            c["or_cat"],
            c["frame_index"],
        )
        novel.append(NovelCandidate(rec, c["reason"]))
    return Detection(paths, novel, DetectionStats(**doc["stats"]))
