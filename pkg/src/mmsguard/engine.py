"""Replay a capture through a rule set: drop, pass and alert per frame."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .baseline import BLOCKING, Baseline
from .detector import AttackPath, component_for
from .extract import ExtractedRecord, decode_capture, records_from_pdu
from .pcapio import FlowKey, RawFrame, atomic_write, write_pcap
from .rulegen import NidsRule

log = logging.getLogger(__name__)

# sid recorded for frames withheld under fail-closed because they did not decode
UNDECODABLE_SID = 0


@dataclass(frozen=True)
class Alert:
    timestamp: float
    sid: int
    msg: str
    flow: FlowKey


@dataclass
class FilterStats:
    frames: int = 0
    passed: int = 0
    dropped: int = 0
    alerts: int = 0
    decode_errors: int = 0


@dataclass
class FilterOutcome:
    passed: List[RawFrame] = field(default_factory=list)
    dropped: List[Tuple[RawFrame, int, Optional[AttackPath]]] = field(default_factory=list)
    alerts: List[Alert] = field(default_factory=list)
    stats: FilterStats = field(default_factory=FilterStats)
    passed_indices: List[int] = field(default_factory=list)
    dropped_indices: List[int] = field(default_factory=list)


def _first(rules: Sequence[NidsRule], record: ExtractedRecord) -> Optional[NidsRule]:
    for rule in rules:
        if rule.matches(record):
            return rule
    return None


def filter_frames(
    frames: Sequence[RawFrame],
    rules: Sequence[NidsRule],
    baseline: Optional[Baseline] = None,
    fail_closed: bool = False,
) -> FilterOutcome:
    """Decode ``frames`` as offline analysis does and apply ``rules``.

    A frame that completes a request with a record matching a drop rule is
    withheld; the smallest matching sid is reported. Alert rules only log.
    Frames whose MMS did not decode pass unless ``fail_closed``.
    """
    ordered = sorted(rules, key=lambda r: r.sid)
    drops = [r for r in ordered if r.action == "drop"]
    alerts = [r for r in ordered if r.action != "drop"]
    ggio = baseline.ggio_map if baseline else {}

    capture = decode_capture(frames)
    verdict: Dict[int, Tuple[int, AttackPath]] = {}
    out = FilterOutcome()
    for pdu in capture.pdus:
        for rec in records_from_pdu(pdu):
            rule = _first(drops, rec)
            if rule is not None:
                current = verdict.get(rec.frame_index)
                if current is None or rule.sid < current[0]:
                    path = AttackPath(
                        rec.timestamp,
                        rec.src_ip,
                        rec.dst_ip,
                        rec.service,
                        rec.domain_id,
                        rec.item_id,
                        component_for(rec.item_id, ggio),
                        f"sid:{rule.sid}",
                        BLOCKING,
                        rec.frame_index,
                    )
                    verdict[rec.frame_index] = (rule.sid, path)
                continue
            rule = _first(alerts, rec)
            if rule is not None:
                out.alerts.append(Alert(rec.timestamp, rule.sid, rule.msg, pdu.flow))

    out.stats.decode_errors = len(capture.error_frames)
    if fail_closed:
        for index in capture.error_frames:
            if index >= 0:
                verdict.setdefault(index, (UNDECODABLE_SID, None))

    for index, frame in enumerate(frames):
        hit = verdict.get(index)
        if hit is None:
            out.passed.append(frame)
            out.passed_indices.append(index)
        else:
            out.dropped.append((frame, hit[0], hit[1]))
            out.dropped_indices.append(index)
    out.stats.frames = len(frames)
    out.stats.passed = len(out.passed)
    out.stats.dropped = len(out.dropped)
    out.stats.alerts = len(out.alerts)
    if out.stats.decode_errors:
        log.info("%d frames carried undecodable MMS (%s)", out.stats.decode_errors,
                 "dropped" if fail_closed else "passed")
    return out


def write_filtered(outcome: FilterOutcome, path: str | os.PathLike) -> None:
    write_pcap(path, outcome.passed)


def alert_log(outcome: FilterOutcome) -> str:
    """JSON lines for alerts and drops, in time order."""
    entries = []
    for a in outcome.alerts:
        entries.append({"ts": a.timestamp, "sid": a.sid, "action": "alert", "msg": a.msg,
                        "src": a.flow.src_ip, "dst": a.flow.dst_ip})
    for frame, sid, path in outcome.dropped:
        entries.append({"ts": frame.timestamp, "sid": sid, "action": "drop",
                        "msg": path.item_id if path else "undecodable MMS",
                        "src": path.origin_ip if path else None, "dst": path.target_ip if path else None})
    entries.sort(key=lambda e: (e["ts"], e["sid"]))
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries)


def write_alert_log(outcome: FilterOutcome, path: str | os.PathLike) -> None:
    atomic_write(path, alert_log(outcome).encode())
