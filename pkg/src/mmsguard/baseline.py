"""Whitelist learning, attack-trace diffing and signature extraction."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from .codec.mms import PduKind, Service, as_service, service_name, service_from_name
from .extract import ABSENT, DecodedPdu, EMPTY, ExtractedRecord, canonical_or_ident
from .pcapio import atomic_write

log = logging.getLogger(__name__)

BASELINE_VERSION = 1
ZERO64_HEX = "00" * 64


class EmptyBenign(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


class ReadKey(NamedTuple):
    domain_id: str
    item_id: str


class WriteKey(NamedTuple):
    domain_id: str
    item_id: str
    time_acc: Optional[Tuple[int, int]]
    or_ident: str  # canonical form, see extract.canonical_or_ident


def read_key(r: ExtractedRecord) -> ReadKey:
    return ReadKey(r.domain_id, r.item_id)


def write_key(r: ExtractedRecord) -> WriteKey:
    return WriteKey(r.domain_id, r.item_id, r.time_acc, r.or_ident_canonical)


def _write_sort_key(k: WriteKey):
    return (k.domain_id, k.item_id, k.time_acc or (-1, -1), k.or_ident)


@dataclass(frozen=True)
class Baseline:
    read_whitelist: FrozenSet[ReadKey]
    write_whitelist: FrozenSet[WriteKey]
    ggio_map: Mapping[str, str] = field(default_factory=dict)
    sources: Tuple[str, ...] = ()
    learned_at: str = ""

    def component_of(self, item_id: str) -> Optional[str]:
        return self.ggio_map.get(item_id.split("$", 1)[0])


def learn(
    records: Iterable[ExtractedRecord],
    ggio_map: Optional[Mapping[str, str]] = None,
    sources: Sequence[str] = (),
) -> Baseline:
    """Build read/write whitelists from records of asserted-benign traffic.

    ``learned_at`` is the time of the last learned record, so the same
    capture always yields the same baseline.
    """
    reads = set()
    writes = set()
    last = None
    for r in records:
        if r.is_read:
            reads.add(read_key(r))
        elif r.is_write:
            writes.add(write_key(r))
        else:
            continue
        last = r.timestamp if last is None else max(last, r.timestamp)
    if last is None:
        raise EmptyBenign("benign capture contains no MMS read or write requests")
    stamp = datetime.fromtimestamp(last, tz=timezone.utc).isoformat(timespec="microseconds")
    return Baseline(frozenset(reads), frozenset(writes), dict(ggio_map or {}), tuple(sources), stamp)


def whitelist_growth(records: Sequence[ExtractedRecord], step: int = 1000) -> List[Tuple[int, int]]:
    """New whitelist keys per block of ``step`` records, as (records seen, new keys)."""
    seen: set = set()
    curve = []
    new = 0
    for i, r in enumerate(records, 1):
        key = read_key(r) if r.is_read else write_key(r) if r.is_write else None
        if key is not None and (r.service, key) not in seen:
            seen.add((r.service, key))
            new += 1
        if i % step == 0 or i == len(records):
            curve.append((i, new))
            new = 0
    return curve


def diff(baseline: Baseline, attack_records: Iterable[ExtractedRecord]) -> Tuple[set, set]:
    """Keys present in the attack trace but not whitelisted."""
    potential_read = set()
    potential_write = set()
    for r in attack_records:
        if r.is_read:
            key = read_key(r)
            if key not in baseline.read_whitelist:
                potential_read.add(key)
        elif r.is_write:
            wkey = write_key(r)
            if wkey not in baseline.write_whitelist:
                potential_write.add(wkey)
    return potential_read, potential_write


# -- signatures -------------------------------------------------------------

FORM_ABSENT = "ABSENT"
FORM_ZERO64 = "ALL_ZERO_64"
FORM_EXACT = "EXACT"
FORM_ANY = "ANY"

LEARNED_M1 = "LEARNED_M1"
FLAGGED_M2 = "FLAGGED_M2"
BUILTIN = "BUILTIN"

BLOCKING = "BLOCKING"
MONITOR = "MONITOR"


@dataclass(frozen=True)
class AttackSignature:
    id: str
    service: int
    time_acc: Optional[Tuple[int, int]] = None
    or_ident_form: str = FORM_ANY
    or_ident_hex: Optional[str] = None  # only for FORM_EXACT
    domain: Optional[str] = None
    item: Optional[str] = None
    item_is_prefix: bool = False
    provenance: str = LEARNED_M1
    description: str = ""

    def __post_init__(self):
        if self.or_ident_form not in (FORM_ABSENT, FORM_ZERO64, FORM_EXACT, FORM_ANY):
            raise ValueError(f"unknown orIdent form {self.or_ident_form!r}")
        if (self.or_ident_form == FORM_EXACT) != (self.or_ident_hex is not None):
            raise ValueError("or_ident_hex is required for EXACT and only for EXACT")
        if self.time_acc is None and self.or_ident_form == FORM_ANY and self.domain is None and self.item is None:
            raise ValueError(f"signature {self.id} constrains nothing beyond the service")

    @property
    def severity(self) -> str:
        return BLOCKING if self.service == Service.WRITE else MONITOR

    def matches(self, r: ExtractedRecord) -> bool:
        if r.service != self.service:
            return False
        if self.time_acc is not None and r.time_acc != self.time_acc:
            return False
        form = self.or_ident_form
        if form == FORM_ABSENT:
            if r.or_ident is not None:
                return False
        elif form == FORM_ZERO64:
            if r.or_ident is None or len(r.or_ident) != 64 or any(r.or_ident):
                return False
        elif form == FORM_EXACT:
            if r.or_ident is None or r.or_ident.hex() != self.or_ident_hex:
                return False
        if self.domain is not None and r.domain_id != self.domain:
            return False
        if self.item is not None:
            if self.item_is_prefix:
                if not r.item_id.startswith(self.item):
                    return False
            elif r.item_id != self.item:
                return False
        return True

    def matches_key(self, key: WriteKey) -> bool:
        probe = ExtractedRecord(
            0.0,
            "",
            "",
            Service.WRITE,
            key.domain_id,
            key.item_id,
            key.time_acc,
            None if key.or_ident == ABSENT else b"" if key.or_ident == EMPTY else bytes.fromhex(key.or_ident),
        )
        return self.matches(probe)


def or_ident_form(canonical: str) -> Tuple[str, Optional[str]]:
    if canonical == ABSENT:
        return FORM_ABSENT, None
    if canonical == ZERO64_HEX:
        return FORM_ZERO64, None
    if canonical == EMPTY:
        return FORM_EXACT, ""
    return FORM_EXACT, canonical


def _acc_token(acc: Optional[Tuple[int, int]]) -> str:
    return "none" if acc is None else f"{acc[0]:02x},{acc[1]:02x}"


def _form_token(form: str, hex_: Optional[str]) -> str:
    return {FORM_ABSENT: "absent", FORM_ZERO64: "zero64", FORM_ANY: "any"}.get(form) or f"hex:{hex_}"


def write_signature_id(acc, form, hex_, item: Optional[str] = None) -> str:
    sid = f"write:acc={_acc_token(acc)}:orident={_form_token(form, hex_)}"
    if item is not None:
        sid += f":item={item}"
    return sid


def is_component(item_id: str, ggio_map: Mapping[str, str]) -> bool:
    return item_id.split("$", 1)[0] in ggio_map or "$CO$" in item_id


@dataclass(frozen=True)
class Rejected:
    key: tuple
    reason: str


def validate_and_sign(
    potential_write: Iterable[WriteKey],
    potential_read: Iterable[ReadKey],
    ggio_map: Mapping[str, str],
    write_whitelist: Iterable[WriteKey] = (),
    provenance: str = LEARNED_M1,
) -> Tuple[List[AttackSignature], List[Rejected]]:
    """Promote diffed keys to signatures.

    Write keys that target a substation component become blocking
    signatures over (service, timeAccuracy pair, orIdent form). When that
    generalisation would also match a whitelisted write, the signature is
    narrowed to the exact domain and item. Read keys become monitor-only
    signatures. Returns ``(signatures, rejected)`` sorted by id.
    """
    whitelist = list(write_whitelist)
    sigs: Dict[str, AttackSignature] = {}
    rejected: List[Rejected] = []
    for key in sorted(potential_write, key=_write_sort_key):
        if not is_component(key.item_id, ggio_map):
            rejected.append(Rejected(tuple(key), "item names no mapped GGIO node and no $CO$ control object"))
            continue
        if key.time_acc is None and key.or_ident == ABSENT:
            rejected.append(Rejected(tuple(key), "write carries no Oper fingerprint to generalise"))
            continue
        form, hex_ = or_ident_form(key.or_ident)
        component = ggio_map.get(key.item_id.split("$", 1)[0])
        target = f" on {component}" if component else ""
        sig = AttackSignature(
            id=write_signature_id(key.time_acc, form, hex_),
            service=Service.WRITE,
            time_acc=key.time_acc,
            or_ident_form=form,
            or_ident_hex=hex_,
            provenance=provenance,
            description=f"Write with timeAccuracy {_acc_token(key.time_acc)} and orIdent {_form_token(form, hex_)}{target}",
        )
        if any(sig.matches_key(w) for w in whitelist):
            sig = AttackSignature(
                id=write_signature_id(key.time_acc, form, hex_, item=f"{key.domain_id}/{key.item_id}"),
                service=Service.WRITE,
                time_acc=key.time_acc,
                or_ident_form=form,
                or_ident_hex=hex_,
                domain=key.domain_id,
                item=key.item_id,
                provenance=provenance,
                description=sig.description + f" to {key.domain_id}/{key.item_id}",
            )
        sigs.setdefault(sig.id, sig)
    for rkey in sorted(potential_read):
        sig = AttackSignature(
            id=f"read:{rkey.domain_id}/{rkey.item_id}",
            service=Service.READ,
            domain=rkey.domain_id,
            item=rkey.item_id,
            provenance=provenance,
            description=f"Reconnaissance read of non-whitelisted {rkey.domain_id}/{rkey.item_id}",
        )
        sigs.setdefault(sig.id, sig)
    return [sigs[k] for k in sorted(sigs)], rejected


def builtin_signatures() -> List[AttackSignature]:
    """The two published write fingerprints of known attack tooling."""
    return [
        AttackSignature(
            id=write_signature_id((0x0A, 0x00), FORM_ABSENT, None),
            service=Service.WRITE,
            time_acc=(0x0A, 0x00),
            or_ident_form=FORM_ABSENT,
            provenance=BUILTIN,
            description="libiec61850-based control script: timeAccuracy 0a,00 and no orIdent",
        ),
        AttackSignature(
            id=write_signature_id((0x0A, 0x0A), FORM_ZERO64, None),
            service=Service.WRITE,
            time_acc=(0x0A, 0x0A),
            or_ident_form=FORM_ZERO64,
            provenance=BUILTIN,
            description="IEC61850bean control write: timeAccuracy 0a,0a and 64-byte zero orIdent",
        ),
    ]


# -- GGIO -> dataset map ----------------------------------------------------


def build_ggio_map(pdus: Iterable[DecodedPdu], stats: Optional[dict] = None) -> Dict[str, str]:
    """Bind GGIO logical nodes to the datasets that list them.

    Each GetNamedVariableListAttributes request is paired with the response
    carrying the same invoke id on the reverse direction of its flow.
    """
    pending: Dict[tuple, str] = {}
    mapping: Dict[str, str] = {}
    unmatched = 0
    for p in pdus:
        msg = p.message
        if msg.service != Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES:
            continue
        if msg.kind is PduKind.CONFIRMED_REQUEST and msg.reads:
            pending[(p.flow, msg.invoke_id)] = msg.reads[0].item_id.rsplit("$", 1)[-1]
        elif msg.kind is PduKind.CONFIRMED_RESPONSE:
            dataset = pending.pop((p.flow.reverse(), msg.invoke_id), None)
            if dataset is None:
                unmatched += 1
                continue
            for member in msg.listed:
                node = member.logical_node
                if "GGIO" in node:
                    mapping.setdefault(node, dataset)
    if stats is not None:
        stats["unmatched_responses"] = unmatched
    if unmatched:
        log.info("%d dataset-directory responses had no matching request", unmatched)
    return dict(sorted(mapping.items()))


# -- persistence ------------------------------------------------------------


def _hex_byte(b: Optional[int]) -> Optional[str]:
    return None if b is None else f"0x{b:02x}"


def _parse_hex_byte(text: Optional[str]) -> Optional[int]:
    if text is None:
        return None
    value = int(text, 16)
    if not 0 <= value <= 0xFF:
        raise ValueError(f"byte value out of range: {text}")
    return value


def baseline_to_json(b: Baseline) -> str:
    doc = {
        "version": BASELINE_VERSION,
        "read_whitelist": [list(k) for k in sorted(b.read_whitelist)],
        "write_whitelist": [
            [k.domain_id, k.item_id, _hex_byte(k.time_acc[0] if k.time_acc else None),
             _hex_byte(k.time_acc[1] if k.time_acc else None), k.or_ident]
            for k in sorted(b.write_whitelist, key=_write_sort_key)
        ],
        "ggio_map": dict(sorted(b.ggio_map.items())),
        "provenance": {"sources": list(b.sources), "learned_at": b.learned_at},
    }
    return json.dumps(doc, indent=2) + "\n"


def baseline_from_json(text: str) -> Baseline:
    doc = json.loads(text)
    if doc.get("version") != BASELINE_VERSION:
        raise SchemaMismatch(f"baseline version {doc.get('version')!r}, expected {BASELINE_VERSION}")
    reads = frozenset(ReadKey(d, i) for d, i in doc["read_whitelist"])
    writes = set()
    for d, i, a1, a2, ident in doc["write_whitelist"]:
        acc = None if a1 is None else (_parse_hex_byte(a1), _parse_hex_byte(a2))
        writes.add(WriteKey(d, i, acc, ident))
    prov = doc.get("provenance", {})
    return Baseline(reads, frozenset(writes), dict(doc.get("ggio_map", {})), tuple(prov.get("sources", ())), prov.get("learned_at", ""))


def save_baseline(path: str | os.PathLike, b: Baseline) -> None:
    atomic_write(path, baseline_to_json(b).encode())


def load_baseline(path: str | os.PathLike) -> Baseline:
    with open(path, encoding="utf-8") as fh:
        return baseline_from_json(fh.read())


def signature_to_dict(s: AttackSignature) -> dict:
    return {
        "id": s.id,
        "service": service_name(s.service),
        "time_acc": None if s.time_acc is None else [_hex_byte(s.time_acc[0]), _hex_byte(s.time_acc[1])],
        "or_ident_form": s.or_ident_form,
        "or_ident_hex": s.or_ident_hex,
        "domain": s.domain,
        "item": s.item,
        "item_is_prefix": s.item_is_prefix,
        "provenance": s.provenance,
        "severity": s.severity,
        "description": s.description,
    }


def signature_from_dict(d: dict) -> AttackSignature:
    acc = d.get("time_acc")
    return AttackSignature(
        id=d["id"],
        service=as_service(service_from_name(str(d["service"]))),
        time_acc=None if acc is None else (_parse_hex_byte(acc[0]), _parse_hex_byte(acc[1])),
        or_ident_form=d.get("or_ident_form", FORM_ANY),
        or_ident_hex=d.get("or_ident_hex"),
        domain=d.get("domain"),
        item=d.get("item"),
        item_is_prefix=bool(d.get("item_is_prefix", False)),
        provenance=d.get("provenance", LEARNED_M1),
        description=d.get("description", ""),
    )


def signatures_to_json(sigs: Sequence[AttackSignature]) -> str:
    return json.dumps([signature_to_dict(s) for s in sigs], indent=2) + "\n"


def signatures_from_json(text: str) -> List[AttackSignature]:
    return [signature_from_dict(d) for d in json.loads(text)]


def save_signatures(path: str | os.PathLike, sigs: Sequence[AttackSignature]) -> None:
    atomic_write(path, signatures_to_json(sigs).encode())


def load_signatures(path: str | os.PathLike) -> List[AttackSignature]:
    with open(path, encoding="utf-8") as fh:
        return signatures_from_json(fh.read())
