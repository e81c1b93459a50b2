"""Compile attack signatures into NIDS rules; a line DSL and a Suricata-style export."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .baseline import (
    BLOCKING,
    FORM_ABSENT,
    FORM_ANY,
    FORM_EXACT,
    FORM_ZERO64,
    AttackSignature,
)
from .codec.mms import Service
from .extract import ExtractedRecord

SID_MIN = 1_000_000
SID_MAX = 0xFFFFFFFF
PROTO = "tcp"
DST_PORT = 102
ACTIONS = ("drop", "alert")


class DuplicateSignatureId(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int, token: int):
        super().__init__(f"line {line}, column {column} (token {token}): {message}")
        self.line = line
        self.column = column
        self.token = token


def or_ident_matches(form: str, hex_: Optional[str], value: Optional[bytes]) -> bool:
    if form == FORM_ANY:
        return True
    if form == FORM_ABSENT:
        return value is None
    if value is None:
        return False
    if form == FORM_ZERO64:
        return len(value) == 64 and not any(value)
    return value.hex() == hex_


@dataclass(frozen=True)
class NidsRule:
    sid: int
    action: str
    service: int
    msg: str
    time_acc: Optional[Tuple[int, int]] = None
    or_ident_form: str = FORM_ANY
    or_ident_hex: Optional[str] = None
    domain: Optional[str] = None
    item: Optional[str] = None
    item_is_prefix: bool = False
    rev: int = 1

    proto = PROTO
    dst_port = DST_PORT

    def matches(self, r: ExtractedRecord) -> bool:
        if r.service != self.service:
            return False
        if self.time_acc is not None and r.time_acc != self.time_acc:
            return False
        if not or_ident_matches(self.or_ident_form, self.or_ident_hex, r.or_ident):
            return False
        if self.domain is not None and r.domain_id != self.domain:
            return False
        if self.item is not None:
            if self.item_is_prefix:
                return r.item_id.startswith(self.item)
            return r.item_id == self.item
        return True


def compile_rules(signatures: Sequence[AttackSignature], sid_base: int = SID_MIN) -> List[NidsRule]:
    """One rule per signature, ordered by signature id, sids counting up from ``sid_base``."""
    if sid_base < SID_MIN:
        raise ValueError(f"sid_base must be at least {SID_MIN}")
    if sid_base + len(signatures) - 1 > SID_MAX:
        raise ValueError("sid range exceeds 32 bits")
    seen = set()
    for s in signatures:
        if s.id in seen:
            raise DuplicateSignatureId(s.id)
        seen.add(s.id)
    rules = []
    for n, sig in enumerate(sorted(signatures, key=lambda s: s.id)):
        rules.append(
            NidsRule(
                sid=sid_base + n,
                action="drop" if sig.severity == BLOCKING else "alert",
                service=int(sig.service),
                msg=f"{sig.description} [{sig.provenance} {sig.id}]",
                time_acc=sig.time_acc,
                or_ident_form=sig.or_ident_form,
                or_ident_hex=sig.or_ident_hex,
                domain=sig.domain,
                item=sig.item,
                item_is_prefix=sig.item_is_prefix,
            )
        )
    return rules


# -- DSL --------------------------------------------------------------------
#
#   RULE <sid> <drop|alert> service=<int> [acc=0x..,0x..]
#        [orident=absent|zero64|hex:<hex>|any] [domain="..."]
#        [item="..."|item_prefix="..."] [rev=<int>] msg="..."
#
# Quoted values use JSON string escapes. '#' starts a comment line.


def _quote(text: str) -> str:
    # ASCII-only output keeps exotic line breaks (NEL, U+2028) out of the file
    return json.dumps(text)


def _orident_text(rule: NidsRule) -> str:
    return {FORM_ABSENT: "absent", FORM_ZERO64: "zero64", FORM_ANY: "any"}.get(rule.or_ident_form) or (
        f"hex:{rule.or_ident_hex}"
    )


def emit_rule(rule: NidsRule) -> str:
    parts = [f"RULE {rule.sid} {rule.action}", f"service={rule.service}"]
    if rule.time_acc is not None:
        parts.append(f"acc=0x{rule.time_acc[0]:02x},0x{rule.time_acc[1]:02x}")
    if rule.or_ident_form != FORM_ANY:
        parts.append(f"orident={_orident_text(rule)}")
    if rule.domain is not None:
        parts.append(f"domain={_quote(rule.domain)}")
    if rule.item is not None:
        parts.append(f"{'item_prefix' if rule.item_is_prefix else 'item'}={_quote(rule.item)}")
    if rule.rev != 1:
        parts.append(f"rev={rule.rev}")
    parts.append(f"msg={_quote(rule.msg)}")
    return " ".join(parts)


def emit_dsl(rules: Iterable[NidsRule]) -> str:
    return "".join(emit_rule(r) + "\n" for r in rules)


_SPACE = " \t\r\f\v"


def _tokenize(line: str, lineno: int) -> List[Tuple[str, int]]:
    """Split on whitespace; a ``"..."`` run (JSON escapes) stays inside its token."""
    tokens = []
    pos = 0
    n = len(line)
    while pos < n:
        if line[pos] in _SPACE:
            pos += 1
            continue
        start = pos
        while pos < n and line[pos] not in _SPACE:
            if line[pos] == '"':
                pos += 1
                while pos < n and line[pos] != '"':
                    pos += 2 if line[pos] == "\\" else 1
                if pos >= n:
                    raise ParseError("unterminated string", lineno, start + 1, len(tokens) + 1)
            pos += 1
        tokens.append((line[start:pos], start + 1))
    return tokens


def _byte(text: str) -> int:
    if not re.fullmatch(r"0x[0-9a-fA-F]{1,2}", text):
        raise ValueError(f"expected a hex byte like 0x0a, got {text!r}")
    return int(text, 16)


def _parse_line(line: str, lineno: int) -> NidsRule:
    tokens = _tokenize(line, lineno)

    def fail(message: str, index: int):
        col = tokens[index][1] if index < len(tokens) else len(line) + 1
        raise ParseError(message, lineno, col, index + 1)

    if not tokens or tokens[0][0] != "RULE":
        fail("expected 'RULE'", 0)
    if len(tokens) < 3:
        fail("expected sid and action", len(tokens))
    sid_text = tokens[1][0]
    if not sid_text.isdigit() or not 0 <= int(sid_text) <= SID_MAX:
        fail(f"bad sid {sid_text!r}", 1)
    action = tokens[2][0]
    if action not in ACTIONS:
        fail(f"action must be drop or alert, not {action!r}", 2)

    fields = {}
    for i in range(3, len(tokens)):
        text = tokens[i][0]
        key, eq, value = text.partition("=")
        if not eq:
            fail(f"expected key=value, got {text!r}", i)
        if key in fields:
            fail(f"duplicate key {key!r}", i)
        try:
            fields[key] = (_value(key, value), i)
        except ValueError as exc:
            fail(str(exc), i)
    if "service" not in fields:
        fail("missing service=", len(tokens))
    if "msg" not in fields:
        fail("missing msg=", len(tokens))
    if "item" in fields and "item_prefix" in fields:
        fail("item and item_prefix are exclusive", fields["item_prefix"][1])

    form, hex_ = fields.get("orident", ((FORM_ANY, None), 0))[0]
    item = fields.get("item") or fields.get("item_prefix")
    return NidsRule(
        sid=int(sid_text),
        action=action,
        service=fields["service"][0],
        msg=fields["msg"][0],
        time_acc=fields["acc"][0] if "acc" in fields else None,
        or_ident_form=form,
        or_ident_hex=hex_,
        domain=fields["domain"][0] if "domain" in fields else None,
        item=item[0] if item else None,
        item_is_prefix="item_prefix" in fields,
        rev=fields["rev"][0] if "rev" in fields else 1,
    )


def _value(key: str, value: str):
    if key in ("service", "rev"):
        if not value.isdigit():
            raise ValueError(f"{key} must be a non-negative integer")
        return int(value)
    if key == "acc":
        a, comma, b = value.partition(",")
        if not comma:
            raise ValueError("acc needs two bytes: acc=0x..,0x..")
        return (_byte(a), _byte(b))
    if key == "orident":
        if value == "absent":
            return FORM_ABSENT, None
        if value == "zero64":
            return FORM_ZERO64, None
        if value == "any":
            return FORM_ANY, None
        if value.startswith("hex:") and re.fullmatch(r"(?:[0-9a-f]{2})*", value[4:]):
            return FORM_EXACT, value[4:]
        raise ValueError(f"bad orident {value!r}")
    if key in ("domain", "item", "item_prefix", "msg"):
        if not (len(value) >= 2 and value[0] == '"' and value[-1] == '"'):
            raise ValueError(f"{key} value must be quoted")
        try:
            text = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ValueError(f"bad string: {exc.msg}") from None
        if not isinstance(text, str):
            raise ValueError("bad string")
        return text
    raise ValueError(f"unknown key {key!r}")


def parse_dsl(text: str) -> List[NidsRule]:
    rules = []
    seen = set()
    for lineno, line in enumerate(text.split("\n"), 1):
        stripped = line.strip(_SPACE)
        if not stripped or stripped.startswith("#"):
            continue
        rule = _parse_line(line, lineno)
        if rule.sid in seen:
            raise ParseError(f"duplicate sid {rule.sid}", lineno, line.index(str(rule.sid)) + 1, 2)
        seen.add(rule.sid)
        rules.append(rule)
    return rules


# -- Suricata-style export --------------------------------------------------

SURICATA_HEADER = (
    "# Best-effort export. Byte-offset content matching only approximates decoded\n"
    "# MMS field matching and misses PDUs split across TCP segments.\n"
)


def _hex(data: bytes) -> str:
    return " ".join(f"{b:02x}" for b in data)


def _suricata_content(rule: NidsRule) -> List[str]:
    out = [f'content:"|{_hex(bytes((0xA0 | rule.service,)))}|"']
    if rule.time_acc is not None:
        first = True
        for quality in rule.time_acc:
            anchor = 'content:"|91 08|"' + ("" if first else "; distance:0")
            out.append(anchor)
            out.append(f'content:"|{quality:02x}|"; distance:7; within:1')
            first = False
    if rule.or_ident_form == FORM_ZERO64:
        out.append(f'content:"|{_hex(bytes((0x89, 64)) + bytes(64))}|"')
    elif rule.or_ident_form == FORM_ABSENT and rule.service == Service.WRITE:
        out.append('content:"|a2 03 85 01|"')
    elif rule.or_ident_form == FORM_EXACT:
        raw = bytes.fromhex(rule.or_ident_hex or "")
        if len(raw) < 0x80:
            out.append(f'content:"|{_hex(bytes((0x89, len(raw))) + raw)}|"')
    if rule.domain is not None:
        out.append(f"content:{_suri_text(rule.domain)}")
    if rule.item is not None:
        out.append(f"content:{_suri_text(rule.item)}")
    return out


def _suri_text(text: str) -> str:
    body = "".join(f"|{b:02x}|" if chr(b) in '";\\|' or b < 0x20 or b > 0x7E else chr(b) for b in text.encode())
    return f'"{body}"'


def export_suricata_like(rules: Iterable[NidsRule]) -> str:
    lines = [SURICATA_HEADER]
    for r in rules:
        msg = r.msg.replace("\\", "\\\\").replace('"', '\\"').replace(";", "\\;")
        opts = [f'msg:"{msg}"'] + _suricata_content(r) + [f"sid:{r.sid}", f"rev:{r.rev}"]
        lines.append(f"{r.action} {PROTO} any any -> any {DST_PORT} ({'; '.join(opts)};)\n")
    return "".join(lines)
