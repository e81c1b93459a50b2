"""Test oracles and fixtures shared across test modules."""

from __future__ import annotations

import random
import re
import struct
from functools import lru_cache
from typing import List, Optional, Tuple

from mmsguard import synth
from mmsguard.codec.mms import (
    MmsMessage,
    ObjectName,
    OperPayload,
    PduKind,
    Service,
    UtcTimestamp,
    WriteItem,
)
from mmsguard.pcapio import RawFrame

IDENT_CHARS = "".join(chr(c) for c in range(0x20, 0x7F) if chr(c) != "/")


def tcp_frame(
    src: str,
    dst: str,
    sport: int,
    dport: int,
    seq: int,
    payload: bytes,
    ts_us: int = 0,
    flags: int = 0x18,
) -> RawFrame:
    """Ethernet/IPv4/TCP frame built by hand; checksums are left zero."""
    ip_src = bytes(int(x) for x in src.split("."))
    ip_dst = bytes(int(x) for x in dst.split("."))
    tcp = struct.pack("!HHIIBBHHH", sport, dport, seq, 0, 0x50, flags, 1024, 0, 0)
    total = 20 + len(tcp) + len(payload)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, 6, 0, ip_src, ip_dst)
    eth = b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00"
    return RawFrame(ts_us // 1_000_000, ts_us % 1_000_000, eth + ip + tcp + payload)


def random_identifier(rng: random.Random, max_len: int = 24) -> str:
    return "".join(rng.choice(IDENT_CHARS) for _ in range(rng.randint(1, max_len)))


def random_name(rng: random.Random) -> ObjectName:
    return ObjectName(random_identifier(rng), random_identifier(rng, 40))


def random_utc(rng: random.Random) -> UtcTimestamp:
    return UtcTimestamp(rng.getrandbits(32), rng.getrandbits(24), rng.getrandbits(8))


def random_oper(rng: random.Random) -> OperPayload:
    ident_choice = rng.randrange(4)
    if ident_choice == 0:
        or_ident: Optional[bytes] = None
    elif ident_choice == 1:
        or_ident = b""
    elif ident_choice == 2:
        or_ident = bytes(64)
    else:
        or_ident = bytes(rng.getrandbits(8) for _ in range(rng.randint(1, 70)))
    return OperPayload(
        ctl_val=rng.random() < 0.5,
        oper_tm=random_utc(rng),
        or_cat=rng.randint(-3, 130),
        or_ident=or_ident,
        ctl_num=rng.randint(0, 255),
        t=random_utc(rng),
        test=rng.random() < 0.5,
        check=rng.randint(0, 3),
    )


def random_message(rng: random.Random) -> MmsMessage:
    """A random message from the subset that encode/decode must round-trip."""
    invoke = rng.getrandbits(32) if rng.random() < 0.3 else rng.randint(0, 1000)
    pick = rng.randrange(6)
    if pick == 0:
        names = tuple(random_name(rng) for _ in range(rng.randint(1, 5)))
        return MmsMessage(PduKind.CONFIRMED_REQUEST, invoke, Service.READ, reads=names)
    if pick in (1, 2):
        items = tuple(WriteItem.from_oper(random_name(rng), random_oper(rng)) for _ in range(rng.randint(1, 3)))
        return MmsMessage(PduKind.CONFIRMED_REQUEST, invoke, Service.WRITE, writes=items)
    if pick == 3:
        return MmsMessage(
            PduKind.CONFIRMED_REQUEST, invoke, Service.GET_NAMED_VARIABLE_LIST_ATTRIBUTES, reads=(random_name(rng),)
        )
    if pick == 4:
        return MmsMessage(
            PduKind.CONFIRMED_REQUEST, invoke, Service.GET_VARIABLE_ACCESS_ATTRIBUTES, reads=(random_name(rng),)
        )
    # write whose data is not an Oper: a single boolean
    name = random_name(rng)
    raw = bytes((0x83, 0x01, rng.getrandbits(1)))
    return MmsMessage(PduKind.CONFIRMED_REQUEST, invoke, Service.WRITE, writes=(WriteItem(name, None, raw),))


@lru_cache(maxsize=None)
def preset_capture(name: str) -> Tuple[List[RawFrame], synth.Manifest]:
    return synth.synthesize(synth.preset(name))


@lru_cache(maxsize=None)
def attack_capture(fingerprints: Tuple[str, ...], attacks: int, benign_reads: int = 140, seed: int = 3):
    return synth.synthesize(synth.attack_scenario(fingerprints, attacks, benign_reads=benign_reads, seed=seed))


# -- a small Suricata content matcher --------------------------------------

_CONTENT = re.compile(r'content:"([^"]*)"((?:;\s*(?:distance|within):\d+)*)')


def _content_bytes(text: str) -> bytes:
    out = bytearray()
    for i, part in enumerate(text.split("|")):
        if i % 2:
            out += bytes.fromhex(part)
        else:
            out += part.encode()
    return bytes(out)


def suricata_contents(line: str) -> List[Tuple[bytes, Optional[int], Optional[int]]]:
    """(pattern, distance, within) for each content option in a rule line."""
    result = []
    for m in _CONTENT.finditer(line):
        mods = dict(re.findall(r"(distance|within):(\d+)", m.group(2)))
        result.append(
            (
                _content_bytes(m.group(1)),
                int(mods["distance"]) if "distance" in mods else None,
                int(mods["within"]) if "within" in mods else None,
            )
        )
    return result


def suricata_matches(line: str, payload: bytes) -> bool:
    """Evaluate content/distance/within in order, with backtracking."""
    contents = suricata_contents(line)

    def search(i: int, prev_end: int) -> bool:
        if i == len(contents):
            return True
        pattern, distance, within = contents[i]
        if distance is None and within is None:
            lo, hi = 0, len(payload)
        else:
            lo = prev_end + (distance or 0)
            hi = lo + within if within is not None else len(payload)
        pos = payload.find(pattern, lo)
        while 0 <= pos and pos + len(pattern) <= hi:
            if search(i + 1, pos + len(pattern)):
                return True
            pos = payload.find(pattern, pos + 1)
        return False

    return search(0, 0)
