"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line (visible even under
pytest's output capture) and then asserts. Run this file directly to get
just the eight lines: ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import os
import random
import sys
import tempfile
import time
from typing import Callable, List, Tuple

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import random_message  # noqa: E402
from mmsguard import baseline as bl  # noqa: E402
from mmsguard import synth  # noqa: E402
from mmsguard.codec.ber import MalformedTlv, parse_tree  # noqa: E402
from mmsguard.codec.mms import Service, decode_mms, encode_mms  # noqa: E402
from mmsguard.detector import detect  # noqa: E402
from mmsguard.engine import filter_frames, write_filtered  # noqa: E402
from mmsguard.extract import ExtractedRecord, decode_capture, extract, records_from_capture  # noqa: E402
from mmsguard.pcapio import read_pcap, write_pcap  # noqa: E402
from mmsguard.rulegen import compile_rules, emit_dsl, parse_dsl  # noqa: E402

Result = Tuple[bool, str]

ROUND_TRIP_MESSAGES = 100_000
FUZZ_RANDOM = 700_000
FUZZ_MUTATED = 300_000
HANG_LIMIT = 1.0  # seconds for a single fuzz input
THROUGHPUT_PDUS = 100_000


def paper_constraints():
    """(service, acc, orIdent form, domain, item) of the two tool fingerprints."""
    return {
        (Service.WRITE, (0x0A, 0x0A), bl.FORM_ZERO64, None, None),
        (Service.WRITE, (0x0A, 0x00), bl.FORM_ABSENT, None, None),
    }


def constraints(sig: bl.AttackSignature):
    return (sig.service, sig.time_acc, sig.or_ident_form, sig.domain, sig.item)


def learn_capture(frames) -> bl.Baseline:
    capture = decode_capture(frames)
    return bl.learn(records_from_capture(capture), bl.build_ggio_map(capture.pdus))


def sign_capture(base: bl.Baseline, frames):
    capture = decode_capture(frames)
    ggio = dict(base.ggio_map)
    ggio.update(bl.build_ggio_map(capture.pdus))
    potential_read, potential_write = bl.diff(base, records_from_capture(capture))
    sigs, _ = bl.validate_and_sign(potential_write, potential_read, ggio, base.write_whitelist)
    return sigs


_BENIGN_BASELINE: List[bl.Baseline] = []


def benign_baseline() -> bl.Baseline:
    if not _BENIGN_BASELINE:
        _BENIGN_BASELINE.append(learn_capture(synth.synthesize(synth.preset("scenario1_scaled"))[0]))
    return _BENIGN_BASELINE[0]


# -- criteria ---------------------------------------------------------------


def criterion_1() -> Result:
    start = time.perf_counter()
    benign, _ = synth.synthesize(synth.preset("scenario1_scaled"))
    attack, _ = synth.synthesize(synth.preset("mixed"))
    sigs = sign_capture(learn_capture(benign), attack)
    elapsed = time.perf_counter() - start
    blocking = [s for s in sigs if s.severity == bl.BLOCKING]
    got = {constraints(s) for s in blocking}
    ok = len(blocking) == 2 and got == paper_constraints() and elapsed < 5.0
    return ok, f"{len(blocking)} blocking signatures {sorted(s.id for s in blocking)} in {elapsed:.2f}s"


def criterion_2() -> Result:
    sigs = bl.builtin_signatures()
    base = benign_baseline()
    found = {}
    for name in synth.BENIGN_PRESETS:
        records, _ = extract(synth.synthesize(synth.preset(name))[0])
        found[name] = len(detect(records, base, sigs).blocking)
    ok = all(n == 0 for n in found.values())
    return ok, "blocking paths per benign preset: " + ", ".join(f"{k}={v}" for k, v in found.items())


def _expected_path_ok(path, record, attacker) -> bool:
    return (
        path.origin_ip == attacker == record.src_ip
        and path.target_ip == record.dst_ip == synth.TARGET_PLC
        and path.operation == Service.WRITE
        and path.domain_id == synth.WAGO_DOMAIN
        and path.item_id == synth.BREAKER_ITEM
        and path.component == "CircuitBreaker"
        and path.severity == bl.BLOCKING
    )


def criterion_3() -> Result:
    base = benign_baseline()
    sigs = bl.builtin_signatures()
    attackers = {synth.BEAN: synth.BEAN_ATTACKER, synth.SCRIPT: synth.SCRIPT_ATTACKER}
    details = []
    ok = True
    for fp in (synth.BEAN, synth.SCRIPT):
        for n in (10, 100, 1000):
            frames, manifest = synth.synthesize(synth.attack_scenario((fp,), n, seed=n))
            d = detect(extract(frames)[0], base, sigs)
            by_frame = {p.frame_index: p for p in d.blocking}
            labels = [l for l in manifest.labels if l.kind in synth.ATTACK_KINDS]
            hits = sum(
                1 for l in labels if l.frame_index in by_frame and _expected_path_ok(by_frame[l.frame_index], l.record,
                                                                                      attackers[fp])
            )
            exact = len(labels) == n and hits == n and len(d.blocking) == n
            ok &= exact
            details.append(f"{fp}@{n}={hits}/{len(labels)}")
    return ok, "recall " + ", ".join(details)


def criterion_4() -> Result:
    benign, _ = synth.synthesize(synth.preset("scenario1_scaled"))
    base = learn_capture(benign)
    details = []
    ok = True
    for name, config in (("mixed", synth.preset("mixed")),
                         ("both@100", synth.attack_scenario((synth.BEAN, synth.SCRIPT), 100, seed=11))):
        frames, manifest = synth.synthesize(config)
        sigs = sign_capture(base, frames)
        rules = compile_rules(sigs, 1_000_000)
        out = filter_frames(frames, rules, base)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "filtered.pcap")
            write_filtered(out, path)
            records, _ = extract(read_pcap(path))
        residual = len(detect(records, base, sigs).blocking)
        exact = out.dropped_indices == manifest.attack_frames and residual == 0
        ok &= exact
        details.append(f"{name}: dropped {len(out.dropped)}/{len(manifest.attack_frames)}, residual {residual}")
    return ok, "; ".join(details)


def _mutate(rng: random.Random, data: bytes) -> bytes:
    b = bytearray(data)
    for _ in range(rng.randint(1, 4)):
        op = rng.randrange(4)
        if op == 0 and b:
            b[rng.randrange(len(b))] = rng.getrandbits(8)
        elif op == 1 and b:
            del b[rng.randrange(len(b)):]
        elif op == 2:
            pos = rng.randrange(len(b) + 1)
            b[pos:pos] = rng.randbytes(rng.randint(1, 4))
        elif b:
            pos = rng.randrange(len(b))
            b[pos] = rng.choice((0x80, 0x81, 0x82, 0x83, 0xFF, 0x1F, 0x00))
    return bytes(b)


def criterion_5() -> Result:
    rng = random.Random(20240505)
    mismatches = 0
    for _ in range(ROUND_TRIP_MESSAGES):
        msg = random_message(rng)
        if decode_mms(encode_mms(msg)) != msg:
            mismatches += 1

    valid = [encode_mms(random_message(rng)) for _ in range(1000)]
    crashes = 0
    first_crash = ""
    slowest = 0.0
    for i in range(FUZZ_RANDOM + FUZZ_MUTATED):
        if i < FUZZ_RANDOM:
            data = rng.randbytes(rng.randint(0, 64))
        else:
            data = _mutate(rng, rng.choice(valid))
        t = time.perf_counter()
        for fn in (decode_mms, parse_tree) if i % 8 == 0 else (decode_mms,):
            try:
                fn(data)
            except MalformedTlv:
                pass
            except Exception as exc:  # anything else is a crash
                crashes += 1
                first_crash = first_crash or f"{type(exc).__name__} on {data.hex()}"
        slowest = max(slowest, time.perf_counter() - t)
    ok = mismatches == 0 and crashes == 0 and slowest < HANG_LIMIT
    detail = (f"{ROUND_TRIP_MESSAGES} round trips, {mismatches} mismatches; "
              f"{FUZZ_RANDOM + FUZZ_MUTATED} fuzz inputs, {crashes} crashes, slowest {slowest * 1e3:.1f} ms")
    if first_crash:
        detail += f" (first: {first_crash[:120]})"
    return ok, detail


def _random_records(rng: random.Random, n: int) -> List[ExtractedRecord]:
    domains = ["WAGO61850ServerLogicalDevice", "SIED1PROT", "GIED1CTRL", "LD0"]
    items = ["GGIO12$CO$SPCSO$Oper", "GGIO13$CO$SPCSO1$Oper", "LLN0$Measurement", "LLN0$DC$NamPlt$configRev",
             "LPHD1$ST$PhyHealth", "CSWI1$CO$Pos$Oper"]
    idents = [None, b"", bytes(64), b"\x01\x02"]
    out = []
    for i in range(n):
        service = rng.choice([Service.READ, Service.READ, Service.WRITE, 12])
        if service == Service.WRITE:
            acc = rng.choice([None, (0x0F, 0x10), (0x0F, 0x00), (0x0A, 0x0A), (0x0A, 0x00), (rng.getrandbits(8), 0)])
            out.append(ExtractedRecord(float(i), "10.0.0.1", "10.0.0.2", service, rng.choice(domains),
                                       rng.choice(items), acc, rng.choice(idents), rng.choice([2, 3])))
        else:
            out.append(ExtractedRecord(float(i), "10.0.0.1", "10.0.0.2", service, rng.choice(domains),
                                       rng.choice(items)))
    return out


def criterion_6() -> Result:
    rng = random.Random(6)
    unsound = 0
    non_monotone = 0
    for _ in range(100):
        records = _random_records(rng, rng.randint(1, 300))
        records.append(ExtractedRecord(0.0, "a", "b", Service.READ, "LD0", "LLN0$Mod"))
        base = bl.learn(records)
        if bl.diff(base, records) != (set(), set()):
            unsound += 1
        bigger = bl.learn(records + _random_records(rng, rng.randint(0, 300)))
        if not (base.read_whitelist <= bigger.read_whitelist and base.write_whitelist <= bigger.write_whitelist):
            non_monotone += 1
    return unsound == 0 and non_monotone == 0, f"100 record sets: {unsound} unsound, {non_monotone} non-monotone"


def criterion_7() -> Result:
    # each read and its response are one MMS PDU apiece, plus association and attacks
    reads = THROUGHPUT_PDUS // 2
    frames, _ = synth.synthesize(synth.attack_scenario((synth.BEAN, synth.SCRIPT), 50, benign_reads=reads, seed=7))
    base = benign_baseline()
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "big.pcap")
        write_pcap(path, frames)
        start = time.perf_counter()
        capture = decode_capture(read_pcap(path))
        d = detect(records_from_capture(capture), base, bl.builtin_signatures())
        elapsed = time.perf_counter() - start
    pdus = capture.report.mms_pdus
    ok = pdus >= THROUGHPUT_PDUS and elapsed < 10.0 and len(d.blocking) == 100
    return ok, f"{pdus} MMS PDUs in {len(frames)} frames: read+extract+detect {elapsed:.2f}s"


def criterion_8() -> Result:
    rule_sets = {"paper": compile_rules(bl.builtin_signatures(), 1_000_000)}
    base = benign_baseline()
    for name in ("bean_attack", "script_attack", "mixed"):
        rule_sets[name] = compile_rules(sign_capture(base, synth.synthesize(synth.preset(name))[0]), 2_000_000)
    rng = random.Random(8)
    for i in range(200):
        records = _random_records(rng, 60)
        potential_read, potential_write = bl.diff(bl.learn(records[:30] + [records[0]]), records[30:])
        sigs, _ = bl.validate_and_sign(potential_write, potential_read, {"GGIO12": "CircuitBreaker"})
        rule_sets[f"random{i}"] = compile_rules(sigs, 1_000_000 + i)
    failed = [name for name, rules in rule_sets.items() if parse_dsl(emit_dsl(rules)) != rules]
    total = sum(len(r) for r in rule_sets.values())
    return not failed, f"{len(rule_sets)} rule sets, {total} rules, {len(failed)} failed round trip"


CRITERIA: List[Tuple[str, Callable[[], Result]]] = [
    ("1 signature reproduction", criterion_1),
    ("2 zero false positives", criterion_2),
    ("3 full recall", criterion_3),
    ("4 filter closure", criterion_4),
    ("5 codec properties", criterion_5),
    ("6 baseline soundness", criterion_6),
    ("7 throughput", criterion_7),
    ("8 DSL round trip", criterion_8),
]


def line(label: str, ok: bool, detail: str) -> str:
    return f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"


@pytest.mark.parametrize("label, fn", CRITERIA, ids=[c[0].split(" ", 1)[1].replace(" ", "_") for c in CRITERIA])
def test_criterion(label, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + line(label, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for label, fn in CRITERIA:
        ok, detail = fn()
        print(line(label, ok, detail), flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
