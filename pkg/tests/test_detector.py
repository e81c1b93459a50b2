import csv
import io
import json

from hypothesis import given
from hypothesis import strategies as st

from helpers import attack_capture, preset_capture
from mmsguard import baseline as bl
from mmsguard import detector, synth
from mmsguard.codec.mms import Service
from mmsguard.detector import Detection, detect, detection_from_json, render_report
from mmsguard.extract import ExtractedRecord, decode_capture, extract, records_from_capture

ZERO64 = bytes(64)


def learned_benign():
    frames, _ = preset_capture("scenario1_scaled")
    capture = decode_capture(frames)
    return bl.learn(records_from_capture(capture), bl.build_ggio_map(capture.pdus))


def test_bean_attack_path():
    base = learned_benign()
    frames, manifest = preset_capture("bean_attack")
    records, _ = extract(frames)
    d = detect(records, base, bl.builtin_signatures())
    assert len(d.blocking) == 10
    for p in d.blocking:
        assert (p.origin_ip, p.target_ip, p.operation) == (synth.BEAN_ATTACKER, synth.TARGET_PLC, Service.WRITE)
        assert (p.domain_id, p.item_id, p.component) == (synth.WAGO_DOMAIN, synth.BREAKER_ITEM, "CircuitBreaker")
    assert sorted(p.frame_index for p in d.blocking) == manifest.attack_frames


def test_script_attack_path():
    base = learned_benign()
    frames, manifest = preset_capture("script_attack")
    d = detect(extract(frames)[0], base, bl.builtin_signatures())
    assert {p.origin_ip for p in d.blocking} == {synth.SCRIPT_ATTACKER}
    assert sorted(p.frame_index for p in d.blocking) == manifest.attack_frames


def test_benign_replay_no_paths():
    base = learned_benign()
    frames, _ = preset_capture("scenario1_scaled")
    d = detect(extract(frames)[0], base, bl.builtin_signatures())
    assert d.paths == [] and d.novel_candidates == [] and d.stats.whitelisted == d.stats.scanned - d.stats.ignored


def test_component_unknown_without_map():
    base = bl.learn([ExtractedRecord(0.0, "a", "b", Service.READ, "D", "x")])
    rec = ExtractedRecord(1.0, synth.BEAN_ATTACKER, synth.TARGET_PLC, Service.WRITE, synth.WAGO_DOMAIN,
                          synth.BREAKER_ITEM, (0x0A, 0x0A), ZERO64, 3)
    (p,) = detect([rec], base, bl.builtin_signatures()).paths
    assert p.component is None
    assert "(-)" in detector.format_path(p)


def test_novel_candidates_reasons():
    base = bl.learn([ExtractedRecord(0.0, "a", "b", Service.READ, "D", "x")])
    recs = [
        ExtractedRecord(1.0, "a", "b", Service.READ, "D", "y"),
        ExtractedRecord(2.0, "a", "b", Service.WRITE, "D", "GGIO1$CO$SPCSO$Oper", (0x0F, 0x10), ZERO64, 2),
        ExtractedRecord(3.0, "a", "b", 12, "D", "LLN0$DS"),
    ]
    d = detect(recs, base, [])
    assert [c.reason for c in d.novel_candidates] == [detector.READ_UNKNOWN, detector.WRITE_UNKNOWN]
    assert d.stats.ignored == 1


def test_smallest_signature_id_wins():
    rec = ExtractedRecord(1.0, "a", "b", Service.WRITE, "D", "GGIO1$CO$SPCSO$Oper", (0x0A, 0x0A), ZERO64, 3)
    sigs = [
        bl.AttackSignature("write:z", Service.WRITE, time_acc=(0x0A, 0x0A)),
        bl.AttackSignature("write:a", Service.WRITE, or_ident_form=bl.FORM_ZERO64),
    ]
    base = bl.learn([rec])
    (p,) = detect([rec], base, sigs).paths
    assert p.signature_id == "write:a"


def test_signature_beats_whitelist():
    rec = ExtractedRecord(1.0, "a", "b", Service.WRITE, "D", "GGIO1$CO$SPCSO$Oper", (0x0A, 0x0A), ZERO64, 3)
    d = detect([rec], bl.learn([rec]), bl.builtin_signatures())
    assert len(d.blocking) == 1 and d.stats.whitelisted == 0


def mixed_detection():
    base = learned_benign()
    frames, _ = preset_capture("mixed")
    return detect(extract(frames)[0], base, bl.builtin_signatures() + [
        bl.AttackSignature("read:SIED1CTRL/LPHD1$ST$PhyHealth", Service.READ, domain="SIED1CTRL",
                           item="LPHD1$ST$PhyHealth"),
    ])


def test_render_text():
    d = mixed_detection()
    lines = render_report(d, "text").decode().splitlines()
    assert lines[0] == detector.TEXT_HEADER and len(lines) == 1 + len(d.paths)
    assert any("[Write]" in l and "(CircuitBreaker)" in l for l in lines)


def test_render_csv():
    d = mixed_detection()
    rows = list(csv.reader(io.StringIO(render_report(d, "csv").decode())))
    assert rows[0] == detector.CSV_COLUMNS and len(rows) == 1 + len(d.paths)


def test_json_round_trip():
    d = mixed_detection()
    back = detection_from_json(render_report(d, "json"))
    assert back.paths == d.paths and back.stats == d.stats
    assert [(c.record, c.reason) for c in back.novel_candidates] == [(c.record, c.reason) for c in d.novel_candidates]
    doc = json.loads(render_report(d, "json"))
    assert {p["operation"] for p in doc["paths"]} == {"Write", "Read"}


def test_empty_report():
    assert render_report(Detection(), "text").decode() == detector.TEXT_HEADER + "\n"


names = st.sampled_from(["A", "B", "GGIO12$CO$SPCSO$Oper"])
record_st = st.builds(
    ExtractedRecord,
    st.floats(0, 100),
    st.just("1.1.1.1"),
    st.just("2.2.2.2"),
    st.sampled_from([Service.READ, Service.WRITE, 12]),
    names,
    names,
    st.one_of(st.none(), st.sampled_from([(0x0A, 0x0A), (0x0A, 0x00), (0x0F, 0x10)])),
    st.sampled_from([None, ZERO64, b"\x01"]),
    st.sampled_from([None, 2, 3]),
)


@given(st.lists(record_st, min_size=1, max_size=30), st.lists(record_st, max_size=30))
def test_stats_partition_records(benign, records):
    base = bl.learn(benign + [ExtractedRecord(0.0, "a", "b", Service.READ, "A", "A")])
    d = detect(records, base, bl.builtin_signatures())
    s = d.stats
    assert s.scanned == len(records) == s.matched + s.whitelisted + s.novel + s.ignored
    assert s.matched == len(d.paths) and s.novel == len(d.novel_candidates)


def test_recall_at_100():
    base = learned_benign()
    frames, manifest = attack_capture((synth.BEAN, synth.SCRIPT), 100)
    d = detect(extract(frames)[0], base, bl.builtin_signatures())
    assert sorted(p.frame_index for p in d.blocking) == manifest.attack_frames and len(d.blocking) == 200
