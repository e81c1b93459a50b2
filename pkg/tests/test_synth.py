import json
from dataclasses import replace

import pytest

from helpers import preset_capture
from mmsguard import baseline as bl
from mmsguard import synth
from mmsguard.codec.mms import Service
from mmsguard.detector import detect
from mmsguard.extract import extract
from mmsguard.pcapio import ReassemblyStats, pcap_bytes, reassemble


def test_same_seed_same_bytes():
    config = synth.preset("mixed")
    a, ma = synth.synthesize(config)
    b, mb = synth.synthesize(config)
    assert pcap_bytes(a) == pcap_bytes(b) and ma.to_json() == mb.to_json()


def test_seed_changes_bytes():
    config = synth.preset("bean_attack")
    a, _ = synth.synthesize(config)
    b, _ = synth.synthesize(replace(config, seed=config.seed + 1))
    assert pcap_bytes(a) != pcap_bytes(b)


def test_zero_attacks_zero_paths():
    frames, manifest = synth.synthesize(synth.attack_scenario((synth.BEAN,), 0))
    assert manifest.attack_frames == []
    records, _ = extract(frames)
    assert detect(records, bl.learn(records), bl.builtin_signatures()).paths == []


def test_bean_attack_record():
    _, manifest = preset_capture("bean_attack")
    labels = [l for l in manifest.labels if l.kind == synth.ATTACK_BEAN]
    assert len(labels) == 10
    r = labels[0].record
    assert (r.src_ip, r.dst_ip, r.service) == ("172.16.4.201", "172.16.3.41", Service.WRITE)
    assert (r.domain_id, r.item_id) == ("WAGO61850ServerLogicalDevice", "GGIO12$CO$SPCSO$Oper")
    assert (r.time_acc, r.or_ident, r.or_cat) == ((0x0A, 0x0A), bytes(64), 3)


def test_script_attack_record():
    _, manifest = preset_capture("script_attack")
    r = next(l.record for l in manifest.labels if l.kind == synth.ATTACK_SCRIPT)
    assert (r.src_ip, r.time_acc, r.or_ident, r.or_cat) == ("172.16.5.103", (0x0A, 0x00), None, 3)


def test_scada_writes_use_station_fingerprint():
    _, manifest = preset_capture("benign_writes")
    writes = [l.record for l in manifest.labels if l.kind == synth.BENIGN_WRITE]
    assert len(writes) == 18
    assert {w.or_cat for w in writes} == {2} and {w.or_ident for w in writes} == {bytes(64)}
    assert {w.time_acc for w in writes} <= set(synth.SCADA_QUALITIES)


def test_scenario1_ratio():
    _, manifest = preset_capture("scenario1_scaled")
    counts = manifest.counts()
    assert counts[synth.BENIGN_READ] == 1891 and counts[synth.BENIGN_WRITE] == 1
    assert synth.ATTACK_BEAN not in counts


def test_timestamps_strictly_increase():
    frames, _ = preset_capture("mixed")
    ts = [(f.ts_sec, f.ts_usec) for f in frames]
    assert all(a < b for a, b in zip(ts, ts[1:]))


def test_flows_reassemble_without_gaps():
    frames, _ = preset_capture("mixed")
    stats = ReassemblyStats()
    reassemble(frames, stats)
    assert stats.gaps == [] and stats.duplicates == 0 and not stats.skipped


def test_manifest_json_round_trip():
    _, manifest = preset_capture("mixed")
    back = synth.Manifest.from_json(manifest.to_json())
    assert back == manifest
    assert json.loads(manifest.to_json())["counts"] == manifest.counts()


def test_every_preset_synthesises():
    for name in synth.PRESETS:
        frames, manifest = preset_capture(name)
        assert frames and len({l.frame_index for l in manifest.labels}) == len(manifest.labels)


def test_unknown_preset():
    with pytest.raises(synth.UnknownPreset, match="bean_attack"):
        synth.preset("nope")


@pytest.mark.parametrize(
    "change, path",
    [
        (dict(scada_ip="300.1.1.1"), "endpoints.scada_ip"),
        (dict(attacker_ips=("172.18.5.60",)), "endpoints.attacker_ips"),
        (dict(duration=0), "duration"),
        (dict(version=2), "version"),
        (dict(dataset_decl={"CircuitBreaker": ("XCBR1",)}), "attack_plan[0].item"),
    ],
)
def test_invalid_config_names_field(change, path):
    config = replace(synth.preset("bean_attack"), **change)
    with pytest.raises(synth.InvalidConfig) as info:
        synth.synthesize(config)
    assert info.value.path == path


def test_invalid_plan_entries():
    config = synth.preset("bean_attack")
    bad_read = replace(config.read_plan[0], item="LLN0/Mod")
    with pytest.raises(synth.InvalidConfig) as info:
        synth.validate(replace(config, read_plan=(bad_read,) + config.read_plan[1:]))
    assert info.value.path == "read_plan[0].item"
    bad_attack = replace(config.attack_plan[0], fingerprint="NMAP")
    with pytest.raises(synth.InvalidConfig) as info:
        synth.validate(replace(config, attack_plan=(bad_attack,)))
    assert info.value.path == "attack_plan[0].fingerprint"


def test_config_json_round_trip():
    for name in synth.PRESETS:
        config = synth.preset(name)
        assert synth.config_from_json(synth.config_to_json(config)) == config


def test_config_json_unknown_field():
    doc = json.loads(synth.config_to_json(synth.preset("bean_attack")))
    doc["attack_plan"][0]["colour"] = "red"
    with pytest.raises(synth.InvalidConfig) as info:
        synth.config_from_json(json.dumps(doc))
    assert info.value.path == "attack_plan[0].colour"


def test_large_segments_split_at_mss():
    # a 149-member directory response is several kilobytes long
    config = synth.ScenarioConfig(
        duration=10.0,
        read_plan=(synth.ReadPlan(synth.TARGET_PLC, "LD", "LLN0$Mod", count=1, start=1.0),),
        dataset_decl={"Big": tuple(f"GGIO{i}" for i in range(1, 150))},
        seed=9,
    )
    frames, manifest = synth.synthesize(config)
    assert max(len(f.data) for f in frames) <= 14 + 20 + 20 + synth.MSS
    assert extract(frames)[0] == manifest.records
