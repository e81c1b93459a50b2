"""Deterministic synthetic MMS captures with a per-frame ground-truth manifest."""

from __future__ import annotations

import ipaddress
import json
import random
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .codec.envelope import (
    encode_connect_envelope,
    encode_cotp_cc,
    encode_cotp_cr,
    encode_data_envelope,
)
from .codec.mms import (
    ORIDENT_ZERO64,
    MmsMessage,
    ObjectName,
    OperPayload,
    Service,
    UtcTimestamp,
    WriteItem,
    dataset_directory_request,
    dataset_directory_response,
    encode_mms,
    initiate_request,
    initiate_response,
    read_request,
    read_response,
    valid_identifier,
    write_request,
    write_response,
)
from .extract import ExtractedRecord, canonical_or_ident, or_ident_from_canonical
from .pcapio import RawFrame

CONFIG_VERSION = 1
MMS_PORT = 102
MSS = 1460

SCADA_QUALITIES = ((0x0F, 0x00), (0x0F, 0x11), (0x0F, 0x10))
BEAN = "BEAN"
SCRIPT = "SCRIPT"
FINGERPRINTS = {
    # fingerprint: (operTm quality, T quality), orCat, orIdent
    BEAN: ((0x0A, 0x0A), 3, ORIDENT_ZERO64),
    SCRIPT: ((0x0A, 0x00), 3, None),
}
SCADA_OR_CAT = 2

# Frame labels.
BENIGN_READ = "BENIGN_READ"
BENIGN_WRITE = "BENIGN_WRITE"
ATTACK_BEAN = "ATTACK_BEAN"
ATTACK_SCRIPT = "ATTACK_SCRIPT"
DIRECTORY = "DIRECTORY"
RESPONSE = "RESPONSE"
SETUP = "SETUP"
ASSOCIATE = "ASSOCIATE"
RECON = "RECON"
ATTACK_KINDS = (ATTACK_BEAN, ATTACK_SCRIPT)

SCADA_IP = "172.18.5.60"
TARGET_PLC = "172.16.3.41"
BEAN_ATTACKER = "172.16.4.201"
SCRIPT_ATTACKER = "172.16.5.103"
WAGO_DOMAIN = "WAGO61850ServerLogicalDevice"
BREAKER_ITEM = "GGIO12$CO$SPCSO$Oper"


class InvalidConfig(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownPreset(KeyError):
    pass


@dataclass(frozen=True)
class ReadPlan:
    server: str
    domain: str
    item: str
    period: Optional[float] = None  # seconds; None means the config's poll_period
    count: Optional[int] = None  # None means as many as fit in the duration
    start: float = 0.0


@dataclass(frozen=True)
class WritePlan:
    server: str
    domain: str
    item: str
    count: int
    start: float = 0.0
    interval: float = 60.0
    quality: Optional[Tuple[int, int]] = None  # None draws from the SCADA values


@dataclass(frozen=True)
class AttackPlan:
    fingerprint: str
    attacker: str
    target: str
    domain: str
    item: str
    count: int
    start: float = 0.0
    interval: float = 2.0


@dataclass(frozen=True)
class ReconPlan:
    attacker: str
    target: str
    domain: str
    items: Tuple[str, ...]
    start: float = 0.0
    interval: float = 0.5


@dataclass(frozen=True)
class ScenarioConfig:
    duration: float
    scada_ip: str = SCADA_IP
    plc_ips: Tuple[str, ...] = (TARGET_PLC,)
    ied_ips: Tuple[str, ...] = ()
    attacker_ips: Tuple[str, ...] = ()
    poll_period: float = 5.0
    read_plan: Tuple[ReadPlan, ...] = ()
    write_plan: Tuple[WritePlan, ...] = ()
    attack_plan: Tuple[AttackPlan, ...] = ()
    recon_plan: Tuple[ReconPlan, ...] = ()
    dataset_decl: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    dataset_host: str = TARGET_PLC
    dataset_domain: str = WAGO_DOMAIN
    seed: int = 0
    start_time: float = 1_640_995_200.0
    responses: bool = True
    associate: bool = True
    version: int = CONFIG_VERSION

    def __hash__(self):  # dataset_decl is a dict
        return hash(json.dumps(config_to_dict(self), sort_keys=True))


# -- validation -------------------------------------------------------------


def _check_ip(path: str, value: str) -> None:
    try:
        ipaddress.IPv4Address(value)
    except (ipaddress.AddressValueError, ValueError):
        raise InvalidConfig(path, f"not an IPv4 address: {value!r}") from None


def _check_name(path: str, value: str) -> None:
    if not isinstance(value, str) or not valid_identifier(value):
        raise InvalidConfig(path, f"not a valid MMS identifier: {value!r}")


def validate(c: ScenarioConfig) -> None:
    if c.version != CONFIG_VERSION:
        raise InvalidConfig("version", f"unsupported version {c.version!r}")
    if not c.duration > 0:
        raise InvalidConfig("duration", "must be positive")
    if not c.poll_period > 0:
        raise InvalidConfig("poll_period", "must be positive")
    if not 0 <= c.seed < 1 << 64:
        raise InvalidConfig("seed", "must fit in 64 bits")
    if not 0 <= c.start_time < 1 << 32:
        raise InvalidConfig("start_time", "must fit a 32-bit epoch")
    _check_ip("endpoints.scada_ip", c.scada_ip)
    for group in ("plc_ips", "ied_ips", "attacker_ips"):
        for i, ip in enumerate(getattr(c, group)):
            _check_ip(f"endpoints.{group}[{i}]", ip)
    if c.scada_ip in c.attacker_ips:
        raise InvalidConfig("endpoints.attacker_ips", "overlaps scada_ip")
    for i, p in enumerate(c.read_plan):
        at = f"read_plan[{i}]"
        _check_ip(f"{at}.server", p.server)
        _check_name(f"{at}.domain", p.domain)
        _check_name(f"{at}.item", p.item)
        if p.period is not None and not p.period > 0:
            raise InvalidConfig(f"{at}.period", "must be positive")
        if p.count is not None and p.count < 0:
            raise InvalidConfig(f"{at}.count", "must be non-negative")
        if p.start < 0:
            raise InvalidConfig(f"{at}.start", "must be non-negative")
    for i, p in enumerate(c.write_plan):
        at = f"write_plan[{i}]"
        _check_ip(f"{at}.server", p.server)
        _check_name(f"{at}.domain", p.domain)
        _check_name(f"{at}.item", p.item)
        if p.count < 0:
            raise InvalidConfig(f"{at}.count", "must be non-negative")
        if not p.interval > 0:
            raise InvalidConfig(f"{at}.interval", "must be positive")
        if p.start < 0:
            raise InvalidConfig(f"{at}.start", "must be non-negative")
        if p.quality is not None and (len(p.quality) != 2 or not all(0 <= q <= 0xFF for q in p.quality)):
            raise InvalidConfig(f"{at}.quality", "must be two byte values")
    nodes = {n for members in c.dataset_decl.values() for n in members}
    for i, p in enumerate(c.attack_plan):
        at = f"attack_plan[{i}]"
        if p.fingerprint not in FINGERPRINTS:
            raise InvalidConfig(f"{at}.fingerprint", f"must be one of {sorted(FINGERPRINTS)}")
        _check_ip(f"{at}.attacker", p.attacker)
        _check_ip(f"{at}.target", p.target)
        if p.attacker not in c.attacker_ips:
            raise InvalidConfig(f"{at}.attacker", "not listed in endpoints.attacker_ips")
        _check_name(f"{at}.domain", p.domain)
        _check_name(f"{at}.item", p.item)
        if p.item.split("$", 1)[0] not in nodes:
            raise InvalidConfig(f"{at}.item", "GGIO node is not declared in dataset_decl")
        if p.count < 0:
            raise InvalidConfig(f"{at}.count", "must be non-negative")
        if not p.interval > 0:
            raise InvalidConfig(f"{at}.interval", "must be positive")
        if p.start < 0:
            raise InvalidConfig(f"{at}.start", "must be non-negative")
    for i, p in enumerate(c.recon_plan):
        at = f"recon_plan[{i}]"
        _check_ip(f"{at}.attacker", p.attacker)
        _check_ip(f"{at}.target", p.target)
        if p.attacker not in c.attacker_ips:
            raise InvalidConfig(f"{at}.attacker", "not listed in endpoints.attacker_ips")
        _check_name(f"{at}.domain", p.domain)
        for j, item in enumerate(p.items):
            _check_name(f"{at}.items[{j}]", item)
        if not p.interval > 0:
            raise InvalidConfig(f"{at}.interval", "must be positive")
    if c.dataset_decl:
        _check_ip("dataset_host", c.dataset_host)
        _check_name("dataset_domain", c.dataset_domain)
        seen: Dict[str, str] = {}
        for name, members in c.dataset_decl.items():
            _check_name(f"dataset_decl.{name}", f"LLN0${name}")
            for j, node in enumerate(members):
                _check_name(f"dataset_decl.{name}[{j}]", node)
                if "$" in node or "GGIO" not in node:
                    raise InvalidConfig(f"dataset_decl.{name}[{j}]", f"not a GGIO node name: {node!r}")
                if node in seen and seen[node] != name:
                    raise InvalidConfig(f"dataset_decl.{name}[{j}]", f"{node} already declared in {seen[node]}")
                seen[node] = name


# -- JSON config ------------------------------------------------------------

_PLAN_TYPES = {"read_plan": ReadPlan, "write_plan": WritePlan, "attack_plan": AttackPlan, "recon_plan": ReconPlan}


def config_to_dict(c: ScenarioConfig) -> dict:
    d = asdict(c)
    d["dataset_decl"] = {k: list(v) for k, v in sorted(c.dataset_decl.items())}
    return d


def config_to_json(c: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(c), indent=2) + "\n"


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise InvalidConfig(path, "expected an object")
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise InvalidConfig(f"{path}.{key}" if path else key, "unknown field")
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key in _PLAN_TYPES and cls is ScenarioConfig:
            if not isinstance(value, list):
                raise InvalidConfig(where, "expected a list")
            value = tuple(_build(_PLAN_TYPES[key], v, f"{where}[{i}]") for i, v in enumerate(value))
        elif key == "dataset_decl":
            if not isinstance(value, dict):
                raise InvalidConfig(where, "expected an object")
            value = {k: tuple(v) for k, v in value.items()}
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(path or "config", str(exc)) from None


def config_from_json(text: str) -> ScenarioConfig:
    data = json.loads(text)
    if isinstance(data, dict) and data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise InvalidConfig("version", f"unsupported version {data.get('version')!r}")
    config = _build(ScenarioConfig, data, "")
    validate(config)
    return config


# -- manifest ---------------------------------------------------------------


@dataclass(frozen=True)
class FrameLabel:
    frame_index: int
    kind: str
    record: Optional[ExtractedRecord] = None


@dataclass
class Manifest:
    labels: List[FrameLabel]
    ggio_map: Dict[str, str]
    seed: int

    def frames_of(self, *kinds: str) -> List[int]:
        return [l.frame_index for l in self.labels if l.kind in kinds]

    @property
    def attack_frames(self) -> List[int]:
        return self.frames_of(*ATTACK_KINDS)

    @property
    def records(self) -> List[ExtractedRecord]:
        return [l.record for l in self.labels if l.record is not None]

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for l in self.labels:
            out[l.kind] = out.get(l.kind, 0) + 1
        return dict(sorted(out.items()))

    def to_json(self) -> str:
        doc = {
            "version": CONFIG_VERSION,
            "seed": self.seed,
            "ggio_map": self.ggio_map,
            "counts": self.counts(),
            "frames": [_label_dict(l) for l in self.labels],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        doc = json.loads(text)
        labels = [_label_from_dict(d) for d in doc["frames"]]
        return cls(labels, dict(doc["ggio_map"]), doc["seed"])


def _label_dict(l: FrameLabel) -> dict:
    d: dict = {"frame": l.frame_index, "kind": l.kind}
    r = l.record
    if r is not None:
        d["record"] = {
            "ts": r.timestamp,
            "src": r.src_ip,
            "dst": r.dst_ip,
            "service": int(r.service),
            "domain": r.domain_id,
            "item": r.item_id,
            "time_acc": None if r.time_acc is None else list(r.time_acc),
            "or_ident": None if r.or_ident is None else canonical_or_ident(r.or_ident),
            "or_cat": r.or_cat,
        }
    return d


def _label_from_dict(d: dict) -> FrameLabel:
    r = d.get("record")
    record = None
    if r is not None:
        record = ExtractedRecord(
            r["ts"], r["src"], r["dst"], Service(r["service"]) if r["service"] in Service._value2member_map_ else r["service"],
            r["domain"], r["item"],
            None if r["time_acc"] is None else tuple(r["time_acc"]),
            None if r["or_ident"] is None else or_ident_from_canonical(r["or_ident"]),
            r["or_cat"], d["frame"],
        )
    return FrameLabel(d["frame"], d["kind"], record)


# -- frame building ---------------------------------------------------------


def _checksum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def _mac(ip: bytes) -> bytes:
    return b"\x02\x00" + ip


class _Flow:
    """One TCP connection between an MMS client and server."""

    def __init__(self, client: str, server: str, port: int, rng: random.Random):
        self.client = ipaddress.IPv4Address(client).packed
        self.server = ipaddress.IPv4Address(server).packed
        self.client_ip = client
        self.server_ip = server
        self.port = port
        self.seq = {True: rng.getrandbits(32), False: rng.getrandbits(32)}
        self.invoke = 0
        self.ctl_num = 0
        self.ctl_val: Dict[str, bool] = {}

    def next_invoke(self) -> int:
        self.invoke += 1
        return self.invoke


class _Frames:
    def __init__(self):
        self.ip_id: Dict[bytes, int] = {}

    def segment(self, flow: _Flow, from_client: bool, payload: bytes) -> bytes:
        src, dst = (flow.client, flow.server) if from_client else (flow.server, flow.client)
        sport, dport = (flow.port, MMS_PORT) if from_client else (MMS_PORT, flow.port)
        seq = flow.seq[from_client]
        ack = flow.seq[not from_client]
        flow.seq[from_client] = (seq + len(payload)) & 0xFFFFFFFF
        tcp = struct.pack("!HHIIBBHHH", sport, dport, seq, ack, 5 << 4, 0x18, 8192, 0, 0)
        pseudo = src + dst + struct.pack("!BBH", 0, 6, len(tcp) + len(payload))
        csum = _checksum(pseudo + tcp + payload)
        tcp = tcp[:16] + struct.pack("!H", csum) + tcp[18:]
        ident = self.ip_id.get(src, 0)
        self.ip_id[src] = (ident + 1) & 0xFFFF
        ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 20 + len(tcp) + len(payload), ident, 0x4000, 64, 6, 0, src, dst)
        ip = ip[:10] + struct.pack("!H", _checksum(ip)) + ip[12:]
        return _mac(dst) + _mac(src) + b"\x08\x00" + ip + tcp + payload


@dataclass
class _Event:
    t_us: int
    order: int
    flow: _Flow
    from_client: bool
    kind: str
    build: object  # callable(t_us) -> (payload bytes, Optional[record fields])


def _utc(t_us: int, quality: int) -> UtcTimestamp:
    seconds, micros = divmod(t_us, 1_000_000)
    return UtcTimestamp(seconds, micros * (1 << 24) // 1_000_000, quality)


def synthesize(config: ScenarioConfig) -> Tuple[List[RawFrame], Manifest]:
    """Generate the capture described by ``config`` and its manifest."""
    validate(config)
    rng = random.Random(config.seed)
    start_us = round(config.start_time * 1_000_000) + 1_000_000
    end_us = start_us + round(config.duration * 1_000_000)

    flows: Dict[Tuple[str, str], _Flow] = {}
    pairs = set()
    if config.dataset_decl:
        pairs.add((config.scada_ip, config.dataset_host))
    pairs.update((config.scada_ip, p.server) for p in config.read_plan)
    pairs.update((config.scada_ip, p.server) for p in config.write_plan)
    pairs.update((p.attacker, p.target) for p in config.attack_plan)
    pairs.update((p.attacker, p.target) for p in config.recon_plan)
    for n, (client, server) in enumerate(sorted(pairs)):
        flows[(client, server)] = _Flow(client, server, 49152 + n, rng)

    events: List[_Event] = []
    counter = [0]

    def add(t_us, flow, from_client, kind, build):
        counter[0] += 1
        events.append(_Event(t_us, counter[0], flow, from_client, kind, build))

    def jitter(period_us: int) -> int:
        return max(1, round(period_us * rng.uniform(0.95, 1.05)))

    def request(t_us, flow, kind, make_msg, response, record_fields=None):
        """Queue a request (and its response) whose invoke id is fixed now."""
        invoke = flow.next_invoke()
        msg = make_msg(invoke)
        add(t_us, flow, True, kind, lambda _t, m=msg: (encode_data_envelope(encode_mms(m)), record_fields(m) if record_fields else None))
        if config.responses and response is not None:
            reply = response(invoke)
            add(t_us + rng.randint(800, 3000), flow, False, RESPONSE, lambda _t, m=reply: (encode_data_envelope(encode_mms(m)), None))

    # dataset directory exchange
    t = start_us + 100_000
    for name in sorted(config.dataset_decl):
        flow = flows[(config.scada_ip, config.dataset_host)]
        members = [ObjectName(config.dataset_domain, f"{node}$ST$SPCSO$stVal") for node in config.dataset_decl[name]]
        ds = ObjectName(config.dataset_domain, f"LLN0${name}")
        request(
            t, flow, DIRECTORY,
            lambda inv, ds=ds: dataset_directory_request(inv, ds),
            lambda inv, m=members: dataset_directory_response(inv, m),
            lambda m: [(m.service, n.domain_id, n.item_id, None, None, None) for n in m.reads],
        )
        t += jitter(20_000)

    base = start_us + 1_000_000
    for p in config.read_plan:
        flow = flows[(config.scada_ip, p.server)]
        period_us = round((p.period or config.poll_period) * 1_000_000)
        t = base + round(p.start * 1_000_000) + rng.randint(0, period_us // 2)
        name = ObjectName(p.domain, p.item)
        emitted = 0
        while (p.count is None and t < end_us) or (p.count is not None and emitted < p.count):
            request(
                t, flow, BENIGN_READ,
                lambda inv, n=name: read_request(inv, [n]),
                lambda inv: read_response(inv, 1),
                lambda m: [(m.service, n.domain_id, n.item_id, None, None, None) for n in m.reads],
            )
            emitted += 1
            t += jitter(period_us)

    def control(t_us, flow, kind, name, quality, or_cat, or_ident):
        invoke = flow.next_invoke()

        def build(at_us):
            # ctlVal and ctlNum follow materialisation order, which is time order.
            value = not flow.ctl_val.get(name.item_id, False)
            flow.ctl_val[name.item_id] = value
            oper = OperPayload(
                ctl_val=value,
                oper_tm=_utc(at_us, quality[0]),
                or_cat=or_cat,
                or_ident=or_ident,
                ctl_num=flow.ctl_num,
                t=_utc(at_us, quality[1]),
            )
            flow.ctl_num = (flow.ctl_num + 1) & 0xFF
            msg = write_request(invoke, [WriteItem.from_oper(name, oper)])
            return encode_data_envelope(encode_mms(msg)), [(Service.WRITE, name.domain_id, name.item_id, quality, or_ident, or_cat)]

        add(t_us, flow, True, kind, build)
        if config.responses:
            reply = write_response(invoke)
            add(t_us + rng.randint(800, 3000), flow, False, RESPONSE, lambda _t: (encode_data_envelope(encode_mms(reply)), None))

    for p in config.write_plan:
        flow = flows[(config.scada_ip, p.server)]
        t = base + round(p.start * 1_000_000)
        name = ObjectName(p.domain, p.item)
        for _ in range(p.count):
            quality = p.quality if p.quality is not None else rng.choice(SCADA_QUALITIES)
            control(t, flow, BENIGN_WRITE, name, tuple(quality), SCADA_OR_CAT, ORIDENT_ZERO64)
            t += jitter(round(p.interval * 1_000_000))

    for p in config.attack_plan:
        flow = flows[(p.attacker, p.target)]
        quality, or_cat, or_ident = FINGERPRINTS[p.fingerprint]
        kind = ATTACK_BEAN if p.fingerprint == BEAN else ATTACK_SCRIPT
        t = base + round(p.start * 1_000_000)
        name = ObjectName(p.domain, p.item)
        for _ in range(p.count):
            control(t, flow, kind, name, quality, or_cat, or_ident)
            t += jitter(round(p.interval * 1_000_000))

    for p in config.recon_plan:
        flow = flows[(p.attacker, p.target)]
        t = base + round(p.start * 1_000_000)
        for item in p.items:
            name = ObjectName(p.domain, item)
            request(
                t, flow, RECON,
                lambda inv, n=name: read_request(inv, [n]),
                lambda inv: read_response(inv, 1),
                lambda m: [(m.service, n.domain_id, n.item_id, None, None, None) for n in m.reads],
            )
            t += jitter(round(p.interval * 1_000_000))

    if config.associate:
        first: Dict[int, int] = {}
        for e in events:
            key = id(e.flow)
            first[key] = min(first.get(key, e.t_us), e.t_us)
        for flow in flows.values():
            if id(flow) not in first:
                continue
            t0 = max(start_us - 500_000, first[id(flow)] - 50_000)
            add(t0, flow, True, SETUP, lambda _t: (encode_cotp_cr(), None))
            add(t0 + 1_000, flow, False, SETUP, lambda _t: (encode_cotp_cc(), None))
            add(t0 + 2_000, flow, True, ASSOCIATE, lambda _t: (encode_connect_envelope(encode_mms(initiate_request())), None))
            if config.responses:
                add(t0 + 3_000, flow, False, ASSOCIATE,
                    lambda _t: (encode_connect_envelope(encode_mms(initiate_response()), accept=True), None))

    events.sort(key=lambda e: (e.t_us, e.order))
    return _materialise(events, config, flows)


def _materialise(events: List[_Event], config: ScenarioConfig, flows) -> Tuple[List[RawFrame], Manifest]:
    builder = _Frames()
    frames: List[RawFrame] = []
    labels: List[FrameLabel] = []
    last = -1
    for e in events:
        t_us = max(e.t_us, last + 1)
        last = t_us
        payload, record_fields = e.build(t_us)
        pieces = [payload[i:i + MSS] for i in range(0, len(payload), MSS)]
        for n, piece in enumerate(pieces):
            index = len(frames)
            frame = RawFrame(t_us // 1_000_000, t_us % 1_000_000, builder.segment(e.flow, e.from_client, piece))
            frames.append(frame)
            record = None
            if record_fields and n == len(pieces) - 1:
                src, dst = (e.flow.client_ip, e.flow.server_ip) if e.from_client else (e.flow.server_ip, e.flow.client_ip)
                service, domain, item, acc, ident, cat = record_fields[0]
                record = ExtractedRecord(frame.timestamp, src, dst, service, domain, item, acc, ident, cat, index)
            labels.append(FrameLabel(index, e.kind, record))

    ggio = {node: name for name, members in config.dataset_decl.items() for node in members}
    return frames, Manifest(labels, dict(sorted(ggio.items())), config.seed)


# -- presets ----------------------------------------------------------------

IED_IPS = ("172.16.1.21", "172.16.4.21")
DATASETS = {
    "CircuitBreaker": ("GGIO12",),
    "Loadbank1_IN": ("GGIO13", "GGIO14"),
    "Sync": ("GGIO17",),
}
RECON_ITEMS = (
    "LPHD1$ST$PhyHealth",
    "BI6GGIO1$CF$Mod",
    "LPHD1$RP$urcbA01",
    "PTRC1$CF$OpCntRs",
    "LLN0$Measurement",
)

# Seven polled (server, domain, item) keys; 271 + 6 * 270 = 1891 reads.
_POLLED = (
    (IED_IPS[0], "GIED1CTRL", "LLN0$DC$NamPlt$configRev"),
    (IED_IPS[1], "SIED1PROT", "LLN0$DC$NamPlt$configRev"),
    (IED_IPS[1], "SIED1PROT", "LLN0$Measurement"),
    (IED_IPS[1], "SIED1PROT", "LLN0$Protection"),
    (TARGET_PLC, WAGO_DOMAIN, "LLN0$CircuitBreaker"),
    (TARGET_PLC, WAGO_DOMAIN, "LLN0$Sync"),
    (TARGET_PLC, WAGO_DOMAIN, "LLN0$DC$NamPlt$configRev"),
)
SCENARIO1_READS = 1891
SCENARIO1_WRITES = 1


def _reads(total: int, period: float = 5.0) -> Tuple[ReadPlan, ...]:
    per, extra = divmod(total, len(_POLLED))
    return tuple(
        ReadPlan(server, domain, item, period=period, count=per + (1 if i < extra else 0), start=0.7 * i)
        for i, (server, domain, item) in enumerate(_POLLED)
    )


def _scada_write(count: int, quality=(0x0F, 0x10), start: float = 30.0, interval: float = 60.0) -> WritePlan:
    return WritePlan(TARGET_PLC, WAGO_DOMAIN, BREAKER_ITEM, count, start=start, interval=interval, quality=quality)


def _scenario1_scaled() -> ScenarioConfig:
    return ScenarioConfig(
        duration=5.0 * (SCENARIO1_READS // len(_POLLED) + 1),
        ied_ips=IED_IPS,
        read_plan=_reads(SCENARIO1_READS),
        write_plan=(_scada_write(SCENARIO1_WRITES),),
        dataset_decl=dict(DATASETS),
        seed=1,
    )


def _benign_writes() -> ScenarioConfig:
    writes = tuple(
        WritePlan(TARGET_PLC, WAGO_DOMAIN, item, 6, start=10.0 + 7 * i, interval=20.0)
        for i, item in enumerate(("GGIO12$CO$SPCSO$Oper", "GGIO13$CO$SPCSO1$Oper", "GGIO17$CO$SPCSO2$Oper"))
    )
    return ScenarioConfig(
        duration=200.0, ied_ips=IED_IPS, read_plan=_reads(280), write_plan=writes, dataset_decl=dict(DATASETS), seed=2
    )


def attack_scenario(
    fingerprints: Sequence[str] = (BEAN,),
    attacks: int = 10,
    benign_reads: int = 140,
    recon: bool = False,
    seed: int = 3,
) -> ScenarioConfig:
    """Benign polling plus ``attacks`` control writes per fingerprint on GGIO12.

    The benign part only uses keys that the ``scenario1_scaled`` preset also
    produces, so a baseline learned there whitelists it completely.
    """
    attackers = {BEAN: BEAN_ATTACKER, SCRIPT: SCRIPT_ATTACKER}
    plans = tuple(
        AttackPlan(fp, attackers[fp], TARGET_PLC, WAGO_DOMAIN, BREAKER_ITEM, attacks, start=20.0 + 3.1 * i, interval=0.5)
        for i, fp in enumerate(fingerprints)
    )
    recon_plan = (ReconPlan(BEAN_ATTACKER, IED_IPS[1], "SIED1CTRL", RECON_ITEMS, start=5.0),) if recon else ()
    duration = max(5.0 * (benign_reads // len(_POLLED) + 1), 30.0 + 0.6 * attacks)
    return ScenarioConfig(
        duration=duration,
        ied_ips=IED_IPS,
        attacker_ips=tuple(sorted({attackers[fp] for fp in fingerprints} | ({BEAN_ATTACKER} if recon else set()))),
        read_plan=_reads(benign_reads),
        write_plan=(_scada_write(1, start=12.0),),
        attack_plan=plans,
        recon_plan=recon_plan,
        dataset_decl=dict(DATASETS),
        seed=seed,
    )


PRESETS = {
    "scenario1_scaled": _scenario1_scaled,
    "benign_writes": _benign_writes,
    "bean_attack": lambda: attack_scenario((BEAN,), 10),
    "script_attack": lambda: attack_scenario((SCRIPT,), 10, seed=4),
    "mixed": lambda: attack_scenario((BEAN, SCRIPT), 10, recon=True, seed=5),
}
BENIGN_PRESETS = ("scenario1_scaled", "benign_writes")


def preset(name: str) -> ScenarioConfig:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return factory()
