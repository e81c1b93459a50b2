"""Command-line entry point: learn, sign, detect, compile and filter MMS captures."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from . import baseline as bl
from . import detector, engine, rulegen, synth
from .extract import Capture, decode_capture, records_from_capture, records_to_csv
from .pcapio import TruncatedFile, UnsupportedFormat, atomic_write, read_pcap, write_pcap

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOCKING = 2
EXIT_USAGE = 64

EPILOG = """exit status:
  0   success
  1   runtime error (unreadable capture, bad baseline, ...)
  2   detect found at least one BLOCKING attack path
  64  usage error (unknown option, missing input file)
"""

log = logging.getLogger("mmsguard")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _existing(path: str) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"no such file: {path}")
    return path


def _out_dir(path: str) -> str:
    parent = Path(path).parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")
    return path


def _write_text(path: str, text: str | bytes) -> None:
    atomic_write(path, text.encode() if isinstance(text, str) else text)


def _load_capture(path: str) -> Capture:
    frames = read_pcap(path)
    return decode_capture(frames)


def _learn(paths: Sequence[str]) -> bl.Baseline:
    records = []
    ggio = {}
    for path in paths:
        capture = _load_capture(path)
        records.extend(records_from_capture(capture))
        for node, ds in bl.build_ggio_map(capture.pdus).items():
            ggio.setdefault(node, ds)
    records.sort(key=lambda r: r.timestamp)
    return bl.learn(records, ggio, sources=[os.path.basename(p) for p in paths])


def _sign(base: bl.Baseline, attack_paths: Sequence[str], builtin: bool) -> tuple:
    records = []
    ggio = dict(base.ggio_map)
    for path in attack_paths:
        capture = _load_capture(path)
        records.extend(records_from_capture(capture))
        for node, ds in bl.build_ggio_map(capture.pdus).items():
            ggio.setdefault(node, ds)
    potential_read, potential_write = bl.diff(base, records)
    sigs, rejected = bl.validate_and_sign(potential_write, potential_read, ggio, base.write_whitelist)
    if builtin:
        known = {s.id for s in sigs}
        sigs = sorted(sigs + [s for s in bl.builtin_signatures() if s.id not in known], key=lambda s: s.id)
    return sigs, rejected, potential_read, potential_write


# -- subcommands ------------------------------------------------------------


def cmd_learn(args) -> int:
    paths = [_existing(p) for p in args.benign]
    _out_dir(args.out)
    base = _learn(paths)
    bl.save_baseline(args.out, base)
    print(f"read whitelist: {len(base.read_whitelist)} pairs, write whitelist: {len(base.write_whitelist)} tuples, "
          f"GGIO bindings: {len(base.ggio_map)}")
    if args.growth:
        records = []
        for p in paths:
            records.extend(records_from_capture(_load_capture(p)))
        for seen, new in bl.whitelist_growth(records, args.growth):
            print(f"growth {seen} {new}")
    return EXIT_OK


def cmd_diff(args) -> int:
    _existing(args.baseline)
    attacks = [_existing(p) for p in args.attack]
    base = bl.load_baseline(args.baseline)
    records = []
    for p in attacks:
        records.extend(records_from_capture(_load_capture(p)))
    potential_read, potential_write = bl.diff(base, records)
    doc = {
        "potential_read": [list(k) for k in sorted(potential_read)],
        "potential_write": [
            [k.domain_id, k.item_id, None if k.time_acc is None else [f"0x{b:02x}" for b in k.time_acc], k.or_ident]
            for k in sorted(potential_write, key=bl._write_sort_key)
        ],
    }
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        _write_text(_out_dir(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_sign(args) -> int:
    _existing(args.baseline)
    attacks = [_existing(p) for p in args.attack]
    _out_dir(args.out)
    base = bl.load_baseline(args.baseline)
    sigs, rejected, _, _ = _sign(base, attacks, args.builtin)
    bl.save_signatures(args.out, sigs)
    for r in rejected:
        print(f"discarded {'/'.join(str(x) for x in r.key[:2])}: {r.reason}", file=sys.stderr)
    blocking = sum(s.severity == bl.BLOCKING for s in sigs)
    print(f"{len(sigs)} signatures ({blocking} blocking, {len(sigs) - blocking} monitor)")
    return EXIT_OK


def cmd_detect(args) -> int:
    _existing(args.baseline)
    _existing(args.signatures)
    _existing(args.input)
    if args.out:
        _out_dir(args.out)
    base = bl.load_baseline(args.baseline)
    sigs = bl.load_signatures(args.signatures)
    capture = _load_capture(args.input)
    records = records_from_capture(capture)
    ggio = dict(base.ggio_map)
    for node, ds in bl.build_ggio_map(capture.pdus).items():
        ggio.setdefault(node, ds)
    base = replace(base, ggio_map=ggio)
    result = detector.detect(records, base, sigs)
    fmt = "json" if args.json else args.format
    report = detector.render_report(result, fmt)
    if args.out:
        _write_text(args.out, report)
    else:
        sys.stdout.write(report.decode())
    if args.promote_novel:
        _out_dir(args.promote_novel)
        writes = {bl.write_key(c.record) for c in result.novel_candidates if c.record.is_write}
        reads = {bl.read_key(c.record) for c in result.novel_candidates if c.record.is_read}
        promoted, _ = bl.validate_and_sign(writes, reads, ggio, base.write_whitelist, provenance=bl.FLAGGED_M2)
        bl.save_signatures(args.promote_novel, promoted)
    return EXIT_BLOCKING if result.blocking else EXIT_OK


def cmd_rulegen(args) -> int:
    _existing(args.signatures)
    _out_dir(args.out)
    sigs = bl.load_signatures(args.signatures)
    rules = rulegen.compile_rules(sigs, args.sid_base)
    _write_text(args.out, rulegen.emit_dsl(rules))
    if args.suricata:
        _write_text(_out_dir(args.suricata), rulegen.export_suricata_like(rules))
    print(f"{len(rules)} rules ({sum(r.action == 'drop' for r in rules)} drop)")
    return EXIT_OK


def cmd_filter(args) -> int:
    _existing(args.rules)
    _existing(args.input)
    _out_dir(args.out)
    base = bl.load_baseline(_existing(args.baseline)) if args.baseline else None
    with open(args.rules, encoding="utf-8") as fh:
        rules = rulegen.parse_dsl(fh.read())
    frames = read_pcap(args.input)
    outcome = engine.filter_frames(frames, rules, base, fail_closed=args.fail_closed)
    engine.write_filtered(outcome, args.out)
    if args.alerts:
        engine.write_alert_log(outcome, _out_dir(args.alerts))
    s = outcome.stats
    print(f"frames {s.frames}: passed {s.passed}, dropped {s.dropped}, alerts {s.alerts}, undecodable {s.decode_errors}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise UsageError("give exactly one of --preset or --config")
    _out_dir(args.out)
    if args.config:
        with open(_existing(args.config), encoding="utf-8") as fh:
            config = synth.config_from_json(fh.read())
    else:
        config = synth.preset(args.preset)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    frames, manifest = synth.synthesize(config)
    write_pcap(args.out, frames)
    if args.manifest:
        _write_text(_out_dir(args.manifest), manifest.to_json())
    if args.dump_config:
        _write_text(_out_dir(args.dump_config), synth.config_to_json(config))
    print(f"{len(frames)} frames: " + ", ".join(f"{k} {v}" for k, v in manifest.counts().items()))
    return EXIT_OK


def cmd_report(args) -> int:
    _existing(args.input)
    capture = _load_capture(args.input)
    records = records_from_capture(capture)
    if args.csv:
        _write_text(_out_dir(args.csv), records_to_csv(records))
    doc = capture.report.as_dict()
    doc["ggio_map"] = bl.build_ggio_map(capture.pdus)
    if args.json:
        sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    else:
        for key, value in doc.items():
            print(f"{key}: {value}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    benign = [_existing(p) for p in args.benign]
    attack = [_existing(p) for p in args.attack]
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out is not a directory: {out}")
    out.mkdir(parents=True, exist_ok=True)
    base = _learn(benign)
    sigs, rejected, potential_read, potential_write = _sign(base, attack, args.builtin)
    rules = rulegen.compile_rules(sigs, args.sid_base)
    bl.save_baseline(out / "baseline.json", base)
    bl.save_signatures(out / "signatures.json", sigs)
    _write_text(out / "rules.rules", rulegen.emit_dsl(rules))
    lines = [
        f"benign captures: {', '.join(base.sources)}",
        f"attack captures: {', '.join(os.path.basename(p) for p in attack)}",
        f"read whitelist: {len(base.read_whitelist)}",
        f"write whitelist: {len(base.write_whitelist)}",
        f"GGIO bindings: {', '.join(f'{k}={v}' for k, v in sorted(base.ggio_map.items())) or '-'}",
        f"potential reads: {len(potential_read)}",
        f"potential writes: {len(potential_write)}",
        f"signatures: {len(sigs)}",
    ]
    lines += [f"  {s.severity:8} {s.id}" for s in sigs]
    lines += [f"discarded: {'/'.join(str(x) for x in r.key[:2])}: {r.reason}" for r in rejected]
    lines += [f"rules: {len(rules)} ({sum(r.action == 'drop' for r in rules)} drop)"]
    _write_text(out / "report.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    p = _Parser(prog="mmsguard", description=__doc__, epilog=EPILOG, formatter_class=fmt)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("learn", help="learn read/write whitelists from benign captures", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--benign", nargs="+", required=True, metavar="PCAP")
    s.add_argument("--out", required=True, metavar="BASELINE.json")
    s.add_argument("--growth", type=int, metavar="N", help="also print new whitelist keys per N records")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("diff", help="list attack-trace keys missing from a baseline", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--baseline", required=True)
    s.add_argument("--attack", nargs="+", required=True, metavar="PCAP")
    s.add_argument("--out")
    s.set_defaults(func=cmd_diff)

    s = sub.add_parser("sign", help="diff, validate and emit attack signatures", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--baseline", required=True)
    s.add_argument("--attack", nargs="+", required=True, metavar="PCAP")
    s.add_argument("--out", required=True, metavar="SIGNATURES.json")
    s.add_argument("--builtin", action="store_true", help="also include the two known tool fingerprints")
    s.set_defaults(func=cmd_sign)

    s = sub.add_parser("detect", help="apply baseline and signatures to a capture", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--baseline", required=True)
    s.add_argument("--signatures", required=True)
    s.add_argument("--in", dest="input", required=True, metavar="PCAP")
    s.add_argument("--format", choices=("text", "csv", "json"), default="text")
    s.add_argument("--json", action="store_true", help="shorthand for --format json")
    s.add_argument("--out")
    s.add_argument("--promote-novel", metavar="SIGNATURES.json", help="write signatures derived from novel candidates")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("rulegen", help="compile signatures into a rule file", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--signatures", required=True)
    s.add_argument("--out", required=True, metavar="RULES.rules")
    s.add_argument("--sid-base", type=int, default=rulegen.SID_MIN)
    s.add_argument("--suricata", metavar="OUT.suri", help="also write a best-effort Suricata-style export")
    s.set_defaults(func=cmd_rulegen)

    s = sub.add_parser("filter", help="replay a capture through a rule file", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--rules", required=True)
    s.add_argument("--in", dest="input", required=True, metavar="PCAP")
    s.add_argument("--out", required=True, metavar="PCAP")
    s.add_argument("--baseline", help="annotate drops with GGIO components")
    s.add_argument("--alerts", metavar="ALERTS.jsonl")
    s.add_argument("--fail-closed", action="store_true", help="drop frames whose MMS cannot be decoded")
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("synth", help="generate a labelled synthetic capture", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--preset", choices=sorted(synth.PRESETS))
    s.add_argument("--config", metavar="SCENARIO.json")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, metavar="PCAP")
    s.add_argument("--manifest", metavar="MANIFEST.json")
    s.add_argument("--dump-config", metavar="SCENARIO.json")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("report", help="summarise the MMS content of a capture", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--in", dest="input", required=True, metavar="PCAP")
    s.add_argument("--csv", metavar="RECORDS.csv", help="also export the extracted records")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("pipeline", help="learn, sign and compile rules in one step", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("--benign", nargs="+", required=True, metavar="PCAP")
    s.add_argument("--attack", nargs="+", required=True, metavar="PCAP")
    s.add_argument("--out", required=True, metavar="DIR")
    s.add_argument("--sid-base", type=int, default=rulegen.SID_MIN)
    s.add_argument("--builtin", action="store_true", help="also include the two known tool fingerprints")
    s.set_defaults(func=cmd_pipeline)
    for s in sub.choices.values():
        s.set_defaults(subparser=s)
    return p


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        args.subparser.print_usage(sys.stderr)
        print(f"mmsguard {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UnsupportedFormat, TruncatedFile, bl.EmptyBenign, bl.SchemaMismatch, synth.InvalidConfig,
            rulegen.ParseError, rulegen.DuplicateSignatureId, ValueError, KeyError, OSError) as exc:
        print(f"mmsguard {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
