"""Command-line entry point.

Exit status: 0 success, 1 invalid input (config, scenario, trace, records),
2 I/O failure, 64 bad usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .core import ConfigError, PolicyConfig, dump_policy, load_policy, validate_policy

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_USAGE = 64
CONFIG_ENV = "UDOS_GUARD_CONFIG"

log = logging.getLogger("udos_guard")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _policy(path: str | None) -> PolicyConfig | None:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return None
    cfg = load_policy(path)
    problems = validate_policy(cfg)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))
    return cfg


def _scenario(ref: str, seed: int | None):
    from .simnet import PRESETS, load_scenario, preset

    if ref in PRESETS:
        sc = preset(ref)
    else:
        sc = load_scenario(ref)
    if seed is not None:
        sc = sc.with_changes(seed=seed)
    sc.check()
    return sc


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    from .report import timeline_figure
    from .simnet import run_scenario
    from .trace_io.csvio import write_blocks_csv, write_metrics_csv, write_records_bin
    from .trace_io.jsonl import TraceHeader, engine_trace_items, write_trace_jsonl

    sc = _scenario(args.scenario, args.seed)
    mitigation = False if args.no_mitigation else None
    rep = run_scenario(sc, _policy(args.config), mitigation=mitigation, trace=not args.no_trace)
    out = _outdir(args.out)
    write_metrics_csv(out / "metrics.csv", rep.ticks)
    write_blocks_csv(out / "blocks.csv", rep.blocks)
    write_records_bin(out / "records.bin", rep.records)
    if rep.trace is not None:
        header = TraceHeader(sc.num_cores, rep.policy, rep.mitigation, sc.name)
        write_trace_jsonl(out / "trace.jsonl", engine_trace_items(header, rep.trace))
    if not args.no_figures:
        timeline_figure(rep, out / "timeline.png")
    print(f"{sc.name}: {len(rep.ticks)} ticks, {len(rep.records)} records, {len(rep.blocks)} blocks -> {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .trace_io.csvio import write_blocks_csv, write_records_bin
    from .trace_io.jsonl import read_trace_jsonl, replay_trace

    result = replay_trace(read_trace_jsonl(args.trace), policy=_policy(args.config), num_cores=args.cores)
    for b in result.blocks:
        r = b.reason
        print(f"{b.blocked_at / 1e9:.3f}s block {b.client} until {b.expires_at / 1e9:.3f}s "
              f"({r.layer.label} {r.resource.value} {r.observed} >= {r.threshold})")
    if args.out:
        out = _outdir(args.out)
        write_blocks_csv(out / "blocks.csv", result.blocks)
        write_records_bin(out / "records.bin", result.engine.records)
    print(f"replayed {result.ticks} ticks, {len(result.engine.records)} records, {len(result.blocks)} blocks")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def cmd_qos(args) -> int:
    from .report import qos_figure
    from .simnet.sweeps import qos_base, run_qos_sweep
    from .trace_io.csvio import write_qos_csv

    try:
        counts = _int_list(args.clients)
    except ValueError:
        raise UsageError(f"bad client list {args.clients!r}") from None
    rows = run_qos_sweep(counts, qos_base(args.seed), _policy(args.config), think=args.think)
    out = _outdir(args.out)
    write_qos_csv(out / "qos.csv", rows)
    if not args.no_figures:
        qos_figure(rows, out / "qos.png")
    for r in rows:
        print(f"{r.clients:3d} {'on ' if r.mitigation else 'off'} {r.mean_latency_ms:8.2f} ms  "
              f"{100 * r.failure_rate:6.2f}% failed")
    return EXIT_OK


def cmd_threshold(args) -> int:
    from .report import threshold_figure
    from .simnet.sweeps import DEFAULT_THRESHOLDS, availability_base, run_threshold_sweep
    from .trace_io.csvio import write_threshold_csv

    if args.thresholds:
        thresholds = []
        for part in args.thresholds.split(","):
            part = part.strip().lower()
            try:
                thresholds.append(None if part in ("inf", "off", "none") else int(float(part)))
            except ValueError:
                raise UsageError(f"bad threshold {part!r}") from None
    else:
        thresholds = list(DEFAULT_THRESHOLDS)
    try:
        rows = run_threshold_sweep(thresholds, availability_base(args.seed), _policy(args.config))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _outdir(args.out)
    write_threshold_csv(out / "threshold.csv", rows)
    if not args.no_figures:
        threshold_figure(rows, out / "threshold.png")
    for r in rows:
        thr = "inf" if r.threshold is None else str(r.threshold)
        print(f"{thr:>9} {r.mean_latency_ms:8.2f} ms  {100 * r.drop_rate:6.2f}% dropped")
    return EXIT_OK


def cmd_encode(args) -> int:
    from .trace_io.codec import encode_record
    from .trace_io.jsonl import read_trace_jsonl
    from .core import PacketRecord

    n = 0
    with open(args.output, "wb") as fh:
        for item in read_trace_jsonl(args.input):
            if isinstance(item, PacketRecord):
                fh.write(encode_record(item))
                n += 1
    print(f"encoded {n} records")
    return EXIT_OK


def cmd_decode(args) -> int:
    from .trace_io.codec import read_records_file
    from .trace_io.jsonl import to_json

    sink = open(args.output, "w", encoding="utf-8") if args.output else sys.stdout
    try:
        for rec in read_records_file(args.input, strict=not args.lenient):
            sink.write(json.dumps(to_json(rec), separators=(",", ":")) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_policy(path) if path else PolicyConfig()
    problems = validate_policy(cfg)
    if args.scenario:
        from .simnet import PRESETS, load_scenario, preset

        sc = preset(args.scenario) if args.scenario in PRESETS else load_scenario(args.scenario)
        problems.extend(sc.validate())
        problems.extend(validate_policy(sc.policy(cfg)))
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_INVALID
    if args.dump:
        sys.stdout.write(dump_policy(cfg))
    print(f"ok: {path or 'built-in defaults'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="udos-guard", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log every block decision")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, figures=True):
        sp.add_argument("--config", help=f"policy file (default: ${CONFIG_ENV}, else built-in)")
        sp.add_argument("--seed", type=int)
        if figures:
            sp.add_argument("--no-figures", action="store_true")

    sp = sub.add_parser("run", help="simulate a scenario and write metrics, blocks and records")
    sp.add_argument("--scenario", required=True, help="scenario file or preset name")
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-mitigation", action="store_true", help="account and watch, but never block")
    sp.add_argument("--no-trace", action="store_true", help="skip trace.jsonl")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("replay", help="feed a JSONL trace through profiler and mitigator")
    sp.add_argument("trace")
    sp.add_argument("--config")
    sp.add_argument("--cores", type=int, help="core count for traces without a header")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("qos-sweep", help="latency and failures against client count")
    sp.add_argument("--clients", default="1-15", help="e.g. 1-15 or 1,2,4,8")
    sp.add_argument("--think", type=float, default=0.03, help="client think time in seconds")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_qos, seed=1)

    sp = sub.add_parser("threshold-sweep", help="latency and drops against the instruction threshold")
    sp.add_argument("--thresholds", help="ascending, comma separated; 'inf' disables")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_threshold, seed=1)

    sp = sub.add_parser("encode", help="JSONL records to the binary format")
    sp.add_argument("input")
    sp.add_argument("output")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="binary records to JSONL")
    sp.add_argument("input")
    sp.add_argument("output", nargs="?")
    sp.add_argument("--lenient", action="store_true", help="accept nonzero reserved bytes")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("validate-config", help="check a policy file (and optionally a scenario)")
    sp.add_argument("config", nargs="?")
    sp.add_argument("--scenario")
    sp.add_argument("--dump", action="store_true", help="print the effective policy")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    from .profiler import ProfilerError
    from .simnet.model import InvalidScenario
    from .trace_io.codec import CodecError
    from .trace_io.jsonl import ParseError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"udos-guard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidScenario, ParseError, CodecError, ProfilerError, KeyError) as exc:
        print(f"udos-guard: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"udos-guard: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
