"""Command-line driver: ingest, query, cycle, metrics, export, import, config.

State lives in a ``.bma`` archive named by ``--store``. Exit codes: 0 ok,
2 malformed input or usage, 3 the store is frozen, 4 archive damaged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import REGIONS, EngineConfig, dump_config, load_config
from .engine import Engine, parse_turn
from .errors import (ArchiveCorrupt, BadRecord, EmptyProbeSet, EmptyQuery, EngineError, FrozenState,
                     InvariantViolation, VersionMismatch)
from .metrics import erosion, evaluate, load_probes

EXIT_OK, EXIT_INPUT, EXIT_FROZEN, EXIT_ARCHIVE = 0, 2, 3, 4


def _open_engine(args) -> Engine:
    store = Path(args.store) if args.store else None
    if store is not None and store.exists():
        engine = Engine.load(store)
    else:
        engine = Engine(load_config(args.config) if args.config else EngineConfig())
    if args.disable_region:
        cfg = engine.config
        cfg.disabled_regions = tuple(sorted(set(cfg.disabled_regions) | set(args.disable_region)))
        engine = Engine(store=engine.store)
    return engine


def _save(engine: Engine, args) -> None:
    if args.store:
        engine.export(args.store)


def _emit(args, payload: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print("\n".join(lines))


def cmd_ingest(args) -> int:
    engine = _open_engine(args)
    engine.store.check_writable("ingest")
    turns, cycles = 0, 0
    last_turn: dict[str, int] = {}
    with open(args.file, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                data = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise BadRecord(f"invalid JSON: {exc.msg}", n) from None
            turn = parse_turn(data, n)
            if "turn" in data:
                prev = last_turn.get(turn.session_id)
                if prev is not None and turn.turn <= prev:
                    raise BadRecord(f"turn {turn.turn} does not follow {prev} in session {turn.session_id}", n)
                last_turn[turn.session_id] = turn.turn
            engine.ingest_turn(turn)
            turns += 1
            if args.cycle_every and turns % args.cycle_every == 0:
                engine.run_cycle()
                cycles += 1
    if args.freeze_after:
        engine.freeze()
    _save(engine, args)
    counts = engine.counts()
    payload = {"turns": turns, "cycles": cycles, "counts": counts, "frozen": engine.config.frozen,
               "state_digest": engine.state_digest()}
    lines = [f"ingested {turns} turns, {cycles} cycles"]
    lines += [f"  {k}: {v}" for k, v in counts.items()]
    lines += [f"frozen: {engine.config.frozen}", f"digest: {payload['state_digest']}"]
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_query(args) -> int:
    engine = _open_engine(args)
    bundle = engine.retrieve(args.text, touch=args.reinforce)
    if args.reinforce:
        _save(engine, args)
    payload = bundle.as_dict()
    p = bundle.profile
    lines = [
        f"profile: temporal={p.temporal} identity={p.identity} preference={p.preference} factual={p.factual}",
        "plan: " + ", ".join(f"{s}={w:g}" for s, w in bundle.plan.weights.items())
        + f" (max_rounds={bundle.plan.max_rounds})",
        f"rounds: {bundle.rounds_used}  uncertainty: {bundle.uncertainty:.4f}",
    ]
    if bundle.fast_path is not None:
        lines.append(f"working memory: {bundle.fast_path.summary} [{bundle.fast_path.source_trace}]")
    for a in bundle.temporal_answers:
        lines.append(f"temporal answer: {a.at} ({a.kind}, {a.entity}) <- {a.trace_ref}: {a.description}")
    for i, r in enumerate(bundle.fused, start=1):
        ranks = " ".join(f"{s}#{n}" for s, n in r.per_source_ranks.items())
        lines.append(f"{i:2d}. {r.candidate_id} {r.fused_score:.6f} [{ranks}] {bundle.evidence.get(r.candidate_id, '')}")
    for c in bundle.constraints:
        lines.append(f"constraint: {c}")
    if not bundle.fused and bundle.fast_path is None:
        lines.append("no evidence")
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_cycle(args) -> int:
    engine = _open_engine(args)
    report = engine.run_cycle()
    _save(engine, args)
    d = report.as_dict()
    _emit(args, d, [f"{k}: {v}" for k, v in d.items()])
    return EXIT_OK


def cmd_metrics(args) -> int:
    probes = load_probes(args.probes)
    engine = _open_engine(args)
    report = evaluate(engine, probes)
    payload = report.as_dict()
    if args.baseline:
        base = evaluate(Engine.load(args.baseline), probes)
        e = erosion(base.score, report.score)
        payload["baseline_S"] = e.t0_score
        payload["E"] = e.erosion
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            for r in report.results:
                fh.write(json.dumps(r.as_dict(), sort_keys=True) + "\n")
    lines = [f"{k}: {payload[k]}" for k in ("T", "C", "I", "S")]
    if "E" in payload:
        lines.append(f"E: {payload['E']} (baseline S {payload['baseline_S']})")
    _emit(args, payload, lines)
    return EXIT_OK


def cmd_export(args) -> int:
    engine = _open_engine(args)
    manifest = engine.export(args.out)
    _emit(args, manifest, [f"wrote {args.out}", *(f"  {k}: {v}" for k, v in manifest["counts"].items())])
    return EXIT_OK


def cmd_import(args) -> int:
    engine = Engine.load(args.archive)
    if not args.store:
        raise BadRecord("--store is required for import")
    engine.export(args.store)
    _emit(args, {"counts": engine.counts(), "state_digest": engine.state_digest()},
          [f"imported {args.archive} into {args.store}", f"digest: {engine.state_digest()}"])
    return EXIT_OK


def cmd_config(args) -> int:
    if args.store and Path(args.store).exists():
        config = Engine.load(args.store).config
    else:
        config = load_config(args.config) if args.config else EngineConfig()
    if args.json:
        print(json.dumps(config.to_dict(), sort_keys=True))
    else:
        sys.stdout.write(dump_config(config))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", help="path of the .bma archive holding engine state")
    common.add_argument("--config", help="INI config file used when creating a new store")
    common.add_argument("--disable-region", action="append", choices=REGIONS, default=[],
                        help="turn a region into a pass-through (repeatable)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="brainmem", description="Long-horizon agent memory engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="ingest line-delimited conversation turns")
    p.add_argument("file")
    p.add_argument("--cycle-every", type=int, default=0, metavar="N", help="run a lifecycle cycle every N turns")
    p.add_argument("--freeze-after", action="store_true", help="freeze the store once the file is ingested")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", parents=[common], help="retrieve evidence for a query")
    p.add_argument("text")
    p.add_argument("--reinforce", action="store_true", help="record access on the top result and save")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("cycle", parents=[common], help="run one consolidation and forgetting cycle")
    p.set_defaults(func=cmd_cycle)

    p = sub.add_parser("metrics", parents=[common], help="compute T, C, I, S and erosion from probes")
    p.add_argument("probes")
    p.add_argument("--baseline", help="archive whose S is the erosion reference")
    p.add_argument("--report", help="write per-probe results as line-delimited JSON")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export", parents=[common], help="write the store to another archive")
    p.add_argument("out")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", parents=[common], help="verify an archive and install it as the store")
    p.add_argument("archive")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("config", parents=[common], help="print the effective configuration")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FrozenState as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FROZEN
    except (ArchiveCorrupt, VersionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARCHIVE
    except (BadRecord, EmptyQuery, EmptyProbeSet, InvariantViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
