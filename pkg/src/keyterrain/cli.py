"""Command-line interface.

Subcommands: score (one full cycle), serve (HTTP API), whatif, inventory,
fetch-vulns. Exit codes: 0 success, 1 runtime failure, 2 usage error,
3 validation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import load_config
from .engine import CycleInputs, evaluate_whatif, run_cycle
from .errors import (
    ConfigError,
    CpeError,
    CycleError,
    KeyTerrainError,
    MissionFormatError,
    MissionValidationError,
    NotFoundError,
    ScanFormatError,
    ScoreInputError,
    WhatIfError,
)
from .reports import render_tables, scoreboard_json
from .store import SnapshotStore, canonical_json

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3

_VALIDATION_ERRORS = (
    MissionFormatError,
    MissionValidationError,
    ScanFormatError,
    ConfigError,
    CpeError,
    ScoreInputError,
    WhatIfError,
)


def _load_json(path: str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kct",
        description="Mission-centric key cyber terrain scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    score = sub.add_parser("score", help="run one scoring cycle")
    score.add_argument("--mission", required=True, help="mission-definition file")
    score.add_argument("--scan", action="append", default=[], help="scanner XML file")
    score.add_argument("--capture", action="append", default=[], help="pcap/pcapng file")
    score.add_argument("--events", action="append", default=[],
                       help="line-delimited discovery event stream")
    score.add_argument("--tbs-fixture", help="JSON map asset -> TBS")
    score.add_argument("--vbs-fixture", help="JSON map asset -> VBS")
    score.add_argument("--atas-fixture", help="JSON matrix task -> asset -> degree")
    score.add_argument("--tsas-fixture", help="JSON map task -> TSAS")
    score.add_argument("--weights", help="mw,bw,tw (must sum to 1)")
    score.add_argument("--k", type=float, help="threshold sensitivity in [0,1]")
    score.add_argument("--participation", choices=["assigned", "positive-atas"])
    score.add_argument("--config", help="engine config file")
    score.add_argument("--store", default="kct-store.sqlite", help="snapshot store path")
    score.add_argument("--expected", help="expected-values file for discrepancy notes")
    score.add_argument("--report", help="write the scoreboard JSON document here")
    score.add_argument("--tables", help="write the aligned text tables here")
    score.add_argument("--quiet", action="store_true")

    serve = sub.add_parser("serve", help="serve the HTTP API")
    serve.add_argument("--store", default="kct-store.sqlite")
    serve.add_argument("--config", help="engine config file")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8400)

    whatif = sub.add_parser("whatif", help="rescore a persisted version with patches")
    whatif.add_argument("--store", default="kct-store.sqlite")
    whatif.add_argument("--base", default="latest", help="base version id or 'latest'")
    whatif.add_argument("--patch", help="JSON file with a list of patches")
    whatif.add_argument("--k", type=float, help="shortcut for a sensitivity patch")
    whatif.add_argument("--out", help="write the ephemeral board document here")
    whatif.add_argument("--config", help="engine config file")

    inventory = sub.add_parser("inventory", help="parse scans and events into an inventory")
    inventory.add_argument("--scan", action="append", default=[], required=False)
    inventory.add_argument("--events", action="append", default=[])
    inventory.add_argument("--out", help="write the inventory snapshot here")

    fetch = sub.add_parser("fetch-vulns", help="resolve a CPE to CVEs and its VBS")
    fetch.add_argument("--cpe", required=True)
    fetch.add_argument("--fixture-dir", help="offline fixture directory")
    fetch.add_argument("--endpoint", help="NVD-compatible endpoint URL")
    fetch.add_argument("--cache", help="cache directory")
    fetch.add_argument("--ttl", type=float, default=86400.0)

    return parser


def _cmd_score(args) -> int:
    overrides = {}
    if args.weights:
        try:
            mw, bw, tw = (float(x) for x in args.weights.split(","))
        except ValueError:
            print("error: --weights expects three comma-separated numbers",
                  file=sys.stderr)
            return EXIT_USAGE
        overrides["weights"] = {"mw": mw, "bw": bw, "tw": tw}
    if args.k is not None:
        overrides["k"] = args.k
    if args.participation:
        overrides["participation"] = args.participation
    if args.expected:
        overrides["expected_path"] = args.expected
    config = load_config(args.config, overrides)

    inputs = CycleInputs(
        mission_path=args.mission,
        scan_paths=args.scan,
        capture_paths=args.capture,
        event_paths=args.events,
        tbs_fixture=_load_json(args.tbs_fixture) if args.tbs_fixture else None,
        vbs_fixture=_load_json(args.vbs_fixture) if args.vbs_fixture else None,
        atas_fixture=_load_json(args.atas_fixture) if args.atas_fixture else None,
        tsas_fixture=_load_json(args.tsas_fixture) if args.tsas_fixture else None,
    )
    store = SnapshotStore(args.store)
    try:
        result = run_cycle(config, inputs, store)
    finally:
        store.close()

    tables = render_tables(result.board, result.discrepancies)
    if args.report:
        Path(args.report).write_text(
            scoreboard_json(result.board, result.discrepancies) + "\n", encoding="utf-8"
        )
    if args.tables:
        Path(args.tables).write_text(tables, encoding="utf-8")
    if not args.quiet:
        print(tables)
        print(f"persisted version {result.version}")
        for notification in result.notifications:
            print(f"[{notification.severity}] {notification.body}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .api import create_app

    config = load_config(args.config)
    store = SnapshotStore(args.store)
    app = create_app(store, config)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _cmd_whatif(args) -> int:
    config = load_config(args.config)
    patches = list(_load_json(args.patch)) if args.patch else []
    if args.k is not None:
        patches.append({"kind": "sensitivity", "k": args.k})
    store = SnapshotStore(args.store)
    try:
        if args.base == "latest":
            snapshot = store.latest()
            if snapshot is None:
                raise NotFoundError("no scoreboard persisted yet")
        else:
            snapshot = store.get(int(args.base))
        mission_doc = store.mission_document(snapshot.mission_hash)
        outcome = evaluate_whatif(snapshot, patches, config, mission_doc)
    finally:
        store.close()

    doc = {
        "ephemeral": True,
        "base_version": outcome.base_version,
        "board": outcome.board_doc,
        "diff": outcome.diff,
    }
    text = canonical_json(doc)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(render_tables(outcome.board))
    gained = outcome.diff["mission_kcts_gained"]
    lost = outcome.diff["mission_kcts_lost"]
    print(f"mission KCTs gained: {gained or '-'}  lost: {lost or '-'}")
    return EXIT_OK


def _cmd_inventory(args) -> int:
    from . import inventory as inv

    records = []
    for path in args.scan:
        records.extend(inv.parse_scan(path))
    state = inv.inventory_from_records(records)
    events = []
    for path in args.events:
        events.extend(inv.read_event_stream(path))
    state = inv.apply_events(state, events)
    doc = inv.serialize_records(list(state.assets.values()))
    if args.out:
        Path(args.out).write_text(canonical_json(doc) + "\n", encoding="utf-8")
    active = state.active_assets()
    print(f"{len(active)} active assets, {len(state.assets) - len(active)} removed")
    for record in state.assets.values():
        cpe = record.cpe or "(no cpe)"
        print(f"  {record.asset_id:<12} {record.state:<8} {','.join(record.addresses)} {cpe}")
    return EXIT_OK


def _cmd_fetch_vulns(args) -> int:
    from .vulnintel import (
        FixtureSource,
        NvdSource,
        VulnerabilityCache,
        fetch_vulnerabilities,
        parse_cpe,
        vbs,
    )

    cpe = parse_cpe(args.cpe)
    if args.fixture_dir:
        source = FixtureSource(args.fixture_dir)
    else:
        source = NvdSource(endpoint=args.endpoint) if args.endpoint else NvdSource()
    cache = VulnerabilityCache(args.cache, args.ttl) if args.cache else None
    records = fetch_vulnerabilities(cpe, source, cache)
    for record in records:
        print(f"{record.cve_id}  base {record.cvss_base:.1f}")
    print(f"VBS {vbs(records):.3f} over {len(records)} records for {cpe.formatted}")
    return EXIT_OK


_COMMANDS = {
    "score": _cmd_score,
    "serve": _cmd_serve,
    "whatif": _cmd_whatif,
    "inventory": _cmd_inventory,
    "fetch-vulns": _cmd_fetch_vulns,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CycleError as exc:
        if isinstance(exc.cause, _VALIDATION_ERRORS):
            print(f"validation error at {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"cycle failed at {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except _VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyTerrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
