"""Cycle orchestration: observe, orient, decide, act.

One cycle runs eight steps: scan ingestion, inventory events, mission
binding, traffic metrics, vulnerability intelligence, scoring, persistence,
notification and calibration. Any step failure aborts the whole cycle before
the store commits, so the latest persisted version is only ever moved by a
fully successful run. Notification delivery to sinks happens after the
commit; constructing the notifications is part of the cycle itself.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import requests as _requests

from . import inventory as inv
from .config import EngineConfig, config_hash
from .errors import CycleError, KeyTerrainError, WhatIfError
from .mission import MissionModel, load_mission, mission_hash, mission_to_dict, parse_mission
from .reports import calibration_document, scoreboard_document
from .scoring import (
    Discrepancy,
    ScoreBoard,
    Sensitivity,
    ScoreWeights,
    atas as atas_op,
    compare_with_expected,
    score_matrices,
    tsas as tsas_op,
)
from .store import Snapshot, SnapshotStore, canonical_json
from .traffic import DEFAULT_POLICY, load_policy, metrics_from_captures
from .vulnintel import (
    FixtureSource,
    NvdSource,
    VulnerabilityCache,
    assess_asset,
)

logger = logging.getLogger(__name__)

SEVERITY_INFO = "info"
SEVERITY_KCT_CHANGE = "kct-change"
SEVERITY_DISCREPANCY = "discrepancy"


@dataclass(frozen=True)
class Notification:
    severity: str
    subjects: tuple[str, ...]
    body: str
    scoreboard_version: int

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "subjects": list(self.subjects),
            "body": self.body,
            "scoreboard_version": self.scoreboard_version,
        }


class FileSink:
    """Append-only line-delimited notification log."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def emit(self, notification: Notification) -> None:
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(canonical_json(notification.to_dict()) + "\n")


class WebhookSink:
    def __init__(self, url: str, session=None):
        self.url = url
        self._session = session or _requests.Session()

    def emit(self, notification: Notification) -> None:
        self._session.post(self.url, json=notification.to_dict(), timeout=10)


@dataclass
class CycleInputs:
    """Everything one cycle consumes. Fixture fields override derivation."""

    mission_path: str | Path | None = None
    mission_doc: dict | None = None
    scan_paths: Sequence[str | Path] = ()
    capture_paths: Sequence[str | Path] = ()
    event_paths: Sequence[str | Path] = ()
    events: Sequence[inv.DiscoveryEvent] = ()
    tbs_fixture: Mapping[str, float] | None = None
    vbs_fixture: Mapping[str, float] | None = None
    atas_fixture: Mapping[str, Mapping[str, float]] | None = None
    tsas_fixture: Mapping[str, float] | None = None
    address_map: Mapping[str, str] | None = None


@dataclass
class CycleResult:
    version: int
    board: ScoreBoard
    board_doc: dict
    notifications: list[Notification]
    discrepancies: list[Discrepancy]
    calibration: dict
    warnings: list[str] = field(default_factory=list)


def request_calibration(gaps: Sequence[dict]) -> dict:
    """Build the step-8 document asking upstream sensors for missing evidence."""
    return calibration_document(gaps)


class CycleRunner:
    """Executes one full cycle against a snapshot store."""

    def __init__(self, config: EngineConfig, store: SnapshotStore):
        self.config = config
        self.store = store
        self.sinks = self._build_sinks()

    def _build_sinks(self) -> list:
        sinks: list = [FileSink(self.config.notification_file)]
        if self.config.webhook_url:
            sinks.append(WebhookSink(self.config.webhook_url))
        return sinks

    # -- steps ------------------------------------------------------------

    def _step_ingest(self, inputs: CycleInputs) -> inv.Inventory:
        records: list[inv.AssetRecord] = []
        for path in inputs.scan_paths:
            records.extend(inv.parse_scan(path))
        inventory = inv.inventory_from_records(records)
        events = list(inputs.events)
        for path in inputs.event_paths:
            events.extend(inv.read_event_stream(path))
        return inv.apply_events(inventory, events)

    def _step_bind(self, inputs: CycleInputs, inventory: inv.Inventory) -> MissionModel:
        if inputs.mission_doc is not None:
            model = parse_mission(inputs.mission_doc)
        elif inputs.mission_path is not None:
            model = load_mission(inputs.mission_path)
        else:
            raise KeyTerrainError("no mission document supplied")
        # Mission assets inherit CPEs discovered by the scanner when the
        # commander did not pin one in the mission file.
        if inventory.assets:
            patched = dict(model.assets)
            changed = False
            for asset_id, node in model.assets.items():
                record = inventory.assets.get(asset_id)
                if record and record.cpe and node.cpe is None:
                    patched[asset_id] = replace(node, cpe=record.cpe)
                    changed = True
            if changed:
                model = replace(model, assets=patched)
        return model

    def _step_traffic(
        self, inputs: CycleInputs, model: MissionModel, inventory: inv.Inventory
    ) -> tuple[dict[str, float], list[str]]:
        gaps: list[str] = []
        if inputs.tbs_fixture is not None:
            tbs = {a: float(inputs.tbs_fixture.get(a, 0.0)) for a in model.assets}
            gaps = [a for a in model.assets if a not in inputs.tbs_fixture]
            return tbs, gaps
        addresses = dict(inventory.address_map())
        if inputs.address_map:
            addresses.update(inputs.address_map)
        addresses = {ip: aid for ip, aid in addresses.items() if aid in model.assets}
        policy = (
            load_policy(self.config.cipher_policy_path)
            if self.config.cipher_policy_path
            else DEFAULT_POLICY
        )
        if inputs.capture_paths:
            metrics = metrics_from_captures(inputs.capture_paths, addresses, policy)
        else:
            metrics = None
        tbs: dict[str, float] = {}
        for asset_id in model.assets:
            record = metrics.per_asset.get(asset_id) if metrics else None
            if record is None or record.traffic_share_percent == 0.0:
                gaps.append(asset_id)
            tbs[asset_id] = record.tbs if record else 0.0
        return tbs, gaps

    def _step_vulns(
        self, inputs: CycleInputs, model: MissionModel
    ) -> tuple[dict[str, float], dict[str, str], list[str]]:
        """Returns (vbs map, unassessed annotations, cpe gaps)."""
        # An asset without a CPE cannot be auto-assessed next cycle either,
        # so the calibration gap is reported even under fixture scores.
        gaps = [a for a, node in model.assets.items() if node.cpe is None]
        if inputs.vbs_fixture is not None:
            vbs_map = {a: float(inputs.vbs_fixture.get(a, 0.0)) for a in model.assets}
            return vbs_map, {}, gaps
        source, cache = self._vuln_source()
        vbs_map: dict[str, float] = {}
        unassessed: dict[str, str] = {}
        for asset_id, node in model.assets.items():
            assessment = assess_asset(node.cpe, source, cache)
            vbs_map[asset_id] = assessment.score
            if not assessment.assessed:
                unassessed[asset_id] = assessment.reason or "unassessed"
        return vbs_map, unassessed, gaps

    def _vuln_source(self):
        cfg = self.config.vuln
        cache = VulnerabilityCache(cfg.cache_dir, cfg.cache_ttl_seconds) if cfg.cache_dir else None
        if cfg.mode == "nvd":
            endpoint = cfg.endpoint or NvdSource().endpoint
            return NvdSource(endpoint=endpoint), cache
        if not cfg.fixture_dir:
            raise KeyTerrainError("fixture vulnerability source needs vuln.fixture_dir")
        return FixtureSource(cfg.fixture_dir), cache

    def _step_score(
        self,
        inputs: CycleInputs,
        model: MissionModel,
        tbs: Mapping[str, float],
        vbs: Mapping[str, float],
    ) -> tuple[ScoreBoard, dict]:
        if inputs.atas_fixture is not None:
            mode = "fixture"
            atas_matrix = {t: dict(row) for t, row in inputs.atas_fixture.items()}
        else:
            mode = "graph"
            atas_matrix = {}
            for task in model.tasks:
                row = {}
                for asset in model.assets:
                    degree = atas_op(model, task, asset)
                    if degree > 0.0:
                        row[asset] = degree
                atas_matrix[task] = row
        if inputs.tsas_fixture is not None:
            tsas_map = {t: float(v) for t, v in inputs.tsas_fixture.items()}
        else:
            tsas_map = {task: tsas_op(model, task) for task in model.tasks}

        board = score_matrices(
            atas_matrix,
            tsas_map,
            tbs,
            vbs,
            weights=self.config.weights,
            sensitivity=self.config.sensitivity,
            participation=self.config.participation,
            extra_assets=model.asset_ids,
        )
        score_inputs = {
            "mode": mode,
            "atas": atas_matrix,
            "tsas": tsas_map,
            "tbs": dict(tbs),
            "vbs": dict(vbs),
            "cpes": {a: node.cpe for a, node in model.assets.items() if node.cpe},
        }
        return board, score_inputs

    def _step_persist(
        self, board_doc: dict, model: MissionModel, score_inputs: dict
    ) -> int:
        return self.store.append(
            board_doc,
            mission_hash(model),
            mission_to_dict(model),
            config_hash(self.config),
            score_inputs,
            commit=False,  # the cycle commits as its final act
        )

    def _step_notify(
        self,
        version: int,
        board: ScoreBoard,
        discrepancies: Sequence[Discrepancy],
        previous: Snapshot | None,
    ) -> list[Notification]:
        notifications = [
            Notification(
                SEVERITY_INFO,
                subjects=(),
                body=(
                    f"cycle complete: {len(board.tasks)} tasks, {len(board.assets)} assets, "
                    f"{len(board.mission_kcts)} mission KCTs"
                ),
                scoreboard_version=version,
            )
        ]
        before = set(previous.board.get("mission_kcts", [])) if previous else set()
        after = set(board.mission_kcts)
        if before != after:
            gained = sorted(after - before)
            lost = sorted(before - after)
            parts = []
            if gained:
                parts.append("gained " + ", ".join(gained))
            if lost:
                parts.append("lost " + ", ".join(lost))
            notifications.append(
                Notification(
                    SEVERITY_KCT_CHANGE,
                    subjects=tuple(sorted(after ^ before)),
                    body="mission KCT set changed: " + "; ".join(parts)
                         + f"; now {sorted(after)}",
                    scoreboard_version=version,
                )
            )
        for item in discrepancies:
            notifications.append(
                Notification(
                    SEVERITY_DISCREPANCY,
                    subjects=(item.subject,),
                    body=item.describe(),
                    scoreboard_version=version,
                )
            )
        return notifications

    def _step_calibrate(
        self,
        model: MissionModel,
        traffic_gaps: Sequence[str],
        cpe_gaps: Sequence[str],
    ) -> dict:
        requests_list = []
        for asset_id in sorted(set(cpe_gaps)):
            requests_list.append(
                {"asset_id": asset_id, "kind": "cpe-resolution",
                 "missing": "well-formed CPE name"}
            )
        for asset_id in sorted(set(traffic_gaps)):
            requests_list.append(
                {"asset_id": asset_id, "kind": "traffic-visibility",
                 "missing": "traffic evidence for availability scoring"}
            )
        return request_calibration(requests_list)

    # -- the loop ---------------------------------------------------------

    def run(self, inputs: CycleInputs) -> CycleResult:
        """Execute one cycle; on any step failure nothing is persisted."""
        previous = self.store.latest()

        def step(name: str, fn, *args):
            try:
                return fn(*args)
            except CycleError:
                raise
            except Exception as exc:
                raise CycleError(name, exc) from exc

        inventory = step("ingest", self._step_ingest, inputs)
        model = step("mission-bind", self._step_bind, inputs, inventory)
        tbs, traffic_gaps = step("traffic", self._step_traffic, inputs, model, inventory)
        vbs_map, unassessed, cpe_gaps = step("vulnerabilities", self._step_vulns,
                                             inputs, model)
        board, score_inputs = step("score", self._step_score, inputs, model, tbs, vbs_map)
        if unassessed:
            board = replace(
                board,
                notes=board.notes + tuple(
                    f"asset '{a}' vulnerability score unassessed ({why})"
                    for a, why in sorted(unassessed.items())
                ),
            )
        discrepancies = self._discrepancies(board)
        board_doc = scoreboard_document(board, discrepancies)

        with self.store.transaction():
            version = step("persist", self._step_persist, board_doc, model, score_inputs)
            notifications = step("notify", self._step_notify, version, board,
                                 discrepancies, previous)
            calibration = step("calibrate", self._step_calibrate, model,
                               traffic_gaps, cpe_gaps)

        self._deliver(notifications)
        return CycleResult(
            version=version,
            board=board,
            board_doc=board_doc,
            notifications=notifications,
            discrepancies=discrepancies,
            calibration=calibration,
        )

    def _discrepancies(self, board: ScoreBoard) -> list[Discrepancy]:
        if not self.config.expected_path:
            return []
        expected = json.loads(Path(self.config.expected_path).read_text(encoding="utf-8"))
        return compare_with_expected(board, expected, self.config.tolerance)

    def _deliver(self, notifications: Sequence[Notification]) -> None:
        # Post-commit, best effort: a sink outage must not invalidate a
        # committed snapshot.
        for sink in self.sinks:
            for notification in notifications:
                try:
                    sink.emit(notification)
                except Exception:
                    logger.exception("notification sink %r failed", sink)


def run_cycle(config: EngineConfig, inputs: CycleInputs, store: SnapshotStore) -> CycleResult:
    return CycleRunner(config, store).run(inputs)


# ---------------------------------------------------------------------------
# What-if evaluation
# ---------------------------------------------------------------------------

PATCH_KINDS = (
    "sensitivity", "weights", "task-severity", "edge-degree",
    "add-edge", "remove-edge", "add-task", "add-asset", "remove-node",
)

_GRAPH_ONLY = ("task-severity", "edge-degree", "add-edge", "remove-edge",
               "add-task", "add-asset")


@dataclass
class WhatIfOutcome:
    board: ScoreBoard
    board_doc: dict
    diff: dict
    base_version: int


def evaluate_whatif(
    snapshot: Snapshot,
    overrides: Sequence[Mapping],
    config: EngineConfig,
    mission_doc: dict,
) -> WhatIfOutcome:
    """Rescore a persisted snapshot with typed patches; persists nothing.

    Graph-shape patches (severity, edges, nodes) need a graph-scored base;
    fixture-scored bases accept sensitivity, weights and node removal only.
    """
    base_board = ScoreBoard.from_dict(snapshot.board)
    inputs = snapshot.inputs
    mode = inputs.get("mode", "graph")

    weights = ScoreWeights(**snapshot.board["weights"])
    sensitivity = Sensitivity(snapshot.board["sensitivity"])
    doc = json.loads(canonical_json(mission_doc))  # deep copy
    removed_nodes: set[str] = set()
    graph_dirty = False

    for patch in overrides:
        kind = patch.get("kind")
        if kind not in PATCH_KINDS:
            raise WhatIfError(f"unknown patch kind {kind!r}")
        if kind in _GRAPH_ONLY and mode != "graph":
            raise WhatIfError(
                f"patch '{kind}' requires a graph-scored base; version "
                f"{snapshot.version} was scored from fixture matrices"
            )
        try:
            if kind == "sensitivity":
                sensitivity = Sensitivity(float(patch["k"]))
            elif kind == "weights":
                weights = ScoreWeights(
                    mw=float(patch["mw"]), bw=float(patch["bw"]), tw=float(patch["tw"])
                )
            elif kind == "task-severity":
                _patch_severity(doc, str(patch["task"]), float(patch["value"]))
                graph_dirty = True
            elif kind == "edge-degree":
                _patch_edge(doc, str(patch["from"]), str(patch["to"]), float(patch["value"]))
                graph_dirty = True
            elif kind == "add-edge":
                _add_edge(doc, patch)
                graph_dirty = True
            elif kind == "remove-edge":
                _remove_edge(doc, str(patch["from"]), str(patch["to"]))
                graph_dirty = True
            elif kind == "add-task":
                doc["tasks"].append({"id": str(patch["id"]),
                                     "label": patch.get("label", patch["id"]),
                                     "severity": float(patch["severity"])})
                graph_dirty = True
            elif kind == "add-asset":
                doc["assets"].append({"id": str(patch["id"]),
                                      "label": patch.get("label", patch["id"]),
                                      "layer": patch.get("layer", "service")})
                graph_dirty = True
            elif kind == "remove-node":
                node = str(patch["id"])
                _remove_node(doc, node)
                removed_nodes.add(node)
                if mode == "graph":
                    graph_dirty = True
        except KeyError as exc:
            raise WhatIfError(f"patch {kind!r} missing field {exc}") from exc

    tbs = dict(inputs["tbs"])
    vbs = dict(inputs["vbs"])
    for node in removed_nodes:
        tbs.pop(node, None)
        vbs.pop(node, None)

    if mode == "graph" and graph_dirty:
        try:
            model = parse_mission(doc)
        except KeyTerrainError as exc:
            raise WhatIfError(str(exc)) from exc
        for asset_id in model.assets:
            tbs.setdefault(asset_id, 0.0)
            vbs.setdefault(asset_id, 0.0)
        atas_matrix = {
            task: {
                asset: degree
                for asset in model.assets
                if (degree := atas_op(model, task, asset)) > 0.0
            }
            for task in model.tasks
        }
        tsas_map = {task: tsas_op(model, task) for task in model.tasks}
        extra = model.asset_ids
    else:
        atas_matrix = {
            task: {a: v for a, v in row.items() if a not in removed_nodes}
            for task, row in inputs["atas"].items()
            if task not in removed_nodes
        }
        tsas_map = {t: v for t, v in inputs["tsas"].items() if t not in removed_nodes}
        extra = tuple(a for a in tbs if a not in removed_nodes)

    try:
        board = score_matrices(
            atas_matrix, tsas_map, tbs, vbs,
            weights=weights, sensitivity=sensitivity,
            participation=base_board.participation, extra_assets=extra,
        )
    except KeyTerrainError as exc:
        raise WhatIfError(str(exc)) from exc

    return WhatIfOutcome(
        board=board,
        board_doc=scoreboard_document(board),
        diff=_board_diff(base_board, board),
        base_version=snapshot.version,
    )


def _patch_severity(doc: dict, task_id: str, value: float) -> None:
    for task in doc.get("tasks", []):
        if task["id"] == task_id:
            task["severity"] = value
            return
    raise WhatIfError(f"severity patch references unknown task '{task_id}'")


def _edges(doc: dict):
    yield from doc.get("task_edges", [])
    yield from doc.get("asset_edges", [])


def _patch_edge(doc: dict, source: str, target: str, value: float) -> None:
    for edge in _edges(doc):
        if edge["from"] == source and edge["to"] == target:
            edge["degree"] = value
            return
    raise WhatIfError(f"degree patch references unknown edge {source}->{target}")


def _add_edge(doc: dict, patch: Mapping) -> None:
    source, target = str(patch["from"]), str(patch["to"])
    degree = float(patch["degree"])
    task_ids = {t["id"] for t in doc.get("tasks", [])}
    bucket = "task_edges" if source in task_ids and target in task_ids else "asset_edges"
    doc.setdefault(bucket, []).append({"from": source, "to": target, "degree": degree})


def _remove_edge(doc: dict, source: str, target: str) -> None:
    for bucket in ("task_edges", "asset_edges"):
        edges = doc.get(bucket, [])
        kept = [e for e in edges if not (e["from"] == source and e["to"] == target)]
        if len(kept) != len(edges):
            doc[bucket] = kept
            return
    raise WhatIfError(f"remove-edge references unknown edge {source}->{target}")


def _remove_node(doc: dict, node: str) -> None:
    before = len(doc.get("tasks", [])) + len(doc.get("assets", []))
    doc["tasks"] = [t for t in doc.get("tasks", []) if t["id"] != node]
    doc["assets"] = [a for a in doc.get("assets", []) if a["id"] != node]
    if len(doc["tasks"]) + len(doc["assets"]) == before:
        raise WhatIfError(f"remove-node references unknown node '{node}'")
    for bucket in ("task_edges", "asset_edges"):
        doc[bucket] = [
            e for e in doc.get(bucket, [])
            if e["from"] != node and e["to"] != node
        ]


def _board_diff(base: ScoreBoard, patched: ScoreBoard) -> dict:
    """Changed TACS cells, threshold moves, and KCT badge transitions."""
    changed_cells = []
    tasks = sorted(set(base.tasks) | set(patched.tasks))
    assets = sorted(set(base.assets) | set(patched.assets))
    for task in tasks:
        for asset in assets:
            before = base.tacs_cell(task, asset)
            after = patched.tacs_cell(task, asset)
            if abs(before - after) > 1e-12:
                changed_cells.append(
                    {"task": task, "asset": asset, "base": before, "patched": after}
                )
    task_changes = {}
    for task in tasks:
        before = set(base.task_kcts.get(task, ()))
        after = set(patched.task_kcts.get(task, ()))
        if before != after:
            task_changes[task] = {
                "gained": sorted(after - before),
                "lost": sorted(before - after),
            }
    return {
        "tacs_changed": changed_cells,
        "tth": {
            task: {"base": base.tth.get(task), "patched": patched.tth.get(task)}
            for task in tasks
            if base.tth.get(task) != patched.tth.get(task)
        },
        "mth": {"base": base.mth, "patched": patched.mth},
        "task_kcts_changed": task_changes,
        "mission_kcts_gained": sorted(set(patched.mission_kcts) - set(base.mission_kcts)),
        "mission_kcts_lost": sorted(set(base.mission_kcts) - set(patched.mission_kcts)),
    }
