"""Mission dependency model: tasks, assets, weighted dependency edges.

The mission topology is a layered directed acyclic graph. Tasks sit on top;
information, service and equipment assets sit below, in that order. Every
edge carries a dependency degree in [0, 1]: 0.0 means independent, 1.0 fully
dependent. Degrees compose multiplicatively along a path and parallel paths
combine with a noisy-or, so all derived degrees stay inside [0, 1].

A loaded model is an immutable value. Mutation happens by building a new
model from an edited document, never in place.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import MissionFormatError, MissionValidationError, UnknownNodeError

MISSION_FORMAT = "kct-mission/1"

MISSION_MODES = ("offensive", "defensive-internal", "defensive-external")

# Top-to-bottom layer ordering. Objectives are reserved as the top layer for
# forward compatibility; the current model does not hold objective nodes.
LAYER_ORDER = ("objectives", "tasks", "information", "services", "equipment")

ASSET_LAYERS = ("information", "service", "equipment")

_LAYER_INDEX = {"tasks": 1, "information": 2, "service": 3, "equipment": 4}


@dataclass(frozen=True)
class TaskNode:
    """A mission task with a commander-assigned severity in [0, 1]."""

    task_id: str
    label: str
    severity: float


@dataclass(frozen=True)
class AssetNode:
    """A cyber asset bound to the mission, placed on one of the asset layers."""

    asset_id: str
    label: str
    layer: str
    cpe: str | None = None


@dataclass(frozen=True)
class DependencyEdge:
    """A directed dependency: ``source`` depends on ``target`` with ``degree``."""

    source: str
    target: str
    degree: float


@dataclass(frozen=True)
class DependencyPath:
    """A simple directed path and its composed degree (product of edge degrees)."""

    nodes: tuple[str, ...]
    path_degree: float


@dataclass(frozen=True)
class MissionModel:
    """Validated, immutable mission topology.

    All invariants are checked at construction time: severity and degree
    ranges, endpoint existence, unique node ids, no duplicate edges, layer
    ordering, and acyclicity of the union graph.
    """

    mission_id: str
    mode: str
    tasks: dict[str, TaskNode]
    assets: dict[str, AssetNode]
    task_edges: tuple[DependencyEdge, ...]
    asset_edges: tuple[DependencyEdge, ...]
    layer_order: tuple[str, ...] = LAYER_ORDER

    def __post_init__(self):
        _validate_model(self)

    @property
    def task_ids(self) -> tuple[str, ...]:
        return tuple(self.tasks)

    @property
    def asset_ids(self) -> tuple[str, ...]:
        return tuple(self.assets)

    def node_exists(self, node_id: str) -> bool:
        return node_id in self.tasks or node_id in self.assets

    def all_edges(self) -> tuple[DependencyEdge, ...]:
        return self.task_edges + self.asset_edges


def _layer_index(model: MissionModel, node_id: str) -> int:
    if node_id in model.tasks:
        return _LAYER_INDEX["tasks"]
    return _LAYER_INDEX[model.assets[node_id].layer]


def _validate_model(model: MissionModel) -> None:
    if model.mode not in MISSION_MODES:
        raise MissionValidationError(
            f"unknown mission mode '{model.mode}' (expected one of {MISSION_MODES})"
        )
    if tuple(model.layer_order) != LAYER_ORDER:
        raise MissionValidationError(
            f"unsupported layer order {model.layer_order!r}"
        )

    for task in model.tasks.values():
        if not 0.0 <= task.severity <= 1.0:
            raise MissionValidationError(
                f"severity out of range for task '{task.task_id}': {task.severity}"
            )
    for asset in model.assets.values():
        if asset.layer not in ASSET_LAYERS:
            raise MissionValidationError(
                f"unknown layer '{asset.layer}' for asset '{asset.asset_id}'"
            )
    overlap = set(model.tasks) & set(model.assets)
    if overlap:
        raise MissionValidationError(
            f"node id used as both task and asset: '{sorted(overlap)[0]}'"
        )

    seen: set[tuple[str, str]] = set()
    for edge in model.all_edges():
        if not 0.0 <= edge.degree <= 1.0:
            raise MissionValidationError(
                f"degree out of range on edge {edge.source}->{edge.target}: {edge.degree}"
            )
        for endpoint in (edge.source, edge.target):
            if not model.node_exists(endpoint):
                raise MissionValidationError(
                    f"edge {edge.source}->{edge.target} references unknown node '{endpoint}'"
                )
        key = (edge.source, edge.target)
        if key in seen:
            raise MissionValidationError(
                f"duplicate edge {edge.source}->{edge.target}; merge degrees or "
                "model distinct influences as intermediate nodes"
            )
        seen.add(key)

    for edge in model.task_edges:
        if edge.source not in model.tasks or edge.target not in model.tasks:
            raise MissionValidationError(
                f"task edge {edge.source}->{edge.target} must connect two tasks"
            )
    for edge in model.asset_edges:
        if edge.target not in model.assets:
            raise MissionValidationError(
                f"asset edge {edge.source}->{edge.target} must end on an asset"
            )
        if _layer_index(model, edge.source) > _layer_index(model, edge.target):
            raise MissionValidationError(
                f"edge {edge.source}->{edge.target} violates layer ordering "
                f"({'task' if edge.source in model.tasks else model.assets[edge.source].layer}"
                f" below {model.assets[edge.target].layer})"
            )

    cycle = _find_cycle(model)
    if cycle:
        raise MissionValidationError(
            "dependency cycle: " + " -> ".join(cycle)
        )


def _find_cycle(model: MissionModel) -> list[str] | None:
    """Return one directed cycle in the union graph, or None."""
    adjacency: dict[str, list[str]] = {}
    for edge in model.all_edges():
        adjacency.setdefault(edge.source, []).append(edge.target)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node: WHITE for node in list(model.tasks) + list(model.assets)}
    stack_path: list[str] = []

    def visit(node: str) -> list[str] | None:
        color[node] = GRAY
        stack_path.append(node)
        for succ in adjacency.get(node, ()):
            if color[succ] == GRAY:
                start = stack_path.index(succ)
                return stack_path[start:] + [succ]
            if color[succ] == WHITE:
                found = visit(succ)
                if found:
                    return found
        stack_path.pop()
        color[node] = BLACK
        return None

    for node in list(color):
        if color[node] == WHITE:
            found = visit(node)
            if found:
                return found
    return None


# ---------------------------------------------------------------------------
# Document loading
# ---------------------------------------------------------------------------

def parse_mission(doc: Mapping) -> MissionModel:
    """Build a validated MissionModel from a parsed mission document."""
    if not isinstance(doc, Mapping):
        raise MissionFormatError("mission document must be a JSON object")
    fmt = doc.get("format")
    if fmt != MISSION_FORMAT:
        raise MissionFormatError(
            f"unsupported mission format {fmt!r} (expected '{MISSION_FORMAT}')"
        )
    try:
        mission_id = str(doc["mission_id"])
        mode = str(doc.get("mode", "defensive-internal"))
        raw_tasks = doc.get("tasks", [])
        raw_assets = doc.get("assets", [])
        raw_task_edges = doc.get("task_edges", [])
        raw_asset_edges = doc.get("asset_edges", [])
    except KeyError as exc:
        raise MissionFormatError(f"missing mission key: {exc}") from None

    def make_tasks() -> dict[str, TaskNode]:
        tasks: dict[str, TaskNode] = {}
        for entry in raw_tasks:
            node = TaskNode(
                task_id=str(entry["id"]),
                label=str(entry.get("label", entry["id"])),
                severity=float(entry["severity"]),
            )
            if node.task_id in tasks:
                raise MissionValidationError(f"duplicate task id '{node.task_id}'")
            tasks[node.task_id] = node
        return tasks

    def make_assets() -> dict[str, AssetNode]:
        assets: dict[str, AssetNode] = {}
        for entry in raw_assets:
            node = AssetNode(
                asset_id=str(entry["id"]),
                label=str(entry.get("label", entry["id"])),
                layer=str(entry.get("layer", "service")),
                cpe=entry.get("cpe"),
            )
            if node.asset_id in assets:
                raise MissionValidationError(f"duplicate asset id '{node.asset_id}'")
            assets[node.asset_id] = node
        return assets

    def make_edges(entries: Iterable[Mapping]) -> tuple[DependencyEdge, ...]:
        edges = []
        for entry in entries:
            edge = DependencyEdge(
                source=str(entry["from"]),
                target=str(entry["to"]),
                degree=float(entry["degree"]),
            )
            # Zero-degree edges contribute nothing to any path product and
            # only inflate enumeration; they are dropped at load.
            if edge.degree == 0.0:
                continue
            edges.append(edge)
        return tuple(edges)

    try:
        return MissionModel(
            mission_id=mission_id,
            mode=mode,
            tasks=make_tasks(),
            assets=make_assets(),
            task_edges=make_edges(raw_task_edges),
            asset_edges=make_edges(raw_asset_edges),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MissionFormatError(f"malformed mission entry: {exc}") from exc


def load_mission(path: str | Path) -> MissionModel:
    """Read and validate a mission-definition file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MissionFormatError(f"cannot read mission file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MissionFormatError(f"mission file is not valid JSON: {exc}") from exc
    return parse_mission(doc)


def mission_to_dict(model: MissionModel) -> dict:
    """Serialize a model back to the mission-definition document shape."""
    return {
        "format": MISSION_FORMAT,
        "mission_id": model.mission_id,
        "mode": model.mode,
        "tasks": [
            {"id": t.task_id, "label": t.label, "severity": t.severity}
            for t in model.tasks.values()
        ],
        "assets": [
            {
                "id": a.asset_id,
                "label": a.label,
                "layer": a.layer,
                **({"cpe": a.cpe} if a.cpe else {}),
            }
            for a in model.assets.values()
        ],
        "task_edges": [
            {"from": e.source, "to": e.target, "degree": e.degree}
            for e in model.task_edges
        ],
        "asset_edges": [
            {"from": e.source, "to": e.target, "degree": e.degree}
            for e in model.asset_edges
        ],
    }


def mission_hash(model: MissionModel) -> str:
    """Stable content hash of the mission document."""
    canonical = json.dumps(mission_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Path enumeration and degree aggregation
# ---------------------------------------------------------------------------

def noisy_or(degrees: Iterable[float]) -> float:
    """Combine parallel dependency degrees: 1 - prod(1 - d_i).

    Empty input yields 0.0 (no dependency). Order-independent and monotone;
    1.0 is absorbing.
    """
    survival = 1.0
    for degree in degrees:
        survival *= 1.0 - degree
    return 1.0 - survival


def enumerate_paths(
    model: MissionModel,
    source: str,
    target: str,
    edges: Iterable[DependencyEdge] | None = None,
) -> list[DependencyPath]:
    """Enumerate every simple directed path from source to target.

    Each path carries the product of its edge degrees. By default the union
    of task and asset edges is searched; pass ``edges`` to restrict (e.g. to
    the asset dependency subgraph).
    """
    for node in (source, target):
        if not model.node_exists(node):
            raise UnknownNodeError(f"unknown node '{node}'")
    pool = model.all_edges() if edges is None else tuple(edges)
    adjacency: dict[str, list[DependencyEdge]] = {}
    for edge in pool:
        adjacency.setdefault(edge.source, []).append(edge)
    for out in adjacency.values():
        out.sort(key=lambda e: e.target)

    paths: list[DependencyPath] = []

    def walk(node: str, trail: list[str], degree: float) -> None:
        if node == target and len(trail) > 1:
            paths.append(DependencyPath(nodes=tuple(trail), path_degree=degree))
            return
        for edge in adjacency.get(node, ()):
            if edge.target in trail:
                continue
            trail.append(edge.target)
            walk(edge.target, trail, degree * edge.degree)
            trail.pop()

    if source != target:
        walk(source, [source], 1.0)
    return paths


def aggregate_degree(paths: Iterable[DependencyPath]) -> float:
    """Noisy-or over the degrees of parallel dependency paths."""
    return noisy_or(p.path_degree for p in paths)


def tasks_depending_on(model: MissionModel, task_id: str) -> dict[str, float]:
    """Aggregated dependency degree of every task that depends on ``task_id``.

    A task edge y -> t reads "y depends on t". Each dependent task y is mapped
    to the noisy-or over all simple task-level paths from y to t; tasks with
    no route are omitted, as is ``task_id`` itself.
    """
    if task_id not in model.tasks:
        raise UnknownNodeError(f"unknown task '{task_id}'")
    result: dict[str, float] = {}
    for other in model.tasks:
        if other == task_id:
            continue
        paths = enumerate_paths(model, other, task_id, edges=model.task_edges)
        if paths:
            result[other] = aggregate_degree(paths)
    return result
