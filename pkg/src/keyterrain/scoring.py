"""Criticality scoring: per-task and mission-level asset scores and thresholds.

Score vocabulary
    ATAS  task->asset aggregated dependency degree (noisy-or over paths)
    TSAS  task severity inflated by the severity of tasks depending on it
    TBS   traffic base score (mean of availability/confidentiality/integrity)
    VBS   vulnerability base score (max CVSS base / 10)
    TACS  TSAS * (mw*ATAS + bw*TBS + tw*VBS)
    TTH   per-task threshold: mean + k * sample stddev of the task's TACS
    MTH   mission threshold: mean + k * sample stddev of the TTH values
    MACS  per-asset maximum TACS across the tasks it participates in

An asset is a task KCT when its TACS reaches the task threshold, and a
mission KCT when its MACS reaches the mission threshold. Comparisons use >=
and thresholds are clamped to [0, 1] before classification.

Participation policy: the threshold and MACS statistics run over the assets
assigned to a task. By default every assigned cell counts, including cells
whose aggregated dependency degree is zero ("assigned"); the alternative
"positive-atas" policy restricts to cells with a positive degree. When the
assignment comes from the mission graph the two policies coincide, because
a reachable asset always has a positive degree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from statistics import mean, stdev
from typing import Iterable, Mapping, Sequence

from .errors import EmptyMissionError, ScoreInputError, UnknownNodeError
from .mission import MissionModel, enumerate_paths, noisy_or, tasks_depending_on

PARTICIPATION_ASSIGNED = "assigned"
PARTICIPATION_POSITIVE = "positive-atas"
PARTICIPATION_POLICIES = (PARTICIPATION_ASSIGNED, PARTICIPATION_POSITIVE)


@dataclass(frozen=True)
class ScoreWeights:
    """Weights for the ATAS/TBS/VBS mix inside TACS; must sum to 1."""

    mw: float = 3 / 5
    bw: float = 1 / 5
    tw: float = 1 / 5

    def __post_init__(self):
        for name, value in (("mw", self.mw), ("bw", self.bw), ("tw", self.tw)):
            if not 0.0 <= value <= 1.0:
                raise ScoreInputError(f"weight {name} out of range: {value}")
        total = self.mw + self.bw + self.tw
        if abs(total - 1.0) > 1e-9:
            raise ScoreInputError(
                f"weights must sum to 1 (got {total!r}); normalize before loading"
            )


DEFAULT_WEIGHTS = ScoreWeights()


@dataclass(frozen=True)
class Sensitivity:
    """Threshold sensitivity k in [0, 1]; higher k means fewer KCTs."""

    k: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ScoreInputError(f"sensitivity k out of range: {self.k}")


OPTIMISTIC = Sensitivity(1.0)
MEDIUM = Sensitivity(0.5)
PESSIMISTIC = Sensitivity(0.0)


@dataclass(frozen=True)
class ScoreBoard:
    """Complete scoring output for one mission evaluation.

    Matrix mappings are keyed task -> asset and hold only assigned cells;
    a missing cell means the asset is not used by that task (reported as 0).
    """

    tasks: tuple[str, ...]
    assets: tuple[str, ...]
    atas: dict[str, dict[str, float]]
    tsas: dict[str, float]
    tbs: dict[str, float]
    vbs: dict[str, float]
    tacs: dict[str, dict[str, float]]
    tth: dict[str, float]
    mth: float
    macs: dict[str, float]
    task_kcts: dict[str, tuple[str, ...]]
    mission_kcts: tuple[str, ...]
    weights: ScoreWeights = DEFAULT_WEIGHTS
    sensitivity: Sensitivity = MEDIUM
    participation: str = PARTICIPATION_ASSIGNED
    notes: tuple[str, ...] = ()

    def tacs_cell(self, task: str, asset: str) -> float:
        return self.tacs.get(task, {}).get(asset, 0.0)

    def atas_cell(self, task: str, asset: str) -> float:
        return self.atas.get(task, {}).get(asset, 0.0)

    def to_dict(self) -> dict:
        return {
            "tasks": list(self.tasks),
            "assets": list(self.assets),
            "atas": {t: dict(row) for t, row in self.atas.items()},
            "tsas": dict(self.tsas),
            "tbs": dict(self.tbs),
            "vbs": dict(self.vbs),
            "tacs": {t: dict(row) for t, row in self.tacs.items()},
            "tth": dict(self.tth),
            "mth": self.mth,
            "macs": dict(self.macs),
            "task_kcts": {t: list(v) for t, v in self.task_kcts.items()},
            "mission_kcts": list(self.mission_kcts),
            "weights": {"mw": self.weights.mw, "bw": self.weights.bw, "tw": self.weights.tw},
            "sensitivity": self.sensitivity.k,
            "participation": self.participation,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScoreBoard":
        return cls(
            tasks=tuple(doc["tasks"]),
            assets=tuple(doc["assets"]),
            atas={t: dict(row) for t, row in doc["atas"].items()},
            tsas=dict(doc["tsas"]),
            tbs=dict(doc["tbs"]),
            vbs=dict(doc["vbs"]),
            tacs={t: dict(row) for t, row in doc["tacs"].items()},
            tth=dict(doc["tth"]),
            mth=float(doc["mth"]),
            macs=dict(doc["macs"]),
            task_kcts={t: tuple(v) for t, v in doc["task_kcts"].items()},
            mission_kcts=tuple(doc["mission_kcts"]),
            weights=ScoreWeights(**doc["weights"]),
            sensitivity=Sensitivity(doc["sensitivity"]),
            participation=doc.get("participation", PARTICIPATION_ASSIGNED),
            notes=tuple(doc.get("notes", ())),
        )


# ---------------------------------------------------------------------------
# Elementary score operations
# ---------------------------------------------------------------------------

def atas(model: MissionModel, task_id: str, asset_id: str) -> float:
    """Aggregated dependency degree between a task and an asset.

    Noisy-or over every simple dependency path from the task into the asset
    layers. Paths run through asset edges only; inter-task severity
    propagation is handled separately by TSAS.
    """
    if task_id not in model.tasks:
        raise UnknownNodeError(f"unknown task '{task_id}'")
    if asset_id not in model.assets:
        raise UnknownNodeError(f"unknown asset '{asset_id}'")
    paths = enumerate_paths(model, task_id, asset_id, edges=model.asset_edges)
    return noisy_or(p.path_degree for p in paths)


def cumulative_severity(severity_y: float, degree_ty: float) -> float:
    """Severity contribution of one dependent task: severity * degree."""
    for name, value in (("severity", severity_y), ("degree", degree_ty)):
        if not 0.0 <= value <= 1.0:
            raise ScoreInputError(f"{name} out of range: {value}")
    return severity_y * degree_ty


def tsas(model: MissionModel, task_id: str) -> float:
    """Task severity aggregated with the severity of its dependent tasks.

    1 - (1 - severity(t)) * prod(1 - severity(y) * degree(y => t)) over the
    tasks y that depend on t. A task nobody depends on keeps its own severity.
    """
    if task_id not in model.tasks:
        raise UnknownNodeError(f"unknown task '{task_id}'")
    own = model.tasks[task_id].severity
    survival = 1.0 - own
    for dependent, degree in tasks_depending_on(model, task_id).items():
        survival *= 1.0 - cumulative_severity(model.tasks[dependent].severity, degree)
    return 1.0 - survival


def tacs(
    tsas_t: float,
    atas_at: float,
    tbs_a: float,
    vbs_a: float,
    weights: ScoreWeights = DEFAULT_WEIGHTS,
) -> float:
    """Task-asset criticality: TSAS * (mw*ATAS + bw*TBS + tw*VBS)."""
    for name, value in (
        ("tsas", tsas_t), ("atas", atas_at), ("tbs", tbs_a), ("vbs", vbs_a)
    ):
        if not 0.0 <= value <= 1.0:
            raise ScoreInputError(f"{name} out of range: {value}")
    return tsas_t * (weights.mw * atas_at + weights.bw * tbs_a + weights.tw * vbs_a)


def _threshold(values: Sequence[float], sensitivity: Sensitivity) -> float:
    # Sample standard deviation (n-1); a single value has zero dispersion.
    spread = stdev(values) if len(values) > 1 else 0.0
    return mean(values) + sensitivity.k * spread


def tth(tacs_values: Sequence[float], sensitivity: Sensitivity = MEDIUM) -> float:
    """Task threshold: mean + k * sample stddev of the task's TACS values."""
    if not tacs_values:
        raise ScoreInputError("task threshold needs at least one TACS value")
    for value in tacs_values:
        if not 0.0 <= value <= 1.0:
            raise ScoreInputError(f"TACS value out of range: {value}")
    return _threshold(tacs_values, sensitivity)


def mth(tth_values: Sequence[float], sensitivity: Sensitivity = MEDIUM) -> float:
    """Mission threshold: mean + k * sample stddev of the task thresholds."""
    if not tth_values:
        raise EmptyMissionError("empty mission: no task thresholds to aggregate")
    return _threshold(tth_values, sensitivity)


def macs(tacs_row: Sequence[float]) -> float:
    """Mission asset criticality: maximum of the asset's TACS values."""
    if not tacs_row:
        raise ScoreInputError("asset participates in no task; MACS undefined")
    return max(tacs_row)


def _clamp01(value: float) -> float:
    return min(1.0, max(0.0, value))


def classify_kcts(board: ScoreBoard) -> tuple[dict[str, tuple[str, ...]], tuple[str, ...]]:
    """Classify task and mission KCTs from a populated board.

    Task level: participating assets whose TACS >= the task threshold.
    Mission level: assets whose MACS >= the mission threshold. Thresholds are
    clamped to [0, 1] first, which never changes the outcome for scores <= 1.
    """
    task_kcts: dict[str, tuple[str, ...]] = {}
    for task in board.tasks:
        if task not in board.tth:
            task_kcts[task] = ()
            continue
        limit = _clamp01(board.tth[task])
        members = [
            asset
            for asset in board.assets
            if asset in _participants(board.atas.get(task, {}), board.participation)
            and board.tacs_cell(task, asset) >= limit
        ]
        task_kcts[task] = tuple(members)
    mission_limit = _clamp01(board.mth)
    mission = tuple(
        asset for asset in board.assets
        if asset in board.macs and board.macs[asset] >= mission_limit
    )
    return task_kcts, mission


def _participants(atas_row: Mapping[str, float], participation: str) -> set[str]:
    if participation == PARTICIPATION_POSITIVE:
        return {a for a, degree in atas_row.items() if degree > 0.0}
    return set(atas_row)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def score_matrices(
    atas_matrix: Mapping[str, Mapping[str, float]],
    tsas_map: Mapping[str, float],
    tbs: Mapping[str, float],
    vbs: Mapping[str, float],
    weights: ScoreWeights = DEFAULT_WEIGHTS,
    sensitivity: Sensitivity = MEDIUM,
    participation: str = PARTICIPATION_ASSIGNED,
    extra_assets: Iterable[str] = (),
) -> ScoreBoard:
    """Score a mission from pre-aggregated ATAS and TSAS matrices.

    ``atas_matrix`` holds one row per task; the cells present in a row are
    the assets assigned to that task (a cell may carry degree 0.0). This is
    the entry point for fixture-driven runs and the common tail of the
    graph-driven pipeline.
    """
    if participation not in PARTICIPATION_POLICIES:
        raise ScoreInputError(f"unknown participation policy '{participation}'")
    tasks = tuple(atas_matrix)
    if not tasks:
        raise EmptyMissionError("empty mission: no tasks to score")
    assets_seen: dict[str, None] = {}
    for row in atas_matrix.values():
        for asset in row:
            assets_seen.setdefault(asset)
    for asset in extra_assets:
        assets_seen.setdefault(asset)
    assets = tuple(assets_seen)

    for task in tasks:
        if task not in tsas_map:
            raise ScoreInputError(f"missing TSAS value for task '{task}'")
    for asset in assets:
        if asset not in tbs:
            raise ScoreInputError(f"missing TBS metric for asset '{asset}'")
        if asset not in vbs:
            raise ScoreInputError(f"missing VBS metric for asset '{asset}'")

    notes: list[str] = []
    tacs_matrix: dict[str, dict[str, float]] = {}
    for task in tasks:
        row = {}
        for asset, degree in atas_matrix[task].items():
            row[asset] = tacs(tsas_map[task], degree, tbs[asset], vbs[asset], weights)
        tacs_matrix[task] = row

    tth_map: dict[str, float] = {}
    for task in tasks:
        members = _participants(atas_matrix[task], participation)
        values = [tacs_matrix[task][a] for a in atas_matrix[task] if a in members]
        if not values:
            notes.append(f"task '{task}' has no participating assets; no threshold")
            continue
        tth_map[task] = tth(values, sensitivity)

    mission_threshold = mth(list(tth_map.values()), sensitivity)
    if mission_threshold > 1.0 or any(v > 1.0 for v in tth_map.values()):
        notes.append("thresholds above 1.0 are clamped for classification")

    macs_map: dict[str, float] = {}
    for asset in assets:
        values = [
            tacs_matrix[task][asset]
            for task in tasks
            if asset in _participants(atas_matrix[task], participation)
        ]
        if values:
            macs_map[asset] = macs(values)
        else:
            notes.append(f"asset '{asset}' participates in no task; no MACS")

    board = ScoreBoard(
        tasks=tasks,
        assets=assets,
        atas={t: dict(row) for t, row in atas_matrix.items()},
        tsas={t: float(tsas_map[t]) for t in tasks},
        tbs={a: float(tbs[a]) for a in assets},
        vbs={a: float(vbs[a]) for a in assets},
        tacs=tacs_matrix,
        tth=tth_map,
        mth=mission_threshold,
        macs=macs_map,
        task_kcts={},
        mission_kcts=(),
        weights=weights,
        sensitivity=sensitivity,
        participation=participation,
        notes=tuple(notes),
    )
    task_kcts, mission_kcts = classify_kcts(board)
    return replace(board, task_kcts=task_kcts, mission_kcts=mission_kcts)


def score_mission(
    model: MissionModel,
    tbs: Mapping[str, float],
    vbs: Mapping[str, float],
    weights: ScoreWeights = DEFAULT_WEIGHTS,
    sensitivity: Sensitivity = MEDIUM,
    participation: str = PARTICIPATION_ASSIGNED,
) -> ScoreBoard:
    """Score a mission from its dependency graph plus traffic and vuln metrics.

    ATAS and TSAS are derived from the model; assignment is reachability, so
    every assigned cell has a positive degree and the participation policies
    agree. ``tbs``/``vbs`` must provide a value (possibly 0) for every asset.
    """
    if not model.tasks:
        raise EmptyMissionError("empty mission: no tasks to score")
    atas_matrix: dict[str, dict[str, float]] = {}
    for task in model.tasks:
        row = {}
        for asset in model.assets:
            degree = atas(model, task, asset)
            if degree > 0.0:
                row[asset] = degree
        atas_matrix[task] = row
    tsas_map = {task: tsas(model, task) for task in model.tasks}
    return score_matrices(
        atas_matrix,
        tsas_map,
        tbs,
        vbs,
        weights=weights,
        sensitivity=sensitivity,
        participation=participation,
        extra_assets=model.asset_ids,
    )


# ---------------------------------------------------------------------------
# Expected-value comparison (discrepancy notes)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Discrepancy:
    """One disagreement between a computed score and a supplied expectation."""

    field: str
    subject: str
    computed: float | list | None
    expected: float | list | None

    def describe(self) -> str:
        return (
            f"{self.field}[{self.subject}]: computed {_fmt(self.computed)}, "
            f"expected {_fmt(self.expected)}"
        )


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def compare_with_expected(
    board: ScoreBoard, expected: Mapping, tolerance: float = 0.002
) -> list[Discrepancy]:
    """Compare a board against user-supplied expected values.

    ``expected`` may carry any of: ``tacs`` (task -> asset -> value), ``tth``,
    ``mth``, ``macs``, ``task_kcts``, ``mission_kcts``, and ``tolerance``.
    Every disagreement beyond the tolerance becomes a Discrepancy; agreement
    produces nothing.
    """
    tol = float(expected.get("tolerance", tolerance))
    found: list[Discrepancy] = []

    for task, row in expected.get("tacs", {}).items():
        for asset, value in row.items():
            got = board.tacs_cell(task, asset)
            if abs(got - float(value)) > tol:
                found.append(Discrepancy("tacs", f"{task}/{asset}", got, float(value)))
    for task, value in expected.get("tth", {}).items():
        got = board.tth.get(task)
        if got is None or abs(got - float(value)) > tol:
            found.append(Discrepancy("tth", task, got, float(value)))
    if "mth" in expected:
        if abs(board.mth - float(expected["mth"])) > tol:
            found.append(Discrepancy("mth", "mission", board.mth, float(expected["mth"])))
    for asset, value in expected.get("macs", {}).items():
        got = board.macs.get(asset)
        if got is None or abs(got - float(value)) > tol:
            found.append(Discrepancy("macs", asset, got, float(value)))
    for task, members in expected.get("task_kcts", {}).items():
        got_set = sorted(board.task_kcts.get(task, ()))
        want = sorted(members)
        if got_set != want:
            found.append(Discrepancy("task_kcts", task, got_set, want))
    if "mission_kcts" in expected:
        got_set = sorted(board.mission_kcts)
        want = sorted(expected["mission_kcts"])
        if got_set != want:
            found.append(Discrepancy("mission_kcts", "mission", got_set, want))
    return found
