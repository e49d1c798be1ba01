"""ScoreBoard rendering: canonical JSON document and aligned text tables.

The JSON document is byte-deterministic for identical inputs (no clocks,
sorted keys), which is what makes persisted snapshots comparable. Tables
render scores at 3 decimals, matching how they are briefed.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .scoring import Discrepancy, ScoreBoard
from .store import canonical_json


def scoreboard_document(
    board: ScoreBoard,
    discrepancies: Sequence[Discrepancy] = (),
) -> dict:
    """The serializable scoreboard: pure scores plus discrepancy notes.

    Version and config provenance are snapshot metadata, added by the wire
    layer, so this document stays identical across re-runs of the same inputs.
    """
    doc = board.to_dict()
    doc["discrepancies"] = [
        {
            "field": d.field,
            "subject": d.subject,
            "computed": d.computed,
            "expected": d.expected,
            "text": d.describe(),
        }
        for d in discrepancies
    ]
    return doc


def scoreboard_json(board: ScoreBoard, discrepancies: Sequence[Discrepancy] = ()) -> str:
    return canonical_json(scoreboard_document(board, discrepancies))


def _f3(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def _matrix(
    title: str,
    tasks: Sequence[str],
    assets: Sequence[str],
    cell,
    footer_label: str | None = None,
    footer=None,
) -> list[str]:
    width = max([len(a) for a in assets] + [len(footer_label or "")] + [5])
    col = max([len(t) for t in tasks] + [7])
    lines = [title, ""]
    header = " " * width + "  " + "  ".join(t.rjust(col) for t in tasks)
    lines.append(header)
    for asset in assets:
        row = asset.ljust(width) + "  " + "  ".join(
            _f3(cell(task, asset)).rjust(col) for task in tasks
        )
        lines.append(row)
    if footer_label is not None:
        lines.append("-" * len(header))
        lines.append(
            footer_label.ljust(width) + "  "
            + "  ".join(_f3(footer(task)).rjust(col) for task in tasks)
        )
    return lines


def render_tables(board: ScoreBoard, discrepancies: Sequence[Discrepancy] = ()) -> str:
    """Human-readable report: score matrices, thresholds, KCT sets, notes."""
    tasks, assets = board.tasks, board.assets
    out: list[str] = []

    out += _matrix(
        "Asset-task aggregated dependency (ATAS)",
        tasks, assets,
        lambda t, a: board.atas_cell(t, a) if a in board.atas.get(t, {}) else 0.0,
    )
    out.append("")

    out.append("Task severity (TSAS)")
    out.append("")
    for task in tasks:
        out.append(f"{task:<8} {_f3(board.tsas.get(task))}")
    out.append("")

    out += _matrix(
        "Task-asset criticality (TACS) with task thresholds",
        tasks, assets,
        lambda t, a: board.tacs_cell(t, a) if a in board.tacs.get(t, {}) else 0.0,
        footer_label="TTH",
        footer=lambda t: board.tth.get(t),
    )
    out.append("")

    out.append("Mission asset criticality (MACS)")
    out.append("")
    for asset in assets:
        marker = "  <- mission KCT" if asset in board.mission_kcts else ""
        out.append(f"{asset:<8} {_f3(board.macs.get(asset))}{marker}")
    out.append("")
    out.append(f"MTH      {_f3(board.mth)}   (k = {board.sensitivity.k})")
    out.append("")

    out.append("Task KCTs")
    for task in tasks:
        members = ", ".join(board.task_kcts.get(task, ())) or "-"
        out.append(f"  {task}: {members}")
    out.append(f"Mission KCTs: {', '.join(board.mission_kcts) or '-'}")

    notes = list(board.notes) + [d.describe() for d in discrepancies]
    if notes:
        out.append("")
        out.append("Notes")
        for note in notes:
            out.append(f"  ! {note}")
    return "\n".join(out) + "\n"


def calibration_document(requests: Iterable[dict]) -> dict:
    """Machine-readable re-calibration request list."""
    return {"format": "kct-calibration/1", "requests": list(requests)}
