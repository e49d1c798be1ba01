from __future__ import annotations

import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
CASE_STUDY = FIXTURES / "case_study"


def load_fixture(name: str):
    return json.loads((CASE_STUDY / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def case_study() -> dict:
    """The six-task/six-asset reference scenario: all fixture matrices."""
    return {
        "mission": load_fixture("mission.json"),
        "atas": load_fixture("atas.json"),
        "tsas": load_fixture("tsas.json"),
        "tbs": load_fixture("tbs.json"),
        "vbs": load_fixture("vbs.json"),
        "expected": load_fixture("expected.json"),
        "mission_path": CASE_STUDY / "mission.json",
        "scan_path": CASE_STUDY / "scan.xml",
        "vulns_dir": CASE_STUDY / "vulns",
        "expected_path": CASE_STUDY / "expected.json",
    }


@pytest.fixture()
def case_board(case_study):
    """Case-study ScoreBoard scored with default weights and k = 0.5."""
    from keyterrain.scoring import score_matrices

    return score_matrices(
        case_study["atas"],
        case_study["tsas"],
        case_study["tbs"],
        case_study["vbs"],
    )
