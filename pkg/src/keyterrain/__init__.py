"""Mission-centric key cyber terrain discovery and criticality scoring."""

from .mission import (
    AssetNode,
    DependencyEdge,
    DependencyPath,
    MissionModel,
    TaskNode,
    aggregate_degree,
    enumerate_paths,
    load_mission,
    noisy_or,
    parse_mission,
    tasks_depending_on,
)
from .scoring import (
    DEFAULT_WEIGHTS,
    MEDIUM,
    OPTIMISTIC,
    PESSIMISTIC,
    ScoreBoard,
    ScoreWeights,
    Sensitivity,
    atas,
    classify_kcts,
    cumulative_severity,
    macs,
    mth,
    score_matrices,
    score_mission,
    tacs,
    tsas,
    tth,
)
from .vulnintel import CpeName, VulnerabilityRecord, parse_cpe, vbs

__version__ = "0.1.0"

__all__ = [
    "AssetNode",
    "CpeName",
    "DEFAULT_WEIGHTS",
    "DependencyEdge",
    "DependencyPath",
    "MEDIUM",
    "MissionModel",
    "OPTIMISTIC",
    "PESSIMISTIC",
    "ScoreBoard",
    "ScoreWeights",
    "Sensitivity",
    "TaskNode",
    "VulnerabilityRecord",
    "aggregate_degree",
    "atas",
    "classify_kcts",
    "cumulative_severity",
    "enumerate_paths",
    "load_mission",
    "macs",
    "mth",
    "noisy_or",
    "parse_cpe",
    "parse_mission",
    "score_matrices",
    "score_mission",
    "tacs",
    "tasks_depending_on",
    "tsas",
    "tth",
    "vbs",
]
