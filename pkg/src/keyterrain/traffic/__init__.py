"""Traffic capture ingestion and per-asset security metrics."""

from .metrics import (
    AssetTraffic,
    CaptureResult,
    ConnectionRecord,
    TrafficMetrics,
    UNATTRIBUTED_ASSET,
    availability,
    compute_metrics,
    confidentiality,
    ingest_capture,
    integrity,
    metrics_from_captures,
    ranking_reward,
    sigmoid,
)
from .tls import CIPHER_SUITES, DEFAULT_POLICY, CipherSuitePolicy, load_policy

__all__ = [
    "AssetTraffic",
    "CaptureResult",
    "CIPHER_SUITES",
    "CipherSuitePolicy",
    "ConnectionRecord",
    "DEFAULT_POLICY",
    "TrafficMetrics",
    "UNATTRIBUTED_ASSET",
    "availability",
    "compute_metrics",
    "confidentiality",
    "ingest_capture",
    "integrity",
    "load_policy",
    "metrics_from_captures",
    "ranking_reward",
    "sigmoid",
]
