"""Engine configuration: one JSON file, environment overrides for secrets."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .scoring import (
    DEFAULT_WEIGHTS,
    MEDIUM,
    PARTICIPATION_ASSIGNED,
    PARTICIPATION_POLICIES,
    ScoreWeights,
    Sensitivity,
)

API_TOKEN_ENV = "KCT_API_TOKEN"


@dataclass(frozen=True)
class VulnSourceConfig:
    """Where vulnerability intelligence comes from."""

    mode: str = "fixture"  # "fixture" | "nvd"
    fixture_dir: str | None = None
    endpoint: str | None = None
    cache_dir: str | None = None
    cache_ttl_seconds: float = 86400.0


@dataclass(frozen=True)
class EngineConfig:
    weights: ScoreWeights = DEFAULT_WEIGHTS
    sensitivity: Sensitivity = MEDIUM
    participation: str = PARTICIPATION_ASSIGNED
    recompute_triggers: tuple[str, ...] = ("discovery", "removal", "modification")
    notification_file: str = "notifications.jsonl"
    webhook_url: str | None = None
    cipher_policy_path: str | None = None
    vuln: VulnSourceConfig = field(default_factory=VulnSourceConfig)
    expected_path: str | None = None
    tolerance: float = 0.002
    api_token: str | None = None

    def to_dict(self) -> dict:
        return {
            "weights": {"mw": self.weights.mw, "bw": self.weights.bw, "tw": self.weights.tw},
            "k": self.sensitivity.k,
            "participation": self.participation,
            "recompute_triggers": list(self.recompute_triggers),
            "notification_file": self.notification_file,
            "webhook_url": self.webhook_url,
            "cipher_policy_path": self.cipher_policy_path,
            "vuln": {
                "mode": self.vuln.mode,
                "fixture_dir": self.vuln.fixture_dir,
                "endpoint": self.vuln.endpoint,
                "cache_dir": self.vuln.cache_dir,
                "cache_ttl_seconds": self.vuln.cache_ttl_seconds,
            },
            "expected_path": self.expected_path,
            "tolerance": self.tolerance,
        }


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> EngineConfig:
    """Build an EngineConfig from a JSON file plus programmatic overrides.

    Secrets never live in the file: the API bearer token is read from the
    KCT_API_TOKEN environment variable, the NVD key from KCT_NVD_API_KEY.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load engine config: {exc}") from exc
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})

    weights_doc = doc.get("weights", {})
    try:
        weights = ScoreWeights(
            mw=float(weights_doc.get("mw", DEFAULT_WEIGHTS.mw)),
            bw=float(weights_doc.get("bw", DEFAULT_WEIGHTS.bw)),
            tw=float(weights_doc.get("tw", DEFAULT_WEIGHTS.tw)),
        )
        sensitivity = Sensitivity(float(doc.get("k", MEDIUM.k)))
    except Exception as exc:
        raise ConfigError(str(exc)) from exc

    participation = doc.get("participation", PARTICIPATION_ASSIGNED)
    if participation not in PARTICIPATION_POLICIES:
        raise ConfigError(f"unknown participation policy '{participation}'")

    vuln_doc = doc.get("vuln", {})
    vuln = VulnSourceConfig(
        mode=vuln_doc.get("mode", "fixture"),
        fixture_dir=vuln_doc.get("fixture_dir"),
        endpoint=vuln_doc.get("endpoint"),
        cache_dir=vuln_doc.get("cache_dir"),
        cache_ttl_seconds=float(vuln_doc.get("cache_ttl_seconds", 86400.0)),
    )
    if vuln.mode not in ("fixture", "nvd"):
        raise ConfigError(f"unknown vulnerability source mode '{vuln.mode}'")

    return EngineConfig(
        weights=weights,
        sensitivity=sensitivity,
        participation=participation,
        recompute_triggers=tuple(doc.get("recompute_triggers",
                                         ("discovery", "removal", "modification"))),
        notification_file=doc.get("notification_file", "notifications.jsonl"),
        webhook_url=doc.get("webhook_url"),
        cipher_policy_path=doc.get("cipher_policy_path"),
        vuln=vuln,
        expected_path=doc.get("expected_path"),
        tolerance=float(doc.get("tolerance", 0.002)),
        api_token=os.environ.get(API_TOKEN_ENV) or doc.get("api_token"),
    )


def config_hash(config: EngineConfig) -> str:
    """Content hash of the effective configuration (secrets excluded)."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
