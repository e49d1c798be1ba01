"""CPE parsing, CVE/CVSS retrieval, and the vulnerability base score.

Sources implement a single ``query(cpe)`` method. The NVD client talks to the
CVE REST API 2.0; the fixture source reads per-CPE documents in the same
response shape, so both paths share one extraction routine and offline runs
reproduce online results bit for bit. A file cache fronts either source with
a TTL and stale-if-unreachable semantics.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .errors import CpeError, VulnSourceError

logger = logging.getLogger(__name__)

NVD_DEFAULT_ENDPOINT = "https://services.nvd.nist.gov/rest/json/cves/2.0"
API_KEY_ENV_VARS = ("KCT_NVD_API_KEY", "NVD_API_KEY")

CPE_ATTRIBUTES = (
    "part", "vendor", "product", "version", "update", "edition",
    "language", "sw_edition", "target_sw", "target_hw", "other",
)


@dataclass(frozen=True)
class CpeName:
    """Decomposed, normalized CPE name (Well-Formed Name attributes)."""

    raw: str
    part: str = "*"
    vendor: str = "*"
    product: str = "*"
    version: str = "*"
    update: str = "*"
    edition: str = "*"
    language: str = "*"
    sw_edition: str = "*"
    target_sw: str = "*"
    target_hw: str = "*"
    other: str = "*"

    @property
    def formatted(self) -> str:
        """Canonical CPE 2.3 formatted string."""
        parts = [getattr(self, attr) for attr in CPE_ATTRIBUTES]
        return "cpe:2.3:" + ":".join(_escape_component(p) for p in parts)


def _split_escaped(text: str, sep: str = ":") -> list[str]:
    fields: list[str] = []
    current: list[str] = []
    escaped = False
    for char in text:
        if escaped:
            current.append(char)
            escaped = False
        elif char == "\\":
            current.append(char)
            escaped = True
        elif char == sep:
            fields.append("".join(current))
            current = []
        else:
            current.append(char)
    fields.append("".join(current))
    return fields


def _unescape_component(value: str) -> str:
    return re.sub(r"\\(.)", r"\1", value)


def _escape_component(value: str) -> str:
    if value in ("*", "-"):
        return value
    return re.sub(r"([^A-Za-z0-9_.])", r"\\\1", value)


def parse_cpe(raw: str) -> CpeName:
    """Parse a CPE 2.3 formatted string, a WFN, or a legacy 2.2 URI.

    Components are lowercased and unescaped; ``*`` (any) and ``-`` (not
    applicable) pass through. Malformed names raise CpeError.
    """
    text = raw.strip()
    if text.lower().startswith("cpe:2.3:"):
        fields = _split_escaped(text[len("cpe:2.3:"):])
        if len(fields) != 11:
            raise CpeError(
                f"CPE 2.3 formatted string needs 11 components, got {len(fields)}: {raw!r}"
            )
        values = [_normalize(f) for f in fields]
        return CpeName(raw, *values)
    if text.lower().startswith("wfn:["):
        body = text[len("wfn:["):].rstrip("]")
        attrs: dict[str, str] = {}
        for match in re.finditer(r'(\w+)\s*=\s*"([^"]*)"', body):
            key, value = match.group(1).lower(), match.group(2)
            if key in CPE_ATTRIBUTES:
                attrs[key] = _normalize(value)
        if not attrs:
            raise CpeError(f"WFN carries no recognizable attributes: {raw!r}")
        return CpeName(raw, **attrs)
    if text.lower().startswith("cpe:/"):
        # Legacy 2.2 URI, the shape network scanners still emit.
        fields = text[len("cpe:/"):].split(":")
        if not fields or fields[0] not in ("a", "o", "h"):
            raise CpeError(f"bad CPE 2.2 URI part: {raw!r}")
        values = [_normalize(f) for f in fields]
        values += ["*"] * (11 - len(values))
        return CpeName(raw, *values[:11])
    raise CpeError(f"not a CPE name: {raw!r}")


def _normalize(component: str) -> str:
    if component in ("", "*"):
        return "*"
    if component == "-":
        return "-"
    return _unescape_component(component.lower())


@dataclass(frozen=True)
class VulnerabilityRecord:
    """One CVE with its CVSS base score as retrieved from the source."""

    cve_id: str
    cvss_base: float
    source_timestamp: str

    def __post_init__(self):
        if not 0.0 <= self.cvss_base <= 10.0:
            raise VulnSourceError(
                f"CVSS base score out of range for {self.cve_id}: {self.cvss_base}"
            )


def vbs(records: Iterable[VulnerabilityRecord]) -> float:
    """Vulnerability base score: max CVSS base / 10; no records means 0."""
    best = 0.0
    for record in records:
        best = max(best, record.cvss_base)
    return best / 10.0


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------

def _extract_records(payload: dict, retrieved_at: str) -> list[VulnerabilityRecord]:
    """Pull (cve id, base score) pairs out of an NVD 2.0 response document."""
    records: list[VulnerabilityRecord] = []
    for item in payload.get("vulnerabilities", []):
        cve = item.get("cve", {})
        cve_id = cve.get("id")
        if not cve_id:
            continue
        metrics = cve.get("metrics", {})
        score = None
        for key in ("cvssMetricV31", "cvssMetricV30", "cvssMetricV2"):
            entries = metrics.get(key) or []
            if entries:
                score = entries[0].get("cvssData", {}).get("baseScore")
                break
        if score is None:
            continue
        records.append(VulnerabilityRecord(cve_id, float(score), retrieved_at))
    return sorted(records, key=lambda r: r.cve_id)


class VulnerabilitySource(Protocol):
    request_count: int

    def query(self, cpe: CpeName) -> list[VulnerabilityRecord]: ...


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def fixture_file_name(cpe: CpeName) -> str:
    """Deterministic, hand-authorable file name for a CPE fixture document."""
    safe = re.sub(r"[^a-z0-9.+-]+", "_", cpe.formatted.lower()).strip("_")
    return safe + ".json"


class FixtureSource:
    """Offline source: a directory of per-CPE NVD-shaped documents."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.request_count = 0

    def query(self, cpe: CpeName) -> list[VulnerabilityRecord]:
        self.request_count += 1
        path = self.directory / fixture_file_name(cpe)
        if not path.exists():
            return []
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise VulnSourceError(f"bad fixture document {path.name}: {exc}") from exc
        return _extract_records(payload, _now_iso())


class NvdSource:
    """NVD CVE API 2.0 client with bounded retry and an in-flight request cap."""

    def __init__(
        self,
        endpoint: str = NVD_DEFAULT_ENDPOINT,
        api_key: str | None = None,
        max_attempts: int = 4,
        backoff_seconds: float = 0.5,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.api_key = api_key or _api_key_from_env()
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self.request_count = 0
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._session = session or requests.Session()

    def query(self, cpe: CpeName) -> list[VulnerabilityRecord]:
        headers = {"apiKey": self.api_key} if self.api_key else {}
        params = {"cpeName": cpe.formatted, "resultsPerPage": 2000}
        retrieved_at = _now_iso()
        records: list[VulnerabilityRecord] = []
        start_index = 0
        while True:
            payload = self._get(dict(params, startIndex=start_index), headers)
            records.extend(_extract_records(payload, retrieved_at))
            total = int(payload.get("totalResults", 0))
            start_index += int(payload.get("resultsPerPage", 0) or 0)
            if start_index >= total or not payload.get("vulnerabilities"):
                break
        return sorted(records, key=lambda r: r.cve_id)

    def _get(self, params: dict, headers: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            with self._gate:
                self.request_count += 1
                try:
                    response = self._session.get(
                        self.endpoint, params=params, headers=headers, timeout=30
                    )
                except requests.RequestException as exc:
                    raise VulnSourceError(f"NVD request failed: {exc}") from exc
            if response.status_code in (403, 429, 503):
                last_error = VulnSourceError(
                    f"NVD rate limited (HTTP {response.status_code})"
                )
                time.sleep(self.backoff_seconds * (2 ** attempt))
                continue
            if response.status_code != 200:
                raise VulnSourceError(f"NVD returned HTTP {response.status_code}")
            try:
                return response.json()
            except ValueError as exc:
                raise VulnSourceError(f"NVD returned non-JSON payload: {exc}") from exc
        raise last_error or VulnSourceError("NVD retries exhausted")


def _api_key_from_env() -> str | None:
    for name in API_KEY_ENV_VARS:
        value = os.environ.get(name)
        if value:
            return value
    return None


# ---------------------------------------------------------------------------
# Cache
# ---------------------------------------------------------------------------

class VulnerabilityCache:
    """File-backed cache keyed by normalized CPE; atomic writes, TTL expiry."""

    def __init__(self, directory: str | Path, ttl_seconds: float = 86400.0):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.ttl_seconds = ttl_seconds

    def _path(self, cpe: CpeName) -> Path:
        return self.directory / fixture_file_name(cpe).replace(".json", ".cache.json")

    def load(self, cpe: CpeName) -> tuple[list[VulnerabilityRecord], bool] | None:
        """Return (records, fresh) or None when the entry is absent."""
        path = self._path(cpe)
        if not path.exists():
            return None
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            records = [
                VulnerabilityRecord(r["cve_id"], float(r["cvss_base"]), r["source_timestamp"])
                for r in doc["records"]
            ]
            stored_at = float(doc["stored_at"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError):
            logger.warning("discarding unreadable cache entry %s", path.name)
            return None
        fresh = (time.time() - stored_at) < self.ttl_seconds
        return records, fresh

    def store(self, cpe: CpeName, records: list[VulnerabilityRecord]) -> None:
        doc = {
            "cpe": cpe.formatted,
            "stored_at": time.time(),
            "records": [
                {
                    "cve_id": r.cve_id,
                    "cvss_base": r.cvss_base,
                    "source_timestamp": r.source_timestamp,
                }
                for r in records
            ],
        }
        path = self._path(cpe)
        fd, tmp_name = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(doc, handle)
            os.replace(tmp_name, path)
        except OSError:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise


def fetch_vulnerabilities(
    cpe: CpeName,
    source: VulnerabilitySource,
    cache: VulnerabilityCache | None = None,
) -> list[VulnerabilityRecord]:
    """Resolve a CPE to vulnerability records, cache first.

    A fresh cache entry answers without touching the source. When the source
    fails and a stale entry exists, the stale records are served with a
    warning; with no cache at all the failure propagates.
    """
    cached = cache.load(cpe) if cache else None
    if cached is not None and cached[1]:
        return cached[0]
    try:
        records = source.query(cpe)
    except VulnSourceError:
        if cached is not None:
            logger.warning("vulnerability source unreachable; serving stale cache for %s",
                           cpe.formatted)
            return cached[0]
        raise
    if cache:
        cache.store(cpe, records)
    return records


@dataclass(frozen=True)
class VulnAssessment:
    """Per-asset VBS with provenance, distinguishing unassessed from clean."""

    score: float
    assessed: bool
    reason: str | None = None
    cve_count: int = 0


def assess_asset(
    cpe_text: str | None,
    source: VulnerabilitySource,
    cache: VulnerabilityCache | None = None,
) -> VulnAssessment:
    """Compute an asset's VBS; assets without usable intel are 'unassessed'."""
    if not cpe_text:
        return VulnAssessment(0.0, assessed=False, reason="no-cpe")
    cpe = parse_cpe(cpe_text)
    records = fetch_vulnerabilities(cpe, source, cache)
    if not records:
        return VulnAssessment(0.0, assessed=False, reason="no-known-cves")
    return VulnAssessment(vbs(records), assessed=True, cve_count=len(records))
