"""Per-asset traffic metrics: availability, confidentiality, integrity, TBS.

Connections are unordered (ip, port)-(ip, port) pairs accumulated over a
capture. An asset's traffic share is measured in bytes across all of its
connections; its rank is the rank of its busiest connection in the global
most-used ranking (1 = busiest). Confidentiality and integrity are the
fraction of the asset's connections that use TLS, refined by whether the
negotiated suite is in the secured sets of the active cipher policy.
"""

from __future__ import annotations

import math
import warnings as _warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from ..errors import ScoreInputError
from . import pcap
from .tls import DEFAULT_POLICY, CipherSuitePolicy, scan_payload, suite_name

UNATTRIBUTED_ASSET = "unattributed"

Endpoint = tuple[str, int]


@dataclass(frozen=True)
class ConnectionRecord:
    """Aggregate view of one observed connection."""

    endpoint_a: Endpoint
    endpoint_b: Endpoint
    byte_count: int
    packet_count: int
    tls_observed: bool = False
    cipher_suite: str | None = None

    def __post_init__(self):
        if self.byte_count < 0 or self.packet_count < 0:
            raise ScoreInputError("negative traffic counters")
        if self.packet_count > 0 and self.byte_count <= 0:
            raise ScoreInputError("packets observed but no bytes counted")
        if self.cipher_suite is not None and not self.tls_observed:
            raise ScoreInputError("cipher suite recorded without TLS observation")

    @property
    def endpoints(self) -> tuple[Endpoint, Endpoint]:
        return (self.endpoint_a, self.endpoint_b)

    @property
    def ips(self) -> tuple[str, str]:
        return (self.endpoint_a[0], self.endpoint_b[0])


@dataclass
class CaptureResult:
    """Connection records from one capture plus parse health flags."""

    records: list[ConnectionRecord]
    truncated: bool = False
    warnings: list[str] = field(default_factory=list)


def _canonical(a: Endpoint, b: Endpoint) -> tuple[Endpoint, Endpoint]:
    return (a, b) if a <= b else (b, a)


def ingest_capture(source: str | Path | bytes) -> CaptureResult:
    """Parse a pcap/pcapng capture into connection records.

    One record per distinct unordered endpoint pair. TLS is detected from
    handshake records on any port; the suite comes from the server-hello.
    """
    stream = pcap.read_frames(source)

    class _Flow:
        __slots__ = ("bytes", "packets", "tls", "suite")

        def __init__(self):
            self.bytes = 0
            self.packets = 0
            self.tls = False
            self.suite: int | None = None

    flows: dict[tuple[Endpoint, Endpoint], _Flow] = {}
    for packet in pcap.decode_packets(stream):
        key = _canonical(
            (packet.src_ip, packet.src_port), (packet.dst_ip, packet.dst_port)
        )
        flow = flows.setdefault(key, _Flow())
        flow.bytes += packet.wire_len
        flow.packets += 1
        if packet.protocol == "tcp" and packet.payload:
            observation = scan_payload(packet.payload)
            if observation is not None:
                flow.tls = True
                if observation.cipher_suite is not None:
                    flow.suite = observation.cipher_suite

    records = [
        ConnectionRecord(
            endpoint_a=key[0],
            endpoint_b=key[1],
            byte_count=flow.bytes,
            packet_count=flow.packets,
            tls_observed=flow.tls,
            cipher_suite=suite_name(flow.suite) if flow.suite is not None else None,
        )
        for key, flow in sorted(flows.items())
    ]
    return CaptureResult(records, stream.truncated, list(stream.warnings))


# ---------------------------------------------------------------------------
# Score formulas
# ---------------------------------------------------------------------------

def sigmoid(share_percent: float) -> float:
    """Traffic-share response 1 / (1 + 100 * e^(-0.1 x)), x in [0, 100].

    Out-of-range input is clamped with a warning.
    """
    x = share_percent
    if x < 0.0 or x > 100.0:
        _warnings.warn(
            f"traffic share {x!r} outside [0, 100]; clamped", stacklevel=2
        )
        x = min(100.0, max(0.0, x))
    return 1.0 / (1.0 + 100.0 * math.exp(-0.1 * x))


def ranking_reward(sig: float, rank: int, connections: int) -> float:
    """Reward the most-used connections: sig + (1 - r) - sig*(1 - r), r = rank share."""
    if connections < 1 or not 1 <= rank <= connections:
        raise ScoreInputError(f"rank {rank} outside 1..{connections}")
    ratio = rank / connections
    return sig + (1.0 - ratio) - sig * (1.0 - ratio)


def availability(share_percent: float, rank: int, connections: int) -> float:
    """3/5 sigmoid(share) + 2/5 ranking reward on that sigmoid."""
    sig = sigmoid(share_percent)
    return 0.6 * sig + 0.4 * ranking_reward(sig, rank, connections)


def _tls_mix(tls_fraction: float, secured_fraction: float, what: str) -> float:
    for name, value in ((f"{what} TLS fraction", tls_fraction),
                        (f"{what} secured fraction", secured_fraction)):
        if not 0.0 <= value <= 1.0:
            raise ScoreInputError(f"{name} out of range: {value}")
    if secured_fraction > tls_fraction + 1e-9:
        raise ScoreInputError(
            f"{what}: secured fraction {secured_fraction} exceeds TLS fraction {tls_fraction}"
        )
    return 0.6 * tls_fraction + 0.4 * secured_fraction


def confidentiality(tls_fraction: float, secured_fraction: float) -> float:
    """3/5 TLS presence + 2/5 confidentiality-secured suite presence."""
    return _tls_mix(tls_fraction, secured_fraction, "confidentiality")


def integrity(tls_fraction: float, secured_fraction: float) -> float:
    """3/5 TLS presence + 2/5 integrity-secured suite presence."""
    return _tls_mix(tls_fraction, secured_fraction, "integrity")


# ---------------------------------------------------------------------------
# Per-asset aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssetTraffic:
    """Observed traffic posture of one asset."""

    avail: float
    conf: float
    integ: float
    tbs: float
    traffic_share_percent: float
    rank: int


@dataclass
class TrafficMetrics:
    per_asset: dict[str, AssetTraffic]
    total_bytes: int
    connection_count: int
    warnings: list[str] = field(default_factory=list)

    def tbs_map(self) -> dict[str, float]:
        return {asset: tm.tbs for asset, tm in self.per_asset.items()}


def compute_metrics(
    records: Iterable[ConnectionRecord],
    asset_addresses: Mapping[str, str],
    policy: CipherSuitePolicy = DEFAULT_POLICY,
) -> TrafficMetrics:
    """Aggregate connection records into per-asset traffic metrics.

    ``asset_addresses`` maps IP address -> asset id; IPs not in the map
    aggregate under the synthetic "unattributed" asset. Assets with no
    observed traffic score zero confidentiality/integrity and take share 0
    with the worst rank. If nothing maps to a known asset at all, every
    asset's metrics are zero and a warning is raised on the result.
    """
    records = list(records)
    assets = sorted(set(asset_addresses.values()))
    warnings: list[str] = []

    def asset_of(ip: str) -> str:
        return asset_addresses.get(ip, UNATTRIBUTED_ASSET)

    touched: dict[str, list[ConnectionRecord]] = {}
    for record in records:
        for asset in {asset_of(record.ips[0]), asset_of(record.ips[1])}:
            touched.setdefault(asset, []).append(record)

    mapped_traffic = any(asset in touched for asset in assets)
    if not records or not mapped_traffic:
        warnings.append("no traffic attributable to mapped assets; metrics zeroed")
        zero = AssetTraffic(0.0, 0.0, 0.0, 0.0, 0.0, 0)
        return TrafficMetrics({a: zero for a in assets}, 0, 0, warnings)

    if UNATTRIBUTED_ASSET in touched:
        assets = assets + [UNATTRIBUTED_ASSET]

    total_bytes = sum(r.byte_count for r in records)
    connections = len(records)
    # Global most-used ranking; ties break on lexicographic endpoint order.
    ranked = sorted(records, key=lambda r: (-r.byte_count, r.endpoints))
    rank_of = {id(record): position for position, record in enumerate(ranked, start=1)}

    per_asset: dict[str, AssetTraffic] = {}
    for asset in assets:
        mine = touched.get(asset, [])
        asset_bytes = sum(r.byte_count for r in mine)
        share = 100.0 * asset_bytes / total_bytes if total_bytes else 0.0
        rank = min((rank_of[id(r)] for r in mine), default=connections)
        avail = availability(share, rank, connections)
        if mine:
            tls_fraction = sum(1 for r in mine if r.tls_observed) / len(mine)
            conf_fraction = sum(
                1 for r in mine if policy.secures_confidentiality(r.cipher_suite)
            ) / len(mine)
            int_fraction = sum(
                1 for r in mine if policy.secures_integrity(r.cipher_suite)
            ) / len(mine)
        else:
            tls_fraction = conf_fraction = int_fraction = 0.0
        conf = confidentiality(tls_fraction, conf_fraction)
        integ = integrity(tls_fraction, int_fraction)
        tbs = (avail + conf + integ) / 3.0
        per_asset[asset] = AssetTraffic(avail, conf, integ, tbs, share, rank)

    return TrafficMetrics(per_asset, total_bytes, connections, warnings)


def metrics_from_captures(
    sources: Iterable[str | Path | bytes],
    asset_addresses: Mapping[str, str],
    policy: CipherSuitePolicy = DEFAULT_POLICY,
) -> TrafficMetrics:
    """Ingest several captures (e.g. from parallel monitoring points) and score."""
    records: list[ConnectionRecord] = []
    warnings: list[str] = []
    for source in sources:
        result = ingest_capture(source)
        records.extend(result.records)
        warnings.extend(result.warnings)
    metrics = compute_metrics(records, asset_addresses, policy)
    metrics.warnings = warnings + metrics.warnings
    return metrics
