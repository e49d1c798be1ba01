"""Asset inventory: scanner-output ingestion and discovery-event application.

The inventory is a value: applying an event returns a new inventory and the
per-asset lifecycle history only ever grows. Removal is a soft delete so the
audit trail survives hostile loss of an asset.
"""

from __future__ import annotations

import hashlib
import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import InventoryError, ScanFormatError
from .vulnintel import parse_cpe

logger = logging.getLogger(__name__)

EVENT_KINDS = ("discovery", "removal", "modification", "notification")

STATE_ACTIVE = "active"
STATE_REMOVED = "removed"


@dataclass(frozen=True)
class ServicePort:
    port: int
    protocol: str
    service: str = ""
    version: str = ""


@dataclass(frozen=True)
class AssetRecord:
    """A discovered cyber asset and its lifecycle state."""

    asset_id: str
    addresses: tuple[str, ...]
    open_ports: tuple[ServicePort, ...] = ()
    cpe: str | None = None
    first_seen: str = ""
    last_seen: str = ""
    state: str = STATE_ACTIVE
    annotations: tuple[str, ...] = ()

    def __post_init__(self):
        if self.last_seen and self.first_seen and self.last_seen < self.first_seen:
            raise InventoryError(
                f"asset '{self.asset_id}' last_seen precedes first_seen"
            )

    @property
    def needs_cpe(self) -> bool:
        return self.cpe is None

    def fingerprint(self) -> str:
        """Stable identity fingerprint: primary address + port/service shape."""
        primary = self.addresses[0] if self.addresses else ""
        shape = sorted((p.port, p.protocol, p.service) for p in self.open_ports)
        blob = json.dumps([primary, shape], sort_keys=True)
        return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class DiscoveryEvent:
    kind: str
    asset_id: str
    payload: dict = field(default_factory=dict)
    timestamp: str = ""

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise InventoryError(
                f"unknown event kind '{self.kind}' (expected one of {EVENT_KINDS})"
            )


@dataclass(frozen=True)
class LifecycleEntry:
    timestamp: str
    kind: str
    detail: str = ""


@dataclass(frozen=True)
class Inventory:
    """Immutable snapshot of the asset inventory."""

    assets: dict[str, AssetRecord] = field(default_factory=dict)
    history: dict[str, tuple[LifecycleEntry, ...]] = field(default_factory=dict)
    queued_notifications: tuple[DiscoveryEvent, ...] = ()

    def active_assets(self) -> dict[str, AssetRecord]:
        return {k: v for k, v in self.assets.items() if v.state == STATE_ACTIVE}

    def address_map(self) -> dict[str, str]:
        """IP address -> asset id for every active asset."""
        mapping: dict[str, str] = {}
        for record in self.active_assets().values():
            for address in record.addresses:
                mapping[address] = record.asset_id
        return mapping


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------------------
# Scanner XML ingestion
# ---------------------------------------------------------------------------

def parse_scan(source: str | Path) -> list[AssetRecord]:
    """Parse an Nmap-compatible <nmaprun> XML document into asset records.

    Hosts become assets named by their first hostname (falling back to an
    address-derived id). Open ports carry service name/version and, when the
    scanner emitted one, a CPE normalized to 2.3 form. Hosts exposing a
    service without a CPE are annotated for manual assignment.
    """
    text = Path(source).read_text(encoding="utf-8") if _looks_like_path(source) else str(source)
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ScanFormatError(f"malformed scanner XML: {exc}") from exc
    if root.tag != "nmaprun":
        raise ScanFormatError(
            f"unsupported scanner document root '<{root.tag}>' (expected <nmaprun>)"
        )
    scan_time = _epoch_to_iso(root.get("start")) or _now_iso()

    records: list[AssetRecord] = []
    seen_ids: dict[str, int] = {}
    for host in root.findall("host"):
        addresses = tuple(
            a.get("addr", "")
            for a in host.findall("address")
            if a.get("addrtype") in ("ipv4", "ipv6")
        )
        if not addresses:
            continue
        hostname = None
        names = host.find("hostnames")
        if names is not None:
            first = names.find("hostname")
            if first is not None:
                hostname = first.get("name")
        asset_id = hostname or "host-" + addresses[0].replace(".", "-").replace(":", "-")

        ports: list[ServicePort] = []
        annotations: list[str] = []
        cpe_value: str | None = None
        ports_el = host.find("ports")
        for port_el in ports_el.findall("port") if ports_el is not None else ():
            state_el = port_el.find("state")
            if state_el is not None and state_el.get("state") != "open":
                continue
            service_el = port_el.find("service")
            service = service_el.get("name", "") if service_el is not None else ""
            version = ""
            if service_el is not None:
                version = " ".join(
                    filter(None, [service_el.get("product"), service_el.get("version")])
                )
            ports.append(
                ServicePort(
                    port=int(port_el.get("portid", 0)),
                    protocol=port_el.get("protocol", "tcp"),
                    service=service,
                    version=version,
                )
            )
            if service_el is not None and cpe_value is None:
                cpe_el = service_el.find("cpe")
                if cpe_el is not None and cpe_el.text:
                    cpe_value = parse_cpe(cpe_el.text).formatted
        if ports and cpe_value is None:
            annotations.append("cpe-unassigned")

        record = AssetRecord(
            asset_id=asset_id,
            addresses=addresses,
            open_ports=tuple(ports),
            cpe=cpe_value,
            first_seen=scan_time,
            last_seen=scan_time,
            state=STATE_ACTIVE,
            annotations=tuple(annotations),
        )
        if asset_id in seen_ids:
            # Same identity twice in one scan: keep the most recent, warn.
            logger.warning("duplicate asset id '%s' in scan; keeping latest", asset_id)
            records[seen_ids[asset_id]] = record
        else:
            seen_ids[asset_id] = len(records)
            records.append(record)
    return records


def _looks_like_path(source) -> bool:
    if isinstance(source, Path):
        return True
    return isinstance(source, str) and "\n" not in source and source.endswith(".xml")


def _epoch_to_iso(value: str | None) -> str | None:
    if not value:
        return None
    try:
        return datetime.fromtimestamp(int(value), tz=timezone.utc).isoformat(
            timespec="seconds"
        )
    except (ValueError, OverflowError):
        return None


def serialize_records(records: list[AssetRecord]) -> dict:
    return {
        "format": "kct-inventory/1",
        "assets": [
            {
                "id": r.asset_id,
                "addresses": list(r.addresses),
                "open_ports": [
                    {"port": p.port, "protocol": p.protocol,
                     "service": p.service, "version": p.version}
                    for p in r.open_ports
                ],
                "cpe": r.cpe,
                "first_seen": r.first_seen,
                "last_seen": r.last_seen,
                "state": r.state,
                "annotations": list(r.annotations),
            }
            for r in records
        ],
    }


def deserialize_records(doc: dict) -> list[AssetRecord]:
    records = []
    for entry in doc.get("assets", []):
        records.append(
            AssetRecord(
                asset_id=entry["id"],
                addresses=tuple(entry.get("addresses", ())),
                open_ports=tuple(
                    ServicePort(p["port"], p["protocol"], p.get("service", ""), p.get("version", ""))
                    for p in entry.get("open_ports", ())
                ),
                cpe=entry.get("cpe"),
                first_seen=entry.get("first_seen", ""),
                last_seen=entry.get("last_seen", ""),
                state=entry.get("state", STATE_ACTIVE),
                annotations=tuple(entry.get("annotations", ())),
            )
        )
    return records


# ---------------------------------------------------------------------------
# Inventory state transitions
# ---------------------------------------------------------------------------

def inventory_from_records(records: list[AssetRecord]) -> Inventory:
    assets: dict[str, AssetRecord] = {}
    history: dict[str, tuple[LifecycleEntry, ...]] = {}
    for record in records:
        assets[record.asset_id] = record
        history[record.asset_id] = (
            LifecycleEntry(record.first_seen, "discovery", "scan import"),
        )
    return Inventory(assets=assets, history=history)


def apply_event(inventory: Inventory, event: DiscoveryEvent) -> Inventory:
    """Apply one discovery event, returning the updated inventory.

    discovery adds or reactivates; removal soft-deletes (history retained);
    modification merges payload fields and bumps last_seen; notification
    appends an annotation without structural change. Removal or modification
    of an unknown asset is an error; notifications for unknown assets queue
    until the asset appears.
    """
    stamp = event.timestamp or _now_iso()
    assets = dict(inventory.assets)
    history = dict(inventory.history)
    queued = inventory.queued_notifications

    def log(asset_id: str, detail: str) -> None:
        history[asset_id] = history.get(asset_id, ()) + (
            LifecycleEntry(stamp, event.kind, detail),
        )

    if event.kind == "discovery":
        existing = assets.get(event.asset_id)
        if existing is None:
            record = AssetRecord(
                asset_id=event.asset_id,
                addresses=tuple(event.payload.get("addresses", ())),
                open_ports=_ports_from_payload(event.payload),
                cpe=event.payload.get("cpe"),
                first_seen=stamp,
                last_seen=stamp,
            )
            assets[event.asset_id] = record
            log(event.asset_id, "asset discovered")
        else:
            assets[event.asset_id] = _merge(existing, event.payload, stamp,
                                            state=STATE_ACTIVE)
            log(event.asset_id, "asset rediscovered")
        # Deliver notifications that were waiting for this asset.
        still_queued = []
        for pending in queued:
            if pending.asset_id == event.asset_id:
                record = assets[event.asset_id]
                assets[event.asset_id] = replace(
                    record,
                    annotations=record.annotations + (_note_text(pending),),
                )
                log(event.asset_id, "queued notification delivered")
            else:
                still_queued.append(pending)
        queued = tuple(still_queued)

    elif event.kind == "removal":
        existing = assets.get(event.asset_id)
        if existing is None:
            raise InventoryError(f"removal for unknown asset '{event.asset_id}'")
        assets[event.asset_id] = replace(existing, state=STATE_REMOVED, last_seen=stamp)
        log(event.asset_id, event.payload.get("reason", "asset removed"))

    elif event.kind == "modification":
        existing = assets.get(event.asset_id)
        if existing is None:
            raise InventoryError(f"modification for unknown asset '{event.asset_id}'")
        merged = _merge(existing, event.payload, stamp, state=existing.state)
        if _touches_identification(event.payload):
            merged = replace(
                merged,
                annotations=_with_note(merged.annotations, "cpe-refresh-pending"),
            )
        assets[event.asset_id] = merged
        log(event.asset_id, "asset modified: " + ", ".join(sorted(event.payload)))

    elif event.kind == "notification":
        existing = assets.get(event.asset_id)
        if existing is None:
            queued = queued + (event,)
        else:
            assets[event.asset_id] = replace(
                existing,
                annotations=existing.annotations + (_note_text(event),),
            )
            log(event.asset_id, "notification recorded")

    return Inventory(assets=assets, history=history, queued_notifications=queued)


def apply_events(inventory: Inventory, events: list[DiscoveryEvent]) -> Inventory:
    for event in events:
        inventory = apply_event(inventory, event)
    return inventory


def _merge(record: AssetRecord, payload: dict, stamp: str, state: str) -> AssetRecord:
    addresses = tuple(payload.get("addresses", record.addresses))
    ports = _ports_from_payload(payload) or record.open_ports
    return replace(
        record,
        addresses=addresses,
        open_ports=ports,
        cpe=payload.get("cpe", record.cpe),
        last_seen=stamp,
        state=state,
    )


def _ports_from_payload(payload: dict) -> tuple[ServicePort, ...]:
    return tuple(
        ServicePort(p["port"], p.get("protocol", "tcp"),
                    p.get("service", ""), p.get("version", ""))
        for p in payload.get("open_ports", ())
    )


def _touches_identification(payload: dict) -> bool:
    return any(key in payload for key in ("cpe", "open_ports"))


def _with_note(annotations: tuple[str, ...], note: str) -> tuple[str, ...]:
    return annotations if note in annotations else annotations + (note,)


def _note_text(event: DiscoveryEvent) -> str:
    return str(event.payload.get("note", "notification"))


def read_event_stream(path: str | Path) -> list[DiscoveryEvent]:
    """Read a line-delimited JSON event stream (one event per line)."""
    events: list[DiscoveryEvent] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InventoryError(f"bad event on line {line_no}: {exc}") from exc
        events.append(
            DiscoveryEvent(
                kind=doc.get("kind", ""),
                asset_id=str(doc.get("asset_id", "")),
                payload=doc.get("payload", {}),
                timestamp=doc.get("timestamp", ""),
            )
        )
    return events
