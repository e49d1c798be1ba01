from __future__ import annotations

import json

import pytest

from keyterrain.errors import InventoryError, ScanFormatError
from keyterrain.inventory import (
    DiscoveryEvent,
    apply_event,
    apply_events,
    deserialize_records,
    inventory_from_records,
    parse_scan,
    read_event_stream,
    serialize_records,
)

MINIMAL_SCAN = """<?xml version="1.0"?>
<nmaprun scanner="nmap" start="1754810000">
  <host>
    <address addr="10.1.1.1" addrtype="ipv4"/>
    <hostnames><hostname name="web01"/></hostnames>
    <ports>
      <port protocol="tcp" portid="443">
        <state state="open"/>
        <service name="https" product="nginx" version="1.25">
          <cpe>cpe:/a:nginx:nginx:1.25</cpe>
        </service>
      </port>
      <port protocol="tcp" portid="3306">
        <state state="closed"/>
        <service name="mysql"/>
      </port>
    </ports>
  </host>
  <host>
    <address addr="10.1.1.2" addrtype="ipv4"/>
    <ports/>
  </host>
  <host>
    <address addr="10.1.1.3" addrtype="ipv4"/>
    <hostnames><hostname name="svc03"/></hostnames>
    <ports>
      <port protocol="tcp" portid="8080">
        <state state="open"/>
        <service name="http-proxy"/>
      </port>
    </ports>
  </host>
</nmaprun>
"""


class TestParseScan:
    def test_case_study_scan_has_six_hosts(self, case_study):
        records = parse_scan(case_study["scan_path"])
        assert [r.asset_id for r in records] == ["A1", "A2", "A3", "A4", "A5", "A6"]
        by_id = {r.asset_id: r for r in records}
        assert by_id["A1"].cpe.startswith("cpe:2.3:a:vendorx:gatesrv:4.2")
        assert by_id["A1"].addresses == ("10.20.30.1",)

    def test_closed_ports_excluded_and_cpe_normalized(self):
        records = parse_scan(MINIMAL_SCAN)
        web = records[0]
        assert web.asset_id == "web01"
        assert [p.port for p in web.open_ports] == [443]
        assert web.cpe.startswith("cpe:2.3:a:nginx:nginx:1.25")

    def test_host_without_ports_still_active(self):
        records = parse_scan(MINIMAL_SCAN)
        bare = records[1]
        assert bare.open_ports == ()
        assert bare.state == "active"
        assert bare.asset_id == "host-10-1-1-2"

    def test_service_without_cpe_flagged(self):
        records = parse_scan(MINIMAL_SCAN)
        svc = records[2]
        assert svc.cpe is None
        assert "cpe-unassigned" in svc.annotations

    def test_malformed_xml(self):
        with pytest.raises(ScanFormatError, match="malformed scanner XML"):
            parse_scan("<nmaprun><host></nmaprun>")

    def test_unsupported_root_names_element(self):
        with pytest.raises(ScanFormatError, match="'<scanreport>'"):
            parse_scan("<scanreport></scanreport>")

    def test_serialize_roundtrip(self):
        records = parse_scan(MINIMAL_SCAN)
        doc = serialize_records(records)
        assert deserialize_records(json.loads(json.dumps(doc))) == records


def event(kind, asset_id, payload=None, ts="2026-08-10T00:00:00+00:00"):
    return DiscoveryEvent(kind=kind, asset_id=asset_id, payload=payload or {}, timestamp=ts)


class TestApplyEvent:
    def base(self):
        return inventory_from_records(parse_scan(MINIMAL_SCAN))

    def test_discovery_adds_asset(self):
        inv = self.base()
        before = len(inv.assets)
        inv2 = apply_event(inv, event("discovery", "new01",
                                      {"addresses": ["10.1.1.9"]}))
        assert len(inv2.assets) == before + 1
        assert inv2.assets["new01"].state == "active"
        # original snapshot untouched
        assert len(inv.assets) == before

    def test_removal_then_rediscovery_preserves_history(self):
        inv = self.base()
        inv = apply_event(inv, event("removal", "web01", {"reason": "hostile loss"}))
        assert inv.assets["web01"].state == "removed"
        inv = apply_event(inv, event("discovery", "web01", ts="2026-08-10T01:00:00+00:00"))
        assert inv.assets["web01"].state == "active"
        kinds = [entry.kind for entry in inv.history["web01"]]
        assert kinds == ["discovery", "removal", "discovery"]

    def test_removal_unknown_asset_rejected(self):
        with pytest.raises(InventoryError, match="unknown asset"):
            apply_event(self.base(), event("removal", "ghost"))

    def test_modification_bumps_last_seen_and_flags_cpe_refresh(self):
        inv = self.base()
        inv2 = apply_event(
            inv,
            event("modification", "web01",
                  {"open_ports": [{"port": 443, "protocol": "tcp",
                                   "service": "https", "version": "nginx 1.26"}]},
                  ts="2026-08-11T00:00:00+00:00"),
        )
        record = inv2.assets["web01"]
        assert record.last_seen == "2026-08-11T00:00:00+00:00"
        assert "cpe-refresh-pending" in record.annotations
        assert record.open_ports[0].version == "nginx 1.26"

    def test_modification_unknown_asset_rejected(self):
        with pytest.raises(InventoryError, match="unknown asset"):
            apply_event(self.base(), event("modification", "ghost", {"cpe": "x"}))

    def test_notification_appends_annotation(self):
        inv = apply_event(self.base(), event("notification", "web01",
                                             {"note": "unused resources"}))
        assert "unused resources" in inv.assets["web01"].annotations

    def test_notification_for_unknown_asset_queued_then_delivered(self):
        inv = self.base()
        inv = apply_event(inv, event("notification", "future01", {"note": "preprovision"}))
        assert len(inv.queued_notifications) == 1
        inv = apply_event(inv, event("discovery", "future01"))
        assert inv.queued_notifications == ()
        assert "preprovision" in inv.assets["future01"].annotations

    def test_bad_kind_rejected(self):
        with pytest.raises(InventoryError, match="unknown event kind"):
            DiscoveryEvent(kind="explosion", asset_id="x")

    def test_replay_determinism(self):
        events = [
            event("discovery", "n1", {"addresses": ["10.9.9.1"]}),
            event("modification", "n1", {"cpe": "cpe:2.3:a:x:y:1:*:*:*:*:*:*:*"}),
            event("notification", "n1", {"note": "check config"}),
            event("removal", "n1"),
        ]
        one = apply_events(self.base(), events)
        two = apply_events(self.base(), events)
        assert one == two

    def test_history_is_append_only(self):
        inv = self.base()
        lengths = {a: len(h) for a, h in inv.history.items()}
        events = [
            event("notification", "web01", {"note": "n1"}),
            event("removal", "web01"),
            event("discovery", "web01"),
        ]
        for e in events:
            inv = apply_event(inv, e)
            for asset, base_len in lengths.items():
                assert len(inv.history[asset]) >= base_len
            lengths = {a: len(h) for a, h in inv.history.items()}


class TestEventStream:
    def test_jsonl_round(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text(
            '{"kind": "discovery", "asset_id": "n1", "payload": {"addresses": ["10.0.0.9"]}}\n'
            "\n"
            '{"kind": "notification", "asset_id": "n1", "payload": {"note": "hello"}}\n'
        )
        events = read_event_stream(path)
        assert [e.kind for e in events] == ["discovery", "notification"]

    def test_bad_line_reports_number(self, tmp_path):
        path = tmp_path / "events.jsonl"
        path.write_text('{"kind": "discovery"}\n{oops\n')
        with pytest.raises(InventoryError, match="line 2"):
            read_event_stream(path)

    def test_address_map_from_active_assets(self, case_study):
        inv = inventory_from_records(parse_scan(case_study["scan_path"]))
        mapping = inv.address_map()
        assert mapping["10.20.30.1"] == "A1"
        inv = apply_event(inv, event("removal", "A1"))
        assert "10.20.30.1" not in inv.address_map()
