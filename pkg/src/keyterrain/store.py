"""Versioned, append-only snapshot repository backed by SQLite.

Each cycle appends one snapshot: mission hash, the metric inputs that fed the
scoring run, and the full board document. Versions are a gapless increasing
sequence under success-only appends; the cycle commits at its very end, so an
aborted cycle never moves the latest pointer.
"""

from __future__ import annotations

import hashlib
import json
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import NotFoundError, StoreError

_SCHEMA = """
CREATE TABLE IF NOT EXISTS missions (
    mission_hash TEXT PRIMARY KEY,
    document     TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS snapshots (
    version      INTEGER PRIMARY KEY AUTOINCREMENT,
    created_at   TEXT NOT NULL,
    mission_hash TEXT NOT NULL REFERENCES missions(mission_hash),
    config_hash  TEXT NOT NULL,
    inputs_json  TEXT NOT NULL,
    board_json   TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS snapshot_assets (
    version  INTEGER NOT NULL REFERENCES snapshots(version),
    asset_id TEXT NOT NULL,
    tbs      REAL,
    vbs      REAL,
    cpe      TEXT,
    PRIMARY KEY (version, asset_id)
);
"""


def canonical_json(doc) -> str:
    """Deterministic serialization used everywhere a document is hashed or stored."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class Snapshot:
    version: int
    created_at: str
    mission_hash: str
    config_hash: str
    inputs: dict
    board: dict


class SnapshotStore:
    """Append-only store of scored mission snapshots."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        # One guarded connection; API handlers may call in from worker threads.
        self._lock = threading.RLock()
        try:
            self._conn = sqlite3.connect(self.path, check_same_thread=False)
            self._conn.executescript(_SCHEMA)
            self._conn.commit()
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open snapshot store at {path}: {exc}") from exc

    def close(self) -> None:
        self._conn.close()

    @contextmanager
    def transaction(self):
        """Defer the commit to the end of a multi-step cycle.

        Everything written inside the context becomes visible only when the
        block exits cleanly; any exception rolls the store back untouched.
        """
        with self._lock:
            try:
                yield self
                self._conn.commit()
            except BaseException:
                self._conn.rollback()
                raise

    def append(
        self,
        board_doc: dict,
        mission_hash: str,
        mission_doc: dict,
        config_hash: str,
        inputs: dict,
        commit: bool = True,
    ) -> int:
        """Append an immutable snapshot; returns the new version id."""
        created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        try:
            self._lock.acquire()
            cursor = self._conn.cursor()
            cursor.execute(
                "INSERT OR IGNORE INTO missions (mission_hash, document) VALUES (?, ?)",
                (mission_hash, canonical_json(mission_doc)),
            )
            cursor.execute(
                "INSERT INTO snapshots (created_at, mission_hash, config_hash,"
                " inputs_json, board_json) VALUES (?, ?, ?, ?, ?)",
                (
                    created_at,
                    mission_hash,
                    config_hash,
                    canonical_json(inputs),
                    canonical_json(board_doc),
                ),
            )
            version = int(cursor.lastrowid)
            for asset_id in board_doc.get("assets", []):
                cursor.execute(
                    "INSERT INTO snapshot_assets (version, asset_id, tbs, vbs, cpe)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (
                        version,
                        asset_id,
                        board_doc.get("tbs", {}).get(asset_id),
                        board_doc.get("vbs", {}).get(asset_id),
                        inputs.get("cpes", {}).get(asset_id),
                    ),
                )
            if commit:
                self._conn.commit()
            return version
        except sqlite3.Error as exc:
            self._conn.rollback()
            raise StoreError(f"snapshot append failed: {exc}") from exc

    def get(self, version: int) -> Snapshot:
        row = self._conn.execute(
            "SELECT version, created_at, mission_hash, config_hash, inputs_json,"
            " board_json FROM snapshots WHERE version = ?",
            (version,),
        ).fetchone()
        if row is None:
            raise NotFoundError(f"snapshot version {version} does not exist")
        return Snapshot(
            version=row[0],
            created_at=row[1],
            mission_hash=row[2],
            config_hash=row[3],
            inputs=json.loads(row[4]),
            board=json.loads(row[5]),
        )

    def latest_version(self) -> int | None:
        row = self._conn.execute("SELECT MAX(version) FROM snapshots").fetchone()
        return int(row[0]) if row and row[0] is not None else None

    def latest(self) -> Snapshot | None:
        version = self.latest_version()
        return self.get(version) if version is not None else None

    def versions(self) -> list[int]:
        rows = self._conn.execute("SELECT version FROM snapshots ORDER BY version").fetchall()
        return [int(r[0]) for r in rows]

    def mission_document(self, mission_hash: str) -> dict:
        row = self._conn.execute(
            "SELECT document FROM missions WHERE mission_hash = ?", (mission_hash,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"mission {mission_hash} not stored")
        return json.loads(row[0])

    def content_hash(self) -> str:
        """Digest of all persisted state; unchanged means no mutation happened."""
        digest = hashlib.sha256()
        for table, order in (
            ("missions", "mission_hash"),
            ("snapshots", "version"),
            ("snapshot_assets", "version, asset_id"),
        ):
            for row in self._conn.execute(f"SELECT * FROM {table} ORDER BY {order}"):
                digest.update(repr(row).encode("utf-8"))
        return digest.hexdigest()
