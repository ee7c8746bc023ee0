"""SQLite-backed record of every boot a machine has performed."""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path

HISTORY_FILE = "history.db"


class BootHistory:
    """Persists boot reports next to the serialized machine."""

    def __init__(self, db_path: Path):
        self._db_path = db_path
        self._db_path.parent.mkdir(parents=True, exist_ok=True)
        self._local = threading.local()
        self._init_db()

    def _get_conn(self) -> sqlite3.Connection:
        if not hasattr(self._local, "conn") or self._local.conn is None:
            self._local.conn = sqlite3.connect(str(self._db_path))
            self._local.conn.row_factory = sqlite3.Row
        return self._local.conn

    def _init_db(self) -> None:
        conn = self._get_conn()
        conn.execute("""
            CREATE TABLE IF NOT EXISTS boots (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                machine_id TEXT NOT NULL,
                epoch INTEGER NOT NULL,
                phase TEXT NOT NULL,
                plan TEXT NOT NULL,
                installed TEXT NOT NULL,
                durations TEXT NOT NULL,
                total_s REAL NOT NULL,
                warnings TEXT NOT NULL,
                sim_time REAL NOT NULL
            )
        """)
        conn.execute("""
            CREATE INDEX IF NOT EXISTS idx_machine ON boots(machine_id, epoch)
        """)
        conn.commit()

    def save(self, machine_id: str, report) -> None:
        """Store one :class:`~appliance.boot.phases.BootReport`."""
        conn = self._get_conn()
        conn.execute(
            """INSERT INTO boots
               (machine_id, epoch, phase, plan, installed, durations, total_s, warnings, sim_time)
               VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)""",
            (
                machine_id,
                report.epoch,
                report.final_phase.value,
                report.plan.describe(),
                json.dumps(report.installed),
                json.dumps(report.durations),
                report.total_seconds,
                json.dumps(report.warnings),
                report.finished_at,
            ),
        )
        conn.commit()

    def get_history(self, machine_id: str | None = None, limit: int = 1000) -> list[dict]:
        conn = self._get_conn()
        if machine_id:
            rows = conn.execute(
                "SELECT * FROM boots WHERE machine_id = ? ORDER BY id DESC LIMIT ?",
                (machine_id, limit),
            ).fetchall()
        else:
            rows = conn.execute(
                "SELECT * FROM boots ORDER BY id DESC LIMIT ?",
                (limit,),
            ).fetchall()
        out = []
        for row in rows:
            record = dict(row)
            for column in ("installed", "durations", "warnings"):
                record[column] = json.loads(record[column])
            out.append(record)
        return out

    def get_total_count(self) -> int:
        conn = self._get_conn()
        row = conn.execute("SELECT COUNT(*) as cnt FROM boots").fetchone()
        return row["cnt"]

    def close(self) -> None:
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None
