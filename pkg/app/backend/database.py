import os
import json
import sqlite3
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional


class ReportStore:
    """Lightweight wrapper around SQLite for archived run reports.

    Tables:
      - runs(id INTEGER PRIMARY KEY, created_at TEXT, manifest TEXT, seed INTEGER, verdict TEXT, report TEXT)
      - results(id INTEGER PRIMARY KEY, run_id INTEGER, position INTEGER, command TEXT, construction TEXT, passed INTEGER)
    """

    def __init__(self, db_path: str) -> None:
        self.db_path = db_path
        parent = os.path.dirname(self.db_path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        self._conn = sqlite3.connect(self.db_path)
        self._conn.row_factory = sqlite3.Row
        self._create_schema()

    def _create_schema(self) -> None:
        cur = self._conn.cursor()
        cur.execute(
            """
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY,
                created_at TEXT NOT NULL,
                manifest TEXT NOT NULL,
                seed INTEGER NOT NULL,
                verdict TEXT NOT NULL,
                report TEXT NOT NULL
            );
            """
        )
        cur.execute(
            """
            CREATE TABLE IF NOT EXISTS results (
                id INTEGER PRIMARY KEY,
                run_id INTEGER NOT NULL REFERENCES runs(id),
                position INTEGER NOT NULL,
                command TEXT NOT NULL,
                construction TEXT NOT NULL,
                passed INTEGER NOT NULL
            );
            """
        )
        self._conn.commit()

    # Runs
    def add_report(self, report: Dict[str, Any], created_at: Optional[str] = None) -> int:
        cur = self._conn.cursor()
        _created_at = created_at or datetime.now(timezone.utc).isoformat()
        verdict = "pass" if report.get("passed") else "fail"
        cur.execute(
            "INSERT INTO runs(created_at, manifest, seed, verdict, report) VALUES(?,?,?,?,?)",
            (_created_at, report.get("manifest", ""), int(report.get("seed", 0)), verdict, json.dumps(report, sort_keys=True)),
        )
        run_id = int(cur.lastrowid)
        for position, result in enumerate(report.get("runs", [])):
            cur.execute(
                "INSERT INTO results(run_id, position, command, construction, passed) VALUES(?,?,?,?,?)",
                (run_id, position, result["command"], result["construction"], 1 if result["passed"] else 0),
            )
        self._conn.commit()
        return run_id

    def get_report(self, run_id: int) -> Optional[Dict[str, Any]]:
        row = self._conn.execute("SELECT report FROM runs WHERE id = ?", (run_id,)).fetchone()
        if not row:
            return None
        return json.loads(row["report"])

    def get_recent_runs(self, limit: int = 20) -> List[Dict[str, Any]]:
        cur = self._conn.cursor()
        cur.execute(
            "SELECT id, created_at, manifest, seed, verdict FROM runs ORDER BY id DESC LIMIT ?",
            (limit,),
        )
        return [dict(r) for r in cur.fetchall()]

    # Results
    def get_failed_results(self, run_id: int) -> List[Dict[str, Any]]:
        cur = self._conn.cursor()
        cur.execute(
            "SELECT position, command, construction FROM results WHERE run_id = ? AND passed = 0 ORDER BY position ASC",
            (run_id,),
        )
        return [dict(r) for r in cur.fetchall()]

    def close(self) -> None:
        try:
            self._conn.close()
        except Exception:
            pass
