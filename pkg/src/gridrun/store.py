"""Run-record store: a single-file SQLite database.

Indicator values live in dedicated columns of `runs` (every comparison
plot filters on them); free-form info fields published by stages live in
`run_info` rows, grouping keys in `run_keys`.  The runner parent is the
only writer; analysis and monitoring open their own read connections.

WHERE fragments handed to query_runs may use two helper predicates that
are rewritten to plain SQL:

    has_key('pattern')   true when a run carries a key LIKE pattern
    info('field')        the run's info value (numeric when it parses)

plus the aliases test_loss / train_loss for the final-loss columns, and
`col REGEXP 'pat'` for regular-expression matching.
"""

from __future__ import annotations

import re
import sqlite3
from dataclasses import dataclass, field, fields as dataclass_fields
from pathlib import Path

from .errors import GridrunError

SCHEMA_VERSION = 1

STATUSES = ("pending", "running", "done", "failed")


class StoreError(GridrunError):
    pass


class SchemaMismatch(StoreError):
    pass


class QuerySyntaxError(StoreError):
    pass


@dataclass
class RunRecord:
    run_id: str
    pipeline_hash: str
    label: str
    mult_index: int
    status: str = "pending"
    epochs: int | None = None
    nb_params: int | None = None
    runtime_s: float | None = None
    final_train_loss: float | None = None
    final_test_loss: float | None = None
    overfitting: float | None = None
    slope_mean: float | None = None
    slope_sigma_plus: float | None = None
    slope_sigma_minus: float | None = None
    trainability: float | None = None
    pipeline_json: str = ""
    curve_path: str | None = None
    checkpoint_path: str | None = None
    log_path: str | None = None
    started_at: str | None = None
    finished_at: str | None = None
    failure_reason: str | None = None
    # joined on demand
    keys: set[str] = field(default_factory=set)
    info: dict = field(default_factory=dict)


_RUN_COLUMNS = [
    f.name
    for f in dataclass_fields(RunRecord)
    if f.name not in ("keys", "info")
]

INDICATOR_COLUMNS = (
    "final_train_loss",
    "final_test_loss",
    "overfitting",
    "slope_mean",
    "slope_sigma_plus",
    "slope_sigma_minus",
    "trainability",
)

COLUMN_ALIASES = {
    "test_loss": "final_test_loss",
    "train_loss": "final_train_loss",
}

_SCHEMA = f"""
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT);
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT PRIMARY KEY,
    pipeline_hash TEXT NOT NULL,
    label TEXT NOT NULL,
    mult_index INTEGER NOT NULL,
    status TEXT NOT NULL,
    epochs INTEGER,
    nb_params INTEGER,
    runtime_s REAL,
    final_train_loss REAL,
    final_test_loss REAL,
    overfitting REAL,
    slope_mean REAL,
    slope_sigma_plus REAL,
    slope_sigma_minus REAL,
    trainability REAL,
    pipeline_json TEXT,
    curve_path TEXT,
    checkpoint_path TEXT,
    log_path TEXT,
    started_at TEXT,
    finished_at TEXT,
    failure_reason TEXT
);
CREATE TABLE IF NOT EXISTS run_keys (
    run_id TEXT NOT NULL,
    key TEXT NOT NULL,
    PRIMARY KEY (run_id, key)
);
CREATE TABLE IF NOT EXISTS run_info (
    run_id TEXT NOT NULL,
    field TEXT NOT NULL,
    value TEXT,
    value_num REAL,
    PRIMARY KEY (run_id, field)
);
CREATE INDEX IF NOT EXISTS idx_runs_hash ON runs (pipeline_hash);
CREATE INDEX IF NOT EXISTS idx_runs_status ON runs (status);
CREATE INDEX IF NOT EXISTS idx_keys_key ON run_keys (key);
CREATE INDEX IF NOT EXISTS idx_info_field ON run_info (field);
"""


def _regexp(pattern: str, value) -> bool:
    if value is None:
        return False
    return re.search(pattern, str(value)) is not None


class Store:
    """Handle on the run database.  One writer, many readers."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self.conn = sqlite3.connect(self.path, timeout=30.0)
        self.conn.row_factory = sqlite3.Row
        self.conn.create_function("regexp", 2, _regexp)
        self._init_schema()

    def _init_schema(self) -> None:
        existing = {
            row[0]
            for row in self.conn.execute(
                "SELECT name FROM sqlite_master WHERE type = 'table'"
            )
        }
        if existing and "meta" not in existing:
            raise SchemaMismatch(f"{self.path}: not a gridrun database")
        with self.conn:
            self.conn.executescript(_SCHEMA)
            row = self.conn.execute(
                "SELECT value FROM meta WHERE key = 'schema_version'"
            ).fetchone()
            if row is None:
                self.conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('schema_version', ?)",
                    (str(SCHEMA_VERSION),),
                )
            elif int(row[0]) != SCHEMA_VERSION:
                raise SchemaMismatch(
                    f"{self.path}: schema version {row[0]}, expected {SCHEMA_VERSION}"
                )

    def close(self) -> None:
        self.conn.close()

    # -- writes ------------------------------------------------------------

    def _write_record(self, record: RunRecord, keys, info) -> None:
        values = [getattr(record, col) for col in _RUN_COLUMNS]
        placeholders = ", ".join("?" for _ in _RUN_COLUMNS)
        self.conn.execute(
            f"INSERT OR REPLACE INTO runs ({', '.join(_RUN_COLUMNS)}) "
            f"VALUES ({placeholders})",
            values,
        )
        self.conn.execute("DELETE FROM run_keys WHERE run_id = ?", (record.run_id,))
        self.conn.executemany(
            "INSERT INTO run_keys (run_id, key) VALUES (?, ?)",
            [(record.run_id, k) for k in sorted(keys)],
        )
        self.conn.execute("DELETE FROM run_info WHERE run_id = ?", (record.run_id,))
        self.conn.executemany(
            "INSERT INTO run_info (run_id, field, value, value_num) "
            "VALUES (?, ?, ?, ?)",
            [(record.run_id, f, _info_text(v), _info_num(v)) for f, v in info.items()],
        )

    def upsert_run(self, record: RunRecord, keys=None, info=None) -> None:
        """Insert or replace a record atomically with its keys and info rows."""
        keys = record.keys if keys is None else set(keys)
        info = record.info if info is None else dict(info)
        with self.conn:
            self._write_record(record, keys, info)

    def upsert_many(self, records: list[RunRecord]) -> None:
        """Insert or replace many records (with keys/info) in one transaction."""
        with self.conn:
            for record in records:
                self._write_record(record, record.keys, record.info)

    def update_run(self, run_id: str, **columns) -> None:
        bad = set(columns) - set(_RUN_COLUMNS)
        if bad:
            raise StoreError(f"unknown runs columns: {sorted(bad)}")
        assignments = ", ".join(f"{c} = ?" for c in columns)
        with self.conn:
            self.conn.execute(
                f"UPDATE runs SET {assignments} WHERE run_id = ?",
                [*columns.values(), run_id],
            )

    def fail_runs(self, failures: list[tuple[str, str | None]], finished_at: str) -> None:
        """Mark many runs failed in one transaction: [(run_id, reason), ...]."""
        with self.conn:
            self.conn.executemany(
                "UPDATE runs SET status = 'failed', failure_reason = ?, "
                "finished_at = ? WHERE run_id = ?",
                [(reason, finished_at, run_id) for run_id, reason in failures],
            )

    def merge_info(self, run_id: str, info: dict) -> None:
        with self.conn:
            self.conn.executemany(
                "INSERT OR REPLACE INTO run_info (run_id, field, value, value_num) "
                "VALUES (?, ?, ?, ?)",
                [(run_id, f, _info_text(v), _info_num(v)) for f, v in info.items()],
            )

    def add_keys(self, run_id: str, keys) -> None:
        with self.conn:
            self.conn.executemany(
                "INSERT OR IGNORE INTO run_keys (run_id, key) VALUES (?, ?)",
                [(run_id, k) for k in sorted(set(keys))],
            )

    # -- reads -------------------------------------------------------------

    def fetch_run(self, run_id: str, with_meta: bool = True) -> RunRecord | None:
        row = self.conn.execute(
            "SELECT * FROM runs WHERE run_id = ?", (run_id,)
        ).fetchone()
        if row is None:
            return None
        record = _record_from_row(row)
        if with_meta:
            self._attach_meta([record])
        return record

    def query_runs(self, where: str = "1=1", with_meta: bool = False) -> list[RunRecord]:
        """Records matching a SQL boolean expression over runs columns,
        in deterministic run_id order."""
        sql = f"SELECT * FROM runs WHERE {_rewrite_where(where)} ORDER BY run_id"
        try:
            rows = self.conn.execute(sql).fetchall()
        except sqlite3.Error as exc:
            raise QuerySyntaxError(f"bad WHERE clause {where!r}: {exc}") from exc
        records = [_record_from_row(r) for r in rows]
        if with_meta:
            self._attach_meta(records)
        return records

    def _attach_meta(self, records: list[RunRecord]) -> None:
        for record in records:
            record.keys = {
                row[0]
                for row in self.conn.execute(
                    "SELECT key FROM run_keys WHERE run_id = ?", (record.run_id,)
                )
            }
            record.info = {
                row["field"]: (row["value_num"] if row["value_num"] is not None else row["value"])
                for row in self.conn.execute(
                    "SELECT field, value, value_num FROM run_info WHERE run_id = ?",
                    (record.run_id,),
                )
            }

    def status_counts(self) -> dict[str, int]:
        counts = {
            row[0]: row[1]
            for row in self.conn.execute(
                "SELECT status, COUNT(*) FROM runs GROUP BY status"
            )
        }
        return {s: counts.get(s, 0) for s in STATUSES}

    def recent_failures(self, limit: int = 10) -> list[RunRecord]:
        rows = self.conn.execute(
            "SELECT * FROM runs WHERE status = 'failed' "
            "ORDER BY finished_at DESC, run_id LIMIT ?",
            (limit,),
        ).fetchall()
        return [_record_from_row(r) for r in rows]


def _info_text(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    return str(value)


def _info_num(value) -> float | None:
    if isinstance(value, bool) or value is None:
        return None
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value))
    except ValueError:
        return None


def _record_from_row(row: sqlite3.Row) -> RunRecord:
    data = {key: row[key] for key in row.keys()}
    return RunRecord(**data)


_HAS_KEY_RE = re.compile(r"\bhas_key\(\s*'([^']*)'\s*\)")
_INFO_RE = re.compile(r"\binfo\(\s*'([^']*)'\s*\)")


def _rewrite_where(where: str) -> str:
    """Expand helper predicates and column aliases into plain SQL."""
    out = _HAS_KEY_RE.sub(
        r"EXISTS (SELECT 1 FROM run_keys rk WHERE rk.run_id = runs.run_id "
        r"AND rk.key LIKE '\1')",
        where,
    )
    out = _INFO_RE.sub(
        r"(SELECT COALESCE(ri.value_num, ri.value) FROM run_info ri "
        r"WHERE ri.run_id = runs.run_id AND ri.field = '\1')",
        out,
    )
    # alias rewriting outside string literals only
    chunks = out.split("'")
    for i in range(0, len(chunks), 2):
        for alias, column in COLUMN_ALIASES.items():
            chunks[i] = re.sub(rf"\b{alias}\b", column, chunks[i])
    return "'".join(chunks)


def init_db(path: str | Path) -> Store:
    """Create (or open, when schema-compatible) the run database."""
    parent = Path(path).parent
    if parent and not parent.exists():
        parent.mkdir(parents=True, exist_ok=True)
    return Store(path)
