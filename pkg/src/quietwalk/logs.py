"""Line-delimited JSON records shared by training, evaluation, telemetry,
and session exports. Every record carries a ``kind`` field; readers validate
kinds and the fields downstream tools rely on.
"""

from __future__ import annotations

import json
from pathlib import Path


class SchemaMismatch(ValueError):
    """A log line is not a valid record of a known kind."""


REQUIRED_FIELDS = {
    "train_iter": ("iter", "measured_cost", "lambda", "actor_loss"),
    "eval": ("method", "eps", "v_target", "seed", "mean_cost", "tracking_error"),
    "frame": ("tick", "v", "v_target", "epsilon", "step_cost", "rolling_cost", "db_proxy"),
    "command": ("applied_at_tick",),
    "report": ("method",),
    "manifest": ("config",),
}


def validate_record(record: dict) -> dict:
    if not isinstance(record, dict):
        raise SchemaMismatch(f"record is not an object: {record!r}")
    kind = record.get("kind")
    if kind not in REQUIRED_FIELDS:
        raise SchemaMismatch(f"unknown record kind {kind!r}")
    missing = [f for f in REQUIRED_FIELDS[kind] if f not in record]
    if missing:
        raise SchemaMismatch(f"{kind} record missing fields {missing}")
    return record


def dump_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_records(path, records, append: bool = False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w") as fh:
        for record in records:
            fh.write(dump_record(validate_record(record)) + "\n")


def read_records(path, kinds=None):
    """Parse a JSONL log; raises SchemaMismatch on malformed lines."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaMismatch(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            validate_record(record)
            if kinds is None or record["kind"] in kinds:
                out.append(record)
    return out


class RecordWriter:
    """Streaming writer that flushes one validated record per line."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")

    def write(self, record: dict):
        self._fh.write(dump_record(validate_record(record)) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
