"""Plot-ready tables: versioned CSV and JSONL writers."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def columns(rows: list[dict[str, Any]]) -> list[str]:
    """Union of row keys in order of first appearance."""
    seen: dict[str, None] = {}
    for row in rows:
        for key in row:
            seen.setdefault(key, None)
    return list(seen)


def write_table(
    path: Path | str, rows: list[dict[str, Any]], experiment: str, statement: str
) -> Path:
    """CSV with two ``#`` header lines: schema and experiment, then the statement checked."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = columns(rows)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# schema={SCHEMA_VERSION} experiment={experiment}\n")
        f.write(f"# statement: {statement}\n")
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_value(row.get(k)) for k in fields})
    logger.debug("Wrote %d rows to %s", len(rows), path)
    return path


def read_table(path: Path | str) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Header fields and raw string rows of a table written by ``write_table``."""
    header: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# statement: "):
            header["statement"] = line[len("# statement: ") :]
        elif line.startswith("# "):
            for part in line[2:].split():
                key, _, value = part.partition("=")
                header[key] = value
        else:
            body.append(line)
    return header, list(csv.DictReader(body))


def write_jsonl(path: Path | str, records: list[dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    return path
