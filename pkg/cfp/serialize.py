"""
Rational formatting and parsing, table emission and run manifests.
"""

import csv
import hashlib
import io
import json
import logging
import os
from datetime import datetime
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from cfp.errors import DomainError
from cfp.models import ManifestEntry, RunManifest, format_rational

logger = logging.getLogger(__name__)


def parse_rational(text: str) -> Fraction:
    """Exact rational from '3', '-1/2' or '0.25'."""
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise DomainError(f"Not a rational number: '{text}'") from e


def parse_rational_list(text: str, expected: Optional[int] = None) -> List[Fraction]:
    """Comma separated rationals, e.g. '1,1/2,1'."""
    values = [parse_rational(part) for part in text.split(",") if part.strip()]
    if expected is not None and len(values) != expected:
        raise DomainError(f"Expected {expected} comma separated values, got '{text}'")
    return values


def rational_fields(name: str, value: Fraction) -> Dict[str, Any]:
    """Flat pair of columns: exact string and float."""
    return {name: format_rational(value), f"{name}_float": float(value)}


# ============================
# Tables
# ============================

def dumps_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def dumps_csv(rows: Sequence[Mapping[str, Any]]) -> str:
    if not rows:
        return ""
    fieldnames = list(rows[0].keys())
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def render_table(
    rows: Sequence[Mapping[str, Any]],
    fmt: str,
    meta: Optional[Mapping[str, Any]] = None,
) -> str:
    """Render rows as JSON ({"meta":..., "rows":[...]}) or flat CSV."""
    if fmt == "json":
        return dumps_json({"meta": dict(meta or {}), "rows": [dict(r) for r in rows]})
    if fmt == "csv":
        return dumps_csv(rows)
    raise DomainError(f"Unknown format '{fmt}', expected json or csv")


def read_table(text: str, fmt: str) -> Dict[str, Any]:
    """Inverse of render_table; returns {"meta":..., "rows":[...]}."""
    if fmt == "json":
        return json.loads(text)
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        return {"meta": {}, "rows": [dict(row) for row in reader]}
    raise DomainError(f"Unknown format '{fmt}', expected json or csv")


def write_text(path: str, text: str) -> ManifestEntry:
    """Write an artifact and return its manifest entry."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    data = text.encode("utf-8")
    with open(path, "wb") as f:
        f.write(data)
    logger.info(f"Wrote {path} ({len(data)} bytes)")
    return ManifestEntry(path=path, sha256=hashlib.sha256(data).hexdigest(), bytes=len(data))


def file_digest(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def finish_manifest(manifest: RunManifest, entries: Iterable[ManifestEntry]) -> RunManifest:
    manifest.outputs.extend(entries)
    manifest.finished_at = datetime.now().isoformat()
    return manifest


def write_manifest(manifest: RunManifest, artifact_path: str) -> str:
    """Store the manifest next to the artifact as <artifact>.manifest.json."""
    path = f"{artifact_path}.manifest.json"
    write_text(path, manifest.model_dump_json(indent=2) + "\n")
    return path
