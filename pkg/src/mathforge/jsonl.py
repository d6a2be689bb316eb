"""Streaming JSONL with atomic writes and per-stage manifests.

Artifacts are written to a temp path and promoted with rename, so an
interrupted run never leaves a torn file. A manifest next to each artifact
records the config fingerprint and input hash; when both still match, the
stage is a no-op on re-run.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .records import SchemaError


def read_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, record); refuses malformed lines fail-fast."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise SchemaError(f"{path}:{lineno}: not valid JSON ({err.msg})")
            if not isinstance(record, dict):
                raise SchemaError(f"{path}:{lineno}: record must be an object")
            yield lineno, record


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))


def write_jsonl_atomic(path, records: Iterable[dict]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    count = 0
    with open(tmp, "w", encoding="utf-8") as f:
        for record in records:
            f.write(dumps_record(record) + "\n")
            count += 1
    os.replace(tmp, path)
    return count


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def combined_digest(paths: list) -> str:
    h = hashlib.sha256()
    for path in paths:
        h.update(Path(path).name.encode("utf-8"))
        h.update(bytes.fromhex(file_digest(path)))
    return h.hexdigest()


def manifest_path(artifact) -> Path:
    artifact = Path(artifact)
    return artifact.with_name(artifact.name + ".manifest.json")


def write_manifest(artifact, stage: str, fingerprint: str,
                   input_hash: str, counts: dict) -> None:
    doc = {"stage": stage, "config_fingerprint": fingerprint,
           "input_hash": input_hash, "counts": counts}
    path = manifest_path(artifact)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                   encoding="utf-8")
    os.replace(tmp, path)


def read_manifest(artifact) -> Optional[dict]:
    try:
        with open(manifest_path(artifact), encoding="utf-8") as f:
            return json.load(f)
    except (FileNotFoundError, json.JSONDecodeError):
        return None


def stage_is_current(artifact, fingerprint: str, input_hash: str) -> bool:
    if not Path(artifact).exists():
        return False
    manifest = read_manifest(artifact)
    return (manifest is not None
            and manifest.get("config_fingerprint") == fingerprint
            and manifest.get("input_hash") == input_hash)
