import json
import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, os.path.dirname(__file__))

ROOT = Path(__file__).resolve().parent.parent
CASEBOOK = ROOT / "data" / "casebook"


def load_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


@pytest.fixture(scope="session")
def casebook_items():
    from mathforge.records import item_from_json
    return {r["id"]: item_from_json(r) for r in load_jsonl(CASEBOOK / "items.jsonl")}


@pytest.fixture(scope="session")
def casebook_paths():
    """item id -> {model id -> ReasoningPath}, re-extracted from text."""
    from mathforge.records import path_from_json
    table = {}
    for record in load_jsonl(CASEBOOK / "paths.jsonl"):
        item_id, path = path_from_json(record)
        table.setdefault(item_id, {})[path.gen.model_id] = path
    return table
