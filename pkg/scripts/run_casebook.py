#!/usr/bin/env python3
"""Verify the bundled casebook of model responses and print the verdicts.

The casebook holds six word problems with responses from three models; it
doubles as a regression corpus for the extractor and the filter. Exit code
is nonzero if any verdict deviates from the recorded expectations.
"""

import argparse
import json
import sys
from pathlib import Path

from mathforge.records import item_from_json, path_from_json
from mathforge.verify import passes_filter, verify_response

ROOT = Path(__file__).resolve().parent.parent
EXPECTED_CORRECT = {
    "aligned-13b": {"wp-change", "wp-offers", "wp-lid", "wp-rice",
                    "wp-wire", "wp-derivative"},
    "chatgpt": {"wp-change", "wp-derivative"},
    "gpt4": {"wp-change", "wp-offers", "wp-lid", "wp-rice", "wp-derivative"},
}


def load_jsonl(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--casebook", default=ROOT / "data" / "casebook",
                        help="directory holding items.jsonl and paths.jsonl")
    args = parser.parse_args()
    casebook = Path(args.casebook)

    items = {r["id"]: item_from_json(r)
             for r in load_jsonl(casebook / "items.jsonl")}
    rows = []
    mismatches = 0
    for record in load_jsonl(casebook / "paths.jsonl"):
        item_id, path = path_from_json(record)
        item = items[item_id]
        verdict = verify_response(item, path)
        kept = passes_filter(item, verdict)
        expected = item_id in EXPECTED_CORRECT[path.gen.model_id]
        mark = "ok" if kept == expected else "MISMATCH"
        mismatches += kept != expected
        n_false = sum(1 for _, v in verdict.per_equation if v.is_false)
        extracted = verdict.extracted.value.text() if verdict.extracted else "-"
        rows.append((item_id, path.gen.model_id,
                     "keep" if kept else "drop",
                     extracted, len(verdict.per_equation), n_false, mark))

    widths = (14, 12, 5, 10, 4, 6, 8)
    header = ("item", "model", "gate", "answer", "#eq", "#false", "check")
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for row in rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(row, widths)))
    print(f"\n{len(rows)} responses, {mismatches} mismatches")
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
