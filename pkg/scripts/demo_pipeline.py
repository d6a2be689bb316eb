#!/usr/bin/env python3
"""End-to-end offline demo: build a tiny workspace with a scripted mock
model, run sample -> verify -> filter -> sft -> pairs, then grade a
prediction file and emit a report. Everything lands under --workdir.
"""

import argparse
import json
from pathlib import Path

from mathforge.cli import main as cli

ITEMS = [
    {"id": "pens", "question": "A pen costs $3. What do 4 pens cost?",
     "gold_answers": [{"value": 12}], "language": "en",
     "meta": {"grade": 2, "reasoning_steps": 1}},
    {"id": "change", "question": "Mo pays $50 for a $35 book. Change?",
     "gold_answers": [{"value": 15}], "language": "en",
     "meta": {"grade": 3, "reasoning_steps": 2}},
    {"id": "rice", "question": "每千克大米3.6元，买5千克需要多少元？",
     "gold_answers": [{"value": 18}], "language": "zh",
     "meta": {"grade": 3, "reasoning_steps": 1}},
]

MOCK = {"rules": [
    {"contains": "4 pens", "responses": [
        "4 * 3 = 12, so four pens cost $12. The answer is 12.",
        "Each pen is $3, so 4 * 3 = 13. The answer is 12.",
    ]},
    {"contains": "Change?", "responses": [
        "50 - 35 = 15. The answer is 15.",
        "He hands over $50, and 50 - 35 = 15. The answer is 25.",
    ]},
    {"contains": "大米", "responses": [
        "3.6 × 5 = 18元。所以需要18元。",
        "3.6 × 5 = 19元。所以需要19元。",
    ]},
]}

PREDICTIONS = [
    {"item_id": "pens", "prediction": "The answer is 12."},
    {"item_id": "change", "prediction": "The answer is 14."},
    {"item_id": "rice", "prediction": "所以需要18元。"},
]


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo-run")
    args = parser.parse_args()
    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)

    write_jsonl(work / "items.jsonl", ITEMS)
    write_jsonl(work / "predictions.jsonl", PREDICTIONS)
    (work / "mock.json").write_text(json.dumps(MOCK, ensure_ascii=False),
                                    encoding="utf-8")
    (work / "config.toml").write_text(f"""
[paths]
dataset = "{work / 'items.jsonl'}"
predictions = "{work / 'predictions.jsonl'}"
mock_client = "{work / 'mock.json'}"
output_dir = "{work / 'out'}"

[sampling]
k = 2
""", encoding="utf-8")

    rc = cli(["pipeline", "sample,verify,filter,sft,pairs,eval,report",
              "--config", str(work / "config.toml")])
    if rc != 0:
        return rc

    kept = sum(1 for _ in open(work / "out" / "filtered.jsonl"))
    pairs = sum(1 for _ in open(work / "out" / "pairs.jsonl"))
    report = json.loads((work / "out" / "report" / "report.json").read_text())
    print(f"\nkept {kept} of 6 sampled paths; built {pairs} preference pairs")
    print(f"scripted predictions pass@1 = {report['overall']['pass@1']}")
    print(f"artifacts in {work / 'out'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
