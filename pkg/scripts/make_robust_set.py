#!/usr/bin/env python3
"""Generate a number-perturbed robustness dataset from slotted templates.

Each template carries an answer formula over its slots, so every perturbed
item ships with a provably correct gold answer. Output is dataset-schema
JSONL ready for the eval stage.
"""

import argparse
import json
import sys

from mathforge.evaluation import perturb_numbers, template_from_json
from mathforge.records import item_to_json


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("templates", help="JSON file with a list of templates")
    parser.add_argument("--out", default="robust_items.jsonl")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--count", type=int, default=5,
                        help="perturbed items per template")
    args = parser.parse_args()

    with open(args.templates, encoding="utf-8") as f:
        templates = [template_from_json(r) for r in json.load(f)]
    total = 0
    with open(args.out, "w", encoding="utf-8") as f:
        for idx, template in enumerate(templates):
            items = perturb_numbers(template, seed=args.seed + idx,
                                    count=args.count)
            for item in items:
                f.write(json.dumps(item_to_json(item), ensure_ascii=False) + "\n")
            total += len(items)
    print(f"wrote {total} items from {len(templates)} templates to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
