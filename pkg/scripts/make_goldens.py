#!/usr/bin/env python3
"""Build the shared binding fixture and its golden CLI outputs.

Writes annotations/templates/hierarchy/scores under frontend/tests/fixtures/
plus golden describe/negatives lines for seeds 0..99, produced by driving
the CLI exactly the way the bindings do.  Re-run after any change that
affects rendered bytes.
"""

import json
import sys
import tempfile
from pathlib import Path

from boxprompt.cli import main as cli_main

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"
N_SEEDS = 100


def write_fixture() -> dict[str, Path]:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    annotations = FIXTURES / "annotations.json"
    annotations.write_text(
        json.dumps(
            {
                "images": [
                    {"id": 1, "width": 300, "height": 300},
                    {"id": 2, "width": 300, "height": 300},
                ],
                "annotations": [
                    {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 20, 20]},
                    {"id": 2, "image_id": 1, "category_id": 2, "bbox": [120, 120, 70, 70]},
                    {"id": 3, "image_id": 2, "category_id": 2, "bbox": [40, 40, 90, 90]},
                ],
                "categories": [{"id": 1, "name": "dog"}, {"id": 2, "name": "cat"}],
            },
            indent=1,
        ),
        encoding="utf-8",
    )
    templates = FIXTURES / "templates.tsv"
    templates.write_text(
        "cq\tCATEGORY,QUANTITY\tThere {is|are} {QUANTITY} {CATEGORY}\t\n"
        "cqps\tCATEGORY,QUANTITY,POSITION,SIZE\tThere {is|are} {QUANTITY} {CATEGORY}\t"
        "a {SIZE} one at the {POSITION}\n",
        encoding="utf-8",
    )
    hierarchy = FIXTURES / "hierarchy.tsv"
    hierarchy.write_text("dog\tpet\ncat\tpet\n", encoding="utf-8")
    scores = FIXTURES / "scores.jsonl"
    scores.write_text(
        json.dumps(
            {
                "image_id": 1,
                "predictions": [
                    {
                        "bbox": [10, 10, 20, 20],
                        "assigned_label": 1,
                        "matched_object": 0,
                        "scores": [0.1, 0.2, 0.7],
                    },
                    {
                        "bbox": [200, 200, 50, 50],
                        "assigned_label": 0,
                        "matched_object": None,
                        "scores": [0.3, 0.6, 0.1],
                    },
                ],
            }
        )
        + "\n",
        encoding="utf-8",
    )
    return {
        "annotations": annotations,
        "templates": templates,
        "hierarchy": hierarchy,
        "scores": scores,
    }


def main() -> int:
    paths = write_fixture()
    describe_golden = []
    negative_golden = []
    with tempfile.TemporaryDirectory() as tmp:
        for seed in range(N_SEEDS):
            desc_out = Path(tmp) / "desc.jsonl"
            code = cli_main(
                [
                    "describe",
                    "--annotations", str(paths["annotations"]),
                    "--templates", str(paths["templates"]),
                    "--out", str(desc_out),
                    "--seed", str(seed),
                ]
            )
            assert code == 0, f"describe failed at seed {seed}"
            for line in desc_out.read_text(encoding="utf-8").splitlines():
                describe_golden.append(
                    {"seed": seed, "image_id": json.loads(line)["image_id"], "line": line}
                )

            neg_out = Path(tmp) / "neg.jsonl"
            code = cli_main(
                [
                    "negatives",
                    "--annotations", str(paths["annotations"]),
                    "--templates", str(paths["templates"]),
                    "--hierarchy", str(paths["hierarchy"]),
                    "--scores", str(paths["scores"]),
                    "--out", str(neg_out),
                    "--seed", str(seed),
                    "--n-h", "5",
                ]
            )
            assert code == 0, f"negatives failed at seed {seed}"
            grouped: dict[int, list[str]] = {}
            for line in neg_out.read_text(encoding="utf-8").splitlines():
                grouped.setdefault(json.loads(line)["image_id"], []).append(line)
            for image_id, lines in grouped.items():
                negative_golden.append({"seed": seed, "image_id": image_id, "lines": lines})

    (FIXTURES / "describe_golden.jsonl").write_text(
        "".join(json.dumps(rec) + "\n" for rec in describe_golden), encoding="utf-8"
    )
    (FIXTURES / "negatives_golden.jsonl").write_text(
        "".join(json.dumps(rec) + "\n" for rec in negative_golden), encoding="utf-8"
    )
    print(f"wrote {len(describe_golden)} describe and {len(negative_golden)} negative goldens")
    return 0


if __name__ == "__main__":
    sys.exit(main())
