"""Detection-failure identification and hard-negative description synthesis.

A foreground prediction is a false negative when its assigned class scores
below the score maximum; a background prediction is a false positive when the
background entry scores below the maximum.  Negatives are built by editing
the scene's object list and re-rendering with the anchor's template and order
seed, so quantity words stay consistent and untouched clauses keep their text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import json

from .annotations import BoundingBox, CategoryTable, Hierarchy, SceneAnnotation
from .errors import EmptySceneError, ParseError, ValidationError
from .prompting import Description, PromptTemplate, SizeThresholds, DEFAULT_SIZE_THRESHOLDS, render_units
from .seeding import TAG_CONFUSE, choice_index, mix64

KIND_REMOVE_FN = "remove_fn"
KIND_INSERT_FP = "insert_fp"
KIND_CONFUSE = "confuse_category"


@dataclass
class ScoredPrediction:
    """One detector prediction: a (C+1)-way score vector plus its assignment.

    ``assigned_label`` is 0 for background proposals, else the ground-truth
    category; foreground predictions must name the object they match.
    """

    scores: Sequence[float]
    assigned_label: int
    box: BoundingBox
    matched_object: int | None = None


@dataclass(frozen=True)
class FalsePositive:
    box: BoundingBox
    category_id: int
    gap: float


@dataclass
class FailureSet:
    """Objects whose every matched prediction failed, plus false positives."""

    false_negative_objects: set[int] = field(default_factory=set)
    false_positives: list[FalsePositive] = field(default_factory=list)
    fn_gaps: dict[int, float] = field(default_factory=dict)

    def fn_by_severity(self) -> list[int]:
        """False-negative objects, widest score gap first."""
        return sorted(self.false_negative_objects, key=lambda o: (-self.fn_gaps[o], o))

    def fp_by_severity(self) -> list[FalsePositive]:
        return sorted(self.false_positives, key=lambda fp: -fp.gap)


@dataclass
class HardNegativeSet:
    """Exactly n_h corrupted descriptions, each tagged with its augmentation."""

    negatives: list[Description]
    kinds: list[str]


def _argmax_lowest(scores: Sequence[float]) -> tuple[int, float]:
    m = max(scores)
    for i, v in enumerate(scores):
        if v == m:
            return i, float(m)
    raise AssertionError("unreachable: max not found")


def detect_failures(predictions: list[ScoredPrediction]) -> FailureSet:
    """Apply the score-gap rule per prediction and intersect per object."""
    width = None
    per_object: dict[int, list[tuple[bool, float]]] = {}
    fps: dict[tuple[float, float, float, float, int], FalsePositive] = {}

    for pred in predictions:
        if width is None:
            width = len(pred.scores)
            if width < 2:
                raise ValidationError("score vectors need at least background + 1 category")
        elif len(pred.scores) != width:
            raise ValidationError(
                f"inconsistent score vector length {len(pred.scores)} (expected {width})"
            )
        _, top = _argmax_lowest(pred.scores)
        if pred.assigned_label == 0:
            if pred.scores[0] < top:
                cat, _ = _argmax_lowest(pred.scores)
                gap = top - float(pred.scores[0])
                key = (pred.box.x, pred.box.y, pred.box.w, pred.box.h, cat)
                if key not in fps or gap > fps[key].gap:
                    fps[key] = FalsePositive(box=pred.box, category_id=cat, gap=gap)
        else:
            if pred.assigned_label >= width:
                raise ValidationError(
                    f"assigned label {pred.assigned_label} outside score vector of size {width}"
                )
            if pred.matched_object is None:
                raise ValidationError("foreground prediction is missing its matched object")
            gap = top - float(pred.scores[pred.assigned_label])
            per_object.setdefault(pred.matched_object, []).append((gap > 0, gap))

    out = FailureSet()
    for obj, flags in per_object.items():
        if flags and all(is_fn for is_fn, _ in flags):
            out.false_negative_objects.add(obj)
            out.fn_gaps[obj] = max(gap for _, gap in flags)
    out.false_positives = list(fps.values())
    return out


def build_negative_set(
    scene: SceneAnnotation,
    anchor: Description,
    failures: FailureSet,
    hierarchy: Hierarchy,
    templates: list[PromptTemplate],
    table: CategoryTable,
    n_h: int,
    rng_seed: int,
    size_thresholds: SizeThresholds = DEFAULT_SIZE_THRESHOLDS,
) -> HardNegativeSet:
    """Fill n_h slots: remove false negatives, insert false positives, then
    confuse categories, in that priority order.
    """
    if n_h < 1:
        raise ValidationError("n_h must be at least 1")
    by_id = {t.id: t for t in templates}
    if anchor.template_id not in by_id:
        raise ValidationError(f"anchor template '{anchor.template_id}' not in template list")
    template = by_id[anchor.template_id]
    units = list(enumerate(scene.boxes))
    fps = failures.fp_by_severity()
    if not units and not fps:
        raise EmptySceneError(
            f"image {scene.image_id}: no objects and no false positives to augment"
        )

    def render(edited: list[tuple[int, BoundingBox]]) -> Description:
        return render_units(
            edited, scene.width, scene.height, template, table,
            order_seed=anchor.order_seed, size_thresholds=size_thresholds,
        )

    def insert_fp(fp: FalsePositive) -> Description:
        synthetic = (len(scene.boxes), BoundingBox(
            x=fp.box.x, y=fp.box.y, w=fp.box.w, h=fp.box.h, category_id=fp.category_id,
        ))
        return render(units + [synthetic])

    negatives: list[Description] = []
    kinds: list[str] = []

    for obj in failures.fn_by_severity():
        if len(negatives) == n_h:
            break
        if not 0 <= obj < len(scene.boxes):
            raise ValidationError(f"false-negative object index {obj} out of range")
        negatives.append(render([u for u in units if u[0] != obj]))
        kinds.append(KIND_REMOVE_FN)

    for fp in fps:
        if len(negatives) == n_h:
            break
        negatives.append(insert_fp(fp))
        kinds.append(KIND_INSERT_FP)

    draw = 0
    while len(negatives) < n_h:
        if not units:
            # empty scene: keep cycling false-positive insertions
            negatives.append(insert_fp(fps[draw % len(fps)]))
            kinds.append(KIND_INSERT_FP)
            draw += 1
            continue
        key = mix64(rng_seed, TAG_CONFUSE, draw)
        draw += 1
        oid, box = units[choice_index(len(units), key, 0)]
        siblings = hierarchy.siblings(box.category_id)
        if siblings:
            replacement = siblings[choice_index(len(siblings), key, 1)]
        else:
            others = [c for c in sorted(table.names) if c != box.category_id]
            if not others:
                raise ValidationError("cannot confuse categories: the table has a single entry")
            replacement = others[choice_index(len(others), key, 1)]
        edited = [
            (u_oid, BoundingBox(b.x, b.y, b.w, b.h, replacement) if u_oid == oid else b)
            for u_oid, b in units
        ]
        desc = render(edited)
        if desc.text == anchor.text:
            continue
        negatives.append(desc)
        kinds.append(KIND_CONFUSE)

    return HardNegativeSet(negatives=negatives, kinds=kinds)


def load_scores(
    path: str | Path,
    scenes: list[SceneAnnotation],
    table: CategoryTable,
) -> dict[int, list[ScoredPrediction]]:
    """Read the line-delimited score file and validate it against the dataset.

    Labels and score indices use dense category ids (0 = background).
    """
    by_id = {s.image_id: s for s in scenes}
    width = table.count + 1
    out: dict[int, list[ScoredPrediction]] = {}
    orphans: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"score line {lineno}: malformed record at offset {e.pos}") from None
        iid = rec.get("image_id")
        if iid not in by_id:
            orphans.append(f"line {lineno}: unknown image {iid}")
            continue
        scene = by_id[iid]
        preds: list[ScoredPrediction] = []
        for p in rec.get("predictions", []):
            scores = p.get("scores")
            if not isinstance(scores, list) or len(scores) != width:
                raise ValidationError(
                    f"score line {lineno}: expected {width} scores per prediction"
                )
            bbox = p.get("bbox")
            if not isinstance(bbox, list) or len(bbox) != 4:
                raise ValidationError(f"score line {lineno}: bbox must be [x, y, w, h]")
            label = int(p.get("assigned_label", 0))
            matched = p.get("matched_object")
            if label > 0:
                if matched is None or not 0 <= int(matched) < len(scene.boxes):
                    raise ValidationError(
                        f"score line {lineno}: foreground prediction needs a valid matched_object"
                    )
                matched = int(matched)
            category = label if label > 0 else 1  # box carries no category when background
            preds.append(
                ScoredPrediction(
                    scores=[float(v) for v in scores],
                    assigned_label=label,
                    box=BoundingBox(*(float(v) for v in bbox), category_id=category),
                    matched_object=matched if label > 0 else None,
                )
            )
        out.setdefault(iid, []).extend(preds)
    if orphans:
        raise ValidationError("score records reference unknown images: " + "; ".join(orphans))
    return out
