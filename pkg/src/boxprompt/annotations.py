"""COCO-style annotation ingestion and the category hierarchy.

Loads the standard images/annotations/categories layout, clamps boundary
overflow, re-indexes category ids densely (1..C, background reserved at 0),
and reads the flat ``category<TAB>parent`` hierarchy file used for
confusing-category sampling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)

BACKGROUND_ID = 0


@dataclass(frozen=True)
class BoundingBox:
    """A ground-truth box (x, y, w, h, category) in pixel units."""

    x: float
    y: float
    w: float
    h: float
    category_id: int

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass
class SceneAnnotation:
    """One image with its boxes in on-disk annotation order."""

    image_id: int
    width: float
    height: float
    boxes: list[BoundingBox] = field(default_factory=list)


@dataclass
class CategoryTable:
    """Dense category index: ids run 1..C, background reserved at 0.

    ``original_ids`` preserves the on-disk id for each dense id so loaded
    datasets can be serialized back to the interchange format.
    """

    names: dict[int, str]
    plurals: dict[int, str]
    original_ids: dict[int, int]

    def __post_init__(self) -> None:
        self._by_name = {name: cid for cid, name in self.names.items()}
        self._by_original = {orig: cid for cid, orig in self.original_ids.items()}

    @property
    def count(self) -> int:
        return len(self.names)

    def require(self, category_id: int) -> None:
        if category_id not in self.names:
            raise ValidationError(f"unknown category id {category_id} (valid: 1..{self.count})")

    def name(self, category_id: int) -> str:
        self.require(category_id)
        return self.names[category_id]

    def plural(self, category_id: int) -> str:
        self.require(category_id)
        return self.plurals[category_id]

    def id_by_name(self, name: str) -> int | None:
        return self._by_name.get(name)

    def dense_id(self, original_id: int) -> int | None:
        return self._by_original.get(original_id)


@dataclass
class Hierarchy:
    """Total parent map over dense category ids."""

    parent: dict[int, str]

    def siblings(self, category_id: int) -> list[int]:
        """Other categories sharing this category's parent, ascending id."""
        p = self.parent[category_id]
        return sorted(c for c, q in self.parent.items() if q == p and c != category_id)


def _pluralize(name: str) -> str:
    return name + "s"


def _require_list(doc: dict, key: str) -> list:
    if key not in doc or not isinstance(doc[key], list):
        raise ParseError(f"annotation document is missing the '{key}' array")
    return doc[key]


def load_dataset(path: str | Path) -> tuple[list[SceneAnnotation], CategoryTable]:
    """Load a COCO-style annotation document.

    Boxes are clamped to image bounds (overflow is common in real
    annotations); crowd annotations are skipped.  Category ids are
    re-indexed densely 1..C in ascending original-id order.
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed annotation document at byte offset {e.pos}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError("annotation document must be a JSON object")

    images = _require_list(doc, "images")
    anns = _require_list(doc, "annotations")
    cats = _require_list(doc, "categories")

    names: dict[int, str] = {}
    plurals: dict[int, str] = {}
    original_ids: dict[int, int] = {}
    seen_names: set[str] = set()
    for dense, cat in enumerate(sorted(cats, key=lambda c: c["id"]), start=1):
        name = str(cat.get("name", "")).strip()
        if not name:
            raise ValidationError(f"category {cat.get('id')} has an empty name")
        if name in seen_names:
            raise ValidationError(f"duplicate category name '{name}'")
        if cat["id"] in original_ids.values():
            raise ValidationError(f"duplicate category id {cat['id']}")
        seen_names.add(name)
        names[dense] = name
        plurals[dense] = str(cat["plural"]) if "plural" in cat else _pluralize(name)
        original_ids[dense] = int(cat["id"])
    table = CategoryTable(names=names, plurals=plurals, original_ids=original_ids)

    scenes: dict[int, SceneAnnotation] = {}
    order: list[int] = []
    for img in images:
        iid = int(img["id"])
        if iid in scenes:
            raise ValidationError(f"duplicate image id {iid}")
        w, h = float(img["width"]), float(img["height"])
        if w <= 0 or h <= 0:
            raise ValidationError(f"image {iid} has non-positive dimensions {w}x{h}")
        scenes[iid] = SceneAnnotation(image_id=iid, width=w, height=h)
        order.append(iid)

    offenders: list[str] = []
    clamped = 0
    crowd = 0
    for ann in anns:
        aid = ann.get("id")
        if int(ann.get("iscrowd", 0)) == 1:
            crowd += 1
            continue
        iid = ann.get("image_id")
        if iid not in scenes:
            offenders.append(f"annotation {aid}: unknown image {iid}")
            continue
        dense = table.dense_id(int(ann["category_id"]))
        if dense is None:
            offenders.append(f"annotation {aid}: unknown category {ann['category_id']}")
            continue
        bbox = ann.get("bbox")
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            offenders.append(f"annotation {aid}: bbox must be [x, y, w, h]")
            continue
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            offenders.append(f"annotation {aid}: non-positive box size {w}x{h}")
            continue
        scene = scenes[iid]
        x0, y0 = max(x, 0.0), max(y, 0.0)
        x1, y1 = min(x + w, scene.width), min(y + h, scene.height)
        if x1 <= x0 or y1 <= y0:
            offenders.append(f"annotation {aid}: box lies outside the image")
            continue
        if (x0, y0, x1 - x0, y1 - y0) != (x, y, w, h):
            clamped += 1
        scene.boxes.append(BoundingBox(x=x0, y=y0, w=x1 - x0, h=y1 - y0, category_id=dense))

    if offenders:
        raise ValidationError("invalid annotations: " + "; ".join(offenders))
    if clamped:
        log.warning("clamped %d out-of-bounds boxes to image extents", clamped)
    if crowd:
        log.warning("ignored %d crowd annotations", crowd)
    return [scenes[iid] for iid in order], table


def dump_dataset(scenes: list[SceneAnnotation], table: CategoryTable) -> dict:
    """Serialize a loaded dataset back to the COCO-style interchange layout."""
    doc: dict = {"images": [], "annotations": [], "categories": []}
    for cid in sorted(table.names):
        entry = {"id": table.original_ids[cid], "name": table.names[cid]}
        if table.plurals[cid] != _pluralize(table.names[cid]):
            entry["plural"] = table.plurals[cid]
        doc["categories"].append(entry)
    next_ann = 1
    for scene in scenes:
        doc["images"].append(
            {"id": scene.image_id, "width": scene.width, "height": scene.height}
        )
        for box in scene.boxes:
            doc["annotations"].append(
                {
                    "id": next_ann,
                    "image_id": scene.image_id,
                    "category_id": table.original_ids[box.category_id],
                    "bbox": [box.x, box.y, box.w, box.h],
                }
            )
            next_ann += 1
    return doc


def load_hierarchy(path: str | Path, table: CategoryTable) -> Hierarchy:
    """Read the flat ``category<TAB>parent`` hierarchy file.

    Categories absent from the file become singleton parents named after
    themselves, so the parent map is always total.
    """
    parent_by_name: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"hierarchy line {lineno}: expected 'category<TAB>parent'")
        name, par = fields[0].strip(), fields[1].strip()
        if not name or not par:
            raise ParseError(f"hierarchy line {lineno}: empty category or parent")
        if name in parent_by_name:
            raise ValidationError(f"duplicate hierarchy entry for category '{name}'")
        parent_by_name[name] = par

    parent: dict[int, str] = {}
    for cid in sorted(table.names):
        name = table.names[cid]
        parent[cid] = parent_by_name.get(name, name)
    return Hierarchy(parent=parent)
