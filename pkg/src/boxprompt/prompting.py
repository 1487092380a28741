"""Prompt templates and description rendering.

Image-level descriptions are built by grouping a scene's boxes per category,
filling a template's quantity/category slots once per group, and emitting one
clause per instance when the template carries position/size slots.  Object
ordering is driven by per-object hash keys rather than a stateful shuffle, so
deleting or inserting an object leaves the residual order of the others
untouched, a property the hard-negative augmentations rely on.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .annotations import BACKGROUND_ID, BoundingBox, CategoryTable, SceneAnnotation
from .errors import ParseError, ValidationError
from .seeding import TAG_GROUP_ORDER, TAG_OBJECT_ORDER, TAG_TEMPLATE, choice_index, mix64

SLOT_CATEGORY = "CATEGORY"
SLOT_QUANTITY = "QUANTITY"
SLOT_POSITION = "POSITION"
SLOT_SIZE = "SIZE"
ALL_SLOTS = frozenset({SLOT_CATEGORY, SLOT_QUANTITY, SLOT_POSITION, SLOT_SIZE})

POSITION_LABELS = (
    ("top left", "top", "top right"),
    ("left", "center", "right"),
    ("bottom left", "bottom", "bottom right"),
)
SIZE_LABELS = ("small", "medium", "large")

EMPTY_SCENE_TEXT = "There is nothing in the image."
OBJECT_PATTERN = "a photo of a {CATEGORY}."
BACKGROUND_TEXT = "a photo of the background."

_NUMBER_WORDS = ("one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")

# {singular|plural} alternation, resolved by group count during filling
_ALT = re.compile(r"\{([^{}|]*)\|([^{}|]*)\}")
_PLACEHOLDER = re.compile(r"\{([A-Z]+)\}")


@dataclass(frozen=True)
class SizeThresholds:
    """Size-word cutoffs.

    Fractional mode compares box area / image area against (small_max,
    large_min); absolute mode compares raw pixel area, which recovers the
    COCO 32^2 / 96^2 convention via SizeThresholds(1024, 9216, absolute=True).
    """

    small_max: float = 0.01
    large_min: float = 0.10
    absolute: bool = False


DEFAULT_SIZE_THRESHOLDS = SizeThresholds()


def position_bin(box: BoundingBox, width: float, height: float) -> str:
    """Map a box center onto the 3x3 grid; boundary centers go left/up."""
    cx, cy = box.center
    col = 0 if cx <= width / 3.0 else (1 if cx <= 2.0 * width / 3.0 else 2)
    row = 0 if cy <= height / 3.0 else (1 if cy <= 2.0 * height / 3.0 else 2)
    return POSITION_LABELS[row][col]


def size_class(
    box: BoundingBox,
    width: float,
    height: float,
    thresholds: SizeThresholds = DEFAULT_SIZE_THRESHOLDS,
) -> str:
    a = box.area if thresholds.absolute else box.area / (width * height)
    if a < thresholds.small_max:
        return "small"
    if a < thresholds.large_min:
        return "medium"
    return "large"


def quantity_word(n: int) -> str:
    """Number word for small counts, decimal numeral beyond ten."""
    if n < 1:
        raise ValidationError("quantity must be at least 1; empty groups are never rendered")
    return _NUMBER_WORDS[n - 1] if n <= 10 else str(n)


@dataclass(frozen=True)
class PromptTemplate:
    """A fill-in-the-slots pattern pair for one description style.

    ``group_pattern`` renders once per category group; ``clause_pattern``
    (may be empty) renders once per instance.  Patterns may contain
    ``{a|b}`` alternations resolved by group count (singular picks ``a``).
    """

    id: str
    slots: frozenset[str]
    group_pattern: str
    clause_pattern: str = ""
    clause_sep: str = ", "
    head_sep: str = ": "
    group_sep: str = " "
    terminator: str = "."

    def __post_init__(self) -> None:
        unknown = self.slots - ALL_SLOTS
        if unknown:
            raise ValidationError(f"template '{self.id}': unknown slots {sorted(unknown)}")
        if "{CATEGORY}" not in self.group_pattern:
            raise ValidationError(f"template '{self.id}': group pattern must contain {{CATEGORY}}")
        wants_clause = bool(self.slots & {SLOT_POSITION, SLOT_SIZE})
        if wants_clause != bool(self.clause_pattern):
            raise ValidationError(
                f"template '{self.id}': clause pattern must be non-empty exactly when "
                "POSITION or SIZE is declared"
            )
        allowed = (self.slots | {SLOT_CATEGORY, SLOT_QUANTITY}) & ALL_SLOTS
        for pattern in (self.group_pattern, self.clause_pattern):
            for ph in _PLACEHOLDER.findall(pattern):
                if ph not in allowed:
                    raise ValidationError(
                        f"template '{self.id}': placeholder {{{ph}}} not in declared slots"
                    )


@dataclass(frozen=True)
class Span:
    """Character range of one rendered piece and the objects it covers."""

    start: int
    end: int
    category_id: int
    objects: tuple[int, ...] = ()

    def to_record(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "category_id": self.category_id,
            "objects": list(self.objects),
        }


@dataclass(frozen=True)
class Description:
    """Rendered text plus the metadata needed to reproduce or edit it."""

    text: str
    template_id: str
    order_seed: int
    spans: tuple[Span, ...] = ()

    def object_indices(self) -> list[int]:
        out: list[int] = []
        for span in self.spans:
            out.extend(span.objects)
        return out

    def to_record(self, image_id: int) -> dict:
        return {
            "image_id": image_id,
            "template_id": self.template_id,
            "seed": self.order_seed,
            "text": self.text,
            "spans": [s.to_record() for s in self.spans],
        }


def default_templates() -> list[PromptTemplate]:
    """The three canonical slot subsets: CQ, CQ+P, CQ+P+S.

    These are the selectable ablation rows; pass exactly one of them (or a
    slice) to study what each slot contributes.
    """
    head = "There {is|are} {QUANTITY} {CATEGORY}"
    return [
        PromptTemplate(id="cq", slots=frozenset({SLOT_CATEGORY, SLOT_QUANTITY}), group_pattern=head),
        PromptTemplate(
            id="cqp",
            slots=frozenset({SLOT_CATEGORY, SLOT_QUANTITY, SLOT_POSITION}),
            group_pattern=head,
            clause_pattern="one at the {POSITION}",
        ),
        PromptTemplate(
            id="cqps",
            slots=frozenset({SLOT_CATEGORY, SLOT_QUANTITY, SLOT_POSITION, SLOT_SIZE}),
            group_pattern=head,
            clause_pattern="a {SIZE} one at the {POSITION}",
        ),
    ]


def full_slot_templates() -> list[PromptTemplate]:
    """Two phrasings that both carry every slot.

    This is the operating prompt set: picking uniformly among them varies
    the wording per image without dropping any annotation information.
    """
    return [
        PromptTemplate(
            id="cqps",
            slots=ALL_SLOTS,
            group_pattern="There {is|are} {QUANTITY} {CATEGORY}",
            clause_pattern="a {SIZE} one at the {POSITION}",
        ),
        PromptTemplate(
            id="cqps2",
            slots=ALL_SLOTS,
            group_pattern="The image shows {QUANTITY} {CATEGORY}",
            clause_pattern="a {SIZE} one at the {POSITION}",
        ),
    ]


def load_templates(path: str | Path) -> list[PromptTemplate]:
    """Parse the tab-separated template file: id, slots, group, clause."""
    templates: list[PromptTemplate] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ParseError(
                f"template line {lineno}: expected 'id<TAB>slots<TAB>group<TAB>clause'"
            )
        tid, slot_field, group, clause = fields
        slots = frozenset(s.strip() for s in slot_field.split(",") if s.strip())
        if tid in seen:
            raise ValidationError(f"duplicate template id '{tid}'")
        seen.add(tid)
        templates.append(
            PromptTemplate(id=tid, slots=slots, group_pattern=group, clause_pattern=clause)
        )
    if not templates:
        raise ValidationError(f"no templates found in {path}")
    return templates


def _box_order_key(order_seed: int, box: BoundingBox) -> int:
    return mix64(order_seed, TAG_OBJECT_ORDER, box.x, box.y, box.w, box.h, box.category_id)


def _fill(pattern: str, count: int, values: dict[str, str]) -> str:
    s = _ALT.sub(lambda m: m.group(1) if count == 1 else m.group(2), pattern)
    for key, val in values.items():
        s = s.replace("{" + key + "}", val)
    return s


def render_units(
    units: list[tuple[int, BoundingBox]],
    width: float,
    height: float,
    template: PromptTemplate,
    table: CategoryTable,
    order_seed: int,
    size_thresholds: SizeThresholds = DEFAULT_SIZE_THRESHOLDS,
) -> Description:
    """Render labelled (object id, box) units with an explicit template.

    The hard-negative augmentations call this directly with edited unit
    lists; span object ids are the caller's labels, so a removed object's id
    simply never appears.
    """
    if not units:
        return Description(text=EMPTY_SCENE_TEXT, template_id=template.id, order_seed=order_seed)

    groups: dict[int, list[tuple[int, BoundingBox]]] = {}
    for oid, box in units:
        table.require(box.category_id)
        groups.setdefault(box.category_id, []).append((oid, box))
    group_order = sorted(groups, key=lambda c: (mix64(order_seed, TAG_GROUP_ORDER, c), c))

    pieces: list[str] = []
    spans: list[Span] = []
    cursor = 0

    def emit(piece: str) -> int:
        nonlocal cursor
        pieces.append(piece)
        start = cursor
        cursor += len(piece)
        return start

    for gi, cat in enumerate(group_order):
        if gi:
            emit(template.group_sep)
        members = sorted(groups[cat], key=lambda u: (_box_order_key(order_seed, u[1]), u[0]))
        n = len(members)
        name = table.name(cat) if n == 1 else table.plural(cat)
        head = _fill(template.group_pattern, n, {SLOT_QUANTITY: quantity_word(n), SLOT_CATEGORY: name})
        start = emit(head)
        covered = () if template.clause_pattern else tuple(oid for oid, _ in members)
        spans.append(Span(start=start, end=cursor, category_id=cat, objects=covered))
        if template.clause_pattern:
            emit(template.head_sep)
            for k, (oid, box) in enumerate(members):
                if k:
                    emit(template.clause_sep)
                clause = _fill(
                    template.clause_pattern,
                    n,
                    {
                        SLOT_POSITION: position_bin(box, width, height),
                        SLOT_SIZE: size_class(box, width, height, size_thresholds),
                    },
                )
                start = emit(clause)
                spans.append(Span(start=start, end=cursor, category_id=cat, objects=(oid,)))
        emit(template.terminator)

    return Description(
        text="".join(pieces),
        template_id=template.id,
        order_seed=order_seed,
        spans=tuple(spans),
    )


def render_image_description(
    scene: SceneAnnotation,
    templates: list[PromptTemplate],
    table: CategoryTable,
    rng_seed: int,
    size_thresholds: SizeThresholds = DEFAULT_SIZE_THRESHOLDS,
) -> Description:
    """Render one image-level description; the seed fixes template and order."""
    if not templates:
        raise ValidationError("template list is empty")
    template = templates[choice_index(len(templates), rng_seed, TAG_TEMPLATE)]
    units = list(enumerate(scene.boxes))
    return render_units(
        units, scene.width, scene.height, template, table, order_seed=rng_seed,
        size_thresholds=size_thresholds,
    )


def render_object_description(category_id: int, table: CategoryTable) -> Description:
    """The fixed object-level prompt naming one category."""
    if category_id == BACKGROUND_ID:
        raise ValidationError("background (category 0) has no object description")
    name = table.name(category_id)
    prefix = OBJECT_PATTERN.split("{CATEGORY}")[0]
    text = OBJECT_PATTERN.replace("{CATEGORY}", name)
    span = Span(start=len(prefix), end=len(prefix) + len(name), category_id=category_id)
    return Description(text=text, template_id="object", order_seed=0, spans=(span,))
