from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxprompt.annotations import BoundingBox, CategoryTable, SceneAnnotation
from boxprompt.embedding import tokenize
from boxprompt.errors import ValidationError
from boxprompt.prompting import (
    EMPTY_SCENE_TEXT,
    POSITION_LABELS,
    PromptTemplate,
    SizeThresholds,
    default_templates,
    full_slot_templates,
    load_templates,
    position_bin,
    quantity_word,
    render_image_description,
    render_object_description,
    size_class,
)
from boxprompt.seeding import TAG_GROUP_ORDER, TAG_OBJECT_ORDER, TAG_TEMPLATE, mix64

# ---------------------------------------------------------------------------
# independent rendering oracle: grouping, ordering, and slot filling redone
# by hand with f-strings; shares only the key-mixing primitive
# ---------------------------------------------------------------------------

_WORDS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"]
_GRID = [
    ["top left", "top", "top right"],
    ["left", "center", "right"],
    ["bottom left", "bottom", "bottom right"],
]


def oracle_full_slot_text(scene: SceneAnnotation, table: CategoryTable, seed: int) -> str:
    groups: dict[int, list[tuple[int, BoundingBox]]] = {}
    for idx, box in enumerate(scene.boxes):
        groups.setdefault(box.category_id, []).append((idx, box))
    sentences = []
    for cat in sorted(groups, key=lambda c: (mix64(seed, TAG_GROUP_ORDER, c), c)):
        members = sorted(
            groups[cat],
            key=lambda ib: (
                mix64(seed, TAG_OBJECT_ORDER, ib[1].x, ib[1].y, ib[1].w, ib[1].h, ib[1].category_id),
                ib[0],
            ),
        )
        n = len(members)
        noun = table.names[cat] if n == 1 else table.plurals[cat]
        qty = _WORDS[n - 1] if n <= 10 else str(n)
        verb = "is" if n == 1 else "are"
        clauses = []
        for _, box in members:
            cx, cy = box.x + box.w / 2, box.y + box.h / 2
            col = 0 if cx <= scene.width / 3 else (1 if cx <= 2 * scene.width / 3 else 2)
            row = 0 if cy <= scene.height / 3 else (1 if cy <= 2 * scene.height / 3 else 2)
            frac = (box.w * box.h) / (scene.width * scene.height)
            size = "small" if frac < 0.01 else ("medium" if frac < 0.10 else "large")
            clauses.append(f"a {size} one at the {_GRID[row][col]}")
        sentences.append(f"There {verb} {qty} {noun}: " + ", ".join(clauses) + ".")
    return " ".join(sentences)


def full_slot_template() -> PromptTemplate:
    return default_templates()[2]  # all four slots


# ---------------------------------------------------------------------------
# slot primitives
# ---------------------------------------------------------------------------


def _box_centered_at(cx, cy, w=10.0, h=10.0, cat=1):
    return BoundingBox(x=cx - w / 2, y=cy - h / 2, w=w, h=h, category_id=cat)


def test_position_center():
    assert position_bin(_box_centered_at(150, 150), 300, 300) == "center"


def test_position_first_cell():
    assert position_bin(_box_centered_at(30, 30), 300, 300) == "top left"


def test_position_boundary_goes_to_lower_index_cell():
    assert position_bin(_box_centered_at(100, 150), 300, 300) == "left"


@given(cx=st.floats(0.01, 0.99), cy=st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_position_partitions_the_image(cx, cy):
    label = position_bin(_box_centered_at(cx * 300, cy * 300, w=0.01, h=0.01), 300, 300)
    flat = [lab for row in POSITION_LABELS for lab in row]
    assert label in flat
    col = 0 if cx * 300 <= 100 else (1 if cx * 300 <= 200 else 2)
    row = 0 if cy * 300 <= 100 else (1 if cy * 300 <= 200 else 2)
    assert label == POSITION_LABELS[row][col]


def test_all_nine_position_labels_reachable():
    seen = {
        position_bin(_box_centered_at(cx, cy, w=2, h=2), 300, 300)
        for cx in (50, 150, 250)
        for cy in (50, 150, 250)
    }
    assert len(seen) == 9


def test_size_below_first_threshold_is_small():
    assert size_class(BoundingBox(0, 0, 10, 45, 1), 300, 300) == "small"  # 0.5% area


def test_size_boundary_belongs_upward():
    assert size_class(BoundingBox(0, 0, 30, 30, 1), 300, 300) == "medium"  # exactly 1%


def test_size_full_image_is_large():
    assert size_class(BoundingBox(0, 0, 300, 300, 1), 300, 300) == "large"


def test_size_absolute_pixel_convention():
    coco = SizeThresholds(small_max=32**2, large_min=96**2, absolute=True)
    assert size_class(BoundingBox(0, 0, 31, 31, 1), 5000, 5000, coco) == "small"
    assert size_class(BoundingBox(0, 0, 50, 50, 1), 5000, 5000, coco) == "medium"
    assert size_class(BoundingBox(0, 0, 100, 100, 1), 5000, 5000, coco) == "large"


@pytest.mark.parametrize("n,word", [(1, "one"), (3, "three"), (10, "ten"), (11, "11"), (13, "13")])
def test_quantity_words(n, word):
    assert quantity_word(n) == word


def test_quantity_zero_rejected():
    with pytest.raises(ValidationError):
        quantity_word(0)


# ---------------------------------------------------------------------------
# image-level rendering
# ---------------------------------------------------------------------------


def test_two_dog_fixture_matches_hand_oracle_bytes(two_dog_scene, dog_cat_table):
    # seed 7 picks the full-slot template and orders the small dog first
    desc = render_image_description(two_dog_scene, default_templates(), dog_cat_table, 7)
    assert desc.template_id == "cqps"
    assert desc.text == "There are two dogs: a small one at the top left, a large one at the center."
    assert desc.text == oracle_full_slot_text(two_dog_scene, dog_cat_table, 7)


def test_renderer_agrees_with_oracle_across_seeds(two_dog_scene, dog_cat_table):
    scene = SceneAnnotation(
        image_id=1,
        width=300.0,
        height=300.0,
        boxes=two_dog_scene.boxes
        + [BoundingBox(200.0, 250.0, 60.0, 40.0, 2), BoundingBox(5.0, 120.0, 40.0, 90.0, 2)],
    )
    template = full_slot_template()
    for seed in range(25):
        got = render_image_description(scene, [template], dog_cat_table, seed)
        assert got.text == oracle_full_slot_text(scene, dog_cat_table, seed)


def test_empty_scene_sentinel(dog_cat_table):
    scene = SceneAnnotation(image_id=1, width=10, height=10, boxes=[])
    desc = render_image_description(scene, default_templates(), dog_cat_table, 3)
    assert desc.text == EMPTY_SCENE_TEXT
    assert desc.spans == ()


def test_same_seed_renders_identical_bytes(two_dog_scene, dog_cat_table):
    a = render_image_description(two_dog_scene, default_templates(), dog_cat_table, 1234)
    b = render_image_description(two_dog_scene, default_templates(), dog_cat_table, 1234)
    assert a == b


def test_template_choice_is_uniform_over_seeds(two_dog_scene, dog_cat_table):
    templates = default_templates()
    counts = Counter(
        templates[mix64(seed, TAG_TEMPLATE) % len(templates)].id for seed in range(3000)
    )
    rendered = Counter(
        render_image_description(two_dog_scene, templates, dog_cat_table, seed).template_id
        for seed in range(3000)
    )
    assert rendered == counts  # selection rule is exactly the mixed key
    assert all(abs(c - 1000) < 150 for c in rendered.values())


@st.composite
def random_scene(draw):
    n = draw(st.integers(0, 6))
    boxes = []
    for _ in range(n):
        w = draw(st.floats(1, 150))
        h = draw(st.floats(1, 150))
        x = draw(st.floats(0, 300 - w))
        y = draw(st.floats(0, 300 - h))
        boxes.append(BoundingBox(x, y, w, h, draw(st.integers(1, 2))))
    return SceneAnnotation(image_id=1, width=300.0, height=300.0, boxes=boxes)


@given(scene=random_scene(), seed=st.integers(0, 2**63))
@settings(max_examples=120, deadline=None)
def test_span_coverage_is_exactly_all_objects(scene, seed):
    table = CategoryTable(
        names={1: "dog", 2: "cat"}, plurals={1: "dogs", 2: "cats"}, original_ids={1: 1, 2: 2}
    )
    desc = render_image_description(scene, default_templates(), table, seed)
    assert sorted(desc.object_indices()) == list(range(len(scene.boxes)))
    # spans are sorted, non-overlapping, and index into the text
    prev_end = 0
    for span in desc.spans:
        assert prev_end <= span.start < span.end <= len(desc.text)
        prev_end = span.end


@given(scene=random_scene(), seed=st.integers(0, 2**63))
@settings(max_examples=80, deadline=None)
def test_slot_subset_token_monotonicity(scene, seed):
    table = CategoryTable(
        names={1: "dog", 2: "cat"}, plurals={1: "dogs", 2: "cats"}, original_ids={1: 1, 2: 2}
    )
    cq, _, cqps = default_templates()
    small = Counter(tokenize(render_image_description(scene, [cq], table, seed).text))
    big = Counter(tokenize(render_image_description(scene, [cqps], table, seed).text))
    assert not small - big  # every token of the smaller slot set survives


# ---------------------------------------------------------------------------
# object-level rendering and template files
# ---------------------------------------------------------------------------


def test_object_description_simple(dog_cat_table):
    desc = render_object_description(1, dog_cat_table)
    assert desc.text == "a photo of a dog."
    span = desc.spans[0]
    assert desc.text[span.start : span.end] == "dog"


def test_object_description_multiword_name():
    table = CategoryTable(
        names={1: "traffic light"}, plurals={1: "traffic lights"}, original_ids={1: 1}
    )
    assert render_object_description(1, table).text == "a photo of a traffic light."


def test_object_description_background_rejected(dog_cat_table):
    with pytest.raises(ValidationError):
        render_object_description(0, dog_cat_table)


def test_template_file_round_trip(template_file):
    loaded = load_templates(template_file)
    assert [t.id for t in loaded] == ["cq", "cqps"]
    assert loaded[1].clause_pattern == "a {SIZE} one at the {POSITION}"


def test_template_missing_category_placeholder_rejected():
    with pytest.raises(ValidationError):
        PromptTemplate(id="bad", slots=frozenset({"CATEGORY", "QUANTITY"}), group_pattern="nothing")


def test_template_clause_slot_consistency_enforced():
    with pytest.raises(ValidationError):
        PromptTemplate(
            id="bad",
            slots=frozenset({"CATEGORY", "QUANTITY", "POSITION"}),
            group_pattern="{QUANTITY} {CATEGORY}",
            clause_pattern="",
        )


def test_full_slot_set_carries_every_slot():
    for template in full_slot_templates():
        assert template.slots == frozenset({"CATEGORY", "QUANTITY", "POSITION", "SIZE"})
