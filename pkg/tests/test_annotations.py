import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boxprompt.annotations import (
    dump_dataset,
    load_dataset,
    load_hierarchy,
)
from boxprompt.errors import ParseError, ValidationError

from conftest import write_coco


def test_minimal_document_one_image_no_annotations(tmp_path):
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": 100, "height": 50}],
        categories=[{"id": 1, "name": "dog"}],
    )
    scenes, table = load_dataset(path)
    assert len(scenes) == 1
    assert scenes[0].boxes == []
    assert scenes[0].width == 100 and scenes[0].height == 50
    assert table.count == 1


def test_zero_width_box_rejected_naming_annotation(tmp_path):
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": 100, "height": 100}],
        annotations=[{"id": 42, "image_id": 1, "category_id": 1, "bbox": [5, 5, 0, 10]}],
        categories=[{"id": 1, "name": "dog"}],
    )
    with pytest.raises(ValidationError, match="42"):
        load_dataset(path)


def test_two_images_three_annotations_box_counts(two_image_doc):
    scenes, table = load_dataset(two_image_doc)
    by_id = {s.image_id: s for s in scenes}
    assert len(by_id[1].boxes) == 2
    assert len(by_id[2].boxes) == 1
    # dense re-indexing: sparse ids 5, 9 become 1, 2 with a side map back
    assert table.count == 2
    assert table.name(1) == "dog" and table.name(2) == "traffic light"
    assert table.original_ids == {1: 5, 2: 9}
    assert table.plural(1) == "dogs" and table.plural(2) == "traffic lights"


def test_malformed_document_reports_byte_offset(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"images": [}', encoding="utf-8")
    with pytest.raises(ParseError, match="offset"):
        load_dataset(path)


def test_unknown_references_listed_as_offenders(tmp_path):
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": 10, "height": 10}],
        annotations=[
            {"id": 1, "image_id": 99, "category_id": 1, "bbox": [1, 1, 2, 2]},
            {"id": 2, "image_id": 1, "category_id": 77, "bbox": [1, 1, 2, 2]},
        ],
        categories=[{"id": 1, "name": "dog"}],
    )
    with pytest.raises(ValidationError) as exc:
        load_dataset(path)
    assert "99" in str(exc.value) and "77" in str(exc.value)


def test_out_of_bounds_box_clamped(tmp_path):
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": 100, "height": 100}],
        annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [-5, 90, 20, 30]}],
        categories=[{"id": 1, "name": "dog"}],
    )
    scenes, _ = load_dataset(path)
    box = scenes[0].boxes[0]
    assert box.x == 0 and box.w == 15
    assert box.y == 90 and box.h == 10


def test_crowd_annotations_skipped(tmp_path):
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": 100, "height": 100}],
        annotations=[
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5], "iscrowd": 1},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [1, 1, 5, 5]},
        ],
        categories=[{"id": 1, "name": "dog"}],
    )
    scenes, _ = load_dataset(path)
    assert len(scenes[0].boxes) == 1


def test_loading_is_deterministic(two_image_doc):
    first = load_dataset(two_image_doc)
    second = load_dataset(two_image_doc)
    assert first == second


def test_round_trip_through_interchange_format(two_image_doc, tmp_path):
    scenes, table = load_dataset(two_image_doc)
    out = tmp_path / "roundtrip.json"
    out.write_text(json.dumps(dump_dataset(scenes, table)), encoding="utf-8")
    scenes2, table2 = load_dataset(out)
    assert scenes2 == scenes
    assert table2 == table


@given(
    width=st.integers(10, 2000),
    height=st.integers(10, 2000),
    x=st.floats(-100, 2100),
    y=st.floats(-100, 2100),
    w=st.floats(1, 500),
    h=st.floats(1, 500),
)
@settings(max_examples=80, deadline=None)
def test_loaded_box_center_inside_image(tmp_path_factory, width, height, x, y, w, h):
    tmp_path = tmp_path_factory.mktemp("coco")
    path = write_coco(
        tmp_path,
        images=[{"id": 1, "width": width, "height": height}],
        annotations=[{"id": 1, "image_id": 1, "category_id": 1, "bbox": [x, y, w, h]}],
        categories=[{"id": 1, "name": "dog"}],
    )
    try:
        scenes, _ = load_dataset(path)
    except ValidationError:
        return  # fully outside the image, legitimately rejected
    cx, cy = scenes[0].boxes[0].center
    assert 0 <= cx <= width
    assert 0 <= cy <= height


def test_hierarchy_siblings(tmp_path, hierarchy_file):
    path = write_coco(
        tmp_path,
        images=[],
        categories=[{"id": 1, "name": "dog"}, {"id": 2, "name": "wolf"}, {"id": 3, "name": "cat"}],
    )
    _, table = load_dataset(path)
    hier = load_hierarchy(hierarchy_file, table)
    dog = table.id_by_name("dog")
    wolf = table.id_by_name("wolf")
    cat = table.id_by_name("cat")
    assert hier.siblings(dog) == [wolf]
    assert hier.siblings(wolf) == [dog]
    assert hier.siblings(cat) == []


def test_hierarchy_missing_categories_become_singletons(tmp_path):
    path = write_coco(
        tmp_path,
        images=[],
        categories=[{"id": 1, "name": "a"}, {"id": 2, "name": "b"}, {"id": 3, "name": "c"}],
    )
    _, table = load_dataset(path)
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    hier = load_hierarchy(empty, table)
    for cid in (1, 2, 3):
        assert hier.siblings(cid) == []
        assert hier.parent[cid] == table.name(cid)


def test_hierarchy_duplicate_entry_rejected(tmp_path):
    path = write_coco(tmp_path, images=[], categories=[{"id": 1, "name": "dog"}])
    _, table = load_dataset(path)
    dup = tmp_path / "dup.tsv"
    dup.write_text("dog\tcanine\ndog\tpet\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="dog"):
        load_hierarchy(dup, table)
