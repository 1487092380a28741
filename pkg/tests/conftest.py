import json

import pytest

from boxprompt.annotations import BoundingBox, CategoryTable, SceneAnnotation


@pytest.fixture
def dog_cat_table() -> CategoryTable:
    return CategoryTable(
        names={1: "dog", 2: "cat"},
        plurals={1: "dogs", 2: "cats"},
        original_ids={1: 1, 2: 2},
    )


@pytest.fixture
def two_dog_scene() -> SceneAnnotation:
    # one small dog in the top-left cell, one large dog dead center
    return SceneAnnotation(
        image_id=7,
        width=300.0,
        height=300.0,
        boxes=[
            BoundingBox(x=10.0, y=10.0, w=20.0, h=20.0, category_id=1),
            BoundingBox(x=90.0, y=90.0, w=120.0, h=120.0, category_id=1),
        ],
    )


def write_coco(tmp_path, name="annotations.json", images=None, annotations=None, categories=None):
    doc = {
        "images": images if images is not None else [],
        "annotations": annotations if annotations is not None else [],
        "categories": categories if categories is not None else [],
    }
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def two_image_doc(tmp_path):
    """Two images, three annotations: two on image 1, one on image 2."""
    return write_coco(
        tmp_path,
        images=[
            {"id": 1, "width": 640, "height": 480},
            {"id": 2, "width": 320, "height": 240},
        ],
        annotations=[
            {"id": 10, "image_id": 1, "category_id": 5, "bbox": [10, 10, 50, 40]},
            {"id": 11, "image_id": 1, "category_id": 9, "bbox": [200, 100, 80, 60]},
            {"id": 12, "image_id": 2, "category_id": 5, "bbox": [5, 5, 30, 30]},
        ],
        categories=[
            {"id": 5, "name": "dog"},
            {"id": 9, "name": "traffic light", "plural": "traffic lights"},
        ],
    )


@pytest.fixture
def template_file(tmp_path):
    lines = [
        "cq\tCATEGORY,QUANTITY\tThere {is|are} {QUANTITY} {CATEGORY}\t",
        "cqps\tCATEGORY,QUANTITY,POSITION,SIZE\tThere {is|are} {QUANTITY} {CATEGORY}\ta {SIZE} one at the {POSITION}",
    ]
    path = tmp_path / "templates.tsv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def hierarchy_file(tmp_path):
    path = tmp_path / "hierarchy.tsv"
    path.write_text("dog\tcanine\nwolf\tcanine\ncat\tfeline\n", encoding="utf-8")
    return path
