"""Prompt-based linguistic supervision for object detection annotations.

Turns bounding-box annotations into image- and object-level descriptions,
corrupts them into hard negatives, and provides the contrastive
mutual-information objectives (with analytic gradients) that distill the
text back into a detector.
"""

from .annotations import (
    BoundingBox,
    CategoryTable,
    Hierarchy,
    SceneAnnotation,
    dump_dataset,
    load_dataset,
    load_hierarchy,
)
from .errors import (
    EmptySceneError,
    NumericalError,
    ParseError,
    PipelineError,
    TrainingDiverged,
    ValidationError,
)
from .negatives import (
    FailureSet,
    FalsePositive,
    HardNegativeSet,
    ScoredPrediction,
    build_negative_set,
    detect_failures,
    load_scores,
)
from .prompting import (
    Description,
    PromptTemplate,
    SizeThresholds,
    Span,
    default_templates,
    full_slot_templates,
    load_templates,
    position_bin,
    quantity_word,
    render_image_description,
    render_object_description,
    size_class,
)

__version__ = "0.1.0"
