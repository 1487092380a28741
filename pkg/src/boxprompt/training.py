"""Desk-scale training harness demonstrating the multimodal objectives.

Synthetic scenes give every category a fixed unit signature; objects carry
noisy copies plus box geometry.  A linear classifier over signatures stands
in for the detection head, two projection heads embed the visual side
(global scene pooling and per-object), and two more embed the text side
(image descriptions and category prompts).  Everything is optimized jointly
with plain gradient descent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import BoundingBox, CategoryTable, Hierarchy, SceneAnnotation
from .embedding import (
    ProjectionHead,
    embed_text,
    load_head,
    project,
    project_backward,
    save_head,
    sgd_step,
)
from .errors import TrainingDiverged, ValidationError
from .losses import (
    LossConfig,
    LossOutput,
    combined_loss,
    infonce_hard,
    infonce_object,
    infonce_text,
    infonce_visual,
)
from .negatives import ScoredPrediction, build_negative_set, detect_failures
from .prompting import (
    BACKGROUND_TEXT,
    POSITION_LABELS,
    SIZE_LABELS,
    Description,
    PromptTemplate,
    position_bin,
    render_image_description,
    render_object_description,
    render_units,
    size_class,
)
from .seeding import (
    TAG_BATCH_ORDER,
    TAG_NEGATIVES,
    TAG_RENDER,
    TAG_SIBLING_EVAL,
    choice_index,
    mix64,
)

_MODEL_MAGIC = b"BPM1"


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs of the synthetic scene generator."""

    num_categories: int = 8
    scenes: int = 2000
    max_objects_per_scene: int = 3
    signature_dim: int = 32
    noise_sigma: float = 0.05
    seed: int = 0
    width: float = 640.0
    height: float = 480.0

    def __post_init__(self) -> None:
        if self.num_categories < 2:
            raise ValidationError("need at least 2 categories")
        if self.noise_sigma < 0:
            raise ValidationError("noise sigma must be non-negative")
        if self.scenes < 1 or self.max_objects_per_scene < 1:
            raise ValidationError("need at least one scene and one object per scene")


@dataclass
class SyntheticDataset:
    scenes: list[SceneAnnotation]
    signatures: list[np.ndarray]  # per scene: (n_i, signature_dim)
    table: CategoryTable
    category_signatures: np.ndarray  # (C, signature_dim), row c-1 owns category c
    config: SyntheticConfig


def generate_synthetic(config: SyntheticConfig) -> SyntheticDataset:
    """Seed-deterministic scenes with per-object noisy category signatures."""
    rng = np.random.default_rng(config.seed)
    c = config.num_categories
    cat_sig = rng.standard_normal((c, config.signature_dim))
    cat_sig /= np.linalg.norm(cat_sig, axis=1, keepdims=True)

    names = {cid: f"thing{cid}" for cid in range(1, c + 1)}
    table = CategoryTable(
        names=names,
        plurals={cid: name + "s" for cid, name in names.items()},
        original_ids={cid: cid for cid in names},
    )

    scenes: list[SceneAnnotation] = []
    signatures: list[np.ndarray] = []
    for i in range(config.scenes):
        n = int(rng.integers(1, config.max_objects_per_scene + 1))
        cats = rng.integers(1, c + 1, size=n)
        boxes = []
        for cat in cats:
            w = float(rng.uniform(0.05, 0.5) * config.width)
            h = float(rng.uniform(0.05, 0.5) * config.height)
            x = float(rng.uniform(0.0, config.width - w))
            y = float(rng.uniform(0.0, config.height - h))
            boxes.append(BoundingBox(x=x, y=y, w=w, h=h, category_id=int(cat)))
        noise = rng.standard_normal((n, config.signature_dim)) * config.noise_sigma
        signatures.append(cat_sig[cats - 1] + noise)
        scenes.append(
            SceneAnnotation(image_id=i + 1, width=config.width, height=config.height, boxes=boxes)
        )
    return SyntheticDataset(
        scenes=scenes,
        signatures=signatures,
        table=table,
        category_signatures=cat_sig,
        config=config,
    )


def synthetic_hierarchy(table: CategoryTable, group_size: int = 2) -> Hierarchy:
    """Group consecutive categories under shared parents so siblings exist."""
    if group_size < 1:
        raise ValidationError("group size must be positive")
    return Hierarchy(parent={cid: f"group{(cid - 1) // group_size}" for cid in table.names})


@dataclass
class ToyDetector:
    """Visual stand-in: two projection heads plus a linear classifier."""

    object_encoder: ProjectionHead
    global_encoder: ProjectionHead
    classifier_W: np.ndarray  # (signature_dim, C+1)
    classifier_b: np.ndarray  # (C+1,)


@dataclass
class MklModel:
    detector: ToyDetector
    text_global: ProjectionHead
    text_object: ProjectionHead


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.1
    lr_final_fraction: float = 0.1  # linear decay target, as a fraction of lr
    seed: int = 0
    feature_dim: int = 64
    hidden_dim: int = 128
    text_embed_dim: int = 128
    n_h: int = 5
    enable_hard_negatives: bool = True
    enable_object_level: bool = True
    hard_negative_warmup: int = 0  # epochs before negatives switch on
    share_negatives: bool = False

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch size must be positive")
        if self.lr < 0:
            raise ValidationError("learning rate must be non-negative")


@dataclass
class EpochMetrics:
    epoch: int
    det_loss: float
    image_visual: float
    image_text: float
    object_level: float
    total: float
    retrieval_top1: float
    object_alignment_top1: float
    sibling_confusion_rate: float

    def to_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "det_loss": self.det_loss,
            "image_visual": self.image_visual,
            "image_text": self.image_text,
            "object_level": self.object_level,
            "total": self.total,
            "retrieval_top1": self.retrieval_top1,
            "object_alignment_top1": self.object_alignment_top1,
            "sibling_confusion_rate": self.sibling_confusion_rate,
        }


@dataclass
class TrainReport:
    epochs: list[EpochMetrics] = field(default_factory=list)

    @property
    def final(self) -> EpochMetrics:
        return self.epochs[-1]


def eval_retrieval(f_v: np.ndarray, f_l: np.ndarray) -> float:
    """Fraction of rows whose best-matching text is their own pair; ties fail."""
    V, L = np.asarray(f_v, dtype=float), np.asarray(f_l, dtype=float)
    if V.shape[0] == 0:
        raise ValidationError("empty batch")
    if V.shape != L.shape:
        raise ValidationError("paired batches must share shape")
    sims = V @ L.T
    hits = 0
    for i in range(sims.shape[0]):
        row = sims[i]
        m = row.max()
        if row[i] == m and int(np.sum(row == m)) == 1:
            hits += 1
    return hits / sims.shape[0]


def eval_object_alignment(
    f_obj: np.ndarray, f_cat: np.ndarray, labels: np.ndarray
) -> float:
    """Fraction of objects nearest to their own category feature (background
    row 0 excluded); ties fail."""
    O = np.asarray(f_obj, dtype=float)
    C = np.asarray(f_cat, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if O.shape[0] == 0:
        raise ValidationError("empty inputs")
    sims = O @ C[1:].T  # column c-1 is category c
    hits = 0
    for i in range(sims.shape[0]):
        row = sims[i]
        m = row.max()
        if row[labels[i] - 1] == m and int(np.sum(row == m)) == 1:
            hits += 1
    return hits / sims.shape[0]


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=1, keepdims=True)


def _geometry(box: BoundingBox, width: float, height: float) -> np.ndarray:
    cx, cy = box.center
    return np.array([cx / width, cy / height, box.w / width, box.h / height])


_POSITION_INDEX = {
    label: i for i, label in enumerate(lab for row in POSITION_LABELS for lab in row)
}
_SIZE_INDEX = {label: i for i, label in enumerate(SIZE_LABELS)}


def _pool_scene(
    obj_x: np.ndarray, scene: SceneAnnotation, max_objects: int
) -> np.ndarray:
    """Permutation-invariant scene summary mirroring what descriptions carry:
    summed object inputs plus grid-cell and size-class occupancy counts."""
    cells = np.zeros(9)
    sizes = np.zeros(3)
    for box in scene.boxes:
        cells[_POSITION_INDEX[position_bin(box, scene.width, scene.height)]] += 1.0
        sizes[_SIZE_INDEX[size_class(box, scene.width, scene.height)]] += 1.0
    return np.concatenate([obj_x.sum(axis=0), cells, sizes]) / max_objects


def _sibling_swap(
    scene: SceneAnnotation, hierarchy: Hierarchy, table: CategoryTable, key: int
) -> tuple[int, int]:
    """Pick (object index, replacement category) for the confusion metric."""
    idx = choice_index(len(scene.boxes), key, 0)
    cat = scene.boxes[idx].category_id
    siblings = hierarchy.siblings(cat)
    if siblings:
        return idx, siblings[choice_index(len(siblings), key, 1)]
    others = [c for c in sorted(table.names) if c != cat]
    return idx, others[choice_index(len(others), key, 1)]


def train(
    dataset: SyntheticDataset,
    templates: list[PromptTemplate],
    hierarchy: Hierarchy,
    loss_config: LossConfig,
    train_config: TrainConfig,
) -> tuple[TrainReport, MklModel]:
    """Jointly optimize the detection surrogate and the MI objectives."""
    if not dataset.scenes:
        raise ValidationError("empty dataset")
    cfg = train_config
    table = dataset.table
    sig_dim = dataset.config.signature_dim
    n_cat = table.count
    obj_dim = sig_dim + 4
    glob_dim = obj_dim + 9 + 3

    rng = np.random.default_rng(mix64(cfg.seed, "init"))
    model = MklModel(
        detector=ToyDetector(
            object_encoder=ProjectionHead.create(obj_dim, cfg.hidden_dim, cfg.feature_dim, seed=mix64(cfg.seed, "obj") % 2**32),
            global_encoder=ProjectionHead.create(glob_dim, cfg.hidden_dim, cfg.feature_dim, seed=mix64(cfg.seed, "glob") % 2**32),
            classifier_W=rng.standard_normal((sig_dim, n_cat + 1)) * np.sqrt(1.0 / sig_dim),
            classifier_b=np.zeros(n_cat + 1),
        ),
        text_global=ProjectionHead.create(cfg.text_embed_dim, cfg.hidden_dim, cfg.feature_dim, seed=mix64(cfg.seed, "lg") % 2**32),
        text_object=ProjectionHead.create(cfg.text_embed_dim, cfg.hidden_dim, cfg.feature_dim, seed=mix64(cfg.seed, "lo") % 2**32),
    )
    det = model.detector

    # static per-scene tensors
    scenes = dataset.scenes
    n_scenes = len(scenes)
    obj_inputs: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    global_inputs = np.zeros((n_scenes, glob_dim))
    for i, scene in enumerate(scenes):
        geo = np.stack([_geometry(b, scene.width, scene.height) for b in scene.boxes])
        x = np.concatenate([dataset.signatures[i], geo], axis=1)
        obj_inputs.append(x)
        labels.append(np.array([b.category_id for b in scene.boxes], dtype=int))
        global_inputs[i] = _pool_scene(x, scene, dataset.config.max_objects_per_scene)

    # category prompts never change across the run
    cat_raw = np.stack(
        [embed_text(BACKGROUND_TEXT, cfg.text_embed_dim)]
        + [
            embed_text(render_object_description(c, table).text, cfg.text_embed_dim)
            for c in range(1, n_cat + 1)
        ]
    )

    image_level = loss_config.lambda_vg > 0 or loss_config.lambda_lg > 0
    report = TrainReport()

    # each image keeps one prompt draw for the whole run
    anchors: list[Description] = []
    anchor_raw = np.zeros((n_scenes, cfg.text_embed_dim))
    swapped_raw = np.zeros((n_scenes, cfg.text_embed_dim))
    by_id = {t.id: t for t in templates}
    for i, scene in enumerate(scenes):
        desc = render_image_description(
            scene, templates, table, mix64(cfg.seed, TAG_RENDER, scene.image_id)
        )
        anchors.append(desc)
        anchor_raw[i] = embed_text(desc.text, cfg.text_embed_dim)
        # fixed sibling swap per image, used by the confusion metric
        key = mix64(cfg.seed, TAG_SIBLING_EVAL, scene.image_id)
        idx, replacement = _sibling_swap(scene, hierarchy, table, key)
        units = [
            (o, BoundingBox(b.x, b.y, b.w, b.h, replacement) if o == idx else b)
            for o, b in enumerate(scene.boxes)
        ]
        swapped = render_units(
            units, scene.width, scene.height, by_id[desc.template_id], table,
            order_seed=desc.order_seed,
        )
        swapped_raw[i] = embed_text(swapped.text, cfg.text_embed_dim)

    for epoch in range(cfg.epochs):
        decay = 1.0 - (1.0 - cfg.lr_final_fraction) * (epoch / max(cfg.epochs - 1, 1))
        lr = cfg.lr * decay
        order = sorted(range(n_scenes), key=lambda i: mix64(cfg.seed, TAG_BATCH_ORDER, epoch, i))
        hard_on = (
            cfg.enable_hard_negatives
            and loss_config.lambda_vg > 0
            and epoch >= cfg.hard_negative_warmup
        )

        sums = {"det": 0.0, "vg": 0.0, "lg": 0.0, "o": 0.0, "total": 0.0}
        steps = 0
        for start in range(0, n_scenes, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch_obj_x = np.concatenate([obj_inputs[i] for i in idx], axis=0)
            batch_sigs = np.concatenate([dataset.signatures[i] for i in idx], axis=0)
            batch_labels = np.concatenate([labels[i] for i in idx])

            # detection surrogate: cross-entropy of the linear classifier
            logits = batch_sigs @ det.classifier_W + det.classifier_b
            probs = _softmax_rows(logits)
            m = batch_labels.shape[0]
            det_value = float(-np.mean(np.log(probs[np.arange(m), batch_labels])))
            dlogits = probs.copy()
            dlogits[np.arange(m), batch_labels] -= 1.0
            dlogits /= m
            det_out = LossOutput(
                value=det_value,
                grads={
                    "classifier_W": batch_sigs.T @ dlogits,
                    "classifier_b": dlogits.sum(axis=0),
                },
            )

            l_vg = l_lg = l_o = None
            f_vg = f_lg = None
            neg_raw = neg_sizes = None
            if image_level:
                v_in = global_inputs[idx]
                t_raw = anchor_raw[idx]
                f_vg = project(det.global_encoder, v_in)
                f_lg = project(model.text_global, t_raw)
                if hard_on:
                    raw_blocks: list[np.ndarray] = []
                    neg_sizes = []
                    for i in idx:
                        scene = scenes[i]
                        preds = []
                        scene_probs = _softmax_rows(
                            dataset.signatures[i] @ det.classifier_W + det.classifier_b
                        )
                        for o, box in enumerate(scene.boxes):
                            preds.append(
                                ScoredPrediction(
                                    scores=scene_probs[o],
                                    assigned_label=box.category_id,
                                    box=box,
                                    matched_object=o,
                                )
                            )
                        negs = build_negative_set(
                            scene,
                            anchors[i],
                            detect_failures(preds),
                            hierarchy,
                            templates,
                            table,
                            cfg.n_h,
                            mix64(cfg.seed, TAG_NEGATIVES, epoch, scene.image_id),
                        )
                        raw_blocks.append(
                            np.stack(
                                [embed_text(d.text, cfg.text_embed_dim) for d in negs.negatives]
                            )
                        )
                        neg_sizes.append(len(negs.negatives))
                    neg_raw = np.concatenate(raw_blocks, axis=0)
                    f_neg_flat = project(model.text_global, neg_raw)
                    per_image = []
                    offset = 0
                    for size in neg_sizes:
                        per_image.append(f_neg_flat[offset : offset + size])
                        offset += size
                    l_vg = infonce_hard(
                        f_vg, f_lg, per_image, loss_config.tau, share_negatives=cfg.share_negatives
                    )
                else:
                    l_vg = infonce_visual(f_vg, f_lg, loss_config.tau)
                l_lg = infonce_text(f_lg, f_vg, loss_config.tau)

            f_vo = f_lo = None
            if cfg.enable_object_level and loss_config.lambda_o > 0:
                f_vo = project(det.object_encoder, batch_obj_x)
                f_lo = project(model.text_object, cat_raw)
                l_o = infonce_object(f_vo, f_lo, batch_labels, loss_config.tau)

            out = combined_loss(det_out, l_vg, l_lg, l_o, loss_config)
            if not np.isfinite(out.value):
                raise TrainingDiverged(steps)

            sums["det"] += det_value
            sums["vg"] += l_vg.value if l_vg else 0.0
            sums["lg"] += l_lg.value if l_lg else 0.0
            sums["o"] += l_o.value if l_o else 0.0
            sums["total"] += out.value
            steps += 1

            # pull feature gradients back through their heads, then update
            if "visual" in out.grads:
                sgd_step(
                    det.global_encoder,
                    project_backward(det.global_encoder, global_inputs[idx], out.grads["visual"]),
                    lr,
                )
            if "linguistic" in out.grads:
                hg = project_backward(model.text_global, anchor_raw[idx], out.grads["linguistic"])
                if neg_raw is not None and "negatives" in out.grads:
                    neg_grads = np.concatenate(out.grads["negatives"], axis=0)
                    hg2 = project_backward(model.text_global, neg_raw, neg_grads)
                    hg.W1 += hg2.W1
                    hg.b1 += hg2.b1
                    hg.W2 += hg2.W2
                    hg.b2 += hg2.b2
                sgd_step(model.text_global, hg, lr)
            if "objects" in out.grads:
                sgd_step(
                    det.object_encoder,
                    project_backward(det.object_encoder, batch_obj_x, out.grads["objects"]),
                    lr,
                )
            if "categories" in out.grads:
                sgd_step(
                    model.text_object,
                    project_backward(model.text_object, cat_raw, out.grads["categories"]),
                    lr,
                )
            det.classifier_W -= lr * out.grads["classifier_W"]
            det.classifier_b -= lr * out.grads["classifier_b"]

        report.epochs.append(
            _evaluate_epoch(
                epoch, model, dataset, anchor_raw, swapped_raw,
                global_inputs, obj_inputs, labels, cat_raw, cfg, sums, steps,
            )
        )
    return report, model


def _evaluate_epoch(
    epoch: int,
    model: MklModel,
    dataset: SyntheticDataset,
    anchor_raw: np.ndarray,
    swapped_raw: np.ndarray,
    global_inputs: np.ndarray,
    obj_inputs: list[np.ndarray],
    labels: list[np.ndarray],
    cat_raw: np.ndarray,
    cfg: TrainConfig,
    sums: dict[str, float],
    steps: int,
) -> EpochMetrics:
    det = model.detector
    scenes = dataset.scenes
    f_vg = project(det.global_encoder, global_inputs)
    f_lg = project(model.text_global, anchor_raw)

    n_full = (len(scenes) // cfg.batch_size) * cfg.batch_size
    hits = 0.0
    blocks = 0
    for start in range(0, n_full, cfg.batch_size):
        sl = slice(start, start + cfg.batch_size)
        hits += eval_retrieval(f_vg[sl], f_lg[sl]) * cfg.batch_size
        blocks += cfg.batch_size
    retrieval = hits / blocks if blocks else eval_retrieval(f_vg, f_lg)

    all_obj = np.concatenate(obj_inputs, axis=0)
    all_labels = np.concatenate(labels)
    f_vo = project(det.object_encoder, all_obj)
    f_lo = project(model.text_object, cat_raw)
    alignment = eval_object_alignment(f_vo, f_lo, all_labels)

    f_sw = project(model.text_global, swapped_raw)
    confused = int(np.sum(np.sum(f_vg * f_sw, axis=1) >= np.sum(f_vg * f_lg, axis=1)))

    return EpochMetrics(
        epoch=epoch,
        det_loss=sums["det"] / steps,
        image_visual=sums["vg"] / steps,
        image_text=sums["lg"] / steps,
        object_level=sums["o"] / steps,
        total=sums["total"] / steps,
        retrieval_top1=retrieval,
        object_alignment_top1=alignment,
        sibling_confusion_rate=confused / len(scenes),
    )


def save_model(model: MklModel, path: str | Path) -> None:
    """Checkpoint: four head blocks then the classifier, fixed order."""
    det = model.detector
    with open(path, "wb") as f:
        f.write(_MODEL_MAGIC)
        for head in (det.object_encoder, det.global_encoder, model.text_global, model.text_object):
            save_head(head, f)
        w, b = det.classifier_W, det.classifier_b
        f.write(struct.pack("<2Q", w.shape[0], w.shape[1]))
        f.write(w.astype("<f8").tobytes())
        f.write(b.astype("<f8").tobytes())


def load_model(path: str | Path) -> MklModel:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MODEL_MAGIC:
            raise ValidationError(f"not a model checkpoint: magic {magic!r}")
        obj_enc = load_head(f)
        glob_enc = load_head(f)
        text_global = load_head(f)
        text_object = load_head(f)
        d_in, n_out = struct.unpack("<2Q", f.read(16))
        w = np.frombuffer(f.read(d_in * n_out * 8), dtype="<f8").reshape(d_in, n_out).copy()
        b = np.frombuffer(f.read(n_out * 8), dtype="<f8").copy()
    return MklModel(
        detector=ToyDetector(
            object_encoder=obj_enc, global_encoder=glob_enc, classifier_W=w, classifier_b=b
        ),
        text_global=text_global,
        text_object=text_object,
    )
