"""InfoNCE mutual-information objectives with analytic gradients.

Four forms: image-level visual (anchor image, in-batch text negatives),
image-level textual (the transpose direction), object-level (each object
against all C+1 category features), and the hard-negative extension that
appends per-image corrupted descriptions to the visual denominator.  All
softmaxes subtract the row maximum before exponentiation.

The visual form is evaluated through the same row loop as the hard form
with an empty negative list, so the two agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ValidationError

ROLE_VISUAL_GLOBAL = "visual_global"
ROLE_LINGUISTIC_GLOBAL = "linguistic_global"
ROLE_VISUAL_OBJECT = "visual_object"
ROLE_LINGUISTIC_CATEGORY = "linguistic_category"
ROLE_HARD_NEGATIVE = "hard_negative"


@dataclass
class FeatureBatch:
    """A batch of same-dimension feature vectors with a modality role."""

    matrix: np.ndarray  # (N, d)
    role: str = ""

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2:
            raise ValidationError("feature batch must be a 2-D (N, d) array")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def max_norm_error(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.matrix, axis=1) - 1.0)))


@dataclass(frozen=True)
class LossConfig:
    """Temperature and the loss weights of the joint objective."""

    tau: float = 0.07
    lambda_vg: float = 0.5
    lambda_lg: float = 0.5
    lambda_o: float = 0.1

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValidationError("temperature must be positive")
        if min(self.lambda_vg, self.lambda_lg, self.lambda_o) < 0:
            raise ValidationError("loss weights must be non-negative")


@dataclass
class LossOutput:
    """Scalar loss plus gradients keyed by the input they belong to."""

    value: float
    grads: dict[str, Any] = field(default_factory=dict)

    def grad_norms(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for key, g in self.grads.items():
            if isinstance(g, list):
                out[key] = float(np.sqrt(sum(float(np.sum(np.square(a))) for a in g)))
            else:
                out[key] = float(np.linalg.norm(np.asarray(g).reshape(-1)))
        return out

    def to_record(self, loss_name: str) -> dict:
        return {"loss_name": loss_name, "value": self.value, "grad_norms": self.grad_norms()}


def _as_matrix(batch: FeatureBatch | np.ndarray) -> np.ndarray:
    if isinstance(batch, FeatureBatch):
        return batch.matrix
    m = np.asarray(batch, dtype=float)
    if m.ndim != 2:
        raise ValidationError("expected a 2-D (N, d) feature array")
    return m


def cosine_matrix(a: FeatureBatch | np.ndarray, b: FeatureBatch | np.ndarray) -> np.ndarray:
    """Pairwise similarities of unit-norm rows: entry (i, j) = <a_i, b_j>."""
    A, B = _as_matrix(a), _as_matrix(b)
    if A.shape[1] != B.shape[1]:
        raise ValidationError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return A @ B.T


def _nce_rows(
    anchors: np.ndarray,
    others: np.ndarray,
    negatives: Sequence[np.ndarray] | None,
    tau: float,
) -> tuple[float, np.ndarray, np.ndarray, list[np.ndarray]]:
    """Shared core: per-row softmax over paired columns plus optional extras.

    Returns (mean loss, d_anchors, d_others, d_negatives).
    """
    n = anchors.shape[0]
    if n == 0:
        raise ValidationError("empty feature batch")
    if others.shape[0] != n:
        raise ValidationError(f"batch sizes differ: {n} vs {others.shape[0]}")
    if anchors.shape[1] != others.shape[1]:
        raise ValidationError("feature dimensions differ")
    if negatives is not None and len(negatives) != n:
        raise ValidationError("need one negative list per anchor")

    base = anchors @ others.T / tau  # (n, n)
    total = 0.0
    d_anchors = np.zeros_like(anchors)
    d_others = np.zeros_like(others)
    d_negs: list[np.ndarray] = []

    for i in range(n):
        negs_i = None
        if negatives is not None and negatives[i].shape[0] > 0:
            negs_i = np.asarray(negatives[i], dtype=float)
            if negs_i.shape[1] != anchors.shape[1]:
                raise ValidationError("negative feature dimension differs from the batch")
            row = np.concatenate([base[i], negs_i @ anchors[i] / tau])
        else:
            row = np.concatenate([base[i], np.empty(0)])
        m = row.max()
        e = np.exp(row - m)
        z = e.sum()
        total += np.log(z) + m - base[i, i]
        p = e / z
        # d loss_i / d s_ij = p_ij - [j == i], pulled back through s = <a, o>/tau
        coeff = p[:n].copy()
        coeff[i] -= 1.0
        d_anchors[i] += coeff @ others / tau
        d_others += np.outer(coeff, anchors[i]) / tau
        if negs_i is not None:
            q = p[n:]
            d_anchors[i] += q @ negs_i / tau
            d_negs.append(np.outer(q, anchors[i]) / tau)
        else:
            d_negs.append(np.zeros((0, anchors.shape[1])))

    scale = 1.0 / n
    d_anchors *= scale
    d_others *= scale
    d_negs = [g * scale for g in d_negs]
    return total * scale, d_anchors, d_others, d_negs


def infonce_visual(
    f_v: FeatureBatch | np.ndarray, f_l: FeatureBatch | np.ndarray, tau: float
) -> LossOutput:
    """Image-anchored InfoNCE: each image against every text in the batch."""
    V, L = _as_matrix(f_v), _as_matrix(f_l)
    value, dV, dL, _ = _nce_rows(V, L, None, tau)
    return LossOutput(value=float(value), grads={"visual": dV, "linguistic": dL})


def infonce_text(
    f_l: FeatureBatch | np.ndarray, f_v: FeatureBatch | np.ndarray, tau: float
) -> LossOutput:
    """Text-anchored InfoNCE: the transpose direction of the visual form."""
    L, V = _as_matrix(f_l), _as_matrix(f_v)
    value, dL, dV, _ = _nce_rows(L, V, None, tau)
    return LossOutput(value=float(value), grads={"linguistic": dL, "visual": dV})


def infonce_hard(
    f_v: FeatureBatch | np.ndarray,
    f_l: FeatureBatch | np.ndarray,
    negatives: Sequence[np.ndarray],
    tau: float,
    share_negatives: bool = False,
) -> LossOutput:
    """Visual InfoNCE whose denominators also see hard-negative texts.

    By default image i sees only its own negatives; ``share_negatives``
    lends every image's negatives to the whole batch.
    """
    V, L = _as_matrix(f_v), _as_matrix(f_l)
    negs = [np.atleast_2d(np.asarray(g, dtype=float)) if np.size(g) else np.zeros((0, V.shape[1]))
            for g in negatives]
    if share_negatives:
        pooled = np.concatenate(negs, axis=0) if negs else np.zeros((0, V.shape[1]))
        sizes = [g.shape[0] for g in negs]
        value, dV, dL, d_pooled = _nce_rows(V, L, [pooled] * len(V), tau)
        d_negs = [np.zeros((s, V.shape[1])) for s in sizes]
        for per_row in d_pooled:
            offset = 0
            for j, s in enumerate(sizes):
                d_negs[j] += per_row[offset : offset + s]
                offset += s
    else:
        value, dV, dL, d_negs = _nce_rows(V, L, negs, tau)
    return LossOutput(
        value=float(value), grads={"visual": dV, "linguistic": dL, "negatives": d_negs}
    )


def infonce_object(
    f_obj: FeatureBatch | np.ndarray,
    f_cat: FeatureBatch | np.ndarray,
    labels: Sequence[int],
    tau: float,
) -> LossOutput:
    """Object-level InfoNCE summed over objects against all C+1 categories."""
    O, C = _as_matrix(f_obj), _as_matrix(f_cat)
    labels = np.asarray(labels, dtype=int)
    if O.shape[0] != labels.shape[0]:
        raise ValidationError("one label per object feature required")
    if O.shape[0] == 0:
        return LossOutput(value=0.0, grads={"objects": np.zeros_like(O), "categories": np.zeros_like(C)})
    if O.shape[1] != C.shape[1]:
        raise ValidationError("object and category feature dimensions differ")
    n_cat = C.shape[0]
    if np.any(labels < 1) or np.any(labels >= n_cat):
        raise ValidationError(f"labels must lie in 1..{n_cat - 1}")

    logits = O @ C.T / tau  # (M, C+1)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    rows = np.arange(O.shape[0])
    value = float(np.sum(np.log(z[:, 0]) + m[:, 0] - logits[rows, labels]))

    P = e / z
    P[rows, labels] -= 1.0
    d_obj = P @ C / tau
    d_cat = P.T @ O / tau
    return LossOutput(value=value, grads={"objects": d_obj, "categories": d_cat})


def combined_loss(
    det: LossOutput,
    l_vg: LossOutput | None,
    l_lg: LossOutput | None,
    l_o: LossOutput | None,
    config: LossConfig,
) -> LossOutput:
    """Joint objective: detection plus the weighted MI terms, grads merged."""
    merged: dict[str, Any] = {}

    def absorb(out: LossOutput | None, weight: float) -> float:
        if out is None or weight == 0.0:
            return 0.0
        for key, g in out.grads.items():
            if isinstance(g, list):
                scaled = [weight * a for a in g]
                if key in merged:
                    merged[key] = [x + y for x, y in zip(merged[key], scaled)]
                else:
                    merged[key] = scaled
            else:
                if key in merged:
                    merged[key] = merged[key] + weight * g
                else:
                    merged[key] = weight * g
        return weight * out.value

    total = (
        absorb(det, 1.0)
        + absorb(l_vg, config.lambda_vg)
        + absorb(l_lg, config.lambda_lg)
        + absorb(l_o, config.lambda_o)
    )
    return LossOutput(value=float(total), grads=merged)


def gather_features(
    per_worker_batches: Sequence[FeatureBatch], ranks: Sequence[int]
) -> FeatureBatch:
    """Concatenate per-worker batches in strict rank order."""
    if len(per_worker_batches) != len(ranks):
        raise ValidationError("one rank per worker batch required")
    if len(set(ranks)) != len(ranks):
        raise ValidationError("worker ranks must be distinct")
    if not per_worker_batches:
        raise ValidationError("nothing to gather")
    dims = {b.dim for b in per_worker_batches}
    if len(dims) != 1:
        raise ValidationError(f"inconsistent feature dimensions across workers: {sorted(dims)}")
    order = sorted(range(len(ranks)), key=lambda i: ranks[i])
    stacked = np.concatenate([per_worker_batches[i].matrix for i in order], axis=0)
    return FeatureBatch(matrix=stacked, role=per_worker_batches[order[0]].role)
