"""Deterministic text embedding and trainable projection heads.

The pretrained language model is replaced by a hash embedder: every token
maps to a fixed pseudo-random unit vector keyed by its own hash, and a
sequence embeds as the mean of its token vectors.  Only the 2-layer
projection heads on top of either modality are trainable.
"""

from __future__ import annotations

import hashlib
import string
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParseError, ValidationError

_HEAD_MAGIC = b"BPH1"
_token_cache: dict[tuple[str, int], np.ndarray] = {}


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            out.append(tok)
    return out


def token_vector(token: str, d_in: int) -> np.ndarray:
    """The fixed unit vector owned by one token, cached per dimension."""
    key = (token, d_in)
    cached = _token_cache.get(key)
    if cached is None:
        seed = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
        v = np.random.default_rng(seed).standard_normal(d_in)
        v /= np.linalg.norm(v)
        v.flags.writeable = False
        _token_cache[key] = cached = v
    return cached


def hash_embed(tokens: list[str], d_in: int) -> np.ndarray:
    """Mean-pooled token vectors; the empty sequence embeds as zero."""
    if d_in < 1:
        raise ValidationError("embedding dimension must be positive")
    if not tokens:
        return np.zeros(d_in)
    acc = np.zeros(d_in)
    for tok in tokens:
        acc += token_vector(tok, d_in)
    return acc / len(tokens)


def embed_text(text: str, d_in: int) -> np.ndarray:
    return hash_embed(tokenize(text), d_in)


def is_unit(v: np.ndarray, tol: float = 1e-9) -> bool:
    return bool(abs(np.linalg.norm(v) - 1.0) <= tol)


def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize rows; zero rows are a contract violation, not a fixup."""
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericalError("cannot normalize a zero-norm vector")
    return x / norms


@dataclass
class ProjectionHead:
    """Trainable 2-layer map into the shared d-dimensional space.

    Forward: y = normalize(W2 . relu(W1 . x + b1) + b2), row-wise.
    """

    W1: np.ndarray  # (d_in, d_hidden)
    b1: np.ndarray  # (d_hidden,)
    W2: np.ndarray  # (d_hidden, d_out)
    b2: np.ndarray  # (d_out,)
    seed: int = 0

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.W1.shape[1]

    @property
    def d_out(self) -> int:
        return self.W2.shape[1]

    @classmethod
    def create(cls, d_in: int, d_hidden: int, d_out: int, seed: int) -> "ProjectionHead":
        rng = np.random.default_rng(seed)
        return cls(
            W1=rng.standard_normal((d_in, d_hidden)) * np.sqrt(2.0 / d_in),
            b1=np.zeros(d_hidden),
            W2=rng.standard_normal((d_hidden, d_out)) * np.sqrt(1.0 / d_hidden),
            b2=np.zeros(d_out),
            seed=seed,
        )

    @classmethod
    def identity(cls, d: int) -> "ProjectionHead":
        return cls(W1=np.eye(d), b1=np.zeros(d), W2=np.eye(d), b2=np.zeros(d))

    def parameters(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]


@dataclass
class HeadGradients:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    x: np.ndarray


def project(head: ProjectionHead, x: np.ndarray) -> np.ndarray:
    """Unit-norm output of the head; accepts a vector or a (N, d_in) batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != head.d_in:
        raise ValidationError(f"input dimension {X.shape[1]} != head d_in {head.d_in}")
    Z = normalize_rows(np.maximum(X @ head.W1 + head.b1, 0.0) @ head.W2 + head.b2)
    return Z[0] if single else Z


def project_backward(
    head: ProjectionHead, x: np.ndarray, upstream: np.ndarray
) -> HeadGradients:
    """Analytic gradients of the projection + normalization composite."""
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    G = np.atleast_2d(upstream)
    if X.shape[0] != G.shape[0]:
        raise ValidationError("input and upstream gradient batch sizes differ")

    Z1 = X @ head.W1 + head.b1
    H = np.maximum(Z1, 0.0)
    Z2 = H @ head.W2 + head.b2
    norms = np.linalg.norm(Z2, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NumericalError("cannot normalize a zero-norm vector")
    Y = Z2 / norms

    # d/dz of z/||z|| pulled back through the upstream gradient
    dZ2 = (G - np.sum(G * Y, axis=1, keepdims=True) * Y) / norms
    dW2 = H.T @ dZ2
    db2 = dZ2.sum(axis=0)
    dH = dZ2 @ head.W2.T
    dZ1 = dH * (Z1 > 0.0)
    dW1 = X.T @ dZ1
    db1 = dZ1.sum(axis=0)
    dX = dZ1 @ head.W1.T
    return HeadGradients(W1=dW1, b1=db1, W2=dW2, b2=db2, x=dX[0] if single else dX)


def sgd_step(head: ProjectionHead, grads: HeadGradients, lr: float) -> None:
    head.W1 -= lr * grads.W1
    head.b1 -= lr * grads.b1
    head.W2 -= lr * grads.W2
    head.b2 -= lr * grads.b2


def save_head(head: ProjectionHead, f) -> None:
    """Flat little-endian float64 payload behind a {d_in, d_hidden, d, seed} header."""
    f.write(_HEAD_MAGIC)
    f.write(struct.pack("<4Q", head.d_in, head.d_hidden, head.d_out, head.seed & (2**64 - 1)))
    flat = np.concatenate([p.reshape(-1) for p in head.parameters()])
    f.write(flat.astype("<f8").tobytes())


def load_head(f) -> ProjectionHead:
    magic = f.read(4)
    if magic != _HEAD_MAGIC:
        raise ParseError(f"bad head magic {magic!r}")
    d_in, d_hidden, d_out, seed = struct.unpack("<4Q", f.read(32))
    n = d_in * d_hidden + d_hidden + d_hidden * d_out + d_out
    flat = np.frombuffer(f.read(n * 8), dtype="<f8").astype(float)
    if flat.size != n:
        raise ParseError("truncated head payload")
    i = 0

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal i
        size = int(np.prod(shape))
        out = flat[i : i + size].reshape(shape)
        i += size
        return out.copy()

    return ProjectionHead(
        W1=take((d_in, d_hidden)),
        b1=take((d_hidden,)),
        W2=take((d_hidden, d_out)),
        b2=take((d_out,)),
        seed=seed,
    )


def save_head_file(head: ProjectionHead, path: str | Path) -> None:
    with open(path, "wb") as f:
        save_head(head, f)


def load_head_file(path: str | Path) -> ProjectionHead:
    with open(path, "rb") as f:
        return load_head(f)
