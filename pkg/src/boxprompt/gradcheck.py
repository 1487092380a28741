"""Central finite-difference verification of every analytic gradient.

Each suite rebuilds a loss from a flat parameter vector, differentiates it
numerically coordinate by coordinate, and compares against the analytic
gradients.  The numeric path only ever evaluates loss values, so it stays
independent of the gradient code it checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .embedding import ProjectionHead, project, project_backward
from .losses import infonce_hard, infonce_object, infonce_text, infonce_visual
from .seeding import mix64

LOSS_NAMES = ("image_to_text", "text_to_image", "object_level", "hard_negative", "projection_head")
DEFAULT_TOLERANCE = 1e-5


def finite_difference(f: Callable[[np.ndarray], float], x0: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function over a flat vector."""
    x0 = np.asarray(x0, dtype=float)
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        x = x0.copy()
        x[i] = x0[i] + eps
        fp = f(x)
        x[i] = x0[i] - eps
        fm = f(x)
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> tuple[float, int]:
    """Max deviation scaled by the gradient magnitude, plus its coordinate.

    The scale is floored at one so saturated instances whose true gradients
    vanish are judged on absolute agreement instead of a degenerate ratio.
    """
    analytic = np.asarray(analytic, dtype=float).reshape(-1)
    numeric = np.asarray(numeric, dtype=float).reshape(-1)
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numeric), initial=0.0)), 1.0)
    diff = np.abs(analytic - numeric)
    worst = int(np.argmax(diff))
    return float(diff[worst] / scale), worst


@dataclass
class CheckReport:
    name: str
    max_rel_err: float = 0.0
    worst_coordinate: int = -1
    worst_instance: int = -1
    values: list[float] = field(default_factory=list)

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_err < tolerance

    def update(self, err: float, coord: int, instance: int) -> None:
        if err > self.max_rel_err:
            self.max_rel_err = err
            self.worst_coordinate = coord
            self.worst_instance = instance


def _unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _check_pairwise(report: CheckReport, loss_fn, instances: int, seed: int, tau: float,
                    eps: float, flip: float) -> None:
    for inst in range(instances):
        rng = np.random.default_rng(mix64(seed, report.name, inst))
        n = int(rng.integers(2, 6))
        d = int(rng.integers(4, 9))
        V, L = _unit_rows(rng, n, d), _unit_rows(rng, n, d)
        out = loss_fn(V, L, tau)
        report.values.append(out.value)
        first = out.grads["visual"] if report.name == "image_to_text" else out.grads["linguistic"]
        second = out.grads["linguistic"] if report.name == "image_to_text" else out.grads["visual"]
        analytic = flip * np.concatenate([first.reshape(-1), second.reshape(-1)])

        def f(flat: np.ndarray) -> float:
            a = flat[: n * d].reshape(n, d)
            b = flat[n * d :].reshape(n, d)
            return loss_fn(a, b, tau).value

        x0 = np.concatenate([V.reshape(-1), L.reshape(-1)])
        err, coord = relative_error(analytic, finite_difference(f, x0, eps))
        report.update(err, coord, inst)


def _check_object(report: CheckReport, instances: int, seed: int, tau: float,
                  eps: float, flip: float) -> None:
    for inst in range(instances):
        rng = np.random.default_rng(mix64(seed, report.name, inst))
        m = int(rng.integers(1, 7))
        c = int(rng.integers(2, 6))  # C+1 category rows
        d = int(rng.integers(4, 9))
        O, C = _unit_rows(rng, m, d), _unit_rows(rng, c, d)
        labels = rng.integers(1, c, size=m)
        out = infonce_object(O, C, labels, tau)
        report.values.append(out.value)
        analytic = flip * np.concatenate(
            [out.grads["objects"].reshape(-1), out.grads["categories"].reshape(-1)]
        )

        def f(flat: np.ndarray) -> float:
            a = flat[: m * d].reshape(m, d)
            b = flat[m * d :].reshape(c, d)
            return infonce_object(a, b, labels, tau).value

        x0 = np.concatenate([O.reshape(-1), C.reshape(-1)])
        err, coord = relative_error(analytic, finite_difference(f, x0, eps))
        report.update(err, coord, inst)


def _check_hard(report: CheckReport, instances: int, seed: int, tau: float,
                eps: float, flip: float) -> None:
    for inst in range(instances):
        rng = np.random.default_rng(mix64(seed, report.name, inst))
        n = int(rng.integers(2, 5))
        d = int(rng.integers(4, 9))
        counts = [int(rng.integers(0, 4)) for _ in range(n)]
        V, L = _unit_rows(rng, n, d), _unit_rows(rng, n, d)
        negs = [_unit_rows(rng, k, d) if k else np.zeros((0, d)) for k in counts]
        out = infonce_hard(V, L, negs, tau)
        report.values.append(out.value)
        analytic = flip * np.concatenate(
            [out.grads["visual"].reshape(-1), out.grads["linguistic"].reshape(-1)]
            + [g.reshape(-1) for g in out.grads["negatives"]]
        )

        def f(flat: np.ndarray) -> float:
            a = flat[: n * d].reshape(n, d)
            b = flat[n * d : 2 * n * d].reshape(n, d)
            offset = 2 * n * d
            ns = []
            for k in counts:
                ns.append(flat[offset : offset + k * d].reshape(k, d))
                offset += k * d
            return infonce_hard(a, b, ns, tau).value

        x0 = np.concatenate([V.reshape(-1), L.reshape(-1)] + [g.reshape(-1) for g in negs])
        err, coord = relative_error(analytic, finite_difference(f, x0, eps))
        report.update(err, coord, inst)


def _check_head(report: CheckReport, instances: int, seed: int, eps: float, flip: float) -> None:
    for inst in range(instances):
        rng = np.random.default_rng(mix64(seed, report.name, inst))
        d_in = int(rng.integers(3, 7))
        d_hid = int(rng.integers(3, 8))
        d_out = int(rng.integers(3, 7))
        n = int(rng.integers(1, 4))
        head = ProjectionHead.create(d_in, d_hid, d_out, seed=int(rng.integers(0, 2**31)))
        # non-zero biases keep the forward pass away from the zero-norm corner
        head.b1 = rng.standard_normal(d_hid) * 0.1
        head.b2 = rng.standard_normal(d_out) * 0.1
        X = rng.standard_normal((n, d_in))
        upstream = rng.standard_normal((n, d_out))
        grads = project_backward(head, X, upstream)
        report.values.append(float(np.sum(project(head, X) * upstream)))
        analytic = flip * np.concatenate(
            [grads.W1.reshape(-1), grads.b1.reshape(-1), grads.W2.reshape(-1),
             grads.b2.reshape(-1), grads.x.reshape(-1)]
        )
        shapes = [(d_in, d_hid), (d_hid,), (d_hid, d_out), (d_out,), (n, d_in)]

        def f(flat: np.ndarray) -> float:
            parts = []
            offset = 0
            for shape in shapes:
                size = int(np.prod(shape))
                parts.append(flat[offset : offset + size].reshape(shape))
                offset += size
            trial = ProjectionHead(W1=parts[0], b1=parts[1], W2=parts[2], b2=parts[3])
            return float(np.sum(project(trial, parts[4]) * upstream))

        x0 = np.concatenate(
            [head.W1.reshape(-1), head.b1.reshape(-1), head.W2.reshape(-1),
             head.b2.reshape(-1), X.reshape(-1)]
        )
        err, coord = relative_error(analytic, finite_difference(f, x0, eps))
        report.update(err, coord, inst)


def run_all(
    instances: int = 50,
    seed: int = 0,
    tau: float = 0.07,
    eps: float = 1e-6,
    sabotage: str | None = None,
) -> dict[str, CheckReport]:
    """Run every gradient suite; ``sabotage`` sign-flips one analytic gradient
    so tests can confirm the harness actually detects wrong gradients.
    """
    reports: dict[str, CheckReport] = {}
    for name in LOSS_NAMES:
        report = CheckReport(name=name)
        flip = -1.0 if sabotage == name else 1.0
        if name == "image_to_text":
            _check_pairwise(report, infonce_visual, instances, seed, tau, eps, flip)
        elif name == "text_to_image":
            _check_pairwise(report, infonce_text, instances, seed, tau, eps, flip)
        elif name == "object_level":
            _check_object(report, instances, seed, tau, eps, flip)
        elif name == "hard_negative":
            _check_hard(report, instances, seed, tau, eps, flip)
        else:
            _check_head(report, instances, seed, eps, flip)
        reports[name] = report
    return reports
