"""OSPA distance between labeled state sets and its time average."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class LabeledSet:
    """Labeled states ``[px, vx, py, vy]`` at one frame."""

    items: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.items = [(int(lab), np.asarray(x, dtype=float).reshape(4)) for lab, x in self.items]
        labels = [lab for lab, _ in self.items]
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique within a set")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def positions(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0, 2))
        return np.array([[x[0], x[2]] for _, x in self.items])


def ospa(X: LabeledSet, Y: LabeledSet, p: float = 1.0, c: float = 10.0) -> float:
    """OSPA distance with cutoff ``c`` and order ``p`` on Euclidean positions."""
    if p < 1 or not c > 0:
        raise ValueError("need p >= 1 and c > 0")
    A, B = X.positions, Y.positions
    if len(A) > len(B):
        A, B = B, A
    m, n = len(A), len(B)
    if n == 0:
        return 0.0
    if m == 0:
        return float(c)
    dist = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1)
    cost = np.minimum(dist, c) ** p
    rows, cols = linear_sum_assignment(cost)
    total = cost[rows, cols].sum() + (n - m) * c**p
    return float((total / n) ** (1.0 / p))


def mospa(series: Iterable[tuple[LabeledSet, LabeledSet]], p: float = 1.0, c: float = 10.0) -> float:
    values = [ospa(X, Y, p, c) for X, Y in series]
    if not values:
        raise ValueError("series must be nonempty")
    return float(np.mean(values))


def coverage(
    truth: Sequence[np.ndarray | None], estimates: Sequence[np.ndarray], radius: float = 1.0
) -> float:
    """Fraction of frames where some estimated position lies within ``radius`` of the truth.

    ``truth[t]`` is a position (or None when the object is absent) and
    ``estimates[t]`` an (n, 2) array of positions.
    """
    hit = total = 0
    for z, est in zip(truth, estimates):
        if z is None:
            continue
        total += 1
        est = np.asarray(est, dtype=float).reshape(-1, 2)
        hit += bool(len(est)) and bool(np.min(np.linalg.norm(est - z, axis=1)) <= radius)
    return hit / total if total else float("nan")
