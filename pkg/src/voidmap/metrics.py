"""Point-level static, dynamic and associated accuracy."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .grid import InvalidInputError


@dataclass(frozen=True)
class Confusion:
    static_correct: int
    static_total: int
    dynamic_correct: int
    dynamic_total: int

    def __post_init__(self):
        if not (0 <= self.static_correct <= self.static_total):
            raise InvalidInputError("static_correct must lie in [0, static_total]")
        if not (0 <= self.dynamic_correct <= self.dynamic_total):
            raise InvalidInputError("dynamic_correct must lie in [0, dynamic_total]")

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self):
        return (self.static_correct, self.static_total, self.dynamic_correct, self.dynamic_total)


@dataclass(frozen=True)
class Metrics:
    """Percentages; None where the class has no ground-truth points."""

    SA: Optional[float]
    DA: Optional[float]
    AA: Optional[float]

    def row(self, name: str = "") -> str:
        def fmt(x):
            return "   -  " if x is None else f"{x:6.2f}"

        return f"{name:<28s} {fmt(self.SA)} {fmt(self.DA)} {fmt(self.AA)}"


def confusion_arrays(pred, gt) -> Confusion:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    return Confusion(
        int(np.count_nonzero(~pred & ~gt)),
        int(np.count_nonzero(~gt)),
        int(np.count_nonzero(pred & gt)),
        int(np.count_nonzero(gt)),
    )


def confusion(pred, gt) -> Confusion:
    """Counts over two index-aligned LabeledSequences."""
    if len(pred) != len(gt):
        raise InvalidInputError(f"{len(pred)} predicted scans vs {len(gt)} ground-truth scans")
    total = Confusion(0, 0, 0, 0)
    for p, g in zip(pred, gt):
        if p.scan_id != g.scan_id or len(p.labels) != len(g.labels) or not np.array_equal(
            p.indices, g.indices
        ):
            raise InvalidInputError(f"labels misaligned at scan_id {g.scan_id}")
        total = total + confusion_arrays(p.labels, g.labels)
    return total


def accuracy(correct: int, total: int) -> Optional[float]:
    return None if total == 0 else 100.0 * correct / total


def associated_accuracy(sa: Optional[float], da: Optional[float]) -> Optional[float]:
    """Geometric mean of SA and DA."""
    if sa is None or da is None:
        return None
    return math.sqrt(sa * da)


def compute_metrics(c: Confusion) -> Metrics:
    sa = accuracy(c.static_correct, c.static_total)
    da = accuracy(c.dynamic_correct, c.dynamic_total)
    return Metrics(sa, da, associated_accuracy(sa, da))


def metrics_json(c: Confusion) -> dict:
    m = compute_metrics(c)
    return {"SA": m.SA, "DA": m.DA, "AA": m.AA, "counts": asdict(c)}
