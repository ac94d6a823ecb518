"""Criteria weights from a pairwise comparison matrix (row geometric means)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

# Random consistency index by matrix order (Saaty).
RCI = {1: 0.0, 2: 0.0, 3: 0.58, 4: 0.90, 5: 1.12, 6: 1.24, 7: 1.32, 8: 1.41,
       9: 1.45, 10: 1.49}

DEFAULT_THRESHOLD = 0.08
RECIPROCITY_TOL = 1e-9


class AHPError(ValueError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str  # "diagonal", "reciprocity" or "scale"
    i: int
    j: int
    value: float

    def __str__(self):
        return f"{self.kind} violation at ({self.i + 1},{self.j + 1}): {self.value:g}"


@dataclass(frozen=True)
class CriteriaWeights:
    weights: np.ndarray
    geometric_means: np.ndarray
    lambda_max: float
    ci: float
    cr: float | None  # None when RCI(m) = 0

    @property
    def m(self) -> int:
        return len(self.weights)


def as_matrix(matrix) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AHPError(f"comparison matrix must be square, got shape {a.shape}")
    return a


def validate(matrix) -> list[Violation]:
    """All diagonal, reciprocity and nine-point-scale breaches; empty means valid."""
    a = as_matrix(matrix)
    m = len(a)
    out = []
    for i in range(m):
        if abs(a[i, i] - 1.0) > RECIPROCITY_TOL:
            out.append(Violation("diagonal", i, i, a[i, i]))
    for i in range(m):
        for j in range(i + 1, m):
            if not (a[i, j] > 0 and a[j, i] > 0) or abs(a[i, j] * a[j, i] - 1.0) > RECIPROCITY_TOL:
                out.append(Violation("reciprocity", i, j, a[i, j]))
    lo, hi = 1.0 / 9.0 - 1e-12, 9.0 + 1e-12
    for i in range(m):
        for j in range(m):
            if not lo <= a[i, j] <= hi:
                out.append(Violation("scale", i, j, a[i, j]))
    return out


def derive_weights(matrix) -> CriteriaWeights:
    a = as_matrix(matrix)
    m = len(a)
    if m < 2:
        raise AHPError("need at least two criteria")
    problems = validate(a)
    if problems:
        raise AHPError("invalid comparison matrix: " + "; ".join(map(str, problems)))
    gm = np.exp(np.log(a).mean(axis=1))
    w = gm / gm.sum()
    lambda_max = float(np.mean(a @ w / w))
    ci = (lambda_max - m) / (m - 1)
    rci = RCI.get(m)
    if rci is None:
        raise AHPError(f"no random consistency index tabulated for m={m}")
    cr = ci / rci if rci > 0 else None
    return CriteriaWeights(w, gm, lambda_max, ci, cr)


def check_consistency(weights: CriteriaWeights, threshold: float = DEFAULT_THRESHOLD) -> bool:
    """Accept iff CR <= threshold. Orders without an RCI are accepted when CI ~ 0."""
    if weights.cr is None:
        return weights.ci <= 1e-9
    return weights.cr <= threshold


def aggregate_objective(weights, values) -> float:
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != w.shape:
        raise ValueError(f"expected {len(w)} criterion values, got {v.size}")
    return float(w @ v)


def parse_entry(text: str) -> float:
    """Parse ``"3"``, ``"0.5"`` or ``"1/3"``."""
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise AHPError(f"cannot parse comparison entry {text!r}") from None


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise AHPError(f"matrix file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [[parse_entry(c) for c in row] for row in csv.reader(fh) if row]
    if not rows or any(len(r) != len(rows) for r in rows):
        raise AHPError(f"{path}: expected a square matrix")
    return np.array(rows)


def save_weights(weights: CriteriaWeights, criteria: Sequence[str], path: str | Path,
                 threshold: float = DEFAULT_THRESHOLD) -> None:
    payload = {
        "criteria": list(criteria),
        "weights": weights.weights.tolist(),
        "geometric_means": weights.geometric_means.tolist(),
        "lambda_max": weights.lambda_max,
        "ci": weights.ci,
        "cr": weights.cr,
        "threshold": threshold,
        "accepted": check_consistency(weights, threshold),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> tuple[list[str], np.ndarray, bool]:
    """Return ``(criteria, weights, accepted)`` from a weights file."""
    path = Path(path)
    if not path.is_file():
        raise AHPError(f"weights file not found: {path}")
    d = json.loads(path.read_text(encoding="utf-8"))
    w = np.asarray(d["weights"], dtype=float)
    if (w <= 0).any() or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
        raise AHPError(f"{path}: weights must be positive and sum to 1")
    return list(d["criteria"]), w, bool(d.get("accepted", True))
