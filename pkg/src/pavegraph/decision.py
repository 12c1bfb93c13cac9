"""Predictive-to-decision translation: severity bands, priorities, safety.

The five severity classes follow the ASTM D6433 half-open intervals
(boundaries 40/55/70/85 land in the upper class) so every finite PCI maps to
exactly one class. Rank 1 = best condition, rank 5 = worst.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class SeverityClass:
    label: str
    rank: int
    recommended_action: str


SEVERITY_CLASSES: tuple[SeverityClass, ...] = (
    SeverityClass("Excellent", 1, "Routine monitoring"),
    SeverityClass("Good", 2, "Preventive"),
    SeverityClass("Fair", 3, "Corrective"),
    SeverityClass("Poor", 4, "Major overlay"),
    SeverityClass("VeryPoor", 5, "Full reconstruction"),
)

_THRESHOLDS = (85.0, 70.0, 55.0, 40.0)  # lower bound of ranks 1..4; below 40 is rank 5


def classify(pci: float) -> SeverityClass:
    """Map a PCI value to its severity class.

    Values outside [0, 100] are clamped with a warning; a regression head is
    not bounded, and clamping keeps the decision pipeline total.
    """
    value = float(pci)
    if np.isnan(value):
        raise DecisionError("cannot classify NaN PCI")
    if value < 0.0 or value > 100.0:
        warnings.warn(f"PCI {value} outside [0, 100]; clamping", stacklevel=2)
        value = min(max(value, 0.0), 100.0)
    for cls, lower in zip(SEVERITY_CLASSES, _THRESHOLDS):
        if value >= lower:
            return cls
    return SEVERITY_CLASSES[-1]


@dataclass(frozen=True)
class ProfileEntry:
    segment_id: str
    predicted_pci: float
    predicted_class: SeverityClass
    priority_rank: int
    actual_pci: float | None = None
    actual_class: SeverityClass | None = None


@dataclass(frozen=True)
class MaintenanceProfile:
    """Per-segment predictions with a strict priority order (worst first)."""

    entries: tuple[ProfileEntry, ...]

    @property
    def has_actuals(self) -> bool:
        return all(e.actual_pci is not None for e in self.entries)

    def by_priority(self) -> list[ProfileEntry]:
        return sorted(self.entries, key=lambda e: e.priority_rank)


def build_profile(
    pred_pci: Sequence[float],
    ids: Sequence[str],
    actual_pci: Sequence[float] | None = None,
) -> MaintenanceProfile:
    """Classify and rank segments, lowest predicted PCI first.

    Ties break lexicographically on segment id so the ordering is a strict
    total order invariant under input permutation.
    """
    pred = np.asarray(pred_pci, dtype=np.float64)
    if len(ids) != pred.size:
        raise DecisionError(f"{len(ids)} ids vs {pred.size} predictions")
    if len(set(ids)) != len(ids):
        raise DecisionError("segment ids must be unique")
    if actual_pci is not None and len(actual_pci) != pred.size:
        raise DecisionError(f"{len(actual_pci)} actuals vs {pred.size} predictions")

    order = sorted(range(pred.size), key=lambda i: (pred[i], ids[i]))
    rank_of = {i: r + 1 for r, i in enumerate(order)}
    entries = []
    for i in range(pred.size):
        actual = None if actual_pci is None else float(actual_pci[i])
        entries.append(
            ProfileEntry(
                segment_id=str(ids[i]),
                predicted_pci=float(pred[i]),
                predicted_class=classify(pred[i]),
                priority_rank=rank_of[i],
                actual_pci=actual,
                actual_class=None if actual is None else classify(actual),
            )
        )
    return MaintenanceProfile(entries=tuple(entries))


@dataclass(frozen=True)
class SafetyReport:
    """Actual-vs-predicted class agreement; rows = actual, columns = predicted."""

    confusion: np.ndarray
    exact_match: float
    adjacent_match: float
    critical_misclassification: float

    def __post_init__(self):
        self.confusion.setflags(write=False)


def safety_report(profile: MaintenanceProfile) -> SafetyReport:
    """5x5 confusion matrix plus exact / adjacent / critical fractions.

    Adjacent counts rank differences of at most one tier, so adjacent and
    critical partition the mass: adjacent = 1 - critical, exact <= adjacent.
    """
    if not profile.entries:
        raise DecisionError("empty profile")
    if not profile.has_actuals:
        raise DecisionError("profile lacks actual PCI values")
    confusion = np.zeros((5, 5), dtype=np.int64)
    for e in profile.entries:
        confusion[e.actual_class.rank - 1, e.predicted_class.rank - 1] += 1
    n = len(profile.entries)
    diffs = np.abs(np.subtract.outer(np.arange(5), np.arange(5)))
    exact = float(confusion[diffs == 0].sum() / n)
    adjacent = float(confusion[diffs <= 1].sum() / n)
    return SafetyReport(
        confusion=confusion,
        exact_match=exact,
        adjacent_match=adjacent,
        critical_misclassification=1.0 - adjacent,
    )


def top_k_critical(profile: MaintenanceProfile, k: int) -> list[ProfileEntry]:
    """The k most critically damaged segments in priority order."""
    if not 0 < k <= len(profile.entries):
        raise DecisionError(f"k={k} out of range for {len(profile.entries)} segments")
    return profile.by_priority()[:k]
