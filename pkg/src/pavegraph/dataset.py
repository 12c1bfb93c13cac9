"""Yearly feature snapshots, temporal windows, and standardization."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import GraphError, RoadGraph

FEATURE_NAMES: tuple[str, ...] = (
    "material",
    "agg_type",
    "flood_risk",
    "proximity_quarry",
    "age_yrs",
    "traffic_aadt",
    "truck_factor",
    "ept_mm",
    "base_modulus",
    "crack_area_pct",
    "iri",
)

OBSERVATION_COLUMNS: tuple[str, ...] = ("segment_id", "year") + FEATURE_NAMES + ("pci",)


class DataError(ValueError):
    """Invalid observation records."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SnapshotSeries:
    """Per-year node feature matrices and PCI targets in canonical node order.

    ``features`` has shape (num_years, N, F) and ``targets`` (num_years, N);
    years are strictly increasing and consecutive.
    """

    years: tuple[int, ...]
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        t, n = len(self.years), self.targets.shape[-1]
        if list(self.years) != list(range(self.years[0], self.years[0] + t)):
            raise DataError(f"years must be consecutive and increasing: {self.years}")
        if self.features.shape != (t, n, len(self.feature_names)):
            raise DataError(
                f"features shape {self.features.shape} != "
                f"({t}, {n}, {len(self.feature_names)})"
            )
        if self.targets.shape != (t, n):
            raise DataError(f"targets shape {self.targets.shape} != ({t}, {n})")
        if np.any(self.targets < 0.0) or np.any(self.targets > 100.0):
            bad = float(self.targets[(self.targets < 0) | (self.targets > 100)][0])
            raise DataError(f"PCI outside [0, 100]: {bad}")
        object.__setattr__(self, "features", _frozen(self.features))
        object.__setattr__(self, "targets", _frozen(self.targets))

    @property
    def num_nodes(self) -> int:
        return self.targets.shape[1]

    def year_index(self, year: int) -> int:
        if year not in self.years:
            raise DataError(f"year {year} not in series {self.years}")
        return year - self.years[0]


@dataclass(frozen=True)
class TemporalSample:
    """One sliding-window instance: T0 input years and the following target year.

    ``inputs`` has shape (N, T0, F) with the time axis ordered oldest to
    newest; ``target`` is the PCI vector of ``target_year``.
    """

    inputs: np.ndarray
    target: np.ndarray
    input_years: tuple[int, ...]
    target_year: int

    def __post_init__(self):
        t0 = len(self.input_years)
        if self.input_years != tuple(range(self.target_year - t0, self.target_year)):
            raise DataError(
                f"input years {self.input_years} must immediately precede "
                f"target year {self.target_year}"
            )
        object.__setattr__(self, "inputs", _frozen(self.inputs))
        object.__setattr__(self, "target", _frozen(self.target))

    @property
    def num_nodes(self) -> int:
        return self.inputs.shape[0]

    @property
    def t0(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Chronological year partition: train strictly before val before test."""

    train_years: frozenset[int]
    val_years: frozenset[int]
    test_years: frozenset[int]

    def __post_init__(self):
        groups = [self.train_years, self.val_years, self.test_years]
        if sum(len(g) for g in groups) != len(set().union(*groups)):
            raise DataError("split year sets must be pairwise disjoint")
        if self.train_years and self.val_years and max(self.train_years) >= min(self.val_years):
            raise DataError("train years must strictly precede val years")
        if self.val_years and self.test_years and max(self.val_years) >= min(self.test_years):
            raise DataError("val years must strictly precede test years")


def default_split(years: Sequence[int]) -> SplitSpec:
    """Last year is test, second-to-last is val, the rest train."""
    if len(years) < 3:
        raise DataError(f"need at least 3 years to split, got {list(years)}")
    return SplitSpec(
        train_years=frozenset(years[:-2]),
        val_years=frozenset({years[-2]}),
        test_years=frozenset({years[-1]}),
    )


def read_observation_file(path: str | Path) -> list[dict]:
    """Read the node observation CSV into typed records."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(OBSERVATION_COLUMNS) - set(reader.fieldnames):
            missing = sorted(set(OBSERVATION_COLUMNS) - set(reader.fieldnames or []))
            raise DataError(f"observation file {path} missing columns {missing}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            rec: dict = {"segment_id": row["segment_id"]}
            try:
                rec["year"] = int(row["year"])
                for name in FEATURE_NAMES + ("pci",):
                    rec[name] = float(row[name])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric field ({exc})") from None
            records.append(rec)
    return records


def load_snapshots(records: Iterable[Mapping], graph: RoadGraph) -> SnapshotSeries:
    """Arrange observation records into matrices in canonical node order.

    Every (segment, year) pair must appear exactly once over the rectangular
    segment x year grid; missing combinations are an error, never imputed.
    """
    records = list(records)
    if not records:
        raise DataError("no observation records")
    years = sorted({r["year"] for r in records})
    n = graph.num_nodes
    t = len(years)
    year_pos = {y: k for k, y in enumerate(years)}

    features = np.full((t, n, len(FEATURE_NAMES)), np.nan)
    targets = np.full((t, n), np.nan)
    seen: set[tuple[int, int]] = set()
    for r in records:
        i = graph.index_of(r["segment_id"])  # raises on unknown id
        k = year_pos[r["year"]]
        if (k, i) in seen:
            raise DataError(f"duplicate observation ({r['segment_id']}, {r['year']})")
        seen.add((k, i))
        pci = float(r["pci"])
        if not 0.0 <= pci <= 100.0:
            raise DataError(
                f"PCI outside [0, 100] for ({r['segment_id']}, {r['year']}): {pci}"
            )
        for f, name in enumerate(FEATURE_NAMES):
            features[k, i, f] = float(r[name])
        targets[k, i] = pci

    if len(seen) != t * n:
        missing = [
            (graph.node_ids[i], years[k])
            for k in range(t)
            for i in range(n)
            if (k, i) not in seen
        ]
        raise DataError(f"missing observations (segment, year): {missing[:5]}")
    return SnapshotSeries(years=tuple(years), features=features, targets=targets)


def build_windows(series: SnapshotSeries, t0: int) -> list[TemporalSample]:
    """Slide a window of ``t0`` input years over the series.

    Sample k uses years [k, k+t0) as inputs and year k+t0 as the target,
    giving ``num_years - t0`` samples.
    """
    if t0 < 1:
        raise DataError(f"window length must be >= 1, got {t0}")
    if len(series.years) < t0 + 1:
        raise DataError(
            f"window length {t0} needs at least {t0 + 1} years, series has {len(series.years)}"
        )
    samples = []
    for k in range(len(series.years) - t0):
        inputs = np.transpose(series.features[k : k + t0], (1, 0, 2))
        samples.append(
            TemporalSample(
                inputs=inputs.copy(),
                target=series.targets[k + t0].copy(),
                input_years=tuple(series.years[k : k + t0]),
                target_year=series.years[k + t0],
            )
        )
    return samples


def select_features(series: SnapshotSeries, names: Sequence[str]) -> SnapshotSeries:
    """Restrict a series to a subset of feature columns (order preserved)."""
    missing = [n for n in names if n not in series.feature_names]
    if missing:
        raise DataError(f"unknown feature names {missing}")
    idx = [series.feature_names.index(n) for n in names]
    return SnapshotSeries(
        years=series.years,
        features=series.features[:, :, idx],
        targets=series.targets,
        feature_names=tuple(names),
    )


def drop_features(series: SnapshotSeries, names: Sequence[str]) -> SnapshotSeries:
    """Remove feature columns by name."""
    keep = [n for n in series.feature_names if n not in set(names)]
    if len(keep) == len(series.feature_names):
        unknown = [n for n in names if n not in series.feature_names]
        if unknown:
            raise DataError(f"unknown feature names {unknown}")
    if not keep:
        raise DataError("cannot drop every feature")
    return select_features(series, keep)


def assign_windows(
    samples: Sequence[TemporalSample], split: SplitSpec
) -> tuple[list[TemporalSample], list[TemporalSample], list[TemporalSample]]:
    """Route windows to train/val/test roles.

    A window trains when its input years all fall in the training years; it
    serves validation when its target year is a validation year (with short
    histories these overlap: the window whose inputs are the training years
    targets the validation year and fills both roles). Test windows are those
    targeting test years.
    """
    train = [s for s in samples if set(s.input_years) <= split.train_years]
    val = [s for s in samples if s.target_year in split.val_years]
    test = [s for s in samples if s.target_year in split.test_years]
    return train, val, test


@dataclass(frozen=True)
class Standardizer:
    """Column-wise z-scaling fitted on training years only (population std)."""

    feature_means: np.ndarray
    feature_stds: np.ndarray
    target_mean: float
    target_std: float

    def __post_init__(self):
        object.__setattr__(self, "feature_means", _frozen(self.feature_means))
        object.__setattr__(self, "feature_stds", _frozen(self.feature_stds))
        if np.any(self.feature_stds <= 0) or self.target_std <= 0:
            raise DataError("standardizer stds must be strictly positive")

    def transform_features(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.feature_means.shape[0]:
            raise DataError(
                f"feature dim {x.shape[-1]} != fitted {self.feature_means.shape[0]}"
            )
        return (x - self.feature_means) / self.feature_stds

    def inverse_transform_features(self, x: np.ndarray) -> np.ndarray:
        return x * self.feature_stds + self.feature_means

    def transform_target(self, y: np.ndarray) -> np.ndarray:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def inverse_transform_target(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=np.float64) * self.target_std + self.target_mean


def fit_standardizer(series: SnapshotSeries, train_years: Iterable[int]) -> Standardizer:
    """Fit per-feature and target statistics over the training-year rows.

    Zero-variance columns get their std clamped to 1.0 so constant columns
    transform to all zeros instead of dividing by zero.
    """
    idx = sorted(series.year_index(y) for y in set(train_years))
    if not idx:
        raise DataError("empty training year set")
    rows = series.features[idx].reshape(-1, series.features.shape[-1])
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    stds = np.where(stds < 1e-12, 1.0, stds)
    y = series.targets[idx].reshape(-1)
    y_std = float(y.std())
    return Standardizer(
        feature_means=means,
        feature_stds=stds,
        target_mean=float(y.mean()),
        target_std=1.0 if y_std < 1e-12 else y_std,
    )


def apply_standardizer(standardizer: Standardizer, sample: TemporalSample) -> TemporalSample:
    """Standardize one window (every time slice uses the same column stats)."""
    return TemporalSample(
        inputs=standardizer.transform_features(sample.inputs),
        target=standardizer.transform_target(sample.target),
        input_years=sample.input_years,
        target_year=sample.target_year,
    )
