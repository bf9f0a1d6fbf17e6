"""Six-feature housing table: CSV ingestion, z-scoring and a synthetic source."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FEATURES = ("MedInc", "HAge", "AveRms", "AveBedrms", "Pop", "AveOcp")
TARGET = "Target"
BEDRMS = FEATURES.index("AveBedrms")
OCCUPANCY = FEATURES.index("AveOcp")


class TabularFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TabularDataset:
    rows: np.ndarray  # (n, 6), normalized when ``mean`` is set
    target: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    feature_names: tuple[str, ...] = FEATURES

    @property
    def normalized(self) -> bool:
        return self.mean is not None

    def __len__(self) -> int:
        return len(self.rows)

    def original(self, rows: np.ndarray | None = None) -> np.ndarray:
        """Rows mapped back to original feature units."""
        rows = self.rows if rows is None else np.asarray(rows, dtype=np.float64)
        if not self.normalized:
            return rows
        return rows * self.std + self.mean

    def subset(self, idx) -> "TabularDataset":
        return replace(self, rows=self.rows[idx], target=self.target[idx])


def load_tabular_csv(path: str | Path) -> TabularDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TabularFormatError(f"{path}: empty file") from None
        missing = [name for name in (*FEATURES, TARGET) if name not in header]
        if missing:
            raise TabularFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(name) for name in (*FEATURES, TARGET)]
        values = []
        for lineno, record in enumerate(reader, start=2):
            if not record:
                continue
            try:
                values.append([float(record[i]) for i in cols])
            except (ValueError, IndexError):
                raise TabularFormatError(f"{path}:{lineno}: non-numeric or missing cell") from None
    data = np.array(values, dtype=np.float64).reshape(-1, len(FEATURES) + 1)
    return TabularDataset(data[:, :-1], data[:, -1])


def write_tabular_csv(ds: TabularDataset, path: str | Path) -> None:
    rows = ds.original()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*FEATURES, TARGET])
        for row, t in zip(rows, ds.target):
            w.writerow([repr(float(v)) for v in (*row, t)])


def normalize(ds: TabularDataset) -> TabularDataset:
    """Per-feature z-score; zero-variance features keep std = 1."""
    if ds.normalized:
        return ds
    mean = ds.rows.mean(axis=0)
    std = ds.rows.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return replace(ds, rows=(ds.rows - mean) / std, mean=mean, std=std)


def denormalize(ds: TabularDataset) -> TabularDataset:
    if not ds.normalized:
        return ds
    return replace(ds, rows=ds.original(), mean=None, std=None)


def concept_bedrooms_ratio(row) -> float:
    """Bedrooms per occupant for one row in original units."""
    occupancy = float(row[OCCUPANCY])
    if occupancy == 0.0:
        raise ZeroDivisionError("AveOcp is zero")
    return float(row[BEDRMS]) / occupancy


def synthetic_housing(n: int, seed: int) -> TabularDataset:
    """Seeded stand-in for the housing table with plausible column relations."""
    rng = np.random.default_rng(seed)
    med_inc = np.clip(rng.lognormal(1.2, 0.45, n), 0.5, 15.0)
    age = rng.integers(1, 53, n).astype(np.float64)
    rooms = np.clip(2.5 + 0.55 * med_inc + rng.normal(0, 0.6, n), 1.5, None)
    occupancy = np.clip(rng.lognormal(1.0, 0.22, n), 1.0, 8.0)
    bedrooms = np.clip(rooms * (0.19 + rng.normal(0, 0.025, n)), 0.5, None)
    pop = np.clip(np.round(rng.lognormal(7.0, 0.7, n)), 3, None)
    ratio = bedrooms / occupancy
    target = (0.4 + 0.42 * med_inc + 0.006 * age - 0.08 * occupancy + 1.6 * ratio
              - 0.08 * rooms + rng.normal(0, 0.25, n))
    rows = np.column_stack([med_inc, age, rooms, bedrooms, pop, occupancy])
    return TabularDataset(rows, np.clip(target, 0.15, 5.0))
