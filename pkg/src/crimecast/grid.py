"""Grid aggregation: daily multi-channel incident maps, samples, masks and splits.

Row 0 is the north edge of the bounding box and column 0 the west edge.
A "month" is always 30 days and a "year" 365 days.
"""

from __future__ import annotations

import csv
import datetime as dt
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import CONCRETE_TYPES, N_CHANNELS, CrimeType, DataError

MONTH = 30
YEAR = 365
DEFAULT_RESOLUTIONS = (16, 24, 32, 40)


@dataclass(frozen=True)
class GridSpec:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    p: int = 16

    def __post_init__(self):
        if not (self.lon_max > self.lon_min and self.lat_max > self.lat_min):
            raise DataError(f"degenerate bounding box {self.bbox}")
        if self.p < 1:
            raise DataError(f"grid side must be positive, got {self.p}")

    @property
    def bbox(self):
        return (self.lon_min, self.lon_max, self.lat_min, self.lat_max)

    @property
    def cell_width(self):
        return (self.lon_max - self.lon_min) / self.p

    @property
    def cell_height(self):
        return (self.lat_max - self.lat_min) / self.p

    @classmethod
    def from_bbox(cls, bbox, p):
        return cls(*bbox, p=p)

    @classmethod
    def covering(cls, incidents, p):
        lons = [i.lon for i in incidents]
        lats = [i.lat for i in incidents]
        if not lons:
            raise DataError("no incidents to derive a bounding box from")
        return cls(min(lons), max(lons), min(lats), max(lats), p=p)

    def with_resolution(self, p):
        return GridSpec(*self.bbox, p=p)


def cell_indices(lons, lats, spec):
    """Vectorised cell lookup; returns ``(rows, cols, inside)``."""
    lons = np.asarray(lons, dtype=float)
    lats = np.asarray(lats, dtype=float)
    inside = (lons >= spec.lon_min) & (lons <= spec.lon_max) & (lats >= spec.lat_min) & (lats <= spec.lat_max)
    rows = np.floor((spec.lat_max - lats) / spec.cell_height)
    cols = np.floor((lons - spec.lon_min) / spec.cell_width)
    # points on the max edge belong to the last cell
    rows = np.clip(rows, 0, spec.p - 1)
    cols = np.clip(cols, 0, spec.p - 1)
    rows = np.where(inside, rows, -1).astype(np.int64)
    cols = np.where(inside, cols, -1).astype(np.int64)
    return rows, cols, inside


def assign_cell(incident, spec):
    """``(row, col)`` of the incident's cell, or ``None`` when outside the box."""
    rows, cols, inside = cell_indices([incident.lon], [incident.lat], spec)
    if not inside[0]:
        return None
    return int(rows[0]), int(cols[0])


@dataclass
class IncidentMapStack:
    """Day-indexed ``(days, p, p, 11)`` count grids; the last channel is AllCrimes."""

    counts: np.ndarray
    start: dt.date
    spec: GridSpec
    excluded: dict = field(default_factory=dict)

    def __post_init__(self):
        c = self.counts
        if c.ndim != 4 or c.shape[1] != self.spec.p or c.shape[2] != self.spec.p or c.shape[3] != N_CHANNELS:
            raise DataError(f"stack shape {c.shape} does not match p={self.spec.p}, {N_CHANNELS} channels")

    @property
    def days(self):
        return self.counts.shape[0]

    @property
    def p(self):
        return self.spec.p

    def date_of(self, day_index):
        return self.start + dt.timedelta(days=int(day_index))

    def check_all_crimes(self):
        return bool((self.counts[..., :-1].sum(axis=-1, dtype=np.int64) == self.counts[..., -1]).all())

    # --- persistence -------------------------------------------------------

    MAGIC = b"CCMS"
    VERSION = 1
    _HEADER = struct.Struct("<4sHHIH10s4d")

    def to_bytes(self):
        header = self._HEADER.pack(
            self.MAGIC, self.VERSION, self.p, self.days, self.counts.shape[-1],
            self.start.isoformat().encode("ascii"), *self.spec.bbox,
        )
        return header + np.ascontiguousarray(self.counts, dtype="<u4").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        size = cls._HEADER.size
        if len(blob) < size:
            raise DataError("truncated stack file")
        magic, version, p, days, channels, start, *bbox = cls._HEADER.unpack(blob[:size])
        if magic != cls.MAGIC:
            raise DataError("not an incident-map stack file")
        if version != cls.VERSION:
            raise DataError(f"unsupported stack version {version}")
        counts = np.frombuffer(blob[size:], dtype="<u4")
        if counts.size != days * p * p * channels:
            raise DataError("stack payload size does not match its header")
        counts = counts.reshape(days, p, p, channels).astype(np.int64)
        return cls(counts, dt.date.fromisoformat(start.decode("ascii")), GridSpec(*bbox, p=p))

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())

    def export_csv(self, path):
        """Debug dump of non-zero entries as ``day,row,col,type,count``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["day", "row", "col", "type", "count"])
            for d, r, c, k in zip(*np.nonzero(self.counts)):
                w.writerow([int(d), int(r), int(c), CrimeType(int(k)).label, int(self.counts[d, r, c, k])])


def aggregate(incidents, spec, start, days):
    """Bin incidents into daily per-type count maps.

    Incidents outside the box or outside ``[start, start + days)`` are
    skipped and tallied in ``stack.excluded``.
    """
    if days < 1:
        raise DataError("days must be >= 1")
    counts = np.zeros((days, spec.p, spec.p, N_CHANNELS), dtype=np.int64)
    excluded = {"out_of_bounds": 0, "out_of_range": 0}
    if incidents:
        lons = np.fromiter((i.lon for i in incidents), float, len(incidents))
        lats = np.fromiter((i.lat for i in incidents), float, len(incidents))
        day_idx = np.fromiter(((i.timestamp.date() - start).days for i in incidents), np.int64, len(incidents))
        types = np.fromiter((int(i.crime_type) for i in incidents), np.int64, len(incidents))
        rows, cols, inside = cell_indices(lons, lats, spec)
        in_range = (day_idx >= 0) & (day_idx < days)
        excluded["out_of_bounds"] = int((~inside).sum())
        excluded["out_of_range"] = int((inside & ~in_range).sum())
        keep = inside & in_range
        np.add.at(counts, (day_idx[keep], rows[keep], cols[keep], types[keep]), 1)
    counts[..., CrimeType.ALL_CRIMES] = counts[..., :CrimeType.ALL_CRIMES].sum(axis=-1)
    return IncidentMapStack(counts, start, spec, excluded)


@dataclass
class Sample:
    """One forecasting unit.

    ``inputs`` holds the ``input_days`` daily maps preceding ``anchor`` (a
    view into the stack). Labels/counts cover ``[anchor, anchor + horizon)``:
    shape ``(p, p)`` for a single target type or ``(p, p, 11)`` when
    ``target_type`` is ``None`` (multi-label).
    """

    inputs: np.ndarray
    target_labels: np.ndarray
    target_counts: np.ndarray
    anchor: int
    anchor_date: dt.date
    target_type: CrimeType | None

    @property
    def multi_label(self):
        return self.target_type is None


def make_sample(stack, anchor, target_type, input_days=MONTH, horizon_days=MONTH):
    if anchor < input_days or anchor + horizon_days > stack.days:
        raise DataError(f"anchor {anchor} lacks {input_days} input days or {horizon_days} horizon days")
    future = stack.counts[anchor:anchor + horizon_days].sum(axis=0)
    counts = future if target_type is None else future[..., int(target_type)]
    return Sample(
        inputs=stack.counts[anchor - input_days:anchor],
        target_labels=(counts >= 1).astype(np.uint8),
        target_counts=counts,
        anchor=anchor,
        anchor_date=stack.date_of(anchor),
        target_type=target_type,
    )


def build_samples(stack, target_type=CrimeType.ALL_CRIMES, input_days=MONTH, horizon_days=MONTH,
                  stride_days=1, first_anchor=None, last_anchor=None):
    """Sliding-window samples with anchors ``first, first + stride, ...``.

    ``last_anchor`` (inclusive) defaults to the last day with a full horizon.
    """
    if stack.days < input_days + horizon_days:
        raise DataError(f"stack has {stack.days} days; need at least {input_days + horizon_days}")
    if stride_days < 1:
        raise DataError("stride must be >= 1")
    first = input_days if first_anchor is None else max(first_anchor, input_days)
    last = stack.days - horizon_days if last_anchor is None else min(last_anchor, stack.days - horizon_days)
    return [make_sample(stack, a, target_type, input_days, horizon_days)
            for a in range(first, last + 1, stride_days)]


def study_area(stack):
    """Cells with at least one incident of any type over the whole stack."""
    return stack.counts[..., CrimeType.ALL_CRIMES].sum(axis=0) >= 1


@dataclass(frozen=True)
class TrainTestSplit:
    train_end: int  # exclusive day index; no training horizon reaches past it
    train_anchors: tuple
    test_anchors: tuple


def split_train_test(stack, train_years=3, test_years=1, input_days=MONTH, horizon_days=MONTH, stride_days=1):
    """Chronological split: training anchors inside the first ``train_years``,
    then ``12 * test_years`` test anchors 30 days apart."""
    train_end = train_years * YEAR
    n_test = 12 * test_years
    if stack.days < (train_years + test_years) * YEAR or train_end + n_test * horizon_days > stack.days:
        raise DataError(
            f"stack covers {stack.days} days; the split needs {(train_years + test_years) * YEAR}"
        )
    if train_end < input_days + horizon_days:
        raise DataError("training window too short for one sample")
    train = tuple(range(input_days, train_end - horizon_days + 1, stride_days))
    test = tuple(train_end + k * horizon_days for k in range(n_test))
    return TrainTestSplit(train_end, train, test)


def samples_at(stack, anchors, target_type, input_days=MONTH, horizon_days=MONTH):
    return [make_sample(stack, a, target_type, input_days, horizon_days) for a in anchors]


def concentration(stack, area_fraction=0.05):
    """Share of all events falling in the busiest ``area_fraction`` of cells."""
    totals = np.sort(stack.counts[..., CrimeType.ALL_CRIMES].sum(axis=0).ravel())[::-1]
    n = max(1, int(np.floor(area_fraction * totals.size)))
    return float(totals[:n].sum() / max(totals.sum(), 1))


__all__ = [
    "CONCRETE_TYPES", "DEFAULT_RESOLUTIONS", "GridSpec", "IncidentMapStack", "MONTH", "Sample",
    "TrainTestSplit", "YEAR", "aggregate", "assign_cell", "build_samples", "cell_indices",
    "concentration", "make_sample", "samples_at", "split_train_test", "study_area",
]
