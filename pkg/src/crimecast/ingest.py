"""Incident records: CSV parsing, category homogenisation and a synthetic generator."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or unusable input data."""


class CrimeType(enum.IntEnum):
    """Canonical crime categories; the value is the channel index."""

    HOMICIDE = 0
    ROBBERY = 1
    ARSON = 2
    VICE = 3
    MOTOR_VEHICLE = 4
    NARCOTICS = 5
    ASSAULT = 6
    THEFT = 7
    BURGLARY = 8
    OTHER = 9
    ALL_CRIMES = 10

    @property
    def label(self):
        return _LABELS[self]

    @classmethod
    def parse(cls, text):
        key = _normalise(text).replace(" ", "").replace("_", "")
        for member in cls:
            if key in (member.name.replace("_", "").lower(), member.label.replace(" ", "").lower()):
                return member
        raise KeyError(f"unknown crime type {text!r}")


_LABELS = {
    CrimeType.HOMICIDE: "Homicide",
    CrimeType.ROBBERY: "Robbery",
    CrimeType.ARSON: "Arson",
    CrimeType.VICE: "Vice",
    CrimeType.MOTOR_VEHICLE: "MotorVehicle",
    CrimeType.NARCOTICS: "Narcotics",
    CrimeType.ASSAULT: "Assault",
    CrimeType.THEFT: "Theft",
    CrimeType.BURGLARY: "Burglary",
    CrimeType.OTHER: "Other",
    CrimeType.ALL_CRIMES: "AllCrimes",
}

CONCRETE_TYPES = tuple(t for t in CrimeType if t is not CrimeType.ALL_CRIMES)
N_CHANNELS = len(CrimeType)


def _normalise(label):
    return " ".join(str(label).split()).casefold()


@dataclass(frozen=True, order=True)
class Incident:
    timestamp: dt.datetime
    lat: float
    lon: float
    crime_type: CrimeType

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise DataError(f"coordinates out of range: lat={self.lat}, lon={self.lon}")
        if self.crime_type is CrimeType.ALL_CRIMES:
            raise DataError("AllCrimes is an aggregate channel, not an incident type")


@dataclass
class Taxonomy:
    """Raw source label -> canonical type. Lookup trims and case-folds."""

    mapping: dict = field(default_factory=dict)
    default: CrimeType = CrimeType.OTHER

    def __post_init__(self):
        self.mapping = {_normalise(k): CrimeType(v) for k, v in self.mapping.items()}

    @classmethod
    def identity(cls):
        return cls({t.label: t for t in CONCRETE_TYPES} | {t.name: t for t in CONCRETE_TYPES})

    @classmethod
    def from_text(cls, text):
        """Parse ``raw_label = CanonicalType`` lines; ``#`` starts a comment."""
        mapping = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"taxonomy line {lineno}: expected 'raw_label = CanonicalType'")
            raw, canon = (part.strip() for part in line.rsplit("=", 1))
            try:
                mapping[raw] = CrimeType.parse(canon)
            except KeyError as exc:
                raise DataError(f"taxonomy line {lineno}: {exc.args[0]}") from None
        return cls(mapping)

    @classmethod
    def load(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def __call__(self, raw_label):
        return homogenize(raw_label, self)


def homogenize(raw_label, taxonomy):
    return taxonomy.mapping.get(_normalise(raw_label), taxonomy.default)


@dataclass(frozen=True)
class ColumnSpec:
    timestamp: str = "timestamp"
    lat: str = "lat"
    lon: str = "lon"
    category: str = "category"
    time_format: str | None = None  # strftime fallback when ISO-8601 parsing fails


@dataclass
class IngestReport:
    rows: int = 0
    kept: int = 0
    dropped: int = 0
    label_counts: Counter = field(default_factory=Counter)
    mapped: dict = field(default_factory=dict)

    @property
    def distinct_labels(self):
        return len(self.label_counts)


def _parse_time(text, fmt):
    text = text.strip()
    try:
        ts = dt.datetime.fromisoformat(text)
    except ValueError:
        if fmt is None:
            raise
        ts = dt.datetime.strptime(text, fmt)
    return ts.replace(tzinfo=None)


def parse_incidents(source, columns=ColumnSpec(), taxonomy=None):
    """Read incidents from a CSV path, file object or string buffer.

    Rows with unparseable timestamps or coordinates are dropped and counted.
    Returns ``(incidents sorted by time, IngestReport)``.
    """
    taxonomy = taxonomy or Taxonomy.identity()
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_incidents(fh, columns, taxonomy)
    reader = csv.DictReader(source)
    if not reader.fieldnames:
        raise DataError("empty CSV file (no header row)")
    missing = [c for c in (columns.timestamp, columns.lat, columns.lon, columns.category)
               if c not in reader.fieldnames]
    if missing:
        raise DataError(f"CSV is missing column(s) {missing}; found {reader.fieldnames}")
    report = IngestReport()
    incidents = []
    for row in reader:
        report.rows += 1
        try:
            ts = _parse_time(row[columns.timestamp], columns.time_format)
            lat = float(row[columns.lat])
            lon = float(row[columns.lon])
            if not (math.isfinite(lat) and math.isfinite(lon)):
                raise ValueError("non-finite coordinate")
            raw = row[columns.category]
            incident = Incident(ts, lat, lon, homogenize(raw, taxonomy))
        except (ValueError, TypeError, KeyError):
            report.dropped += 1
            continue
        label = _normalise(raw)
        report.label_counts[label] += 1
        report.mapped[label] = incident.crime_type
        incidents.append(incident)
    if report.rows == 0:
        raise DataError("CSV file has a header but no rows")
    report.kept = len(incidents)
    if report.dropped:
        log.info("dropped %d of %d rows with unparseable fields", report.dropped, report.rows)
    incidents.sort(key=lambda inc: inc.timestamp)
    return incidents, report


CSV_HEADER = ("timestamp", "lat", "lon", "category")


def write_incidents(incidents, target):
    """Write incidents in the canonical ``timestamp,lat,lon,category`` schema."""
    if isinstance(target, (str, Path)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            return write_incidents(incidents, fh)
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for inc in incidents:
        writer.writerow([inc.timestamp.isoformat(), repr(inc.lat), repr(inc.lon), inc.crime_type.label])


def incidents_to_csv(incidents):
    buf = io.StringIO()
    write_incidents(incidents, buf)
    return buf.getvalue()


# --- synthetic streams -------------------------------------------------------

@dataclass
class Cluster:
    lon: float
    lat: float
    spread: float  # std-dev in degrees
    intensity: float  # mean events per day before modulation
    type_weights: tuple  # over CONCRETE_TYPES


@dataclass
class SynthConfig:
    """Seeded generator settings.

    Each cluster emits ``Poisson(intensity * weekly * boost)`` events per day,
    where ``weekly = 1 + amplitude * sin(2*pi*(weekday - phase)/7)`` and
    ``boost = 1 + excitation * load``. ``load`` is the exponentially decayed
    (``excitation_decay`` days) history of the cluster's own counts, scaled
    so that a steady stream at the base intensity gives ``load ~ boost``;
    the process is therefore stationary for ``excitation < 1``.
    """

    bbox: tuple = (-75.28, -74.96, 39.87, 40.14)  # lon_min, lon_max, lat_min, lat_max
    clusters: list = field(default_factory=list)
    weekly_amplitude: float = 0.0
    weekly_phase: float = 0.0
    excitation: float = 0.0
    excitation_decay: float = 3.0
    background_rate: float = 0.0
    background_weights: tuple = tuple([1.0] * len(CONCRETE_TYPES))
    days: int = 365
    start: dt.date = dt.date(2014, 1, 1)
    seed: int = 0

    def validate(self):
        lon_min, lon_max, lat_min, lat_max = self.bbox
        if not (lon_max > lon_min and lat_max > lat_min):
            raise DataError(f"degenerate bounding box {self.bbox}")
        if self.background_rate < 0 or any(c.intensity < 0 for c in self.clusters):
            raise DataError("rates must be non-negative")
        if not 0 <= self.excitation < 1:
            raise DataError("excitation must lie in [0, 1)")
        if self.excitation_decay <= 0:
            raise DataError("excitation decay must be positive")
        if not 0 <= self.weekly_amplitude <= 1:
            raise DataError("weekly amplitude must lie in [0, 1]")
        if self.days < 1:
            raise DataError("days must be >= 1")


def default_synth_config(seed=7, days=4 * 365):
    """Benchmark stream: six tight clusters with distinct type mixes over a sparse background.

    Cluster centres sit on cell centres of a 16x16 grid over the box. The
    first three clusters are dominated by Theft, Burglary and Assault.
    """
    bbox = (-75.28, -74.96, 39.87, 40.14)
    lon_min, lon_max, lat_min, lat_max = bbox
    cw, ch = (lon_max - lon_min) / 16, (lat_max - lat_min) / 16

    def centre(row, col):
        return lon_min + (col + 0.5) * cw, lat_max - (row + 0.5) * ch

    def mix(**dominant):
        w = [0.2] * len(CONCRETE_TYPES)
        for name, val in dominant.items():
            w[CrimeType[name.upper()]] = val
        return tuple(w)

    spec = [
        ((3, 4), 3.0, mix(theft=6.0)),
        ((11, 10), 2.5, mix(burglary=6.0)),
        ((6, 12), 2.0, mix(assault=6.0)),
        ((12, 3), 1.5, mix(theft=2.0, assault=2.0)),
        ((2, 13), 1.0, mix(robbery=3.0, narcotics=3.0)),
        ((8, 7), 1.0, mix(motor_vehicle=3.0, other=3.0)),
    ]
    clusters = [Cluster(*centre(*rc), spread=0.45 * cw, intensity=lam, type_weights=w) for rc, lam, w in spec]
    return SynthConfig(
        bbox=bbox,
        clusters=clusters,
        weekly_amplitude=0.5,
        excitation=0.5,
        excitation_decay=3.0,
        background_rate=0.4,
        days=days,
        seed=seed,
    )


def generate_synthetic(config):
    config.validate()
    rng = np.random.default_rng(config.seed)
    lon_min, lon_max, lat_min, lat_max = config.bbox
    decay = math.exp(-1.0 / config.excitation_decay)
    norm = decay / (1.0 - decay)  # sum_{k>=1} decay^k
    load = np.zeros(len(config.clusters))
    weights = [np.asarray(c.type_weights, dtype=float) / np.sum(c.type_weights) for c in config.clusters]
    bg_w = np.asarray(config.background_weights, dtype=float)
    bg_w = bg_w / bg_w.sum()
    out = []
    for day in range(config.days):
        date = config.start + dt.timedelta(days=day)
        weekly = 1.0 + config.weekly_amplitude * math.sin(2 * math.pi * (date.weekday() - config.weekly_phase) / 7)
        for k, cl in enumerate(config.clusters):
            if cl.intensity <= 0:
                continue
            boost = 1.0 + config.excitation * load[k]
            n = rng.poisson(cl.intensity * weekly * boost)
            load[k] = decay * load[k] + decay * n / (cl.intensity * norm)
            if n == 0:
                continue
            lons = np.clip(rng.normal(cl.lon, cl.spread, n), lon_min, lon_max)
            lats = np.clip(rng.normal(cl.lat, cl.spread, n), lat_min, lat_max)
            types = rng.choice(len(CONCRETE_TYPES), size=n, p=weights[k])
            secs = rng.integers(0, 86400, size=n)
            out.extend(_emit(date, secs, lats, lons, types))
        if config.background_rate > 0:
            n = rng.poisson(config.background_rate)
            if n:
                lons = rng.uniform(lon_min, lon_max, n)
                lats = rng.uniform(lat_min, lat_max, n)
                types = rng.choice(len(CONCRETE_TYPES), size=n, p=bg_w)
                secs = rng.integers(0, 86400, size=n)
                out.extend(_emit(date, secs, lats, lons, types))
    out.sort(key=lambda inc: inc.timestamp)
    return out


def _emit(date, secs, lats, lons, types):
    base = dt.datetime.combine(date, dt.time())
    return [
        Incident(base + dt.timedelta(seconds=int(s)), float(la), float(lo), CONCRETE_TYPES[int(t)])
        for s, la, lo, t in zip(secs, lats, lons, types)
    ]
