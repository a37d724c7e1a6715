"""Observed A/B test data: ingestion, validation and per-arm summaries."""

from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

from .errors import BadTreatmentValue, DegenerateArm, MissingColumn, NonFiniteValue
from .numerics import chunked_sum


@dataclass(frozen=True)
class ObservationRecord:
    treatment: int
    mediator: float
    outcome: float
    unit_id: Any = None


@dataclass(frozen=True)
class ColumnMapping:
    treatment: str = "T"
    mediator: str = "M1"
    outcome: str = "Y"
    unit_id: str | None = None


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Immutable columnar table of validated rows.

    Construct through :func:`ingest` or :meth:`from_arrays`; both validate.
    """

    treatment: np.ndarray
    mediator: np.ndarray
    outcome: np.ndarray
    unit_id: tuple | None = None
    n_treated: int = field(init=False)
    n_control: int = field(init=False)

    def __post_init__(self):
        t = np.ascontiguousarray(self.treatment, dtype=float)
        m = np.ascontiguousarray(self.mediator, dtype=float)
        y = np.ascontiguousarray(self.outcome, dtype=float)
        if not (t.ndim == m.ndim == y.ndim == 1 and len(t) == len(m) == len(y)):
            raise ValueError("treatment, mediator and outcome must be 1-d arrays of equal length")
        if not np.all((t == 0.0) | (t == 1.0)):
            bad = t[(t != 0.0) & (t != 1.0)][0]
            raise BadTreatmentValue(f"treatment must be 0 or 1, got {bad!r}")
        for label, arr in (("mediator", m), ("outcome", y)):
            if not np.all(np.isfinite(arr)):
                row = int(np.flatnonzero(~np.isfinite(arr))[0])
                raise NonFiniteValue(f"non-finite {label} in row {row}")
        n_treated = int(np.count_nonzero(t))
        n_control = len(t) - n_treated
        if n_treated < 2 or n_control < 2:
            raise DegenerateArm(
                f"each arm needs at least 2 rows (treated={n_treated}, control={n_control})"
            )
        for arr in (t, m, y):
            arr.flags.writeable = False
        object.__setattr__(self, "treatment", t)
        object.__setattr__(self, "mediator", m)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "n_treated", n_treated)
        object.__setattr__(self, "n_control", n_control)

    @classmethod
    def from_arrays(cls, treatment, mediator, outcome, unit_id=None) -> "ObservationTable":
        return cls(np.asarray(treatment), np.asarray(mediator), np.asarray(outcome), unit_id)

    def __len__(self) -> int:
        return len(self.treatment)

    @property
    def records(self) -> Iterator[ObservationRecord]:
        ids = self.unit_id if self.unit_id is not None else (None,) * len(self)
        for t, m, y, u in zip(self.treatment, self.mediator, self.outcome, ids):
            yield ObservationRecord(int(t), float(m), float(y), u)

    def with_outcome(self, outcome) -> "ObservationTable":
        return ObservationTable(self.treatment, self.mediator, np.asarray(outcome), self.unit_id)


@dataclass(frozen=True)
class ArmSummary:
    arm: str  # "treatment" or "control"
    mean_outcome: float
    mean_mediator: float
    count: int


def _parse_treatment(raw, row: int) -> float:
    if isinstance(raw, str):
        s = raw.strip()
        if s == "0":
            return 0.0
        if s == "1":
            return 1.0
    elif isinstance(raw, (int, np.integer)) and not isinstance(raw, bool) and raw in (0, 1):
        return float(raw)
    raise BadTreatmentValue(f"row {row}: treatment must be '0' or '1', got {raw!r}")


def _parse_real(raw, label: str, row: int) -> float:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        raise NonFiniteValue(f"row {row}: missing {label}")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise NonFiniteValue(f"row {row}: {label} is not a number: {raw!r}")
    if not math.isfinite(value):
        raise NonFiniteValue(f"row {row}: {label} is not finite: {raw!r}")
    return value


def ingest(
    source: Iterable[Mapping[str, Any]],
    mapping: ColumnMapping = ColumnMapping(),
    header: Iterable[str] | None = None,
) -> ObservationTable:
    """Validate a stream of named-column rows into an ObservationTable.

    ``header`` defaults to ``source.fieldnames`` (as on ``csv.DictReader``)
    or, failing that, the keys of the first row.  Row order is preserved.
    Filtering out inactive units is left to the caller.
    """
    rows = iter(source)
    if header is None:
        header = getattr(source, "fieldnames", None)
    first = None
    if header is None:
        first = next(rows, None)
        header = list(first.keys()) if first is not None else []
    header = list(header)
    wanted = [mapping.treatment, mapping.mediator, mapping.outcome]
    if mapping.unit_id is not None:
        wanted.append(mapping.unit_id)
    for col in wanted:
        if col not in header:
            raise MissingColumn(f"column {col!r} not in header {header}")

    if first is not None:
        rows = _chain_one(first, rows)
    t, m, y, ids = [], [], [], []
    for i, row in enumerate(rows):
        t.append(_parse_treatment(row[mapping.treatment], i))
        m.append(_parse_real(row[mapping.mediator], "mediator", i))
        y.append(_parse_real(row[mapping.outcome], "outcome", i))
        if mapping.unit_id is not None:
            ids.append(row[mapping.unit_id])
    return ObservationTable(
        np.array(t, dtype=float),
        np.array(m, dtype=float),
        np.array(y, dtype=float),
        tuple(ids) if mapping.unit_id is not None else None,
    )


def _chain_one(first, rest):
    yield first
    yield from rest


def open_text(path: str | Path) -> io.TextIOBase:
    path = Path(path)
    if path.name.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, "r", encoding="utf-8", newline="")


def read_csv(path: str | Path, mapping: ColumnMapping = ColumnMapping()) -> ObservationTable:
    with open_text(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn(f"{path}: empty file, no header row")
        return ingest(reader, mapping)


def write_csv(table: ObservationTable, path: str | Path, mapping: ColumnMapping = ColumnMapping()) -> None:
    """Write T, M1, Y columns using shortest round-trip float formatting."""
    path = Path(path)
    opener = gzip.open(path, "wt", encoding="utf-8", newline="") if path.name.endswith(".gz") \
        else open(path, "w", encoding="utf-8", newline="")
    with opener as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([mapping.treatment, mapping.mediator, mapping.outcome])
        for t, m, y in zip(table.treatment, table.mediator, table.outcome):
            w.writerow([int(t), repr(float(m)), repr(float(y))])


def summarize(table: ObservationTable, threads: int | None = None) -> tuple[ArmSummary, ArmSummary]:
    """Per-arm means and counts, returned as (control, treatment)."""
    t, m, y = table.treatment, table.mediator, table.outcome

    def partial(lo, hi):
        tt, mm, yy = t[lo:hi], m[lo:hi], y[lo:hi]
        return np.array([
            np.sum(yy * (1 - tt)), np.sum(mm * (1 - tt)),
            np.sum(yy * tt), np.sum(mm * tt),
        ])

    s = chunked_sum(partial, len(table), threads)
    n0, n1 = table.n_control, table.n_treated
    control = ArmSummary("control", s[0] / n0, s[1] / n0, n0)
    treated = ArmSummary("treatment", s[2] / n1, s[3] / n1, n1)
    return control, treated
