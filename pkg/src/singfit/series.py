"""Annual economic time series and the exact transforms between
inflation rate, accumulated CPI, log-CPI and growth-rate index (GRI).

Conventions
-----------
* Inflation is stored in percent and converted to a fraction only inside
  the transforms.
* A GRI value ``r_k = ln(P_{k+1} / P_k)`` is labelled with the END year of
  its interval, so ``cpi_to_gri`` drops the first year.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ArgumentError, DomainError, RangeError

__all__ = [
    "Kind",
    "SeriesMeta",
    "ObservationSeries",
    "inflation_to_cpi",
    "cpi_to_gri",
    "gri_to_cpi",
    "normalize",
    "log_transform",
    "window",
    "read_csv",
    "write_csv",
    "format_csv",
    "bundled_path",
]


class Kind(str, enum.Enum):
    PRICE_INDEX = "price"
    INFLATION_PCT = "inflation"
    LOG_PRICE = "logprice"
    GRI = "gri"


@dataclass(frozen=True)
class SeriesMeta:
    country_label: str = ""
    source_label: str = ""
    normalization_year: int | None = None


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Gap-free annual series ``values[k]`` at ``start_year + k * dt``."""

    start_year: int
    values: np.ndarray
    kind: Kind
    dt: int = 1
    meta: SeriesMeta = field(default_factory=SeriesMeta)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.dt <= 0:
            raise ArgumentError(f"dt must be positive, got {self.dt}")
        # A GRI series may be empty (rates of a one-point price series).
        if vals.size == 0 and self.kind is not Kind.GRI:
            raise ArgumentError("series must contain at least one value")
        if not np.all(np.isfinite(vals)):
            raise DomainError("series values must be finite")
        if self.kind is Kind.PRICE_INDEX and np.any(vals <= 0):
            raise DomainError("price index values must be positive")
        if self.kind is Kind.INFLATION_PCT and np.any(vals <= -100):
            raise DomainError("inflation must exceed -100%")
        ny = self.meta.normalization_year
        if ny is not None and vals.size and not (self.start_year <= ny <= self.end_year):
            raise ArgumentError(f"normalization year {ny} outside series range")

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationSeries):
            return NotImplemented
        return (
            self.start_year == other.start_year
            and self.dt == other.dt
            and self.kind is other.kind
            and self.meta == other.meta
            and np.array_equal(self.values, other.values)
        )

    @property
    def years(self) -> np.ndarray:
        return self.start_year + self.dt * np.arange(self.values.size)

    @property
    def end_year(self) -> int:
        return self.start_year + self.dt * (self.values.size - 1)

    def index_of(self, year: int) -> int:
        k, rem = divmod(year - self.start_year, self.dt)
        if rem or not 0 <= k < self.values.size:
            raise ArgumentError(
                f"year {year} not in series {self.start_year}..{self.end_year}"
            )
        return k

    def value_at(self, year: int) -> float:
        return float(self.values[self.index_of(year)])


def _require(s: ObservationSeries, *kinds: Kind) -> None:
    if s.kind not in kinds:
        names = ", ".join(k.value for k in kinds)
        raise ArgumentError(f"expected series of kind {names}, got {s.kind.value}")


def inflation_to_cpi(s: ObservationSeries, base: float = 1.0) -> ObservationSeries:
    """Accumulate percent inflation into a price index.

    ``P(t) = P(t - dt) * (1 + i(t) / 100)`` starting from ``base`` at the
    year before the first inflation value, so the result has one more point.
    """
    _require(s, Kind.INFLATION_PCT)
    if not base > 0:
        raise DomainError(f"base price must be positive, got {base}")
    factors = 1.0 + s.values / 100.0
    if np.any(factors <= 0):
        raise DomainError("inflation <= -100% yields a non-positive price")
    prices = base * np.concatenate(([1.0], np.cumprod(factors)))
    if not np.all(np.isfinite(prices)):
        raise RangeError("accumulated price overflowed")
    return ObservationSeries(s.start_year - s.dt, prices, Kind.PRICE_INDEX, s.dt, s.meta)


def cpi_to_gri(s: ObservationSeries) -> ObservationSeries:
    _require(s, Kind.PRICE_INDEX)
    if len(s) < 2:
        raise ArgumentError("need at least two prices to form a growth rate")
    rates = np.diff(np.log(s.values))
    meta = replace(s.meta, normalization_year=None)
    return ObservationSeries(s.start_year + s.dt, rates, Kind.GRI, s.dt, meta)


def gri_to_cpi(r: ObservationSeries, p_base: float = 1.0) -> ObservationSeries:
    """Inverse of :func:`cpi_to_gri`; ``p_base`` is the price one period
    before the first rate's label year."""
    _require(r, Kind.GRI)
    if not p_base > 0:
        raise DomainError(f"base price must be positive, got {p_base}")
    growth = np.concatenate(([0.0], np.cumsum(r.values)))
    with np.errstate(over="ignore", invalid="ignore"):
        prices = p_base * np.exp(growth)
    if not np.all(np.isfinite(prices)) or np.any(prices == 0):
        raise RangeError("accumulated price not representable")
    meta = replace(r.meta, normalization_year=None)
    return ObservationSeries(r.start_year - r.dt, prices, Kind.PRICE_INDEX, r.dt, meta)


def normalize(s: ObservationSeries, year: int) -> ObservationSeries:
    _require(s, Kind.PRICE_INDEX)
    k = s.index_of(year)
    vals = s.values / s.values[k]
    vals[k] = 1.0
    return ObservationSeries(
        s.start_year, vals, s.kind, s.dt, replace(s.meta, normalization_year=year)
    )


def log_transform(s: ObservationSeries) -> ObservationSeries:
    _require(s, Kind.PRICE_INDEX)
    return ObservationSeries(s.start_year, np.log(s.values), Kind.LOG_PRICE, s.dt, s.meta)


def window(s: ObservationSeries, from_year: int, to_year: int) -> ObservationSeries:
    """Inclusive slice ``[from_year, to_year]``; metadata is kept."""
    if from_year > to_year:
        raise ArgumentError(f"empty window {from_year}..{to_year}")
    lo = s.index_of(from_year)
    hi = s.index_of(to_year)
    meta = s.meta
    ny = meta.normalization_year
    if ny is not None and not from_year <= ny <= to_year:
        meta = replace(meta, normalization_year=None)
    return ObservationSeries(from_year, s.values[lo : hi + 1], s.kind, s.dt, meta)


# --- CSV -------------------------------------------------------------------


def _parse_rows(lines: Iterable[str], source: str) -> tuple[list[int], list[float]]:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DomainError(f"{source}: empty file, header 'year,value' required") from None
    if [h.strip().lower() for h in header[:2]] != ["year", "value"] or len(header) != 2:
        raise DomainError(f"{source}:1: expected header 'year,value', got {header!r}")
    years: list[int] = []
    values: list[float] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DomainError(f"{source}:{line}: expected 2 columns, got {len(row)}")
        try:
            years.append(int(row[0].strip()))
        except ValueError:
            raise DomainError(f"{source}:{line}: bad year {row[0]!r}") from None
        try:
            v = float(row[1].strip())
        except ValueError:
            raise DomainError(f"{source}:{line}: bad value {row[1]!r}") from None
        if not math.isfinite(v):
            raise DomainError(f"{source}:{line}: non-finite value {row[1]!r}")
        values.append(v)
        if len(years) > 1 and years[-1] != years[-2] + 1:
            raise DomainError(
                f"{source}:{line}: year {years[-1]} does not follow {years[-2]} "
                "(gaps and unsorted rows are rejected)"
            )
    if not years:
        raise DomainError(f"{source}: no data rows")
    return years, values


def read_csv(
    path: str | Path,
    kind: Kind | str,
    meta: SeriesMeta | None = None,
) -> ObservationSeries:
    """Read a ``year,value`` CSV into a series of the given kind."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        years, values = _parse_rows(fh, str(path))
    kind = Kind(kind)
    try:
        return ObservationSeries(years[0], values, kind, 1, meta or SeriesMeta())
    except DomainError as exc:
        # locate the first offending row for the error message
        for k, v in enumerate(values):
            bad = (kind is Kind.PRICE_INDEX and v <= 0) or (
                kind is Kind.INFLATION_PCT and v <= -100
            )
            if bad:
                raise DomainError(f"{path}:{k + 2}: {exc}") from None
        raise


def format_csv(s: ObservationSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["year", "value"])
    for y, v in zip(s.years, s.values):
        w.writerow([int(y), repr(float(v))])
    return buf.getvalue()


def write_csv(s: ObservationSeries, path: str | Path) -> None:
    Path(path).write_text(format_csv(s), encoding="utf-8")


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package (e.g. ``nicaragua_imf2.csv``)."""
    return Path(__file__).with_name("data") / name
