"""Balanced unit-by-time outcome panels with one treated unit."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyDonorPool,
    InvalidPanel,
    MissingCell,
    NonNumericOutcome,
    T0OutOfRange,
    UnbalancedPanel,
    UnknownUnit,
)


@dataclass(frozen=True, eq=False)
class Panel:
    """Complete outcome matrix (rows = units, cols = periods).

    ``t0_index`` is the column of the first treated period, so the pre-period
    block has exactly ``t0_index`` columns.
    """

    units: tuple[str, ...]
    times: tuple[int, ...]
    outcomes: np.ndarray
    treated: str
    t0_index: int
    outcome_name: str = "outcome"
    _row: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        units = tuple(str(u) for u in self.units)
        times = tuple(int(t) for t in self.times)
        y = np.array(self.outcomes, dtype=float, copy=True)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "times", times)

        if len(set(units)) != len(units):
            raise InvalidPanel("duplicate unit identifiers")
        if y.shape != (len(units), len(times)):
            raise InvalidPanel(f"outcomes shape {y.shape} != ({len(units)}, {len(times)})")
        if any(b - a != 1 for a, b in zip(times, times[1:])):
            raise InvalidPanel("times must be strictly increasing with unit step")
        if not np.all(np.isfinite(y)):
            raise InvalidPanel("outcomes contain non-finite values")
        if np.any(y < 0):
            raise InvalidPanel("outcomes must be non-negative")
        if self.treated not in units:
            raise UnknownUnit(self.treated)
        if len(units) < 2:
            raise EmptyDonorPool("panel needs at least one donor")
        if not 2 <= self.t0_index <= len(times) - 1:
            raise T0OutOfRange(
                f"t0_index {self.t0_index} leaves fewer than 2 pre-periods or no post-period"
            )
        y.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "_row", {u: i for i, u in enumerate(units)})

    # -- shape helpers -------------------------------------------------------

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> int:
        """Calendar period of the first treated column."""
        return self.times[self.t0_index]

    @property
    def treated_index(self) -> int:
        return self._row[self.treated]

    @property
    def donors(self) -> tuple[str, ...]:
        return tuple(u for u in self.units if u != self.treated)

    @property
    def n_donors(self) -> int:
        return len(self.units) - 1

    @property
    def y_treated(self) -> np.ndarray:
        return self.outcomes[self.treated_index]

    @property
    def y_donors(self) -> np.ndarray:
        """T x J matrix of donor outcomes, columns in donor order."""
        rows = [self._row[u] for u in self.donors]
        return self.outcomes[rows].T

    def series(self, unit: str) -> np.ndarray:
        try:
            return self.outcomes[self._row[unit]]
        except KeyError:
            raise UnknownUnit(unit) from None

    def index_of_time(self, period: int) -> int:
        try:
            return self.times.index(int(period))
        except ValueError:
            raise T0OutOfRange(f"period {period} not in panel times") from None

    # -- derived panels ------------------------------------------------------

    def replace(self, **changes) -> "Panel":
        kw = dict(
            units=self.units,
            times=self.times,
            outcomes=self.outcomes,
            treated=self.treated,
            t0_index=self.t0_index,
            outcome_name=self.outcome_name,
        )
        kw.update(changes)
        return Panel(**kw)

    def subset_units(self, keep: Iterable[str], treated: str | None = None) -> "Panel":
        keep = list(keep)
        for u in keep:
            if u not in self._row:
                raise UnknownUnit(u)
        rows = [self._row[u] for u in keep]
        return self.replace(
            units=tuple(keep), outcomes=self.outcomes[rows], treated=treated or self.treated
        )

    def as_treated(self, unit: str, exclude: Sequence[str] = ()) -> "Panel":
        """Reassign treatment to ``unit``, dropping ``exclude`` from the pool."""
        if unit not in self._row:
            raise UnknownUnit(unit)
        keep = [u for u in self.units if u not in exclude or u == unit]
        return self.subset_units(keep, treated=unit)

    def truncate(self, n_times: int, t0_index: int | None = None) -> "Panel":
        """Keep the first ``n_times`` periods, optionally moving the intervention."""
        return self.replace(
            times=self.times[:n_times],
            outcomes=self.outcomes[:, :n_times],
            t0_index=self.t0_index if t0_index is None else t0_index,
        )

    def scaled(self, factor: float) -> "Panel":
        return self.replace(outcomes=self.outcomes * factor)


def restrict_donors(panel: Panel, keep: Sequence[str]) -> Panel:
    """Panel with the treated unit plus the listed donors, in ``keep`` order."""
    keep = list(keep)
    if not keep:
        raise EmptyDonorPool("donor keep-list is empty")
    for u in keep:
        if u not in panel.units or u == panel.treated:
            raise UnknownUnit(u)
    if len(set(keep)) != len(keep):
        raise InvalidPanel("duplicate units in donor keep-list")
    order = [u for u in panel.units if u == panel.treated or u in set(keep)]
    return panel.subset_units(order)


def split_pre_post(panel: Panel) -> tuple[np.ndarray, np.ndarray]:
    y = panel.outcomes
    return y[:, : panel.t0_index], y[:, panel.t0_index :]


# -- CSV I/O ------------------------------------------------------------------


def read_long_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise InvalidPanel(f"cannot read {path}: {exc.strerror}") from None
    if len(header) < 3 or header[0] != "unit" or header[1] != "time":
        raise InvalidPanel(f"expected header 'unit,time,<outcome>...', got {header}")
    return header, rows


def load_csv(path: str | Path, outcome: str, treated: str, t0: int) -> Panel:
    """Read a long-format CSV and select one outcome column.

    Unit order is first-appearance order. Every unit must cover the same
    contiguous range of periods exactly once.
    """
    header, rows = read_long_csv(path)
    if outcome not in header[2:]:
        raise InvalidPanel(f"outcome column {outcome!r} not in {header[2:]}")

    cells: dict[tuple[str, int], float] = {}
    units: list[str] = []
    seen: set[str] = set()
    for lineno, row in enumerate(rows, start=2):
        unit = row["unit"]
        try:
            time = int(row["time"])
        except (TypeError, ValueError):
            raise InvalidPanel(f"row {lineno}: time {row['time']!r} is not an integer") from None
        raw = row.get(outcome)
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise NonNumericOutcome(lineno, raw) from None
        if not math.isfinite(value):
            raise NonNumericOutcome(lineno, raw)
        if (unit, time) in cells:
            raise UnbalancedPanel(f"row {lineno}: duplicate observation ({unit}, {time})")
        if unit not in seen:
            seen.add(unit)
            units.append(unit)
        cells[(unit, time)] = value

    if not units:
        raise InvalidPanel("no data rows")
    all_times = sorted({t for _, t in cells})
    times = list(range(all_times[0], all_times[-1] + 1))
    per_unit: dict[str, list[int]] = {u: [] for u in units}
    for u, t in cells:
        per_unit[u].append(t)
    # a period observed for some but not all units is a hole somewhere
    for u in units:
        if sorted(per_unit[u]) != times:
            missing = sorted(set(times) - set(per_unit[u]))
            raise MissingCell(u, missing[0])

    if treated not in units:
        raise UnknownUnit(treated)
    if int(t0) not in times:
        raise T0OutOfRange(f"t0 {t0} outside observed periods {times[0]}..{times[-1]}")
    y = np.array([[cells[(u, t)] for t in times] for u in units])
    return Panel(units, times, y, treated, times.index(int(t0)), outcome_name=outcome)


def write_csv(panel: Panel, path: str | Path, outcome: str | None = None) -> None:
    """Write ``panel`` in long format; floats use shortest round-trip repr."""
    name = outcome or panel.outcome_name
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "time", name])
        for i, u in enumerate(panel.units):
            for j, t in enumerate(panel.times):
                w.writerow([u, t, repr(float(panel.outcomes[i, j]))])


def load_column(path: str | Path, column: str, unit: str) -> dict[int, float]:
    """Per-period values of ``column`` for one unit (e.g. live births)."""
    header, rows = read_long_csv(path)
    if column not in header:
        raise InvalidPanel(f"column {column!r} not in CSV")
    out = {}
    for lineno, row in enumerate(rows, start=2):
        if row["unit"] != unit:
            continue
        try:
            out[int(row["time"])] = float(row[column])
        except (TypeError, ValueError):
            raise NonNumericOutcome(lineno, row[column]) from None
    return out
