"""Bundled relaxation measurements and their CSV round trip.

Small reference tables of T1 and T2 versus temperature for the two centers,
used to exercise the fit models end to end. Files use the schema
``temperature_K,value_s,error_s`` (error optional on load, 0 when absent)
with ``#`` comment lines preserved as dataset metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

CENTERS = ("NV", "N")
QUANTITIES = ("T1", "T2")

_HEADER = "temperature_K,value_s,error_s"


class DatasetFormatError(ValueError):
    """A dataset file violates the expected schema."""


@dataclass(frozen=True)
class RelaxationRow:
    """One measured point; times in seconds, error 0 when unknown."""

    temperature_k: float
    value_s: float
    error_s: float = 0.0
    source: str = ""

    def __post_init__(self) -> None:
        if self.temperature_k <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature_k}")
        if self.value_s <= 0:
            raise ValueError(f"relaxation time must be positive, got {self.value_s}")
        if self.error_s < 0:
            raise ValueError(f"error must be non-negative, got {self.error_s}")


@dataclass(frozen=True)
class RelaxationDataset:
    center: str
    quantity: str
    rows: tuple[RelaxationRow, ...]
    comments: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.center not in CENTERS:
            raise ValueError(f"center must be one of {CENTERS}, got {self.center!r}")
        if self.quantity not in QUANTITIES:
            raise ValueError(
                f"quantity must be one of {QUANTITIES}, got {self.quantity!r}"
            )
        if not self.rows:
            raise ValueError("dataset has no rows")

    def temperatures(self) -> list[float]:
        return [r.temperature_k for r in self.rows]

    def values(self) -> list[float]:
        return [r.value_s for r in self.rows]

    def errors(self) -> list[float]:
        return [r.error_s for r in self.rows]


# The 250 us T2 point is a saturation estimate; it carries an assigned 10%
# error rather than a measured one.
_BUNDLED: dict[tuple[str, str], tuple[RelaxationRow, ...]] = {
    ("NV", "T2"): (
        RelaxationRow(300.0, 6.7e-6, 0.2e-6, "echo decay, room temperature"),
        RelaxationRow(20.0, 8.3e-6, 0.7e-6, "echo decay, 20 K"),
        RelaxationRow(1.7, 250e-6, 25e-6, "saturation estimate, 10% assigned"),
    ),
    ("NV", "T1"): (
        RelaxationRow(300.0, 7.7e-3, 0.4e-3, "inversion recovery, room temperature"),
        RelaxationRow(40.0, 3.8, 0.5, "inversion recovery, 40 K"),
    ),
    ("N", "T2"): (
        RelaxationRow(300.0, 5.455e-6, 0.005e-6, "echo decay, room temperature"),
        RelaxationRow(20.0, 5.83e-6, 0.04e-6, "echo decay, 20 K"),
        RelaxationRow(2.5, 80e-6, 9e-6, "echo decay, 2.5 K"),
    ),
    ("N", "T1"): (
        RelaxationRow(300.0, 1.4e-3, 0.01e-3, "inversion recovery, room temperature"),
        RelaxationRow(40.0, 8.3, 4.7, "inversion recovery, 40 K"),
    ),
}


def bundled(center: str, quantity: str) -> RelaxationDataset:
    """The packaged measurement table for one (center, quantity) pair."""
    key = (center, quantity)
    if key not in _BUNDLED:
        raise KeyError(
            f"no bundled dataset for {key}; available: {sorted(_BUNDLED)}"
        )
    return RelaxationDataset(
        center=center,
        quantity=quantity,
        rows=_BUNDLED[key],
        comments=(f"bundled {center} {quantity} reference points",),
    )


def save_csv(dataset: RelaxationDataset, path) -> None:
    """Write the schema header, preserved comments, and one row per point."""
    with open(path, "w", newline="\n") as fh:
        for comment in dataset.comments:
            fh.write(f"# {comment}\n")
        fh.write(_HEADER + "\n")
        for row in dataset.rows:
            fh.write(
                f"{row.temperature_k:.17g},{row.value_s:.17g},{row.error_s:.17g}\n"
            )


def load_csv(path, center: str = "NV", quantity: str = "T2") -> RelaxationDataset:
    """Read a ``temperature_K,value_s,error_s`` file.

    The error column may be omitted (treated as 0). Comment lines are kept.
    Malformed content raises :class:`DatasetFormatError` naming the line.
    """
    comments: list[str] = []
    rows: list[RelaxationRow] = []
    header_seen = False
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                comments.append(line[1:].strip())
                continue
            if not header_seen:
                cols = [c.strip() for c in line.split(",")]
                if cols not in (
                    ["temperature_K", "value_s", "error_s"],
                    ["temperature_K", "value_s"],
                ):
                    raise DatasetFormatError(
                        f"{path}: line {lineno}: expected header {_HEADER!r} "
                        f"(error column optional), got {line!r}"
                    )
                header_seen = True
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) not in (2, 3):
                raise DatasetFormatError(
                    f"{path}: line {lineno}: expected 2 or 3 columns, "
                    f"got {len(parts)}"
                )
            try:
                temperature = float(parts[0])
                value = float(parts[1])
                error = float(parts[2]) if len(parts) == 3 else 0.0
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: non-numeric value in {line!r}"
                ) from None
            try:
                rows.append(RelaxationRow(temperature, value, error))
            except ValueError as exc:
                raise DatasetFormatError(
                    f"{path}: line {lineno}: {exc}"
                ) from None
    if not header_seen:
        raise DatasetFormatError(f"{path}: missing header line {_HEADER!r}")
    if not rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return RelaxationDataset(
        center=center, quantity=quantity, rows=tuple(rows), comments=tuple(comments)
    )


def as_rate_data(
    dataset: RelaxationDataset, per_microsecond: bool = False
) -> tuple[list[float], list[float], list[float]]:
    """(temperatures, rates, rate errors) for fitting the rate models.

    Rates are 1/value with first-order error propagation; ``per_microsecond``
    selects the 1/us unit of the T2 model instead of 1/s.
    """
    unit = 1e-6 if per_microsecond else 1.0
    temps = dataset.temperatures()
    rates = [unit / v for v in dataset.values()]
    errors = [unit * e / (v * v) for v, e in zip(dataset.values(), dataset.errors())]
    return temps, rates, errors
