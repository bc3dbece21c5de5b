"""Time-to-maturity grids and tenor-label parsing."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BucketGrid", "parse_tenor_label", "format_tenor_label"]

_LABEL_RE = re.compile(r"(\d+)\s*([dmwy])")

_UNIT_YEARS = {"d": 1.0 / 365.0, "w": 7.0 / 365.0, "m": 1.0 / 12.0, "y": 1.0}


def parse_tenor_label(label: str) -> float:
    """Convert a tenor label such as '1m', '30y' or '1y 6m' to a year fraction.

    Months map to n/12, years to whole years, days to n/365.
    """
    s = label.strip().lower()
    parts = _LABEL_RE.findall(s)
    if not parts or _LABEL_RE.sub("", s).strip():
        raise ValueError(f"unknown tenor label: {label!r}")
    return sum(int(n) * _UNIT_YEARS[u] for n, u in parts)


def format_tenor_label(years: float) -> str:
    """Best-effort inverse of :func:`parse_tenor_label` (used for output labels)."""
    months = years * 12.0
    if abs(months - round(months)) < 1e-9:
        m = int(round(months))
        if m % 12 == 0:
            return f"{m // 12}y"
        if m < 12:
            return f"{m}m"
        return f"{m // 12}y {m % 12}m"
    days = years * 365.0
    if abs(days - round(days)) < 1e-6:
        return f"{int(round(days))}d"
    return f"{years:.6g}y"


@dataclass(frozen=True)
class BucketGrid:
    """Strictly increasing vector of time-to-maturity buckets, in year fractions.

    All buckets are strictly positive and at least three are required so the
    cubic-spline operators are well defined.
    """

    s: np.ndarray
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", s)
        if s.ndim != 1 or s.size < 3:
            raise ValueError(f"grid needs at least 3 buckets, got {s.size}")
        if s[0] <= 0.0:
            raise ValueError("all buckets must be strictly positive")
        if np.any(np.diff(s) <= 0.0):
            raise ValueError("buckets must be strictly increasing")
        if self.labels is not None and len(self.labels) != s.size:
            raise ValueError("labels length must match grid length")

    @classmethod
    def from_labels(cls, labels: list[str] | tuple[str, ...]) -> "BucketGrid":
        return cls(np.array([parse_tenor_label(x) for x in labels]), tuple(labels))

    def __len__(self) -> int:
        return int(self.s.size)

    def bucket_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(format_tenor_label(x) for x in self.s)

    def index_of(self, values: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Indices of `values` inside this grid; raises if any is absent."""
        idx = np.searchsorted(self.s, values)
        idx = np.clip(idx, 0, len(self) - 1)
        # searchsorted may land one to the right of the nearest node
        left = np.clip(idx - 1, 0, len(self) - 1)
        idx = np.where(
            np.abs(self.s[left] - values) < np.abs(self.s[idx] - values), left, idx
        )
        bad = np.abs(self.s[idx] - values) > tol
        if np.any(bad):
            missing = np.asarray(values)[bad]
            raise ValueError(f"buckets not present in grid: {missing}")
        return idx
