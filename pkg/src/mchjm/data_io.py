"""History CSV ingestion, run configuration, and artifact emission.

History files are long-format CSV with columns
``date,curve_id,tenor_label,yield`` (ISO-8601 dates, decimal continuously
compounded yields). Numeric outputs are written with a fixed 12-significant-
digit format so identical runs are byte-identical.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .curves import (
    CurveHistory,
    CurveSnapshot,
    tenor_yields_to_fra,
    yields_to_forwards,
)
from .dynamics import CurveSystem, StateVector
from .grids import BucketGrid, parse_tenor_label

__all__ = [
    "CurveSpec",
    "RunConfig",
    "load_config",
    "dump_resolved_config",
    "load_history",
    "save_history",
    "build_system",
    "histories_to_states",
    "write_matrix_csv",
]

logger = logging.getLogger(__name__)

FLOAT_FMT = "%.12g"

HISTORY_COLUMNS = ["date", "curve_id", "tenor_label", "yield"]


@dataclass(frozen=True)
class CurveSpec:
    """One configured curve: its id, underlying tenor and bucket grid."""

    id: str
    tenor: float  # year fraction; 0 marks the discounting curve
    grid_labels: tuple[str, ...]

    def grid(self) -> BucketGrid:
        return BucketGrid.from_labels(list(self.grid_labels))


@dataclass
class RunConfig:
    """Resolved run configuration with the study-design defaults filled in."""

    curves: list[CurveSpec] = field(default_factory=list)
    input: str = "history.csv"
    output_dir: str = "out"
    dt: float = 1.0 / 52.0
    sampling_stride: int = 1  # rows of the input file per model step
    window_length: int = 156
    window_stride: int = 1
    K_s: int = 2
    pca_threshold: float = 0.95
    horizons: tuple[int, ...] = (1, 12, 52)
    coverage: tuple[float, ...] = (0.95, 0.99)
    methods: tuple[str, ...] = ("gaussian-closed-form", "bootstrap")
    n_paths: int = 10_000
    n_boot: int = 500
    gamma_tol: float = 1e-4
    max_iters: int = 200
    drift_mode: str = "exact-recursion"
    seed: int = 0

    def __post_init__(self) -> None:
        self.horizons = tuple(int(h) for h in self.horizons)
        self.coverage = tuple(float(p) for p in self.coverage)
        self.methods = tuple(self.methods)
        if not self.curves:
            raise ValueError("config must define at least one curve")
        n_disc = sum(1 for c in self.curves if c.tenor == 0.0)
        if n_disc != 1 or self.curves[0].tenor != 0.0:
            raise ValueError(
                "exactly one discounting curve (tenor 0) is required, listed first"
            )
        ids = [c.id for c in self.curves]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate curve ids in config")

    @property
    def curve_ids(self) -> list[str]:
        return [c.id for c in self.curves]


def _parse_curve(entry: dict) -> CurveSpec:
    try:
        cid = str(entry["id"])
        grid = tuple(str(x) for x in entry["grid"])
    except KeyError as exc:
        raise ValueError(f"curve entry missing key {exc}") from exc
    tenor_raw = entry.get("tenor", 0)
    tenor = (
        parse_tenor_label(tenor_raw)
        if isinstance(tenor_raw, str) and tenor_raw not in ("0",)
        else float(tenor_raw)
    )
    return CurveSpec(id=cid, tenor=tenor, grid_labels=grid)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse a YAML config file; unknown keys warn, overrides win over file."""
    raw = yaml.safe_load(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} is not a mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in dataclasses.fields(RunConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            logger.warning("ignoring unknown config key %r", key)
            continue
        if key == "curves":
            value = [_parse_curve(e) for e in value]
        kwargs[key] = value
    return RunConfig(**kwargs)


def dump_resolved_config(config: RunConfig, path: str | Path) -> None:
    """Echo every field actually used, defaults included."""
    doc = dataclasses.asdict(config)
    doc["curves"] = [
        {"id": c.id, "tenor": c.tenor, "grid": list(c.grid_labels)}
        for c in config.curves
    ]
    for key in ("horizons", "coverage", "methods"):
        doc[key] = list(doc[key])
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=True))


def load_history(path: str | Path, config: RunConfig) -> dict[str, CurveHistory]:
    """Read the long-format yield history into one CurveHistory per curve.

    Every (date, bucket) cell must be present for every configured curve;
    gaps and duplicates are reported with the offending date and bucket.
    """
    df = pd.read_csv(path, dtype={"curve_id": str, "tenor_label": str})
    missing_cols = [c for c in HISTORY_COLUMNS if c not in df.columns]
    if missing_cols:
        raise ValueError(f"history file lacks columns {missing_cols}")
    df["date"] = pd.to_datetime(df["date"], format="ISO8601").dt.date

    out: dict[str, CurveHistory] = {}
    for spec in config.curves:
        sub = df[df["curve_id"] == spec.id]
        if sub.empty:
            raise ValueError(f"no rows for curve {spec.id!r} in {path}")
        grid = spec.grid()
        labels = list(spec.grid_labels)
        unknown = set(sub["tenor_label"]) - set(labels)
        if unknown:
            raise ValueError(
                f"curve {spec.id!r} has unknown tenor labels {sorted(unknown)}"
            )
        dup = sub.duplicated(["date", "tenor_label"])
        if dup.any():
            first = sub[dup].iloc[0]
            raise ValueError(
                f"duplicate cell for curve {spec.id!r}: "
                f"date {first['date']}, bucket {first['tenor_label']}"
            )
        pivot = sub.pivot(index="date", columns="tenor_label", values="yield")
        gaps = pivot.isna()
        if gaps.any().any():
            d = pivot.index[gaps.any(axis=1)][0]
            b = gaps.columns[gaps.loc[d]][0]
            raise ValueError(
                f"missing cell for curve {spec.id!r}: date {d}, bucket {b}"
            )
        missing_buckets = [lbl for lbl in labels if lbl not in pivot.columns]
        if missing_buckets:
            raise ValueError(
                f"curve {spec.id!r} has no rows for buckets {missing_buckets}"
            )
        pivot = pivot[labels].sort_index()
        snaps = tuple(
            CurveSnapshot(date=d, grid=grid, values=row.to_numpy(dtype=float))
            for d, row in pivot.iterrows()
        )
        out[spec.id] = CurveHistory(curve_id=spec.id, tenor=spec.tenor, snapshots=snaps)
    return out


def save_history(path: str | Path, histories: dict[str, CurveHistory]) -> None:
    """Inverse of load_history with fixed 12-digit float formatting."""
    rows = []
    for hist in histories.values():
        labels = hist.grid.bucket_labels()
        for sn in hist.snapshots:
            for lbl, v in zip(labels, sn.values):
                rows.append((sn.date.isoformat(), hist.curve_id, lbl, v))
    df = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    df.to_csv(path, index=False, float_format=FLOAT_FMT)


def build_system(config: RunConfig) -> CurveSystem:
    disc = config.curves[0]
    tenor_specs = tuple((c.tenor, c.grid()) for c in config.curves[1:])
    return CurveSystem(
        discount_grid=disc.grid(), tenor_specs=tenor_specs, dt=config.dt
    )


def histories_to_states(
    sys: CurveSystem, histories: dict[str, CurveHistory], config: RunConfig
) -> list[StateVector]:
    """Transform yield histories to the stacked state series, sampled at the
    configured stride.

    Discounting yields become instantaneous forwards; each tenor curve's
    yields become FRA par rates on its own grid. All curves must share the
    same observation dates.
    """
    ids = config.curve_ids
    hists = [histories[i] for i in ids]
    dates = hists[0].dates
    for h in hists[1:]:
        if h.dates != dates:
            raise ValueError(
                f"curve {h.curve_id!r} dates differ from {hists[0].curve_id!r}"
            )
    dates = dates[:: config.sampling_stride]
    keep = set(dates)

    blocks = []
    disc = hists[0]
    fwd = [
        yields_to_forwards(sn, sys.spline[0]).values
        for sn in disc.snapshots
        if sn.date in keep
    ]
    blocks.append(np.vstack(fwd))
    for i, hist in enumerate(hists[1:]):
        tenor, grid = sys.tenor_specs[i]
        if abs(hist.tenor - tenor) > 1e-12:
            raise ValueError(f"curve {hist.curve_id!r} tenor mismatch")
        fra = [
            tenor_yields_to_fra(sn, tenor, grid, sys.spline[i + 1]).values
            for sn in hist.snapshots
            if sn.date in keep
        ]
        blocks.append(np.vstack(fra))
    values = np.hstack(blocks)
    return [StateVector(values=v, date=d) for v, d in zip(values, dates)]


def write_matrix_csv(
    path: str | Path,
    matrix: np.ndarray,
    columns: list[str],
    index=None,
    index_label: str = "date",
) -> None:
    """Deterministic CSV dump of one 2-D array with named columns."""
    df = pd.DataFrame(np.asarray(matrix), columns=columns)
    if index is not None:
        df.insert(0, index_label, index)
    df.to_csv(path, index=False, float_format=FLOAT_FMT)
