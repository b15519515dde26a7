"""Typed containers for return panels, instruments and the flat parameter layout.

All containers are immutable after construction and safe for concurrent
reads.  Returns are stored as decimal monthly values; any percent or
annualized conversion happens only in reporting code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    AlignmentError,
    ConfigurationError,
    ShapeError,
    ValidationError,
)

if TYPE_CHECKING:  # pragma: no cover
    from .garch import GarchParams
    from .pricing import PriceParams

VARIANTS = ("symmetric", "asymmetric", "augmented")

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def month_index(month: str) -> int:
    """Map a ``YYYY-MM`` label to a consecutive integer month count."""
    m = _MONTH_RE.match(month.strip()) if isinstance(month, str) else None
    if m is None:
        raise ValidationError(f"invalid month {month!r}, expected 'YYYY-MM'")
    year, mon = int(m.group(1)), int(m.group(2))
    if not 1 <= mon <= 12:
        raise ValidationError(f"invalid month number in {month!r}")
    return year * 12 + (mon - 1)


def month_label(index: int) -> str:
    """Inverse of :func:`month_index`."""
    year, mon = divmod(int(index), 12)
    return f"{year:04d}-{mon + 1:02d}"


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ReturnsPanel:
    """T x N matrix of monthly excess returns; the world market is the last column.

    Parameters
    ----------
    dates : tuple of str
        Consecutive ``YYYY-MM`` labels, one per row.
    values : ndarray, shape (T, N)
        Decimal monthly excess returns, no missing values.
    asset_names : tuple of str
    world_index : int
        Position of the world market column; must address the last column.
    """

    dates: tuple[str, ...]
    values: np.ndarray
    asset_names: tuple[str, ...]
    world_index: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError("returns must be a 2-D array")
        t, n = values.shape
        if t < 2 or n < 2:
            raise ShapeError(f"need T >= 2 and N >= 2, got T={t}, N={n}")
        if len(self.dates) != t:
            raise ShapeError("dates length does not match number of rows")
        if len(self.asset_names) != n:
            raise ShapeError("asset_names length does not match columns")
        if not (0 <= self.world_index < n):
            raise ValidationError("world_index outside the column range")
        if self.world_index != n - 1:
            raise ValidationError("world market must be the last column")
        if not np.isfinite(values).all():
            bad = np.argwhere(~np.isfinite(values))
            t0, j0 = bad[0]
            raise ValidationError(
                f"missing value at date {self.dates[t0]}, "
                f"asset {self.asset_names[j0]!r}"
            )
        idx = [month_index(d) for d in self.dates]
        gaps = [
            month_label(k)
            for prev, cur in zip(idx, idx[1:])
            for k in range(prev + 1, cur)
        ]
        if gaps or any(cur <= prev for prev, cur in zip(idx, idx[1:])):
            if gaps:
                raise AlignmentError(f"gap months in returns: {', '.join(gaps)}")
            raise ValidationError("dates must be strictly increasing")
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "asset_names", tuple(self.asset_names))
        object.__setattr__(self, "values", _freeze(values))

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_assets(self) -> int:
        return self.values.shape[1]

    @property
    def world_name(self) -> str:
        return self.asset_names[self.world_index]


@dataclass(frozen=True)
class InstrumentSet:
    """Global and per-country local instrument matrices, already lagged.

    Row ``t`` of every matrix holds information dated ``t - 1`` relative to
    the panel row it conditions; the first column of each matrix is the
    constant.
    """

    z_global: np.ndarray
    z_local: tuple[np.ndarray, ...]
    global_names: tuple[str, ...]
    local_names: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        zg = np.asarray(self.z_global, dtype=float)
        if zg.ndim != 2:
            raise ShapeError("global instruments must be 2-D")
        t = zg.shape[0]
        if not np.all(zg[:, 0] == 1.0):
            raise ValidationError("first global instrument column must be 1")
        if len(self.global_names) != zg.shape[1]:
            raise ShapeError("global_names length mismatch")
        locals_ = []
        for i, zl in enumerate(self.z_local):
            zl = np.asarray(zl, dtype=float)
            if zl.ndim != 2 or zl.shape[0] != t:
                raise ShapeError(f"local instrument matrix {i} misshaped")
            if not np.all(zl[:, 0] == 1.0):
                raise ValidationError(
                    f"first local instrument column must be 1 (asset {i})"
                )
            locals_.append(_freeze(zl))
        widths = {zl.shape[1] for zl in locals_}
        if len(widths) > 1:
            raise ShapeError("local instrument matrices must share one width")
        if len(self.local_names) != len(locals_):
            raise ShapeError("local_names length mismatch")
        object.__setattr__(self, "z_global", _freeze(zg))
        object.__setattr__(self, "z_local", tuple(locals_))
        object.__setattr__(self, "global_names", tuple(self.global_names))
        object.__setattr__(
            self, "local_names", tuple(tuple(n) for n in self.local_names)
        )

    @property
    def n_periods(self) -> int:
        return self.z_global.shape[0]

    @property
    def n_global(self) -> int:
        return self.z_global.shape[1]

    @property
    def n_local(self) -> int:
        return self.z_local[0].shape[1] if self.z_local else 0


@dataclass(frozen=True)
class ModelSpec:
    """Model variant and dimensions shared by layout, likelihood and reports."""

    variant: str
    n_assets: int
    n_global: int
    n_local: int
    window: tuple[str, str] | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(
                f"unknown variant {self.variant!r}, expected one of {VARIANTS}"
            )
        if self.n_assets < 1:
            raise ConfigurationError("n_assets must be >= 1")
        if self.n_global < 1 or self.n_local < 1:
            raise ConfigurationError("instrument counts must be >= 1")
        if self.window is not None:
            start, end = self.window
            if month_index(start) > month_index(end):
                raise ConfigurationError(f"window start {start} after end {end}")
            object.__setattr__(self, "window", (start, end))

    @property
    def has_asymmetry(self) -> bool:
        return self.variant != "symmetric"

    @property
    def is_augmented(self) -> bool:
        return self.variant == "augmented"


@dataclass(frozen=True)
class ParameterLayout:
    """Block offsets of the flat parameter vector.

    Order: kappa_world (L_g), kappa_local for each non-world asset (L_l
    each), vech of the lower-triangular intercept C (N(N+1)/2), a (N),
    b (N), then s (N) and z (N) unless symmetric, then alpha (N-1) and
    phi (L_l - 1 per asset) for the augmented variant.
    """

    spec: ModelSpec
    kappa_world: slice
    kappa_local: tuple[slice, ...]
    c_vech: slice
    a: slice
    b: slice
    s: slice | None
    z: slice | None
    alpha: slice | None
    phi: tuple[slice, ...] | None
    size: int

    def pack(self, prices: "PriceParams", garch: "GarchParams") -> np.ndarray:
        """Flatten parameter containers into a vector (inverse of unpack)."""
        n = self.spec.n_assets
        theta = np.empty(self.size)
        theta[self.kappa_world] = prices.kappa_world
        for i, sl in enumerate(self.kappa_local):
            theta[sl] = prices.kappa_local[i]
        theta[self.c_vech] = garch.C[np.tril_indices(n)]
        theta[self.a] = garch.a
        theta[self.b] = garch.b
        if self.s is not None:
            theta[self.s] = garch.s
            theta[self.z] = garch.z
        elif np.any(garch.s != 0.0) or np.any(garch.z != 0.0):
            raise ConfigurationError("symmetric layout requires s = z = 0")
        if self.alpha is not None:
            if prices.alpha is None or prices.phi is None:
                raise ConfigurationError("augmented layout needs alpha and phi")
            theta[self.alpha] = prices.alpha
            for i, sl in enumerate(self.phi):
                theta[sl] = prices.phi[i]
        elif prices.alpha is not None or prices.phi is not None:
            raise ConfigurationError("alpha/phi only valid for augmented variant")
        return theta

    def unpack(self, theta: np.ndarray) -> tuple["PriceParams", "GarchParams"]:
        """Split a flat vector into price and GARCH parameter containers."""
        from .garch import GarchParams
        from .pricing import PriceParams

        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ShapeError(
                f"theta has length {theta.shape}, layout expects {self.size}"
            )
        n = self.spec.n_assets
        c = np.zeros((n, n))
        c[np.tril_indices(n)] = theta[self.c_vech]
        a = theta[self.a].copy()
        b = theta[self.b].copy()
        if self.s is not None:
            s = theta[self.s].copy()
            zz = theta[self.z].copy()
        else:
            s = np.zeros(n)
            zz = np.zeros(n)
        kappa_local = (
            np.stack([theta[sl] for sl in self.kappa_local])
            if self.kappa_local
            else np.zeros((0, self.spec.n_local))
        )
        alpha = theta[self.alpha].copy() if self.alpha is not None else None
        phi = (
            np.stack([theta[sl] for sl in self.phi])
            if self.phi is not None
            else None
        )
        prices = PriceParams(
            kappa_world=theta[self.kappa_world].copy(),
            kappa_local=kappa_local,
            alpha=alpha,
            phi=phi,
        )
        return prices, GarchParams(C=c, a=a, b=b, s=s, z=zz)


def layout(spec: ModelSpec) -> ParameterLayout:
    """Block offsets and total length for a model specification."""
    n, lg, ll = spec.n_assets, spec.n_global, spec.n_local
    pos = 0

    def take(count: int) -> slice:
        nonlocal pos
        sl = slice(pos, pos + count)
        pos += count
        return sl

    kappa_world = take(lg)
    kappa_local = tuple(take(ll) for _ in range(n - 1))
    c_vech = take(n * (n + 1) // 2)
    a = take(n)
    b = take(n)
    s = take(n) if spec.has_asymmetry else None
    zz = take(n) if spec.has_asymmetry else None
    alpha = take(n - 1) if spec.is_augmented else None
    phi = (
        tuple(take(ll - 1) for _ in range(n - 1)) if spec.is_augmented else None
    )
    return ParameterLayout(
        spec=spec,
        kappa_world=kappa_world,
        kappa_local=kappa_local,
        c_vech=c_vech,
        a=a,
        b=b,
        s=s,
        z=zz,
        alpha=alpha,
        phi=phi,
        size=pos,
    )


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def _read_table(path) -> pd.DataFrame:
    # round_trip parsing keeps serialize -> ingest exact to the bit
    df = pd.read_csv(path, float_precision="round_trip")
    if "date" not in df.columns:
        raise ValidationError(f"{path}: missing required 'date' column")
    df["date"] = df["date"].astype(str).str.strip()
    months = [month_index(d) for d in df["date"]]
    if any(cur <= prev for prev, cur in zip(months, months[1:])):
        raise ValidationError(f"{path}: dates must be strictly increasing")
    for col in df.columns:
        if col == "date":
            continue
        values = pd.to_numeric(df[col], errors="coerce")
        missing = values.isna()
        if missing.any():
            where = df.loc[missing, "date"].iloc[0]
            raise ValidationError(
                f"{path}: missing or non-numeric value at date {where}, "
                f"column {col!r}"
            )
        df[col] = values.astype(float)
    return df


def ingest_panel(
    returns_csv,
    global_csv,
    local_csvs: Mapping[str, object],
    world: str,
) -> tuple[ReturnsPanel, InstrumentSet]:
    """Load and align a returns panel with global and local instruments.

    Parameters
    ----------
    returns_csv : path
        CSV with a ``date`` column (``YYYY-MM``) and one column per asset.
    global_csv : path
        CSV of global information variables, dated at their own month.
    local_csvs : mapping
        Asset name -> CSV path, one file per non-world asset.
    world : str
        Name of the world market column in the returns file.

    Returns
    -------
    (ReturnsPanel, InstrumentSet)
        Aligned over the months whose previous-month instruments exist.
        Instruments are shifted so row ``t`` holds the month ``t - 1``
        values, and a constant column is prepended to every matrix.
    """
    rdf = _read_table(returns_csv)
    assets = [c for c in rdf.columns if c != "date"]
    if len(assets) < 2:
        raise ShapeError(f"{returns_csv}: need at least 2 asset columns")
    if world not in assets:
        raise ConfigurationError(
            f"world asset {world!r} not found among columns {assets}"
        )
    order = [a for a in assets if a != world] + [world]

    expected = set(order[:-1])
    if set(local_csvs) != expected:
        raise ConfigurationError(
            f"local instrument files must cover exactly {sorted(expected)}, "
            f"got {sorted(local_csvs)}"
        )

    gdf = _read_table(global_csv)
    ldfs = {name: _read_table(path) for name, path in local_csvs.items()}

    ret_months = [month_index(d) for d in rdf["date"]]
    gaps = [
        month_label(k)
        for prev, cur in zip(ret_months, ret_months[1:])
        for k in range(prev + 1, cur)
    ]
    if gaps:
        raise AlignmentError(
            f"{returns_csv}: gap months in returns: {', '.join(gaps)}"
        )

    g_avail = {month_index(d): i for i, d in enumerate(gdf["date"])}
    l_avail = {
        name: {month_index(d): i for i, d in enumerate(df["date"])}
        for name, df in ldfs.items()
    }

    keep = [
        m
        for m in ret_months
        if (m - 1) in g_avail and all((m - 1) in av for av in l_avail.values())
    ]
    if not keep:
        raise AlignmentError(
            "no months where all previous-month instruments are available"
        )
    missing = [
        month_label(m) for m in range(keep[0], keep[-1] + 1) if m not in set(keep)
    ]
    if missing:
        raise AlignmentError(
            f"instruments missing for months: {', '.join(missing)}"
        )

    row_of = {m: i for i, m in enumerate(ret_months)}
    rows = [row_of[m] for m in keep]
    dates = tuple(month_label(m) for m in keep)
    values = rdf[order].to_numpy(dtype=float)[rows]

    t = len(keep)
    g_cols = [c for c in gdf.columns if c != "date"]
    zg = np.ones((t, 1 + len(g_cols)))
    zg[:, 1:] = gdf[g_cols].to_numpy(dtype=float)[[g_avail[m - 1] for m in keep]]

    z_local = []
    local_names = []
    for name in order[:-1]:
        df = ldfs[name]
        cols = [c for c in df.columns if c != "date"]
        zl = np.ones((t, 1 + len(cols)))
        zl[:, 1:] = df[cols].to_numpy(dtype=float)[
            [l_avail[name][m - 1] for m in keep]
        ]
        z_local.append(zl)
        local_names.append(("const", *cols))

    panel = ReturnsPanel(
        dates=dates,
        values=values,
        asset_names=tuple(order),
        world_index=len(order) - 1,
    )
    instruments = InstrumentSet(
        z_global=zg,
        z_local=tuple(z_local),
        global_names=("const", *g_cols),
        local_names=tuple(local_names),
    )
    return panel, instruments


def apply_window(
    panel: ReturnsPanel,
    instruments: InstrumentSet,
    start: str | None,
    end: str | None,
) -> tuple[ReturnsPanel, InstrumentSet]:
    """Restrict an aligned sample to ``start <= month <= end`` (inclusive)."""
    lo = month_index(start) if start else month_index(panel.dates[0])
    hi = month_index(end) if end else month_index(panel.dates[-1])
    months = [month_index(d) for d in panel.dates]
    if lo < months[0] or hi > months[-1]:
        raise ConfigurationError(
            f"window {month_label(lo)}:{month_label(hi)} outside the data "
            f"range {panel.dates[0]}:{panel.dates[-1]}"
        )
    rows = [i for i, m in enumerate(months) if lo <= m <= hi]
    if len(rows) < 2:
        raise ConfigurationError("window leaves fewer than 2 observations")
    sub_panel = ReturnsPanel(
        dates=tuple(panel.dates[i] for i in rows),
        values=panel.values[rows],
        asset_names=panel.asset_names,
        world_index=panel.world_index,
    )
    sub_instr = InstrumentSet(
        z_global=instruments.z_global[rows],
        z_local=tuple(zl[rows] for zl in instruments.z_local),
        global_names=instruments.global_names,
        local_names=instruments.local_names,
    )
    return sub_panel, sub_instr


# ---------------------------------------------------------------------------
# Canonical CSV serialization (inverse of ingest_panel)
# ---------------------------------------------------------------------------


def _write_rows(path, header: Sequence[str], dates, matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for d, row in zip(dates, matrix):
            fh.write(",".join([d, *(repr(float(x)) for x in row)]) + "\n")


def write_returns_csv(panel: ReturnsPanel, path) -> None:
    """Serialize a panel in the format consumed by :func:`ingest_panel`."""
    _write_rows(path, ("date", *panel.asset_names), panel.dates, panel.values)


def write_instrument_csvs(
    instruments: InstrumentSet,
    panel_dates: Sequence[str],
    global_path,
    local_paths: Mapping[str, object],
    local_assets: Sequence[str],
) -> None:
    """Serialize instruments, dated one month before the panel rows.

    The constant column is dropped; ingestion prepends it again.
    """
    lagged = [month_label(month_index(d) - 1) for d in panel_dates]
    _write_rows(
        global_path,
        ("date", *instruments.global_names[1:]),
        lagged,
        instruments.z_global[:, 1:],
    )
    for i, asset in enumerate(local_assets):
        _write_rows(
            local_paths[asset],
            ("date", *instruments.local_names[i][1:]),
            lagged,
            instruments.z_local[i][:, 1:],
        )
