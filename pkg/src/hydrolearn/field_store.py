"""Canonical data model for spatiotemporal observables and its file format.

A Dataset is a set of named fields sampled on one uniform (t, x) grid.
On disk a dataset is a JSON sidecar ``<path>.json`` plus one CSV per field
``<path>.<field>.csv``; values are written as decimal text with 17
significant digits, which round-trips 64-bit floats exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DataError

__all__ = [
    "Grid",
    "Field",
    "Dataset",
    "write_dataset",
    "read_dataset",
    "window",
]


@dataclass(frozen=True)
class Grid:
    """Uniform space-time grid: nt x nx samples with spacings dt, dx."""

    nt: int
    nx: int
    dt: float
    dx: float
    t0: float = 0.0
    x0: float = 0.0
    periodic_x: bool = False

    def __post_init__(self):
        if self.nt < 3:
            raise DataError(f"grid needs nt >= 3, got nt={self.nt}")
        if self.nx < 5:
            raise DataError(f"grid needs nx >= 5, got nx={self.nx}")
        if not (self.dt > 0 and self.dx > 0):
            raise DataError(f"grid spacings must be positive: dt={self.dt}, dx={self.dx}")

    def times(self):
        return self.t0 + self.dt * np.arange(self.nt)

    def xs(self):
        return self.x0 + self.dx * np.arange(self.nx)


def _parity_ok(p):
    return p in (1, -1, None)


@dataclass(frozen=True)
class Field:
    """A named nt x nx array of samples with optional (P, T) parities.

    Parities are +1/-1 when known, None when unset.  The value array is
    frozen on construction; datasets are safe to share between threads.
    """

    name: str
    values: np.ndarray
    p_parity: int | None = None
    t_parity: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise DataError(f"field {self.name!r}: values must be 2-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.complexfloating):
            arr = arr.astype(np.float64, copy=False)
        if not np.all(np.isfinite(arr.real)) or (
            np.iscomplexobj(arr) and not np.all(np.isfinite(arr.imag))
        ):
            raise DataError(f"field {self.name!r} contains non-finite values")
        if not (_parity_ok(self.p_parity) and _parity_ok(self.t_parity)):
            raise DataError(f"field {self.name!r}: parities must be +1, -1 or None")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def is_complex(self):
        return np.iscomplexobj(self.values)

    def real_values(self):
        """Values as float64; error if the imaginary part is not exactly zero."""
        if not self.is_complex:
            return self.values
        if np.any(self.values.imag != 0.0):
            raise DataError(f"field {self.name!r} has nonzero imaginary part")
        return self.values.real


@dataclass(frozen=True)
class Dataset:
    """Fields sharing one grid, plus string-valued provenance metadata."""

    grid: Grid
    fields: tuple
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate field names: {names}")
        for f in self.fields:
            if f.values.shape != (self.grid.nt, self.grid.nx):
                raise DataError(
                    f"field {f.name!r} shape {f.values.shape} does not match "
                    f"grid ({self.grid.nt}, {self.grid.nx})"
                )
        meta = {str(k): str(v) for k, v in self.meta.items()}
        object.__setattr__(self, "meta", meta)

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise DataError(f"no field named {name!r}; have {[f.name for f in self.fields]}")

    def names(self):
        return [f.name for f in self.fields]

    def parities(self):
        """Map field name -> (p_parity, t_parity)."""
        return {f.name: (f.p_parity, f.t_parity) for f in self.fields}


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def _sidecar_path(path: str) -> str:
    return path if path.endswith(".json") else path + ".json"


def _base_path(path: str) -> str:
    return path[: -len(".json")] if path.endswith(".json") else path


def write_dataset(ds: Dataset, path: str) -> None:
    """Write ``<path>.json`` and one ``<path>.<field>.csv`` per field."""
    base = _base_path(path)
    sidecar = {
        "grid": {
            "nt": ds.grid.nt,
            "nx": ds.grid.nx,
            "dt": ds.grid.dt,
            "dx": ds.grid.dx,
            "t0": ds.grid.t0,
            "x0": ds.grid.x0,
            "periodic_x": ds.grid.periodic_x,
        },
        "fields": [],
        "meta": ds.meta,
    }
    for f in ds.fields:
        csv_name = f"{os.path.basename(base)}.{f.name}.csv"
        sidecar["fields"].append(
            {
                "name": f.name,
                "complex": bool(f.is_complex),
                "p_parity": f.p_parity,
                "t_parity": f.t_parity,
                "csv": csv_name,
            }
        )
    try:
        for f, entry in zip(ds.fields, sidecar["fields"]):
            csv_path = os.path.join(os.path.dirname(base) or ".", entry["csv"])
            if f.is_complex:
                flat = np.empty((ds.grid.nt, 2 * ds.grid.nx))
                flat[:, 0::2] = f.values.real
                flat[:, 1::2] = f.values.imag
            else:
                flat = f.values.real
            np.savetxt(csv_path, flat, fmt=_FMT, delimiter=",", newline="\n")
        with open(_sidecar_path(base), "w") as fh:
            json.dump(sidecar, fh, indent=1)
    except OSError as exc:
        raise DataError(f"cannot write dataset file: {exc}") from exc


def read_dataset(path: str) -> Dataset:
    """Read a dataset written by :func:`write_dataset` (or hand-authored)."""
    base = _base_path(path)
    sidecar_path = _sidecar_path(base)
    try:
        with open(sidecar_path) as fh:
            sidecar = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read sidecar {sidecar_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed sidecar {sidecar_path}: {exc}") from exc

    try:
        g = sidecar["grid"]
        grid = Grid(
            nt=int(g["nt"]),
            nx=int(g["nx"]),
            dt=float(g["dt"]),
            dx=float(g["dx"]),
            t0=float(g.get("t0", 0.0)),
            x0=float(g.get("x0", 0.0)),
            periodic_x=bool(g.get("periodic_x", False)),
        )
        entries = sidecar["fields"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"sidecar {sidecar_path} missing required keys: {exc}") from exc

    fields = []
    for entry in entries:
        csv_path = os.path.join(os.path.dirname(base) or ".", entry["csv"])
        try:
            raw = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise DataError(f"cannot read CSV {csv_path}: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"malformed CSV {csv_path}: {exc}") from exc
        want_cols = 2 * grid.nx if entry.get("complex") else grid.nx
        if raw.shape != (grid.nt, want_cols):
            raise DataError(
                f"{csv_path}: sidecar claims {grid.nt} rows x {want_cols} columns, "
                f"CSV has {raw.shape[0]} rows x {raw.shape[1]} columns"
            )
        bad = np.where(~np.isfinite(raw).all(axis=1))[0]
        if bad.size:
            raise DataError(f"{csv_path}: non-finite value in row {int(bad[0])}")
        if entry.get("complex"):
            values = raw[:, 0::2] + 1j * raw[:, 1::2]
        else:
            values = raw
        fields.append(
            Field(
                name=entry["name"],
                values=values,
                p_parity=entry.get("p_parity"),
                t_parity=entry.get("t_parity"),
            )
        )
    return Dataset(grid=grid, fields=tuple(fields), meta=sidecar.get("meta", {}))


# ---------------------------------------------------------------------------
# Windowing
# ---------------------------------------------------------------------------


def window(ds: Dataset, t_lo: float, t_hi: float, x_lo: float, x_hi: float) -> Dataset:
    """Restrict a dataset to samples with t in [t_lo, t_hi], x in [x_lo, x_hi].

    Spacings are unchanged; t0/x0 move to the first retained sample.  A
    window that cuts the spatial extent clears the periodic flag.
    """
    g = ds.grid
    t = g.times()
    x = g.xs()
    eps_t = 1e-9 * g.dt
    eps_x = 1e-9 * g.dx
    ti = np.where((t >= t_lo - eps_t) & (t <= t_hi + eps_t))[0]
    xi = np.where((x >= x_lo - eps_x) & (x <= x_hi + eps_x))[0]
    if ti.size == 0 or xi.size == 0:
        raise DataError("window does not overlap the grid")
    if ti.size < 3 or xi.size < 5:
        raise DataError(
            f"window too small: {ti.size} time and {xi.size} space samples "
            "(need nt >= 3, nx >= 5)"
        )
    full_x = xi.size == g.nx
    new_grid = Grid(
        nt=int(ti.size),
        nx=int(xi.size),
        dt=g.dt,
        dx=g.dx,
        t0=float(t[ti[0]]),
        x0=float(x[xi[0]]),
        periodic_x=g.periodic_x and full_x,
    )
    new_fields = tuple(
        Field(
            name=f.name,
            values=f.values[np.ix_(ti, xi)],
            p_parity=f.p_parity,
            t_parity=f.t_parity,
        )
        for f in ds.fields
    )
    return Dataset(grid=new_grid, fields=new_fields, meta=dict(ds.meta))
