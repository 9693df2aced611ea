"""Numerical differentiation, smoothing, resampling, velocity reconstruction.

Derivatives use either the symmetric second-order stencils (orders 3 and 4
are built by composing the order-1/2 stencils, so the discrete result of
differentiating lattice data coincides with the exact lattice equation) or
exact Fourier differentiation on periodic grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter

from .errors import ConfigError, DataError
from .field_store import Dataset, Field, Grid

__all__ = [
    "DerivativeSpec",
    "SmootherSpec",
    "differentiate",
    "diff_array",
    "trim_mask",
    "smooth",
    "resample_time",
    "velocity_from_density",
]


@dataclass(frozen=True)
class DerivativeSpec:
    axis: str  # "time" | "space"
    order: int
    scheme: str = "central2"  # "central2" | "spectral"

    def __post_init__(self):
        if self.axis not in ("time", "space"):
            raise ConfigError(f"axis must be 'time' or 'space', got {self.axis!r}")
        if not 1 <= self.order <= 4:
            raise ConfigError(f"derivative order must be 1..4, got {self.order}")
        if self.scheme not in ("central2", "spectral"):
            raise ConfigError(f"scheme must be 'central2' or 'spectral', got {self.scheme!r}")
        if self.scheme == "spectral" and self.axis != "space":
            raise ConfigError("spectral differentiation is only valid along space")


@dataclass(frozen=True)
class SmootherSpec:
    kind: str  # "gaussian" | "savitzky_golay"
    sigma: float | None = None  # gaussian width, in grid cells
    window: int | None = None  # SG window length (odd)
    polyorder: int | None = None  # SG polynomial order

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma is None or self.sigma <= 0:
                raise ConfigError("gaussian smoother needs sigma > 0")
        elif self.kind == "savitzky_golay":
            if self.window is None or self.polyorder is None:
                raise ConfigError("savitzky_golay smoother needs window and polyorder")
            if self.window % 2 != 1:
                raise ConfigError(f"SG window must be odd, got {self.window}")
            if self.window < self.polyorder + 2:
                raise ConfigError(
                    f"SG window {self.window} must be >= polyorder + 2 = {self.polyorder + 2}"
                )
        else:
            raise ConfigError(f"unknown smoother kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def _central_diff_1d(u, h, order, periodic):
    """Symmetric 2nd-order stencils along the last axis; orders 3, 4 composed."""
    if order == 0:
        return u.copy()
    if order == 1:
        out = (np.roll(u, -1, axis=-1) - np.roll(u, 1, axis=-1)) / (2 * h)
    elif order == 2:
        out = (np.roll(u, -1, axis=-1) + np.roll(u, 1, axis=-1) - 2 * u) / h**2
    else:
        out = _central_diff_1d(_central_diff_1d(u, h, 2, periodic), h, order - 2, periodic)
        return out
    if not periodic:
        # wrapped entries are invalid; they sit inside the trim_mask region
        out[..., 0] = out[..., 1]
        out[..., -1] = out[..., -2]
    return out


def _spectral_diff(u, dx, order):
    n = u.shape[-1]
    q = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    out = np.fft.ifft((1j * q) ** order * np.fft.fft(u, axis=-1), axis=-1)
    if np.isrealobj(u):
        return out.real
    return out


def diff_array(values: np.ndarray, grid: Grid, spec: DerivativeSpec) -> np.ndarray:
    """Derivative of an (nt, nx) array; boundary cells of non-periodic axes
    are filled with their nearest valid neighbor and must be masked off via
    trim_mask before regression."""
    values = np.asarray(values)
    if spec.axis == "time":
        return _central_diff_1d(values.T, grid.dt, spec.order, periodic=False).T
    if spec.scheme == "spectral":
        if not grid.periodic_x:
            raise ConfigError("spectral differentiation requires a periodic grid")
        return _spectral_diff(values, grid.dx, spec.order)
    return _central_diff_1d(values, grid.dx, spec.order, periodic=grid.periodic_x)


def differentiate(f: Field, grid: Grid, spec: DerivativeSpec) -> Field:
    axis_char = "t" if spec.axis == "time" else "x"
    name = f"{f.name}_" + axis_char * spec.order
    return Field(name=name, values=diff_array(f.values, grid, spec))


def trim_mask(grid: Grid, specs) -> np.ndarray:
    """True where every requested stencil fits inside the grid."""
    mask = np.ones((grid.nt, grid.nx), dtype=bool)
    for spec in specs:
        if spec.scheme == "spectral":
            continue
        w = math.ceil(spec.order / 2)
        if spec.axis == "time":
            mask[:w, :] = False
            mask[grid.nt - w :, :] = False
        elif not grid.periodic_x:
            mask[:, :w] = False
            mask[:, grid.nx - w :] = False
    return mask


# ---------------------------------------------------------------------------
# Smoothing
# ---------------------------------------------------------------------------


def _gaussian_kernel(sigma):
    radius = int(math.ceil(4 * sigma))
    xs = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (xs / sigma) ** 2)
    return k / k.sum()


def _smooth_rows(values, spec, periodic):
    if spec.kind == "savitzky_golay":
        if spec.window > values.shape[1]:
            raise DataError(
                f"SG window {spec.window} longer than nx = {values.shape[1]}"
            )
        mode = "wrap" if periodic else "interp"
        return savgol_filter(values, spec.window, spec.polyorder, axis=1, mode=mode)
    k = _gaussian_kernel(spec.sigma)
    if len(k) > values.shape[1]:
        raise DataError(f"gaussian kernel ({len(k)} taps) longer than nx = {values.shape[1]}")
    if periodic:
        n = values.shape[1]
        pad = len(k) // 2
        ext = np.concatenate([values[:, -pad:], values, values[:, :pad]], axis=1)
        out = np.empty_like(values)
        for i in range(values.shape[0]):
            out[i] = np.convolve(ext[i], k, mode="valid")[:n]
        return out
    # open boundary: renormalize by the in-window kernel mass so constants
    # stay exact at the edges
    ones = np.ones(values.shape[1])
    norm = np.convolve(ones, k, mode="same")
    out = np.empty_like(values)
    for i in range(values.shape[0]):
        out[i] = np.convolve(values[i], k, mode="same") / norm
    return out


def smooth(f: Field, spec: SmootherSpec, periodic: bool = False) -> Field:
    """Smooth along the spatial axis only; linear, constant-preserving."""
    if f.is_complex:
        vals = _smooth_rows(f.values.real, spec, periodic) + 1j * _smooth_rows(
            f.values.imag, spec, periodic
        )
    else:
        vals = _smooth_rows(f.values, spec, periodic)
    return Field(name=f.name, values=vals, p_parity=f.p_parity, t_parity=f.t_parity)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def resample_time(ds: Dataset, new_nt: int) -> Dataset:
    """Cubic interpolation in t per space column, keeping the time extent."""
    g = ds.grid
    if new_nt < 3:
        raise DataError(f"new_nt must be >= 3, got {new_nt}")
    if g.nt < 4:
        raise DataError(f"cubic time interpolation needs at least 4 samples, got {g.nt}")
    if new_nt == g.nt:
        return ds
    t_old = g.times()
    span = g.dt * (g.nt - 1)
    new_dt = span / (new_nt - 1)
    t_new = g.t0 + new_dt * np.arange(new_nt)
    t_new[-1] = t_old[-1]  # guard the endpoint against roundoff
    new_fields = []
    for f in ds.fields:
        spl = CubicSpline(t_old, f.values, axis=0)
        new_fields.append(
            Field(name=f.name, values=spl(t_new), p_parity=f.p_parity, t_parity=f.t_parity)
        )
    new_grid = Grid(
        nt=new_nt, nx=g.nx, dt=new_dt, dx=g.dx, t0=g.t0, x0=g.x0, periodic_x=g.periodic_x
    )
    return Dataset(grid=new_grid, fields=tuple(new_fields), meta=dict(ds.meta))


# ---------------------------------------------------------------------------
# Hidden-variable reconstruction
# ---------------------------------------------------------------------------


def velocity_from_density(rho: Field, grid: Grid, rho_floor: float = 1e-6):
    """Reconstruct v = -(1/rho) * d/dt integral_x rho from density data.

    Returns (v_field, valid_mask); points with rho < rho_floor are masked
    instead of divided.  The spatial integral is a trapezoid cumulative sum
    from the left edge, the time derivative is the order-1 central stencil.
    """
    vals = rho.real_values()
    if np.any(vals < 0):
        raise DataError("density field has negative entries")
    # cumulative trapezoid along x, I(t, x_j) = int_{x_0}^{x_j} rho dx'
    avg = 0.5 * (vals[:, 1:] + vals[:, :-1]) * grid.dx
    integral = np.concatenate([np.zeros((grid.nt, 1)), np.cumsum(avg, axis=1)], axis=1)
    dIdt = diff_array(integral, grid, DerivativeSpec("time", 1, "central2"))
    ok = vals >= rho_floor
    v = np.zeros_like(vals)
    np.divide(-dIdt, vals, out=v, where=ok)
    mask = ok.copy()
    mask[0, :] = False
    mask[-1, :] = False
    return Field(name="v", values=v, p_parity=-1, t_parity=-1), mask
