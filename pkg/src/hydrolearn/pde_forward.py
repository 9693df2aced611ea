"""Integrate discovered PDEs forward in time and score them against data.

Method of lines: spatial derivatives by the chosen scheme (spectral on
periodic grids, or the same symmetric stencils used for regression), time
stepping by classic RK4 with a stability-limited internal step.  Integration
halts with a recorded blowup time when the solution's spatial gradient grows
past a threshold factor or values stop being finite, matching the validity
domain of semiclassical hydrodynamics up to the gradient catastrophe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericsError
from .field_store import Dataset, Field, Grid
from .term_library import (
    FieldPower,
    LogDeriv,
    NonlocalKernel,
    SpatialMonomial,
    SpecialSin,
    Term,
    _kernel_multiplier,
    render_term,
)

__all__ = ["PDESystem", "SolveReport", "solve", "compare"]

_RK4_STABILITY_RADIUS = 2.8


@dataclass(frozen=True)
class PDESystem:
    """du/dt = sum(coef * term) per unknown; terms hold no time derivatives."""

    unknowns: tuple
    rhs: dict  # name -> list of (coefficient, Term)
    boundary: str = "periodic"  # "periodic" | "clamped"

    def __post_init__(self):
        object.__setattr__(self, "unknowns", tuple(self.unknowns))
        if not 1 <= len(self.unknowns) <= 2:
            raise ConfigError("systems of 1 or 2 unknowns are supported")
        if self.boundary not in ("periodic", "clamped"):
            raise ConfigError(f"boundary must be 'periodic' or 'clamped', got {self.boundary!r}")
        known = set(self.unknowns)
        for name in self.unknowns:
            for _, term in self.rhs.get(name, []):
                extra = term.field_names() - known
                if extra:
                    raise ConfigError(
                        f"term {render_term(term)} references undeclared fields {sorted(extra)}"
                    )


@dataclass(frozen=True)
class SolveReport:
    solution: Dataset
    max_abs_error: dict | None = None
    rms_error: dict | None = None
    per_time_error: dict | None = None
    blowup_time: float | None = None

    def to_json_dict(self):
        out = {
            "blowup_time": self.blowup_time,
            "max_abs_error": self.max_abs_error,
            "rms_error": self.rms_error,
        }
        if self.per_time_error is not None:
            out["per_time_error"] = {k: list(map(float, v)) for k, v in self.per_time_error.items()}
        return out


# ---------------------------------------------------------------------------
# Spatial derivatives on a single row
# ---------------------------------------------------------------------------


class _RowDeriv:
    def __init__(self, grid: Grid, scheme: str, boundary: str):
        if scheme not in ("spectral", "central2"):
            raise ConfigError(f"scheme must be 'spectral' or 'central2', got {scheme!r}")
        if scheme == "spectral" and boundary != "periodic":
            raise ConfigError("spectral solves need periodic boundary")
        self.scheme = scheme
        self.periodic = boundary == "periodic"
        self.dx = grid.dx
        self.nx = grid.nx
        self.q = 2 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)

    def diff(self, u, order):
        if order == 0:
            return u
        if self.scheme == "spectral":
            out = np.fft.ifft((1j * self.q) ** order * np.fft.fft(u))
            return out.real if np.isrealobj(u) else out
        if order == 1:
            out = (np.roll(u, -1) - np.roll(u, 1)) / (2 * self.dx)
        elif order == 2:
            out = (np.roll(u, -1) + np.roll(u, 1) - 2 * u) / self.dx**2
        else:
            return self.diff(self.diff(u, 2), order - 2)
        if not self.periodic:
            out[0] = out[1]
            out[-1] = out[-2]
        return out

    def kernel(self, u, kern: NonlocalKernel):
        if not self.periodic:
            raise ConfigError("nonlocal kernels need a periodic solve")
        mult = _kernel_multiplier(kern.kind, kern.mu, self.q)
        out = np.fft.ifft(mult * np.fft.fft(u))
        return out.real if np.isrealobj(u) else out


def _eval_term_row(term: Term, state, deriv: _RowDeriv, xs, floor):
    out = None
    for f in term.factors:
        if isinstance(f, FieldPower):
            vals = deriv.diff(state[f.name], f.dx_order)
            vals = vals if f.power == 1 else vals**f.power
        elif isinstance(f, SpatialMonomial):
            vals = (xs - f.center) ** f.power
        elif isinstance(f, SpecialSin):
            vals = np.sin(2 * np.pi / f.period * state[f.name])
        elif isinstance(f, LogDeriv):
            base = state[f.name]
            denom = np.where(np.abs(base) < floor, floor, base)
            vals = deriv.diff(base, 1) / denom
        else:
            vals = deriv.kernel(state[f.name], f)
        out = vals.copy() if out is None else out * vals
    if out is None:
        out = np.ones(len(xs))
    return out


def _term_orders(term: Term):
    """(max derivative order, list of non-highest factors) for stability bounds."""
    best = 0
    for f in term.factors:
        if isinstance(f, FieldPower):
            best = max(best, f.dx_order)
        elif isinstance(f, (LogDeriv,)):
            best = max(best, 1)
    return best


def _is_linear(system):
    for name in system.unknowns:
        for _, term in system.rhs.get(name, []):
            n_field = 0
            for f in term.factors:
                if isinstance(f, FieldPower):
                    n_field += f.power
                elif isinstance(f, NonlocalKernel):
                    n_field += 1
                elif isinstance(f, (SpecialSin, LogDeriv)):
                    return False
            if n_field != 1:
                return False
    return True


def _stability_rate(system, state0, deriv, xs, grid, floor):
    """Conservative bound on the RK4 eigenvalue magnitude of the linearization."""
    gain = math.pi / grid.dx if deriv.scheme == "spectral" else 2.0 / grid.dx
    worst = 0.0
    for name in system.unknowns:
        rate = 0.0
        for coef, term in system.rhs.get(name, []):
            order = _term_orders(term)
            amp = 1.0
            kern_gain = 1.0
            for f in term.factors:
                if isinstance(f, FieldPower):
                    if f.dx_order == order and order > 0:
                        # highest-derivative factor: contributes the wavenumber
                        # gain once; remaining powers count as amplitude
                        base = np.max(np.abs(state0[f.name]))
                        amp *= base ** (f.power - 1)
                    else:
                        amp *= np.max(np.abs(deriv.diff(state0[f.name], f.dx_order))) ** f.power
                elif isinstance(f, SpatialMonomial):
                    amp *= np.max(np.abs(xs - f.center)) ** f.power
                elif isinstance(f, SpecialSin):
                    amp *= 1.0
                elif isinstance(f, LogDeriv):
                    amp *= 1.0 / floor if np.min(np.abs(state0[f.name])) < floor else 1.0 / np.min(
                        np.abs(state0[f.name])
                    )
                elif isinstance(f, NonlocalKernel):
                    qm = math.pi / grid.dx
                    kern_gain = float(_kernel_multiplier(f.kind, f.mu, np.array([qm]))[0])
            rate += abs(coef) * amp * abs(kern_gain) * gain**order if order > 0 else abs(
                coef
            ) * amp * abs(kern_gain)
        worst = max(worst, rate)
    return worst


def solve(
    system: PDESystem,
    init,
    grid: Grid,
    scheme: str = "spectral",
    reference: Dataset | None = None,
    mask: np.ndarray | None = None,
    dt_internal: float | None = None,
    safety: float = 0.5,
    grad_blowup_factor: float = 50.0,
    rho_floor: float = 1e-6,
) -> SolveReport:
    """March the system from the initial slice across the grid times.

    init is a mapping name -> length-nx array, or a Dataset whose first time
    row supplies the initial values.  When a reference dataset is given, the
    report carries per-field max-abs/RMS errors over the mask, restricted to
    times before any detected blowup.
    """
    if isinstance(init, Dataset):
        init = {name: init.field(name).values[0] for name in system.unknowns}
    state = {}
    for name in system.unknowns:
        if name not in init:
            raise ConfigError(f"initial data missing unknown {name!r}")
        arr = np.asarray(init[name])
        if arr.shape != (grid.nx,):
            raise ConfigError(f"initial slice for {name!r} must have length nx={grid.nx}")
        state[name] = arr.astype(complex) if np.iscomplexobj(arr) else arr.astype(float)
    any_complex = any(np.iscomplexobj(v) for v in state.values()) or any(
        abs(np.imag(c)) > 0 for n in system.unknowns for c, _ in system.rhs.get(n, [])
    )
    if any_complex:
        state = {k: v.astype(complex) for k, v in state.items()}

    deriv = _RowDeriv(grid, scheme, "periodic" if system.boundary == "periodic" else "clamped")
    xs = grid.xs()

    if dt_internal is None:
        rate = _stability_rate(system, state, deriv, xs, grid, rho_floor)
        dt_internal = grid.dt if rate == 0 else min(
            grid.dt, safety * _RK4_STABILITY_RADIUS / rate
        )
        if rate > 0 and any_complex and _is_linear(system):
            # RK4's stability polynomial damps unitary modes by theta^6/72
            # per step; cap the step so norms survive the whole run to 1e-7
            horizon = grid.dt * (grid.nt - 1)
            dt_acc = (72e-7 / (max(horizon, grid.dt) * rate**6)) ** 0.2
            dt_internal = min(dt_internal, max(dt_acc, 1e-6))
    nsub = max(1, int(math.ceil(grid.dt / dt_internal - 1e-12)))
    h = grid.dt / nsub

    def rhs(st):
        out = {}
        for name in system.unknowns:
            acc = np.zeros(grid.nx, dtype=complex if any_complex else float)
            for coef, term in system.rhs.get(name, []):
                acc = acc + coef * _eval_term_row(term, st, deriv, xs, rho_floor)
            out[name] = acc
        return out

    clamp_edges = system.boundary == "clamped"
    edge = 2

    def clamp(st):
        if clamp_edges:
            for name in system.unknowns:
                st[name][:edge] = state0_edges[name][0]
                st[name][-edge:] = state0_edges[name][1]
        return st

    state0_edges = {n: (state[n][:edge].copy(), state[n][-edge:].copy()) for n in state}
    grad0 = max(
        np.max(np.abs(deriv.diff(state[n], 1))) for n in system.unknowns
    )

    times = grid.times()
    sol = {n: np.empty((grid.nt, grid.nx), dtype=state[n].dtype) for n in state}
    for n in state:
        sol[n][0] = state[n]
    blowup_time = None
    last_good = times[0]
    for it in range(1, grid.nt):
        for _ in range(nsub):
            k1 = rhs(state)
            s2 = clamp({n: state[n] + 0.5 * h * k1[n] for n in state})
            k2 = rhs(s2)
            s3 = clamp({n: state[n] + 0.5 * h * k2[n] for n in state})
            k3 = rhs(s3)
            s4 = clamp({n: state[n] + h * k3[n] for n in state})
            k4 = rhs(s4)
            state = clamp(
                {
                    n: state[n] + (h / 6.0) * (k1[n] + 2 * k2[n] + 2 * k3[n] + k4[n])
                    for n in state
                }
            )
        finite = all(np.all(np.isfinite(np.abs(state[n]))) for n in state)
        if not finite:
            raise NumericsError(
                f"non-finite values during integration; last good time t={last_good:g}"
            )
        grad = max(np.max(np.abs(deriv.diff(state[n], 1))) for n in state)
        if grad0 > 0 and grad > grad_blowup_factor * grad0:
            blowup_time = float(times[it])
            for n in state:
                sol[n][it:] = state[n]
            break
        for n in state:
            sol[n][it] = state[n]
        last_good = times[it]

    fields = tuple(Field(name=n, values=sol[n]) for n in system.unknowns)
    solution = Dataset(grid=grid, fields=fields, meta={"source": "pde_forward"})

    max_abs = rms = per_time = None
    if reference is not None:
        valid = np.ones((grid.nt, grid.nx), dtype=bool) if mask is None else mask.copy()
        if blowup_time is not None:
            valid[times > blowup_time, :] = False
        max_abs, rms, per_time = _error_metrics(solution, reference, valid, system.unknowns)
    return SolveReport(
        solution=solution,
        max_abs_error=max_abs,
        rms_error=rms,
        per_time_error=per_time,
        blowup_time=blowup_time,
    )


def _error_metrics(solution, reference, mask, names):
    max_abs, rms, per_time = {}, {}, {}
    for name in names:
        diff = np.abs(solution.field(name).values - reference.field(name).values)
        sel = np.where(mask, diff, 0.0)
        count = mask.sum()
        max_abs[name] = float(sel.max()) if count else float("nan")
        rms[name] = float(np.sqrt((sel**2).sum() / count)) if count else float("nan")
        row_counts = mask.sum(axis=1)
        with np.errstate(invalid="ignore"):
            per_time[name] = np.where(row_counts > 0, sel.max(axis=1), np.nan)
    return max_abs, rms, per_time


def compare(solution: Dataset, reference: Dataset, mask: np.ndarray | None = None):
    """Per-field max-abs and RMS error over masked points, plus per-time series."""
    gs, gr = solution.grid, reference.grid
    if (gs.nt, gs.nx) != (gr.nt, gr.nx) or not (
        math.isclose(gs.dt, gr.dt) and math.isclose(gs.dx, gr.dx)
    ):
        raise DataError(
            f"grid mismatch: ({gs.nt}, {gs.nx}, dt={gs.dt}, dx={gs.dx}) vs "
            f"({gr.nt}, {gr.nx}, dt={gr.dt}, dx={gr.dx})"
        )
    if mask is None:
        mask = np.ones((gs.nt, gs.nx), dtype=bool)
    names = [f.name for f in solution.fields if f.name in reference.names()]
    max_abs, rms, per_time = _error_metrics(solution, reference, mask, names)
    return {
        name: {"max_abs": max_abs[name], "rms": rms[name], "per_time": per_time[name]}
        for name in names
    }
