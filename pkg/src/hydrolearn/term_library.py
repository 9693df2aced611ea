"""Symbolic candidate terms, (P, T) signatures, and library-matrix evaluation.

A Term is a product of factors: powers of fields and their spatial
derivatives, explicit spatial monomials, sin(2*pi*u/P) factors, log-derivative
factors, and momentum-space kernels.  Terms serialize to a compact text
grammar (``u^2*u_x``, ``(x-500)^2*u``, ``sin(2pi/3*u)*u_x``, ``dlog(rho)``,
``K[|q|^2.5]u``) that round-trips through parse/render.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError
from .field_store import Dataset
from .preprocess import DerivativeSpec, diff_array

__all__ = [
    "FieldPower",
    "SpatialMonomial",
    "SpecialSin",
    "LogDeriv",
    "NonlocalKernel",
    "Term",
    "Signature",
    "Library",
    "generate_terms",
    "magnon_terms",
    "trap_terms",
    "domain_wall_terms",
    "hydro_velocity_terms",
    "hydro_density_terms",
    "momentum_terms",
    "signature",
    "filter_by_signature",
    "evaluate",
    "kernel_column_builder",
    "render_term",
    "parse_term",
    "render_equation",
]

MAX_LIBRARY_SIZE = 10_000

KERNEL_KINDS = ("abs_q_pow", "q2", "q4", "log_q", "q2_log_q", "q4_log_q")


# ---------------------------------------------------------------------------
# Factors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldPower:
    """(d^n f / dx^n) ** power"""

    name: str
    dx_order: int = 0
    power: int = 1

    def __post_init__(self):
        if self.dx_order < 0 or self.power < 1:
            raise ConfigError(f"bad FieldPower({self.name}, {self.dx_order}, {self.power})")


@dataclass(frozen=True)
class SpatialMonomial:
    """(x - center) ** power, an explicit function of the coordinate."""

    center: float
    power: int = 1

    def __post_init__(self):
        if self.power < 1:
            raise ConfigError(f"monomial power must be >= 1, got {self.power}")


@dataclass(frozen=True)
class SpecialSin:
    """sin(2*pi*f / period) for integer period."""

    name: str
    period: int

    def __post_init__(self):
        if self.period < 1:
            raise ConfigError(f"sin period must be a positive integer, got {self.period}")


@dataclass(frozen=True)
class LogDeriv:
    """(log f)_x, evaluated as f_x / f."""

    name: str


@dataclass(frozen=True)
class NonlocalKernel:
    """Momentum-space multiplier applied to one field.

    kind is one of abs_q_pow (|q|^mu), q2, q4, log_q, q2_log_q, q4_log_q.
    The q = 0 mode of |q|^mu and log|q| kernels is set to zero.
    """

    kind: str
    name: str
    mu: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "abs_q_pow" and (self.mu is None or self.mu <= 0):
            raise ConfigError("abs_q_pow kernel needs mu > 0")
        if self.kind != "abs_q_pow" and self.mu is not None:
            raise ConfigError(f"kernel {self.kind} takes no mu")


_FACTOR_RANK = {SpatialMonomial: 0, FieldPower: 1, SpecialSin: 2, LogDeriv: 4, NonlocalKernel: 5}


def _factor_key(f):
    if isinstance(f, SpatialMonomial):
        return (0, "", 0, f.power, f.center)
    if isinstance(f, FieldPower):
        rank = 1 if f.dx_order == 0 else 3
        return (rank, f.name, f.dx_order, f.power, 0.0)
    if isinstance(f, SpecialSin):
        return (2, f.name, f.period, 0, 0.0)
    if isinstance(f, LogDeriv):
        return (4, f.name, 0, 0, 0.0)
    return (5, f.name, KERNEL_KINDS.index(f.kind), 0, f.mu or 0.0)


def _canonicalize(factors):
    """Merge repeated field powers / monomials, sort into canonical order."""
    fp = {}
    mono = {}
    rest = []
    for f in factors:
        if isinstance(f, FieldPower):
            key = (f.name, f.dx_order)
            fp[key] = fp.get(key, 0) + f.power
        elif isinstance(f, SpatialMonomial):
            mono[f.center] = mono.get(f.center, 0) + f.power
        else:
            rest.append(f)
    merged = [FieldPower(n, d, p) for (n, d), p in fp.items()]
    merged += [SpatialMonomial(c, p) for c, p in mono.items()]
    merged += rest
    return tuple(sorted(merged, key=_factor_key))


@dataclass(frozen=True)
class Term:
    """Canonical product of factors; the empty product is the constant 1."""

    factors: tuple = ()

    def __post_init__(self):
        factors = _canonicalize(self.factors)
        kernels = [f for f in factors if isinstance(f, NonlocalKernel)]
        if len(kernels) > 1:
            raise ConfigError("at most one nonlocal kernel per term")
        if kernels and len(factors) > 1:
            raise ConfigError("a nonlocal-kernel term carries exactly one field factor")
        object.__setattr__(self, "factors", factors)

    @property
    def is_constant(self):
        return not self.factors

    def field_names(self):
        names = set()
        for f in self.factors:
            if not isinstance(f, SpatialMonomial):
                names.add(f.name)
        return names

    def max_dx_order(self):
        orders = [f.dx_order for f in self.factors if isinstance(f, FieldPower)]
        orders += [1 for f in self.factors if isinstance(f, LogDeriv)]
        return max(orders, default=0)

    def __str__(self):
        return render_term(self)


@dataclass(frozen=True)
class Signature:
    """Parity under spatial inversion (p) and time reversal (t).

    Components are +1, -1, or 0 for mixed/unknown; 0 absorbs products.
    """

    p: int
    t: int

    def __mul__(self, other):
        return Signature(self.p * other.p, self.t * other.t)


@dataclass(frozen=True)
class Library:
    """Ordered, deduplicated candidate terms for the target's time derivative."""

    terms: tuple
    target: str

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) < 1:
            raise ConfigError("library must contain at least one term")
        if len(set(terms)) != len(terms):
            dupes = [t for t in terms if terms.count(t) > 1]
            raise ConfigError(f"duplicate canonical terms in library: {dupes[0]}")
        if len(terms) > MAX_LIBRARY_SIZE:
            raise ConfigError(f"library of {len(terms)} terms exceeds guard {MAX_LIBRARY_SIZE}")
        object.__setattr__(self, "terms", terms)

    def __len__(self):
        return len(self.terms)

    def term_strings(self):
        return [render_term(t) for t in self.terms]


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def generate_terms(
    target: str,
    fields,
    max_dx: int = 2,
    include_constant: bool = True,
    monomial=None,
    sin_periods=None,
    log_fields=(),
    kernels=(),
) -> Library:
    """Exhaustive product library within a power/derivative budget.

    fields: list of (name, max_power) pairs.  Base terms are all products of
    undifferentiated powers within the budget; each base term is optionally
    multiplied by one single-derivative factor d^n f/dx^n, n = 1..max_dx.
    Extras add spatial monomials (center, max_power) times the base powers,
    sin(2*pi*f/P)*f_x factors, (log f)_x factors, and nonlocal kernels.
    Ordering is graded: total degree, then canonical factor order.
    """
    names = [n for n, _ in fields]
    budgets = [b for _, b in fields]
    base_combos = []
    for powers in itertools.product(*(range(b + 1) for b in budgets)):
        base = tuple(
            FieldPower(n, 0, p) for n, p in zip(names, powers) if p > 0
        )
        base_combos.append(base)

    terms = []
    for base in base_combos:
        if base or include_constant:
            terms.append(Term(base))
        for fname in names:
            for order in range(1, max_dx + 1):
                terms.append(Term(base + (FieldPower(fname, order, 1),)))
    if monomial is not None:
        center, max_k = monomial
        for k in range(1, max_k + 1):
            for base in base_combos:
                terms.append(Term(base + (SpatialMonomial(center, k),)))
    if sin_periods:
        for fname, periods in sin_periods.items():
            for period in periods:
                terms.append(Term((SpecialSin(fname, period), FieldPower(fname, 1, 1))))
    for fname in log_fields:
        terms.append(Term((LogDeriv(fname),)))
    for spec in kernels:
        kind, fname = spec[0], spec[1]
        mu = spec[2] if len(spec) > 2 else None
        terms.append(Term((NonlocalKernel(kind, fname, mu),)))

    seen, unique = set(), []
    for t in terms:
        if t not in seen:
            seen.add(t)
            unique.append(t)
    if len(unique) > MAX_LIBRARY_SIZE:
        raise ConfigError(
            f"budget would produce {len(unique)} terms, over the {MAX_LIBRARY_SIZE} guard"
        )
    unique.sort(key=_term_sort_key)
    return Library(terms=tuple(unique), target=target)


def _term_degree(term):
    deg = 0
    for f in term.factors:
        if isinstance(f, (FieldPower, SpatialMonomial)):
            deg += f.power
        else:
            deg += 1
    return deg


def _term_sort_key(term):
    return (_term_degree(term), tuple(_factor_key(f) for f in term.factors))


def _parse_all(strings):
    return tuple(parse_term(s) for s in strings)


def magnon_terms(field: str = "u", max_dx: int = 4) -> Library:
    """1, d^n u, u d^n u for n = 1..max_dx (the single-observable library)."""
    return generate_terms(field, [(field, 1)], max_dx=max_dx, include_constant=True)


def trap_terms(center: float, field: str = "u", max_dx: int = 4, max_k: int = 4) -> Library:
    """u, d^n u, (x-c)^k, (x-c)^k u: wave packet in an explicit potential."""
    terms = [Term((FieldPower(field, 0, 1),))]
    terms += [Term((FieldPower(field, n, 1),)) for n in range(1, max_dx + 1)]
    terms += [Term((SpatialMonomial(center, k),)) for k in range(1, max_k + 1)]
    terms += [
        Term((SpatialMonomial(center, k), FieldPower(field, 0, 1))) for k in range(1, max_k + 1)
    ]
    return Library(terms=tuple(terms), target=field)


def domain_wall_terms(
    field: str = "u", max_dx: int = 4, max_u_power: int = 5, sin_periods=()
) -> Library:
    """d^n u and u^m u_x (conservation-law form); optionally sin(2pi u/P) u_x."""
    terms = [Term((FieldPower(field, n, 1),)) for n in range(1, max_dx + 1)]
    terms += [
        Term((FieldPower(field, 0, m), FieldPower(field, 1, 1)))
        for m in range(1, max_u_power + 1)
    ]
    terms += [
        Term((SpecialSin(field, p), FieldPower(field, 1, 1))) for p in sin_periods
    ]
    return Library(terms=tuple(terms), target=field)


def hydro_velocity_terms(
    rho: str = "rho", v: str = "v", max_rho_power: int = 5, log_terms: bool = True
) -> Library:
    """Candidate right-hand sides for the velocity equation of a
    density-velocity pair: polynomial prefactors times first/second
    derivatives, plus log-derivative terms (45 terms at default budget)."""
    R = lambda n: (FieldPower(rho, 0, n),) if n else ()
    terms = []
    terms += [Term(R(n)) for n in range(0, max_rho_power + 1)]  # 1, rho..rho^5
    terms += [Term((FieldPower(v, 0, 2),))]  # v^2
    terms += [Term(R(n) + (FieldPower(rho, 1, 1),)) for n in range(0, max_rho_power + 1)]
    terms += [Term(R(n) + (FieldPower(rho, 2, 1),)) for n in range(0, 3)]
    terms += [Term((FieldPower(v, 0, 2), FieldPower(rho, 0, 1)))]
    terms += [Term((FieldPower(v, 0, 2), FieldPower(rho, 2, 1)))]
    terms += [Term((FieldPower(rho, 1, 1), FieldPower(v, 1, 1)))]
    terms += [Term(R(n) + (FieldPower(v, 2, 1),)) for n in range(0, 3)]
    terms += [Term((FieldPower(rho, 1, 2),)), Term((FieldPower(v, 1, 2),))]
    terms += [Term(R(n) + (FieldPower(v, 0, 1),)) for n in range(0, 4)]
    terms += [Term(R(n) + (FieldPower(v, 1, 1),)) for n in range(0, 3)]
    terms += [
        Term(R(n) + (FieldPower(v, 0, 1), FieldPower(v, 1, 1)))
        for n in range(0, max_rho_power + 1)
    ]
    terms += [
        Term(R(n) + (FieldPower(v, 0, 2), FieldPower(rho, 1, 1)))
        for n in range(0, max_rho_power + 1)
    ]
    if log_terms:
        terms += [Term((LogDeriv(rho),))]
        terms += [Term((FieldPower(v, 0, 2), LogDeriv(rho)))]
    return Library(terms=tuple(terms), target=v)


def hydro_density_terms(rho: str = "rho", v: str = "v") -> Library:
    """Candidate right-hand sides for the continuity-equation search."""
    strings = ["1", rho, f"{rho}_x", f"{rho}_xx", v, f"{v}_x", f"{v}_xx",
               f"{rho}*{v}_x", f"{v}*{rho}_x", f"{v}*{v}_x", f"{rho}*{rho}_x"]
    return Library(terms=_parse_all(strings), target=rho)


def momentum_terms(field: str = "u", mu: float = 2.0) -> Library:
    """u and momentum-kernel images of u: q^2, q^4, |q|^mu, and log kernels."""
    terms = [Term((FieldPower(field, 0, 1),))]
    terms += [Term((NonlocalKernel(k, field),)) for k in ("q2", "q4")]
    terms += [Term((NonlocalKernel("abs_q_pow", field, mu),))]
    terms += [Term((NonlocalKernel(k, field),)) for k in ("log_q", "q2_log_q", "q4_log_q")]
    return Library(terms=tuple(terms), target=field)


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------


def _field_signature(parities, name):
    if name not in parities:
        raise ConfigError(f"no parity information for field {name!r}")
    p, t = parities[name]
    if p is None or t is None:
        raise ConfigError(f"field {name!r} has unset parity; set p_parity/t_parity")
    return Signature(p, t)


def signature(term: Term, parities) -> Signature:
    """(P, T) signature of a term given field parity assignments.

    parities: mapping name -> (p, t); derivatives flip P, log-derivative
    counts as one derivative, momentum kernels are even in q.
    """
    sig = Signature(1, 1)
    for f in term.factors:
        if isinstance(f, FieldPower):
            fs = _field_signature(parities, f.name)
            sig = sig * Signature(
                (fs.p ** f.power) * (-1) ** (f.dx_order * f.power), fs.t ** f.power
            )
        elif isinstance(f, SpatialMonomial):
            sig = sig * Signature((-1) ** f.power, 1)
        elif isinstance(f, SpecialSin):
            sig = sig * _field_signature(parities, f.name)
        elif isinstance(f, LogDeriv):
            fs = _field_signature(parities, f.name)
            sig = sig * Signature(fs.p * -1, fs.t)
        elif isinstance(f, NonlocalKernel):
            sig = sig * _field_signature(parities, f.name)
    return sig


def filter_by_signature(lib: Library, want: Signature, parities) -> Library:
    """Keep terms whose signature matches; a 0 component is a wildcard."""
    kept = []
    for term in lib.terms:
        sig = signature(term, parities)
        if (want.p == 0 or sig.p == want.p) and (want.t == 0 or sig.t == want.t):
            kept.append(term)
    if not kept:
        raise ConfigError(
            f"signature filter ({want.p:+d}, {want.t:+d}) removed every term; "
            "check the field parities or relax the filter"
        )
    return Library(terms=tuple(kept), target=lib.target)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _kernel_multiplier(kind, mu, q):
    absq = np.abs(q)
    with np.errstate(divide="ignore"):
        logq = np.where(absq > 0, np.log(np.where(absq > 0, absq, 1.0)), 0.0)
    if kind == "abs_q_pow":
        return np.where(absq > 0, absq**mu, 0.0)
    if kind == "q2":
        return q**2
    if kind == "q4":
        return q**4
    if kind == "log_q":
        return logq
    if kind == "q2_log_q":
        return q**2 * logq
    return q**4 * logq


def _apply_kernel(values, grid, kernel):
    if not grid.periodic_x:
        raise ConfigError("nonlocal kernels require a periodic grid")
    q = 2 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    mult = _kernel_multiplier(kernel.kind, kernel.mu, q)
    out = np.fft.ifft(mult * np.fft.fft(values, axis=1), axis=1)
    if np.isrealobj(values):
        return out.real
    return out


class _FieldCache:
    """Memoizes derivative arrays per (field, order) during one evaluation."""

    def __init__(self, ds, scheme):
        self.ds = ds
        self.scheme = scheme
        self._cache = {}

    def get(self, name, order):
        key = (name, order)
        if key not in self._cache:
            vals = self.ds.field(name).values
            if order == 0:
                self._cache[key] = vals
            else:
                spec = DerivativeSpec("space", order, self.scheme)
                self._cache[key] = diff_array(vals, self.ds.grid, spec)
        return self._cache[key]


def _eval_factor(f, cache: _FieldCache):
    ds = cache.ds
    if isinstance(f, FieldPower):
        base = cache.get(f.name, f.dx_order)
        return base if f.power == 1 else base**f.power
    if isinstance(f, SpatialMonomial):
        row = (ds.grid.xs() - f.center) ** f.power
        return np.broadcast_to(row, (ds.grid.nt, ds.grid.nx))
    if isinstance(f, SpecialSin):
        return np.sin(2 * np.pi / f.period * cache.get(f.name, 0))
    if isinstance(f, LogDeriv):
        with np.errstate(divide="ignore", invalid="ignore"):
            return cache.get(f.name, 1) / cache.get(f.name, 0)
    return _apply_kernel(cache.get(f.name, 0), ds.grid, f)


def eval_term(term: Term, ds: Dataset, scheme: str = "central2", cache=None) -> np.ndarray:
    """Pointwise (nt, nx) values of a term on a dataset."""
    if cache is None:
        cache = _FieldCache(ds, scheme)
    if term.is_constant:
        return np.ones((ds.grid.nt, ds.grid.nx))
    out = None
    for f in term.factors:
        vals = _eval_factor(f, cache)
        out = vals.copy() if out is None else out * vals
    return out


def evaluate(lib: Library, ds: Dataset, mask: np.ndarray, scheme: str = "central2"):
    """Build the regression target and library matrix on the masked grid.

    Returns (y, theta, rows): y[k] is the time derivative of the target
    field at flattened grid index rows[k] (row-major, t outer), and
    theta[k, j] is term j evaluated there.
    """
    g = ds.grid
    if mask.shape != (g.nt, g.nx):
        raise ConfigError(f"mask shape {mask.shape} does not match grid ({g.nt}, {g.nx})")
    rows = np.flatnonzero(mask.ravel())
    cache = _FieldCache(ds, scheme)
    target_vals = ds.field(lib.target).values
    y = diff_array(target_vals, g, DerivativeSpec("time", 1, "central2")).ravel()[rows]

    any_complex = any(ds.field(n).is_complex for t in lib.terms for n in t.field_names())
    dtype = np.complex128 if (any_complex or np.iscomplexobj(y)) else np.float64
    theta = np.empty((rows.size, len(lib.terms)), dtype=dtype)
    for j, term in enumerate(lib.terms):
        col = eval_term(term, ds, scheme, cache).ravel()[rows]
        if not np.all(np.isfinite(col.real)) or (
            np.iscomplexobj(col) and not np.all(np.isfinite(col.imag))
        ):
            raise NumericsError(f"non-finite column for term {render_term(term)}")
        theta[:, j] = col
    return y, theta, rows


def kernel_column_builder(lib: Library, ds: Dataset, mask: np.ndarray):
    """Callable mu -> rebuilt |q|^mu column for the library's abs_q_pow term.

    Returns (term_index, builder); used by the mu line search so only the
    one kernel column is recomputed per trial exponent.
    """
    idx = None
    for j, term in enumerate(lib.terms):
        for f in term.factors:
            if isinstance(f, NonlocalKernel) and f.kind == "abs_q_pow":
                idx = j
                fname = f.name
    if idx is None:
        raise ConfigError("library has no |q|^mu kernel term")
    rows = np.flatnonzero(mask.ravel())
    vals = ds.field(fname).values

    def build(mu):
        kern = NonlocalKernel("abs_q_pow", fname, mu)
        return _apply_kernel(vals, ds.grid, kern).ravel()[rows]

    return idx, build


# ---------------------------------------------------------------------------
# Text grammar
# ---------------------------------------------------------------------------


def _fmt_float(x):
    s = f"{x:g}"
    return s


def _render_factor(f):
    if isinstance(f, FieldPower):
        base = f.name + ("_" + "x" * f.dx_order if f.dx_order else "")
        return base + (f"^{f.power}" if f.power > 1 else "")
    if isinstance(f, SpatialMonomial):
        if f.center == 0:
            base = "x"
        else:
            sign = "-" if f.center > 0 else "+"
            base = f"(x{sign}{_fmt_float(abs(f.center))})"
        return base + (f"^{f.power}" if f.power > 1 else "")
    if isinstance(f, SpecialSin):
        return f"sin(2pi/{f.period}*{f.name})"
    if isinstance(f, LogDeriv):
        return f"dlog({f.name})"
    kern = {
        "q2": "q^2",
        "q4": "q^4",
        "log_q": "log|q|",
        "q2_log_q": "q^2*log|q|",
        "q4_log_q": "q^4*log|q|",
    }
    inner = f"|q|^{_fmt_float(f.mu)}" if f.kind == "abs_q_pow" else kern[f.kind]
    return f"K[{inner}]{f.name}"


def render_term(term: Term) -> str:
    if term.is_constant:
        return "1"
    return "*".join(_render_factor(f) for f in term.factors)


def _split_top(s, sep="*"):
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


_SIN_RE = re.compile(r"^sin\(2pi/(\d+)\*([A-Za-z]\w*)\)$")
_DLOG_RE = re.compile(r"^dlog\(([A-Za-z]\w*)\)$")
_KERNEL_RE = re.compile(r"^K\[([^\]]+)\]([A-Za-z]\w*)$")
_MONO_RE = re.compile(r"^\(x([+-][0-9.eE+-]+)\)(?:\^(\d+))?$")
_X_RE = re.compile(r"^x(?:\^(\d+))?$")
_FIELD_RE = re.compile(r"^([A-Za-z]\w*?)(_x+)?(?:\^(\d+))?$")

_KERNEL_NAMES = {
    "q^2": "q2",
    "q^4": "q4",
    "log|q|": "log_q",
    "q^2*log|q|": "q2_log_q",
    "q^2log|q|": "q2_log_q",
    "q^4*log|q|": "q4_log_q",
    "q^4log|q|": "q4_log_q",
}


def _parse_factor(s):
    s = s.strip()
    m = _SIN_RE.match(s)
    if m:
        return SpecialSin(m.group(2), int(m.group(1)))
    m = _DLOG_RE.match(s)
    if m:
        return LogDeriv(m.group(1))
    m = _KERNEL_RE.match(s)
    if m:
        inner, fname = m.group(1), m.group(2)
        if inner in _KERNEL_NAMES:
            return NonlocalKernel(_KERNEL_NAMES[inner], fname)
        pm = re.match(r"^\|q\|\^([0-9.eE+-]+)$", inner)
        if pm:
            return NonlocalKernel("abs_q_pow", fname, float(pm.group(1)))
        raise ConfigError(f"unknown kernel spec {inner!r}")
    m = _MONO_RE.match(s)
    if m:
        offset = float(m.group(1))
        return SpatialMonomial(-offset, int(m.group(2) or 1))
    m = _X_RE.match(s)
    if m:
        return SpatialMonomial(0.0, int(m.group(1) or 1))
    m = _FIELD_RE.match(s)
    if m:
        name, deriv, power = m.groups()
        order = len(deriv) - 1 if deriv else 0
        return FieldPower(name, order, int(power or 1))
    raise ConfigError(f"cannot parse term factor {s!r}")


def parse_term(s: str) -> Term:
    s = s.strip()
    if s == "1":
        return Term(())
    return Term(tuple(_parse_factor(p) for p in _split_top(s)))


# ---------------------------------------------------------------------------
# Equation rendering
# ---------------------------------------------------------------------------


def _coef_str(c):
    return f"{c:#.4g}".rstrip(".")


def render_equation(terms, coefficients, target: str = "u") -> str:
    """Render u_t = sum(coef * term) as a left-hand-side-equals-zero string.

    Coefficients below 1e-12 in magnitude are omitted.  When every retained
    coefficient is purely imaginary (within 1e-6 relative), the equation is
    multiplied by i and printed with real coefficients.
    """
    pairs = [
        (t, c) for t, c in zip(terms, coefficients) if abs(c) >= 1e-12
    ]
    if not pairs:
        return f"{target}_t = 0"
    coefs = np.array([c for _, c in pairs], dtype=complex)
    scale = np.max(np.abs(coefs))
    imaginary = np.all(np.abs(coefs.real) <= 1e-6 * scale)
    if imaginary:
        lhs_coefs = [-(1j * c).real for _, c in pairs]  # i*u_t - sum(i c) T = 0
        head = f"i*{target}_t"
    else:
        real = np.all(np.abs(coefs.imag) <= 1e-6 * scale)
        if real:
            lhs_coefs = [-c.real for _, c in pairs]
        else:
            lhs_coefs = [-c for _, c in pairs]
        head = f"{target}_t"
    out = [head]
    for (term, _), c in zip(pairs, lhs_coefs):
        name = render_term(term) if isinstance(term, Term) else str(term)
        if isinstance(c, complex):
            out.append(f"+ ({_coef_str(c.real)}{c.imag:+#.4g}i)*{name}")
        else:
            sign = "+" if c >= 0 else "-"
            out.append(f"{sign} {_coef_str(abs(c))}*{name}")
    return " ".join(out) + " = 0"
