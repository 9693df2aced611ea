"""Sparse selection of PDE terms by penalized regression.

The objective is ||y - Theta xi||_2 + lambda0 * ||xi||_0 (unsquared error
norm; an optional lambda2 ridge stabilizes near-collinear columns during
subset solves).  Solvers: exhaustive subset search, a sampling-based
cross-entropy search, and sequentially thresholded ridge regression.  All
solvers report coefficients refit by unpenalized least squares on the final
active set, so residuals are comparable across solvers.

Subset solves run against a QR compression of the library matrix: with
Theta = Q R and qty = Q^H y, the residual of any column subset S satisfies
||y - Theta_S xi||^2 = ||y||^2 - ||qty||^2 + ||qty - R_S xi||^2, so each
candidate subset costs O(M k^2) instead of O(rows k^2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import ConfigError, NumericsError
from .term_library import render_equation

__all__ = [
    "RegressionProblem",
    "DiscoveredPDE",
    "Frontier",
    "least_squares",
    "brute_force",
    "cross_entropy",
    "stridge",
    "frontier_scan",
    "batch_uncertainty",
    "refine_mu",
]

BRUTE_FORCE_MAX_TERMS = 25


@dataclass(frozen=True)
class RegressionProblem:
    theta: np.ndarray  # rows x M library matrix
    y: np.ndarray  # rows target vector
    lambda0: float
    lambda2: float = 0.0
    normalize_columns: bool = True
    terms: tuple = ()  # optional labels (Term or str), len M when given
    target: str = "u"

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta))
        y = np.asarray(self.y).ravel()
        if theta.shape[0] != y.size:
            raise ConfigError(
                f"theta has {theta.shape[0]} rows but y has {y.size} entries"
            )
        if self.lambda0 < 0 or self.lambda2 < 0:
            raise ConfigError("penalties must be nonnegative")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "y", y)
        if self.terms and len(self.terms) != theta.shape[1]:
            raise ConfigError("terms labels do not match the number of columns")

    @property
    def n_terms(self):
        return self.theta.shape[1]

    def term_labels(self):
        if self.terms:
            return list(self.terms)
        return [f"T{j}" for j in range(self.n_terms)]


@dataclass(frozen=True)
class DiscoveredPDE:
    active: tuple  # sorted indices of nonzero coefficients
    xi: np.ndarray  # length-M coefficient vector, zeros off the active set
    residual: float  # ||y - Theta xi||_2
    objective: float  # residual + lambda0 * |active|
    lambda0: float
    equation: str
    terms: tuple = ()
    target: str = "u"
    flags: tuple = ()

    @property
    def n_active(self):
        return len(self.active)

    def coefficients(self):
        """Active-set coefficients in library order."""
        return {self.terms[j] if self.terms else j: self.xi[j] for j in self.active}

    def to_json_dict(self):
        labels = [str(t) for t in self.terms] if self.terms else [f"T{j}" for j in range(len(self.xi))]
        return {
            "lambda0": self.lambda0,
            "active_terms": [labels[j] for j in self.active],
            "coefficients": [
                [float(np.real(self.xi[j])), float(np.imag(self.xi[j]))] for j in self.active
            ],
            "residual": self.residual,
            "objective": self.objective,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class Frontier:
    entries: tuple  # (lambda0, DiscoveredPDE), lambda0 descending, duplicates merged

    def to_json_dict(self):
        return {"entries": [pde.to_json_dict() for _, pde in self.entries]}


# ---------------------------------------------------------------------------
# Linear algebra core
# ---------------------------------------------------------------------------


def least_squares(theta, y, lambda2: float = 0.0):
    """Minimize ||y - theta xi||^2 + lambda2 ||xi||^2 via orthogonal factorization."""
    theta = np.atleast_2d(np.asarray(theta))
    y = np.asarray(y).ravel()
    n, k = theta.shape
    if k == 0:
        raise ConfigError("least_squares needs a nonempty column set")
    if lambda2 > 0:
        dtype = np.result_type(theta.dtype, y.dtype, np.float64)
        aug = np.vstack([theta, np.sqrt(lambda2) * np.eye(k, dtype=dtype)])
        rhs = np.concatenate([y.astype(dtype), np.zeros(k, dtype=dtype)])
        xi, _, rank, _ = np.linalg.lstsq(aug, rhs, rcond=None)
        return xi
    xi, _, rank, _ = np.linalg.lstsq(theta, y, rcond=None)
    if rank < k:
        raise NumericsError(
            f"rank-deficient system (rank {rank} < {k} columns); "
            "pass lambda2=1e-12 to stabilize"
        )
    return xi


class _Compressed:
    """QR compression of a (possibly column-normalized) regression problem."""

    def __init__(self, problem: RegressionProblem):
        theta = problem.theta
        y = problem.y
        dtype = np.result_type(theta.dtype, y.dtype, np.float64)
        theta = theta.astype(dtype, copy=False)
        y = y.astype(dtype, copy=False)
        norms = np.linalg.norm(theta, axis=0)
        if problem.normalize_columns:
            safe = np.where(norms > 0, norms, 1.0)
            theta = theta / safe
            self.scale = np.where(norms > 0, safe, 1.0)
        else:
            self.scale = np.ones(theta.shape[1])
        q, r = scipy.linalg.qr(theta, mode="economic")
        self.r = r
        self.qty = q.conj().T @ y
        self.ynorm_sq = float(np.real(np.vdot(y, y)))
        self.res0_sq = max(self.ynorm_sq - float(np.real(np.vdot(self.qty, self.qty))), 0.0)
        self.gram = r.conj().T @ r
        self.b = r.conj().T @ self.qty  # = Theta^H y in normalized coordinates
        self.lambda2 = problem.lambda2
        self.m = theta.shape[1]
        self.dtype = dtype

    def solve_subset(self, idx):
        """Least-squares (plus ridge) on a column subset; returns
        (coefficients in normalized coordinates, residual norm)."""
        idx = np.asarray(idx, dtype=int)
        if idx.size == 0:
            return np.zeros(0, dtype=self.dtype), float(np.sqrt(self.ynorm_sq))
        g = self.gram[np.ix_(idx, idx)]
        if self.lambda2 > 0:
            g = g + self.lambda2 * np.eye(idx.size, dtype=self.dtype)
        try:
            xi = np.linalg.solve(g, self.b[idx])
        except np.linalg.LinAlgError:
            rs = self.r[:, idx]
            xi = np.linalg.lstsq(rs, self.qty, rcond=None)[0]
        res_sq = (
            self.ynorm_sq
            - 2 * float(np.real(np.vdot(self.b[idx], xi)))
            + float(np.real(np.vdot(xi, self.gram[np.ix_(idx, idx)] @ xi)))
        )
        return xi, float(np.sqrt(max(res_sq, 0.0)))

    def search_objective(self, idx, lambda0):
        """Selection score: residual + lambda0 |S| (+ lambda2 ||xi||^2).

        The ridge term penalizes the coefficients in original (unnormalized)
        units; it is what rules out wild cancellation combinations among
        near-collinear columns.
        """
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        xi, res = self.solve_subset(idx)
        obj = res + lambda0 * idx.size
        if self.lambda2 > 0 and idx.size:
            raw = xi / self.scale[idx]
            obj += self.lambda2 * float(np.real(np.vdot(raw, raw)))
        return obj

    def refit(self, idx):
        """Unpenalized least-squares refit on the subset, in original units."""
        idx = np.asarray(idx, dtype=int)
        xi_full = np.zeros(self.m, dtype=self.dtype)
        if idx.size == 0:
            return xi_full, float(np.sqrt(self.ynorm_sq))
        rs = self.r[:, idx]
        xi = np.linalg.lstsq(rs, self.qty, rcond=None)[0]
        res_sq = self.res0_sq + float(np.linalg.norm(self.qty - rs @ xi) ** 2)
        xi_full[idx] = xi / self.scale[idx]
        return xi_full, float(np.sqrt(max(res_sq, 0.0)))


def _make_pde(problem, comp, idx, flags=()):
    idx = tuple(sorted(int(j) for j in idx))
    xi_full, residual = comp.refit(np.array(idx, dtype=int))
    objective = residual + problem.lambda0 * len(idx)
    labels = problem.term_labels()
    eq = render_equation([labels[j] for j in idx], [xi_full[j] for j in idx], problem.target)
    return DiscoveredPDE(
        active=idx,
        xi=xi_full,
        residual=residual,
        objective=objective,
        lambda0=problem.lambda0,
        equation=eq,
        terms=tuple(labels),
        target=problem.target,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# BruteForce
# ---------------------------------------------------------------------------


def _chunked_objectives(comp, combos, lambda0):
    """Search objectives for an (ncombo, k) array of equal-size subsets."""
    n, k = combos.shape
    g0 = comp.gram[combos[:, :, None], combos[:, None, :]]
    g = g0 + comp.lambda2 * np.eye(k, dtype=comp.dtype) if comp.lambda2 > 0 else g0
    b = comp.b[combos]
    try:
        xi = np.linalg.solve(g, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return np.array([comp.search_objective(c, lambda0) for c in combos])
    quad = np.real(np.einsum("ni,nij,nj->n", xi.conj(), g0, xi))
    cross = 2 * np.real(np.einsum("ni,ni->n", b.conj(), xi))
    res_sq = np.maximum(comp.ynorm_sq - cross + quad, 0.0)
    obj = np.sqrt(res_sq) + lambda0 * k
    if comp.lambda2 > 0:
        raw = xi / comp.scale[combos]
        obj += comp.lambda2 * np.real(np.einsum("ni,ni->n", raw.conj(), raw))
    return obj


def brute_force(problem: RegressionProblem) -> DiscoveredPDE:
    """Exact minimizer of the L0-penalized objective over all 2^M subsets.

    Ties break toward fewer terms, then the lexicographically smallest
    index set; the result is deterministic.
    """
    m = problem.n_terms
    if m > BRUTE_FORCE_MAX_TERMS:
        raise ConfigError(
            f"{m} terms exceeds the 2^{BRUTE_FORCE_MAX_TERMS} subset guard; "
            "use cross_entropy for larger libraries"
        )
    comp = _Compressed(problem)
    best_obj = float(np.sqrt(comp.ynorm_sq))  # empty set
    best_idx = ()
    chunk = 32768
    k_max = min(m, problem.theta.shape[0])  # never fit more terms than rows
    for k in range(1, k_max + 1):
        if problem.lambda0 * k >= best_obj:
            break  # the penalty alone already exceeds the incumbent
        combo_iter = itertools.combinations(range(m), k)
        while True:
            block = list(itertools.islice(combo_iter, chunk))
            if not block:
                break
            combos = np.array(block, dtype=int)
            objs = _chunked_objectives(comp, combos, problem.lambda0)
            i = int(np.argmin(objs))
            if objs[i] < best_obj:
                best_obj = float(objs[i])
                best_idx = tuple(int(j) for j in combos[i])
    return _make_pde(problem, comp, best_idx)


# ---------------------------------------------------------------------------
# CrossEntropy
# ---------------------------------------------------------------------------


def _term_probabilities(weights, policy):
    if policy == "softmax":
        e = np.exp(weights - np.max(weights))
        return e / e.sum()
    return 1.0 / (1.0 + np.exp(-weights))  # per-term sigmoid variant


def cross_entropy(
    problem: RegressionProblem,
    seed: int = 0,
    batch_size: int = 100,
    num_rollouts: int = 100,
    elite_frac: float = 0.01,
    niter: int = 40,
    sigma_w: float = 1.0,
    policy: str = "sigmoid",
    _compressed=None,
) -> DiscoveredPDE:
    """Cross-entropy search over term subsets.

    Maintains a weight vector defining term-inclusion probabilities; each
    iteration perturbs it with i.i.d. Gaussians per batch member, scores
    members by the best objective over Bernoulli-sampled rollouts, and moves
    the weights to the elite mean.  The reported PDE is the best subset seen
    across every rollout, never a sample from the final policy alone.

    policy="sigmoid" (default) maps each weight through an independent
    logistic; policy="softmax" normalizes inclusion probabilities across all
    terms, which keeps the expected active-set size at one and cannot reach
    multi-term optima -- it is retained for reference.
    """
    if policy not in ("softmax", "sigmoid"):
        raise ConfigError(f"policy must be 'softmax' or 'sigmoid', got {policy!r}")
    m = problem.n_terms
    comp = _compressed if _compressed is not None else _Compressed(problem)
    rng = np.random.Generator(np.random.PCG64(seed))
    lambda0 = problem.lambda0

    cache = {}

    def subset_objective(mask):
        key = mask.tobytes()
        hit = cache.get(key)
        if hit is None:
            hit = comp.search_objective(np.flatnonzero(mask), lambda0)
            cache[key] = hit
        return hit

    best = {"obj": float(np.sqrt(comp.ynorm_sq)), "mask": np.zeros(m, dtype=bool)}

    def run_rollouts(weights):
        probs = _term_probabilities(weights, policy)
        local_best = np.inf
        for _ in range(num_rollouts):
            mask = rng.random(m) < probs
            obj = subset_objective(mask)
            if obj < local_best:
                local_best = obj
            if obj < best["obj"]:
                best["obj"] = obj
                best["mask"] = mask.copy()
        return local_best

    n_elite = max(1, int(round(elite_frac * batch_size)))
    weights = np.zeros(m)
    sigma = np.full(m, float(sigma_w))
    for _ in range(niter):
        population = weights + sigma * rng.standard_normal((batch_size, m))
        scores = np.array([run_rollouts(w) for w in population])
        elite = population[np.argsort(scores, kind="stable")[:n_elite]]
        weights = elite.mean(axis=0)
        if n_elite >= 2:
            sigma = elite.std(axis=0)
    run_rollouts(weights)

    idx = tuple(int(j) for j in np.flatnonzero(best["mask"]))
    return _make_pde(problem, comp, idx)


# ---------------------------------------------------------------------------
# STRidge
# ---------------------------------------------------------------------------


def stridge(problem: RegressionProblem, tol_grid=None, max_iter: int = 25) -> DiscoveredPDE:
    """Sequentially thresholded ridge regression over an annealing tolerance grid.

    For each tolerance: alternate (ridge solve on the active set) and
    (zero out coefficients below the tolerance) to a fixed point, then score
    the L0-penalized objective; the best active set over the grid wins.
    Thresholding acts on unit-norm-column coefficients.
    """
    m = problem.n_terms
    comp = _Compressed(problem)
    full_xi, _ = comp.solve_subset(np.arange(m))
    scale = np.max(np.abs(full_xi)) if m else 1.0
    if tol_grid is None:
        tol_grid = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, 25) * max(scale, 1e-300)])

    best_obj = float(np.sqrt(comp.ynorm_sq))
    best_idx = ()
    for tol in tol_grid:
        active = np.arange(m)
        for _ in range(max_iter):
            xi, _ = comp.solve_subset(active)
            keep = np.abs(xi) >= tol
            new_active = active[keep]
            if new_active.size == active.size:
                break
            active = new_active
            if active.size == 0:
                break
        idx = np.asarray(active, dtype=int)
        obj = comp.search_objective(idx, problem.lambda0)
        if obj < best_obj - 1e-15 or (
            abs(obj - best_obj) <= 1e-15 and idx.size < len(best_idx)
        ):
            best_obj = obj
            best_idx = tuple(int(j) for j in idx)
    return _make_pde(problem, comp, best_idx)


# ---------------------------------------------------------------------------
# Frontier scan
# ---------------------------------------------------------------------------

_SOLVERS = {}


def _solver_by_name(solver):
    if callable(solver):
        return solver
    try:
        return _SOLVERS[solver]
    except KeyError:
        raise ConfigError(f"unknown solver {solver!r}; have {sorted(_SOLVERS)}") from None


def frontier_scan(
    problem: RegressionProblem, lambda0_grid, solver="brute_force", threads: int = 1, **kw
) -> Frontier:
    """One discovery per penalty value, duplicates merged, overfit flagged.

    lambda0_grid must be positive and sorted descending.  Entries whose
    residual improves by less than 1% over the previous retained entry are
    flagged 'potential-overfit'.  threads > 1 evaluates penalty points in a
    worker pool; the merged result is identical to the serial scan.
    """
    grid = np.asarray(list(lambda0_grid), dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("lambda0 grid must be positive")
    if np.any(np.diff(grid) > 0):
        raise ConfigError("lambda0 grid must be sorted descending")
    fn = _solver_by_name(solver)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            pdes = list(pool.map(lambda l0: fn(replace(problem, lambda0=float(l0)), **kw), grid))
    else:
        pdes = [fn(replace(problem, lambda0=float(l0)), **kw) for l0 in grid]
    entries = []
    prev_active = None
    prev_residual = None
    for l0, pde in zip(grid, pdes):
        if prev_active is not None and pde.active == prev_active:
            continue
        flags = list(pde.flags)
        if prev_residual is not None and pde.residual > prev_residual * 0.99:
            flags.append("potential-overfit")
        entries.append((float(l0), replace(pde, flags=tuple(flags))))
        prev_active = pde.active
        prev_residual = pde.residual
    return Frontier(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Uncertainty and kernel-exponent refinement
# ---------------------------------------------------------------------------


def batch_uncertainty(problem: RegressionProblem, active, k_batches: int = 10, seed: int = 0):
    """Per-coefficient standard deviation over random equal row batches."""
    active = np.asarray(sorted(active), dtype=int)
    rows = problem.theta.shape[0]
    if rows < 10 * active.size:
        raise ConfigError(
            f"batch uncertainty needs at least 10 rows per active term "
            f"({rows} rows, {active.size} terms)"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(rows)
    estimates = []
    for batch in np.array_split(perm, k_batches):
        xi = np.linalg.lstsq(problem.theta[batch][:, active], problem.y[batch], rcond=None)[0]
        estimates.append(xi)
    estimates = np.array(estimates)
    return np.std(estimates, axis=0, ddof=1)


def _golden_minimize(fn, lo, hi, xtol):
    invphi = (np.sqrt(5.0) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (a + b) / 2


def refine_mu(
    build_problem,
    bracket,
    solver="brute_force",
    xtol: float = 1e-3,
    coarse_points: int = 9,
    max_outer: int = 10,
    **solver_kw,
):
    """Alternate sparse selection and a 1-D search over the |q|^mu exponent.

    build_problem(mu) must return the RegressionProblem with the kernel
    column evaluated at that exponent.  Selection runs at the current mu;
    with the resulting active set held fixed, the refit residual is
    minimized over mu by golden section inside the bracket.  Iterates until
    mu moves by less than xtol.  A non-unimodal coarse residual profile is
    reported via a 'non-unimodal-bracket' flag on the returned PDE.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not hi > lo:
        raise ConfigError(f"bad mu bracket ({lo}, {hi})")
    fn = _solver_by_name(solver)
    flags = []

    def selection(mu):
        return fn(build_problem(mu), **solver_kw)

    mu = 0.5 * (lo + hi)
    pde = selection(mu)
    for _ in range(max_outer):
        active = np.asarray(pde.active, dtype=int)

        def residual_at(m_):
            prob = build_problem(m_)
            if active.size == 0:
                return float(np.linalg.norm(prob.y))
            th = prob.theta[:, active]
            xi = np.linalg.lstsq(th, prob.y, rcond=None)[0]
            return float(np.linalg.norm(prob.y - th @ xi))

        samples = np.linspace(lo, hi, coarse_points)
        values = np.array([residual_at(s) for s in samples])
        if values.max() - values.min() <= 1e-14 * max(values.max(), 1e-300):
            flags.append("mu-insensitive")
            break
        interior = values[1:-1]
        n_local_min = int(
            np.sum((interior < values[:-2]) & (interior <= values[2:]))
        )
        if n_local_min > 1 and "non-unimodal-bracket" not in flags:
            flags.append("non-unimodal-bracket")
        k = int(np.argmin(values))
        glo = samples[max(k - 1, 0)]
        ghi = samples[min(k + 1, coarse_points - 1)]
        mu_new = _golden_minimize(residual_at, glo, ghi, xtol)
        pde_new = selection(mu_new)
        done = abs(mu_new - mu) < xtol and pde_new.active == pde.active
        mu, pde = mu_new, pde_new
        if done:
            break
    return mu, replace(pde, flags=tuple(list(pde.flags) + flags))


_SOLVERS.update(
    {"brute_force": brute_force, "cross_entropy": cross_entropy, "stridge": stridge}
)
