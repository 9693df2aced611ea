"""Named experiment presets and the pipeline helpers that run them.

A preset bundles a data source (simulation or synthesis), one or more
learning configurations (library, derivative scheme, window, smoothing,
penalties), and an optional forward-validation configuration.  Preset names
are stable API used by the command-line driver and the acceptance suite.
"""

from __future__ import annotations

import math

import numpy as np

from . import pde_forward, quantum_sim, sparse_regress, term_library
from .errors import ConfigError
from .field_store import Dataset, Field, Grid, window
from .preprocess import DerivativeSpec, SmootherSpec, smooth, trim_mask

__all__ = [
    "PRESETS",
    "preset_names",
    "get_preset",
    "build_dataset",
    "prepare_problem",
    "run_learn",
    "run_frontier",
    "run_refine_mu",
    "run_validate",
    "gaussian_potential",
]


def gaussian_potential(L, depth, sigma, center, periodic=True, images=3):
    """Gaussian well; periodic grids get the wrapped (image-summed) profile
    so the potential is smooth across the seam."""
    x = np.arange(L, dtype=float)
    if not periodic:
        return depth * np.exp(-((x - center) ** 2) / sigma**2)
    v = np.zeros(L)
    for m in range(-images, images + 1):
        v += depth * np.exp(-((x - center + m * L) ** 2) / sigma**2)
    return v


# ---------------------------------------------------------------------------
# Preset registry
# ---------------------------------------------------------------------------

_MAGNON_LIB = {"builder": "magnon_terms", "kwargs": {}}
_EULER20 = {"builder": "hydro_velocity_terms", "kwargs": {}, "filter": (-1, 1)}

PRESETS = {
    # Dispersing packet of transverse magnetization; recovers the free
    # Schroedinger-type equation i u_t + 0.5 u_xx + 0.5 u = 0.
    "fig_s1": {
        "simulate": {
            "kind": "magnon",
            "L": 100,
            "J": -1.0,
            "delta": -0.5,
            "packet": {"x0": 50.0, "sigma": 5.0, "k0": 0.0, "amplitude": 0.1},
            "nt": 2000,
            "t_final": 20.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": _MAGNON_LIB,
                "scheme": "central2",
                "lambda0": 1e-3,
            },
            "spectral": {
                "target": "u",
                "library": _MAGNON_LIB,
                "scheme": "spectral",
                "lambda0": 1e-4,
            },
        },
        "frontier": {"learn": "spectral", "lambda0_hi": 1e-1, "lambda0_lo": 1e-6},
        "validate": {"learn": "default", "scheme": "spectral", "boundary": "periodic"},
    },
    # Packet confined by a parabolic longitudinal field B0 (x-x0)^2.
    "fig_s1_trap": {
        "simulate": {
            "kind": "magnon",
            "L": 100,
            "J": -1.0,
            "delta": -0.5,
            "field": {"kind": "parabolic", "B0": 5e-4, "x0": 50.0},
            "packet": {"x0": 50.0, "sigma": 5.0, "k0": 0.0, "amplitude": 0.1},
            "nt": 4000,
            "t_final": 40.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": {"builder": "trap_terms", "kwargs": {"center": 50.0}},
                "scheme": "central2",
                "lambda0": 1e-3,
            }
        },
    },
    # Power-law couplings, non-integer exponent: nonlocal |q|^mu kernel.
    "long_range_alpha25": {
        "simulate": {
            "kind": "magnon",
            "L": 400,
            "J": -1.0,
            "delta": -0.9,
            "alpha": 2.5,
            "packet": {"x0": 200.0, "sigma": 5.0, "k0": 0.0, "amplitude": 0.1},
            "nt": 1500,
            "t_final": 120.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": {"builder": "momentum_terms", "kwargs": {"mu": 1.5}},
                "scheme": "spectral",
                "lambda0": 3e-3,
                "lambda2": 1e-12,
            }
        },
        "refine_mu": {"learn": "default", "bracket": (1.2, 1.8)},
    },
    # Integer exponent alpha=3: the learned kernel pairs |q|^mu with
    # q^2 log|q|; the redundant plain-q^2 column is left out so the
    # exponent itself is measured.
    "long_range_alpha3": {
        "simulate": {
            "kind": "magnon",
            "L": 400,
            "J": -1.0,
            "delta": -0.9,
            "alpha": 3.0,
            "packet": {"x0": 200.0, "sigma": 5.5, "k0": 0.0, "amplitude": 0.1},
            "nt": 1500,
            "t_final": 120.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": {
                    "builder": "momentum_terms",
                    "kwargs": {"mu": 2.0},
                    "drop": ["K[q^2]u"],
                },
                "scheme": "spectral",
                "lambda0": 3e-3,
                "lambda2": 1e-12,
            }
        },
        "refine_mu": {"learn": "default", "bracket": (1.7, 2.4)},
    },
    # Sharp magnetization wall melting into the arcsin lightcone profile.
    "xx_domain_wall": {
        "simulate": {
            "kind": "fermion_domain_wall",
            "L": 2000,
            "J1": 0.5,
            "boundary": "open",
            "nt": 500,
            "t_final": 998.0,
        },
        "learn": {
            "taylor2": {
                "target": "u",
                "library": {"builder": "domain_wall_terms", "kwargs": {}},
                "scheme": "central2",
                "lambda0": 1e-4,
                "window": {"t_lo": 300.0, "x_lo": -995.0, "x_hi": 995.0},
                "smooth": {"kind": "savitzky_golay", "window": 19, "polyorder": 2},
                "subsample": {"fraction": 1 / 36, "seed": 0},
            },
            "taylor3": {
                "target": "u",
                "library": {"builder": "domain_wall_terms", "kwargs": {}},
                "scheme": "central2",
                "lambda0": 1e-6,
                "window": {"t_lo": 300.0, "x_lo": -995.0, "x_hi": 995.0},
                "smooth": {"kind": "savitzky_golay", "window": 19, "polyorder": 2},
                "subsample": {"fraction": 1 / 36, "seed": 0},
            },
        },
        "validate": {"learn": "taylor3", "scheme": "central2", "boundary": "clamped"},
    },
    # Interacting-wall stand-in: exact self-similar arcsin profile for
    # anisotropy ratio 0.5 (P=3), used with the sin-augmented library.
    "sin_domain_wall": {
        "simulate": {
            "kind": "arcsin_wall",
            "P": 3,
            "zeta0": 1.0,
            "nx": 901,
            "nt": 251,
            "t0": 150.0,
            "t_final": 400.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": {
                    "builder": "domain_wall_terms",
                    "kwargs": {"sin_periods": list(range(1, 11))},
                },
                "scheme": "central2",
                "lambda0": 1e-2,
                "lambda2": 1e-12,
            }
        },
    },
    # Free-fermion quench: Euler pair recovery (continuity + velocity).
    "fig_s5": {
        "simulate": {
            "kind": "fermion",
            "L": 1000,
            "J1": 0.5,
            "n_particles": 101,
            "potential": {"depth": -0.1, "sigma": 200.0, "center": 500.0},
            "boundary": "periodic",
            "nt": 1000,
            "t_final": 750.0,
        },
        "learn": {
            "continuity": {
                "target": "rho",
                "library": {"builder": "hydro_density_terms", "kwargs": {}},
                "scheme": "central2",
                "lambda0": 1e-3,
            },
            "euler": {
                "target": "v",
                "library": _EULER20,
                "scheme": "central2",
                "lambda0": 1e-2,
                "lambda2": 1e-12,
            },
        },
        "validate": {"learn": ["continuity", "euler"], "scheme": "spectral", "boundary": "periodic"},
    },
    # Wider, shallower quench on a longer chain, subsampled to the same
    # resolution: resolves the tight-binding correction terms.
    "corrections": {
        "simulate": {
            "kind": "fermion",
            "L": 2000,
            "J1": 0.5,
            "n_particles": 201,
            "potential": {"depth": -0.08, "sigma": 500.0, "center": 1000.0},
            "boundary": "periodic",
            "nt": 1000,
            "t_final": 1300.0,
            "x_subsample": 2,
        },
        "learn": {
            "default": {
                "target": "v",
                "library": _EULER20,
                "scheme": "central2",
                "lambda0": 1e-6,
                "lambda2": 1e-12,
            }
        },
    },
    # Quartic-dispersion critical point of the two-hopping chain.
    "lifshitz": {
        "simulate": {
            "kind": "fermion",
            "L": 1000,
            "J1": 0.5,
            "J2": -0.125,
            "n_particles": 71,
            "potential": {"depth": -0.002, "sigma": 150.0, "center": 500.0},
            "boundary": "periodic",
            "nt": 1000,
            "t_final": 8000.0,
        },
        "learn": {
            "default": {
                "target": "v",
                "library": _EULER20,
                "scheme": "central2",
                "lambda0": 2e-5,
                "lambda2": 1e-12,
            }
        },
    },
    # Small-amplitude quench: recovers the linearized sound equations.
    "linearized": {
        "simulate": {
            "kind": "fermion",
            "L": 1000,
            "J1": 0.5,
            "n_particles": 101,
            "potential": {"depth": -0.01, "sigma": 200.0, "center": 500.0},
            "boundary": "periodic",
            "nt": 800,
            "t_final": 150.0,
        },
        "learn": {
            "continuity": {
                "target": "rho",
                "library": {"terms": ["1", "rho", "rho_x", "rho_xx", "v", "v_x", "v_xx"]},
                "scheme": "central2",
                "lambda0": 3e-4,
                "window": {"x_lo": 400.0, "x_hi": 600.0},
            },
            "euler": {
                "target": "v",
                "library": {"terms": ["1", "rho", "rho_x", "rho_xx", "v", "v_x", "v_xx"]},
                "scheme": "central2",
                "lambda0": 3e-4,
                "window": {"x_lo": 400.0, "x_hi": 600.0},
            },
        },
    },
    # Synthetic viscous-Burgers dataset standing in for ingested
    # high-temperature wall data.
    "burgers_kpz": {
        "simulate": {
            "kind": "burgers",
            "a": 0.24,
            "D": 1.90,
            "nx": 256,
            "nt": 400,
            "t_final": 120.0,
        },
        "learn": {
            "default": {
                "target": "u",
                "library": {"builder": "domain_wall_terms", "kwargs": {}},
                "scheme": "spectral",
                "lambda0": 1e-4,
            }
        },
        "validate": {"learn": "default", "scheme": "spectral", "boundary": "periodic"},
    },
}


def preset_names():
    return sorted(PRESETS)


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}") from None


# ---------------------------------------------------------------------------
# Dataset builders
# ---------------------------------------------------------------------------


def build_dataset(sim_cfg) -> Dataset:
    kind = sim_cfg.get("kind")
    if kind == "magnon":
        return _build_magnon(sim_cfg)
    if kind == "fermion":
        return _build_fermion(sim_cfg)
    if kind == "fermion_domain_wall":
        return _build_domain_wall(sim_cfg)
    if kind == "arcsin_wall":
        return _build_arcsin_wall(sim_cfg)
    if kind == "burgers":
        return _build_burgers(sim_cfg)
    raise ConfigError(f"unknown simulation kind {kind!r}")


def _grid_from(cfg, nx, periodic, t0=0.0, x0=0.0):
    nt = int(cfg["nt"])
    t_final = float(cfg["t_final"])
    dt = (t_final - t0) / (nt - 1)
    return Grid(nt=nt, nx=nx, dt=dt, dx=1.0, t0=t0, x0=x0, periodic_x=periodic)


def _build_magnon(cfg):
    L = int(cfg["L"])
    B = None
    fld = cfg.get("field")
    if fld is not None:
        if fld.get("kind") != "parabolic":
            raise ConfigError(f"unknown field kind {fld.get('kind')!r}")
        B = float(fld["B0"]) * (np.arange(L) - float(fld["x0"])) ** 2
    model = quantum_sim.MagnonModel(
        L=L,
        J=float(cfg["J"]),
        delta=float(cfg["delta"]),
        B=B,
        alpha=float(cfg.get("alpha", math.inf)),
        boundary=cfg.get("boundary", "periodic"),
    )
    packet = quantum_sim.WavePacket(**cfg["packet"])
    grid = _grid_from(cfg, L, model.boundary == "periodic")
    return quantum_sim.magnon_evolve(model, packet, grid)


def _build_fermion(cfg):
    L = int(cfg["L"])
    pot_cfg = cfg.get("potential")
    periodic = cfg.get("boundary", "periodic") == "periodic"
    potential = None
    if pot_cfg is not None:
        potential = gaussian_potential(
            L, float(pot_cfg["depth"]), float(pot_cfg["sigma"]), float(pot_cfg["center"]),
            periodic=periodic,
        )
    model = quantum_sim.FermionModel(
        L=L,
        J1=float(cfg["J1"]),
        J2=float(cfg.get("J2", 0.0)),
        boundary=cfg.get("boundary", "periodic"),
        potential=potential,
        n_particles=cfg.get("n_particles"),
        mu=cfg.get("mu"),
    )
    phi0 = quantum_sim.fermion_ground_state(model)
    grid = _grid_from(cfg, L, periodic)
    ds = quantum_sim.fermion_evolve(model, phi0, grid)
    step = int(cfg.get("x_subsample", 1))
    if step > 1:
        g = ds.grid
        new_grid = Grid(
            nt=g.nt, nx=g.nx // step, dt=g.dt, dx=g.dx * step,
            t0=g.t0, x0=g.x0, periodic_x=g.periodic_x,
        )
        fields = tuple(
            Field(f.name, f.values[:, ::step], f.p_parity, f.t_parity) for f in ds.fields
        )
        ds = Dataset(grid=new_grid, fields=fields, meta=ds.meta)
    return ds


def _build_domain_wall(cfg):
    L = int(cfg["L"])
    model = quantum_sim.FermionModel(
        L=L, J1=float(cfg["J1"]), boundary=cfg.get("boundary", "open")
    )
    grid = _grid_from(cfg, L, model.boundary == "periodic", x0=-(L / 2 - 0.5))
    return quantum_sim.fermion_domain_wall(model, grid)


def _build_arcsin_wall(cfg):
    """Exact self-similar wall-melting profile for anisotropy cos(pi/P)."""
    P = int(cfg["P"])
    zeta0 = float(cfg["zeta0"])
    zstar = zeta0 * math.sin(math.pi / P)
    nx, nt = int(cfg["nx"]), int(cfg["nt"])
    t0, t_final = float(cfg["t0"]), float(cfg["t_final"])
    grid = Grid(
        nt=nt, nx=nx, dt=(t_final - t0) / (nt - 1), dx=1.0,
        t0=t0, x0=-(nx - 1) / 2.0, periodic_x=False,
    )
    tt = grid.times()[:, None]
    xx = grid.xs()[None, :]
    z = np.clip(xx / (zeta0 * tt), -zstar, zstar)
    u = (P / (2 * np.pi)) * np.arcsin(z / zeta0)
    fields = (Field(name="u", values=u, p_parity=-1, t_parity=1),)
    return Dataset(grid=grid, fields=fields, meta={"model": "arcsin_wall", "P": str(P)})


def _build_burgers(cfg):
    nx, nt = int(cfg["nx"]), int(cfg["nt"])
    grid = Grid(nt=nt, nx=nx, dt=float(cfg["t_final"]) / (nt - 1), dx=1.0, periodic_x=True)
    x = grid.xs()
    u0 = np.tanh((x - nx / 4) / 8.0) - np.tanh((x - 3 * nx / 4) / 8.0) - 1.0
    system = pde_forward.PDESystem(
        unknowns=("u",),
        rhs={
            "u": [
                (-float(cfg["a"]), term_library.parse_term("u*u_x")),
                (float(cfg["D"]), term_library.parse_term("u_xx")),
            ]
        },
        boundary="periodic",
    )
    report = pde_forward.solve(system, {"u": u0}, grid, scheme="spectral")
    vals = report.solution.field("u").values
    fields = (Field(name="u", values=vals, p_parity=None, t_parity=None),)
    meta = {"model": "burgers", "a": repr(cfg["a"]), "D": repr(cfg["D"])}
    return Dataset(grid=grid, fields=fields, meta=meta)


# ---------------------------------------------------------------------------
# Learning pipeline
# ---------------------------------------------------------------------------


def _build_library(lib_cfg, target):
    if "terms" in lib_cfg:
        terms = tuple(term_library.parse_term(s) for s in lib_cfg["terms"])
        lib = term_library.Library(terms=terms, target=target)
    else:
        builder = getattr(term_library, lib_cfg["builder"])
        lib = builder(**lib_cfg.get("kwargs", {}))
        if lib.target != target:
            lib = term_library.Library(terms=lib.terms, target=target)
    drop = set(lib_cfg.get("drop", ()))
    if drop:
        kept = tuple(t for t in lib.terms if term_library.render_term(t) not in drop)
        lib = term_library.Library(terms=kept, target=target)
    return lib


def prepare_problem(ds: Dataset, learn_cfg):
    """Window, smooth, mask, and evaluate a dataset per a learning config.

    Returns (problem, library, prepared dataset, mask).
    """
    target = learn_cfg["target"]
    scheme = learn_cfg.get("scheme", "central2")
    win = learn_cfg.get("window")
    if win:
        g = ds.grid
        ds = window(
            ds,
            win.get("t_lo", g.t0),
            win.get("t_hi", g.t0 + g.dt * (g.nt - 1)),
            win.get("x_lo", g.x0),
            win.get("x_hi", g.x0 + g.dx * (g.nx - 1)),
        )
    sm = learn_cfg.get("smooth")
    if sm:
        spec = SmootherSpec(**sm)
        fields = tuple(
            smooth(f, spec, periodic=ds.grid.periodic_x) if f.name == target else f
            for f in ds.fields
        )
        ds = Dataset(grid=ds.grid, fields=fields, meta=ds.meta)

    lib = _build_library(learn_cfg["library"], target)
    filt = learn_cfg["library"].get("filter")
    if filt:
        lib = term_library.filter_by_signature(
            lib, term_library.Signature(*filt), ds.parities()
        )

    max_dx = max((t.max_dx_order() for t in lib.terms), default=0)
    specs = [DerivativeSpec("time", 1, "central2")]
    if max_dx and scheme == "central2":
        specs.append(DerivativeSpec("space", max_dx, "central2"))
    mask = trim_mask(ds.grid, specs)

    sub = learn_cfg.get("subsample")
    if sub:
        idx = np.flatnonzero(mask.ravel())
        rng = np.random.Generator(np.random.PCG64(int(sub.get("seed", 0))))
        keep = rng.choice(idx, size=max(1, int(len(idx) * float(sub["fraction"]))), replace=False)
        flat = np.zeros(mask.size, dtype=bool)
        flat[keep] = True
        mask = flat.reshape(mask.shape)

    y, theta, _ = term_library.evaluate(lib, ds, mask, scheme=scheme)
    problem = sparse_regress.RegressionProblem(
        theta=theta,
        y=y,
        lambda0=float(learn_cfg.get("lambda0", 1e-3)),
        lambda2=float(learn_cfg.get("lambda2", 0.0)),
        terms=lib.terms,
        target=target,
    )
    return problem, lib, ds, mask


def run_learn(ds: Dataset, learn_cfg, solver="brute_force", **solver_kw):
    problem, lib, _, _ = prepare_problem(ds, learn_cfg)
    fn = sparse_regress._solver_by_name(solver)
    return fn(problem, **solver_kw)


def run_frontier(
    ds: Dataset, learn_cfg, lambda0_hi, lambda0_lo, per_decade=8, solver="brute_force", threads=1
):
    problem, _, _, _ = prepare_problem(ds, learn_cfg)
    decades = math.log10(lambda0_hi / lambda0_lo)
    n = max(2, int(round(decades * per_decade)) + 1)
    grid = np.geomspace(lambda0_hi, lambda0_lo, n)
    return sparse_regress.frontier_scan(problem, grid, solver=solver, threads=threads)


def run_refine_mu(ds: Dataset, learn_cfg, bracket, solver="brute_force"):
    def build(mu):
        cfg = dict(learn_cfg)
        lib_cfg = dict(cfg["library"])
        kwargs = dict(lib_cfg.get("kwargs", {}))
        kwargs["mu"] = mu
        lib_cfg["kwargs"] = kwargs
        cfg["library"] = lib_cfg
        problem, _, _, _ = prepare_problem(ds, cfg)
        return problem

    return sparse_regress.refine_mu(build, bracket, solver=solver)


def pde_system_from(pde: sparse_regress.DiscoveredPDE, extra=None, boundary="periodic"):
    """Assemble a PDESystem from one or more discovered equations.

    pde/extra carry their target names; terms must reference only those
    unknowns."""
    pdes = [pde] + (list(extra) if extra else [])
    unknowns = tuple(p.target for p in pdes)
    rhs = {}
    for p in pdes:
        rhs[p.target] = [(p.xi[j], p.terms[j]) for j in p.active]
    return pde_forward.PDESystem(unknowns=unknowns, rhs=rhs, boundary=boundary)


def run_validate(ds: Dataset, learn_cfgs, scheme="spectral", boundary="periodic", solver="brute_force"):
    """Learn on each config, integrate the combined system from the first
    prepared time slice, and score against the prepared data."""
    if isinstance(learn_cfgs, dict):
        learn_cfgs = [learn_cfgs]
    pdes = []
    prepared = None
    mask = None
    for cfg in learn_cfgs:
        problem, lib, prep_ds, m = prepare_problem(ds, cfg)
        fn = sparse_regress._solver_by_name(solver)
        pdes.append(fn(problem))
        prepared, mask = prep_ds, m
    system = pde_system_from(pdes[0], pdes[1:], boundary=boundary)
    init = {name: prepared.field(name).values[0] for name in system.unknowns}
    report = pde_forward.solve(
        system, init, prepared.grid, scheme=scheme, reference=prepared, mask=mask
    )
    return report, pdes, prepared
