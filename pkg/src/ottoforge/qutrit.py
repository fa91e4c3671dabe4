"""
Three-level engines: Fermi / Bose baths and the peaked-rate three-bath scenario.

Energies are in units of ``1/beta_2`` and rates in units of a reference rate
``gamma``; level labels are 0-based (``0`` is the ground level).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .dynamics import PeriodSweep, sweep_period
from .errors import InvalidInputError
from .fast import GeneralizedOttoCycle, Leg, fast_gap
from .model import BOSONIC, FERMIONIC, BathModel, GapWeights, MachineModel
from .optimize import OptimizationProblem, OptimizationResult, OptimizerSettings, optimize_cycle

DEFAULT_QUTRIT_BOUNDS = (0.0, 30.0)


def build_qutrit_model(kind: str, beta1: float, beta2: float, gamma: float = 1.0, bounds=DEFAULT_QUTRIT_BOUNDS):
    """Qutrit with controls ``(eps_2, eps_3)`` coupled to two Fermi or Bose baths."""
    kinds = {"fermionic": BathModel.fermionic, "bosonic": BathModel.bosonic, FERMIONIC: BathModel.fermionic, BOSONIC: BathModel.bosonic}
    if kind not in kinds:
        raise InvalidInputError(f"kind must be 'fermionic' or 'bosonic', got {kind!r}")
    make = kinds[kind]
    return MachineModel((make(beta1, gamma), make(beta2, gamma)), (tuple(bounds), tuple(bounds)))


@dataclass(frozen=True)
class Fig4Result:
    optimum: OptimizationResult
    sweep: PeriodSweep

    @property
    def protocol_rows(self):
        """``(t_start/T, t_end/T, bath, eps2, eps3)`` per leg of the step protocol."""
        rows, t = [], 0.0
        for leg in self.optimum.cycle.legs:
            rows.append((t, t + leg.mu, leg.bath, *leg.control))
            t += leg.mu
        return rows

    @property
    def normalized_power(self) -> np.ndarray:
        """Finite-period power divided by its peak (the fast-driving value)."""
        peak = max(self.sweep.fast_gap, float(np.max(self.sweep.gaps)))
        return self.sweep.gaps / peak


def qutrit_engine_problem(kind, beta1=0.5, beta2=1.0, gamma=1.0, settings=None, max_legs=3):
    model = build_qutrit_model(kind, beta1, beta2, gamma)
    return OptimizationProblem(model, GapWeights.engine(2), max_legs, settings or OptimizerSettings())


def reproduce_fig4(kind, periods=None, beta1=0.5, beta2=1.0, gamma=1.0, settings=None) -> Fig4Result:
    """Optimal qutrit engine with a three-leg budget, and its power versus period.

    ``periods`` defaults to 40 log-spaced values in ``[0.01, 10] / gamma``.
    """
    problem = qutrit_engine_problem(kind, beta1, beta2, gamma, settings)
    optimum = optimize_cycle(problem)
    if periods is None:
        periods = np.geomspace(0.01, 10.0, 40) / gamma
    sweep = sweep_period(optimum.cycle, problem.model, periods, problem.weights)
    return Fig4Result(optimum, sweep)


@dataclass(frozen=True)
class PeakedScenario:
    """Three baths whose rates are nonzero only at one target control each.

    ``gammas[a][(n, m)]`` is the ``n -> m`` rate of bath ``a`` at its target;
    the reverse rate follows from detailed balance.
    """

    betas: tuple
    targets: tuple
    gammas: tuple
    gamma: float = 1.0
    bounds: tuple = ((0.0, 12.0), (0.0, 12.0))

    def __post_init__(self):
        if not (len(self.betas) == len(self.targets) == len(self.gammas)):
            raise InvalidInputError("one target and one rate table per bath")
        if len({tuple(t) for t in self.targets}) != len(self.targets):
            raise InvalidInputError("bath targets must be distinct")

    @classmethod
    def fig5(cls, gamma: float = 1.0) -> "PeakedScenario":
        """The published three-bath parameter set (energies in 1/beta_2)."""
        g = gamma
        return cls(
            betas=(8.12, 1.0, 7.81),
            targets=((1.85, 1.56), (10.07, 9.58), (1.75, 8.12)),
            gammas=(
                {(0, 1): 1.0 * g, (0, 2): 1.21 * g, (1, 2): 2.28 * g},
                {(0, 1): 9.45 * g, (0, 2): 2.53 * g, (1, 2): 5.26 * g},
                {(0, 1): 5.9 * g, (0, 2): 1.4 * g, (1, 2): 6.22 * g},
            ),
            gamma=gamma,
        )

    def with_betas(self, betas) -> "PeakedScenario":
        return PeakedScenario(tuple(betas), self.targets, self.gammas, self.gamma, self.bounds)

    def model(self) -> MachineModel:
        baths = tuple(BathModel.peaked(b, t, g) for b, t, g in zip(self.betas, self.targets, self.gammas))
        return MachineModel(baths, self.bounds)

    def cycle(self, mus) -> GeneralizedOttoCycle:
        return GeneralizedOttoCycle(tuple(Leg(t, a, m) for a, (t, m) in enumerate(zip(self.targets, mus))))


def xy_to_mu(x, y):
    """``(x, (1-x) y, (1-x)(1-y))``; one fraction vanishes exactly on the box edges."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([x, (1 - x) * y, (1 - x) * (1 - y)], axis=-1)


class _PinnedGap:
    """Fast GAP of a fixed set of legs as a vectorized function of the time fractions."""

    def __init__(self, model: MachineModel, controls, baths, weights: GapWeights):
        gens = [model.generator(c, a) for c, a in zip(controls, baths)]
        self.reduced = np.array([g.reduced for g in gens])
        self.drive = np.array([g.reduced @ g.gibbs[1:] for g in gens])
        self.full = np.array([g.full for g in gens])
        self.energies = np.array([g.energies for g in gens])
        self.c = weights.array()[list(baths)]

    def __call__(self, mus):
        mus = np.atleast_2d(mus)
        agg = np.einsum("kj,jab->kab", mus, self.reduced)
        rhs = mus @ self.drive
        out = np.full(mus.shape[0], np.nan)
        ok = np.abs(np.linalg.det(agg)) > 1e-300
        p_hat = np.linalg.solve(agg[ok], rhs[ok][..., None])[..., 0]
        p0 = np.concatenate([1 - p_hat.sum(axis=1, keepdims=True), p_hat], axis=1)
        # per-leg energy current e_j . M_j p0
        currents = np.einsum("jd,jde,ke->kj", self.energies, self.full, p0)
        out[ok] = np.sum(mus[ok] * self.c * currents, axis=1)
        return out


@dataclass(frozen=True, eq=False)
class ContourResult:
    x: np.ndarray
    y: np.ndarray
    power: np.ndarray  # power[i, j] at (x[i], y[j])
    argmax: tuple
    peak: float
    boundary_argmax: tuple
    boundary_max: float
    grid_argmax: tuple = field(default=None)

    @property
    def margin(self) -> float:
        """Relative excess of the interior optimum over the best edge protocol."""
        return (self.peak - self.boundary_max) / abs(self.peak)

    @property
    def interior(self) -> bool:
        return self.margin > 1e-6


def contour_xy(scenario: PeakedScenario, resolution: int = 256, weights: GapWeights | None = None) -> ContourResult:
    """Fast-driving power over the ``(x, y)`` box with controls pinned at the bath targets.

    The grid argmax is refined by bounded Nelder-Mead; the edges of the box
    (protocols with at most two legs) are maximized separately.
    """
    if resolution < 64:
        raise InvalidInputError("resolution must be at least 64")
    model = scenario.model()
    weights = weights or GapWeights.engine(len(scenario.betas))
    gap = _PinnedGap(model, scenario.targets, range(len(scenario.betas)), weights)
    x = np.linspace(0.0, 1.0, resolution)
    y = np.linspace(0.0, 1.0, resolution)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    power = gap(xy_to_mu(xx.ravel(), yy.ravel())).reshape(resolution, resolution)
    i, j = np.unravel_index(int(np.nanargmax(power)), power.shape)

    def neg(v):
        return -float(gap(xy_to_mu(v[0], v[1]))[0])

    res = minimize(neg, [x[i], y[j]], method="Nelder-Mead", bounds=[(0, 1), (0, 1)],
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 4000})
    best = (float(res.x[0]), float(res.x[1]))
    peak = -float(res.fun)
    if power[i, j] > peak:
        best, peak = (float(x[i]), float(y[j])), float(power[i, j])

    edges = {
        "x=0": lambda t: (0.0, t),
        "y=0": lambda t: (t, 0.0),
        "y=1": lambda t: (t, 1.0),
        "x=1": lambda t: (1.0, t),
    }
    b_best, b_arg = -np.inf, None
    for name, edge in edges.items():
        ts = np.linspace(0.0, 1.0, 4 * resolution + 1)
        vals = gap(np.array([xy_to_mu(*edge(t)) for t in ts]))
        k = int(np.nanargmax(vals))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, ts.size - 1)]
        r = minimize_scalar(lambda t: -float(gap(xy_to_mu(*edge(t)))[0]), bounds=(lo, hi), method="bounded",
                            options={"xatol": 1e-12})
        cand = max((vals[k], ts[k]), (-r.fun, r.x))
        if cand[0] > b_best:
            b_best, b_arg = float(cand[0]), edge(float(cand[1]))
    return ContourResult(x, y, power, best, peak, b_arg, b_best, (float(x[i]), float(y[j])))


def peaked_optimum_cycle(scenario: PeakedScenario, contour: ContourResult) -> GeneralizedOttoCycle:
    return scenario.cycle(xy_to_mu(*contour.argmax))


def peaked_gap(scenario: PeakedScenario, mus, weights: GapWeights | None = None) -> float:
    weights = weights or GapWeights.engine(len(scenario.betas))
    return fast_gap(scenario.cycle(mus), weights, scenario.model())
