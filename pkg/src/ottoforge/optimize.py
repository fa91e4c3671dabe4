"""
Maximization of the fast-driving GAP over generalized Otto cycles.

For every multiset of baths visited by the ``L`` legs, a multi-start local
search runs over unconstrained coordinates: time fractions by logistic
stick-breaking and controls by a scaled logistic map into their box. The
search is Nelder-Mead in general and L-BFGS-B with the analytic gradient of
the closed-form GAP when every bath has fixed rates.
Legs coupled to a ``peaked`` bath have their controls pinned to the bath
target, since the bath is inert anywhere else.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit
from scipy.stats import qmc

from .dynamics import worker_count
from .errors import (
    DegenerateCycleError,
    InvalidInputError,
    NoFeasibleCycleError,
    NotApplicableError,
)
from .fast import (
    GeneralizedOttoCycle,
    Leg,
    all_fixed_rate,
    fast_gap,
    fast_steady_state,
    gap_kernel,
    leg_heat_rates,
)
from .model import PEAKED, GapWeights, MachineModel, transition_graph_components

MAX_ASSIGNMENTS = 10**6
PRUNE_MU = 1e-6
PRUNE_TOL = 1e-9
MERGE_RTOL = 1e-3
BETA_RTOL = 1e-12
COORD_BOUND = 40.0  # logistic coordinates; expit(-40) ~ 4e-18


@dataclass(frozen=True)
class OptimizerSettings:
    starts: int = 32
    seed: int = 0
    ftol: float = 1e-10
    xtol: float = 1e-9
    max_evals: int = 2000
    polish_rounds: int = 8
    polish_top: int = 3
    workers: int | None = None

    def __post_init__(self):
        if self.starts < 1 or self.max_evals < 1:
            raise InvalidInputError("starts and max_evals must be positive")


@dataclass(frozen=True)
class OptimizationProblem:
    model: MachineModel
    weights: GapWeights
    max_legs: int
    settings: OptimizerSettings = OptimizerSettings()
    allow_more_legs_than_levels: bool = False

    def __post_init__(self):
        if self.max_legs < 1:
            raise InvalidInputError("max_legs must be at least 1")
        if self.max_legs > self.model.dim and not self.allow_more_legs_than_levels:
            raise InvalidInputError(
                f"max_legs={self.max_legs} exceeds d={self.model.dim}; d legs always suffice "
                "(set allow_more_legs_than_levels to override)"
            )
        if len(self.weights) != self.model.n_baths:
            raise InvalidInputError("one weight per bath is required")


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    cycle: GeneralizedOttoCycle
    gap: float
    leg_heat_rates: np.ndarray
    assignment: tuple
    trace: list = field(repr=False)
    pruned: bool = False
    raw_cycle: GeneralizedOttoCycle | None = None
    raw_gap: float | None = None

    @property
    def n_legs(self) -> int:
        return self.cycle.n_legs


def enumerate_bath_assignments(n_legs: int, n_baths: int) -> list:
    """One nondecreasing (0-based) bath sequence per multiset of size ``n_legs``."""
    if n_legs < 1 or n_baths < 1:
        raise InvalidInputError("need at least one leg and one bath")
    count = math.comb(n_legs + n_baths - 1, n_baths - 1)
    if count > MAX_ASSIGNMENTS:
        raise InvalidInputError(f"{count} bath assignments exceed {MAX_ASSIGNMENTS}; lower the leg budget")
    return list(itertools.combinations_with_replacement(range(n_baths), n_legs))


def distinct_temperature_count(betas, rtol=BETA_RTOL) -> int:
    values = sorted(float(b) for b in betas)
    groups = 0
    last = None
    for b in values:
        if last is None or abs(b - last) > rtol * max(abs(b), abs(last)):
            groups += 1
            last = b
    return groups


def positive_gap_leg_bound(weights: GapWeights, baths) -> int:
    """``min(N, kappa + 1)``, with ``kappa`` the distinct temperatures among weighted baths.

    Raises
    ------
    NotApplicableError
        For weights with negative entries.
    """
    if not weights.is_positive:
        raise NotApplicableError("the leg bound holds only for non-negative weights")
    baths = list(baths)
    if len(weights) != len(baths):
        raise InvalidInputError("one weight per bath is required")
    kappa = distinct_temperature_count([b.beta for b, c in zip(baths, weights.c) if c != 0])
    return min(len(baths), kappa + 1)


class _AssignmentObjective:
    """Negative fast GAP over unconstrained coordinates for one bath assignment."""

    def __init__(self, model: MachineModel, weights: GapWeights, assignment):
        self.model = model
        self.assignment = tuple(assignment)
        self.n_legs = len(assignment)
        self.d = model.dim
        self.baths = [model.baths[a] for a in assignment]
        self.c = weights.array()[list(assignment)]
        self.lo, self.hi = (np.array(v) for v in zip(*model.bounds))
        self.pinned = [np.array(b.params["targets"]) if b.family == PEAKED else None for b in self.baths]
        self.free = [j for j, p in enumerate(self.pinned) if p is None]
        self.n_mu = self.n_legs - 1
        self.n_params = self.n_mu + len(self.free) * (self.d - 1)
        self.fixed_rate = all_fixed_rate(model)
        if self.fixed_rate:
            self.leg_betas = np.array([b.beta for b in self.baths])
            self.leg_rates = np.array([b.params["rate"] for b in self.baths])
            self._neg_betas = -self.leg_betas[:, None]
            self._nonneg_box = bool(np.all(self.lo >= 0))
        self._offsets = np.log(np.arange(self.n_legs - 1, 0, -1, dtype=float))
        self._pinned_controls = None
        if len(self.free) < self.n_legs:
            self._pinned_controls = np.zeros((self.n_legs, self.d - 1))
            for j, p in enumerate(self.pinned):
                if p is not None:
                    self._pinned_controls[j] = p

    def decode(self, theta):
        theta = np.asarray(theta, dtype=float)
        z = theta[: self.n_mu] - self._offsets
        # stick i takes a share expit(z_i) of what the previous sticks left over
        left = np.cumprod(np.concatenate(([1.0], expit(-z))))
        mus = left.copy()
        mus[:-1] *= expit(z)
        y = theta[self.n_mu :].reshape(len(self.free), self.d - 1)
        if self._pinned_controls is None:
            return mus, self.lo + (self.hi - self.lo) * expit(y)
        controls = self._pinned_controls.copy()
        if self.free:
            controls[self.free] = self.lo + (self.hi - self.lo) * expit(y)
        return mus, controls

    def encode(self, mus, controls):
        """Inverse of ``decode`` for interior points."""
        mus = np.clip(np.asarray(mus, dtype=float), 1e-300, None)
        z = np.empty(self.n_mu)
        rem = 1.0
        for i in range(self.n_mu):
            s = mus[i] / rem if rem > 0 else 0.5
            s = min(max(s, 1e-15), 1 - 1e-15)
            z[i] = logit(s) + self._offsets[i]
            rem -= mus[i]
        u = (np.asarray(controls)[self.free] - self.lo) / (self.hi - self.lo)
        y = logit(np.clip(u, 1e-12, 1 - 1e-12))
        return np.concatenate([z, y.ravel()])

    def gap(self, theta) -> float:
        mus, controls = self.decode(theta)
        energies = np.empty((self.n_legs, self.d))
        energies[:, 0] = 0.0
        energies[:, 1:] = controls
        if self.fixed_rate:
            return self._fixed_rate_gap(mus, energies)
        return gap_kernel(energies, self.baths, mus, self.c)[0]

    def _fixed_rate_gap(self, mus, energies):
        """Inlined ``fixed_rate_gap`` for the inner loop."""
        if self._nonneg_box:  # ground level is the lowest: no shift needed
            w = np.exp(self._neg_betas * energies)
        else:
            w = np.exp(self._neg_betas * (energies - energies.min(axis=1, keepdims=True)))
        peq = w / w.sum(axis=1)[:, None]
        pi = mus * self.leg_rates
        p0 = pi @ peq / pi.sum()
        cpi = self.c * pi
        return float(cpi @ (energies * peq).sum(axis=1) - (cpi @ energies) @ p0)

    def fixed_rate_value_and_grad(self, theta):
        """Negative GAP and its gradient in ``theta`` (fixed-rate baths only)."""
        theta = np.asarray(theta, dtype=float)
        mus, controls = self.decode(theta)
        energies = np.empty((self.n_legs, self.d))
        energies[:, 0] = 0.0
        energies[:, 1:] = controls
        betas = self.leg_betas[:, None]
        w = np.exp(-betas * (energies - energies.min(axis=1, keepdims=True)))
        peq = w / w.sum(axis=1)[:, None]
        mean_e = (energies * peq).sum(axis=1)
        pi = mus * self.leg_rates
        total = pi.sum()
        p0 = pi @ peq / total
        cpi = self.c * pi
        a = cpi @ energies
        gap = float(cpi @ mean_e - a @ p0)
        # derivatives with respect to the leg weights pi and the level energies
        d_pi = self.c * (mean_e - energies @ p0) - (peq @ a - a @ p0) / total
        d_e = (
            cpi[:, None] * peq * (1.0 - betas * (energies - mean_e[:, None]))
            - cpi[:, None] * p0[None, :]
            + (pi / total)[:, None] * betas * peq * (a[None, :] - (peq @ a)[:, None])
        )
        # chain rule through the stick-breaking map
        d_mu = d_pi * self.leg_rates
        z = theta[: self.n_mu] - self._offsets
        s = expit(z)
        left = np.cumprod(np.concatenate(([1.0], expit(-z))))
        tail = np.cumsum((d_mu * mus)[::-1])[::-1]
        g_z = d_mu[:-1] * left[:-1] * s * (1.0 - s) - s * tail[1:]
        # and through the logistic box map (all controls free for fixed rates)
        u = expit(theta[self.n_mu :].reshape(self.n_legs, self.d - 1))
        g_y = d_e[:, 1:] * (self.hi - self.lo) * u * (1.0 - u)
        grad = np.concatenate([g_z, g_y.ravel()])
        if not np.isfinite(gap):
            return np.inf, np.zeros_like(theta)
        return -gap, -grad

    def __call__(self, theta) -> float:
        g = self.gap(theta)
        return -g if np.isfinite(g) else np.inf

    def feasible(self) -> bool:
        controls = np.where(
            np.array([p is None for p in self.pinned])[:, None],
            0.5 * (self.lo + self.hi),
            np.array([p if p is not None else np.zeros(self.d - 1) for p in self.pinned]),
        )
        rates = [self.model.rate_matrix(c, a) for c, a in zip(controls, self.assignment)]
        return len(transition_graph_components(rates)) == 1

    def cycle(self, theta) -> GeneralizedOttoCycle:
        mus, controls = self.decode(theta)
        return GeneralizedOttoCycle(tuple(Leg(c, a, m) for c, a, m in zip(controls, self.assignment, mus)))


def _energy_scale(model: MachineModel) -> float:
    rate = 0.0
    for b in model.baths:
        p = b.params
        if "gammas" in p:
            rate = max(rate, max(p["gammas"].values()))
        else:
            rate = max(rate, p.get("gamma", p.get("rate", 1.0)))
    return rate / float(np.max(model.betas))


def _simplex(x, scale):
    """Axis simplex around ``x``, stepping inward where ``x`` sits near the coordinate bound."""
    steps = np.where(x + scale > COORD_BOUND, -scale, scale)
    return np.vstack([x, x + np.diag(steps)])


def _local_search(objective, x0, settings, fatol):
    """Local search from ``x0``: L-BFGS-B with the analytic gradient for
    fixed-rate models, otherwise Nelder-Mead with a unit initial simplex.

    Coordinates are boxed to ``[-COORD_BOUND, COORD_BOUND]``: optima on the
    edge of the control box (or with a vanishing time fraction) sit at
    infinite logistic coordinates, and without the bound the simplex would
    chase them until the evaluation budget runs out.
    """
    n = x0.size
    if n == 0:
        return x0, objective(x0), 1
    x0 = np.clip(x0, -COORD_BOUND, COORD_BOUND)
    if objective.fixed_rate:
        res = minimize(
            objective.fixed_rate_value_and_grad,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(-COORD_BOUND, COORD_BOUND)] * n,
            options={"maxfun": settings.max_evals, "ftol": settings.ftol, "gtol": fatol},
        )
        return res.x, float(res.fun), int(res.nfev)
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        bounds=[(-COORD_BOUND, COORD_BOUND)] * n,
        options={
            "adaptive": True,
            "initial_simplex": _simplex(x0, 1.0),
            "fatol": fatol,
            # flat directions (e.g. controls of a leg with a vanishing fraction)
            # never shrink, so the screening stage stops on function values only
            "xatol": np.inf,
            "maxfev": settings.max_evals,
        },
    )
    return res.x, float(res.fun), int(res.nfev)


def _polish(objective, x, fx, settings, fatol):
    """Restart Nelder-Mead from the incumbent until it stops improving."""
    n = x.size
    evals = 0
    for _ in range(settings.polish_rounds):
        if n == 0:
            break
        x = np.clip(x, -COORD_BOUND, COORD_BOUND)
        res = minimize(
            objective,
            x,
            method="Nelder-Mead",
            bounds=[(-COORD_BOUND, COORD_BOUND)] * n,
            options={
                "adaptive": True,
                "initial_simplex": _simplex(x, 0.1),
                "fatol": fatol * 1e-2,
                "xatol": settings.xtol * 1e-2,
                "maxfev": settings.max_evals,
            },
        )
        evals += int(res.nfev)
        improved = fx - float(res.fun)
        if float(res.fun) < fx:
            x, fx = res.x, float(res.fun)
        if improved <= fatol:
            break
    return x, fx, evals


def _run_assignment(args):
    model, weights, assignment, a_index, settings = args
    objective = _AssignmentObjective(model, weights, assignment)
    fatol = settings.ftol * _energy_scale(model)
    trace = []
    if not objective.feasible():
        return a_index, None, np.inf, trace
    n = objective.n_params
    if n == 0:
        starts = np.zeros((1, 0))
    else:
        sampler = qmc.LatinHypercube(d=n, seed=np.random.default_rng([settings.seed, a_index]))
        u = np.clip(sampler.random(settings.starts), 1e-3, 1 - 1e-3)
        starts = logit(u)
        # stick-breaking coordinates: spread the logistic argument over a few units
        starts[:, : objective.n_mu] = 4.0 * (u[:, : objective.n_mu] - 0.5)
    best_x, best_f = None, np.inf
    for s_index, x0 in enumerate(starts):
        f0 = objective(x0)
        x, fx, nfev = _local_search(objective, x0, settings, fatol)
        trace.append(
            {"assignment": list(assignment), "start": s_index, "init": -f0, "final": -fx, "evaluations": nfev}
        )
        if fx < best_f:
            best_x, best_f = x, fx
    return a_index, best_x, best_f, trace


def optimize_cycle(problem: OptimizationProblem) -> OptimizationResult:
    """Best generalized Otto cycle with at most ``problem.max_legs`` legs.

    Deterministic for a fixed ``settings.seed``. With ``settings.workers > 1``
    (default: the ``OTTOFORGE_THREADS`` environment variable) the bath
    assignments run in worker processes and are merged in index order.

    Raises
    ------
    NoFeasibleCycleError
        If no bath assignment connects all levels.
    """
    model, weights, settings = problem.model, problem.weights, problem.settings
    assignments = enumerate_bath_assignments(problem.max_legs, model.n_baths)
    jobs = [(model, weights, a, i, settings) for i, a in enumerate(assignments)]
    n_workers = worker_count(settings.workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(_run_assignment, jobs))
    else:
        outcomes = [_run_assignment(j) for j in jobs]
    outcomes.sort(key=lambda o: o[0])
    trace = [t for o in outcomes for t in o[3]]
    # polish the incumbents of the most promising assignments
    fatol = settings.ftol * _energy_scale(model)
    ranked = sorted((o for o in outcomes if o[1] is not None and np.isfinite(o[2])), key=lambda o: (o[2], o[0]))
    for k, (a_index, x, fx, _) in enumerate(ranked[: settings.polish_top]):
        objective = _AssignmentObjective(model, weights, assignments[a_index])
        x_new, f_new, nfev = _polish(objective, x, fx, settings, fatol)
        trace.append(
            {"assignment": list(assignments[a_index]), "start": "polish", "init": -fx, "final": -f_new, "evaluations": nfev}
        )
        outcomes[a_index] = (a_index, x_new, f_new, outcomes[a_index][3])
    best = None
    for a_index, x, fx, _ in outcomes:
        if x is not None and np.isfinite(fx) and (best is None or fx < best[2]):
            best = (a_index, x, fx)
    if best is None:
        raise NoFeasibleCycleError("no bath assignment yields a connected model")
    a_index, x, _ = best
    objective = _AssignmentObjective(model, weights, assignments[a_index])
    cycle = objective.cycle(x)
    gap = fast_gap(cycle, weights, model)
    cycle, gap = _consolidate(cycle, gap, model, weights, settings, trace)
    heats = leg_heat_rates(cycle, model, fast_steady_state(cycle, model).p0)
    raw = OptimizationResult(cycle, gap, heats, assignments[a_index], trace, False, cycle, gap)
    return prune_legs(raw, model, weights)


def _near_duplicate_pair(legs, width):
    for i, j in itertools.combinations(range(len(legs)), 2):
        a, b = legs[i], legs[j]
        if a.mu > 0 and b.mu > 0 and a.bath == b.bath:
            if np.all(np.abs(np.subtract(a.control, b.control)) <= MERGE_RTOL * width):
                return i, j
    return None


def _consolidate(cycle, gap, model, weights, settings, trace):
    """Fuse near-identical legs on the same bath and re-polish the shorter cycle.

    Near the optimum two legs on one bath with almost equal controls leave the
    split of time between them flat, so the search cannot drive either to zero.
    The fused cycle is locally re-optimized; it replaces the incumbent when its
    GAP is not lower. The absorbed leg is kept with ``mu = 0`` so the leg budget
    is visible until ``prune_legs``.
    """
    width = np.array([hi - lo for lo, hi in model.bounds])
    fatol = settings.ftol * _energy_scale(model)
    zero_legs = []
    while True:
        active = [l for l in cycle.legs if l.mu > 0]
        pair = _near_duplicate_pair(active, width)
        if pair is None:
            break
        i, j = pair
        a, b = active[i], active[j]
        mu = a.mu + b.mu
        fused = Leg((a.mu * np.array(a.control) + b.mu * np.array(b.control)) / mu, a.bath, mu)
        legs = [l for k, l in enumerate(active) if k not in pair] + [fused]
        legs.sort(key=lambda l: l.bath)
        objective = _AssignmentObjective(model, weights, [l.bath for l in legs])
        x0 = objective.encode([l.mu for l in legs], np.array([l.control for l in legs]))
        x, fx, nfev = _polish(objective, x0, objective(x0), settings, fatol)
        candidate = objective.cycle(x)
        try:
            new_gap = fast_gap(candidate, weights, model)
        except DegenerateCycleError:
            break
        trace.append(
            {"assignment": [l.bath for l in legs], "start": "consolidate", "init": gap, "final": new_gap, "evaluations": nfev}
        )
        if new_gap < gap - PRUNE_TOL * abs(gap):
            break
        zero_legs.append(Leg(b.control, b.bath, 0.0))
        cycle, gap = GeneralizedOttoCycle(tuple(candidate.legs) + tuple(zero_legs)), new_gap
        zero_legs = []
    return cycle, gap


def _merge_duplicates(legs):
    merged = []
    for leg in legs:
        for k, other in enumerate(merged):
            if other.bath == leg.bath and np.array_equal(other.control, leg.control):
                merged[k] = Leg(other.control, other.bath, other.mu + leg.mu)
                break
        else:
            merged.append(leg)
    return merged


def prune_legs(result: OptimizationResult, model: MachineModel, weights: GapWeights) -> OptimizationResult:
    """Merge identical legs and drop legs with ``mu < 1e-6``.

    A leg is only dropped if the re-evaluated GAP moves by at most ``1e-9``
    relative; otherwise it is kept.
    """
    legs = _merge_duplicates(result.cycle.legs)
    total = sum(l.mu for l in legs)
    legs = [Leg(l.control, l.bath, l.mu / total) for l in legs]
    ref = result.gap
    tol = PRUNE_TOL * max(abs(ref), np.finfo(float).tiny)
    for leg in sorted((l for l in legs if l.mu < PRUNE_MU), key=lambda l: l.mu):
        rest = [l for l in legs if l is not leg]
        s = sum(l.mu for l in rest)
        candidate = [Leg(l.control, l.bath, l.mu / s) for l in rest]
        try:
            g = fast_gap(GeneralizedOttoCycle(tuple(candidate)), weights, model)
        except DegenerateCycleError:
            continue
        if abs(g - ref) <= tol:
            legs = candidate
    cycle = GeneralizedOttoCycle(tuple(legs))
    if len(legs) == result.cycle.n_legs:
        return replace(result, pruned=False)
    gap = fast_gap(cycle, weights, model)
    heats = leg_heat_rates(cycle, model, fast_steady_state(cycle, model).p0)
    return replace(result, cycle=cycle, gap=gap, leg_heat_rates=heats, pruned=True)
