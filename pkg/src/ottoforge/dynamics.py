"""
Finite-period limit cycles of piecewise-constant protocols.

A protocol of period ``T`` visits legs ``i = 1..L``; leg ``i`` holds a constant
control in contact with one bath for a time ``mu_i T``. Controls jump
instantaneously (quenches) between legs, so populations are continuous while
energies jump. The one-period map is ``Pi = Pi_L ... Pi_1`` with
``Pi_i = expm(M_i mu_i T)`` and the limit cycle is its unique fixed point.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NoLimitCycleError
from .fast import GeneralizedOttoCycle, Leg, fast_gap, generators_connected, relaxation_rate_eta
from .model import GapWeights, MachineModel, transition_graph_components

NORM_RENORMALIZE = 1e-13
NORM_FAIL = 1e-8
EIG_COND_LIMIT = 1e6
PERIOD_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PiecewiseProtocol:
    """Legs of a cycle of finite period ``period``."""

    legs: tuple
    period: float

    def __post_init__(self):
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidInputError(f"period must be positive and finite, got {self.period!r}")
        GeneralizedOttoCycle(tuple(self.legs))  # validates the time fractions
        object.__setattr__(self, "legs", tuple(self.legs))
        object.__setattr__(self, "period", float(self.period))

    @classmethod
    def from_cycle(cls, cycle: GeneralizedOttoCycle, period: float) -> "PiecewiseProtocol":
        return cls(cycle.legs, period)

    @property
    def durations(self) -> np.ndarray:
        return np.array([leg.mu * self.period for leg in self.legs])


@dataclass(frozen=True, eq=False)
class LimitCycleSolution:
    """Periodic orbit of a piecewise protocol.

    ``boundary[i]`` are the populations at the start of leg ``i``;
    ``boundary[L]`` equals ``boundary[0]`` up to the solve residual.
    """

    protocol: PiecewiseProtocol
    boundary: np.ndarray
    leg_heat: np.ndarray
    bath_heat: np.ndarray
    quench_work: np.ndarray
    residual: float

    @property
    def period(self) -> float:
        return self.protocol.period

    @property
    def total_work(self) -> float:
        """Work done on the working fluid per period (sum of quench works)."""
        return float(self.quench_work.sum())

    def first_law_residual(self) -> float:
        """|sum of heats + sum of quench works| per period."""
        scale = max(1.0, float(np.max(np.abs(self.leg_heat))) if self.leg_heat.size else 1.0)
        return abs(float(self.leg_heat.sum() + self.quench_work.sum())) / scale

    def gap(self, weights: GapWeights) -> float:
        """Generalized average power ``sum_alpha c_alpha Q_alpha / T``."""
        return float(weights.array() @ self.bath_heat) / self.period


def matrix_exponential(m: np.ndarray, t: float) -> np.ndarray:
    """``expm(m t)`` for a Pauli generator.

    Detailed-balance generators are similar to symmetric matrices, so an
    eigendecomposition is accurate unless the eigenvectors are ill conditioned,
    in which case scaling-and-squaring is used.
    """
    a = np.asarray(m, dtype=float) * float(t)
    w, v = np.linalg.eig(a)
    if np.all(np.abs(w.imag) == 0) and np.linalg.cond(v) < EIG_COND_LIMIT:
        v = v.real
        return (v * np.exp(w.real)) @ np.linalg.inv(v)
    return scipy.linalg.expm(a)


def _normalize(p: np.ndarray) -> np.ndarray:
    drift = abs(p.sum() - 1.0)
    if drift > NORM_FAIL or np.min(p) < -NORM_FAIL:
        raise NoLimitCycleError(f"propagation lost normalization (drift {drift:.3g}, min {np.min(p):.3g})")
    p = np.clip(p, 0.0, None) if np.min(p) < 0 else p
    if drift > NORM_RENORMALIZE or np.min(p) < 0:
        p = p / p.sum()
    return p


def propagate(generator, p, duration: float) -> np.ndarray:
    """Populations after holding one generator for ``duration``.

    ``generator`` is a ``PauliGenerator`` or a full generator matrix.
    """
    m = getattr(generator, "full", generator)
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)) or duration < 0:
        raise InvalidInputError("propagate needs finite populations and a non-negative duration")
    return _normalize(matrix_exponential(m, duration) @ p)


def _leg_maps(protocol, model):
    gens = [model.generator(leg.control, leg.bath) for leg in protocol.legs]
    maps = [matrix_exponential(g.full, tau) for g, tau in zip(gens, protocol.durations)]
    return gens, maps


def limit_cycle(protocol: PiecewiseProtocol, model: MachineModel) -> LimitCycleSolution:
    """Unique periodic orbit of a piecewise-constant protocol, with per-leg energetics.

    Heat absorbed during leg ``i`` is ``e_i . (p_{i+1} - p_i)``; the quench from
    leg ``i`` to leg ``i+1`` (cyclically) costs work ``(e_{i+1} - e_i) . p_{i+1}``.

    Raises
    ------
    NoLimitCycleError
        If the period map has more than one fixed point (the union transition
        graph of the legs is disconnected).
    """
    gens, maps = _leg_maps(protocol, model)
    d = model.dim
    period_map = np.eye(d)
    for pi in maps:
        period_map = pi @ period_map
    a = period_map - np.eye(d)
    # replace the row with the smallest norm by the normalization constraint
    row = int(np.argmin(np.linalg.norm(a, axis=1)))
    a[row, :] = 1.0
    rhs = np.zeros(d)
    rhs[row] = 1.0
    # ill conditioning from stiff rates is harmless; a disconnected graph is not
    mus = [l.mu for l in protocol.legs]
    if np.linalg.cond(a) > PERIOD_COND_LIMIT and not generators_connected(mus, [g.full for g in gens]):
        comps = transition_graph_components([model.rate_matrix(l.control, l.bath) for l in protocol.legs])
        raise NoLimitCycleError(f"period map has no unique fixed point; level components: {comps}")
    p = _normalize(np.linalg.solve(a, rhs))
    residual = float(np.linalg.norm(period_map @ p - p))

    boundary = [p]
    for pi in maps:
        boundary.append(_normalize(pi @ boundary[-1]))
    boundary = np.array(boundary)
    n_legs = len(maps)
    leg_heat = np.array([gens[i].energies @ (boundary[i + 1] - boundary[i]) for i in range(n_legs)])
    quench = np.array(
        [(gens[(i + 1) % n_legs].energies - gens[i].energies) @ boundary[i + 1] for i in range(n_legs)]
    )
    bath_heat = np.zeros(model.n_baths)
    for leg, q in zip(protocol.legs, leg_heat):
        bath_heat[leg.bath] += q
    return LimitCycleSolution(protocol, boundary, leg_heat, bath_heat, quench, residual)


def time_averaged_populations(solution: LimitCycleSolution, model: MachineModel) -> np.ndarray:
    """``(1/T) int_0^T p(t) dt`` along the limit cycle.

    Each leg contributes ``int_0^tau expm(M s) p_i ds``, read off the
    exponential of the augmented matrix ``[[M, p_i], [0, 0]] * tau``.
    """
    proto = solution.protocol
    d = model.dim
    total = np.zeros(d)
    for i, (leg, tau) in enumerate(zip(proto.legs, proto.durations)):
        if tau == 0:
            continue
        aug = np.zeros((d + 1, d + 1))
        aug[:d, :d] = model.generator(leg.control, leg.bath).full
        aug[:d, d] = solution.boundary[i]
        total += scipy.linalg.expm(aug * tau)[:d, d]
    return total / proto.period


def average_gap_finite(protocol: PiecewiseProtocol, weights: GapWeights, model: MachineModel) -> float:
    """Generalized average power of the limit cycle at finite period."""
    if len(weights) != model.n_baths:
        raise InvalidInputError("one weight per bath is required")
    return limit_cycle(protocol, model).gap(weights)


def forward_integrate(protocol: PiecewiseProtocol, model: MachineModel, p_init, n_periods: int) -> np.ndarray:
    """Populations at the start of a period after ``n_periods`` full periods."""
    gens, maps = _leg_maps(protocol, model)
    p = np.asarray(p_init, dtype=float)
    for _ in range(int(n_periods)):
        for pi in maps:
            p = _normalize(pi @ p)
    return p


@dataclass(frozen=True, eq=False)
class PeriodSweep:
    """GAP versus period; the ``T -> 0`` row carries the fast-driving value."""

    periods: np.ndarray
    gaps: np.ndarray
    fast_gap: float
    eta: float

    def rows(self):
        yield 0.0, self.fast_gap
        yield from zip(self.periods.tolist(), self.gaps.tolist())

    @property
    def fast_regime_mask(self) -> np.ndarray:
        return self.eta * self.periods < 1e-2


def _gap_at(args):
    cycle, period, weights, model = args
    return average_gap_finite(PiecewiseProtocol.from_cycle(cycle, period), weights, model)


def worker_count(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("OTTOFORGE_THREADS", "1") or 1)
    return max(1, int(workers))


def sweep_period(cycle: GeneralizedOttoCycle, model: MachineModel, periods, weights: GapWeights, workers=None):
    """Finite-period GAP of ``cycle`` over a list of periods.

    Periods are independent; with ``workers > 1`` (default: the
    ``OTTOFORGE_THREADS`` environment variable) they are evaluated in worker
    processes and merged in input order.
    """
    periods = np.asarray(periods, dtype=float)
    if periods.ndim != 1 or not np.all(np.isfinite(periods)) or np.any(periods <= 0):
        raise InvalidInputError("periods must be positive and finite")
    jobs = [(cycle, t, weights, model) for t in periods]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            gaps = list(pool.map(_gap_at, jobs))
    else:
        gaps = [_gap_at(j) for j in jobs]
    return PeriodSweep(periods, np.array(gaps), fast_gap(cycle, weights, model), relaxation_rate_eta(cycle, model))


__all__ = [
    "Leg",
    "LimitCycleSolution",
    "PeriodSweep",
    "PiecewiseProtocol",
    "average_gap_finite",
    "forward_integrate",
    "limit_cycle",
    "matrix_exponential",
    "propagate",
    "sweep_period",
    "time_averaged_populations",
]
